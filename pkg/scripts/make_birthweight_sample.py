"""Regenerate the bundled synthetic birth-weight sample.

The columns and coding follow the well-known low-birth-weight study layout;
the values are simulated from a partially linear model whose age effect
declines with age among smokers only. Run from the repository root::

    python3 scripts/make_birthweight_sample.py
"""

from pathlib import Path

import numpy as np

from plmpart import io

N = 189
SEED = 20240615
OUT = Path(__file__).resolve().parents[1] / "src" / "plmpart" / "data" / "birthweight_synthetic.csv"


def generate(n=N, seed=SEED):
    rng = np.random.default_rng(seed)
    age = rng.integers(14, 37, n)
    wt = np.round(rng.normal(130.0, 30.0, n).clip(80.0, 250.0))
    race = rng.choice(3, n, p=[0.51, 0.14, 0.35])  # white, black, other
    black, other = (race == 1).astype(int), (race == 2).astype(int)
    smoke = (rng.random(n) < 0.39).astype(int)
    preterm = (rng.random(n) < 0.16).astype(int)
    hyper = (rng.random(n) < 0.07).astype(int)
    urin = (rng.random(n) < 0.15).astype(int)
    phys = rng.choice(5, n, p=[0.53, 0.25, 0.16, 0.04, 0.02])
    g = np.where(smoke == 1, -30.0 * (age - 20.0), 0.0)
    bwt = (2480.0 + 5.6 * wt - 295.0 * black - 204.0 * other - 220.0 * preterm - 650.0 * hyper
           - 510.0 * urin - 15.0 * phys + g + rng.normal(0.0, 600.0, n))
    bwt = np.round(bwt.clip(700.0, 5000.0))
    header = ["MOTH_AGE", "MOTH_WT", "Black", "Other", "SMOKE", "PRETERM", "HYPER", "URIN_IRR",
              "PHYS_VIS", "BIRTH_WT"]
    cols = [age, wt.astype(int), black, other, smoke, preterm, hyper, urin, phys, bwt.astype(int)]
    return header, [list(map(int, r)) for r in zip(*cols)]


if __name__ == "__main__":
    io.write_csv(OUT, *generate())
    print(f"wrote {OUT}")
