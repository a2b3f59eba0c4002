"""Simulation study presets and their config-file front end.

A config file is INI-style: an optional ``[general]`` section (``seed``,
``jobs``) followed by one section per study. The section name selects a
preset from :data:`PRESETS`; a section may also carry ``study = <preset>``
to run a preset under another name. Every other key overrides a preset
default. List values are comma separated::

    [general]
    seed = 2024

    [table1]
    replicates = 100
    n = 100, 200

"""

from __future__ import annotations

import configparser
import re
import time
from pathlib import Path

import numpy as np
from scipy import stats

from . import io
from .errors import PlmError
from .inference import SmootherConfig
from .simulation import (
    EX3_DELTA,
    DgpSpec,
    curve_null_study,
    null_distribution_study,
    power_curve,
    rate_study,
    run_mc,
)

PRESETS = {
    "table1": dict(kind="table", example="ex1", n=[100, 200, 400], cell_size=[2, 5, 10, 20],
                   replicates=400),
    "table2": dict(kind="table", example="ex2", n=[100, 200, 400], cell_size=[2, 5, 10, 20],
                   replicates=400),
    "table3": dict(kind="table", example="ex3", n=[100, 200, 400], cell_size=[2, 5, 10, 20],
                   replicates=400, delta=EX3_DELTA),
    "table4": dict(kind="sd", example="ex3", n=[100, 200, 400], cell_size=[2, 5, 10, 20],
                   replicates=400, delta=EX3_DELTA),
    "figure1-left": dict(kind="rate", example="ex1", n=[100, 200, 400], cell_size=[2, 5, 10, 20],
                         replicates=400),
    "figure1-right": dict(kind="t1-null", example="ex1", n=[100, 200, 400], cell_size=[2],
                          replicates=1000),
    "figure2": dict(kind="t1-power", example="ex1", n=[100, 200], cell_size=[2, 5, 10],
                    delta=[0.0, 0.25, 0.5, 0.75, 1.0], replicates=400, bootstrap=1000, level=0.05),
    "figure3-left": dict(kind="t1-null", example="ex2", n=[100, 200, 400], cell_size=[2],
                         replicates=1000),
    "figure3-right": dict(kind="t1-power", example="ex2", n=[200], cell_size=[2, 5, 10],
                          delta=[0.0, 0.25, 0.5, 0.75, 1.0], replicates=400, bootstrap=1000,
                          level=0.05),
    "figure4-middle": dict(kind="t2-null", example="ex3", n=[200], cell_size=[5],
                           delta=[0.0, 0.083, 0.167, 0.25], replicates=400, bootstrap=1000),
    "figure4-right": dict(kind="t2-power", example="ex3", n=[100, 200, 400], cell_size=[5],
                          delta=[0.0, 0.05, 0.1, 0.15, 0.2, 0.25], replicates=400, bootstrap=1000,
                          level=0.05),
}

_INT_KEYS = {"replicates", "bootstrap", "grid"}
_INT_LIST_KEYS = {"n", "cell_size"}
_FLOAT_KEYS = {"rho", "level", "undersmooth"}
_STR_KEYS = {"kernel", "sided", "study", "example"}
_LIST_OR_FLOAT = {"delta"}
KNOWN_KEYS = _INT_KEYS | _INT_LIST_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_OR_FLOAT


class ConfigError(PlmError):
    pass


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    cur = None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return i
            continue
        if cur == section and key is not None and re.match(rf"^{re.escape(key)}\s*[=:]", s):
            return i
    return None


def _fail(path, text, section, key, msg):
    line = _line_of(text, section, key)
    where = f"{path}:{line}" if line else str(path)
    raise ConfigError(f"{where}: [{section}] {msg}")


def _parse_value(key, raw):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if key in _INT_KEYS:
        return int(raw)
    if key in _INT_LIST_KEYS:
        return [int(p) for p in parts]
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _LIST_OR_FLOAT:
        return [float(p) for p in parts]
    return raw.strip()


def parse_config(path):
    """Return ``(general, studies)``; ``studies`` is a list of ``(name, settings)``."""
    path = Path(path)
    text = path.read_text()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None

    general = {"seed": 0, "jobs": 1}
    studies = []
    for section in cp.sections():
        items = dict(cp.items(section))
        if section == "general":
            for k, v in items.items():
                if k not in general:
                    _fail(path, text, section, k, f"unknown key {k!r}; known: {sorted(general)}")
                try:
                    general[k] = int(v)
                except ValueError:
                    _fail(path, text, section, k, f"{k} must be an integer, got {v!r}")
            continue
        preset = items.get("study", section)
        if preset not in PRESETS:
            _fail(path, text, section, "study" if "study" in items else None,
                  f"unknown study {preset!r}; available studies: {', '.join(PRESETS)}")
        settings = dict(PRESETS[preset])
        for k, v in items.items():
            if k not in KNOWN_KEYS:
                _fail(path, text, section, k, f"unknown key {k!r}; known: {sorted(KNOWN_KEYS)}")
            try:
                settings[k] = _parse_value(k, v)
            except ValueError:
                _fail(path, text, section, k, f"bad value for {k}: {v!r}")
        settings.pop("study", None)
        studies.append((section, settings))
    if not studies:
        raise ConfigError(f"{path}: no studies; available studies: {', '.join(PRESETS)}")
    return general, studies


def _smoother(settings) -> SmootherConfig:
    return SmootherConfig(kernel=settings.get("kernel", "epanechnikov"),
                          undersmooth=settings.get("undersmooth", 0.8),
                          grid_size=settings.get("grid", 100))


def _deltas(settings):
    d = settings.get("delta", [0.0])
    return d if isinstance(d, list) else [d]


def run_study(name, settings, seed, jobs, out_dir: Path) -> dict:
    """Run one study, write its CSV and return its summary entry."""
    kind = settings["kind"]
    ex = settings["example"]
    rho = settings.get("rho", 0.5)
    reps = settings["replicates"]
    ns, cells = settings["n"], settings["cell_size"]
    csv_path = out_dir / f"{name}.csv"
    summary = {"name": name, "kind": kind, "example": ex, "replicates": reps, "csv": csv_path.name}
    t0 = time.perf_counter()

    if kind in ("table", "sd"):
        delta = _deltas(settings)[0]
        rows = []
        for n in ns:
            for i in cells:
                r = run_mc(DgpSpec(ex, n, rho, delta, seed), i, reps, jobs)
                if kind == "table":
                    rows.append([n, i, r.ase_mean, r.ase_sd, r.rsd, r.mse_mean,
                                 r.per_coef_mean[0], r.per_coef_sd[0],
                                 r.per_coef_mean[1], r.per_coef_sd[1]])
                else:
                    for c in (0, 1):
                        rows.append([n, i, f"beta{c + 1}", r.per_coef_sd[c], r.per_coef_sdm[c],
                                     r.per_coef_sdmad[c]])
        header = (["n", "I", "ase_mean", "ase_sd", "ase_rsd", "mse_mean", "beta1_mean", "beta1_sd",
                   "beta2_mean", "beta2_sd"] if kind == "table"
                  else ["n", "I", "coef", "sd", "sd_m", "sd_mad"])
        io.write_csv(csv_path, header, rows)

    elif kind == "rate":
        rs = rate_study(ex, ns, cells, reps, seed, rho, jobs)
        rows = [[n, i, rs.mse[a, b]] for a, n in enumerate(ns) for b, i in enumerate(cells)]
        io.write_csv(csv_path, ["n", "I", "mse"], rows)
        summary.update(slope=rs.slope, intercept=rs.intercept)

    elif kind == "t1-null":
        rows, ks = [], {}
        for n in ns:
            for i in cells:
                st = null_distribution_study(DgpSpec(ex, n, rho, 0.0, seed), i, reps, jobs)
                chi = stats.chi2(st.df).pdf(st.density_grid)
                rows += [[n, i, g, d, c] for g, d, c in zip(st.density_grid, st.density, chi)]
                ks[f"n={n},I={i}"] = {"ks_distance": st.ks_distance, "ks_pvalue": st.ks_pvalue,
                                      "rejection_5pct": st.rejection_5pct}
        io.write_csv(csv_path, ["n", "I", "x", "density", "chi2_density"], rows)
        summary["ks"] = ks

    elif kind in ("t1-power", "t2-power"):
        test = "t1" if kind == "t1-power" else "t2"
        rows = []
        for n in ns:
            for i in cells:
                pc = power_curve(test, DgpSpec(ex, n, rho, 0.0, seed), _deltas(settings), i, reps,
                                 settings["bootstrap"], settings.get("level", 0.05),
                                 _smoother(settings), settings.get("sided", "two"), jobs)
                asym = pc.rejection_asymptotic if pc.rejection_asymptotic is not None \
                    else np.full(pc.deltas.size, np.nan)
                rows += [[n, i, d, a, b] for d, a, b in zip(pc.deltas, asym, pc.rejection_bootstrap)]
        io.write_csv(csv_path, ["n", "I", "delta", "power_asymptotic", "power_bootstrap"], rows)

    elif kind == "t2-null":
        rows = []
        for n in ns:
            for i in cells:
                for k, d in enumerate(_deltas(settings)):
                    st = curve_null_study(DgpSpec(ex, n, rho, d, seed), i, reps,
                                          settings["bootstrap"], _smoother(settings),
                                          settings.get("sided", "two"), jobs)
                    if k == 0:
                        rows += [[n, i, "empirical", 0.0, v] for v in st.empirical]
                    rows += [[n, i, "bootstrap", d, v] for v in st.bootstrap]
        io.write_csv(csv_path, ["n", "I", "source", "delta", "statistic"], rows)
    else:  # pragma: no cover - presets are fixed
        raise ConfigError(f"unknown study kind {kind!r}")

    summary["seconds"] = time.perf_counter() - t0
    return summary


def run_config(path, out_dir, jobs: int | None = None, seed: int | None = None) -> dict:
    general, studies = parse_config(path)
    seed = general["seed"] if seed is None else seed
    jobs = general["jobs"] if jobs is None else jobs
    out_dir = Path(out_dir)
    t0 = time.perf_counter()
    entries = [run_study(name, s, seed, jobs, out_dir) for name, s in studies]
    return {"kind": "simulate", "config": str(path), "seed": seed, "jobs": jobs,
            "studies": entries, "seconds": time.perf_counter() - t0}
