"""Container for the response, linear design and nonparametric covariates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Observations of ``Y = X beta + g(Z) + eps``.

    ``zc`` holds continuous nonparametric covariates (n x qc) and ``zd``
    categorical ones as integer level codes (n x qd). ``zd_levels[j]`` maps
    the codes of column ``j`` back to their original labels.
    """

    y: np.ndarray
    x: np.ndarray
    x_names: tuple[str, ...]
    zc: np.ndarray
    zc_names: tuple[str, ...] = ()
    zd: np.ndarray | None = None
    zd_names: tuple[str, ...] = ()
    zd_levels: tuple[tuple[str, ...], ...] = field(default=())

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        n = y.size
        x = np.asarray(self.x, dtype=np.float64).reshape(n, -1)
        zc = np.asarray(self.zc, dtype=np.float64).reshape(n, -1)
        zd = np.zeros((n, 0), dtype=np.int64) if self.zd is None else np.asarray(self.zd)
        zd = zd.reshape(n, -1).astype(np.int64)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "zc", zc)
        object.__setattr__(self, "zd", zd)
        object.__setattr__(self, "x_names", tuple(self.x_names))
        object.__setattr__(self, "zc_names", tuple(self.zc_names))
        object.__setattr__(self, "zd_names", tuple(self.zd_names))
        levels = tuple(tuple(str(v) for v in lv) for lv in self.zd_levels)
        if not levels and zd.shape[1]:
            levels = tuple(tuple(str(v) for v in np.unique(zd[:, j])) for j in range(zd.shape[1]))
        object.__setattr__(self, "zd_levels", levels)
        for arr in (y, x, zc, zd):
            arr.setflags(write=False)

        if len(self.x_names) != x.shape[1]:
            raise DataError("x_names must name every column of x")
        if len(self.zc_names) != zc.shape[1]:
            raise DataError("zc_names must name every column of zc")
        if len(self.zd_names) != zd.shape[1]:
            raise DataError("zd_names must name every column of zd")
        names = self.x_names + self.zc_names + self.zd_names
        if len(set(names)) != len(names):
            raise DataError(f"column names must be unique, got {names}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DataError("y and x must be finite")
        if n <= x.shape[1]:
            raise DataError(f"need n > p, got n={n}, p={x.shape[1]}")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def continuous(self, name: str) -> np.ndarray:
        try:
            return self.zc[:, self.zc_names.index(name)]
        except ValueError:
            raise DataError(f"unknown continuous column {name!r}") from None

    def categorical(self, name: str) -> np.ndarray:
        try:
            return self.zd[:, self.zd_names.index(name)]
        except ValueError:
            raise DataError(f"unknown categorical column {name!r}") from None

    def with_y(self, y) -> "Dataset":
        """Same covariates, new response."""
        return Dataset(y, self.x, self.x_names, self.zc, self.zc_names, self.zd,
                       self.zd_names, self.zd_levels)

    def with_zd(self, zd) -> "Dataset":
        return Dataset(self.y, self.x, self.x_names, self.zc, self.zc_names, zd,
                       self.zd_names, self.zd_levels)

    def take(self, idx) -> "Dataset":
        """Row subset (or reordering)."""
        idx = np.asarray(idx)
        return Dataset(self.y[idx], self.x[idx], self.x_names, self.zc[idx], self.zc_names,
                       self.zd[idx], self.zd_names, self.zd_levels)
