"""Ordering of observations along the support of Z and cell assignment.

Observations are sorted by an ordering coordinate (the continuous covariate,
a chosen component, or the first principal component) inside each category
group, and contiguous runs of the sorted order become the cells whose means
play the role of incidental parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import PartitionError

SINGLE = "single"
CATEGORICAL = "categorical"
COMPONENT = "component"
PCA = "pca"
DISTINCT = "distinct"
STRATEGIES = (SINGLE, CATEGORICAL, COMPONENT, PCA, DISTINCT)

SUGGESTED_CELL_SIZE = 5


@dataclass(frozen=True)
class ZSpec:
    """Which Z columns enter g and how they are ordered.

    ``strategy`` is one of ``"single"`` (one continuous column),
    ``"categorical"`` (split by category, order by the one continuous
    column), ``"component"`` (order by ``order_col``), ``"pca"`` (order by the
    first principal component of the standardized continuous columns) or
    ``"distinct"`` (one cell per distinct (group, value) pair).
    """

    continuous: tuple[str, ...] = ()
    categorical: tuple[str, ...] = ()
    strategy: str = SINGLE
    order_col: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "continuous", tuple(self.continuous))
        object.__setattr__(self, "categorical", tuple(self.categorical))
        nc, nd = len(self.continuous), len(self.categorical)
        if nc + nd == 0:
            raise PartitionError("ZSpec must name at least one column")
        s = self.strategy
        if s not in STRATEGIES:
            raise PartitionError(f"unknown strategy {s!r}; choose from {STRATEGIES}")
        if s == SINGLE and (nc != 1 or nd):
            raise PartitionError("'single' needs exactly one continuous and no categorical column")
        if s == CATEGORICAL and (nc != 1 or nd < 1):
            raise PartitionError(
                "'categorical' needs at least one categorical and exactly one continuous column"
            )
        if s == COMPONENT and self.order_col not in self.continuous:
            raise PartitionError(f"order column {self.order_col!r} is not a continuous column")
        if s == PCA and nc < 2:
            raise PartitionError("'pca' needs at least two continuous columns")
        if s == DISTINCT and nc != 1:
            raise PartitionError("'distinct' needs exactly one continuous column")


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    """Disjoint cells covering all observations.

    ``cells[j]`` lists the original row indices of cell ``j`` in ordering
    order; ``group_of_cell[j]`` is the category label of that cell, or None
    without categorical columns.
    """

    cell_of: np.ndarray
    cells: tuple[np.ndarray, ...]
    target_cell_size: int | None
    group_of_cell: tuple | None = None
    order: np.ndarray = field(init=False, repr=False)
    starts: np.ndarray = field(init=False, repr=False)
    sizes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cells = tuple(np.asarray(c, dtype=np.intp) for c in self.cells)
        sizes = np.array([c.size for c in cells], dtype=np.intp)
        if sizes.size == 0 or np.any(sizes == 0):
            raise PartitionError("every cell must be non-empty")
        order = np.concatenate(cells)
        starts = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.intp)
        for c in cells:
            c.setflags(write=False)
        for name, val in (("cells", cells), ("order", order), ("starts", starts), ("sizes", sizes)):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)
        cell_of = np.asarray(self.cell_of, dtype=np.intp)
        cell_of.setflags(write=False)
        object.__setattr__(self, "cell_of", cell_of)

    @property
    def n(self) -> int:
        return self.cell_of.size

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_effective(self) -> int:
        """Observations in cells of size >= 2 (singletons carry no information on beta)."""
        return int(self.sizes[self.sizes >= 2].sum())

    @property
    def j_effective(self) -> int:
        return int(np.count_nonzero(self.sizes >= 2))

    @property
    def effective_cell_size(self) -> float:
        """n/J over non-singleton cells; equals I when cells divide n evenly."""
        return self.n_effective / self.j_effective


def _from_cells(cells, n, target, groups=None) -> PartitionPlan:
    cell_of = np.full(n, -1, dtype=np.intp)
    for j, c in enumerate(cells):
        cell_of[c] = j
    if np.any(cell_of < 0):
        raise PartitionError("cells do not cover every observation")
    return PartitionPlan(cell_of, tuple(cells), target, groups)


def group_labels(dataset: Dataset, zspec: ZSpec) -> np.ndarray:
    """Integer group id per observation from the combined categorical columns."""
    if not zspec.categorical:
        return np.zeros(dataset.n, dtype=np.intp)
    cols = np.column_stack([dataset.categorical(c) for c in zspec.categorical])
    _, inv = np.unique(cols, axis=0, return_inverse=True)
    return inv.reshape(-1).astype(np.intp)


def ordering_coordinate(dataset: Dataset, zspec: ZSpec) -> np.ndarray:
    """The scalar each observation is sorted by inside its group."""
    cols = {c: dataset.continuous(c) for c in zspec.continuous}
    for c, v in cols.items():
        if not np.all(np.isfinite(v)):
            raise PartitionError(f"continuous column {c!r} has non-finite values")
    for c in zspec.categorical:
        dataset.categorical(c)

    if zspec.strategy == COMPONENT:
        return cols[zspec.order_col]
    if zspec.strategy != PCA:
        return cols[zspec.continuous[0]]

    z = np.column_stack(list(cols.values()))
    sd = z.std(axis=0)
    if np.any(sd == 0):
        raise PartitionError("first principal component undefined: a Z column has zero variance")
    zs = (z - z.mean(axis=0)) / sd
    _, s, vt = np.linalg.svd(zs, full_matrices=False)
    if s[0] <= 0:
        raise PartitionError("first principal component undefined: degenerate Z")
    load = vt[0]
    # sign convention: largest-magnitude loading positive
    if load[np.argmax(np.abs(load))] < 0:
        load = -load
    return zs @ load


def order_observations(dataset: Dataset, zspec: ZSpec) -> np.ndarray:
    """Permutation sorting by (group, ordering coordinate, original index)."""
    coord = ordering_coordinate(dataset, zspec)
    groups = group_labels(dataset, zspec)
    return np.lexsort((np.arange(dataset.n), coord, groups)).astype(np.intp)


def _run_lengths(sorted_keys: np.ndarray) -> list[int]:
    if sorted_keys.size == 0:
        return []
    change = np.flatnonzero(sorted_keys[1:] != sorted_keys[:-1]) + 1
    edges = np.concatenate(([0], change, [sorted_keys.size]))
    return np.diff(edges).tolist()


def assign_cells(permutation, group_sizes, cell_size: int, group_of_group=None) -> PartitionPlan:
    """Cut each group's run of ``permutation`` into contiguous cells.

    A group of ``m`` observations gets ``m // cell_size`` cells; the
    remainder enlarges the last cells of the group by one each. If the
    remainder exceeds the number of cells (only possible when
    ``m < cell_size * (cell_size - 1)``) the group is split as evenly as
    possible instead, so every cell still has at least ``cell_size`` members.
    """
    perm = np.asarray(permutation, dtype=np.intp)
    group_sizes = [int(g) for g in group_sizes]
    if int(cell_size) != cell_size or cell_size < 2:
        raise PartitionError(f"cell size must be an integer >= 2, got {cell_size!r}")
    cell_size = int(cell_size)
    if sum(group_sizes) != perm.size:
        raise PartitionError("group sizes do not add up to the number of observations")
    if group_of_group is None:
        group_of_group = [None] * len(group_sizes)

    cells, labels = [], []
    pos = 0
    for k, (m, lab) in enumerate(zip(group_sizes, group_of_group)):
        name = f"group {lab!r}" if lab is not None else f"group #{k}"
        if m < cell_size:
            raise PartitionError(f"{name} has {m} observations, fewer than cell size {cell_size}")
        if m < 2 * cell_size:
            warnings.warn(
                f"{name} has only {m} observations (< 2 x cell size); one cell covers it",
                stacklevel=2,
            )
        n_cells = m // cell_size
        base, extra = divmod(m, n_cells)
        sizes = [base] * (n_cells - extra) + [base + 1] * extra
        for s in sizes:
            cells.append(perm[pos:pos + s])
            labels.append(lab)
            pos += s
    has_groups = any(lab is not None for lab in labels)
    return _from_cells(cells, perm.size, cell_size, tuple(labels) if has_groups else None)


def distinct_value_cells(permutation, groups, coord, labelled: bool = True) -> PartitionPlan:
    """One cell per distinct (group, coordinate value); singletons allowed."""
    perm = np.asarray(permutation, dtype=np.intp)
    g = np.asarray(groups)[perm]
    c = np.asarray(coord)[perm]
    change = np.flatnonzero((g[1:] != g[:-1]) | (c[1:] != c[:-1])) + 1
    edges = np.concatenate(([0], change, [perm.size]))
    cells = [perm[a:b] for a, b in zip(edges[:-1], edges[1:])]
    labels = tuple(int(g[a]) for a in edges[:-1]) if labelled else None
    return _from_cells(cells, perm.size, None, labels)


def make_plan(dataset: Dataset, zspec: ZSpec, cell_size: int | None = None) -> PartitionPlan:
    """Order ``dataset`` per ``zspec`` and build its partition."""
    perm = order_observations(dataset, zspec)
    groups = group_labels(dataset, zspec)
    if zspec.strategy == DISTINCT:
        coord = ordering_coordinate(dataset, zspec)
        return distinct_value_cells(perm, groups, coord, labelled=bool(zspec.categorical))
    if cell_size is None:
        raise PartitionError(f"cell size required (suggested: {SUGGESTED_CELL_SIZE})")
    sizes = _run_lengths(groups[perm])
    labels = None
    if zspec.categorical:
        labels = [int(groups[perm[s]]) for s in np.cumsum([0] + sizes[:-1])]
    return assign_cells(perm, sizes, cell_size, labels)
