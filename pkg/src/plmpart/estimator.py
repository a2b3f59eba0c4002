"""Profile least squares with cell means as incidental parameters.

Centering ``Y`` and ``X`` within cells removes the cell means; ``beta`` is the
least squares solution of the centered problem, which coincides with the
X-coefficients of a regression on ``[X, cell dummies]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import PlmError, SingularGramError
from .partition import PartitionPlan

# smallest / largest singular value of the centered design
SINGULAR_RATIO = 1e-10


def center_within_cells(m, plan: PartitionPlan) -> np.ndarray:
    """Subtract per-cell column means. Accepts a vector or an ``n x q`` matrix."""
    m = np.asarray(m, dtype=np.float64)
    vec = m.ndim == 1
    m2 = m.reshape(plan.n, -1)
    s = m2[plan.order]
    means = np.add.reduceat(s, plan.starts, axis=0) / plan.sizes[:, None]
    out = np.empty_like(m2)
    out[plan.order] = s - np.repeat(means, plan.sizes, axis=0)
    return out[:, 0] if vec else out


def cell_means(v, plan: PartitionPlan) -> np.ndarray:
    """Mean of ``v`` in each cell, ordered like ``plan.cells``."""
    v = np.asarray(v, dtype=np.float64)
    return np.add.reduceat(v[plan.order], plan.starts, axis=0) / plan.sizes


@dataclass(frozen=True, eq=False)
class PlmFit:
    """Result of a profile least squares fit.

    Arrays are read-only so a fit can be shared freely.
    """

    beta: np.ndarray
    alpha: np.ndarray
    sigma2: float
    cov_beta: np.ndarray
    residuals: np.ndarray
    gram: np.ndarray
    plan: PartitionPlan
    rss: float
    x_names: tuple[str, ...] = ()

    def __post_init__(self):
        for a in (self.beta, self.alpha, self.cov_beta, self.residuals, self.gram):
            a.setflags(write=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov_beta), 0.0, None))


class _CenteredDesign:
    """SVD of a centered design, shared by fits and bootstrap projections."""

    def __init__(self, xc: np.ndarray):
        self.xc = xc
        if xc.shape[1] == 0:
            self.u = np.zeros((xc.shape[0], 0))
            self.s = np.zeros(0)
            self.vt = np.zeros((0, 0))
            return
        u, s, vt = np.linalg.svd(xc, full_matrices=False)
        if s[0] == 0.0 or s[-1] < SINGULAR_RATIO * s[0]:
            raise SingularGramError(s[-1])
        self.u, self.s, self.vt = u, s, vt

    def solve(self, yc: np.ndarray) -> np.ndarray:
        coef = self.u.T @ yc
        coef /= self.s[:, None] if coef.ndim == 2 else self.s
        return self.vt.T @ coef

    def inverse_gram(self) -> np.ndarray:
        g = (self.vt.T / self.s**2) @ self.vt
        return 0.5 * (g + g.T)

    def residual(self, yc: np.ndarray) -> np.ndarray:
        """``yc`` minus its projection on the column space; works column-wise."""
        return yc - self.u @ (self.u.T @ yc)


def sigma2_hat(residuals, plan: PartitionPlan) -> float:
    """``RSS / (n - J)`` counting only cells with at least two members.

    With equal cells of size I this is ``I/(I-1) * RSS / n``.
    """
    r = np.asarray(residuals, dtype=np.float64)
    dof = plan.n_effective - plan.j_effective
    if dof <= 0:
        raise PlmError(f"no residual degrees of freedom (n={plan.n_effective}, J={plan.j_effective})")
    return float(r @ r) / dof


def _assemble(dataset, plan, beta, cov_unscaled, gram) -> PlmFit:
    partial = dataset.y - dataset.x @ beta
    alpha = cell_means(partial, plan)
    resid = partial - alpha[plan.cell_of]
    rss = float(resid @ resid)
    s2 = sigma2_hat(resid, plan)
    return PlmFit(
        beta=beta,
        alpha=alpha,
        sigma2=s2,
        cov_beta=s2 * cov_unscaled,
        residuals=resid,
        gram=gram,
        plan=plan,
        rss=rss,
        x_names=dataset.x_names,
    )


def fit(dataset: Dataset, plan: PartitionPlan) -> PlmFit:
    """Profile least squares estimate of ``beta`` with cell means as nuisance.

    Raises
    ------
    SingularGramError
        If the within-cell centered design is rank deficient, for instance
        when a column of X is constant inside every cell.
    """
    if plan.n != dataset.n:
        raise PlmError(f"plan covers {plan.n} rows, dataset has {dataset.n}")
    xc = center_within_cells(dataset.x, plan)
    yc = center_within_cells(dataset.y, plan)
    design = _CenteredDesign(xc)
    beta = design.solve(yc)
    return _assemble(dataset, plan, beta, design.inverse_gram(), xc.T @ xc)


def covariance(fit_: PlmFit) -> np.ndarray:
    """Sandwich covariance ``sigma2 * Gram^{-1}`` recomputed from a fit."""
    u, s, vt = np.linalg.svd(fit_.gram)
    if s[0] == 0.0 or s[-1] < SINGULAR_RATIO**2 * s[0]:
        raise SingularGramError(np.sqrt(s[-1]))
    inv = (vt.T / s) @ u.T
    return fit_.sigma2 * 0.5 * (inv + inv.T)


def residualize(dataset: Dataset, fit_: PlmFit) -> np.ndarray:
    """Partial residuals ``Y - X beta``; cell means are left in."""
    return dataset.y - dataset.x @ fit_.beta
