"""Spline bases and roughness penalties for nonparametric terms.

Two term kinds are supported. ``ncs`` is the classical smoothing-spline
setup: coefficients are the function values at the distinct covariate
values, the penalty is the integrated squared second derivative of the
natural cubic interpolant, assembled from the banded Q/R matrices built
out of knot gaps. ``psp`` is the P-spline setup: a cubic B-spline basis on
equally spaced knots with a discrete difference penalty on adjacent
coefficients.

Blocks are centered against the submodel intercept before fitting: the
basis is reparameterized onto an orthonormal complement of the
"sum of fitted values" functional, which drops one column and keeps the
penalty congruent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.interpolate import BSpline, CubicSpline

from .errors import SpecificationError

TERM_KINDS = ("ncs", "psp")
COVARIATES = ("age", "period")
PSP_DEGREE = 3  # cubic B-splines throughout


@dataclass(frozen=True)
class SplineTerm:
    """Declaration of one nonparametric term.

    ``lam`` is the penalty weight; ``None`` means "select on the AIC grid".
    ``basis_dim`` and ``diff_order`` apply to psp terms only. ``knots``
    may pin the knot vector explicitly; by default ncs knots are the
    distinct covariate values and psp knots are equally spaced.
    """

    kind: str
    covariate: str
    lam: Union[float, None] = None
    basis_dim: int = 23
    diff_order: int = 2
    knots: Union[tuple, None] = None

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise SpecificationError(f"unknown term kind {self.kind!r}; expected one of {TERM_KINDS}")
        if self.covariate not in COVARIATES:
            raise SpecificationError(
                f"unknown covariate {self.covariate!r}; expected one of {COVARIATES}"
            )
        if self.lam is not None and not self.lam > 0:
            raise SpecificationError(f"smoothing parameter must be positive, got {self.lam}")
        if self.diff_order < 1:
            raise SpecificationError(f"diff_order must be >= 1, got {self.diff_order}")
        if self.kind == "psp" and self.basis_dim < self.diff_order + 1:
            raise SpecificationError(
                f"psp basis_dim {self.basis_dim} too small for diff_order "
                f"{self.diff_order}; need at least diff_order + 1"
            )
        if self.knots is not None:
            k = tuple(float(v) for v in self.knots)
            if list(k) != sorted(k):
                raise SpecificationError("explicit knots must be sorted")
            object.__setattr__(self, "knots", k)


@dataclass(frozen=True)
class BasisBlock:
    """Evaluated basis B (n x q), penalty K (q x q), and evaluation recipe.

    ``transform`` maps raw basis columns to the current (possibly
    centered) columns, so evaluation at new covariate values is
    ``raw_basis(x) @ transform``.
    """

    kind: str
    B: np.ndarray
    K: np.ndarray
    knots: np.ndarray
    x_min: float
    x_max: float
    degree: int = PSP_DEGREE
    centered: bool = False
    transform: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.transform is None:
            object.__setattr__(self, "transform", np.eye(self.B.shape[1]))

    @property
    def ncols(self) -> int:
        return self.B.shape[1]

    def evaluate(self, x) -> np.ndarray:
        """Basis rows for new covariate values, in current columns."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "ncs":
            raw = _ncs_eval_matrix(self.knots, x)
        else:
            if np.any((x < self.x_min) | (x > self.x_max)):
                warnings.warn(
                    "psp basis evaluated outside the training range "
                    f"[{self.x_min}, {self.x_max}]; boundary-polynomial "
                    "extrapolation in effect",
                    stacklevel=2,
                )
            raw = BSpline.design_matrix(
                x, self.knots, self.degree, extrapolate=True
            ).toarray()
        return raw @ self.transform


def _ncs_eval_matrix(knots: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cardinal natural-cubic-spline interpolation matrix.

    Row i gives the weights carrying function values at the knots to the
    natural interpolant's value at x[i]. Outside the knot range the
    natural spline continues linearly, so extrapolation uses the value
    and first derivative at the nearest boundary knot.
    """
    q = len(knots)
    cs = CubicSpline(knots, np.eye(q), axis=0, bc_type="natural")
    out = np.empty((len(x), q))
    inside = (x >= knots[0]) & (x <= knots[-1])
    if np.any(inside):
        out[inside] = cs(x[inside])
    ds = cs.derivative(1)
    lo = x < knots[0]
    if np.any(lo):
        out[lo] = cs(knots[0]) + np.outer(x[lo] - knots[0], ds(knots[0]))
    hi = x > knots[-1]
    if np.any(hi):
        out[hi] = cs(knots[-1]) + np.outer(x[hi] - knots[-1], ds(knots[-1]))
    return out


def ncs_build(x, knots=None) -> BasisBlock:
    """Natural-cubic-spline block with value-at-knot coefficients.

    The penalty is K = Q R^-1 Q^T over knot gaps h_j: column j of Q holds
    1/h_j, -(1/h_j + 1/h_{j+1}), 1/h_{j+1} at rows j, j+1, j+2, and R is
    tridiagonal with diagonal (h_j + h_{j+1})/3 and off-diagonal h_{j+1}/6.
    a^T K a then equals the integrated squared second derivative of the
    natural interpolant through (knots, a).
    """
    x = np.asarray(x, dtype=float)
    t = np.unique(x) if knots is None else np.asarray(knots, dtype=float)
    q = len(t)
    if q < 3:
        raise SpecificationError(
            f"ncs term needs at least 3 distinct covariate values, got {q}"
        )
    h = np.diff(t)
    if np.any(h <= 0):
        raise SpecificationError("ncs knots must be strictly increasing")

    Q = np.zeros((q, q - 2))
    R = np.zeros((q - 2, q - 2))
    for j in range(q - 2):
        Q[j, j] = 1.0 / h[j]
        Q[j + 1, j] = -(1.0 / h[j] + 1.0 / h[j + 1])
        Q[j + 2, j] = 1.0 / h[j + 1]
        R[j, j] = (h[j] + h[j + 1]) / 3.0
        if j + 1 < q - 2:
            R[j, j + 1] = R[j + 1, j] = h[j + 1] / 6.0
    K = Q @ np.linalg.solve(R, Q.T)
    K = (K + K.T) / 2.0

    B = _ncs_eval_matrix(t, x)
    return BasisBlock(kind="ncs", B=B, K=K, knots=t,
                      x_min=float(t[0]), x_max=float(t[-1]))


def psp_build(x, basis_dim: int = 23, diff_order: int = 2) -> BasisBlock:
    """P-spline block: cubic B-splines, difference penalty K = D^T D."""
    x = np.asarray(x, dtype=float)
    if basis_dim < diff_order + 1:
        raise SpecificationError(
            f"psp basis_dim {basis_dim} too small for diff_order {diff_order}"
        )
    x_min, x_max = float(np.min(x)), float(np.max(x))
    if not x_max > x_min:
        raise SpecificationError("psp term needs a non-degenerate covariate range")

    nseg = basis_dim - PSP_DEGREE
    if nseg < 1:
        raise SpecificationError(f"psp basis_dim {basis_dim} must exceed the degree {PSP_DEGREE}")
    h = (x_max - x_min) / nseg
    t = x_min + h * np.arange(-PSP_DEGREE, nseg + PSP_DEGREE + 1)

    B = BSpline.design_matrix(x, t, PSP_DEGREE, extrapolate=True).toarray()
    D = np.diff(np.eye(basis_dim), n=diff_order, axis=0)
    K = D.T @ D
    return BasisBlock(kind="psp", B=B, K=K, knots=t, x_min=x_min, x_max=x_max)


def center_block(block: BasisBlock) -> BasisBlock:
    """Reparameterize so fitted term values sum to zero over observations.

    Uses a deterministic Householder reflector to pick an orthonormal
    basis Z of the null space of c^T, c = B^T 1, then maps B -> B Z and
    K -> Z^T K Z. Idempotent: a centered block is returned unchanged.
    """
    if block.centered:
        return block
    c = block.B.sum(axis=0)
    norm = float(np.linalg.norm(c))
    if norm == 0.0:
        # Constraint already holds identically; nothing to project out.
        return BasisBlock(kind=block.kind, B=block.B, K=block.K, knots=block.knots,
                          x_min=block.x_min, x_max=block.x_max, degree=block.degree,
                          centered=True, transform=block.transform)
    v = c.copy()
    v[0] += np.copysign(norm, c[0]) if c[0] != 0 else norm
    H = np.eye(len(c)) - 2.0 * np.outer(v, v) / float(v @ v)
    Z = H[:, 1:]
    Bc = block.B @ Z
    Kc = Z.T @ block.K @ Z
    Kc = (Kc + Kc.T) / 2.0
    return BasisBlock(kind=block.kind, B=Bc, K=Kc, knots=block.knots,
                      x_min=block.x_min, x_max=block.x_max, degree=block.degree,
                      centered=True, transform=block.transform @ Z)


def build_term_block(term: SplineTerm, x, center: bool = True) -> BasisBlock:
    """Build (and by default center) the block declared by ``term``."""
    if term.kind == "ncs":
        block = ncs_build(x, knots=term.knots)
    else:
        block = psp_build(x, basis_dim=term.basis_dim, diff_order=term.diff_order)
    return center_block(block) if center else block


def term_label(submodel: str, term: SplineTerm) -> str:
    return f"{submodel}:{term.kind}({term.covariate})"
