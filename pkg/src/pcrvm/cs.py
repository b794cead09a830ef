"""l1-minimising PCE fit by Douglas-Rachford splitting (basis pursuit).

Solves ``min ||w||_1`` subject to ``Psi w = y`` (``epsilon = 0``) or
``||Psi w - y|| <= epsilon``.  Each iteration applies the soft threshold,
then projects the reflected point onto the constraint set::

    x = soft(z, gamma)
    v = project(2 x - z)
    z = z + v - x

Both proximal maps are exact; the projection uses one cached thin SVD of
the design.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .basis import BasisSpec, DesignMatrix, evaluate_design
from .metrics import CS_SIGNIFICANCE, SparsePce

__all__ = [
    "CsConfig",
    "CsResult",
    "ConstraintSet",
    "soft_threshold",
    "project_residual_set",
    "douglas_rachford",
    "fit_cs",
    "fit_cs_design",
]

log = logging.getLogger(__name__)

# singular values below this fraction of the largest count as zero
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class CsConfig:
    gamma: float = 1.0
    max_iters: int = 20_000
    tol: float = 1e-6
    epsilon: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def soft_threshold(x, t):
    """Componentwise sign(x) * max(|x| - t, 0)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be >= 0")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    return float(out) if out.ndim == 0 else out


class ConstraintSet:
    """Euclidean projection onto {w : ||A w - y|| <= epsilon}.

    With ``epsilon = 0`` this is the affine set A w = y, which needs A to
    have full row rank.
    """

    def __init__(self, A, y, epsilon: float = 0.0):
        A = np.asarray(A, dtype=float)
        y = np.asarray(y, dtype=float)
        if A.ndim != 2 or y.shape != (A.shape[0],):
            raise ValueError("A must be N x n and y of length N")
        self.epsilon = float(epsilon)
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        rank = int(np.sum(s > _RANK_TOL * (s[0] if s.size else 0.0)))
        self.U, self.s, self.Vt = U[:, :rank], s[:rank], Vt[:rank]
        self.b = self.U.T @ y
        # part of y no w can reach
        self.unreachable = float(np.linalg.norm(y - self.U @ self.b))
        if self.epsilon == 0.0:
            if rank < A.shape[0]:
                raise np.linalg.LinAlgError(
                    f"design has rank {rank} < {A.shape[0]} rows; equality constraint needs full row rank"
                )
        elif self.unreachable > self.epsilon:
            raise ValueError(f"no coefficients reach residual {self.epsilon}; best is {self.unreachable:.3g}")

    def residual(self, w) -> float:
        c = self.Vt @ w
        return math.hypot(float(np.linalg.norm(self.s * c - self.b)), self.unreachable)

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        c = self.Vt @ w
        r = self.s * c - self.b
        if self.epsilon == 0.0:
            return w - self.Vt.T @ (r / self.s)
        if math.hypot(float(np.linalg.norm(r)), self.unreachable) <= self.epsilon:
            return w.copy()
        # w' = (I + mu A^T A)^-1 (w + mu A^T y); pick mu so the residual sits on the sphere
        target = self.epsilon**2 - self.unreachable**2
        s2 = self.s**2

        def excess(mu):
            return float(np.sum((r / (1.0 + mu * s2)) ** 2)) - target

        hi = 1.0
        while excess(hi) > 0:
            hi *= 10.0
        mu = brentq(excess, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
        return w - self.Vt.T @ (mu * self.s * r / (1.0 + mu * s2))


def project_residual_set(w, design, y, epsilon: float = 0.0):
    """Projection of ``w`` onto {w : ||Psi w - y|| <= epsilon}.

    ``design`` is a :class:`DesignMatrix` or a plain matrix.  Build a
    :class:`ConstraintSet` once when projecting repeatedly.
    """
    A = design.values if isinstance(design, DesignMatrix) else design
    return ConstraintSet(A, y, epsilon)(w)


@dataclass
class CsResult:
    w: np.ndarray
    converged: bool
    iterations: int
    residual: float
    feasibility: float


def douglas_rachford(A, y, config: CsConfig | None = None, z0=None) -> CsResult:
    """Basis pursuit on a plain matrix ``A``.

    Stops when ||v - x|| <= tol * max(1, ||x||).  On non-convergence the
    iterate with the smallest fixed-point residual is returned.
    """
    config = config or CsConfig()
    proj = ConstraintSet(A, y, config.epsilon)
    z = np.zeros(np.shape(A)[1]) if z0 is None else np.array(z0, dtype=float)
    best_w, best_res = None, math.inf
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        x = soft_threshold(z, config.gamma)
        v = proj(2.0 * x - z)
        step = v - x
        z += step
        res = float(np.linalg.norm(step)) / max(1.0, float(np.linalg.norm(x)))
        if res < best_res:
            best_w, best_res = v, res
        if res <= config.tol:
            converged = True
            break
    if not converged:
        log.warning("Douglas-Rachford stopped after %d iterations, residual %.3g", it, best_res)
    w = v if converged else best_w
    return CsResult(w=w, converged=converged, iterations=it, residual=best_res if not converged else res,
                    feasibility=proj.residual(w))


def fit_cs_design(design: DesignMatrix, y, config: CsConfig | None = None) -> SparsePce:
    config = config or CsConfig()
    y = np.asarray(y, dtype=float)
    if y.shape != (design.values.shape[0],):
        raise ValueError("y must match the design rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    res = douglas_rachford(design.values, y, config)
    # entries below the solver tolerance are numerical noise
    support = np.abs(res.w) > config.tol * max(1.0, float(np.abs(res.w).max(initial=0.0)))
    return SparsePce(
        spec=design.spec,
        coeff_mean=res.w,
        coeff_var=np.zeros_like(res.w),
        success_prob=support.astype(float),
        source="cs",
        metadata={
            "n_data": int(len(y)),
            "converged": res.converged,
            "iterations": res.iterations,
            "fixed_point_residual": res.residual,
            "feasibility": res.feasibility,
            "significant": int(np.sum(np.abs(res.w) > CS_SIGNIFICANCE)),
        },
    )


def fit_cs(Xi, y, spec: BasisSpec, config: CsConfig | None = None) -> SparsePce:
    """Basis-pursuit PCE on basis ``spec``; success probabilities are 1 on the nonzero support."""
    return fit_cs_design(evaluate_design(spec, Xi), y, config)
