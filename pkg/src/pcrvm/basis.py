"""Orthonormal polynomial bases, multi-index truncation sets and design matrices.

Only the probabilists' Hermite family (standard normal inputs) is provided.
A new family plugs in by subclassing :class:`OrthonormalFamily` and
registering it in ``FAMILIES``; nothing downstream depends on Hermite.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

__all__ = [
    "OrthonormalFamily",
    "Hermite",
    "FAMILIES",
    "hermite_orthonormal",
    "BasisSpec",
    "build_index_set",
    "DesignMatrix",
    "evaluate_design",
    "evaluate_basis",
    "RULES",
]

RULES = ("TD", "LQ", "TP", "HC")


class OrthonormalFamily:
    """Univariate polynomials orthonormal under some input density."""

    name = "abstract"

    def table(self, x, degree: int) -> np.ndarray:
        """Values psi_0..psi_degree at ``x``; shape ``x.shape + (degree+1,)``."""
        raise NotImplementedError

    def sample(self, rng, size):
        """Draw inputs from the measure the polynomials are orthonormal under."""
        raise NotImplementedError


class Hermite(OrthonormalFamily):
    """Probabilists' Hermite polynomials scaled by 1/sqrt(n!)."""

    name = "hermite"

    def table(self, x, degree):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (degree + 1,))
        out[..., 0] = 1.0
        if degree >= 1:
            out[..., 1] = x
        # He_{n+1} = x He_n - n He_{n-1}, carried in normalized form
        for n in range(1, degree):
            out[..., n + 1] = (x * out[..., n] - math.sqrt(n) * out[..., n - 1]) / math.sqrt(n + 1)
        return out

    def sample(self, rng, size):
        return rng.normal(size)


FAMILIES = {"hermite": Hermite()}


def hermite_orthonormal(n: int, x):
    """psi_n(x), orthonormal under N(0, 1)."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    val = FAMILIES["hermite"].table(x, n)[..., n]
    return float(val) if val.ndim == 0 else val


@lru_cache(maxsize=None)
def _total_degree_block(K, n):
    """All length-K multi-indices with |alpha| = n, in descending lexicographic order."""
    if K == 1:
        return ((n,),)
    out = []
    for first in range(n, -1, -1):
        out.extend((first,) + rest for rest in _total_degree_block(K - 1, n - first))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Dimension, order, truncation rule and the ordered multi-index list.

    Indices are graded: sorted by total degree, then descending lexicographic
    within a degree, so the zero multi-index sits at position 0 and coefficient
    positions are stable across runs.
    """

    K: int
    P: int
    rule: str
    indices: np.ndarray
    q: float | None = None
    family: str = "hermite"

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[1] != self.K:
            raise ValueError(f"indices must have shape (n, {self.K})")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.indices.shape[0]

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    @property
    def max_degree(self) -> int:
        return int(self.indices.max()) if self.indices.size else 0

    @cached_property
    def total_degree(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, BasisSpec):
            return NotImplemented
        return (
            self.K == other.K
            and self.P == other.P
            and self.rule == other.rule
            and self.q == other.q
            and self.family == other.family
            and np.array_equal(self.indices, other.indices)
        )

    def __hash__(self):
        return hash((self.K, self.P, self.rule, self.q, self.family, self.indices.tobytes()))

    def to_dict(self) -> dict:
        d = {"K": self.K, "P": self.P, "rule": self.rule}
        if self.q is not None:
            d["q"] = self.q
        d["family"] = self.family
        d["indices"] = self.indices.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(
            K=int(d["K"]),
            P=int(d["P"]),
            rule=d["rule"],
            indices=np.asarray(d["indices"], dtype=np.int64).reshape(-1, int(d["K"])),
            q=d.get("q"),
            family=d.get("family", "hermite"),
        )


def _admits(rule, alpha, P, q):
    if rule == "TD":
        return sum(alpha) <= P
    if rule == "TP":
        return max(alpha) <= P
    if rule == "HC":
        return math.prod(a + 1 for a in alpha) <= P + 1
    # LQ; the small slack keeps exact ties such as q = 1 on the boundary
    return sum(a**q for a in alpha if a) <= P**q * (1 + 1e-12)


def build_index_set(K: int, P: int, rule: str = "TD", q: float | None = None) -> BasisSpec:
    """Every multi-index admitted by the truncation rule, graded-lex ordered.

    ``rule`` is one of ``"TD"`` (total degree), ``"LQ"`` (l_q quasi-norm
    ball, ``0 < q <= 1``, default 1), ``"TP"`` (tensor product) or ``"HC"``
    (hyperbolic cross).
    """
    rule = rule.upper()
    if rule not in RULES:
        raise ValueError(f"unknown truncation rule {rule!r}; expected one of {RULES}")
    if K < 1 or P < 0:
        raise ValueError("need K >= 1 and P >= 0")
    if rule == "LQ":
        q = 1.0 if q is None else float(q)
        if not 0 < q <= 1:
            raise ValueError("LQ truncation needs 0 < q <= 1")
    else:
        q = None

    if rule == "TP":
        rows = sorted(
            itertools.product(range(P + 1), repeat=K),
            key=lambda a: (sum(a), tuple(-x for x in a)),
        )
    else:
        # LQ and HC sets are subsets of TD, so filter its blocks
        rows = [
            alpha
            for n in range(P + 1)
            for alpha in _total_degree_block(K, n)
            if rule == "TD" or _admits(rule, alpha, P, q)
        ]
    return BasisSpec(K=K, P=P, rule=rule, indices=np.array(rows, dtype=np.int64).reshape(-1, K), q=q)


def _check_inputs(spec: BasisSpec, Xi) -> np.ndarray:
    Xi = np.asarray(Xi, dtype=float)
    if Xi.ndim == 1:
        Xi = Xi.reshape(-1, spec.K) if spec.K > 1 else Xi[:, None]
    if Xi.ndim != 2 or Xi.shape[1] != spec.K:
        raise ValueError(f"inputs must have {spec.K} columns, got shape {Xi.shape}")
    bad = ~np.isfinite(Xi).all(axis=1)
    if bad.any():
        raise ValueError(f"non-finite input at row {int(np.flatnonzero(bad)[0])}")
    return Xi


def evaluate_basis(spec: BasisSpec, Xi) -> np.ndarray:
    """N x N_K matrix with entry (n, j) = prod_i psi_{alpha_ji}(xi_ni)."""
    Xi = _check_inputs(spec, Xi)
    family = FAMILIES[spec.family]
    tables = family.table(Xi, spec.max_degree)  # (N, K, deg+1)
    out = np.ones((Xi.shape[0], spec.size))
    for k in range(spec.K):
        col = spec.indices[:, k]
        if col.any():
            out *= tables[:, k, :][:, col]
    return out


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Basis evaluations at the training inputs with the cached Gram matrix."""

    spec: BasisSpec
    values: np.ndarray
    gram: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.values.shape


def evaluate_design(spec: BasisSpec, Xi) -> DesignMatrix:
    values = evaluate_basis(spec, Xi)
    gram = values.T @ values
    # exact symmetry; BLAS may differ in the last bit between triangles
    gram = 0.5 * (gram + gram.T)
    values.setflags(write=False)
    gram.setflags(write=False)
    return DesignMatrix(spec=spec, values=values, gram=gram)
