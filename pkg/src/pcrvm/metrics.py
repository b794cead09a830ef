"""Fitted sparse expansions, prediction, moments and comparison metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .basis import FAMILIES, BasisSpec, evaluate_basis
from .rng import SplitMix64

__all__ = [
    "SparsePce",
    "CS_SIGNIFICANCE",
    "predict",
    "relative_mse",
    "l2_distance",
    "moments",
    "sparsity_index",
    "r_squared",
    "bootstrap_ci",
    "errorbars",
    "render_table",
]

# |w_i| above this counts as a significant coefficient for CS expansions.
CS_SIGNIFICANCE = 8e-4

_PREDICT_CHUNK = 8192


@dataclass(eq=False)
class SparsePce:
    """A polynomial chaos expansion with per-coefficient posterior summaries.

    ``coeff_mean`` and ``coeff_var`` are the mean and variance of each
    coefficient, ``success_prob`` the probability that the term is included.
    Point predictions use ``coeff_mean * success_prob``.
    """

    spec: BasisSpec
    coeff_mean: np.ndarray
    coeff_var: np.ndarray
    success_prob: np.ndarray
    source: str = "rvm"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.spec.size
        self.coeff_mean = np.asarray(self.coeff_mean, dtype=float)
        self.coeff_var = np.asarray(self.coeff_var, dtype=float)
        self.success_prob = np.asarray(self.success_prob, dtype=float)
        for name in ("coeff_mean", "coeff_var", "success_prob"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have length {n}")
        if np.any(self.coeff_var < 0):
            raise ValueError("coeff_var must be non-negative")
        if np.any((self.success_prob < 0) | (self.success_prob > 1)):
            raise ValueError("success_prob must lie in [0, 1]")

    @property
    def coefficients(self) -> np.ndarray:
        """Effective coefficients m * pi."""
        return self.coeff_mean * self.success_prob

    def __add__(self, other):
        _require_same_spec(self, other)
        return SparsePce(
            self.spec,
            self.coefficients + other.coefficients,
            np.zeros(self.spec.size),
            np.ones(self.spec.size),
            source="combined",
        )

    def __rmul__(self, scalar):
        return SparsePce(
            self.spec,
            float(scalar) * self.coefficients,
            np.zeros(self.spec.size),
            np.ones(self.spec.size),
            source="combined",
        )

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "basis": self.spec.to_dict(),
            "coeff_mean": self.coeff_mean.tolist(),
            "coeff_var": self.coeff_var.tolist(),
            "success_prob": self.success_prob.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SparsePce":
        return cls(
            spec=BasisSpec.from_dict(d["basis"]),
            coeff_mean=d["coeff_mean"],
            coeff_var=d["coeff_var"],
            success_prob=d["success_prob"],
            source=d.get("source", "rvm"),
            metadata=d.get("metadata", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False)


def _require_same_spec(a: SparsePce, b: SparsePce):
    if a.spec != b.spec:
        raise ValueError("expansions are defined on different bases")


def predict(pce: SparsePce, Xi) -> np.ndarray:
    """Posterior-mean prediction Psi(Xi) @ (m * pi), evaluated in row chunks."""
    Xi = np.asarray(Xi, dtype=float)
    if Xi.ndim == 1:
        Xi = Xi[:, None] if pce.spec.K == 1 else Xi[None, :]
    if Xi.shape[1] != pce.spec.K:
        raise ValueError(f"inputs must have {pce.spec.K} columns, got {Xi.shape[1]}")
    coef = pce.coefficients
    keep = np.flatnonzero(coef)
    if keep.size == 0:
        return np.zeros(Xi.shape[0])
    sub = BasisSpec(pce.spec.K, pce.spec.P, pce.spec.rule, pce.spec.indices[keep], pce.spec.q, pce.spec.family)
    out = np.empty(Xi.shape[0])
    for start in range(0, Xi.shape[0], _PREDICT_CHUNK):
        rows = slice(start, start + _PREDICT_CHUNK)
        out[rows] = evaluate_basis(sub, Xi[rows]) @ coef[keep]
    return out


def relative_mse(pce: SparsePce, Xi, f) -> float:
    """sum (f - f_pc)^2 / sum f^2 over the validation points."""
    f = np.asarray(f, dtype=float)
    denom = float(f @ f)
    if f.size == 0 or denom == 0:
        raise ValueError("validation outputs must not be all zero")
    r = f - predict(pce, Xi)
    return float(r @ r) / denom


def l2_distance(a: SparsePce, b: SparsePce) -> float:
    """Sum of squared differences of the effective coefficients.

    This is a squared distance; no square root is taken.
    """
    _require_same_spec(a, b)
    d = a.coefficients - b.coefficients
    return float(d @ d)


def _zero_index(spec: BasisSpec):
    hits = np.flatnonzero(~spec.indices.any(axis=1))
    return int(hits[0]) if hits.size else None


def moments(pce: SparsePce, n_mc: int = 100_000, seed: int = 0) -> dict:
    """Mean and standard deviation from orthonormality; skewness and kurtosis by MC.

    Kurtosis is the plain fourth standardized moment (3 for a Gaussian).
    The Monte Carlo mean and standard deviation are returned too, as
    ``mc_mean`` / ``mc_std``, for consistency checks.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    coef = pce.coefficients
    z = _zero_index(pce.spec)
    mean = float(coef[z]) if z is not None else 0.0
    rest = np.delete(coef, z) if z is not None else coef
    std = math.sqrt(float(rest @ rest))

    rng = SplitMix64(seed)
    xi = FAMILIES[pce.spec.family].sample(rng, (n_mc, pce.spec.K))
    y = predict(pce, xi)
    centred = y - y.mean()
    var = float(np.mean(centred**2))
    if var > 0:
        skew = float(np.mean(centred**3)) / var**1.5
        kurt = float(np.mean(centred**4)) / var**2
    else:
        skew, kurt = 0.0, float("nan")
    return {
        "mean": mean,
        "std": std,
        "skewness": skew,
        "kurtosis": kurt,
        "mc_mean": float(y.mean()),
        "mc_std": math.sqrt(var),
        "n_mc": int(n_mc),
        "seed": int(seed),
    }


def sparsity_index(pce: SparsePce, threshold: float | None = None) -> float:
    """Percentage of terms counted as significant.

    RVM expansions count success probabilities above ``threshold``; CS
    expansions count |w_i| above ``threshold`` (default ``CS_SIGNIFICANCE``).
    """
    n = pce.spec.size
    if pce.source == "cs":
        t = CS_SIGNIFICANCE if threshold is None else threshold
        hits = np.abs(pce.coeff_mean) > t
    else:
        if threshold is None or not 0 < threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        hits = pce.success_prob > threshold
    return 100.0 * int(hits.sum()) / n


def r_squared(predictions, truths) -> float:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(truths, dtype=float)
    if p.shape != t.shape or t.size < 2:
        raise ValueError("need at least two matching points")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("truths have zero variance")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


def bootstrap_ci(samples, B: int = 1000, alpha: float = 0.05, seed: int = 0, statistic=np.mean):
    """Percentile bootstrap interval (alpha/2, 1 - alpha/2) from ``B`` resamples.

    ``statistic`` maps a 1-D sample to a scalar or a fixed-length vector; for
    a vector the result is a pair of arrays.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if B < 100:
        raise ValueError("B must be >= 100")
    if x.size < 2:
        raise ValueError("need at least two samples")
    rng = SplitMix64(seed)
    n = x.size
    stats = []
    for _ in range(B):
        idx = (rng.uniform(n) * n).astype(np.int64)
        stats.append(np.asarray(statistic(x[idx]), dtype=float))
    stats = np.array(stats)
    lo = np.quantile(stats, alpha / 2, axis=0)
    hi = np.quantile(stats, 1 - alpha / 2, axis=0)
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def errorbars(pce: SparsePce, width: float = 2.0) -> np.ndarray:
    """``width`` standard deviations of each coefficient, width * sqrt(1/rho)."""
    return width * np.sqrt(pce.coeff_var)


def render_table(columns: list[str], rows: list[tuple[str, list]], fmt: str = "{:.4g}") -> str:
    """Aligned plain-text table with a label column followed by ``columns``."""

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, str):
            return v
        if isinstance(v, (tuple, list)):
            return "[" + ", ".join(fmt.format(x) for x in v) + "]"
        return fmt.format(v)

    body = [[label] + [cell(v) for v in values] for label, values in rows]
    header = [""] + list(columns)
    widths = [max(len(r[j]) for r in body + [header]) for j in range(len(header))]
    lines = [" | ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("-+-".join("-" * w for w in widths))
    for r in body:
        lines.append(" | ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)
