"""Seeded O'Hagan-type benchmark function and study harness."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import cs, rvm
from .basis import build_index_set, evaluate_design
from .metrics import bootstrap_ci, moments, predict, r_squared, relative_mse, render_table, sparsity_index, l2_distance
from .rng import SplitMix64

log = logging.getLogger(__name__)

__all__ = [
    "OhaganInstance",
    "make_instance",
    "eval_ohagan",
    "sample_inputs",
    "make_dataset",
    "StudyConfig",
    "StudyReport",
    "DEFAULT_GRIDS",
    "study_seeds",
    "reference_moments",
    "run_cell",
    "run_study",
]


@dataclass(frozen=True, eq=False)
class OhaganInstance:
    """f(xi) = a1.xi + a2.sin(xi) + a3.cos(xi) + cos(xi).M.sin(xi)."""

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    M: np.ndarray
    seed: int

    @property
    def K(self) -> int:
        return self.a1.shape[0]

    def __call__(self, xi):
        return eval_ohagan(self, xi)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "seed": self.seed,
            "a1": self.a1.tolist(),
            "a2": self.a2.tolist(),
            "a3": self.a3.tolist(),
            "M": self.M.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            a1=np.asarray(d["a1"], float),
            a2=np.asarray(d["a2"], float),
            a3=np.asarray(d["a3"], float),
            M=np.asarray(d["M"], float).reshape(len(d["a1"]), len(d["a1"])),
            seed=int(d["seed"]),
        )

    def __eq__(self, other):
        if not isinstance(other, OhaganInstance):
            return NotImplemented
        return self.seed == other.seed and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("a1", "a2", "a3", "M")
        )


def _weights(rng: SplitMix64, K: int) -> np.ndarray:
    n_big = min(3, K)
    small = rng.uniform(K - n_big, 0.0, 1.0)
    big = rng.uniform(n_big, 1.5, 2.0)
    return np.concatenate([small, big])


def make_instance(K: int = 10, seed: int = 0) -> OhaganInstance:
    """Draw a1, a2, a3 then M (row-major) from one SplitMix64 stream.

    Each a_i takes U(0, 1) entries for all but its last min(3, K) entries,
    which are U(1.5, 2); M has U(0, 2) entries.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = SplitMix64(seed)
    a1 = _weights(rng, K)
    a2 = _weights(rng, K)
    a3 = _weights(rng, K)
    M = rng.uniform((K, K), 0.0, 2.0)
    return OhaganInstance(a1, a2, a3, M, int(seed))


def eval_ohagan(inst: OhaganInstance, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != inst.K:
        raise ValueError(f"xi must have {inst.K} components")
    s, c = np.sin(xi), np.cos(xi)
    return xi @ inst.a1 + s @ inst.a2 + c @ inst.a3 + np.einsum("...i,ij,...j->...", c, inst.M, s)


def sample_inputs(K: int, n: int, seed: int) -> np.ndarray:
    """n standard-normal input points."""
    return SplitMix64(seed).normal((n, K))


def make_dataset(inst: OhaganInstance, n: int, seed: int):
    Xi = sample_inputs(inst.K, n, seed)
    return Xi, eval_ohagan(inst, Xi)


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

DEFAULT_GRIDS = {
    "vary_c": (0.2, 0.4, 0.6, 0.8, 1.0),
    "vary_P": (2, 3, 4, 5, 6),
    "vary_N": (400, 1000, 1600, 2000, 2600),
}
_GRID_PARAM = {"vary_c": "c", "vary_P": "P", "vary_N": "N"}


def study_seeds(seed: int) -> dict:
    """Seeds of the independent streams a study draws from."""
    root = SplitMix64(seed)
    return {
        "instance": int(seed),
        "train": root.spawn(1).seed,
        "valid": root.spawn(2).seed,
        "mc": root.spawn(3).seed,
        "bootstrap": root.spawn(4).seed,
    }


@dataclass(frozen=True)
class StudyConfig:
    """Base settings; the study kind overrides one of c, P or N per cell."""

    K: int = 10
    seed: int = 0
    N: int = 600
    P: int = 4
    c: float = 0.2
    rule: str = "TD"
    n_valid: int = 10_000
    n_mc: int = 100_000
    n_boot: int = 1000
    methods: tuple = ("rvm", "cs")
    prior: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    cs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


def _skew_kurt(x):
    c = x - x.mean()
    v = np.mean(c * c)
    return np.array([x.mean(), math.sqrt(v), np.mean(c**3) / v**1.5, np.mean(c**4) / v**2])


def reference_moments(inst: OhaganInstance, n_mc: int, n_boot: int, mc_seed: int, boot_seed: int) -> dict:
    """Direct Monte Carlo moments of the true function with bootstrap percentile intervals."""
    y = eval_ohagan(inst, sample_inputs(inst.K, n_mc, mc_seed))
    point = _skew_kurt(y)
    lo, hi = bootstrap_ci(y, B=n_boot, alpha=0.05, seed=boot_seed, statistic=_skew_kurt)
    names = ("mean", "std", "skewness", "kurtosis")
    return {
        "n_mc": int(n_mc),
        "n_boot": int(n_boot),
        "estimate": dict(zip(names, point.tolist())),
        "interval": {k: [float(a), float(b)] for k, a, b in zip(names, lo, hi)},
    }


def _moment_summary(pce, n_mc, seed):
    mo = moments(pce, n_mc=n_mc, seed=seed)
    return {k: mo[k] for k in ("mean", "std", "skewness", "kurtosis")}


def run_cell(config: StudyConfig, params: dict) -> dict:
    """Fit every requested method for one grid point; errors are caught and recorded."""
    cfg = replace(config, **params)
    seeds = study_seeds(cfg.seed)
    cell = {"params": dict(params), "fit_summary": {}, "metrics": {}, "elbo_trace": [], "errors": {}}
    try:
        inst = make_instance(cfg.K, cfg.seed)
        spec = build_index_set(cfg.K, cfg.P, cfg.rule)
        Xi, y = make_dataset(inst, cfg.N, seeds["train"])
        Xv, yv = make_dataset(inst, cfg.n_valid, seeds["valid"])
        design = evaluate_design(spec, Xi)
    except Exception as exc:  # noqa: BLE001 - reported in the cell
        cell["errors"]["setup"] = f"{type(exc).__name__}: {exc}"
        return cell
    cell["fit_summary"]["n_terms"] = spec.size

    fitted = {}
    if "rvm" in cfg.methods:
        try:
            prior = rvm.PriorConfig(**{**cfg.prior, "c": cfg.c})
            res = rvm.fit_design(design, y, prior, rvm.FitConfig(**cfg.fit))
            fitted["rvm"] = res.pce
            cell["elbo_trace"] = [float(v) for v in res.elbo_trace]
            cell["fit_summary"]["rvm"] = {
                "converged": res.converged,
                "sweeps": res.sweeps,
                "active": int(len(res.state.active)),
                "elbo": float(res.elbo_trace[-1]),
            }
        except Exception as exc:  # noqa: BLE001
            cell["errors"]["rvm"] = f"{type(exc).__name__}: {exc}"
    if "cs" in cfg.methods:
        try:
            pce = cs.fit_cs_design(design, y, cs.CsConfig(**cfg.cs))
            fitted["cs"] = pce
            md = pce.metadata
            cell["fit_summary"]["cs"] = {
                "converged": md["converged"],
                "iterations": md["iterations"],
                "feasibility": md["feasibility"],
            }
        except Exception as exc:  # noqa: BLE001
            cell["errors"]["cs"] = f"{type(exc).__name__}: {exc}"

    for name, pce in fitted.items():
        pred = predict(pce, Xv)
        m = {"relative_mse": relative_mse(pce, Xv, yv), "r2": r_squared(pred, yv)}
        if cfg.n_mc > 0:
            m["moments"] = _moment_summary(pce, cfg.n_mc, seeds["mc"])
        if name == "rvm":
            m["sparsity_01"] = sparsity_index(pce, 0.01)
            m["sparsity_95"] = sparsity_index(pce, 0.95)
        else:
            m["sparsity"] = sparsity_index(pce)
        m["significant"] = int(round(pce.spec.size * (m.get("sparsity_95", m.get("sparsity")) / 100.0)))
        cell["metrics"][name] = m
    if len(fitted) == 2:
        cell["metrics"]["l2_sq_distance"] = l2_distance(fitted["rvm"], fitted["cs"])
    return cell


@dataclass
class StudyReport:
    study_kind: str
    seed: int
    grid: list
    config: dict
    reference: dict
    cells: list

    def to_dict(self) -> dict:
        return {
            "study_kind": self.study_kind,
            "seed": self.seed,
            "grid": list(self.grid),
            "config": self.config,
            "reference": self.reference,
            "cells": self.cells,
        }

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent, allow_nan=False)

    @classmethod
    def from_dict(cls, d) -> "StudyReport":
        return cls(d["study_kind"], d["seed"], d["grid"], d.get("config", {}), d.get("reference", {}), d["cells"])

    def rows(self) -> list[dict]:
        """One flat record per cell and method."""
        param = _GRID_PARAM[self.study_kind]
        out = []
        for cell in self.cells:
            for method in ("rvm", "cs"):
                m = cell["metrics"].get(method)
                if m is None:
                    continue
                row = {param: cell["params"][param], "method": method}
                for k, v in m.items():
                    if isinstance(v, dict):
                        row.update({f"{k}_{kk}": vv for kk, vv in v.items()})
                    else:
                        row[k] = v
                row["l2_sq_distance"] = cell["metrics"].get("l2_sq_distance")
                out.append(row)
        return out

    def to_csv(self) -> str:
        rows = self.rows()
        keys = []
        for r in rows:
            keys.extend(k for k in r if k not in keys)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if r.get(k) is None else repr(r[k]) if isinstance(r.get(k), float) else r[k]) for k in keys})
        return buf.getvalue()

    def render(self) -> str:
        """Moments, sparsity and errors as an aligned text table, one column per cell and method."""
        param = _GRID_PARAM[self.study_kind]
        columns, records = [], []
        ref = self.reference.get("interval")
        if ref:
            columns.append("MC (true)")
            records.append({f"moments_{k}": v for k, v in ref.items()})
        for row in self.rows():
            columns.append(f"{row['method']} {param}={row[param]}")
            records.append(row)
        labels = [
            ("mean", "moments_mean"), ("std", "moments_std"), ("skewness", "moments_skewness"),
            ("kurtosis", "moments_kurtosis"), ("sparsity pi>0.01 (%)", "sparsity_01"),
            ("sparsity pi>0.95 (%)", "sparsity_95"), ("sparsity |w|>8e-4 (%)", "sparsity"),
            ("relative MSE", "relative_mse"), ("R^2", "r2"), ("L2^2 distance", "l2_sq_distance"),
        ]
        table = [(label, [r.get(key) for r in records]) for label, key in labels]
        return render_table(columns, table)


def _cell_job(args):
    config, params = args
    return run_cell(config, params)


def run_study(kind: str, grid=None, config: StudyConfig | None = None, jobs: int = 1) -> StudyReport:
    """Run one fit per grid value of c, P or N and collect the metrics.

    Cells are independent and may run in ``jobs`` worker processes; the
    report lists them in grid order regardless.
    """
    if kind not in _GRID_PARAM:
        raise ValueError(f"unknown study kind {kind!r}; expected one of {sorted(_GRID_PARAM)}")
    config = config or StudyConfig()
    grid = list(DEFAULT_GRIDS[kind] if grid is None else grid)
    if not grid:
        raise ValueError("grid must not be empty")
    param = _GRID_PARAM[kind]
    cast = float if param == "c" else int
    grid = [cast(v) for v in grid]
    tasks = [(config, {param: v}) for v in grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_cell_job, tasks))
    else:
        cells = [_cell_job(t) for t in tasks]
    seeds = study_seeds(config.seed)
    reference = {}
    if config.n_mc > 0:
        inst = make_instance(config.K, config.seed)
        reference = reference_moments(inst, config.n_mc, config.n_boot, seeds["mc"], seeds["bootstrap"])
    return StudyReport(kind, int(config.seed), grid, config.to_dict(), reference, cells)
