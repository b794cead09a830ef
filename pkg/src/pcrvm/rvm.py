"""Variational relevance vector machine for sparse polynomial chaos expansions.

Model (per basis term i = 1..N_K)::

    y | w, iota, tau  ~  N(Psi (w * iota), 1/tau)
    w_i | s_i         ~  N(0, 1/s_i)          s_i ~ Gamma(a, b)
    iota_i | pi_i     ~  Bernoulli(pi_i)      pi_i ~ Beta(c, d)
    tau               ~  Gamma(u, w)

The posterior is approximated by a fully factorised density whose factors
stay in the prior families.  Each factor is stored by its natural parameter
and updated in closed form to the zero of the ELBO gradient for that block,
one block at a time, so the ELBO never decreases across a sweep.

Natural-parameter layout of :class:`RvmState`:

* ``eta_tau``   (2,)        Gamma   (upsilon - 1, -omega)
* ``eta_sigma`` (N_K, 2)    Gamma   (kappa_i - 1, -lambda_i)
* ``eta_pi``    (N_K, 2)    Beta    (r_i, s_i)
* ``eta_w``     (N_K, 2)    Gaussian (m_i rho_i, -rho_i / 2)
* ``eta_iota``  (N_K,)      Bernoulli logit of pi~_i
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import expfam
from .basis import BasisSpec, DesignMatrix, evaluate_design
from .expfam import ETA_CLAMP, digamma
from .metrics import SparsePce

__all__ = [
    "PriorConfig",
    "FitConfig",
    "RvmState",
    "FitResult",
    "NumericalError",
    "init_state",
    "expected_L",
    "update_tau",
    "update_sigma",
    "update_pi",
    "update_w",
    "update_iota",
    "elbo",
    "sweep",
    "fit",
    "fit_design",
    "prime_state",
    "result_from_dict",
]

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(RuntimeError):
    """A non-finite value appeared during the coordinate ascent."""


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters: Gamma(a, b) on coefficient precisions, Beta(c, d) on
    inclusion probabilities, Gamma(u, w) on the noise precision."""

    a: float = 1e-6
    b: float = 1e-6
    c: float = 0.2
    d: float = 1.0
    u: float = 1e-6
    w: float = 1e-6

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"prior hyperparameter {k} must be positive, got {v}")


@dataclass(frozen=True)
class FitConfig:
    """Convergence controls.

    ``delta`` bounds the relative change of the full natural-parameter vector
    between sweeps, measured as max |d eta| / (1 + |eta|).  ``delta_pi``
    applies the same measure to the success probabilities and gates pruning
    of terms with probability <= ``eps_pi``.  ``frozen`` names blocks that are
    never updated (any of ``"tau"``, ``"sigma"``, ``"pi"``, ``"iota"``,
    ``"w"``), which is how diagnostic runs hold parts of the model fixed.

    A fit that starts from the prior is first warmed up: every success
    probability is set to 1/2 and sweeps that update only tau, sigma and w
    run until the same ``delta`` test passes or ``warm_start`` sweeps are
    spent.  Starting the inclusion factors at the prior mean (about 0.009
    for c = 0.2) lets the first iota update see m = 0 and switch every term
    off, a fixed point the sweeps never leave.  ``warm_start=0`` keeps the
    bare prior initialisation.
    """

    delta: float = 1e-4
    delta_pi: float = 1e-4
    eps_pi: float = 0.01
    max_sweeps: int = 10_000
    prune: bool = True
    frozen: tuple = ()
    warm_start: int = 100

    def __post_init__(self):
        if not (self.delta > 0 and self.delta_pi > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.eps_pi < 1:
            raise ValueError("eps_pi must lie in (0, 1)")
        if self.warm_start < 0:
            raise ValueError("warm_start must be >= 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        bad = set(self.frozen) - {"tau", "sigma", "pi", "iota", "w"}
        if bad:
            raise ValueError(f"unknown blocks in frozen: {sorted(bad)}")
        object.__setattr__(self, "frozen", tuple(self.frozen))


@dataclass
class RvmState:
    eta_tau: np.ndarray
    eta_sigma: np.ndarray
    eta_pi: np.ndarray
    eta_w: np.ndarray
    eta_iota: np.ndarray
    m: np.ndarray
    rho: np.ndarray
    pi_tilde: np.ndarray
    active: np.ndarray
    elbo_trace: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.m.shape[0]

    @property
    def e_tau(self) -> float:
        """E[tau] = upsilon / omega."""
        return (self.eta_tau[0] + 1.0) / -self.eta_tau[1]

    @property
    def e_sigma(self) -> np.ndarray:
        return (self.eta_sigma[:, 0] + 1.0) / -self.eta_sigma[:, 1]

    def copy(self) -> "RvmState":
        return RvmState(
            *(np.array(getattr(self, k), copy=True) for k in
              ("eta_tau", "eta_sigma", "eta_pi", "eta_w", "eta_iota", "m", "rho", "pi_tilde", "active")),
            elbo_trace=list(self.elbo_trace),
        )

    def natural_vector(self) -> np.ndarray:
        """All natural parameters flattened in block order tau, sigma, pi, w, iota."""
        return np.concatenate([
            self.eta_tau, self.eta_sigma.ravel(), self.eta_pi.ravel(), self.eta_w.ravel(), self.eta_iota,
        ])

    def set_w(self, i, eta1, eta2):
        self.eta_w[i, 0] = eta1
        self.eta_w[i, 1] = eta2
        self.rho[i] = -2.0 * eta2
        self.m[i] = eta1 / self.rho[i]

    def set_iota(self, i, eta):
        eta = min(max(eta, -ETA_CLAMP), ETA_CLAMP)
        self.eta_iota[i] = eta
        self.pi_tilde[i] = expfam.sigmoid(eta)


def init_state(prior: PriorConfig, n_terms) -> RvmState:
    """Start every factor at its prior (coefficients at E_q[prior natural parameter])."""
    n = n_terms.size if isinstance(n_terms, BasisSpec) else int(n_terms)
    eta_tau = np.array([prior.u - 1.0, -prior.w])
    eta_sigma = np.tile([prior.a - 1.0, -prior.b], (n, 1))
    eta_pi = np.tile([prior.c, prior.d], (n, 1))
    rho = np.full(n, prior.a / prior.b)
    eta_w = np.stack([np.zeros(n), -0.5 * rho], axis=1)
    e_zeta_iota = digamma(prior.c) - digamma(prior.d)
    eta_iota = np.full(n, e_zeta_iota)
    return RvmState(
        eta_tau=eta_tau,
        eta_sigma=eta_sigma,
        eta_pi=eta_pi,
        eta_w=eta_w,
        eta_iota=eta_iota,
        m=np.zeros(n),
        rho=rho,
        pi_tilde=expfam.sigmoid(eta_iota),
        active=np.arange(n),
    )


# ---------------------------------------------------------------------------
# expectations and single-block updates
# ---------------------------------------------------------------------------


def _check_dims(state: RvmState, design: DesignMatrix, y):
    if design.values.shape[1] != state.size:
        raise ValueError(f"state has {state.size} terms but design has {design.values.shape[1]} columns")
    if np.shape(y) != (design.values.shape[0],):
        raise ValueError(f"y must have length {design.values.shape[0]}")


def expected_L(state: RvmState, design: DesignMatrix, y) -> tuple[float, float]:
    """(E[L1], E[L2]) = (N/2, -E||y - Psi (w*iota)||^2 / 2) under q."""
    _check_dims(state, design, y)
    mu = state.m * state.pi_tilde
    r = y - design.values @ mu
    var = state.pi_tilde / state.rho + state.m**2 * state.pi_tilde * (1.0 - state.pi_tilde)
    el2 = -0.5 * float(r @ r) - 0.5 * float(np.diag(design.gram) @ var)
    return 0.5 * len(y), el2


def update_tau(state: RvmState, EL, prior: PriorConfig):
    """eta_tau = zeta_tau + E[L]; shape u + N/2, rate w - E[L2]."""
    l1, l2 = EL
    state.eta_tau = np.array([prior.u - 1.0 + l1, -prior.w + l2])
    return state.eta_tau


def update_sigma(state: RvmState, i: int, prior: PriorConfig):
    """kappa_i = a + 1/2, lambda_i = b + E[w_i^2]/2."""
    second = state.m[i] ** 2 + 1.0 / state.rho[i]
    state.eta_sigma[i, 0] = prior.a - 0.5
    state.eta_sigma[i, 1] = -prior.b - 0.5 * second
    return state.eta_sigma[i]


def update_pi(state: RvmState, i: int, prior: PriorConfig):
    """r_i = c + pi~_i, s_i = d + 1 - pi~_i.

    This is the zero of the ELBO gradient in the Beta natural parameters
    (conjugate Beta-Bernoulli step with one soft observation).
    """
    p = state.pi_tilde[i]
    state.eta_pi[i, 0] = prior.c + p
    state.eta_pi[i, 1] = prior.d + 1.0 - p
    return state.eta_pi[i]


def _others(state: RvmState, design: DesignMatrix, i: int) -> float:
    """psi_i^T Psi (pi~ * m_{-i})."""
    g = design.gram[i]
    mu = state.m * state.pi_tilde
    return float(g @ mu) - g[i] * mu[i]


def _psi_y(design: DesignMatrix, y, i):
    return float(design.values[:, i] @ y)


def update_iota(state: RvmState, i: int, design: DesignMatrix, y, *, others=None, psi_y=None):
    """eta_iota_i = E[log pi_i - log(1 - pi_i)] + E[tau] u_i.

    u_i = m_i psi_i^T y - m_i psi_i^T Psi(pi~ * m_{-i}) - G_ii (m_i^2 + 1/rho_i) / 2
    is the derivative of E[L2] with respect to pi~_i; it does not depend on
    pi~_i itself.
    """
    if others is None:
        others = _others(state, design, i)
    if psi_y is None:
        psi_y = _psi_y(design, y, i)
    m, g_ii = state.m[i], design.gram[i, i]
    u_i = m * (psi_y - others) - 0.5 * g_ii * (m * m + 1.0 / state.rho[i])
    r, s = state.eta_pi[i]
    state.set_iota(i, digamma(r) - digamma(s) + state.e_tau * u_i)
    return state.eta_iota[i]


def update_w(state: RvmState, i: int, design: DesignMatrix, y, *, others=None, psi_y=None):
    """eta_w_i = (0, -E[s_i]/2) + E[tau] v_i, then rho_i and m_i follow.

    v_i = (pi~_i (psi_i^T y - psi_i^T Psi(pi~ * m_{-i})), -pi~_i G_ii / 2).
    """
    if others is None:
        others = _others(state, design, i)
    if psi_y is None:
        psi_y = _psi_y(design, y, i)
    p = state.pi_tilde[i]
    e_tau = state.e_tau
    e_sigma = (state.eta_sigma[i, 0] + 1.0) / -state.eta_sigma[i, 1]
    eta1 = e_tau * p * (psi_y - others)
    eta2 = -0.5 * e_sigma - 0.5 * e_tau * p * design.gram[i, i]
    state.set_w(i, eta1, eta2)
    return state.eta_w[i]


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


def elbo_terms(state: RvmState, design: DesignMatrix, y, prior: PriorConfig) -> dict:
    """The ELBO split into expected log likelihood, expected log priors and entropies."""
    n = len(y)
    _, el2 = expected_L(state, design, y)
    tau = expfam.NaturalParam("gamma", state.eta_tau)
    e_log_tau, e_tau = expfam.grad_log_normalizer(tau)
    loglik = -0.5 * n * _LOG_2PI + e_log_tau * (0.5 * n) + e_tau * el2

    sig = expfam.NaturalParam("gamma", state.eta_sigma)
    g_sig = expfam.grad_log_normalizer(sig)
    e_log_sig, e_sig = g_sig[:, 0], g_sig[:, 1]
    e_w2 = state.m**2 + 1.0 / state.rho
    # E[log N(w_i | 0, 1/s_i)]
    log_pw = -0.5 * _LOG_2PI + 0.5 * e_log_sig - 0.5 * e_sig * e_w2

    beta_q = expfam.NaturalParam("beta", state.eta_pi)
    g_pi = expfam.grad_log_normalizer(beta_q)
    e_log_pi, e_log_1mpi = g_pi[:, 0], g_pi[:, 1]
    p = state.pi_tilde
    log_piota = p * e_log_pi + (1.0 - p) * e_log_1mpi

    gamma_a = expfam.NaturalParam("gamma", np.array([prior.a - 1.0, -prior.b]))
    gamma_u = expfam.NaturalParam("gamma", np.array([prior.u - 1.0, -prior.w]))
    beta_c = expfam.NaturalParam("beta", np.array([prior.c, prior.d]))

    log_prior = (
        float(np.sum(log_pw))
        + float(np.sum(expfam.cross_entropy(sig, gamma_a)))
        + float(np.sum(log_piota))
        + float(np.sum(expfam.cross_entropy(beta_q, beta_c)))
        + float(expfam.cross_entropy(tau, gamma_u))
    )
    wq = expfam.NaturalParam("gaussian", state.eta_w)
    iq = expfam.NaturalParam("bernoulli", state.eta_iota)
    ent = (
        float(expfam.entropy(tau))
        + float(np.sum(expfam.entropy(sig)))
        + float(np.sum(expfam.entropy(beta_q)))
        + float(np.sum(expfam.entropy(wq)))
        + float(np.sum(expfam.entropy(iq)))
    )
    return {"loglik": float(loglik), "log_prior": log_prior, "entropy": ent}


def elbo(state: RvmState, design: DesignMatrix, y, prior: PriorConfig) -> float:
    """F[q] = E_q[log p(y, theta)] + H[q]."""
    t = elbo_terms(state, design, y, prior)
    return t["loglik"] + t["log_prior"] + t["entropy"]


# ---------------------------------------------------------------------------
# coordinate ascent
# ---------------------------------------------------------------------------


def _rel_change(new, old) -> float:
    if new.size == 0:
        return 0.0
    return float(np.max(np.abs(new - old) / (1.0 + np.abs(old))))


def sweep(state: RvmState, design: DesignMatrix, y, prior: PriorConfig, frozen=(), psi_y=None):
    """One pass: tau first, then for each active term sigma, pi, iota, w.

    The sigma and pi updates of term i read only term i's own moments,
    which no earlier step of the pass touches, so they are applied to all
    active terms up front.  The iota and w updates see the freshest values
    of every other term.
    """
    if psi_y is None:
        psi_y = design.values.T @ y
    if "tau" not in frozen:
        update_tau(state, expected_L(state, design, y), prior)
    act = state.active
    if act.size == 0:
        return
    if "sigma" not in frozen:
        state.eta_sigma[act, 0] = prior.a - 0.5
        state.eta_sigma[act, 1] = -prior.b - 0.5 * (state.m[act] ** 2 + 1.0 / state.rho[act])
    if "pi" not in frozen:
        p = state.pi_tilde[act]
        state.eta_pi[act, 0] = prior.c + p
        state.eta_pi[act, 1] = prior.d + 1.0 - p
    do_iota = "iota" not in frozen
    do_w = "w" not in frozen

    gram = design.gram
    e_tau = float(state.e_tau)
    e_sig = ((state.eta_sigma[act, 0] + 1.0) / -state.eta_sigma[act, 1]).tolist()
    logit_prior = (digamma(state.eta_pi[act, 0]) - digamma(state.eta_pi[act, 1])).tolist()
    g_diag = np.diagonal(gram)[act].tolist()
    py = psi_y[act].tolist()
    m, rho, pt = state.m, state.rho, state.pi_tilde
    mu = m * pt
    for k, i in enumerate(act.tolist()):
        g_ii = g_diag[k]
        mi, pi_i = float(m[i]), float(pt[i])
        # contributions of the other terms stay fixed while term i is updated
        resid = py[k] - (float(gram[i] @ mu) - g_ii * mu[i])
        if do_iota:
            u_i = mi * resid - 0.5 * g_ii * (mi * mi + 1.0 / rho[i])
            eta = min(max(logit_prior[k] + e_tau * u_i, -ETA_CLAMP), ETA_CLAMP)
            state.eta_iota[i] = eta
            pi_i = expfam.sigmoid(eta)
            pt[i] = pi_i
        if do_w:
            eta1 = e_tau * pi_i * resid
            eta2 = -0.5 * e_sig[k] - 0.5 * e_tau * pi_i * g_ii
            state.set_w(i, eta1, eta2)
        mu[i] = m[i] * pi_i


def prime_state(state: RvmState, design: DesignMatrix, y, prior: PriorConfig, psi_y=None, max_sweeps=100, delta=1e-4):
    """Set pi~ = 1/2, then sweep tau, sigma and w with iota and pi held fixed.

    Returns the number of warm-up sweeps run.
    """
    state.eta_iota[:] = 0.0
    state.pi_tilde[:] = 0.5
    for n in range(1, max_sweeps + 1):
        before = state.natural_vector()
        sweep(state, design, y, prior, frozen=("pi", "iota"), psi_y=psi_y)
        if _rel_change(state.natural_vector(), before) < delta:
            break
    return n


@dataclass
class FitResult:
    pce: SparsePce
    state: RvmState
    prior: PriorConfig
    config: FitConfig
    converged: bool
    sweeps: int

    @property
    def elbo_trace(self) -> list:
        return self.state.elbo_trace

    def to_dict(self) -> dict:
        st = self.state
        return {
            "source": "rvm",
            "basis": self.pce.spec.to_dict(),
            "coefficients": [
                {"m": float(m), "rho": float(r), "pi_tilde": float(p)}
                for m, r, p in zip(st.m, st.rho, st.pi_tilde)
            ],
            "active": [int(i) for i in st.active],
            "prior": asdict(self.prior),
            "config": {**asdict(self.config), "frozen": list(self.config.frozen)},
            "elbo_trace": [float(v) for v in st.elbo_trace],
            "converged": bool(self.converged),
            "sweeps": int(self.sweeps),
            "noise_precision": {"shape": float(st.eta_tau[0] + 1.0), "rate": float(-st.eta_tau[1])},
            "metadata": self.pce.metadata,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, **kw)


def _make_pce(spec: BasisSpec, state: RvmState, meta: dict) -> SparsePce:
    return SparsePce(
        spec=spec,
        coeff_mean=state.m.copy(),
        coeff_var=1.0 / state.rho,
        success_prob=state.pi_tilde.copy(),
        source="rvm",
        metadata=meta,
    )


def fit_design(
    design: DesignMatrix,
    y,
    prior: PriorConfig | None = None,
    config: FitConfig | None = None,
    state: RvmState | None = None,
) -> FitResult:
    """Run the coordinate-ascent algorithm on a prebuilt design matrix.

    Sweeps repeat until the relative change of all natural parameters drops
    below ``config.delta`` or ``config.max_sweeps`` is reached.  Once the
    success probabilities move by less than ``config.delta_pi`` in a sweep,
    terms with probability <= ``eps_pi`` leave the active set for good.
    """
    prior = prior or PriorConfig()
    config = config or FitConfig()
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != design.values.shape[0] or y.size < 1:
        raise ValueError("y must be a non-empty vector matching the design rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    psi_y = design.values.T @ y
    if state is None:
        state = init_state(prior, design.values.shape[1])
        if config.warm_start:
            prime_state(state, design, y, prior, psi_y, config.warm_start, config.delta)
    _check_dims(state, design, y)

    state.elbo_trace.append(elbo(state, design, y, prior))
    converged = False
    n_sweeps = 0
    for n_sweeps in range(1, config.max_sweeps + 1):
        before = state.natural_vector()
        pi_before = state.pi_tilde.copy()
        sweep(state, design, y, prior, config.frozen, psi_y)
        after = state.natural_vector()
        if not np.all(np.isfinite(after)):
            raise NumericalError(f"non-finite natural parameter in sweep {n_sweeps}")
        value = elbo(state, design, y, prior)
        if not math.isfinite(value):
            raise NumericalError(f"non-finite ELBO in sweep {n_sweeps}")
        state.elbo_trace.append(value)

        if config.prune and _rel_change(state.pi_tilde, pi_before) < config.delta_pi:
            keep = state.pi_tilde[state.active] > config.eps_pi
            if not keep.all():
                log.debug("sweep %d: pruning %d terms", n_sweeps, int((~keep).sum()))
                state.active = state.active[keep]
        if _rel_change(after, before) < config.delta:
            converged = True
            break

    if not converged:
        log.warning("no convergence after %d sweeps", n_sweeps)
    meta = {"n_data": int(len(y)), "converged": converged, "sweeps": n_sweeps}
    return FitResult(
        pce=_make_pce(design.spec, state, meta),
        state=state,
        prior=prior,
        config=config,
        converged=converged,
        sweeps=n_sweeps,
    )


def fit(Xi, y, spec: BasisSpec, prior: PriorConfig | None = None, config: FitConfig | None = None) -> FitResult:
    """Fit a sparse PCE on basis ``spec`` to inputs ``Xi`` and outputs ``y``."""
    return fit_design(evaluate_design(spec, Xi), y, prior, config)


def result_from_dict(d: dict) -> FitResult:
    """Rebuild a :class:`FitResult` from :meth:`FitResult.to_dict` output.

    Only the moment parameters are stored, so natural parameters of the
    hyperparameter blocks are not restored; the expansion is exact.
    """
    spec = BasisSpec.from_dict(d["basis"])
    m = np.array([c["m"] for c in d["coefficients"]])
    rho = np.array([c["rho"] for c in d["coefficients"]])
    p = np.array([c["pi_tilde"] for c in d["coefficients"]])
    prior = PriorConfig(**d["prior"])
    cfg = dict(d["config"])
    cfg["frozen"] = tuple(cfg.get("frozen", ()))
    config = FitConfig(**cfg)
    state = init_state(prior, spec.size)
    state.m, state.rho, state.pi_tilde = m, rho, p
    state.eta_w = np.stack([m * rho, -0.5 * rho], axis=1)
    with np.errstate(divide="ignore"):
        state.eta_iota = np.clip(np.log(p) - np.log1p(-p), -ETA_CLAMP, ETA_CLAMP)
    state.active = np.asarray(d["active"], dtype=np.int64)
    state.elbo_trace = list(d["elbo_trace"])
    ns = d.get("noise_precision")
    if ns:
        state.eta_tau = np.array([ns["shape"] - 1.0, -ns["rate"]])
    meta = d.get("metadata", {})
    return FitResult(
        pce=SparsePce(spec, m, 1.0 / rho, p, "rvm", meta),
        state=state,
        prior=prior,
        config=config,
        converged=bool(d["converged"]),
        sweeps=int(d["sweeps"]),
    )
