"""Independent reference computations shared by the test modules."""

import numpy as np

from pcrvm import expfam, rvm
from pcrvm.basis import build_index_set, evaluate_design
from pcrvm.rng import SplitMix64

BLOCKS = ("tau", "sigma", "pi", "w", "iota")


def random_instance(seed, K=None, P=None, N=None):
    """Small random regression problem on a Hermite basis."""
    g = SplitMix64(seed)
    K = K or 1 + int(g.uniform() * 4)
    P = P if P is not None else 1 + int(g.uniform() * 3)
    N = N or 10 + int(g.uniform() * 41)
    spec = build_index_set(K, P)
    Xi = g.normal((N, K))
    design = evaluate_design(spec, Xi)
    coef = g.normal(spec.size) * (g.uniform(spec.size) < 0.4)
    y = design.values @ coef + 0.1 * g.normal(N)
    return design, y


def block_view(state, block, i=None):
    if block == "tau":
        return state.eta_tau
    if block == "sigma":
        return state.eta_sigma[i]
    if block == "pi":
        return state.eta_pi[i]
    if block == "w":
        return state.eta_w[i]
    return state.eta_iota[i : i + 1]


def set_block(state, block, i, value):
    """Write natural parameters of one block and refresh derived moments."""
    value = np.asarray(value, dtype=float)
    if block == "tau":
        state.eta_tau = value.copy()
    elif block == "sigma":
        state.eta_sigma[i] = value
    elif block == "pi":
        state.eta_pi[i] = value
    elif block == "w":
        state.eta_w[i] = value
        state.rho[i] = -2.0 * value[1]
        state.m[i] = value[0] / state.rho[i]
    else:
        state.eta_iota[i] = value[0]
        state.pi_tilde[i] = expfam.sigmoid(value[0])


def elbo_gradient(state, design, y, prior, block, i=None, rel_step=1e-5):
    """Central finite differences of the ELBO in one block's natural parameters."""
    base = np.array(block_view(state, block, i), dtype=float)
    grad = np.empty(base.size)
    for k in range(base.size):
        h = rel_step * (1.0 + abs(base[k]))
        vals = []
        for sign in (1, -1):
            s = state.copy()
            v = base.copy()
            v[k] += sign * h
            set_block(s, block, i, v)
            vals.append(rvm.elbo(s, design, y, prior))
        grad[k] = (vals[0] - vals[1]) / (2 * h)
    return grad


def literal_u(state, design, y, i):
    """u_i written exactly as the trace expression, with full matrices."""
    Psi, G = design.values, design.gram
    m, p, rho = state.m, state.pi_tilde, state.rho
    e = np.zeros_like(m)
    e[i] = 1.0
    em = e * m
    trace = np.trace(G @ (np.diag(e / rho) + np.diag((1 - 2 * p) * m * em)))
    return y @ Psi @ em - em @ G @ (p * m) - 0.5 * trace


def literal_v(state, design, y, i):
    Psi, G = design.values, design.gram
    m, p = state.m.copy(), state.pi_tilde
    m_minus = m.copy()
    m_minus[i] = 0.0
    psi = Psi[:, i]
    return np.array([p[i] * (y @ psi - psi @ Psi @ (p * m_minus)), -0.5 * p[i] * G[i, i]])


def converged_fit(seed, **kw):
    design, y = random_instance(seed, **kw)
    prior = rvm.PriorConfig()
    res = rvm.fit_design(design, y, prior, rvm.FitConfig(delta=1e-10, delta_pi=1e-10, max_sweeps=20_000))
    return design, y, prior, res
