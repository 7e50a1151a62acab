"""Slow independent oracles for the property suites.

Everything here is written the dumb way on purpose: dense enumeration,
explicit Bayes sums, per-state loops. The package under test must agree
with these within stated tolerances; none of the package's kernel code is
reused for the math (only its data containers are).
"""
import math

import numpy as np

from redi import AlphaSchedule, PairCoupling, StateSpace, alpha_at
from redi.flow import PathMode


def coord_weight(a_t: float, y_i: int, x0_i: int, x1_i: int) -> float:
    """One coordinate's path probability (1-a)delta_x0 + a delta_x1."""
    w = 0.0
    if y_i == x0_i:
        w += 1.0 - a_t
    if y_i == x1_i:
        w += a_t
    return w


def oracle_path_weight(y, x0, x1, a_t: float, mode: PathMode) -> float:
    if mode is PathMode.HOLISTIC:
        w = 0.0
        if tuple(y) == tuple(x0):
            w += 1.0 - a_t
        if tuple(y) == tuple(x1):
            w += a_t
        return w
    out = 1.0
    for yi, ai, bi in zip(y, x0, x1):
        out *= coord_weight(a_t, yi, ai, bi)
    return out


def oracle_posterior(c: PairCoupling, y, a_t: float,
                     mode: PathMode) -> tuple[float, list[float]]:
    """Normalizer and per-entry posterior weights at state y, time t."""
    raw = [float(w) * oracle_path_weight(y, x0, x1, a_t, mode)
           for x0, x1, w in c.entries()]
    z = math.fsum(raw)
    if z <= 0.0:
        return 0.0, raw
    return z, [v / z for v in raw]


def oracle_coord_bridge(a_t: float, a_s: float, y_i: int, x0_i: int,
                        x1_i: int, d: int) -> np.ndarray:
    """Dense one-coordinate bridge law from y_i at t to time s."""
    q = 1.0 if a_t >= 1.0 else (a_s - a_t) / (1.0 - a_t)
    q = min(max(q, 0.0), 1.0)
    row = np.zeros(d)
    if x0_i == x1_i:
        row[x0_i] = 1.0
        return row
    if y_i == x1_i:
        row[x1_i] = 1.0
        return row
    row[x1_i] += q
    row[y_i] += 1.0 - q
    return row


def oracle_exact_transition(c: PairCoupling, y, a_t: float, a_s: float,
                            mode: PathMode) -> np.ndarray:
    """Dense law of X_s given X_t = y: posterior-weighted bridge mixture."""
    space = c.space
    z, post = oracle_posterior(c, y, a_t, mode)
    if z <= 0.0:
        raise ValueError("oracle: off-path state")
    out = np.zeros(space.num_states)
    q = 1.0 if a_t >= 1.0 else (a_s - a_t) / (1.0 - a_t)
    q = min(max(q, 0.0), 1.0)
    for (x0, x1, _), pe in zip(c.entries(), post):
        if pe == 0.0:
            continue
        if mode is PathMode.HOLISTIC:
            if tuple(y) == tuple(x1):
                out[space.index_of(x1)] += pe
            else:
                out[space.index_of(x1)] += pe * q
                out[space.index_of(tuple(y))] += pe * (1.0 - q)
            continue
        block = np.ones(1)
        for yi, ai, bi in zip(y, x0, x1):
            row = oracle_coord_bridge(a_t, a_s, yi, ai, bi, space.d)
            block = (block[:, None] * row[None, :]).ravel()
        out += pe * block
    return out


def marginals_of_dense(space: StateSpace, vec: np.ndarray) -> np.ndarray:
    """Per-dimension marginals (n, d) of a dense law over states."""
    cube = vec.reshape((space.d,) * space.n)
    out = np.zeros((space.n, space.d))
    for i in range(space.n):
        axes = tuple(j for j in range(space.n) if j != i)
        out[i] = cube.sum(axis=axes)
    return out


def expand_product(tables: np.ndarray) -> np.ndarray:
    vec = tables[0]
    for row in tables[1:]:
        vec = (vec[:, None] * row[None, :]).ravel()
    return vec


def oracle_factorized_transition(c: PairCoupling, y, a_t: float, a_s: float,
                                 mode: PathMode) -> np.ndarray:
    """Factorized law = product of the exact transition's marginals."""
    return marginals_of_dense(
        c.space, oracle_exact_transition(c, y, a_t, a_s, mode))


def oracle_kl(p: np.ndarray, q: np.ndarray) -> float:
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0.0:
            total += pi * math.log(pi / qi)
    return total


def oracle_tv(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def oracle_tc(c: PairCoupling, t: float, s: float, schedule: AlphaSchedule,
              mode: PathMode) -> float:
    """TC by full enumeration of all d^n states at time t."""
    space = c.space
    a_t = alpha_at(schedule, t)
    a_s = alpha_at(schedule, s)
    weights = []
    kls = []
    for idx in range(space.num_states):
        y = space.state_at(idx)
        z, _ = oracle_posterior(c, y, a_t, mode)
        if z <= 0.0:
            continue
        exact = oracle_exact_transition(c, y, a_t, a_s, mode)
        product = expand_product(
            oracle_factorized_transition(c, y, a_t, a_s, mode))
        weights.append(z)
        kls.append(oracle_kl(exact, product))
    total = math.fsum(weights)
    return math.fsum(w * v for w, v in zip(weights, kls)) / total


def oracle_multistep_conditional(c: PairCoupling, times, schedule, mode,
                                 tau: float = 1.0) -> dict:
    """Dense multi-step factorized law per source state.

    Mirrors the sampler definition independently: at each grid step, each
    reachable state advances by the per-dimension product of its tempered
    factorized tables.
    """
    space = c.space
    out = {}
    sources = sorted({x0 for x0, _, _ in c.entries()})
    for src in sources:
        vec = np.zeros(space.num_states)
        vec[space.index_of(src)] = 1.0
        for t, s in zip(times, times[1:]):
            a_t = alpha_at(schedule, t)
            a_s = alpha_at(schedule, s)
            nxt = np.zeros(space.num_states)
            for idx in np.flatnonzero(vec > 0.0):
                y = space.state_at(int(idx))
                tables = oracle_factorized_transition(c, y, a_t, a_s, mode)
                if tau != 1.0:
                    powed = np.power(tables, 1.0 / tau)
                    tables = powed / powed.sum(axis=1, keepdims=True)
                nxt += vec[idx] * expand_product(tables)
            vec = nxt
        out[src] = vec
    return out
