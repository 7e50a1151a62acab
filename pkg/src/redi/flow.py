"""Probability-path machinery: conditional paths, bridges, transitions.

The conditional path interpolates a pair (x0, x1): at time t each state
carries weight (1 - alpha_t) on the source side and alpha_t on the target
side. Two readings of that statement are supported. The default
``coordinatewise`` mode lets every coordinate switch from x0^i to x1^i
independently (a single absorbing switch per coordinate whose time U
satisfies P(U <= t) = alpha_t); ``holistic`` mode switches the whole state
at once. Both agree at (t, s) = (0, 1), which is where the quantitative
demo numbers live.

Given a coupling, the state at time t determines a Bayes posterior over
(x0, x1) pairs. The exact transition law to a later time s mixes each
entry's bridge under that posterior; the factorized transition keeps only
the per-coordinate marginals of the exact law, which is the approximation
a learned per-token denoiser realizes, and the multi-step sampler applies
it at every grid step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import backend
from .core import (PRUNE_EPS, SUPPORT_CAP_DEFAULT, AlphaSchedule,
                   PairCoupling, State, StateSpace, TimeGrid, alpha_at,
                   source_groups)
from .errors import (CapError, DomainError, InconsistentBridgeError,
                     OffPathError, ValidationError)
from .rng import RngSpec, uniform_block


class PathMode(str, Enum):
    COORDINATEWISE = "coordinatewise"
    HOLISTIC = "holistic"

    @classmethod
    def parse(cls, text: str) -> "PathMode":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValidationError(
                f"unknown path mode {text!r}; expected coordinatewise or "
                f"holistic") from None


DEFAULT_MODE = PathMode.COORDINATEWISE


def _coord_weight(a: int, b0: int, b1: int, alpha: float) -> float:
    if a == b0:
        if a == b1:
            return 1.0
        return 1.0 - alpha
    if a == b1:
        return alpha
    return 0.0


def path_weight(space: StateSpace, x_t, x0, x1, t: float,
                schedule: AlphaSchedule,
                mode: PathMode = DEFAULT_MODE) -> float:
    """Probability of observing x_t at time t on the (x0, x1) path."""
    x_t = space.validate_state(x_t)
    x0 = space.validate_state(x0)
    x1 = space.validate_state(x1)
    alpha = alpha_at(schedule, t)
    if mode is PathMode.HOLISTIC:
        if x_t == x0:
            return 1.0 if x_t == x1 else 1.0 - alpha
        return alpha if x_t == x1 else 0.0
    weight = 1.0
    for a, b0, b1 in zip(x_t, x0, x1):
        weight *= _coord_weight(a, b0, b1, alpha)
        if weight == 0.0:
            return 0.0
    return weight


def jump_prob(schedule: AlphaSchedule, t: float, s: float) -> float:
    """Chance that a still-unswitched coordinate switches during (t, s]."""
    if not 0.0 <= t < s <= 1.0:
        raise DomainError(f"need 0 <= t < s <= 1, got t={t!r}, s={s!r}")
    from ._pykernels import jump_prob as _jp
    return _jp(alpha_at(schedule, t), alpha_at(schedule, s))


def bridge(space: StateSpace, x0, x1, x_t, t: float, s: float,
           schedule: AlphaSchedule, mode: PathMode = DEFAULT_MODE):
    """Conditional law of x_s given the path through x_t.

    Coordinatewise mode returns one categorical per coordinate (token ->
    probability); holistic mode returns a distribution over whole states.
    """
    x0 = space.validate_state(x0)
    x1 = space.validate_state(x1)
    x_t = space.validate_state(x_t)
    if path_weight(space, x_t, x0, x1, t, schedule, mode) == 0.0:
        raise InconsistentBridgeError(
            f"state {x_t} is off the ({x0}, {x1}) path at t={t}")
    q = jump_prob(schedule, t, s)
    if mode is PathMode.HOLISTIC:
        if x_t == x1:
            return {x1: 1.0}
        if q >= 1.0:
            return {x1: 1.0}
        if q <= 0.0:
            return {x_t: 1.0}
        return {x1: q, x0: 1.0 - q}
    laws = []
    for a, b0, b1 in zip(x_t, x0, x1):
        if b0 == b1 or a == b1:
            laws.append({b1: 1.0})
        elif q >= 1.0:
            laws.append({b1: 1.0})
        elif q <= 0.0:
            laws.append({b0: 1.0})
        else:
            laws.append({b1: q, b0: 1.0 - q})
    return laws


@dataclass(frozen=True)
class PosteriorTable:
    """Bayes posterior over coupling entries given a state at time t."""

    space: StateSpace
    x_t: State
    t: float
    entries: tuple[tuple[State, State, float], ...]

    def total(self) -> float:
        return math.fsum(w for _, _, w in self.entries)


def posterior(c: PairCoupling, x_t, t: float, schedule: AlphaSchedule,
              mode: PathMode = DEFAULT_MODE) -> PosteriorTable:
    """Posterior over (x0, x1) pairs given the state x_t at time t."""
    c = c.require_canonical()
    x_t = c.space.validate_state(x_t)
    alpha = alpha_at(schedule, t)
    y = np.array(x_t, dtype=np.int32)
    from . import _pykernels as pk
    if mode is PathMode.HOLISTIC:
        post = pk._posterior_holistic(y, c.x0, c.x1, c.w, alpha)
    else:
        post = pk._posterior_coordinatewise(y, c.x0, c.x1, c.w, alpha)
    z = float(np.cumsum(post)[-1])
    if z < pk.ZMIN:
        raise OffPathError(
            f"state {x_t} has zero path probability at t={t}")
    entries = []
    for e in np.flatnonzero(post > 0.0):
        entries.append((tuple(int(v) for v in c.x0[e]),
                        tuple(int(v) for v in c.x1[e]),
                        float(post[e] / z)))
    return PosteriorTable(c.space, x_t, t, tuple(entries))


def exact_transition(c: PairCoupling, x_t, t: float, s: float,
                     schedule: AlphaSchedule,
                     mode: PathMode = DEFAULT_MODE) -> dict[State, float]:
    """Exact law of x_s given x_t: posterior-weighted mixture of bridges."""
    table = posterior(c, x_t, t, schedule, mode)
    q = jump_prob(schedule, t, s)
    out: dict[State, float] = {}
    space = c.space
    for x0, x1, pe in table.entries:
        if mode is PathMode.HOLISTIC:
            if tuple(table.x_t) == x1:
                out[x1] = out.get(x1, 0.0) + pe
            else:
                out[x1] = out.get(x1, 0.0) + pe * q
                out[x0] = out.get(x0, 0.0) + pe * (1.0 - q)
        else:
            pieces: list[list[tuple[int, float]]] = []
            for a, b0, b1 in zip(table.x_t, x0, x1):
                if b0 == b1 or a == b1:
                    pieces.append([(b1, 1.0)])
                else:
                    pieces.append([(b1, q), (b0, 1.0 - q)])
            stack = [((), pe)]
            for piece in pieces:
                stack = [(toks + (tok,), pr * pw)
                         for toks, pr in stack
                         for tok, pw in piece if pw > 0.0]
            for toks, pr in stack:
                out[toks] = out.get(toks, 0.0) + pr
        if len(out) > space.dense_cap:
            raise CapError(
                f"transition support exceeded dense_cap={space.dense_cap}")
    return out


@dataclass(frozen=True)
class FactorizedKernel:
    """Per-coordinate categorical tables conditioned on a context state."""

    space: StateSpace
    tables: np.ndarray
    context: State | None = None

    def __post_init__(self):
        tab = np.ascontiguousarray(np.asarray(self.tables, dtype=np.float64))
        if tab.shape != (self.space.n, self.space.d):
            raise ValidationError(
                f"tables must be ({self.space.n}, {self.space.d})")
        if not np.all(np.isfinite(tab)) or np.any(tab < 0):
            raise ValidationError("tables must be finite and nonnegative")
        sums = [math.fsum(row.tolist()) for row in tab]
        if any(abs(s - 1.0) > 1e-12 for s in sums):
            raise ValidationError(f"per-dimension tables must sum to 1, "
                                  f"got {sums}")
        tab.setflags(write=False)
        object.__setattr__(self, "tables", tab)

    def prob_of(self, state) -> float:
        state = self.space.validate_state(state)
        p = 1.0
        for i, tok in enumerate(state):
            p *= float(self.tables[i, tok])
        return p

    def product_row(self) -> np.ndarray:
        """Dense product distribution over the whole space, index order."""
        self.space.require_dense("factorized product expansion")
        row = np.array([1.0])
        for i in range(self.space.n):
            row = np.multiply.outer(row, self.tables[i]).reshape(-1)
        return row


def factorized_transition(c: PairCoupling, x_t, t: float, s: float,
                          schedule: AlphaSchedule,
                          mode: PathMode = DEFAULT_MODE) -> FactorizedKernel:
    """Per-coordinate marginals of the exact transition out of x_t."""
    c = c.require_canonical()
    x_t = c.space.validate_state(x_t)
    a_t = alpha_at(schedule, t)
    a_s = alpha_at(schedule, s)
    if not t < s:
        raise DomainError(f"need t < s, got t={t!r}, s={s!r}")
    states = np.array([x_t], dtype=np.int32)
    _, tables, _ = backend.posterior_tables(
        states, c.x0, c.x1, c.w, a_t, a_s, c.space.d,
        mode is PathMode.HOLISTIC, False)
    # rounding guard: rows sum to 1 up to accumulation error; rescale so
    # the kernel type's 1e-12 invariant holds exactly
    tab = tables[0]
    tab = tab / np.array([math.fsum(r.tolist()) for r in tab])[:, None]
    return FactorizedKernel(c.space, tab, context=x_t)


def apply_temperature(kernel: FactorizedKernel,
                      tau: float) -> FactorizedKernel:
    """Reweight each per-coordinate table as p^(1/tau), renormalized."""
    if not tau > 0 or not math.isfinite(tau):
        raise DomainError(f"temperature must be positive, got {tau!r}")
    if tau == 1.0:
        return kernel
    itau = 1.0 / tau
    out = np.empty_like(kernel.tables)
    for i in range(kernel.space.n):
        row = kernel.tables[i]
        scaled = row / row.max()
        powed = np.array([math.pow(v, itau) for v in scaled])
        out[i] = powed / math.fsum(powed.tolist())
    return FactorizedKernel(kernel.space, out, context=kernel.context)


def sample_step(c: PairCoupling, x_t, t: float, s: float,
                schedule: AlphaSchedule, mode: PathMode = DEFAULT_MODE,
                tau: float = 1.0, rng: RngSpec = RngSpec(0)) -> State:
    """Draw one successor of x_t from the temperature-adjusted factorized
    kernel. Deterministic under a fixed RngSpec."""
    c = c.require_canonical()
    x_t = c.space.validate_state(x_t)
    if not tau > 0 or not math.isfinite(tau):
        raise DomainError(f"temperature must be positive, got {tau!r}")
    if not t < s:
        raise DomainError(f"need t < s, got t={t!r}, s={s!r}")
    u = uniform_block(rng, (1, c.space.n))
    out = backend.step_states(
        np.array([x_t], dtype=np.int32), c.x0, c.x1, c.w,
        alpha_at(schedule, t), alpha_at(schedule, s), c.space.d, tau, u,
        False, mode is PathMode.HOLISTIC)
    return tuple(int(v) for v in out[0])


def sample_trajectories(c: PairCoupling, grid: TimeGrid, sources: np.ndarray,
                        schedule: AlphaSchedule,
                        mode: PathMode = DEFAULT_MODE, tau: float = 1.0,
                        rng: RngSpec = RngSpec(0),
                        return_path: bool = False) -> np.ndarray:
    """Run the factorized multi-step sampler on a batch of source states.

    Uniforms for all steps come from one derived block of shape (M, P, N),
    so results do not depend on how the batch might be split across
    workers. States that drift off every entry's path mid-run fall back to
    per-coordinate posteriors rather than aborting the batch. Returns the
    (P, N) endpoint batch, or the (M+1, P, N) full paths with
    ``return_path``.
    """
    c = c.require_canonical()
    if not tau > 0 or not math.isfinite(tau):
        raise DomainError(f"temperature must be positive, got {tau!r}")
    states = np.ascontiguousarray(np.asarray(sources, dtype=np.int32))
    if states.ndim != 2 or states.shape[1] != c.space.n:
        raise ValidationError("sources must be a (P, n) token batch")
    p_count = states.shape[0]
    m_steps = grid.steps
    uniforms = uniform_block(rng.derived("trajectories"),
                             (m_steps, p_count, c.space.n))
    holistic = mode is PathMode.HOLISTIC
    path = [states.copy()] if return_path else None
    for m, (t, s) in enumerate(grid.pairs()):
        states = backend.step_states(
            states, c.x0, c.x1, c.w, alpha_at(schedule, t),
            alpha_at(schedule, s), c.space.d, tau, uniforms[m], True,
            holistic)
        if return_path:
            path.append(states.copy())
    return np.stack(path) if return_path else states


def sample_trajectory(c: PairCoupling, grid: TimeGrid, x0,
                      schedule: AlphaSchedule,
                      mode: PathMode = DEFAULT_MODE, tau: float = 1.0,
                      rng: RngSpec = RngSpec(0)) -> State:
    """Transport a single source state to t=1 with the multi-step sampler."""
    c = c.require_canonical()
    x0 = c.space.validate_state(x0)
    out = sample_trajectories(c, grid, np.array([x0], dtype=np.int32),
                              schedule, mode, tau, rng)
    return tuple(int(v) for v in out[0])


def sample_sources(c: PairCoupling, count: int,
                   rng: RngSpec = RngSpec(0)) -> np.ndarray:
    """Draw source states from the coupling's x0 marginal, with replacement."""
    c = c.require_canonical()
    sources, offsets = source_groups(c)
    masses = np.array([math.fsum(c.w[offsets[r]:offsets[r + 1]].tolist())
                       for r in range(len(sources))])
    cdf = np.cumsum(masses / math.fsum(masses.tolist()))
    u = uniform_block(rng.derived("sources"), (count,))
    idx = np.minimum(np.searchsorted(cdf, u, side="right"),
                     len(sources) - 1)
    return np.array(sources, dtype=np.int32)[idx]


def sample_path_states(c: PairCoupling, t: float, count: int,
                       schedule: AlphaSchedule,
                       mode: PathMode = DEFAULT_MODE,
                       rng: RngSpec = RngSpec(0),
                       label: str = "path_states") -> np.ndarray:
    """Draw states from the time-t path marginal: pick an entry by weight,
    then place each coordinate (or the whole state) on its path."""
    c = c.require_canonical()
    alpha = alpha_at(schedule, t)
    n = c.space.n
    block = uniform_block(rng.derived(label), (count, n + 1))
    wcdf = np.cumsum(c.w / math.fsum(c.w.tolist()))
    idx = np.minimum(np.searchsorted(wcdf, block[:, 0], side="right"),
                     c.n_entries - 1)
    src = c.x0[idx]
    tgt = c.x1[idx]
    if mode is PathMode.HOLISTIC:
        switched = block[:, 1] < alpha
        return np.where(switched[:, None], tgt, src).astype(np.int32)
    return np.where(block[:, 1:] < alpha, tgt, src).astype(np.int32)


def path_support(c: PairCoupling, t: float, schedule: AlphaSchedule,
                 mode: PathMode = DEFAULT_MODE,
                 cap: int = SUPPORT_CAP_DEFAULT) -> list[State]:
    """All states with positive probability at time t, sorted.

    Coordinatewise support at interior times is the union of each entry's
    coordinate cube prod_i {x0^i, x1^i}; holistic support is just the
    endpoints. Refuses to enumerate more than ``cap`` states.
    """
    c = c.require_canonical()
    alpha = alpha_at(schedule, t)
    seen: set[State] = set()
    if alpha <= 0.0:
        seen.update(tuple(int(v) for v in row) for row in c.x0)
        return sorted(seen)
    if alpha >= 1.0:
        seen.update(tuple(int(v) for v in row) for row in c.x1)
        return sorted(seen)
    if mode is PathMode.HOLISTIC:
        seen.update(tuple(int(v) for v in row) for row in c.x0)
        seen.update(tuple(int(v) for v in row) for row in c.x1)
        return sorted(seen)
    for e in range(c.n_entries):
        choices = [sorted({int(c.x0[e, i]), int(c.x1[e, i])})
                   for i in range(c.space.n)]
        size = math.prod(len(ch) for ch in choices)
        if len(seen) + size > cap:
            raise CapError(
                f"path support exceeds the enumeration cap of {cap} states; "
                f"use sampled estimators instead")
        stack: list[tuple[int, ...]] = [()]
        for ch in choices:
            stack = [toks + (v,) for toks in stack for v in ch]
        seen.update(stack)
    return sorted(seen)


@dataclass(frozen=True)
class DenseKernel:
    """Dense one-step law x0 -> x1 for each source with positive mass."""

    space: StateSpace
    sources: tuple[State, ...]
    rows: np.ndarray

    def __post_init__(self):
        self.space.require_dense("dense kernel")
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        if rows.shape != (len(self.sources), self.space.num_states):
            raise ValidationError("rows shape mismatch")
        for r, row in enumerate(rows):
            total = math.fsum(row.tolist())
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(
                    f"kernel row for {self.sources[r]} sums to {total!r}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def row_of(self, x0) -> np.ndarray:
        x0 = self.space.validate_state(x0)
        try:
            r = self.sources.index(x0)
        except ValueError:
            raise OffPathError(f"no kernel row for source {x0}") from None
        return self.rows[r]

    def row_sparse(self, x0, prune: float = PRUNE_EPS) -> dict[State, float]:
        row = self.row_of(x0)
        return {self.space.state_at(int(i)): float(row[i])
                for i in np.flatnonzero(row >= prune)}


def _tempered(tables: np.ndarray, tau: float) -> np.ndarray:
    """Temperature for (N, D) tables outside the fused sampler."""
    if tau == 1.0:
        return tables
    itau = 1.0 / tau
    out = np.empty_like(tables)
    for i in range(tables.shape[0]):
        scaled = tables[i] / tables[i].max()
        powed = np.array([math.pow(v, itau) for v in scaled])
        out[i] = powed / math.fsum(powed.tolist())
    return out


def exact_multistep_conditional(c: PairCoupling, grid: TimeGrid,
                                schedule: AlphaSchedule,
                                mode: PathMode = DEFAULT_MODE,
                                tau: float = 1.0) -> DenseKernel:
    """Exact law of the factorized multi-step sampler, per source state.

    Composes the per-step factorized kernels over every reachable
    intermediate state, so it is exactly what ``sample_trajectory`` draws
    from. Dense in the full state space; guarded by dense_cap.
    """
    c = c.require_canonical()
    space = c.space
    space.require_dense("multi-step composition")
    if not tau > 0 or not math.isfinite(tau):
        raise DomainError(f"temperature must be positive, got {tau!r}")
    digit = space.digit_matrix()
    holistic = mode is PathMode.HOLISTIC
    sources, _ = source_groups(c)
    rows = np.zeros((len(sources), space.num_states))
    for r, x0 in enumerate(sources):
        vec = np.zeros(space.num_states)
        vec[space.index_of(x0)] = 1.0
        for t, s in grid.pairs():
            active = np.flatnonzero(vec > 0.0)
            _, tables, _ = backend.posterior_tables(
                digit[active], c.x0, c.x1, c.w, alpha_at(schedule, t),
                alpha_at(schedule, s), space.d, holistic, True)
            new = np.zeros(space.num_states)
            for k, st in enumerate(active):
                tab = _tempered(tables[k], tau)
                row = np.array([1.0])
                for i in range(space.n):
                    row = np.multiply.outer(row, tab[i]).reshape(-1)
                new += vec[st] * row
            vec = new
        rows[r] = vec
    return DenseKernel(space, tuple(sources), rows)


def exact_multistep_joint(c: PairCoupling, grid: TimeGrid,
                          schedule: AlphaSchedule,
                          mode: PathMode = DEFAULT_MODE) -> DenseKernel:
    """Compose the exact (unfactorized) transitions over the grid.

    Analysis helper: the law of the true path process simulated step by
    step with full joint transitions instead of per-coordinate ones.
    """
    c = c.require_canonical()
    space = c.space
    space.require_dense("multi-step composition")
    sources, _ = source_groups(c)
    rows = np.zeros((len(sources), space.num_states))
    for r, x0 in enumerate(sources):
        current: dict[State, float] = {x0: 1.0}
        for t, s in grid.pairs():
            new: dict[State, float] = {}
            for y in sorted(current):
                mass = current[y]
                for v, p in exact_transition(c, y, t, s, schedule,
                                             mode).items():
                    new[v] = new.get(v, 0.0) + mass * p
            current = new
        for v, p in current.items():
            rows[r, space.index_of(v)] = p
    return DenseKernel(space, tuple(sources), rows)
