"""Factorization-error measurement and generation-quality metrics.

The central quantity is the conditional total correlation of a coupling's
transition law: the expected KL divergence, over states at time t, between
the exact transition to time s and the product of its per-coordinate
marginals. It is zero exactly when the transition factorizes, which is
what a per-token model can represent losslessly. Reported in nats.

Two estimators are provided: an exact enumeration over the time-t support,
and a plug-in Monte-Carlo version that draws a batch of states, samples
each one's exact transition a few times, and compares raw empirical
frequencies (no smoothing, so small sample counts bias it; acceptance
bands are calibrated rather than corrected).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import backend
from .core import (SUPPORT_CAP_DEFAULT, AlphaSchedule, DenseDistribution,
                   PairCoupling, State, TimeGrid, alpha_at, source_groups,
                   states_to_indices)
from .errors import DivergenceError, DomainError, ValidationError
from .flow import (DEFAULT_MODE, PathMode, exact_multistep_conditional,
                   exact_transition, path_support, sample_path_states,
                   sample_sources, sample_trajectories)
from .rng import RngSpec, uniform_block

METRICS_MAGIC = "#redi metrics v1"
METRICS_HEADER = ("kind,t,s,value_nats,method,roots,samples_per_root,"
                  "seed,steps,tv,kl,coverage")


@dataclass(frozen=True)
class TCReport:
    """One total-correlation measurement."""

    t: float
    s: float
    value_nats: float
    method: str
    roots: int | None = None
    samples_per_root: int | None = None
    seed: int | None = None
    truncated: bool = False

    def csv_row(self) -> str:
        cells = ["tc", repr(self.t), repr(self.s), repr(self.value_nats),
                 self.method,
                 "" if self.roots is None else str(self.roots),
                 "" if self.samples_per_root is None
                 else str(self.samples_per_root),
                 "" if self.seed is None else str(self.seed),
                 "", "", "", ""]
        return ",".join(cells)


@dataclass(frozen=True)
class EvalReport:
    """Generated-law quality against a target distribution."""

    tv_to_target: float
    kl_target_generated: float
    support_coverage: float
    steps: int

    def csv_row(self) -> str:
        cells = ["eval", "", "", "", "", "", "", "",
                 str(self.steps), repr(self.tv_to_target),
                 repr(self.kl_target_generated),
                 repr(self.support_coverage)]
        return ",".join(cells)


def metrics_csv(reports: Sequence) -> str:
    lines = [METRICS_MAGIC, METRICS_HEADER]
    lines.extend(r.csv_row() for r in reports)
    return "\n".join(lines) + "\n"


def _as_items(p, num_states):
    if isinstance(p, Mapping):
        return list(p.items()), num_states
    arr = np.asarray(p, dtype=np.float64)
    return list(enumerate(arr.tolist())), len(arr)


def kl(p, q, smoothing: float | None = None,
       num_states: int | None = None) -> float:
    """KL(p || q) in nats over the union support.

    Accepts dense arrays or sparse state->probability mappings (both
    arguments the same kind). With ``smoothing``, q is mixed with the
    uniform distribution as (1-eps) q + eps/num_states, which requires the
    state count (implied by dense arrays). Without smoothing, p putting
    mass where q has none is an absolute-continuity violation.
    """
    p_items, n_p = _as_items(p, num_states)
    if isinstance(q, Mapping):
        q_get = q.get
        n_q = num_states
    else:
        q_arr = np.asarray(q, dtype=np.float64)
        q_get = lambda k, d=0.0: float(q_arr[k])
        n_q = len(q_arr)
    states = n_q if n_q is not None else n_p
    if smoothing is not None:
        if not 0.0 < smoothing < 1.0:
            raise ValidationError(f"smoothing must be in (0, 1), "
                                  f"got {smoothing!r}")
        if states is None:
            raise ValidationError(
                "smoothing over sparse distributions needs num_states")
    terms = []
    for state, pv in p_items:
        if pv <= 0.0:
            continue
        qv = q_get(state, 0.0)
        if smoothing is not None:
            qv = (1.0 - smoothing) * qv + smoothing / states
        if qv <= 0.0:
            raise DivergenceError(
                f"q has zero mass at {state} where p has {pv!r}; "
                f"pass a smoothing epsilon to compare anyway")
        terms.append(pv * (math.log(pv) - math.log(qv)))
    return math.fsum(terms)


def tv(p, q) -> float:
    """Total variation distance, 0.5 * sum |p - q|."""
    if isinstance(p, Mapping) or isinstance(q, Mapping):
        keys = set(p) | set(q)
        return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0))
                               for k in sorted(keys))
    p_arr = np.asarray(p, dtype=np.float64)
    q_arr = np.asarray(q, dtype=np.float64)
    return 0.5 * math.fsum(np.abs(p_arr - q_arr).tolist())


def conditional_tc_exact(c: PairCoupling, t: float, s: float,
                         schedule: AlphaSchedule,
                         mode: PathMode = DEFAULT_MODE,
                         support_cap: int = SUPPORT_CAP_DEFAULT) -> TCReport:
    """Exact conditional total correlation of the t -> s transition.

    Enumerates the time-t support, weights each state by its exact path
    probability, and sums KL(exact transition || product of marginals).
    The outer sum uses compensated summation, so the value is independent
    of enumeration order.
    """
    if not t < s:
        raise DomainError(f"need t < s, got t={t!r}, s={s!r}")
    c = c.require_canonical()
    space = c.space
    support = path_support(c, t, schedule, mode, cap=support_cap)
    states = np.array(support, dtype=np.int32).reshape(len(support), space.n)
    a_t = alpha_at(schedule, t)
    a_s = alpha_at(schedule, s)
    holistic = mode is PathMode.HOLISTIC
    z, tables, _ = backend.posterior_tables(
        states, c.x0, c.x1, c.w, a_t, a_s, space.d, holistic, False)
    z_total = math.fsum(z.tolist())
    contribs = []
    for k, x_t in enumerate(support):
        exact = exact_transition(c, x_t, t, s, schedule, mode)
        tab = tables[k]
        terms = []
        for x_s, pv in exact.items():
            if pv <= 0.0:
                continue
            qv = 1.0
            for i, tok in enumerate(x_s):
                qv *= tab[i, tok]
            terms.append(pv * (math.log(pv) - math.log(qv)))
        contribs.append(float(z[k]) * math.fsum(terms))
    value = math.fsum(contribs) / z_total
    if value < 0.0 and value > -1e-12:
        value = 0.0
    return TCReport(t=t, s=s, value_nats=value, method="exact")


def conditional_tc_plugin(c: PairCoupling, t: float, s: float,
                          schedule: AlphaSchedule,
                          mode: PathMode = DEFAULT_MODE,
                          roots: int = 5000, samples_per_root: int = 10,
                          rng: RngSpec = RngSpec(0),
                          fixed_root: State | None = None) -> TCReport:
    """Plug-in Monte-Carlo total correlation from raw sample frequencies.

    Draws ``roots`` states from the time-t marginal (or repeats
    ``fixed_root``), samples each root's exact transition
    ``samples_per_root`` times, and averages the per-root plug-in KL
    between the empirical joint and the product of empirical marginals.
    Biased for small sample counts; deterministic under the rng spec.
    """
    if roots < 1:
        raise ValidationError(f"roots must be >= 1, got {roots}")
    if samples_per_root < 2:
        raise ValidationError(
            f"samples_per_root must be >= 2, got {samples_per_root}")
    if not t < s:
        raise DomainError(f"need t < s, got t={t!r}, s={s!r}")
    c = c.require_canonical()
    space = c.space
    a_t = alpha_at(schedule, t)
    a_s = alpha_at(schedule, s)
    holistic = mode is PathMode.HOLISTIC
    if fixed_root is None:
        root_states = sample_path_states(c, t, roots, schedule, mode, rng,
                                         label="plugin_roots")
    else:
        fixed = space.validate_state(fixed_root)
        root_states = np.tile(np.array(fixed, dtype=np.int32), (roots, 1))
    n = space.n
    per_root = []
    for r in range(roots):
        block = uniform_block(rng.derived("plugin_samples", r),
                              (samples_per_root, n + 1))
        samples = backend.sample_exact(
            root_states[r], c.x0, c.x1, c.w, a_t, a_s, space.d, holistic,
            block[:, 0], block[:, 1:])
        counts: dict[tuple, int] = {}
        for row in map(tuple, samples.tolist()):
            counts[row] = counts.get(row, 0) + 1
        margs = [np.bincount(samples[:, i], minlength=space.d)
                 / samples_per_root for i in range(n)]
        terms = []
        for toks, cnt in sorted(counts.items()):
            freq = cnt / samples_per_root
            prod = 1.0
            for i, tok in enumerate(toks):
                prod *= float(margs[i][tok])
            terms.append(freq * (math.log(freq) - math.log(prod)))
        per_root.append(math.fsum(terms))
    value = math.fsum(per_root) / roots
    return TCReport(t=t, s=s, value_nats=value, method="plugin",
                    roots=roots, samples_per_root=samples_per_root,
                    seed=rng.seed)


def generated_law(c: PairCoupling, grid: TimeGrid, schedule: AlphaSchedule,
                  mode: PathMode = DEFAULT_MODE, tau: float = 1.0,
                  rng: RngSpec = RngSpec(0), sampler: str = "exact",
                  n_samples: int = 100000) -> np.ndarray:
    """Dense law of X1 produced by the multi-step sampler from the source.

    ``sampler='exact'`` composes the factorized kernels and marginalizes
    over the source; ``'sampled'`` runs n_samples Monte-Carlo trajectories.
    """
    c = c.require_canonical()
    space = c.space
    space.require_dense("generated law")
    if sampler == "exact":
        kernel = exact_multistep_conditional(c, grid, schedule, mode, tau)
        sources, offsets = source_groups(c)
        gen = np.zeros(space.num_states)
        for r in range(len(sources)):
            mass = math.fsum(
                c.w[offsets[r]:offsets[r + 1]].tolist())
            gen += mass * kernel.rows[r]
        return gen
    if sampler == "sampled":
        if n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        src = sample_sources(c, n_samples, rng)
        ends = sample_trajectories(c, grid, src, schedule, mode, tau, rng)
        idx = states_to_indices(space, ends)
        return np.bincount(idx, minlength=space.num_states) / n_samples
    raise ValidationError(f"unknown sampler {sampler!r}; "
                          f"expected exact or sampled")


def eval_generation(c: PairCoupling, grid: TimeGrid,
                    target: DenseDistribution, schedule: AlphaSchedule,
                    mode: PathMode = DEFAULT_MODE, tau: float = 1.0,
                    rng: RngSpec = RngSpec(0), sampler: str = "exact",
                    n_samples: int = 100000,
                    smoothing: float = 1e-9) -> EvalReport:
    """Compare the sampler's X1 law against a target distribution."""
    gen = generated_law(c, grid, schedule, mode, tau, rng, sampler,
                        n_samples)
    tvv = tv(target.probs, gen)
    klv = kl(target.probs, gen, smoothing=smoothing)
    sup = target.probs > 0.0
    coverage = float(np.count_nonzero(gen[sup] > 0.0) / sup.sum())
    return EvalReport(tv_to_target=tvv, kl_target_generated=klv,
                      support_coverage=coverage, steps=grid.steps)
