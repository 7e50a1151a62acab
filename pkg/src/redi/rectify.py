"""Coupling rectification: replace a coupling by source x sampler law.

One rectification round keeps the source marginal and swaps the
conditional for the law the multi-step factorized sampler induces, either
computed exactly (dense composition) or estimated from sampled pairs.
Iterating the round drives the factorization error down; the iteration
records the total-correlation curve and flags any step where the curve
rises, emitting machine-readable counterexamples instead of hiding them.

Also houses the coupling builders used by the demos and test batteries:
independent products, the two-bit demo pair, masked-source interpolations,
and seeded random couplings.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import conditional_tc_exact, conditional_tc_plugin
from .core import (AlphaSchedule, DenseDistribution, PairCoupling, State,
                   StateSpace, TimeGrid, normalize_coupling, source_groups)
from .errors import CapError, ValidationError
from .flow import (DEFAULT_MODE, DenseKernel, FactorizedKernel, PathMode,
                   exact_multistep_conditional, factorized_transition,
                   sample_sources, sample_trajectories)
from .rng import RngSpec, generator, uniform_block

# a TC increase beyond this counts as a monotonicity violation
MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class RectifyConfig:
    """Settings for one rectification round."""

    grid: TimeGrid = field(default_factory=lambda: TimeGrid.uniform(16))
    schedule: AlphaSchedule = field(default_factory=AlphaSchedule.linear)
    mode: PathMode = DEFAULT_MODE
    tau: float = 1.0
    method: str = "exact"
    pairs: int | None = None
    rng: RngSpec = RngSpec(0)

    def __post_init__(self):
        if self.method not in ("exact", "sampled"):
            raise ValidationError(
                f"method must be exact or sampled, got {self.method!r}")
        if not self.tau > 0 or not math.isfinite(self.tau):
            raise ValidationError(f"tau must be positive, got {self.tau!r}")
        if self.method == "sampled":
            if self.pairs is None or self.pairs < 1:
                raise ValidationError("sampled rectification needs pairs >= 1")


def rectify_with_kernel(c: PairCoupling, kernel: DenseKernel) -> PairCoupling:
    """source marginal of c, conditionals replaced by the kernel's rows."""
    c = c.require_canonical()
    sources, offsets = source_groups(c)
    entries = []
    for r, x0 in enumerate(sources):
        mass = math.fsum(c.w[offsets[r]:offsets[r + 1]].tolist())
        row = kernel.row_of(x0)
        total = math.fsum(row.tolist())
        for i in np.flatnonzero(row > 0.0):
            entries.append((x0, c.space.state_at(int(i)),
                            mass * (float(row[i]) / total)))
    return normalize_coupling(PairCoupling.from_entries(c.space, entries))


def rectify_exact(c: PairCoupling, cfg: RectifyConfig) -> PairCoupling:
    """Exact rectification: compose the factorized sampler's law densely."""
    if cfg.method != "exact":
        raise ValidationError("config method is not exact")
    kernel = exact_multistep_conditional(c, cfg.grid, cfg.schedule, cfg.mode,
                                         cfg.tau)
    return rectify_with_kernel(c, kernel)


def rectify_sampled(c: PairCoupling, cfg: RectifyConfig) -> PairCoupling:
    """Sampled rectification: P source draws, one trajectory each."""
    if cfg.method != "sampled":
        raise ValidationError("config method is not sampled")
    c = c.require_canonical()
    src = sample_sources(c, cfg.pairs, cfg.rng)
    ends = sample_trajectories(c, cfg.grid, src, cfg.schedule, cfg.mode,
                               cfg.tau, cfg.rng)
    weight = 1.0 / cfg.pairs
    entries = [(tuple(int(v) for v in src[p]),
                tuple(int(v) for v in ends[p]), weight)
               for p in range(cfg.pairs)]
    return normalize_coupling(PairCoupling.from_entries(c.space, entries))


def rectify(c: PairCoupling, cfg: RectifyConfig) -> PairCoupling:
    if cfg.method == "exact":
        return rectify_exact(c, cfg)
    return rectify_sampled(c, cfg)


@dataclass(frozen=True)
class RediRun:
    """A rectification run: couplings, TC curve, configs, violations."""

    couplings: tuple[PairCoupling, ...]
    tc_curve: tuple[float, ...]
    tc_methods: tuple[str, ...]
    configs: tuple[RectifyConfig, ...]
    tc_at: tuple[float, float]
    violations: tuple[dict, ...]

    @property
    def iterations(self) -> int:
        return len(self.couplings) - 1


def _measure_tc(c: PairCoupling, t: float, s: float, cfg: RectifyConfig,
                iteration: int) -> tuple[float, str]:
    try:
        report = conditional_tc_exact(c, t, s, cfg.schedule, cfg.mode)
        return report.value_nats, "exact"
    except CapError:
        report = conditional_tc_plugin(
            c, t, s, cfg.schedule, cfg.mode,
            rng=cfg.rng.derived("tc", iteration))
        return report.value_nats, "plugin"


def redi_iterate(c0: PairCoupling, iterations: int,
                 cfgs: RectifyConfig | Sequence[RectifyConfig],
                 tc_at: tuple[float, float] = (0.0, 1.0)) -> RediRun:
    """Apply rectification ``iterations`` times, tracking the TC curve.

    ``cfgs`` is one config reused every round or a sequence of per-round
    configs. The curve includes iteration 0. Any step whose TC rises by
    more than MONOTONE_TOL is recorded as a violation dict; violations are
    data, not errors, and the run completes regardless.
    """
    if iterations < 1:
        raise ValidationError(f"iterations must be >= 1, got {iterations}")
    if isinstance(cfgs, RectifyConfig):
        cfgs = [cfgs] * iterations
    else:
        cfgs = list(cfgs)
        if len(cfgs) != iterations:
            raise ValidationError(
                f"got {len(cfgs)} configs for {iterations} iterations")
    t, s = tc_at
    current = c0.require_canonical()
    couplings = [current]
    value, method = _measure_tc(current, t, s, cfgs[0], 0)
    curve = [value]
    methods = [method]
    violations: list[dict] = []
    for k, cfg in enumerate(cfgs):
        current = rectify(current, cfg)
        couplings.append(current)
        value, method = _measure_tc(current, t, s, cfg, k + 1)
        curve.append(value)
        methods.append(method)
        delta = curve[k + 1] - curve[k]
        if delta > MONOTONE_TOL:
            violations.append({
                "iteration": k + 1,
                "tc_before": curve[k],
                "tc_after": curve[k + 1],
                "delta": delta,
                "steps": cfg.grid.steps,
                "method": cfg.method,
                "tau": cfg.tau,
                "schedule": str(cfg.schedule),
                "mode": cfg.mode.value,
            })
    return RediRun(tuple(couplings), tuple(curve), tuple(methods),
                   tuple(cfgs), (t, s), tuple(violations))


def write_counterexamples(path, records: Sequence[dict]) -> None:
    """Dump monotonicity counterexamples as deterministic JSON."""
    Path(path).write_text(
        json.dumps(list(records), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")


def save_run(run: RediRun, outdir, extra_manifest: dict | None = None) -> None:
    """Persist a run: pi_<k>.redi files, tc_curve.csv, manifest, and (when
    violations exist) counterexamples.json."""
    from .fileio import sha256_file, write_coupling, write_manifest
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for k, c in enumerate(run.couplings):
        write_coupling(outdir / f"pi_{k}.redi", c)
        artifacts.append(f"pi_{k}.redi")
    curve_lines = ["k,tc_nats,method"]
    curve_lines.extend(f"{k},{v!r},{m}" for k, (v, m)
                       in enumerate(zip(run.tc_curve, run.tc_methods)))
    (outdir / "tc_curve.csv").write_text("\n".join(curve_lines) + "\n",
                                         encoding="utf-8")
    artifacts.append("tc_curve.csv")
    if run.violations:
        write_counterexamples(outdir / "counterexamples.json",
                              run.violations)
        artifacts.append("counterexamples.json")
    manifest: dict = {} if extra_manifest is None else dict(extra_manifest)
    cfg = run.configs[0]
    manifest.update({
        "iterations": run.iterations,
        "tc_at": f"{run.tc_at[0]!r},{run.tc_at[1]!r}",
        "tc_curve": ";".join(repr(v) for v in run.tc_curve),
        "tc_methods": ";".join(run.tc_methods),
        "steps": ";".join(str(c.grid.steps) for c in run.configs),
        "schedule": ";".join(str(c.schedule) for c in run.configs),
        "tau": ";".join(repr(c.tau) for c in run.configs),
        "method": ";".join(c.method for c in run.configs),
        "pairs": ";".join("" if c.pairs is None else str(c.pairs)
                          for c in run.configs),
        "seed": ";".join(str(c.rng.seed) for c in run.configs),
        "mode": ";".join(c.mode.value for c in run.configs),
        "violations": len(run.violations),
    })
    for name in artifacts:
        manifest[f"output:{name}"] = sha256_file(outdir / name)
    write_manifest(outdir / "manifest.txt", manifest)


# ---------------------------------------------------------------------------
# one-step distillation model


@dataclass(frozen=True)
class FactorizedFamily:
    """One factorized kernel per source state: the one-step model."""

    space: StateSpace
    contexts: tuple[State, ...]
    kernels: tuple[FactorizedKernel, ...]
    source_masses: tuple[float, ...]

    def kernel_for(self, x0) -> FactorizedKernel:
        x0 = self.space.validate_state(x0)
        try:
            r = self.contexts.index(x0)
        except ValueError:
            raise ValidationError(f"no kernel for source {x0}") from None
        return self.kernels[r]

    def generated_law(self) -> np.ndarray:
        """Dense X1 law of one-step generation over the source marginal."""
        self.space.require_dense("one-step law")
        gen = np.zeros(self.space.num_states)
        for mass, kernel in zip(self.source_masses, self.kernels):
            gen += mass * kernel.product_row()
        return gen

    def sample(self, count: int, rng: RngSpec = RngSpec(0)) -> np.ndarray:
        """Draw count (source, one-step generation) end states."""
        if count < 1:
            raise ValidationError("count must be >= 1")
        src_states = np.array(self.contexts, dtype=np.int32)
        masses = np.array(self.source_masses)
        cdf = np.cumsum(masses / math.fsum(masses.tolist()))
        u_src = uniform_block(rng.derived("onestep_sources"), (count,))
        sid = np.minimum(np.searchsorted(cdf, u_src, side="right"),
                         len(self.contexts) - 1)
        tabs = np.stack([k.tables for k in self.kernels])
        cdfs = np.cumsum(tabs, axis=2)
        u_tok = uniform_block(rng.derived("onestep_tokens"),
                              (count, self.space.n))
        tok = (cdfs[sid] <= u_tok[:, :, None]).sum(axis=2)
        return np.minimum(tok, self.space.d - 1).astype(np.int32)


def one_step_model(c: PairCoupling) -> FactorizedFamily:
    """Best factorized one-step approximation of each source's conditional."""
    c = c.require_canonical()
    sources, offsets = source_groups(c)
    lin = AlphaSchedule.linear()
    kernels = []
    masses = []
    for r, x0 in enumerate(sources):
        kernels.append(factorized_transition(c, x0, 0.0, 1.0, lin,
                                             DEFAULT_MODE))
        masses.append(math.fsum(c.w[offsets[r]:offsets[r + 1]].tolist()))
    return FactorizedFamily(c.space, tuple(sources), tuple(kernels),
                            tuple(masses))


# ---------------------------------------------------------------------------
# builders


def build_independent(p0: DenseDistribution,
                      q1: DenseDistribution) -> PairCoupling:
    """Product coupling of two distributions on one space."""
    if p0.space != q1.space:
        raise ValidationError("source and target live on different spaces")
    entries = []
    for x0, wp in p0.to_sparse().items():
        for x1, wq in q1.to_sparse().items():
            entries.append((x0, x1, wp * wq))
    return normalize_coupling(PairCoupling.from_entries(p0.space, entries))


def build_two_bit_demo(which: str) -> PairCoupling:
    """The two-bit demo pair: same marginals, opposite factorization error.

    ``pi0`` is the independent coupling of a uniform two-bit source with a
    uniform {00, 11} target; its conditionals are two-point laws whose
    product approximation leaks mass onto 01/10. ``pi1`` is the frozen
    deterministic completion {00->00, 01->11, 10->00, 11->11}, which has
    the same marginals and factorizes exactly.
    """
    space = StateSpace(n=2, d=2)
    if which == "pi0":
        src = DenseDistribution.uniform(space)
        tgt = DenseDistribution.from_sparse(space, {(0, 0): 0.5,
                                                    (1, 1): 0.5})
        return build_independent(src, tgt)
    if which == "pi1":
        return normalize_coupling(PairCoupling.from_entries(space, [
            ((0, 0), (0, 0), 0.25),
            ((0, 1), (1, 1), 0.25),
            ((1, 0), (0, 0), 0.25),
            ((1, 1), (1, 1), 0.25),
        ]))
    raise ValidationError(f"unknown demo coupling {which!r}; "
                          f"expected pi0 or pi1")


def build_masked_source(space: StateSpace, r: float,
                        q1: DenseDistribution | None = None) -> PairCoupling:
    """Independent coupling whose source interpolates uniform -> all-mask.

    The source is (1 - r) * uniform + r * point mass at the all-mask
    state; r=0 is the uniform end, r=1 the pure masked-model source.
    """
    mask = space.require_mask()
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"r must be in [0, 1], got {r!r}")
    space.require_dense("masked source")
    if q1 is None:
        q1 = DenseDistribution.uniform(space)
    if q1.space != space:
        raise ValidationError("target lives on a different space")
    probs = np.full(space.num_states, (1.0 - r) / space.num_states)
    probs[space.index_of((mask,) * space.n)] += r
    return build_independent(DenseDistribution(space, probs), q1)


def build_random(space: StateSpace, support_size: int,
                 rng: RngSpec = RngSpec(0)) -> PairCoupling:
    """Seeded random coupling with ``support_size`` distinct pairs."""
    space.require_dense("random coupling")
    total_pairs = space.num_states ** 2
    if not 1 <= support_size <= total_pairs:
        raise ValidationError(
            f"support_size must be in [1, {total_pairs}], "
            f"got {support_size}")
    gen = generator(rng)
    pair_ids = gen.choice(total_pairs, size=support_size, replace=False)
    weights = gen.uniform(size=support_size)
    entries = []
    for pid, w in zip(pair_ids.tolist(), weights.tolist()):
        x0 = space.state_at(pid // space.num_states)
        x1 = space.state_at(pid % space.num_states)
        entries.append((x0, x1, w))
    return normalize_coupling(PairCoupling.from_entries(space, entries))
