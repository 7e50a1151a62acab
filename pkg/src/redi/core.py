"""Domain types shared by every other module.

States live in a finite product space: sequences of ``n`` tokens drawn from an
alphabet of size ``d``. A state is represented as a plain tuple of ints; the
``StateSpace`` owns validation and dense indexing (big-endian mixed radix, so
index order equals lexicographic token order). Couplings are sparse weighted
lists of (x0, x1) pairs stored as arrays; their canonical form (sorted,
merged, normalized) is what every downstream algorithm consumes and what the
file format serializes.

Numeric contracts used throughout:
  - weights are linear-space float64,
  - sparse results prune probabilities below ``PRUNE_EPS`` after
    normalization,
  - dense enumeration is allowed only up to ``space.dense_cap`` states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import (CapError, DomainError, EmptyCouplingError,
                     ValidationError, ZeroMassError)

State = tuple[int, ...]

PRUNE_EPS = 1e-15
DENSE_CAP_DEFAULT = 65536
SUPPORT_CAP_DEFAULT = 10 ** 6
#: a posterior normalizer below this is treated as exactly zero
MIN_NORMALIZER = 1e-300


def check_probability(value: float, what: str = "probability") -> float:
    if not (-1e-12 <= value <= 1.0 + 1e-12):
        raise ValidationError(f"{what} out of [0, 1]: {value!r}")
    return min(max(value, 0.0), 1.0)


@dataclass(frozen=True)
class StateSpace:
    """Product space of n-token sequences over an alphabet of size d."""

    n: int
    d: int
    mask_token: int | None = None
    dense_cap: int = field(default=DENSE_CAP_DEFAULT, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"sequence length must be >= 1, got {self.n}")
        if self.d < 2:
            raise ValidationError(f"alphabet size must be >= 2, got {self.d}")
        if self.mask_token is not None and not 0 <= self.mask_token < self.d:
            raise ValidationError(
                f"mask token {self.mask_token} outside alphabet [0, {self.d})")
        if self.dense_cap < 1:
            raise ValidationError("dense_cap must be positive")

    @property
    def num_states(self) -> int:
        return self.d ** self.n

    @property
    def is_dense(self) -> bool:
        return self.num_states <= self.dense_cap

    def require_dense(self, what: str = "operation") -> None:
        if not self.is_dense:
            raise CapError(
                f"{what} needs dense enumeration of {self.num_states} states, "
                f"above the cap of {self.dense_cap}; raise dense_cap or use a "
                f"sparse/sampled alternative")

    def require_mask(self) -> int:
        from .errors import ConfigurationError
        if self.mask_token is None:
            raise ConfigurationError("state space has no mask token")
        return self.mask_token

    def validate_state(self, state) -> State:
        state = tuple(int(t) for t in state)
        if len(state) != self.n:
            raise ValidationError(
                f"state {state} has length {len(state)}, expected {self.n}")
        for t in state:
            if not 0 <= t < self.d:
                raise ValidationError(f"token {t} outside alphabet [0, {self.d})")
        return state

    def index_of(self, state) -> int:
        idx = 0
        for t in state:
            idx = idx * self.d + int(t)
        return idx

    def state_at(self, index: int) -> State:
        toks = []
        for _ in range(self.n):
            toks.append(index % self.d)
            index //= self.d
        return tuple(reversed(toks))

    def all_states(self) -> Iterator[State]:
        self.require_dense("state enumeration")
        for i in range(self.num_states):
            yield self.state_at(i)

    def digit_matrix(self) -> np.ndarray:
        """(num_states, n) int32 token matrix in index (= lex) order."""
        self.require_dense("digit matrix")
        return _digit_matrix(self.n, self.d)

    def all_mask_state(self) -> State:
        m = self.require_mask()
        return (m,) * self.n


@lru_cache(maxsize=32)
def _digit_matrix(n: int, d: int) -> np.ndarray:
    size = d ** n
    out = np.empty((size, n), dtype=np.int32)
    idx = np.arange(size)
    for i in range(n - 1, -1, -1):
        out[:, i] = idx % d
        idx //= d
    out.setflags(write=False)
    return out


def states_to_indices(space: StateSpace, tokens: np.ndarray) -> np.ndarray:
    """Vectorized index_of for an (m, n) token array."""
    idx = np.zeros(len(tokens), dtype=np.int64)
    for i in range(space.n):
        idx = idx * space.d + tokens[:, i]
    return idx


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class DenseDistribution:
    """Probability vector over the full state space, in index order."""

    space: StateSpace
    probs: np.ndarray

    def __post_init__(self):
        self.space.require_dense("dense distribution")
        p = np.ascontiguousarray(np.asarray(self.probs, dtype=np.float64))
        if p.shape != (self.space.num_states,):
            raise ValidationError(
                f"expected {self.space.num_states} weights, got {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValidationError("weights must be finite and nonnegative")
        total = math.fsum(p.tolist())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"weights sum to {total!r}, expected 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, space: StateSpace) -> "DenseDistribution":
        space.require_dense("uniform distribution")
        m = space.num_states
        return cls(space, np.full(m, 1.0 / m))

    @classmethod
    def point_mass(cls, space: StateSpace, state) -> "DenseDistribution":
        state = space.validate_state(state)
        p = np.zeros(space.num_states)
        p[space.index_of(state)] = 1.0
        return cls(space, p)

    @classmethod
    def from_sparse(cls, space: StateSpace,
                    weights: Mapping[State, float]) -> "DenseDistribution":
        p = np.zeros(space.num_states)
        for state, w in weights.items():
            p[space.index_of(space.validate_state(state))] += w
        total = math.fsum(p.tolist())
        if total <= 0:
            raise ValidationError("sparse weights have zero total mass")
        if abs(total - 1.0) > 1e-9:
            p = p / total
        return cls(space, p)

    def to_sparse(self, prune: float = PRUNE_EPS) -> dict[State, float]:
        out = {}
        for i in np.flatnonzero(self.probs >= prune):
            out[self.space.state_at(int(i))] = float(self.probs[i])
        return out


def normalize_sparse(weights: Mapping[State, float],
                     prune: float = PRUNE_EPS) -> dict[State, float]:
    """Canonical sparse distribution: sorted keys, normalized, pruned."""
    total = math.fsum(weights.values())
    if total <= 0:
        raise ZeroMassError("distribution has zero total mass")
    out = {}
    for state in sorted(weights):
        w = weights[state]
        if w < 0:
            raise ValidationError(f"negative weight {w!r} at {state}")
        w = w / total if abs(total - 1.0) > 1e-9 else w
        if w >= prune:
            out[state] = w
    return out


# ---------------------------------------------------------------------------
# couplings


@dataclass(frozen=True)
class PairCoupling:
    """Sparse joint distribution over (x0, x1) pairs.

    ``x0`` and ``x1`` are (E, n) int32 token arrays, ``w`` the (E,) weight
    vector. Arrays are read-only. ``canonical`` marks the sorted, merged,
    normalized form produced by :func:`normalize_coupling`.
    """

    space: StateSpace
    x0: np.ndarray
    x1: np.ndarray
    w: np.ndarray
    canonical: bool = False

    def __post_init__(self):
        for name in ("x0", "x1"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name),
                                                  dtype=np.int32))
            if arr.ndim != 2 or arr.shape[1] != self.space.n:
                raise ValidationError(f"{name} must be (E, {self.space.n})")
            if arr.size and (arr.min() < 0 or arr.max() >= self.space.d):
                raise ValidationError(f"{name} contains out-of-alphabet tokens")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        w = np.ascontiguousarray(np.asarray(self.w, dtype=np.float64))
        if w.shape != (self.x0.shape[0],):
            raise ValidationError("weight vector length mismatch")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("weights must be finite and nonnegative")
        if self.x0.shape[0] != self.x1.shape[0]:
            raise ValidationError("x0/x1 entry count mismatch")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_entries(cls, space: StateSpace,
                     entries: Iterable[tuple]) -> "PairCoupling":
        rows0, rows1, ws = [], [], []
        for x0, x1, w in entries:
            rows0.append(space.validate_state(x0))
            rows1.append(space.validate_state(x1))
            ws.append(float(w))
        if not rows0:
            raise EmptyCouplingError("coupling has no entries")
        return cls(space,
                   np.array(rows0, dtype=np.int32).reshape(len(rows0), space.n),
                   np.array(rows1, dtype=np.int32).reshape(len(rows1), space.n),
                   np.array(ws, dtype=np.float64))

    @property
    def n_entries(self) -> int:
        return int(self.x0.shape[0])

    def entries(self) -> Iterator[tuple[State, State, float]]:
        for i in range(self.n_entries):
            yield (tuple(int(t) for t in self.x0[i]),
                   tuple(int(t) for t in self.x1[i]),
                   float(self.w[i]))

    def total_weight(self) -> float:
        return math.fsum(self.w.tolist())

    def require_canonical(self) -> "PairCoupling":
        return self if self.canonical else normalize_coupling(self)


def normalize_coupling(c: PairCoupling) -> PairCoupling:
    """Sort lexicographically by (x0, x1), merge duplicates, renormalize.

    Duplicate weights merge in ascending weight order so the canonical form
    is bit-identical under any permutation of the input entries. Weights
    below PRUNE_EPS are pruned after normalization. Rescaling is skipped
    when the total is already 1 within 1e-9, which makes the function
    idempotent and file round-trips exact.
    """
    if c.n_entries == 0:
        raise EmptyCouplingError("coupling has no entries")
    key = np.concatenate([c.x0, c.x1], axis=1)
    order = np.lexsort((c.w,) + tuple(key[:, j] for j in
                                      range(key.shape[1] - 1, -1, -1)))
    key = key[order]
    w = c.w[order]
    new_group = np.empty(len(w), dtype=bool)
    new_group[0] = True
    if len(w) > 1:
        new_group[1:] = np.any(key[1:] != key[:-1], axis=1)
    gid = np.cumsum(new_group) - 1
    merged = np.bincount(gid, weights=w)
    firsts = np.flatnonzero(new_group)
    x0 = c.x0[order][firsts]
    x1 = c.x1[order][firsts]
    total = math.fsum(merged.tolist())
    if total <= 0:
        raise EmptyCouplingError("coupling has zero total weight")
    if abs(total - 1.0) > 1e-9:
        merged = merged / total
    keep = merged >= PRUNE_EPS
    if not np.all(keep):
        x0, x1, merged = x0[keep], x1[keep], merged[keep]
    if len(merged) == 0:
        raise EmptyCouplingError("all weights pruned")
    return PairCoupling(c.space, x0, x1, merged, canonical=True)


def coupling_marginal(c: PairCoupling, which: str) -> dict[State, float]:
    """X0 ('source') or X1 ('target') marginal as a sparse distribution."""
    if which not in ("source", "target"):
        raise ValidationError(f"which must be 'source' or 'target', got {which!r}")
    c = c.require_canonical()
    tokens = c.x0 if which == "source" else c.x1
    out: dict[State, float] = {}
    for i in range(c.n_entries):
        s = tuple(int(t) for t in tokens[i])
        out[s] = out.get(s, 0.0) + float(c.w[i])
    return dict(sorted(out.items()))


def source_groups(c: PairCoupling) -> tuple[list[State], np.ndarray]:
    """Distinct source states and their entry slice offsets.

    Canonical order is x0-major, so each source owns a contiguous run of
    entries; returns (sources, offsets) with group r spanning
    offsets[r]:offsets[r+1].
    """
    c = c.require_canonical()
    breaks = [0]
    for i in range(1, c.n_entries):
        if not np.array_equal(c.x0[i], c.x0[i - 1]):
            breaks.append(i)
    offsets = np.array(breaks + [c.n_entries], dtype=np.int64)
    sources = [tuple(int(t) for t in c.x0[i]) for i in breaks]
    return sources, offsets


def coupling_conditional(c: PairCoupling, x0) -> dict[State, float]:
    """Conditional law of x1 given x0 under the coupling."""
    c = c.require_canonical()
    x0 = c.space.validate_state(x0)
    sources, offsets = source_groups(c)
    try:
        r = sources.index(x0)
    except ValueError:
        raise ZeroMassError(f"source state {x0} has zero probability") from None
    lo, hi = int(offsets[r]), int(offsets[r + 1])
    mass = math.fsum(c.w[lo:hi].tolist())
    if mass <= 0:
        raise ZeroMassError(f"source state {x0} has zero probability")
    out = {}
    for i in range(lo, hi):
        p = float(c.w[i]) / mass
        if p >= PRUNE_EPS:
            out[tuple(int(t) for t in c.x1[i])] = p
    return out


# ---------------------------------------------------------------------------
# schedules and grids


@dataclass(frozen=True)
class AlphaSchedule:
    """Monotone mixing coefficient t -> alpha(t) with alpha(0)=0, alpha(1)=1.

    kinds: 'linear' (alpha = t), 'cosine' (alpha = sin^2(pi t / 2)), and
    'power' (alpha = t^p, p > 0).
    """

    kind: str
    p: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "cosine", "power"):
            raise ValidationError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "power":
            if self.p is None or not (self.p > 0) or not math.isfinite(self.p):
                raise ValidationError("power schedule needs p > 0")
        elif self.p is not None:
            raise ValidationError(f"{self.kind} schedule takes no parameter")

    @classmethod
    def linear(cls) -> "AlphaSchedule":
        return cls("linear")

    @classmethod
    def cosine(cls) -> "AlphaSchedule":
        return cls("cosine")

    @classmethod
    def power(cls, p: float) -> "AlphaSchedule":
        return cls("power", float(p))

    @classmethod
    def parse(cls, text: str) -> "AlphaSchedule":
        text = text.strip()
        if text == "linear":
            return cls.linear()
        if text == "cosine":
            return cls.cosine()
        if text.startswith("power:"):
            try:
                return cls.power(float(text.split(":", 1)[1]))
            except ValueError as exc:
                raise ValidationError(f"bad power schedule {text!r}") from exc
        raise ValidationError(
            f"unknown schedule {text!r}; expected linear, cosine, or power:<p>")

    def __str__(self) -> str:
        return self.kind if self.p is None else f"power:{self.p!r}"

    def __call__(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if t >= 1.0:
            return 1.0
        if self.kind == "linear":
            return t
        if self.kind == "cosine":
            s = math.sin(0.5 * math.pi * t)
            return s * s
        return t ** self.p


def alpha_at(schedule: AlphaSchedule, t: float) -> float:
    """alpha(t) with domain checking; endpoints exact."""
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"time {t!r} outside [0, 1]")
    return check_probability(schedule(t), "alpha")


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing decoding times t_0=0 < ... < t_M=1."""

    times: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) < 2:
            raise ValidationError("grid needs at least two times")
        if times[0] != 0.0 or times[-1] != 1.0:
            raise ValidationError("grid endpoints must be exactly 0 and 1")
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise ValidationError("grid times must strictly increase")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, steps: int) -> "TimeGrid":
        if steps < 1:
            raise ValidationError("step count must be >= 1")
        return cls(tuple(i / steps for i in range(steps + 1)))

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def pairs(self) -> Iterator[tuple[float, float]]:
        return zip(self.times, self.times[1:])

    def __str__(self) -> str:
        return ",".join(repr(t) for t in self.times)
