"""Text file formats: couplings, distributions, kernels, samples, runs.

All formats are line-oriented UTF-8 with a magic first line, a metadata
line (``n=<n> d=<d> mask=<token|none>``), and pipe-separated token rows.
Floats are written with repr (shortest round-trip), so writing and
re-reading canonical objects is byte-stable and value-exact. Writers emit
canonical order; readers accept any order and renormalize.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .core import (PRUNE_EPS, DenseDistribution, PairCoupling, StateSpace,
                   normalize_coupling)
from .errors import ValidationError
from .flow import DenseKernel

COUPLING_MAGIC = "#redi coupling v1"
DIST_MAGIC = "#redi dist v1"
KERNEL_MAGIC = "#redi kernel v1"
SAMPLES_MAGIC = "#redi samples v1"
TRAJ_MAGIC = "#redi traj v1"


def _meta_line(space: StateSpace) -> str:
    mask = "none" if space.mask_token is None else str(space.mask_token)
    return f"n={space.n} d={space.d} mask={mask}"


def _parse_meta(line: str, path: str) -> StateSpace:
    fields = {}
    for part in line.split():
        if "=" not in part:
            raise ValidationError(f"{path}: bad metadata field {part!r}")
        key, value = part.split("=", 1)
        fields[key] = value
    try:
        n = int(fields["n"])
        d = int(fields["d"])
        mask = None if fields.get("mask", "none") == "none" \
            else int(fields["mask"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"{path}: bad metadata line {line!r}") from exc
    return StateSpace(n=n, d=d, mask_token=mask)


def _read_lines(path, magic: str) -> tuple[StateSpace, list[str]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != magic:
        raise ValidationError(f"{path}: expected magic line {magic!r}")
    if len(lines) < 2:
        raise ValidationError(f"{path}: missing metadata line")
    space = _parse_meta(lines[1], str(path))
    return space, lines[2:]


def _tokens(text: str, space: StateSpace, path: str):
    try:
        toks = tuple(int(v) for v in text.split())
    except ValueError:
        raise ValidationError(f"{path}: bad token row {text!r}") from None
    return space.validate_state(toks)


def write_coupling(path, c: PairCoupling) -> None:
    c = c.require_canonical()
    lines = [COUPLING_MAGIC, _meta_line(c.space)]
    for x0, x1, w in c.entries():
        lines.append(f"{' '.join(map(str, x0))} | "
                     f"{' '.join(map(str, x1))} | {w!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_coupling(path) -> PairCoupling:
    space, rows = _read_lines(path, COUPLING_MAGIC)
    entries = []
    for row in rows:
        parts = [p.strip() for p in row.split("|")]
        if len(parts) != 3:
            raise ValidationError(f"{path}: bad coupling row {row!r}")
        try:
            w = float(parts[2])
        except ValueError:
            raise ValidationError(f"{path}: bad weight {parts[2]!r}") from None
        entries.append((_tokens(parts[0], space, str(path)),
                        _tokens(parts[1], space, str(path)), w))
    return normalize_coupling(PairCoupling.from_entries(space, entries))


def write_distribution(path, dist: DenseDistribution) -> None:
    lines = [DIST_MAGIC, _meta_line(dist.space)]
    for state, w in dist.to_sparse().items():
        lines.append(f"{' '.join(map(str, state))} | {w!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_distribution(path) -> DenseDistribution:
    space, rows = _read_lines(path, DIST_MAGIC)
    weights = {}
    for row in rows:
        parts = [p.strip() for p in row.split("|")]
        if len(parts) != 2:
            raise ValidationError(f"{path}: bad distribution row {row!r}")
        state = _tokens(parts[0], space, str(path))
        try:
            w = float(parts[1])
        except ValueError:
            raise ValidationError(f"{path}: bad weight {parts[1]!r}") from None
        weights[state] = weights.get(state, 0.0) + w
    return DenseDistribution.from_sparse(space, weights)


def write_kernel(path, kernel: DenseKernel) -> None:
    lines = [KERNEL_MAGIC, _meta_line(kernel.space)]
    for r, x0 in enumerate(kernel.sources):
        row = kernel.rows[r]
        for i in np.flatnonzero(row >= PRUNE_EPS):
            x1 = kernel.space.state_at(int(i))
            lines.append(f"{' '.join(map(str, x0))} | "
                         f"{' '.join(map(str, x1))} | {float(row[i])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_kernel(path) -> DenseKernel:
    space, rows = _read_lines(path, KERNEL_MAGIC)
    table: dict[tuple, dict[tuple, float]] = {}
    for row in rows:
        parts = [p.strip() for p in row.split("|")]
        if len(parts) != 3:
            raise ValidationError(f"{path}: bad kernel row {row!r}")
        x0 = _tokens(parts[0], space, str(path))
        x1 = _tokens(parts[1], space, str(path))
        try:
            w = float(parts[2])
        except ValueError:
            raise ValidationError(f"{path}: bad weight {parts[2]!r}") from None
        table.setdefault(x0, {})[x1] = table.get(x0, {}).get(x1, 0.0) + w
    sources = tuple(sorted(table))
    dense = np.zeros((len(sources), space.num_states))
    for r, x0 in enumerate(sources):
        for x1, w in table[x0].items():
            dense[r, space.index_of(x1)] = w
    return DenseKernel(space, sources, dense)


def write_samples(path, space: StateSpace, samples: np.ndarray) -> None:
    samples = np.asarray(samples, dtype=np.int64)
    if samples.ndim != 2 or samples.shape[1] != space.n:
        raise ValidationError("samples must be a (count, n) token batch")
    lines = [SAMPLES_MAGIC, _meta_line(space)]
    lines.extend(" ".join(map(str, row)) for row in samples.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_samples(path) -> tuple[StateSpace, np.ndarray]:
    space, rows = _read_lines(path, SAMPLES_MAGIC)
    out = [_tokens(row, space, str(path)) for row in rows]
    return space, np.array(out, dtype=np.int32).reshape(len(out), space.n)


def write_trajectories(path, space: StateSpace, times, paths) -> None:
    """paths has shape (M+1, P, n): every state of every trajectory."""
    paths = np.asarray(paths, dtype=np.int64)
    times = [float(t) for t in times]
    if paths.ndim != 3 or paths.shape[0] != len(times) \
            or paths.shape[2] != space.n:
        raise ValidationError("paths must be (len(times), count, n)")
    lines = [TRAJ_MAGIC, _meta_line(space),
             "times=" + ",".join(repr(t) for t in times)]
    for p in range(paths.shape[1]):
        stages = [" ".join(map(str, paths[m, p].tolist()))
                  for m in range(paths.shape[0])]
        lines.append(" | ".join(stages))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trajectories(path) -> tuple[StateSpace, list[float], np.ndarray]:
    space, rows = _read_lines(path, TRAJ_MAGIC)
    if not rows or not rows[0].startswith("times="):
        raise ValidationError(f"{path}: missing times= line")
    times = [float(v) for v in rows[0][len("times="):].split(",")]
    out = []
    for row in rows[1:]:
        stages = [p.strip() for p in row.split("|")]
        if len(stages) != len(times):
            raise ValidationError(f"{path}: trajectory row has "
                                  f"{len(stages)} stages, expected "
                                  f"{len(times)}")
        out.append([_tokens(st, space, str(path)) for st in stages])
    arr = np.array(out, dtype=np.int32).reshape(len(out), len(times),
                                                space.n)
    return space, times, arr.transpose(1, 0, 2)


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def write_manifest(path, entries: dict) -> None:
    """Plain key=value lines, in insertion order."""
    lines = []
    for key, value in entries.items():
        key = str(key)
        if "=" in key or "\n" in key:
            raise ValidationError(f"bad manifest key {key!r}")
        value = str(value)
        if "\n" in value:
            raise ValidationError(f"manifest value for {key} spans lines")
        lines.append(f"{key}={value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}: bad manifest line {line!r}")
        key, value = line.split("=", 1)
        out[key] = value
    return out
