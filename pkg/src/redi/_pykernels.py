"""Pure-numpy reference kernels for bridge posteriors and sampling.

These are the fallback twins of the compiled kernels in ``_ckernels``. The
two implementations promise bit-identical float64 output, which is what
keeps runs reproducible no matter which backend an install ends up with.
The shared arithmetic contract:

  - posterior weights multiply the entry weight first, then per-coordinate
    factors in ascending coordinate order;
  - normalizers and row sums accumulate sequentially in entry/cell order
    (np.cumsum / np.bincount here, plain loops on the C side);
  - per table cell, contributions arrive in entry order, jump mass before
    stay mass within an entry;
  - temperature uses a precomputed 1/tau exponent and elementwise pow,
    skipped entirely at tau == 1;
  - token draws compare one uniform against the sequential row cdf, taking
    the first cell that exceeds it, with a last-positive-cell fallback
    against rounding;
  - the compiled twin is built with FP contraction disabled so both sides
    execute the same IEEE operation sequence.

Do not "optimize" either twin without updating the other and re-running
the backend equivalence suite.

Shapes: coupling entries are x0, x1 (E, N) int32 and w (E,) float64;
query states are (S, N) or (P, N) int32. Tables are (N, D) rows over the
alphabet. ``a_t``/``a_s`` are the mixing coefficients at the current and
next time, ``holistic`` selects whole-state interpolation paths instead of
per-coordinate ones.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import OffPathError

# a normalizer below this counts as off-path
ZMIN = 1e-300


def jump_prob(a_t: float, a_s: float) -> float:
    """Conditional chance of moving to the target token during (t, s]."""
    if a_t < 1.0:
        q = (a_s - a_t) / (1.0 - a_t)
    else:
        q = 1.0
    if q < 0.0:
        q = 0.0
    elif q > 1.0:
        q = 1.0
    return q


def _posterior_coordinatewise(y, x0, x1, w, a_t):
    """Unnormalized posterior over entries given state y, per-coord paths."""
    post = w.copy()
    for i in range(len(y)):
        m0 = x0[:, i] == y[i]
        m1 = x1[:, i] == y[i]
        post *= np.where(m0 & m1, 1.0,
                         np.where(m0, 1.0 - a_t, np.where(m1, a_t, 0.0)))
    return post


def _posterior_holistic(y, x0, x1, w, a_t):
    m0 = (x0 == y).all(axis=1)
    m1 = (x1 == y).all(axis=1)
    return w * np.where(m0 & m1, 1.0,
                        np.where(m0, 1.0 - a_t, np.where(m1, a_t, 0.0)))


def _seqsum(v: np.ndarray) -> float:
    # sequential accumulation; np.sum pairs up terms and would not match
    # the C-side loop bit for bit
    return float(np.cumsum(v)[-1]) if len(v) else 0.0


def _coord_row(a, b0, b1, pe, q, omq, d):
    """One coordinate's successor row from per-entry posterior mass.

    Per entry: a pinned coordinate (b0 == b1) keeps its token; a coordinate
    already at the target keeps it; one still at the source jumps with
    probability q. Accumulation interleaves jump mass before stay mass per
    entry so the cell-level addition order matches the compiled twin.
    """
    pinned = b0 == b1
    at_tgt = ~pinned & (b1 == a)
    at_src = ~pinned & (b0 == a)
    hi_val = np.where(pinned | at_tgt, pe, np.where(at_src, pe * q, 0.0))
    lo_val = np.where(at_src, pe * omq, 0.0)
    lo_tok = np.where(at_src, b0, 0)
    e = len(pe)
    tok = np.zeros(2 * e, dtype=np.int64)
    val = np.zeros(2 * e, dtype=np.float64)
    tok[0::2] = b1
    tok[1::2] = lo_tok
    val[0::2] = hi_val
    val[1::2] = lo_val
    return np.bincount(tok, weights=val, minlength=d)


def _coord_row_holistic(b0, b1, pe, m1, m0_only, q, omq, d):
    hi_val = np.where(m1, pe, np.where(m0_only, pe * q, 0.0))
    lo_val = np.where(m0_only, pe * omq, 0.0)
    lo_tok = np.where(m0_only, b0, 0)
    e = len(pe)
    tok = np.zeros(2 * e, dtype=np.int64)
    val = np.zeros(2 * e, dtype=np.float64)
    tok[0::2] = b1
    tok[1::2] = lo_tok
    val[0::2] = hi_val
    val[1::2] = lo_val
    return np.bincount(tok, weights=val, minlength=d)


def _fallback_row(y, x0, x1, w, a_t, q, omq, d):
    """Per-coordinate posterior tables for a state off every entry's path.

    The joint normalizer vanished, so each coordinate falls back to its own
    posterior over entries. Raises if even a single coordinate has no
    entry carrying its token (cannot happen for states produced by the
    samplers themselves).
    """
    n = len(y)
    out = np.zeros((n, d))
    for i in range(n):
        m0 = x0[:, i] == y[i]
        m1 = x1[:, i] == y[i]
        f = np.where(m0 & m1, 1.0,
                     np.where(m0, 1.0 - a_t, np.where(m1, a_t, 0.0)))
        post = w * f
        z = _seqsum(post)
        if z < ZMIN:
            raise OffPathError(
                f"coordinate {i} of state {tuple(int(t) for t in y)} has no "
                f"support in the coupling")
        pe = post / z
        out[i] = _coord_row(y[i], x0[:, i], x1[:, i], pe, q, omq, d)
    return out


def posterior_tables(states, x0, x1, w, a_t, a_s, d, holistic,
                     offpath_fallback):
    """Normalizers and per-coordinate successor rows for a batch of states.

    Returns (z, tables, fallback_used) with z (S,), tables (S, N, D) and
    fallback_used (S,) uint8. Rows are raw marginal laws at temperature 1;
    each sums to 1 up to float rounding when z[s] is positive. States with
    a vanished normalizer either raise OffPathError or, with
    ``offpath_fallback``, get per-coordinate posterior rows instead.
    """
    states = np.asarray(states, dtype=np.int32)
    s_count, n = states.shape
    q = jump_prob(a_t, a_s)
    omq = 1.0 - q
    z = np.zeros(s_count)
    tables = np.zeros((s_count, n, d))
    fallback_used = np.zeros(s_count, dtype=np.uint8)
    for s in range(s_count):
        y = states[s]
        if holistic:
            post = _posterior_holistic(y, x0, x1, w, a_t)
        else:
            post = _posterior_coordinatewise(y, x0, x1, w, a_t)
        zs = _seqsum(post)
        z[s] = zs
        if zs < ZMIN:
            if not offpath_fallback:
                raise OffPathError(
                    f"state {tuple(int(t) for t in y)} has zero path "
                    f"probability at the current time")
            tables[s] = _fallback_row(y, x0, x1, w, a_t, q, omq, d)
            fallback_used[s] = 1
            continue
        pe = post / zs
        if holistic:
            m0 = (x0 == y).all(axis=1)
            m1 = (x1 == y).all(axis=1)
            m0_only = m0 & ~m1
            for i in range(n):
                tables[s, i] = _coord_row_holistic(
                    x0[:, i], x1[:, i], pe, m1, m0_only, q, omq, d)
        else:
            for i in range(n):
                tables[s, i] = _coord_row(
                    y[i], x0[:, i], x1[:, i], pe, q, omq, d)
    return z, tables, fallback_used


def _sample_rows(tables, tau, uniforms, d):
    """Fused temperature + row normalization + inverse-cdf token draw.

    tables (P, N, D) is consumed as scratch. Returns (P, N) int32 tokens.
    """
    if tau != 1.0:
        # rows are rescaled by their max before the pow so extreme
        # temperatures sharpen to the argmax instead of underflowing the
        # whole row; math.pow goes through libm like the C side, while
        # np.power dispatches to SIMD code whose last ulp can disagree
        itau = 1.0 / tau
        tables = tables / tables.max(axis=2, keepdims=True)
        flat = tables.reshape(-1)
        tables = np.fromiter((math.pow(v, itau) for v in flat),
                             dtype=np.float64,
                             count=flat.size).reshape(tables.shape)
    rowsum = np.cumsum(tables, axis=2)[:, :, -1]
    rows = tables / rowsum[:, :, None]
    cdf = np.cumsum(rows, axis=2)
    tok = (cdf <= uniforms[:, :, None]).sum(axis=2).astype(np.int64)
    bad = tok >= d
    if bad.any():
        for p, i in zip(*np.nonzero(bad)):
            # rounding pushed the cdf below the uniform; take the last
            # cell that still carries mass
            v = d - 1
            while v > 0 and rows[p, i, v] <= 0.0:
                v -= 1
            tok[p, i] = v
    return tok.astype(np.int32)


def step_states(states, x0, x1, w, a_t, a_s, d, tau, uniforms,
                offpath_fallback, holistic=False):
    """One factorized decoding step for a batch of P states.

    Builds each state's per-coordinate successor rows, applies temperature,
    and draws every coordinate independently using uniforms (P, N).
    Returns the (P, N) int32 successor batch.
    """
    states = np.asarray(states, dtype=np.int32)
    p_count, n = states.shape
    e_count = len(w)
    q = jump_prob(a_t, a_s)
    omq = 1.0 - q
    # pass one: normalizers, sequentially over entries
    z = np.zeros(p_count)
    if holistic:
        for e in range(e_count):
            m0 = (states == x0[e]).all(axis=1)
            m1 = (states == x1[e]).all(axis=1)
            z += w[e] * np.where(m0 & m1, 1.0,
                                 np.where(m0, 1.0 - a_t,
                                          np.where(m1, a_t, 0.0)))
    else:
        for e in range(e_count):
            f = np.full(p_count, w[e])
            for i in range(n):
                m0 = states[:, i] == x0[e, i]
                m1 = states[:, i] == x1[e, i]
                f *= np.where(m0 & m1, 1.0,
                              np.where(m0, 1.0 - a_t,
                                       np.where(m1, a_t, 0.0)))
            z += f
    offpath = z < ZMIN
    if offpath.any() and not offpath_fallback:
        p = int(np.flatnonzero(offpath)[0])
        raise OffPathError(
            f"state {tuple(int(t) for t in states[p])} has zero path "
            f"probability at the current time")
    zsafe = np.where(offpath, 1.0, z)
    # pass two: accumulate rows, recomputing factors to avoid (P, E) memory
    tables = np.zeros((p_count, n, d))
    for e in range(e_count):
        if holistic:
            m0 = (states == x0[e]).all(axis=1)
            m1 = (states == x1[e]).all(axis=1)
            f = w[e] * np.where(m0 & m1, 1.0,
                                np.where(m0, 1.0 - a_t,
                                         np.where(m1, a_t, 0.0)))
            pe = f / zsafe
            m0_only = m0 & ~m1
            for i in range(n):
                b0, b1 = int(x0[e, i]), int(x1[e, i])
                tables[:, i, b1] += np.where(
                    m1, pe, np.where(m0_only, pe * q, 0.0))
                tables[:, i, b0] += np.where(m0_only, pe * omq, 0.0)
        else:
            f = np.full(p_count, w[e])
            for i in range(n):
                m0 = states[:, i] == x0[e, i]
                m1 = states[:, i] == x1[e, i]
                f *= np.where(m0 & m1, 1.0,
                              np.where(m0, 1.0 - a_t,
                                       np.where(m1, a_t, 0.0)))
            pe = f / zsafe
            for i in range(n):
                b0, b1 = int(x0[e, i]), int(x1[e, i])
                a = states[:, i]
                if b0 == b1:
                    tables[:, i, b1] += pe
                    continue
                at_tgt = a == b1
                at_src = a == b0
                tables[:, i, b1] += np.where(
                    at_tgt, pe, np.where(at_src, pe * q, 0.0))
                tables[:, i, b0] += np.where(at_src, pe * omq, 0.0)
    # patch rows that fell off every entry's path
    for p in np.flatnonzero(offpath):
        tables[p] = _fallback_row(states[p], x0, x1, w, a_t, q, omq, d)
    return _sample_rows(tables, tau, np.asarray(uniforms, dtype=np.float64), d)


def sample_exact(root, x0, x1, w, a_t, a_s, d, holistic, u_pair, u_coord):
    """Draw S successors of one state from the exact transition law.

    Picks an entry from the bridge posterior with u_pair (S,), then moves
    each coordinate (or, on holistic paths, the whole state at once) using
    u_coord (S, N). No off-path fallback: a vanished normalizer raises.
    """
    root = np.asarray(root, dtype=np.int32)
    n = len(root)
    if holistic:
        post = _posterior_holistic(root, x0, x1, w, a_t)
    else:
        post = _posterior_coordinatewise(root, x0, x1, w, a_t)
    z = _seqsum(post)
    if z < ZMIN:
        raise OffPathError(
            f"state {tuple(int(t) for t in root)} has zero path "
            f"probability at the current time")
    pcdf = np.cumsum(post / z)
    u_pair = np.asarray(u_pair, dtype=np.float64)
    u_coord = np.asarray(u_coord, dtype=np.float64)
    s_count = len(u_pair)
    q = jump_prob(a_t, a_s)
    entry = np.searchsorted(pcdf, u_pair, side="right")
    over = entry >= len(w)
    if over.any():
        last = int(np.flatnonzero(post > 0.0)[-1])
        entry[over] = last
    out = np.empty((s_count, n), dtype=np.int32)
    if holistic:
        for j in range(s_count):
            e = int(entry[j])
            if (x1[e] == root).all():
                out[j] = x1[e]
            elif u_coord[j, 0] < q:
                out[j] = x1[e]
            else:
                out[j] = x0[e]
        return out
    for j in range(s_count):
        e = int(entry[j])
        for i in range(n):
            b0, b1 = int(x0[e, i]), int(x1[e, i])
            a = int(root[i])
            if b0 == b1 or a == b1:
                out[j, i] = b1
            elif a == b0:
                out[j, i] = b1 if u_coord[j, i] < q else b0
            else:
                # unreachable for entries with posterior mass
                out[j, i] = b0
    return out
