"""Compiled and pure kernel twins must agree bit for bit.

The contract is exact equality of every output array (same bytes), not
closeness: both twins fix one summation order, one pow implementation, and
one tie-breaking rule, so any drift is a bug. Configurations cover both
path modes, fallback rows, temperatures, and off-path error agreement.
"""
import numpy as np
import pytest

from redi import OffPathError, RngSpec, StateSpace, build_random, generator
from redi import backend
from redi.rng import uniform_block
from redi import _pykernels

compiled = pytest.mark.skipif("compiled" not in backend.available(),
                              reason="compiled backend not built")


def _config(i):
    """Deterministic mixed-shape kernel inputs for trial i."""
    d, n = [(2, 2), (2, 3), (3, 2), (3, 3), (4, 2)][i % 5]
    space = StateSpace(n=n, d=d)
    rng = RngSpec(31000 + i, "twin")
    support = int(generator(rng.derived("size")).integers(2, 13))
    support = min(support, space.num_states ** 2)
    c = build_random(space, support, rng.derived("pairs"))
    g = generator(rng.derived("times"))
    a_t = float(g.uniform(0.0, 0.98))
    a_s = float(g.uniform(a_t, 1.0))
    states = space.digit_matrix()
    return space, c, a_t, a_s, states, rng


@compiled
@pytest.mark.parametrize("trial", range(40))
def test_posterior_tables_twins_bitwise(trial):
    from redi import _ckernels
    space, c, a_t, a_s, states, rng = _config(trial)
    holistic = trial % 2 == 1
    for fallback in (True, False):
        args = (states, c.x0, c.x1, c.w, a_t, a_s, space.d, holistic,
                fallback)
        try:
            zp, tp, fp = _pykernels.posterior_tables(*args)
        except OffPathError as exc:
            with pytest.raises(OffPathError) as err:
                _ckernels.posterior_tables(*args)
            assert str(err.value) == str(exc)
            continue
        zc, tc, fc = _ckernels.posterior_tables(*args)
        assert np.array_equal(zp, zc)
        assert np.array_equal(tp, tc)
        assert np.array_equal(fp, fc)


@compiled
@pytest.mark.parametrize("trial", range(40))
def test_step_states_twins_bitwise(trial):
    from redi import _ckernels
    space, c, a_t, a_s, states, rng = _config(trial)
    holistic = trial % 2 == 0
    tau = [1.0, 0.7, 2.0, 1e-6, 50.0][trial % 5]
    pop = states[np.arange(24) % len(states)]
    uniforms = uniform_block(rng.derived("u"), (24, space.n))
    args = (pop, c.x0, c.x1, c.w, a_t, a_s, space.d, tau, uniforms, True,
            holistic)
    try:
        outp = _pykernels.step_states(*args)
    except OffPathError as exc:
        # states with zero support anywhere must fail identically
        with pytest.raises(OffPathError) as err:
            _ckernels.step_states(*args)
        assert str(err.value) == str(exc)
        return
    outc = _ckernels.step_states(*args)
    assert outp.dtype == outc.dtype == np.int32
    assert np.array_equal(outp, outc)


@compiled
@pytest.mark.parametrize("trial", range(40))
def test_sample_exact_twins_bitwise(trial):
    from redi import _ckernels
    space, c, a_t, a_s, states, rng = _config(trial)
    holistic = trial % 3 == 0
    # root must be on-path: reuse a source state, always reachable at t
    root = c.x0[trial % len(c.x0)].copy()
    S = 17
    u_pair = uniform_block(rng.derived("pair"), (S,))
    u_coord = uniform_block(rng.derived("coord"), (S, space.n))
    args = (root, c.x0, c.x1, c.w, a_t, a_s, space.d, holistic, u_pair,
            u_coord)
    outp = _pykernels.sample_exact(*args)
    outc = _ckernels.sample_exact(*args)
    assert np.array_equal(outp, outc)


@compiled
def test_backend_switching_round_trip():
    assert backend.name() in ("compiled", "pure")
    original = backend.name()
    backend.use("pure")
    assert backend.name() == "pure"
    assert backend.active() is _pykernels
    backend.use("compiled")
    assert backend.name() == "compiled"
    backend.use("auto")
    assert backend.name() == "compiled"
    backend.use(original)


def test_backend_rejects_unknown_name():
    with pytest.raises(Exception):
        backend.use("vectorized-quantum")


@compiled
def test_full_pipeline_identical_across_backends():
    """End to end: a sampled rectification run must not depend on backend."""
    from redi import (AlphaSchedule, RectifyConfig, TimeGrid,
                      build_two_bit_demo, conditional_tc_plugin,
                      rectify_sampled)
    pi0 = build_two_bit_demo("pi0")
    cfg = RectifyConfig(grid=TimeGrid.uniform(4), method="sampled",
                        pairs=3000, rng=RngSpec(77))
    results = {}
    for name in ("pure", "compiled"):
        backend.use(name)
        r = rectify_sampled(pi0, cfg)
        p = conditional_tc_plugin(pi0, 0.0, 1.0, AlphaSchedule.linear(),
                                  roots=200, samples_per_root=10,
                                  rng=RngSpec(5))
        results[name] = (r.x0.tobytes(), r.x1.tobytes(), r.w.tobytes(),
                         p.value_nats)
    backend.use("auto")
    assert results["pure"] == results["compiled"]
