"""Rectification loop, builders, one-step model, run persistence."""
import json
import math

import numpy as np
import pytest

from battery import battery_coupling
from redi import (AlphaSchedule, ConfigurationError, DenseDistribution,
                  DenseKernel, PairCoupling, RectifyConfig, RngSpec,
                  StateSpace, TimeGrid, ValidationError, build_independent,
                  build_masked_source, build_random, build_two_bit_demo,
                  conditional_tc_exact, coupling_conditional,
                  coupling_marginal, normalize_coupling, one_step_model,
                  read_coupling, read_manifest, rectify, rectify_exact,
                  rectify_sampled, rectify_with_kernel, redi_iterate,
                  save_run, states_to_indices)
from redi.rectify import MONOTONE_TOL

LIN = AlphaSchedule.linear()


def dense_marginal(c, which):
    return DenseDistribution.from_sparse(
        c.space, coupling_marginal(c, which)).probs


# ---------------------------------------------------------------------------
# config validation


def test_config_validation():
    with pytest.raises(ValidationError):
        RectifyConfig(method="approximate")
    with pytest.raises(ValidationError):
        RectifyConfig(tau=0.0)
    with pytest.raises(ValidationError):
        RectifyConfig(method="sampled")  # pairs missing
    with pytest.raises(ValidationError):
        RectifyConfig(method="sampled", pairs=0)
    cfg = RectifyConfig(method="sampled", pairs=10)
    with pytest.raises(ValidationError):
        rectify_exact(build_two_bit_demo("pi0"), cfg)


# ---------------------------------------------------------------------------
# exact rectifier


@pytest.mark.parametrize("idx", [0, 1, 2, 3, 8, 13])
def test_exact_preserves_source_marginal(idx):
    _, c = battery_coupling(idx)
    for M in (1, 4):
        rect = rectify_exact(c, RectifyConfig(grid=TimeGrid.uniform(M)))
        assert np.max(np.abs(dense_marginal(rect, "source")
                             - dense_marginal(c, "source"))) <= 1e-12


@pytest.mark.parametrize("idx", [0, 1, 2, 3, 8, 13])
def test_one_step_rectification_zeroes_tc(idx):
    _, c = battery_coupling(idx)
    rect = rectify_exact(c, RectifyConfig(grid=TimeGrid.uniform(1)))
    assert conditional_tc_exact(rect, 0.0, 1.0, LIN).value_nats <= 1e-12


def test_factorizing_coupling_is_fixed_point_at_one_step():
    pi1 = build_two_bit_demo("pi1")
    rect = rectify_exact(pi1, RectifyConfig(grid=TimeGrid.uniform(1)))
    assert np.array_equal(rect.x0, pi1.x0)
    assert np.array_equal(rect.x1, pi1.x1)
    assert np.allclose(rect.w, pi1.w, atol=1e-15, rtol=0)


def test_rectify_with_exact_joint_kernel_is_identity_for_masked_point():
    """With a point-mass source, swapping in the exact joint conditional
    reproduces the coupling: the degenerate equality case."""
    space = StateSpace(2, 3, mask_token=2)
    target = DenseDistribution.from_sparse(
        space, {(0, 0): 0.4, (0, 1): 0.3, (1, 0): 0.2, (1, 1): 0.1})
    c = build_masked_source(space, 1.0, target)
    cond = DenseDistribution.from_sparse(
        space, coupling_conditional(c, (2, 2)))
    kernel = DenseKernel(space, ((2, 2),), (cond.probs,))
    rect = rectify_with_kernel(c, kernel)
    assert np.array_equal(rect.x0, c.x0)
    assert np.array_equal(rect.x1, c.x1)
    assert np.allclose(rect.w, c.w, atol=1e-15, rtol=0)


def test_masked_point_source_tc_equals_single_state_kl():
    """r=1 collapses the TC average to the single source state's KL."""
    space = StateSpace(2, 3, mask_token=2)
    target = DenseDistribution.from_sparse(
        space, {(0, 0): 0.4, (1, 1): 0.6})
    c = build_masked_source(space, 1.0, target)
    rep = conditional_tc_exact(c, 0.0, 1.0, LIN)
    from helpers import (expand_product, marginals_of_dense, oracle_kl,
                         oracle_exact_transition)
    exact = oracle_exact_transition(c, (2, 2), 0.0, 1.0,
                                    mode=__import__("redi").PathMode
                                    .COORDINATEWISE)
    prod = expand_product(marginals_of_dense(space, exact))
    assert rep.value_nats == pytest.approx(oracle_kl(exact, prod),
                                           abs=1e-12)


# ---------------------------------------------------------------------------
# sampled rectifier


def test_sampled_deterministic_and_source_sane():
    pi0 = build_two_bit_demo("pi0")
    cfg = RectifyConfig(grid=TimeGrid.uniform(8), method="sampled",
                        pairs=100000, rng=RngSpec(21))
    a = rectify_sampled(pi0, cfg)
    b = rectify_sampled(pi0, cfg)
    assert np.array_equal(a.x0, b.x0) and np.array_equal(a.w, b.w)
    # chi-square sanity on the source marginal at P=1e5: 4 uniform cells
    counts = np.zeros(4)
    sources, offsets = __import__("redi").source_groups(a)
    for r, src in enumerate(sources):
        counts[a.space.index_of(src)] = math.fsum(
            a.w[offsets[r]:offsets[r + 1]].tolist()) * cfg.pairs
    expected = cfg.pairs / 4
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 27.9  # p ~ 4e-6 cutoff at 3 degrees of freedom


def test_sampled_converges_to_exact():
    pi0 = build_two_bit_demo("pi0")
    exact = rectify_exact(pi0, RectifyConfig(grid=TimeGrid.uniform(16)))
    tce = conditional_tc_exact(exact, 0.0, 1.0, LIN).value_nats
    errs = []
    for pairs in (1000, 10000, 100000):
        cfg = RectifyConfig(grid=TimeGrid.uniform(16), method="sampled",
                            pairs=pairs, rng=RngSpec(424242))
        samp = rectify_sampled(pi0, cfg)
        errs.append(abs(conditional_tc_exact(samp, 0.0, 1.0,
                                             LIN).value_nats - tce))
    assert errs[0] > errs[1] > errs[2]


def test_rectify_dispatches_on_method():
    pi0 = build_two_bit_demo("pi0")
    a = rectify(pi0, RectifyConfig(grid=TimeGrid.uniform(2)))
    b = rectify_exact(pi0, RectifyConfig(grid=TimeGrid.uniform(2)))
    assert np.array_equal(a.w, b.w)


# ---------------------------------------------------------------------------
# iteration loop


def test_redi_iterate_demo_curve():
    pi0 = build_two_bit_demo("pi0")
    run = redi_iterate(pi0, 3, RectifyConfig(grid=TimeGrid.uniform(16)))
    assert run.iterations == 3
    assert len(run.couplings) == 4 and len(run.tc_curve) == 4
    assert run.tc_curve[0] == pytest.approx(math.log(2), abs=1e-12)
    assert all(b <= a + MONOTONE_TOL
               for a, b in zip(run.tc_curve, run.tc_curve[1:]))
    assert run.violations == ()
    assert run.tc_methods == ("exact",) * 4


def test_redi_iterate_per_round_configs():
    pi0 = build_two_bit_demo("pi0")
    cfgs = [RectifyConfig(grid=TimeGrid.uniform(1)),
            RectifyConfig(grid=TimeGrid.uniform(4))]
    run = redi_iterate(pi0, 2, cfgs)
    assert run.tc_curve[1] <= 1e-12
    with pytest.raises(ValidationError):
        redi_iterate(pi0, 3, cfgs)
    with pytest.raises(ValidationError):
        redi_iterate(pi0, 0, cfgs[0])


def test_redi_iterate_records_violations_as_data():
    """A known multi-step counterexample must be reported, not raised."""
    _, c = battery_coupling(39)
    run = redi_iterate(c, 1, RectifyConfig(grid=TimeGrid.uniform(4)))
    assert len(run.violations) == 1
    v = run.violations[0]
    assert v["iteration"] == 1
    assert v["delta"] > MONOTONE_TOL
    assert v["steps"] == 4
    assert run.tc_curve[1] > run.tc_curve[0]


def test_save_run_artifacts(tmp_path):
    pi0 = build_two_bit_demo("pi0")
    run = redi_iterate(pi0, 2, RectifyConfig(grid=TimeGrid.uniform(16)))
    out = tmp_path / "run"
    save_run(run, out, {"command": "unit-test"})
    for k in range(3):
        c = read_coupling(out / f"pi_{k}.redi")
        assert np.array_equal(c.w, run.couplings[k].w)
    lines = (out / "tc_curve.csv").read_text().strip().split("\n")
    assert lines[0] == "k,tc_nats,method"
    assert len(lines) == 4
    k, tc0, method = lines[1].split(",")
    assert (k, method) == ("0", "exact")
    assert float(tc0) == pytest.approx(math.log(2), abs=1e-12)
    manifest = read_manifest(out / "manifest.txt")
    assert manifest["command"] == "unit-test"
    assert manifest["iterations"] == "2"
    assert manifest["violations"] == "0"
    assert "output:pi_0.redi" in manifest
    assert not (out / "counterexamples.json").exists()


def test_save_run_writes_counterexamples(tmp_path):
    _, c = battery_coupling(39)
    run = redi_iterate(c, 1, RectifyConfig(grid=TimeGrid.uniform(4)))
    out = tmp_path / "run"
    save_run(run, out)
    records = json.loads((out / "counterexamples.json").read_text())
    assert len(records) == 1
    assert records[0]["delta"] > 0
    manifest = read_manifest(out / "manifest.txt")
    assert manifest["violations"] == "1"
    assert "output:counterexamples.json" in manifest


# ---------------------------------------------------------------------------
# one-step model


def test_one_step_model_laws():
    pi0 = build_two_bit_demo("pi0")
    fam = one_step_model(pi0)
    assert np.allclose(fam.generated_law(), 0.25, atol=1e-12, rtol=0)
    pi1 = build_two_bit_demo("pi1")
    fam1 = one_step_model(pi1)
    assert np.max(np.abs(fam1.generated_law()
                         - dense_marginal(pi1, "target"))) <= 1e-12


def test_one_step_model_kernel_rows():
    pi0 = build_two_bit_demo("pi0")
    fam = one_step_model(pi0)
    kernel = fam.kernel_for((0, 0))
    # conditional at 00 is half 00, half 11: each coordinate marginal is
    # a fair bit, so the product law is uniform
    assert np.allclose(kernel.tables, 0.5, atol=1e-15)
    assert kernel.prob_of((0, 0)) == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(ValidationError):
        one_step_model(build_two_bit_demo("pi1")).kernel_for((0, 1)) \
            .prob_of((9, 9))


def test_one_step_sampling():
    pi1 = build_two_bit_demo("pi1")
    fam = one_step_model(pi1)
    a = fam.sample(50000, RngSpec(33))
    b = fam.sample(50000, RngSpec(33))
    assert np.array_equal(a, b)
    freq = np.bincount(states_to_indices(pi1.space, a), minlength=4) / 50000
    assert 0.5 * np.abs(freq - dense_marginal(pi1, "target")).sum() < 0.02


# ---------------------------------------------------------------------------
# builders


def test_build_independent_product_weights():
    space = StateSpace(1, 3)
    p = DenseDistribution.from_sparse(space, {(0,): 0.2, (1,): 0.8})
    q = DenseDistribution.from_sparse(space, {(1,): 0.5, (2,): 0.5})
    c = build_independent(p, q)
    entries = {(x0, x1): w for x0, x1, w in c.entries()}
    assert entries[((0,), (1,))] == pytest.approx(0.1, abs=1e-15)
    assert entries[((1,), (2,))] == pytest.approx(0.4, abs=1e-15)
    with pytest.raises(ValidationError):
        build_independent(p, DenseDistribution.uniform(StateSpace(2, 3)))


def test_two_bit_demo_shared_marginals():
    pi0 = build_two_bit_demo("pi0")
    pi1 = build_two_bit_demo("pi1")
    assert np.allclose(dense_marginal(pi0, "source"),
                       dense_marginal(pi1, "source"), atol=1e-15)
    assert np.allclose(dense_marginal(pi0, "target"),
                       dense_marginal(pi1, "target"), atol=1e-15)
    cond0 = coupling_conditional(pi0, (0, 0))
    assert cond0[(0, 0)] == pytest.approx(0.5, abs=1e-15)
    cond1 = coupling_conditional(pi1, (0, 0))
    assert cond1 == {(0, 0): 1.0}
    with pytest.raises(ValidationError):
        build_two_bit_demo("pi2")


def test_masked_source_interpolation():
    space = StateSpace(2, 3, mask_token=2)
    c = build_masked_source(space, 0.3)
    src = dense_marginal(c, "source")
    mask_idx = space.index_of((2, 2))
    assert src[mask_idx] == pytest.approx(0.3 + 0.7 / 9, abs=1e-12)
    others = np.delete(src, mask_idx)
    assert np.allclose(others, 0.7 / 9, atol=1e-12)
    r0 = dense_marginal(build_masked_source(space, 0.0), "source")
    assert np.allclose(r0, 1 / 9, atol=1e-14)
    r1 = dense_marginal(build_masked_source(space, 1.0), "source")
    assert r1[mask_idx] == pytest.approx(1.0, abs=1e-12)
    assert np.count_nonzero(r1) == 1
    with pytest.raises(ValidationError):
        build_masked_source(space, 1.5)
    with pytest.raises(ConfigurationError):
        build_masked_source(StateSpace(2, 3), 0.3)


def test_build_random_contract():
    space = StateSpace(2, 3)
    a = build_random(space, 12, RngSpec(7))
    b = build_random(space, 12, RngSpec(7))
    assert np.array_equal(a.x0, b.x0) and np.array_equal(a.w, b.w)
    assert a.n_entries == 12
    assert math.fsum(a.w.tolist()) == pytest.approx(1.0, abs=1e-12)
    assert np.all(a.w > 0)
    single = build_random(space, 1, RngSpec(3))
    assert single.n_entries == 1 and single.w[0] == 1.0
    assert dense_marginal(a, "source").sum() == pytest.approx(1.0,
                                                              abs=1e-12)
    with pytest.raises(ValidationError):
        build_random(space, 0, RngSpec(0))
    with pytest.raises(ValidationError):
        build_random(space, 82, RngSpec(0))
