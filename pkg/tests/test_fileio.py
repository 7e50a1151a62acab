"""Text formats: round trips, canonical bytes, malformed-input errors."""
import numpy as np
import pytest

from redi import (AlphaSchedule, DenseDistribution, PairCoupling, RngSpec,
                  StateSpace, TimeGrid, ValidationError, build_random,
                  build_two_bit_demo, normalize_coupling, read_coupling,
                  read_distribution, read_kernel, read_manifest,
                  read_samples, read_trajectories, sha256_file,
                  write_coupling, write_distribution, write_kernel,
                  write_manifest, write_samples, write_trajectories)
from redi.flow import exact_multistep_conditional

LIN = AlphaSchedule.linear()


def test_coupling_round_trip_bitwise(tmp_path):
    for i in range(6):
        c = build_random(StateSpace(n=2 + i % 2, d=2 + i % 3), 5 + i,
                         RngSpec(71000 + i))
        p = tmp_path / f"c{i}.redi"
        write_coupling(p, c)
        back = read_coupling(p)
        assert back.space == c.space
        assert np.array_equal(back.x0, c.x0)
        assert np.array_equal(back.x1, c.x1)
        assert np.array_equal(back.w, c.w)  # bitwise via repr round trip
        p2 = tmp_path / f"c{i}b.redi"
        write_coupling(p2, back)
        assert p.read_bytes() == p2.read_bytes()


def test_coupling_file_is_canonical(tmp_path):
    """Reading merges and sorts no matter how the rows were ordered."""
    text = ("#redi coupling v1\n"
            "n=2 d=2 mask=none\n"
            "1 1 | 0 0 | 0.25\n"
            "0 0 | 1 1 | 0.5\n"
            "1 1 | 0 0 | 0.25\n")
    p = tmp_path / "manual.redi"
    p.write_text(text)
    c = read_coupling(p)
    assert c.n_entries == 2
    entries = list(c.entries())
    assert entries[0] == ((0, 0), (1, 1), 0.5)
    assert entries[1] == ((1, 1), (0, 0), 0.5)


def test_distribution_round_trip(tmp_path):
    space = StateSpace(2, 3, mask_token=2)
    dist = DenseDistribution.from_sparse(space, {(0, 1): 0.25, (2, 2): 0.75})
    p = tmp_path / "d.redi"
    write_distribution(p, dist)
    back = read_distribution(p)
    assert back.space == space
    assert np.array_equal(back.probs, dist.probs)


def test_kernel_round_trip(tmp_path):
    c = build_two_bit_demo("pi0")
    kernel = exact_multistep_conditional(c, TimeGrid.uniform(4), LIN)
    p = tmp_path / "k.redi"
    write_kernel(p, kernel)
    back = read_kernel(p)
    assert back.sources == kernel.sources
    for a, b in zip(back.rows, kernel.rows):
        assert np.allclose(a, b, atol=1e-15, rtol=0)


def test_samples_and_trajectories_round_trip(tmp_path):
    space = StateSpace(3, 4, mask_token=3)
    samples = np.array([[0, 1, 2], [3, 3, 3], [1, 0, 2]], dtype=np.int32)
    ps = tmp_path / "s.redi"
    write_samples(ps, space, samples)
    space2, back = read_samples(ps)
    assert space2 == space and np.array_equal(back, samples)

    times = [0.0, 0.5, 1.0]
    traj = np.array([[[0, 1, 2], [3, 3, 3]],
                     [[0, 1, 0], [3, 1, 3]],
                     [[2, 1, 0], [1, 1, 1]]], dtype=np.int32)
    pt = tmp_path / "t.redi"
    write_trajectories(pt, space, times, traj)
    space3, times2, traj2 = read_trajectories(pt)
    assert space3 == space and times2 == times
    assert np.array_equal(traj2, traj)


def test_manifest_round_trip_and_validation(tmp_path):
    p = tmp_path / "m.txt"
    write_manifest(p, {"command": "redi make --x 1", "seed": 7,
                       "flag:out": "a.redi"})
    back = read_manifest(p)
    assert back == {"command": "redi make --x 1", "seed": "7",
                    "flag:out": "a.redi"}
    with pytest.raises(ValidationError):
        write_manifest(p, {"bad=key": 1})
    with pytest.raises(ValidationError):
        write_manifest(p, {"key": "line\nbreak"})


def test_sha256_matches_known_value(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"abc")
    assert sha256_file(p) == ("ba7816bf8f01cfea414140de5dae2223"
                              "b00361a396177a9cb410ff61f20015ad")


@pytest.mark.parametrize("text,complaint", [
    ("#redi dist v1\nn=2 d=2 mask=none\n0 0 | 1.0\n", "magic"),
    ("#redi coupling v1\nn=2 mask=none\n", "metadata"),
    ("#redi coupling v1\nn=2 d=2 mask=none\n0 | 1 1 | 0.5\n", "length"),
    ("#redi coupling v1\nn=2 d=2 mask=none\n0 5 | 1 1 | 0.5\n", "token"),
    ("#redi coupling v1\nn=2 d=2 mask=none\n0 0 | 1 1 | huge\n", "weight"),
    ("#redi coupling v1\nn=2 d=2 mask=none\n0 0 | 1 1\n", "row"),
])
def test_malformed_coupling_files(tmp_path, text, complaint):
    p = tmp_path / "bad.redi"
    p.write_text(text)
    with pytest.raises(ValidationError) as err:
        read_coupling(p)
    assert complaint in str(err.value).lower()


def test_distribution_negative_weight_rejected(tmp_path):
    p = tmp_path / "neg.redi"
    p.write_text("#redi dist v1\nn=1 d=2 mask=none\n0 | -0.5\n1 | 1.5\n")
    with pytest.raises(ValidationError):
        read_distribution(p)
