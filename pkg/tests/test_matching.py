import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_best
from mcm.hungarian import solve_min
from mcm.matching import (
    Assignment,
    MatchInstance,
    alpha_grid,
    alpha_sweep,
    euclidean_distances,
    jaccard,
    normalize_distances,
    solve,
    write_sweep_csv,
)


def random_instance(rng, n_p, n_d, extent=10.0):
    pxy, dxy = rng.random((n_p, 2)) * extent, rng.random((n_d, 2)) * extent
    return MatchInstance.from_positions(pxy, dxy, rng.random((n_p, n_d)))


def test_normalize_examples():
    assert normalize_distances([[0, 2], [4, 1]]).tolist() == [[0, 0.5], [1, 0.25]]
    assert normalize_distances(np.zeros((2, 3))).tolist() == [[0.0] * 3] * 2
    assert normalize_distances([[7]]).tolist() == [[1.0]]
    with pytest.raises(ValueError):
        normalize_distances([[1, -1]])


def test_instance_validation():
    with pytest.raises(ValueError):
        MatchInstance(np.ones((2, 2)) * 1.5, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        MatchInstance(np.ones((2, 2)), np.zeros((2, 3)))


def test_colocated_distance_only():
    rng = np.random.default_rng(0)
    xy = rng.random((6, 2)) * 10
    order = rng.permutation(6)
    inst = MatchInstance.from_positions(xy, xy[order], rng.random((6, 6)))
    got = solve(inst, 0.0)
    assert set(got.pairs) == {(int(order[j]), j) for j in range(6)}
    assert got.total_distance == 0.0


@pytest.mark.parametrize("n_p, n_d", [(4, 4), (3, 5), (5, 3)])
def test_identity_compatibility(n_p, n_d):
    A = np.eye(n_p, n_d)
    got = solve(MatchInstance(A, np.ones((n_p, n_d))), 1.0)
    assert got.pairs == tuple((k, k) for k in range(min(n_p, n_d)))
    assert got.objective_value == min(n_p, n_d)


def test_random_6x6_vs_permutations():
    rng = np.random.default_rng(1)
    for _ in range(20):
        inst = random_instance(rng, 6, 6)
        for alpha in (0.0, 0.3, 0.5, 0.8, 1.0):
            assert solve(inst, alpha).objective_value == brute_force_best(inst.utility(alpha))


def test_empty_side():
    got = solve(MatchInstance(np.zeros((0, 3)), np.zeros((0, 3))), 0.5)
    assert got.pairs == () and got.objective_value == 0.0


def test_alpha_range():
    with pytest.raises(ValueError):
        solve(MatchInstance(np.zeros((1, 1)), np.zeros((1, 1))), 1.5)


def test_ties_pick_lexicographically_smallest():
    # every perfect matching ties; the identity is the smallest pair list
    got = solve(MatchInstance(np.ones((4, 4)), np.zeros((4, 4))), 1.0)
    assert got.pairs == ((0, 0), (1, 1), (2, 2), (3, 3))
    # only the two 2x2 blocks matter; within each the cheaper swap is tied with the identity
    A = np.array([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]], dtype=float)
    got = solve(MatchInstance(A[::-1].copy(), np.zeros((4, 4))), 1.0)
    assert got.pairs == ((0, 2), (1, 3), (2, 0), (3, 1))
    # rectangular: any 3 of 5 columns; smallest list uses columns 0, 1, 2
    got = solve(MatchInstance(np.full((3, 5), 0.5), np.zeros((3, 5))), 1.0)
    assert got.pairs == ((0, 0), (1, 1), (2, 2))


def test_lexicographic_oracle_on_tied_integers():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        A = rng.integers(0, 3, (n, n)) / 2.0
        inst = MatchInstance(A, np.zeros((n, n)))
        got = solve(inst, 1.0)
        best = max(sum(A[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
        lex = min(tuple((i, p[i]) for i in range(n)) for p in itertools.permutations(range(n))
                  if sum(A[i, p[i]] for i in range(n)) == best)
        assert got.pairs == lex


def test_solve_min_duals_certify():
    rng = np.random.default_rng(3)
    C = rng.random((5, 8))
    col, u, v = solve_min(C)
    reduced = C - u[:, None] - v[None, :]
    assert reduced.min() >= -1e-12
    assert np.allclose(reduced[np.arange(5), col], 0.0, atol=1e-12)
    assert np.all(v <= 1e-12)
    unassigned = np.setdiff1d(np.arange(8), col)
    assert np.allclose(v[unassigned], 0.0)


def test_jaccard_examples():
    a = Assignment(((0, 0), (1, 1), (2, 2), (3, 3)), 0.0, 0.5)
    assert jaccard(a, a) == 1.0
    b = Assignment(((0, 1), (1, 0), (2, 3), (3, 2)), 0.0, 0.5)
    assert jaccard(a, b) == 0.0
    c = Assignment(((0, 0), (1, 1), (2, 3), (3, 2)), 0.0, 0.5)
    assert jaccard(a, c) == pytest.approx(2 / 6)
    empty = Assignment((), 0.0, 0.5)
    assert jaccard(empty, empty) == 1.0


def test_assignment_rejects_duplicates():
    with pytest.raises(ValueError):
        Assignment(((0, 1), (1, 1)), 0.0, 0.5)


def test_sweep_endpoints_and_grid():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, 10, 10)
    assert alpha_sweep(inst, []) == []
    assert alpha_sweep(inst, [0.0])[0].jaccard_vs_distance == 1.0
    assert alpha_sweep(inst, [1.0])[0].jaccard_vs_comfort == 1.0
    recs = alpha_sweep(inst, alpha_grid(0.1))
    assert [r.alpha for r in recs] == [k / 10 for k in range(11)]
    assert recs[-1].total_compatibility >= recs[0].total_compatibility
    assert recs[0].total_distance <= recs[-1].total_distance
    with pytest.raises(ValueError):
        alpha_sweep(inst, [0.5, 1.2])


def test_sweep_csv(tmp_path):
    inst = random_instance(np.random.default_rng(5), 4, 3)
    write_sweep_csv(tmp_path / "s.csv", alpha_sweep(inst, alpha_grid(0.25)))
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "alpha,jaccard_vs_distance,jaccard_vs_comfort,total_distance,total_compatibility"
    assert len(lines) == 6


def test_instance_json():
    doc = {
        "passengers": [{"id": "a", "x": 0, "y": 0}, {"id": "b", "x": 3, "y": 4}],
        "drivers": [{"id": "u", "x": 0, "y": 0}],
        "A": [[0.2], [0.9]],
    }
    inst = MatchInstance.from_json(doc)
    assert inst.D.tolist() == [[0.0], [1.0]]
    assert solve(inst, 1.0).to_dict(inst)["matches"] == [{"passenger": "b", "driver": "u"}]
    doc["D"] = [[2.0], [1.0]]
    assert MatchInstance.from_json(doc).D.tolist() == [[1.0], [0.5]]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 7), st.integers(1, 7), st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))
def test_optimal_and_feasible(seed, n_p, n_d, alpha):
    inst = random_instance(np.random.default_rng(seed), n_p, n_d)
    got = solve(inst, alpha)
    assert len(got.pairs) == min(n_p, n_d)
    assert len({i for i, _ in got.pairs}) == len({j for _, j in got.pairs}) == len(got.pairs)
    assert got.objective_value == brute_force_best(inst.utility(alpha))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100.0))
def test_distance_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    pxy, dxy, A = rng.random((5, 2)), rng.random((6, 2)), rng.random((5, 6))
    raw = euclidean_distances(pxy, dxy)
    a = MatchInstance(A, normalize_distances(raw))
    b = MatchInstance(A, normalize_distances(raw * scale))
    for alpha in (0.0, 0.5, 1.0):
        assert solve(a, alpha).objective_value == pytest.approx(solve(b, alpha).objective_value, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_sweep_monotone_and_endpoint_optima(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(2, 8)), int(rng.integers(2, 8)))
    recs = alpha_sweep(inst, alpha_grid(0.1))
    comp = [r.total_compatibility for r in recs]
    dist = [r.total_distance for r in recs]
    assert all(b >= a - 1e-12 for a, b in zip(comp, comp[1:]))
    assert all(b >= a - 1e-12 for a, b in zip(dist, dist[1:]))
    assert -recs[0].total_distance == pytest.approx(brute_force_best(-inst.D), abs=1e-12)
    assert recs[-1].total_compatibility == pytest.approx(brute_force_best(inst.A), abs=1e-12)


def test_agrees_with_scipy_on_large_instances():
    optimize = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(6)
    for n_p, n_d in ((60, 60), (40, 75), (75, 40)):
        inst = random_instance(rng, n_p, n_d)
        U = inst.utility(0.5)
        rows, cols = optimize.linear_sum_assignment(U, maximize=True)
        assert solve(inst, 0.5).objective_value == pytest.approx(U[rows, cols].sum(), abs=1e-9)
