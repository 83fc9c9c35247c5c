import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dist_matrix, literal_cut_weights
from ultrafit.afn import AfnParams, initialize
from ultrafit.cutweights import CwParams, approximate_cut_weights, exact_cut_weights
from ultrafit.dataset import PointSet, estimate_scale_range, find_duplicate, load_csv, save_csv
from ultrafit.dendro import Dendrogram, cartesian_tree, distortion, exact_fit
from ultrafit.kt import EdgeList, kruskal_mst, prim_mst
from ultrafit.lsh import calibrate, hash_points

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])

coordinate = st.floats(-100, 100, allow_nan=False, allow_infinity=False, width=32)


@st.composite
def point_sets(draw, min_n=2, max_n=25, max_d=4):
    n = draw(st.integers(min_n, max_n))
    d = draw(st.integers(1, max_d))
    # distinct first coordinates keep the points distinct without filtering
    first = draw(arrays(np.float64, n, elements=coordinate, unique=True))
    rest = draw(arrays(np.float64, (n, d - 1), elements=coordinate))
    ps = PointSet(np.column_stack((first, rest)))
    assert find_duplicate(ps) is None
    return ps


@SETTINGS
@given(point_sets(), st.integers(0, 2**32), st.floats(0.01, 10))
def test_hash_partition(ps, seed, radius):
    params = calibrate(max(ps.n, 2), 2.0, radius=radius, seed=seed)
    b = hash_points(ps, params, 0)
    order, starts = b.to_csr()
    assert sorted(order.tolist()) == list(range(ps.n))
    assert starts[-1] == ps.n
    assert sum(len(g) for g in b.groups().values()) == ps.n


@SETTINGS
@given(point_sets())
def test_exact_scale(ps):
    d = dist_matrix(ps.coords)[np.triu_indices(ps.n, 1)]
    sc = estimate_scale_range(ps)
    assert sc.r_min == d.min() and sc.r_max == d.max()


@SETTINGS
@given(point_sets())
def test_mst_is_minimax(ps):
    tree = prim_mst(ps)
    iu, iv = np.triu_indices(ps.n, 1)
    full = kruskal_mst(EdgeList.from_pairs(ps, iu, iv), ps.n)
    assert np.isclose(tree.total_weight, full.total_weight, rtol=1e-12, atol=0)
    assert np.array_equal(np.sort(tree.w), np.sort(full.w))


@SETTINGS
@given(point_sets())
def test_cut_weights_literal(ps):
    tree = prim_mst(ps)
    assert np.array_equal(exact_cut_weights(ps, tree).acw, literal_cut_weights(ps.coords, tree.u, tree.v, tree.w))


@SETTINGS
@given(point_sets(min_n=3))
def test_exact_fit_dominates_and_matches_cut_ratio(ps):
    res = exact_fit(ps)
    rep = distortion(res.dendrogram, ps)
    assert rep.dominance_violation_max == 1.0
    assert np.isclose(rep.dist_max, (res.cut_weights.acw / res.tree.w).max(), rtol=1e-9, atol=0)


@SETTINGS
@given(point_sets(min_n=3, max_n=18))
def test_ultrametric_inequality(ps):
    den = exact_fit(ps).dendrogram
    um = den.ultrametric()
    n = ps.n
    iu, iv = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    delta = um.distances(iu.ravel(), iv.ravel()).reshape(n, n)
    assert np.all(np.diag(delta) == 0) and np.array_equal(delta, delta.T)
    assert np.all(delta[:, :, None] <= np.maximum(delta[:, None, :], delta.T[None, :, :]) + 0.0)


@SETTINGS
@given(point_sets(min_n=2), st.sampled_from([2.0, 3.0]), st.integers(0, 1000))
def test_strict_acw_never_below_cw(ps, alpha, seed):
    tree = prim_mst(ps)
    cw = exact_cut_weights(ps, tree).acw
    acw = approximate_cut_weights(ps, tree, CwParams(alpha, "strict"), AfnParams.for_size(ps.n, alpha, seed)).acw
    # ACW is alpha times a real cross distance, so it can exceed CW only up to alpha
    assert np.all(acw <= alpha * cw * (1 + 1e-12))


@SETTINGS
@given(point_sets(min_n=2, max_n=40), st.integers(1, 6), st.randoms(use_true_random=False))
def test_afn_rows_are_top_m(ps, cap, rnd):
    stc = initialize(ps, AfnParams(2.0, 5, cap, 0))
    for _ in range(ps.n - 1):
        roots = stc.clusters()
        a, b = rnd.sample(roots, 2)
        h = stc.merge(a, b)
        ids, betas = stc.stored(h)
        members = stc.members(h)
        for i in range(5):
            col = stc.betas[members, i]
            o = np.lexsort((members, -col))[:cap]
            assert ids[i].tolist() == members[o].tolist()


@SETTINGS
@given(point_sets(min_n=1, max_n=10))
def test_points_csv_round_trip(tmp_path_factory, ps):
    path = tmp_path_factory.mktemp("csv") / "p.csv"
    save_csv(ps, path)
    assert np.array_equal(load_csv(path).coords, ps.coords)


@SETTINGS
@given(point_sets(min_n=3), st.randoms(use_true_random=False))
def test_optimal_distortion_permutation_invariant(ps, rnd):
    perm = list(range(ps.n))
    rnd.shuffle(perm)
    a = distortion(exact_fit(ps).dendrogram, ps).dist_max
    qs = PointSet(ps.coords[perm])
    b = distortion(exact_fit(qs).dendrogram, qs).dist_max
    assert np.isclose(a, b, rtol=1e-12, atol=0)


@SETTINGS
@given(point_sets(min_n=2), st.lists(st.floats(0, 50, allow_nan=False), min_size=24, max_size=24))
def test_cartesian_round_trip(tmp_path_factory, ps, weights):
    tree = prim_mst(ps)
    den = cartesian_tree(tree, np.array(weights[: len(tree)]))
    assert np.all(np.diff(den.height) >= 0)
    path = tmp_path_factory.mktemp("den") / "d.csv"
    den.write_csv(path)
    assert np.array_equal(Dendrogram.read_csv(path).linkage(), den.linkage())
