import itertools

import numpy as np
import pytest

from conftest import fixture_points
from oracles import dist_matrix, recursive_split_ultrametric
from ultrafit.cutweights import exact_cut_weights
from ultrafit.dataset import PointSet, generate_uniform
from ultrafit.dendro import (
    Dendrogram,
    FitParams,
    cartesian_tree,
    distortion,
    exact_best_fit,
    exact_fit,
    fast_ultrametric,
    fit,
    ultrametric_distance,
)
from ultrafit.errors import DatasetError, DuplicatePoints, InvalidTree, MissingWeight
from ultrafit.kt import prim_mst


def delta_matrix(den):
    um = den.ultrametric()
    n = den.n
    iu, iv = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return um.distances(iu.ravel(), iv.ravel()).reshape(n, n)


class TestCartesian:
    def test_collinear(self, collinear):
        tree = prim_mst(collinear)
        den = cartesian_tree(tree, {(0, 1): 1.0, (1, 2): 3.0})
        assert den.left.tolist() == [0, 2] and den.right.tolist() == [1, 3]
        assert den.height.tolist() == [1.0, 3.0]
        assert den.size.tolist() == [2, 3]
        assert den.to_newick() == "(2,(0,1)1.0)3.0;"

    def test_single_leaf(self):
        ps = generate_uniform(1, 2, 0)
        den = cartesian_tree(prim_mst(ps), np.empty(0))
        assert den.n == 1 and den.n_merges == 0
        assert den.to_newick() == "0;"

    @pytest.mark.parametrize("seed", range(4))
    def test_recursive_split_oracle(self, seed):
        ps = generate_uniform(64, 3, seed)
        tree = prim_mst(ps)
        rng = np.random.default_rng(seed)
        # arbitrary weights with ties, so the tie-break order matters
        acw = rng.integers(1, 8, size=63).astype(float)
        den = cartesian_tree(tree, acw)
        keys = [(acw[i], tree.w[i], tree.u[i], tree.v[i]) for i in range(63)]
        ref = recursive_split_ultrametric(64, tree.u, tree.v, keys)
        assert np.array_equal(delta_matrix(den), ref)

    def test_missing_weight(self, collinear):
        with pytest.raises(MissingWeight) as exc:
            cartesian_tree(prim_mst(collinear), {(0, 1): 1.0})
        assert exc.value.edge == (1, 2)
        with pytest.raises(MissingWeight):
            cartesian_tree(prim_mst(collinear), [1.0])

    def test_reversed_keys_accepted(self, collinear):
        den = cartesian_tree(prim_mst(collinear), {(1, 0): 1.0, (2, 1): 3.0})
        assert den.height.tolist() == [1.0, 3.0]


class TestUltrametric:
    def test_collinear(self, collinear):
        den = exact_best_fit(collinear)
        assert ultrametric_distance(den, 0, 2) == 3.0
        assert ultrametric_distance(den, 1, 2) == 3.0
        assert ultrametric_distance(den, 0, 1) == 1.0
        assert ultrametric_distance(den, 2, 2) == 0.0

    def test_strong_triangle(self):
        ps = generate_uniform(40, 3, 3)
        d = delta_matrix(exact_best_fit(ps))
        for x, y, z in itertools.combinations(range(40), 3):
            assert d[x, z] <= max(d[x, y], d[y, z])

    def test_lca_against_leaf_sets(self):
        ps = generate_uniform(50, 2, 1)
        den = exact_best_fit(ps)
        ref = np.zeros((50, 50))
        for i, a, b in den.leaf_sets():
            ref[np.ix_(a, b)] = ref[np.ix_(b, a)] = den.height[i]
        assert np.array_equal(delta_matrix(den), ref)

    def test_range(self, collinear):
        with pytest.raises(IndexError):
            ultrametric_distance(exact_best_fit(collinear), 0, 3)


class TestDistortion:
    def test_collinear(self, collinear):
        rep = distortion(exact_best_fit(collinear), collinear)
        assert rep.dist_max == 1.5
        assert rep.argmax_pair == (1, 2)
        assert rep.dominance_violation_max == 1.0

    def test_two_points(self):
        ps = PointSet(np.array([[0.0, 0.0], [3.0, 4.0]]))
        den = exact_best_fit(ps)
        assert den.height.tolist() == [5.0]
        assert distortion(den, ps).dist_max == 1.0

    def test_brute_force(self):
        ps = generate_uniform(80, 3, 2)
        tree = prim_mst(ps)
        den = cartesian_tree(tree, tree.w)  # single linkage: not dominant
        d = dist_matrix(ps.coords)
        delta = delta_matrix(den)
        iu, iv = np.triu_indices(80, 1)
        rep = distortion(den, ps)
        assert rep.dist_max == pytest.approx((delta[iu, iv] / d[iu, iv]).max(), rel=1e-15)
        assert rep.dominance_violation_max == pytest.approx((d[iu, iv] / delta[iu, iv]).max(), rel=1e-15)
        assert rep.dominance_violation_max > 1

    def test_iris(self):
        ps = fixture_points("iris")
        assert distortion(exact_best_fit(ps), ps).dist_max == pytest.approx(8.07, abs=0.01)

    def test_exact_equals_max_cw_ratio(self):
        ps = generate_uniform(200, 8, 4)
        res = exact_fit(ps)
        rep = distortion(res.dendrogram, ps)
        assert rep.dist_max == pytest.approx((res.cut_weights.acw / res.tree.w).max(), rel=1e-9)
        assert rep.dominance_violation_max == 1.0

    def test_errors(self, collinear):
        with pytest.raises(DatasetError):
            distortion(exact_best_fit(PointSet(np.zeros((1, 2)))), PointSet(np.zeros((1, 2))))
        with pytest.raises(InvalidTree):
            distortion(exact_best_fit(collinear), generate_uniform(4, 1, 0))


class TestDendrogram:
    def test_csv_round_trip(self, tmp_path):
        den = exact_best_fit(generate_uniform(30, 2, 0))
        den.write_csv(tmp_path / "d.csv")
        back = Dendrogram.read_csv(tmp_path / "d.csv")
        assert np.array_equal(back.linkage(), den.linkage())
        assert len((tmp_path / "d.csv").read_text().splitlines()) == 29

    def test_empty_csv_is_single_leaf(self, tmp_path):
        (tmp_path / "d.csv").write_text("")
        assert Dendrogram.read_csv(tmp_path / "d.csv").n == 1

    @pytest.mark.parametrize("text", ["0,1,1.0\n", "0,x,1.0,2\n"])
    def test_malformed_csv(self, tmp_path, text):
        (tmp_path / "d.csv").write_text(text)
        with pytest.raises(InvalidTree):
            Dendrogram.read_csv(tmp_path / "d.csv")

    @pytest.mark.parametrize(
        "rows",
        [
            ([0, 2], [1, 3], [3.0, 1.0], [2, 3]),  # heights decrease
            ([0, 0], [1, 2], [1.0, 2.0], [2, 2]),  # leaf reused
            ([0, 2], [1, 4], [1.0, 2.0], [2, 3]),  # forward reference
            ([0, 2], [1, 3], [1.0, 2.0], [2, 4]),  # wrong size
        ],
    )
    def test_invalid(self, rows):
        with pytest.raises(InvalidTree):
            Dendrogram(3, *rows)

    def test_linkage_shape(self, collinear):
        assert exact_best_fit(collinear).linkage().shape == (2, 4)


class TestPipelines:
    def test_exact_route(self):
        ps = generate_uniform(60, 3, 1)
        a = fit(ps, FitParams(c=1))
        b = exact_best_fit(ps)
        assert np.array_equal(a.dendrogram.linkage(), b.linkage())

    def test_fast_deterministic(self):
        ps = generate_uniform(300, 3, 1)
        a, _ = fast_ultrametric(ps, FitParams(c=9, seed=4))
        b, _ = fast_ultrametric(ps, FitParams(c=9, seed=4))
        assert np.array_equal(a.linkage(), b.linkage())

    @pytest.mark.parametrize("seed", range(3))
    def test_strict_guarantee(self, seed):
        ps = generate_uniform(300, 4, seed)
        opt = distortion(exact_best_fit(ps), ps).dist_max
        den, counters = fast_ultrametric(ps, FitParams(c=9, multiplier="strict", seed=seed))
        rep = distortion(den, ps)
        assert rep.dist_max <= 9 * opt
        assert counters["kt"]["route"] == "harvest"

    def test_counters(self):
        ps = generate_uniform(300, 4, 0)
        res = fit(ps, FitParams(c=4, seed=1))
        assert {"kt", "cut_weights", "scale"} <= set(res.counters)
        assert res.counters["cut_weights"]["queries"] > 0
        assert res.runtime_ms["total"] > 0

    def test_duplicates_rejected(self):
        ps = PointSet(np.array([[0.0], [1.0], [0.0]]))
        with pytest.raises(DuplicatePoints):
            fit(ps, FitParams(c=4))
        with pytest.raises(DuplicatePoints):
            exact_fit(ps)

    def test_params(self):
        p = FitParams(c=9)
        assert p.gamma == p.alpha == 3.0
        assert FitParams(c=4, multiplier="1.5").cw_params.multiplier == 1.5
        for bad in (dict(c=0.5), dict(c=4, multiplier=0.5), dict(c=4, gamma=0.9)):
            with pytest.raises(ValueError):
                FitParams(**bad)

    def test_exact_cut_weights_reused_as_heights(self, collinear):
        res = exact_fit(collinear)
        assert np.array_equal(np.sort(res.dendrogram.height), np.sort(exact_cut_weights(collinear, res.tree).acw))
