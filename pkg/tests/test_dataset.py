import io

import numpy as np
import pytest

from conftest import DATA
from oracles import fsum_distance
from ultrafit.dataset import (
    DistanceScale,
    PointSet,
    cross_extrema,
    dedupe,
    distance,
    estimate_scale_range,
    find_duplicate,
    generate_uniform,
    jl_project,
    load_csv,
    pairwise_distances,
    save_csv,
    standardize,
)
from ultrafit.errors import DatasetError, DuplicatePoints, EmptyInput, NonNumericField, RaggedRow


def write(tmp_path, text, name="p.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_simple(self, tmp_path):
        ps = load_csv(write(tmp_path, "0,0\n3,4"))
        assert (ps.n, ps.d) == (2, 2)
        assert ps.coords.tolist() == [[0.0, 0.0], [3.0, 4.0]]

    def test_iris_shape(self):
        ps = load_csv(DATA / "iris.csv")
        assert (ps.n, ps.d) == (150, 4)

    def test_ragged_row(self, tmp_path):
        with pytest.raises(RaggedRow) as exc:
            load_csv(write(tmp_path, "1,2\n3"))
        assert exc.value.row == 2

    def test_non_numeric(self, tmp_path):
        with pytest.raises(NonNumericField) as exc:
            load_csv(write(tmp_path, "1,2\n3,x\n"))
        assert exc.value.row == 2

    @pytest.mark.parametrize("bad", ["nan", "inf", "-inf"])
    def test_non_finite_rejected(self, tmp_path, bad):
        with pytest.raises(NonNumericField):
            load_csv(write(tmp_path, f"1,{bad}\n"))

    def test_empty(self, tmp_path):
        with pytest.raises(EmptyInput):
            load_csv(write(tmp_path, ""))
        with pytest.raises(EmptyInput):
            load_csv(write(tmp_path, "a,b\n"), has_header=True)

    def test_header_row_skipped(self, tmp_path):
        ps = load_csv(write(tmp_path, "x,y\n1,2\n3,4\n"), has_header=True)
        assert ps.n == 2

    def test_header_is_an_error_without_flag(self, tmp_path):
        with pytest.raises(NonNumericField) as exc:
            load_csv(write(tmp_path, "x,y\n1,2\n"))
        assert exc.value.row == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_csv(tmp_path / "absent.csv")

    def test_round_trip(self, tmp_path):
        ps = generate_uniform(20, 3, 5)
        save_csv(ps, tmp_path / "out.csv")
        assert np.array_equal(load_csv(tmp_path / "out.csv").coords, ps.coords)
        buf = io.StringIO()
        save_csv(ps, buf)
        assert buf.getvalue() == (tmp_path / "out.csv").read_text()


class TestPointSet:
    def test_rejects_non_finite(self):
        with pytest.raises(DatasetError):
            PointSet(np.array([[0.0, np.nan]]))

    @pytest.mark.parametrize("shape", [(0, 2), (2, 0), (3,)])
    def test_rejects_bad_shapes(self, shape):
        with pytest.raises(DatasetError):
            PointSet(np.zeros(shape))

    def test_immutable_copy(self):
        raw = np.zeros((2, 2))
        ps = PointSet(raw)
        raw[0, 0] = 9.0
        assert ps.coords[0, 0] == 0.0
        with pytest.raises(ValueError):
            ps.coords[0, 0] = 1.0


class TestGenerate:
    def test_deterministic(self):
        a = generate_uniform(100, 4, 11)
        b = generate_uniform(100, 4, 11)
        assert np.array_equal(a.coords, b.coords)
        assert not np.array_equal(a.coords, generate_uniform(100, 4, 12).coords)

    def test_documented_rng(self):
        ps = generate_uniform(3, 1, 7)
        ref = np.random.default_rng(np.random.SeedSequence(entropy=7, spawn_key=(0,))).random((3, 1))
        assert np.array_equal(ps.coords, ref)
        assert np.all((ps.coords >= 0) & (ps.coords <= 1))

    def test_unit_cube(self):
        c = generate_uniform(2000, 5, 0).coords
        assert c.min() >= 0 and c.max() <= 1

    def test_large_shape(self):
        ps = generate_uniform(10**5, 100, 1)
        assert (ps.n, ps.d) == (10**5, 100)

    @pytest.mark.parametrize("n,d", [(0, 3), (3, 0)])
    def test_bad_sizes(self, n, d):
        with pytest.raises(DatasetError):
            generate_uniform(n, d, 0)


class TestDistance:
    def test_345(self):
        ps = PointSet(np.array([[0.0, 0.0], [3.0, 4.0]]))
        assert distance(ps, 0, 1) == 5.0
        assert distance(ps, 1, 1) == 0.0

    def test_against_fsum(self):
        rng = np.random.default_rng(3)
        ps = PointSet(rng.normal(size=(50, 17)) * 10)
        for _ in range(200):
            u, v = rng.integers(0, 50, size=2)
            ref = fsum_distance(ps.coords[u], ps.coords[v])
            assert distance(ps, u, v) == pytest.approx(ref, rel=1e-12, abs=0)

    def test_out_of_range(self):
        ps = generate_uniform(3, 2, 0)
        with pytest.raises(IndexError):
            distance(ps, 0, 3)
        with pytest.raises(IndexError):
            distance(ps, -1, 0)

    def test_pairwise_matches_scalar(self):
        ps = generate_uniform(30, 3, 2)
        d = pairwise_distances(ps)
        for u in range(30):
            for v in range(30):
                assert d[u, v] == distance(ps, u, v)

    def test_cross_extrema(self):
        ps = generate_uniform(40, 3, 9)
        a, b = np.arange(0, 15), np.arange(15, 40)
        d = pairwise_distances(ps)[np.ix_(a, b)]
        dmin, pmin, dmax, pmax = cross_extrema(ps.coords, a, b)
        assert dmin == d.min() and dmax == d.max()
        assert distance(ps, *pmin) == dmin and distance(ps, *pmax) == dmax


class TestScale:
    def test_collinear(self, collinear):
        sc = estimate_scale_range(collinear)
        assert (sc.r_min, sc.r_max, sc.spread, sc.exact) == (1.0, 3.0, 3.0, True)

    def test_two_points(self):
        ps = PointSet(np.array([[0.0, 0.0], [3.0, 4.0]]))
        sc = estimate_scale_range(ps)
        assert sc.r_min == sc.r_max == 5.0 and sc.spread == 1.0

    def test_duplicates(self):
        ps = PointSet(np.array([[0.0], [1.0], [0.0]]))
        with pytest.raises(DuplicatePoints) as exc:
            estimate_scale_range(ps)
        assert exc.value.pair == (0, 2)

    def test_single_point(self):
        with pytest.raises(DatasetError):
            estimate_scale_range(generate_uniform(1, 2, 0))

    def test_exact_matches_brute_force(self):
        ps = generate_uniform(300, 4, 8)
        d = pairwise_distances(ps)[np.triu_indices(300, 1)]
        sc = estimate_scale_range(ps)
        assert sc.exact and sc.r_min == d.min() and sc.r_max == d.max()

    def test_sampled_mode(self):
        ps = generate_uniform(3000, 3, 4)
        d = pairwise_distances(ps)[np.triu_indices(3000, 1)]
        sc = estimate_scale_range(ps, exact_threshold=100)
        assert not sc.exact
        assert sc.r_max >= d.max()
        assert sc.r_max <= 2 * d.max() + 1e-12
        assert 0 < sc.r_min <= sc.r_max

    def test_scale_invariants(self):
        with pytest.raises(ValueError):
            DistanceScale(2.0, 1.0, True)
        with pytest.raises(ValueError):
            DistanceScale(0.0, 1.0, True)


class TestPreprocessing:
    def test_dedupe_keeps_first(self):
        ps = PointSet(np.array([[1.0], [0.0], [1.0], [2.0]]))
        out, keep = dedupe(ps)
        assert keep.tolist() == [0, 1, 3]
        assert out.coords.ravel().tolist() == [1.0, 0.0, 2.0]
        assert find_duplicate(out) is None

    def test_iris_has_one_repeat(self):
        ps = load_csv(DATA / "iris.csv")
        assert find_duplicate(ps) is not None
        assert dedupe(ps)[0].n == 149

    def test_standardize(self):
        ps = standardize(PointSet(np.array([[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]])))
        assert np.allclose(ps.coords.mean(axis=0), 0)
        assert np.allclose(ps.coords[:, 0].std(), 1)
        assert np.all(ps.coords[:, 1] == 0)


class TestJl:
    def test_distances_roughly_preserved(self):
        ps = generate_uniform(200, 300, 5)
        out = jl_project(ps, 64, 1)
        rng = np.random.default_rng(0)
        errs = []
        for _ in range(100):
            u, v = rng.choice(200, size=2, replace=False)
            before = distance(ps, u, v)
            errs.append(((distance(out, u, v) - before) / before) ** 2)
        assert np.mean(errs) < 0.1

    def test_single_point(self):
        out = jl_project(generate_uniform(1, 5, 0), 3, 0)
        assert (out.n, out.d) == (1, 3)

    def test_deterministic(self):
        ps = generate_uniform(10, 5, 0)
        assert np.array_equal(jl_project(ps, 4, 2).coords, jl_project(ps, 4, 2).coords)

    def test_bad_dim(self):
        with pytest.raises(ValueError):
            jl_project(generate_uniform(2, 2, 0), 0, 0)
