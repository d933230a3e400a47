"""CSV ingestion, scaling, grid construction, and results-file round trips."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gpgrn import dataio
from gpgrn.dataio import (
    Dataset,
    KnockoutExperiment,
    ScalingTransform,
    TimeSeries,
    build_grid,
    load_dataset,
    load_edge_matrix,
    save_results,
    scale_dataset,
)
from gpgrn.errors import InvalidDataError


def simple_dataset():
    t = np.array([0.0, 1.0, 2.0])
    s1 = TimeSeries(t, np.array([[0.0, 5.0], [1.0, 6.0], [2.0, 9.0]]), np.ones((3, 2), bool))
    s2 = TimeSeries(t, np.array([[0.5, 5.5], [1.5, 7.0], [2.5, 8.0]]), np.ones((3, 2), bool))
    return Dataset(genes=["A", "B"], series=[s1, s2])


class TestLoading:
    def test_wide_layout(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text(
            "series,time,A,B\n"
            "1,0,0.1,1.0\n"
            "1,1,,1.5\n"
            "2,0,0.2,0.9\n"
            "2,2,0.3,\n"
        )
        ds = load_dataset(p)
        assert ds.genes == ["A", "B"]
        assert len(ds.series) == 2
        assert not ds.series[0].mask[1, 0]  # blank cell
        assert ds.series[1].times[1] == 2.0

    def test_long_layout(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text(
            "series,time,gene,value\n"
            "1,0,A,0.1\n1,0,B,1.0\n1,1,A,0.2\n1,1,B,\n"
        )
        ds = load_dataset(p)
        assert ds.genes == ["A", "B"]
        np.testing.assert_array_equal(ds.series[0].mask, [[True, True], [True, False]])

    def test_bad_number_reports_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("series,time,A\n1,0,oops\n1,1,0.2\n")
        with pytest.raises(InvalidDataError, match=":2"):
            load_dataset(p)

    def test_duplicate_timestamps_rejected(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("series,time,A\n1,0,0.1\n1,0,0.2\n")
        with pytest.raises(InvalidDataError, match="increasing"):
            load_dataset(p)

    def test_missing_file(self):
        with pytest.raises(InvalidDataError, match="not found"):
            load_dataset("/nonexistent/d.csv")

    def test_unrecognized_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("foo,bar\n1,2\n")
        with pytest.raises(InvalidDataError, match="header"):
            load_dataset(p)

    def test_perturbations(self, tmp_path):
        d = tmp_path / "d.csv"
        d.write_text("series,time,A,B\n1,0,0.1,1.0\n1,1,0.2,1.5\n")
        pert = tmp_path / "p.csv"
        pert.write_text(
            "perturbed_gene,kind,A,B\n"
            "A,knockout,0,0.8\n"
            ",steady_state,0.4,1.2\n"
        )
        ds = load_dataset(d, pert)
        assert len(ds.ko_experiments) == 1
        assert ds.ko_experiments[0].gene == 0
        assert len(ds.ss_measurements) == 1
        # gene A's own knockout is excluded from its usable points
        assert ds.ko_points_for_gene(0).shape == (0, 2)
        assert ds.ko_points_for_gene(1).shape == (1, 2)

    def test_perturbations_bad_kind(self, tmp_path):
        d = tmp_path / "d.csv"
        d.write_text("series,time,A\n1,0,0.1\n1,1,0.2\n")
        pert = tmp_path / "p.csv"
        pert.write_text("perturbed_gene,kind,A\nA,zap,0\n")
        with pytest.raises(InvalidDataError, match="kind"):
            load_dataset(d, pert)


class TestScaling:
    def test_unit_range_after_scaling(self):
        scaled, tf = scale_dataset(simple_dataset())
        vals = scaled.stacked_values
        np.testing.assert_allclose(vals.max(axis=0) - vals.min(axis=0), 1.0)
        assert vals.min() >= -1e-12

    def test_knockouts_share_the_map(self):
        ds = simple_dataset()
        ds.ko_experiments.append(KnockoutExperiment(0, "knockout", np.array([0.0, 20.0])))
        scaled, tf = scale_dataset(ds)
        np.testing.assert_allclose(
            scaled.ko_experiments[0].values, tf.apply(np.array([0.0, 20.0]))
        )
        # the knockout value extends gene B's range, so it sets the maximum
        assert scaled.ko_experiments[0].values[1] == pytest.approx(1.0)

    @given(arrays(np.float64, (4, 2), elements=st.floats(-100, 100)))
    @settings(max_examples=50)
    def test_round_trip(self, vals):
        tf = ScalingTransform(offset=np.array([1.0, -2.0]), scale=np.array([3.0, 0.5]))
        np.testing.assert_allclose(tf.invert(tf.apply(vals)), vals, atol=1e-9)

    def test_constant_gene_keeps_scale_one(self):
        t = np.array([0.0, 1.0])
        s = TimeSeries(t, np.array([[2.0, 1.0], [2.0, 3.0]]), np.ones((2, 2), bool))
        scaled, tf = scale_dataset(Dataset(genes=["A", "B"], series=[s]))
        assert tf.scale[0] == 1.0
        np.testing.assert_allclose(scaled.series[0].values[:, 0], 0.0)


class TestGrid:
    def test_measurement_times_are_grid_points(self):
        ds = simple_dataset()
        grid = build_grid(ds, refinement=3)
        stacked_times = np.concatenate([s.times for s in ds.series])
        np.testing.assert_allclose(grid.tau[grid.meas_index], stacked_times)

    def test_refinement_one_reproduces_measurement_grid(self):
        ds = simple_dataset()
        grid = build_grid(ds, refinement=1)
        assert grid.n_points == 6
        np.testing.assert_array_equal(grid.meas_index, np.arange(6))

    @given(st.integers(1, 6))
    @settings(max_examples=20)
    def test_point_counts(self, refinement):
        ds = simple_dataset()
        grid = build_grid(ds, refinement)
        per_series = 1 + 2 * refinement
        assert grid.n_points == 2 * per_series
        assert grid.n_transitions == 2 * (per_series - 1)

    def test_series_starts(self):
        grid = build_grid(simple_dataset(), refinement=2)
        np.testing.assert_array_equal(grid.series_starts, [0, 5])

    def test_bad_refinement(self):
        with pytest.raises(InvalidDataError):
            build_grid(simple_dataset(), refinement=0)


class TestResults:
    def test_round_trip_and_ordering(self, tmp_path):
        rng = np.random.default_rng(0)
        mat = rng.random((3, 3))
        genes = ["A", "B", "C"]
        out = tmp_path / "edges.csv"
        save_results(mat, genes, {"note": "x"}, out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "from,to,confidence,self_loop"
        confs = [float(l.split(",")[2]) for l in lines[1:]]
        assert confs == sorted(confs, reverse=True)
        got, got_genes = load_edge_matrix(out)
        assert got_genes == genes
        np.testing.assert_allclose(got, mat, rtol=1e-9)
        meta = out.with_suffix(".csv.meta.json")
        assert meta.exists() and '"note"' in meta.read_text()

    def test_plain_edge_list(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("from,to,value\nB,A,1\nC,A,0.5\n")
        mat, genes = load_edge_matrix(p)
        assert genes == ["A", "B", "C"]
        assert mat[0, 1] == 1.0   # B -> A stored at (target A, source B)
        assert mat[0, 2] == 0.5

    def test_edge_list_without_values(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("from,to\nB,A\n")
        mat, genes = load_edge_matrix(p)
        assert mat[genes.index("A"), genes.index("B")] == 1.0

    def test_bad_header(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("source,target\nB,A\n")
        with pytest.raises(InvalidDataError):
            load_edge_matrix(p)


class TestValidation:
    def test_series_needs_two_points(self):
        with pytest.raises(InvalidDataError):
            TimeSeries(np.array([0.0]), np.zeros((1, 1)), np.ones((1, 1), bool))

    def test_dataset_needs_series(self):
        with pytest.raises(InvalidDataError):
            Dataset(genes=["A"], series=[])

    def test_column_count_checked(self):
        t = np.array([0.0, 1.0])
        s = TimeSeries(t, np.zeros((2, 2)), np.ones((2, 2), bool))
        with pytest.raises(InvalidDataError):
            Dataset(genes=["A"], series=[s])
