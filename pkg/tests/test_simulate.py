"""Synthetic-model tests: analytic steady states, Euler recursion, convergence."""

import numpy as np
import pytest
from scipy.linalg import expm

from gpgrn import simulate
from gpgrn.density import Grid
from gpgrn.errors import InvalidDataError
from gpgrn.simulate import (
    SyntheticModel,
    attach_knockouts,
    convergence_experiment,
    knockout_steady_state,
    make_dataset,
    simulate_euler,
    steady_state,
)


def ring_model(n=3, q=0.0, r=0.0):
    A = -np.eye(n)
    adj = np.zeros((n, n), dtype=int)
    for i in range(n):
        j = (i + 1) % n
        A[j, i] = 0.5
        adj[j, i] = 1
    return SyntheticModel(
        n=n, adjacency=adj, kind="linear", A=A, offset=np.ones(n),
        process_var=np.full(n, q), meas_var=np.full(n, r),
    )


class TestModel:
    def test_unstable_matrix_rejected(self):
        with pytest.raises(InvalidDataError, match="Hurwitz"):
            SyntheticModel(n=1, adjacency=np.zeros((1, 1)), A=np.array([[0.5]]))

    def test_adjacency_mismatch_rejected(self):
        A = np.array([[-1.0, 0.5], [0.0, -1.0]])
        with pytest.raises(InvalidDataError, match="adjacency"):
            SyntheticModel(n=2, adjacency=np.zeros((2, 2), dtype=int), A=A)

    def test_saturating_drift(self):
        m = SyntheticModel(
            n=2, adjacency=np.array([[0, 1], [0, 0]]), kind="saturating",
            hill_weights=np.array([[0.0, 2.0], [0.0, 0.0]]),
            decay=np.array([1.0, 1.0]), hill_k=0.5,
        )
        x = np.array([0.3, 0.5])
        h1 = 0.5**2 / (0.25 + 0.25)
        np.testing.assert_allclose(m.drift(x), [2.0 * h1 - 0.3, -0.5])


class TestSteadyStates:
    def test_global_steady_state_is_fixed_point(self):
        m = ring_model()
        ss = steady_state(m)
        np.testing.assert_allclose(m.drift(ss), 0.0, atol=1e-12)

    def test_knockout_clamps_and_balances(self):
        m = ring_model()
        ko = knockout_steady_state(m, 1)
        assert ko[1] == 0.0
        f = m.drift(ko)
        keep = [0, 2]
        np.testing.assert_allclose(f[keep], 0.0, atol=1e-12)


class TestEuler:
    def test_matches_manual_recursion(self):
        m = ring_model()
        grid = Grid(np.linspace(0, 1, 6), np.array([0, 5]), np.array([0]))
        traj = simulate_euler(m, np.array([1.0, 0.0, 0.0]), grid, np.random.default_rng(0))
        x = np.array([1.0, 0.0, 0.0])
        for k in range(5):
            x = x + 0.2 * m.drift(x)
            np.testing.assert_allclose(traj.X[k + 1], x, rtol=1e-12)

    def test_multi_series_restart(self):
        m = ring_model()
        grid = Grid(
            np.array([0.0, 0.5, 1.0, 0.0, 0.5, 1.0]),
            np.array([0, 2, 3, 5]),
            np.array([0, 3]),
        )
        x0 = np.array([[1.0, 0, 0], [0, 1.0, 0]])
        traj = simulate_euler(m, x0, grid, np.random.default_rng(0))
        np.testing.assert_allclose(traj.X[3], [0, 1.0, 0])

    def test_deterministic_converges_to_flow(self):
        m = ring_model()
        x0 = np.array([2.0, 0.0, 1.0])
        grid = Grid(np.linspace(0, 1, 2001), np.array([0, 2000]), np.array([0]))
        traj = simulate_euler(m, x0, grid, np.random.default_rng(0))
        exact = expm(m.A) @ x0 + (expm(m.A) - np.eye(3)) @ np.linalg.solve(m.A, m.offset)
        np.testing.assert_allclose(traj.X[-1], exact, atol=2e-3)


class TestConvergence:
    def test_deterministic_first_order(self):
        m = ring_model(q=0.0)
        table, slope = convergence_experiment(
            m, np.array([1.0, 0.0, 0.0]), T=1.0, n_levels=5, base_steps=8,
            rng=np.random.default_rng(0),
        )
        assert 0.8 < slope < 1.2
        errs = [e for _, e in table]
        assert errs == sorted(errs, reverse=True)  # finer mesh, smaller error

    def test_stochastic_at_least_order_point_eight(self):
        m = ring_model(q=0.05)
        _, slope = convergence_experiment(
            m, np.array([1.0, 0.0, 0.0]), T=1.0, n_levels=5, base_steps=8,
            rng=np.random.default_rng(1),
        )
        assert slope > 0.8


class TestDatasetGeneration:
    def test_shapes_and_truth(self):
        m = ring_model(q=1e-3, r=1e-3)
        ds, truth = make_dataset(m, n_series=2, m_points=5, dt=0.5, rng=np.random.default_rng(2))
        assert len(ds.series) == 2
        assert ds.series[0].values.shape == (5, 3)
        np.testing.assert_allclose(np.diff(ds.series[0].times), 0.5)
        np.testing.assert_array_equal(truth, m.adjacency)

    def test_attach_knockouts(self):
        m = ring_model()
        ds, _ = make_dataset(m, 1, 4, 1.0, np.random.default_rng(3))
        attach_knockouts(ds, m, [0, 2])
        assert [e.gene for e in ds.ko_experiments] == [0, 2]
        np.testing.assert_allclose(
            ds.ko_experiments[0].values, knockout_steady_state(m, 0)
        )
