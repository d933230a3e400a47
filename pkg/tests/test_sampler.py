"""Sampler tests: proposal kernels, reference measure, determinism, checkpoints."""

import numpy as np
import pytest
from scipy.stats import chisquare, kstest, norm

from gpgrn import sampler, simulate
from gpgrn.dataio import Dataset, TimeSeries, build_grid
from gpgrn.density import Grid
from gpgrn.sampler import (
    ChainState,
    CnReference,
    SamplerConfig,
    basis_matrix,
    cn_proposal,
    pool_chains,
    propose_indicator_flip,
    propose_rw_reflected,
    propose_trajectory_basis,
    reflect_into_box,
    resume_chain,
    run_chain,
    run_chains,
    save_checkpoint,
    sweep,
)


def tiny_dataset(seed=0, n=2, m_points=8, n_series=2):
    rng = np.random.default_rng(seed)
    A = -np.eye(n)
    adj = np.zeros((n, n), dtype=int)
    for i in range(n - 1):
        A[i + 1, i] = 0.6
        adj[i + 1, i] = 1
    model = simulate.SyntheticModel(
        n=n, adjacency=adj, kind="linear", A=A, offset=np.ones(n),
        process_var=np.full(n, 1e-3), meas_var=np.full(n, 1e-3),
    )
    ds, truth = simulate.make_dataset(model, n_series, m_points, 0.5, rng)
    return ds, truth, model


class TestElementaryProposals:
    def test_indicator_flip_changes_exactly_one_bit(self):
        rng = np.random.default_rng(0)
        row = np.array([0, 1, 1, 0, 1], dtype=np.int8)
        for _ in range(50):
            new, j = propose_indicator_flip(row, rng)
            assert np.sum(new != row) == 1
            assert new[j] != row[j]

    def test_indicator_flip_position_uniform(self):
        rng = np.random.default_rng(1)
        counts = np.zeros(4)
        for _ in range(4000):
            _, j = propose_indicator_flip(np.zeros(4, dtype=np.int8), rng)
            counts[j] += 1
        assert chisquare(counts).pvalue > 0.01

    def test_reflected_rw_matches_folded_normal(self):
        # |x + N(0, s^2)| has CDF Phi((t-x)/s) - Phi((-t-x)/s)
        rng = np.random.default_rng(2)
        x, s = 0.4, 0.7
        draws = np.array([propose_rw_reflected(x, s, rng) for _ in range(4000)])
        assert np.all(draws >= 0)
        cdf = lambda t: norm.cdf((t - x) / s) - norm.cdf((-t - x) / s)
        assert kstest(draws, cdf).pvalue > 0.01

    def test_reflect_into_box_identity_inside(self):
        lo, hi = np.array([0.0]), np.array([1.0])
        assert reflect_into_box(np.array([0.3]), lo, hi)[0] == pytest.approx(0.3)

    def test_reflect_into_box_folds_correctly(self):
        lo, hi = np.array([0.0]), np.array([1.0])
        assert reflect_into_box(np.array([1.2]), lo, hi)[0] == pytest.approx(0.8)
        assert reflect_into_box(np.array([-0.2]), lo, hi)[0] == pytest.approx(0.2)
        assert reflect_into_box(np.array([2.4]), lo, hi)[0] == pytest.approx(0.4)


class TestBasisProposal:
    def grid(self):
        ds, _, _ = tiny_dataset(n_series=2)
        return build_grid(ds, refinement=2)

    def test_block_diagonal_per_series(self):
        grid = self.grid()
        B = basis_matrix(grid)
        slices = grid.series_slices()
        M = slices[0].stop - slices[0].start - 1
        cols0 = 2 * (M // 2)
        # rows of the second series are zero in the first series' columns
        assert np.allclose(B[slices[1], :cols0], 0.0)
        assert np.allclose(B[slices[0], cols0:], 0.0)

    def test_damping_decreases_column_norms(self):
        grid = self.grid()
        B = basis_matrix(grid)
        sl = grid.series_slices()[0]
        M = sl.stop - sl.start - 1
        m_b = M // 2
        sine_norms = [np.linalg.norm(B[sl, j]) for j in range(m_b)]
        assert sine_norms == sorted(sine_norms, reverse=True)

    def test_proposal_covariance_is_eps_BBt(self):
        grid = self.grid()
        B = basis_matrix(grid)
        rng = np.random.default_rng(3)
        eps = 0.2
        x = np.zeros(grid.n_points)
        draws = np.stack([propose_trajectory_basis(x, B, eps, rng) for _ in range(20000)])
        emp = np.cov(draws.T, bias=True)
        np.testing.assert_allclose(emp, eps * B @ B.T, atol=0.02)


class TestCnReference:
    def line_grid(self, n_steps=20, T=1.0):
        return Grid(np.linspace(0, T, n_steps + 1), np.array([0, n_steps]), np.array([0]))

    def test_mean_interpolates_anchors(self):
        grid = self.line_grid()
        ref = CnReference(grid, np.array([0, 20]), np.array([1.0, 3.0]))
        np.testing.assert_allclose(ref.mean, 1.0 + 2.0 * grid.tau)

    def test_pinned_bridge_noise_variance(self):
        # r = 0: anchors exact, interior variance q t (1 - t/T)
        grid = self.line_grid(n_steps=10, T=2.0)
        ref = CnReference(grid, np.array([0, 10]), np.zeros(2))
        rng = np.random.default_rng(4)
        q = 0.7
        draws = np.stack([ref.sample_noise(q, 0.0, rng) for _ in range(40000)])
        t = grid.tau
        expected = q * t * (1 - t / 2.0)
        emp = draws.var(axis=0)
        np.testing.assert_allclose(emp[1:-1], expected[1:-1], rtol=0.06)
        assert emp[0] == 0.0 and emp[-1] == 0.0

    def test_free_tail_is_brownian(self):
        # anchor only at t=0: variance grows like q t
        grid = self.line_grid(n_steps=8, T=1.0)
        ref = CnReference(grid, np.array([0]), np.zeros(1))
        rng = np.random.default_rng(5)
        draws = np.stack([ref.sample_noise(1.0, 0.0, rng) for _ in range(30000)])
        np.testing.assert_allclose(draws.var(axis=0)[1:], grid.tau[1:], rtol=0.06)

    def test_bridge_density_formula(self):
        # three points, anchors at both ends: all-step increments minus the
        # endpoint increment term
        grid = Grid(np.array([0.0, 0.4, 1.0]), np.array([0, 2]), np.array([0]))
        ref = CnReference(grid, np.array([0, 2]), np.zeros(2))
        x = np.array([0.1, 0.5, -0.3])
        q = 0.9
        expected = (
            norm.logpdf(x[1] - x[0], 0, np.sqrt(q * 0.4))
            + norm.logpdf(x[2] - x[1], 0, np.sqrt(q * 0.6))
            - norm.logpdf(x[2] - x[0], 0, np.sqrt(q * 1.0))
        )
        assert ref.log_bridge_density(x, q) == pytest.approx(expected, rel=1e-12)

    def test_cn_update_preserves_reference_gaussian(self):
        # with a flat target the CN chain's stationary law is N(mean, P)
        grid = self.line_grid(n_steps=10, T=1.0)
        ref = CnReference(grid, np.array([0, 10]), np.zeros(2))
        rng = np.random.default_rng(6)
        q, eps = 1.0, 0.6
        x = ref.mean.copy()
        mid_vals = []
        for it in range(30000):
            x = cn_proposal(x, ref.mean, ref.sample_noise(q, 0.0, rng), eps)
            if it > 500:
                mid_vals.append(x[5])
        expected_var = q * 0.5 * (1 - 0.5)
        assert np.var(mid_vals) == pytest.approx(expected_var, rel=0.08)


class TestChainMechanics:
    def test_run_chain_deterministic(self):
        ds, _, _ = tiny_dataset()
        cfg = SamplerConfig(n_burn=30, n_samples=40, thinning=2, seed=7)
        a = run_chain(ds, cfg)
        b = run_chain(ds, cfg)
        np.testing.assert_array_equal(a.S_sum, b.S_sum)
        assert a.accepts == b.accepts

    def test_basis_proposal_runs(self):
        ds, _, _ = tiny_dataset()
        cfg = SamplerConfig(n_burn=20, n_samples=20, thinning=1, seed=1, proposal="basis")
        out = run_chain(ds, cfg)
        assert out.n_collected == 20
        assert out.proposals["trajectory"] > 0

    def test_augmented_dataset_runs(self):
        ds, _, model = tiny_dataset()
        simulate.attach_knockouts(ds, model, [0])
        cfg = SamplerConfig(n_burn=20, n_samples=20, thinning=1, seed=2)
        out = run_chain(ds, cfg)
        assert "steady_state" in out.proposals and "aug_var" in out.proposals

    def test_zero_samples_gives_empty_output(self):
        ds, _, _ = tiny_dataset()
        out = run_chain(ds, SamplerConfig(n_burn=5, n_samples=0, thinning=1, seed=0))
        assert out.n_collected == 0
        np.testing.assert_array_equal(out.confidence(), 0.0)

    def test_freeze_diag_pins_self_links(self):
        ds, _, _ = tiny_dataset()
        cfg = SamplerConfig(n_burn=20, n_samples=30, thinning=1, seed=3, freeze_diag=True)
        out = run_chain(ds, cfg)
        np.testing.assert_array_equal(np.diag(out.S_sum), out.n_collected)

    def test_pool_chains_count_weighted(self):
        ds, _, _ = tiny_dataset()
        outs = run_chains(ds, SamplerConfig(n_burn=10, n_samples=10, thinning=1, seed=4, n_chains=2))
        pooled = pool_chains(outs)
        expected = (outs[0].S_sum + outs[1].S_sum) / (outs[0].n_collected + outs[1].n_collected)
        np.testing.assert_allclose(pooled.matrix, expected)

    def test_adaptation_freezes_after_burn_in(self):
        ds, _, _ = tiny_dataset()
        cfg = SamplerConfig(n_burn=50, n_samples=10, thinning=1, seed=5)
        state = ChainState(ds, cfg, np.random.default_rng(5))
        for _ in range(cfg.n_burn):
            sweep(state)
        state.adapting = False
        frozen = dict(state.step_mult)
        for _ in range(20):
            sweep(state)
        assert state.step_mult == frozen


class TestCheckpointing:
    def test_resume_reproduces_uninterrupted_run(self, tmp_path):
        ds, _, _ = tiny_dataset()
        full_cfg = SamplerConfig(n_burn=20, n_samples=30, thinning=2, seed=9)
        reference = run_chain(ds, full_cfg)

        # run half the sweeps, checkpoint, then resume to the full count
        state = ChainState(ds, full_cfg, np.random.default_rng(full_cfg.seed))
        half = sampler.ChainOutput(
            S_sum=np.zeros((state.n, state.n)), n_collected=0,
            accepts={}, proposals={}, genes=list(ds.genes),
        )
        total = full_cfg.n_burn + full_cfg.n_samples * full_cfg.thinning
        while state.sweeps_done < total // 2:
            sweep(state)
            if state.sweeps_done >= full_cfg.n_burn:
                state.adapting = False
            if state.sweeps_done > full_cfg.n_burn:
                post = state.sweeps_done - full_cfg.n_burn
                if post % full_cfg.thinning == 0:
                    half.S_sum += state.hyper.indicators
                    half.n_collected += 1
        ckpt = tmp_path / "chain.json"
        save_checkpoint(state, half, ckpt)
        resumed = resume_chain(ds, full_cfg, ckpt)
        np.testing.assert_array_equal(resumed.S_sum, reference.S_sum)
        assert resumed.n_collected == reference.n_collected

    def test_version_mismatch_rejected(self, tmp_path):
        ds, _, _ = tiny_dataset()
        p = tmp_path / "bad.json"
        p.write_text('{"version": 999}')
        with pytest.raises(Exception):
            resume_chain(ds, SamplerConfig(seed=0), p)


class TestPriorRecoverySmoke:
    def test_link_frequency_tracks_eta(self):
        # constant likelihood: indicator marginal must approach eta/(1+eta)
        ds, _, _ = tiny_dataset(n=2)
        eta = 0.25
        cfg = SamplerConfig(
            n_burn=300, n_samples=1500, thinning=3, seed=11,
            constant_likelihood=True, eta=eta, adapt=False,
        )
        out = run_chain(ds, cfg)
        freq = out.S_sum.mean() / out.n_collected
        assert freq == pytest.approx(eta / (1 + eta), abs=0.05)


class TestConfigValidation:
    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            SamplerConfig(cn_epsilon=1.5)

    def test_bad_proposal(self):
        with pytest.raises(ValueError):
            SamplerConfig(proposal="warp")

    def test_eta_default_is_one_over_n(self):
        assert SamplerConfig().resolved_eta(5) == pytest.approx(0.2)


class TestFastFactorPath:
    """The sampler's fused low-rank factor must match the reference function."""

    def _mid_chain_state(self, seed=5):
        ds, _, _ = tiny_dataset(seed=seed, n=3, m_points=10)
        cfg = sampler.SamplerConfig(seed=seed, n_burn=0, n_samples=1, thinning=1)
        state = sampler.ChainState(ds, cfg, np.random.default_rng(seed))
        for _ in range(60):
            sampler.sweep(state)
        return state

    def test_matches_reference_density_mid_chain(self):
        from gpgrn import density

        state = self._mid_chain_state()
        for gene in range(state.n):
            params = state.hyper.kernel_params(gene)
            fast = state._gene_factor(gene)
            ref = density.log_gene_factor_pseudo(
                gene, params, float(state.hyper.process_var[gene]),
                state.traj, state.hyper.pseudo,
            )
            assert fast == pytest.approx(ref, rel=1e-6, abs=1e-6)

    def test_log_p_cache_consistent_after_sweeps(self):
        state = self._mid_chain_state(seed=6)
        recomputed = np.array([state._gene_factor(i) for i in range(state.n)])
        assert np.allclose(state.log_P, recomputed, rtol=1e-9, atol=1e-9)

    def test_bridge_diff_equals_density_difference(self):
        ds, _, _ = tiny_dataset(seed=7, n=2, m_points=9)
        cfg = sampler.SamplerConfig(seed=7)
        state = sampler.ChainState(ds, cfg, np.random.default_rng(7))
        rng = np.random.default_rng(8)
        ref = state.cn_refs[0]
        x_old = state.traj.X[:, 0]
        x_new = x_old + 0.3 * rng.standard_normal(x_old.size)
        q = 0.37
        expected = ref.log_bridge_density(x_new, q) - ref.log_bridge_density(x_old, q)
        assert ref.log_bridge_diff(x_new, x_old, q) == pytest.approx(expected, rel=1e-9)
