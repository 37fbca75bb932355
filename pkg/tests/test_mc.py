import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hsaw import free, mc
from hsaw.errors import DegenerateWeights, DepthOverflow
from hsaw.lattice import Site, shell_count

# fitted: MC kernel vs the leading interacting term, in units of lambda_k (t+|x|^2)/(1+|x|^2)
KAPPA_MC_KERNEL = 3.0  # fitted 2.76


def fresh(cfg):
    """Ensemble that bypasses the per-config cache."""
    return mc.simulate_ensemble.__wrapped__(cfg)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(T=0.0), dict(T=1.0, lam=-0.1), dict(T=1.0, lam=0.1j),
                                    dict(T=1.0, n_paths=0), dict(T=1.0, alpha=2.0), dict(T=1.0, seed=-1)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            mc.McConfig(**kw)

    def test_threads_not_part_of_identity(self):
        assert mc.McConfig(T=1.0, threads=1) == mc.McConfig(T=1.0, threads=4)


class TestPath:
    def test_zero_jumps(self):
        rec = mc.simulate_path(mc.McConfig(T=1e-12), np.random.default_rng(0))
        assert rec.jump_times == []
        assert rec.local_times == {Site.zero(): 1e-12}
        assert rec.endpoint == Site.zero()
        assert mc.tau_squared(rec) == pytest.approx(1e-24)

    @given(st.integers(0, 2**32), st.floats(0.1, 20.0))
    def test_path_invariants(self, seed, T):
        rec = mc.simulate_path(mc.McConfig(T=T), np.random.default_rng(seed))
        assert abs(sum(rec.local_times.values()) - T) <= 1e-12
        assert len(rec.sites) == len(rec.jump_times) + 1
        assert rec.sites[0] == Site.zero()
        assert all(a != b for a, b in zip(rec.sites, rec.sites[1:]))
        assert all(0 < a < b for a, b in zip(rec.jump_times, rec.jump_times[1:]))
        assert all(0 < t < T for t in rec.jump_times)
        keys = list(rec.local_times)
        assert keys == sorted(keys)
        tau2 = mc.tau_squared(rec)
        assert T * T / len(rec.local_times) - 1e-9 <= tau2 <= T * T + 1e-9

    def test_equal_split(self):
        sites = [Site((k,)) for k in range(4)]
        rec = mc.PathRecord([0.5, 1.0, 1.5], sites, {s: 0.5 for s in sites}, 2.0)
        assert mc.tau_squared(rec) == pytest.approx(4.0 / 4)

    def test_depth_overflow(self):
        cfg = mc.McConfig(T=2000.0, capacity=1)
        with pytest.raises(DepthOverflow):
            for seed in range(50):
                mc.simulate_path(cfg, np.random.default_rng(seed))


class TestEnsemble:
    def test_jump_count(self):
        cfg = mc.McConfig(T=4.0, n_paths=100_000, seed=11)
        ens = fresh(cfg)
        mean = cfg.params.gamma * cfg.T
        assert abs(ens.n_jumps.mean() - mean) <= 4 * math.sqrt(mean / cfg.n_paths)

    def test_level_distribution(self):
        # single-jump paths end on the shell of their only jump
        cfg = mc.McConfig(T=1.0, n_paths=200_000, seed=5)
        ens = fresh(cfg)
        lev = ens.level[ens.n_jumps == 1]
        n_max = 6
        p = cfg.params.level_probabilities(n_max)
        obs = np.array([np.count_nonzero(lev == N) for N in range(1, n_max)] + [np.count_nonzero(lev >= n_max)])
        exp = p * lev.size
        chi2 = float(np.sum((obs - exp) ** 2 / exp))
        dof = n_max - 1
        assert chi2 <= dof + 4 * math.sqrt(2 * dof)

    def test_level_law_matches_rates(self):
        p = mc.McConfig(T=1.0).params
        C, gamma = p.C, p.gamma
        for N, q in enumerate(p.level_probabilities(5)[:-1], start=1):
            assert q == pytest.approx(C * shell_count(N) * 2.0 ** (-6 * N) / gamma, rel=1e-12)

    def test_tau_bounds(self):
        cfg = mc.McConfig(T=8.0, n_paths=20_000, seed=3)
        ens = fresh(cfg)
        T2 = cfg.T**2
        assert np.all(ens.tau2 <= T2 * (1 + 1e-12))
        assert np.all(ens.tau2 >= T2 / (ens.n_jumps + 1) * (1 - 1e-12))
        assert np.all(ens.tau2[ens.n_jumps == 0] == T2)

    def test_deterministic(self):
        cfg = mc.McConfig(T=4.0, n_paths=40_000, seed=9)
        a, b = fresh(cfg), fresh(cfg)
        assert np.array_equal(a.tau2, b.tau2) and np.array_equal(a.level, b.level)

    def test_threads_invariant(self):
        a = fresh(mc.McConfig(T=4.0, n_paths=50_000, seed=9, threads=1))
        b = fresh(mc.McConfig(T=4.0, n_paths=50_000, seed=9, threads=3))
        assert np.array_equal(a.tau2, b.tau2) and np.array_equal(a.level, b.level)

    def test_prefix_stable(self):
        # chunk streams are spawned in order, so a larger run extends a smaller one
        a = fresh(mc.McConfig(T=2.0, n_paths=mc.CHUNK, seed=4))
        b = fresh(mc.McConfig(T=2.0, n_paths=2 * mc.CHUNK, seed=4))
        assert np.array_equal(a.tau2, b.tau2[: mc.CHUNK])

    def test_matches_path_simulator(self):
        cfg = mc.McConfig(T=4.0, n_paths=100_000, seed=21)
        ens = fresh(cfg)
        rng = np.random.default_rng(77)
        recs = [mc.simulate_path(cfg, rng) for _ in range(3000)]
        t2 = np.array([mc.tau_squared(r) for r in recs])
        lev = np.array([r.endpoint.level for r in recs])
        for a, b in ((ens.tau2, t2), (ens.level.astype(float), lev.astype(float))):
            se = math.sqrt(a.var() / a.size + b.var() / b.size)
            assert abs(a.mean() - b.mean()) <= 4 * se

    def test_capacity_fold(self):
        ens = fresh(mc.McConfig(T=50.0, n_paths=5000, seed=1, capacity=2))
        assert ens.folded > 0
        assert ens.level.max() <= 2
        assert fresh(mc.McConfig(T=4.0, n_paths=5000, seed=1)).folded == 0


class TestEstimators:
    def test_free_endtoend(self):
        cfg = mc.McConfig(T=4.0, n_paths=200_000, seed=8)
        est = mc.weighted_endtoend(cfg)
        assert est.ess == pytest.approx(cfg.n_paths)
        assert abs(est.estimate - free.endtoend_free(4.0, 1.0)) <= 3 * est.std_error

    @pytest.mark.slow
    def test_free_kernel(self):
        cfg = mc.McConfig(T=4.0, n_paths=1_000_000, seed=2)
        est = mc.weighted_kernel(cfg, 1)
        assert abs(est.estimate - free.p0(4.0, 1)) <= 3 * est.std_error

    @pytest.mark.parametrize("alpha", [0.5, 1.5])
    def test_free_endtoend_alpha(self, alpha):
        cfg = mc.McConfig(T=4.0, n_paths=100_000, seed=6, alpha=alpha)
        est = mc.weighted_endtoend(cfg)
        assert abs(est.estimate - free.endtoend_free(4.0, alpha) ** (1 / alpha)) <= 3 * est.std_error

    def test_repeatable(self):
        cfg = mc.McConfig(T=4.0, lam=0.02, n_paths=30_000, seed=12)
        a = mc.weighted_endtoend(cfg)
        mc.simulate_ensemble.cache_clear()
        assert mc.weighted_endtoend(cfg) == a

    def test_degenerate(self):
        with pytest.raises(DegenerateWeights):
            mc.weighted_endtoend(mc.McConfig(T=16.0, lam=50.0, n_paths=2000, seed=1))

    def test_repulsion_stretches(self):
        free_cfg = mc.McConfig(T=8.0, n_paths=100_000, seed=3)
        rep_cfg = mc.McConfig(T=8.0, lam=0.05, n_paths=100_000, seed=3)
        assert mc.weighted_endtoend(rep_cfg).estimate > mc.weighted_endtoend(free_cfg).estimate

    def test_no_drift_under_doubling(self):
        a = mc.weighted_endtoend(mc.McConfig(T=8.0, lam=0.02, n_paths=100_000, seed=31))
        b = mc.weighted_endtoend(mc.McConfig(T=8.0, lam=0.02, n_paths=200_000, seed=32))
        assert abs(a.estimate - b.estimate) <= 4 * math.hypot(a.std_error, b.std_error)

    def test_kernel_partition(self):
        cfg = mc.McConfig(T=4.0, lam=0.02, n_paths=50_000, seed=14)
        ens = mc.simulate_ensemble(cfg)
        bc = -0.05
        total = sum((1 if N == 0 else shell_count(N)) * mc.weighted_kernel(cfg, N, bc).estimate
                    for N in range(int(ens.level.max()) + 1))
        assert total == pytest.approx(math.exp(-bc * cfg.T) * np.exp(-cfg.lam * ens.tau2).mean(), rel=1e-12)

    def test_kernel_default_beta_c(self):
        from hsaw import rg

        cfg = mc.McConfig(T=2.0, lam=0.02, n_paths=20_000, seed=4)
        bc = rg.critical_beta(0.02).beta_c.real
        assert mc.weighted_kernel(cfg, 1) == mc.weighted_kernel(cfg, 1, bc)

    @pytest.mark.slow
    def test_interacting_kernel_band(self):
        from hsaw import laplace as lp
        from hsaw import rg

        for T in (4.0, 16.0):
            cfg = mc.McConfig(T=T, lam=0.02, n_paths=400_000, seed=7)
            sf = rg.shifted_flow(1 / T, 0.02, max_steps=10)
            t = lp.InteractingKernelQuery(T, 0, 0.02).t.real
            for N in (0, 1, 2):
                est = mc.weighted_kernel(cfg, N)
                lead = lp.p_lambda_leading(T, N, 0.02).real
                x2 = 0.0 if N == 0 else 4.0**N
                band = KAPPA_MC_KERNEL * abs(sf.lam[N]) * (t + x2) / (1 + x2) * lead
                assert abs(est.estimate - lead) <= 3 * est.std_error + band

    def test_kernel_rejects_level(self):
        with pytest.raises(ValueError):
            mc.weighted_kernel(mc.McConfig(T=1.0, n_paths=10), -1)
