import numpy as np
import pytest
from scipy import optimize

from cpstream.critvals import (
    CritVal,
    CritValKind,
    CritValRequest,
    CritValTable,
    MonteCarloProvider,
    TableProvider,
    build_table,
    compute_critval,
    offline_critval,
    online_critval_ratio,
    online_critval_standard,
    replication_stat,
    simulate_brownian_motion,
)
from cpstream.errors import NotTabulatedError


def sup_abs_bridge_quantile(p):
    """Analytic p-quantile of sup |B(t)| from its alternating series."""

    def sf(x):
        k = np.arange(1, 200)
        return 2.0 * np.sum((-1.0) ** (k + 1) * np.exp(-2.0 * k**2 * x**2))

    return optimize.brentq(lambda v: sf(v) - (1.0 - p), 0.2, 4.0, xtol=1e-12)


def sup_abs_wiener_quantile(p):
    """Analytic p-quantile of sup |W(t)| on [0, 1] from its theta series."""

    def cdf(a):
        k = np.arange(0, 200)
        return (4.0 / np.pi) * np.sum(
            (-1.0) ** k / (2 * k + 1) * np.exp(-np.pi**2 * (2 * k + 1) ** 2 / (8.0 * a**2))
        )

    return optimize.brentq(lambda v: cdf(v) - p, 0.3, 5.0, xtol=1e-12)


class TestBrownianMotion:
    def test_starts_at_zero(self):
        assert simulate_brownian_motion(100, seed=5)[0] == 0.0

    def test_deterministic_per_seed(self):
        a = simulate_brownian_motion(500, seed=9)
        b = simulate_brownian_motion(500, seed=9)
        assert np.array_equal(a, b)
        c = simulate_brownian_motion(500, seed=10)
        assert not np.array_equal(a, c)

    def test_endpoint_variance(self):
        # grid_steps=1 makes W(1) a single standard normal draw per seed
        draws = np.array([simulate_brownian_motion(1, seed=s)[1] for s in range(100_000)])
        assert 0.98 <= draws.var() <= 1.02


class TestRequestValidation:
    def test_alpha_range(self):
        for alpha in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                CritValRequest(kind=CritValKind.OFFLINE_MAX, alpha=alpha)

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            CritValRequest(kind=CritValKind.ONLINE_STANDARD, alpha=0.05, gamma=0.5)

    def test_gamma_rejected_for_offline(self):
        with pytest.raises(ValueError):
            CritValRequest(kind=CritValKind.OFFLINE_MAX, alpha=0.05, gamma=0.1)

    def test_budget_floors(self):
        with pytest.raises(ValueError):
            CritValRequest(kind=CritValKind.OFFLINE_MAX, alpha=0.05, grid_steps=50)
        with pytest.raises(ValueError):
            CritValRequest(kind=CritValKind.OFFLINE_MAX, alpha=0.05, replications=10)

    def test_horizon_only_for_ratio(self):
        with pytest.raises(ValueError):
            CritValRequest(kind=CritValKind.ONLINE_STANDARD, alpha=0.05, horizon_T=5.0)
        req = CritValRequest(kind=CritValKind.ONLINE_RATIO, alpha=0.05)
        assert req.horizon_T == 10.0

    def test_kind_mismatch_rejected_by_wrappers(self):
        req = CritValRequest(
            kind=CritValKind.OFFLINE_MAX, alpha=0.05, grid_steps=100, replications=1000
        )
        with pytest.raises(ValueError):
            online_critval_standard(req)
        with pytest.raises(ValueError):
            online_critval_ratio(req)


class TestOfflineQuantile:
    def test_matches_analytic_bridge_quantile(self, cv_offline_d1):
        target = sup_abs_bridge_quantile(0.95) ** 2
        assert target == pytest.approx(1.8444, abs=5e-4)
        # grid discretisation biases the simulated sup slightly low
        assert abs(cv_offline_d1.value - target) <= 3 * cv_offline_d1.mc_stderr + 0.015

    def test_monotone_in_alpha_and_analytic_at_each_level(self):
        table = build_table(
            kinds=[CritValKind.OFFLINE_MAX],
            dims=(1,),
            alphas=(0.01, 0.05, 0.10),
            grid_steps=1000,
            replications=20_000,
            seed=1,
        )
        values = []
        for alpha in (0.01, 0.05, 0.10):
            cv = table.lookup(CritValKind.OFFLINE_MAX, 1, alpha)
            values.append(cv.value)
            target = sup_abs_bridge_quantile(1.0 - alpha) ** 2
            assert abs(cv.value - target) <= 3 * cv.mc_stderr + 0.03
        assert values[0] > values[1] > values[2]

    def test_d2_larger_than_d1(self, cv_offline_d1, cv_offline_d2):
        assert cv_offline_d2.value > cv_offline_d1.value


class TestOnlineStandardQuantile:
    def test_matches_analytic_wiener_quantile(self, cv_standard_d1):
        target = sup_abs_wiener_quantile(0.95)
        assert target == pytest.approx(2.2414, abs=5e-4)
        assert abs(cv_standard_d1.value - target) <= 3 * cv_standard_d1.mc_stderr + 0.03

    def test_gamma_inflates_quantile(self):
        base = dict(
            kind=CritValKind.ONLINE_STANDARD,
            alpha=0.05,
            d=1,
            grid_steps=1000,
            replications=10_000,
            seed=2,
        )
        v0 = compute_critval(CritValRequest(gamma=0.0, **base)).value
        v45 = compute_critval(CritValRequest(gamma=0.45, **base)).value
        assert v45 > v0

    def test_deterministic(self):
        req = CritValRequest(
            kind=CritValKind.ONLINE_STANDARD,
            alpha=0.05,
            grid_steps=300,
            replications=2000,
            seed=7,
        )
        assert online_critval_standard(req) == online_critval_standard(req)


class TestOnlineRatioQuantile:
    def test_reproducible_across_seeds(self):
        base = dict(
            kind=CritValKind.ONLINE_RATIO,
            alpha=0.05,
            d=1,
            gamma=0.0,
            grid_steps=300,
            replications=4000,
            horizon_T=10.0,
        )
        a = online_critval_ratio(CritValRequest(seed=1, **base))
        b = online_critval_ratio(CritValRequest(seed=2, **base))
        assert a.value > 0
        assert abs(a.value - b.value) <= 2 * (a.mc_stderr + b.mc_stderr)

    def test_sup_saturates_in_horizon(self):
        base = dict(
            kind=CritValKind.ONLINE_RATIO,
            alpha=0.05,
            d=1,
            gamma=0.0,
            grid_steps=300,
            replications=4000,
            seed=5,
        )
        t10 = online_critval_ratio(CritValRequest(horizon_T=10.0, **base))
        t20 = online_critval_ratio(CritValRequest(horizon_T=20.0, **base))
        assert abs(t20.value - t10.value) < 4 * t10.mc_stderr

    def test_alpha_ordering(self):
        base = dict(
            kind=CritValKind.ONLINE_RATIO,
            d=1,
            gamma=0.0,
            grid_steps=200,
            replications=3000,
            horizon_T=5.0,
            seed=6,
        )
        v01 = online_critval_ratio(CritValRequest(alpha=0.01, **base)).value
        v05 = online_critval_ratio(CritValRequest(alpha=0.05, **base)).value
        assert v01 > v05


class TestDeterminism:
    def test_replication_order_irrelevant(self):
        req = CritValRequest(
            kind=CritValKind.OFFLINE_MAX,
            alpha=0.05,
            grid_steps=200,
            replications=2000,
            seed=4,
        )
        reference = compute_critval(req)
        order = np.random.default_rng(0).permutation(req.replications)
        shuffled = np.empty(req.replications)
        for rep in order:
            shuffled[rep] = replication_stat(req, int(rep))
        assert float(np.quantile(np.sort(shuffled), 0.95)) == reference.value

    def test_stderr_shrinks_with_replications(self):
        base = dict(kind=CritValKind.OFFLINE_MAX, alpha=0.05, grid_steps=200, seed=8)
        small = compute_critval(CritValRequest(replications=50_000, **base))
        large = compute_critval(CritValRequest(replications=100_000, **base))
        ratio = small.mc_stderr / large.mc_stderr
        assert np.sqrt(2) * 0.75 <= ratio <= np.sqrt(2) * 1.25


class TestTable:
    SMALL = dict(
        kinds=[CritValKind.OFFLINE_MAX, CritValKind.ONLINE_STANDARD],
        dims=(1, 2),
        alphas=(0.05, 0.10),
        gammas=(0.0, 0.25),
        grid_steps=200,
        replications=2000,
        seed=11,
    )

    def test_rebuild_is_byte_identical(self, tmp_path):
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        build_table(first, **self.SMALL)
        build_table(second, **self.SMALL)
        assert first.read_bytes() == second.read_bytes()

    def test_lookup_matches_direct_computation(self, tmp_path):
        path = tmp_path / "table.csv"
        table = build_table(path, **self.SMALL)
        direct = offline_critval(
            CritValRequest(
                kind=CritValKind.OFFLINE_MAX,
                alpha=0.05,
                d=1,
                grid_steps=200,
                replications=2000,
                seed=11,
            )
        )
        assert table.lookup(CritValKind.OFFLINE_MAX, 1, 0.05).value == direct.value
        loaded = CritValTable.load(path)
        assert loaded.lookup(CritValKind.OFFLINE_MAX, 1, 0.05).value == direct.value

    def test_absent_key_raises(self, tmp_path):
        table = build_table(tmp_path / "t.csv", **self.SMALL)
        with pytest.raises(NotTabulatedError, match="not tabulated"):
            table.lookup(CritValKind.OFFLINE_MAX, 3, 0.05)
        with pytest.raises(NotTabulatedError):
            table.lookup(CritValKind.ONLINE_STANDARD, 1, 0.025)
        with pytest.raises(NotTabulatedError):
            table.lookup(CritValKind.ONLINE_RATIO, 1, 0.05)

    def test_quantiles_monotone_in_alpha_across_table(self, tmp_path):
        table = build_table(tmp_path / "t.csv", **self.SMALL)
        for kind in (CritValKind.OFFLINE_MAX, CritValKind.ONLINE_STANDARD):
            gammas = (0.0, 0.25) if kind.is_online else (0.0,)
            for d in (1, 2):
                for gamma in gammas:
                    v5 = table.lookup(kind, d, 0.05, gamma).value
                    v10 = table.lookup(kind, d, 0.10, gamma).value
                    assert v5 > v10


class TestProviders:
    def test_monte_carlo_provider_caches(self):
        provider = MonteCarloProvider(seed=0, grid_steps=200, replications=2000)
        a = provider(CritValKind.OFFLINE_MAX, 1, 0.05)
        b = provider(CritValKind.OFFLINE_MAX, 1, 0.05)
        assert a is b
        assert isinstance(a, CritVal)

    def test_table_provider(self, tmp_path):
        path = tmp_path / "t.csv"
        build_table(
            path,
            kinds=[CritValKind.OFFLINE_MAX],
            dims=(1,),
            alphas=(0.05,),
            grid_steps=200,
            replications=2000,
            seed=0,
        )
        provider = TableProvider.from_file(path)
        assert provider(CritValKind.OFFLINE_MAX, 1, 0.05).value > 0
        with pytest.raises(NotTabulatedError):
            provider(CritValKind.OFFLINE_MAX, 1, 0.01)
