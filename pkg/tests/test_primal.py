import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import martquant as mq
from martquant.primal import sqrt_density_coefficients


def _d1(x, w=None):
    return mq.DiscreteMeasure(np.asarray(x, float), w)


def test_quantizer_validation():
    q = mq.Quantizer([0.3, 0.1, 0.2])
    assert q.x.tolist() == [0.1, 0.2, 0.3]
    with pytest.raises(ValueError):
        mq.Quantizer([0.1, 0.1])
    with pytest.raises(ValueError):
        mq.Quantizer([[0, 0], [0, 0]])
    with pytest.raises(ValueError):
        mq.Quantizer([])


def test_assign_ties_go_low():
    g = mq.Quantizer([0.0, 1.0])
    assert mq.assign(g, [0.5, 0.49, 0.51]).tolist() == [0, 0, 1]
    assert mq.project(g, 0.5) == 0


def test_symmetric_four_atom_fixture(oracle_data):
    ref = oracle_data["two_codebook"]
    a = ref["a"]
    mu = _d1([-1, -a, a, 1])
    res = mq.lloyd(mu, 2)
    assert np.allclose(res.quantizer.x, [-(1 + a) / 2, (1 + a) / 2], atol=1e-12)
    # the brute-force grid search reaches the same cost at its resolution
    assert res.distortion_p == pytest.approx(ref["cost_grid"][0], abs=1e-6)
    assert res.distortion_p <= ref["cost_grid"][0] + 1e-15
    assert mq.optimal_primal_1d(mu, 2).distortion_p == pytest.approx(res.distortion_p, abs=1e-15)


def test_exact_dp_matches_partition_oracle(oracle_data):
    for case in oracle_data["kmeans_1d"]:
        mu = _d1(case["x"], case["w"])
        res = mq.optimal_primal_1d(mu, case["N"])
        assert res.distortion_p == pytest.approx(case["value"], abs=1e-12)
        assert res.residual <= 1e-12
        # Lloyd is stationary but may stop at a local optimum
        lo = mq.lloyd(mu, case["N"])
        assert lo.distortion_p >= case["value"] - 1e-12
        assert lo.residual <= 1e-12


def test_lloyd_returns_support_when_small():
    mu = _d1([0.1, 0.4, 0.9], [0.2, 0.3, 0.5])
    res = mq.lloyd(mu, 5)
    assert res.distortion_p == 0.0
    assert np.allclose(res.pushforward.weights, mu.weights)


def test_lloyd_coupling_links_grid_to_atoms():
    rng = np.random.default_rng(1)
    mu = mq.DiscreteMeasure(rng.uniform(size=(30, 2)))
    res = mq.lloyd(mu, 4, seed=3)
    pi = res.coupling
    assert pi.marginal_residual(res.pushforward, mu) < 1e-14
    # stationarity: the atoms in each cell average to the grid point
    assert pi.is_martingale(1e-12)
    assert mq.distortion(mu, res.quantizer) == pytest.approx(res.distortion_p, abs=1e-15)


def test_lloyd_nonconvergence_carries_last_grid():
    rng = np.random.default_rng(2)
    mu = _d1(rng.uniform(size=200))
    with pytest.raises(mq.ConvergenceError) as exc:
        mq.lloyd(mu, 7, init=np.linspace(0, 1, 7), tol=0.0, max_iter=2)
    assert isinstance(exc.value.last, mq.Quantizer)


def test_lloyd_rejects_wrong_init_size():
    with pytest.raises(ValueError):
        mq.lloyd(_d1(np.linspace(0, 1, 10)), 3, init=[0.1, 0.5])


@pytest.mark.parametrize("N", [1, 2, 5, 17])
def test_uniform_grid_and_moment_identity(N):
    U = mq.uniform01()
    res = mq.optimal_primal_1d(U, N)
    assert np.allclose(res.quantizer.x, (2 * np.arange(1, N + 1) - 1) / (2 * N), atol=1e-12)
    # e^2 = m2(mu) - m2(mu_hat) for stationary grids
    assert res.distortion_p == pytest.approx(U.second_moment() - res.pushforward.second_moment(), abs=1e-14)


def test_sqrt_density_two_points():
    c2 = (np.sqrt(17) - 1) / 2
    assert sqrt_density_coefficients(2)[2] == pytest.approx(c2, abs=1e-15)
    g = mq.sqrt_density_grid(2)
    assert np.allclose(g.x, [1 / (3 * c2**2), (c2**2 + c2 + 1) / (3 * c2**2)], atol=1e-15)


def test_sqrt_density_grid_rescaled():
    g = mq.sqrt_density_grid(6, 0.3, 0.9)
    m = mq.power(0.5, 0.3, 0.9)
    assert mq.stationarity_residual(m, g) < 1e-12
    with pytest.raises(ValueError):
        mq.sqrt_density_grid(0)


@pytest.mark.parametrize("m", [mq.tri2x(), mq.power(3.0, -1, 2)])
def test_optimal_grid_is_stationary(m):
    res = mq.optimal_primal_1d(m, 9)
    assert res.residual < 1e-11
    assert mq.convex_order_leq_1d(res.pushforward, mq.discretize(m, 4000), tol=1e-6)


def test_distortion_analytic_matches_fine_discretization():
    m = mq.tri2x()
    g = mq.Quantizer([0.2, 0.55, 0.85])
    fine = mq.discretize(m, 20000)
    for p in (1, 2, 3):
        assert mq.distortion(m, g, p) == pytest.approx(mq.distortion(fine, g, p), rel=1e-4)


def test_distortion_rejects_p_below_one():
    with pytest.raises(ValueError):
        mq.distortion(mq.uniform01(), mq.Quantizer([0.5]), 0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_lloyd_properties(seed, n):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(n + 1, 30))
    mu = mq.DiscreteMeasure(rng.uniform(size=k), rng.dirichlet(np.ones(k)))
    res = mq.lloyd(mu, n)
    assert res.residual <= 1e-9
    assert mq.convex_order_leq_1d(res.pushforward, mu)
    assert res.distortion_p >= mq.optimal_primal_1d(mu, n).distortion_p - 1e-14
