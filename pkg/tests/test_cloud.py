import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.stats import kstest

from erm_spectra.cloud import (
    QUAD_ABS_TOL,
    QUAD_CUTOFF,
    CloudSample,
    cdf_pair_distance,
    joint_length_density,
    pairwise_distances,
    pdf_pair_distance,
    pdf_shared_vertex,
    sample_cloud,
)


def test_sampling_is_deterministic_in_seed():
    a = sample_cloud(1, 7)
    b = sample_cloud(1, 7)
    assert a.points.shape == (1, 3)
    assert np.array_equal(a.points, b.points)
    c = sample_cloud(1, 8)
    assert not np.array_equal(a.points, c.points)


def test_zero_atoms_rejected():
    with pytest.raises(ValueError):
        sample_cloud(0, 1)
    with pytest.raises(ValueError):
        sample_cloud(10, -3)


def test_coordinates_are_standard_normal():
    n = 10 ** 5
    cloud = sample_cloud(n, 314)
    # 3 sigma / sqrt(n) bounds from the sampler itself
    for axis in range(3):
        col = cloud.points[:, axis]
        assert abs(col.mean()) < 0.02
        assert abs(col.var() - 1.0) < 0.03


def test_mean_squared_pair_distance_matches_quadrature():
    # oracle: second moment of the pair-distance density by quadrature
    mean_sq, err = quad(lambda r: r * r * pdf_pair_distance(r), 0, QUAD_CUTOFF,
                        epsabs=QUAD_ABS_TOL)
    assert abs(mean_sq - 6.0) < 1e-8

    cloud = sample_cloud(10 ** 5, 99)
    rng = np.random.Generator(np.random.Philox(key=5))
    i = rng.integers(0, cloud.n_atoms, size=2 * 10 ** 5)
    j = rng.integers(0, cloud.n_atoms, size=2 * 10 ** 5)
    keep = i != j
    d2 = np.sum((cloud.points[i[keep]] - cloud.points[j[keep]]) ** 2, axis=1)
    assert abs(d2.mean() - mean_sq) < 0.1


def test_pairwise_distance_order_and_values():
    pts = np.array([[0.0, 0.0, 0.0], [3.0, 4.0, 0.0], [0.0, 0.0, 0.0]])
    cloud = CloudSample(points=pts, n_atoms=3, seed=0)
    d = pairwise_distances(cloud)
    # (0,1), (0,2), (1,2) lexicographic order
    assert d.shape == (3,)
    assert d[0] == pytest.approx(5.0)
    assert d[1] == 0.0
    assert d[2] == pytest.approx(5.0)

    cloud4 = sample_cloud(4, 11)
    assert pairwise_distances(cloud4).shape == (6,)


def test_pair_distance_density_shape():
    assert pdf_pair_distance(0.0) == 0.0
    with pytest.raises(ValueError):
        pdf_pair_distance(-0.1)

    total, _ = quad(pdf_pair_distance, 0, QUAD_CUTOFF, epsabs=QUAD_ABS_TOL)
    assert abs(total - 1.0) < 1e-8

    # mode of r^2 exp(-r^2/4) from stationarity, located numerically
    res = minimize_scalar(lambda r: -pdf_pair_distance(r), bounds=(0.1, 10),
                          method="bounded", options={"xatol": 1e-10})
    assert res.x == pytest.approx(2.0, abs=1e-6)


def test_shared_vertex_density_basics():
    assert pdf_shared_vertex(1.3, 0.4) == pytest.approx(pdf_shared_vertex(0.4, 1.3))
    assert pdf_shared_vertex(0.0, 2.0) == 0.0
    with pytest.raises(ValueError):
        pdf_shared_vertex(-1.0, 1.0)
    # no overflow deep into the (irrelevant) tail
    assert pdf_shared_vertex(30.0, 30.0) < 1e-100


def test_shared_vertex_marginalizes_to_pair_density():
    for r in (0.5, 1.0, 2.0, 4.0):
        marg, _ = quad(lambda r2: pdf_shared_vertex(r, r2), 0, QUAD_CUTOFF,
                       epsabs=QUAD_ABS_TOL)
        assert abs(marg - pdf_pair_distance(r)) < 1e-6


def test_shared_vertex_normalization():
    def inner(r):
        val, _ = quad(lambda r2: pdf_shared_vertex(r, r2), 0, QUAD_CUTOFF,
                      epsabs=QUAD_ABS_TOL)
        return val

    total, _ = quad(inner, 0, QUAD_CUTOFF, epsabs=1e-9, limit=200)
    assert abs(total - 1.0) < 1e-6


def test_joint_length_density_marginalizations():
    for r in (1.0, 2.0):
        marg, _ = quad(lambda x0: joint_length_density(x0, [r]), 0, QUAD_CUTOFF,
                       epsabs=QUAD_ABS_TOL)
        assert abs(marg - pdf_pair_distance(r)) < 1e-6

    marg2, _ = quad(lambda x0: joint_length_density(x0, [1.0, 1.0]), 0,
                    QUAD_CUTOFF, epsabs=QUAD_ABS_TOL)
    assert abs(marg2 - pdf_shared_vertex(1.0, 1.0)) < 1e-6


def test_joint_length_density_edge_cases():
    assert joint_length_density(0.0, [1.0]) == 0.0
    assert joint_length_density(0.0, [1.0, 2.0, 3.0]) == 0.0
    with pytest.raises(ValueError):
        joint_length_density(1.0, [])
    with pytest.raises(ValueError):
        joint_length_density(-1.0, [1.0])


def test_empirical_pair_distances_match_density():
    rng = np.random.Generator(np.random.Philox(key=2024))
    x = rng.standard_normal((10 ** 6, 3))
    y = rng.standard_normal((10 ** 6, 3))
    r = np.linalg.norm(x - y, axis=1)
    stat = kstest(r, cdf_pair_distance).statistic
    assert stat < 0.005


def test_disjoint_pair_distances_uncorrelated():
    rng = np.random.Generator(np.random.Philox(key=77))
    pts = rng.standard_normal((10 ** 5, 4, 3))
    d1 = np.linalg.norm(pts[:, 0] - pts[:, 1], axis=1)
    d2 = np.linalg.norm(pts[:, 2] - pts[:, 3], axis=1)
    corr = np.corrcoef(d1, d2)[0, 1]
    assert abs(corr) < 0.01


def test_shared_vertex_histogram_matches_density():
    rng = np.random.Generator(np.random.Philox(key=88))
    n = 10 ** 5
    pts = rng.standard_normal((n, 3, 3))
    r1 = np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
    r2 = np.linalg.norm(pts[:, 2] - pts[:, 0], axis=1)

    edges = np.linspace(0.0, 6.0, 13)
    counts, _, _ = np.histogram2d(r1, r2, bins=(edges, edges))

    # expected bin mass by Riemann midpoint refinement of the density
    sub = 8
    fine = np.linspace(0.0, 6.0, 12 * sub + 1)
    mids = 0.5 * (fine[:-1] + fine[1:])
    cell = (fine[1] - fine[0]) ** 2
    dens = pdf_shared_vertex(mids[:, None], mids[None, :]) * cell
    expected = n * dens.reshape(12, sub, 12, sub).sum(axis=(1, 3))

    mask = expected >= 25
    sigma = np.sqrt(expected[mask])
    assert np.all(np.abs(counts[mask] - expected[mask]) < 4 * sigma)
