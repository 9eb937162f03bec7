import tracemalloc

import numpy as np
import pytest

from geopspline.basis import BasisConfig, BasisError, assemble_basis
from geopspline.io import RasterData, SynthSpec, synth_generate
from geopspline.model import PosteriorSamples
from geopspline.pipeline import fit_observations, fit_raster
from geopspline.predict import (
    MetadataMismatch,
    PredictionRequest,
    check_metadata,
    mean_sd_raster,
    posterior_predictive,
    predictive_moments,
    request_from_samples,
)


def fake_samples(K, nu, G=50, degree=3, seed=0, beta=None, alpha=None):
    rng = np.random.default_rng(seed)
    return PosteriorSamples(
        alpha=rng.standard_normal(G) if alpha is None else np.asarray(alpha, dtype=float),
        beta=rng.standard_normal((G, K)) if beta is None else np.asarray(beta, dtype=float),
        tau_beta=np.ones(G),
        tau_eps=np.full(G, 4.0),
        meta={"nu": nu, "degree": degree, "normalize_rows": True, "kappa": 0.5},
    )


def test_prediction_at_data_location_equals_fitted(grids):
    g = grids(2)
    s = fake_samples(g.n_knots, 2)
    lat, lon = np.array([10.0, -33.3]), np.array([45.0, 170.0])
    B = assemble_basis(lat, lon, g, BasisConfig(3, True, 2))
    req = PredictionRequest(lat, lon, s, g, BasisConfig(3, True, 2))
    draws = posterior_predictive(req)
    assert draws.shape == (50, 2)
    np.testing.assert_array_equal(draws, s.alpha[:, None] + (B @ s.beta.T).T)


def test_constant_coefficients_give_constant_field(grids):
    g = grids(1)
    s = fake_samples(g.n_knots, 1, G=4, beta=np.full((4, 42), 2.5), alpha=np.full(4, -1.0))
    req = request_from_samples(np.linspace(-90, 90, 25), np.linspace(-180, 180, 25), s)
    np.testing.assert_allclose(posterior_predictive(req), 1.5, atol=1e-12)


def test_single_location_dense_oracle(grids):
    g = grids(1)
    s = fake_samples(g.n_knots, 1, G=30, seed=3)
    req = request_from_samples([12.0], [-77.0], s)
    mean, _ = predictive_moments(req)
    Bd = assemble_basis([12.0], [-77.0], g, BasisConfig(3, True, 1)).toarray()
    oracle = s.alpha.mean() + (Bd @ s.beta.mean(axis=0))[0]
    assert mean[0] == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("chunk", [1, 7, 50, None])
def test_streaming_matches_two_pass(grids, chunk):
    g = grids(2)
    s = fake_samples(g.n_knots, 2, G=53, seed=4)
    lat = np.linspace(-80, 80, 40)
    lon = np.linspace(-170, 170, 40)
    req = request_from_samples(lat, lon, s)
    mean, sd = predictive_moments(req, chunk=chunk)
    draws = posterior_predictive(req)
    np.testing.assert_allclose(mean, draws.mean(axis=0), atol=1e-8)
    np.testing.assert_allclose(sd, draws.std(axis=0), atol=1e-8)


def test_observation_noise_flag(grids):
    g = grids(1)
    s = fake_samples(g.n_knots, 1, G=4000, seed=5)
    req = request_from_samples([0.0], [0.0], s)
    latent = posterior_predictive(req)
    noisy = posterior_predictive(req, observation_noise=True, seed=1)
    # noise sd is 1/sqrt(4) = 0.5 for every draw
    assert (noisy - latent).std() == pytest.approx(0.5, rel=0.05)
    assert np.array_equal(posterior_predictive(req, True, seed=1), noisy)


def test_metadata_mismatch(grids):
    g = grids(2)
    s = fake_samples(g.n_knots, 2)
    with pytest.raises(MetadataMismatch, match="nu"):
        PredictionRequest([0.0], [0.0], s, grids(1), BasisConfig(3, True, 1))
    with pytest.raises(MetadataMismatch, match="degree"):
        PredictionRequest([0.0], [0.0], s, g, BasisConfig(2, True, 2))
    with pytest.raises(MetadataMismatch, match="kappa"):
        PredictionRequest([0.0], [0.0], s, g, BasisConfig(3, True, 2), kappa=0.7)
    with pytest.raises(MetadataMismatch, match="nu"):
        request_from_samples([0.0], [0.0], s, nu=3)
    bare = PosteriorSamples(s.alpha, s.beta, s.tau_beta, s.tau_eps)
    with pytest.raises(MetadataMismatch, match="lack"):
        request_from_samples([0.0], [0.0], bare)
    wrong_k = fake_samples(10, 2)
    with pytest.raises(MetadataMismatch, match="coefficients"):
        PredictionRequest([0.0], [0.0], wrong_k, g, BasisConfig(3, True, 2))
    check_metadata(s, nu=2, degree=None, kappa=0.5)


def test_out_of_range_coordinates(grids):
    s = fake_samples(grids(1).n_knots, 1)
    with pytest.raises(BasisError, match="row 1"):
        posterior_predictive(request_from_samples([0.0, 95.0], [0.0, 0.0], s))


def test_mean_sd_raster_shapes(grids):
    s = fake_samples(grids(1).n_knots, 1, G=10)
    mean, sd = mean_sd_raster(s, 6, 12)
    assert mean.values.shape == (6, 12) and sd.values.shape == (6, 12)
    assert not np.isnan(mean.values).any()
    assert np.all(sd.values >= 0)


def test_constant_truth_mean_flat():
    spec = SynthSpec(rows=18, cols=36, truth="constant", baseline=12.0, noise_sd=0.05,
                     mask_fraction=0.3)
    obs, _ = synth_generate(spec, seed=2)
    s = fit_raster(obs, nu=2, G=300, burnin=100, seed=1)
    mean, sd = mean_sd_raster(s, 18, 36)
    assert np.all(np.abs(mean.values - 12.0) < 3 * sd.values + 1e-12)


def test_sd_larger_over_masked_land():
    spec = SynthSpec(rows=36, cols=72, truth="bump", amplitude=10, width=20, center_lat=-10,
                     noise_sd=1.0, mask_fraction=0.35, mask_pattern="blocks")
    obs, _ = synth_generate(spec, seed=4)
    s = fit_raster(obs, nu=3, G=400, burnin=100, seed=2)
    _, sd = mean_sd_raster(s, 36, 72)
    land = obs.missing
    assert sd.values[land].mean() > sd.values[~land].mean()


def test_large_raster_memory_bounded(grids):
    g = grids(5)
    G = 1000
    rng = np.random.default_rng(0)
    s = PosteriorSamples(
        alpha=rng.standard_normal(G), beta=rng.standard_normal((G, g.n_knots)) * 0.1,
        tau_beta=np.ones(G), tau_eps=np.ones(G),
        meta={"nu": 5, "degree": 3, "normalize_rows": True},
    )
    tracemalloc.start()
    mean, sd = mean_sd_raster(s, 360, 720)
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    # a stored G x 259200 draw matrix alone would be about 2 GB
    assert peak < 400e6
    assert mean.values.shape == (360, 720)


def test_fit_observations_drops_missing():
    rng = np.random.default_rng(1)
    lat = rng.uniform(-60, 60, 200)
    lon = rng.uniform(-180, 180, 200)
    y = 3 + rng.standard_normal(200)
    y[:50] = np.nan
    s = fit_observations(lat, lon, y, nu=1, G=20, burnin=5)
    assert s.meta["n_obs"] == 150 and s.meta["nu"] == 1
    with pytest.raises(ValueError, match="missing"):
        fit_observations(lat, lon, np.full(200, np.nan), nu=1, G=5)


def test_raster_centroids_used():
    r = RasterData.global_grid(2, 4, np.arange(8.0).reshape(2, 4))
    lat, lon = r.centroids()
    assert lat.tolist() == [45.0] * 4 + [-45.0] * 4
    assert lon.tolist() == [-135.0, -45.0, 45.0, 135.0] * 2
