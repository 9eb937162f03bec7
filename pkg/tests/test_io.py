import numpy as np
import pytest

from geopspline.io import (
    OUTPUT_DIR_ENV,
    RasterData,
    RasterFormatError,
    SynthSpec,
    load_samples,
    output_path,
    read_locations,
    read_observations,
    read_raster,
    save_samples,
    synth_generate,
    write_raster,
    write_table,
)
from geopspline.model import PosteriorSamples


def test_global_grid_geometry():
    r = RasterData.global_grid(360, 720)
    assert r.lat[0] == 89.75 and r.lat[-1] == -89.75
    assert r.lon[0] == -179.75 and r.lon[-1] == 179.75
    assert r.missing_fraction == 1.0


def test_centroid_range_enforced():
    with pytest.raises(RasterFormatError):
        RasterData(np.zeros((1, 1)), 90.0, 0.0, -1.0, 1.0)
    with pytest.raises(RasterFormatError):
        RasterData(np.zeros((1, 2)), 0.0, 179.0, -1.0, 1.0)
    with pytest.raises(RasterFormatError):
        RasterData(np.zeros(3), 0.0, 0.0, 1.0, 1.0)


def test_raster_round_trip_bytes(tmp_path):
    values = np.array([[1.5, np.nan, 3.0], [0.1, 2.0 / 3.0, -7.0]])
    r = RasterData.global_grid(2, 3, values, units="kg/m2")
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_raster(r, p1)
    back = read_raster(p1)
    np.testing.assert_array_equal(back.values, values)
    assert back.units == "kg/m2" and back.header() == r.header()
    write_raster(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_one_by_one(tmp_path):
    p = tmp_path / "one.csv"
    write_raster(RasterData.global_grid(1, 1, [[4.25]]), p)
    r = read_raster(p)
    assert r.values.shape == (1, 1) and r.values[0, 0] == 4.25
    assert r.centroids() == (np.array([0.0]), np.array([0.0]))


def test_missing_markers(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text('{"rows":1,"cols":4,"lat0":0,"lon0":-135,"dlat":-1,"dlon":90,"missing":"-999"}\n'
                 "1.0,,-999,nan\n")
    r = read_raster(p)
    assert np.isnan(r.values).sum() == 3
    assert r.missing_fraction == 0.75


def test_missing_fraction_large_raster(tmp_path):
    spec = SynthSpec(rows=360, cols=720, mask_fraction=0.4, noise_sd=0.5)
    obs, _ = synth_generate(spec, seed=1)
    p = tmp_path / "big.csv"
    write_raster(obs, p)
    assert read_raster(p).missing_fraction == pytest.approx(0.40, abs=1e-3)


@pytest.mark.parametrize(
    "text, match",
    [
        ("not json\n1\n", "malformed header"),
        ('{"rows":1}\n1\n', "lacks"),
        ('{"rows":2,"cols":2,"lat0":45,"lon0":-90,"dlat":-90,"dlon":180}\n1,2\n', "before data row 1"),
        ('{"rows":2,"cols":2,"lat0":45,"lon0":-90,"dlat":-90,"dlon":180}\n1,2\n3\n', "data row 1 has 1"),
        ('{"rows":1,"cols":2,"lat0":45,"lon0":-90,"dlat":-90,"dlon":180}\n1,x\n', "cannot parse"),
        ('{"rows":1,"cols":1,"lat0":0,"lon0":0,"dlat":-1,"dlon":1}\n1\n2\n', "more than 1"),
        ('{"rows":1,"cols":1,"lat0":95,"lon0":0,"dlat":-1,"dlon":1}\n1\n', "latitudes"),
    ],
)
def test_read_errors(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(RasterFormatError, match=match):
        read_raster(p)


def test_synth_noise_free_equals_truth():
    obs, truth = synth_generate(SynthSpec(rows=10, cols=20, noise_sd=0.0), seed=3)
    np.testing.assert_array_equal(obs.values, truth.values)


def test_synth_deterministic():
    spec = SynthSpec(rows=12, cols=24, mask_fraction=0.3, mask_pattern="blocks")
    a, _ = synth_generate(spec, seed=5)
    b, _ = synth_generate(spec, seed=5)
    c, _ = synth_generate(spec, seed=6)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.values.tobytes() != c.values.tobytes()
    assert a.missing_fraction >= 0.3


def test_synth_validation():
    with pytest.raises(ValueError):
        SynthSpec(noise_sd=-1)
    with pytest.raises(ValueError):
        SynthSpec(mask_fraction=1.0)
    with pytest.raises(ValueError):
        SynthSpec(truth="wiggle")


@pytest.mark.parametrize("truth", ["band", "sinusoid"])
def test_band_truth_argmax_tracks_centre(truth):
    spec = SynthSpec(rows=180, cols=36, truth=truth, noise_sd=0.0, center_lat=5.0, center_amp=10.0)
    _, t = synth_generate(spec, seed=0)
    argmax_lat = t.lat[np.argmax(t.values, axis=0)]
    assert np.all(np.abs(argmax_lat - spec.band_center(t.lon)) <= abs(t.dlat))


def test_truth_shapes():
    s = SynthSpec(truth="sinusoid", baseline=20, amplitude=10, center_lat=0, center_amp=0)
    assert s.evaluate(0.0, 0.0) == pytest.approx(30.0)
    assert s.evaluate(90.0, 0.0) == pytest.approx(20.0)
    assert SynthSpec(truth="constant", baseline=3.0).evaluate([1.0, 2.0], [0.0, 0.0]).tolist() == [3.0, 3.0]
    bump = SynthSpec(truth="bump", center_lat=-10, amplitude=5, baseline=0)
    assert bump.evaluate(-10.0, 123.0) == 5.0


def _samples():
    rng = np.random.default_rng(0)
    return PosteriorSamples(rng.standard_normal(5), rng.standard_normal((5, 12)), rng.gamma(2, size=5),
                            rng.gamma(2, size=5), burnin=7, seed=3, thin=2,
                            meta={"nu": 0, "degree": 3, "kappa": 0.25, "normalize_rows": True})


def test_samples_round_trip_and_bytes(tmp_path):
    s = _samples()
    p1, p2 = tmp_path / "a.npz", tmp_path / "b.npz"
    save_samples(p1, s)
    save_samples(p2, s)
    assert p1.read_bytes() == p2.read_bytes()
    back = load_samples(p1)
    for name in ("alpha", "beta", "tau_beta", "tau_eps"):
        np.testing.assert_array_equal(getattr(back, name), getattr(s, name))
    assert (back.burnin, back.seed, back.thin) == (7, 3, 2)
    assert back.meta["nu"] == 0 and back.meta["kappa"] == 0.25


def test_read_observations_csv_and_raster(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("lat,lon,value\n10,20,1.5\n-5,170,\n")
    lat, lon, val = read_observations(p)
    assert lat.tolist() == [10.0, -5.0] and lon.tolist() == [20.0, 170.0]
    assert val[0] == 1.5 and np.isnan(val[1])
    r = tmp_path / "r.csv"
    write_raster(RasterData.global_grid(2, 2, [[1.0, 2.0], [np.nan, 4.0]]), r)
    lat, lon, val = read_observations(r)
    assert len(val) == 4 and np.isnan(val[2])
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(RasterFormatError):
        read_observations(bad)


def test_read_locations(tmp_path):
    p = tmp_path / "loc.csv"
    p.write_text("lat,lon\n1,2\n3,4\n")
    lat, lon = read_locations(p)
    assert lat.tolist() == [1.0, 3.0] and lon.tolist() == [2.0, 4.0]
    p.write_text("lat,lon\n1,oops\n")
    with pytest.raises(RasterFormatError, match="row 0"):
        read_locations(p)


def test_write_table(tmp_path):
    p = tmp_path / "t.csv"
    write_table(p, {"a": [1, 2], "b": [0.5, 0.25]})
    assert p.read_text() == "a,b\n1.0,0.5\n2.0,0.25\n"


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "out"))
    assert output_path("x/y.csv") == tmp_path / "out" / "x" / "y.csv"
    assert (tmp_path / "out" / "x").is_dir()
    absolute = tmp_path / "abs.csv"
    assert output_path(absolute) == absolute
    monkeypatch.delenv(OUTPUT_DIR_ENV)
    assert str(output_path("rel.csv")) == "rel.csv"
