"""Posterior predictive draws of the latent field at new locations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisConfig, assemble_basis
from .grid import GeodesicGrid
from .io import RasterData
from .model import PosteriorSamples

#: Upper bound on the number of float64 values held per streaming chunk (32 MiB).
CHUNK_ELEMENTS = 1 << 22


class MetadataMismatch(ValueError):
    pass


def check_metadata(samples: PosteriorSamples, **expected) -> None:
    """Fail loudly when fit metadata disagrees with what the caller expects.

    Keys whose expected value is ``None`` are skipped; keys missing from the
    samples' metadata are treated as a mismatch.
    """
    for key, want in expected.items():
        if want is None:
            continue
        have = samples.meta.get(key)
        if key == "kappa":
            ok = have is not None and np.isclose(have, want, rtol=1e-10, atol=0)
        else:
            ok = have == want
        if not ok:
            raise MetadataMismatch(f"metadata mismatch for {key}: samples have {have!r}, got {want!r}")


@dataclass
class PredictionRequest:
    lat: np.ndarray
    lon: np.ndarray
    samples: PosteriorSamples
    grid: GeodesicGrid
    cfg: BasisConfig
    kappa: float | None = None

    def __post_init__(self):
        self.lat = np.atleast_1d(np.asarray(self.lat, dtype=float))
        self.lon = np.atleast_1d(np.asarray(self.lon, dtype=float))
        check_metadata(
            self.samples,
            nu=self.grid.nu,
            degree=self.cfg.degree,
            normalize_rows=self.cfg.normalize_rows,
            kappa=self.kappa,
        )
        if self.samples.K != self.grid.n_knots:
            raise MetadataMismatch(
                f"samples have {self.samples.K} coefficients, grid has {self.grid.n_knots} knots"
            )

    def basis(self):
        return assemble_basis(self.lat, self.lon, self.grid, self.cfg)


def request_from_samples(lat, lon, samples: PosteriorSamples, nu=None, degree=None) -> PredictionRequest:
    """Build a request using the grid and basis settings recorded at fit time.

    ``nu``/``degree``, when given, must agree with the recorded values.
    """
    check_metadata(samples, nu=nu, degree=degree)
    try:
        fit_nu, fit_degree = int(samples.meta["nu"]), int(samples.meta["degree"])
    except KeyError as exc:
        raise MetadataMismatch(f"samples lack metadata {exc}") from None
    cfg = BasisConfig(fit_degree, bool(samples.meta.get("normalize_rows", True)), fit_nu)
    return PredictionRequest(lat, lon, samples, GeodesicGrid(fit_nu), cfg)


def posterior_predictive(
    req: PredictionRequest, observation_noise: bool = False, seed: int = 0
) -> np.ndarray:
    """``G x m`` draws of ``alpha^g + B~ beta^g``.

    With ``observation_noise`` each draw also gets ``N(0, 1/tau_eps^g)``
    noise, i.e. a predictive draw of a new observation.
    """
    B = req.basis()
    s = req.samples
    draws = s.alpha[:, None] + (B @ s.beta.T).T
    if observation_noise:
        rng = np.random.default_rng(seed)
        draws = draws + rng.standard_normal(draws.shape) / np.sqrt(s.tau_eps)[:, None]
    return draws


def predictive_moments(req: PredictionRequest, chunk: int | None = None):
    """Pointwise posterior mean and sd (``ddof=0``), streamed over draws.

    Per-chunk means and sums of squares are merged pairwise, so memory
    stays at ``chunk x m`` regardless of ``G``.
    """
    B = req.basis()
    s = req.samples
    m = B.shape[0]
    if chunk is None:
        chunk = max(1, CHUNK_ELEMENTS // max(m, 1))
    mean = np.zeros(m)
    m2 = np.zeros(m)
    count = 0
    for start in range(0, s.G, chunk):
        stop = min(start + chunk, s.G)
        block = s.alpha[start:stop, None] + (B @ s.beta[start:stop].T).T
        nb = stop - start
        bmean = block.mean(axis=0)
        bm2 = ((block - bmean) ** 2).sum(axis=0)
        total = count + nb
        delta = bmean - mean
        mean = mean + delta * (nb / total)
        m2 = m2 + bm2 + delta * delta * (count * nb / total)
        count = total
    return mean, np.sqrt(m2 / count)


def mean_sd_raster(samples: PosteriorSamples, rows: int, cols: int, nu=None, degree=None):
    """Posterior mean and sd rasters of the latent field on a global grid."""
    template = RasterData.global_grid(rows, cols)
    lat, lon = template.centroids()
    req = request_from_samples(lat, lon, samples, nu=nu, degree=degree)
    mean, sd = predictive_moments(req)
    return template.with_values(mean.reshape(rows, cols)), template.with_values(sd.reshape(rows, cols))
