"""Rank-based location of the latitudinal band where the latent field peaks.

For every meridian, each posterior draw of the field along a regular
latitude grid is ranked (rank ``L`` at the maximum). A latitude counts as
inside the band for that draw when ``1 - rank / L < w`` with ``w`` the band
width relative to a meridian's length; averaging the indicator over draws
gives the band probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import floor

import numpy as np

from .basis import BasisConfig, assemble_basis
from .grid import GeodesicGrid
from .model import PosteriorSamples
from .predict import CHUNK_ELEMENTS, request_from_samples


@dataclass(frozen=True)
class DetectConfig:
    width_km: float = 1000.0
    meridian_length_km: float = 20000.0
    L: int = 1000
    M: int = 360

    def __post_init__(self):
        if not 0 < self.w < 1:
            raise ValueError(f"relative band width must be in (0, 1), got {float(self.w)}")
        if self.L < 2 or self.M < 1:
            raise ValueError("need L >= 2 latitudes and M >= 1 meridians")

    @property
    def w(self) -> Fraction:
        # exact ratio, so the boundary rank L(1 - w) is compared without round-off
        return Fraction(self.width_km) / Fraction(self.meridian_length_km)

    @property
    def n_selected(self) -> int:
        """How many ranks ``phi`` in ``1..L`` satisfy ``1 - phi / L < w``."""
        return self.L - floor(self.L * (1 - self.w))

    def latitudes(self) -> np.ndarray:
        return np.linspace(90.0, -90.0, self.L)

    def longitudes(self) -> np.ndarray:
        return -180.0 + 360.0 * np.arange(self.M) / self.M


@dataclass
class BandProbabilityMap:
    prob: np.ndarray  # (M, L)
    lat: np.ndarray
    lon: np.ndarray

    def as_columns(self) -> dict:
        lon = np.repeat(self.lon, len(self.lat))
        lat = np.tile(self.lat, len(self.lon))
        return {"lon": lon, "lat": lat, "probability": self.prob.ravel()}


def rank_vector(values) -> np.ndarray:
    """Ranks ``1..L`` (``L`` at the maximum); ties go lower to the lower index.

    Accepts a vector or a ``(G, L)`` array ranked row by row.
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot rank non-finite values")
    order = np.argsort(v, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(1, v.shape[-1] + 1), axis=-1)
    return ranks


def band_indicator(ranks, cfg: DetectConfig) -> np.ndarray:
    """``I(1 - phi / L < w)`` evaluated exactly on integer ranks."""
    return np.asarray(ranks) > floor(cfg.L * (1 - cfg.w))


def band_probability_from_draws(draws, cfg: DetectConfig) -> np.ndarray:
    """Band probability along one meridian from ``G x L`` field draws."""
    return band_indicator(rank_vector(draws), cfg).mean(axis=0)


def band_probability(
    samples: PosteriorSamples,
    grid: GeodesicGrid,
    basis_cfg: BasisConfig,
    cfg: DetectConfig = DetectConfig(),
) -> BandProbabilityMap:
    lat = cfg.latitudes()
    lon = cfg.longitudes()
    G = samples.G
    prob = np.empty((cfg.M, cfg.L))
    chunk = max(1, CHUNK_ELEMENTS // cfg.L)
    for m, lon_m in enumerate(lon):
        B = assemble_basis(lat, np.full(cfg.L, lon_m), grid, basis_cfg)
        hits = np.zeros(cfg.L)
        for start in range(0, G, chunk):
            stop = min(start + chunk, G)
            draws = samples.alpha[start:stop, None] + (B @ samples.beta[start:stop].T).T
            hits += band_indicator(rank_vector(draws), cfg).sum(axis=0)
        prob[m] = hits / G
    return BandProbabilityMap(prob, lat, lon)


def band_probability_for_samples(samples: PosteriorSamples, cfg: DetectConfig = DetectConfig(),
                                 nu=None, degree=None) -> BandProbabilityMap:
    """Like :func:`band_probability`, with grid and basis taken from fit metadata."""
    req = request_from_samples([0.0], [0.0], samples, nu=nu, degree=degree)
    return band_probability(samples, req.grid, req.cfg, cfg)
