"""Convenience layer: from located observations to posterior samples."""

from __future__ import annotations

import logging

import numpy as np

from .basis import BasisConfig, assemble_basis
from .grid import GeodesicGrid
from .model import ModelSpec, PosteriorSamples, gibbs_fit
from .penalty import icar_structure, scale_structure

logger = logging.getLogger(__name__)


def build_spec(
    lat, lon, grid: GeodesicGrid, cfg: BasisConfig, tau_alpha=1e-6, hyper_a=1.0, hyper_b=5e-5
) -> ModelSpec:
    B = assemble_basis(lat, lon, grid, cfg)
    structure = scale_structure(icar_structure(grid))
    return ModelSpec(B, structure, tau_alpha=tau_alpha, hyper_a=hyper_a, hyper_b=hyper_b)


def fit_observations(
    lat,
    lon,
    values,
    nu: int = 5,
    degree: int = 3,
    normalize_rows: bool = True,
    G: int = 5000,
    burnin: int = 500,
    seed: int = 0,
    thin: int = 1,
    tau_alpha: float = 1e-6,
    hyper_a: float = 1.0,
    hyper_b: float = 5e-5,
    grid: GeodesicGrid | None = None,
    progress=None,
) -> PosteriorSamples:
    """Fit the model to point data, dropping missing (NaN) values first."""
    lat, lon, values = (np.asarray(x, dtype=float).ravel() for x in (lat, lon, values))
    keep = ~np.isnan(values)
    if not keep.any():
        raise ValueError("all observations are missing")
    grid = grid if grid is not None else GeodesicGrid(nu)
    cfg = BasisConfig(degree=degree, normalize_rows=normalize_rows, grid_level=grid.nu)
    spec = build_spec(lat[keep], lon[keep], grid, cfg, tau_alpha, hyper_a, hyper_b)
    logger.info("fitting %d observations on %d knots", spec.n, spec.K)
    samples = gibbs_fit(values[keep], spec, G=G, burnin=burnin, seed=seed, thin=thin, progress=progress)
    samples.meta.update({"nu": grid.nu, "degree": degree, "normalize_rows": normalize_rows})
    return samples


def fit_raster(raster, **kwargs) -> PosteriorSamples:
    lat, lon = raster.centroids()
    return fit_observations(lat, lon, raster.values.ravel(), **kwargs)
