"""Geodesic P-splines: Bayesian smoothing of point data on the sphere.

B-spline bases live on a recursively subdivided icosahedron, coefficients
get an intrinsic GMRF prior, and the model is fitted by a sparse
constrained Gibbs sampler.
"""

from .basis import BasisConfig, assemble_basis
from .detect import DetectConfig, band_probability, band_probability_for_samples
from .grid import GeodesicGrid, build_icosahedron, latlon_to_xyz, subdivide, xyz_to_latlon
from .io import RasterData, SynthSpec, load_samples, read_raster, save_samples, synth_generate, write_raster
from .model import GibbsSampler, ModelSpec, PosteriorSamples, gibbs_fit
from .penalty import icar_structure, planar_structure, scale_structure
from .pipeline import fit_observations, fit_raster
from .predict import PredictionRequest, mean_sd_raster, posterior_predictive, predictive_moments

__version__ = "0.1.0"

__all__ = [
    "BasisConfig",
    "DetectConfig",
    "GeodesicGrid",
    "GibbsSampler",
    "ModelSpec",
    "PosteriorSamples",
    "PredictionRequest",
    "RasterData",
    "SynthSpec",
    "assemble_basis",
    "band_probability",
    "band_probability_for_samples",
    "build_icosahedron",
    "fit_observations",
    "fit_raster",
    "gibbs_fit",
    "icar_structure",
    "latlon_to_xyz",
    "load_samples",
    "mean_sd_raster",
    "planar_structure",
    "posterior_predictive",
    "predictive_moments",
    "read_raster",
    "save_samples",
    "scale_structure",
    "subdivide",
    "synth_generate",
    "write_raster",
    "xyz_to_latlon",
]
