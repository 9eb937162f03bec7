"""Figure rendering for CLI reports.

Uses the object-oriented matplotlib API with the Agg canvas so nothing
depends on an interactive backend or global pyplot state.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

# Agg embeds no timestamp in PNG output, keeping figures reproducible
_PNG_META = {"Software": None}


def _new_figure(width=7.0, height=3.6):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def _save(fig, path):
    fmt = str(path).rsplit(".", 1)[-1].lower()
    kwargs = {"metadata": _PNG_META} if fmt == "png" else {}
    fig.savefig(path, bbox_inches="tight", **kwargs)


def _lonlat_axes(fig):
    ax = fig.add_subplot(1, 1, 1)
    ax.set_xlim(-180, 180)
    ax.set_ylim(-90, 90)
    ax.set_xticks(np.arange(-180, 181, 60))
    ax.set_yticks(np.arange(-90, 91, 30))
    ax.set_xlabel("longitude (deg)")
    ax.set_ylabel("latitude (deg)")
    return ax


def plot_raster(raster, path, title="", label=""):
    """Colour map of a :class:`~geopspline.io.RasterData`; missing cells blank."""
    fig = _new_figure()
    ax = _lonlat_axes(fig)
    half_lat, half_lon = abs(raster.dlat) / 2, abs(raster.dlon) / 2
    lat, lon = raster.lat, raster.lon
    extent = (lon.min() - half_lon, lon.max() + half_lon, lat.min() - half_lat, lat.max() + half_lat)
    values = raster.values if raster.dlat < 0 else raster.values[::-1]
    im = ax.imshow(np.ma.masked_invalid(values), extent=extent, origin="upper",
                   aspect="auto", cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, label=label or raster.units)
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_knot_values(lat, lon, values, path, title="", label=""):
    """Scatter of per-knot values, e.g. prior marginal variances."""
    fig = _new_figure()
    ax = _lonlat_axes(fig)
    sc = ax.scatter(lon, lat, c=values, s=4, cmap="magma", linewidths=0)
    fig.colorbar(sc, ax=ax, label=label)
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_band_probability(band_map, path, title="", truth_center=None):
    """Band probability by longitude and latitude, optionally with a reference curve."""
    fig = _new_figure()
    ax = _lonlat_axes(fig)
    lon, lat = band_map.lon, band_map.lat
    dlon = 360.0 / len(lon)
    im = ax.imshow(band_map.prob.T, extent=(lon[0], lon[-1] + dlon, lat[-1], lat[0]),
                   origin="upper", aspect="auto", cmap="Greys", vmin=0, vmax=1,
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="probability")
    if truth_center is not None:
        ax.plot(lon, truth_center, color="tab:red", lw=1)
    if title:
        ax.set_title(title)
    _save(fig, path)
