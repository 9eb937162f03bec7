"""Raster files, synthetic data and posterior-sample files.

Raster format: a one-line JSON header followed by ``rows`` lines of
``cols`` comma-separated values, row 0 first::

    {"cols":4,"dlat":-45.0,"dlon":90.0,"lat0":67.5,"lon0":-135.0,"missing":"NaN","rows":4,"units":"kg/m2"}
    1.5,2.0,NaN,3.25
    ...

``lat0``/``lon0`` are the centroid of cell ``(0, 0)`` and ``dlat``/``dlon``
the centroid spacing. Empty fields and the missing token both mean
"missing". Values are written with ``repr`` so files round-trip exactly.

Samples files are ``.npz`` archives (arrays ``alpha``, ``beta``,
``tau_beta``, ``tau_eps`` and a JSON ``meta`` string) written with fixed
zip timestamps so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import os
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import PosteriorSamples

OUTPUT_DIR_ENV = "GEOPSPLINE_OUTPUT_DIR"


class RasterFormatError(ValueError):
    pass


def output_path(path) -> Path:
    """Resolve a relative output path against ``$GEOPSPLINE_OUTPUT_DIR`` if set."""
    path = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


@dataclass
class RasterData:
    values: np.ndarray
    lat0: float
    lon0: float
    dlat: float
    dlon: float
    units: str = ""
    missing_token: str = "NaN"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise RasterFormatError("raster values must be two-dimensional")
        lat, lon = self.lat, self.lon
        if self.rows and not (np.all(lat > -90) and np.all(lat < 90)):
            raise RasterFormatError("cell centroid latitudes must lie strictly inside (-90, 90)")
        if self.cols and not (np.all(lon >= -180) and np.all(lon < 180)):
            raise RasterFormatError("cell centroid longitudes must lie in [-180, 180)")

    @classmethod
    def global_grid(cls, rows: int, cols: int, values=None, units: str = "") -> "RasterData":
        """Regular global raster, north row first, cells of 180/rows by 360/cols degrees."""
        if values is None:
            values = np.full((rows, cols), np.nan)
        return cls(values, 90.0 - 90.0 / rows, -180.0 + 180.0 / cols, -180.0 / rows, 360.0 / cols, units)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def lat(self) -> np.ndarray:
        return self.lat0 + self.dlat * np.arange(self.rows)

    @property
    def lon(self) -> np.ndarray:
        return self.lon0 + self.dlon * np.arange(self.cols)

    def centroids(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-major flattened centroid latitudes and longitudes."""
        lat, lon = np.meshgrid(self.lat, self.lon, indexing="ij")
        return lat.ravel(), lon.ravel()

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def missing_fraction(self) -> float:
        return float(self.missing.mean()) if self.values.size else 0.0

    def header(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "lat0": self.lat0,
            "lon0": self.lon0,
            "dlat": self.dlat,
            "dlon": self.dlon,
            "missing": self.missing_token,
            "units": self.units,
        }

    def with_values(self, values) -> "RasterData":
        return RasterData(values, self.lat0, self.lon0, self.dlat, self.dlon, self.units,
                          self.missing_token)


def _fmt(v: float, token: str) -> str:
    return token if np.isnan(v) else repr(float(v))


def write_raster(raster: RasterData, path) -> None:
    header = json.dumps(raster.header(), sort_keys=True, separators=(",", ":"))
    tok = raster.missing_token
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in raster.values.tolist():
            fh.write(",".join(_fmt(v, tok) for v in row) + "\n")


def read_raster(path) -> RasterData:
    with open(path) as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise RasterFormatError(f"{path}: malformed header line: {exc}") from exc
        required = ("rows", "cols", "lat0", "lon0", "dlat", "dlon")
        missing_keys = [k for k in required if k not in header]
        if missing_keys:
            raise RasterFormatError(f"{path}: header lacks {', '.join(missing_keys)}")
        rows, cols = int(header["rows"]), int(header["cols"])
        token = str(header.get("missing", "NaN"))
        values = np.empty((rows, cols))
        for r in range(rows):
            line = fh.readline()
            if not line:
                raise RasterFormatError(f"{path}: file ends before data row {r} (expected {rows} rows)")
            fields = line.rstrip("\r\n").split(",")
            if len(fields) != cols:
                raise RasterFormatError(
                    f"{path}: data row {r} has {len(fields)} values, expected {cols}"
                )
            for c, f in enumerate(fields):
                f = f.strip()
                if f == "" or f == token or f.lower() == "nan":
                    values[r, c] = np.nan
                else:
                    try:
                        values[r, c] = float(f)
                    except ValueError:
                        raise RasterFormatError(
                            f"{path}: data row {r}, column {c}: cannot parse {f!r}"
                        ) from None
        if fh.read().strip():
            raise RasterFormatError(f"{path}: more than {rows} data rows")
    return RasterData(
        values, float(header["lat0"]), float(header["lon0"]), float(header["dlat"]),
        float(header["dlon"]), str(header.get("units", "")), token,
    )


def read_locations(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``lat,lon`` CSV (header row required) or a raster's centroids."""
    with open(path) as fh:
        first = fh.readline()
    if first.lstrip().startswith("{"):
        return read_raster(path).centroids()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"lat", "lon"} <= set(reader.fieldnames):
            raise RasterFormatError(f"{path}: expected a header with 'lat' and 'lon' columns")
        lat, lon = [], []
        for i, row in enumerate(reader):
            try:
                lat.append(float(row["lat"]))
                lon.append(float(row["lon"]))
            except (TypeError, ValueError):
                raise RasterFormatError(f"{path}: row {i}: bad coordinates {row!r}") from None
    return np.asarray(lat), np.asarray(lon)


def read_observations(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Observations from a raster file or a ``lat,lon,value`` CSV.

    Missing values come back as NaN; the caller decides whether to drop them.
    """
    with open(path) as fh:
        first = fh.readline()
    if first.lstrip().startswith("{"):
        raster = read_raster(path)
        lat, lon = raster.centroids()
        return lat, lon, raster.values.ravel()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"lat", "lon", "value"} <= set(reader.fieldnames):
            raise RasterFormatError(f"{path}: expected a header with 'lat', 'lon' and 'value' columns")
        rows = []
        for i, row in enumerate(reader):
            try:
                v = row["value"].strip()
                rows.append((float(row["lat"]), float(row["lon"]), float(v) if v else np.nan))
            except (AttributeError, TypeError, ValueError):
                raise RasterFormatError(f"{path}: row {i}: cannot parse {row!r}") from None
    if not rows:
        raise RasterFormatError(f"{path}: no observations")
    lat, lon, val = (np.asarray(c) for c in zip(*rows))
    return lat, lon, val


def write_table(path, columns: dict) -> None:
    """Write equal-length columns as CSV with ``repr``-formatted numbers."""
    names = list(columns)
    cols = [np.asarray(columns[k]).tolist() for k in names]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# --- synthetic data -----------------------------------------------------


@dataclass
class SynthSpec:
    """Synthetic field on a global raster.

    ``truth`` is ``"band"`` (Gaussian band in latitude whose centre follows
    ``center_lat + center_amp * sin(wavenumber * lon + phase)``), ``"bump"``
    (same with a fixed centre), ``"sinusoid"`` (``amplitude * cos(lat - centre)``
    around the same wandering centre, so curvature is spread over the whole
    sphere) or ``"constant"``.
    """

    rows: int = 36
    cols: int = 72
    truth: str = "band"
    baseline: float = 20.0
    amplitude: float = 30.0
    center_lat: float = 5.0
    center_amp: float = 10.0
    wavenumber: int = 1
    phase: float = 0.0
    width: float = 15.0
    noise_sd: float = 1.0
    mask_fraction: float = 0.0
    mask_pattern: str = "random"
    units: str = "kg/m2"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if not 0 <= self.mask_fraction < 1:
            raise ValueError("mask_fraction must lie in [0, 1)")
        if self.truth not in ("band", "bump", "sinusoid", "constant"):
            raise ValueError(f"unknown truth {self.truth!r}")
        if self.mask_pattern not in ("random", "blocks"):
            raise ValueError(f"unknown mask pattern {self.mask_pattern!r}")

    def band_center(self, lon) -> np.ndarray:
        lon = np.asarray(lon, dtype=float)
        if self.truth == "bump":
            return np.full_like(lon, self.center_lat)
        return self.center_lat + self.center_amp * np.sin(
            self.wavenumber * np.deg2rad(lon) + self.phase
        )

    def evaluate(self, lat, lon) -> np.ndarray:
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        if self.truth == "constant":
            return np.full(np.broadcast(lat, lon).shape, float(self.baseline))
        if self.truth == "sinusoid":
            return self.baseline + self.amplitude * np.cos(np.deg2rad(lat - self.band_center(lon)))
        z = (lat - self.band_center(lon)) / self.width
        return self.baseline + self.amplitude * np.exp(-0.5 * z * z)


def _block_mask(rows, cols, fraction, rng) -> np.ndarray:
    mask = np.zeros((rows, cols), dtype=bool)
    target = fraction * rows * cols
    while mask.sum() < target:
        h = rng.integers(max(1, rows // 8), max(2, rows // 3) + 1)
        w = rng.integers(max(1, cols // 10), max(2, cols // 4) + 1)
        r0 = rng.integers(0, rows - h + 1)
        c0 = rng.integers(0, cols)
        cidx = (c0 + np.arange(w)) % cols
        mask[r0 : r0 + h, cidx] = True
    return mask


def synth_generate(spec: SynthSpec, seed: int = 0) -> tuple[RasterData, RasterData]:
    """Noisy, masked observations and the noise-free truth on the same raster."""
    noise_seq, mask_seq = np.random.SeedSequence(seed).spawn(2)
    grid = RasterData.global_grid(spec.rows, spec.cols, units=spec.units)
    lat, lon = np.meshgrid(grid.lat, grid.lon, indexing="ij")
    truth = spec.evaluate(lat, lon)
    noise = np.random.default_rng(noise_seq).standard_normal(truth.shape)
    obs = truth + spec.noise_sd * noise
    mrng = np.random.default_rng(mask_seq)
    if spec.mask_fraction > 0:
        if spec.mask_pattern == "random":
            k = int(round(spec.mask_fraction * truth.size))
            mask = np.zeros(truth.size, dtype=bool)
            mask[mrng.permutation(truth.size)[:k]] = True
            mask = mask.reshape(truth.shape)
        else:
            mask = _block_mask(spec.rows, spec.cols, spec.mask_fraction, mrng)
        obs[mask] = np.nan
    return grid.with_values(obs), grid.with_values(truth)


# --- posterior samples ----------------------------------------------------

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def save_samples(path, samples: PosteriorSamples) -> None:
    meta = dict(samples.meta)
    meta.update({"burnin": samples.burnin, "thin": samples.thin, "seed": samples.seed})
    arrays = {
        "alpha": samples.alpha,
        "beta": samples.beta,
        "tau_beta": samples.tau_beta,
        "tau_eps": samples.tau_eps,
        "meta": np.array(json.dumps(meta, sort_keys=True)),
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_ZIP_DATE)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def load_samples(path) -> PosteriorSamples:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"].item()))
        return PosteriorSamples(
            alpha=data["alpha"],
            beta=data["beta"],
            tau_beta=data["tau_beta"],
            tau_eps=data["tau_eps"],
            burnin=int(meta.get("burnin", 0)),
            seed=meta.get("seed"),
            thin=int(meta.get("thin", 1)),
            meta=meta,
        )
