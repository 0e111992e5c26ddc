"""Containers and file formats for hyperspectral cubes, endmember
libraries and result bundles.

Pixel order is row-major everywhere: pixel ``n`` sits at grid
coordinates ``(n mod width, n div width)``.  CSV files carry a one-line
column header and print floats with 17 significant digits (lossless for
float64); the raw format stores little-endian float64, band-major,
behind a one-line JSON header.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataFormatError

FLOAT_FMT = "%.17g"


@dataclass
class HsiCube:
    """Observed reflectance image: L bands by N = width*height pixels."""

    width: int
    height: int
    bands: int
    reflectance: np.ndarray  # (L, N), row-major pixel order
    band_wavelengths: Optional[Sequence[float]] = None  # micrometers

    def __post_init__(self) -> None:
        self.reflectance = np.asarray(self.reflectance, dtype=float)
        if self.width < 1 or self.height < 1 or self.bands < 1:
            raise DataFormatError("cube dimensions must be positive")
        n = self.width * self.height
        if self.reflectance.shape != (self.bands, n):
            raise DataFormatError(
                f"reflectance shape {self.reflectance.shape} does not match "
                f"(bands={self.bands}, pixels={n})"
            )
        if not np.all(np.isfinite(self.reflectance)):
            raise DataFormatError("NaN detected in reflectance data")
        if self.band_wavelengths is not None and len(self.band_wavelengths) != self.bands:
            raise DataFormatError("band_wavelengths length must equal bands")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


@dataclass
class EndmemberLibrary:
    """Per-material mean spectra and optional band-wise variances."""

    names: Sequence[str]
    means: np.ndarray  # (L, R), entries strictly inside (0, 1)
    variances: Optional[np.ndarray] = None  # (R, L), entries >= 0

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=float)
        if self.means.ndim != 2:
            raise DataFormatError("means must be an L x R matrix")
        L, R = self.means.shape
        if len(self.names) != R:
            raise DataFormatError("names length must equal the number of endmembers")
        if np.any(self.means <= 0.0) or np.any(self.means >= 1.0):
            raise DataFormatError("endmember means must lie strictly inside (0,1)")
        if self.variances is not None:
            self.variances = np.asarray(self.variances, dtype=float)
            if self.variances.shape != (R, L):
                raise DataFormatError("variances must be an R x L matrix")
            if np.any(self.variances < 0.0):
                raise DataFormatError("variances must be nonnegative")

    @property
    def n_bands(self) -> int:
        return self.means.shape[0]

    @property
    def n_endmembers(self) -> int:
        return self.means.shape[1]


@dataclass
class ResultBundle:
    """Everything one unmixing run produces, in pixel order."""

    abundances: np.ndarray  # (R, N), columns on the simplex
    labels: np.ndarray  # (N,), values in {1..K}
    noise_var: np.ndarray  # (N,), nonnegative
    endmember_means: np.ndarray  # (L, R)
    endmember_vars: np.ndarray  # (R, L)
    dirichlet: np.ndarray  # (R, K)
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.abundances = np.asarray(self.abundances, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.noise_var = np.asarray(self.noise_var, dtype=float)
        self.endmember_means = np.asarray(self.endmember_means, dtype=float)
        self.endmember_vars = np.asarray(self.endmember_vars, dtype=float)
        self.dirichlet = np.asarray(self.dirichlet, dtype=float)
        R, N = self.abundances.shape
        K = self.dirichlet.shape[1]
        if self.labels.shape != (N,) or self.noise_var.shape != (N,):
            raise DataFormatError("labels and noise_var must have one entry per pixel")
        if self.endmember_means.shape[1] != R or self.endmember_vars.shape[0] != R:
            raise DataFormatError("endmember matrices disagree with abundance rows")
        if self.dirichlet.shape[0] != R:
            raise DataFormatError("dirichlet must have R rows")
        if np.any(self.abundances < 0.0):
            raise DataFormatError("abundances must be nonnegative")
        if np.any(np.abs(self.abundances.sum(axis=0) - 1.0) > 1e-9):
            raise DataFormatError("abundance columns must sum to one within 1e-9")
        if np.any(self.labels < 1) or np.any(self.labels > K):
            raise DataFormatError(f"labels must lie in {{1..{K}}}")
        if np.any(self.noise_var < 0.0):
            raise DataFormatError("noise variances must be nonnegative")


# ---------------------------------------------------------------------------
# cube I/O

_CSV_HEADER = "width,height,bands"


def save_cube(cube: HsiCube, path: str, format: str = "csv") -> None:
    """Write a cube as CSV (inspectable) or raw-f64 (exact, compact)."""
    if format == "csv":
        with open(path, "w") as fh:
            fh.write(_CSV_HEADER + "\n")
            fh.write(f"{cube.width},{cube.height},{cube.bands}\n")
            np.savetxt(fh, cube.reflectance, fmt=FLOAT_FMT, delimiter=",")
    elif format == "raw-f64":
        header = json.dumps(
            {"width": cube.width, "height": cube.height, "bands": cube.bands}
        )
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii") + b"\n")
            fh.write(np.ascontiguousarray(cube.reflectance, dtype="<f8").tobytes())
    else:
        raise DataFormatError(f"unknown cube format: {format!r}")


def load_cube(path: str, format: str = "csv") -> HsiCube:
    """Read a cube written by :func:`save_cube`.

    Raises DataFormatError on a malformed header, a payload whose length
    disagrees with the header, or non-finite values.
    """
    if format == "csv":
        with open(path) as fh:
            names = fh.readline().strip()
            if names != _CSV_HEADER:
                raise DataFormatError(f"malformed cube header line: {names!r}")
            try:
                w, h, L = (int(v) for v in fh.readline().split(","))
            except ValueError as exc:
                raise DataFormatError(f"malformed cube dimensions: {exc}") from exc
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.shape != (L, w * h):
            raise DataFormatError(
                f"payload shape {data.shape} does not match header ({L}, {w * h})"
            )
        return HsiCube(width=w, height=h, bands=L, reflectance=data)
    if format == "raw-f64":
        with open(path, "rb") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line)
                w, h, L = header["width"], header["height"], header["bands"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataFormatError(f"malformed raw header: {exc}") from exc
            payload = fh.read()
        expected = w * h * L * 8
        if len(payload) != expected:
            raise DataFormatError(
                f"payload holds {len(payload)} bytes, header implies {expected}"
            )
        data = np.frombuffer(payload, dtype="<f8").reshape(L, w * h).copy()
        return HsiCube(width=w, height=h, bands=L, reflectance=data)
    raise DataFormatError(f"unknown cube format: {format!r}")


# ---------------------------------------------------------------------------
# endmember library I/O (JSON keeps means and variances in one file)


def save_library(lib: EndmemberLibrary, path: str) -> None:
    payload = {
        "names": list(lib.names),
        "means": lib.means.tolist(),
        "variances": None if lib.variances is None else lib.variances.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_library(path: str) -> EndmemberLibrary:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"malformed library file: {exc}") from exc
    try:
        return EndmemberLibrary(
            names=payload["names"],
            means=np.asarray(payload["means"], dtype=float),
            variances=None
            if payload.get("variances") is None
            else np.asarray(payload["variances"], dtype=float),
        )
    except KeyError as exc:
        raise DataFormatError(f"library file missing key {exc}") from exc


# ---------------------------------------------------------------------------
# result bundle I/O


def _write_csv(path: str, header: str, array: np.ndarray, fmt: str = FLOAT_FMT) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, array, fmt=fmt, delimiter=",")


def save_results(bundle: ResultBundle, dir: str) -> None:
    """Write one CSV per map plus meta.json into ``dir``."""
    os.makedirs(dir, exist_ok=True)
    R, N = bundle.abundances.shape
    L = bundle.endmember_means.shape[0]
    K = bundle.dirichlet.shape[1]
    _write_csv(
        os.path.join(dir, "abundances.csv"),
        ",".join(f"a_{r + 1}" for r in range(R)),
        bundle.abundances.T,
    )
    _write_csv(os.path.join(dir, "labels.csv"), "label", bundle.labels[:, None], fmt="%d")
    _write_csv(os.path.join(dir, "noise_var.csv"), "psi2", bundle.noise_var[:, None])
    _write_csv(
        os.path.join(dir, "endmember_means.csv"),
        ",".join(f"m_{r + 1}" for r in range(R)),
        bundle.endmember_means,
    )
    _write_csv(
        os.path.join(dir, "endmember_vars.csv"),
        ",".join(f"band_{l + 1}" for l in range(L)),
        bundle.endmember_vars,
    )
    _write_csv(
        os.path.join(dir, "dirichlet.csv"),
        ",".join(f"class_{k + 1}" for k in range(K)),
        bundle.dirichlet,
    )
    with open(os.path.join(dir, "meta.json"), "w") as fh:
        json.dump(bundle.meta, fh, indent=2, sort_keys=True)


def _read_csv(path: str) -> np.ndarray:
    with open(path) as fh:
        fh.readline()  # header
        return np.loadtxt(fh, delimiter=",", ndmin=2)


def load_results(dir: str) -> ResultBundle:
    """Read a bundle previously written by :func:`save_results`."""
    try:
        abundances = _read_csv(os.path.join(dir, "abundances.csv")).T
        labels = _read_csv(os.path.join(dir, "labels.csv")).astype(int)[:, 0]
        noise_var = _read_csv(os.path.join(dir, "noise_var.csv"))[:, 0]
        means = _read_csv(os.path.join(dir, "endmember_means.csv"))
        variances = _read_csv(os.path.join(dir, "endmember_vars.csv"))
        dirichlet = _read_csv(os.path.join(dir, "dirichlet.csv"))
        with open(os.path.join(dir, "meta.json")) as fh:
            meta = json.load(fh)
    except (ValueError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"malformed result bundle in {dir}: {exc}") from exc
    return ResultBundle(
        abundances=abundances,
        labels=labels,
        noise_var=noise_var,
        endmember_means=means,
        endmember_vars=variances,
        dirichlet=dirichlet,
        meta=meta,
    )
