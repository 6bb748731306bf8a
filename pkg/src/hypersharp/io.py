"""Raster and campaign-configuration serialization.

A raster is stored as a pair of files sharing a stem:

``<stem>.hsc``
    raw little-endian samples, band-sequential (all of band 0, then band 1 ...)
``<stem>.json``
    sidecar header: ``height``, ``width``, ``bands``, ``dtype`` (``f32``,
    ``f64`` or ``u16``), ``byte_order`` (always ``little``) and the optional
    ``wavelengths_nm`` and ``gsd_m``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .core import ImageCube, PanImage, SensorModel

PathLike = Union[str, Path]

DTYPES = {"f32": "<f4", "f64": "<f8", "u16": "<u2"}
_HEADER_KEYS = {"height", "width", "bands", "dtype", "byte_order", "wavelengths_nm", "gsd_m"}

METRIC_NAMES = ("ergas", "sam", "q2n", "d_lambda", "d_s", "rqnr")


def _stem(path: PathLike) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".hsc", ".json") else p


@dataclass(frozen=True)
class CubeHeader:
    height: int
    width: int
    bands: int
    dtype: str = "f64"
    byte_order: str = "little"
    wavelengths_nm: Optional[list] = None
    gsd_m: Optional[float] = None

    def __post_init__(self):
        if min(self.height, self.width, self.bands) < 1:
            raise ValueError("header dimensions must be positive")
        if self.dtype not in DTYPES:
            raise ValueError(f"unsupported dtype {self.dtype!r}; use one of {sorted(DTYPES)}")
        if self.byte_order != "little":
            raise ValueError("only little-endian payloads are supported")
        if self.wavelengths_nm is not None and len(self.wavelengths_nm) != self.bands:
            raise ValueError("wavelengths_nm length differs from band count")

    @property
    def count(self) -> int:
        return self.height * self.width * self.bands

    @classmethod
    def from_dict(cls, d: dict) -> "CubeHeader":
        unknown = set(d) - _HEADER_KEYS
        if unknown:
            warnings.warn(f"ignoring unknown header keys: {sorted(unknown)}", stacklevel=3)
        try:
            return cls(
                height=int(d["height"]),
                width=int(d["width"]),
                bands=int(d["bands"]),
                dtype=d.get("dtype", "f64"),
                byte_order=d.get("byte_order", "little"),
                wavelengths_nm=d.get("wavelengths_nm"),
                gsd_m=d.get("gsd_m"),
            )
        except KeyError as e:
            raise ValueError(f"header is missing required key {e}") from None

    def to_dict(self) -> dict:
        return asdict(self)


def read_header(path: PathLike) -> CubeHeader:
    side = _stem(path).with_suffix(".json")
    if not side.exists():
        raise FileNotFoundError(f"missing sidecar header {side}")
    with open(side) as f:
        return CubeHeader.from_dict(json.load(f))


def _read_payload(path: PathLike) -> tuple[CubeHeader, np.ndarray]:
    stem = _stem(path)
    header = read_header(stem)
    raw = np.fromfile(stem.with_suffix(".hsc"), dtype=DTYPES[header.dtype])
    if raw.size != header.count:
        raise ValueError(
            f"payload of {stem.with_suffix('.hsc')} holds {raw.size} samples, "
            f"header declares {header.count}")
    data = raw.astype(np.float64).reshape(header.bands, header.height, header.width)
    if not np.isfinite(data).all():
        raise ValueError(f"non-finite samples in {stem.with_suffix('.hsc')}")
    return header, data


def read_cube(path: PathLike) -> ImageCube:
    header, data = _read_payload(path)
    wl = None if header.wavelengths_nm is None else np.asarray(header.wavelengths_nm)
    return ImageCube(np.ascontiguousarray(data.transpose(1, 2, 0)), wl, header.gsd_m)


def _write(stem: Path, bsq: np.ndarray, header: CubeHeader) -> None:
    stem.parent.mkdir(parents=True, exist_ok=True)
    dt = DTYPES[header.dtype]
    with open(stem.with_suffix(".hsc"), "wb") as f:
        # one band at a time keeps the temporary small for large cubes
        for band in bsq:
            f.write(np.ascontiguousarray(band, dtype=dt).tobytes())
    with open(stem.with_suffix(".json"), "w") as f:
        json.dump(header.to_dict(), f, indent=2)
        f.write("\n")


def write_cube(cube: ImageCube, path: PathLike) -> None:
    wl = None if cube.wavelengths_nm is None else cube.wavelengths_nm.tolist()
    header = CubeHeader(cube.height, cube.width, cube.bands, "f64", "little", wl, cube.gsd_m)
    _write(_stem(path), cube.data.transpose(2, 0, 1), header)


def read_pan(path: PathLike) -> PanImage:
    header, data = _read_payload(path)
    if header.bands != 1:
        raise ValueError(f"PAN file has {header.bands} bands")
    return PanImage(data[0], header.gsd_m)


def write_pan(pan: PanImage, path: PathLike) -> None:
    header = CubeHeader(pan.height, pan.width, 1, "f64", "little", None, pan.gsd_m)
    _write(_stem(path), pan.data[np.newaxis], header)


# ---------------------------------------------------------------------------
# campaign configuration


@dataclass
class MethodSpec:
    name: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class CampaignConfig:
    """Everything a benchmark campaign needs; JSON round-trippable.

    ``inputs`` lists scene directories produced by ``synth`` (or laid out
    the same way by hand). When empty, the scenes generated under
    ``output_dir`` are used.
    """

    inputs: list[str] = field(default_factory=list)
    sensor: dict[str, Any] = field(default_factory=lambda: {
        "ratio": 6, "hs_mtf_gain": 0.30, "pan_mtf_gain": 0.40, "kernel_taps": 41})
    methods: list[MethodSpec] = field(default_factory=list)
    metrics: list[str] = field(default_factory=lambda: list(METRIC_NAMES))
    output_dir: str = "campaign"
    seed: int = 0
    scene: dict[str, Any] = field(default_factory=dict)
    n_scenes: int = 4
    fr_size: int = 1200
    repeats: int = 3
    threads: Optional[int] = None
    crops: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self):
        from .fusion import METHOD_NAMES, RESERVED_METHODS

        self.methods = [m if isinstance(m, MethodSpec) else
                        MethodSpec(m) if isinstance(m, str) else
                        MethodSpec(m["name"], dict(m.get("params", {})))
                        for m in (self.methods or list(METHOD_NAMES))]
        for m in self.methods:
            if m.name in RESERVED_METHODS:
                raise ValueError(f"method {m.name!r} is reserved but not implemented")
            if m.name not in METHOD_NAMES:
                raise ValueError(
                    f"unknown method {m.name!r}; registered methods: {', '.join(METHOD_NAMES)}")
        if not self.metrics:
            raise ValueError("at least one metric is required")
        bad = [m for m in self.metrics if m not in METRIC_NAMES]
        if bad:
            raise ValueError(f"unknown metrics {bad}; choose from {', '.join(METRIC_NAMES)}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be an unsigned integer")
        ratio = int(self.sensor.get("ratio", 6))
        size = int(self.scene.get("size", 0))
        if size and size % (ratio * ratio):
            raise ValueError(
                f"scene size {size} must be divisible by R^2 = {ratio * ratio} "
                "so that both the FR and the RR pair are integral")
        if self.fr_size % ratio:
            raise ValueError(f"fr_size {self.fr_size} must be divisible by R = {ratio}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    def sensor_model(self, bands: int) -> SensorModel:
        return SensorModel.from_dict(self.sensor, bands)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = [{"name": m.name, "params": m.params} for m in self.methods]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            warnings.warn(f"ignoring unknown config keys: {sorted(unknown)}", stacklevel=2)
        return cls(**{k: v for k, v in d.items() if k in known})


def load_config(path: PathLike) -> CampaignConfig:
    with open(path) as f:
        return CampaignConfig.from_dict(json.load(f))


def save_config(config: CampaignConfig, path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=2)
        f.write("\n")
