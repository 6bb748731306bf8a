"""Visual crops as 8-bit binary PPM files."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..core import ImageCube
from ..io import CampaignConfig, read_cube

log = logging.getLogger(__name__)

TRIPLETS = {"vis": (663.0, 560.0, 466.0), "swir": (1943.0, 1261.0, 832.0)}
DEFAULT_CROP = 128
STRETCH = (2.0, 98.0)
# a requested wavelength farther than this from every band is "not covered"
COVER_TOL_NM = 10.0
_warned: set = set()


def nearest_band(wavelengths: np.ndarray, target_nm: float) -> int:
    wl = np.asarray(wavelengths, dtype=np.float64)
    b = int(np.argmin(np.abs(wl - target_nm)))
    if abs(wl[b] - target_nm) > COVER_TOL_NM and (target_nm, wl[b]) not in _warned:
        _warned.add((target_nm, wl[b]))
        log.warning("%.1f nm not covered; using nearest band %d at %.1f nm",
                    target_nm, b, wl[b])
    return b


def stretch(plane: np.ndarray, pct=STRETCH) -> np.ndarray:
    """Percentile stretch to uint8; a degenerate range maps to mid-gray."""
    lo, hi = np.percentile(plane, pct)
    if not hi > lo:
        return np.full(plane.shape, 128, dtype=np.uint8)
    scaled = (plane - lo) / (hi - lo)
    return np.round(np.clip(scaled, 0.0, 1.0) * 255.0).astype(np.uint8)


def clip_window(shape: tuple[int, int], row: int, col: int, size: int) -> tuple[slice, slice]:
    h, w = shape
    r0, c0 = max(0, row), max(0, col)
    r1, c1 = min(h, row + size), min(w, col + size)
    if (r0, c0, r1, c1) != (row, col, row + size, col + size):
        log.warning("crop window (%d, %d, %d) clipped to the %dx%d image", row, col, size, h, w)
    if r1 <= r0 or c1 <= c0:
        raise ValueError("crop window lies outside the image")
    return slice(r0, r1), slice(c0, c1)


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields = raw.split(maxsplit=4)
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(fields[4], dtype=np.uint8).reshape(h, w, 3)


def render(cube: ImageCube, wavelengths_nm, window: tuple[slice, slice]) -> np.ndarray:
    bands = [nearest_band(cube.wavelengths_nm, t) for t in wavelengths_nm]
    return np.stack([stretch(cube.data[window][:, :, b]) for b in bands], axis=-1)


def cmd_crop(config: CampaignConfig, scale: str = "rr") -> list[Path]:
    """Write crops of every fusion output (and the RR ground truth)."""
    from .campaign import scene_dirs

    out = Path(config.output_dir)
    written = []
    for scene in scene_dirs(config):
        src = out / "fused" / scale / scene.name
        stems = {m.name: src / m.name for m in config.methods}
        if scale == "rr":
            stems["gt"] = scene / "gt"
        specs = [c for c in config.crops if c.get("scene", scene.name) == scene.name] or [{}]
        for k, spec in enumerate(specs):
            for label, stem in stems.items():
                if not stem.with_suffix(".hsc").exists():
                    log.warning("crop: %s missing, skipped", stem)
                    continue
                cube = read_cube(stem)
                size = int(spec.get("size", min(DEFAULT_CROP, cube.height, cube.width)))
                row = int(spec.get("row", (cube.height - size) // 2))
                col = int(spec.get("col", (cube.width - size) // 2))
                window = clip_window((cube.height, cube.width), row, col, size)
                for tname, wl in TRIPLETS.items():
                    path = out / "crops" / scale / scene.name / f"{label}_{k}_{tname}.ppm"
                    write_ppm(path, render(cube, wl, window))
                    written.append(path)
    return written
