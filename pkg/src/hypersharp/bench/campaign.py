"""Benchmark campaigns: scene generation, fusion runs and evaluation.

On-disk layout under the campaign output directory::

    scenes/<scene>/hs, pan          native pair (HS at size / R)
    scenes/<scene>/hs_rr, pan_rr    Wald-degraded pair
    scenes/<scene>/gt               reduced-resolution ground truth (= hs)
    scenes/<scene>/hs_fr, pan_fr    full-resolution test tile
    fused/<scale>/<scene>/<method>  fusion outputs
    results_<scale>.csv / .md       tables
    timings.csv                     wall-clock medians
    manifest.json                   content hashes (no timestamps)
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import statistics
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..core import ImageCube, PanImage, SensorModel
from ..fusion import get_method
from ..io import CampaignConfig, read_cube, read_pan, write_cube, write_pan
from ..metrics import (MetricReport, d_lambda, d_s, ergas, q2n, rqnr, sam)
from ..synth import SceneSpec, generate_scene, make_rr_pair

log = logging.getLogger(__name__)

SCALES = ("rr", "fr")
RR_METRICS = ("ergas", "sam", "q2n")
FR_METRICS = ("d_lambda", "d_s", "rqnr")
# paper-scale geometry: 600x600 RR outputs need a 3600 px PAN scene at R=6
DEFAULT_SCENE_SIZE = 3600
SCENE_FILES = ("hs", "pan", "hs_rr", "pan_rr", "gt", "hs_fr", "pan_fr")
# peak working set of a run in units of the output cube size
_MEMORY_FACTOR = {"tv": 14.0}
_DEFAULT_MEMORY_FACTOR = 6.0


class CampaignError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# helpers


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        env = os.environ.get("HYPERSHARP_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def scene_seed(seed: int, index: int) -> int:
    """Seed of scene ``index``; distinct scenes get independent streams."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint32)[0])


def scene_name(index: int) -> str:
    return f"scene_{index:02d}"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_stem(stem: Path) -> dict:
    return {p.name: _sha256(p) for p in (stem.with_suffix(".hsc"), stem.with_suffix(".json"))}


def available_memory() -> Optional[int]:
    try:
        with open("/proc/meminfo") as f:
            for line in f:
                if line.startswith("MemAvailable:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    return None


def preflight(method: str, fused_shape: tuple[int, int, int]) -> Optional[str]:
    """Reason string when a run will not fit in memory, else None."""
    need = _MEMORY_FACTOR.get(method, _DEFAULT_MEMORY_FACTOR) * 8 * int(np.prod(fused_shape))
    have = available_memory()
    if have is not None and need > have:
        return (f"preflight: {method} on {fused_shape} needs about {need / 2**30:.1f} GiB, "
                f"{have / 2**30:.1f} GiB available")
    return None


class Manifest:
    """JSON document of content hashes, updated section by section."""

    def __init__(self, out: Path):
        self.path = out / "manifest.json"
        self.data = json.loads(self.path.read_text()) if self.path.exists() else {}

    def update(self, section: str, value) -> None:
        self.data["version"] = __version__
        self.data[section] = value
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# scenes


def scene_spec(config: CampaignConfig, index: int) -> SceneSpec:
    gain = config.sensor.get("hs_mtf_gain", 0.30)
    if not np.isscalar(gain):
        raise CampaignError("synthetic scenes need a scalar hs_mtf_gain")
    params = {"size": DEFAULT_SCENE_SIZE, **config.scene}
    params.update(seed=scene_seed(config.seed, index), ratio=int(config.sensor.get("ratio", 6)),
                  hs_mtf_gain=float(gain),
                  pan_mtf_gain=float(config.sensor.get("pan_mtf_gain", 0.40)))
    return SceneSpec(**params)


def fr_tile(hs: ImageCube, pan: PanImage, ratio: int, fr_size: int):
    """Centered full-resolution test tile (PAN side ``fr_size``), aligned to R."""
    side = min(fr_size, pan.height, pan.width) // ratio
    r0 = (hs.height - side) // 2
    c0 = (hs.width - side) // 2
    hs_t = hs.with_data(hs.data[r0:r0 + side, c0:c0 + side])
    pan_t = PanImage(pan.data[r0 * ratio:(r0 + side) * ratio, c0 * ratio:(c0 + side) * ratio],
                     pan.gsd_m)
    return hs_t, pan_t


def cmd_synth(config: CampaignConfig) -> dict:
    """Generate the configured scenes; returns the manifest section."""
    out = Path(config.output_dir)
    section = {}
    for i in range(config.n_scenes):
        spec = scene_spec(config, i)
        name = scene_name(i)
        d = out / "scenes" / name
        d.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        hs, pan = generate_scene(spec)
        sensor = spec.sensor()
        hs_rr, pan_rr, gt = make_rr_pair(hs, pan, sensor)
        hs_fr, pan_fr = fr_tile(hs, pan, spec.ratio, config.fr_size)
        for stem, obj in (("hs", hs), ("pan", pan), ("hs_rr", hs_rr), ("pan_rr", pan_rr),
                          ("gt", gt), ("hs_fr", hs_fr), ("pan_fr", pan_fr)):
            (write_pan if isinstance(obj, PanImage) else write_cube)(obj, d / stem)
        (d / "scene.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
        files = {}
        for stem in SCENE_FILES:
            files.update(_hash_stem(d / stem))
        section[name] = {"spec": spec.to_dict(), "files": files}
        log.info("synth %s: %d px, %d bands in %.1f s", name, spec.size, spec.bands,
                 time.perf_counter() - t0)
    Manifest(out).update("scenes", section)
    return section


def scene_dirs(config: CampaignConfig) -> list[Path]:
    if config.inputs:
        dirs = [Path(p) for p in config.inputs]
    else:
        root = Path(config.output_dir) / "scenes"
        dirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.exists() else []
    if not dirs:
        raise CampaignError("no scenes found; run the synth subcommand first")
    return dirs


def load_inputs(scene: Path, scale: str):
    if scale == "rr":
        return read_cube(scene / "hs_rr"), read_pan(scene / "pan_rr")
    return read_cube(scene / "hs_fr"), read_pan(scene / "pan_fr")


# ---------------------------------------------------------------------------
# fusion runs


@dataclass
class RunRecord:
    scene: str
    method: str
    scale: str
    ok: bool
    times_s: list[float] = field(default_factory=list)
    reason: str = ""

    @property
    def median_s(self) -> float:
        return statistics.median(self.times_s) if self.times_s else float("nan")


def _run_scene(scene: str, scene_dir: str, scale: str, methods: list, sensor_dict: dict,
               repeats: int, out_dir: str) -> list[RunRecord]:
    hs, pan = load_inputs(Path(scene_dir), scale)
    sensor = SensorModel.from_dict(sensor_dict, hs.bands)
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    records = []
    for name, params in methods:
        fused_shape = (pan.height, pan.width, hs.bands)
        reason = preflight(name, fused_shape)
        if reason:
            log.error("%s/%s: %s", scene, name, reason)
            records.append(RunRecord(scene, name, scale, False, reason=reason))
            continue
        times = []
        try:
            fn = get_method(name)
            for _ in range(repeats):
                result = fn(hs, pan, sensor, **params)
                times.append(max(result.runtime_s, 1e-9))
            write_cube(result.cube, target / name)
            records.append(RunRecord(scene, name, scale, True, times))
        except Exception as exc:  # isolate the failure, keep the campaign going
            log.error("%s/%s failed: %s", scene, name, exc)
            log.debug(traceback.format_exc())
            records.append(RunRecord(scene, name, scale, False, times,
                                     f"{type(exc).__name__}: {exc}"))
    return records


def cmd_sharpen(config: CampaignConfig, scale: str, threads: Optional[int] = None,
                repeats: Optional[int] = None) -> list[RunRecord]:
    """Run every configured method on every scene at one scale.

    Timing repeats apply at RR scale; FR runs are timed once.
    """
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    out = Path(config.output_dir)
    reps = (repeats or config.repeats) if scale == "rr" else 1
    methods = [(m.name, dict(m.params)) for m in config.methods]
    jobs = [(d.name, str(d), scale, methods, dict(config.sensor), reps,
             str(out / "fused" / scale / d.name)) for d in scene_dirs(config)]
    workers = min(resolve_threads(threads or config.threads), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_run_scene, *zip(*jobs)))
    else:
        chunks = [_run_scene(*job) for job in jobs]
    records = [r for chunk in chunks for r in chunk]
    failures = {f"{r.scene}/{r.method}": r.reason for r in records if not r.ok}
    (out / "fused" / scale).mkdir(parents=True, exist_ok=True)
    (out / "fused" / scale / "failures.json").write_text(
        json.dumps(failures, indent=2, sort_keys=True) + "\n")
    write_timings(out / "timings.csv", records)
    return records


def write_timings(path: Path, records: list[RunRecord]) -> None:
    """Merge records into timings.csv, replacing rows of the same (scale, scene, method)."""
    rows = {}
    if path.exists():
        lines = path.read_text().splitlines()[1:]
        for line in lines:
            parts = line.split(",")
            rows[tuple(parts[:3])] = line
    for r in records:
        rows[(r.scale, r.scene, r.method)] = ",".join(
            [r.scale, r.scene, r.method, str(len(r.times_s)),
             f"{r.median_s:.6f}" if r.ok else "", "ok" if r.ok else "failed"])
    header = "scale,scene,method,repeats,median_s,status"
    path.write_text("\n".join([header, *(rows[k] for k in sorted(rows))]) + "\n")


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class CampaignResult:
    """Per (method, scene) reports of one scale, plus failures and environment."""

    scale: str
    scenes: list[str]
    methods: list[str]
    metrics: list[str]
    reports: dict[tuple[str, str], MetricReport] = field(default_factory=dict)
    failures: dict[tuple[str, str], str] = field(default_factory=dict)
    runtime_s: dict[tuple[str, str], float] = field(default_factory=dict)
    environment: dict = field(default_factory=dict)

    def value(self, method: str, scene: str, metric: str) -> Optional[float]:
        rep = self.reports.get((method, scene))
        return None if rep is None else rep.scores.get(metric)

    def average(self, method: str, metric: str) -> Optional[float]:
        vals = [self.value(method, s, metric) for s in self.scenes]
        if not vals or any(v is None for v in vals):
            return None
        return float(np.mean(vals))

    @property
    def ok(self) -> bool:
        return not self.failures


def _metrics_for(scale: str, wanted: list[str]) -> list[str]:
    pool = RR_METRICS if scale == "rr" else FR_METRICS
    return [m for m in pool if m in wanted]


def evaluate_pair(scale: str, fused: ImageCube, scene: Path, sensor_dict: dict,
                  metrics: list[str]) -> dict[str, float]:
    scores = {}
    if scale == "rr":
        gt = read_cube(scene / "gt")
        ratio = int(sensor_dict.get("ratio", 6))
        funcs = {"ergas": lambda: ergas(fused, gt, ratio), "sam": lambda: sam(fused, gt),
                 "q2n": lambda: q2n(fused, gt)}
        for m in metrics:
            scores[m] = funcs[m]()
        return scores
    hs, pan = load_inputs(scene, "fr")
    sensor = SensorModel.from_dict(sensor_dict, hs.bands)
    if "d_lambda" in metrics or "rqnr" in metrics:
        scores["d_lambda"] = d_lambda(fused, hs, sensor)
    if "d_s" in metrics or "rqnr" in metrics:
        scores["d_s"] = d_s(fused, pan)
    if "rqnr" in metrics:
        scores["rqnr"] = rqnr(scores["d_lambda"], scores["d_s"])
    return {m: scores[m] for m in metrics}


def _eval_scene(scene_dir: str, scale: str, methods: list[str], sensor_dict: dict,
                metrics: list[str], fused_dir: str, failures_in: dict):
    scene = Path(scene_dir)
    out = []
    for method in methods:
        key = f"{scene.name}/{method}"
        stem = Path(fused_dir) / method
        if not stem.with_suffix(".hsc").exists():
            out.append((method, None, failures_in.get(key, "missing output")))
            continue
        try:
            fused = read_cube(stem)
            out.append((method, evaluate_pair(scale, fused, scene, sensor_dict, metrics), ""))
        except Exception as exc:
            log.error("eval %s failed: %s", key, exc)
            out.append((method, None, f"{type(exc).__name__}: {exc}"))
    return scene.name, out


def cmd_eval(config: CampaignConfig, scale: str, threads: Optional[int] = None) -> CampaignResult:
    """Score every fusion output of one scale and write the result tables."""
    from .tables import write_tables

    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    out = Path(config.output_dir)
    dirs = scene_dirs(config)
    metrics = _metrics_for(scale, config.metrics)
    methods = [m.name for m in config.methods]
    fail_path = out / "fused" / scale / "failures.json"
    failures_in = json.loads(fail_path.read_text()) if fail_path.exists() else {}
    jobs = [(str(d), scale, methods, dict(config.sensor), metrics,
             str(out / "fused" / scale / d.name), failures_in) for d in dirs]
    workers = min(resolve_threads(threads or config.threads), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            done = list(pool.map(_eval_scene, *zip(*jobs)))
    else:
        done = [_eval_scene(*job) for job in jobs]
    result = CampaignResult(scale, [d.name for d in dirs], methods, metrics,
                            environment=environment(threads or config.threads))
    for scene, rows in done:
        for method, scores, reason in rows:
            if scores is None:
                result.failures[(method, scene)] = reason
            else:
                result.reports[(method, scene)] = MetricReport(method, scene, scores)
    if metrics:
        paths = write_tables(result, out)
        Manifest(out).update(f"results_{scale}",
                             {p.name: _sha256(p) for p in paths})
    return result


def environment(threads: Optional[int]) -> dict:
    import platform

    import scipy

    return {"hypersharp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "threads": resolve_threads(threads)}
