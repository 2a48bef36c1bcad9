"""Bit-exact file formats: JSON Lines frame streams, raw depth maps, run config.

Frame stream grammar (one JSON object per line, UTF-8):

    {"frame_id": int,
     "camera": {"fx","fy","cx","cy": float, "width","height": int},
     "pose": {"rotation": [9 floats, row-major, camera-to-world],
              "translation": [3 floats, meters]},
     "detections": [{"class_id": int, "score": float in [0,1],
                     "bbox": {"cx","cy","w","h": float pixels},
                     "centroid_depth": float meters (optional),
                     "depth_ref": str path (optional)}],
     "relations": [{"subject","object": detection indices,
                    "predicate": int, "score": float in [0,1]}]}

Unknown keys anywhere in a frame object are parse errors. frame_id must be
strictly increasing across the stream. Detection local indices are positional
(dense, 0-based). Inline centroid_depth takes precedence over depth_ref.

Raw depth format: magic `FRDP`, version byte 0x01, width and height as u32
little-endian, then width*height float32 little-endian values, row-major,
meters. Non-positive or non-finite values mean "no reading" and are skipped
by sampling.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field, fields as dataclass_fields
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import (
    ConfigError,
    FrameParseError,
    MissingDepthError,
    StreamFormatError,
    StreamOrderError,
)
from .fusion import FusionConfig
from .geometry import CameraIntrinsics, CameraPose

logger = logging.getLogger(__name__)

_DEPTH_MAGIC = b"FRDP"
_DEPTH_VERSION = 1
_DEPTH_HEADER = struct.Struct("<4sBII")


@dataclass
class Detection:
    """One 2D detection as carried on the wire; bbox center in pixels."""

    class_id: int
    score: float
    cx: float
    cy: float
    w: float
    h: float
    centroid_depth: float | None = None
    depth_ref: str | None = None


@dataclass
class Relation2D:
    subject: int
    object: int
    predicate: int
    score: float


@dataclass
class FrameRecord:
    frame_id: int
    camera: CameraIntrinsics
    pose: CameraPose
    detections: list[Detection]
    relations: list[Relation2D]


@dataclass
class DepthMap:
    """Row-major depth raster in meters; values[v, u] indexes row v, column u."""

    width: int
    height: int
    values: np.ndarray


# ---------------------------------------------------------------------------
# frame stream parsing
# ---------------------------------------------------------------------------


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) {sorted(unknown)} in {where}")
    missing = required - set(obj)
    if missing:
        raise ValueError(f"missing key(s) {sorted(missing)} in {where}")


def _as_float(v, where: str, lo: float | None = None, hi: float | None = None) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{where} must be a number, got {v!r}")
    f = float(v)
    if not math.isfinite(f):
        raise ValueError(f"{where} must be finite, got {f}")
    if lo is not None and f < lo:
        raise ValueError(f"{where} below {lo}: {f}")
    if hi is not None and f > hi:
        raise ValueError(f"{where} above {hi}: {f}")
    return f


def _as_int(v, where: str, lo: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"{where} must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ValueError(f"{where} below {lo}: {v}")
    return v


def _frame_from_obj(obj: dict) -> FrameRecord:
    if not isinstance(obj, dict):
        raise ValueError("frame line must be a JSON object")
    _require_keys(
        obj,
        {"frame_id", "camera", "pose", "detections", "relations"},
        {"frame_id", "camera", "pose", "detections", "relations"},
        "frame",
    )
    frame_id = _as_int(obj["frame_id"], "frame_id", lo=0)

    cam_obj = obj["camera"]
    _require_keys(cam_obj, {"fx", "fy", "cx", "cy", "width", "height"},
                  {"fx", "fy", "cx", "cy", "width", "height"}, "camera")
    camera = CameraIntrinsics(
        fx=_as_float(cam_obj["fx"], "camera.fx"),
        fy=_as_float(cam_obj["fy"], "camera.fy"),
        cx=_as_float(cam_obj["cx"], "camera.cx"),
        cy=_as_float(cam_obj["cy"], "camera.cy"),
        width=_as_int(cam_obj["width"], "camera.width", lo=1),
        height=_as_int(cam_obj["height"], "camera.height", lo=1),
    )
    camera.validate()

    pose_obj = obj["pose"]
    _require_keys(pose_obj, {"rotation", "translation"}, {"rotation", "translation"}, "pose")
    rot = pose_obj["rotation"]
    tr = pose_obj["translation"]
    if not (isinstance(rot, list) and len(rot) == 9):
        raise ValueError("pose.rotation must be a list of 9 row-major floats")
    if not (isinstance(tr, list) and len(tr) == 3):
        raise ValueError("pose.translation must be a list of 3 floats")
    pose = CameraPose(
        rotation=np.array([_as_float(v, "pose.rotation") for v in rot]).reshape(3, 3),
        translation=np.array([_as_float(v, "pose.translation") for v in tr]),
    )
    try:
        pose.validate(tol=1e-6)
    except ValueError as exc:
        raise ValueError(str(exc)) from exc

    detections = []
    if not isinstance(obj["detections"], list):
        raise ValueError("detections must be a list")
    for i, d in enumerate(obj["detections"]):
        where = f"detections[{i}]"
        _require_keys(d, {"class_id", "score", "bbox", "centroid_depth", "depth_ref"},
                      {"class_id", "score", "bbox"}, where)
        bbox = d["bbox"]
        _require_keys(bbox, {"cx", "cy", "w", "h"}, {"cx", "cy", "w", "h"}, f"{where}.bbox")
        depth = d.get("centroid_depth")
        if depth is not None:
            depth = _as_float(depth, f"{where}.centroid_depth")
        ref = d.get("depth_ref")
        if ref is not None and not isinstance(ref, str):
            raise ValueError(f"{where}.depth_ref must be a string path")
        detections.append(
            Detection(
                class_id=_as_int(d["class_id"], f"{where}.class_id", lo=0),
                score=_as_float(d["score"], f"{where}.score", lo=0.0, hi=1.0),
                cx=_as_float(bbox["cx"], f"{where}.bbox.cx"),
                cy=_as_float(bbox["cy"], f"{where}.bbox.cy"),
                w=_as_float(bbox["w"], f"{where}.bbox.w"),
                h=_as_float(bbox["h"], f"{where}.bbox.h"),
                centroid_depth=depth,
                depth_ref=ref,
            )
        )
        if detections[-1].w <= 0 or detections[-1].h <= 0:
            raise ValueError(f"{where}.bbox extents must be positive")

    relations = []
    if not isinstance(obj["relations"], list):
        raise ValueError("relations must be a list")
    n_det = len(detections)
    for i, r in enumerate(obj["relations"]):
        where = f"relations[{i}]"
        _require_keys(r, {"subject", "object", "predicate", "score"},
                      {"subject", "object", "predicate", "score"}, where)
        subj = _as_int(r["subject"], f"{where}.subject", lo=0)
        obj_i = _as_int(r["object"], f"{where}.object", lo=0)
        if subj >= n_det or obj_i >= n_det:
            raise ValueError(f"{where} endpoint out of range (frame has {n_det} detections)")
        relations.append(
            Relation2D(
                subject=subj,
                object=obj_i,
                predicate=_as_int(r["predicate"], f"{where}.predicate", lo=0),
                score=_as_float(r["score"], f"{where}.score", lo=0.0, hi=1.0),
            )
        )

    return FrameRecord(frame_id=frame_id, camera=camera, pose=pose,
                       detections=detections, relations=relations)


def parse_frame_stream(
    path, on_error: Callable[[FrameParseError], None] | None = None
) -> Iterator[FrameRecord]:
    """Yield FrameRecords from a JSON Lines file.

    A malformed line raises FrameParseError carrying its 1-based line number;
    pass `on_error` to record the error and keep consuming subsequent lines
    instead. Non-monotone frame_id always raises StreamOrderError — that is
    stream corruption, not a line-local problem.
    """
    last_id = None
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                frame = _frame_from_obj(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                err = FrameParseError(line_no, str(exc))
                if on_error is None:
                    raise err from exc
                on_error(err)
                continue
            if last_id is not None and frame.frame_id <= last_id:
                raise StreamOrderError(
                    f"line {line_no}: frame_id {frame.frame_id} not greater than {last_id}"
                )
            last_id = frame.frame_id
            yield frame


def frame_to_obj(frame: FrameRecord) -> dict:
    """Canonical document form of one frame (field order fixed)."""
    dets = []
    for d in frame.detections:
        rec = {
            "class_id": d.class_id,
            "score": float(d.score),
            "bbox": {"cx": float(d.cx), "cy": float(d.cy), "w": float(d.w), "h": float(d.h)},
        }
        if d.centroid_depth is not None:
            rec["centroid_depth"] = float(d.centroid_depth)
        if d.depth_ref is not None:
            rec["depth_ref"] = d.depth_ref
        dets.append(rec)
    return {
        "frame_id": frame.frame_id,
        "camera": {
            "fx": float(frame.camera.fx), "fy": float(frame.camera.fy),
            "cx": float(frame.camera.cx), "cy": float(frame.camera.cy),
            "width": int(frame.camera.width), "height": int(frame.camera.height),
        },
        "pose": {
            "rotation": [float(v) for v in frame.pose.rotation.reshape(9)],
            "translation": [float(v) for v in frame.pose.translation],
        },
        "detections": dets,
        "relations": [
            {"subject": r.subject, "object": r.object, "predicate": r.predicate, "score": float(r.score)}
            for r in frame.relations
        ],
    }


def write_frame_stream(frames: Iterable[FrameRecord], path) -> int:
    """Write frames in the canonical (round-trip byte-exact) JSONL form."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for frame in frames:
            f.write(json.dumps(frame_to_obj(frame), separators=(",", ":")))
            f.write("\n")
            n += 1
    return n


# ---------------------------------------------------------------------------
# depth maps
# ---------------------------------------------------------------------------


def write_depth_map(path, depth: DepthMap | np.ndarray) -> None:
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(_DEPTH_HEADER.pack(_DEPTH_MAGIC, _DEPTH_VERSION, w, h))
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_depth_map(path) -> DepthMap:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _DEPTH_HEADER.size:
        raise StreamFormatError(f"{path}: truncated depth header")
    magic, version, w, h = _DEPTH_HEADER.unpack_from(raw)
    if magic != _DEPTH_MAGIC:
        raise StreamFormatError(f"{path}: bad magic {magic!r}")
    if version != _DEPTH_VERSION:
        raise StreamFormatError(f"{path}: unsupported version {version}")
    payload = raw[_DEPTH_HEADER.size:]
    expected = 4 * w * h
    if len(payload) != expected:
        raise StreamFormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w)
    return DepthMap(width=w, height=h, values=values)


def sample_centroid_depth(detection: Detection, depth: DepthMap) -> float:
    """Depth at the rounded bbox center, median-of-5x5 fallback.

    Centroid rounding is nearest integer with ties to even. An invalid
    centroid reading falls back to the median of valid values in the 5x5
    window around it; a fully invalid window raises MissingDepthError.
    """
    u, v = round(detection.cx), round(detection.cy)
    if not (0 <= u < depth.width and 0 <= v < depth.height):
        raise MissingDepthError(f"bbox center ({u},{v}) outside {depth.width}x{depth.height}")
    val = float(depth.values[v, u])
    if math.isfinite(val) and val > 0.0:
        return val
    window = depth.values[max(0, v - 2): v + 3, max(0, u - 2): u + 3]
    flat = window[np.isfinite(window) & (window > 0.0)]
    if flat.size == 0:
        raise MissingDepthError(f"no valid depth in 5x5 window at ({u},{v})")
    return float(np.median(flat))


class DepthCache:
    """Per-run loader that resolves depth_ref paths relative to the stream file."""

    def __init__(self, root: Path | str | None):
        self.root = Path(root) if root is not None else None
        self._cache: dict[str, DepthMap] = {}

    def __call__(self, ref: str) -> DepthMap:
        dm = self._cache.get(ref)
        if dm is None:
            path = Path(ref)
            if not path.is_absolute() and self.root is not None:
                path = self.root / path
            dm = read_depth_map(path)
            self._cache[ref] = dm
        return dm


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Full run configuration: fusion knobs plus IO paths and toggles."""

    fusion: FusionConfig = field(default_factory=FusionConfig)
    seed: int = 0
    record_eval_points: bool = False
    bench: bool = False
    pipeline_split: bool = False
    input: str | None = None
    output: str | None = None
    export_dot: str | None = None
    vocab_objects: list[str] | None = None
    vocab_predicates: list[str] | None = None


_FUSION_KEYS = {f.name for f in dataclass_fields(FusionConfig)}
_RUN_KEYS = {
    "seed", "record_eval_points", "bench", "pipeline_split",
    "input", "output", "export_dot", "vocab",
}


def run_config_from_obj(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(obj) - _FUSION_KEYS - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    try:
        fusion = FusionConfig(**{k: obj[k] for k in _FUSION_KEYS if k in obj})
        fusion.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad fusion settings: {exc}") from exc
    cfg = RunConfig(fusion=fusion)
    if "seed" in obj:
        if isinstance(obj["seed"], bool) or not isinstance(obj["seed"], int):
            raise ConfigError("seed must be an integer")
        cfg.seed = obj["seed"]
    for key in ("record_eval_points", "bench", "pipeline_split"):
        if key in obj:
            if not isinstance(obj[key], bool):
                raise ConfigError(f"{key} must be a boolean")
            setattr(cfg, key, obj[key])
    for key in ("input", "output", "export_dot"):
        if key in obj:
            if obj[key] is not None and not isinstance(obj[key], str):
                raise ConfigError(f"{key} must be a string path")
            setattr(cfg, key, obj[key])
    if "vocab" in obj:
        v = obj["vocab"]
        if (
            not isinstance(v, dict)
            or set(v) != {"objects", "predicates"}
            or not all(isinstance(x, str) for x in v["objects"])
            or not all(isinstance(x, str) for x in v["predicates"])
        ):
            raise ConfigError('vocab must be {"objects": [names], "predicates": [names]}')
        cfg.vocab_objects = list(v["objects"])
        cfg.vocab_predicates = list(v["predicates"])
    return cfg


def load_run_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            obj = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return run_config_from_obj(obj)
