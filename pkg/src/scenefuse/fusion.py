"""Per-frame graph construction and streaming fusion into the global graph.

The engine consumes one frame at a time: detections above the confidence
threshold are lifted to 3D Gaussians (geometry module), wrapped in a local
per-frame graph together with surviving relations, and then folded into the
global graph by greedy Hellinger-gated merging. Merging is symmetric moment
matching, so node weights are strictly additive and the Gaussian of a merged
node is the moment projection of the weighted mixture of its parents.

The integrate step processes local nodes in descending detection-score
order. For each node it finds the joint nearest same-class candidate among
(a) nodes still waiting in the queue and (b) existing global nodes. If the
nearest distance clears the merge threshold the node is merged (global
candidates win exact ties); a node merged with another queued node replaces
it at the front of the queue so the combined evidence is reconsidered
immediately. Nodes with no candidate below the threshold are inserted as new
global nodes. Local nodes whose covariance is degenerate (non-positive
determinant) skip matching entirely and are inserted directly.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from ._accel import best_match, merge_moments_into
from .errors import (
    DegenerateCovarianceError,
    InvalidDepthError,
    InvalidDetectionError,
    MergeContractError,
    MissingDepthError,
    SceneFuseError,
    SingularJacobianError,
)
from .geometry import BoundingBox2D, CameraIntrinsics, CameraPose, Gaussian3D, Z_MIN, lift_detection
from .graph import (
    DET_MIN,
    GlobalSSG,
    LocalSSG,
    ObjectNode,
    RelationEdge,
    log_det3x3,
    log_det3x3_batch,
    merge_point_reservoirs,
)

if TYPE_CHECKING:  # pragma: no cover
    from .streams import DepthMap, FrameRecord

log = logging.getLogger("scenefuse")


@dataclass(frozen=True)
class FusionConfig:
    """Knobs of the fusion engine.

    hellinger_threshold: merge gate; candidate pairs at or above it stay apart.
    confidence_threshold: detections scoring below it are dropped at ingest.
    top_k_relations: per-frame cap on relations kept after deduplication.
    min_depth: centroid depths below this reject the detection.
    jacobian_mode: "camera-frame" (default) or "pixel"; see geometry.lift_detection.
    eval_point_cap: per-node reservoir size for evaluation points.
    """

    hellinger_threshold: float = 0.85
    confidence_threshold: float = 0.7
    top_k_relations: int = 10
    min_depth: float = Z_MIN
    jacobian_mode: str = "camera-frame"
    eval_point_cap: int = 256

    def validate(self) -> None:
        if not (0.0 < self.hellinger_threshold < 1.0):
            raise ValueError("hellinger_threshold must lie in (0, 1)")
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise ValueError("confidence_threshold must lie in [0, 1]")
        if self.top_k_relations < 0:
            raise ValueError("top_k_relations must be >= 0")
        if not (self.min_depth > 0.0):
            raise ValueError("min_depth must be positive")
        if self.jacobian_mode not in ("camera-frame", "pixel"):
            raise ValueError(f"unknown jacobian_mode: {self.jacobian_mode!r}")
        if self.eval_point_cap < 1:
            raise ValueError("eval_point_cap must be >= 1")


@dataclass(frozen=True)
class MergeEvent:
    """One merge decision. Ids >= 0 are global node ids; a local queue slot
    i is encoded as -(i + 1)."""

    kept_id: int
    absorbed_id: int
    distance: float
    frame_id: int


@dataclass
class FrameResult:
    """Outcome of processing one frame."""

    frame_id: int
    lifted: int = 0
    dropped: int = 0
    merge_events: list[MergeEvent] = field(default_factory=list)
    lift_seconds: float = 0.0
    merge_seconds: float = 0.0
    skipped: bool = False
    skip_reason: str = ""


def _logdet_or_raise(cov: np.ndarray, who: str) -> float:
    ld = log_det3x3(cov)
    if ld == -math.inf:
        raise DegenerateCovarianceError(f"{who} covariance has determinant <= {DET_MIN:g}")
    return ld


def bhattacharyya(a: Gaussian3D, b: Gaussian3D) -> float:
    """Bhattacharyya distance between two 3D Gaussians.

    Uses the log-determinant form so the distance is exactly 0.0 for
    bit-identical inputs. Raises DegenerateCovarianceError if either input
    covariance, or their average, has determinant below the guard.
    """
    ld_a = _logdet_or_raise(a.cov, "first")
    ld_b = _logdet_or_raise(b.cov, "second")
    s = 0.5 * (a.cov + b.cov)
    ld_s = _logdet_or_raise(s, "averaged")
    d = a.mean - b.mean
    quad = float(d @ np.linalg.solve(s, d))
    return 0.125 * quad + 0.5 * (ld_s - 0.5 * (ld_a + ld_b))


def hellinger(a: Gaussian3D, b: Gaussian3D) -> float:
    """Hellinger distance in [0, 1): sqrt(1 - exp(-B))."""
    return math.sqrt(max(1.0 - math.exp(-bhattacharyya(a, b)), 0.0))


def merge_moments(
    w_a: float, mean_a: np.ndarray, cov_a: np.ndarray, w_b: float, mean_b: np.ndarray, cov_b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Moment-matched mean and covariance of the two-component mixture."""
    mean = np.empty(3)
    cov = np.empty((3, 3))
    merge_moments_into(
        float(w_a), np.asarray(mean_a, dtype=np.float64), np.asarray(cov_a, dtype=np.float64),
        float(w_b), np.asarray(mean_b, dtype=np.float64), np.asarray(cov_b, dtype=np.float64),
        mean, cov,
    )
    return mean, cov


def merge_gaussians(
    a: ObjectNode,
    b: ObjectNode,
    *,
    eval_point_cap: int = 256,
    rng: np.random.Generator | None = None,
) -> ObjectNode:
    """Merge two nodes of the same class into one (id and class taken from a).

    Weight and score sums add; the Gaussian is the moment-matched mixture
    with mixture weights proportional to the node weights; evaluation-point
    reservoirs are merged under the cap.
    """
    if a.class_id != b.class_id:
        raise MergeContractError(f"cannot merge class {a.class_id} with class {b.class_id}")
    if a.weight < 1 or b.weight < 1:
        raise MergeContractError("node weights must be >= 1")
    mean, cov = merge_moments(
        float(a.weight), a.gaussian.mean, a.gaussian.cov, float(b.weight), b.gaussian.mean, b.gaussian.cov
    )
    points, seen = merge_point_reservoirs(
        a.eval_points, a.eval_seen, b.eval_points, b.eval_seen, eval_point_cap, rng
    )
    return ObjectNode(
        id=a.id,
        class_id=a.class_id,
        gaussian=Gaussian3D(mean=mean, cov=cov),
        weight=a.weight + b.weight,
        score_sum=a.score_sum + b.score_sum,
        eval_points=points,
        eval_seen=seen,
    )


def _eval_region_points(
    det,
    depth: "DepthMap",
    cam: CameraIntrinsics,
    pose: CameraPose,
    cap: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray | None, int]:
    """Back-project the valid pixels of the central half-size sub-window.

    The sub-window spans the half-open pixel ranges
    [ceil(c - extent/4), ceil(c + extent/4)) in each axis, intersected with
    the image. Pixels with non-finite or non-positive depth are skipped. At
    most cap points are kept (uniform subsample); the count seen is returned
    alongside so reservoir merging stays unbiased.
    """
    u0 = max(math.ceil(det.cx - det.w / 4.0), 0)
    u1 = min(math.ceil(det.cx + det.w / 4.0), depth.width)
    v0 = max(math.ceil(det.cy - det.h / 4.0), 0)
    v1 = min(math.ceil(det.cy + det.h / 4.0), depth.height)
    if u1 <= u0 or v1 <= v0:
        return None, 0
    window = depth.values[v0:v1, u0:u1]
    vs, us = np.nonzero(np.isfinite(window) & (window > 0.0))
    if len(us) == 0:
        return None, 0
    d = window[vs, us].astype(np.float64)
    u = (us + u0).astype(np.float64)
    v = (vs + v0).astype(np.float64)
    pts_cam = np.empty((len(d), 3))
    pts_cam[:, 0] = (u - cam.cx) / cam.fx * d
    pts_cam[:, 1] = (v - cam.cy) / cam.fy * d
    pts_cam[:, 2] = d
    pts_world = pts_cam @ pose.rotation.T + pose.translation
    seen = len(pts_world)
    if seen > cap:
        keep = rng.choice(seen, size=cap, replace=False)
        keep.sort()
        pts_world = pts_world[keep]
    return pts_world, seen


def build_local_graph(
    frame: "FrameRecord",
    cam: CameraIntrinsics,
    pose: CameraPose,
    cfg: FusionConfig,
    *,
    depth_provider: Callable[[str], "DepthMap"] | None = None,
    record_eval_points: bool = False,
    rng: np.random.Generator | None = None,
) -> LocalSSG:
    """Lift one frame's detections into a per-frame graph.

    Detections below the confidence threshold are dropped silently; a
    detection whose depth is missing/invalid or whose lift fails is dropped
    with a debug log but never aborts the frame. Relations survive only if
    both endpoints survived; duplicates per (subject, object) keep the
    highest score; the survivors are sorted by descending score and truncated
    to top_k_relations. Self-relations are dropped.
    """
    from .streams import sample_centroid_depth

    if rng is None:
        rng = np.random.default_rng(0)
    nodes: list[ObjectNode] = []
    index_map: dict[int, int] = {}
    for det_idx, det in enumerate(frame.detections):
        if det.score < cfg.confidence_threshold:
            continue
        depth_map = None
        z = det.centroid_depth
        if z is None:
            if depth_provider is None or det.depth_ref is None:
                log.debug("frame %d det %d: no depth source, dropped", frame.frame_id, det_idx)
                continue
            try:
                depth_map = depth_provider(det.depth_ref)
                z = sample_centroid_depth(det, depth_map)
            except (MissingDepthError, SceneFuseError, OSError) as exc:
                log.debug("frame %d det %d: depth lookup failed (%s), dropped", frame.frame_id, det_idx, exc)
                continue
        if not math.isfinite(z) or z < cfg.min_depth:
            log.debug("frame %d det %d: depth %r rejected, dropped", frame.frame_id, det_idx, z)
            continue
        bbox = BoundingBox2D(
            center=np.array([det.cx, det.cy]), width=det.w, height=det.h, score=det.score, class_id=det.class_id
        )
        try:
            gaussian = lift_detection(bbox, z, cam, pose, jacobian_mode=cfg.jacobian_mode)
        except (InvalidDetectionError, InvalidDepthError, SingularJacobianError) as exc:
            log.debug("frame %d det %d: lift failed (%s), dropped", frame.frame_id, det_idx, exc)
            continue
        points: np.ndarray | None = None
        seen = 0
        if record_eval_points:
            if depth_map is None and depth_provider is not None and det.depth_ref is not None:
                try:
                    depth_map = depth_provider(det.depth_ref)
                except (SceneFuseError, OSError):
                    depth_map = None
            if depth_map is not None:
                points, seen = _eval_region_points(det, depth_map, cam, pose, cfg.eval_point_cap, rng)
            if points is None:
                points = gaussian.mean.reshape(1, 3).copy()
                seen = 1
        node_id = len(nodes)
        nodes.append(
            ObjectNode(
                id=node_id,
                class_id=det.class_id,
                gaussian=gaussian,
                weight=1,
                score_sum=det.score,
                eval_points=points,
                eval_seen=seen,
            )
        )
        index_map[det_idx] = node_id
    best: dict[tuple[int, int], tuple[int, float]] = {}
    for rel in frame.relations:
        s = index_map.get(rel.subject)
        o = index_map.get(rel.object)
        if s is None or o is None or s == o:
            continue
        key = (s, o)
        if key not in best or rel.score > best[key][1]:
            best[key] = (rel.predicate, rel.score)
    ranked = sorted(best.items(), key=lambda kv: -kv[1][1])[: cfg.top_k_relations]
    edges = [
        RelationEdge(subject_id=s, object_id=o, votes={pid: [1, score]})
        for (s, o), (pid, score) in ranked
    ]
    return LocalSSG(frame_id=frame.frame_id, nodes=nodes, edges=edges)


@dataclass
class _Slot:
    """Mutable working copy of a queued local node during integrate."""

    class_id: int
    weight: int
    score_sum: float
    eval_points: np.ndarray | None
    eval_seen: int
    carried: list[int]


def integrate(
    local: LocalSSG,
    global_graph: GlobalSSG,
    cfg: FusionConfig,
    *,
    rng: np.random.Generator | None = None,
) -> tuple[GlobalSSG, list[MergeEvent]]:
    """Fold a local graph into the global graph; returns it plus merge events.

    The global graph is mutated in place. Node weight is conserved: the total
    global weight grows by exactly the sum of local node weights. Every local
    edge lands on the merged endpoints' global nodes unless the merge made it
    a self-loop, in which case it is dropped.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n = len(local.nodes)
    events: list[MergeEvent] = []
    if n == 0:
        if local.edges:
            raise MergeContractError("local graph has edges but no nodes")
        return global_graph, events

    q_means = np.empty((n, 3))
    q_covs = np.empty((n, 3, 3))
    slots: list[_Slot] = []
    for i, node in enumerate(local.nodes):
        q_means[i] = node.gaussian.mean
        q_covs[i] = node.gaussian.cov
        slots.append(
            _Slot(
                class_id=node.class_id,
                weight=node.weight,
                score_sum=node.score_sum,
                eval_points=node.eval_points,
                eval_seen=node.eval_seen,
                carried=[node.id],
            )
        )
    q_logdets = log_det3x3_batch(q_covs)
    class_ids = np.array([s.class_id for s in slots], dtype=np.int64)
    local_by_class = {int(cid): np.nonzero(class_ids == cid)[0] for cid in set(class_ids.tolist())}
    alive = np.zeros(n, dtype=bool)
    order = sorted(range(n), key=lambda i: (-slots[i].score_sum, i))
    queue = deque(order)
    alive[order] = True
    remap: dict[int, int] = {}
    threshold = cfg.hellinger_threshold
    mirror_means, mirror_covs, mirror_logdets = global_graph.mirror()

    while queue:
        i = queue.popleft()
        alive[i] = False
        slot = slots[i]

        if q_logdets[i] == -math.inf:
            log.warning(
                "frame %d: local node %d has degenerate covariance, inserted without matching",
                local.frame_id,
                i,
            )
            node = global_graph.add_node(
                class_id=slot.class_id,
                gaussian=Gaussian3D(mean=q_means[i].copy(), cov=q_covs[i].copy()),
                weight=slot.weight,
                score_sum=slot.score_sum,
                eval_points=slot.eval_points,
                eval_seen=slot.eval_seen,
            )
            mirror_means, mirror_covs, mirror_logdets = global_graph.mirror()
            for orig in slot.carried:
                remap[orig] = node.id
            continue

        merged_into_global = False
        while True:
            peers = local_by_class[slot.class_id]
            cand_q = peers[alive[peers]]
            cand_g = global_graph.candidate_id_array(slot.class_id)
            best_q, dq, best_g, dg = best_match(
                q_means[i], q_covs[i], q_logdets[i],
                q_means, q_covs, q_logdets, cand_q,
                mirror_means, mirror_covs, mirror_logdets, cand_g,
                DET_MIN,
            )
            if min(dq, dg) >= threshold:
                break
            if dg <= dq:
                gid = int(cand_g[best_g])
                gnode = global_graph.nodes[gid]
                mean = np.empty(3)
                cov = np.empty((3, 3))
                merge_moments_into(
                    float(gnode.weight), mirror_means[gid], mirror_covs[gid],
                    float(slot.weight), q_means[i], q_covs[i], mean, cov,
                )
                if gnode.eval_points is None and slot.eval_points is None:
                    points, seen = None, gnode.eval_seen + slot.eval_seen
                else:
                    points, seen = merge_point_reservoirs(
                        gnode.eval_points, gnode.eval_seen, slot.eval_points, slot.eval_seen,
                        cfg.eval_point_cap, rng,
                    )
                gnode.weight += slot.weight
                gnode.score_sum += slot.score_sum
                gnode.eval_points = points
                gnode.eval_seen = seen
                global_graph.set_gaussian(gid, Gaussian3D(mean=mean, cov=cov))
                events.append(MergeEvent(kept_id=gid, absorbed_id=-(i + 1), distance=float(dg), frame_id=local.frame_id))
                for orig in slot.carried:
                    remap[orig] = gid
                merged_into_global = True
                break
            j = int(cand_q[best_q])
            queue.remove(j)
            alive[j] = False
            other = slots[j]
            merge_moments_into(
                float(slot.weight), q_means[i], q_covs[i],
                float(other.weight), q_means[j], q_covs[j], q_means[i], q_covs[i],
            )
            if slot.eval_points is None and other.eval_points is None:
                points, seen = None, slot.eval_seen + other.eval_seen
            else:
                points, seen = merge_point_reservoirs(
                    slot.eval_points, slot.eval_seen, other.eval_points, other.eval_seen,
                    cfg.eval_point_cap, rng,
                )
            q_logdets[i] = log_det3x3(q_covs[i])
            slot.weight += other.weight
            slot.score_sum += other.score_sum
            slot.eval_points = points
            slot.eval_seen = seen
            slot.carried.extend(other.carried)
            events.append(MergeEvent(kept_id=-(i + 1), absorbed_id=-(j + 1), distance=float(dq), frame_id=local.frame_id))
            if q_logdets[i] == -math.inf:
                break

        if not merged_into_global:
            node = global_graph.add_node(
                class_id=slot.class_id,
                gaussian=Gaussian3D(mean=q_means[i].copy(), cov=q_covs[i].copy()),
                weight=slot.weight,
                score_sum=slot.score_sum,
                eval_points=slot.eval_points,
                eval_seen=slot.eval_seen,
            )
            mirror_means, mirror_covs, mirror_logdets = global_graph.mirror()
            for orig in slot.carried:
                remap[orig] = node.id

    for edge in local.edges:
        try:
            s = remap[edge.subject_id]
            o = remap[edge.object_id]
        except KeyError as exc:
            raise MergeContractError(f"edge references unknown local node {exc}") from exc
        if s == o:
            continue
        global_graph.accumulate_edge(s, o, edge.votes)
    return global_graph, events


def process_frame(
    frame: "FrameRecord",
    state: GlobalSSG,
    cfg: FusionConfig,
    *,
    rng: np.random.Generator | None = None,
    depth_provider: Callable[[str], "DepthMap"] | None = None,
    record_eval_points: bool = False,
) -> FrameResult:
    """Lift one frame and integrate it, reporting per-stage wall time.

    A frame whose construction fails outright is skipped with a warning and
    leaves the state untouched; integrate itself is total for any local
    graph that build_local_graph can produce.
    """
    result = FrameResult(frame_id=frame.frame_id)
    t0 = time.perf_counter()
    try:
        frame.camera.validate()
        frame.pose.validate(tol=1e-6)
    except ValueError as exc:
        log.warning("frame %d skipped: %s", frame.frame_id, exc)
        result.skipped = True
        result.skip_reason = str(exc)
        return result
    try:
        local = build_local_graph(
            frame, frame.camera, frame.pose, cfg,
            depth_provider=depth_provider, record_eval_points=record_eval_points, rng=rng,
        )
    except SceneFuseError as exc:
        log.warning("frame %d skipped: %s", frame.frame_id, exc)
        result.skipped = True
        result.skip_reason = str(exc)
        result.lift_seconds = time.perf_counter() - t0
        return result
    t1 = time.perf_counter()
    _, events = integrate(local, state, cfg, rng=rng)
    t2 = time.perf_counter()
    result.lifted = len(local.nodes)
    result.dropped = len(frame.detections) - len(local.nodes)
    result.merge_events = events
    result.lift_seconds = t1 - t0
    result.merge_seconds = t2 - t1
    return result
