"""Scene-graph data model: Gaussian object nodes, predicate-vote edges, and
the per-frame local graph plus the accumulated global graph.

The global graph keeps, next to the id-indexed node objects, a
structure-of-arrays mirror of every node's mean / covariance / log-determinant.
The fusion engine scans that mirror directly (one contiguous read per
candidate set) instead of gathering per-node arrays, which is what keeps the
per-frame merge cost flat as the graph grows. The mirror is maintained by the
two mutation points (`add_node`, `set_gaussian`) and checked by `validate`.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidEdgeError, StreamFormatError
from .geometry import Gaussian3D

logger = logging.getLogger(__name__)

# Determinant floor below which a covariance is treated as degenerate.
DET_MIN = 1e-30


def det3x3(a: np.ndarray) -> float:
    """Closed-form determinant of a 3x3 matrix (no LAPACK round trip)."""
    return float(
        a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
        - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
        + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
    )


def log_det3x3(a: np.ndarray) -> float:
    """log det for the mirror; -inf marks a degenerate covariance."""
    d = det3x3(a)
    if not (d > DET_MIN) or not math.isfinite(d):
        return -math.inf
    return math.log(d)


def log_det3x3_batch(a: np.ndarray) -> np.ndarray:
    """log_det3x3 over a stack of (n, 3, 3) matrices, same cofactor order."""
    d = (
        a[:, 0, 0] * (a[:, 1, 1] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 1])
        - a[:, 0, 1] * (a[:, 1, 0] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 0])
        + a[:, 0, 2] * (a[:, 1, 0] * a[:, 2, 1] - a[:, 1, 1] * a[:, 2, 0])
    )
    ok = (d > DET_MIN) & np.isfinite(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ok, np.log(np.where(ok, d, 1.0)), -np.inf)
    return out


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered object-class and predicate names; ids are list positions."""

    object_classes: tuple[str, ...]
    predicates: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "object_classes", tuple(self.object_classes))
        object.__setattr__(self, "predicates", tuple(self.predicates))
        if len(set(self.object_classes)) != len(self.object_classes):
            raise ValueError("duplicate object class names")
        if len(set(self.predicates)) != len(self.predicates):
            raise ValueError("duplicate predicate names")

    def object_name(self, class_id: int) -> str:
        return self.object_classes[class_id]

    def predicate_name(self, predicate_id: int) -> str:
        return self.predicates[predicate_id]


@dataclass
class ObjectNode:
    """One fused object: class, world-frame Gaussian, detection-count weight.

    eval_points is an optional (k, 3) array of back-projected points kept for
    evaluation, reservoir-capped; eval_seen counts every point ever offered
    to the reservoir (needed for unbiased reservoir merging).
    """

    id: int
    class_id: int
    gaussian: Gaussian3D
    weight: int = 1
    score_sum: float = 0.0
    eval_points: np.ndarray | None = None
    eval_seen: int = 0


@dataclass
class RelationEdge:
    """Directed subject -> object edge with per-predicate (count, score_sum)."""

    subject_id: int
    object_id: int
    votes: dict[int, list] = field(default_factory=dict)

    def add_vote(self, predicate_id: int, count: int, score_sum: float) -> None:
        tally = self.votes.get(predicate_id)
        if tally is None:
            self.votes[predicate_id] = [count, score_sum]
        else:
            tally[0] += count
            tally[1] += score_sum


@dataclass
class LocalSSG:
    """Per-frame lifted graph; node ids are dense 0-based local indices."""

    frame_id: int
    nodes: list[ObjectNode]
    edges: list[RelationEdge]


def resolve_predicate(edge: RelationEdge) -> int:
    """Majority-vote predicate: max count, ties by larger score sum, then
    smaller predicate id."""
    if not edge.votes:
        raise InvalidEdgeError(f"edge {edge.subject_id}->{edge.object_id} has no votes")
    best = max(edge.votes.items(), key=lambda kv: (kv[1][0], kv[1][1], -kv[0]))
    return best[0]


class GlobalSSG:
    """The accumulated scene graph; owned by a single fusion writer.

    nodes:       id -> ObjectNode
    edges:       (subject_id, object_id) -> RelationEdge
    class_index: class_id -> list of node ids (insertion order == id order)
    next_id:     monotone id counter, never reused
    """

    def __init__(self):
        self.nodes: dict[int, ObjectNode] = {}
        self.edges: dict[tuple[int, int], RelationEdge] = {}
        self.class_index: dict[int, list[int]] = {}
        self.next_id: int = 0
        self._means = np.empty((0, 3), dtype=np.float64)
        self._covs = np.empty((0, 3, 3), dtype=np.float64)
        self._logdets = np.empty((0,), dtype=np.float64)
        self._class_arrays: dict[int, np.ndarray] = {}

    # -- storage mirror ----------------------------------------------------

    def _ensure_capacity(self, rows: int) -> None:
        cap = self._means.shape[0]
        if rows <= cap:
            return
        new_cap = max(64, cap * 2, rows)
        means = np.empty((new_cap, 3), dtype=np.float64)
        covs = np.empty((new_cap, 3, 3), dtype=np.float64)
        logdets = np.empty((new_cap,), dtype=np.float64)
        means[:cap] = self._means
        covs[:cap] = self._covs
        logdets[:cap] = self._logdets
        self._means, self._covs, self._logdets = means, covs, logdets

    def mirror(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full storage arrays (rows beyond live ids are unspecified)."""
        return self._means, self._covs, self._logdets

    # -- mutation ----------------------------------------------------------

    def add_node(
        self,
        class_id: int,
        gaussian: Gaussian3D,
        weight: int = 1,
        score_sum: float = 0.0,
        eval_points: np.ndarray | None = None,
        eval_seen: int = 0,
        node_id: int | None = None,
        logdet: float | None = None,
    ) -> ObjectNode:
        nid = self.next_id if node_id is None else node_id
        if nid in self.nodes:
            raise ValueError(f"node id {nid} already present")
        self._ensure_capacity(nid + 1)
        node = ObjectNode(
            id=nid, class_id=class_id, gaussian=gaussian, weight=weight,
            score_sum=score_sum, eval_points=eval_points, eval_seen=eval_seen,
        )
        self.nodes[nid] = node
        self.class_index.setdefault(class_id, []).append(nid)
        self._class_arrays.pop(class_id, None)
        self._means[nid] = gaussian.mean
        self._covs[nid] = gaussian.cov
        self._logdets[nid] = log_det3x3(gaussian.cov) if logdet is None else logdet
        self.next_id = max(self.next_id, nid + 1)
        return node

    def set_gaussian(self, node_id: int, gaussian: Gaussian3D, logdet: float | None = None) -> None:
        node = self.nodes[node_id]
        node.gaussian = gaussian
        self._means[node_id] = gaussian.mean
        self._covs[node_id] = gaussian.cov
        self._logdets[node_id] = log_det3x3(gaussian.cov) if logdet is None else logdet

    def accumulate_edge(self, subject_id: int, object_id: int, votes: dict[int, list]) -> RelationEdge:
        if subject_id == object_id:
            raise InvalidEdgeError(f"self loop on node {subject_id}")
        if subject_id not in self.nodes or object_id not in self.nodes:
            raise InvalidEdgeError(f"dangling edge {subject_id}->{object_id}")
        edge = self.edges.get((subject_id, object_id))
        if edge is None:
            edge = RelationEdge(subject_id=subject_id, object_id=object_id)
            self.edges[(subject_id, object_id)] = edge
        for pid, (count, score) in votes.items():
            edge.add_vote(pid, count, score)
        return edge

    # -- queries / maintenance ----------------------------------------------

    def candidate_ids(self, class_id: int) -> list[int]:
        return self.class_index.get(class_id, [])

    def candidate_id_array(self, class_id: int) -> np.ndarray:
        """candidate_ids as a cached int64 array; invalidated by add_node."""
        arr = self._class_arrays.get(class_id)
        if arr is None:
            arr = np.asarray(self.class_index.get(class_id, ()), dtype=np.int64)
            self._class_arrays[class_id] = arr
        return arr

    def snapshot(self) -> "GlobalSSG":
        """Deep copy for concurrent export/evaluation."""
        return copy.deepcopy(self)

    def total_weight(self) -> int:
        return sum(n.weight for n in self.nodes.values())

    def validate(self, eval_point_cap: int | None = None) -> None:
        """Check every structural invariant; raises AssertionError on breakage."""
        indexed = sorted(i for ids in self.class_index.values() for i in ids)
        assert indexed == sorted(self.nodes), "class_index out of sync with nodes"
        for cid, ids in self.class_index.items():
            assert all(self.nodes[i].class_id == cid for i in ids), "class_index class mismatch"
        for (s, o), edge in self.edges.items():
            assert (s, o) == (edge.subject_id, edge.object_id), "edge key mismatch"
            assert s != o, f"self loop on {s}"
            assert s in self.nodes and o in self.nodes, f"dangling edge {s}->{o}"
            assert edge.votes, f"empty votes on {s}->{o}"
            assert all(v[0] >= 1 for v in edge.votes.values()), "vote count < 1"
        for nid, node in self.nodes.items():
            assert node.id == nid
            assert node.weight >= 1
            assert nid < self.next_id
            np.testing.assert_array_equal(self._means[nid], node.gaussian.mean)
            np.testing.assert_array_equal(self._covs[nid], node.gaussian.cov)
            np.testing.assert_array_equal(self._logdets[nid], log_det3x3(node.gaussian.cov))
            if eval_point_cap is not None and node.eval_points is not None:
                assert len(node.eval_points) <= eval_point_cap, "eval point cap exceeded"


def merge_point_reservoirs(
    points_a: np.ndarray | None,
    seen_a: int,
    points_b: np.ndarray | None,
    seen_b: int,
    cap: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray | None, int]:
    """Combine two capped point reservoirs into one of at most `cap` points.

    Each retained point stands for seen/len originals of its source, so when
    the union overflows the cap we subsample without replacement with
    probabilities proportional to those multiplicities.
    """
    if points_a is None or len(points_a) == 0:
        return (None if points_b is None else points_b.copy()), seen_a + seen_b
    if points_b is None or len(points_b) == 0:
        return points_a.copy(), seen_a + seen_b
    merged = np.concatenate([points_a, points_b], axis=0)
    total_seen = seen_a + seen_b
    if len(merged) <= cap:
        return merged, total_seen
    w = np.empty(len(merged))
    w[: len(points_a)] = seen_a / len(points_a)
    w[len(points_a):] = seen_b / len(points_b)
    keep = rng.choice(len(merged), size=cap, replace=False, p=w / w.sum())
    keep.sort()
    return merged[keep], total_seen


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def export_graph(g: GlobalSSG, vocab: ClassVocabulary) -> dict:
    """Deterministic document form of the graph.

    Arrays are sorted by id; vote maps are keyed by stringified predicate id
    in ascending order; each edge also carries its resolved predicate.
    eval_points appear only when the run recorded them.
    """
    nodes = []
    for nid in sorted(g.nodes):
        n = g.nodes[nid]
        rec = {
            "id": n.id,
            "class_id": n.class_id,
            "weight": n.weight,
            "score_sum": n.score_sum,
            "mean": [float(v) for v in n.gaussian.mean],
            "cov": [float(v) for v in n.gaussian.cov.reshape(9)],
        }
        if n.eval_points is not None:
            rec["eval_points"] = [[float(c) for c in p] for p in n.eval_points]
            rec["eval_points_seen"] = n.eval_seen
        nodes.append(rec)
    edges = []
    for s, o in sorted(g.edges):
        e = g.edges[(s, o)]
        edges.append(
            {
                "subject": s,
                "object": o,
                "predicate": resolve_predicate(e),
                "votes": {str(pid): [e.votes[pid][0], e.votes[pid][1]] for pid in sorted(e.votes)},
            }
        )
    return {
        "nodes": nodes,
        "edges": edges,
        "vocab": {"objects": list(vocab.object_classes), "predicates": list(vocab.predicates)},
    }


def import_graph(doc: dict) -> tuple[GlobalSSG, ClassVocabulary]:
    try:
        vocab = ClassVocabulary(
            object_classes=tuple(doc["vocab"]["objects"]),
            predicates=tuple(doc["vocab"]["predicates"]),
        )
        g = GlobalSSG()
        for rec in doc["nodes"]:
            pts = rec.get("eval_points")
            g.add_node(
                class_id=int(rec["class_id"]),
                gaussian=Gaussian3D(
                    mean=np.array(rec["mean"], dtype=np.float64),
                    cov=np.array(rec["cov"], dtype=np.float64).reshape(3, 3),
                ),
                weight=int(rec["weight"]),
                score_sum=float(rec["score_sum"]),
                eval_points=None if pts is None else np.array(pts, dtype=np.float64).reshape(-1, 3),
                eval_seen=int(rec.get("eval_points_seen", len(pts) if pts is not None else 0)),
                node_id=int(rec["id"]),
            )
        for rec in doc["edges"]:
            votes = {int(pid): [int(c), float(s)] for pid, (c, s) in rec["votes"].items()}
            g.accumulate_edge(int(rec["subject"]), int(rec["object"]), votes)
    except (KeyError, TypeError, ValueError) as exc:
        raise StreamFormatError(f"malformed graph document: {exc}") from exc
    return g, vocab


def save_graph(path, g: GlobalSSG, vocab: ClassVocabulary) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(export_graph(g, vocab), f, separators=(",", ":"))
        f.write("\n")


def load_graph(path) -> tuple[GlobalSSG, ClassVocabulary]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise StreamFormatError(f"graph file is not valid JSON: {exc}") from exc
    return import_graph(doc)


def to_dot(g: GlobalSSG, vocab: ClassVocabulary) -> str:
    """Graphviz form: node label `<class>#<id> (w=<weight>)`, edge label =
    resolved predicate name."""
    lines = ["digraph scene {"]
    for nid in sorted(g.nodes):
        n = g.nodes[nid]
        label = f"{vocab.object_name(n.class_id)}#{n.id} (w={n.weight})"
        lines.append(f'  n{nid} [label="{label}"];')
    for s, o in sorted(g.edges):
        pred = vocab.predicate_name(resolve_predicate(g.edges[(s, o)]))
        lines.append(f'  n{s} -> n{o} [label="{pred}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
