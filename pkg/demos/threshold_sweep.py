"""Sweep the merge gate on a noisy scene and watch the tradeoff.

    python3 demos/threshold_sweep.py

A strict gate (low Hellinger threshold) refuses to merge noisy re-views of
the same object, so the graph fills with duplicate nodes; a loose gate
deduplicates but eventually collapses true neighbors and recall decays.
The node count shows the first cost, the recall columns the second.
"""

import numpy as np

from scenefuse import (
    FusionConfig,
    GlobalSSG,
    NoiseModel,
    SceneSpec,
    compute_recalls,
    generate_scene,
    match_objects,
    process_frame,
    render_frames,
)

noise = NoiseModel(
    bbox_jitter_px=2.5,
    depth_sigma_m=0.12,
    false_positive_rate=0.05,
    miss_rate=0.1,
    class_flip_rate=0.02,
)
spec = SceneSpec(seed=1, n_objects=17, n_classes=5, n_frames=120, room_size=(7.4, 7.4, 3.0), noise=noise)
scene = generate_scene(spec)
frames, _ = render_frames(scene)
print(f"noisy scene: {spec.n_objects} objects, {len(scene.gt.triplets)} GT triplets")
print()
print(f"{'gate':>6} {'nodes':>6} {'Obj.R':>8} {'Rel.R':>8}")
for delta in (0.5, 0.6, 0.7, 0.85, 0.9, 0.95):
    graph = GlobalSSG()
    rng = np.random.default_rng([1, 2])
    for frame in frames:
        process_frame(frame, graph, FusionConfig(hellinger_threshold=delta), rng=rng,
                      record_eval_points=True)
    report = compute_recalls(match_objects(graph, scene.gt), graph, scene.gt, scene.vocab)
    print(f"{delta:6.2f} {len(graph.nodes):6d} {report.object_recall:8.3f} {report.relationship_recall:8.3f}")
print()
print("strict gates keep recall but pay for it in duplicate nodes (262 for 17")
print("objects at 0.50); past the elbow the gate over-merges and both recalls")
print("decay. The default 0.85 trades a little recall for a near-minimal graph.")
