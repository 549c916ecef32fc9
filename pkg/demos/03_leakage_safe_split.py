"""Splitting video frames without temporal leakage.

Frames of one sequence that are at most five seconds apart are near
duplicates; if one lands in train and the other in test the test score is
inflated. Chaining that rule gives clusters that must stay together, and
the clusters are then packed into train/val/test by size.
"""
import random

from ovdbench.datasettools import (
    NEU_C_COUNTS,
    NEU_C_RATIOS,
    SplitAssignment,
    leakage_violations,
    split,
    temporal_clusters,
)
from ovdbench.synth import SceneSpec, generate_dataset

ds = generate_dataset(SceneSpec(n_images=500, n_sequences=25, objects_per_image=(0, 2)), seed=11)
clusters = temporal_clusters(ds.images, gap=5.0)
sizes = sorted((len(c) for c in clusters), reverse=True)
print(f"{len(ds.images)} frames in 25 sequences -> {len(clusters)} clusters; largest {sizes[:5]}")

target = NEU_C_RATIOS
print("target ratios from counts " + ":".join(map(str, NEU_C_COUNTS)) + " = " + ", ".join(f"{r:.4f}" for r in target))
assignment = split(clusters, target, seed=0)
for name, got in zip(("train", "val", "test"), assignment.achieved_ratios):
    print(f"  {name:<5} {got:.4f}")
print(f"leaking pairs: {len(leakage_violations(ds.images, assignment))}")

# A naive per-frame random split for comparison.
rng = random.Random(0)
naive = {im.image_id: rng.choices(("train", "val", "test"), weights=target)[0] for im in ds.images}
bad = leakage_violations(ds.images, SplitAssignment(naive, (0, 0, 0), len(ds.images)))
print(f"per-frame random split would leak {len(bad)} frame pairs")
