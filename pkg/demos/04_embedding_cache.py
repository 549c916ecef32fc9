"""Why caching caption embeddings matters when captions are fixed per class.

A caption-conditioned detector encodes the image and the caption for every
(image, caption) pair. When every image is queried with the same K class
captions, the caption embeddings (and the image features) can be computed
once. The cost model counts the encoder calls both ways.
"""
import tempfile
from pathlib import Path

from ovdbench.embedcache import CostModel, EmbeddingCache, HashBagEmbedder
from ovdbench.protocols import eval_3fovd
from ovdbench.synth import SceneSpec, embedding_detect, generate_dataset

ds = generate_dataset(SceneSpec(n_images=20, n_classes=15), seed=7)
embedder = HashBagEmbedder(dim=256)
n, k = len(ds.images), len(ds.classes)

with_cache, without_cache = CostModel(), CostModel()
a = embedding_detect(ds, embedder, with_cache, use_cache=True)
b = embedding_detect(ds, embedder, without_cache, use_cache=False)
print(f"N={n} images, K={k} captions")
print(f"encoder calls with cache:    {with_cache.encoder_calls:>4} (N + K = {n + k})")
print(f"encoder calls without cache: {without_cache.encoder_calls:>4} (N * K = {n * k})")
print(f"alignment calls either way:  {with_cache.alignment_calls:>4}")
print(f"identical predictions: {a == b}")
print(f"3F-OVD mAP of the embedding detector: {eval_3fovd(ds, a).map:.4f}")

# Caption embeddings persist across runs in a small binary file.
cache = EmbeddingCache()
for c in ds.classes:
    cache.get_or_compute(c.caption, embedder)
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "embeddings.bin"
    cache.save(path)
    again = EmbeddingCache.load(path)
    print(f"saved {len(cache)} embeddings ({path.stat().st_size} bytes), reloaded {len(again)}")
