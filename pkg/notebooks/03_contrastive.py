# %% [markdown]
# Toy contrastive mode.
#
# The hypernetwork cycles through descriptors [1,1], [1,0] and [0,1], and each
# one is paired with a view family (both, ventral = spatial, dorsal =
# appearance). Afterwards the [0,1] encoder should be the most
# appearance-invariant and [1,0] the most spatially invariant.

# %%
from hyperinv.analysis import measure_invariance
from hyperinv.data import TransformFamily, glyph_splits
from hyperinv.training import CONTRASTIVE, pretrain_contrastive

train = glyph_splits("source", 200, 2, seed=21)[0]
bundle = pretrain_contrastive(train.images, CONTRASTIVE.but(epochs=10, lr=3e-3, batch_size=128))
print(bundle.log[-3:])

# %%
images = glyph_splits("target", 20, 2, seed=22)[0]
fams = [TransformFamily("ventral"), TransformFamily("dorsal")]
curve = measure_invariance(bundle, images, fams, [[1.0, 0.0], [0.0, 1.0]], n_aug=2, ts=[1.0, 0.0])
for p in curve.points:
    print(p.descriptor, {k: round(v, 3) for k, v in p.mean.items()})
