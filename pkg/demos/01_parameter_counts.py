# Parameter counts of the cut VGG16 classifiers.
#
# Each cut model keeps the first k VGG16 conv blocks and adds a small head.
# For k < 5 the head is a 1x1 conv, global pooling and two dense layers; the
# full model flattens the 7x7x512 feature map instead.

import numpy as np

from trypoconv.model import EXPECTED_PARAMS, ModelConfig, build_model, count_params, layer_shapes

# %% per-layer shapes of the default 2-block model
cfg = ModelConfig.default(2)
for name, w, b in layer_shapes(cfg):
    n = int(np.prod(w)) + int(np.prod(b))
    print(f"{name:14s} weight {str(w):22s} {n:>9,}")

# %% totals for all five configurations
for k in (5, 4, 3, 2, 1):
    model = build_model(ModelConfig.default(k), np.random.default_rng(0))
    n = count_params(model)
    print(f"{k} blocks  {n:>12,}  expected {EXPECTED_PARAMS[k]:>12,}  {'ok' if n == EXPECTED_PARAMS[k] else 'MISMATCH'}")

# %% a narrower head: hidden width 32 on the 1-block model
small = ModelConfig(blocks=1, hidden=32)
print("1 block, hidden 32:", f"{count_params(build_model(small)):,}")
