# Finite-difference check of every layer and of a whole 1-block model.
#
# The analytic gradients run in float32; the numeric reference runs in
# float64 so its own rounding does not swamp the comparison.

import numpy as np

from trypoconv.gradcheck import BCELayer, gradient_check
from trypoconv.model import ModelConfig, build_model
from trypoconv.nn import Conv2D, Dense, Dropout, GlobalPool, MaxPool2, ReLU, make_rng

layers = {
    "conv 3x3": (Conv2D(3, 4, 3, rng=make_rng(1)), (2, 3, 6, 6), False),
    "conv 1x1": (Conv2D(3, 4, 1, rng=make_rng(1)), (2, 3, 6, 6), False),
    "relu": (ReLU(), (2, 3, 4, 4), False),
    "maxpool 2x2": (MaxPool2(), (2, 3, 4, 4), False),
    "global avg": (GlobalPool("avg"), (2, 3, 4, 4), False),
    "global max": (GlobalPool("max"), (2, 3, 4, 4), False),
    "dense": (Dense(10, 3, rng=make_rng(1)), (4, 10), False),
    "dropout (fixed mask)": (Dropout(0.5, make_rng(2)), (4, 10), True),
    "sigmoid + bce": (BCELayer(np.array([[1], [0], [1]])), (3, 1), False),
}

# %%
for name, (layer, shape, training) in layers.items():
    err = gradient_check(layer, shape, make_rng(7), training=training, analytic_dtype=np.float32)
    print(f"{name:22s} max rel err {err:.2e}")

# %% end to end, inference and training mode
model = build_model(ModelConfig.default(1, input_size=16), make_rng(0))
for training in (False, True):
    err = gradient_check(model, (2, 3, 16, 16), make_rng(3), training=training, analytic_dtype=np.float32)
    print(f"1-block model, training={training}: {err:.2e}")
