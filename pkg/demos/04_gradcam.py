# Grad-CAM on a briefly trained 2-block model.
#
# Heatmaps are taken at the deepest block and compared against the known hole
# masks of the synthetic images. Overlays are written to ./gradcam_demo.

from pathlib import Path

import numpy as np

from trypoconv.data import write_png
from trypoconv.gradcam import gradcam, heatmap_image, localization_score, overlay
from trypoconv.model import ModelConfig, build_model
from trypoconv.synth import SynthConfig, synth_generate
from trypoconv.train import TrainConfig, train

train_set, _ = synth_generate(SynthConfig(n_trypo=200, n_neutral=200, size=64, seed=1))
test_set, masks = synth_generate(SynthConfig(n_trypo=20, n_neutral=1, size=64, seed=2))
model = build_model(ModelConfig(blocks=2, input_size=64), np.random.default_rng([0, 0]))
model, _ = train(model, train_set, None, TrainConfig(epochs=2, seed=0))

# %%
out = Path("gradcam_demo")
out.mkdir(exist_ok=True)
scores = []
for i, (s, mask) in enumerate(zip(test_set, masks)):
    if s.label != 1:
        continue
    heat = gradcam(model, s.image)
    scores.append(localization_score(heat, mask))
    write_png(out / f"{i:02d}.heatmap.png", heatmap_image(heat))
    write_png(out / f"{i:02d}.overlay.png", overlay(s.image, heat))

# A uniform heatmap would score about the mask coverage (~0.1 here).
print(f"median localization {np.median(scores):.3f}, mean mask coverage {np.mean([m.mean() for m in masks[:20]]):.3f}")

# %% the shallow tap sees finer structure
heat = gradcam(model, test_set[0].image, tap=1)
print("block1 map", heat.values.shape, "localization", round(localization_score(heat, masks[0]), 3))
