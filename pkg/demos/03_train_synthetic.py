# Train a 2-block model on synthetic hole-cluster images.
#
# Trypophobic images carry clusters of small dark holes; neutral ones are
# stripes, gradients or noise. A couple of epochs at 64x64 is enough for the
# 2-block net to separate them. Takes a few minutes on a laptop CPU.

import numpy as np

from trypoconv.model import ModelConfig, build_model
from trypoconv.synth import SynthConfig, synth_generate
from trypoconv.train import TrainConfig, evaluate, train

train_set, _ = synth_generate(SynthConfig(n_trypo=200, n_neutral=200, size=64, seed=1))
test_set, _ = synth_generate(SynthConfig(n_trypo=100, n_neutral=100, size=64, seed=2))

# %%
model = build_model(ModelConfig(blocks=2, input_size=64), np.random.default_rng([0, 0]))


def report(rec):
    print(f"epoch {rec.epoch}: loss {rec.train_loss:.4f} train acc {rec.train_acc:.3f} val acc {rec.val.accuracy:.3f} auc {rec.val.auc_text()}")


model, history = train(model, train_set, test_set, TrainConfig(epochs=3, seed=0), on_epoch=report)

# %%
m = evaluate(model, test_set)
print(f"test accuracy {m.accuracy:.3f}  auc {m.auc:.4f}  (tp {m.tp} fp {m.fp} tn {m.tn} fn {m.fn})")
