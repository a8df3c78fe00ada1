"""Cut VGG16 binary classifiers for hole-cluster (trypophobia) images, in numpy."""

__version__ = "0.1.0"

from .data import AugmentConfig, Sample, augment, downsample, load_dataset
from .gradcam import Heatmap, gradcam, localization_score, overlay
from .gradcheck import gradient_check
from .metrics import Metrics, roc_auc
from .model import ModelConfig, build_model, count_params
from .synth import SynthConfig, synth_generate
from .train import TrainConfig, evaluate, train
from .weights import load_weights, save_weights
