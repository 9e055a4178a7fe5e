"""From-scratch CNN pipeline for classifying flame images that contain
unburned pockets."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .datapipe import (Entry, augment_minority, bicubic_resize, flip, load_arrays, read_manifest, read_pgm,
                       select, split_dataset, write_manifest, write_pgm)
from .gradcheck import check_network
from .model import (Model, ModelConfig, PRESETS, build_model, count_parameters, forward, layer_rows,
                    load_checkpoint, preset, save_checkpoint)
from .optim import OptimConfig, bce_loss, rmsprop_step
from .synthgen import SynthSpec, easy_spec, generate_dataset
from .trainer import (ConfusionMatrix, TrainConfig, accuracy, confusion, evaluate, fit, format_report,
                      predict, train)
