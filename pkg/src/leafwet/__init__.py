"""Leaf-wetness sensing at desk scale: FMCW SAR simulation, range-migration imaging,
SAR/RGB fusion and a depth-attention classifier, all in numpy."""
from .errors import (ConfigError, DataError, DomainError, LeafwetError, NumericError, StateError,
                     StratificationError)
from .radar import RadarConfig, beat_sample, chirp_sample, wavenumber_grid
from .scene import (RawDataCube, ScanGeometry, Scatterer, Scene, Wetness, phase_compensate,
                    read_scene, reflectivity_of, simulate_scan, wind_perturb, write_scene)
from .recon import (DepthStack, SarSlice, backproject_oracle, crop_fov, depth_stack, normalize01,
                    reconstruct_slice)
from .fusion import cam, cnn_forward, gap, mask_fuse, rgb_dropout
from .encoder import bce_loss, positional_encoding
from .model import ModelConfig, ModelParams, encoder_classify, multi_head_attention, predict
from .data import AugmentPolicy, DatasetConfig, augment, synth_dataset
from .training import TrainConfig, evaluate, kfold_cv, train
from .formats import read_tensor, write_tensor

__version__ = "0.1.0"
