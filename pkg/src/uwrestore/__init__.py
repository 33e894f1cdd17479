"""Underwater image restoration with a self-contained autodiff core.

A three-level encoder/decoder network whose blocks mix residual
convolutions, channel self-attention steered by a learned low/high
frequency split, and DCT/spatial gating, trained with a pixel + Fourier
magnitude loss at three scales.
"""

from . import tensor
from .data import (DatasetSpec, ImagePair, augment_flip, batch_iter,
                   decode_png, encode_png, gt_pyramid, load_pairs,
                   sample_patch)
from .dfesa import DfesaParams, dfesa_forward
from .errors import (CheckpointError, ConfigError, ContractError,
                     DatasetError, DecodeError, ParameterError, ShapeError,
                     StateError)
from .estimator import UnderwaterImageRestorer, as_image, as_image_list
from .experiments import (ExperimentPlan, make_synthetic_dataset, parse_plan,
                          run_ablation, run_pooling_sweep)
from .gradcheck import check_gradients, max_relative_error
from .losses import LossWeights, fft_loss, l1_loss, total_loss
from .metrics import MetricReport, psnr, ssim
from .network import (ModelConfig, MultiScaleOutput, ParamStore, build_model,
                      model_forward, resblock_forward, restore_image)
from .sfm import SfmParams, sfm_forward
from .spectral import (ComplexPlane, DctBasisSelection, FrequencyPair,
                       dct2_coefficient, decompose_frequencies, fft2,
                       grouped_dct_vector, zigzag_pairs)
from .tensor import Tensor, precision, set_debug_checks, set_precision
from .trainer import (AdamState, LrSchedule, TrainingAborted, adam_step,
                      cosine_lr, load_checkpoint, save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CheckpointError", "ComplexPlane", "ConfigError",
    "ContractError", "DatasetError", "DatasetSpec", "DctBasisSelection",
    "DecodeError", "DfesaParams", "ExperimentPlan", "FrequencyPair",
    "ImagePair", "LossWeights", "LrSchedule", "MetricReport", "ModelConfig",
    "MultiScaleOutput", "ParamStore", "ParameterError", "SfmParams",
    "ShapeError", "StateError", "Tensor", "TrainingAborted",
    "UnderwaterImageRestorer", "adam_step", "as_image", "as_image_list",
    "augment_flip", "batch_iter", "build_model", "check_gradients",
    "cosine_lr", "dct2_coefficient", "decode_png", "decompose_frequencies",
    "dfesa_forward", "encode_png", "fft2", "fft_loss", "grouped_dct_vector",
    "gt_pyramid", "l1_loss", "load_checkpoint", "load_pairs",
    "make_synthetic_dataset", "max_relative_error", "model_forward",
    "parse_plan", "precision", "psnr", "resblock_forward", "restore_image",
    "run_ablation", "run_pooling_sweep", "sample_patch", "save_checkpoint",
    "set_debug_checks", "set_precision", "sfm_forward", "ssim", "tensor",
    "total_loss", "train", "zigzag_pairs",
]
