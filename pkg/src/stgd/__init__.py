"""Parameter-efficient spatio-temporal video grounding at desk scale."""

from .adapters import (AdapterParams, LoRAParams, init_adapter, init_lora, lora_linear, st_adapter,
                       temporal_adapter, temporal_diff_adapter, temporal_diff_operator)
from .backbone import AdapterSet, FrameBatch, FrozenBackbone, language_guided_select
from .config import TrainConfig, load_config
from .data import SyntheticSample, generate_dataset, read_jsonl, write_jsonl
from .gradcheck import grad_check
from .losses import LossWeights, kl_div, bce_mask, gt_boundary_distribution, spatial_loss, temporal_loss, total_loss
from .metrics import count_trainable_params, dataset_metrics, t_iou, v_iou
from .model import STGDModel
from .tensor import Tape, Tensor, no_grad
from .training import evaluate, load_model, save_model, train
from .tubes import GroundTruthTube, PredictedTube

__version__ = "0.1.0"
