"""modkit: multi-concept personalization in the modulation space of a small DiT."""

import os

# matrices here are tiny; BLAS thread handoff costs more than it saves
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

from .adapter import AdapterConfig, ModAdapter, cross_attention, sinusoidal_pe
from .config import Config, ConfigError, load_config
from .dit import DiTConfig, MiniDiT, ModulationState, NoiseSchedule
from .encoders import Encoders, ImageEncoder, MappingLayer, TextEncoder, Vocabulary, default_vocabulary
from .evaluation import Metrics, build_bench, evaluate, run_ablation
from .gradcheck import grad_check
from .modk import read_modk, write_modk
from .optim import AdamW
from .ppm import read_ppm, write_ppm
from .routing import RoutingTable, kmeans_fit
from .scenes import SceneSpec, ToySample, gen_dataset, load_dataset, render_scene
from .tensor import NumericsError, Tensor, layer_norm, mse, no_grad, softmax, tensor
from .training import pretrain_adapter, train_adapter, train_backbone

__version__ = "0.1.0"

__all__ = [
    "AdamW", "AdapterConfig", "Config", "ConfigError", "DiTConfig", "Encoders",
    "ImageEncoder", "MappingLayer", "Metrics", "MiniDiT", "ModAdapter",
    "ModulationState", "NoiseSchedule", "NumericsError", "RoutingTable", "SceneSpec",
    "Tensor", "TextEncoder", "ToySample", "Vocabulary", "build_bench",
    "cross_attention", "default_vocabulary", "evaluate", "gen_dataset", "grad_check",
    "kmeans_fit", "layer_norm", "load_config", "load_dataset", "mse", "no_grad",
    "pretrain_adapter", "read_modk", "read_ppm", "render_scene", "run_ablation",
    "sinusoidal_pe", "softmax", "tensor", "train_adapter", "train_backbone",
    "write_modk", "write_ppm",
]
