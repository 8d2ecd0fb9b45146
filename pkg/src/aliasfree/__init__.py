"""Alias-free signal processing: filter design, resampling, filtered
nonlinearities, a random-weight synthesis network and equivariance metrics."""

from .filters import DiscreteFilter, FilterError, FilterSpec, kaiser_attenuation, kaiser_beta
from .fourier import FourierFeatureBank, Transform2D, sample_bank, synthesize_input
from .metrics import EquivReport, eq_r, eq_t_frac, eq_t_integer, psnr
from .nonlinearity import filtered_lrelu_fused, filtered_lrelu_reference
from .plan import LayerPlan, plan_layers
from .resample import FeatureMap, downsample, upsample
from .synthesis import Generator, GeneratorConfig, rotation_config, translation_config

__version__ = "0.1.0"

__all__ = [
    "DiscreteFilter", "EquivReport", "FeatureMap", "FilterError", "FilterSpec",
    "FourierFeatureBank", "Generator", "GeneratorConfig", "LayerPlan", "Transform2D",
    "downsample", "eq_r", "eq_t_frac", "eq_t_integer", "filtered_lrelu_fused",
    "filtered_lrelu_reference", "kaiser_attenuation", "kaiser_beta", "plan_layers", "psnr",
    "rotation_config", "sample_bank", "synthesize_input", "translation_config", "upsample",
]
