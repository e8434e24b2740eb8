"""Dense-channel EEG synthesis from sparse reference channels.

The pipeline runs in four stages: bias extraction against regional
reference channels, bias cleaning, two-stage bias generation (adversarial
transformer followed by a conditional diffusion refiner), and plan-driven
assembly of the full channel set. A correlation/distance planner decides
per channel pair whether generation is direct, indirect through an
intermediate, mutual, or via sign inversion.
"""

__version__ = "0.1.0"

from . import errors
from .montage import (
    DivisionRules,
    Electrode,
    GroupRule,
    Montage,
    RegionalDivision,
    distance_thresholds,
    initial_division,
    load_montage,
    montage_32,
    montage_desk8,
    physical_distance,
)
from .recording import CorpusSpec, Recording, SegmentSet, load, save, segment, synthesize_corpus
from .biasing import BiasSet, extract_bias, negate, reconstruct
from .preprocess import (
    BiasCleaner,
    CleanConfig,
    MultiscaleDenoiser,
    interpolate_gaps,
    mspca_denoise,
    remove_outliers,
    repair_nonfinite,
)
from .ganformer import BiasGanFormer, GanFormerConfig
from .diffformer import (
    BiasDiffFormer,
    DiffusionSchedule,
    forward_diffuse,
    linear_schedule,
    reverse_step,
)
from .paths import (
    PathEdge,
    SynthesisPlan,
    Thresholds,
    build_plan,
    check_hypothesis1,
    check_hypothesis2,
    check_hypothesis3,
    correlation_distance,
    optimize_paths,
    paradigm1,
    paradigm2,
)
from .synthesis import ModelRegistry, choose_source, yoas_assemble
from .evaluation import SplitSpec, classify, de_features, psd
from .config import load_config

__all__ = [
    "errors",
    "Electrode",
    "Montage",
    "RegionalDivision",
    "DivisionRules",
    "GroupRule",
    "physical_distance",
    "distance_thresholds",
    "initial_division",
    "load_montage",
    "montage_32",
    "montage_desk8",
    "Recording",
    "SegmentSet",
    "CorpusSpec",
    "segment",
    "synthesize_corpus",
    "load",
    "save",
    "BiasSet",
    "extract_bias",
    "reconstruct",
    "negate",
    "BiasCleaner",
    "CleanConfig",
    "MultiscaleDenoiser",
    "remove_outliers",
    "interpolate_gaps",
    "repair_nonfinite",
    "mspca_denoise",
    "BiasGanFormer",
    "GanFormerConfig",
    "BiasDiffFormer",
    "DiffusionSchedule",
    "linear_schedule",
    "forward_diffuse",
    "reverse_step",
    "Thresholds",
    "PathEdge",
    "SynthesisPlan",
    "correlation_distance",
    "check_hypothesis1",
    "check_hypothesis2",
    "check_hypothesis3",
    "paradigm1",
    "paradigm2",
    "build_plan",
    "optimize_paths",
    "ModelRegistry",
    "choose_source",
    "yoas_assemble",
    "psd",
    "de_features",
    "classify",
    "SplitSpec",
    "load_config",
]
