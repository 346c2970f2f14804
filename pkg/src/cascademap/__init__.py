"""Latency modelling and mapping search for multi-layer networks on AIE-ML style arrays."""
from .arch import ArchSpec, CalibrationProfile, default_aie_ml
from .model_ir import ModelSpec, build_model, load_model, parse_model

__version__ = "0.1.0"

__all__ = [
    "ArchSpec",
    "CalibrationProfile",
    "ModelSpec",
    "build_model",
    "default_aie_ml",
    "load_model",
    "parse_model",
]
