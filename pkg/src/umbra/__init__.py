"""Verification of systems made of interdependent stochastic models."""

from .engines import check
from .errors import UmbraError, ValidationError, VerificationError
from .manifest import load_manifest
from .prism.explicit import build_state_space
from .prism.source import load_model, parse_model
from .props import parse_property
from .worldmodel import Dependency, External, ModelEntry, Verifier, WorldModel, verify

__version__ = "0.1.0"

__all__ = ["check", "UmbraError", "ValidationError", "VerificationError", "load_manifest",
           "build_state_space", "load_model", "parse_model", "parse_property", "Dependency",
           "External", "ModelEntry", "Verifier", "WorldModel", "verify"]
