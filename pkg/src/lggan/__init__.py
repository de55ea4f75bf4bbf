"""Scene generation from semantic layouts with a global generator, per-class local generators and learned fusion."""
from .config import ConfigError, ModelConfig, RunConfig
from .model import GeneratorOutputs, LGGANGenerator

__all__ = ["ConfigError", "ModelConfig", "RunConfig", "GeneratorOutputs", "LGGANGenerator"]
__version__ = "0.1.0"
