"""Audio-visual target-speaker extraction with disentangled cue fusion."""

__version__ = "0.1.0"

from .config import RunConfig, make_config
from .model import SpeakerExtractor

__all__ = ["RunConfig", "make_config", "SpeakerExtractor", "__version__"]
