"""Online video object segmentation with a Gauss-Newton trained target model.

Typical use::

    from onlinevos import EngineConfig, process_sequence
    outputs = process_sequence(frames, first_label_map, EngineConfig.preset("ours"))
"""

from .errors import (DegenerateMaskError, DimensionError, FormatError, GenerationError,
                     InputError, NumericalBreakdownError)
from .evaluation import EvalReport, jaccard, score_sequence
from .features import FeatureSpec, PrecomputedFeatureProvider, ToyFeatureProvider
from .pipeline import EngineConfig, OutputMask, SegmentationEngine, process_sequence

__version__ = "0.1.0"

__all__ = [
    "DegenerateMaskError", "DimensionError", "FormatError", "GenerationError", "InputError",
    "NumericalBreakdownError", "EvalReport", "jaccard", "score_sequence", "FeatureSpec",
    "PrecomputedFeatureProvider", "ToyFeatureProvider", "EngineConfig", "OutputMask",
    "SegmentationEngine", "process_sequence",
]
