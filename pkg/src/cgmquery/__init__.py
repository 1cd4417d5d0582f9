"""cgmquery: privacy-preserving question answering over CGM data.

A deterministic analytics toolkit executed in a local sandbox, a
three-layer agent pipeline on top of pluggable LLM backends, a benchmark
factory with execution-derived ground truth, and a layer-wise evaluator.
"""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    ClockWindow,
    DataError,
    DateSelection,
    GlucoseReading,
    GlucoseSeries,
    SynthesisSpec,
    TimeWindow,
    estimate_sampling_rate,
    filter_series,
    load_cgm_csv,
    synthesize_series,
)
from .metrics import (  # noqa: F401
    DailyFeatureRecord,
    RangeThresholds,
    extract_daily_features,
)
