"""Sine-modulated low-rank matrices: spectra, rank bounds and coordinate networks."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .linalg import (  # noqa: F401
    SpectrumReport,
    elementwise_map,
    frobenius_norm,
    min_nonzero_abs,
    numerical_rank,
    operator_norm,
    sine_modulate,
    singular_values,
    spectrum_report,
    stable_rank,
)
from .lowrank import (  # noqa: F401
    InitScheme,
    LowRankLayer,
    compression_rate,
    forward,
    init_layer,
    lora_forward,
    materialize,
    param_count,
)
