"""Long-range one-dimensional DLA toolkit."""

from .steplaws import (
    StepLaw,
    make_power_law,
    make_z2_restricted,
    make_lazy_nearest_neighbor,
    make_table_law,
    law_from_config,
    sample_step,
)

__version__ = "0.1.0"
