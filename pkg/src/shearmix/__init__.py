"""Random alternating sine shears on the 2-torus: exact maps, derivatives,
coupling controls, Harris-type constants and mixing experiments."""

from .flow import (FlowParams, KernelEstimate, flow_pair, flow_point, horizontal_shear,
                   inverse_flow_point, kernel_mc, sample_shifts, vertical_shear,
                   fixed_point_shifts)
from .torus import Z_STAR, wrap

__version__ = "0.1.0"
