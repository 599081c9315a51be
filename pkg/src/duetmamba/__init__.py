"""duetmamba: two-person motion diffusion built on selective state-space scans.

The package is self-contained: a small tape-based autodiff core (`core`), the
scan kernels (`ssm`), the spatio-temporal units and denoiser (`astm`,
`blocks`), the diffusion pipeline (`diffusion`), procedural two-person motion
data and losses (`motion`), a naive attention baseline for benchmarks
(`attention`), and a CLI (`cli`).
"""

from .core import (
    ConfigError,
    DataError,
    Module,
    Parameter,
    ShapeError,
    Tensor,
    UsageError,
    no_grad,
    use_dtype,
)
from .blocks import DenoiserConfig, MotionDenoiser
from .diffusion import GuidanceConfig, NoiseSchedule, cosine_schedule, ddim_sample
from .motion import (
    LossWeights,
    MotionPair,
    Skeleton,
    normalize,
    toy_dataset_generate,
    toy_skeleton,
)
from .ssm import SsmCore, mssm, scan_chunked, scan_parallel, scan_sequential

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DenoiserConfig",
    "GuidanceConfig",
    "LossWeights",
    "Module",
    "MotionDenoiser",
    "MotionPair",
    "NoiseSchedule",
    "Parameter",
    "ShapeError",
    "Skeleton",
    "SsmCore",
    "Tensor",
    "UsageError",
    "cosine_schedule",
    "ddim_sample",
    "mssm",
    "no_grad",
    "normalize",
    "scan_chunked",
    "scan_parallel",
    "scan_sequential",
    "toy_dataset_generate",
    "toy_skeleton",
    "use_dtype",
]
