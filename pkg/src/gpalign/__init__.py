"""Joint alignment of multiple sequences with per-sequence GPs, a GP latent
variable model over the aligned sequences, and monotonic warps."""

from gpalign._accel import BACKEND
from gpalign.baselines import VARIANTS, VariantSpec, dtw_align, fit_dtw, fit_variant
from gpalign.errors import InvalidArgumentError, NumericalFailure
from gpalign.kernels import KernelSpec
from gpalign.model import Dataset, ModelState, sample_manifold
from gpalign.optimizer import FitConfig, FitResult, fit
from gpalign.synth_eval import GenConfig, alignment_error, cluster_purity, generate, warping_error

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "VARIANTS", "VariantSpec", "dtw_align", "fit_dtw", "fit_variant",
    "InvalidArgumentError", "NumericalFailure", "KernelSpec", "Dataset", "ModelState",
    "sample_manifold", "FitConfig", "FitResult", "fit", "GenConfig", "alignment_error",
    "cluster_purity", "generate", "warping_error",
]
