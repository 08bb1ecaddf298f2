"""klrecon: kernel low-rank reconstruction of undersampled diffusion MRI.

A self-contained toolkit for recovering diffusion-weighted volumes from
k-space and q-space undersampled acquisitions. The kernel low-rank (KLR)
method learns a polynomial-kernel PCA basis of voxel q-profiles directly
from the aliased data, then alternates low-rank pre-imaging with hard
k-space data consistency. A wavelet + total-variation compressed-sensing
baseline, diffusion tensor maps (FA/MD/color), quantitative metrics, a
synthetic phantom, and a CLI round out the package.
"""

from .core import (
    DwiVolume,
    GradientTable,
    KSpaceVolume,
    VolumeShape,
    fft2_per_slice,
    ifft2_per_slice,
)
from .cs import CsConfig, cs_reconstruct, objective_value
from .dti import TensorMap, color_map, fa_of, fit_tensor_volume, foreground_mask, md_of
from .klr import (
    KlrConfig,
    harvest_training,
    klr_reconstruct_slice,
    klr_reconstruct_volume,
)
from .kpca import (
    KernelModel,
    KernelParams,
    gram_centered,
    kernel_eval,
    kpca_fit,
    kpca_project,
    preimage,
)
from .metrics import (
    BenchmarkConfig,
    MetricsReport,
    benchmark,
    map_error_histogram,
    nmse,
    psnr,
)
from .phantom import PhantomSpec, forward_kspace, generate_phantom
from .sampling import (
    QSubset,
    SamplingMask,
    apply_undersampling,
    generate_vd_mask,
    select_q_subset,
)

__version__ = "0.1.0"

__all__ = [
    "DwiVolume",
    "GradientTable",
    "KSpaceVolume",
    "VolumeShape",
    "fft2_per_slice",
    "ifft2_per_slice",
    "CsConfig",
    "cs_reconstruct",
    "objective_value",
    "TensorMap",
    "color_map",
    "fa_of",
    "fit_tensor_volume",
    "foreground_mask",
    "md_of",
    "KlrConfig",
    "harvest_training",
    "klr_reconstruct_slice",
    "klr_reconstruct_volume",
    "KernelModel",
    "KernelParams",
    "gram_centered",
    "kernel_eval",
    "kpca_fit",
    "kpca_project",
    "preimage",
    "BenchmarkConfig",
    "MetricsReport",
    "benchmark",
    "map_error_histogram",
    "nmse",
    "psnr",
    "PhantomSpec",
    "forward_kspace",
    "generate_phantom",
    "QSubset",
    "SamplingMask",
    "apply_undersampling",
    "generate_vd_mask",
    "select_q_subset",
    "__version__",
]
