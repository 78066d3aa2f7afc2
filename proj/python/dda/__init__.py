"""Direct domain adaptation: Fourier-domain statistics transfer between image domains."""

from ._core import (
    ConfigError,
    DataError,
    DegenerateImageError,
    DomainStats,
    TransformConfig,
    autocorrelate,
    center_shift,
    compute_domain_stats,
    convolve,
    cross_correlate,
    derive_seed,
    fft2,
    fit_pca,
    ifft2,
    load_idx,
    mean_autocorrelation,
    mean_random_pixel,
    read_stats,
    renormalize,
    run,
    stats,
    transform_source,
    transform_target,
    write_stats,
)

__all__ = [name for name in dir() if not name.startswith("_")]
