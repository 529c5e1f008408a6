"""Density estimation and two-group differential density testing by exponential tilting.

Each individual's values are binned on a shared grid, a pooled kernel
estimate serves as the carrier density, and group densities are polynomial
exponential tilts of that carrier fitted by binned Poisson likelihood.
Group differences in the tilt coefficients are tested with Wald statistics
built on closed-form sandwich covariances.
"""

from .carrier import CarrierDensity, SmoothingMatrix, default_bandwidth, pooled_carrier, smoothing_matrix
from .covariance import (
    CountsCov,
    CovarianceEstimate,
    SandwichPieces,
    group_counts_cov,
    sandwich_pieces,
    sigma_centered_diff,
    sigma_group,
    sigma_group_diff,
    sigma_individual,
)
from .engine import SefTestOutput, sef_test
from .errors import SefError
from .grid import (
    BinGrid,
    BinnedSample,
    DesignMatrix,
    GroupLayout,
    bin_counts,
    build_grid,
    design_matrix,
    sufficient_stat_means,
)
from .inference import TestResult, bh_adjust, chi_square_sf, wald
from .tilt import SefFit, TiltTarget, density_curve, fit_group, fit_group_centered, fit_individual, fit_tilt

__version__ = "0.1.0"

__all__ = [
    "BinGrid", "BinnedSample", "DesignMatrix", "GroupLayout", "bin_counts", "build_grid",
    "design_matrix", "sufficient_stat_means",
    "CarrierDensity", "SmoothingMatrix", "default_bandwidth", "pooled_carrier",
    "smoothing_matrix",
    "SefFit", "TiltTarget", "density_curve", "fit_group", "fit_group_centered",
    "fit_individual", "fit_tilt",
    "CountsCov", "CovarianceEstimate", "SandwichPieces", "group_counts_cov",
    "sandwich_pieces", "sigma_centered_diff", "sigma_group", "sigma_group_diff",
    "sigma_individual",
    "TestResult", "bh_adjust", "chi_square_sf", "wald",
    "SefTestOutput", "sef_test", "SefError", "__version__",
]
