"""Robust functional outlier detection for surfaces, images and video."""

from .estimators import FunctionalOutlierDetector, GradientAugmenter, ProfileImputer, TrimmedParafac
from .exceptions import (
    DegenerateDataError,
    FormatError,
    GridTooSmallError,
    ImputationError,
    InsufficientDataError,
    InvalidInputError,
    NumericalError,
    SingularUpdateError,
    SurfaoError,
    UnsupportedFormatError,
)
from .functional import AnalysisConfig, FomResult, ao_fields, fao, fom, fom_from_fields, fom_from_scores, score_fields, vao
from .io import Dataset, read_frame_dir, read_image, read_tensor, write_heatmap, write_tensor
from .preprocess import gradient_augment, impute_dataset, impute_missing
from .projection import DirectionConfig, batch_ao, generate_directions, multivariate_ao
from .robust import adjusted_fence, medcouple, quartiles, univariate_ao
from .trilinear import TrilinearModel, fit_trilinear, residuals

__version__ = "0.1.0"
