"""Re-identification risk (unicity) of sparse binary usage fingerprints."""

__version__ = "0.1.0"

from .engine import (MatchIndex, QuasiIdentifier, Strategy, UnicityEstimate, estimate_unicity,
                     is_unique, match_count, select_quasi_identifier, unicity_curve)
from .scaling import (FitResult, Form, ScalingCurve, default_schedule, extrapolate,
                      fit_points, fit_scaling, scaling_curve, scaling_curves)
from .synth import GeneratorConfig, generate, plant_unique_users
from .temporal import (DriftMode, category_fractions, jaccard_drift, popularity_histogram,
                       rescale, seasonal_curves, seasonal_unicity, usage_stats)
from .tensor import (BuildReport, DatasetError, EmptyDatasetError, Fingerprint,
                     FingerprintTensor, PopularityTable, UserNotInWindowError, Window,
                     build_tensor, from_sets, popularity, window_fingerprint)
