from .invariance import InvarianceCurve, SweepPoint, interpolation_sweep, measure_invariance
from .sweep import LossPoint, loss_descriptor_sweep
from .bound import (
    BoundInputs,
    bound_sanity_check,
    complexity_term,
    confidence_term,
    estimate_norm_bounds,
    generalization_bound,
    ramp_loss,
)
from .report import DASH, format_descriptor, make_report, parse_csv, rows_to_csv, rows_to_text, summarize
from .stats import spearman
