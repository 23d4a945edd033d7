"""RAM priors from a distilled symbolic formula with conformal calibration."""
from .calibration import ConformalMap, Standardizer, conformal_quantile, fit_conformal
from .expr import BEAGLE_EXPR, ExprError, eval_expr, parse_expr, to_text
from .formula import (Formula, example_formula_path, conservative_prior, coverage, eval_batch, fit_constants,
                      fit_example_formula, formula_prior, load_formula, save_formula)
from .synthetic import FEATURES, FeatureVector, gen_synthetic_beagle, true_ram

__all__ = [
    "BEAGLE_EXPR", "ConformalMap", "ExprError", "FEATURES", "FeatureVector", "Formula",
    "Standardizer", "conformal_quantile", "conservative_prior", "coverage", "eval_batch",
    "eval_expr", "example_formula_path", "fit_conformal", "fit_constants", "fit_example_formula", "formula_prior",
    "gen_synthetic_beagle", "load_formula", "parse_expr", "save_formula", "to_text", "true_ram",
]
