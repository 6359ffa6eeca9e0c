"""Binary logit with sender-time, receiver-time and sender-receiver fixed effects.

Uncorrected MLE via IRLS with alternating weighted projections, analytic
incidental-parameter bias correction, a dense verification oracle and a seeded
Monte Carlo harness.
"""

from .debias import (BiasComponents, CorrectedFit, ProjectionResiduals, bias_components, debias, estimate,
                     odds_ratio_table, odds_ratios, projection_residuals)
from .errors import *  # noqa: F401,F403
from .glm import FitOptions, FitResult, LinkEval, fit_mle, log_likelihood, logistic_link, weighted_triple_demean
from .panel import DropReport, Observation, Panel, Schema, build_panel, drop_uninformative, read_csv, write_csv

__version__ = "0.1.0"
