"""Huber M-quantile regression with data-driven tuning constants."""
from ._kernels import BACKEND
from .ali import b_q, expected_psi_sq_ali, expected_psi_sq_normal, log_pdf, pdf
from .exceptions import (DegenerateEfficiency, DegenerateScale, DimensionMismatch,
                         MQError, NoConvergence, SingularDesign)
from .fitting import SCALE_METHODS, Dataset, MQConfig, MQFit, fit, predict
from .inference import CovarianceEstimate, sandwich_cov, tau_cov, tau_hat
from .influence import dpsi_q, irls_weight, psi_q, rho_q
from .tuning import CGrid, TuningResult, inverse_mq, select_c_av, select_c_inv

__version__ = "0.1.0"
