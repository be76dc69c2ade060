"""Density estimation by fitting a monotone network to the empirical CDF and
differentiating it in closed form."""

from .deriv_poly import derivative_polynomial, tanh_nth_derivative
from .distributions import MixtureSpec, Normal, Uniform, bart_simpson, cdf_true, mixed_dist, pdf_true, sample
from .kde import KdeModel, cv_bandwidth, kde_pdf
from .metrics import Grid1D, ise, sup_cdf_error, trapezoid
from .minn import MinnModel, eta, forward, init, pdf_at, to_blend
from .targets import TargetSet, targets_loo, targets_uniform, theta
from .training import TrainConfig, TrainState, adadelta_step, backprop, finetune, loss, train

__version__ = "0.1.0"
