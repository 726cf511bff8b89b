"""Wireless federated Langevin Monte Carlo.

Posterior sampling by devices that share a noisy multiple-access channel,
with the channel noise doubling as Langevin noise and as a privacy
mechanism, and power control chosen to minimize a Wasserstein bound.
"""

from ._kernels import backend
from .bounds import BoundInputs, gamma, w2_bound, w2_bound_curve
from .channel import ChannelTrace, PowerViolationError, SchedulingError, aircomp_round, active_set
from .metrics import empirical_moments, expected_calibration_error, gaussian_w2_sq, matrix_sqrt_psd
from .model import (FederatedDataset, GaussianDist, GaussianLinRegModel, MultinomialLogRegModel,
                    SmoothnessConstants, clip_gradient)
from .optimizer import (OptProblem, PowerPolicy, baseline_policy, classify_regime, multi_sample_policy,
                        single_sample_policy, threshold_search)
from .privacy import DpBudget, PrivacyLedger, c_inverse, dp_budget, verify_dp
from .sampler import RunTrace, SamplerConfig, run_wflmc, wflmc_round

__version__ = "0.1.0"
