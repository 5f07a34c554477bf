"""Prolate spheroidal tools for wavenumber-bandlimited MIMO channels."""
from .errors import NumericalFailure
from .special import gauss_legendre_rule, legendre_table, sinc
from .pswf import (PswfBasis, build_spectral_matrix, compute_prolate_eigenvalues,
                   evaluate_pswf, rescale_to_interval, solve_pswf_eigensystem)
from .dpss import DpssBasis, build_concentration_matrix, compute_dpss
from .channel import (ArrayGeometry, ChannelMatrix, ChannelSpec, WavenumberField,
                      generate_wavenumber_field, segmented_discretization, steering_dictionary,
                      synthesize_channel_matrix)
from .capacity import (check_spectral_dominance, epsilon_dof, equipower_rate,
                       pswf_capacity_bound, waterfill_capacity)
from .estimators import (ESTIMATOR_NAMES, EstimationResult, PilotDesign, PilotObservation,
                         amp_estimate, build_sensing_matrix, estimate_bandwidth_map,
                         mmse_estimate, nmse, pswf_ce)

__version__ = "0.1.0"
