"""Subordinated diffusions and the Wasserstein convergence of their empirical measures.

Modules
-------
bernstein     Bernstein functions, Levy triplets and class membership.
subordinator  Exact sampling of subordinator increments.
diffusion     Model spaces, invariant measures and diffusion transitions.
pathlab       Subordinated paths and empirical measures.
transport     Optimal transport distances.
spectral      Eigen-expansions, heat kernels and limit sums.
harness       Rate experiments, fits and bracket checks.
"""

from . import bernstein, diffusion, harness, pathlab, spectral, subordinator, transport
from .bernstein import BernsteinFunction, b1, b2, classify, from_tag, gamma, linear, stable
from .diffusion import ModelSpace, circle, euclidean, interval, model_from_dict, ou, torus
from .harness import ExperimentConfig, fit_exponent, run_experiment
from .pathlab import DiscreteMeasure, empirical_measure, subordinated_path
from .transport import distance, distance_to_invariant

__version__ = "0.1.0"
