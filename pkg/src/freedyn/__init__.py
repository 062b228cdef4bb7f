"""Free stochastic dynamics on continuum configuration spaces.

Simulation and verification tools for independent-particle dynamics of
infinite particle systems: Poisson configuration sampling, one-particle
motion/killing/jump kernels, birth-and-death and jump evolutions, exact
Laplace-functional identities to verify them against, correlation and
cluster (Ursell) combinatorics, summability certificates, and the
small-jump scaling limit connecting jump dynamics to birth-and-death.
"""

__version__ = "0.1.0"

from .space import Domain, ball_volume, doubling_constants
from .pointproc import (BoundedField, Configuration, RngStream, as_field,
                        parallel_map_ordered, sample_poisson,
                        sample_poisson_space_time, theta_check)
from .functions import (NumericFunction, TestFunction, gauss_smooth,
                        integrate_function, integrate_product)
from .kernels import (BrownianKernel, BumpProfile, DeathKernel,
                      GaussianProfile, KawasakiKernel, KilledBrownianKernel,
                      apply_semigroup, check_summability,
                      default_buffer_width, exit_probability,
                      kawasaki_polynomial_certificate, killing_profile,
                      propagate, survival_probability, tail_bound)
from .dynamics import (Buffer, EvolutionPlan, Event, EventStream,
                       GlauberDynamics, TorusExact, buffer_leakage_bound,
                       event_stream, evolve_snapshot,
                       evolve_with_immigration, glauber_evolve)
from .observables import (CylinderFunction, FixedStart, LaplaceEstimate,
                          PoissonStart, UrsellTable, analytic_laplace_markov,
                          analytic_laplace_submarkov,
                          correlations_from_ursell, empirical_laplace,
                          estimate_correlations, generator_apply,
                          generator_fd_check, glauber_joint_laplace,
                          pairing, poisson_laplace_exponent, set_partitions,
                          ursell_from_correlations)
from .scaling import (GtSeries, NeymanScottMeasure, PoissonMeasure,
                      ScaledProfile, ScalingReport, g_t_series,
                      run_scaling_experiment, scale_profile,
                      verify_mu_conditions)
from .experiments import (ExperimentReport, glauber_joint_experiment,
                          markov_laplace_experiment,
                          poisson_correlation_experiment,
                          poisson_laplace_experiment,
                          submarkov_laplace_experiment)

__all__ = [name for name in dir() if not name.startswith("_")]
