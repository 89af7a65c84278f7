"""Overdamped Langevin dynamics for PL-type objectives: simulation, Fokker-Planck solves and bounds."""

from .bounds import (BoundCurve, decay_upper_bound, dirichlet_decay_bound, higher_order_bound,
                     local_conditional_bound, local_probability_bound, plateau,
                     quadratic_lower_bound, sgd_recursion_bound)
from .estimators import (conditional_gap_on_ball_event, mass_on_set, mc_expected_gap,
                         tail_probability_gap)
from .fokker_planck import (FokkerPlanckSolver, Grid, WeightedField, apply_Fk, build_generator,
                            condition_AB_check, density_crosscheck, phi_limit_report, step_phi,
                            weighted_dirichlet, weighted_l2_norm)
from .nn_local_pl import (Dataset, MLPSpec, ScaledMLPRegressor, forward, minibatch_sgd,
                          probe_local_pl, square_loss_and_grad, width_scaling_report)
from .objective import (ObjectiveSpec, PLCertificate, QuadraticLoss, distance_to_minimizers,
                        estimate_pl_constant, flat, quadratic_pl_constants, squared_norm,
                        verify_assumption1)
from .regions import Ball, Box, Tube
from .sde_sim import (EnsembleSnapshot, InitialLaw, LangevinSampler, SimConfig,
                      euler_maruyama_step, simulate_ensemble, simulate_sgd)

__version__ = "0.1.0"
