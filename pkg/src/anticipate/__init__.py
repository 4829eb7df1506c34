"""Planning against oblivious, policy-switching opponents in stochastic games.

The pipeline: build or load a game with a finite opponent-policy set and a
policy-switch chain, synthesize a finite belief machine whose states track
the exact policy belief within a total-variation budget, compose it with the
game into a finite MDP, optimize the player's policy, and evaluate in
simulation.
"""

from .belief import (ZeroProbabilityObservation, condition, shift,
                     transform, transform_seq, tv_distance, uniform_belief)
from .bounds import (bound_report, check_discrepancy_bounds, contraction_factor,
                     induced_one_norm, kappa, kappa_max, min_entry,
                     robust_lambda, robustness_L, termination_guarantee)
from .builders import (build_anticipate_avoid, build_rps, build_rps_mem,
                       build_switch, rps_switch)
from .consistency import (EdgeChecker, EdgeQuery, Verdict, brute_force_refute,
                          check_edge, feasible_vertices, per_policy_margin)
from .game import (GameArena, GameFormatError, GameInstance, Observation,
                   OpponentPolicy, SwitchModel, ValidationReport,
                   nonzero_observations, validate)
from .gameio import game_from_dict, game_to_dict, load_game, save_game
from .harness import (EpisodeTrace, MetricsReport, ReplayScriptError,
                      load_script, metrics, replay, run_grid, simulate,
                      with_switch, write_grid_csv)
from .planner import (ComposedMDP, IsmMismatchError, PlannerPolicy, ValueTable,
                      bellman_residual, compose, exact_expected_reward,
                      exact_transition, load_policy, policy_iteration,
                      save_policy, value_gap_estimate)
from .synthesis import (InformationStateMachine, IsmParseError,
                        SynthesisOutcome, deserialize, export_dot, serialize,
                        synthesize, verify_consistency)

__version__ = "0.1.0"
