"""Competitive two-operator mobility-on-demand market simulator."""

from .scenario import (Scenario, ScenarioFormatError, ScenarioValidationError,
                       generate_synthetic_scenario, load_scenario,
                       validate_scenario, write_scenario)
from .choice import (ChoiceContext, Passenger, calibrate_base_utility,
                     choice_probabilities, expected_acceptance,
                     generate_requests, sample_wage, utility)
from .flow import (FlowContractError, RebalanceProblem, desired_counts,
                   execute_flows, flow_cost, solve_min_cost_flow)
from .market import (Action, EngineFault, MarketEnv, OperatorState,
                     StepOutcome, compute_fares, compute_reward,
                     expire_waiting, match_passengers, step_vehicles)
from .policies import (ControlMode, NoControlPolicy, Observation, Policy,
                       UniformDistributionPolicy, observe, restrict_action)
from .learner import (LearnedPolicy, OperatorLearner, TrainConfig,
                      TrainingDiverged, Trajectory, compute_returns,
                      train_dual)
from .harness import (ExperimentConfig, MetricsRow, aggregate,
                      evaluate_policies, run_evaluation, run_sweep,
                      train_experiment)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
