"""
Regime Evaluation

Off-policy metrics on logged data and exact oracles on small discrete problems.
"""

from .metrics import (
    FrequencyTable,
    IpwEstimate,
    RegretEstimate,
    empirical_regret,
    evaluate_on_data,
    expected_costs,
    fit_propensities,
    ipw_estimate,
    ipw_utility,
    ipw_weights,
    profit_lambda,
    selection_frequencies,
)
from .oracle import (
    DiscreteInstance,
    OracleSolution,
    TabularRegime,
    backward_induction_optimal,
    brute_force_optimal,
    exact_profit,
    random_instance,
    read_instance,
    sample_discrete,
    write_instance,
)

__all__ = [
    "DiscreteInstance",
    "FrequencyTable",
    "IpwEstimate",
    "OracleSolution",
    "RegretEstimate",
    "TabularRegime",
    "backward_induction_optimal",
    "brute_force_optimal",
    "empirical_regret",
    "evaluate_on_data",
    "exact_profit",
    "expected_costs",
    "fit_propensities",
    "ipw_estimate",
    "ipw_utility",
    "ipw_weights",
    "profit_lambda",
    "random_instance",
    "read_instance",
    "sample_discrete",
    "selection_frequencies",
    "write_instance",
]
