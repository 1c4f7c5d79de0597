"""Simulation and verification toolkit for Generalized Second Price auctions."""

from .auction import AuctionInstance, Outcome, efficient_allocation, optimal_welfare, run_auction, social_welfare
from .equilibria import best_response, verify_epsilon_ne, verify_pure_ne, verify_s_ne, weak_feasibility
from .instances import JointDistribution, load_distribution, load_instance, paper_instance, random_instance
from .learning import LearnerConfig, run_no_regret, run_no_regret_bayes, run_with_irrational
from .poa_search import inefficiency, worst_case_n2, worst_case_n3, worst_case_numeric

__version__ = "0.1.0"

__all__ = [
    "AuctionInstance",
    "JointDistribution",
    "LearnerConfig",
    "Outcome",
    "best_response",
    "efficient_allocation",
    "inefficiency",
    "load_distribution",
    "load_instance",
    "optimal_welfare",
    "paper_instance",
    "random_instance",
    "run_auction",
    "run_no_regret",
    "run_no_regret_bayes",
    "run_with_irrational",
    "social_welfare",
    "verify_epsilon_ne",
    "verify_pure_ne",
    "verify_s_ne",
    "weak_feasibility",
    "worst_case_n2",
    "worst_case_n3",
    "worst_case_numeric",
]
