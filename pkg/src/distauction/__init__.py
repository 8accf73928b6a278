"""Channel assignment by distributed auction, with its CSMA realization and
analytic bounds for i.i.d. Rayleigh-fading rates."""

from .core import (
    UNASSIGNED,
    Assignment,
    AssignmentError,
    BidState,
    SizeLimitError,
    as_reward_matrix,
    assignment_value,
    brute_force_optimal,
    check_eps_cs,
    check_local_eps_cs,
    hungarian_optimal,
    prices_from_bids,
    read_reward_csv,
)
from .auction import (
    AuctionConfig,
    AuctionError,
    AuctionResult,
    AuctionTrace,
    centralized_auction,
    distributed_auction,
    expected_iteration_bound,
    iteration_bound_per_user,
    pad_zero_columns,
    second_best_profit,
    truncate_rewards,
    truncated_auction,
    truncation_success_bound,
)

__version__ = "0.1.0"
