"""Centralized, distributed and truncated auction solvers.

All argmax scans break ties toward the lowest index. Rectangular problems
with more users than channels are solved on a zero-padded square matrix;
users left holding a padding column are reported unassigned.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import UNASSIGNED, Assignment, BidState, as_reward_matrix


class AuctionError(RuntimeError):
    """A solver exceeded its iteration cap; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class AuctionConfig:
    """Solver knobs.

    ``eps=None`` selects ``1e-2 * max(R) / N``. ``max_iters=None`` selects
    twice the per-user iteration bound summed over users (plus slack), which
    a correct run can never reach.
    """

    eps: float | None = None
    max_iters: int | None = None
    tie_break_seed: int = 0
    quantization_q: int | None = None
    record_states: bool = False

    def __post_init__(self):
        if self.eps is not None and not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.quantization_q is not None and self.quantization_q < 1:
            raise ValueError(f"quantization_q must be a positive integer, got {self.quantization_q}")

    def resolve_eps(self, R) -> float:
        if self.eps is not None:
            return float(self.eps)
        return default_eps(R)

    def exact_regime(self, n_users: int) -> bool | None:
        """Whether ``eps < 1/(q N)``; ``None`` when no quantization is declared."""
        if self.quantization_q is None or self.eps is None:
            return None
        return self.eps < 1.0 / (self.quantization_q * n_users)


def default_eps(R) -> float:
    R = np.asarray(R, dtype=float)
    top = float(R.max())
    return 1e-2 * top / R.shape[0] if top > 0 else 1e-2


@dataclass
class IterationRecord:
    bidders: np.ndarray
    targets: np.ndarray
    increments: np.ndarray
    assignment: np.ndarray
    bids: np.ndarray | None = None


@dataclass
class AuctionTrace:
    """Per-iteration history of a run.

    For the distributed variants one record is one synchronous round and
    ``unassigned_counts[n]`` is the number of rounds that started with user
    ``n`` unassigned. For the centralized auction a record is one bid and the
    count is the number of bids user ``n`` placed.
    """

    records: list = field(default_factory=list)
    unassigned_counts: np.ndarray | None = None
    eps: float = 0.0
    mode: str = ""
    n_real_channels: int = 0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def total_bids(self) -> int:
        return int(sum(len(r.bidders) for r in self.records))

    def snapshots(self) -> list:
        return [r.assignment for r in self.records]

    def to_csv(self, path) -> None:
        """Write one row per bid: iteration, user, channel, bid increment."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "user", "channel", "bid"])
            for i, rec in enumerate(self.records, start=1):
                for u, c, inc in zip(rec.bidders, rec.targets, rec.increments):
                    w.writerow([i, int(u), int(c), repr(float(inc))])


@dataclass
class AuctionResult:
    assignment: Assignment
    trace: AuctionTrace
    bid_state: BidState | None = None
    prices: np.ndarray | None = None
    truncated_value: float | None = None

    def to_dict(self) -> dict:
        d = {
            "assignment": self.assignment.mapping.tolist(),
            "value": float(self.assignment.value),
            "iterations": self.trace.iterations,
            "total_bids": self.trace.total_bids,
            "per_user_unassigned_counts": self.trace.unassigned_counts.tolist(),
            "eps": self.trace.eps,
            "mode": self.trace.mode,
        }
        if self.truncated_value is not None:
            d["truncated_value"] = float(self.truncated_value)
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def pad_zero_columns(R) -> np.ndarray:
    """Append all-zero columns so that an ``N x K`` matrix with ``N > K`` is square.

    Returns a copy unchanged when ``N <= K``.
    """
    R = as_reward_matrix(R)
    n, k = R.shape
    if n <= k:
        return R.copy()
    return np.hstack([R, np.zeros((n, n - k))])


def second_best_profit(row_rewards, row_bids, best_index) -> float:
    """Largest profit ``R - B`` over the row excluding ``best_index``.

    A single-column row has no alternative; its outside option is the
    dropout value 0.
    """
    profit = np.asarray(row_rewards, dtype=float) - np.asarray(row_bids, dtype=float)
    if profit.size == 1:
        return 0.0
    return float(np.max(np.delete(profit, best_index)))


def _best_two(profit: np.ndarray):
    """Row-wise argmax (lowest index on ties), max and second max."""
    best = np.argmax(profit, axis=1)
    rows = np.arange(profit.shape[0])
    gamma = profit[rows, best]
    if profit.shape[1] == 1:
        return best, gamma, np.zeros_like(gamma)
    masked = profit.copy()
    masked[rows, best] = -np.inf
    return best, gamma, masked.max(axis=1)


def _default_cap(R, eps) -> int:
    bound = float(np.sum(iteration_bounds(R, eps)))
    return int(2 * bound) + 10


def unpad_mapping(mapping: np.ndarray, k_real: int) -> np.ndarray:
    """Map padding-column indices (``>= k_real``) back to ``UNASSIGNED``."""
    out = mapping.copy()
    out[out >= k_real] = UNASSIGNED
    return out


def assign_to_highest(targets: np.ndarray, offers: np.ndarray, n_channels: int) -> np.ndarray:
    """Assignment stage: each channel goes to its highest offer.

    ``targets[n]`` is the channel user ``n`` bids on (``UNASSIGNED`` for no
    bid) and ``offers[n]`` the amount. Exact ties go to the lowest user index.
    Returns the channel owner per channel (``UNASSIGNED`` when idle).
    """
    owner = np.full(n_channels, UNASSIGNED, dtype=int)
    best = np.full(n_channels, -np.inf)
    for u in range(len(targets)):
        c = targets[u]
        if c == UNASSIGNED:
            continue
        if offers[u] > best[c]:
            best[c] = offers[u]
            owner[c] = u
    return owner


def distributed_auction(R, cfg: AuctionConfig | None = None) -> AuctionResult:
    """Fully distributed auction in synchronous rounds.

    Every round, each unassigned user ``n`` ranks channels by his *own*
    profits ``R[n] - B[n]``, raises his bid on the best one by the gap to the
    second best plus ``eps``, and bids. Assigned users re-bid their frozen
    price on the channel they hold. Each channel goes to its highest bidder;
    everyone else is unassigned. The run stops once all users hold a channel.

    Returns
    -------
    AuctionResult
        ``assignment`` in the caller's (unpadded) channel indexing,
        ``bid_state`` over the padded matrix, and the round trace.
    """
    cfg = cfg or AuctionConfig()
    R = as_reward_matrix(R)
    k_real = R.shape[1]
    W = pad_zero_columns(R)
    n, k = W.shape
    eps = cfg.resolve_eps(R)
    cap = cfg.max_iters if cfg.max_iters is not None else _default_cap(W, eps)

    B = np.zeros((n, k))
    holding = np.full(n, UNASSIGNED, dtype=int)
    target = np.full(n, UNASSIGNED, dtype=int)
    counts = np.zeros(n, dtype=int)
    trace = AuctionTrace(eps=eps, mode="distributed", n_real_channels=k_real)

    while np.any(holding == UNASSIGNED):
        if trace.iterations >= cap:
            trace.unassigned_counts = counts
            raise AuctionError(f"distributed auction exceeded {cap} rounds", trace)
        bidders = np.flatnonzero(holding == UNASSIGNED)
        counts[bidders] += 1
        best, gamma, omega = _best_two(W[bidders] - B[bidders])
        inc = gamma - omega + eps
        B[bidders, best] += inc
        target[bidders] = best

        owner = assign_to_highest(target, B[np.arange(n), target], k)
        holding[:] = UNASSIGNED
        won = owner != UNASSIGNED
        holding[owner[won]] = np.flatnonzero(won)

        trace.records.append(IterationRecord(
            bidders, best, inc, unpad_mapping(holding, k_real),
            B.copy() if cfg.record_states else None,
        ))

    trace.unassigned_counts = counts
    a = Assignment.from_mapping(R, unpad_mapping(holding, k_real))
    state = BidState(B, holding != UNASSIGNED, target)
    return AuctionResult(a, trace, bid_state=state)


def centralized_auction(R, cfg: AuctionConfig | None = None) -> AuctionResult:
    """Classic auction with shared prices, one bidder per iteration.

    The lowest-indexed unassigned user bids each iteration; the previous
    holder of the chosen channel (if any) becomes unassigned.
    """
    cfg = cfg or AuctionConfig()
    R = as_reward_matrix(R)
    k_real = R.shape[1]
    W = pad_zero_columns(R)
    n, k = W.shape
    eps = cfg.resolve_eps(R)
    cap = cfg.max_iters if cfg.max_iters is not None else _default_cap(W, eps)

    prices = np.zeros(k)
    holding = np.full(n, UNASSIGNED, dtype=int)
    owner = np.full(k, UNASSIGNED, dtype=int)
    counts = np.zeros(n, dtype=int)
    trace = AuctionTrace(eps=eps, mode="central", n_real_channels=k_real)

    while True:
        free = np.flatnonzero(holding == UNASSIGNED)
        if free.size == 0:
            break
        if trace.iterations >= cap:
            trace.unassigned_counts = counts
            raise AuctionError(f"centralized auction exceeded {cap} iterations", trace)
        u = int(free[0])
        counts[u] += 1
        best, gamma, omega = _best_two((W[u] - prices)[None, :])
        c, inc = int(best[0]), float(gamma[0] - omega[0] + eps)
        if owner[c] != UNASSIGNED:
            holding[owner[c]] = UNASSIGNED
        owner[c] = u
        holding[u] = c
        prices[c] += inc
        trace.records.append(IterationRecord(
            np.array([u]), np.array([c]), np.array([inc]), unpad_mapping(holding, k_real),
            prices.copy() if cfg.record_states else None,
        ))

    trace.unassigned_counts = counts
    a = Assignment.from_mapping(R, unpad_mapping(holding, k_real))
    return AuctionResult(a, trace, prices=prices)


def truncation_keep(n: int, alpha: float) -> int:
    """Number of channels each user keeps: ``ceil(alpha * log2 N)``."""
    if not alpha > 1:
        raise ValueError(f"truncation requires alpha > 1, got {alpha}")
    x = alpha * math.log2(n)
    # guard against log2 round-off pushing an exact integer up
    return max(int(math.ceil(x - 1e-12)), 1)


def truncate_rewards(R, alpha: float) -> np.ndarray:
    """Zero all but each row's ``ceil(alpha log2 N)`` largest entries.

    Ties in the selection keep the lowest column index.
    """
    R = as_reward_matrix(R)
    n, k = R.shape
    if n != k:
        raise ValueError(f"truncation expects a square matrix, got {R.shape}")
    keep = truncation_keep(n, alpha)
    if keep >= n:
        return R.copy()
    out = np.zeros_like(R)
    for i, row in enumerate(R):
        # stable sort on -row keeps lower indices first among equal values
        idx = np.argsort(-row, kind="stable")[:keep]
        out[i, idx] = row[idx]
    return out


def truncated_auction(R, alpha: float, cfg: AuctionConfig | None = None) -> AuctionResult:
    """Distributed auction on the truncated matrix.

    ``assignment.value`` is re-priced under the original ``R``;
    ``truncated_value`` is the value under the truncated matrix.
    """
    R = as_reward_matrix(R)
    T = truncate_rewards(R, alpha)
    cfg = cfg or AuctionConfig()
    if cfg.eps is None:
        cfg = AuctionConfig(eps=default_eps(R), max_iters=cfg.max_iters,
                            tie_break_seed=cfg.tie_break_seed,
                            quantization_q=cfg.quantization_q,
                            record_states=cfg.record_states)
    res = distributed_auction(T, cfg)
    res.trace.mode = "truncated"
    truncated_value = res.assignment.value
    res.assignment = Assignment.from_mapping(R, res.assignment.mapping)
    res.truncated_value = truncated_value
    return res


def iteration_bound_per_user(R, n: int, eps: float) -> float:
    """Cap on the rounds user ``n`` spends unassigned: ``K + sum_k R[n, k] / eps``."""
    R = np.asarray(R, dtype=float)
    return R.shape[1] + float(R[n].sum()) / eps


def iteration_bounds(R, eps: float) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    return R.shape[1] + R.sum(axis=1) / eps


def expected_iteration_bound(n: int, mean_rate: float, eps: float) -> float:
    """Bound on the expected rounds for an ``N x N`` i.i.d. matrix."""
    return n * n + n * n * mean_rate / eps


def truncated_iteration_bound(n: int, alpha: float, eps: float, rate_bound: float) -> float:
    """Expected-rounds bound for the truncated auction with entries in ``[0, rate_bound]``."""
    return n * n + alpha / eps * n * math.log2(n) * rate_bound


def truncation_success_bound(n: int, alpha: float) -> float:
    """Lower bound ``1 - N^(1 - alpha)`` on P(optimum uses only kept channels), clamped to [0, 1]."""
    p = 1.0 - float(n) ** (1.0 - alpha)
    return min(max(p, 0.0), 1.0)
