"""Distributed auction carried out by opportunistic carrier sensing.

Each user is an isolated :class:`UserAgent` holding only its own reward and
bid rows. A bid is turned into a backoff time by a common decreasing map; on
each channel the contender whose timer expires first transmits and wins. The
only thing an agent learns from a slot is what it sensed: whether it got the
channel it went for.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .auction import (
    AuctionConfig,
    AuctionError,
    AuctionResult,
    AuctionTrace,
    IterationRecord,
    iteration_bounds,
    pad_zero_columns,
    unpad_mapping,
)
from .core import UNASSIGNED, Assignment, BidState, as_reward_matrix

IDLE = -1

WON = "won"
BUSY = "busy"
IDLE_SLOT = "idle"


class BackoffCollision(RuntimeError):
    """Two different bids mapped to the same backoff time."""


@dataclass(frozen=True)
class BackoffFunction:
    """Strictly decreasing map from a nonnegative bid to a backoff in ms.

    ``form="inverse"``: ``tmax / (1 + b)``.
    ``form="exponential"``: ``tmax * exp(-b / scale)``.
    """

    form: str = "inverse"
    tmax_ms: float = 10.0
    scale: float = 1.0

    def __post_init__(self):
        if self.form not in ("inverse", "exponential"):
            raise ValueError(f"unknown backoff form {self.form!r}")
        if not self.tmax_ms > 0:
            raise ValueError("tmax_ms must be positive")

    def __call__(self, bid: float) -> float:
        return backoff_of(bid, self)


def backoff_of(bid: float, f: BackoffFunction) -> float:
    """Backoff in milliseconds, rounded to double precision for reporting."""
    return float(contention_time(bid, f))


def contention_time(bid: float, f: BackoffFunction):
    """Backoff used to decide who transmits first.

    Timers run in continuous time, so the comparison must not merge bids that
    differ only in their last bits. The inverse form is evaluated exactly as a
    rational number; the exponential form in 60-digit arithmetic.
    """
    if bid < 0:
        raise ValueError(f"bid must be nonnegative, got {bid}")
    if f.form == "inverse":
        return Fraction(f.tmax_ms) / (1 + Fraction(float(bid)))
    with mpmath.workdps(60):
        return mpmath.mpf(f.tmax_ms) * mpmath.exp(-mpmath.mpf(float(bid)) / f.scale)


class UserAgent:
    """One user's view: own rewards, own bids, own state.

    Nothing here refers to another agent. The simulator only calls
    :meth:`contend` and :meth:`observe`.
    """

    def __init__(self, user_id: int, rewards, eps: float):
        self.user_id = user_id
        self.rewards = np.asarray(rewards, dtype=float)
        self.bids = np.zeros_like(self.rewards)
        self.eps = eps
        self.assigned = False
        self.target = UNASSIGNED
        self.last_increment = None

    def contend(self):
        """Channel and bid for the next slot.

        An unassigned agent raises its bid on its most profitable channel by
        the gap to the runner-up plus ``eps``; an assigned agent repeats its
        frozen bid on the channel it holds.
        """
        self.last_increment = None
        if not self.assigned:
            profit = self.rewards - self.bids
            best = int(np.argmax(profit))
            gamma = profit[best]
            omega = float(np.max(np.delete(profit, best))) if profit.size > 1 else 0.0
            inc = gamma - omega + self.eps
            self.bids[best] += inc
            self.target = best
            self.last_increment = float(inc)
        return self.target, float(self.bids[self.target])

    def observe(self, sensed: str) -> None:
        self.assigned = sensed == WON


@dataclass
class SlotOutcome:
    """Result of one contention slot.

    ``winners[c]`` is the transmitting user on channel ``c`` or ``IDLE``;
    ``sensed[n]`` is what agent ``n`` observed on its own target channel.
    """

    winners: np.ndarray
    sensed: list
    winner_bids: np.ndarray = field(default=None)
    winner_backoffs: np.ndarray = field(default=None)


def run_slot(contenders, n_channels: int, f: BackoffFunction) -> SlotOutcome:
    """Resolve one slot.

    ``contenders`` is a sequence of ``(user_id, channel, bid)``. On each
    channel the smallest backoff transmits; equal backoffs from equal bids go
    to the lowest user id. Distinct bids with equal backoffs are refused,
    since physically they would collide.
    """
    winners = np.full(n_channels, IDLE, dtype=int)
    w_tau = [None] * n_channels
    w_bid = np.full(n_channels, np.nan)
    n_users = 1 + max((u for u, _, _ in contenders), default=-1)
    sensed = [IDLE_SLOT] * n_users
    for u, c, b in sorted(contenders, key=lambda t: t[0]):
        tau = contention_time(b, f)
        if w_tau[c] is not None and tau == w_tau[c] and b != w_bid[c]:
            raise BackoffCollision(
                f"channel {c}: bids {float(w_bid[c])!r} (user {winners[c]}) and {float(b)!r} "
                f"(user {u}) share backoff {float(tau)!r} ms"
            )
        if w_tau[c] is None or tau < w_tau[c]:
            winners[c], w_tau[c], w_bid[c] = u, tau, b
    for u, c, _ in contenders:
        sensed[u] = WON if winners[c] == u else BUSY
    backoffs = np.array([np.nan if t is None else float(t) for t in w_tau])
    return SlotOutcome(winners, sensed, w_bid, backoffs)


@dataclass
class CsmaResult(AuctionResult):
    slot_rows: list = field(default_factory=list)

    def slot_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "channel", "winner", "winner_bid", "backoff_ms"])
            w.writerows(self.slot_rows)


def run_csma_auction(R, cfg: AuctionConfig | None = None,
                     f: BackoffFunction | None = None) -> CsmaResult:
    """Simulate the auction slot by slot with isolated agents.

    The assignment, bid matrix and per-slot assignment snapshots coincide with
    :func:`distributed_auction` on the same input.
    """
    cfg = cfg or AuctionConfig()
    f = f or BackoffFunction()
    R = as_reward_matrix(R)
    k_real = R.shape[1]
    W = pad_zero_columns(R)
    n, k = W.shape
    eps = cfg.resolve_eps(R)
    cap = cfg.max_iters
    if cap is None:
        cap = int(2 * float(np.sum(iteration_bounds(W, eps)))) + 10

    agents = [UserAgent(i, W[i], eps) for i in range(n)]
    counts = np.zeros(n, dtype=int)
    trace = AuctionTrace(eps=eps, mode="csma", n_real_channels=k_real)
    rows = []

    while not all(a.assigned for a in agents):
        if trace.iterations >= cap:
            trace.unassigned_counts = counts
            raise AuctionError(f"CSMA auction exceeded {cap} slots", trace)
        bidders = [a.user_id for a in agents if not a.assigned]
        counts[bidders] += 1
        contenders = [(a.user_id, *a.contend()) for a in agents]
        out = run_slot(contenders, k, f)
        for a in agents:
            a.observe(out.sensed[a.user_id])

        slot = trace.iterations + 1
        for c in np.flatnonzero(out.winners != IDLE):
            rows.append([slot, int(c), int(out.winners[c]), repr(float(out.winner_bids[c])),
                         repr(float(out.winner_backoffs[c]))])
        holding = np.full(n, UNASSIGNED, dtype=int)
        for c in np.flatnonzero(out.winners != IDLE):
            holding[out.winners[c]] = c
        trace.records.append(IterationRecord(
            np.array(bidders, dtype=int),
            np.array([agents[u].target for u in bidders], dtype=int),
            np.array([agents[u].last_increment for u in bidders]),
            unpad_mapping(holding, k_real),
            np.vstack([a.bids for a in agents]) if cfg.record_states else None,
        ))

    trace.unassigned_counts = counts
    mapping = np.array([a.target for a in agents], dtype=int)
    a = Assignment.from_mapping(R, unpad_mapping(mapping, k_real))
    state = BidState(np.vstack([ag.bids for ag in agents]), np.ones(n, dtype=bool), mapping)
    return CsmaResult(a, trace, bid_state=state, slot_rows=rows)
