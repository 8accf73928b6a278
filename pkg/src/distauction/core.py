"""Assignment problem representation, value accounting and exact oracles.

Reward matrices are plain ``numpy`` arrays of shape ``(n_users, n_channels)``.
Channel indices are 0-based; an unassigned user is marked with
:data:`UNASSIGNED`.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

UNASSIGNED = -1
BRUTE_FORCE_LIMIT = 10
ATOL = 1e-9
CS_RTOL = 1e-12
_CHUNK = 1 << 16


class AssignmentError(ValueError):
    """Malformed reward matrix, assignment or bid state."""


class SizeLimitError(AssignmentError):
    """Refusal to run an exhaustive search beyond its size guard."""


def as_reward_matrix(R) -> np.ndarray:
    """Validate ``R`` and return it as a 2-D float array.

    Raises :class:`AssignmentError` on wrong rank, empty dimensions,
    negative or non-finite entries.
    """
    arr = np.array(R, dtype=float)
    if arr.ndim != 2:
        raise AssignmentError(f"reward matrix must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise AssignmentError(f"reward matrix must be at least 1x1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise AssignmentError("reward matrix has non-finite entries")
    if np.any(arr < 0):
        n, k = np.argwhere(arr < 0)[0]
        raise AssignmentError(f"negative reward {arr[n, k]} at user {n}, channel {k}")
    return arr


def read_reward_csv(path) -> np.ndarray:
    """Read a header-less CSV of nonnegative decimals, one user per row."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for i, line in enumerate(csv.reader(fh), start=1):
            if not line or all(not cell.strip() for cell in line):
                continue
            if width is None:
                width = len(line)
            elif len(line) != width:
                raise AssignmentError(f"row {i}: expected {width} columns, got {len(line)}")
            row = []
            for j, cell in enumerate(line, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise AssignmentError(f"row {i}, column {j}: cannot parse {cell!r}") from None
                if not np.isfinite(v) or v < 0:
                    raise AssignmentError(f"row {i}, column {j}: {cell!r} is not a nonnegative number")
                row.append(v)
            rows.append(row)
    if not rows:
        raise AssignmentError(f"{path}: no data rows")
    return as_reward_matrix(rows)


def write_reward_csv(path, R) -> None:
    R = as_reward_matrix(R)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        for row in R:
            w.writerow([repr(float(v)) for v in row])


@dataclass
class Assignment:
    """User to channel map with its total reward.

    ``mapping[n]`` is the channel held by user ``n`` or ``UNASSIGNED``.
    """

    mapping: np.ndarray
    value: float

    def __post_init__(self):
        self.mapping = np.asarray(self.mapping, dtype=int)
        held = self.mapping[self.mapping != UNASSIGNED]
        if len(np.unique(held)) != len(held):
            raise AssignmentError(f"channel assigned twice in {self.mapping.tolist()}")

    @classmethod
    def from_mapping(cls, R, mapping) -> "Assignment":
        mapping = np.asarray(mapping, dtype=int)
        return cls(mapping, assignment_value(R, mapping))

    @property
    def n_assigned(self) -> int:
        return int(np.sum(self.mapping != UNASSIGNED))

    def is_complete(self) -> bool:
        return self.n_assigned == len(self.mapping)

    def to_dict(self) -> dict:
        return {"assignment": self.mapping.tolist(), "value": float(self.value)}


@dataclass
class BidState:
    """Local bid matrix of the distributed auction.

    ``target[n]`` is the channel user ``n`` last bid on (``UNASSIGNED``
    before the first bid).
    """

    bids: np.ndarray
    assigned: np.ndarray
    target: np.ndarray = field(default=None)

    def __post_init__(self):
        self.bids = np.asarray(self.bids, dtype=float)
        self.assigned = np.asarray(self.assigned, dtype=bool)
        if self.target is None:
            self.target = np.full(self.bids.shape[0], UNASSIGNED, dtype=int)
        else:
            self.target = np.asarray(self.target, dtype=int)

    @classmethod
    def zeros(cls, n_users: int, n_channels: int) -> "BidState":
        return cls(np.zeros((n_users, n_channels)), np.zeros(n_users, dtype=bool))

    def copy(self) -> "BidState":
        return BidState(self.bids.copy(), self.assigned.copy(), self.target.copy())


def _mapping_of(a) -> np.ndarray:
    if isinstance(a, Assignment):
        return a.mapping
    return np.asarray(a, dtype=int)


def assignment_value(R, a) -> float:
    """Total reward of assignment ``a``; unassigned users contribute 0."""
    R = np.asarray(R, dtype=float)
    mapping = _mapping_of(a)
    if mapping.ndim != 1 or len(mapping) != R.shape[0]:
        raise AssignmentError(f"assignment of length {len(mapping)} does not match {R.shape[0]} users")
    held = mapping != UNASSIGNED
    if np.any(mapping[held] < 0) or np.any(mapping[held] >= R.shape[1]):
        raise AssignmentError(f"channel index out of range for {R.shape[1]} channels: {mapping.tolist()}")
    users = np.flatnonzero(held)
    return float(sum(R[n, mapping[n]] for n in users))


def brute_force_optimal(R) -> tuple[Assignment, float]:
    """Exhaustive maximum-reward assignment.

    Enumerates injective maps in lexicographic order and keeps the first
    optimum, so ties resolve to the lexicographically smallest mapping.
    For ``N > K`` the matrix is zero-padded first and users that land on a
    padding column are reported unassigned.
    """
    R = as_reward_matrix(R)
    n, k = R.shape
    if max(n, k) > BRUTE_FORCE_LIMIT:
        raise SizeLimitError(f"brute force limited to max(N, K) <= {BRUTE_FORCE_LIMIT}, got {R.shape}")
    work = R if n <= k else np.hstack([R, np.zeros((n, n - k))])
    rows = np.arange(n)
    best_val, best_map = -np.inf, None
    perms = itertools.permutations(range(work.shape[1]), n)
    while True:
        chunk = np.array(list(itertools.islice(perms, _CHUNK)), dtype=np.int16)
        if chunk.size == 0:
            break
        vals = work[rows, chunk].sum(axis=1)
        top = vals.max()
        if top > best_val + ATOL:
            # first (lexicographically smallest) permutation within tolerance of the chunk max
            i = int(np.flatnonzero(vals >= top - ATOL)[0])
            best_val, best_map = float(vals[i]), chunk[i]
    mapping = np.array(best_map, dtype=int)
    mapping[mapping >= k] = UNASSIGNED
    a = Assignment.from_mapping(R, mapping)
    return a, a.value


def hungarian_optimal(R) -> tuple[Assignment, float]:
    """Maximum-reward assignment by shortest augmenting paths, O(N^3).

    Rectangular matrices are zero-padded to square; users landing on a
    padding column are reported unassigned.
    """
    R = as_reward_matrix(R)
    n, k = R.shape
    size = max(n, k)
    padded = np.zeros((size, size))
    padded[:n, :k] = R
    rows, cols = linear_sum_assignment(padded, maximize=True)
    mapping = np.full(n, UNASSIGNED, dtype=int)
    for r, c in zip(rows, cols):
        if r < n and c < k:
            mapping[r] = c
    a = Assignment.from_mapping(R, mapping)
    return a, a.value


def prices_from_bids(B) -> np.ndarray:
    """Channel prices as the column-wise maximum of the bid matrix."""
    bids = B.bids if isinstance(B, BidState) else np.asarray(B, dtype=float)
    return bids.max(axis=0)


def _cs_check(R, price_rows, a, eps) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    mapping = _mapping_of(a)
    if eps <= 0:
        raise AssignmentError(f"eps must be positive, got {eps}")
    # a fresh bid lands exactly on the eps boundary; allow for rounding in R - B
    tol = CS_RTOL * max(1.0, float(np.abs(R).max()), float(np.abs(price_rows).max()))
    out = np.full(R.shape[0], None, dtype=object)
    for n, c in enumerate(mapping):
        if c == UNASSIGNED:
            continue
        profit = R[n] - price_rows[n]
        out[n] = bool(profit[c] >= profit.max() - eps - tol)
    return out


def check_eps_cs(R, rho, a, eps) -> np.ndarray:
    """Per-user eps-complementary slackness against global prices ``rho``.

    Returns an object array holding ``True``/``False`` for assigned users
    and ``None`` (not applicable) for unassigned ones.
    """
    R = np.asarray(R, dtype=float)
    rho = np.asarray(rho, dtype=float)
    return _cs_check(R, np.broadcast_to(rho, R.shape), a, eps)


def check_local_eps_cs(R, B, a, eps) -> np.ndarray:
    """Like :func:`check_eps_cs` but each user is priced by his own bid row."""
    bids = B.bids if isinstance(B, BidState) else np.asarray(B, dtype=float)
    return _cs_check(R, bids, a, eps)


def all_pass(flags) -> bool:
    """True when every applicable entry of a CS check passed."""
    return all(f for f in flags if f is not None)
