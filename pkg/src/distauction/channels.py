"""I.i.d. Rayleigh-fading rate matrices.

The SNR of every (user, channel) pair is exponential with rate ``lambda``
(mean SNR ``1/lambda``) and the reward is ``w * log(1 + SNR)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

GENERATOR_ID = "numpy.Philox"


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator used for every sampled instance."""
    return np.random.Generator(np.random.Philox(seed))


def lambda_of(noise_power, distance, path_loss_exp, tx_power, gain) -> float:
    """Exponential SNR rate ``sigma^2 r^alpha / (p G)``."""
    return noise_power * distance**path_loss_exp / (tx_power * gain)


def snr_db_to_lambda(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 10.0)


def lambda_to_snr_db(lam: float) -> float:
    return -10.0 * np.log10(lam)


@dataclass
class ChannelModel:
    """Rate-matrix generator configuration.

    ``lam`` may be a scalar or one value per user. ``log_base`` is
    ``"natural"`` (nats, used by all closed-form bounds) or ``"base2"``.
    """

    n_users: int
    n_channels: int
    lam: float | tuple = 1.0
    weight: float = 1.0
    log_base: str = "natural"

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise ValueError(f"lambda must be positive and finite, got {self.lam}")
        if lam.ndim == 1 and len(lam) != self.n_users:
            raise ValueError(f"need one lambda per user ({self.n_users}), got {len(lam)}")
        if self.weight <= 0:
            raise ValueError("weight must be positive")
        if self.log_base not in ("natural", "base2"):
            raise ValueError(f"log_base must be 'natural' or 'base2', got {self.log_base!r}")
        if self.n_users < 1 or self.n_channels < 1:
            raise ValueError("need at least one user and one channel")

    @classmethod
    def from_snr_db(cls, n_users, n_channels, snr_db, **kw) -> "ChannelModel":
        return cls(n_users, n_channels, lam=snr_db_to_lambda(snr_db), **kw)

    @classmethod
    def from_config(cls, cfg: dict) -> "ChannelModel":
        """Build from ``{lambda | snr_db, weight, log_base, n_users, n_channels}``."""
        if "lambda" in cfg and "snr_db" in cfg:
            raise ValueError("give either lambda or snr_db, not both")
        if "snr_db" in cfg:
            lam = snr_db_to_lambda(cfg["snr_db"])
        else:
            lam = cfg.get("lambda", 1.0)
        return cls(int(cfg["n_users"]), int(cfg.get("n_channels", cfg["n_users"])),
                   lam=lam, weight=cfg.get("weight", 1.0), log_base=cfg.get("log_base", "natural"))

    @property
    def mean_snr(self):
        return 1.0 / np.asarray(self.lam, dtype=float)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lam"] = np.asarray(self.lam, dtype=float).tolist()
        return d


def sample_snr(model: ChannelModel, rng: np.random.Generator) -> np.ndarray:
    lam = np.asarray(model.lam, dtype=float)
    scale = 1.0 / lam if lam.ndim == 0 else (1.0 / lam)[:, None]
    return rng.exponential(size=(model.n_users, model.n_channels)) * scale


def sample_rate_matrix(model: ChannelModel, seed) -> np.ndarray:
    """Draw ``w * log(1 + SNR)`` with i.i.d. exponential SNRs; same seed, same matrix."""
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    rates = np.log1p(sample_snr(model, rng))
    if model.log_base == "base2":
        rates /= np.log(2.0)
    return model.weight * rates


def rate_cdf(y, lam):
    """CDF of the natural-log rate: ``1 - exp(-lam (e^y - 1))`` for ``y >= 0``."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        out = -np.expm1(-lam * np.expm1(np.maximum(y, 0.0)))
    out = np.where(y < 0, 0.0, out)
    return out if out.ndim else float(out)


def rate_sf(y, lam):
    """Survival function ``exp(-lam (e^y - 1))``, accurate in the far tail."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(-lam * np.expm1(np.maximum(y, 0.0)))
    out = np.where(y < 0, 1.0, out)
    return out if out.ndim else float(out)
