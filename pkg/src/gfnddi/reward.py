"""Composite rareness x plausibility reward for synthetic interaction triples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .vgae import LatentState, VgaeModel, decode_type_distribution


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 1.0
    epsilon_floor: float = 1e-12

    def __post_init__(self):
        if self.alpha < 0:
            raise ContractError("alpha must be >= 0")
        if self.epsilon_floor <= 0:
            raise ContractError("epsilon_floor must be positive")


def rareness(type_counts, alpha: float) -> np.ndarray:
    """(1 / (n_t + 1)) ** alpha for every type."""
    n = np.asarray(type_counts, dtype=np.float64)
    return (1.0 / (n + 1.0)) ** alpha


def reward(t: int, d_i: int, d_j: int, type_counts, model: VgaeModel, latent: LatentState,
           cfg: RewardConfig = RewardConfig()) -> float:
    if d_i == d_j:
        raise ContractError("reward needs two distinct drugs")
    p = decode_type_distribution(model, latent.z[d_i], latent.z[d_j])[t]
    return float(rareness(type_counts, cfg.alpha)[t] * max(p, cfg.epsilon_floor))


def log_reward_batch(types, heads, tails, type_counts, model: VgaeModel, latent: LatentState,
                     cfg: RewardConfig = RewardConfig()) -> np.ndarray:
    """Vectorised log R for arrays of (t, d_i, d_j)."""
    types = np.asarray(types, dtype=np.int64)
    probs = decode_type_distribution(model, latent.z[np.asarray(heads)], latent.z[np.asarray(tails)])
    p = probs[np.arange(len(types)), types]
    n = np.asarray(type_counts, dtype=np.float64)[types]
    return -cfg.alpha * np.log(n + 1.0) + np.log(np.maximum(p, cfg.epsilon_floor))
