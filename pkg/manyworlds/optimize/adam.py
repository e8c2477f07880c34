"""Adam with a momentum-free warmup."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import OptConfig
from ..errors import DimensionMismatchError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Moments share the parameter layout; step counts applied updates."""
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64))


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    cfg: OptConfig,
    learning_rate: Optional[float] = None,
) -> bool:
    """
    Update params in place. Returns False if the step was skipped.

    While state.step < cfg.warmup_iters the update is plain gradient descent
    and the moments stay zero. Afterwards it is the bias-corrected Adam update
    with t counted from the end of warmup.
    """
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise DimensionMismatchError(f"params {params.shape}, grads {grads.shape}, moments {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        bad = int((~np.isfinite(grads)).sum())
        logger.warning(f"Skipping optimizer step {state.step}: {bad} non-finite gradient value(s)")
        return False

    lr = cfg.learning_rate if learning_rate is None else learning_rate

    if state.step < cfg.warmup_iters:
        params -= lr * grads
        state.step += 1
        return True

    t = state.step - cfg.warmup_iters + 1
    state.m *= cfg.beta1
    state.m += (1.0 - cfg.beta1) * grads
    state.v *= cfg.beta2
    state.v += (1.0 - cfg.beta2) * grads * grads
    m_hat = state.m / (1.0 - cfg.beta1 ** t)
    v_hat = state.v / (1.0 - cfg.beta2 ** t)
    params -= lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    state.step += 1
    return True
