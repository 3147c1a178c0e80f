"""Four-state service model and its rank-one spectral radius."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sensing import SensingChar

STATE_LABELS = {
    1: "busy, detected busy (ON)",
    2: "busy, detected idle (OFF)",
    3: "idle, detected busy (ON)",
    4: "idle, detected idle (ON)",
}


@dataclass(frozen=True)
class StateModel:
    """Probabilities of entering states 1..4; identical from every origin state."""

    p1: float
    p2: float
    p3: float
    p4: float

    def __post_init__(self):
        probs = self.probs
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError(f"state probabilities must lie in [0, 1], got {tuple(probs)}")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"state probabilities must sum to 1, got {probs.sum()!r}")

    @property
    def probs(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3, self.p4])

    def transition_matrix(self) -> np.ndarray:
        """Row-stochastic R with R[i, j] = p_{j+1} for every origin i."""
        return np.tile(self.probs, (4, 1))

    @property
    def busy_branch(self) -> float:
        """Probability the transmitter uses the busy-branch policy (states 1 and 3)."""
        return self.p1 + self.p3


def build_state_model(prior_busy: float, sc: SensingChar) -> StateModel:
    if not 0.0 <= prior_busy <= 1.0:
        raise ValueError(f"prior_busy must lie in [0, 1], got {prior_busy!r}")
    rho, pd, pf = prior_busy, sc.p_detect, sc.p_false_alarm
    return StateModel(p1=rho * pd, p2=rho * (1.0 - pd),
                      p3=(1.0 - rho) * pf, p4=(1.0 - rho) * (1.0 - pf))


def spectral_radius_rank1(moments, m: StateModel) -> float:
    """Spectral radius of diag(phi) R for the rank-one R: sum_k phi_k p_k."""
    phi = np.asarray(moments, dtype=float)
    if phi.shape != (4,):
        raise ValueError(f"expected four state moments, got shape {phi.shape}")
    return float(phi @ m.probs)


def dominant_eigenvalue(matrix: np.ndarray, tol: float = 1e-14, max_iter: int = 10_000) -> float:
    """Magnitude of the dominant eigenvalue by power iteration.

    Generic check for spectral_radius_rank1; not used on the production path.
    """
    a = np.asarray(matrix, dtype=float)
    x = np.ones(a.shape[0]) / a.shape[0]
    est = 0.0
    for _ in range(max_iter):
        y = a @ x
        norm = np.abs(y).sum()
        if norm == 0.0:
            return 0.0
        y /= norm
        new = float(np.abs(a @ y).sum() / np.abs(y).sum())
        if abs(new - est) <= tol * max(new, 1e-300):
            return new
        x, est = y, new
    return est
