"""Closed-form solver for the total-variation-penalized reweighting problem.

For a fixed model, the inner problem

    min_{u in U}  sum_i (1/N + u_i) c_i  +  (gamma/2) ||u||_1,
    U = {u : sum_i u_i = 0,  1/N + u_i >= 0}

admits a closed-form optimizer obtained by partitioning the per-sample
losses c around the breakpoints c_min and c_min + gamma.  Samples with
loss above c_min + gamma are pruned (weight exactly zero); the freed
probability mass is spread uniformly over the minimum-loss samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rockrelax.errors import InvalidInputError

# Feasibility tolerance for membership in U.
FEAS_TOL = 1e-12

# Absolute tolerance for classifying a loss as sitting exactly on a
# breakpoint (c_min or c_min + gamma).  Near-boundary points are folded
# into I_min / I_big deterministically; any consistent rule is optimal
# because boundary assignment is a degree of freedom of the solution set.
PARTITION_TOL = 1e-9

# Smallest positive gamma returned when auto-tuning degenerates (the
# requested quantile collapses onto the minimum loss).
GAMMA_FLOOR_SCALE = 1e-9


def _as_loss_vector(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise InvalidInputError("loss vector must be a non-empty 1-d array")
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("loss vector contains non-finite entries")
    return c


@dataclass(frozen=True)
class WeightShift:
    """Per-sample probability shifts u relative to the uniform weight 1/N.

    Feasibility requires the shifts to sum to zero and to keep every
    probability 1/N + u_i non-negative.
    """

    shifts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shifts", np.asarray(self.shifts, dtype=float))

    @property
    def n(self) -> int:
        return self.shifts.size

    def weights(self) -> np.ndarray:
        """The probability vector 1/N + u."""
        return 1.0 / self.n + self.shifts

    def is_feasible(self, tol: float = FEAS_TOL) -> bool:
        u = self.shifts
        return (
            bool(np.all(np.isfinite(u)))
            and abs(float(u.sum())) <= tol * max(1, self.n)
            and bool(np.all(u >= -1.0 / self.n - tol))
        )

    def validate(self, tol: float = FEAS_TOL) -> "WeightShift":
        if not self.is_feasible(tol):
            raise InvalidInputError("weight shift violates feasibility (sum-to-zero / lower bound)")
        return self

    @classmethod
    def zero(cls, n: int) -> "WeightShift":
        return cls(np.zeros(n))


@dataclass(frozen=True)
class LossPartition:
    """Four-way split of sample indices by loss position.

    i_min holds losses at the minimum, i_mid losses strictly inside
    (c_min, c_min + gamma), i_big losses exactly at c_min + gamma, and
    chi losses above c_min + gamma (the pruned set).
    """

    c_min: float
    gamma: float
    i_min: np.ndarray
    i_mid: np.ndarray
    i_big: np.ndarray
    chi: np.ndarray

    @property
    def n(self) -> int:
        return self.i_min.size + self.i_mid.size + self.i_big.size + self.chi.size

    @property
    def pruned_fraction(self) -> float:
        return self.chi.size / self.n


@dataclass(frozen=True)
class ReweightConfig:
    """Hyperparameters of the re-weighting step.

    gamma is the total-variation price, mu the blend step applied to the
    new optimizer, and contamination_estimate (if given) switches on
    auto-tuning of gamma with mu forced to 1.
    """

    gamma: float = 0.4
    mu: float = 0.5
    contamination_estimate: float | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidInputError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.mu <= 1:
            raise InvalidInputError(f"mu must lie in (0, 1], got {self.mu}")
        if self.contamination_estimate is not None and not 0 <= self.contamination_estimate <= 1:
            raise InvalidInputError(
                f"contamination estimate must lie in [0, 1], got {self.contamination_estimate}"
            )


def partition_losses(c, gamma: float, tol: float = PARTITION_TOL) -> LossPartition:
    """Partition losses into i_min / i_mid / i_big / chi around the breakpoints."""
    c = _as_loss_vector(c)
    if not gamma > 0:
        raise InvalidInputError(f"gamma must be positive, got {gamma}")
    c_min = float(c.min())
    upper = c_min + gamma
    is_min = c <= c_min + tol
    is_big = (~is_min) & (np.abs(c - upper) <= tol)
    is_chi = (~is_min) & (~is_big) & (c > upper)
    is_mid = ~(is_min | is_big | is_chi)
    idx = np.arange(c.size)
    return LossPartition(
        c_min=c_min,
        gamma=float(gamma),
        i_min=idx[is_min],
        i_mid=idx[is_mid],
        i_big=idx[is_big],
        chi=idx[is_chi],
    )


def solve_reweight(c, gamma: float) -> WeightShift:
    """Closed-form optimizer of the inner reweighting problem.

    Pruned samples (loss above c_min + gamma) get u_i = -1/N; their mass
    |chi|/N is spread uniformly over the minimum-loss samples; everything
    in between keeps u_i = 0.
    """
    c = _as_loss_vector(c)
    part = partition_losses(c, gamma)
    n = c.size
    u = np.zeros(n)
    if part.chi.size:
        u[part.i_min] = part.chi.size / (n * part.i_min.size)
        u[part.chi] = -1.0 / n
    return WeightShift(u)


def blend_weights(u_prev: WeightShift, u_star: WeightShift, mu: float) -> WeightShift:
    """Convex blend mu * u_star + (1 - mu) * u_prev; stays feasible by convexity."""
    if u_prev.n != u_star.n:
        raise InvalidInputError(f"length mismatch: {u_prev.n} vs {u_star.n}")
    if not 0 < mu <= 1:
        raise InvalidInputError(f"mu must lie in (0, 1], got {mu}")
    return WeightShift(mu * u_star.shifts + (1.0 - mu) * u_prev.shifts)


def auto_tune_gamma(c, c_prime: float) -> float:
    """Set gamma so that at least a fraction c_prime of samples is pruned.

    Picks the largest loss breakpoint ell such that the fraction of
    losses strictly above ell is >= c_prime, then returns ell - c_min.
    Degenerate instances (the quantile collapses onto the minimum loss)
    return a tiny positive floor so gamma stays valid.
    """
    c = _as_loss_vector(c)
    if not 0 <= c_prime <= 1:
        raise InvalidInputError(f"contamination estimate must lie in [0, 1], got {c_prime}")
    n = c.size
    c_min = float(c.min())
    floor = GAMMA_FLOOR_SCALE * max(1.0, abs(c_min))
    # Scan unique loss values from above; ties resolved toward more pruning.
    for ell in np.unique(c)[::-1]:
        frac_above = np.count_nonzero(c > ell) / n
        if frac_above >= c_prime - FEAS_TOL:
            gamma = float(ell) - c_min
            return gamma if gamma > 0 else floor
    return floor


def reweight_objective(c, u: WeightShift, gamma: float) -> float:
    """Inner objective sum_i (1/N + u_i) c_i + (gamma/2) ||u||_1."""
    c = _as_loss_vector(c)
    if c.size != u.n:
        raise InvalidInputError(f"length mismatch: {c.size} vs {u.n}")
    return float(u.weights() @ c + 0.5 * gamma * np.abs(u.shifts).sum())


def check_kkt(c, u: WeightShift, gamma: float, tol: float = 1e-9) -> bool:
    """Certify optimality of a feasible u via the subdifferential conditions.

    A feasible u is optimal iff lambda = c_min + gamma/2 lies in the
    per-coordinate subdifferential interval determined by the sign and
    saturation of u_i:

        u_i > 0        -> lambda = c_i + gamma/2
        u_i = 0        -> lambda in [c_i - gamma/2, c_i + gamma/2]
        -1/N < u_i < 0 -> lambda = c_i - gamma/2
        u_i = -1/N     -> lambda <= c_i - gamma/2
    """
    c = _as_loss_vector(c)
    if c.size != u.n:
        raise InvalidInputError(f"length mismatch: {c.size} vs {u.n}")
    if not u.is_feasible(tol=max(FEAS_TOL, tol)):
        return False
    n = u.n
    lam = float(c.min()) + 0.5 * gamma
    for ui, ci in zip(u.shifts, c):
        if abs(ui + 1.0 / n) <= tol:
            ok = lam <= ci - 0.5 * gamma + tol
        elif abs(ui) <= tol:
            ok = ci - 0.5 * gamma - tol <= lam <= ci + 0.5 * gamma + tol
        elif ui > 0:
            ok = abs(lam - (ci + 0.5 * gamma)) <= tol
        else:
            ok = abs(lam - (ci - 0.5 * gamma)) <= tol
        if not ok:
            return False
    return True


def tv_distance(u: WeightShift) -> float:
    """Total-variation distance between 1/N + u and the uniform distribution."""
    return 0.5 * float(np.abs(u.shifts).sum())
