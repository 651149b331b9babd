"""Discrete-time LTI plants and their multi-step (lifted) models.

When the control input is held constant for ``i`` consecutive steps, the
``i``-step transition collapses to a single linear map and the accumulated
quadratic stage cost collapses to one quadratic form with a state/input
cross term.  This module owns those recursions; synthesis, control and
simulation all consume them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# Relative smallest-eigenvalue threshold for positive-definiteness checks.
PD_EIG_RTOL = 1e-12


def _readonly(M: np.ndarray) -> np.ndarray:
    out = np.array(M, dtype=float)
    out.setflags(write=False)
    return out


def as_matrix(M, name: str, shape=None) -> np.ndarray:
    """Coerce to a finite 2-D float array, optionally checking its shape."""
    out = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(out)):
        raise ConfigurationError(f"{name} has non-finite entries")
    if shape is not None and out.shape != shape:
        raise ConfigurationError(f"{name} must have shape {shape}, got {out.shape}")
    return out


def as_vector(x, name: str, length: int | None = None) -> np.ndarray:
    out = np.atleast_1d(np.asarray(x, dtype=float))
    if out.ndim != 1:
        raise ConfigurationError(f"{name} must be a vector, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ConfigurationError(f"{name} has non-finite entries")
    if length is not None and out.size != length:
        raise ConfigurationError(f"{name} must have length {length}, got {out.size}")
    return out


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def check_positive_definite(M: np.ndarray, name: str) -> None:
    """Require min eigenvalue > PD_EIG_RTOL * max eigenvalue."""
    eigs = np.linalg.eigvalsh(symmetrize(M))
    if eigs[-1] <= 0.0 or eigs[0] <= PD_EIG_RTOL * eigs[-1]:
        raise ConfigurationError(
            f"{name} must be symmetric positive definite "
            f"(eigenvalues in [{eigs[0]:.3e}, {eigs[-1]:.3e}])"
        )


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time plant ``x(k+1) = A x(k) + B u(k) + E w(k)``.

    ``E`` is the disturbance gain and defaults to an n-by-1 zero matrix so
    that noiseless scenarios need not mention it.
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray | None = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise ConfigurationError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        B = as_matrix(self.B, "B")
        if B.shape[0] != n:
            raise ConfigurationError(
                f"B must have {n} rows to match A, got {B.shape[0]}"
            )
        E = np.zeros((n, 1)) if self.E is None else as_matrix(self.E, "E")
        if E.shape[0] != n:
            raise ConfigurationError(
                f"E must have {n} rows to match A, got {E.shape[0]}"
            )
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "B", _readonly(B))
        object.__setattr__(self, "E", _readonly(E))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def w(self) -> int:
        return self.E.shape[1]


@dataclass(frozen=True)
class WeightSpec:
    """Quadratic stage weights plus the per-sample communication cost.

    ``alpha`` enters the online decision as ``alpha / i`` for a wait of
    ``i`` steps; larger values push the closed loop toward longer waits.
    """

    Q: np.ndarray
    R: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        Q = as_matrix(self.Q, "Q")
        R = as_matrix(self.R, "R")
        for M, name in ((Q, "Q"), (R, "R")):
            if M.shape[0] != M.shape[1]:
                raise ConfigurationError(f"{name} must be square, got {M.shape}")
            if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
                raise ConfigurationError(f"{name} must be symmetric")
            check_positive_definite(M, name)
        if not np.isfinite(self.alpha) or self.alpha < 0.0:
            raise ConfigurationError(f"alpha must be nonnegative, got {self.alpha}")
        object.__setattr__(self, "Q", _readonly(symmetrize(Q)))
        object.__setattr__(self, "R", _readonly(symmetrize(R)))
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True)
class LiftedModel:
    """Transition and accumulated-cost matrices for a wait of ``i`` steps."""

    i: int
    Ai: np.ndarray
    Bi: np.ndarray
    Qi: np.ndarray
    Ri: np.ndarray
    Ni: np.ndarray


def lift_range(sys: LtiSystem, weights: WeightSpec, gamma: int) -> list[LiftedModel]:
    """All lifted models for factors 1..gamma, in one forward pass.

    The transition recursion is ``A_{i+1} = A A_i``, ``B_{i+1} = A B_i + B``
    and the weight recursion accumulates the held-input stage costs:

        Q_{i+1} = Q_i + A_i' Q A_i
        R_{i+1} = R_i + B_i' Q B_i + R
        N_{i+1} = N_i + A_i' Q B_i

    with base case ``(A, B, Q, R, 0)``.  Q_i and R_i are re-symmetrized at
    every step to suppress accumulated floating-point asymmetry.
    """
    if gamma < 1:
        raise ConfigurationError(f"downsampling factor must be >= 1, got {gamma}")
    A, B = sys.A, sys.B
    Q, R = weights.Q, weights.R
    if Q.shape[0] != sys.n:
        raise ConfigurationError(
            f"Q is {Q.shape[0]}x{Q.shape[0]} but the state dimension is {sys.n}"
        )
    if R.shape[0] != sys.m:
        raise ConfigurationError(
            f"R is {R.shape[0]}x{R.shape[0]} but the input dimension is {sys.m}"
        )

    models = []
    Ai, Bi = A.copy(), B.copy()
    Qi, Ri, Ni = Q.copy(), R.copy(), np.zeros((sys.n, sys.m))
    for i in range(1, gamma + 1):
        models.append(
            LiftedModel(
                i,
                _readonly(Ai),
                _readonly(Bi),
                _readonly(Qi),
                _readonly(Ri),
                _readonly(Ni),
            )
        )
        if i == gamma:
            break
        Qi_next = symmetrize(Qi + Ai.T @ Q @ Ai)
        Ri_next = symmetrize(Ri + Bi.T @ Q @ Bi + R)
        Ni_next = Ni + Ai.T @ Q @ Bi
        Ai, Bi = A @ Ai, A @ Bi + B
        Qi, Ri, Ni = Qi_next, Ri_next, Ni_next
    return models


def lift_dynamics(sys: LtiSystem, i: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``i``-step transition pair (A^i, sum_{q<i} A^q B), accumulated incrementally."""
    if i < 1:
        raise ConfigurationError(f"downsampling factor must be >= 1, got {i}")
    Ai, Bi = sys.A.copy(), sys.B.copy()
    for _ in range(i - 1):
        Bi = sys.A @ Bi + sys.B
        Ai = sys.A @ Ai
    return _readonly(Ai), _readonly(Bi)


def lift_weights(
    sys: LtiSystem, weights: WeightSpec, i: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Accumulated cost matrices (Qi, Ri, Ni) for a wait of ``i`` steps."""
    lm = lift_range(sys, weights, i)[-1]
    return lm.Qi, lm.Ri, lm.Ni


def stage_cost_sum(sys: LtiSystem, weights: WeightSpec, x, u, i: int) -> float:
    """Total stage cost of holding input ``u`` for ``i`` steps from state ``x``.

    Equals the step-by-step sum of ``x'Qx + u'Ru`` along the held-input
    trajectory, collapsed to ``x'Qi x + u'Ri u + 2 x'Ni u``.
    """
    x = as_vector(x, "x", sys.n)
    u = as_vector(u, "u", sys.m)
    Qi, Ri, Ni = lift_weights(sys, weights, i)
    return float(x @ Qi @ x + u @ Ri @ u + 2.0 * x @ Ni @ u)
