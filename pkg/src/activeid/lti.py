"""Discrete-time LTI systems, Gaussian process noise and prediction errors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when array shapes disagree; the message names the offending dimension."""


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.array(M, dtype=float, ndmin=2)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got n_x mismatch {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(
                f"B has {B.shape[0]} rows but A has n_x={A.shape[0]}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    def difference(self, other: "LinearSystem") -> tuple[np.ndarray, np.ndarray]:
        """Return (A_self - A_other, B_self - B_other)."""
        return self.A - other.A, self.B - other.B


@dataclass(frozen=True, eq=False)
class NoiseModel:
    sigma_w: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)
    inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        S = _as_matrix(self.sigma_w, "sigma_w")
        if S.shape[0] != S.shape[1]:
            raise DimensionError(f"sigma_w must be square, got {S.shape}")
        scale = max(np.abs(S).max(), 1e-300)
        if np.abs(S - S.T).max() > 1e-12 * scale:
            raise ValueError("sigma_w is not symmetric")
        S = 0.5 * (S + S.T)
        if np.linalg.eigvalsh(S).min() <= 0:
            raise ValueError("sigma_w must be positive definite")
        L = np.linalg.cholesky(S)
        inv = np.linalg.inv(S)
        inv = 0.5 * (inv + inv.T)
        for name, val in (("sigma_w", S), ("chol", L), ("inv", inv)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def isotropic(cls, n_x: int, sigma: float = 1.0) -> "NoiseModel":
        return cls(sigma**2 * np.eye(n_x))

    @property
    def n_x(self) -> int:
        return self.sigma_w.shape[0]


@dataclass(frozen=True, eq=False)
class Scenario:
    """A finite hypothesis class together with the simulation ground truth."""

    systems: tuple[LinearSystem, ...]
    noise: NoiseModel
    gamma_u: float = 1.0
    true_index: int = 0
    name: str = "custom"

    def __post_init__(self):
        systems = tuple(self.systems)
        object.__setattr__(self, "systems", systems)
        if len(systems) < 2:
            raise ValueError("a scenario needs at least 2 candidate systems")
        n_x, n_u = systems[0].n_x, systems[0].n_u
        for k, s in enumerate(systems):
            if (s.n_x, s.n_u) != (n_x, n_u):
                raise DimensionError(
                    f"system {k} has (n_x, n_u)={(s.n_x, s.n_u)}, expected {(n_x, n_u)}"
                )
        if self.noise.n_x != n_x:
            raise DimensionError(f"sigma_w has n_x={self.noise.n_x}, systems have {n_x}")
        if not self.gamma_u > 0:
            raise ValueError("gamma_u must be positive")
        if not 0 <= self.true_index < len(systems):
            raise IndexError(f"true_index {self.true_index} out of range")
        for i in range(len(systems)):
            for j in range(i + 1, len(systems)):
                dA, dB = systems[i].difference(systems[j])
                if np.linalg.norm(dA) + np.linalg.norm(dB) == 0:
                    raise ValueError(f"candidates {i} and {j} are identical")

    @property
    def n_x(self) -> int:
        return self.systems[0].n_x

    @property
    def n_u(self) -> int:
        return self.systems[0].n_u

    @property
    def n_alternatives(self) -> int:
        """N, the number of candidates besides the true one."""
        return len(self.systems) - 1

    @property
    def true_system(self) -> LinearSystem:
        return self.systems[self.true_index]


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # (T+1, n_x)
    inputs: np.ndarray  # (T, n_u)

    def __post_init__(self):
        if len(self.states) != len(self.inputs) + 1:
            raise DimensionError(
                f"states has {len(self.states)} rows, expected len(inputs)+1={len(self.inputs) + 1}"
            )

    @property
    def length(self) -> int:
        return len(self.inputs)

    def segment(self, start: int, stop: int) -> "Trajectory":
        """Sub-trajectory covering inputs start..stop-1 and states start..stop."""
        return Trajectory(self.states[start : stop + 1], self.inputs[start:stop])


def _check_inputs(inputs, n_u: int) -> np.ndarray:
    U = np.asarray(inputs, dtype=float)
    if U.ndim == 1 and n_u == 1:
        U = U[:, None]
    if U.ndim != 2 or U.shape[1] != n_u:
        raise DimensionError(f"inputs must have shape (T, n_u={n_u}), got {U.shape}")
    if len(U) == 0:
        raise ValueError("inputs must be non-empty")
    return U


def simulate(
    system: LinearSystem,
    noise: NoiseModel,
    inputs,
    x0=None,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Roll the system forward: x(t+1) = A x(t) + B u(t) + L z(t), L L^T = sigma_w.

    ``rng=None`` simulates noise-free.
    """
    U = _check_inputs(inputs, system.n_u)
    if noise.n_x != system.n_x:
        raise DimensionError(f"noise n_x={noise.n_x} does not match system n_x={system.n_x}")
    x = np.zeros(system.n_x) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x.shape != (system.n_x,):
        raise DimensionError(f"x0 has dimension {x.shape[0]}, expected n_x={system.n_x}")
    T = len(U)
    X = np.empty((T + 1, system.n_x))
    X[0] = x
    if rng is None:
        W = np.zeros((T, system.n_x))
    else:
        W = rng.standard_normal((T, system.n_x)) @ noise.chol.T
    A, B = system.A, system.B
    for t in range(T):
        X[t + 1] = A @ X[t] + B @ U[t] + W[t]
    return Trajectory(X, U)


def sample_isotropic_input(
    gamma_u: float, n_u: int, length: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw u(t) i.i.d. N(0, gamma_u^2 / n_u I), returned with shape (length, n_u)."""
    if not gamma_u > 0:
        raise ValueError("gamma_u must be positive")
    if length < 1 or n_u < 1:
        raise ValueError("length and n_u must be >= 1")
    return rng.standard_normal((length, n_u)) * (gamma_u / np.sqrt(n_u))


def residuals(traj: Trajectory, candidate: LinearSystem) -> np.ndarray:
    """One-step prediction residuals x(s+1) - A x(s) - B u(s), shape (T, n_x)."""
    if traj.states.shape[1] != candidate.n_x:
        raise DimensionError(
            f"trajectory n_x={traj.states.shape[1]} does not match candidate n_x={candidate.n_x}"
        )
    if traj.inputs.shape[1] != candidate.n_u:
        raise DimensionError(
            f"trajectory n_u={traj.inputs.shape[1]} does not match candidate n_u={candidate.n_u}"
        )
    X = traj.states
    return X[1:] - X[:-1] @ candidate.A.T - traj.inputs @ candidate.B.T


def prediction_error(traj: Trajectory, candidate: LinearSystem, noise: NoiseModel) -> float:
    """Sum of squared one-step residuals weighted by the noise precision."""
    R = residuals(traj, candidate)
    return float(np.einsum("ti,ij,tj->", R, noise.inv, R))


def prediction_errors(
    traj: Trajectory, candidates: Sequence[LinearSystem], noise: NoiseModel
) -> np.ndarray:
    return np.array([prediction_error(traj, c, noise) for c in candidates])
