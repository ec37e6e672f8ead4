"""Averaged ES-MRAC dynamics, the period-average operator and the basic ES loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .controller import (
    ControllerDesign,
    PlantSpec,
    SingularPlantError,
    commensurate_base,
    error_dynamics_matrices,
)
from .lti import ReferenceModelSpec

MIN_NODES = 256


def average_over_period(f, period: float, nodes: int = MIN_NODES):
    """Mean of a ``period``-periodic function over one period.

    ``f`` is either a callable of the phase variable or an array of samples
    taken at ``k * period / nodes`` (first axis indexes the nodes). The
    composite trapezoid rule on a periodic grid reduces to the sample mean
    and is exact for trigonometric polynomials below the node Nyquist limit.
    Callables may return scalars, vectors or matrices.
    """
    if not period > 0:
        raise ValueError("period must be positive")
    if callable(f):
        if nodes < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} quadrature nodes")
        taus = period * np.arange(nodes) / nodes
        samples = np.array([np.asarray(f(tau), dtype=float) for tau in taus])
    else:
        samples = np.asarray(f, dtype=float)
        if samples.shape[0] < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} samples per period")
    return samples.mean(axis=0)


def common_period(omegas) -> float:
    """Period ``2 pi / omega_base`` shared by all dithers."""
    base, _ = commensurate_base(omegas)
    return 2.0 * np.pi / base


# Signal vectors in scaled time tau = omega_base * t, where omega_i = n_i * omega_base.


def dither_vector(tau, c, harmonics) -> np.ndarray:
    """``S(tau) = [c_i sin(n_i tau)]``."""
    return np.asarray(c, dtype=float) * np.sin(np.asarray(harmonics) * tau)


def d1_vector(tau, d, omegas, phis, harmonics) -> np.ndarray:
    """``sin(n_i tau - phi_i) + d_i omega_i cos(n_i tau - phi_i)``."""
    arg = np.asarray(harmonics) * tau - np.asarray(phis, dtype=float)
    return np.sin(arg) + np.asarray(d) * np.asarray(omegas) * np.cos(arg)


def d2_vector(tau, d, phis, harmonics) -> np.ndarray:
    """``d_i sin(n_i tau - phi_i)``."""
    return np.asarray(d, dtype=float) * np.sin(np.asarray(harmonics) * tau - np.asarray(phis, dtype=float))


def adaptation_matrix(design: ControllerDesign) -> np.ndarray:
    """``diag(g_i d_i c_i cos(phi_i))``."""
    return np.diag(design.g * design.d * design.c * np.cos(design.phis))


@dataclass
class AveragedState:
    x: np.ndarray
    a_tilde: np.ndarray
    ym: np.ndarray
    t: float = 0.0

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.a_tilde, self.ym]).astype(float)

    @classmethod
    def from_vector(cls, vec, n: int, t: float = 0.0) -> "AveragedState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (3 * n + 1,):
            raise ValueError(f"averaged state must have length {3 * n + 1}")
        return cls(vec[:n].copy(), vec[n : 2 * n + 1].copy(), vec[2 * n + 1 :].copy(), t)


def averaged_regression(ref: ReferenceModelSpec, design: ControllerDesign, x, ym, r: float) -> np.ndarray:
    """``v_av`` rebuilt from the averaged error and the reference model."""
    ym_n = ref.highest_derivative(ym, r)
    z = ym_n - float(design.betas @ x)
    return np.append(np.asarray(x) + np.asarray(ym), z)


def averaged_derivs(
    plant: PlantSpec,
    ref: ReferenceModelSpec,
    design: ControllerDesign,
    t: float,
    state,
    r: float,
) -> np.ndarray:
    """Averaged error and parameter-error dynamics in original time.

    ``x' = A x - b (v^T a_tilde) / a_n`` and
    ``a_tilde' = q_n / (2 a_n) C v (q^T x)`` with ``C = diag(g d c cos phi)``.
    State layout: ``[x (n) | a_tilde (n+1) | y_m (n)]``.
    """
    n = plant.order
    a_n = plant.a[-1]
    if a_n == 0.0:
        raise SingularPlantError("a_n = 0")
    state = np.asarray(state, dtype=float)
    x = state[:n]
    a_tilde = state[n : 2 * n + 1]
    ym = state[2 * n + 1 :]

    A, b = error_dynamics_matrices(design)
    v = averaged_regression(ref, design, x, ym, r)
    cdiag = design.g * design.d * design.c * np.cos(design.phis)

    out = np.empty_like(state)
    out[:n] = A @ x - b * (v @ a_tilde) / a_n
    out[n : 2 * n + 1] = design.q[-1] / (2.0 * a_n) * cdiag * v * float(design.q @ x)
    out[2 * n + 1 : -1] = ym[1:]
    out[-1] = ref.highest_derivative(ym, r)
    return out


def lyapunov_value(x, a_tilde, P, gamma) -> float:
    """``V = x^T P x + 2 a_tilde^T Gamma a_tilde``."""
    x = np.asarray(x, dtype=float)
    a_tilde = np.asarray(a_tilde, dtype=float)
    return float(x @ P @ x + 2.0 * a_tilde @ gamma @ a_tilde)


# Basic extremum seeking on a static map


@dataclass(frozen=True)
class QuadraticMap:
    """``f(theta) = f_star + 0.5 * curvature * (theta - theta_star)^2``."""

    f_star: float
    curvature: float
    theta_star: float

    def __call__(self, theta):
        return self.f_star + 0.5 * self.curvature * (np.asarray(theta) - self.theta_star) ** 2


MAP_CATALOG = {
    # 1 + 2 (theta - 3)^2
    "quadratic": QuadraticMap(f_star=1.0, curvature=4.0, theta_star=3.0),
    "shallow": QuadraticMap(f_star=0.0, curvature=1.0, theta_star=-2.0),
    "steep": QuadraticMap(f_star=-1.0, curvature=20.0, theta_star=0.5),
}


@dataclass(frozen=True)
class BasicESConfig:
    f: Callable[[float], float]
    a: float
    omega: float
    k: float
    theta0: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.omega > 0 and self.k > 0):
            raise ValueError("a, omega and k must all be positive")


def basic_es_derivs(config: BasicESConfig, theta_hat: float, t: float) -> float:
    """Perturb, demodulate, integrate: ``theta_hat' = -k sin(omega t) f(theta_hat + a sin(omega t))``."""
    s = np.sin(config.omega * t)
    return -config.k * s * float(config.f(theta_hat + config.a * s))


__all__ = [
    "AveragedState",
    "BasicESConfig",
    "MAP_CATALOG",
    "QuadraticMap",
    "adaptation_matrix",
    "average_over_period",
    "averaged_derivs",
    "averaged_regression",
    "basic_es_derivs",
    "common_period",
    "d1_vector",
    "d2_vector",
    "dither_vector",
    "lyapunov_value",
]
