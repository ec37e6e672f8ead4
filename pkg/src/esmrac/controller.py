"""ES-MRAC controller: signals, per-parameter ES loops and the closed-loop vector field.

State layout used by :func:`closed_loop_derivs` (plant order ``n``)::

    [ y, y', ..., y^(n-1) | y_m, ..., y_m^(n-1) | xi_0, ..., xi_n ]

Parameter vectors (estimates, dithers, gains) are always ordered
``[a_0, ..., a_n]`` to line up with the regression vector
``v = [y, y', ..., y^(n-1), z]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from .lti import ReferenceModelSpec, companion_matrix

MAX_FREQ_DENOMINATOR = 1000


class SingularPlantError(ValueError):
    pass


@dataclass(frozen=True)
class PlantSpec:
    """True plant ``a_n y^(n) + ... + a_0 y = u``; ``coeffs = [a_0, ..., a_n]``.

    Only the simulator reads these values. The sign of ``a_n`` is unrestricted.
    """

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) < 2:
            raise ValueError("plant needs order >= 1")
        if c[-1] == 0.0:
            raise SingularPlantError("leading plant coefficient a_n must be nonzero")
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.coeffs)


@dataclass(frozen=True)
class ESLoop:
    """One extremum-seeking loop: dither ``c sin(omega t)``, demodulation phase
    ``phi`` and compensator ``-g (1 + d s) / s``.

    ``c``, ``g`` and ``d`` may be zero (no dither / frozen estimate / pure
    integrator); the design validator flags such loops.
    """

    c: float
    omega: float
    phi: float = 0.0
    g: float = 1.0
    d: float = 0.0

    def __post_init__(self):
        for name in ("c", "omega", "phi", "g", "d"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"loop parameter {name} must be finite")
            object.__setattr__(self, name, value)
        if self.omega <= 0:
            raise ValueError("loop frequency omega must be positive")
        if self.c < 0 or self.g < 0 or self.d < 0:
            raise ValueError("loop parameters c, g and d must be non-negative")


def rationalize(value: float, max_denominator: int = MAX_FREQ_DENOMINATOR) -> Fraction:
    """Exact rational for ``value`` with a bounded denominator, or ValueError."""
    frac = Fraction(value).limit_denominator(max_denominator)
    if not math.isclose(float(frac), value, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError(f"frequency {value!r} is not a rational with denominator <= {max_denominator}")
    return frac


def commensurate_base(omegas) -> tuple[float, list[int]]:
    """Greatest common frequency ``omega_base`` and integer harmonics ``n_i``.

    Each ``omega_i`` is converted to a rational with denominator at most
    1000; the base is their rational gcd so that ``omega_i = n_i * omega_base``
    exactly. Raises ValueError on irrational ratios or repeated harmonics.
    """
    fracs = [rationalize(float(w)) for w in omegas]
    if any(f <= 0 for f in fracs):
        raise ValueError("frequencies must be positive")
    lcm_den = reduce(lambda x, y: x * y // math.gcd(x, y), (f.denominator for f in fracs), 1)
    nums = [int(f * lcm_den) for f in fracs]
    g = reduce(math.gcd, nums)
    harmonics = [k // g for k in nums]
    if len(set(harmonics)) != len(harmonics):
        raise ValueError(f"loop frequencies must be distinct, got harmonics {harmonics}")
    return float(Fraction(g, lcm_den)), harmonics


@dataclass(frozen=True, eq=False)
class ControllerDesign:
    """Everything the designer chooses.

    Attributes
    ----------
    betas : beta_0..beta_{n-1} of the error polynomial.
    q : cost weights q_1..q_n.
    loops : n+1 :class:`ESLoop`, one per estimated parameter a_0..a_n.
    a_hat0 : initial estimates.
    gamma : (n+1)x(n+1) symmetric positive definite matrix used by the
        Lyapunov function and the eigencondition.
    Q : nxn symmetric positive definite matrix for the Lyapunov equation.

    Hurwitz-ness of ``betas`` is deliberately not enforced here so that the
    validator can report it as a failed certificate.
    """

    betas: np.ndarray
    q: np.ndarray
    loops: tuple
    a_hat0: np.ndarray = None
    gamma: np.ndarray = None
    Q: np.ndarray = None
    omega_base: float = field(init=False)
    harmonics: tuple = field(init=False)

    def __post_init__(self):
        betas = np.atleast_1d(np.asarray(self.betas, dtype=float))
        n = betas.size
        if n < 1:
            raise ValueError("betas must be non-empty")
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if q.shape != (n,):
            raise ValueError(f"q must have length {n}")
        if q[-1] == 0.0:
            raise ValueError("q_n must be nonzero")
        loops = tuple(self.loops)
        if len(loops) != n + 1 or not all(isinstance(lp, ESLoop) for lp in loops):
            raise ValueError(f"need exactly {n + 1} ES loops")
        a_hat0 = np.zeros(n + 1) if self.a_hat0 is None else np.asarray(self.a_hat0, dtype=float)
        if a_hat0.shape != (n + 1,):
            raise ValueError(f"a_hat0 must have length {n + 1}")
        gamma = np.eye(n + 1) if self.gamma is None else np.asarray(self.gamma, dtype=float)
        if gamma.ndim == 1:
            gamma = np.diag(gamma)
        if gamma.shape != (n + 1, n + 1) or not np.allclose(gamma, gamma.T):
            raise ValueError(f"gamma must be a symmetric {n + 1}x{n + 1} matrix")
        Q = np.eye(n) if self.Q is None else np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape != (n, n) or not np.allclose(Q, Q.T):
            raise ValueError(f"Q must be a symmetric {n}x{n} matrix")
        base, harmonics = commensurate_base([lp.omega for lp in loops])
        for name, value in (("betas", betas), ("q", q), ("a_hat0", a_hat0), ("gamma", gamma), ("Q", Q)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "loops", loops)
        object.__setattr__(self, "omega_base", base)
        object.__setattr__(self, "harmonics", tuple(harmonics))
        # per-loop vectors are read on every right-hand-side evaluation
        for name in ("c", "omega", "phi", "g", "d"):
            arr = np.array([getattr(lp, name) for lp in loops])
            arr.setflags(write=False)
            object.__setattr__(self, "_" + name, arr)
        A, b = companion_matrix(betas)
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_b", b)

    def __eq__(self, other):
        if not isinstance(other, ControllerDesign):
            return NotImplemented
        return self.loops == other.loops and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("betas", "q", "a_hat0", "gamma", "Q")
        )

    __hash__ = None

    @property
    def order(self) -> int:
        return self.betas.size

    @property
    def c(self) -> np.ndarray:
        return self._c

    @property
    def omegas(self) -> np.ndarray:
        return self._omega

    @property
    def phis(self) -> np.ndarray:
        return self._phi

    @property
    def g(self) -> np.ndarray:
        return self._g

    @property
    def d(self) -> np.ndarray:
        return self._d

    def with_omega_base(self, omega_base: float) -> "ControllerDesign":
        """Same design with every loop frequency set to ``n_i * omega_base``."""
        loops = [
            ESLoop(c=lp.c, omega=n * omega_base, phi=lp.phi, g=lp.g, d=lp.d)
            for lp, n in zip(self.loops, self.harmonics)
        ]
        return ControllerDesign(self.betas, self.q, loops, self.a_hat0, self.gamma, self.Q)


@dataclass
class ClosedLoopState:
    """Full ODE state. The tracking error is always derived, never stored."""

    y: np.ndarray
    ym: np.ndarray
    xi: np.ndarray
    t: float = 0.0

    @property
    def order(self) -> int:
        return len(self.y)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.y, self.ym, self.xi]).astype(float)

    @classmethod
    def from_vector(cls, vec, n: int, t: float = 0.0) -> "ClosedLoopState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (3 * n + 1,):
            raise ValueError(f"state vector must have length {3 * n + 1}")
        return cls(vec[:n].copy(), vec[n : 2 * n].copy(), vec[2 * n :].copy(), t)

    @classmethod
    def initial(cls, y0, ym0, n_params: int) -> "ClosedLoopState":
        # estimates enter as an offset inside es_loop_output, so xi starts at zero
        return cls(np.asarray(y0, dtype=float), np.asarray(ym0, dtype=float), np.zeros(n_params), 0.0)


def tracking_error(state: ClosedLoopState) -> np.ndarray:
    """``x = [e, e', ..., e^(n-1)]`` with ``e = y - y_m``."""
    y = np.asarray(state.y, dtype=float)
    ym = np.asarray(state.ym, dtype=float)
    if y.shape != ym.shape:
        raise ValueError("plant and reference states have different orders")
    return y - ym


def cost(q, x) -> float:
    """``J = 0.5 (q^T x)^2``."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    if q.shape != x.shape:
        raise ValueError(f"weights and error have different lengths: {q.shape} vs {x.shape}")
    s = float(q @ x)
    return 0.5 * s * s


def auxiliary_signal(ym_n: float, x, betas) -> float:
    """``z = y_m^(n) - beta_{n-1} x_n - ... - beta_0 x_1``."""
    x = np.asarray(x, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if x.shape != betas.shape:
        raise ValueError("error vector and betas have different lengths")
    return float(ym_n - betas @ x)


def perturbed_estimates(a_hat, loops, t: float) -> np.ndarray:
    a_hat = np.asarray(a_hat, dtype=float)
    if a_hat.shape != (len(loops),):
        raise ValueError("one loop per estimate is required")
    c = np.array([lp.c for lp in loops])
    w = np.array([lp.omega for lp in loops])
    return a_hat + c * np.sin(w * t)


def regression_vector(y, z: float) -> np.ndarray:
    """``v = [y, y', ..., y^(n-1), z]``."""
    return np.append(np.asarray(y, dtype=float), z)


def control_input(a_breve, v) -> float:
    """``u = a_breve^T v``: ``a_n`` multiplies ``z``, ``a_k`` multiplies ``y^(k)``."""
    a_breve = np.asarray(a_breve, dtype=float)
    v = np.asarray(v, dtype=float)
    if a_breve.shape != v.shape:
        raise ValueError(f"estimate and regression vectors differ in length: {a_breve.shape} vs {v.shape}")
    return float(a_breve @ v)


def demodulation(loops, t: float, J: float) -> np.ndarray:
    """Demodulated cost ``m_i = sin(omega_i t - phi_i) J`` for every loop."""
    w = np.array([lp.omega for lp in loops])
    phi = np.array([lp.phi for lp in loops])
    return np.sin(w * t - phi) * J


def es_loop_output(loop: ESLoop, xi, m, offset=0.0):
    """Estimate produced by the compensator ``-g (d + 1/s)`` acting on ``m``.

    Realised with an integrator state ``xi`` (``xi' = m``) and direct
    feedthrough: ``a_hat = offset - g (d m + xi)``. Works elementwise on arrays.
    """
    return offset - loop.g * (loop.d * m + xi)


def closed_loop_derivs(
    plant: PlantSpec,
    ref: ReferenceModelSpec,
    design: ControllerDesign,
    t: float,
    state,
    r: float,
) -> np.ndarray:
    """Right-hand side of the full closed loop for the flat state vector.

    Returns the time derivative of ``[y..., y_m..., xi...]``.
    """
    n = plant.order
    a = plant.a
    if a[-1] == 0.0:
        raise SingularPlantError("a_n = 0")
    if design.order != n or ref.order != n:
        raise ValueError("plant, reference model and design orders differ")
    state = np.asarray(state, dtype=float)
    y = state[:n]
    ym = state[n : 2 * n]
    xi = state[2 * n :]
    x = y - ym

    ym_n = ref.highest_derivative(ym, r)
    z = float(ym_n - design.betas @ x)
    J = cost(design.q, x)

    w = design.omegas
    m = np.sin(w * t - design.phis) * J
    a_hat = design.a_hat0 - design.g * (design.d * m + xi)
    a_breve = a_hat + design.c * np.sin(w * t)
    u = control_input(a_breve, regression_vector(y, z))

    out = np.empty_like(state)
    out[: n - 1] = y[1:]
    out[n - 1] = (u - a[:-1] @ y) / a[-1]
    out[n : 2 * n - 1] = ym[1:]
    out[2 * n - 1] = ym_n
    out[2 * n :] = m
    return out


def controller_signals(ref: ReferenceModelSpec, design: ControllerDesign, t: float, state, r: float) -> dict:
    """Recorded signals at one sample: error, estimates, dithered estimates, control, cost."""
    n = design.order
    state = np.asarray(state, dtype=float)
    y = state[:n]
    ym = state[n : 2 * n]
    xi = state[2 * n :]
    x = y - ym
    z = auxiliary_signal(ref.highest_derivative(ym, r), x, design.betas)
    J = cost(design.q, x)
    m = demodulation(design.loops, t, J)
    a_hat = design.a_hat0 - design.g * (design.d * m + xi)
    a_breve = perturbed_estimates(a_hat, design.loops, t)
    u = control_input(a_breve, regression_vector(y, z))
    return {"x": x, "a_hat": a_hat, "a_breve": a_breve, "u": u, "J": J, "z": z}


def error_dynamics_matrices(design: ControllerDesign):
    """``(A, b)`` of the error dynamics ``x' = A x + b v^T (S - a_tilde) / a_n``."""
    return design._A, design._b
