"""Fixed-step simulation of the full and averaged ES-MRAC loops."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .averaging import BasicESConfig, averaged_derivs, averaged_regression, basic_es_derivs, lyapunov_value
from .controller import (
    ControllerDesign,
    PlantSpec,
    closed_loop_derivs,
    controller_signals,
    cost,
)
from .design import validate_design
from .lti import ReferenceModelSpec

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
SAMPLES_PER_DITHER_PERIOD = 50


class DivergenceError(RuntimeError):
    def __init__(self, t: float, message: str = ""):
        self.t = t
        super().__init__(f"simulation diverged at t={t:.6g}" + (f": {message}" if message else ""))


class SimConfigError(ValueError):
    pass


class DesignValidationError(SimConfigError):
    """The controller design has at least one failing validation verdict."""


@dataclass(frozen=True)
class Step:
    amplitude: float = 1.0

    def __call__(self, t: float) -> float:
        return self.amplitude


@dataclass(frozen=True)
class Sine:
    amplitude: float = 1.0
    frequency: float = 1.0
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        return self.amplitude * math.sin(self.frequency * t + self.phase)


@dataclass(frozen=True)
class SimConfig:
    h: float
    t_end: float
    stride: int = 1
    integrator: str = "rk4"

    def __post_init__(self):
        if not self.h > 0:
            raise SimConfigError("step size h must be positive")
        if not self.t_end > 0:
            raise SimConfigError("horizon t_end must be positive")
        if int(self.stride) != self.stride or self.stride < 1:
            raise SimConfigError("stride must be a positive integer")
        if self.integrator != "rk4":
            raise SimConfigError(f"unknown integrator {self.integrator!r}; only 'rk4' is available")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.h - 1e-9))

    @staticmethod
    def max_step(omegas) -> float:
        """Largest step giving 50 samples per period of the fastest dither."""
        return 2.0 * math.pi / (SAMPLES_PER_DITHER_PERIOD * float(np.max(omegas)))

    @classmethod
    def auto_step(cls, omegas, t_end: float) -> float:
        """Largest admissible step that divides ``t_end`` into a whole number of steps."""
        return t_end / math.ceil(t_end / cls.max_step(omegas) - 1e-9)

    @classmethod
    def for_design(cls, design: ControllerDesign, t_end: float, stride: int = 1) -> "SimConfig":
        return cls(h=cls.auto_step(design.omegas, t_end), t_end=t_end, stride=stride)


def _readonly(arr):
    arr = np.asarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled simulation record. Arrays are read-only."""

    t: np.ndarray
    y: np.ndarray
    ym: np.ndarray
    x: np.ndarray
    a_hat: np.ndarray
    a_breve: np.ndarray
    u: np.ndarray
    J: np.ndarray
    a_tilde: np.ndarray | None = None
    V: np.ndarray | None = None
    final_state: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                object.__setattr__(self, f.name, _readonly(value))
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("trajectory time column must be strictly increasing")

    def __len__(self) -> int:
        return self.t.size

    @property
    def order(self) -> int:
        return self.y.shape[1]

    def with_lyapunov(self, V) -> "Trajectory":
        kwargs = {f.name: getattr(self, f.name) for f in fields(self)}
        kwargs["V"] = V
        return Trajectory(**kwargs)

    def columns(self) -> tuple[list[str], np.ndarray]:
        n = self.order
        names = ["t"]
        names += [_deriv_name("y", k) for k in range(n)]
        names += [_deriv_name("ym", k) for k in range(n)]
        names += [_deriv_name("e", k) for k in range(n)]
        names += [f"a_hat_{i}" for i in range(n + 1)]
        names += ["u", "J"]
        blocks = [self.t[:, None], self.y, self.ym, self.x, self.a_hat, self.u[:, None], self.J[:, None]]
        if self.V is not None:
            names.append("V")
            blocks.append(self.V[:, None])
        return names, np.hstack(blocks)

    def to_csv(self, path) -> None:
        names, data = self.columns()
        write_csv(path, names, data)


def _deriv_name(base: str, k: int) -> str:
    if k == 0:
        return base
    if k == 1:
        return base + "dot"
    return f"{base}_d{k}"


def write_csv(path, header, data) -> None:
    """UTF-8 CSV with full round-trip precision (``repr`` of each float)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in np.asarray(data, dtype=float):
            writer.writerow([repr(float(v)) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in row] for row in rows[1:]])


def rk4_step(derivs, state, t: float, h: float):
    """One classical Runge-Kutta step of ``state' = derivs(t, state)``."""
    if not h > 0:
        raise SimConfigError("h must be positive")
    k1 = np.asarray(derivs(t, state), dtype=float)
    k2 = np.asarray(derivs(t + 0.5 * h, state + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(derivs(t + 0.5 * h, state + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(derivs(t + h, state + h * k3), dtype=float)
    incr = k1 + 2.0 * k2 + 2.0 * k3 + k4
    if not np.all(np.isfinite(incr)):
        raise DivergenceError(t, "non-finite derivative")
    return state + (h / 6.0) * incr


def _check_step(simcfg: SimConfig, design: ControllerDesign) -> None:
    h_max = SimConfig.max_step(design.omegas)
    if simcfg.h > h_max * (1 + 1e-12):
        raise SimConfigError(f"step h={simcfg.h:.6g} exceeds dither resolution limit {h_max:.6g}")


def _check_orders(plant, ref, design):
    if not plant.order == ref.order == design.order:
        raise SimConfigError(
            f"orders differ: plant {plant.order}, reference model {ref.order}, design {design.order}"
        )


def _initial_vectors(n, y0, ym0):
    y0 = np.zeros(n) if y0 is None else np.asarray(y0, dtype=float)
    ym0 = np.zeros(n) if ym0 is None else np.asarray(ym0, dtype=float)
    if y0.shape != (n,) or ym0.shape != (n,):
        raise SimConfigError(f"initial conditions must have length {n}")
    return y0, ym0


def _integrate(f, state, simcfg: SimConfig, record):
    h = simcfg.h
    t = 0.0
    record(0, t, state)
    for k in range(1, simcfg.n_steps + 1):
        state = rk4_step(f, state, t, h)
        t = k * h
        if np.max(np.abs(state)) > DIVERGENCE_LIMIT:
            raise DivergenceError(t, f"|state| exceeded {DIVERGENCE_LIMIT:g}")
        if k % simcfg.stride == 0:
            record(k, t, state)
    return state


def run_closed_loop(
    plant: PlantSpec,
    ref: ReferenceModelSpec,
    design: ControllerDesign,
    simcfg: SimConfig,
    r=Step(),
    y0=None,
    ym0=None,
    check_design: bool = True,
) -> Trajectory:
    """Integrate the full ES-MRAC closed loop with fixed-step RK4."""
    _check_orders(plant, ref, design)
    _check_step(simcfg, design)
    if check_design:
        cert = validate_design(design)
        if not cert.ok:
            failed = [k for k, v in cert.verdicts.items() if v.status == "fail"]
            raise DesignValidationError(f"design fails validation: {', '.join(failed)}")
        for name in cert.warnings:
            log.warning("design warning: %s (%s)", name, cert.verdicts[name].detail)

    n = plant.order
    y0, ym0 = _initial_vectors(n, y0, ym0)
    state = np.concatenate([y0, ym0, np.zeros(n + 1)])

    def f(t, s):
        return closed_loop_derivs(plant, ref, design, t, s, r(t))

    rec = {k: [] for k in ("t", "y", "ym", "x", "a_hat", "a_breve", "u", "J")}

    def record(k, t, s):
        sig = controller_signals(ref, design, t, s, r(t))
        rec["t"].append(t)
        rec["y"].append(s[:n].copy())
        rec["ym"].append(s[n : 2 * n].copy())
        for key in ("x", "a_hat", "a_breve", "u", "J"):
            rec[key].append(sig[key])

    final = _integrate(f, state, simcfg, record)
    return Trajectory(**{k: np.array(v) for k, v in rec.items()}, final_state=final)


def run_averaged(
    plant: PlantSpec,
    ref: ReferenceModelSpec,
    design: ControllerDesign,
    simcfg: SimConfig,
    r=Step(),
    y0=None,
    ym0=None,
    check_design: bool = True,
) -> Trajectory:
    """Integrate the averaged error / parameter-error system.

    Starts from ``x(0) = y0 - ym0`` and ``a_tilde(0) = a - a_hat(0)``. The
    recorded ``a_breve`` equals ``a_hat`` (no dither) and ``u`` is
    ``a_hat^T v_av``.
    """
    _check_orders(plant, ref, design)
    _check_step(simcfg, design)
    if check_design:
        cert = validate_design(design)
        if not cert.ok:
            failed = [k for k, v in cert.verdicts.items() if v.status == "fail"]
            raise DesignValidationError(f"design fails validation: {', '.join(failed)}")

    n = plant.order
    a = plant.a
    y0, ym0 = _initial_vectors(n, y0, ym0)
    state = np.concatenate([y0 - ym0, a - design.a_hat0, ym0])

    def f(t, s):
        return averaged_derivs(plant, ref, design, t, s, r(t))

    rec = {k: [] for k in ("t", "y", "ym", "x", "a_hat", "u", "J", "a_tilde")}

    def record(k, t, s):
        x = s[:n]
        a_tilde = s[n : 2 * n + 1]
        ym = s[2 * n + 1 :]
        a_hat = a - a_tilde
        v = averaged_regression(ref, design, x, ym, r(t))
        rec["t"].append(t)
        rec["y"].append(x + ym)
        rec["ym"].append(ym.copy())
        rec["x"].append(x.copy())
        rec["a_hat"].append(a_hat)
        rec["a_tilde"].append(a_tilde.copy())
        rec["u"].append(float(a_hat @ v))
        rec["J"].append(cost(design.q, x))

    final = _integrate(f, state, simcfg, record)
    data = {k: np.array(v) for k, v in rec.items()}
    return Trajectory(a_breve=data["a_hat"], final_state=final, **data)


def lyapunov_monitor(traj: Trajectory, P, gamma) -> np.ndarray:
    """``V(t) = x^T P x + 2 a_tilde^T Gamma a_tilde`` for every record of an averaged run."""
    if traj.a_tilde is None:
        raise ValueError("trajectory carries no parameter errors; use an averaged run")
    P = np.atleast_2d(np.asarray(P, dtype=float))
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    n = traj.x.shape[1]
    if P.shape != (n, n) or gamma.shape != (n + 1, n + 1):
        raise ValueError("P or Gamma does not match the trajectory dimensions")
    return np.array([lyapunov_value(x, at, P, gamma) for x, at in zip(traj.x, traj.a_tilde)])


@dataclass(frozen=True, eq=False)
class ESRun:
    t: np.ndarray
    theta_hat: np.ndarray
    theta: np.ndarray
    y: np.ndarray

    def to_csv(self, path, f_star: float) -> None:
        data = np.column_stack([self.t, self.theta_hat, self.theta, self.y, self.y - f_star])
        write_csv(path, ["t", "theta_hat", "theta", "y", "y_minus_fstar"], data)


def run_basic_es(config: BasicESConfig, t_end: float, h: float | None = None, stride: int = 1) -> ESRun:
    """Simulate the perturbation / demodulation / integrator loop on a static map."""
    if h is None:
        h = 2.0 * math.pi / (SAMPLES_PER_DITHER_PERIOD * config.omega)
    simcfg = SimConfig(h=h, t_end=t_end, stride=stride)

    def f(t, s):
        return np.array([basic_es_derivs(config, s[0], t)])

    ts, th = [], []

    def record(k, t, s):
        ts.append(t)
        th.append(s[0])

    _integrate(f, np.array([float(config.theta0)]), simcfg, record)
    t = np.array(ts)
    theta_hat = np.array(th)
    theta = theta_hat + config.a * np.sin(config.omega * t)
    y = np.array([float(config.f(v)) for v in theta])
    return ESRun(t, theta_hat, theta, y)
