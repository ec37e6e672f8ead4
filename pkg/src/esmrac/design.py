"""Design-condition checks and gain synthesis for ES-MRAC controllers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controller import ControllerDesign, ESLoop
from .lti import LYAPUNOV_TOL, LyapunovError, beta_polynomial, companion_matrix, hurwitz_check, solve_lyapunov

PASS, WARN, FAIL, INFO = "pass", "warn", "fail", "info"

OMEGA_BASE_PASS = 10.0
D_OMEGA_BAND = (0.1, 10.0)
EIGEN_PASS_TOL = 1e-6
EIGEN_WARN_TOL = 0.5


class InfeasibleDesignError(ValueError):
    pass


@dataclass(frozen=True)
class Verdict:
    status: str
    value: object
    detail: str = ""


@dataclass(frozen=True, eq=False)
class DesignCertificate:
    P: np.ndarray | None
    kappa: float | None
    verdicts: dict
    eigen_products: np.ndarray | None = None
    eigen_residuals: np.ndarray | None = None
    loop_grades: tuple = field(default=())

    @property
    def ok(self) -> bool:
        """True when no condition failed; warnings are allowed."""
        return all(v.status != FAIL for v in self.verdicts.values())

    @property
    def warnings(self) -> list[str]:
        return [name for name, v in self.verdicts.items() if v.status == WARN]

    def as_dict(self) -> dict:
        """Flat key-value view (used by the CLI's machine-readable report)."""
        out = {"ok": self.ok, "kappa": self.kappa}
        if self.P is not None:
            out["P"] = self.P.tolist()
        for name, v in self.verdicts.items():
            out[f"{name}.status"] = v.status
            out[f"{name}.value"] = v.value.tolist() if isinstance(v.value, np.ndarray) else v.value
        if self.eigen_products is not None:
            out["eigencondition.products"] = self.eigen_products.tolist()
            out["eigencondition.residuals"] = self.eigen_residuals.tolist()
            out["eigencondition.loop_grades"] = list(self.loop_grades)
        return out

    def report(self) -> str:
        lines = ["ES-MRAC design certificate", f"  overall: {'OK' if self.ok else 'FAILED'}"]
        if self.kappa is not None:
            lines.append(f"  kappa = {self.kappa:.12g}")
        if self.P is not None:
            lines.append("  P = " + np.array2string(self.P, precision=12, separator=", ").replace("\n", "\n      "))
        for name, v in self.verdicts.items():
            lines.append(f"  [{v.status.upper():4}] {name}: {_fmt(v.value)}" + (f"  ({v.detail})" if v.detail else ""))
        if self.eigen_products is not None:
            for i, (p, r, g) in enumerate(zip(self.eigen_products, self.eigen_residuals, self.loop_grades)):
                lines.append(f"         loop {i}: product={p:.12g} rel.residual={r:.6g} [{g}]")
        return "\n".join(lines)


def _fmt(value) -> str:
    if isinstance(value, np.ndarray):
        return np.array2string(value, precision=6, separator=", ")
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def projection_kappa(P, q, b) -> float:
    """Coefficient of the projection of ``P^T b`` onto ``q``: ``b^T P q / q^T q``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=float)
    if P.shape != (q.size, q.size) or b.shape != q.shape:
        raise ValueError("P, q and b have inconsistent dimensions")
    qq = float(q @ q)
    if qq == 0.0:
        raise ValueError("q must be nonzero")
    return float(b @ P @ q) / qq


def _grade(residual: float) -> str:
    if residual < EIGEN_PASS_TOL:
        return PASS
    if residual < EIGEN_WARN_TOL:
        return WARN
    return FAIL


def eigencondition_products(design: ControllerDesign) -> np.ndarray:
    """Eigenvalues of ``q_n Gamma C``; for diagonal Gamma these are the
    per-loop products ``q_n g_i d_i c_i cos(phi_i) gamma_i`` in loop order."""
    cdiag = design.g * design.d * design.c * np.cos(design.phis)
    gamma = design.gamma
    if np.count_nonzero(gamma - np.diag(np.diag(gamma))) == 0:
        return design.q[-1] * cdiag * np.diag(gamma)
    eig = np.linalg.eigvals(design.q[-1] * gamma @ np.diag(cdiag))
    return np.sort(eig.real)


def validate_design(design: ControllerDesign) -> DesignCertificate:
    """Check a design against the averaging and Lyapunov design conditions.

    Order-of-magnitude conditions are mapped to bands: the base frequency
    should be at least 10, each ``d_i omega_i`` within [0.1, 10]. Gain
    magnitudes are reported for information only. An eigencondition mismatch
    is a warning; an unsolvable Lyapunov equation is a failure.
    """
    verdicts = {}
    wb = design.omega_base
    if wb <= 0:
        verdicts["omega_large"] = Verdict(FAIL, wb, "base frequency must be positive")
    elif wb < OMEGA_BASE_PASS:
        verdicts["omega_large"] = Verdict(WARN, wb, f"base frequency below {OMEGA_BASE_PASS:g}")
    else:
        verdicts["omega_large"] = Verdict(PASS, wb)

    dw = design.d * design.omegas
    lo, hi = D_OMEGA_BAND
    inside = (dw >= lo) & (dw <= hi)
    verdicts["d_omega_order"] = Verdict(
        PASS if inside.all() else WARN, dw, "" if inside.all() else f"d_i*omega_i outside [{lo:g}, {hi:g}]"
    )
    verdicts["g_order"] = Verdict(INFO, design.g.copy(), "gain magnitudes, informational")

    A, b = companion_matrix(design.betas)
    if not hurwitz_check(beta_polynomial(design.betas)):
        verdicts["lyapunov_residual"] = Verdict(FAIL, math.inf, "beta polynomial is not Hurwitz")
        verdicts["eigencondition"] = Verdict(FAIL, None, "no Lyapunov solution")
        return DesignCertificate(None, None, verdicts)
    try:
        P = solve_lyapunov(A, design.Q)
    except LyapunovError as exc:
        verdicts["lyapunov_residual"] = Verdict(FAIL, math.inf, str(exc))
        verdicts["eigencondition"] = Verdict(FAIL, None, "no Lyapunov solution")
        return DesignCertificate(None, None, verdicts)
    resid = float(np.linalg.norm(P @ A + A.T @ P + design.Q, "fro"))
    verdicts["lyapunov_residual"] = Verdict(PASS if resid < LYAPUNOV_TOL else FAIL, resid)

    kappa = projection_kappa(P, design.q, b)
    products = eigencondition_products(design)
    if kappa == 0.0:
        residuals = np.full(products.shape, math.inf)
    else:
        residuals = np.abs(products - kappa) / abs(kappa)
    grades = tuple(_grade(r) for r in residuals)
    if all(g == PASS for g in grades):
        verdicts["eigencondition"] = Verdict(PASS, products)
    else:
        verdicts["eigencondition"] = Verdict(
            WARN, products, f"products differ from kappa={kappa:.6g} (max rel. residual {residuals.max():.3g})"
        )
    return DesignCertificate(P, kappa, verdicts, products, residuals, grades)


def tune_gains(betas, q, Q, omegas, amplitudes, gammas, a_hat0=None) -> ControllerDesign:
    """Synthesise a design that meets the eigencondition exactly.

    ``d_i = 1/omega_i``, ``phi_i = 0`` and ``g_i = kappa / (q_n d_i c_i gamma_i)``
    with ``Gamma = diag(gammas)``.
    """
    betas = np.asarray(betas, dtype=float)
    q = np.asarray(q, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    c = np.asarray(amplitudes, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    n = betas.size
    if not (omegas.shape == c.shape == gammas.shape == (n + 1,)):
        raise ValueError(f"omegas, amplitudes and gammas need length {n + 1}")
    if np.any(c <= 0) or np.any(gammas <= 0):
        raise ValueError("amplitudes and gammas must be positive")
    if q.shape != (n,) or q[-1] == 0.0:
        raise ValueError("q must have length n with q_n != 0")
    if not hurwitz_check(beta_polynomial(betas)):
        raise InfeasibleDesignError("beta polynomial is not Hurwitz")

    A, b = companion_matrix(betas)
    P = solve_lyapunov(A, Q)
    kappa = projection_kappa(P, q, b)
    if kappa / q[-1] <= 0:
        raise InfeasibleDesignError(f"kappa={kappa:.6g} with q_n={q[-1]:.6g} would need non-positive gains")
    d = 1.0 / omegas
    g = kappa / (q[-1] * d * c * gammas)
    loops = [ESLoop(c=ci, omega=wi, phi=0.0, g=gi, d=di) for ci, wi, gi, di in zip(c, omegas, g, d)]
    return ControllerDesign(betas, q, loops, a_hat0=a_hat0, gamma=np.diag(gammas), Q=Q)
