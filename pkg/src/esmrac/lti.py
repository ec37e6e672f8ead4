"""Small dense LTI primitives: Hurwitz tests, companion matrices, Lyapunov solves.

Everything here is sized for the low-order plants this package targets
(n <= 10), so the routines favour exact, direct formulations over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LYAPUNOV_TOL = 1e-9


class InvalidPolynomialError(ValueError):
    pass


class LyapunovError(ValueError):
    """Raised when the continuous Lyapunov equation has no usable solution."""


def _as_coeffs(coeffs) -> np.ndarray:
    p = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if p.ndim != 1 or p.size < 2:
        raise InvalidPolynomialError("polynomial must have degree >= 1")
    if p[0] == 0.0:
        raise InvalidPolynomialError("leading coefficient must be nonzero")
    return p


def routh_array(coeffs) -> np.ndarray:
    """Build the Routh array for a polynomial given highest degree first.

    Rows that hit a zero pivot are left as computed (zeros, or ``inf``/``nan``
    further down); :func:`hurwitz_check` rejects those cases outright.
    """
    p = _as_coeffs(coeffs)
    n = p.size - 1
    width = n // 2 + 1
    table = np.zeros((n + 1, width))
    table[0, : len(p[0::2])] = p[0::2]
    table[1, : len(p[1::2])] = p[1::2]
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(2, n + 1):
            pivot = table[i - 1, 0]
            for j in range(width - 1):
                table[i, j] = (pivot * table[i - 2, j + 1] - table[i - 2, 0] * table[i - 1, j + 1]) / pivot
    return table


def hurwitz_check(coeffs) -> bool:
    """Return True iff every root of the polynomial has a strictly negative real part.

    Uses the Routh array. A zero pivot anywhere in the first column means a
    marginal or unstable case and returns False; there is no epsilon
    continuation.
    """
    p = _as_coeffs(coeffs)
    if p[0] < 0:
        p = -p
    first = routh_array(p)[:, 0]
    if not np.all(np.isfinite(first)):
        return False
    return bool(np.all(first > 0.0))


def companion_matrix(betas) -> tuple[np.ndarray, np.ndarray]:
    """Companion pair ``(A, b)`` for ``p^n + beta_{n-1} p^{n-1} + ... + beta_0``.

    ``betas`` is ordered ``[beta_0, ..., beta_{n-1}]``. ``A`` has ones on the
    superdiagonal and ``-betas`` on its last row; ``b`` is the last unit vector.
    """
    beta = np.atleast_1d(np.asarray(betas, dtype=float))
    if beta.ndim != 1 or beta.size == 0:
        raise ValueError("betas must be a non-empty vector")
    n = beta.size
    A = np.eye(n, k=1)
    A[-1, :] = -beta
    b = np.zeros(n)
    b[-1] = 1.0
    return A, b


def beta_polynomial(betas) -> np.ndarray:
    """Monic polynomial coefficients (highest degree first) for a beta vector."""
    beta = np.asarray(betas, dtype=float)
    return np.concatenate([[1.0], beta[::-1]])


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve ``P A + A^T P = -Q`` for symmetric ``P``.

    The equation is vectorised with Kronecker products and solved densely.
    ``A`` must be Hurwitz and ``Q`` symmetric; the returned ``P`` is
    symmetrised and checked against the residual tolerance.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError(f"A and Q must be square and the same size, got {A.shape} and {Q.shape}")
    if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12):
        raise ValueError("Q must be symmetric")
    if np.any(np.linalg.eigvals(A).real >= 0):
        raise LyapunovError("A is not Hurwitz; the Lyapunov equation has no positive definite solution")

    # vec(P A) = (A^T kron I) vec(P), vec(A^T P) = (I kron A^T) vec(P), column-major vec
    eye = np.eye(n)
    K = np.kron(A.T, eye) + np.kron(eye, A.T)
    try:
        vec_p = np.linalg.solve(K, -Q.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise LyapunovError("singular Lyapunov operator") from exc
    P = vec_p.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    resid = lyapunov_residual(P, A, Q)
    if not resid < LYAPUNOV_TOL:
        raise LyapunovError(f"Lyapunov residual {resid:.3e} exceeds {LYAPUNOV_TOL:g}")
    return P


def lyapunov_residual(P, A, Q) -> float:
    """Frobenius norm of ``P A + A^T P + Q``."""
    P = np.asarray(P, dtype=float)
    A = np.asarray(A, dtype=float)
    return float(np.linalg.norm(P @ A + A.T @ P + np.asarray(Q, dtype=float), "fro"))


def is_positive_definite(M) -> bool:
    M = np.asarray(M, dtype=float)
    minors = [np.linalg.det(M[:k, :k]) for k in range(1, M.shape[0] + 1)]
    return all(m > 0 for m in minors)


@dataclass(frozen=True)
class ReferenceModelSpec:
    """Reference model ``a_mn y_m^(n) + ... + a_m0 y_m = r``.

    ``coeffs`` is ordered ``[a_m0, ..., a_mn]`` (lowest degree first, matching
    the plant convention). The associated polynomial must be Hurwitz.
    """

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) < 2:
            raise ValueError("reference model needs order >= 1")
        if c[-1] == 0.0:
            raise ValueError("leading reference coefficient a_mn must be nonzero")
        if not hurwitz_check(c[::-1]):
            raise ValueError(f"reference model polynomial {c[::-1]} is not Hurwitz")
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    def highest_derivative(self, state, r: float) -> float:
        """``y_m^(n)`` from the lower derivatives and the reference value."""
        a = self.a
        return (r - float(np.dot(a[:-1], state))) / a[-1]


def reference_model_derivs(spec: ReferenceModelSpec, state, r: float) -> np.ndarray:
    """Time derivative ``[y_m', ..., y_m^(n)]`` of the reference-model state."""
    state = np.asarray(state, dtype=float)
    if state.shape != (spec.order,):
        raise ValueError(f"reference state must have length {spec.order}")
    out = np.empty(spec.order)
    out[:-1] = state[1:]
    out[-1] = spec.highest_derivative(state, r)
    return out
