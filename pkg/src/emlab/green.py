"""Per-mode Green's functions of the linearized bipolar Euler-Maxwell system.

After the half-sum / half-difference change of variables the linearization
splits, mode by mode, into

* the **half-sum (acoustic) subsystem** for (rho2, u2, Theta2): the
  longitudinal scalars rho2_hat, Theta2_hat and ktilde . u2_hat each solve the
  third-order ODE with characteristic cubic handled by :mod:`emlab.dispersion`,
  so each evolves as  c1 e^{sigma t} + e^{beta t}(c2 cos(omega t) + c3 sin(omega t)),
  while the transverse velocity relaxes exactly as e^{-t};
* the **half-difference (electromagnetic) subsystem** for
  (rho1, u1, Theta1, E, B): an 11-dimensional first-order ODE per mode, solved
  here with a dense matrix exponential.  It conserves the Gauss functional
  (i/2) k . E_hat + rho1_hat and the solenoidal functional k . B_hat exactly.

The coefficients (c1, c2, c3) follow from the mode value and its first two
time derivatives at t = 0 by solving a 3x3 linear system.  That direct solve
is the authoritative computation.  Hand-simplified closed-form coefficient
matrices exist for all three longitudinal channels; they are retained only as
a flagged cross-check (see :func:`coefficient_matrix_comparison`) because
several printed entries are algebraically inconsistent with the direct solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dispersion import RootTriple, root_triple

__all__ = [
    "SumModeIC",
    "SumInitialDerivatives",
    "ModeCoefficients",
    "CoefficientComparison",
    "DiffModeState",
    "sum_ic_derivatives",
    "sum_mode_coefficients",
    "coefficients_via_inverse",
    "closed_form_coefficients",
    "coefficient_matrix_comparison",
    "sum_mode_evolve",
    "sum_mode_ode_residual",
    "sum_perp_evolve",
    "diff_mode_matrix",
    "diff_mode_evolve",
    "expm",
    "sum_coefficient_grid",
    "sum_amplitude_grid",
]


# --------------------------------------------------------------------------
# half-sum (acoustic) subsystem
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SumModeIC:
    """Initial data of one half-sum Fourier mode.

    ``rho0``   - density amplitude rho2_hat(0),
    ``ulong0`` - longitudinal velocity amplitude (ktilde . u2_hat)(0),
    ``theta0`` - temperature amplitude Theta2_hat(0).
    """

    rho0: complex
    ulong0: complex
    theta0: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.rho0, self.ulong0, self.theta0], dtype=complex)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True)
class SumInitialDerivatives:
    """(value, d/dt, d^2/dt^2) at t=0 for each longitudinal channel."""

    rho: np.ndarray
    theta: np.ndarray
    ulong: np.ndarray


def sum_ic_derivatives(kmag: float, ic: SumModeIC) -> SumInitialDerivatives:
    """First and second time derivatives of each channel at t = 0.

    Obtained by substituting the subsystem's equations into themselves once:

    * rho:    d/dt = -i|k| ulong,
              d2/dt2 = -|k|^2 rho0 + i|k| ulong0 - |k|^2 theta0
    * theta:  d/dt = -i|k| ulong - theta,
              d2/dt2 = -|k|^2 rho0 + 2 i|k| ulong0 + (1 - |k|^2) theta0
    * ulong:  d/dt = -i|k| rho - ulong - i|k| theta,
              d2/dt2 = i|k| rho0 + (1 - 2|k|^2) ulong0 + 2 i|k| theta0
    """
    k = float(kmag)
    if k <= 0.0:
        raise ValueError(f"kmag must be > 0, got {kmag!r}")
    v, u, w = complex(ic.rho0), complex(ic.ulong0), complex(ic.theta0)
    k2 = k * k
    ik = 1j * k
    rho = np.array([v, -ik * u, -k2 * v + ik * u - k2 * w])
    theta = np.array([w, -ik * u - w, -k2 * v + 2 * ik * u + (1.0 - k2) * w])
    ulong = np.array([u, -ik * v - u - ik * w, ik * v + (1.0 - 2.0 * k2) * u + 2 * ik * w])
    return SumInitialDerivatives(rho=rho, theta=theta, ulong=ulong)


@dataclass(frozen=True)
class ModeCoefficients:
    """Nine mode coefficients c1..c9 (three per longitudinal channel).

    ``c[0:3]`` drive rho2_hat, ``c[3:6]`` drive Theta2_hat, ``c[6:9]`` drive
    ktilde . u2_hat; within each triple the first multiplies e^{sigma t} and
    the other two the cos/sin parts of the damped oscillation.
    """

    c: np.ndarray
    roots: RootTriple

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        if c.shape != (9,):
            raise ValueError(f"expected nine coefficients, got shape {c.shape}")
        object.__setattr__(self, "c", c)

    @property
    def rho(self) -> np.ndarray:
        return self.c[0:3]

    @property
    def theta(self) -> np.ndarray:
        return self.c[3:6]

    @property
    def ulong(self) -> np.ndarray:
        return self.c[6:9]


def _amplitude_matrix(tr: RootTriple) -> np.ndarray:
    """Map (c1,c2,c3) -> (value, d/dt, d2/dt2) at t=0 for the mode ansatz."""
    s, b, w = tr.sigma, tr.beta, tr.omega
    return np.array(
        [
            [1.0, 1.0, 0.0],
            [s, b, w],
            [s * s, b * b - w * w, 2.0 * b * w],
        ]
    )


def _solve_coefficients(tr: RootTriple, rhs_columns: np.ndarray) -> np.ndarray:
    """Row-equilibrated solve of A c = rhs for one or more right-hand sides."""
    A = _amplitude_matrix(tr)
    scale = 1.0 / np.abs(A).max(axis=1)
    Aeq = (A * scale[:, None]).astype(complex)
    return np.linalg.solve(Aeq, rhs_columns * scale[:, None])


def sum_mode_coefficients(kmag: float, ic: SumModeIC) -> ModeCoefficients:
    """Coefficients c1..c9 via the direct 3x3 solves (the authoritative path).

    For each channel the linear system matches (value, d/dt, d2/dt2) at t=0
    against the ansatz c1 e^{sigma t} + e^{beta t}(c2 cos + c3 sin).  The
    matrix is the same for all channels; only the right-hand sides differ.
    """
    tr = root_triple(kmag)
    d = sum_ic_derivatives(kmag, ic)
    rhs = np.stack([d.rho, d.theta, d.ulong], axis=1)
    sol = _solve_coefficients(tr, rhs)
    return ModeCoefficients(c=np.concatenate([sol[:, 0], sol[:, 1], sol[:, 2]]), roots=tr)


def coefficients_via_inverse(kmag: float, ic: SumModeIC) -> ModeCoefficients:
    """Same coefficients through the explicit inverse of the 3x3 matrix.

    Independent evaluation path used to cross-check the direct solve: the
    inverse of the ansatz matrix is known in closed form,

        det A = omega * (3 sigma^2 + 4 sigma + 1 + 2 |k|^2)

        A^-1 = 1/det A *
          [[ (beta^2+omega^2) omega, -2 beta omega,           omega      ],
           [ sigma(sigma-2beta) omega, 2 beta omega,         -omega      ],
           [ sigma(beta^2-omega^2-sigma beta), omega^2+sigma^2-beta^2, beta-sigma ]]
    """
    tr = root_triple(kmag)
    s, b, w = tr.sigma, tr.beta, tr.omega
    det = w * (3.0 * s * s + 4.0 * s + 1.0 + 2.0 * kmag * kmag)
    inv = (
        np.array(
            [
                [(b * b + w * w) * w, -2.0 * b * w, w],
                [s * (s - 2.0 * b) * w, 2.0 * b * w, -w],
                [s * (b * b - w * w - s * b), w * w + s * s - b * b, b - s],
            ]
        )
        / det
    )
    d = sum_ic_derivatives(kmag, ic)
    rhs = np.stack([d.rho, d.theta, d.ulong], axis=1)
    sol = inv.astype(complex) @ rhs
    return ModeCoefficients(c=np.concatenate([sol[:, 0], sol[:, 1], sol[:, 2]]), roots=tr)


def _closed_form_matrices(kmag: float, tr: RootTriple) -> dict[str, np.ndarray]:
    """The hand-simplified coefficient matrices, transcribed verbatim.

    Each maps the IC vector (rho0, ulong0, theta0) to the channel's (c1,c2,c3)
    after division by (3 sigma^2 + 4 sigma + 1 + 2|k|^2).  Several entries are
    known to be inconsistent with the direct solve (wrong factor in the
    density matrix's (2,1) entry, sign slips elsewhere); they are evaluated
    as printed on purpose so :func:`coefficient_matrix_comparison` can report
    which entries survive the cross-check.
    """
    s, w = tr.sigma, tr.omega
    k = kmag
    k2 = k * k
    ik = 1j * k
    rho = np.array(
        [
            [(s + 1.0) ** 2 + k2, -ik * (s + 1.0), -k2],
            [2.0 * (s + 1.0) + k2, ik * (s + 1.0), k2],
            [
                (s * (s + 1.0) + (1.0 - 0.5 * s) * k2) / w,
                (ik / w) * (1.5 * s * s + 1.5 * s + 2.0 * k2),
                ((1.0 + 1.5 * s) / w) * k2,
            ],
        ],
        dtype=complex,
    )
    theta = np.array(
        [
            [-k2, -ik * (1.0 + s), (1.0 + s) * s + k2],
            [k2, ik * (1.0 + s), (1.0 + 2.0 * s) * (1.0 + s) + k2],
            [
                ((1.5 * s + 1.0) * k2) / w,
                (-ik / w) * (1.5 * s * (s + 2.0) + 1.0 + 2.0 * k2),
                -(k2 + 0.5 * s * (k2 + 1.0 + s)) / w,
            ],
        ],
        dtype=complex,
    )
    ulong = np.array(
        [
            [-ik * (1.0 + s), s * (1.0 + s), -ik * s],
            [ik * (1.0 + s), (1.0 + s) * (1.0 + 2.0 * s) + 2.0 * k2, ik * s],
            [
                (-ik / w) * (1.5 * s * (s + 1.0) - 2.0 * k2),
                -s * (1.0 + s - 2.0 * k2) / (2.0 * w),
                (ik / w) * (-1.5 * s * (s + 2.0) + 2.0 * k2 - 1.0),
            ],
        ],
        dtype=complex,
    )
    return {"rho": rho, "theta": theta, "ulong": ulong}


def closed_form_coefficients(kmag: float, ic: SumModeIC) -> ModeCoefficients:
    """Coefficients from the hand-simplified matrices (cross-check path only).

    Do not use for computation; entries flagged by
    :func:`coefficient_matrix_comparison` disagree with the direct solve.
    """
    tr = root_triple(kmag)
    mats = _closed_form_matrices(kmag, tr)
    denom = 3.0 * tr.sigma**2 + 4.0 * tr.sigma + 1.0 + 2.0 * kmag * kmag
    vec = ic.as_array()
    c = np.concatenate([mats["rho"] @ vec, mats["theta"] @ vec, mats["ulong"] @ vec]) / denom
    return ModeCoefficients(c=c, roots=tr)


@dataclass(frozen=True)
class CoefficientComparison:
    """Entry-wise comparison of the hand-simplified matrices with the direct solve.

    ``direct`` holds the matrices implied by the authoritative solve (columns
    = response to unit rho0 / ulong0 / theta0), ``printed`` the transcribed
    hand-simplified ones, both on the same normalization.  ``agrees`` marks
    entries matching to ``rtol`` relative to the largest entry of the channel.
    """

    kmag: float
    channels: tuple[str, ...]
    printed: dict[str, np.ndarray]
    direct: dict[str, np.ndarray]
    agrees: dict[str, np.ndarray]
    rtol: float


def coefficient_matrix_comparison(kmag: float, rtol: float = 1e-10) -> CoefficientComparison:
    """Compare every entry of the hand-simplified matrices against the direct solve."""
    tr = root_triple(kmag)
    denom = 3.0 * tr.sigma**2 + 4.0 * tr.sigma + 1.0 + 2.0 * kmag * kmag
    printed = _closed_form_matrices(kmag, tr)

    unit_ics = [SumModeIC(1, 0, 0), SumModeIC(0, 1, 0), SumModeIC(0, 0, 1)]
    direct = {name: np.zeros((3, 3), dtype=complex) for name in ("rho", "theta", "ulong")}
    for j, uic in enumerate(unit_ics):
        coeff = sum_mode_coefficients(kmag, uic)
        for name, triple in (("rho", coeff.rho), ("theta", coeff.theta), ("ulong", coeff.ulong)):
            direct[name][:, j] = triple * denom  # same normalization as the printed matrices

    agrees = {}
    for name in direct:
        scale = max(np.abs(direct[name]).max(), np.abs(printed[name]).max())
        agrees[name] = np.abs(printed[name] - direct[name]) <= rtol * scale
    return CoefficientComparison(
        kmag=float(kmag),
        channels=("rho", "theta", "ulong"),
        printed=printed,
        direct=direct,
        agrees=agrees,
        rtol=rtol,
    )


def sum_mode_evolve(kmag: float, ic: SumModeIC, t: float) -> tuple[complex, complex, complex]:
    """Evolve one half-sum mode: returns (rho2, ulong2, theta2) at time t >= 0."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t!r}")
    coeff = sum_mode_coefficients(kmag, ic)
    tr = coeff.roots
    es = np.exp(tr.sigma * t)
    eb = np.exp(tr.beta * t)
    cwt, swt = np.cos(tr.omega * t), np.sin(tr.omega * t)

    def channel(c3: np.ndarray) -> complex:
        return complex(c3[0] * es + eb * (c3[1] * cwt + c3[2] * swt))

    return channel(coeff.rho), channel(coeff.ulong), channel(coeff.theta)


def _pair_derivative(a: complex, b: complex, beta: float, omega: float) -> tuple[complex, complex]:
    # d/dt [e^{bt}(a cos wt + b sin wt)] = e^{bt}((beta a + omega b) cos + (beta b - omega a) sin)
    return beta * a + omega * b, beta * b - omega * a


def sum_mode_ode_residual(kmag: float, ic: SumModeIC, t: float) -> float:
    """Residual of the third-order mode ODE with exact analytic derivatives.

    Evaluates d3/dt3 + 2 d2/dt2 + (1+2|k|^2) d/dt + |k|^2 applied to each
    channel of the evolved mode; analytically zero, so the returned maximum
    magnitude only measures rounding (it grows like |k|^3 from the
    derivative cascade).
    """
    coeff = sum_mode_coefficients(kmag, ic)
    tr = coeff.roots
    k2 = kmag * kmag
    es = np.exp(tr.sigma * t)
    eb = np.exp(tr.beta * t)
    cwt, swt = np.cos(tr.omega * t), np.sin(tr.omega * t)
    worst = 0.0
    for c3 in (coeff.rho, coeff.theta, coeff.ulong):
        a, b = c3[1], c3[2]
        derivs = []
        sa = c3[0]
        for order in range(4):
            derivs.append(sa * es + eb * (a * cwt + b * swt))
            sa = sa * tr.sigma
            a, b = _pair_derivative(a, b, tr.beta, tr.omega)
        resid = derivs[3] + 2.0 * derivs[2] + (1.0 + 2.0 * k2) * derivs[1] + k2 * derivs[0]
        worst = max(worst, abs(resid))
    return worst


def sum_perp_evolve(t: float, uperp0: np.ndarray) -> np.ndarray:
    """Transverse half-sum velocity: pure relaxation, u2_perp(t) = e^{-t} u2_perp(0)."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t!r}")
    return np.exp(-t) * np.asarray(uperp0, dtype=complex)


# --------------------------------------------------------------------------
# vectorized half-sum helpers (used by the decay harness)
# --------------------------------------------------------------------------


def sum_coefficient_grid(
    kmags: np.ndarray, rho0: np.ndarray, ulong0: np.ndarray, theta0: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched coefficients over a wavenumber grid.

    Returns (sigma, beta, omega, C) with C of shape (n, 3, 3): C[i, :, j] is
    the (c1,c2,c3) triple of channel j (order rho, theta, ulong) at kmags[i].
    """
    from .dispersion import solve_real_root_grid

    kmags = np.asarray(kmags, dtype=float)
    sig = solve_real_root_grid(kmags)
    bet = -1.0 - 0.5 * sig
    om = 0.5 * np.sqrt(3.0 * sig * sig + 4.0 * sig + 8.0 * kmags * kmags)

    n = kmags.size
    A = np.zeros((n, 3, 3))
    A[:, 0, 0] = 1.0
    A[:, 0, 1] = 1.0
    A[:, 1, 0] = sig
    A[:, 1, 1] = bet
    A[:, 1, 2] = om
    A[:, 2, 0] = sig * sig
    A[:, 2, 1] = bet * bet - om * om
    A[:, 2, 2] = 2.0 * bet * om
    scale = 1.0 / np.abs(A).max(axis=2)
    A *= scale[:, :, None]

    k2 = kmags * kmags
    ik = 1j * kmags
    v, u, w = (np.asarray(a, dtype=complex) for a in (rho0, ulong0, theta0))
    rhs = np.zeros((n, 3, 3), dtype=complex)
    rhs[:, 0, 0] = v
    rhs[:, 1, 0] = -ik * u
    rhs[:, 2, 0] = -k2 * v + ik * u - k2 * w
    rhs[:, 0, 1] = w
    rhs[:, 1, 1] = -ik * u - w
    rhs[:, 2, 1] = -k2 * v + 2 * ik * u + (1.0 - k2) * w
    rhs[:, 0, 2] = u
    rhs[:, 1, 2] = -ik * v - u - ik * w
    rhs[:, 2, 2] = ik * v + (1.0 - 2.0 * k2) * u + 2 * ik * w
    rhs *= scale[:, :, None]

    C = np.linalg.solve(A.astype(complex), rhs)
    return sig, bet, om, C


def sum_amplitude_grid(
    sig: np.ndarray, bet: np.ndarray, om: np.ndarray, C: np.ndarray, times: np.ndarray
) -> np.ndarray:
    """Evaluate batched mode amplitudes; shape (3, n_k, n_t), channels (rho, theta, ulong)."""
    times = np.asarray(times, dtype=float)
    es = np.exp(sig[:, None] * times[None, :])
    eb = np.exp(bet[:, None] * times[None, :])
    ph = om[:, None] * times[None, :]
    cwt, swt = np.cos(ph), np.sin(ph)
    out = np.empty((3, sig.size, times.size), dtype=complex)
    for j in range(3):
        out[j] = C[:, 0, j, None] * es + eb * (C[:, 1, j, None] * cwt + C[:, 2, j, None] * swt)
    return out


# --------------------------------------------------------------------------
# half-difference (electromagnetic) subsystem
# --------------------------------------------------------------------------

# component layout of the 11-vector: (rho1, u1x, u1y, u1z, Theta1, Ex, Ey, Ez, Bx, By, Bz)
_RHO, _U, _THETA, _E, _B = 0, slice(1, 4), 4, slice(5, 8), slice(8, 11)


def _cross_matrix(k: np.ndarray) -> np.ndarray:
    """Matrix C with C @ v = k x v."""
    kx, ky, kz = k
    return np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])


def _check_wavevector(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.shape != (3,):
        raise ValueError(f"wavevector must have shape (3,), got {k.shape}")
    if not np.isfinite(k).all() or np.linalg.norm(k) == 0.0:
        raise ValueError(f"wavevector must be finite and nonzero, got {k!r}")
    return k


def diff_mode_matrix(k) -> np.ndarray:
    """Fourier symbol of the half-difference subsystem at wavevector k (11x11).

        d/dt rho1   = -i k . u1
        d/dt u1     = -i k rho1 - i k Theta1 - E - u1
        d/dt Theta1 = -i k . u1 - Theta1
        d/dt E      =  i k x B + 2 u1
        d/dt B      = -i k x E

    Left null functionals (conserved exactly): (i/2) k . E + rho1 and k . B.
    """
    k = _check_wavevector(k)
    M = np.zeros((11, 11), dtype=complex)
    ik = 1j * k
    M[_RHO, _U] = -ik
    M[_U, _RHO] = -ik
    M[_U, _THETA] = -ik
    M[_U, _U] = -np.eye(3)
    M[_U, _E] = -np.eye(3)
    M[_THETA, _U] = -ik
    M[_THETA, _THETA] = -1.0
    cross = _cross_matrix(k)
    M[_E, _B] = 1j * cross
    M[_E, _U] = 2.0 * np.eye(3)
    M[_B, _E] = -1j * cross
    return M


@dataclass
class DiffModeState:
    """One Fourier mode of the half-difference subsystem."""

    rho1: complex
    u1: np.ndarray
    theta1: complex
    Ehat: np.ndarray
    Bhat: np.ndarray

    def __post_init__(self):
        for name in ("u1", "Ehat", "Bhat"):
            v = np.asarray(getattr(self, name), dtype=complex)
            if v.shape != (3,):
                raise ValueError(f"{name} must have shape (3,), got {v.shape}")
            setattr(self, name, v)
        self.rho1 = complex(self.rho1)
        self.theta1 = complex(self.theta1)

    def to_vector(self) -> np.ndarray:
        vec = np.empty(11, dtype=complex)
        vec[_RHO] = self.rho1
        vec[_U] = self.u1
        vec[_THETA] = self.theta1
        vec[_E] = self.Ehat
        vec[_B] = self.Bhat
        return vec

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "DiffModeState":
        vec = np.asarray(vec, dtype=complex)
        if vec.shape != (11,):
            raise ValueError(f"expected an 11-vector, got shape {vec.shape}")
        return cls(
            rho1=vec[_RHO], u1=vec[_U].copy(), theta1=vec[_THETA], Ehat=vec[_E].copy(), Bhat=vec[_B].copy()
        )

    def norm(self) -> float:
        return float(np.linalg.norm(self.to_vector()))

    def constraint_residuals(self, k) -> tuple[float, float]:
        """(|Gauss functional|, |k . B|) for this mode at wavevector k."""
        k = _check_wavevector(k)
        gauss = 0.5j * np.dot(k, self.Ehat) + self.rho1
        sol = np.dot(k, self.Bhat)
        return abs(gauss), abs(sol)


def expm(M: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Matrix exponential exp(M t) by scaling-and-squaring (scipy kernel).

    Validates that inputs and outputs are finite; a non-finite result raises
    with the offending norm so runaway modes are diagnosed instead of
    propagating NaNs.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise ValueError("matrix has non-finite entries")
    out = scipy.linalg.expm(M * t)
    if not np.isfinite(out).all():
        raise FloatingPointError(
            f"matrix exponential overflowed: ||M t||_1 = {np.abs(M * t).sum(axis=0).max():g}"
        )
    return out


def diff_mode_evolve(k, ic: DiffModeState, t: float) -> DiffModeState:
    """Evolve one half-difference mode to time t >= 0 via the matrix exponential.

    The initial mode must satisfy both constraints (Gauss and solenoidal) to
    1e-10 relative; they are then conserved along the flow to rounding error.
    """
    k = _check_wavevector(k)
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t!r}")
    gauss, sol = ic.constraint_residuals(k)
    scale = max(1.0, ic.norm()) * max(1.0, float(np.linalg.norm(k)))
    if gauss > 1e-10 * scale or sol > 1e-10 * scale:
        raise ValueError(
            f"initial mode violates constraints: |Gauss|={gauss:g}, |k.B|={sol:g} "
            f"(allowed 1e-10 * {scale:g})"
        )
    P = expm(diff_mode_matrix(k), t)
    return DiffModeState.from_vector(P @ ic.to_vector())
