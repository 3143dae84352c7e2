"""Dispersion analysis for the acoustic part of the bipolar Euler-Maxwell system.

Every Fourier mode of the half-sum (acoustic) subsystem reduces to a third-order
scalar ODE whose characteristic cubic is

    F(X) = X^3 + 2 X^2 + (1 + 2 |k|^2) X + |k|^2.

For every wavenumber magnitude |k| > 0 the cubic has exactly one real root
sigma(|k|) in (-1/2, 0) and a complex-conjugate pair beta +/- i omega with
beta = -1 - sigma/2 and omega = sqrt(3 sigma^2 + 4 sigma + 8 |k|^2) / 2.
sigma is the slow, diffusive rate that controls algebraic decay of the
half-sum fields; the pair carries the damped oscillation.

This module locates sigma by bracketed bisection refined with safeguarded
Newton steps and assembles the full root triple.  Useful facts, all verified
by the test suite:

* F(0) = |k|^2 > 0 and F(-1/2) = -1/8 for every |k|, which pins the bracket;
* sigma(|k|) is strictly decreasing, sigma ~ -|k|^2 as |k| -> 0 and
  sigma + 1/2 ~ 1/(16 |k|^2) as |k| -> infinity;
* d sigma / d|k| = -|k| (2 + 4 sigma) / (3 sigma^2 + 4 sigma + 1 + 2 |k|^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RootSolveError",
    "RootTriple",
    "charpoly",
    "solve_real_root",
    "solve_real_root_grid",
    "real_root_derivative",
    "root_triple",
]

#: |F(x)| convergence threshold (scaled by max(1, |k|^2)) for the root solver.
_FTOL = 1e-14
#: bracket-width convergence threshold for the root solver.
_XTOL = 1e-15
_MAX_ITER = 200


class RootSolveError(RuntimeError):
    """Root solve failed to converge; carries the wavenumber and last bracket."""

    def __init__(self, kmag: float, bracket: tuple[float, float], detail: str):
        self.kmag = kmag
        self.bracket = bracket
        super().__init__(
            f"characteristic root solve failed at kmag={kmag!r}: {detail} "
            f"(last bracket {bracket!r})"
        )


def _check_kmag(kmag: float) -> float:
    kmag = float(kmag)
    if not np.isfinite(kmag) or kmag <= 0.0:
        raise ValueError(f"wavenumber magnitude must be finite and > 0, got {kmag!r}")
    return kmag


def charpoly(kmag: float, x):
    """Evaluate the characteristic cubic F(x) = x^3 + 2x^2 + (1+2|k|^2)x + |k|^2.

    ``x`` may be real or complex, scalar or array; ``kmag`` must be > 0.
    """
    kmag = _check_kmag(kmag)
    k2 = kmag * kmag
    # Horner form keeps the evaluation well conditioned near the real root.
    return ((x + 2.0) * x + (1.0 + 2.0 * k2)) * x + k2


def _charpoly_deriv(kmag: float, x: float) -> float:
    k2 = kmag * kmag
    return (3.0 * x + 4.0) * x + 1.0 + 2.0 * k2


def solve_real_root(kmag: float) -> float:
    """Return the unique real root sigma(|k|) in (-1/2, 0) of the cubic.

    Bracketed bisection (the bracket endpoints have fixed signs:
    F(-1/2) = -1/8, F(0) = |k|^2) refined with Newton steps that are
    accepted only while they stay inside the current bracket.  Raises
    :class:`RootSolveError` if the tolerances are not reached within the
    iteration limit; the same inputs always produce bit-identical output.
    """
    kmag = _check_kmag(kmag)
    k2 = kmag * kmag
    ftol = _FTOL * max(1.0, k2)

    lo, hi = -0.5, 0.0  # F(lo) = -1/8 < 0 < F(hi) = k^2
    x = -0.5 * k2 / (0.5 + k2)  # secant through the bracket endpoints
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)
    for _ in range(_MAX_ITER):
        f = charpoly(kmag, x)
        if abs(f) < ftol:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        if hi - lo < _XTOL:
            return 0.5 * (lo + hi)
        fp = _charpoly_deriv(kmag, x)
        step_ok = False
        if fp != 0.0:
            xn = x - f / fp
            if lo < xn < hi:
                x = xn
                step_ok = True
        if not step_ok:
            x = 0.5 * (lo + hi)
    raise RootSolveError(kmag, (lo, hi), f"no convergence after {_MAX_ITER} iterations")


def solve_real_root_grid(kmags: np.ndarray) -> np.ndarray:
    """Vectorized :func:`solve_real_root` over an array of wavenumber magnitudes."""
    kmags = np.asarray(kmags, dtype=float)
    out = np.empty(kmags.shape, dtype=float)
    flat = kmags.ravel()
    res = out.ravel()
    for i, k in enumerate(flat):
        res[i] = solve_real_root(k)
    return out


def real_root_derivative(kmag: float) -> float:
    """d sigma / d|k| by implicit differentiation of F(sigma(|k|)) = 0; always < 0."""
    kmag = _check_kmag(kmag)
    sigma = solve_real_root(kmag)
    return -kmag * (2.0 + 4.0 * sigma) / _charpoly_deriv(kmag, sigma)


@dataclass(frozen=True)
class RootTriple:
    """Roots of the characteristic cubic at one wavenumber magnitude.

    ``sigma`` is the real root in (-1/2, 0); the complex pair is
    ``beta +/- i omega`` with beta in (-1, -3/4) and omega > 0.
    """

    sigma: float
    beta: float
    omega: float

    def __post_init__(self):
        if not (-0.5 < self.sigma < 0.0):
            raise ValueError(f"sigma={self.sigma!r} outside (-1/2, 0)")
        if not (-1.0 < self.beta < -0.75):
            raise ValueError(f"beta={self.beta!r} outside (-1, -3/4)")
        if not self.omega > 0.0:
            raise ValueError(f"omega={self.omega!r} must be > 0")


def root_triple(kmag: float) -> RootTriple:
    """Full root structure (sigma, beta, omega) of the cubic at ``kmag``.

    beta and omega come from the exact factorization
    F(X) = (X - sigma)(X^2 - 2 beta X + beta^2 + omega^2), so Vieta's formulas
    reconstruct the cubic's coefficients to rounding error.  The residual of
    the real root is re-checked here; failure raises :class:`RootSolveError`
    with diagnostics.
    """
    kmag = _check_kmag(kmag)
    sigma = solve_real_root(kmag)
    resid = abs(charpoly(kmag, sigma))
    if resid > 1e-12 * max(1.0, kmag * kmag):
        raise RootSolveError(kmag, (sigma, sigma), f"real-root residual {resid:g} too large")
    disc = 3.0 * sigma * sigma + 4.0 * sigma + 8.0 * kmag * kmag
    if disc <= 0.0:
        raise RootSolveError(kmag, (sigma, sigma), f"oscillator discriminant {disc:g} <= 0")
    return RootTriple(sigma=sigma, beta=-1.0 - 0.5 * sigma, omega=0.5 * np.sqrt(disc))
