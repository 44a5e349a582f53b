"""Fourier pseudo-spectral primitives on a uniform periodic grid.

Every operator here acts on real samples ``f[j] = f(x0 + j*h)`` of a
function that is (numerically) periodic on ``[x0, x0 + L)``.  Functions
decaying on the line are represented by their restriction to the box,
which is accurate as long as they are negligible near both ends.

Conventions
-----------
* Odd derivatives annihilate the Nyquist mode, even derivatives keep the
  real symbol ``(ik)**order``.  This keeps derivative matrices real, odd
  ones skew and even ones symmetric.
* Inner products use the periodic trapezoid rule ``h * sum(f * g)``,
  so the adjoint of a real matrix is its transpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidParameter

__all__ = [
    "Grid",
    "WeightParam",
    "derivative",
    "helmholtz_inverse",
    "apply_skew_J",
    "antiderivative",
    "cumulative_integral",
    "integrate",
    "inner",
    "h1_norm",
    "weighted_h1_norm",
    "dealiased_product",
    "dealias",
    "translate",
    "multiplier_matrix",
    "derivative_symbol",
    "cumulative_integral_matrix",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points on ``[x0, x0 + length)``.

    Parameters
    ----------
    n : int
        Number of points, a power of two not smaller than 64.
    length : float
        Period of the box.
    x0 : float, optional
        Left endpoint; defaults to ``-length / 2`` so the box is centred.
    """

    n: int = 1024
    length: float = 80.0
    x0: float | None = None

    def __post_init__(self):
        n = int(self.n)
        if n < 64 or n & (n - 1):
            raise InvalidParameter(f"invalid grid: n={self.n} must be a power of two >= 64")
        if not np.isfinite(self.length) or self.length <= 0:
            raise InvalidParameter(f"invalid grid: length={self.length} must be positive")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))
        if self.x0 is None:
            object.__setattr__(self, "x0", -self.length / 2)
        else:
            object.__setattr__(self, "x0", float(self.x0))

    @property
    def h(self) -> float:
        return self.length / self.n

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x0 + self.h * np.arange(self.n)
        x.flags.writeable = False
        return x

    @cached_property
    def k(self) -> np.ndarray:
        """Wavenumbers in ``numpy.fft.rfft`` order (last entry is Nyquist)."""
        k = 2 * np.pi * np.fft.rfftfreq(self.n, self.h)
        k.flags.writeable = False
        return k

    @property
    def kmax(self) -> float:
        return np.pi / self.h

    @property
    def center(self) -> float:
        return self.x0 + self.length / 2

    def periodic_offset(self, x, origin: float) -> np.ndarray:
        """Signed distance ``x - origin`` folded into ``[-L/2, L/2)``."""
        L = self.length
        return (np.asarray(x) - origin + L / 2) % L - L / 2

    @cached_property
    def edge_window(self) -> np.ndarray:
        """Smooth unit-mass weight concentrated around the periodic seam.

        Used to fix constants of integration: averaging over a band around
        ``x0`` instead of sampling the single point ``x0`` keeps the
        transpose of the integration matrix free of Gibbs ripples.
        """
        d = self.periodic_offset(self.x, self.x0)
        width = self.length / 8
        s = np.clip(d / width, -1, 1)
        with np.errstate(divide="ignore", over="ignore"):
            w = np.where(np.abs(s) < 1, np.exp(-1.0 / (1.0 - s * s)), 0.0)
        w /= w.sum()
        w.flags.writeable = False
        return w


@dataclass(frozen=True)
class WeightParam:
    """Exponential weight ``exp(a x)`` for a soliton of speed ``c``.

    The admissible range is ``a1 < a < 0`` with ``a1 = -sqrt(1 - 2 omega / c)``,
    the decay rate of the profile: beyond it the weighted translation mode
    is no longer localized.
    """

    a: float
    c: float
    omega: float
    a1: float = field(init=False)

    def __post_init__(self):
        if not (self.omega > 0 and self.c > 2 * self.omega):
            raise InvalidParameter("invalid speed: need c > 2*omega > 0")
        a1 = -np.sqrt(1 - 2 * self.omega / self.c)
        object.__setattr__(self, "a1", float(a1))
        if not (a1 < self.a < 0):
            raise InvalidParameter(f"weight a={self.a} must lie in ({a1:.6g}, 0)")


def derivative_symbol(grid: Grid, order: int = 1, shift: float = 0.0, full: bool = False):
    """Fourier symbol of ``(d/dx - shift)**order`` with the Nyquist convention.

    ``full=True`` returns the symbol in ``numpy.fft.fft`` ordering for all
    ``n`` modes, otherwise in ``rfft`` ordering.
    """
    if full:
        k = 2 * np.pi * np.fft.fftfreq(grid.n, grid.h)
        nyq = np.arange(grid.n) == grid.n // 2
    else:
        k = np.asarray(grid.k)
        nyq = np.arange(k.size) == k.size - 1
    d1 = np.where(nyq, 0.0, 1j * k)
    d2 = -(k**2)
    # powers of (D - a) assembled from D, D^2, D^3 so that even powers keep
    # the Nyquist mode and odd powers of D drop it
    if order == 0:
        return np.ones_like(d1)
    if order == 1:
        return d1 - shift
    if order == 2:
        return d2 - 2 * shift * d1 + shift**2
    if order == 3:
        d3 = np.where(nyq, 0.0, (1j * k) ** 3)
        return d3 - 3 * shift * d2 + 3 * shift**2 * d1 - shift**3
    raise InvalidParameter(f"derivative order {order} not supported (0..3)")


def _apply(f, grid: Grid, symbol) -> np.ndarray:
    f = np.asarray(f)
    if np.iscomplexobj(f):
        full = np.fft.fft(f)
        sym_full = _full_from_half(symbol, grid)
        return np.fft.ifft(full * sym_full)
    return np.fft.irfft(np.fft.rfft(f) * symbol, n=grid.n)


def _full_from_half(symbol, grid: Grid):
    # extend an rfft-ordered symbol of a real operator to all fft modes
    n = grid.n
    out = np.empty(n, dtype=complex)
    out[: n // 2 + 1] = symbol
    out[n // 2 + 1 :] = np.conj(symbol[1 : n // 2][::-1])
    return out


def derivative(f, grid: Grid, order: int = 1) -> np.ndarray:
    """Spectral derivative of order 0 to 3."""
    if order not in (0, 1, 2, 3):
        raise InvalidParameter(f"derivative order {order} not supported (0..3)")
    return _apply(f, grid, derivative_symbol(grid, order))


def helmholtz_inverse(f, grid: Grid) -> np.ndarray:
    """Solve ``(1 - d^2/dx^2) u = f``."""
    return _apply(f, grid, 1.0 / (1.0 + grid.k**2))


def apply_skew_J(f, grid: Grid) -> np.ndarray:
    """Apply the skew operator ``J = -d/dx (1 - d^2/dx^2)^{-1}``."""
    sym = -derivative_symbol(grid, 1) / (1.0 + grid.k**2)
    return _apply(f, grid, sym)


def integrate(f, grid: Grid) -> float:
    """Trapezoid rule over one period (spectrally accurate for smooth data)."""
    return grid.h * np.sum(f, axis=-1)


def inner(f, g, grid: Grid):
    """Bilinear pairing ``integral f g`` (no complex conjugation)."""
    return grid.h * np.sum(np.asarray(f) * np.asarray(g), axis=-1)


def _mean_free_antiderivative(f, grid: Grid):
    k = grid.k
    sym = np.zeros_like(k, dtype=complex)
    sym[1:-1] = 1.0 / (1j * k[1:-1])
    return _apply(f, grid, sym)


def antiderivative(f, grid: Grid, tol: float = 1e-8, return_mean: bool = False):
    """Periodic antiderivative vanishing at the left endpoint.

    The integrand must have (numerically) zero mean, as any derivative of a
    decaying function does.  ``|mean| > tol * max|f|`` raises
    ``InvalidParameter("non-decaying integrand")``; otherwise the small mean
    is removed and optionally returned as a diagnostic.
    """
    f = np.asarray(f)
    mean = np.mean(f)
    scale = np.max(np.abs(f)) if f.size else 0.0
    if abs(mean) > tol * max(scale, np.finfo(float).tiny):
        raise InvalidParameter(
            f"non-decaying integrand: mean {abs(mean):.3e} exceeds {tol:g} * sup-norm"
        )
    F = _mean_free_antiderivative(f, grid)
    F = F - F[0]
    return (F, mean) if return_mean else F


def cumulative_integral(f, grid: Grid) -> np.ndarray:
    """Approximate ``integral_{-inf}^x f`` for an integrand decaying at the box edges.

    Unlike :func:`antiderivative` the integrand may have nonzero total
    integral; the result then tends to that value on the right.  The mean
    part is integrated exactly as a ramp, the rest spectrally, and the
    constant is fixed by a smooth average around the seam at ``x0`` where
    the result should vanish.
    """
    f = np.asarray(f)
    mean = np.mean(f)
    F = _mean_free_antiderivative(f - mean, grid)
    ramp = mean * (grid.x - grid.x0)
    F = F - np.sum(grid.edge_window * F)
    return F + ramp


def h1_norm(f, grid: Grid) -> float:
    """``sqrt(integral f^2 + f_x^2)``."""
    f = np.asarray(f)
    fx = derivative(f, grid)
    return float(np.sqrt(integrate(np.abs(f) ** 2 + np.abs(fx) ** 2, grid)))


def weighted_h1_norm(f, grid: Grid, a: float, center: float = 0.0) -> float:
    """H1 norm of ``exp(a (x - center)) f`` using the product rule for the derivative."""
    f = np.asarray(f)
    e = np.exp(a * (grid.x - center))
    g = e * f
    gx = e * (derivative(f, grid) + a * f)
    return float(np.sqrt(integrate(np.abs(g) ** 2 + np.abs(gx) ** 2, grid)))


def dealias(f, grid: Grid) -> np.ndarray:
    """Zero the upper third of the spectrum (2/3 rule)."""
    fh = np.fft.rfft(f)
    fh[grid.k > (2.0 / 3.0) * grid.kmax] = 0.0
    return np.fft.irfft(fh, n=grid.n)


def dealiased_product(f, g, grid: Grid) -> np.ndarray:
    """Product of two real fields computed on a 3/2 zero-padded grid.

    The quadratic product of the retained modes is exact; modes beyond the
    original Nyquist frequency are discarded.
    """
    n = grid.n
    m = 3 * n // 2
    scale = m / n
    fp = np.zeros(m // 2 + 1, dtype=complex)
    gp = np.zeros(m // 2 + 1, dtype=complex)
    fp[: n // 2] = np.fft.rfft(f)[: n // 2]
    gp[: n // 2] = np.fft.rfft(g)[: n // 2]
    prod = np.fft.irfft(fp, n=m) * np.fft.irfft(gp, n=m) * scale**2
    ph = np.fft.rfft(prod)[: n // 2 + 1] / scale
    ph[-1] = 0.0
    return np.fft.irfft(ph, n=n)


def translate(f, grid: Grid, shift: float) -> np.ndarray:
    """Band-limited translation ``f(x - shift)``."""
    sym = np.exp(-1j * grid.k * shift)
    sym[-1] = np.cos(grid.k[-1] * shift)
    return _apply(f, grid, sym)


def multiplier_matrix(grid: Grid, symbol_full) -> np.ndarray:
    """Dense matrix of the Fourier multiplier with ``fft``-ordered symbol.

    The result is real when the symbol is Hermitian (``s(-k) = conj s(k)``).
    """
    n = grid.n
    eye = np.eye(n)
    M = np.fft.ifft(np.asarray(symbol_full)[:, None] * np.fft.fft(eye, axis=0), axis=0)
    if np.max(np.abs(M.imag)) <= 1e-13 * max(np.max(np.abs(M.real)), 1.0):
        return np.ascontiguousarray(M.real)
    return M


def cumulative_integral_matrix(grid: Grid) -> np.ndarray:
    """Dense matrix of :func:`cumulative_integral`.

    Its transpose approximates ``integral_x^{+inf}``, which is the adjoint of
    ``integral_{-inf}^x`` for the trapezoid pairing.
    """
    n = grid.n
    k = 2 * np.pi * np.fft.fftfreq(n, grid.h)
    sym = np.zeros(n, dtype=complex)
    nz = (k != 0) & (np.arange(n) != n // 2)
    sym[nz] = 1.0 / (1j * k[nz])
    A = multiplier_matrix(grid, sym)
    A = A - np.outer(np.ones(n), grid.edge_window @ A)
    ramp = np.outer(grid.x - grid.x0, np.ones(n) / n)
    # the mean part must not be touched by the periodic antiderivative; A
    # already annihilates constants, so only the ramp carries it
    return A + ramp
