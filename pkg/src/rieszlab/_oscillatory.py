"""Oscillatory tail integrals E_r(z) = int_z^inf e^{it} t^{-r} dt for r > 1, z >= 0."""

from __future__ import annotations

import numpy as np

_LAG_X, _LAG_W = np.polynomial.laguerre.laggauss(80)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)

# below this the rotated-contour rule loses accuracy; finite piece done on a log grid
Z_SWITCH = 12.0


def _rotated(z: np.ndarray, r: float) -> np.ndarray:
    # t = z + i u: E_r(z) = i e^{iz} z^{-r} int_0^inf e^{-u} (1 + i u / z)^{-r} du
    f = (1.0 + 1j * _LAG_X[None, :] / z[:, None]) ** (-r)
    return 1j * np.exp(1j * z) * z ** (-r) * (f @ _LAG_W)


def _finite(z: np.ndarray, r: float) -> np.ndarray:
    # int_z^{Z_SWITCH} e^{it} t^{-r} dt on v = log t, composite Gauss-Legendre
    lo = np.log(z)
    hi = np.log(Z_SWITCH)
    span = hi - lo
    panels = int(np.ceil(span.max() / 0.5)) if span.size else 1
    out = np.zeros(z.size, dtype=complex)
    for k in range(panels):
        a = lo + span * k / panels
        b = lo + span * (k + 1) / panels
        half = 0.5 * (b - a)
        v = 0.5 * (a + b)[:, None] + half[:, None] * _GL_X[None, :]
        t = np.exp(v)
        vals = np.exp(1j * t) * t ** (1.0 - r)
        out += half * (vals @ _GL_W)
    return out


def exp_tail(z, r: float) -> np.ndarray:
    """E_r(z) for an array of z > 0; r > 1."""
    z = np.asarray(z, dtype=float)
    if r <= 1:
        raise ValueError("exponent must exceed 1")
    if np.any(z <= 0):
        raise ValueError("z must be positive")
    flat = z.ravel()
    out = np.empty(flat.size, dtype=complex)
    big = flat >= Z_SWITCH
    if big.any():
        out[big] = _rotated(flat[big], r)
    if (~big).any():
        small = flat[~big]
        out[~big] = _finite(small, r) + _rotated(np.array([Z_SWITCH]), r)[0]
    return out.reshape(z.shape)


def cos_tail(a, cutoff: float, r: float) -> np.ndarray:
    """int_cutoff^inf cos(a x) x^{-r} dx, vectorized over a (any sign)."""
    a = np.abs(np.asarray(a, dtype=float))
    out = np.empty(a.shape)
    zero = a == 0
    out[zero] = cutoff ** (1.0 - r) / (r - 1.0)
    if (~zero).any():
        az = a[~zero]
        out[~zero] = az ** (r - 1.0) * exp_tail(az * cutoff, r).real
    return out


def sin_tail(b, cutoff: float, r: float) -> np.ndarray:
    """int_cutoff^inf sin(b x) x^{-r} dx, vectorized over b (any sign)."""
    b = np.asarray(b, dtype=float)
    out = np.zeros(b.shape)
    nz = b != 0
    if nz.any():
        bb = np.abs(b[nz])
        out[nz] = np.sign(b[nz]) * bb ** (r - 1.0) * exp_tail(bb * cutoff, r).imag
    return out
