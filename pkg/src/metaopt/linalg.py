"""Complex helpers, Hermitian square root and seeded random streams.

Complex matrices that need gradients are carried as ``(re, im)`` pairs whose
halves are either numpy arrays or tape tensors; the helpers here only use
operators, so both kinds mix freely.
"""
import numpy as np

from .errors import IndefiniteMatrix, NotHermitian


def make_rng(seed, *stream):
    """Independent PCG64 stream for ``(seed, *stream)``.

    Streams with distinct keys are statistically independent, and the same key
    always reproduces the same samples regardless of scheduling.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def complex_normal(rng, shape):
    """Standard circularly-symmetric complex Gaussian samples, CN(0, 1)."""
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(shape)))
    return (z[0] + 1j * z[1]) / np.sqrt(2.0)


def hermitian_sqrt(R, tolerance=1e-12):
    """Principal square root of a Hermitian positive semidefinite matrix.

    Eigenvalues in ``[-tolerance * scale, 0)`` are clamped to zero, where
    ``scale = max(1, ||R||_2)``.
    """
    R = np.asarray(R, dtype=np.complex128)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise NotHermitian(f"expected a square matrix, got shape {R.shape}")
    scale = max(1.0, float(np.max(np.abs(R))) * R.shape[0])
    if np.max(np.abs(R - R.conj().T), initial=0.0) > tolerance * scale:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    w, V = np.linalg.eigh(0.5 * (R + R.conj().T))
    if w.size and w.min() < -tolerance * scale:
        raise IndefiniteMatrix(f"eigenvalue {w.min():.3e} below -tolerance")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.conj().T


def split(z):
    z = np.asarray(z)
    return np.ascontiguousarray(z.real, dtype=np.float64), np.ascontiguousarray(z.imag, dtype=np.float64)


def join(pair):
    from .autodiff import value
    re, im = pair
    return np.asarray(value(re)) + 1j * np.asarray(value(im))


def cmatmul(a, b):
    """Product of two complex matrices given as (re, im) pairs."""
    ar, ai = a
    br, bi = b
    return ar @ br - ai @ bi, ar @ bi + ai @ br


def abs2(a):
    re, im = a
    return re * re + im * im
