"""Dense linear-algebra helpers: matrix exponential, its Fréchet derivative,
column-stacking vectorization and Haar-random unitaries."""

import numpy as np

# Padé [13/13] coefficients (Higham 2005, Table 2.3)
_B13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def expm(a):
    """Matrix exponential by scaling and squaring with a degree-13 Padé approximant."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    dtype = np.result_type(a.dtype, np.float64)
    a = a.astype(dtype, copy=False)
    n = a.shape[0]
    if n == 0:
        return a.copy()

    norm = np.abs(a).sum(axis=0).max()
    s = 0
    if norm > _THETA13:
        s = int(np.ceil(np.log2(norm / _THETA13)))
    a = a / (2.0**s)

    b = _B13
    ident = np.eye(n, dtype=dtype)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def expm_frechet(a, e):
    """Fréchet derivative of ``expm`` at ``a`` in direction ``e``.

    Uses the block identity ``expm([[A, E], [0, A]]) = [[e^A, L(A, E)], [0, e^A]]``.
    ``e`` is normalised first so the block norm (and hence the scaling) is
    governed by ``a``.
    """
    a = np.asarray(a)
    e = np.asarray(e)
    n = a.shape[0]
    scale = np.abs(e).max()
    if scale == 0.0:
        return np.zeros(np.broadcast_shapes(a.shape, e.shape), dtype=np.result_type(a, e, np.float64))
    dtype = np.result_type(a.dtype, e.dtype, np.float64)
    big = np.zeros((2 * n, 2 * n), dtype=dtype)
    big[:n, :n] = a
    big[n:, n:] = a
    big[:n, n:] = e / scale
    return expm(big)[:n, n:] * scale


def expm_vjp(a, cotangent):
    """Pull a cotangent of ``expm(a)`` back to ``a``.

    Cotangents follow the convention ``Zbar = dF/dRe(Z) + i dF/dIm(Z)`` for a
    real objective ``F``; the adjoint of ``L(A, .)`` is ``L(A^H, .)``.
    """
    return expm_frechet(np.conj(np.transpose(a)), cotangent)


def vec(x):
    """Column-stacking vectorisation, ``vec(A X B) = (B^T kron A) vec(X)``."""
    x = np.asarray(x)
    return np.swapaxes(x, -1, -2).reshape(x.shape[:-2] + (-1,))


def unvec(v, n=None):
    v = np.asarray(v)
    if n is None:
        n = int(round(np.sqrt(v.shape[-1])))
    return np.swapaxes(v.reshape(v.shape[:-1] + (n, n)), -1, -2)


def dagger(x):
    return np.conj(np.swapaxes(x, -1, -2))


def haar_unitary(n, rng):
    """Haar-random ``n x n`` unitary from the QR decomposition of a complex Ginibre matrix.

    The phases of ``diag(R)`` are moved into ``Q`` so the distribution is
    exactly Haar rather than biased by the QR sign convention.
    """
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    phases = d / np.abs(d)
    return q * phases[np.newaxis, :]


def random_density_matrix(n, rng, rank=None):
    """Random density matrix from a Ginibre matrix ``G G^H / Tr``."""
    rank = n if rank is None else rank
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real


def is_unitary(u, atol=1e-12):
    u = np.asarray(u)
    return np.allclose(dagger(u) @ u, np.eye(u.shape[0]), atol=atol, rtol=0.0)
