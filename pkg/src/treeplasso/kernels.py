"""Hot inner loops of the ADMM solvers.

Every kernel exists twice: a vectorised numpy version (``*_numpy``) and an
explicit-loop version compiled with numba (``*_numba``).  The public names
bind to one of them at import time according to
:data:`treeplasso._accel.USE_NUMBA`.  Both versions are always importable so
tests and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "soft_threshold_array",
    "group_shrink_rows",
    "block_shrink",
    "pliable_sweep",
    "KERNEL_BACKEND",
]


# ---------------------------------------------------------------- numpy path


def soft_threshold_array_numpy(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def group_shrink_rows_numpy(R, t):
    """Row-wise group soft threshold; ``t`` holds one threshold per row."""
    norms = np.sqrt(np.einsum("ij,ij->i", R, R))
    scale = np.zeros_like(norms)
    nz = norms > 0.0
    scale[nz] = np.maximum(norms[nz] - t[nz], 0.0) / norms[nz]
    return R * scale[:, None]


def block_shrink_numpy(A, starts, ends, t):
    """Group soft threshold of the blocks ``A[starts[m]:ends[m], j, :]``.

    Blocks are meant to be disjoint; rows outside every block come back as
    zero and, should blocks overlap, the later block wins.
    """
    out = np.zeros_like(A)
    for m in range(starts.shape[0]):
        blk = A[starts[m]:ends[m]]
        norms = np.sqrt(np.einsum("rjk,rjk->j", blk, blk))
        scale = np.zeros_like(norms)
        nz = norms > 0.0
        scale[nz] = np.maximum(norms[nz] - t[m], 0.0) / norms[nz]
        out[starts[m]:ends[m]] = blk * scale[None, :, None]
    return out


def pliable_sweep_numpy(flat, resid, B, Minv, aux, n_obs):
    """One Gauss-Seidel pass over the covariate blocks of the single-response B update.

    ``resid`` is the full residual ``y_tilde - W*B`` and is kept consistent
    with ``B``; both are modified in place.
    """
    p, k1 = B.shape
    for j in range(p):
        Wj = flat[:, j * k1:(j + 1) * k1]
        resid += Wj @ B[j]
        b = Minv[j] @ (Wj.T @ resid / n_obs + aux[j])
        B[j] = b
        resid -= Wj @ b


# ---------------------------------------------------------------- numba path


@njit
def soft_threshold_array_numba(x, t):
    flat = x.ravel()
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        v = flat[i]
        if v > t:
            out[i] = v - t
        elif v < -t:
            out[i] = v + t
        else:
            out[i] = 0.0
    return out.reshape(x.shape)


@njit
def group_shrink_rows_numba(R, t):
    n, g = R.shape
    out = np.zeros_like(R)
    for i in range(n):
        s = 0.0
        for k in range(g):
            s += R[i, k] * R[i, k]
        nrm = np.sqrt(s)
        if nrm > t[i]:
            f = (nrm - t[i]) / nrm
            for k in range(g):
                out[i, k] = R[i, k] * f
    return out


@njit
def block_shrink_numba(A, starts, ends, t):
    _, p, k1 = A.shape
    out = np.zeros_like(A)
    for m in range(starts.shape[0]):
        for j in range(p):
            s = 0.0
            for r in range(starts[m], ends[m]):
                for k in range(k1):
                    s += A[r, j, k] * A[r, j, k]
            nrm = np.sqrt(s)
            f = (nrm - t[m]) / nrm if nrm > t[m] else 0.0
            for r in range(starts[m], ends[m]):
                for k in range(k1):
                    out[r, j, k] = A[r, j, k] * f
    return out


@njit
def pliable_sweep_numba(flat, resid, B, Minv, aux, n_obs):
    n, _ = flat.shape
    p, k1 = B.shape
    rhs = np.empty(k1)
    for j in range(p):
        c0 = j * k1
        for i in range(n):
            acc = 0.0
            for k in range(k1):
                acc += flat[i, c0 + k] * B[j, k]
            resid[i] += acc
        for k in range(k1):
            acc = 0.0
            for i in range(n):
                acc += flat[i, c0 + k] * resid[i]
            rhs[k] = acc / n_obs + aux[j, k]
        for k in range(k1):
            acc = 0.0
            for l in range(k1):
                acc += Minv[j, k, l] * rhs[l]
            B[j, k] = acc
        for i in range(n):
            acc = 0.0
            for k in range(k1):
                acc += flat[i, c0 + k] * B[j, k]
            resid[i] -= acc


# ---------------------------------------------------------------- dispatch

if USE_NUMBA:
    KERNEL_BACKEND = "numba"

    def soft_threshold_array(x, t):
        x = np.ascontiguousarray(x, dtype=np.float64)
        return soft_threshold_array_numba(x, float(t))

    def group_shrink_rows(R, t):
        return group_shrink_rows_numba(np.ascontiguousarray(R), np.ascontiguousarray(t, dtype=np.float64))

    def block_shrink(A, starts, ends, t):
        return block_shrink_numba(np.ascontiguousarray(A), starts, ends, np.ascontiguousarray(t, dtype=np.float64))

    pliable_sweep = pliable_sweep_numba
else:
    KERNEL_BACKEND = "numpy"
    soft_threshold_array = soft_threshold_array_numpy

    def group_shrink_rows(R, t):
        return group_shrink_rows_numpy(R, np.asarray(t, dtype=np.float64))

    def block_shrink(A, starts, ends, t):
        return block_shrink_numpy(A, starts, ends, np.asarray(t, dtype=np.float64))

    pliable_sweep = pliable_sweep_numpy
