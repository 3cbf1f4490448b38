"""NumPy implementations of the inner-loop kernels.

Used when the compiled extension is unavailable or disabled with
``CFCE_PURE_PYTHON=1``.  The compiled twin lives in ``_ckernels.pyx`` and
must agree with these to rounding.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def sq_inf_threshold(mags, lam):
    """Clipping level t of argmin_u 0.5*||u - v||^2 + lam*||u||_inf^2.

    ``mags`` holds |v|.  Sort-and-scan: with a_1 >= a_2 >= ..., the active
    set is the longest prefix with a_k > cumsum_k / (2*lam + k).
    """
    a = np.sort(np.ravel(mags))[::-1]
    if a.size == 0 or a[0] == 0.0:
        return 0.0
    if lam == 0.0:
        return float(a[0])
    cs = np.cumsum(a)
    k = np.arange(1, a.size + 1)
    # the largest entry is always active; rounding can hide that for tiny lam
    m = max(1, int(np.count_nonzero(a * (2.0 * lam + k) > cs)))
    return float(cs[m - 1] / (2.0 * lam + m))


def sq_inf_prox(v, lam):
    v = np.asarray(v, dtype=complex)
    mags = np.abs(v)
    t = sq_inf_threshold(mags, lam)
    scale = np.ones_like(mags)
    big = mags > t
    scale[big] = t / mags[big]
    return v * scale


def phase_index(v, bits):
    """Index q of the nearest point exp(j*pi*(2q+1)/2^bits).

    Boundary ties go to the lower index; zero maps to q = 0.
    """
    n = 1 << bits
    theta = np.mod(np.angle(v), TWO_PI)
    u = theta * (n / TWO_PI)
    q = np.ceil(u).astype(np.int64) - 1
    q[u == 0.0] = 0
    return np.clip(q, 0, n - 1)


def quantize_phase(v, bits):
    n = 1 << bits
    q = phase_index(np.asarray(v, dtype=complex), bits)
    return np.exp(1j * np.pi * (2 * q + 1) / n)


def rho_sweep(a, s, rho, beta, rho_max):
    """One in-order sweep of the per-AP amplitude updates.

    ``a`` is (L, n, K) with a[l] the contribution of AP l on each of n
    occupied subcarriers, ``s`` is (n, K).  Returns the new amplitudes.
    """
    rho = np.array(rho, dtype=float)
    if beta <= 0.0:
        return rho
    u = np.tensordot(rho, a, axes=1)
    for l in range(a.shape[0]):
        al = a[l]
        A = beta * beta * np.vdot(al, al).real
        if A == 0.0:
            new = 0.0
        else:
            e = s - beta * (u - rho[l] * al)
            B = beta * np.vdot(al, e).real
            new = min(rho_max, max(0.0, B / A))
        if new != rho[l]:
            u += (new - rho[l]) * al
            rho[l] = new
    return rho


def sq_inf_prox_batch(v, lam):
    """Row-wise :func:`sq_inf_prox`: each leading index is its own problem."""
    v = np.asarray(v, dtype=complex)
    B = v.shape[0]
    mags = np.abs(v).reshape(B, -1)
    if lam == 0.0 or mags.shape[1] == 0:
        return v.copy()
    a = -np.sort(-mags, axis=1)
    cs = np.cumsum(a, axis=1)
    k = np.arange(1, a.shape[1] + 1)
    m = np.maximum(np.count_nonzero(a * (2.0 * lam + k) > cs, axis=1), 1)
    rows = np.arange(B)
    t = cs[rows, m - 1] / (2.0 * lam + m)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mags > t[:, None], t[:, None] / mags, 1.0)
    return v * scale.reshape(v.shape)


def rho_sweep_batch(a, s, rho, beta, rho_max):
    """:func:`rho_sweep` over a leading batch axis of every argument."""
    return np.stack([rho_sweep(a[j], s[j], rho[j], float(beta[j]), rho_max) for j in range(len(beta))])


def drs_time_step(x_t, z, lam, relax):
    """Time-domain half of one splitting iteration, in place on ``z``.

    y = prox(2 x - z), z += relax * (y - x).  Returns per-member squared
    norms of the step and of x, the squared peak of x, and sum |z - x|
    taken before the update, each (B,).
    """
    ax = (-2, -1)
    gap_l1 = np.sum(np.abs(z - x_t), axis=ax)
    step = sq_inf_prox_batch(2.0 * x_t - z, lam) - x_t
    z += relax * step
    mag2 = x_t.real**2 + x_t.imag**2
    return (np.sum(step.real**2 + step.imag**2, axis=ax), np.sum(mag2, axis=ax), np.max(mag2, axis=ax), gap_l1)
