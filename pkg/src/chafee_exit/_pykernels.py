"""Pure numpy kernels; same signatures and semantics as ``_ckernels``.

All kernels update the coefficient array ``a`` in place.  ``B`` maps
coefficients to grid values, ``P`` projects grid values back, ``E``/``P1``
are the exponential Euler factors for a step of length ``h`` and ``eig`` the
Laplacian eigenvalues.  A step whose grid field violates
``h * 3 lam max|u|^2 <= 1`` is split into adaptive substeps so large states
(big jumps) stay stable; ordinary steps use ``E``/``P1`` unchanged.
"""

import math

import numpy as np

PLUS, MINUS, UNRESOLVED, BLOWN_UP = 1, -1, 0, 2

DONE, NEEDS_TEST, SEG_BLOWUP, DEV_EXCEEDED = 0, 1, 2, 3


def _rhs(u, P, lam):
    return P @ (lam * (u - u * u * u))


def _step(a, u, E, P1, eig, h, B, P, lam):
    umax = float(np.max(np.abs(u)))
    if h * 3.0 * lam * umax * umax <= 1.0:
        a[:] = E * a + P1 * _rhs(u, P, lam)
        return
    rem = h
    while rem > 1e-15 * h:
        hs = min(rem, 1.0 / (3.0 * lam * umax * umax))
        a[:] = np.exp(-eig * hs) * a + (-np.expm1(-eig * hs) / eig) * _rhs(u, P, lam)
        rem -= hs
        u = B @ a
        umax = max(float(np.max(np.abs(u))), 1e-300)
        if not math.isfinite(umax):
            return


def etd_advance(a, n_steps, E, P1, eig, h, B, P, lam, blowup):
    for _ in range(n_steps):
        _step(a, B @ a, E, P1, eig, h, B, P, lam)
        if not np.max(np.abs(a)) < blowup:
            return False
    return True


def etd_classify(a, max_steps, E, P1, eig, h, B, P, lam, phi_grid, tol, pos_floor, use_pos):
    """Flow until within ``tol`` of ``+-phi`` (sup on grid) or, if ``use_pos``,
    until the field lies above ``pos_floor`` or below ``-pos_floor``."""
    for step in range(max_steps + 1):
        u = B @ a
        if np.max(np.abs(u - phi_grid)) < tol:
            return PLUS, step
        if np.max(np.abs(u + phi_grid)) < tol:
            return MINUS, step
        if use_pos:
            if np.all(u >= pos_floor):
                return PLUS, step
            if np.all(u <= -pos_floor):
                return MINUS, step
        if step == max_steps:
            break
        _step(a, u, E, P1, eig, h, B, P, lam)
        if not np.max(np.abs(a)) < 1e6:
            return BLOWN_UP, step
    return UNRESOLVED, max_steps


def noisy_segment(a, start, stop, noise, V, eps, E, P1, eig, h, B, P, lam, probe_every,
                  barrier, sign, use_barrier, dev, track_dev, dev_stop, blowup):
    """Advance through noise rows ``start..stop-1``.

    Row ``s`` holds the small-jump coefficients injected at the end of step
    ``s``.  At every step index that is a multiple of ``probe_every`` (other
    than ``start``) the grid field is compared with the barrier:
    ``sign * (u - barrier) >= 0`` everywhere certifies membership, otherwise
    the kernel stops and reports ``NEEDS_TEST``.  With ``track_dev`` a
    noise-free copy ``dev`` is advanced alongside and the largest grid
    deviation is returned; reaching ``dev_stop`` ends early.
    """
    maxdev = 0.0
    s = start
    while True:
        u = B @ a
        if track_dev:
            w = B @ dev
            d = float(np.max(np.abs(u - w)))
            if d > maxdev:
                maxdev = d
            if maxdev >= dev_stop:
                return s, DEV_EXCEEDED, maxdev
        if use_barrier and s > start and s % probe_every == 0:
            if np.any(sign * (u - barrier) < 0.0):
                return s, NEEDS_TEST, maxdev
        if s >= stop:
            return s, DONE, maxdev
        _step(a, u, E, P1, eig, h, B, P, lam)
        if noise.shape[1]:
            a += eps * (noise[s] @ V)
        if not np.max(np.abs(a)) < blowup:
            return s + 1, SEG_BLOWUP, maxdev
        if track_dev:
            _step(dev, w, E, P1, eig, h, B, P, lam)
        s += 1
