"""Kernel backend selection.

The compiled extension ``_ckernels`` is used when importable; otherwise the
numpy implementation in ``_pykernels`` is used.  Setting the environment
variable ``CHAFEE_EXIT_BACKEND=python`` forces the numpy path.
"""

import os

from . import _pykernels

PLUS, MINUS, UNRESOLVED, BLOWN_UP = (_pykernels.PLUS, _pykernels.MINUS,
                                     _pykernels.UNRESOLVED, _pykernels.BLOWN_UP)
DONE, NEEDS_TEST, SEG_BLOWUP, DEV_EXCEEDED = (_pykernels.DONE, _pykernels.NEEDS_TEST,
                                              _pykernels.SEG_BLOWUP, _pykernels.DEV_EXCEEDED)


def _load(name):
    if name == "python":
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        if name == "cython":
            raise
        return _pykernels, "python"
    return _ckernels, "cython"


_impl, BACKEND = _load(os.environ.get("CHAFEE_EXIT_BACKEND", "auto").lower())


def use_backend(name: str) -> str:
    """Switch backend at runtime (``"cython"``, ``"python"`` or ``"auto"``)."""
    global _impl, BACKEND
    _impl, BACKEND = _load(name)
    return BACKEND


def backend_module(name: str):
    return _load(name)[0]


def etd_advance(a, n_steps, E, P1, eig, h, B, P, lam, blowup=1e6):
    return bool(_impl.etd_advance(a, n_steps, E, P1, eig, h, B, P, lam, blowup))


def etd_classify(a, max_steps, E, P1, eig, h, B, P, lam, phi_grid, tol, pos_floor, use_pos):
    return _impl.etd_classify(a, max_steps, E, P1, eig, h, B, P, lam, phi_grid, tol,
                              pos_floor, use_pos)


def noisy_segment(a, start, stop, noise, V, eps, E, P1, eig, h, B, P, lam, probe_every,
                  barrier, sign, use_barrier, dev, track_dev, dev_stop, blowup=1e6):
    return _impl.noisy_segment(a, start, stop, noise, V, eps, E, P1, eig, h, B, P, lam,
                               probe_every, barrier, sign, use_barrier, dev, track_dev,
                               dev_stop, blowup)
