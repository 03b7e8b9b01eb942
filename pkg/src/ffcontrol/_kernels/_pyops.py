"""Pure numpy kernels for k-site operator application on dense qudit states.

Reference implementation; the compiled module in ``_core.pyx`` mirrors this
API exactly. Selection happens in ``ffcontrol._kernels.__init__``.

Conventions: ``psi`` is a flat complex128 vector of length N**L, site 0 is
the most significant base-N digit. ``op`` is an (N**k, N**k) matrix whose
local code treats sites[0] as the most significant local digit, in the order
the caller listed them (not sorted).
"""

import numpy as np

BACKEND = "python"


def _to_front(psi, sites, L, N):
    arr = psi.reshape((N,) * L)
    k = len(sites)
    return np.moveaxis(arr, sites, range(k))


def apply_local(psi, op, sites, L, N, out=None):
    """Return the embedding of ``op`` on ``sites`` applied to ``psi``."""
    k = len(sites)
    arr = _to_front(psi, sites, L, N)
    shp = arr.shape
    res = op @ arr.reshape(N**k, -1)
    res = np.moveaxis(res.reshape(shp), range(k), sites).reshape(-1)
    if out is None:
        return np.ascontiguousarray(res)
    out[:] = res
    return out


def apply_local_norm2(psi, op, sites, L, N, out):
    """apply_local into ``out``; also return the squared norm of the result."""
    apply_local(psi, op, sites, L, N, out=out)
    return float(np.vdot(out, out).real)


def expect_local(psi, op, sites, L, N):
    """Return the complex matrix element ⟨psi| embed(op) |psi⟩."""
    k = len(sites)
    arr = _to_front(psi, sites, L, N)
    mat = arr.reshape(N**k, -1)
    return complex(np.vdot(mat, op @ mat))
