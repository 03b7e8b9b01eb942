# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Strided C kernels for 1-3 site operator application on dense qudit states.

Same API and conventions as ``_pyops``: flat complex128 state of length
N**L, site 0 most significant digit, op indexed with sites[0] as the most
significant local digit. k <= 3 and N <= 3, so local dimension M <= 27 and
scratch buffers live on the stack.

The untouched digits split into at most k+1 contiguous runs; iterating them
as a fixed 4-deep nest avoids per-element index arithmetic entirely. The op
matrix is scanned once per call into a row-sparse form: the protocol
operators (singlet/Motzkin projectors, diagonal feedback phases) are mostly
zeros and the matvec cost tracks the nonzero count.
"""

import numpy as np

cimport cython

ctypedef double complex cplx

BACKEND = "compiled"

DEF MLOC = 27


cdef struct Plan:
    long M               # N**k
    long offs[MLOC]      # gather offsets for each local code
    long sizes[4]        # run lengths of untouched digit segments
    long strides[4]      # unit strides of those segments
    long rownnz[MLOC]    # sparse rows of the op matrix
    long cols[MLOC][MLOC]
    cplx vals[MLOC][MLOC]


cdef int _setup(sites, long L, long N, long dim, cplx[:, ::1] op, Plan* plan) except -1:
    cdef long k = len(sites)
    cdef long st[3]
    cdef long ins[3]
    cdef long i, j, c, cp, site, tmp, M, n
    cdef cplx v
    M = 1
    for j in range(k):
        M *= N
    if op.shape[0] != M or op.shape[1] != M:
        raise ValueError("operator dimension does not match support")
    plan.M = M
    for j in range(k):
        site = sites[j]
        if site < 0 or site >= L:
            raise ValueError("site index out of range")
        st[j] = 1
        for i in range(L - 1 - site):
            st[j] *= N
    for c in range(M):
        tmp = 0
        cp = c
        for j in range(k - 1, -1, -1):
            tmp += (cp % N) * st[j]
            cp //= N
        plan.offs[c] = tmp
    for j in range(k):
        ins[j] = st[j]
    for i in range(k):
        for j in range(i + 1, k):
            if ins[j] < ins[i]:
                tmp = ins[i]; ins[i] = ins[j]; ins[j] = tmp
    for j in range(k - 1):
        if ins[j] == ins[j + 1]:
            raise ValueError("duplicate sites in support")
    plan.sizes[0] = ins[0]
    plan.strides[0] = 1
    for j in range(1, k):
        plan.sizes[j] = ins[j] // (ins[j - 1] * N)
        plan.strides[j] = ins[j - 1] * N
    plan.sizes[k] = dim // (ins[k - 1] * N)
    plan.strides[k] = ins[k - 1] * N
    for j in range(k + 1, 4):
        plan.sizes[j] = 1
        plan.strides[j] = 0
    for c in range(M):
        n = 0
        for cp in range(M):
            v = op[c, cp]
            if v.real != 0.0 or v.imag != 0.0:
                plan.cols[c][n] = cp
                plan.vals[c][n] = v
                n += 1
        plan.rownnz[c] = n
    return 0


def apply_local(cplx[::1] psi, cplx[:, ::1] op, sites, long L, long N, out=None):
    """out = embed(op, sites) @ psi."""
    if out is None:
        out = np.empty(psi.shape[0], dtype=np.complex128)
    apply_local_norm2(psi, op, sites, L, N, out)
    return out


def apply_local_norm2(cplx[::1] psi, cplx[:, ::1] op, sites, long L, long N, cplx[::1] out):
    """apply_local into preallocated ``out``; returns ||out||**2 from the same pass."""
    cdef Plan plan
    _setup(sites, L, N, psi.shape[0], op, &plan)
    cdef long M = plan.M
    cdef long i0, i1, i2, i3, b3, b2, b1, base, c, j
    cdef cplx x[MLOC]
    cdef cplx acc
    cdef double n2 = 0.0
    for i3 in range(plan.sizes[3]):
        b3 = i3 * plan.strides[3]
        for i2 in range(plan.sizes[2]):
            b2 = b3 + i2 * plan.strides[2]
            for i1 in range(plan.sizes[1]):
                b1 = b2 + i1 * plan.strides[1]
                for i0 in range(plan.sizes[0]):
                    base = b1 + i0
                    for c in range(M):
                        x[c] = psi[base + plan.offs[c]]
                    for c in range(M):
                        acc = 0
                        for j in range(plan.rownnz[c]):
                            acc = acc + plan.vals[c][j] * x[plan.cols[c][j]]
                        out[base + plan.offs[c]] = acc
                        n2 += acc.real * acc.real + acc.imag * acc.imag
    return n2


def expect_local(cplx[::1] psi, cplx[:, ::1] op, sites, long L, long N):
    """Returns <psi| embed(op, sites) |psi> as a complex number."""
    cdef Plan plan
    _setup(sites, L, N, psi.shape[0], op, &plan)
    cdef long M = plan.M
    cdef long i0, i1, i2, i3, b3, b2, b1, base, c, j
    cdef cplx x[MLOC]
    cdef cplx acc, total
    total = 0
    for i3 in range(plan.sizes[3]):
        b3 = i3 * plan.strides[3]
        for i2 in range(plan.sizes[2]):
            b2 = b3 + i2 * plan.strides[2]
            for i1 in range(plan.sizes[1]):
                b1 = b2 + i1 * plan.strides[1]
                for i0 in range(plan.sizes[0]):
                    base = b1 + i0
                    for c in range(M):
                        x[c] = psi[base + plan.offs[c]]
                    for c in range(M):
                        acc = 0
                        for j in range(plan.rownnz[c]):
                            acc = acc + plan.vals[c][j] * x[plan.cols[c][j]]
                        total = total + acc * x[c].conjugate()
    return complex(total)
