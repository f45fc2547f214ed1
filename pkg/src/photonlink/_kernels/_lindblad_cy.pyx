# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Lindblad RHS kernel: straight zgemm calls, no temporaries beyond
the caller-provided ``work`` buffer."""

from scipy.linalg.cython_blas cimport zgemm

ctypedef double complex zcx


cdef inline void _matmul(zcx alpha, zcx* a, zcx* b, zcx beta, zcx* c, int n) noexcept nogil:
    # Row-major C = alpha * A @ B + beta * C.  BLAS is column-major, and a
    # row-major buffer read column-major is the transpose, so compute
    # C^T = alpha * B^T @ A^T + beta * C^T by swapping the operand order.
    cdef char no = b'N'
    zgemm(&no, &no, &n, &n, &n, &alpha, b, &n, a, &n, &beta, c, &n)


cdef inline void _dag_matmul_acc(zcx alpha, zcx* a, zcx* b, zcx* c, int n) noexcept nogil:
    # Row-major C += alpha * B @ A^dag.  In the column-major view this is
    # C^T += alpha * conj(A) @ B^T, and conj(A) is op('C') applied to the
    # row-major A buffer (whose column-major reading is already A^T).
    cdef char conj_t = b'C'
    cdef char no = b'N'
    cdef zcx one = 1.0
    zgemm(&conj_t, &no, &n, &n, &n, &alpha, a, &n, b, &n, &one, c, &n)


def rhs(zcx[:, ::1] a, zcx[:, ::1] rho,
        zcx[:, :, ::1] ls, zcx[:, :, ::1] lds,
        double[::1] rates,
        zcx[:, ::1] out, zcx[:, ::1] work):
    """Same contract as the python kernel; see ``_kernels.__init__``.

    Writes into ``out`` in place; the return value (None) is ignored by the
    solver, which keeps its own reference to the buffer.
    """
    cdef int n = a.shape[0]
    cdef int nch = ls.shape[0]
    cdef int k
    cdef zcx one = 1.0, zero = 0.0, r
    with nogil:
        _matmul(one, &a[0, 0], &rho[0, 0], zero, &out[0, 0], n)          # a @ rho
        _dag_matmul_acc(one, &a[0, 0], &rho[0, 0], &out[0, 0], n)        # += rho @ a^dag
        for k in range(nch):
            r = rates[k]
            if r == 0.0:
                continue
            _matmul(one, &ls[k, 0, 0], &rho[0, 0], zero, &work[0, 0], n) # L @ rho
            _matmul(r, &work[0, 0], &lds[k, 0, 0], one, &out[0, 0], n)   # += r (L rho) Ld
