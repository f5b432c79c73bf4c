# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly kernels for the Ginzburg-Landau energy and gradient.

Twin of glvlab._kernels_py; see that module for the conventions.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def interior_energy(cnp.int32_t[:, ::1] tris,
                    cnp.float64_t[:, :, ::1] bmat,
                    cnp.float64_t[::1] areas,
                    cnp.float64_t[:, ::1] u,
                    double inv_eps2):
    cdef Py_ssize_t m = tris.shape[0]
    cdef Py_ssize_t t, k, a, b
    cdef double g00, g01, g10, g11
    cdef double mx, my, q, area
    cdef double acc = 0.0
    cdef double pot4 = inv_eps2 / 12.0

    with nogil:
        for t in range(m):
            area = areas[t]
            g00 = 0.0; g01 = 0.0; g10 = 0.0; g11 = 0.0
            for k in range(3):
                a = tris[t, k]
                g00 += bmat[t, k, 0] * u[a, 0]
                g01 += bmat[t, k, 0] * u[a, 1]
                g10 += bmat[t, k, 1] * u[a, 0]
                g11 += bmat[t, k, 1] * u[a, 1]
            acc += 0.5 * area * (g00 * g00 + g01 * g01 + g10 * g10 + g11 * g11)
            for k in range(3):
                a = tris[t, k]
                b = tris[t, (k + 1) % 3]
                mx = 0.5 * (u[a, 0] + u[b, 0])
                my = 0.5 * (u[a, 1] + u[b, 1])
                q = 1.0 - (mx * mx + my * my)
                acc += pot4 * area * q * q
    return acc


def interior_gradient(cnp.int32_t[:, ::1] tris,
                      cnp.float64_t[:, :, ::1] bmat,
                      cnp.float64_t[::1] areas,
                      cnp.float64_t[:, ::1] u,
                      double inv_eps2,
                      cnp.float64_t[:, ::1] out):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t m = tris.shape[0]
    cdef Py_ssize_t t, k, a, b
    cdef double g00, g01, g10, g11
    cdef double mx, my, q, area, w

    with nogil:
        for t in range(n):
            out[t, 0] = 0.0
            out[t, 1] = 0.0
        for t in range(m):
            area = areas[t]
            g00 = 0.0; g01 = 0.0; g10 = 0.0; g11 = 0.0
            for k in range(3):
                a = tris[t, k]
                g00 += bmat[t, k, 0] * u[a, 0]
                g01 += bmat[t, k, 0] * u[a, 1]
                g10 += bmat[t, k, 1] * u[a, 0]
                g11 += bmat[t, k, 1] * u[a, 1]
            for k in range(3):
                a = tris[t, k]
                out[a, 0] += area * (g00 * bmat[t, k, 0] + g10 * bmat[t, k, 1])
                out[a, 1] += area * (g01 * bmat[t, k, 0] + g11 * bmat[t, k, 1])
            for k in range(3):
                a = tris[t, k]
                b = tris[t, (k + 1) % 3]
                mx = 0.5 * (u[a, 0] + u[b, 0])
                my = 0.5 * (u[a, 1] + u[b, 1])
                q = 1.0 - (mx * mx + my * my)
                w = -(inv_eps2 / 6.0) * area * q
                out[a, 0] += w * mx
                out[a, 1] += w * my
                out[b, 0] += w * mx
                out[b, 1] += w * my
