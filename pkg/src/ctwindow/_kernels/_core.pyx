# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled voxel hot loops.

Single-precision arithmetic throughout; the expression order matches the
NumPy fallback (`_numpy.py`) so both backends are bit-identical.
"""

from libc.math cimport fabsf, INFINITY


def window_normalize(const float[::1] src, float lo, float hi, float[::1] out):
    cdef Py_ssize_t i, n = src.shape[0]
    cdef float den = hi - lo
    cdef float v
    with nogil:
        for i in range(n):
            v = src[i]
            # saturated inputs map to the exact range ends; the scaled
            # expression can otherwise round 1 ulp short of 255
            if v <= lo:
                out[i] = <float>0.0
            elif v >= hi:
                out[i] = <float>255.0
            else:
                v = (v - lo) * <float>255.0 / den
                if v < <float>0.0:
                    v = <float>0.0
                elif v > <float>255.0:
                    v = <float>255.0
                out[i] = v


def classify_bands(const float[::1] src, const float[::1] lo,
                   const float[::1] hi, const float[::1] center,
                   const unsigned char[::1] label, int mode,
                   unsigned char[::1] out):
    cdef Py_ssize_t i, j, n = src.shape[0], n_bands = label.shape[0]
    cdef float v, d, best
    cdef unsigned char hit
    with nogil:
        if mode == 0:
            for i in range(n):
                v = src[i]
                hit = 0
                for j in range(n_bands):
                    if lo[j] <= v <= hi[j]:
                        hit = label[j]
                        break
                out[i] = hit
        else:
            for i in range(n):
                v = src[i]
                hit = 0
                best = INFINITY
                for j in range(n_bands):
                    if lo[j] <= v <= hi[j]:
                        d = fabsf(v - center[j])
                        if d < best:
                            best = d
                            hit = label[j]
                out[i] = hit


def label_overlap_counts(const unsigned char[::1] a, const unsigned char[::1] b,
                         long long[:, ::1] counts):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef unsigned char va, vb
    with nogil:
        for i in range(n):
            va = a[i]
            vb = b[i]
            counts[0, va] += 1
            counts[1, vb] += 1
            if va == vb:
                counts[2, va] += 1
