# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled raster kernels; behaviour mirrors hps._pykernels exactly."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef int _flag(cnp.uint8_t[:, ::1] p, cnp.uint8_t[:, ::1] kill, int h, int w, bint first) noexcept nogil:
    # p is padded by one pixel on each side
    cdef int y, x, b, a, n = 0
    cdef int p2, p3, p4, p5, p6, p7, p8, p9
    for y in range(1, h + 1):
        for x in range(1, w + 1):
            kill[y, x] = 0
            if not p[y, x]:
                continue
            p2 = p[y - 1, x]; p3 = p[y - 1, x + 1]; p4 = p[y, x + 1]; p5 = p[y + 1, x + 1]
            p6 = p[y + 1, x]; p7 = p[y + 1, x - 1]; p8 = p[y, x - 1]; p9 = p[y - 1, x - 1]
            b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
            if b < 2 or b > 6:
                continue
            a = (p2 == 0 and p3 == 1) + (p3 == 0 and p4 == 1) + (p4 == 0 and p5 == 1) \
                + (p5 == 0 and p6 == 1) + (p6 == 0 and p7 == 1) + (p7 == 0 and p8 == 1) \
                + (p8 == 0 and p9 == 1) + (p9 == 0 and p2 == 1)
            if a != 1:
                continue
            if first:
                if p2 and p4 and p6:
                    continue
                if p4 and p6 and p8:
                    continue
            else:
                if p2 and p4 and p8:
                    continue
                if p2 and p6 and p8:
                    continue
            kill[y, x] = 1
            n += 1
    return n


cdef void _protect(cnp.uint8_t[:, ::1] p, cnp.uint8_t[:, ::1] kill, int h, int w,
                   cnp.int32_t[:, ::1] seen, cnp.int32_t[::1] stack) noexcept nogil:
    # flood each kill-component; if no pixel touches a survivor, spare its
    # first pixel in raster order (the flood seed).
    cdef int y, x, yy, xx, dy, dx, top, cy, cx, label = 0
    cdef bint touched
    for y in range(1, h + 1):
        for x in range(1, w + 1):
            seen[y, x] = 0
    for y in range(1, h + 1):
        for x in range(1, w + 1):
            if not kill[y, x] or seen[y, x]:
                continue
            label += 1
            touched = False
            seen[y, x] = label
            top = 0
            stack[0] = y * (w + 2) + x
            top = 1
            while top > 0:
                top -= 1
                cy = stack[top] // (w + 2)
                cx = stack[top] % (w + 2)
                for dy in range(-1, 2):
                    for dx in range(-1, 2):
                        yy = cy + dy
                        xx = cx + dx
                        if not p[yy, xx]:
                            continue
                        if not kill[yy, xx]:
                            touched = True
                        elif not seen[yy, xx]:
                            seen[yy, xx] = label
                            stack[top] = yy * (w + 2) + xx
                            top += 1
            if not touched:
                kill[y, x] = 0


def thin(img):
    """Zhang-Suen thinning of a boolean image; returns a new boolean array."""
    src = np.asarray(img, dtype=bool)
    cdef int h = src.shape[0], w = src.shape[1]
    padded = np.zeros((h + 2, w + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = src
    cdef cnp.uint8_t[:, ::1] p = padded
    cdef cnp.uint8_t[:, ::1] kill = np.zeros((h + 2, w + 2), dtype=np.uint8)
    cdef cnp.int32_t[:, ::1] seen = np.zeros((h + 2, w + 2), dtype=np.int32)
    cdef cnp.int32_t[::1] stack = np.zeros((h + 2) * (w + 2) + 1, dtype=np.int32)
    cdef int y, x, n, changed, sub
    with nogil:
        while True:
            changed = 0
            for sub in range(2):
                n = _flag(p, kill, h, w, sub == 0)
                if n:
                    _protect(p, kill, h, w, seen, stack)
                    for y in range(1, h + 1):
                        for x in range(1, w + 1):
                            if kill[y, x]:
                                p[y, x] = 0
                                changed = 1
            if not changed:
                break
    return padded[1:-1, 1:-1].astype(bool)


def blur3(img):
    """3x3 box mean with edge-clamped sampling, rounded half up."""
    src = np.ascontiguousarray(img, dtype=np.uint8)
    cdef int h = src.shape[0], w = src.shape[1]
    out = np.empty((h, w), dtype=np.uint8)
    cdef const cnp.uint8_t[:, ::1] s = src
    cdef cnp.uint8_t[:, ::1] o = out
    cdef int y, x, dy, dx, yy, xx, total
    with nogil:
        for y in range(h):
            for x in range(w):
                total = 0
                for dy in range(-1, 2):
                    yy = min(max(y + dy, 0), h - 1)
                    for dx in range(-1, 2):
                        xx = min(max(x + dx, 0), w - 1)
                        total = total + s[yy, xx]
                o[y, x] = (total * 2 + 9) // 18
    return out
