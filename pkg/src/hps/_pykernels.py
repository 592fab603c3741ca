"""Pure numpy implementations of the raster kernels.

These are the reference fallbacks for :mod:`hps._ckernels`; both must
produce bit-identical output.
"""
import numpy as np


def _neighbours(p):
    # p is zero-padded by one pixel; order P2..P9 runs clockwise from north.
    return (
        p[:-2, 1:-1], p[:-2, 2:], p[1:-1, 2:], p[2:, 2:],
        p[2:, 1:-1], p[2:, :-2], p[1:-1, :-2], p[:-2, :-2],
    )


def _subiteration(img, first):
    p = np.pad(img, 1)
    n = [x.astype(np.int8) for x in _neighbours(p)]
    p2, p3, p4, p5, p6, p7, p8, p9 = n
    b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
    seq = n + [p2]
    a = sum(((seq[i] == 0) & (seq[i + 1] == 1)).astype(np.int8) for i in range(8))
    if first:
        c1 = (p2 * p4 * p6) == 0
        c2 = (p4 * p6 * p8) == 0
    else:
        c1 = (p2 * p4 * p8) == 0
        c2 = (p2 * p6 * p8) == 0
    kill = img & (b >= 2) & (b <= 6) & (a == 1) & c1 & c2
    kill = _protect_components(img, kill)
    if kill.any():
        return img & ~kill, True
    return img, False


def _protect_components(img, kill):
    # Parallel deletion can erase a whole component (a 2x2 block is the
    # classic case).  A component dies iff it is a component of `kill` with
    # no surviving 8-neighbour; keep its first pixel in raster order.
    if not kill.any():
        return kill
    survivors = np.pad(img & ~kill, 1)
    touched = np.zeros_like(kill)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            touched |= survivors[dy:dy + kill.shape[0], dx:dx + kill.shape[1]]
    labels, count = label8(kill)
    if count == 0:
        return kill
    alive = np.zeros(count + 1, dtype=bool)
    alive[labels[kill & touched]] = True
    doomed = np.nonzero(~alive[1:])[0] + 1
    if len(doomed) == 0:
        return kill
    kill = kill.copy()
    flat = labels.ravel()
    for lab in doomed:
        kill.flat[int(np.argmax(flat == lab))] = False
    return kill


def thin(img):
    """Zhang-Suen thinning of a boolean image; returns a new boolean array."""
    out = np.asarray(img, dtype=bool).copy()
    while True:
        out, c1 = _subiteration(out, True)
        out, c2 = _subiteration(out, False)
        if not (c1 or c2):
            return out


def blur3(img):
    """3x3 box mean with edge-clamped sampling, rounded half up."""
    src = np.asarray(img, dtype=np.int32)
    p = np.pad(src, 1, mode="edge")
    h, w = src.shape
    total = np.zeros_like(src)
    for dy in range(3):
        for dx in range(3):
            total += p[dy:dy + h, dx:dx + w]
    return ((total * 2 + 9) // 18).astype(np.uint8)


def label8(img):
    """8-connected component labelling; returns (labels, count)."""
    img = np.asarray(img, dtype=bool)
    h, w = img.shape
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    ys, xs = np.nonzero(img)
    for y0, x0 in zip(ys.tolist(), xs.tolist()):
        if labels[y0, x0]:
            continue
        count += 1
        labels[y0, x0] = count
        stack = [(y0, x0)]
        while stack:
            y, x = stack.pop()
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and img[ny, nx] and not labels[ny, nx]:
                        labels[ny, nx] = count
                        stack.append((ny, nx))
    return labels, count
