"""Pure-numpy implementations of the hot kernels.

Semantically identical to the compiled module ``_native``; used as the
fallback when the extension is not built (or when
``ROLEENGINE_PURE_KERNELS`` is set).
"""

import numpy as np

BACKEND_NAME = "pure"


def thin_pass(img: np.ndarray, step: int) -> int:
    """One Zhang-Suen subiteration over a uint8 0/1 image, in place.

    Pixels flagged by the deletion conditions of subiteration ``step``
    (0 or 1) are removed simultaneously. Returns the number of removed
    pixels. Border pixels are never removed (callers pad if needed).
    """
    p = np.pad(img, 1)
    # Neighbours P2..P9, clockwise from north.
    p2 = p[:-2, 1:-1]
    p3 = p[:-2, 2:]
    p4 = p[1:-1, 2:]
    p5 = p[2:, 2:]
    p6 = p[2:, 1:-1]
    p7 = p[2:, :-2]
    p8 = p[1:-1, :-2]
    p9 = p[:-2, :-2]

    ring = [p2, p3, p4, p5, p6, p7, p8, p9]
    b = sum(n.astype(np.int32) for n in ring)
    a = np.zeros_like(b)
    for i in range(8):
        cur = ring[i]
        nxt = ring[(i + 1) % 8]
        a += ((cur == 0) & (nxt == 1)).astype(np.int32)

    cond = (img == 1) & (b >= 2) & (b <= 6) & (a == 1)
    if step == 0:
        cond &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        cond &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    cond[0, :] = cond[-1, :] = False
    cond[:, 0] = cond[:, -1] = False

    removed = int(cond.sum())
    img[cond] = 0
    return removed


def sample_bilinear(values: np.ndarray, pts: np.ndarray, resolution: float):
    """Bilinearly interpolate a cell-centered field at world points.

    ``pts`` is (n, 2) in world meters, columns (x, y); x maps to grid
    columns and y to rows, cell centers at ``(i + 0.5) * resolution``.
    Returns ``(vals, grads)`` where ``grads`` is the exact derivative of
    the interpolant, (n, 2) in field-units per meter. Points outside the
    grid are clamped to the border cells.
    """
    h, w = values.shape
    pts = np.asarray(pts, dtype=np.float64)
    u = np.clip(pts[:, 0] / resolution - 0.5, 0.0, w - 1 - 1e-9)
    v = np.clip(pts[:, 1] / resolution - 0.5, 0.0, h - 1 - 1e-9)
    c0 = np.minimum(u.astype(np.intp), w - 2)
    r0 = np.minimum(v.astype(np.intp), h - 2)
    fu = u - c0
    fv = v - r0

    v00 = values[r0, c0]
    v01 = values[r0, c0 + 1]
    v10 = values[r0 + 1, c0]
    v11 = values[r0 + 1, c0 + 1]

    vals = (1 - fv) * ((1 - fu) * v00 + fu * v01) + fv * ((1 - fu) * v10 + fu * v11)
    ddx = ((1 - fv) * (v01 - v00) + fv * (v11 - v10)) / resolution
    ddy = ((1 - fu) * (v10 - v00) + fu * (v11 - v01)) / resolution
    return vals, np.stack([ddx, ddy], axis=1)


def stamp_disc(field: np.ndarray, cx: float, cy: float, radius: float,
               resolution: float, band: float) -> None:
    """Min-combine ``dist((x,y), center) - radius`` into ``field`` in place.

    Only cells within ``radius + band`` of the center are touched; beyond
    that the disc's signed distance exceeds every value the callers care
    about, so the stamp is a no-op there by construction.
    """
    h, w = field.shape
    reach = radius + band
    c_lo = max(int((cx - reach) / resolution - 0.5), 0)
    c_hi = min(int((cx + reach) / resolution + 0.5) + 1, w)
    r_lo = max(int((cy - reach) / resolution - 0.5), 0)
    r_hi = min(int((cy + reach) / resolution + 0.5) + 1, h)
    if c_lo >= c_hi or r_lo >= r_hi:
        return
    xs = (np.arange(c_lo, c_hi) + 0.5) * resolution - cx
    ys = (np.arange(r_lo, r_hi) + 0.5) * resolution - cy
    d = np.hypot(ys[:, None], xs[None, :]) - radius
    window = field[r_lo:r_hi, c_lo:c_hi]
    np.minimum(window, d, out=window)
