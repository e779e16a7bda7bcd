"""Straight-line reference implementations used as test oracles.

Deliberately loop-based and free of the package's vectorized helpers.
"""
import math

import numpy as np


def conv2d(x, w, b):
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((n, k, h, wd))
    for ni in range(n):
        for ki in range(k):
            for i in range(h):
                for j in range(wd):
                    acc = b.reshape(-1)[ki]
                    for ci in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                y, xx = i + di - ph, j + dj - pw
                                if 0 <= y < h and 0 <= xx < wd:
                                    acc += x[ni, ci, y, xx] * w[ki, ci, di, dj]
                    out[ni, ki, i, j] = acc
    return out


def sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def channel_attention(x, w1, b1, w2, b2):
    n, c = x.shape[:2]
    out = np.empty_like(x, dtype=np.float64)
    for ni in range(n):
        pooled = [x[ni, ci].mean() for ci in range(c)]
        hidden = [max(0.0, b1.reshape(-1)[r] + sum(w1[r, ci, 0, 0] * pooled[ci] for ci in range(c)))
                  for r in range(w1.shape[0])]
        for ci in range(c):
            z = b2.reshape(-1)[ci] + sum(w2[ci, r, 0, 0] * hidden[r] for r in range(len(hidden)))
            out[ni, ci] = x[ni, ci] * (1.0 / (1.0 + math.exp(-z)))
    return out


def pixel_attention(x, w1, b1, w2, b2):
    hidden = np.maximum(conv2d(x, w1, b1), 0.0)
    mask = sigmoid(conv2d(hidden, w2, b2))
    return x * mask


def gaussian_window(size=11, sigma=1.5):
    g = [math.exp(-((i - (size - 1) / 2) ** 2) / (2 * sigma**2)) for i in range(size)]
    s = sum(g)
    g = [v / s for v in g]
    return np.array([[gi * gj for gj in g] for gi in g])


def ssim(a, b, c1=1e-4, c2=9e-4, size=11, sigma=1.5):
    """Mean SSIM of (H, W, C) images over all full windows and channels."""
    win = gaussian_window(size, sigma)
    h, w, ch = a.shape
    vals = []
    for c in range(ch):
        for i in range(h - size + 1):
            for j in range(w - size + 1):
                pa = a[i : i + size, j : j + size, c].astype(np.float64)
                pb = b[i : i + size, j : j + size, c].astype(np.float64)
                ma = (win * pa).sum()
                mb = (win * pb).sum()
                va = (win * (pa - ma) ** 2).sum()
                vb = (win * (pb - mb) ** 2).sum()
                cov = (win * (pa - ma) * (pb - mb)).sum()
                vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


def psnr(a, b):
    diffs = (np.asarray(a, np.float64) - np.asarray(b, np.float64)).ravel()
    mse = sum(float(d) * float(d) for d in diffs) / len(diffs)
    return 99.0 if mse == 0 else 10 * math.log10(1.0 / mse)


def _trimmed(values, alpha=0.1):
    x = sorted(values)
    k = len(x)
    lo = math.ceil(alpha * k)
    hi = math.floor(alpha * k)
    kept = x[lo : k - hi]
    return sum(kept) / len(kept)


def uicm(img):
    rgb = np.asarray(img, np.float64) * 255
    rg, yb = [], []
    for i in range(rgb.shape[0]):
        for j in range(rgb.shape[1]):
            r, g, b = rgb[i, j]
            rg.append(r - g)
            yb.append((r + g) / 2 - b)
    mrg, myb = _trimmed(rg), _trimmed(yb)
    vrg = sum((v - mrg) ** 2 for v in rg) / len(rg)
    vyb = sum((v - myb) ** 2 for v in yb) / len(yb)
    return -0.0268 * math.sqrt(mrg**2 + myb**2) + 0.1586 * math.sqrt(vrg + vyb)


def _sobel(plane):
    h, w = plane.shape

    def px(i, j):
        # symmetric (edge-repeating) boundary
        i = -i - 1 if i < 0 else (2 * h - i - 1 if i >= h else i)
        j = -j - 1 if j < 0 else (2 * w - j - 1 if j >= w else j)
        return plane[i, j]

    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    ky = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            gx = sum(kx[a][b] * px(i + a - 1, j + b - 1) for a in range(3) for b in range(3))
            gy = sum(ky[a][b] * px(i + a - 1, j + b - 1) for a in range(3) for b in range(3))
            out[i, j] = math.sqrt(gx * gx + gy * gy)
    return out


def _block_extrema(plane, size):
    k1, k2 = plane.shape[0] // size, plane.shape[1] // size
    for bi in range(k1):
        for bj in range(k2):
            block = plane[bi * size : (bi + 1) * size, bj * size : (bj + 1) * size]
            yield float(block.max()), float(block.min()), k1 * k2


def uism(img, size=8):
    rgb = np.asarray(img, np.float64) * 255
    total = 0.0
    for c, lam in enumerate((0.299, 0.587, 0.114)):
        edge = rgb[..., c] * _sobel(rgb[..., c])
        acc, nblocks = 0.0, 1
        for hi, lo, nblocks in _block_extrema(edge, size):
            if hi > 0 and lo > 0:
                acc += math.log(hi / lo)
        total += lam * 2.0 / nblocks * acc
    return total


def uiconm(img, size=8, gamma=1026.0):
    rgb = np.asarray(img, np.float64) * 255
    lum = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    acc, nblocks = 0.0, 1
    for hi, lo, nblocks in _block_extrema(lum, size):
        top = gamma * (hi - lo) / (gamma - lo)
        bottom = hi + lo - hi * lo / gamma
        if top > 0 and bottom > 0:
            m = top / bottom
            acc += m * math.log(m)
    return -acc / nblocks


def param_count(groups, blocks, filters, reduction, ca=True, pa=True):
    """Closed-form learnable-parameter count of the network."""
    f = filters
    r = max(1, -(-f // reduction))
    conv3 = lambda cin, cout: cin * cout * 9 + cout  # noqa: E731
    conv1 = lambda cin, cout: cin * cout + cout  # noqa: E731
    att = (conv1(f, r) + conv1(r, f) if ca else 0) + (conv3(f, r) + conv3(r, 1) if pa else 0)
    block = 2 * conv3(f, f) + att
    group = blocks * block + conv3(f, f)
    return conv3(3, f) + groups * group + att + conv3(f, f) + conv3(f, 3)


def rfab(x, p, prefix, ca=True, pa=True, local=True):
    """Straight-line residual attention block on plain numpy weights."""
    conv = lambda v, name: conv2d(v, p[f"{name}.w"], p[f"{name}.b"])  # noqa: E731
    y = np.maximum(conv(x, f"{prefix}.conv1"), 0.0)
    if local:
        y = y + x
    y = conv(y, f"{prefix}.conv2")
    if ca:
        y = channel_attention(y, p[f"{prefix}.ca1.w"], p[f"{prefix}.ca1.b"], p[f"{prefix}.ca2.w"], p[f"{prefix}.ca2.b"])
    if pa:
        y = pixel_attention(y, p[f"{prefix}.pa1.w"], p[f"{prefix}.pa1.b"], p[f"{prefix}.pa2.w"], p[f"{prefix}.pa2.b"])
    return y + x
