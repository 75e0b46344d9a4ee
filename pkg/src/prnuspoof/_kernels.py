"""Compiled inner loops for the wavelet denoiser.

These fuse padding, the periodized orthogonal DWT, the local Wiener
shrinkage and the inverse transform into one pass per image, which is
what the spoofing loop calls thousands of times. The numpy path in
``denoise.py`` computes the same thing stage by stage and the tests hold
the two together.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _mirror(i, n):
    # np.pad(..., mode="symmetric") index mapping for the trailing side
    period = 2 * n
    j = i % period
    if j >= n:
        j = period - 1 - j
    return j


@njit(cache=True)
def _analyze(src, r, c, lo_f, hi_f, tmp, ext, out):
    L = lo_f.shape[0]
    hr = r // 2
    hc = c // 2
    # rows: [lo | hi] along the column axis
    for i in range(r):
        for n in range(c):
            ext[n] = src[i, n]
        for n in range(L):
            ext[c + n] = src[i, n % c]
        for k in range(hc):
            a = 0.0
            d = 0.0
            base = 2 * k
            for j in range(L):
                v = ext[base + j]
                a += lo_f[j] * v
                d += hi_f[j] * v
            tmp[i, k] = a
            tmp[i, hc + k] = d
    # columns
    for k in range(hr):
        for col in range(c):
            out[k, col] = 0.0
            out[hr + k, col] = 0.0
        for j in range(L):
            idx = (2 * k + j) % r
            a = lo_f[j]
            d = hi_f[j]
            for col in range(c):
                v = tmp[idx, col]
                out[k, col] += a * v
                out[hr + k, col] += d * v


@njit(cache=True)
def _synthesize(src, r, c, lo_f, hi_f, tmp, ext, out):
    L = lo_f.shape[0]
    hr = r // 2
    hc = c // 2
    for i in range(r):
        for col in range(c):
            tmp[i, col] = 0.0
    for k in range(hr):
        for j in range(L):
            idx = (2 * k + j) % r
            a = lo_f[j]
            d = hi_f[j]
            for col in range(c):
                tmp[idx, col] += a * src[k, col] + d * src[hr + k, col]
    for i in range(r):
        for n in range(c + L):
            ext[n] = 0.0
        for k in range(hc):
            a = tmp[i, k]
            d = tmp[i, hc + k]
            base = 2 * k
            for j in range(L):
                ext[base + j] += lo_f[j] * a + hi_f[j] * d
        for n in range(c):
            out[i, n] = ext[n]
        for n in range(c, c + L):
            out[i, n % c] += ext[n]


@njit(cache=True)
def _shrink_block(coef, r0, c0, hh, ww, noise_var, windows, pad, S, out):
    # integral image of squared coefficients with edge replication
    h2 = hh + 2 * pad
    w2 = ww + 2 * pad
    for j in range(w2 + 1):
        S[0, j] = 0.0
    for i in range(h2):
        ii = min(max(i - pad, 0), hh - 1)
        S[i + 1, 0] = 0.0
        run = 0.0
        for j in range(w2):
            jj = min(max(j - pad, 0), ww - 1)
            v = coef[r0 + ii, c0 + jj]
            run += v * v
            S[i + 1, j + 1] = S[i, j + 1] + run
    for i in range(hh):
        for j in range(ww):
            best = np.inf
            for w in windows:
                q = w // 2
                a0 = i + pad - q
                a1 = i + pad + q + 1
                b0 = j + pad - q
                b1 = j + pad + q + 1
                m = (S[a1, b1] - S[a0, b1] - S[a1, b0] + S[a0, b0]) / (w * w) - noise_var
                if m < best:
                    best = m
            if best < 0.0:
                best = 0.0
            out[r0 + i, c0 + j] = coef[r0 + i, c0 + j] * best / (best + noise_var)


@njit(cache=True)
def _filter_one(img, ph, pw, lo_f, hi_f, levels, noise_var, windows,
                work, coef, tmp, ext, S, out):
    h, w = img.shape
    for i in range(ph):
        si = _mirror(i, h)
        for j in range(pw):
            work[i, j] = img[si, _mirror(j, w)]
    pad = 0
    for win in windows:
        if win // 2 > pad:
            pad = win // 2
    r = ph
    c = pw
    for lev in range(levels):
        _analyze(work, r, c, lo_f, hi_f, tmp, ext, coef)
        hr = r // 2
        hc = c // 2
        for i in range(r):
            for j in range(c):
                work[i, j] = coef[i, j]
        _shrink_block(coef, 0, hc, hr, hc, noise_var, windows, pad, S, work)
        _shrink_block(coef, hr, 0, hr, hc, noise_var, windows, pad, S, work)
        _shrink_block(coef, hr, hc, hr, hc, noise_var, windows, pad, S, work)
        r = hr
        c = hc
    for lev in range(levels):
        r *= 2
        c *= 2
        _synthesize(work, r, c, lo_f, hi_f, tmp, ext, coef)
        for i in range(r):
            for j in range(c):
                work[i, j] = coef[i, j]
    for i in range(h):
        for j in range(w):
            out[i, j] = work[i, j]


@njit(cache=True)
def wavelet_filter_batch(imgs, ph, pw, lo_f, hi_f, levels, noise_var, windows):
    """Denoised versions of a stack of equally sized images.

    ``ph`` and ``pw`` are the padded working sizes; each must be a
    multiple of ``2**levels``.
    """
    n, h, w = imgs.shape
    out = np.empty((n, h, w))
    work = np.empty((ph, pw))
    coef = np.empty((ph, pw))
    tmp = np.empty((ph, pw))
    ext = np.empty(pw + lo_f.shape[0])
    pad = 0
    for win in windows:
        if win // 2 > pad:
            pad = win // 2
    S = np.empty((ph // 2 + 2 * pad + 1, pw // 2 + 2 * pad + 1))
    for b in range(n):
        _filter_one(imgs[b], ph, pw, lo_f, hi_f, levels, noise_var, windows,
                    work, coef, tmp, ext, S, out[b])
    return out
