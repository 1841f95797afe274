"""Double-sum engine on uniform periodic grids.

For a field sampled on a periodic grid, ``sum_x sum_y |f(x) - f(y)|^p k(y - x)``
only depends on the grid offset ``o = y - x``; we collect
``G(o) = sum_x |f(x) - f(x + o)|^p`` per offset and contract with the kernel.
"""

from __future__ import annotations

import os

# the system TBB is too old for numba; avoid the noisy probe
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numba  # noqa: E402
import numpy as np  # noqa: E402


@numba.njit(cache=True, parallel=True)
def _offset_sums_2d(f, o1, o2, mode, p):
    n1, n2 = f.shape
    out = np.empty(o1.size)
    for k in numba.prange(o1.size):
        a = o1[k] % n1
        b = o2[k] % n2
        acc = 0.0
        for i in range(n1):
            ii = i + a
            if ii >= n1:
                ii -= n1
            row = 0.0
            for j in range(n2):
                jj = j + b
                if jj >= n2:
                    jj -= n2
                d = abs(f[i, j] - f[ii, jj])
                if mode == 1:
                    row += d
                elif mode == 2:
                    row += d * d
                else:
                    row += d ** p
            acc += row
        out[k] = acc
    return out


def _power(d, p):
    return d if p == 1.0 else d * d if p == 2.0 else d ** p


def offset_sums(values: np.ndarray, offsets: np.ndarray, p: float,
                method: str = "auto") -> np.ndarray:
    """``G(o) = sum_x |f(x) - f(x+o)|^p`` for each row ``o`` of ``offsets``.

    ``method`` is ``"direct"`` (compiled loops), ``"fft"`` (autocorrelation,
    exact for two-valued fields) or ``"auto"``.
    """
    f = np.ascontiguousarray(values, dtype=float)
    levels = np.unique(f)
    if levels.size <= 1:
        return np.zeros(len(offsets))
    two_valued = levels.size == 2
    if method == "fft" and not two_valued:
        raise ValueError("the FFT route needs a two-valued field")
    if method == "fft" or (method == "auto" and two_valued):
        ind = (f == levels[1]).astype(float)
        spec = np.fft.rfftn(ind)
        corr = np.fft.irfftn(np.conj(spec) * spec, s=ind.shape, axes=tuple(range(ind.ndim)))
        corr = np.rint(corr)
        idx = tuple(np.mod(offsets[:, i], ind.shape[i]) for i in range(ind.ndim))
        n1 = float(ind.sum())
        return _power(levels[1] - levels[0], p) * 2.0 * (n1 - corr[idx])
    if f.ndim <= 2:
        f2 = f.reshape(f.shape[0], -1)
        o1 = np.ascontiguousarray(offsets[:, 0], dtype=np.int64)
        o2 = (np.ascontiguousarray(offsets[:, 1], dtype=np.int64) if f.ndim == 2
              else np.zeros_like(o1))
        mode = 1 if p == 1.0 else 2 if p == 2.0 else 0
        return _offset_sums_2d(f2, o1, o2, mode, float(p))
    out = np.empty(len(offsets))
    for k, o in enumerate(offsets):
        out[k] = _power(np.abs(f - np.roll(f, tuple(-o), axis=tuple(range(f.ndim)))), p).sum()
    return out


def offset_set(shape, spacings, r_max: float | None):
    """Integer grid offsets whose minimal displacement has length <= ``r_max``.

    Each residue class modulo the grid shape appears once.
    """
    ranges = []
    for n, h in zip(shape, spacings):
        full = np.arange(-((n - 1) // 2), n // 2 + 1)
        if r_max is not None:
            K = int(np.ceil(r_max / h))
            if 2 * K + 1 < n:
                full = np.arange(-K, K + 1)
        ranges.append(full)
    mesh = np.meshgrid(*ranges, indexing="ij")
    offs = np.stack([g.ravel() for g in mesh], axis=-1).astype(np.int64)
    disp = offs * np.asarray(spacings)
    if r_max is not None:
        keep = np.sqrt(np.sum(disp * disp, axis=-1)) <= r_max * (1 + 1e-12)
        offs, disp = offs[keep], disp[keep]
    return offs, disp


def half_offsets(offs: np.ndarray, shape):
    """Representatives of ``{o, -o}`` pairs with multiplicity weights 2 or 1."""
    shape = np.asarray(shape)
    key = np.mod(offs, shape)
    neg = np.mod(-offs, shape)
    # lexicographic comparison of residue vectors
    lin_key = np.ravel_multi_index(tuple(key.T), tuple(shape))
    lin_neg = np.ravel_multi_index(tuple(neg.T), tuple(shape))
    present = set(lin_key.tolist())
    pick = (lin_key < lin_neg) | (lin_key == lin_neg)
    # a representative only stands for both if its partner is in the set
    partner_in = np.array([v in present for v in lin_neg.tolist()], dtype=bool)
    pick |= ~partner_in
    mult = np.where((lin_key != lin_neg) & partner_in, 2.0, 1.0)
    return offs[pick], mult[pick]


def pair_sum(values: np.ndarray, spacings, weight_fn, p: float, r_max: float | None,
             symmetric: bool = True, method: str = "auto") -> float:
    """``sum_x sum_o w(o h) |f(x) - f(x + o)|^p`` times the squared cell volume."""
    shape = values.shape
    offs, _ = offset_set(shape, spacings, r_max)
    if symmetric:
        offs, mult = half_offsets(offs, shape)
    else:
        mult = np.ones(len(offs))
    zero = ~np.any(offs != 0, axis=1)
    offs, mult = offs[~zero], mult[~zero]
    if len(offs) == 0:
        return 0.0
    disp = offs * np.asarray(spacings)
    w = weight_fn(disp) * mult
    nz = w != 0.0
    if not np.any(nz):
        return 0.0
    G = offset_sums(values, offs[nz], p, method)
    cell = float(np.prod(spacings))
    return float(np.sum(w[nz] * G)) * cell * cell
