"""Hot inner loops, compiled with numba when available.

Set ``COGCAP_DISABLE_NUMBA=1`` to force the pure-numpy implementations.
Both paths are always importable as ``*_numba`` / ``*_numpy`` so tests and
the benchmark can compare them directly; the un-suffixed names are the
ones the rest of the package calls.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("COGCAP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba as nb
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and not _DISABLED

# Lindley blocks for the numpy path; short enough that a cumulative sum
# inside one block cannot accumulate visible rounding.
_BLOCK = 4096


def _njit(fn):
    if HAVE_NUMBA:
        return nb.njit(cache=True, nogil=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# Energy detector statistic
# ---------------------------------------------------------------------------

def _energy_statistic(re, im):
    trials, n = re.shape
    out = np.empty(trials)
    for t in range(trials):
        acc = 0.0
        for i in range(n):
            acc += re[t, i] * re[t, i] + im[t, i] * im[t, i]
        out[t] = acc / n
    return out


energy_statistic_numba = _njit(_energy_statistic)


def energy_statistic_numpy(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", re, re) / re.shape[1] + np.einsum("ij,ij->i", im, im) / im.shape[1]


# ---------------------------------------------------------------------------
# Lindley recursion
# ---------------------------------------------------------------------------

def _lindley_path(arrival, service, q0):
    # Q_{k+1} = max(Q_k + arrival - service_k, 0) with a Neumaier-compensated
    # running sum; out[k] is the queue after frame k.
    n = service.shape[0]
    out = np.empty(n)
    q = q0
    comp = 0.0
    for k in range(n):
        d = arrival - service[k]
        s = q + d
        if abs(q) >= abs(d):
            comp += (q - s) + d
        else:
            comp += (d - s) + q
        q = s
        if q + comp <= 0.0:
            q = 0.0
            comp = 0.0
        out[k] = q + comp
    return out


def _lindley_exceedances(arrival, service, q_grid, warmup, q0):
    # For k >= warmup and ascending q_grid:
    #   counts[j] = #{k : Q_k >= q_grid[j]}
    #   ups[j]    = #{k : Q_{k-1} < q_grid[j] <= Q_k}, entries into the tail
    n = service.shape[0]
    m = q_grid.shape[0]
    hist = np.zeros(m + 1, dtype=np.int64)
    diff = np.zeros(m + 1, dtype=np.int64)
    q = q0
    comp = 0.0
    qmax = 0.0
    prev_idx = 0
    while prev_idx < m and q_grid[prev_idx] <= q0:
        prev_idx += 1
    for k in range(n):
        d = arrival - service[k]
        s = q + d
        if abs(q) >= abs(d):
            comp += (q - s) + d
        else:
            comp += (d - s) + q
        q = s
        if q + comp <= 0.0:
            q = 0.0
            comp = 0.0
        v = q + comp
        # number of grid points <= v
        lo = 0
        hi = m
        while lo < hi:
            mid = (lo + hi) // 2
            if q_grid[mid] <= v:
                lo = mid + 1
            else:
                hi = mid
        if k >= warmup:
            if v > qmax:
                qmax = v
            hist[lo] += 1
            if lo > prev_idx:
                diff[prev_idx] += 1
                diff[lo] -= 1
        prev_idx = lo
    counts = np.zeros(m, dtype=np.int64)
    ups = np.zeros(m, dtype=np.int64)
    acc = 0
    for j in range(m, 0, -1):
        acc += hist[j]
        counts[j - 1] = acc
    acc = 0
    for j in range(m):
        acc += diff[j]
        ups[j] = acc
    return counts, ups, q + comp, qmax


lindley_path_numba = _njit(_lindley_path)
lindley_exceedances_numba = _njit(_lindley_exceedances)


def lindley_path_numpy(arrival: float, service: np.ndarray, q0: float = 0.0) -> np.ndarray:
    """Blockwise reflection map: Q_k = S_k + max(q0, -min_{j<=k} S_j), S_0 = 0."""
    service = np.asarray(service, dtype=float)
    out = np.empty(service.shape[0])
    q = float(q0)
    for start in range(0, service.shape[0], _BLOCK):
        inc = arrival - service[start:start + _BLOCK]
        walk = np.cumsum(inc)
        floor = np.minimum(np.minimum.accumulate(walk), 0.0)
        block = walk + np.maximum(q, -floor)
        np.maximum(block, 0.0, out=block)
        out[start:start + block.shape[0]] = block
        q = float(block[-1])
    return out


def lindley_exceedances_numpy(arrival: float, service: np.ndarray, q_grid: np.ndarray,
                              warmup: int = 0, q0: float = 0.0):
    """(counts, ups, final queue, max queue); see the compiled kernel for definitions."""
    q_grid = np.asarray(q_grid, dtype=float)
    m = q_grid.shape[0]
    path = lindley_path_numpy(arrival, service, q0)
    idx = np.searchsorted(q_grid, path, side="right")
    prev = np.concatenate(([np.searchsorted(q_grid, q0, side="right")], idx[:-1]))
    idx, prev = idx[warmup:], prev[warmup:]
    hist = np.bincount(idx, minlength=m + 1)
    counts = np.cumsum(hist[::-1])[::-1][1:].astype(np.int64)
    rising = idx > prev
    diff = (np.bincount(prev[rising], minlength=m + 1)
            - np.bincount(idx[rising], minlength=m + 1))
    ups = np.cumsum(diff)[:m].astype(np.int64)
    kept = path[warmup:]
    qmax = float(kept.max()) if kept.size else 0.0
    return counts, ups, float(path[-1]) if path.size else float(q0), qmax


if USING_NUMBA:
    energy_statistic = energy_statistic_numba
    lindley_path = lindley_path_numba
    lindley_exceedances = lindley_exceedances_numba
else:
    energy_statistic = energy_statistic_numpy
    lindley_path = lindley_path_numpy
    lindley_exceedances = lindley_exceedances_numpy
