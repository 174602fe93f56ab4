"""Hot loops: lattice pair sums and node-pair operator sums.

Two interchangeable backends implement the same functions:

* ``numba``: ``@njit`` loops, parallel over source nodes;
* ``numpy``: vectorized over source nodes, looping over offsets or nodes.

The active backend is chosen at import time. Set ``FRACKORN_BACKEND=numpy``
(or ``NUMBA_DISABLE_JIT=1``) to force the fallback; :func:`get_backend`
returns either implementation explicitly.

Grid kernels work on arrays padded to three spatial axes, shape
``(n1, n2, n3, m)``, and return one partial sum per source node so that the
final reduction is a deterministic pairwise ``np.sum``.

Modes
-----
``mode=0`` (whole space): the array is a crop of a compactly supported field
and everything outside it is zero. Offsets cover a half space, so each source
node also takes the term of the pair ``(x - z, x)`` whenever ``x - z`` lies
outside the array, where no source node would count it.
``mode=1`` (masked): only pairs with both ends inside ``inside`` count.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

__all__ = [
    "BACKEND",
    "get_backend",
    "seminorm_partials",
    "pairing_partials",
    "node_energy_grad",
    "node_energy_change",
    "node_pairing",
]


# ---------------------------------------------------------------------------
# numpy implementation
# ---------------------------------------------------------------------------


def _shift(a: np.ndarray, off, fill):
    """``out[x] = a[x + off]`` with ``fill`` where ``x + off`` leaves the array."""
    out = np.full_like(a, fill)
    src, dst = [], []
    for n, o in zip(a.shape[:3], off):
        o = int(o)
        if abs(o) >= n:
            return out
        if o >= 0:
            src.append(slice(o, n))
            dst.append(slice(0, n - o))
        else:
            src.append(slice(0, n + o))
            dst.append(slice(-o, n))
    out[tuple(dst)] = a[tuple(src)]
    return out


def _pow(a: np.ndarray, p: float) -> np.ndarray:
    return a * a if p == 2.0 else a**p


def _np_seminorm_partials(vals, inside, offs, wts, units, p, mode):
    n1, n2, n3, m = vals.shape
    outW = np.zeros((n1, n2, n3))
    outX = np.zeros((n1, n2, n3))
    for q in range(offs.shape[0]):
        fy = _shift(vals, offs[q], 0.0)
        iy = _shift(inside, offs[q], False)
        diff = fy - vals
        aW = _pow(np.sqrt(np.sum(diff * diff, axis=-1)), p)
        aX = _pow(np.abs(diff @ units[q, :m]), p)
        if mode == 0:
            # pairs with x - z outside the box have no source node; add them here
            im = ~_shift(inside, -offs[q], False)
            aW = aW + im * _pow(np.sqrt(np.sum(vals * vals, axis=-1)), p)
            aX = aX + im * _pow(np.abs(vals @ units[q, :m]), p)
            fac = 1.0
        else:
            fac = (iy & inside).astype(float)
        outW += wts[q] * fac * aW
        outX += wts[q] * fac * aX
    return outW, outX


def _np_pairing_partials(u, v, inside, offs, wts, units, p, mode):
    n1, n2, n3, m = u.shape
    out = np.zeros((n1, n2, n3))
    for q in range(offs.shape[0]):
        e = units[q, :m]
        Du = (_shift(u, offs[q], 0.0) - u) @ e
        Dv = (_shift(v, offs[q], 0.0) - v) @ e
        iy = _shift(inside, offs[q], False)
        if p == 2.0:
            phi = Du
        else:
            phi = np.abs(Du) ** (p - 2) * Du
        term = phi * Dv
        if mode == 0:
            im = ~_shift(inside, -offs[q], False)
            u0, v0 = u @ e, v @ e
            term = term + im * ((u0 if p == 2.0 else np.abs(u0) ** (p - 2) * u0) * v0)
            fac = 1.0
        else:
            fac = (iy & inside).astype(float)
        out += wts[q] * fac * term
    return out


def _np_node_energy_grad(u, X, Wt, p):
    n, d = u.shape
    energy = 0.0
    grad = np.zeros_like(u)
    for i in range(n - 1):
        z = X[i] - X[i + 1 :]
        r = np.sqrt(np.sum(z * z, axis=1))
        e = z / r[:, None]
        D = np.sum((u[i] - u[i + 1 :]) * e, axis=1)
        a = np.abs(D)
        w = Wt[i, i + 1 :]
        energy += 2.0 * np.sum(w * a**p) / p
        phi = 2.0 * w * a ** (p - 2) * D
        contrib = phi[:, None] * e
        grad[i] += contrib.sum(axis=0)
        grad[i + 1 :] -= contrib
    return energy, grad


def _pow_change(a, b, p):
    """``|a + b|^p - |a|^p`` without cancellation when ``b`` is small."""
    c = a + b
    out = np.abs(c) ** p - np.abs(a) ** p
    same = (a != 0) & (np.sign(c) == np.sign(a))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(same, b / np.where(a != 0, a, 1.0), 0.0)
        acc = np.abs(a) ** p * np.expm1(p * np.log1p(rel))
    return np.where(same, acc, out)


def _np_node_energy_change(u, v, X, Wt, p, step):
    n, d = u.shape
    total = np.zeros(n)
    for i in range(n - 1):
        z = X[i] - X[i + 1 :]
        r = np.sqrt(np.sum(z * z, axis=1))
        e = z / r[:, None]
        Du = np.sum((u[i] - u[i + 1 :]) * e, axis=1)
        Dv = np.sum((v[i] - v[i + 1 :]) * e, axis=1)
        total[i] = 2.0 * np.sum(Wt[i, i + 1 :] * _pow_change(Du, step * Dv, p)) / p
    return float(np.sum(total))


def _np_node_pairing(u, v, X, Wt, p):
    n, d = u.shape
    total = np.zeros(n)
    for i in range(n - 1):
        z = X[i] - X[i + 1 :]
        r = np.sqrt(np.sum(z * z, axis=1))
        e = z / r[:, None]
        Du = np.sum((u[i] - u[i + 1 :]) * e, axis=1)
        Dv = np.sum((v[i] - v[i + 1 :]) * e, axis=1)
        total[i] = 2.0 * np.sum(Wt[i, i + 1 :] * np.abs(Du) ** (p - 2) * Du * Dv)
    return float(np.sum(total))


numpy_backend = SimpleNamespace(
    name="numpy",
    seminorm_partials=_np_seminorm_partials,
    pairing_partials=_np_pairing_partials,
    node_energy_grad=_np_node_energy_grad,
    node_energy_change=_np_node_energy_change,
    node_pairing=_np_node_pairing,
)


# ---------------------------------------------------------------------------
# numba implementation
# ---------------------------------------------------------------------------


def _build_numba():
    import numba
    from numba import njit, prange

    if os.environ.get("NUMBA_THREADING_LAYER") is None:
        # avoids probing an outdated TBB runtime
        numba.config.THREADING_LAYER = "workqueue"

    @njit(cache=True, parallel=True)
    def seminorm_partials(vals, inside, offs, wts, units, p, mode):
        n1, n2, n3, m = vals.shape
        outW = np.zeros((n1, n2, n3))
        outX = np.zeros((n1, n2, n3))
        K = offs.shape[0]
        for flat in prange(n1 * n2 * n3):
            i = flat // (n2 * n3)
            j = (flat // n3) % n2
            k = flat % n3
            if mode == 1 and not inside[i, j, k]:
                continue
            accW = 0.0
            accX = 0.0
            for q in range(K):
                ii = i + offs[q, 0]
                jj = j + offs[q, 1]
                kk = k + offs[q, 2]
                out = ii < 0 or ii >= n1 or jj < 0 or jj >= n2 or kk < 0 or kk >= n3
                if out and mode == 1:
                    continue
                if not out and mode == 1 and not inside[ii, jj, kk]:
                    continue
                # pairs with x - z outside the box have no source node; count them here
                fac = 1.0
                if mode == 0:
                    im = i - offs[q, 0]
                    jm = j - offs[q, 1]
                    km = k - offs[q, 2]
                    if im < 0 or im >= n1 or jm < 0 or jm >= n2 or km < 0 or km >= n3:
                        fac = 2.0
                for rep in range(2):
                    if rep == 1:
                        if fac == 1.0:
                            break
                        out = True
                    sq = 0.0
                    dot = 0.0
                    for c in range(m):
                        if out:
                            dc = -vals[i, j, k, c]
                        else:
                            dc = vals[ii, jj, kk, c] - vals[i, j, k, c]
                        sq += dc * dc
                        dot += dc * units[q, c]
                    if p == 2.0:
                        aW = sq
                        aX = dot * dot
                    elif p == 3.0:
                        aW = sq * np.sqrt(sq)
                        aX = abs(dot) * dot * dot
                    else:
                        aW = sq ** (0.5 * p)
                        aX = abs(dot) ** p
                    accW += wts[q] * aW
                    accX += wts[q] * aX
            outW[i, j, k] = accW
            outX[i, j, k] = accX
        return outW, outX

    @njit(cache=True, parallel=True)
    def pairing_partials(u, v, inside, offs, wts, units, p, mode):
        n1, n2, n3, m = u.shape
        out = np.zeros((n1, n2, n3))
        K = offs.shape[0]
        for flat in prange(n1 * n2 * n3):
            i = flat // (n2 * n3)
            j = (flat // n3) % n2
            k = flat % n3
            if mode == 1 and not inside[i, j, k]:
                continue
            acc = 0.0
            for q in range(K):
                ii = i + offs[q, 0]
                jj = j + offs[q, 1]
                kk = k + offs[q, 2]
                out_ = ii < 0 or ii >= n1 or jj < 0 or jj >= n2 or kk < 0 or kk >= n3
                if out_ and mode == 1:
                    continue
                if not out_ and mode == 1 and not inside[ii, jj, kk]:
                    continue
                reps = 1
                if mode == 0:
                    im = i - offs[q, 0]
                    jm = j - offs[q, 1]
                    km = k - offs[q, 2]
                    if im < 0 or im >= n1 or jm < 0 or jm >= n2 or km < 0 or km >= n3:
                        reps = 2
                for rep in range(reps):
                    if rep == 1:
                        out_ = True
                    Du = 0.0
                    Dv = 0.0
                    for c in range(m):
                        if out_:
                            Du -= u[i, j, k, c] * units[q, c]
                            Dv -= v[i, j, k, c] * units[q, c]
                        else:
                            Du += (u[ii, jj, kk, c] - u[i, j, k, c]) * units[q, c]
                            Dv += (v[ii, jj, kk, c] - v[i, j, k, c]) * units[q, c]
                    if p == 2.0:
                        phi = Du
                    elif p == 3.0:
                        phi = abs(Du) * Du
                    elif Du == 0.0:
                        phi = 0.0
                    else:
                        phi = abs(Du) ** (p - 2.0) * Du
                    acc += wts[q] * phi * Dv
            out[i, j, k] = acc
        return out

    @njit(cache=True)
    def node_energy_grad(u, X, Wt, p):
        n, d = u.shape
        energy = 0.0
        grad = np.zeros_like(u)
        e = np.empty(d)
        for i in range(n - 1):
            for j in range(i + 1, n):
                r2 = 0.0
                for c in range(d):
                    e[c] = X[i, c] - X[j, c]
                    r2 += e[c] * e[c]
                r = np.sqrt(r2)
                D = 0.0
                for c in range(d):
                    e[c] /= r
                    D += (u[i, c] - u[j, c]) * e[c]
                a = abs(D)
                w = Wt[i, j]
                if p == 2.0:
                    energy += w * a * a
                    phi = 2.0 * w * D
                elif p == 3.0:
                    energy += 2.0 * w * a * a * a / 3.0
                    phi = 2.0 * w * a * D
                else:
                    energy += 2.0 * w * a**p / p
                    phi = 2.0 * w * a ** (p - 2.0) * D
                for c in range(d):
                    grad[i, c] += phi * e[c]
                    grad[j, c] -= phi * e[c]
        return energy, grad

    @njit(cache=True)
    def node_pairing(u, v, X, Wt, p):
        n, d = u.shape
        total = 0.0
        for i in range(n - 1):
            acc = 0.0
            for j in range(i + 1, n):
                r2 = 0.0
                for c in range(d):
                    r2 += (X[i, c] - X[j, c]) ** 2
                r = np.sqrt(r2)
                Du = 0.0
                Dv = 0.0
                for c in range(d):
                    ec = (X[i, c] - X[j, c]) / r
                    Du += (u[i, c] - u[j, c]) * ec
                    Dv += (v[i, c] - v[j, c]) * ec
                if p == 2.0:
                    phi = Du
                elif Du == 0.0:
                    phi = 0.0
                else:
                    phi = abs(Du) ** (p - 2.0) * Du
                acc += 2.0 * Wt[i, j] * phi * Dv
            total += acc
        return total

    @njit(cache=True)
    def node_energy_change(u, v, X, Wt, p, step):
        n, d = u.shape
        total = 0.0
        for i in range(n - 1):
            acc = 0.0
            for j in range(i + 1, n):
                r2 = 0.0
                for c in range(d):
                    r2 += (X[i, c] - X[j, c]) ** 2
                r = np.sqrt(r2)
                a = 0.0
                b = 0.0
                for c in range(d):
                    ec = (X[i, c] - X[j, c]) / r
                    a += (u[i, c] - u[j, c]) * ec
                    b += (v[i, c] - v[j, c]) * ec
                b *= step
                if p == 2.0:
                    ch = b * (2.0 * a + b)
                elif a != 0.0 and (a + b) * a > 0.0:
                    ch = abs(a) ** p * np.expm1(p * np.log1p(b / a))
                else:
                    ch = abs(a + b) ** p - abs(a) ** p
                acc += 2.0 * Wt[i, j] * ch / p
            total += acc
        return total

    return SimpleNamespace(
        name="numba",
        seminorm_partials=seminorm_partials,
        pairing_partials=pairing_partials,
        node_energy_grad=node_energy_grad,
        node_energy_change=node_energy_change,
        node_pairing=node_pairing,
        set_threads=numba.set_num_threads,
    )


def _want_numba() -> bool:
    if os.environ.get("NUMBA_DISABLE_JIT", "0") not in ("", "0"):
        return False
    return os.environ.get("FRACKORN_BACKEND", "numba").strip().lower() != "numpy"


_numba_backend = None


def get_backend(name: str | None = None) -> SimpleNamespace:
    """Return the ``"numba"`` or ``"numpy"`` backend (default: the active one)."""
    global _numba_backend
    name = BACKEND if name is None else name
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        if _numba_backend is None:
            _numba_backend = _build_numba()
        return _numba_backend
    raise ValueError(f"unknown backend {name!r}")


def _initial_backend() -> str:
    if not _want_numba():
        return "numpy"
    try:
        get_backend("numba")
    except ImportError:
        return "numpy"
    return "numba"


BACKEND = _initial_backend()
_active = get_backend(BACKEND)
seminorm_partials = _active.seminorm_partials
pairing_partials = _active.pairing_partials
node_energy_grad = _active.node_energy_grad
node_energy_change = _active.node_energy_change
node_pairing = _active.node_pairing


def set_threads(n: int) -> None:
    """Set the worker thread count of the numba backend (no-op for numpy)."""
    if BACKEND == "numba" and n > 0:
        import numba

        get_backend("numba").set_threads(min(n, numba.config.NUMBA_NUM_THREADS))
