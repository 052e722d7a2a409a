"""Hot loops of the monotone scheme.

Every routine exists twice: an ``@njit`` version used when numba is
available and a vectorised numpy version selected by ``HJLAB_NO_NUMBA=1``.
Both follow the same arithmetic so results agree to rounding.

Branch Hamiltonians are passed as flat arrays (``kinds``, ``params``,
``tables``) so the compiled kernel never calls back into Python.
"""

from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, njit

KIND_TRAPEZOID = 0
KIND_QUADRATIC = 1
KIND_TABLE = 2
N_PARAMS = 6

# boundary codes understood by advance()
BC_DIRICHLET = 0
BC_ENVELOPE = 1  # H^- at the left end, H^+ at the right end
BC_SLOPE = 2


def h_eval_vec(kind, prm, tab, p):
    """Evaluate one branch Hamiltonian on an array of slopes."""
    p = np.asarray(p, dtype=np.float64)
    if kind == KIND_TRAPEZOID:
        return prm[4] + prm[2] * np.maximum(prm[0] - p, 0.0) + prm[3] * np.maximum(p - prm[1], 0.0)
    if kind == KIND_QUADRATIC:
        d = p - prm[0]
        return prm[1] * d * d + prm[2]
    n = int(prm[0])
    s = (p - prm[1]) / prm[2]
    i = np.clip(np.floor(s), 0, n - 2).astype(np.int64)
    w = s - i
    return tab[i] + w * (tab[i + 1] - tab[i])


@njit(cache=True)
def h_eval_scalar(kind, prm, tab, p):
    if kind == 0:
        return prm[4] + prm[2] * max(prm[0] - p, 0.0) + prm[3] * max(p - prm[1], 0.0)
    if kind == 1:
        d = p - prm[0]
        return prm[1] * d * d + prm[2]
    n = int(prm[0])
    s = (p - prm[1]) / prm[2]
    i = int(np.floor(s))
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    w = s - i
    return tab[i] + w * (tab[i + 1] - tab[i])


@njit(cache=True)
def _h_row(kind, prms, tabs, b, p):
    # row-indexed twin of h_eval_scalar; avoids building row views per node
    if kind == 0:
        return prms[b, 4] + prms[b, 2] * max(prms[b, 0] - p, 0.0) + prms[b, 3] * max(p - prms[b, 1], 0.0)
    if kind == 1:
        d = p - prms[b, 0]
        return prms[b, 1] * d * d + prms[b, 2]
    n = int(prms[b, 0])
    s = (p - prms[b, 1]) / prms[b, 2]
    i = int(np.floor(s))
    if i < 0:
        i = 0
    elif i > n - 2:
        i = n - 2
    w = s - i
    return tabs[b, i] + w * (tabs[b, i + 1] - tabs[b, i])


@njit(cache=True)
def _advance_nb(u, dx, dt, n_steps, kinds, prms, tabs, p0s, bl, br, lim,
                left_code, left_p, left_vals, right_code, right_p, right_vals):
    n = u.shape[0]
    new = np.empty(n)
    max_du = 0.0
    for s in range(n_steps):
        # slope to the left of node 0
        if left_code == 2:
            pm = left_p
        else:
            pm = 0.0
        for j in range(n):
            if j < n - 1:
                pp = (u[j + 1] - u[j]) / dx
            elif right_code == 2:
                pp = right_p
            else:
                pp = 0.0
            f = lim[j]
            if j > 0 or left_code == 2:
                b = bl[j]
                q = pm if pm > p0s[b] else p0s[b]
                hp = _h_row(kinds[b], prms, tabs, b, q)
                if hp > f:
                    f = hp
            if j < n - 1 or right_code == 2:
                b = br[j]
                q = pp if pp < p0s[b] else p0s[b]
                hm = _h_row(kinds[b], prms, tabs, b, q)
                if hm > f:
                    f = hm
            new[j] = u[j] - dt * f
            pm = pp
        if left_code == 0:
            new[0] = left_vals[s]
        if right_code == 0:
            new[n - 1] = right_vals[s]
        for j in range(n):
            d = abs(new[j] - u[j])
            if d > max_du:
                max_du = d
            u[j] = new[j]
    return max_du


class _BranchIndex:
    """Per-branch node masks for the numpy path (built once per run)."""

    def __init__(self, bl, br, n_branches):
        self.left = [np.flatnonzero(bl == b) for b in range(n_branches)]
        self.right = [np.flatnonzero(br == b) for b in range(n_branches)]


def _advance_np(u, dx, dt, n_steps, kinds, prms, tabs, p0s, bl, br, lim,
                left_code, left_p, left_vals, right_code, right_p, right_vals, index=None):
    n = u.shape[0]
    if index is None:
        index = _BranchIndex(bl, br, len(kinds))
    pm = np.empty(n)
    pp = np.empty(n)
    hp = np.empty(n)
    hm = np.empty(n)
    max_du = 0.0
    for s in range(n_steps):
        d = np.diff(u) / dx
        pm[1:] = d
        pp[:-1] = d
        pm[0] = left_p
        pp[-1] = right_p
        for b in range(len(kinds)):
            il = index.left[b]
            ir = index.right[b]
            if il.size:
                hp[il] = h_eval_vec(kinds[b], prms[b], tabs[b], np.maximum(pm[il], p0s[b]))
            if ir.size:
                hm[ir] = h_eval_vec(kinds[b], prms[b], tabs[b], np.minimum(pp[ir], p0s[b]))
        if left_code != BC_SLOPE:
            hp[0] = -np.inf
        if right_code != BC_SLOPE:
            hm[-1] = -np.inf
        f = np.maximum(lim, np.maximum(hp, hm))
        new = u - dt * f
        if left_code == BC_DIRICHLET:
            new[0] = left_vals[s]
        if right_code == BC_DIRICHLET:
            new[-1] = right_vals[s]
        max_du = max(max_du, float(np.max(np.abs(new - u))))
        u[:] = new
    return max_du


def advance(u, dx, dt, n_steps, kinds, prms, tabs, p0s, bl, br, lim,
            left_code, left_p, left_vals, right_code, right_p, right_vals,
            index=None, use_numba=None):
    """Advance ``u`` in place by ``n_steps`` explicit Godunov steps.

    Node ``j`` is updated with ``max(lim[j], H+_{bl[j]}(p-), H-_{br[j]}(p+))``;
    ``lim`` is ``-inf`` away from junctions. Returns ``max |u^{n+1} - u^n|``.
    """
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba:
        return _advance_nb(u, dx, dt, n_steps, kinds, prms, tabs, p0s, bl, br, lim,
                           left_code, left_p, left_vals, right_code, right_p, right_vals)
    return _advance_np(u, dx, dt, n_steps, kinds, prms, tabs, p0s, bl, br, lim,
                       left_code, left_p, left_vals, right_code, right_p, right_vals, index)
