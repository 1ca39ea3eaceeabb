"""Compiled inner loops (numba) for clique-cover graphs and symbolic elimination."""
from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True)
def clique_degrees(n, cptr, cvars, vptr, vcl):
    deg = np.zeros(n, dtype=np.int64)
    stamp = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        stamp[v] = v
        c = 0
        for t in range(vptr[v], vptr[v + 1]):
            k = vcl[t]
            for s in range(cptr[k], cptr[k + 1]):
                u = cvars[s]
                if stamp[u] != v:
                    stamp[u] = v
                    c += 1
        deg[v] = c
    return deg


@nb.njit(cache=True)
def clique_edges(n, cptr, cvars, vptr, vcl, m):
    out = np.empty((m, 2), dtype=np.int64)
    stamp = np.full(n, -1, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    w = 0
    for v in range(n):
        stamp[v] = v
        nb_ = 0
        for t in range(vptr[v], vptr[v + 1]):
            k = vcl[t]
            for s in range(cptr[k], cptr[k + 1]):
                u = cvars[s]
                if stamp[u] != v:
                    stamp[u] = v
                    if u > v:
                        buf[nb_] = u
                        nb_ += 1
        tmp = np.sort(buf[:nb_])
        for i in range(nb_):
            out[w, 0] = v
            out[w, 1] = tmp[i]
            w += 1
    return out[:w]


@nb.njit(cache=True)
def _star_lower(n, cptr, cp):
    """Lower neighbours in the star graph: each clique -> star at its first pivot."""
    cnt = np.zeros(n + 1, dtype=np.int64)
    nc = len(cptr) - 1
    for k in range(nc):
        a, b = cptr[k], cptr[k + 1]
        if b - a < 2:
            continue
        mn = cp[a]
        for s in range(a + 1, b):
            if cp[s] < mn:
                mn = cp[s]
        for s in range(a, b):
            if cp[s] != mn:
                cnt[cp[s] + 1] += 1
    for i in range(n):
        cnt[i + 1] += cnt[i]
    ptr = cnt.copy()
    low = np.empty(ptr[n], dtype=np.int64)
    fill = ptr[:n].copy()
    for k in range(nc):
        a, b = cptr[k], cptr[k + 1]
        if b - a < 2:
            continue
        mn = cp[a]
        for s in range(a + 1, b):
            if cp[s] < mn:
                mn = cp[s]
        for s in range(a, b):
            x = cp[s]
            if x != mn:
                low[fill[x]] = mn
                fill[x] += 1
    return ptr, low


@nb.njit(cache=True)
def symbolic_factor(n, cptr, cp, node_of, n_nodes):
    """Elimination tree and column counts of the filled graph.

    ``cp`` holds clique members as elimination positions.  A clique and the
    star joining its earliest member to the rest have the same filled graph,
    so only the stars are traversed.  Returns ``(parent, colcount, bext)``
    where ``colcount[k]`` counts later neighbours of pivot ``k`` in the
    filled graph and ``bext[t]`` counts distinct filled-graph neighbours of
    tree node ``t``'s pivots lying outside ``t``.
    """
    ptr, low = _star_lower(n, cptr, cp)
    parent = np.full(n, -1, dtype=np.int64)
    anc = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for s in range(ptr[k], ptr[k + 1]):
            i = low[s]
            while i != -1 and i < k:
                nxt = anc[i]
                anc[i] = k
                if nxt == -1:
                    parent[i] = k
                i = nxt
    colcount = np.zeros(n, dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    bext = np.zeros(max(n_nodes, 1), dtype=np.int64)
    tstamp = np.full(max(n_nodes, 1), -1, dtype=np.int64)
    for i in range(n):
        mark[i] = i
        ti = node_of[i]
        for s in range(ptr[i], ptr[i + 1]):
            j = low[s]
            while mark[j] != i:
                mark[j] = i
                colcount[j] += 1
                t = node_of[j]
                if t >= 0 and t != ti and tstamp[t] != i:
                    tstamp[t] = i
                    bext[t] += 1
                j = parent[j]
    return parent, colcount, bext


@nb.njit(cache=True)
def lca_assign(minpos, maxpos, leaf_of_pos, parent, stop):
    """Deepest tree node whose element range covers ``[minpos, maxpos]``."""
    out = np.empty(len(minpos), dtype=np.int64)
    for v in range(len(minpos)):
        t = leaf_of_pos[minpos[v]]
        while stop[t] <= maxpos[v]:
            t = parent[t]
        out[v] = t
    return out


@nb.njit(cache=True)
def element_cliques(ne, npat, inst_ent, hanging, c_ptr, c_dst, x_ptr, x_ent, newid):
    """Per element: its unconstrained faces, constrainers of its hanging faces and
    constrainers of hanging entities it contains without owning."""
    nent = len(hanging)
    stamp = np.full(nent, -1, dtype=np.int64)
    ptr = np.zeros(ne + 1, dtype=np.int64)
    for sweep in range(2):
        if sweep == 1:
            for e in range(ne):
                ptr[e + 1] += ptr[e]
            out = np.empty(ptr[ne], dtype=np.int64)
            stamp[:] = -1
        else:
            out = np.empty(0, dtype=np.int64)
        for e in range(ne):
            w = ptr[e]
            c = 0
            for s in range(e * npat, (e + 1) * npat):
                x = inst_ent[s]
                if not hanging[x]:
                    if stamp[x] != e:
                        stamp[x] = e
                        if sweep == 1:
                            out[w + c] = newid[x]
                        c += 1
                else:
                    for t in range(c_ptr[x], c_ptr[x + 1]):
                        y = c_dst[t]
                        if stamp[y] != e:
                            stamp[y] = e
                            if sweep == 1:
                                out[w + c] = newid[y]
                            c += 1
            for s in range(x_ptr[e], x_ptr[e + 1]):
                x = x_ent[s]
                for t in range(c_ptr[x], c_ptr[x + 1]):
                    y = c_dst[t]
                    if stamp[y] != e:
                        stamp[y] = e
                        if sweep == 1:
                            out[w + c] = newid[y]
                        c += 1
            if sweep == 0:
                ptr[e + 1] = c
            else:
                out[w:w + c] = np.sort(out[w:w + c])
    return ptr, out


@nb.njit(cache=True)
def postorder(left, right):
    n = len(left)
    out = np.empty(n, dtype=np.int64)
    if n == 0:
        return out
    stack = np.empty(2 * n + 2, dtype=np.int64)
    state = np.zeros(n, dtype=np.uint8)
    sp = 0
    stack[0] = 0
    sp = 1
    w = 0
    while sp:
        t = stack[sp - 1]
        if left[t] < 0 or state[t] == 1:
            sp -= 1
            out[w] = t
            w += 1
        else:
            state[t] = 1
            stack[sp] = right[t]
            stack[sp + 1] = left[t]
            sp += 2
    return out
