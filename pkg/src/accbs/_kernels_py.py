"""Pure-Python kernels for the search hot paths.

These are the reference implementations; `accbs._kernels_cy` is a compiled
twin with identical semantics (same tie-breaking, same integer arithmetic).
`accbs.kernels` picks one at import time.  Any behavioural change here must
be mirrored in the .pyx file, and `tests/test_kernels_parity.py` checks the
two backends agree.

Conventions shared by every kernel:

* Vertices are row-major cell indices ``r * width + c`` over the full grid;
  blocked cells simply have an empty neighbor range.
* The adjacency is CSR (``indptr``, ``nbrs``) with neighbor lists sorted
  ascending and containing the vertex itself (the wait self-loop).
* Distance fields are ``int32`` arrays with ``-1`` marking unreachable.
* Vertex constraints are packed as ``t * n_cells + v``; edge constraints as
  ``(t * n_cells + u) * n_cells + w`` where ``t`` is the departure step.
  Constraint keys arrive as sorted ``int64`` arrays.
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

# Bit layout of the space-time search key, most significant first:
# f (cost lower bound), inverted depth (deeper states pop first), vertex,
# step.  Packing the whole ordering into one int64 keeps the heap
# allocation-free and guarantees both backends pop states in the same order.
F_BITS = 14
G_BITS = 12
V_BITS = 23
T_BITS = 12

F_CAP = 1 << F_BITS
G_MAX = (1 << G_BITS) - 1
V_CAP = 1 << V_BITS
T_CAP = 1 << T_BITS


def bfs_distance_field(indptr, nbrs, goal, n_cells):
    """Hop distances from every cell to ``goal`` (grid edges are symmetric)."""
    indptr = indptr.tolist()
    nbrs = nbrs.tolist()
    dist = [-1] * n_cells
    dist[goal] = 0
    queue = deque([goal])
    while queue:
        v = queue.popleft()
        d = dist[v] + 1
        for i in range(indptr[v], indptr[v + 1]):
            w = nbrs[i]
            if w != v and dist[w] < 0:
                dist[w] = d
                queue.append(w)
    return np.asarray(dist, dtype=np.int32)


def _greedy_descent(indptr, nbrs, gamma, v, steps, out, offset):
    # indptr/nbrs/gamma are plain lists here; out is an int32 array.
    for k in range(steps):
        g = gamma[v]
        if g > 0:
            target = g - 1
            for i in range(indptr[v], indptr[v + 1]):
                w = nbrs[i]
                if gamma[w] == target:
                    v = w
                    break
        out[offset + k] = v
    return v


def plan_trajectory(indptr, nbrs, gamma, start, h_max, t_star, vset, eset):
    """Min-cost constrained space-time plan of exactly ``h_max`` steps.

    ``vset``/``eset`` are sets of packed constraint keys.  Returns an int32
    array of ``h_max + 1`` vertices or ``None`` when the constraints are
    unsatisfiable.  The cost of a plan is the number of off-goal steps plus
    the goal distance of the final vertex; equal-cost ties break toward
    deeper search states (so plans move now and spend any forced waiting
    later, which keeps the executed first step productive), then toward the
    lower vertex id and the lower step.  Beyond ``t_star`` (the largest
    constrained time index) the plan follows a shortest path and then waits
    at the goal, which is what keeps node costs horizon-independent.
    """
    n_cells = indptr.shape[0] - 1
    assert n_cells < V_CAP and h_max < T_CAP
    if gamma[start] < 0:
        return None
    if start in vset:  # packed key for t=0 is just the vertex id
        return None
    indptr = indptr.tolist()
    nbrs = nbrs.tolist()
    gamma = gamma.tolist()
    out = np.empty(h_max + 1, dtype=np.int32)
    out[0] = start
    if t_star == 0:
        _greedy_descent(indptr, nbrs, gamma, start, h_max, out, 1)
        return out

    # A* ordered by the packed (f, depth, vertex, step) key.
    start_key = (((gamma[start] << G_BITS) | G_MAX) << (V_BITS + T_BITS)) | (
        start << T_BITS
    )
    best = {start: start_key}  # (t * n_cells + v) -> smallest key seen
    parent = {}
    heap = [start_key]
    t_mask = T_CAP - 1
    v_mask = V_CAP - 1
    while heap:
        key = heapq.heappop(heap)
        v = (key >> T_BITS) & v_mask
        t = key & t_mask
        state = t * n_cells + v
        if key != best.get(state):
            continue  # stale entry
        f = key >> (G_BITS + V_BITS + T_BITS)
        g = f - gamma[v]
        if t == t_star:
            # Constraints can no longer bind; finish with a greedy suffix.
            out[t_star] = v
            s = state
            for back in range(t_star - 1, 0, -1):
                pv = parent[s]
                out[back] = pv
                s = back * n_cells + pv
            _greedy_descent(indptr, nbrs, gamma, v, h_max - t_star, out, t_star + 1)
            return out
        step_cost = 0 if gamma[v] == 0 else 1
        t1 = t + 1
        vbase = state
        for i in range(indptr[v], indptr[v + 1]):
            w = nbrs[i]
            gw = gamma[w]
            if gw < 0:
                continue
            if (t1 * n_cells + w) in vset:
                continue
            if (vbase * n_cells + w) in eset:
                continue
            nstate = t1 * n_cells + w
            nkey = (
                (((g + step_cost + gw) << G_BITS) | (G_MAX - g - step_cost))
                << (V_BITS + T_BITS)
            ) | ((w << T_BITS) | t1)
            old = best.get(nstate)
            if old is None or nkey < old:
                best[nstate] = nkey
                parent[nstate] = v
                heapq.heappush(heap, nkey)
    return None


def path_cost(path, gamma, goal, h):
    """Off-goal steps before ``h`` plus goal distance at ``h`` (-1: undefined)."""
    g = int(gamma[path[h]])
    if g < 0:
        return -1
    cost = g
    for t in range(h):
        if path[t] != goal:
            cost += 1
    return cost


def find_first_conflict(paths, h_r, n_cells=0):
    """Earliest conflict in the joint prefix ``[0, h_r]``.

    ``paths`` is an ``(N, H+1)`` int32 matrix.  Returns
    ``(kind, i, j, t, a, b)`` with ``kind`` 0 for a vertex conflict
    (``a`` the shared vertex, ``b`` -1) and 1 for a swap (``a, b`` the edge
    as traversed by agent ``i``), or ``None``.  At equal times vertex
    conflicts win; agent pairs tie-break lexicographically.
    """
    cols = paths.T.tolist()  # cols[t][agent]
    n = paths.shape[0]
    prev = None
    for t in range(h_r + 1):
        col = cols[t]
        seen = {}
        hit_i = -1
        hit_j = -1
        for j in range(n):
            v = col[j]
            i = seen.get(v, -1)
            if i >= 0:
                if hit_i < 0 or i < hit_i or (i == hit_i and j < hit_j):
                    hit_i, hit_j = i, j
            else:
                seen[v] = j
        if hit_i >= 0:
            return (0, hit_i, hit_j, t, col[hit_i], -1)
        if t > 0:
            moves = {}
            for j in range(n):
                u = prev[j]
                w = col[j]
                if u != w:
                    i = moves.get((w, u), -1)
                    if i >= 0 and (
                        hit_i < 0 or i < hit_i or (i == hit_i and j < hit_j)
                    ):
                        hit_i, hit_j = i, j
                    moves[(u, w)] = j
            if hit_i >= 0:
                return (1, hit_i, hit_j, t, prev[hit_i], col[hit_i])
        prev = col
    return None


def count_conflicts(paths, h, n_cells=0, sub_row=-1, sub_path=None):
    """Number of conflicting (pair, time) incidences in the prefix ``[0, h]``.

    With ``sub_row >= 0`` the matrix is read as if that row held
    ``sub_path`` instead.
    """
    cols = paths.T.tolist()
    n = paths.shape[0]
    if sub_row >= 0:
        alt = sub_path.tolist()
        for t, col in enumerate(cols):
            col[sub_row] = alt[t]
    total = 0
    prev = None
    for t in range(h + 1):
        col = cols[t]
        occ = {}
        for j in range(n):
            v = col[j]
            k = occ.get(v, 0)
            total += k  # k agents already here -> k new colliding pairs
            occ[v] = k + 1
        if t > 0:
            moves = {}
            for j in range(n):
                u = prev[j]
                w = col[j]
                if u != w:
                    total += moves.get((w, u), 0)
                    moves[(u, w)] = moves.get((u, w), 0) + 1
        prev = col
    return total
