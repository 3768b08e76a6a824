# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kernels for the search hot paths.

Semantics twin of `accbs._kernels_py`: identical tie-breaking, identical
packed search keys, identical results bit for bit.  Keep the two files in
sync; the parity test suite compares them on randomized inputs.
"""

from libc.stdlib cimport calloc, free, malloc, realloc
from libc.stdint cimport int32_t, int64_t, uint64_t

import numpy as np

cdef enum:
    F_BITS = 14
    G_BITS = 12
    V_BITS = 23
    T_BITS = 12
    VT_BITS = 35          # V_BITS + T_BITS
    G_MAX = 4095          # (1 << G_BITS) - 1

F_CAP = 1 << F_BITS
V_CAP = 1 << V_BITS
T_CAP = 1 << T_BITS


def bfs_distance_field(indptr_obj, nbrs_obj, int goal, int n_cells):
    """Hop distances from every cell to ``goal`` (grid edges are symmetric)."""
    cdef const int32_t[:] indptr = indptr_obj
    cdef const int32_t[:] nbrs = nbrs_obj
    out = np.full(n_cells, -1, dtype=np.int32)
    cdef int32_t[:] dist = out
    cdef int32_t* queue = <int32_t*> malloc(n_cells * sizeof(int32_t))
    if queue == NULL:
        raise MemoryError()
    cdef Py_ssize_t head = 0, tail = 0
    cdef int v, w, d
    cdef Py_ssize_t i
    dist[goal] = 0
    queue[tail] = goal
    tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        d = dist[v] + 1
        for i in range(indptr[v], indptr[v + 1]):
            w = nbrs[i]
            if w != v and dist[w] < 0:
                dist[w] = d
                queue[tail] = w
                tail += 1
    free(queue)
    return out


cdef int _greedy_descent(const int32_t[:] indptr, const int32_t[:] nbrs,
                         const int32_t[:] gamma, int v, int steps,
                         int32_t[:] out, int offset) noexcept nogil:
    cdef int k, g, target, w
    cdef Py_ssize_t i
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


cdef inline bint _bsearch(const int64_t* arr, Py_ssize_t n, int64_t key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo < n and arr[lo] == key


cdef struct StateMap:
    # open-addressing map: space-time state -> (best key + 1, parent vertex)
    int64_t* key
    int64_t* best   # 0 marks an empty slot
    int32_t* parent
    uint64_t mask
    Py_ssize_t used


cdef inline bint _statemap_init(StateMap* m, uint64_t size) noexcept nogil:
    m.key = <int64_t*> malloc(size * sizeof(int64_t))
    m.best = <int64_t*> calloc(size, sizeof(int64_t))
    m.parent = <int32_t*> malloc(size * sizeof(int32_t))
    m.mask = size - 1
    m.used = 0
    return m.key != NULL and m.best != NULL and m.parent != NULL


cdef inline void _statemap_free(StateMap* m) noexcept nogil:
    free(m.key)
    free(m.best)
    free(m.parent)


cdef inline uint64_t _statemap_slot(StateMap* m, int64_t state) noexcept nogil:
    cdef uint64_t idx = ((<uint64_t> state) * 0x9E3779B97F4A7C15ULL) >> 32
    idx &= m.mask
    while m.best[idx] != 0 and m.key[idx] != state:
        idx = (idx + 1) & m.mask
    return idx


cdef bint _statemap_grow(StateMap* m) noexcept nogil:
    cdef StateMap bigger
    cdef uint64_t old_size = m.mask + 1, i, j
    if not _statemap_init(&bigger, old_size * 2):
        _statemap_free(&bigger)
        return False
    for i in range(old_size):
        if m.best[i] != 0:
            j = _statemap_slot(&bigger, m.key[i])
            bigger.key[j] = m.key[i]
            bigger.best[j] = m.best[i]
            bigger.parent[j] = m.parent[i]
    bigger.used = m.used
    _statemap_free(m)
    m[0] = bigger
    return True


cdef struct Heap:
    int64_t* data
    Py_ssize_t size
    Py_ssize_t cap


cdef inline bint heap_push(Heap* h, int64_t key) noexcept nogil:
    cdef Py_ssize_t i, parent
    cdef int64_t tmp
    cdef int64_t* grown
    if h.size == h.cap:
        grown = <int64_t*> realloc(h.data, 2 * h.cap * sizeof(int64_t))
        if grown == NULL:
            return False
        h.data = grown
        h.cap *= 2
    i = h.size
    h.size += 1
    h.data[i] = key
    while i > 0:
        parent = (i - 1) >> 1
        if h.data[parent] <= h.data[i]:
            break
        tmp = h.data[parent]
        h.data[parent] = h.data[i]
        h.data[i] = tmp
        i = parent
    return True


cdef inline int64_t heap_pop(Heap* h) noexcept nogil:
    cdef int64_t top = h.data[0]
    cdef int64_t tmp
    cdef Py_ssize_t i = 0, child
    h.size -= 1
    h.data[0] = h.data[h.size]
    while True:
        child = 2 * i + 1
        if child >= h.size:
            break
        if child + 1 < h.size and h.data[child + 1] < h.data[child]:
            child += 1
        if h.data[i] <= h.data[child]:
            break
        tmp = h.data[i]
        h.data[i] = h.data[child]
        h.data[child] = tmp
        i = child
    return top


cdef inline void _c_sort(int64_t* arr, Py_ssize_t n) noexcept nogil:
    # insertion sort; constraint key sets are small
    cdef Py_ssize_t i, j
    cdef int64_t x
    for i in range(1, n):
        x = arr[i]
        j = i - 1
        while j >= 0 and arr[j] > x:
            arr[j + 1] = arr[j]
            j -= 1
        arr[j + 1] = x


cdef int64_t* _extract_keys(keys, Py_ssize_t* n_out) except? NULL:
    """Copy a Python set of ints into a fresh sorted C array.

    Returns NULL for an empty set; `_bsearch` never dereferences then and
    ``free(NULL)`` is a no-op.
    """
    cdef Py_ssize_t n = len(keys)
    n_out[0] = n
    if n == 0:
        return NULL
    cdef int64_t* arr = <int64_t*> malloc(n * sizeof(int64_t))
    if arr == NULL:
        raise MemoryError()
    cdef Py_ssize_t k = 0
    for item in keys:
        arr[k] = item
        k += 1
    _c_sort(arr, n)
    return arr


def plan_trajectory(indptr_obj, nbrs_obj, gamma_obj, int start, int h_max,
                    int t_star, vset, eset):
    """Min-cost constrained space-time plan; see the pure twin's docstring."""
    cdef const int32_t[:] indptr = indptr_obj
    cdef const int32_t[:] nbrs = nbrs_obj
    cdef const int32_t[:] gamma = gamma_obj
    cdef Py_ssize_t n_cells = indptr.shape[0] - 1
    assert n_cells < (1 << V_BITS) and h_max < (1 << T_BITS)
    if gamma[start] < 0:
        return None

    cdef Py_ssize_t nv = 0, ne = 0
    cdef int64_t* varr = _extract_keys(vset, &nv)
    cdef int64_t* earr
    try:
        earr = _extract_keys(eset, &ne)
    except MemoryError:
        free(varr)
        raise

    if _bsearch(varr, nv, start):  # packed key for t=0 is the vertex id
        free(varr)
        free(earr)
        return None
    out = np.empty(h_max + 1, dtype=np.int32)
    cdef int32_t[:] o = out
    o[0] = start
    if t_star == 0:
        free(varr)
        free(earr)
        _greedy_descent(indptr, nbrs, gamma, start, h_max, o, 1)
        return out

    cdef StateMap sm
    cdef Heap heap
    heap.cap = 1024
    heap.size = 0
    heap.data = <int64_t*> malloc(heap.cap * sizeof(int64_t))
    if not _statemap_init(&sm, 2048) or heap.data == NULL:
        _statemap_free(&sm)
        free(heap.data)
        free(varr)
        free(earr)
        raise MemoryError()

    cdef int64_t key, nkey, state, nstate, vbase
    cdef int64_t start_key = (((<int64_t> gamma[start]) << G_BITS) | G_MAX) \
        << VT_BITS | (<int64_t> start) << T_BITS
    cdef uint64_t slot = _statemap_slot(&sm, start)
    sm.key[slot] = start
    sm.best[slot] = start_key + 1
    sm.used = 1
    heap_push(&heap, start_key)
    cdef int v, t, f, g, step_cost, t1, w, gw, back, pv
    cdef Py_ssize_t i
    cdef bint ok = True, found = False
    with nogil:
        while heap.size > 0:
            key = heap_pop(&heap)
            v = <int> ((key >> T_BITS) & ((<int64_t> 1 << V_BITS) - 1))
            t = <int> (key & ((1 << T_BITS) - 1))
            state = (<int64_t> t) * n_cells + v
            slot = _statemap_slot(&sm, state)
            if key + 1 != sm.best[slot]:
                continue  # stale entry
            f = <int> (key >> (G_BITS + VT_BITS))
            g = f - gamma[v]
            if t == t_star:
                o[t_star] = v
                for back in range(t_star - 1, 0, -1):
                    slot = _statemap_slot(&sm, state)
                    pv = sm.parent[slot]
                    o[back] = pv
                    state = (<int64_t> back) * n_cells + pv
                _greedy_descent(indptr, nbrs, gamma, v, h_max - t_star,
                                o, t_star + 1)
                found = True
                break
            step_cost = 0 if gamma[v] == 0 else 1
            t1 = t + 1
            vbase = state
            for i in range(indptr[v], indptr[v + 1]):
                w = nbrs[i]
                gw = gamma[w]
                if gw < 0:
                    continue
                if _bsearch(varr, nv, (<int64_t> t1) * n_cells + w):
                    continue
                if _bsearch(earr, ne, vbase * n_cells + w):
                    continue
                nstate = (<int64_t> t1) * n_cells + w
                nkey = ((((<int64_t> (g + step_cost + gw)) << G_BITS)
                         | (G_MAX - g - step_cost)) << VT_BITS) \
                    | (<int64_t> w) << T_BITS | t1
                slot = _statemap_slot(&sm, nstate)
                if sm.best[slot] == 0 or nkey < sm.best[slot] - 1:
                    if sm.best[slot] == 0:
                        sm.key[slot] = nstate
                        sm.used += 1
                    sm.best[slot] = nkey + 1
                    sm.parent[slot] = v
                    if not heap_push(&heap, nkey):
                        ok = False
                        break
                    if 2 * sm.used > <Py_ssize_t> sm.mask + 1:
                        if not _statemap_grow(&sm):
                            ok = False
                            break
            if not ok:
                break
    _statemap_free(&sm)
    free(heap.data)
    free(varr)
    free(earr)
    if not ok:
        raise MemoryError()
    if found:
        return out
    return None


def path_cost(path_obj, gamma_obj, int goal, int h):
    """Off-goal steps before ``h`` plus goal distance at ``h`` (-1: undefined)."""
    cdef const int32_t[:] path = path_obj
    cdef const int32_t[:] gamma = gamma_obj
    cdef int g = gamma[path[h]]
    if g < 0:
        return -1
    cdef int cost = g, t
    for t in range(h):
        if path[t] != goal:
            cost += 1
    return cost


# Open-addressing hash over directed-edge keys, stamped per time step so it
# never needs clearing.  Mirrors the pure backend's dict: insert overwrites,
# lookup sees the latest earlier writer.
cdef struct EdgeMap:
    int64_t* key
    int64_t* stamp
    int32_t* val
    uint64_t mask


cdef inline bint _edgemap_init(EdgeMap* m, Py_ssize_t n) noexcept nogil:
    cdef uint64_t size = 8
    while size < 4 * <uint64_t> n:
        size <<= 1
    m.mask = size - 1
    m.key = <int64_t*> malloc(size * sizeof(int64_t))
    m.stamp = <int64_t*> calloc(size, sizeof(int64_t))
    m.val = <int32_t*> malloc(size * sizeof(int32_t))
    return m.key != NULL and m.stamp != NULL and m.val != NULL


cdef inline uint64_t _slot(EdgeMap* m, int64_t key, int64_t gen) noexcept nogil:
    """First slot for ``key`` that is empty at ``gen`` or already holds it."""
    cdef uint64_t idx = ((<uint64_t> key) * 0x9E3779B97F4A7C15ULL) >> 32
    idx &= m.mask
    while m.stamp[idx] == gen and m.key[idx] != key:
        idx = (idx + 1) & m.mask
    return idx


cdef struct CellTable:
    # direct-address per-cell table, stamped per time step
    int64_t* stamp
    int32_t* val


cdef inline bint _celltable_init(CellTable* c, Py_ssize_t n_cells) noexcept nogil:
    c.stamp = <int64_t*> calloc(n_cells, sizeof(int64_t))
    c.val = <int32_t*> malloc(n_cells * sizeof(int32_t))
    return c.stamp != NULL and c.val != NULL


def find_first_conflict(paths_obj, int h_r, int n_cells):
    """Earliest conflict in the joint prefix; see the pure twin's docstring."""
    cdef const int32_t[:, ::1] paths = paths_obj
    cdef Py_ssize_t n = paths.shape[0]
    cdef int t, j, v, u, w, i
    cdef int hit_i, hit_j, hit_t = -1, hit_kind = 0, hit_a = 0, hit_b = -1
    cdef CellTable occ
    cdef EdgeMap mov
    if not _celltable_init(&occ, n_cells) or not _edgemap_init(&mov, n):
        raise MemoryError()
    cdef uint64_t s
    cdef bint done = False
    with nogil:
        for t in range(h_r + 1):
            hit_i = -1
            hit_j = -1
            for j in range(n):
                v = paths[j, t]
                if occ.stamp[v] == t + 1:
                    i = occ.val[v]
                    if hit_i < 0 or i < hit_i or (i == hit_i and j < hit_j):
                        hit_i = i
                        hit_j = j
                else:  # first agent on this cell wins the slot
                    occ.stamp[v] = t + 1
                    occ.val[v] = j
            if hit_i >= 0:
                hit_kind = 0
                hit_t = t
                hit_a = paths[hit_i, t]
                hit_b = -1
                done = True
                break
            if t == 0:
                continue
            for j in range(n):
                u = paths[j, t - 1]
                w = paths[j, t]
                if u != w:
                    s = _slot(&mov, (<int64_t> w) << V_BITS | u, t)
                    if mov.stamp[s] == t:
                        i = mov.val[s]
                        if hit_i < 0 or i < hit_i or (i == hit_i and j < hit_j):
                            hit_i = i
                            hit_j = j
                    s = _slot(&mov, (<int64_t> u) << V_BITS | w, t)
                    mov.stamp[s] = t
                    mov.key[s] = (<int64_t> u) << V_BITS | w
                    mov.val[s] = j
            if hit_i >= 0:
                hit_kind = 1
                hit_t = t
                hit_a = paths[hit_i, t - 1]
                hit_b = paths[hit_i, t]
                done = True
                break
    free(occ.stamp); free(occ.val)
    free(mov.key); free(mov.stamp); free(mov.val)
    if not done:
        return None
    return (hit_kind, hit_i, hit_j, hit_t, hit_a, hit_b)


def count_conflicts(paths_obj, int h, int n_cells, int sub_row=-1,
                    sub_path_obj=None):
    """Conflicting (pair, time) incidences in the prefix ``[0, h]``.

    With ``sub_row >= 0`` the matrix is read as if that row held
    ``sub_path`` instead, so callers can score a candidate replanning
    without mutating the shared buffer.
    """
    cdef const int32_t[:, ::1] paths = paths_obj
    cdef const int32_t[:] sub = paths_obj[0] if sub_path_obj is None else sub_path_obj
    cdef Py_ssize_t n = paths.shape[0]
    cdef int t, j, v, u, w
    cdef long long total = 0
    cdef CellTable occ
    cdef EdgeMap mov
    if not _celltable_init(&occ, n_cells) or not _edgemap_init(&mov, n):
        raise MemoryError()
    cdef uint64_t s
    with nogil:
        for t in range(h + 1):
            for j in range(n):
                v = sub[t] if j == sub_row else paths[j, t]
                if occ.stamp[v] == t + 1:
                    total += occ.val[v]
                    occ.val[v] += 1
                else:
                    occ.stamp[v] = t + 1
                    occ.val[v] = 1
            if t == 0:
                continue
            for j in range(n):
                if j == sub_row:
                    u = sub[t - 1]
                    w = sub[t]
                else:
                    u = paths[j, t - 1]
                    w = paths[j, t]
                if u != w:
                    s = _slot(&mov, (<int64_t> w) << V_BITS | u, t)
                    if mov.stamp[s] == t:
                        total += mov.val[s]  # one pair per reverse traverser
                    s = _slot(&mov, (<int64_t> u) << V_BITS | w, t)
                    if mov.stamp[s] == t:
                        mov.val[s] += 1
                    else:
                        mov.stamp[s] = t
                        mov.key[s] = (<int64_t> u) << V_BITS | w
                        mov.val[s] = 1
    free(occ.stamp); free(occ.val)
    free(mov.key); free(mov.stamp); free(mov.val)
    return total
