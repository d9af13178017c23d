"""Compiled inner loops: subset peeling and area of a union of rectangles."""
import numpy as np
from numba import njit


@njit(cache=True)
def peel_subset(indptr, indices, members, pos, c):
    """Maximum c-core of the subgraph induced by ``members``.

    ``pos`` is caller-owned scratch of length n filled with -1; it is restored
    before returning. Returns a boolean survival mask aligned with ``members``.
    """
    k = members.size
    for i in range(k):
        pos[members[i]] = i
    deg = np.zeros(k, np.int64)
    for i in range(k):
        u = members[i]
        d = 0
        for j in range(indptr[u], indptr[u + 1]):
            if pos[indices[j]] >= 0:
                d += 1
        deg[i] = d
    alive = np.ones(k, np.bool_)
    stack = np.empty(k, np.int64)
    top = 0
    for i in range(k):
        if deg[i] < c:
            alive[i] = False
            stack[top] = i
            top += 1
    while top > 0:
        top -= 1
        u = members[stack[top]]
        for j in range(indptr[u], indptr[u + 1]):
            p = pos[indices[j]]
            if p >= 0 and alive[p]:
                deg[p] -= 1
                if deg[p] < c:
                    alive[p] = False
                    stack[top] = p
                    top += 1
    for i in range(k):
        pos[members[i]] = -1
    return alive


@njit(cache=True)
def union_area(rects):
    """Exact area of the union of axis-aligned rectangles (rows x0, y0, x1, y1).

    Sweep over x with a segment tree of covered y-length.
    """
    m = rects.shape[0]
    keep = np.empty(m, np.int64)
    nk = 0
    for i in range(m):
        if rects[i, 2] > rects[i, 0] and rects[i, 3] > rects[i, 1]:
            keep[nk] = i
            nk += 1
    if nk == 0:
        return 0.0
    ys = np.empty(2 * nk)
    for t in range(nk):
        i = keep[t]
        ys[2 * t] = rects[i, 1]
        ys[2 * t + 1] = rects[i, 3]
    ys = np.unique(ys)
    ny = ys.size
    nseg = ny - 1
    ev_x = np.empty(2 * nk)
    ev_t = np.empty(2 * nk, np.int64)
    ev_lo = np.empty(2 * nk, np.int64)
    ev_hi = np.empty(2 * nk, np.int64)
    for t in range(nk):
        i = keep[t]
        lo = np.searchsorted(ys, rects[i, 1])
        hi = np.searchsorted(ys, rects[i, 3])
        ev_x[2 * t] = rects[i, 0]
        ev_t[2 * t] = 1
        ev_lo[2 * t] = lo
        ev_hi[2 * t] = hi
        ev_x[2 * t + 1] = rects[i, 2]
        ev_t[2 * t + 1] = -1
        ev_lo[2 * t + 1] = lo
        ev_hi[2 * t + 1] = hi
    order = np.argsort(ev_x, kind="mergesort")
    size = 1
    while size < nseg:
        size *= 2
    cnt = np.zeros(2 * size, np.int64)
    cov = np.zeros(2 * size)
    # iterative stack-based range update on a recursive segment tree
    stk_node = np.empty(128, np.int64)
    stk_l = np.empty(128, np.int64)
    stk_r = np.empty(128, np.int64)
    stk_phase = np.empty(128, np.int64)
    area = 0.0
    prev_x = ev_x[order[0]]
    for e in range(2 * nk):
        idx = order[e]
        x = ev_x[idx]
        area += cov[1] * (x - prev_x)
        prev_x = x
        lo = ev_lo[idx]
        hi = ev_hi[idx]
        delta = ev_t[idx]
        top = 0
        stk_node[0] = 1
        stk_l[0] = 0
        stk_r[0] = size
        stk_phase[0] = 0
        top = 1
        while top > 0:
            t = top - 1
            node = stk_node[t]
            l = stk_l[t]
            r = stk_r[t]
            if stk_phase[t] == 0:
                if hi <= l or r <= lo:
                    top -= 1
                    continue
                if lo <= l and r <= hi:
                    cnt[node] += delta
                    stk_phase[t] = 2
                else:
                    stk_phase[t] = 1
                    mid = (l + r) // 2
                    stk_node[top] = 2 * node
                    stk_l[top] = l
                    stk_r[top] = mid
                    stk_phase[top] = 0
                    stk_node[top + 1] = 2 * node + 1
                    stk_l[top + 1] = mid
                    stk_r[top + 1] = r
                    stk_phase[top + 1] = 0
                    top += 2
                    continue
            # recompute covered length of node
            if cnt[node] > 0:
                a = l
                b = r if r <= nseg else nseg
                cov[node] = ys[b] - ys[a] if b > a else 0.0
            elif r - l == 1:
                cov[node] = 0.0
            else:
                cov[node] = cov[2 * node] + cov[2 * node + 1]
            top -= 1
    return area


@njit(cache=True)
def clip_rects(rects, x0, y0, x1, y1):
    """Intersect each row with the window; empty results become zero-area rows."""
    m = rects.shape[0]
    out = np.empty((m, 4))
    for i in range(m):
        a = max(rects[i, 0], x0)
        b = max(rects[i, 1], y0)
        c = min(rects[i, 2], x1)
        d = min(rects[i, 3], y1)
        if c < a:
            c = a
        if d < b:
            d = b
        out[i, 0] = a
        out[i, 1] = b
        out[i, 2] = c
        out[i, 3] = d
    return out


@njit(cache=True)
def _owner_in_core(indptr, indices, buf, k, pos, c):
    # buf[0] is the owner
    alive = peel_subset(indptr, indices, buf[:k], pos, c)
    return alive[0]


@njit(cache=True)
def _first_completing_group(indptr, indices, buf, kbase, ends, ng, pos, c):
    """Smallest j with the owner in the c-core of buf[:kbase + ends[j]].

    One peel of the full set, then groups are deleted farthest first with
    cascading removals until the owner drops out. Returns -1 when even the
    full set leaves the owner outside, and ng when the base alone keeps it in.
    """
    k = kbase + ends[ng - 1]
    members = buf[:k]
    for i in range(k):
        pos[members[i]] = i
    deg = np.zeros(k, np.int64)
    for i in range(k):
        u = members[i]
        d = 0
        for j in range(indptr[u], indptr[u + 1]):
            if pos[indices[j]] >= 0:
                d += 1
        deg[i] = d
    alive = np.ones(k, np.bool_)
    stack = np.empty(k, np.int64)
    top = 0
    for i in range(k):
        if deg[i] < c:
            alive[i] = False
            stack[top] = i
            top += 1
    result = ng
    g = ng
    while True:
        while top > 0:
            top -= 1
            u = members[stack[top]]
            for j in range(indptr[u], indptr[u + 1]):
                p = pos[indices[j]]
                if p >= 0 and alive[p]:
                    deg[p] -= 1
                    if deg[p] < c:
                        alive[p] = False
                        stack[top] = p
                        top += 1
        if not alive[0]:
            result = g if g < ng else -1
            break
        if g == 0:
            break
        g -= 1
        lo = kbase + (ends[g - 1] if g > 0 else 0)
        for i in range(lo, kbase + ends[g]):
            if alive[i]:
                alive[i] = False
                stack[top] = i
                top += 1
    for i in range(k):
        pos[members[i]] = -1
    return result


@njit(cache=True)
def _fill_inside(xs, ys, ids, v, x0, y0, x1, y1, buf):
    """Owner followed by eligible users strictly inside the rect; returns the count."""
    buf[0] = v
    k = 1
    for t in range(ids.size):
        u = ids[t]
        if u != v and x0 < xs[u] < x1 and y0 < ys[u] < y1:
            buf[k] = u
            k += 1
    return k


@njit(cache=True)
def rect_is_cbr(xs, ys, ids, indptr, indices, pos, buf, v, c, x0, y0, x1, y1):
    """No c-core containing v among v and the eligible users strictly inside."""
    k = _fill_inside(xs, ys, ids, v, x0, y0, x1, y1, buf)
    return not _owner_in_core(indptr, indices, buf, k, pos, c)


@njit(cache=True)
def initial_square(xs, ys, ids, indptr, indices, pos, buf, v, c):
    """Half-width of the square seeded by the nearest user completing a c-core with v.

    Users are taken in (distance, id) order; returns -1.0 when no prefix
    holds such a core.
    """
    m = ids.size
    d2 = np.empty(m)
    for t in range(m):
        u = ids[t]
        d2[t] = (xs[u] - xs[v]) ** 2 + (ys[u] - ys[v]) ** 2
        if u == v:
            d2[t] = -1.0
    # nearest prefixes first; only sort what is needed
    s = 8
    while True:
        if s >= m:
            order = np.argsort(d2, kind="mergesort")
        else:
            thr = np.partition(d2, s)[s]
            sel = np.flatnonzero(d2 <= thr)
            sub = np.argsort(d2[sel], kind="mergesort")
            order = sel[sub]
        cnt = min(s + 1, order.size)
        for i in range(cnt):
            buf[i] = ids[order[i]]
        if s >= m or _owner_in_core(indptr, indices, buf, cnt, pos, c):
            break
        s *= 4
    # groups of one user each: prefix j+1 adds buf[j+1]
    ng = cnt - 1
    if ng <= 0:
        return -1.0
    ends = np.arange(1, ng + 1)
    j = _first_completing_group(indptr, indices, buf, 1, ends, ng, pos, c)
    if j < 0:
        return -1.0
    if j >= ng:
        return 0.0
    u = buf[j + 1]
    return np.sqrt((xs[u] - xs[v]) ** 2 + (ys[u] - ys[v]) ** 2) / np.sqrt(2.0)


@njit(cache=True)
def _fill_inside_sorted(xs, ys, xo, xv, v, x0, y0, x1, y1, buf):
    """Like the plain scan but only visits users whose x lies in (x0, x1)."""
    buf[0] = v
    k = 1
    i = np.searchsorted(xv, x0, side="right")
    hi = np.searchsorted(xv, x1, side="left")
    while i < hi:
        u = xo[i]
        if u != v and y0 < ys[u] < y1:
            buf[k] = u
            k += 1
        i += 1
    return k


@njit(cache=True)
def _move_edge(xs, ys, xo, xv, yo, yv, indptr, indices, pos, buf, ends, v, c, rect, edge, dom):
    """Push one bounding edge outward as far as validity allows; returns True if it moved.

    edge: 0 left, 1 bottom, 2 right, 3 top. ``rect`` is updated in place.
    ``xo``/``yo`` hold eligible users sorted by x/y and ``xv``/``yv`` their
    coordinates, so candidates beyond the edge come out nearest first.
    """
    axis = edge % 2
    if axis == 0:
        coord = xs
        other = ys
        so = xo
        sv = xv
    else:
        coord = ys
        other = xs
        so = yo
        sv = yv
    lo_o = rect[1 - axis]
    hi_o = rect[3 - axis]
    cur = rect[edge]
    opp = rect[(edge + 2) % 4]
    limit = dom[edge]
    outward = edge >= 2
    if (outward and cur >= limit) or (not outward and cur <= limit):
        return False
    k = _fill_inside_sorted(xs, ys, xo, xv, v, rect[0], rect[1], rect[2], rect[3], buf)
    # users on the edge itself become interior once it moves
    a = np.searchsorted(sv, cur, side="left")
    b = np.searchsorted(sv, cur, side="right")
    on_edge = 0
    collapsed = opp == cur
    if not collapsed:
        for i in range(a, b):
            u = so[i]
            if u != v and lo_o < other[u] < hi_o:
                buf[k] = u
                k += 1
                on_edge += 1
    if on_edge > 0 and _owner_in_core(indptr, indices, buf, k, pos, c):
        return False
    # candidates beyond the edge, nearest first, grouped by coordinate
    nc = 0
    ng = 0
    last = 0.0
    if outward:
        i = b
        step = 1
        stop = sv.size
    else:
        i = a - 1
        step = -1
        stop = -1
    while i != stop:
        u = so[i]
        if lo_o < other[u] < hi_o:
            if nc > 0 and coord[u] != last:
                ends[ng] = nc
                ng += 1
            buf[k + nc] = u
            nc += 1
            last = coord[u]
        i += step
    if nc == 0:
        rect[edge] = limit
        return True
    ends[ng] = nc
    ng += 1
    # try short prefixes first; fall back to the whole strip
    lim = 64
    while lim < ng:
        if _owner_in_core(indptr, indices, buf, k + ends[lim - 1], pos, c):
            ng = lim
            break
        lim *= 8
    j = _first_completing_group(indptr, indices, buf, k, ends, ng, pos, c)
    if j == ng:
        return False
    if j < 0:
        rect[edge] = limit
        return True
    rect[edge] = coord[buf[k + ends[j] - 1]]
    return True


@njit(cache=True)
def expand_cbr(xs, ys, xo, xv, yo, yv, indptr, indices, pos, buf, v, c, rect, dom):
    """Push the edges outward in the order left, bottom, right, top.

    A second cycle can never move anything: an edge stops because the users
    on it complete a core with v, and later moves only add users to that
    set, so one cycle already reaches the idle fixpoint.
    """
    ends = np.empty(xs.size + 1, np.int64)
    for edge in range(4):
        _move_edge(xs, ys, xo, xv, yo, yv, indptr, indices, pos, buf, ends, v, c, rect, edge, dom)
    return rect
