# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled homomorphism-enumeration kernel.

Exact mirror of ``pymatch`` over CSR adjacency arrays: same slot order,
same candidate generation, same pruning, same cap semantics, so both
kernels return identical instance lists.
"""

import numpy as np


cdef inline bint _adj_contains(const int[:, ::1] ptr, const int[::1] idx,
                               int rel, int src, int dst) noexcept:
    cdef int lo = ptr[rel, src]
    cdef int hi = ptr[rel, src + 1]
    cdef int mid, val
    while lo < hi:
        mid = (lo + hi) >> 1
        val = idx[mid]
        if val == dst:
            return True
        elif val < dst:
            lo = mid + 1
        else:
            hi = mid
    return False


cdef int _extend(int depth, int dyn_count,
                 int nslots,
                 const signed char[::1] slot_types,
                 const int[:, ::1] anchors,
                 const int[::1] checks_ptr,
                 const int[:, ::1] checks,
                 const signed char[::1] types,
                 const int[:, ::1] out_ptr, const int[::1] out_idx,
                 const int[:, ::1] in_ptr, const int[::1] in_idx,
                 int root, bint restricted, bint root_dyn,
                 const unsigned char[::1] dyn_mask,
                 const unsigned char[::1] suffix_dyn,
                 int[::1] assign,
                 int[:, ::1] out_buf,
                 int[::1] counter,
                 int cap) noexcept:
    """Returns 0 when the cap aborts the search, 1 otherwise."""
    cdef int prev_slot, rel, direction, base, lo, hi, pos, cand
    cdef int c_lo, c_hi, other_slot, crel, cdir, other, row, s
    cdef bint ok
    cdef signed char want_type

    if depth == nslots:
        if restricted and not root_dyn and dyn_count == 0:
            return 1
        row = counter[0]
        for s in range(nslots):
            out_buf[row, s] = assign[s]
        counter[0] = row + 1
        if counter[0] >= cap:
            return 0
        return 1

    if restricted and not root_dyn and dyn_count == 0 and not suffix_dyn[depth]:
        return 1

    prev_slot = anchors[depth, 0]
    rel = anchors[depth, 1]
    direction = anchors[depth, 2]
    base = assign[prev_slot]
    if direction == 0:
        lo = out_ptr[rel, base]
        hi = out_ptr[rel, base + 1]
    else:
        lo = in_ptr[rel, base]
        hi = in_ptr[rel, base + 1]
    want_type = slot_types[depth]
    c_lo = checks_ptr[depth]
    c_hi = checks_ptr[depth + 1]

    for pos in range(lo, hi):
        cand = out_idx[pos] if direction == 0 else in_idx[pos]
        if types[cand] != want_type or cand == root:
            continue
        ok = True
        for s in range(c_lo, c_hi):
            other_slot = checks[s, 0]
            crel = checks[s, 1]
            cdir = checks[s, 2]
            other = assign[other_slot]
            if cdir == 0:
                if not _adj_contains(out_ptr, out_idx, crel, other, cand):
                    ok = False
                    break
            else:
                if not _adj_contains(out_ptr, out_idx, crel, cand, other):
                    ok = False
                    break
        if not ok:
            continue
        assign[depth] = cand
        if restricted and dyn_mask[cand]:
            if _extend(depth + 1, dyn_count + 1, nslots, slot_types, anchors,
                       checks_ptr, checks, types, out_ptr, out_idx, in_ptr, in_idx,
                       root, restricted, root_dyn, dyn_mask, suffix_dyn,
                       assign, out_buf, counter, cap) == 0:
                assign[depth] = -1
                return 0
        else:
            if _extend(depth + 1, dyn_count, nslots, slot_types, anchors,
                       checks_ptr, checks, types, out_ptr, out_idx, in_ptr, in_idx,
                       root, restricted, root_dyn, dyn_mask, suffix_dyn,
                       assign, out_buf, counter, cap) == 0:
                assign[depth] = -1
                return 0
        assign[depth] = -1
    return 1


def enumerate_matches(gindex, pattern, int root, dyn, bint root_dyn, int cap):
    cdef int nslots = pattern.nslots
    cdef int n = len(gindex.refs)

    slot_types = pattern.slot_types_arr
    anchors = pattern.anchors_arr
    checks_ptr = pattern.checks_ptr
    checks = pattern.checks_arr
    types = gindex.types_arr
    out_ptr = gindex.out_ptr
    out_idx = gindex.out_idx
    in_ptr = gindex.in_ptr
    in_idx = gindex.in_idx

    cdef bint restricted = dyn is not None
    dyn_mask = np.zeros(n, dtype=np.uint8)
    suffix = np.zeros(nslots + 1, dtype=np.uint8)
    if restricted:
        for i in dyn:
            dyn_mask[i] = 1
        counts = [0] * nslots
        for s in range(1, nslots):
            want = pattern.slot_types[s]
            counts[s] = sum(
                1 for i in dyn if i != root and gindex.types[i] == want
            )
        for s in range(nslots - 1, 0, -1):
            suffix[s] = 1 if (suffix[s + 1] or counts[s] > 0) else 0

    if cap <= 0:
        return [], True
    out_buf = np.empty((cap, nslots), dtype=np.int32)
    assign = np.full(nslots, -1, dtype=np.int32)
    assign[0] = root
    counter = np.zeros(1, dtype=np.int32)

    cdef int status = _extend(
        1, 0, nslots, slot_types, anchors, checks_ptr, checks, types,
        out_ptr, out_idx, in_ptr, in_idx, root, restricted, root_dyn,
        dyn_mask, suffix, assign, out_buf, counter, cap,
    )
    cdef int count = counter[0]
    results = [tuple(row) for row in out_buf[:count].tolist()]
    truncated = count >= cap
    return results, truncated
