"""Pure-Python homomorphism enumeration, the fallback matching kernel.

Backtracks over pattern slots in a connectivity order fixed at pattern
compile time. Candidate sets come from per-relation adjacency of the
anchor slot; remaining pattern edges are checked against the graph's
edge set. Enumeration order is deterministic (adjacency lists are
sorted by node index).
"""

from __future__ import annotations


def enumerate_matches(gindex, pattern, root: int, dyn, root_dyn: bool, cap: int):
    nslots = pattern.nslots
    slot_types = pattern.slot_types
    anchors = pattern.anchors
    checks = pattern.checks
    out_list = gindex.out_list
    in_list = gindex.in_list
    edge_set = gindex.edge_set
    types = gindex.types

    restricted = dyn is not None
    suffix_dyn = pattern_suffix_dyn(pattern, gindex, dyn, root) if restricted else None

    assign = [-1] * nslots
    assign[0] = root
    results: list[tuple[int, ...]] = []
    truncated = False

    def extend(depth: int, dyn_count: int) -> bool:
        nonlocal truncated
        if depth == nslots:
            if restricted and not root_dyn and dyn_count == 0:
                return True
            results.append(tuple(assign))
            if len(results) >= cap:
                truncated = True
                return False
            return True
        if restricted and not root_dyn and dyn_count == 0 and not suffix_dyn[depth]:
            return True
        prev_slot, rel, direction = anchors[depth]
        base = assign[prev_slot]
        cands = out_list[rel][base] if direction == 0 else in_list[rel][base]
        want_type = slot_types[depth]
        slot_checks = checks[depth]
        for cand in cands:
            if types[cand] != want_type or cand == root:
                continue
            ok = True
            for other_slot, crel, cdir in slot_checks:
                other = assign[other_slot]
                if cdir == 0:
                    if (other, crel, cand) not in edge_set:
                        ok = False
                        break
                else:
                    if (cand, crel, other) not in edge_set:
                        ok = False
                        break
            if not ok:
                continue
            assign[depth] = cand
            more = dyn_count + 1 if restricted and cand in dyn else dyn_count
            keep_going = extend(depth + 1, more)
            assign[depth] = -1
            if not keep_going:
                return False
        return True

    extend(1, 0)
    return results, truncated


def pattern_suffix_dyn(pattern, gindex, dyn, root) -> list[bool]:
    """suffix_dyn[s]: some slot >= s could still bind a dynamic node.

    Used to prune subtrees that cannot satisfy the at-least-one-dynamic
    rule. Root is excluded since non-root slots never bind it.
    """
    counts = [0] * pattern.nslots
    for s in range(1, pattern.nslots):
        want = pattern.slot_types[s]
        counts[s] = sum(1 for i in dyn if i != root and gindex.types[i] == want)
    suffix = [False] * (pattern.nslots + 1)
    for s in range(pattern.nslots - 1, 0, -1):
        suffix[s] = suffix[s + 1] or counts[s] > 0
    return suffix
