"""Compiled inner loop of the repacking chain.

The chain logic here mirrors feasibility._repack_orphan_py statement for
statement, including the order in which uniform draws are consumed (one
splitmix64 stream per chain, seeded by the caller): tie sets are sorted by
content id, displaced-stream picks run in holder-scan order, and a draw is
consumed only when a choice set has more than one element. Both
implementations therefore produce bit-identical outcomes for the same seed,
which the test suite checks directly.

The kernel mutates the array state (slots, slot_stream, in_service) and logs
the swap sequence; the caller replays the log onto the Python-side
bookkeeping and performs the final seat, so free counts, busy counts and the
free-slot stacks are only ever touched through one code path.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency normally
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco


_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_NEG53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _u01(sm):
    """splitmix64 step; returns (uniform in [0,1), new state)."""
    sm = sm + _GOLD
    z = sm
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * _TWO_NEG53, sm


@njit(cache=True)
def chain_kernel(first_sid, first_content, budget, seed_arr,
                 slots, slot_stream, free, busy, in_service, holder_count,
                 holders2d, visited, tie_buf, pair_box, pair_slot,
                 log_box, log_slot, log_victim, box_marks, blocked, epoch_arr):
    """Run one repacking chain; returns (status, swaps, out_box).

    status 0: the final displaced stream found an idle holder ``out_box``
    (the caller seats it there); status 1: the chain ended with the current
    orphan lost. ``visited`` must arrive zeroed; ``seed_arr`` is a one-entry
    uint64 array (scalar uint64 arguments would be narrowed to int64 at the
    call boundary); ``box_marks``/``blocked``/``epoch_arr`` are epoch-stamped
    scratch that must persist across calls; ``log_*`` receive one entry per
    executed swap.
    """
    sm = seed_arr[0]
    c_total = holder_count.shape[0]
    b_total = slots.shape[0]
    u = slots.shape[1]
    epoch = epoch_arr[0]

    ratio = np.empty(c_total, np.float64)
    for c in range(c_total):
        d = holder_count[c]
        if d > 0:
            ratio[c] = in_service[c] / d
        elif in_service[c] > 0:
            ratio[c] = np.inf
        else:
            ratio[c] = 0.0

    cur_sid = first_sid
    cur_content = first_content
    visited[first_content] = 1
    swaps = 0
    status = 1
    out_box = -1
    while True:
        if swaps >= budget:
            break
        d_o = holder_count[cur_content]
        if d_o == 0:
            break
        r_o = ratio[cur_content]

        vb = -1
        vi = -1
        if 2 * d_o * u <= d_o + 4 * c_total:
            # few holders: enumerate the contents they serve directly,
            # collecting the tied leaders in one pass
            best = -np.inf
            k = 0
            for hi in range(d_o):
                row = holders2d[cur_content, hi]
                for i in range(u):
                    cc = slots[row, i]
                    if visited[cc] == 0:
                        rr = ratio[cc]
                        if rr > best:
                            best = rr
                            k = 1
                            tie_buf[0] = cc
                        elif rr == best:
                            dup = False
                            for t in range(k):
                                if tie_buf[t] == cc:
                                    dup = True
                                    break
                            if not dup:
                                tie_buf[k] = cc
                                k += 1
            if best <= r_o:
                break
            if k > 1:
                for a in range(1, k):
                    key = tie_buf[a]
                    p = a - 1
                    while p >= 0 and tie_buf[p] > key:
                        tie_buf[p + 1] = tie_buf[p]
                        p -= 1
                    tie_buf[p + 1] = key
                uval, sm = _u01(sm)
                c_star = tie_buf[int(uval * k)]
            else:
                c_star = tie_buf[0]
            # all (box, slot) pairs serving c_star, in scan order
            m = 0
            for hi in range(d_o):
                row = holders2d[cur_content, hi]
                for i in range(u):
                    if slots[row, i] == c_star:
                        pair_box[m] = row
                        pair_slot[m] = i
                        m += 1
            if m > 1:
                uval, sm = _u01(sm)
                j = int(uval * m)
            else:
                j = 0
            vb = pair_box[j]
            vi = pair_slot[j]
        else:
            # holders cover >= 1/4 of the boxes: walk the global ratio
            # ranking and confirm co-location through the candidate's own
            # holders (every seated stream sits on a holder of its content)
            epoch += 1
            for hi in range(d_o):
                box_marks[holders2d[cur_content, hi]] = epoch
            while True:
                best = -np.inf
                for c in range(c_total):
                    if visited[c] == 0 and blocked[c] != epoch:
                        rr = ratio[c]
                        if rr > best:
                            best = rr
                if best <= r_o:
                    break
                k = 0
                for c in range(c_total):
                    if visited[c] == 0 and blocked[c] != epoch and ratio[c] == best:
                        tie_buf[k] = c
                        k += 1
                if k > 1:
                    uval, sm = _u01(sm)
                    c_star = tie_buf[int(uval * k)]
                else:
                    c_star = tie_buf[0]
                m = 0
                ds = holder_count[c_star]
                for hi in range(ds):
                    row = holders2d[c_star, hi]
                    if box_marks[row] == epoch:
                        for i in range(u):
                            if slots[row, i] == c_star:
                                pair_box[m] = row
                                pair_slot[m] = i
                                m += 1
                if m > 0:
                    if m > 1:
                        uval, sm = _u01(sm)
                        j = int(uval * m)
                    else:
                        j = 0
                    vb = pair_box[j]
                    vi = pair_slot[j]
                    break
                blocked[c_star] = epoch  # served nowhere on these holders
        if vb < 0:
            break

        victim = slot_stream[vb, vi]
        in_service[c_star] -= 1
        slots[vb, vi] = cur_content
        slot_stream[vb, vi] = cur_sid
        in_service[cur_content] += 1
        log_box[swaps] = vb
        log_slot[swaps] = vi
        log_victim[swaps] = victim

        ratio[cur_content] = in_service[cur_content] / d_o
        ds = holder_count[c_star]
        if ds > 0:
            ratio[c_star] = in_service[c_star] / ds
        elif in_service[c_star] > 0:
            ratio[c_star] = np.inf
        else:
            ratio[c_star] = 0.0

        swaps += 1
        cur_sid = victim
        cur_content = c_star

        # most idle holder of the displaced content (same rule as select_box)
        if busy[c_star] < holder_count[c_star]:
            dd = holder_count[c_star]
            mf = 0
            for hi in range(dd):
                f = free[holders2d[c_star, hi]]
                if f > mf:
                    mf = f
            ties = 0
            for hi in range(dd):
                if free[holders2d[c_star, hi]] == mf:
                    ties += 1
            if ties > 1:
                uval, sm = _u01(sm)
                pick = int(uval * ties)
            else:
                pick = 0
            cnt = 0
            for hi in range(dd):
                row = holders2d[c_star, hi]
                if free[row] == mf:
                    if cnt == pick:
                        out_box = row
                        break
                    cnt += 1
            status = 0
            break
        visited[c_star] = 1

    epoch_arr[0] = epoch
    return status, swaps, out_box
