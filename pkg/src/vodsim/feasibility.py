"""Feasibility tests for request vectors and the online repacking heuristic.

Two exact oracles decide whether a request vector can be served at all:
``is_feasible_matching`` (max-flow on the content/box bipartite graph) and
``is_feasible_hall`` (subset-sum form; exponential in C, test use only).

The simulator itself never calls the exact tests. Online admission uses
``select_box`` (most idle holder) and, when every holder is busy, ``repack``,
which iteratively swaps ongoing streams toward boxes with spare capacity.
``orphan_rescue`` re-places streams interrupted by a cache eviction.

Repacking chains at overload run tens of swaps over millions of arrivals, so
the chain body has two interchangeable implementations: a compiled kernel
(_chain_kernel) and a plain-Python reference. Both consume uniform draws
from one splitmix64 stream per chain (seeded from the caller's generator) at
identical decision points, so they produce bit-identical results; the test
suite verifies that equivalence directly.

``AssignmentState`` is single-owner mutable; one simulation run drives it
strictly sequentially. The exact tests are pure functions.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from . import _chain_kernel
from .core import CapacityError, Placement, as_request_vector

_HALL_MAX_CONTENTS = 20
# padded holder matrix is content_count x box_count; skip the kernel beyond this
_KERNEL_CELL_LIMIT = 40_000_000


def is_feasible_matching(n, placement: Placement, uplink_slots: int) -> bool:
    """True iff the request vector admits an assignment to holder boxes.

    Builds source -> content (capacity n_c) -> holder box (capacity n_c)
    -> sink (capacity U) and checks that the max flow saturates the demand.
    """
    n = as_request_vector(n, placement.content_count)
    total = int(n.sum())
    if total == 0:
        return True
    c_total = placement.content_count
    b_total = placement.box_count
    sink = 1 + c_total + b_total
    holders = placement.holders

    rows: list[int] = []
    cols: list[int] = []
    caps: list[int] = []
    for c in np.flatnonzero(n):
        nc = int(n[c])
        rows.append(0)
        cols.append(1 + c)
        caps.append(nc)
        for b in holders[c]:
            rows.append(1 + c)
            cols.append(1 + c_total + b)
            caps.append(nc)
    for b in range(b_total):
        rows.append(1 + c_total + b)
        cols.append(sink)
        caps.append(uplink_slots)

    graph = csr_matrix((np.asarray(caps, dtype=np.int32),
                        (np.asarray(rows), np.asarray(cols))),
                       shape=(sink + 1, sink + 1))
    return maximum_flow(graph, 0, sink).flow_value == total


def is_feasible_hall(n, placement: Placement, uplink_slots: int) -> bool:
    """Subset form of feasibility: for every content set S, the demand of S
    must fit in the uplinks of the boxes caching anything from S.

    Enumerates all 2^C subsets; guarded to C <= 20. Use
    ``is_feasible_matching`` beyond that.
    """
    c_total = placement.content_count
    if c_total > _HALL_MAX_CONTENTS:
        raise CapacityError(
            f"hall test enumerates 2^C subsets; C={c_total} > {_HALL_MAX_CONTENTS}. "
            "Use is_feasible_matching instead.")
    n = as_request_vector(n, placement.content_count)
    subsets = np.arange(1, 1 << c_total, dtype=np.int64)
    covered = np.zeros(subsets.shape, dtype=np.int64)
    for row in placement.caches:
        mask = 0
        for c in row:
            mask |= 1 << c
        covered += (subsets & mask) != 0
    demand = np.zeros(subsets.shape, dtype=np.int64)
    for c in np.flatnonzero(n):
        demand += int(n[c]) * ((subsets >> int(c)) & 1)
    return bool(np.all(demand <= uplink_slots * covered))


# --------------------------------------------------------------------------
# live assignment state
# --------------------------------------------------------------------------

class AssignmentState:
    """Connection assignment of one running system.

    Stream records are ``[content, box, slot, end_time, counted]`` keyed by an
    integer stream id; ``box == -1`` marks a registered but unseated stream
    (an orphan in the middle of repacking). ``in_service`` and
    ``holder_count`` expose the per-content stream and replica-holder counts
    the repacking heuristic ranks by; ``busy_holders`` counts holders with no
    free connection so a saturated content is recognized in O(1). The
    paper-facing partition of holders by free-slot count is available via
    :meth:`holders_by_free_slots`.
    """

    def __init__(self, placement: Placement, uplink_slots: int):
        b_total = placement.box_count
        c_total = placement.content_count
        u = int(uplink_slots)
        self.box_count = b_total
        self.content_count = c_total
        self.uplink_slots = u

        self.free = np.full(b_total, u, dtype=np.int64)
        self.slots = np.full((b_total, u), -1, dtype=np.int64)
        self.slot_stream = np.full((b_total, u), -1, dtype=np.int64)
        # plain-list mirror of ``slots``: the repacking scans read single
        # entries millions of times, where ndarray scalar access is 5x slower
        self.slots_py: list[list[int]] = [[-1] * u for _ in range(b_total)]
        self._free_slot_stack = [list(range(u)) for _ in range(b_total)]

        self.cache_lists = [list(row) for row in placement.caches]
        self.cache_sets = [set(row) for row in placement.caches]
        self._holder_list = [list(h) for h in placement.holders]
        self._holder_pos = [{b: i for i, b in enumerate(h)} for h in self._holder_list]
        self._holder_arr: list[np.ndarray | None] = [None] * c_total

        self.in_service = np.zeros(c_total, dtype=np.int64)
        self.holder_count = np.array([len(h) for h in self._holder_list], dtype=np.int64)
        self.busy_holders = np.zeros(c_total, dtype=np.int64)
        self.streams: dict[int, list] = {}

        # compiled-chain support, materialized on first use
        self.use_kernel: bool | None = None  # None = auto
        self._holders2d: np.ndarray | None = None
        self._scratch: tuple | None = None

    # -- holder index ------------------------------------------------------

    def holders_array(self, content: int) -> np.ndarray:
        arr = self._holder_arr[content]
        if arr is None:
            arr = np.asarray(self._holder_list[content], dtype=np.int64)
            self._holder_arr[content] = arr
        return arr

    def holders_by_free_slots(self, content: int) -> list[list[int]]:
        """Holders of a content grouped by their current free-slot count."""
        groups: list[list[int]] = [[] for _ in range(self.uplink_slots + 1)]
        for b in self._holder_list[content]:
            groups[int(self.free[b])].append(b)
        for g in groups:
            g.sort()
        return groups

    def _holder_add(self, content: int, box: int) -> None:
        lst = self._holder_list[content]
        self._holder_pos[content][box] = len(lst)
        if self._holders2d is not None:
            self._holders2d[content, len(lst)] = box
        lst.append(box)
        self.holder_count[content] += 1
        self._holder_arr[content] = None

    def _holder_remove(self, content: int, box: int) -> None:
        pos = self._holder_pos[content]
        lst = self._holder_list[content]
        i = pos.pop(box)
        last = lst.pop()
        if last != box:
            lst[i] = last
            pos[last] = i
            if self._holders2d is not None:
                self._holders2d[content, i] = last
        self.holder_count[content] -= 1
        self._holder_arr[content] = None

    def _kernel_ready(self) -> bool:
        if self.use_kernel is False or not _chain_kernel.HAVE_NUMBA:
            return False
        if self.use_kernel is None and \
                self.content_count * self.box_count > _KERNEL_CELL_LIMIT:
            return False
        if self._holders2d is None:
            h2d = np.full((self.content_count, self.box_count), -1, dtype=np.int64)
            for c, lst in enumerate(self._holder_list):
                if lst:
                    h2d[c, :len(lst)] = lst
            self._holders2d = h2d
            u = self.uplink_slots
            self._scratch = (
                np.zeros(self.content_count, dtype=np.uint8),       # visited
                np.empty(self.content_count, dtype=np.int64),       # ties
                np.empty(self.box_count * u, dtype=np.int64),       # pair boxes
                np.empty(self.box_count * u, dtype=np.int64),       # pair slots
                np.empty(self.content_count + 1, dtype=np.int64),   # log box
                np.empty(self.content_count + 1, dtype=np.int64),   # log slot
                np.empty(self.content_count + 1, dtype=np.int64),   # log victim
                np.empty(1, dtype=np.uint64),                       # seed carrier
                np.zeros(self.box_count, dtype=np.int64),           # box marks
                np.zeros(self.content_count, dtype=np.int64),       # blocked marks
                np.zeros(1, dtype=np.int64),                        # epoch counter
            )
        return True

    # -- box selection ------------------------------------------------------

    def select_box(self, content: int, rng) -> int | None:
        """Most idle holder of ``content`` (uniform tie-break); None if all busy."""
        if self.busy_holders[content] == self.holder_count[content]:
            return None  # covers the no-holder case too
        hl = self.holders_array(content)
        f = self.free[hl]
        m = f.max()
        ties = hl[f == m]
        if ties.shape[0] == 1:
            return int(ties[0])
        return int(ties[int(rng.random() * ties.shape[0])])

    # -- stream lifecycle ----------------------------------------------------

    def register(self, sid: int, content: int, end_time: float, counted: bool) -> None:
        self.streams[sid] = [content, -1, -1, end_time, counted]

    def seat_existing(self, sid: int, box: int) -> int:
        rec = self.streams[sid]
        content = rec[0]
        slot = self._free_slot_stack[box].pop()
        left = self.free[box] - 1
        self.free[box] = left
        if left == 0:
            busy = self.busy_holders
            for c in self.cache_sets[box]:
                busy[c] += 1
        self.slots[box, slot] = content
        self.slots_py[box][slot] = content
        self.slot_stream[box, slot] = sid
        self.in_service[content] += 1
        rec[1] = box
        rec[2] = slot
        return slot

    def seat(self, sid: int, content: int, box: int, end_time: float, counted: bool) -> int:
        self.register(sid, content, end_time, counted)
        return self.seat_existing(sid, box)

    def unseat(self, sid: int) -> None:
        rec = self.streams[sid]
        content, box, slot = rec[0], rec[1], rec[2]
        self.slots[box, slot] = -1
        self.slots_py[box][slot] = -1
        self.slot_stream[box, slot] = -1
        self._free_slot_stack[box].append(slot)
        if self.free[box] == 0:
            busy = self.busy_holders
            for c in self.cache_sets[box]:
                busy[c] -= 1
        self.free[box] += 1
        self.in_service[content] -= 1
        rec[1] = -1
        rec[2] = -1

    def complete(self, sid: int) -> list:
        self.unseat(sid)
        return self.streams.pop(sid)

    def drop(self, sid: int) -> list:
        """Remove an unseated (orphan) stream record."""
        rec = self.streams.pop(sid)
        if rec[1] != -1:
            raise RuntimeError(f"stream {sid} is still seated")
        return rec

    def swap_stream(self, box: int, slot: int, incoming_sid: int) -> int:
        """Seat ``incoming_sid`` on an occupied connection, displacing its
        stream. Box occupancy is unchanged, so no busy-count transitions."""
        victim = int(self.slot_stream[box, slot])
        vic_rec = self.streams[victim]
        self.in_service[vic_rec[0]] -= 1
        vic_rec[1] = -1
        vic_rec[2] = -1
        rec = self.streams[incoming_sid]
        content = rec[0]
        self.slots[box, slot] = content
        self.slots_py[box][slot] = content
        self.slot_stream[box, slot] = incoming_sid
        self.in_service[content] += 1
        rec[1] = box
        rec[2] = slot
        return victim

    # -- cache mutation (demand-driven updates) ------------------------------

    def replace_cached(self, box: int, old_content: int, new_content: int) -> None:
        """Swap one cache entry; the caller guarantees new_content is absent."""
        cl = self.cache_lists[box]
        cl[cl.index(old_content)] = new_content
        cs = self.cache_sets[box]
        full = self.free[box] == 0
        if old_content not in cl:  # no duplicate copy left behind
            cs.discard(old_content)
            self._holder_remove(old_content, box)
            if full:
                self.busy_holders[old_content] -= 1
        if new_content not in cs:
            cs.add(new_content)
            self._holder_add(new_content, box)
            if full:
                self.busy_holders[new_content] += 1

    # -- diagnostics ----------------------------------------------------------

    def current_placement(self) -> Placement:
        return Placement(self.cache_lists, self.content_count,
                         allow_duplicate_slots=True)

    def dump(self) -> str:
        lines = [f"AssignmentState: boxes={self.box_count} contents={self.content_count} "
                 f"uplinks={self.uplink_slots} streams={len(self.streams)}"]
        for b in range(self.box_count):
            lines.append(
                f"  box {b}: free={int(self.free[b])} cache={sorted(self.cache_sets[b])} "
                f"slots={[int(c) for c in self.slots[b]]}")
        busy = [f"{c}:{int(v)}" for c, v in enumerate(self.in_service) if v]
        lines.append("  in_service " + (" ".join(busy) if busy else "(idle)"))
        return "\n".join(lines)

    def validate(self) -> None:
        """Exhaustive consistency check (test/debug use)."""
        u = self.uplink_slots
        served = np.zeros(self.content_count, dtype=np.int64)
        for b in range(self.box_count):
            row = self.slots[b]
            assert self.slots_py[b] == [int(c) for c in row], f"slot mirror mismatch at {b}"
            empty = {i for i in range(u) if row[i] == -1}
            assert int(self.free[b]) == len(empty), f"free count mismatch at box {b}"
            assert set(self._free_slot_stack[b]) == empty, f"slot stack mismatch at box {b}"
            assert set(self.cache_lists[b]) == self.cache_sets[b]
            for i in range(u):
                sid = int(self.slot_stream[b, i])
                if row[i] == -1:
                    assert sid == -1
                else:
                    served[row[i]] += 1
                    rec = self.streams[sid]
                    assert rec[0] == row[i] and rec[1] == b and rec[2] == i
        assert np.array_equal(served, self.in_service), "in_service mismatch"
        for c in range(self.content_count):
            expect = {b for b in range(self.box_count) if c in self.cache_sets[b]}
            assert set(self._holder_list[c]) == expect, f"holder set mismatch for {c}"
            assert int(self.holder_count[c]) == len(expect)
            assert int(self.busy_holders[c]) == sum(1 for b in expect if self.free[b] == 0)
            groups = self.holders_by_free_slots(c)
            assert sum(len(g) for g in groups) == len(expect)
            if self._holders2d is not None:
                mirror = self._holders2d[c, :len(expect)].tolist()
                assert mirror == self._holder_list[c], f"holder matrix mismatch for {c}"
        seated = sum(1 for rec in self.streams.values() if rec[1] != -1)
        assert seated == int(self.in_service.sum())


def select_box(state: AssignmentState, content: int, rng) -> int | None:
    """Load-balancing box choice: a holder with the most free connections."""
    return state.select_box(content, rng)


# --------------------------------------------------------------------------
# repacking heuristic
# --------------------------------------------------------------------------

@dataclass
class RepackOutcome:
    request_seated: bool
    dropped: tuple[int, int, bool] | None  # (sid, content, counted)
    swaps: int


@dataclass
class RescueOutcome:
    rescued: int
    dropped: list[tuple[int, int, bool]]
    swaps: int


_MASK64 = (1 << 64) - 1
_INF = float("inf")


class _SplitMix:
    """splitmix64 stream; the Python twin of the kernel's generator."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def random(self) -> float:
        s = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        self.state = s
        z = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        return (z >> 11) * 2.0 ** -53


def _utilization_ratios(state: AssignmentState) -> np.ndarray:
    """Per-content in-service/holder ratio as floats whose total order equals
    the exact rational order.

    Distinct rationals n1/d1 != n2/d2 with d <= B differ by at least
    1/(d1*d2) >= 1/B^2, many orders of magnitude above the correctly rounded
    quotient error, and equal rationals round to the identical float, so
    float comparisons reproduce cross-multiplied integer comparisons exactly
    (contents with streams but zero holders compare as +inf, matching the
    cross-product convention that nothing exceeds them).
    """
    n = state.in_service
    d = state.holder_count
    ratio = np.zeros(state.content_count)
    np.divide(n, d, out=ratio, where=d > 0)
    ratio[(d == 0) & (n > 0)] = np.inf
    return ratio


def _repack_orphan_py(state: AssignmentState, first_sid: int, budget: int,
                      sm: _SplitMix) -> tuple[int | None, int]:
    """Reference implementation of the chain; see _repack_orphan."""
    u = state.uplink_slots
    in_service = state.in_service
    holder_count = state.holder_count
    streams = state.streams
    slots_py = state.slots_py
    holder_lists = state._holder_list
    rnd = sm.random
    ratio_vec = _utilization_ratios(state)
    ratio = ratio_vec.tolist()  # list twin: scalar reads are 5x cheaper
    visited = {streams[first_sid][0]}
    cur_sid = first_sid
    swaps = 0
    while True:
        if swaps >= budget:
            return cur_sid, swaps
        c_o = streams[cur_sid][0]
        d_o = int(holder_count[c_o])
        if d_o == 0:
            return cur_sid, swaps
        r_o = ratio[c_o]

        target_sid = -1
        if 2 * d_o * u <= d_o + 4 * state.content_count:
            if d_o <= 24:
                # a handful of holders: plain scan of their connection lists
                best = -1
                best_r = r_o
                ties = None
                for b in holder_lists[c_o]:
                    for cc in slots_py[b]:
                        if cc == best:
                            continue
                        rr = ratio[cc]
                        if rr > best_r and cc not in visited:
                            best, best_r, ties = cc, rr, None
                        elif rr == best_r and best >= 0 and cc not in visited:
                            if ties is None:
                                ties = {best, cc}
                            else:
                                ties.add(cc)
                if best >= 0:
                    if ties is not None:
                        ordered = sorted(ties)
                        best = ordered[int(rnd() * len(ordered))]
                    pairs = [(b, i)
                             for b in holder_lists[c_o]
                             for i, cc in enumerate(slots_py[b]) if cc == best]
                    b, i = pairs[int(rnd() * len(pairs))] if len(pairs) > 1 else pairs[0]
                    target_sid = int(state.slot_stream[b, i])
            else:
                # vectorized scan of the served contents
                hl = state.holders_array(c_o)
                flat = state.slots[hl].ravel()
                counts = np.bincount(flat, minlength=state.content_count)
                vals = np.where(counts > 0, ratio_vec, -_INF)
                vals[list(visited)] = -_INF
                i = int(vals.argmax())
                top = vals[i]
                if top > r_o:
                    if np.count_nonzero(vals == top) > 1:
                        ties_arr = np.flatnonzero(vals == top)
                        i = int(ties_arr[int(rnd() * ties_arr.shape[0])])
                    if counts[i] == 1:
                        j = int(np.argmax(flat == i))
                    else:
                        pairs_arr = np.flatnonzero(flat == i)
                        j = int(pairs_arr[int(rnd() * pairs_arr.shape[0])])
                    target_sid = int(state.slot_stream[int(hl[j // u]), j % u])
        else:
            # holders cover >= 1/4 of the boxes: walk the global ratio
            # ranking and confirm co-location through the candidate's own
            # holders (every seated stream sits on a holder of its content)
            holder_pos = state._holder_pos[c_o]
            masked = ratio_vec.copy()
            masked[list(visited)] = -_INF
            masked[masked <= r_o] = -_INF
            while True:
                top = masked.max()
                if top == -_INF:
                    break
                ties_arr = np.flatnonzero(masked == top)
                c_star = int(ties_arr[0]) if ties_arr.shape[0] == 1 else \
                    int(ties_arr[int(rnd() * ties_arr.shape[0])])
                pairs = [(b, i)
                         for b in holder_lists[c_star] if b in holder_pos
                         for i, cc in enumerate(slots_py[b]) if cc == c_star]
                if pairs:
                    b, i = pairs[int(rnd() * len(pairs))] if len(pairs) > 1 else pairs[0]
                    target_sid = int(state.slot_stream[b, i])
                    break
                masked[c_star] = -_INF  # served nowhere on these holders
        if target_sid < 0:
            return cur_sid, swaps

        victim_rec = streams[target_sid]
        box, slot = victim_rec[1], victim_rec[2]
        c_star = victim_rec[0]
        state.swap_stream(box, slot, cur_sid)
        r_new = int(in_service[c_o]) / d_o
        ratio[c_o] = r_new
        ratio_vec[c_o] = r_new
        d_star = int(holder_count[c_star])
        n_star = int(in_service[c_star])
        r_new = (n_star / d_star) if d_star else (_INF if n_star else 0.0)
        ratio[c_star] = r_new
        ratio_vec[c_star] = r_new
        swaps += 1
        cur_sid = target_sid
        idle = state.select_box(c_star, sm)
        if idle is not None:
            state.seat_existing(cur_sid, idle)
            return None, swaps
        visited.add(c_star)


def _repack_orphan_kernel(state: AssignmentState, first_sid: int, budget: int,
                          seed: int) -> tuple[int | None, int]:
    """Compiled chain plus replay of the swap log onto Python bookkeeping."""
    (visited, ties, pair_b, pair_s, log_b, log_s, log_v, seed_arr,
     box_marks, blocked, epoch) = state._scratch
    visited[:] = 0
    seed_arr[0] = seed
    streams = state.streams
    first_content = streams[first_sid][0]
    status, swaps, out_box = _chain_kernel.chain_kernel(
        first_sid, first_content, budget, seed_arr,
        state.slots, state.slot_stream, state.free, state.busy_holders,
        state.in_service, state.holder_count, state._holders2d,
        visited, ties, pair_b, pair_s, log_b, log_s, log_v,
        box_marks, blocked, epoch)
    slots_py = state.slots_py
    mover = first_sid
    for t in range(swaps):
        b = int(log_b[t])
        i = int(log_s[t])
        victim = int(log_v[t])
        rec = streams[mover]
        rec[1] = b
        rec[2] = i
        slots_py[b][i] = rec[0]
        vic = streams[victim]
        vic[1] = -1
        vic[2] = -1
        mover = victim
    if status == 0:
        state.seat_existing(mover, int(out_box))
        return None, swaps
    return mover, swaps


def _repack_orphan(state: AssignmentState, first_sid: int, budget: int,
                   rng) -> tuple[int | None, int]:
    """Iterative swap loop, entered once the orphan has no idle holder.

    Each round ranks the contents served by the orphan's (fully busy) holders
    by in-service/holder ratio, displaces one uniformly chosen stream of the
    top-ranked strictly-higher-ratio content, seats the orphan in its place
    and tries to re-place the displaced stream on an idle holder. Returns
    (lost stream id or None, swaps done).

    All chain-internal draws (tie breaks, pair picks, idle-holder ties) come
    from one splitmix64 stream seeded here, so the compiled and the Python
    chain bodies are interchangeable bit for bit.
    """
    seed = rng.getrandbits(64)
    if state._kernel_ready():
        return _repack_orphan_kernel(state, first_sid, budget, seed)
    return _repack_orphan_py(state, first_sid, budget, _SplitMix(seed))


def repack(state: AssignmentState, request_sid: int, content: int, end_time: float,
           counted: bool, max_swaps: int, rng) -> RepackOutcome:
    """Admit a new request by repacking; call only after select_box failed.

    The request is seated as soon as the first swap frees a connection on one
    of its holders; at most one stream (the final orphan of the chain) is lost
    and reported in ``dropped``. A dropped stream may be the request itself
    (nothing changed) or a previously accepted stream.
    """
    state.register(request_sid, content, end_time, counted)
    lost_sid, swaps = _repack_orphan(state, request_sid, max_swaps, rng)
    if lost_sid is None:
        return RepackOutcome(True, None, swaps)
    rec = state.drop(lost_sid)
    return RepackOutcome(lost_sid != request_sid, (lost_sid, rec[0], rec[4]), swaps)


def orphan_rescue(state: AssignmentState, box: int, evicted_content: int,
                  max_swaps: int, rng) -> RescueOutcome:
    """Re-place the streams a cache eviction interrupted on ``box``.

    Pre: the cache entry swap has already been applied (``box`` no longer
    holds ``evicted_content``) but the affected streams are still seated.
    Orphans are processed in ascending order of remaining service time, each
    starting with a plain idle-holder search; processing stops at the first
    rescue that loses a stream, and every remaining orphan counts as lost.
    With ``max_swaps == 0`` rescue is disabled and all orphans are lost.
    """
    u = state.uplink_slots
    sids = [int(state.slot_stream[box, i]) for i in range(u)
            if state.slots[box, i] == evicted_content]
    if not sids:
        return RescueOutcome(0, [], 0)
    sids.sort(key=lambda s: state.streams[s][3])
    for sid in sids:
        state.unseat(sid)

    rescued = 0
    swaps_total = 0
    dropped: list[tuple[int, int, bool]] = []
    failed = max_swaps == 0
    for sid in sids:
        if failed:
            rec = state.drop(sid)
            dropped.append((sid, rec[0], rec[4]))
            continue
        idle = state.select_box(evicted_content, rng)
        if idle is not None:
            state.seat_existing(sid, idle)
            rescued += 1
            continue
        lost_sid, swaps = _repack_orphan(state, sid, max_swaps, rng)
        swaps_total += swaps
        if lost_sid is None:
            rescued += 1
        else:
            rec = state.drop(lost_sid)
            dropped.append((lost_sid, rec[0], rec[4]))
            failed = True
            if lost_sid != sid:
                rescued += 1
    return RescueOutcome(rescued, dropped, swaps_total)
