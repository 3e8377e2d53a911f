"""Built-in instrumented benchmark targets.

Each target is a textbook algorithm annotated with explicit block probes.
Probe weights equal the number of source lines in the block, so in
``lines`` cost mode the recorded cost is the exact number of executed
lines of the reference implementation (loop headers count once per
condition evaluation, like a line-level tracer would report).

Byte payloads decode to the algorithm's natural input: sorting targets
treat each byte as an array element, search targets split off a key or a
pattern, graph targets read an adjacency matrix.
"""

from __future__ import annotations

import math

from .harness import BlockTable, BuiltinTarget, Tracer
from .inputs import ByteDomain, TargetInput

# ---------------------------------------------------------------------------
# shared seed corpora


def _ramp(n: int) -> bytes:
    return bytes(range(n))


def _desc(n: int) -> bytes:
    return bytes(range(n - 1, -1, -1))


_MIX16 = bytes([23, 7, 201, 44, 95, 150, 3, 88, 190, 12, 66, 240, 31, 111, 58, 176])


def _byte_seeds(max_len: int) -> tuple[TargetInput, ...]:
    lengths = [n for n in (6, 10, 14, 18) if n <= max_len]
    seeds = [TargetInput(data=_ramp(n)) for n in lengths]
    if max_len >= 12:
        seeds.append(TargetInput(data=_desc(12)))
        seeds.append(TargetInput(data=bytes([85] * 12)))
    if max_len >= 16:
        seeds.append(TargetInput(data=_MIX16))
    return tuple(seeds)


# ---------------------------------------------------------------------------
# insertionx: insertion sort with an early exit for already-sorted input.
# A first right-to-left bubble pass moves the minimum to the front (and
# counts exchanges); if no exchange happened, the array was sorted and the
# function returns after the scan. Otherwise the minimum acts as a
# sentinel for the shifting loop.

_IX = BlockTable("insertionx", 0x0400)
_IX_ENTER = _IX.block("enter", 1)
_IX_SCAN = _IX.block("scan_loop", 1)
_IX_SCAN_IF = _IX.block("scan_cmp", 1)
_IX_SCAN_SWAP = _IX.block("scan_swap", 2)
_IX_SCAN_DEC = _IX.block("scan_dec", 1)
_IX_EXCH = _IX.block("exchange_check", 1)
_IX_EARLY = _IX.block("early_return", 1)
_IX_INIT2 = _IX.block("shift_init", 1)
_IX_OUTER = _IX.block("shift_loop", 1)
_IX_BODY = _IX.block("shift_pick", 1)
_IX_INNER = _IX.block("shift_cmp", 1)
_IX_MOVE = _IX.block("shift_move", 2)
_IX_PLACE = _IX.block("shift_place", 1)
_IX_RET = _IX.block("final_return", 1)


def _trace_insertionx(t: Tracer, a: list) -> list:
    n = len(a)
    t.hit(_IX_ENTER, 1)
    exchange, i = 0, n - 1
    while True:
        t.hit(_IX_SCAN, 1)
        if not i > 0:
            break
        t.hit(_IX_SCAN_IF, 1)
        if a[i] < a[i - 1]:
            t.hit(_IX_SCAN_SWAP, 2)
            a[i], a[i - 1] = a[i - 1], a[i]
            exchange += 1
        t.hit(_IX_SCAN_DEC, 1)
        i -= 1
    t.hit(_IX_EXCH, 1)
    if exchange == 0:
        t.hit(_IX_EARLY, 1)
        return a
    t.hit(_IX_INIT2, 1)
    i = 2
    while True:
        t.hit(_IX_OUTER, 1)
        if not i < n:
            break
        t.hit(_IX_BODY, 1)
        v, j = a[i], i
        while True:
            t.hit(_IX_INNER, 1)
            if not v < a[j - 1]:
                break
            t.hit(_IX_MOVE, 2)
            a[j] = a[j - 1]
            j -= 1
        t.hit(_IX_PLACE, 1)
        a[j], i = v, i + 1
    t.hit(_IX_RET, 1)
    return a


# ---------------------------------------------------------------------------
# quicksort: first-element pivot, two-way partition.

_QS = BlockTable("quicksort", 0x0800)
_QS_ENTER = _QS.block("enter", 1)
_QS_SORT = _QS.block("sort", 1)
_QS_BASE = _QS.block("base_case", 1)
_QS_PINIT = _QS.block("partition_init", 2)
_QS_PLOOP = _QS.block("partition_loop", 1)
_QS_SCAN_LT = _QS.block("scan_lt", 1)
_QS_SCAN_GT = _QS.block("scan_gt", 1)
_QS_CROSS = _QS.block("pointers_cross", 1)
_QS_SWAP = _QS.block("swap", 1)
_QS_PLACE = _QS.block("place_pivot", 2)
_QS_DONE = _QS.block("done", 1)


def _qs_partition(t: Tracer, a: list, lo: int, hi: int) -> int:
    t.hit(_QS_PINIT, 2)
    i, j = lo, hi + 1
    v = a[lo]
    while True:
        t.hit(_QS_PLOOP, 1)
        while True:
            i += 1
            t.hit(_QS_SCAN_LT, 1)
            if i == hi or not a[i] < v:
                break
        while True:
            j -= 1
            t.hit(_QS_SCAN_GT, 1)
            if j == lo or not a[j] > v:
                break
        if i >= j:
            t.hit(_QS_CROSS, 1)
            break
        t.hit(_QS_SWAP, 1)
        a[i], a[j] = a[j], a[i]
    t.hit(_QS_PLACE, 2)
    a[lo], a[j] = a[j], a[lo]
    return j


def _qs_sort(t: Tracer, a: list, lo: int, hi: int) -> None:
    t.hit(_QS_SORT, 1)
    if hi <= lo:
        t.hit(_QS_BASE, 1)
        return
    j = _qs_partition(t, a, lo, hi)
    _qs_sort(t, a, lo, j - 1)
    _qs_sort(t, a, j + 1, hi)


def _trace_quicksort(t: Tracer, a: list) -> list:
    t.hit(_QS_ENTER, 1)
    _qs_sort(t, a, 0, len(a) - 1)
    t.hit(_QS_DONE, 1)
    return a


# ---------------------------------------------------------------------------
# 3-way quicksort: lt/eq/gt partition, linear on equal-heavy arrays.

_Q3 = BlockTable("quicksort3", 0x0C00)
_Q3_ENTER = _Q3.block("enter", 1)
_Q3_SORT = _Q3.block("sort", 1)
_Q3_BASE = _Q3.block("base_case", 1)
_Q3_INIT = _Q3.block("partition_init", 2)
_Q3_LOOP = _Q3.block("partition_loop", 1)
_Q3_LT = _Q3.block("move_lt", 2)
_Q3_GT = _Q3.block("move_gt", 2)
_Q3_EQ = _Q3.block("keep_eq", 1)
_Q3_REC = _Q3.block("recurse", 2)


def _q3_sort(t: Tracer, a: list, lo: int, hi: int) -> None:
    t.hit(_Q3_SORT, 1)
    if hi <= lo:
        t.hit(_Q3_BASE, 1)
        return
    t.hit(_Q3_INIT, 2)
    lt, gt, v, i = lo, hi, a[lo], lo + 1
    while i <= gt:
        t.hit(_Q3_LOOP, 1)
        if a[i] < v:
            t.hit(_Q3_LT, 2)
            a[lt], a[i] = a[i], a[lt]
            lt += 1
            i += 1
        elif a[i] > v:
            t.hit(_Q3_GT, 2)
            a[i], a[gt] = a[gt], a[i]
            gt -= 1
        else:
            t.hit(_Q3_EQ, 1)
            i += 1
    t.hit(_Q3_REC, 2)
    _q3_sort(t, a, lo, lt - 1)
    _q3_sort(t, a, gt + 1, hi)


def _trace_quicksort3(t: Tracer, a: list) -> list:
    t.hit(_Q3_ENTER, 1)
    _q3_sort(t, a, 0, len(a) - 1)
    return a


# ---------------------------------------------------------------------------
# merge sort (top-down).

_MS = BlockTable("mergesort", 0x1000)
_MS_ENTER = _MS.block("enter", 2)
_MS_SORT = _MS.block("sort", 1)
_MS_BASE = _MS.block("base_case", 1)
_MS_SPLIT = _MS.block("split", 1)
_MS_MERGE = _MS.block("merge_init", 2)
_MS_MLOOP = _MS.block("merge_loop", 1)
_MS_LEFT_DONE = _MS.block("take_right_rest", 1)
_MS_RIGHT_DONE = _MS.block("take_left_rest", 1)
_MS_TAKE_R = _MS.block("take_right", 1)
_MS_TAKE_L = _MS.block("take_left", 1)


def _ms_sort(t: Tracer, a: list, aux: list, lo: int, hi: int) -> None:
    t.hit(_MS_SORT, 1)
    if hi <= lo:
        t.hit(_MS_BASE, 1)
        return
    t.hit(_MS_SPLIT, 1)
    mid = (lo + hi) // 2
    _ms_sort(t, a, aux, lo, mid)
    _ms_sort(t, a, aux, mid + 1, hi)
    t.hit(_MS_MERGE, 2)
    aux[lo:hi + 1] = a[lo:hi + 1]
    i, j = lo, mid + 1
    for k in range(lo, hi + 1):
        t.hit(_MS_MLOOP, 1)
        if i > mid:
            t.hit(_MS_LEFT_DONE, 1)
            a[k] = aux[j]
            j += 1
        elif j > hi:
            t.hit(_MS_RIGHT_DONE, 1)
            a[k] = aux[i]
            i += 1
        elif aux[j] < aux[i]:
            t.hit(_MS_TAKE_R, 1)
            a[k] = aux[j]
            j += 1
        else:
            t.hit(_MS_TAKE_L, 1)
            a[k] = aux[i]
            i += 1


def _trace_mergesort(t: Tracer, a: list) -> list:
    t.hit(_MS_ENTER, 2)
    aux = list(a)
    _ms_sort(t, a, aux, 0, len(a) - 1)
    return a


# ---------------------------------------------------------------------------
# binary search: first byte is the key, the rest is sorted and searched.

_BS = BlockTable("binarysearch", 0x1400)
_BS_ENTER = _BS.block("enter", 2)
_BS_LOOP = _BS.block("loop", 2)
_BS_LEFT = _BS.block("go_left", 1)
_BS_RIGHT = _BS.block("go_right", 1)
_BS_FOUND = _BS.block("found", 1)
_BS_MISS = _BS.block("miss", 1)


def _decode_key_array(x: TargetInput) -> tuple[int, list]:
    b = x.data
    if not b:
        return 0, []
    return b[0], list(b[1:])


def _decode_key_sorted(x: TargetInput) -> tuple[int, list]:
    key, arr = _decode_key_array(x)
    arr.sort()
    return key, arr


def _trace_binarysearch(t: Tracer, payload: tuple[int, list]) -> int:
    key, arr = payload
    t.hit(_BS_ENTER, 2)
    lo, hi = 0, len(arr) - 1
    while lo <= hi:
        t.hit(_BS_LOOP, 2)
        mid = (lo + hi) // 2
        if key < arr[mid]:
            t.hit(_BS_LEFT, 1)
            hi = mid - 1
        elif key > arr[mid]:
            t.hit(_BS_RIGHT, 1)
            lo = mid + 1
        else:
            t.hit(_BS_FOUND, 1)
            return mid
    t.hit(_BS_MISS, 1)
    return -1


# ---------------------------------------------------------------------------
# sequential search.

_SS = BlockTable("seqsearch", 0x1800)
_SS_ENTER = _SS.block("enter", 1)
_SS_LOOP = _SS.block("loop", 1)
_SS_FOUND = _SS.block("found", 1)
_SS_MISS = _SS.block("miss", 1)


def _trace_seqsearch(t: Tracer, payload: tuple[int, list]) -> int:
    key, arr = payload
    t.hit(_SS_ENTER, 1)
    for i, v in enumerate(arr):
        t.hit(_SS_LOOP, 1)
        if v == key:
            t.hit(_SS_FOUND, 1)
            return i
    t.hit(_SS_MISS, 1)
    return -1


# ---------------------------------------------------------------------------
# Boyer-Moore substring search (bad-character rule). The first three bytes
# form the pattern, the rest is the text.

_BM = BlockTable("boyermoore", 0x1C00)
_BM_ENTER = _BM.block("enter", 2)
_BM_TABLE = _BM.block("build_table", 1)
_BM_SHIFT = _BM.block("shift_loop", 2)
_BM_CMP = _BM.block("compare", 1)
_BM_FOUND = _BM.block("found", 1)
_BM_SKIP = _BM.block("skip", 1)
_BM_MISS = _BM.block("miss", 1)


def _decode_pattern_text(x: TargetInput) -> tuple[bytes, bytes]:
    b = x.data or b""
    return b[:3], b[3:]


def _trace_boyermoore(t: Tracer, payload: tuple[bytes, bytes]) -> int:
    pat, text = payload
    t.hit(_BM_ENTER, 2)
    m, n = len(pat), len(text)
    if m == 0:
        t.hit(_BM_FOUND, 1)
        return 0
    right: dict[int, int] = {}
    for idx, c in enumerate(pat):
        t.hit(_BM_TABLE, 1)
        right[c] = idx
    s = 0
    while s <= n - m:
        t.hit(_BM_SHIFT, 2)
        j = m - 1
        while j >= 0 and pat[j] == text[s + j]:
            t.hit(_BM_CMP, 1)
            j -= 1
        if j < 0:
            t.hit(_BM_FOUND, 1)
            return s
        t.hit(_BM_SKIP, 1)
        s += max(1, j - right.get(text[s + j], -1))
    t.hit(_BM_MISS, 1)
    return -1


# ---------------------------------------------------------------------------
# BST insertion: bytes are inserted in payload order into an unbalanced
# binary search tree (duplicates go right). Sorted payloads degenerate to
# a chain.

_BT = BlockTable("bstinsert", 0x2000)
_BT_ENTER = _BT.block("enter", 1)
_BT_INSERT = _BT.block("insert", 1)
_BT_NEWROOT = _BT.block("new_root", 1)
_BT_WALK = _BT.block("walk", 1)
_BT_LEFT = _BT.block("go_left", 1)
_BT_PLACE_L = _BT.block("place_left", 1)
_BT_RIGHT = _BT.block("go_right", 1)
_BT_PLACE_R = _BT.block("place_right", 1)


def _trace_bstinsert(t: Tracer, a: list) -> list:
    t.hit(_BT_ENTER, 1)
    root: list | None = None
    for key in a:
        t.hit(_BT_INSERT, 1)
        if root is None:
            t.hit(_BT_NEWROOT, 1)
            root = [key, None, None]
            continue
        node = root
        while True:
            t.hit(_BT_WALK, 1)
            if key < node[0]:
                t.hit(_BT_LEFT, 1)
                if node[1] is None:
                    t.hit(_BT_PLACE_L, 1)
                    node[1] = [key, None, None]
                    break
                node = node[1]
            else:
                t.hit(_BT_RIGHT, 1)
                if node[2] is None:
                    t.hit(_BT_PLACE_R, 1)
                    node[2] = [key, None, None]
                    break
                node = node[2]
    return root


# ---------------------------------------------------------------------------
# is-BST check over the implicit heap-layout tree of the payload (node i
# has children 2i+1 and 2i+2), with strict bounds, stopping at the first
# violation.

_IB = BlockTable("isbst", 0x2400)
_IB_ENTER = _IB.block("enter", 2)
_IB_NODE = _IB.block("visit", 2)
_IB_FAIL = _IB.block("violation", 1)
_IB_PUSH_L = _IB.block("push_left", 1)
_IB_PUSH_R = _IB.block("push_right", 1)
_IB_OK = _IB.block("valid", 1)


def _trace_isbst(t: Tracer, a: list) -> bool:
    t.hit(_IB_ENTER, 2)
    n = len(a)
    stack = [(0, -1, 256)] if n else []
    while stack:
        t.hit(_IB_NODE, 2)
        i, lo, hi = stack.pop()
        v = a[i]
        if not (lo < v < hi):
            t.hit(_IB_FAIL, 1)
            return False
        left, right = 2 * i + 1, 2 * i + 2
        if left < n:
            t.hit(_IB_PUSH_L, 1)
            stack.append((left, lo, v))
        if right < n:
            t.hit(_IB_PUSH_R, 1)
            stack.append((right, v, hi))
    t.hit(_IB_OK, 1)
    return True


# ---------------------------------------------------------------------------
# Prim's MST on a dense weighted graph: the payload is read as an n x n
# byte matrix with n = isqrt(len); weights are symmetrized by summing the
# two directed entries.

_PM = BlockTable("prims", 0x2800)
_PM_ENTER = _PM.block("enter", 2)
_PM_EMPTY = _PM.block("empty", 1)
_PM_ROUND = _PM.block("round", 1)
_PM_SCAN = _PM.block("scan_min", 1)
_PM_PICK = _PM.block("pick", 1)
_PM_ADD = _PM.block("add_vertex", 2)
_PM_RELAX_SCAN = _PM.block("relax_scan", 1)
_PM_RELAX = _PM.block("relax", 1)


def _decode_matrix(x: TargetInput) -> tuple[int, bytes]:
    b = x.data or b""
    return math.isqrt(len(b)), b


def _trace_prims(t: Tracer, payload: tuple[int, bytes]) -> int:
    n, b = payload
    t.hit(_PM_ENTER, 2)
    if n == 0:
        t.hit(_PM_EMPTY, 1)
        return 0
    dist = [1 << 30] * n
    dist[0] = 0
    in_tree = [False] * n
    total = 0
    for _ in range(n):
        t.hit(_PM_ROUND, 1)
        u = -1
        for v in range(n):
            t.hit(_PM_SCAN, 1)
            if not in_tree[v] and (u == -1 or dist[v] < dist[u]):
                t.hit(_PM_PICK, 1)
                u = v
        t.hit(_PM_ADD, 2)
        in_tree[u] = True
        total += dist[u]
        for v in range(n):
            t.hit(_PM_RELAX_SCAN, 1)
            w = b[u * n + v] + b[v * n + u]
            if not in_tree[v] and w < dist[v]:
                t.hit(_PM_RELAX, 1)
                dist[v] = w
    return total


# ---------------------------------------------------------------------------
# synthetic targets used by tests and demos

# parity: the first byte's parity selects the complexity class. Even
# payloads take a linear scan (cost n+2), odd payloads a quadratic nested
# loop instead (cost n^2+2, probed at the inner body).

_PA = BlockTable("parity", 0x2C00)
_PA_ENTER = _PA.block("enter", 1)
_PA_WARM = _PA.block("warm_loop", 1)
_PA_SLOW_IN = _PA.block("slow_inner", 1)
_PA_RET = _PA.block("ret", 1)


def _trace_parity(t: Tracer, a: list) -> int:
    t.hit(_PA_ENTER, 1)
    n = len(a)
    acc = 0
    if n and a[0] & 1:
        for _i in range(n):
            for _j in range(n):
                t.hit(_PA_SLOW_IN, 1)
                acc += 1
    else:
        for v in a:
            t.hit(_PA_WARM, 1)
            acc += v
    t.hit(_PA_RET, 1)
    return acc


_CT = BlockTable("constant", 0x3000)
_CT_A = _CT.block("enter", 2)
_CT_B = _CT.block("work", 2)
_CT_C = _CT.block("ret", 1)


def _trace_constant(t: Tracer, a: list) -> int:
    t.hit(_CT_A, 2)
    t.hit(_CT_B, 2)
    t.hit(_CT_C, 1)
    return 0


_SP = BlockTable("spin", 0x3400)
_SP_LOOP = _SP.block("loop", 1)


def _trace_spin(t: Tracer, a: list) -> None:
    while True:
        t.hit(_SP_LOOP, 1)


# crashy: divides by zero when the first byte is 13, otherwise linear.

_CR = BlockTable("crashy", 0x3800)
_CR_ENTER = _CR.block("enter", 1)
_CR_BOOM = _CR.block("boom", 1)
_CR_LOOP = _CR.block("loop", 1)
_CR_RET = _CR.block("ret", 1)


def _trace_crashy(t: Tracer, a: list) -> int:
    t.hit(_CR_ENTER, 1)
    if a and a[0] == 13:
        t.hit(_CR_BOOM, 1)
        return 1 // 0
    acc = 0
    for v in a:
        t.hit(_CR_LOOP, 1)
        acc += v
    t.hit(_CR_RET, 1)
    return acc


# ---------------------------------------------------------------------------
# registry

def _list_decode(x: TargetInput) -> list:
    return list(x.data or b"")


def _make(name: str, trace, decode, blocks: BlockTable, max_len: int,
          summary: str) -> BuiltinTarget:
    domain = ByteDomain(0, max_len)
    return BuiltinTarget(name=name, domain=domain, blocks=blocks, decode=decode,
                         trace=trace, seeds=_byte_seeds(max_len), summary=summary)


BUILTIN_TARGETS: dict[str, BuiltinTarget] = {
    tgt.name: tgt
    for tgt in (
        _make("quicksort", _trace_quicksort, _list_decode, _QS, 48,
              "two-way quicksort, first-element pivot"),
        _make("quicksort3", _trace_quicksort3, _list_decode, _Q3, 48,
              "three-way quicksort (lt/eq/gt partition)"),
        _make("insertionx", _trace_insertionx, _list_decode, _IX, 48,
              "insertion sort with early exit on sorted input"),
        _make("mergesort", _trace_mergesort, _list_decode, _MS, 48,
              "top-down merge sort"),
        _make("binarysearch", _trace_binarysearch, _decode_key_sorted, _BS, 64,
              "binary search, first byte is the key"),
        _make("seqsearch", _trace_seqsearch, _decode_key_array, _SS, 64,
              "sequential search, first byte is the key"),
        _make("boyermoore", _trace_boyermoore, _decode_pattern_text, _BM, 64,
              "Boyer-Moore substring search (bad-character rule)"),
        _make("bstinsert", _trace_bstinsert, _list_decode, _BT, 48,
              "unbalanced binary search tree insertion"),
        _make("isbst", _trace_isbst, _list_decode, _IB, 64,
              "BST-property check over the implicit heap-layout tree"),
        _make("prims", _trace_prims, _decode_matrix, _PM, 100,
              "Prim's MST on a dense byte-weight graph"),
        _make("parity", _trace_parity, _list_decode, _PA, 40,
              "synthetic: linear cost, quadratic when the first byte is odd"),
        _make("constant", _trace_constant, _list_decode, _CT, 32,
              "synthetic: constant cost 5"),
        _make("spin", _trace_spin, _list_decode, _SP, 32,
              "synthetic: never terminates (timeout exercise)"),
        _make("crashy", _trace_crashy, _list_decode, _CR, 32,
              "synthetic: crashes when the first byte is 13"),
    )
}

#: The classic algorithm benchmarks (synthetics excluded).
BENCHMARK_NAMES = (
    "quicksort", "quicksort3", "insertionx", "mergesort", "binarysearch",
    "seqsearch", "boyermoore", "bstinsert", "isbst", "prims",
)


def get_target(name: str) -> BuiltinTarget:
    try:
        return BUILTIN_TARGETS[name]
    except KeyError:
        from .harness import UnknownTargetError

        known = ", ".join(sorted(BUILTIN_TARGETS))
        raise UnknownTargetError(f"unknown target {name!r} (known: {known})") from None


def target_names() -> list[str]:
    return sorted(BUILTIN_TARGETS)
