"""Compiled inner loops over flat slot arrays.

A matrix of side ``d`` with ``b`` entries per bucket is five parallel arrays
of length ``d * d * b``; slot ``((row * d) + col) * b + k`` is entry ``k`` of
bucket ``[row][col]``.  ``w == 0`` marks an empty slot.  The index pair is
packed as ``(i << 4) | j`` (0-based candidate ranks).  Non-leaf matrices pass
``timed=False`` and a length-1 dummy offset array.

All kernels release the GIL so per-level pipeline threads can overlap.
"""

import numpy as np
from numba import njit

MERGED = 0
PLACED = 1
FULL = 2

STOP_DONE = 0
STOP_FULL = 1
STOP_OFFSET = 2

WEIGHT_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True, nogil=True)
def probe_step(fp, d):
    x = (fp * 0x5BD1E995 + 0x2545F491) & 0xFFFFFFFF
    x ^= x >> 13
    x = (x * 0x5BD1E995) & 0xFFFFFFFF
    x ^= x >> 15
    return ((x << 1) | 1) & (d - 1)


@njit(cache=True, nogil=True)
def place(sfp_a, dfp_a, idx_a, toff_a, w_a, d, b, timed, r, sfp, sbase, dfp, dbase, off, w):
    """Merge into a matching entry or take the first empty slot.

    Returns (status, slot, saturated).
    """
    mask = d - 1
    sstep = probe_step(sfp, d)
    dstep = probe_step(dfp, d)
    empty = -1
    empty_code = 0
    for i in range(r):
        row = (sbase + i * sstep) & mask
        for j in range(r):
            col = (dbase + j * dstep) & mask
            code = (i << 4) | j
            first = (row * d + col) * b
            for k in range(b):
                s = first + k
                if w_a[s] == 0:
                    if empty < 0:
                        empty = s
                        empty_code = code
                elif (
                    sfp_a[s] == sfp
                    and dfp_a[s] == dfp
                    and idx_a[s] == code
                    and (not timed or toff_a[s] == off)
                ):
                    cur = w_a[s]
                    new = cur + np.uint64(w)
                    sat = False
                    if new < cur:
                        new = WEIGHT_MAX
                        sat = True
                    w_a[s] = new
                    return MERGED, s, sat
    if empty < 0:
        return FULL, -1, False
    sfp_a[empty] = sfp
    dfp_a[empty] = dfp
    idx_a[empty] = empty_code
    if timed:
        toff_a[empty] = off
    w_a[empty] = np.uint64(w)
    return PLACED, empty, False


@njit(cache=True, nogil=True)
def insert_run(sfp_a, dfp_a, idx_a, toff_a, w_a, d, b, r,
               s_fp, s_base, d_fp, d_base, ts, ws, start_time, max_off, lo, hi):
    """Insert edges ``lo..hi-1`` into a leaf until one does not fit.

    Returns (position reached, stop reason, slots newly filled, saturated).
    """
    placed = 0
    saturated = False
    for e in range(lo, hi):
        off = ts[e] - start_time
        if off > max_off:
            return e, STOP_OFFSET, placed, saturated
        status, _, sat = place(sfp_a, dfp_a, idx_a, toff_a, w_a, d, b, True, r,
                               s_fp[e], s_base[e], d_fp[e], d_base[e], off, ws[e])
        if status == FULL:
            return e, STOP_FULL, placed, saturated
        if status == PLACED:
            placed += 1
        if sat:
            saturated = True
    return hi, STOP_DONE, placed, saturated


@njit(cache=True, nogil=True)
def find_slot(sfp_a, dfp_a, idx_a, toff_a, w_a, d, b, timed, r, sfp, sbase, dfp, dbase, off):
    mask = d - 1
    sstep = probe_step(sfp, d)
    dstep = probe_step(dfp, d)
    for i in range(r):
        row = (sbase + i * sstep) & mask
        for j in range(r):
            col = (dbase + j * dstep) & mask
            code = (i << 4) | j
            first = (row * d + col) * b
            for k in range(b):
                s = first + k
                if (
                    w_a[s] != 0
                    and sfp_a[s] == sfp
                    and dfp_a[s] == dfp
                    and idx_a[s] == code
                    and (not timed or toff_a[s] == off)
                ):
                    return s
    return -1


@njit(cache=True, nogil=True)
def edge_lookup(sfp_a, dfp_a, idx_a, toff_a, w_a, d, b, timed, r,
                s_fp, s_base, d_fp, d_base, off_lo, off_hi, out):
    """``out[q] +=`` matching weight for every queried digest pair ``q``."""
    mask = d - 1
    for q in range(s_fp.shape[0]):
        sfp = s_fp[q]
        dfp = d_fp[q]
        sstep = probe_step(sfp, d)
        dstep = probe_step(dfp, d)
        total = np.uint64(0)
        for i in range(r):
            row = (s_base[q] + i * sstep) & mask
            for j in range(r):
                col = (d_base[q] + j * dstep) & mask
                code = (i << 4) | j
                first = (row * d + col) * b
                for k in range(b):
                    s = first + k
                    if w_a[s] != 0 and sfp_a[s] == sfp and dfp_a[s] == dfp and idx_a[s] == code:
                        if timed:
                            o = toff_a[s]
                            if o < off_lo or o > off_hi:
                                continue
                        total += w_a[s]
        out[q] += total


@njit(cache=True, nogil=True)
def vertex_scan(sfp_a, dfp_a, idx_a, toff_a, w_a, d, b, timed, r, fp, base, off_lo, off_hi, outgoing):
    """Sum of weights on a vertex's candidate rows (outgoing) or columns (incoming)."""
    mask = d - 1
    step = probe_step(fp, d)
    total = np.uint64(0)
    for i in range(r):
        line = (base + i * step) & mask
        for other in range(d):
            if outgoing:
                first = (line * d + other) * b
            else:
                first = (other * d + line) * b
            for k in range(b):
                s = first + k
                if w_a[s] == 0:
                    continue
                if outgoing:
                    if sfp_a[s] != fp or (idx_a[s] >> 4) != i:
                        continue
                else:
                    if dfp_a[s] != fp or (idx_a[s] & 15) != i:
                        continue
                if timed:
                    o = toff_a[s]
                    if o < off_lo or o > off_hi:
                        continue
                total += w_a[s]
    return total


@njit(cache=True, nogil=True)
def aggregate(p_sfp, p_dfp, p_idx, p_toff, p_w, pd,
              c_sfp, c_dfp, c_idx, c_w, cd, b, r, c_bits, shift,
              sp_sfp, sp_sbase, sp_dfp, sp_dbase, sp_w):
    """Re-place every occupied child slot into the parent grid.

    The child's base address is recovered from bucket position and index
    pair, then ``shift`` fingerprint bits move into the address.  Entries
    that find no room are written to the ``sp_*`` arrays (lifted identity).
    Returns (migrated, spilled, saturated).
    """
    cmask = cd - 1
    rest = c_bits - shift
    low = (1 << rest) - 1
    migrated = 0
    spilled = 0
    saturated = False
    for s in range(c_w.shape[0]):
        w = c_w[s]
        if w == 0:
            continue
        cell = s // b
        row = cell // cd
        col = cell - row * cd
        code = c_idx[s]
        i = code >> 4
        j = code & 15
        sfp = np.int64(c_sfp[s])
        dfp = np.int64(c_dfp[s])
        sbase = (row - i * probe_step(sfp, cd)) & cmask
        dbase = (col - j * probe_step(dfp, cd)) & cmask
        nsbase = (sbase << shift) | (sfp >> rest)
        ndbase = (dbase << shift) | (dfp >> rest)
        nsfp = sfp & low
        ndfp = dfp & low
        status, _, sat = place(p_sfp, p_dfp, p_idx, p_toff, p_w, pd, b, False, r,
                               nsfp, nsbase, ndfp, ndbase, 0, w)
        if sat:
            saturated = True
        if status == FULL:
            sp_sfp[spilled] = nsfp
            sp_sbase[spilled] = nsbase
            sp_dfp[spilled] = ndfp
            sp_dbase[spilled] = ndbase
            sp_w[spilled] = w
            spilled += 1
        migrated += 1
    return migrated, spilled, saturated


@njit(cache=True, nogil=True)
def recover_identities(sfp_a, dfp_a, idx_a, w_a, d, b, out_sbase, out_dbase):
    """Base addresses of every slot (``-1`` where empty), for snapshots and audits."""
    mask = d - 1
    for s in range(w_a.shape[0]):
        if w_a[s] == 0:
            out_sbase[s] = -1
            out_dbase[s] = -1
            continue
        cell = s // b
        row = cell // d
        col = cell - row * d
        code = idx_a[s]
        out_sbase[s] = (row - (code >> 4) * probe_step(np.int64(sfp_a[s]), d)) & mask
        out_dbase[s] = (col - (code & 15) * probe_step(np.int64(dfp_a[s]), d)) & mask
