# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled slot kernel. Statement-for-statement twin of ``_slotloop_py``."""

from libc.math cimport log10, log2, pow, ceil

BACKEND = "cython"

cdef enum:
    IDLE = 0
    DEFER = 1
    BACKOFF = 2
    TX_DATA = 3
    TX_ACK = 4
    MAX_EMITTERS = 4096

ctypedef long long i64


cdef void _recompute(i64 E, i64[::1] phase, i64[::1] tx_node, i64[::1] rx_node,
                     double[::1] tx_pow, double[::1] node_pow, double[:, ::1] gain,
                     i64[::1] ack_ok, i64[::1] tx_left, i64 ack_slots, double noise,
                     double[::1] edges, i64 n_bins, double[::1] y_dbm, i64[::1] y_bin,
                     i64[::1] sinr_ok, double[::1] req,
                     i64* em_node, double* em_pow, i64* em_owner) noexcept nogil:
    cdef i64 j, e, m, ph, n_em = 0, rx, b, lo, hi, mid
    cdef double tot, y, interf, sig, sinr
    cdef bint blocked
    for j in range(E):
        ph = phase[j]
        if ph == TX_DATA:
            em_node[n_em] = tx_node[j]
            em_pow[n_em] = tx_pow[j]
            em_owner[n_em] = j
            n_em += 1
        elif ph == TX_ACK and ack_ok[j] and tx_left[j] <= ack_slots:
            em_node[n_em] = rx_node[j]
            em_pow[n_em] = node_pow[rx_node[j]]
            em_owner[n_em] = j
            n_em += 1
    for e in range(E):
        ph = phase[e]
        if ph <= BACKOFF:
            tot = noise
            for m in range(n_em):
                tot += em_pow[m] * gain[tx_node[e], em_node[m]]
            y = 10.0 * log10(tot)
            y_dbm[e] = y
            if y < edges[1]:
                b = 0
            elif y >= edges[n_bins - 1]:
                b = n_bins - 1
            else:
                lo = 1
                hi = n_bins - 1
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if y < edges[mid]:
                        hi = mid
                    else:
                        lo = mid
                b = lo
            y_bin[e] = b
        elif ph == TX_DATA:
            rx = rx_node[e]
            blocked = False
            interf = 0.0
            for m in range(n_em):
                if em_owner[m] == e:
                    continue
                if em_node[m] == rx:
                    blocked = True
                interf += em_pow[m] * gain[rx, em_node[m]]
            sig = tx_pow[e] * gain[rx, tx_node[e]]
            sinr = sig / (interf + noise)
            sinr_ok[e] = 0 if (blocked or sinr < req[e]) else 1


def advance(st, i64 n_start, i64 n_end, i64 mon_start, i64 mon_end):
    cdef i64 E = st.n_entities
    if E > MAX_EMITTERS:
        raise ValueError("too many entities for the compiled kernel")
    cdef i64[::1] phase = st.phase, counter = st.counter, stage = st.stage
    cdef i64[::1] defer_left = st.defer_left, retries = st.retries, tx_left = st.tx_left
    cdef i64[::1] seg_cur = st.seg_cur, seg_off = st.seg_off, n_seg = st.n_seg
    cdef i64[::1] full_slots = st.full_slots, last_bits = st.last_bits, last_slots = st.last_slots
    cdef i64[::1] ppdu_ok = st.ppdu_ok_bits, ppdu_fail = st.ppdu_fail_bits, ack_ok = st.ack_ok
    cdef double[::1] req = st.req_sinr
    cdef i64[:, ::1] fails = st.fails
    cdef double[::1] y_dbm = st.y_dbm
    cdef i64[::1] y_bin = st.y_bin, sinr_ok = st.sinr_ok
    cdef i64[::1] head = st.head, tail = st.tail, node_started = st.node_started
    cdef i64[::1] bits_ok = st.bits_ok, bits_fail = st.bits_fail, bits_drop = st.bits_drop
    cdef i64[::1] n_tx = st.n_tx, n_fail = st.n_fail, n_freeze = st.n_freeze
    cdef i64[::1] n_vcoll = st.n_vcoll, airtime = st.airtime
    cdef i64[:, ::1] hist = st.hist

    cdef i64[::1] tx_node = st.tx_node, rx_node = st.rx_node
    cdef double[::1] tx_pow = st.tx_power_mw, node_pow = st.node_power_mw
    cdef double[:, ::1] gain = st.gain
    cdef double[::1] gamma = st.gamma
    cdef i64[::1] w_min = st.w_min, w_max = st.w_max, aifs = st.aifs
    cdef i64[::1] max_stage = st.max_stage, retry_limit = st.retry_limit
    cdef double[::1] edges = st.edges
    cdef i64 n_bins = edges.shape[0] - 1

    cdef i64[::1] f_arrival = st.f_arrival, f_remaining = st.f_remaining
    cdef i64[::1] f_delivered = st.f_delivered, f_dropped = st.f_dropped
    cdef i64[::1] f_done = st.f_done, f_next = st.f_next

    cdef double[::1] urand = st.urand
    cdef i64[::1] scal = st.scal
    cdef i64 upos = scal[0], dirty = scal[1], n_active = scal[2]
    cdef i64 n_urand = urand.shape[0]

    cdef double noise = st.noise_mw, bw = st.bandwidth_hz, se_cap = st.se_cap, se_floor = st.se_floor
    cdef double thr_lin = st.thr_lin, margin_lin = st.margin_lin, slot_sec = st.slot_sec
    cdef i64 seg_bits = st.segment_bits, max_tx_slots = st.max_tx_slots
    cdef i64 sifs_slots = st.sifs_slots, ack_slots = st.ack_slots
    cdef i64 max_seg = fails.shape[1]

    cdef i64 em_node[MAX_EMITTERS]
    cdef double em_pow[MAX_EMITTERS]
    cdef i64 em_owner[MAX_EMITTERS]

    cdef i64 n = n_start, nxt, e, h, ph, cw, st_, tn, rem, fs, n_full, lb, ns, slots, ls, i, sc, seg_len
    cdef i64 okb, flb, b, d
    cdef bint pending, busy, sampling, started
    cdef double snr, se, r, q

    with nogil:
        while n < n_end:
            if upos + E > n_urand:
                break
            if n_active == 0:
                nxt = n_end
                for e in range(E):
                    h = head[e]
                    if h >= 0 and f_arrival[h] < nxt:
                        nxt = f_arrival[h]
                if nxt > n:
                    n = nxt
                    continue
            if dirty:
                _recompute(E, phase, tx_node, rx_node, tx_pow, node_pow, gain, ack_ok, tx_left, ack_slots,
                           noise, edges, n_bins, y_dbm, y_bin, sinr_ok, req, em_node, em_pow, em_owner)
                dirty = 0
            sampling = mon_start <= n < mon_end
            started = False
            for e in range(E):
                ph = phase[e]
                if ph >= TX_DATA:
                    continue
                h = head[e]
                pending = h >= 0 and f_arrival[h] <= n
                if ph == IDLE:
                    if not pending:
                        continue
                    ph = DEFER
                    phase[e] = DEFER
                    defer_left[e] = aifs[e]
                    n_active += 1
                if sampling:
                    hist[e, y_bin[e]] += 1
                busy = y_dbm[e] > gamma[e]
                if ph == DEFER:
                    if busy:
                        defer_left[e] = aifs[e]
                        if counter[e] == 0:
                            cw = w_min[e] << stage[e]
                            if cw > w_max[e]:
                                cw = w_max[e]
                            counter[e] = <i64>(urand[upos] * cw)
                            upos += 1
                    else:
                        defer_left[e] -= 1
                        if defer_left[e] == 0:
                            phase[e] = BACKOFF
                else:
                    if busy:
                        phase[e] = DEFER
                        defer_left[e] = aifs[e]
                        n_freeze[e] += 1
                    elif counter[e] > 0:
                        counter[e] -= 1
                    elif pending:
                        tn = tx_node[e]
                        if node_started[tn] == n:
                            st_ = stage[e] + 1
                            stage[e] = st_ if st_ < max_stage[e] else max_stage[e]
                            cw = w_min[e] << stage[e]
                            if cw > w_max[e]:
                                cw = w_max[e]
                            counter[e] = <i64>(urand[upos] * cw)
                            upos += 1
                            phase[e] = DEFER
                            defer_left[e] = aifs[e]
                            n_vcoll[e] += 1
                        else:
                            node_started[tn] = n
                            rem = f_remaining[h]
                            snr = tx_pow[e] * gain[tn, rx_node[e]] / noise
                            se = log2(1.0 + snr * margin_lin)
                            if se > se_cap:
                                se = se_cap
                            if se < se_floor:
                                se = se_floor
                            r = pow(2.0, se) - 1.0
                            req[e] = r if r > thr_lin else thr_lin
                            q = bw * se * slot_sec
                            fs = <i64>ceil(seg_bits / q)
                            n_full = rem // seg_bits
                            lb = rem - n_full * seg_bits
                            ns = 0
                            slots = 0
                            while ns < n_full and ns < max_seg and (ns == 0 or slots + fs <= max_tx_slots):
                                ns += 1
                                slots += fs
                            last_bits[e] = 0
                            last_slots[e] = 0
                            if lb > 0 and ns == n_full and ns < max_seg:
                                ls = <i64>ceil(lb / q)
                                if ns == 0 or slots + ls <= max_tx_slots:
                                    last_bits[e] = lb
                                    last_slots[e] = ls
                                    slots += ls
                                    ns += 1
                            n_seg[e] = ns
                            full_slots[e] = fs
                            for i in range(ns):
                                fails[e, i] = 0
                            seg_cur[e] = 0
                            seg_off[e] = 0
                            tx_left[e] = slots
                            phase[e] = TX_DATA
                            n_tx[e] += 1
                            airtime[e] += slots
                            started = True
                    else:
                        phase[e] = IDLE
                        n_active -= 1
            if started:
                _recompute(E, phase, tx_node, rx_node, tx_pow, node_pow, gain, ack_ok, tx_left, ack_slots,
                           noise, edges, n_bins, y_dbm, y_bin, sinr_ok, req, em_node, em_pow, em_owner)
            for e in range(E):
                ph = phase[e]
                if ph == TX_DATA:
                    sc = seg_cur[e]
                    if not sinr_ok[e]:
                        fails[e, sc] = 1
                    seg_off[e] += 1
                    if sc == n_seg[e] - 1 and last_bits[e] > 0:
                        seg_len = last_slots[e]
                    else:
                        seg_len = full_slots[e]
                    if seg_off[e] == seg_len:
                        seg_cur[e] = sc + 1
                        seg_off[e] = 0
                    tx_left[e] -= 1
                    if tx_left[e] == 0:
                        okb = 0
                        flb = 0
                        ns = n_seg[e]
                        for i in range(ns):
                            b = last_bits[e] if (i == ns - 1 and last_bits[e] > 0) else seg_bits
                            if fails[e, i]:
                                flb += b
                            else:
                                okb += b
                        ppdu_ok[e] = okb
                        ppdu_fail[e] = flb
                        ack_ok[e] = 1 if okb > 0 else 0
                        phase[e] = TX_ACK
                        tx_left[e] = sifs_slots + ack_slots
                        dirty = 1
                elif ph == TX_ACK:
                    tx_left[e] -= 1
                    if tx_left[e] == ack_slots and ack_ok[e]:
                        dirty = 1
                    if tx_left[e] == 0:
                        h = head[e]
                        okb = ppdu_ok[e]
                        bits_ok[e] += okb
                        bits_fail[e] += ppdu_fail[e]
                        f_remaining[h] -= okb
                        f_delivered[h] += okb
                        if okb > 0:
                            stage[e] = 0
                            retries[e] = 0
                        else:
                            st_ = stage[e] + 1
                            stage[e] = st_ if st_ < max_stage[e] else max_stage[e]
                            retries[e] += 1
                            n_fail[e] += 1
                            if retries[e] >= retry_limit[e]:
                                d = seg_bits if f_remaining[h] >= seg_bits else f_remaining[h]
                                f_remaining[h] -= d
                                f_dropped[h] += d
                                bits_drop[e] += d
                                retries[e] = 0
                                stage[e] = 0
                        cw = w_min[e] << stage[e]
                        if cw > w_max[e]:
                            cw = w_max[e]
                        counter[e] = <i64>(urand[upos] * cw)
                        upos += 1
                        phase[e] = DEFER
                        defer_left[e] = aifs[e]
                        if f_remaining[h] == 0:
                            f_done[h] = n
                            head[e] = f_next[h]
                            if head[e] < 0:
                                tail[e] = -1
                        dirty = 1
            n += 1

    scal[0] = upos
    scal[1] = dirty
    scal[2] = n_active
    return n
