"""Pure-Python slot kernel. Mirrors ``_slotloop.pyx`` statement for statement."""

import math

BACKEND = "python"

IDLE, DEFER, BACKOFF, TX_DATA, TX_ACK = 0, 1, 2, 3, 4


def _recompute(E, phase, tx_node, rx_node, tx_pow, node_pow, gain, ack_ok, tx_left, ack_slots,
               noise, edges, n_bins, y_dbm, y_bin, sinr_ok, req):
    em_node = []
    em_pow = []
    em_owner = []
    for j in range(E):
        ph = phase[j]
        if ph == TX_DATA:
            em_node.append(tx_node[j])
            em_pow.append(tx_pow[j])
            em_owner.append(j)
        elif ph == TX_ACK and ack_ok[j] and tx_left[j] <= ack_slots:
            em_node.append(rx_node[j])
            em_pow.append(node_pow[rx_node[j]])
            em_owner.append(j)
    n_em = len(em_node)
    for e in range(E):
        ph = phase[e]
        if ph <= BACKOFF:
            row = gain[tx_node[e]]
            tot = noise
            for m in range(n_em):
                tot += em_pow[m] * row[em_node[m]]
            y = 10.0 * math.log10(tot)
            y_dbm[e] = y
            # clamped bin lookup; same comparisons as fingerprint.bin_index
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
            row = gain[rx]
            blocked = False
            interf = 0.0
            for m in range(n_em):
                if em_owner[m] == e:
                    continue
                if em_node[m] == rx:
                    blocked = True
                interf += em_pow[m] * row[em_node[m]]
            sig = tx_pow[e] * row[tx_node[e]]
            sinr = sig / (interf + noise)
            sinr_ok[e] = 0 if (blocked or sinr < req[e]) else 1


def advance(st, n_start, n_end, mon_start, mon_end):
    E = st.n_entities
    # pull state into lists
    phase = st.phase.tolist(); counter = st.counter.tolist(); stage = st.stage.tolist()
    defer_left = st.defer_left.tolist(); retries = st.retries.tolist(); tx_left = st.tx_left.tolist()
    seg_cur = st.seg_cur.tolist(); seg_off = st.seg_off.tolist(); n_seg = st.n_seg.tolist()
    full_slots = st.full_slots.tolist(); last_bits = st.last_bits.tolist(); last_slots = st.last_slots.tolist()
    ppdu_ok = st.ppdu_ok_bits.tolist(); ppdu_fail = st.ppdu_fail_bits.tolist(); ack_ok = st.ack_ok.tolist()
    req = st.req_sinr.tolist(); fails = st.fails.tolist()
    y_dbm = st.y_dbm.tolist(); y_bin = st.y_bin.tolist(); sinr_ok = st.sinr_ok.tolist()
    head = st.head.tolist(); tail = st.tail.tolist(); node_started = st.node_started.tolist()
    bits_ok = st.bits_ok.tolist(); bits_fail = st.bits_fail.tolist(); bits_drop = st.bits_drop.tolist()
    n_tx = st.n_tx.tolist(); n_fail = st.n_fail.tolist(); n_freeze = st.n_freeze.tolist()
    n_vcoll = st.n_vcoll.tolist(); airtime = st.airtime.tolist(); hist = st.hist.tolist()

    tx_node = st.tx_node.tolist(); rx_node = st.rx_node.tolist(); tx_pow = st.tx_power_mw.tolist()
    node_pow = st.node_power_mw.tolist(); gain = st.gain.tolist(); gamma = st.gamma.tolist()
    w_min = st.w_min.tolist(); w_max = st.w_max.tolist(); aifs = st.aifs.tolist()
    max_stage = st.max_stage.tolist(); retry_limit = st.retry_limit.tolist()
    edges = st.edges.tolist(); n_bins = len(edges) - 1

    nf = st.n_files
    f_arrival = st.f_arrival[:nf].tolist(); f_remaining = st.f_remaining[:nf].tolist()
    f_delivered = st.f_delivered[:nf].tolist(); f_dropped = st.f_dropped[:nf].tolist()
    f_done = st.f_done[:nf].tolist(); f_next = st.f_next[:nf].tolist()

    urand = st.urand
    upos = int(st.scal[0]); dirty = int(st.scal[1]); n_active = int(st.scal[2])
    n_urand = len(urand)

    noise = st.noise_mw; bw = st.bandwidth_hz; se_cap = st.se_cap; se_floor = st.se_floor
    thr_lin = st.thr_lin; margin_lin = st.margin_lin; slot_sec = st.slot_sec
    seg_bits = st.segment_bits; max_tx_slots = st.max_tx_slots
    sifs_slots = st.sifs_slots; ack_slots = st.ack_slots
    max_seg = len(fails[0]) if E else 0

    n = n_start
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
                       noise, edges, n_bins, y_dbm, y_bin, sinr_ok, req)
            dirty = 0
        sampling = mon_start <= n < mon_end
        started = 0
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
                hist[e][y_bin[e]] += 1
            busy = y_dbm[e] > gamma[e]
            if ph == DEFER:
                if busy:
                    defer_left[e] = aifs[e]
                    if counter[e] == 0:
                        cw = w_min[e] << stage[e]
                        if cw > w_max[e]:
                            cw = w_max[e]
                        counter[e] = int(urand[upos] * cw)
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
                        # sibling on the same radio already started this slot
                        st_ = stage[e] + 1
                        stage[e] = st_ if st_ < max_stage[e] else max_stage[e]
                        cw = w_min[e] << stage[e]
                        if cw > w_max[e]:
                            cw = w_max[e]
                        counter[e] = int(urand[upos] * cw)
                        upos += 1
                        phase[e] = DEFER
                        defer_left[e] = aifs[e]
                        n_vcoll[e] += 1
                    else:
                        node_started[tn] = n
                        rem = f_remaining[h]
                        snr = tx_pow[e] * gain[tn][rx_node[e]] / noise
                        se = math.log2(1.0 + snr * margin_lin)
                        if se > se_cap:
                            se = se_cap
                        if se < se_floor:
                            se = se_floor
                        r = 2.0 ** se - 1.0
                        req[e] = r if r > thr_lin else thr_lin
                        q = bw * se * slot_sec
                        fs = int(math.ceil(seg_bits / q))
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
                            ls = int(math.ceil(lb / q))
                            if ns == 0 or slots + ls <= max_tx_slots:
                                last_bits[e] = lb
                                last_slots[e] = ls
                                slots += ls
                                ns += 1
                        n_seg[e] = ns
                        full_slots[e] = fs
                        fr = fails[e]
                        for i in range(ns):
                            fr[i] = 0
                        seg_cur[e] = 0
                        seg_off[e] = 0
                        tx_left[e] = slots
                        phase[e] = TX_DATA
                        n_tx[e] += 1
                        airtime[e] += slots
                        started = 1
                else:
                    phase[e] = IDLE
                    n_active -= 1
        if started:
            _recompute(E, phase, tx_node, rx_node, tx_pow, node_pow, gain, ack_ok, tx_left, ack_slots,
                       noise, edges, n_bins, y_dbm, y_bin, sinr_ok, req)
        for e in range(E):
            ph = phase[e]
            if ph == TX_DATA:
                sc = seg_cur[e]
                if not sinr_ok[e]:
                    fails[e][sc] = 1
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
                    fr = fails[e]
                    for i in range(ns):
                        b = last_bits[e] if (i == ns - 1 and last_bits[e] > 0) else seg_bits
                        if fr[i]:
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
                    counter[e] = int(urand[upos] * cw)
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

    # push state back
    st.phase[:] = phase; st.counter[:] = counter; st.stage[:] = stage
    st.defer_left[:] = defer_left; st.retries[:] = retries; st.tx_left[:] = tx_left
    st.seg_cur[:] = seg_cur; st.seg_off[:] = seg_off; st.n_seg[:] = n_seg
    st.full_slots[:] = full_slots; st.last_bits[:] = last_bits; st.last_slots[:] = last_slots
    st.ppdu_ok_bits[:] = ppdu_ok; st.ppdu_fail_bits[:] = ppdu_fail; st.ack_ok[:] = ack_ok
    st.req_sinr[:] = req; st.fails[:, :] = fails
    st.y_dbm[:] = y_dbm; st.y_bin[:] = y_bin; st.sinr_ok[:] = sinr_ok
    st.head[:] = head; st.tail[:] = tail; st.node_started[:] = node_started
    st.bits_ok[:] = bits_ok; st.bits_fail[:] = bits_fail; st.bits_drop[:] = bits_drop
    st.n_tx[:] = n_tx; st.n_fail[:] = n_fail; st.n_freeze[:] = n_freeze
    st.n_vcoll[:] = n_vcoll; st.airtime[:] = airtime; st.hist[:, :] = hist
    st.f_remaining[:nf] = f_remaining; st.f_delivered[:nf] = f_delivered
    st.f_dropped[:nf] = f_dropped; st.f_done[:nf] = f_done
    st.scal[0] = upos; st.scal[1] = dirty; st.scal[2] = n_active
    return n
