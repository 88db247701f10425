import math

import numpy as np
import pytest

from coexsim.mac import NRU_PC2, SLOT_SECONDS, WIFI_BE, Phase
from coexsim.phy import dbm_to_mw
from coexsim.slotloop import SlotState, available_backends, get_backend

BACKENDS = available_backends()
NOISE_MW = dbm_to_mw(-94.0)
P_MW = dbm_to_mw(20.0)
SEG_BITS = 64_000
FILE_BITS = 4_000_000


def make_state(gain, links, lbt, seed=0, n_bins=24):
    """links: (tx_node, rx_node) per entity; gain is the full node-node matrix."""
    n = gain.shape[0]
    st = SlotState(
        n, [t for t, _ in links], [r for _, r in links], [P_MW] * len(links), [P_MW] * n, lbt, n_bins,
        noise_mw=NOISE_MW, bandwidth_hz=20e6, se_cap=8.0, sinr_threshold_db=-3.0, rate_margin_db=3.0,
        segment_bits=SEG_BITS, max_tx_slots=444, sifs_slots=2, ack_slots=5, rng=np.random.default_rng(seed),
    )
    st.edges[:] = np.arange(-95.0, -95.0 + 2.0 * (n_bins + 1), 2.0)
    st.set_gains(gain)
    return st


def saturate(st, entity, n_files=500):
    for _ in range(n_files):
        st.add_file(entity, 0.0, FILE_BITS)


def pairs_gain(n_pairs, intra=1e-6, cross=0.0):
    """Pairs (2i, 2i+1) with strong links; ``cross`` couples every node of different pairs."""
    n = 2 * n_pairs
    g = np.full((n, n), cross)
    for i in range(n_pairs):
        g[2 * i, 2 * i + 1] = g[2 * i + 1, 2 * i] = intra
    np.fill_diagonal(g, 0.0)
    return g


def solo_oracle_mbps(cfg=WIFI_BE):
    """Saturated solo link at the 8 b/s/Hz cap: files of 4e6 bits split into PPDUs of
    at most 444 slots carrying whole 64 kbit segments at 1440 bits per slot."""
    bits_per_slot = 160e6 * SLOT_SECONDS
    seg_slots = math.ceil(SEG_BITS / bits_per_slot)
    per_ppdu = 444 // seg_slots
    n_full, last = divmod(FILE_BITS, SEG_BITS)
    segs = [seg_slots] * n_full + ([math.ceil(last / bits_per_slot)] if last else [])
    ppdus = [sum(segs[i:i + per_ppdu]) for i in range(0, len(segs), per_ppdu)]
    mean_backoff = (cfg.w_min - 1) / 2
    slots = sum(ppdus) + len(ppdus) * (cfg.aifs + mean_backoff + 2 + 5)
    return FILE_BITS / (slots * SLOT_SECONDS) / 1e6


def run_for(st, seconds, backend=None):
    st.advance(int(round(seconds / SLOT_SECONDS)), backend=get_backend(backend) if backend else None)
    return st.slot * SLOT_SECONDS


class TestBackends:
    @pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernel not built")
    def test_bit_identical(self):
        gain = pairs_gain(3, cross=3e-10)
        gain[0, 2] = gain[2, 0] = 1e-8
        outs = []
        for be in ("python", "cython"):
            st = make_state(gain, [(0, 1), (2, 3), (4, 5)], [WIFI_BE, NRU_PC2.with_gamma(-82.0), WIFI_BE], seed=7)
            for e in range(3):
                for k in range(20):
                    st.add_file(e, k * 0.01 + e * 1e-4, 2_000_000 + 8000 * e)
            for chunk in range(10):
                st.advance((chunk + 1) * 20_000, chunk * 20_000, chunk * 20_000 + 5000, backend=get_backend(be))
            outs.append((st.bits_ok.copy(), st.bits_fail.copy(), st.bits_drop.copy(), st.n_tx.copy(),
                         st.n_freeze.copy(), st.hist.copy(), st.f_done[: st.n_files].copy(), st.phase.copy()))
        for a, b in zip(*outs):
            assert np.array_equal(a, b)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            get_backend("fortran")


class TestSoloLink:
    def test_oracle_value(self):
        assert solo_oracle_mbps() == pytest.approx(151.4, abs=0.1)

    def test_saturated_throughput(self):
        st = make_state(pairs_gain(1), [(0, 1)], [WIFI_BE])
        saturate(st, 0)
        t = run_for(st, 10.0)
        got = st.bits_ok[0] / t / 1e6
        assert got == pytest.approx(solo_oracle_mbps(), rel=0.02)
        assert st.bits_fail[0] == 0 and st.bits_drop[0] == 0

    def test_isolated_pairs_match_solo(self):
        st = make_state(pairs_gain(3), [(0, 1), (2, 3), (4, 5)], [WIFI_BE, NRU_PC2, WIFI_BE], seed=3)
        for e in range(3):
            saturate(st, e)
        t = run_for(st, 10.0)
        for e in range(3):
            assert st.bits_ok[e] / t / 1e6 == pytest.approx(solo_oracle_mbps(), rel=0.02)

    def test_minus_infinity_threshold_never_transmits(self):
        st = make_state(pairs_gain(1), [(0, 1)], [WIFI_BE.with_gamma(-math.inf)])
        saturate(st, 0, 2)
        run_for(st, 0.5)
        assert st.n_tx[0] == 0 and st.airtime[0] == 0 and st.phase[0] == Phase.DEFER


class TestSharing:
    def test_two_mutually_sensing_split_airtime(self):
        # every node hears the other pair at about -60 dBm, far above both thresholds
        gain = pairs_gain(2, cross=dbm_to_mw(-80.0))
        st = make_state(gain, [(0, 1), (2, 3)], [WIFI_BE, WIFI_BE], seed=11)
        for e in range(2):
            saturate(st, e, 1500)
        run_for(st, 60.0)
        share = st.airtime[0] / st.airtime.sum()
        assert share == pytest.approx(0.5, abs=0.05)
        assert st.n_freeze.min() > 0

    def test_counter_frozen_while_other_transmits(self):
        gain = pairs_gain(2, cross=dbm_to_mw(-80.0))
        st = make_state(gain, [(0, 1), (2, 3)], [WIFI_BE, WIFI_BE], seed=5)
        saturate(st, 0, 5)
        saturate(st, 1, 5)
        violations = 0
        prev_counter = st.counter.copy()
        for s in range(1, 20_000):
            busy_for = [st.phase[1 - e] in (Phase.TX_DATA, Phase.TX_ACK) for e in range(2)]
            before_phase = st.phase.copy()
            st.advance(s)
            for e in range(2):
                if busy_for[e] and before_phase[e] == Phase.BACKOFF and st.phase[e] == Phase.BACKOFF \
                        and st.counter[e] < prev_counter[e]:
                    violations += 1
            prev_counter = st.counter.copy()
        assert violations == 0
