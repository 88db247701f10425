"""Epoch-driven simulation: topology, traffic and policies around the slot kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bandit import ActionSet
from .clustering import ClusterModel, LabeledState
from .fingerprint import InsufficientObservationError, fingerprint_from_counts
from .mac import SLOT_SECONDS
from .metrics import MetricsReport
from .phy import dbm_to_mw, draw_shadowing, gain_matrix
from .policies import ExplorePolicy, RandomPolicy, StandardPolicy, make_cmab, make_ucb
from .scenario import Scenario, ScenarioError, attach, drop_users, mobility_step, traffic_arrivals
from .slotloop import SlotState, get_backend

@dataclass
class Device:
    id: int
    node: int
    technology: str
    role: str  # "adapting" | "standard"
    home_cell: int
    policy_name: str


class Simulation:
    def __init__(self, sc: Scenario, *, backend=None, debug_bandit: bool = False, cluster_model=None,
                 explore: bool = False):
        """``explore`` replaces the adapting devices' policy with uniform arm draws and records
        (fingerprint, arm, reward) traces for offline clustering."""
        self.sc = sc
        self.explore = explore
        self.traces: list[LabeledState] = []
        self.backend = get_backend(backend) if isinstance(backend, (str, type(None))) else backend
        self.debug_bandit = debug_bandit
        ss = np.random.SeedSequence(sc.seed)
        r_drop, r_shadow, r_mob, r_traffic, r_mac, r_policy = (np.random.default_rng(s) for s in ss.spawn(6))
        self.rng_mob, self.rng_traffic, self.rng_policy = r_mob, r_traffic, r_policy

        cells = sc.cell_layout()
        self.n_cells = len(cells)
        self.cell_tech = [c.technology for c in cells]
        drops = drop_users(sc, r_drop)
        pos = [c.position for c in cells] + [p for _, p in drops]
        self.pos = np.array(pos, dtype=float)
        n_nodes = len(pos)
        self.shadow = draw_shadowing(n_nodes, sc.phy.shadowing_db, r_shadow)

        self.devices: list[Device] = []
        per_cell: dict[int, int] = {}
        for i, (ci, _) in enumerate(drops):
            k = per_cell.get(ci, 0)
            per_cell[ci] = k + 1
            role = "adapting" if k < sc.adapting_per_cell else "standard"
            pol = sc.policy if role == "adapting" else "standard"
            self.devices.append(Device(i, self.n_cells + i, cells[ci].technology, role, ci, pol))

        node_dbm = np.array([sc.phy.tx_power_dbm] * self.n_cells + [sc.phy.ue_tx_power_dbm] * len(drops))
        self.node_dbm = node_dbm
        self.gain = gain_matrix(self.pos, self.shadow, sc.phy)
        self.attachment = self._attach()
        tx, rx = self._links()
        lbt = [sc.lbt(d.technology).with_gamma(sc.standard_threshold[d.technology]) for d in self.devices]
        mac = sc.mac
        self.state = SlotState(
            n_nodes, tx, rx, dbm_to_mw(node_dbm[tx]), dbm_to_mw(node_dbm), lbt, sc.bandit.edges().n_bins,
            noise_mw=float(dbm_to_mw(sc.phy.noise_dbm)), bandwidth_hz=sc.phy.bandwidth_hz,
            se_cap=sc.phy.max_spectral_efficiency, sinr_threshold_db=sc.phy.sinr_threshold_db,
            rate_margin_db=sc.phy.rate_margin_db, segment_bits=8 * sc.traffic.segment_bytes,
            max_tx_slots=max(1, int(math.floor(mac.max_tx_ms * 1e-3 / SLOT_SECONDS))),
            sifs_slots=int(math.ceil(mac.sifs_us * 1e-6 / SLOT_SECONDS - 1e-9)),
            ack_slots=int(math.ceil(mac.ack_us * 1e-6 / SLOT_SECONDS - 1e-9)),
            rng=r_mac,
        )
        self.state.edges[:] = sc.bandit.edges().as_array()
        self.state.set_gains(self.gain)

        self.actions = ActionSet(sc.bandit.actions)
        self.model = cluster_model
        if sc.policy == "cmab" and self.model is None and not explore:
            path = sc.cluster_model_path()
            if path is None:
                raise ScenarioError("bandit.cluster_model: cmab policy needs a cluster model file")
            self.model = ClusterModel.load(path)
        if self.model is not None:
            if tuple(self.model.actions) != tuple(self.actions.thresholds):
                raise ScenarioError("bandit.cluster_model: model action set differs from bandit.actions")
            if self.model.bin_edges != sc.bandit.edges():
                raise ScenarioError("bandit.cluster_model: model bin edges differ from the scenario's")
        self.policies = [self._make_policy(d) for d in self.devices]

    # -- setup helpers -------------------------------------------------------

    def _make_policy(self, d: Device):
        sc = self.sc
        std = sc.standard_threshold[d.technology]
        if self.explore and d.role == "adapting":
            return ExplorePolicy(self.actions, self.rng_policy)
        if d.policy_name == "standard":
            return StandardPolicy(std)
        if d.policy_name == "random":
            lo, hi = sc.random_range
            return RandomPolicy(lo, hi, self.rng_policy)
        if d.policy_name == "cmab":
            return make_cmab(self.actions, self.model, sc.bandit.alpha, std, self.debug_bandit)
        if d.policy_name == "ucb":
            return make_ucb(self.actions, sc.bandit.alpha, std, sc.bandit.edges(), self.debug_bandit)
        raise ScenarioError(f"policy: unknown policy {d.policy_name!r}")

    def _rx_dbm(self) -> np.ndarray:
        return self.node_dbm[None, :] + 10.0 * np.log10(self.gain)

    def _attach(self) -> dict[int, int]:
        users = [d.node for d in self.devices]
        return attach(users, list(range(self.n_cells)), self.cell_tech, [d.technology for d in self.devices],
                      self._rx_dbm())

    def _links(self):
        cell_of = [self.attachment[d.node] for d in self.devices]
        users = [d.node for d in self.devices]
        if self.sc.traffic.direction == "downlink":
            return np.array(cell_of), np.array(users)
        return np.array(users), np.array(cell_of)

    def _move(self) -> None:
        sc = self.sc
        for d in self.devices:
            self.pos[d.node] = mobility_step(self.pos[d.node], sc.epoch_slots * SLOT_SECONDS, sc.room,
                                             sc.max_speed, self.rng_mob)
        self.gain = gain_matrix(self.pos, self.shadow, sc.phy)
        self.state.set_gains(self.gain)
        self.attachment = self._attach()
        tx, rx = self._links()
        st = self.state
        for e in range(st.n_entities):
            if st.is_transmitting(e):
                continue  # keep the link until the ongoing PPDU finishes
            st.tx_node[e], st.rx_node[e] = tx[e], rx[e]
            st.tx_power_mw[e] = dbm_to_mw(float(self.node_dbm[tx[e]]))

    # -- main loop -------------------------------------------------------------

    def run(self) -> MetricsReport:
        sc, st = self.sc, self.state
        E = st.n_entities
        rep = MetricsReport(sc.seed, sc.name)
        slots = sc.epoch_slots
        epoch_sec = slots * SLOT_SECONDS
        file_bits = 8 * sc.traffic.file_bytes
        fps = [None] * E
        rewards = [0.0] * E
        prev_ok = st.bits_ok.copy()
        prev_fail = st.bits_fail.copy()
        prev_drop = st.bits_drop.copy()
        open_files: list[int] = []
        rows = rep.epoch_rows

        for t in range(sc.duration_epochs):
            t0 = t * slots
            if t > 0 and sc.max_speed > 0:
                self._move()
            for e in range(E):
                for at in traffic_arrivals(sc.traffic.arrival_rate, epoch_sec, self.rng_traffic, t0 * SLOT_SECONDS):
                    open_files.append(st.add_file(e, at, file_bits))
            rep.bits_generated = int(st.f_bits[: st.n_files].sum())

            decisions = []
            for e, pol in enumerate(self.policies):
                dec = pol.decide(t, rewards[e], fps[e])
                st.set_gamma(e, dec.gamma)
                decisions.append(dec)

            st.hist[:, :] = 0
            mon0 = t0 + sc.monitor_offset_slots
            st.advance(t0 + slots, mon0, mon0 + sc.monitor_slots, backend=self.backend)

            elapsed = (t + 1) * epoch_sec
            for e, d in enumerate(self.devices):
                ok = int(st.bits_ok[e] - prev_ok[e])
                fail = int(st.bits_fail[e] - prev_fail[e])
                drop = int(st.bits_drop[e] - prev_drop[e])
                rewards[e] = (ok - fail) / epoch_sec
                try:
                    fps[e] = fingerprint_from_counts(st.hist[e], epoch=t)
                except InsufficientObservationError:
                    fps[e] = None  # the policy keeps its previous fingerprint
                pol = self.policies[e]
                if isinstance(pol, ExplorePolicy) and fps[e] is not None:
                    util = [math.nan] * len(self.actions)
                    util[pol.arm] = rewards[e] * 1e-6
                    self.traces.append(LabeledState(fps[e], tuple(util)))
                dec = decisions[e]
                rows.append({
                    "seed": sc.seed, "epoch": t, "time_s": elapsed, "device": d.id, "technology": d.technology,
                    "role": d.role, "policy": d.policy_name, "gamma_dbm": dec.gamma, "cluster": dec.cluster,
                    "theta": dec.theta, "bits_ok": ok, "bits_failed": fail, "bits_dropped": drop,
                    "reward_mbps": rewards[e] * 1e-6, "eff_throughput_mbps": float(st.bits_ok[e]) / elapsed * 1e-6,
                    "samples": int(st.hist[e].sum()),
                })
                if self.debug_bandit and dec.scores is not None:
                    prior, mu, cb = dec.scores
                    ar = {"seed": sc.seed, "epoch": t, "device": d.id, "cluster": dec.cluster, "theta": dec.theta,
                          "gamma_dbm": dec.gamma, "reward_mbps": rewards[e] * 1e-6}
                    for a, g in enumerate(self.actions.thresholds):
                        ar[f"prior_{a}"] = float(prior[a])
                        ar[f"mu_{a}"] = float(mu[a])
                        ar[f"cb_{a}"] = float(cb[a])
                    rep.agent_rows.append(ar)
            prev_ok, prev_fail, prev_drop = st.bits_ok.copy(), st.bits_fail.copy(), st.bits_drop.copy()

            still_open = []
            for f in open_files:
                if st.f_done[f] >= 0:
                    self._record_file(rep, f)
                else:
                    still_open.append(f)
            open_files = still_open

        rep.bits_delivered = int(st.f_delivered[: st.n_files].sum())
        rep.bits_dropped = int(st.f_dropped[: st.n_files].sum())
        rep.bits_queued = st.queued_bits()
        total = sc.duration_epochs * epoch_sec
        for e, d in enumerate(self.devices):
            rep.device_rows.append({
                "seed": sc.seed, "device": d.id, "technology": d.technology, "role": d.role,
                "policy": d.policy_name, "tx_node": int(st.tx_node[e]), "rx_node": int(st.rx_node[e]),
                "tx_attempts": int(st.n_tx[e]), "failed_ppdus": int(st.n_fail[e]), "freezes": int(st.n_freeze[e]),
                "virtual_collisions": int(st.n_vcoll[e]), "airtime_s": int(st.airtime[e]) * SLOT_SECONDS,
                "bits_ok": int(st.bits_ok[e]), "bits_failed": int(st.bits_fail[e]),
                "bits_dropped": int(st.bits_drop[e]), "eff_throughput_mbps": float(st.bits_ok[e]) / total * 1e-6,
            })
        return rep

    def _record_file(self, rep: MetricsReport, f: int) -> None:
        st = self.state
        d = self.devices[int(st.f_entity[f])]
        arrival = float(st.f_arrival_time[f])
        done = (int(st.f_done[f]) + 1) * SLOT_SECONDS
        bits = int(st.f_bits[f])
        rep.upt_rows.append({
            "seed": self.sc.seed, "device": d.id, "technology": d.technology, "role": d.role,
            "policy": d.policy_name, "arrival_s": arrival, "completion_s": done, "file_bits": bits,
            "delivered_bits": int(st.f_delivered[f]), "dropped_bits": int(st.f_dropped[f]),
            "upt_mbps": bits / (done - arrival) * 1e-6,
        })


def run(sc: Scenario, **kw) -> MetricsReport:
    return Simulation(sc, **kw).run()


def collect_traces(sc: Scenario, seeds, **kw) -> list[LabeledState]:
    """Exploration runs: each adapting device's epoch yields (fingerprint, reward of the drawn arm in Mb/s)."""
    out = []
    for s in seeds:
        sim = Simulation(sc.with_(seed=int(s)), explore=True, **kw)
        sim.run()
        out.extend(sim.traces)
    return out
