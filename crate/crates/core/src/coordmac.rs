//! Coordinated radar transmission: RCUs share (slot, start offset, band)
//! allocations over a CSMA control channel, and the per-frame interference
//! probability is compared against uncoordinated radars.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::units::{robust_floor, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub frame_duration_s: f64,
    pub chirp_duration_s: f64,
    pub chirps_per_frame: usize,
    pub carrier_hz: f64,
    pub sweep_bandwidth_hz: f64,
    /// Receiver bandwidth of interest; sets `τ_max = B_s/α`.
    pub interest_bandwidth_hz: f64,
    /// Control channel `(lo, hi)` in Hz.
    pub comm_band_hz: (f64, f64),
    /// Radar sub-bands `(lo, hi)` in Hz.
    pub radar_bands_hz: Vec<(f64, f64)>,
    pub sync_error_bound_s: f64,
    /// Largest interferer distance the start-offset grid must tolerate.
    pub max_interferer_range_m: f64,
    pub packet_airtime_s: f64,
    pub radio_range_m: f64,
    pub staleness_frames: u64,
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.frame_duration_s) || !pos(self.chirp_duration_s) || self.chirps_per_frame == 0 {
            return Err(Error::Config("frame, chirp duration and chirp count must be positive".into()));
        }
        if !pos(self.sweep_bandwidth_hz) || !pos(self.interest_bandwidth_hz) || !pos(self.carrier_hz) {
            return Err(Error::Config("carrier and bandwidths must be positive".into()));
        }
        if self.interest_bandwidth_hz > self.sweep_bandwidth_hz {
            return Err(Error::Config("interest bandwidth exceeds the sweep bandwidth".into()));
        }
        if self.num_slots() == 0 {
            return Err(Error::Config(format!(
                "modified duty cycle u' = (K+1)T/T_f = {:.3} exceeds 1, no time slot fits",
                self.modified_duty_cycle()
            )));
        }
        if !(self.sync_error_bound_s >= 0.0) || !(self.max_interferer_range_m >= 0.0) {
            return Err(Error::Config("sync error bound and interferer range must be non-negative".into()));
        }
        if self.num_offsets() == 0 {
            return Err(Error::Config(format!(
                "start-offset spacing {:.3e} s exceeds the chirp duration",
                self.offset_spacing_s()
            )));
        }
        if !pos(self.packet_airtime_s) || self.packet_airtime_s > self.chirp_duration_s {
            return Err(Error::Config(format!(
                "packet airtime {:.3e} s must fit the {:.3e} s communication window",
                self.packet_airtime_s, self.chirp_duration_s
            )));
        }
        if !pos(self.radio_range_m) || self.staleness_frames == 0 {
            return Err(Error::Config("radio range and staleness must be positive".into()));
        }
        if self.radar_bands_hz.is_empty() {
            return Err(Error::Config("at least one radar band is needed".into()));
        }
        let overlap = |a: (f64, f64), b: (f64, f64)| a.0 < b.1 && b.0 < a.1;
        let (clo, chi) = self.comm_band_hz;
        if !(chi > clo) {
            return Err(Error::Config("communication band must have positive width".into()));
        }
        for (i, b) in self.radar_bands_hz.iter().enumerate() {
            if !(b.1 > b.0) {
                return Err(Error::Config(format!("radar band {i} has non-positive width")));
            }
            if overlap(*b, self.comm_band_hz) {
                return Err(Error::Config(format!("radar band {i} overlaps the communication band")));
            }
            if self.radar_bands_hz[..i].iter().any(|o| overlap(*o, *b)) {
                return Err(Error::Config(format!("radar band {i} overlaps another radar band")));
            }
        }
        Ok(())
    }

    pub fn slope(&self) -> f64 {
        self.sweep_bandwidth_hz / self.chirp_duration_s
    }

    pub fn tau_max_s(&self) -> f64 {
        self.interest_bandwidth_hz / self.slope()
    }

    /// `u' = (K+1)T/T_f`: radar chirps plus one communication period.
    pub fn modified_duty_cycle(&self) -> f64 {
        (self.chirps_per_frame + 1) as f64 * self.chirp_duration_s / self.frame_duration_s
    }

    pub fn num_slots(&self) -> usize {
        robust_floor(1.0 / self.modified_duty_cycle()) as usize
    }

    pub fn slot_duration_s(&self) -> f64 {
        (self.chirps_per_frame + 1) as f64 * self.chirp_duration_s
    }

    /// Start offsets are spaced so that no sync error or propagation delay
    /// up to the configured range moves an interferer into `[0, τ_max]`.
    pub fn offset_spacing_s(&self) -> f64 {
        let tau_int = self.max_interferer_range_m / SPEED_OF_LIGHT;
        self.tau_max_s().max(tau_int) + 2.0 * self.sync_error_bound_s
    }

    pub fn num_offsets(&self) -> usize {
        robust_floor(self.chirp_duration_s / self.offset_spacing_s()) as usize
    }

    pub fn num_bands(&self) -> usize {
        self.radar_bands_hz.len()
    }

    pub fn capacity(&self) -> usize {
        self.num_slots() * self.num_offsets() * self.num_bands()
    }

    /// Communication window `[kL, kL + T)` of slot `k`.
    pub fn comm_window(&self, slot: usize) -> (f64, f64) {
        let s = slot as f64 * self.slot_duration_s();
        (s, s + self.chirp_duration_s)
    }

    /// Nominal first-chirp start of `resource` within the frame.
    pub fn nominal_start_s(&self, r: Resource) -> f64 {
        self.comm_window(r.slot).1 + r.offset as f64 * self.offset_spacing_s()
    }

    pub fn resources(&self) -> impl Iterator<Item = Resource> + '_ {
        (0..self.num_slots()).flat_map(move |slot| {
            (0..self.num_offsets())
                .flat_map(move |offset| (0..self.num_bands()).map(move |band| Resource { slot, offset, band }))
        })
    }
}

/// Time slot, start offset within the slot, and radar band. Ordered by
/// slot, then offset, then band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Resource {
    pub slot: usize,
    pub offset: usize,
    pub band: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RcuState {
    pub rcu_id: usize,
    pub vehicle_id: usize,
    pub resource: Resource,
    /// First-chirp start within the frame, including sync error.
    pub start_time_s: f64,
    pub heading_rad: f64,
    pub fov_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPacket {
    pub vehicle_id: usize,
    pub allocations: Vec<(usize, Resource, f64)>,
    pub priority: usize,
    pub timestamp_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DbEntry {
    pub resource: Resource,
    pub heard_frame: u64,
    pub priority: usize,
}

/// Allocations heard from other vehicles, keyed by `(vehicle, rcu)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AllocationDb {
    pub entries: BTreeMap<(usize, usize), DbEntry>,
}

impl AllocationDb {
    pub fn merge(&mut self, packet: &ControlPacket, frame: u64) {
        self.entries.retain(|(v, _), _| *v != packet.vehicle_id);
        for (rcu, resource, _) in &packet.allocations {
            self.entries.insert(
                (packet.vehicle_id, *rcu),
                DbEntry {
                    resource: *resource,
                    heard_frame: frame,
                    priority: packet.priority,
                },
            );
        }
    }

    pub fn expire(&mut self, frame: u64, staleness: u64) {
        self.entries.retain(|_, e| frame.saturating_sub(e.heard_frame) < staleness);
    }

    pub fn vehicles(&self) -> BTreeSet<usize> {
        self.entries.keys().map(|(v, _)| *v).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vehicle {
    pub id: usize,
    pub position_m: (f64, f64),
    pub rcus: Vec<RcuState>,
    pub db: AllocationDb,
    pub persistent_conflict: bool,
}

impl Vehicle {
    /// Group size known to this vehicle, itself included.
    pub fn priority(&self) -> usize {
        self.db.vehicles().len() + 1
    }

    pub fn packet(&self, timestamp_s: f64) -> ControlPacket {
        ControlPacket {
            vehicle_id: self.id,
            allocations: self.rcus.iter().map(|r| (r.rcu_id, r.resource, r.start_time_s)).collect(),
            priority: self.priority(),
            timestamp_s,
        }
    }

    /// Slot whose communication window carries this vehicle's packet.
    pub fn broadcast_slot(&self) -> usize {
        self.rcus.iter().map(|r| r.resource.slot).min().unwrap_or(0)
    }

    fn distance(&self, other: &Vehicle) -> f64 {
        let (dx, dy) = (self.position_m.0 - other.position_m.0, self.position_m.1 - other.position_m.1);
        dx.hypot(dy)
    }
}

/// Mutually disjoint random resources for the RCUs of one vehicle.
pub fn init_vehicle<R: Rng + ?Sized>(
    cfg: &FrameConfig,
    vehicle_id: usize,
    first_rcu_id: usize,
    num_rcus: usize,
    rng: &mut R,
) -> Result<Vec<RcuState>> {
    let all: Vec<Resource> = cfg.resources().collect();
    if num_rcus > all.len() {
        return Err(Error::Capacity(format!(
            "vehicle {vehicle_id} has {num_rcus} RCUs but only {} resources exist",
            all.len()
        )));
    }
    let picks = rand::seq::index::sample(rng, all.len(), num_rcus);
    Ok(picks
        .iter()
        .enumerate()
        .map(|(i, k)| RcuState {
            rcu_id: first_rcu_id + i,
            vehicle_id,
            resource: all[k],
            start_time_s: cfg.nominal_start_s(all[k]),
            heading_rad: 0.0,
            fov_rad: 2.0 * PI,
        })
        .collect())
}

/// Birthday probability that two vehicles with `a` and `b` RCUs drawn
/// independently share a resource out of `capacity`.
pub fn cross_vehicle_collision_probability(capacity: usize, a: usize, b: usize) -> f64 {
    if a + b > capacity {
        return 1.0;
    }
    // 1 − C(n−a, b)/C(n, b)
    let free: f64 = (0..b).map(|i| (capacity - a - i) as f64 / (capacity - i) as f64).product();
    1.0 - free
}

/// Resets start times to nominal plus a uniform error in `[−bound, bound]`.
pub fn apply_sync_error<R: Rng + ?Sized>(cfg: &FrameConfig, rcus: &mut [RcuState], bound_s: f64, rng: &mut R) -> Result<()> {
    if !(bound_s >= 0.0) {
        return domain("sync error bound must be non-negative");
    }
    let b = bound_s;
    for r in rcus {
        let e = if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
        r.start_time_s = cfg.nominal_start_s(r.resource) + e;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transmission {
    pub vehicle_id: usize,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CsmaDecision {
    Transmit { start_s: f64, end_s: f64 },
    Defer { retry_s: f64 },
    Drop,
}

/// Carrier sensing at `now`: transmit if no in-range transmission is on air,
/// otherwise back off uniformly within what remains of the window.
pub fn csma_attempt<R: Rng + ?Sized>(
    now: f64,
    window_end: f64,
    airtime: f64,
    on_air_in_range: &[Transmission],
    rng: &mut R,
) -> CsmaDecision {
    let busy = on_air_in_range.iter().any(|t| t.start_s < now && now < t.end_s);
    let latest = window_end - airtime;
    if !busy {
        if now <= latest + 1e-15 {
            return CsmaDecision::Transmit {
                start_s: now,
                end_s: now + airtime,
            };
        }
        return CsmaDecision::Drop;
    }
    // Retry after the channel frees up at the earliest.
    let free_at = on_air_in_range
        .iter()
        .filter(|t| t.start_s < now && now < t.end_s)
        .map(|t| t.end_s)
        .fold(now, f64::max);
    if free_at > latest {
        return CsmaDecision::Drop;
    }
    CsmaDecision::Defer {
        retry_s: if latest > free_at { rng.random_range(free_at..=latest) } else { free_at },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Attempt,
    Defer,
    Drop,
    TxStart,
    TxEnd,
    Receive,
    Collision,
    Relocate,
    Conflict,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::Attempt => "attempt",
            EventKind::Defer => "defer",
            EventKind::Drop => "drop",
            EventKind::TxStart => "tx_start",
            EventKind::TxEnd => "tx_end",
            EventKind::Receive => "receive",
            EventKind::Collision => "collision",
            EventKind::Relocate => "relocate",
            EventKind::Conflict => "conflict",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub time_s: f64,
    pub node: usize,
    pub kind: EventKind,
    pub payload: String,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9e} {} {} {}", self.time_s, self.node, self.kind, self.payload)
    }
}

/// Outcome of merging one packet at a receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandleOutcome {
    pub relocated: Vec<(usize, Resource, Resource)>,
    pub conflict: bool,
}

/// Merges `packet` into the receiver's database and moves any RCU that now
/// shares a resource with a higher-priority holder to the lowest free one.
pub fn handle_packet(vehicle: &mut Vehicle, packet: &ControlPacket, cfg: &FrameConfig, frame: u64) -> HandleOutcome {
    vehicle.db.expire(frame, cfg.staleness_frames);
    // The receiver competes with the group size it would have advertised.
    let own_priority = vehicle.priority();
    vehicle.db.merge(packet, frame);
    let own_id = vehicle.id;
    let mut out = HandleOutcome {
        relocated: Vec::new(),
        conflict: false,
    };
    for i in 0..vehicle.rcus.len() {
        let current = vehicle.rcus[i].resource;
        let outranked = vehicle.db.entries.iter().any(|((v, _), e)| {
            e.resource == current && (e.priority > own_priority || (e.priority == own_priority && *v < own_id))
        });
        if !outranked {
            continue;
        }
        let taken: BTreeSet<Resource> = vehicle
            .db
            .entries
            .values()
            .map(|e| e.resource)
            .chain(vehicle.rcus.iter().map(|r| r.resource))
            .collect();
        match cfg.resources().find(|r| !taken.contains(r)) {
            Some(free) => {
                vehicle.rcus[i].resource = free;
                vehicle.rcus[i].start_time_s = cfg.nominal_start_s(free);
                out.relocated.push((vehicle.rcus[i].rcu_id, current, free));
            }
            None => {
                vehicle.persistent_conflict = true;
                out.conflict = true;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EventTime(f64);

impl Eq for EventTime {}

impl PartialOrd for EventTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EventTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    // Transmission ends sort before attempts at the same instant.
    TxEnd,
    Attempt,
}

fn broadcast_windows(vehicles: &[Vehicle], cfg: &FrameConfig, frame: u64) -> Vec<(f64, f64)> {
    let t0 = frame as f64 * cfg.frame_duration_s;
    vehicles
        .iter()
        .map(|v| {
            let (a, b) = cfg.comm_window(v.broadcast_slot());
            (t0 + a, t0 + b)
        })
        .collect()
}

/// One frame of control traffic with each vehicle sensing at a uniform
/// instant of its communication window that leaves room for the packet. Vehicles are updated in place and
/// events appended to `trace`.
pub fn communication_phase<R: Rng + ?Sized>(
    vehicles: &mut [Vehicle],
    cfg: &FrameConfig,
    frame: u64,
    rng: &mut R,
    trace: &mut Vec<TraceEvent>,
) -> Result<()> {
    let attempts: Vec<f64> = broadcast_windows(vehicles, cfg, frame)
        .iter()
        .map(|(a, b)| rng.random_range(*a..=*b - cfg.packet_airtime_s))
        .collect();
    control_channel(vehicles, cfg, frame, &attempts, rng, trace)
}

/// Control-channel events for given first sensing instants (absolute
/// times, one per vehicle).
pub fn control_channel<R: Rng + ?Sized>(
    vehicles: &mut [Vehicle],
    cfg: &FrameConfig,
    frame: u64,
    first_attempts_s: &[f64],
    rng: &mut R,
    trace: &mut Vec<TraceEvent>,
) -> Result<()> {
    if first_attempts_s.len() != vehicles.len() {
        return Err(Error::Dimension {
            expected: (vehicles.len(), 1),
            got: (first_attempts_s.len(), 1),
        });
    }
    let windows = broadcast_windows(vehicles, cfg, frame);
    let mut queue: BinaryHeap<Reverse<(EventTime, usize, Pending)>> = BinaryHeap::new();
    for (i, t) in first_attempts_s.iter().enumerate() {
        queue.push(Reverse((EventTime(*t), i, Pending::Attempt)));
    }
    let mut on_air: Vec<(Transmission, ControlPacket)> = Vec::new();
    let mut finished: Vec<Transmission> = Vec::new();
    while let Some(Reverse((EventTime(now), i, kind))) = queue.pop() {
        match kind {
            Pending::Attempt => {
                trace.push(TraceEvent {
                    time_s: now,
                    node: vehicles[i].id,
                    kind: EventKind::Attempt,
                    payload: String::new(),
                });
                let heard: Vec<Transmission> = on_air
                    .iter()
                    .filter(|(t, _)| vehicles[t.vehicle_id_index(vehicles)].distance(&vehicles[i]) <= cfg.radio_range_m)
                    .map(|(t, _)| *t)
                    .collect();
                match csma_attempt(now, windows[i].1, cfg.packet_airtime_s, &heard, rng) {
                    CsmaDecision::Transmit { start_s, end_s } => {
                        let tx = Transmission {
                            vehicle_id: vehicles[i].id,
                            start_s,
                            end_s,
                        };
                        on_air.push((tx, vehicles[i].packet(start_s)));
                        queue.push(Reverse((EventTime(end_s), i, Pending::TxEnd)));
                        trace.push(TraceEvent {
                            time_s: now,
                            node: vehicles[i].id,
                            kind: EventKind::TxStart,
                            payload: format!("until {end_s:.9e}"),
                        });
                    }
                    CsmaDecision::Defer { retry_s } => {
                        queue.push(Reverse((EventTime(retry_s), i, Pending::Attempt)));
                        trace.push(TraceEvent {
                            time_s: now,
                            node: vehicles[i].id,
                            kind: EventKind::Defer,
                            payload: format!("retry {retry_s:.9e}"),
                        });
                    }
                    CsmaDecision::Drop => trace.push(TraceEvent {
                        time_s: now,
                        node: vehicles[i].id,
                        kind: EventKind::Drop,
                        payload: "window exhausted".into(),
                    }),
                }
            }
            Pending::TxEnd => {
                let pos = on_air.iter().position(|(t, _)| t.vehicle_id == vehicles[i].id).expect("on air");
                let (tx, packet) = on_air.remove(pos);
                trace.push(TraceEvent {
                    time_s: now,
                    node: vehicles[i].id,
                    kind: EventKind::TxEnd,
                    payload: String::new(),
                });
                let all: Vec<Transmission> = on_air.iter().map(|(t, _)| *t).chain(finished.iter().copied()).collect();
                for r in 0..vehicles.len() {
                    if r == i || vehicles[r].distance(&vehicles[i]) > cfg.radio_range_m {
                        continue;
                    }
                    let overlaps = |t: &Transmission| t.start_s < tx.end_s && tx.start_s < t.end_s;
                    let jammed = all.iter().any(|t| {
                        overlaps(t)
                            && (t.vehicle_id == vehicles[r].id || {
                                let k = t.vehicle_id_index(vehicles);
                                k != i && vehicles[k].distance(&vehicles[r]) <= cfg.radio_range_m
                            })
                    });
                    if jammed {
                        trace.push(TraceEvent {
                            time_s: now,
                            node: vehicles[r].id,
                            kind: EventKind::Collision,
                            payload: format!("from {}", packet.vehicle_id),
                        });
                        continue;
                    }
                    trace.push(TraceEvent {
                        time_s: now,
                        node: vehicles[r].id,
                        kind: EventKind::Receive,
                        payload: format!("from {} priority {}", packet.vehicle_id, packet.priority),
                    });
                    let outcome = handle_packet(&mut vehicles[r], &packet, cfg, frame);
                    for (rcu, from, to) in outcome.relocated {
                        trace.push(TraceEvent {
                            time_s: now,
                            node: vehicles[r].id,
                            kind: EventKind::Relocate,
                            payload: format!(
                                "rcu {rcu} ({},{},{}) -> ({},{},{})",
                                from.slot, from.offset, from.band, to.slot, to.offset, to.band
                            ),
                        });
                    }
                    if outcome.conflict {
                        trace.push(TraceEvent {
                            time_s: now,
                            node: vehicles[r].id,
                            kind: EventKind::Conflict,
                            payload: "no free resource".into(),
                        });
                    }
                }
                finished.push(tx);
            }
        }
    }
    Ok(())
}

impl Transmission {
    fn vehicle_id_index(&self, vehicles: &[Vehicle]) -> usize {
        vehicles.iter().position(|v| v.id == self.vehicle_id).expect("known vehicle")
    }
}

/// Whether an interferer arriving `delta_s` after the victim's chirp start
/// (modulo `T`) produces an in-band beat: `δ mod T ∈ [0, τ_max]`.
pub fn in_band_offset(cfg: &FrameConfig, delta_s: f64) -> bool {
    let d = delta_s.rem_euclid(cfg.chirp_duration_s);
    d <= cfg.tau_max_s()
}

fn in_fov(from: &RcuState, from_pos: (f64, f64), to_pos: (f64, f64)) -> bool {
    if from.fov_rad >= 2.0 * PI {
        return true;
    }
    let bearing = (to_pos.1 - from_pos.1).atan2(to_pos.0 - from_pos.0);
    let off = (bearing - from.heading_rad + PI).rem_euclid(2.0 * PI) - PI;
    off.abs() <= from.fov_rad / 2.0
}

/// Interference probability of one frame: fraction of (victim chirp,
/// interferer) pairs hit, averaged over victims.
pub fn measure_interference(vehicles: &[Vehicle], cfg: &FrameConfig) -> Result<f64> {
    let rcus: Vec<(&RcuState, (f64, f64))> = vehicles
        .iter()
        .flat_map(|v| v.rcus.iter().map(move |r| (r, v.position_m)))
        .collect();
    if rcus.is_empty() {
        return domain("measure_interference needs at least one radar");
    }
    if rcus.len() == 1 {
        return Ok(0.0);
    }
    let t = cfg.chirp_duration_s;
    let k = cfg.chirps_per_frame;
    let mut total = 0.0;
    for (vi, (victim, vpos)) in rcus.iter().enumerate() {
        let mut hits = 0usize;
        for (ii, (intf, ipos)) in rcus.iter().enumerate() {
            if ii == vi || intf.resource.band != victim.resource.band {
                continue;
            }
            if !in_fov(victim, *vpos, *ipos) || !in_fov(intf, *ipos, *vpos) {
                continue;
            }
            let d = ((vpos.0 - ipos.0).powi(2) + (vpos.1 - ipos.1).powi(2)).sqrt() / SPEED_OF_LIGHT;
            let arrival = intf.start_time_s + d;
            let delta = arrival - victim.start_time_s;
            if !in_band_offset(cfg, delta) {
                continue;
            }
            // Victim chirp j meets interferer chirp m = ⌊δ/T⌋-aligned index.
            let shift = (delta - delta.rem_euclid(t)) / t;
            let m0 = -shift.round() as i64;
            let lo = m0.max(0);
            let hi = (m0 + k as i64).min(k as i64);
            hits += (hi - lo).max(0) as usize;
        }
        total += hits as f64 / (k * (rcus.len() - 1)) as f64;
    }
    Ok(total / rcus.len() as f64)
}

/// Placement and antenna parameters of a simulated population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub area_side_m: f64,
    pub fov_rad: f64,
    pub rcus_per_vehicle: usize,
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        if !(self.area_side_m > 0.0) || !(self.fov_rad > 0.0) || self.rcus_per_vehicle == 0 {
            return Err(Error::Config("topology needs positive area, FOV and RCU count".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub coordinated: Vec<f64>,
    pub uncoordinated: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<TraceEvent>,
    pub final_vehicles: Vec<Vehicle>,
}

/// Places `num_vehicles` vehicles and runs `frames` frames of the protocol
/// next to an uncoordinated population with the same geometry.
pub fn run<R: Rng + ?Sized>(
    num_vehicles: usize,
    frames: usize,
    cfg: &FrameConfig,
    topo: &Topology,
    rng: &mut R,
) -> Result<RunResult> {
    cfg.validate()?;
    topo.validate()?;
    if frames == 0 {
        return domain("at least one frame must be simulated");
    }
    if num_vehicles == 0 {
        return domain("at least one radar is needed");
    }
    let mut vehicles = Vec::with_capacity(num_vehicles);
    for v in 0..num_vehicles {
        let position_m = (rng.random_range(0.0..topo.area_side_m), rng.random_range(0.0..topo.area_side_m));
        let mut rcus = init_vehicle(cfg, v, v * topo.rcus_per_vehicle, topo.rcus_per_vehicle, rng)?;
        for r in &mut rcus {
            r.heading_rad = rng.random_range(-PI..PI);
            r.fov_rad = topo.fov_rad;
        }
        vehicles.push(Vehicle {
            id: v,
            position_m,
            rcus,
            db: AllocationDb::default(),
            persistent_conflict: false,
        });
    }
    // Uncoordinated radars: same slot and band, arbitrary start within a chirp.
    let mut baseline = vehicles.clone();
    let offsets: Vec<Vec<f64>> = baseline
        .iter()
        .map(|v| v.rcus.iter().map(|_| rng.random_range(0.0..cfg.chirp_duration_s)).collect())
        .collect();

    let mut trace = Vec::new();
    let mut coordinated = Vec::with_capacity(frames);
    let mut uncoordinated = Vec::with_capacity(frames);
    for frame in 0..frames as u64 {
        communication_phase(&mut vehicles, cfg, frame, rng, &mut trace)?;
        for v in &mut vehicles {
            apply_sync_error(cfg, &mut v.rcus, cfg.sync_error_bound_s, rng)?;
        }
        coordinated.push(measure_interference(&vehicles, cfg)?);
        for (v, offs) in baseline.iter_mut().zip(&offsets) {
            apply_sync_error(cfg, &mut v.rcus, cfg.sync_error_bound_s, rng)?;
            for (r, o) in v.rcus.iter_mut().zip(offs) {
                let base = cfg.comm_window(r.resource.slot).1;
                r.start_time_s += base + o - cfg.nominal_start_s(r.resource);
            }
        }
        uncoordinated.push(measure_interference(&baseline, cfg)?);
    }
    Ok(RunResult {
        coordinated,
        uncoordinated,
        trace,
        final_vehicles: vehicles,
    })
}

pub const SUMMARY_COLUMNS: [&str; 3] = ["frame_idx", "f_coordinated", "f_uncoordinated"];

pub fn write_summary<W: std::io::Write>(w: W, result: &RunResult) -> Result<()> {
    let rows: Vec<Vec<f64>> = result
        .coordinated
        .iter()
        .zip(&result.uncoordinated)
        .enumerate()
        .map(|(i, (c, u))| vec![i as f64, *c, *u])
        .collect();
    crate::dsv::write_table(w, &SUMMARY_COLUMNS, &rows)
}

pub fn write_trace<W: std::io::Write>(mut w: W, trace: &[TraceEvent]) -> Result<()> {
    for e in trace {
        writeln!(w, "{e}")?;
    }
    Ok(())
}

/// No vehicle holds two RCUs on one resource.
pub fn check_safety(vehicles: &[Vehicle]) -> bool {
    vehicles.iter().all(|v| {
        let set: BTreeSet<Resource> = v.rcus.iter().map(|r| r.resource).collect();
        set.len() == v.rcus.len()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    pub(crate) fn fig10() -> FrameConfig {
        FrameConfig {
            frame_duration_s: 2e-3,
            chirp_duration_s: 20e-6,
            chirps_per_frame: 99,
            carrier_hz: 79e9,
            sweep_bandwidth_hz: 1e9,
            interest_bandwidth_hz: 50e6,
            comm_band_hz: (76.0e9, 76.05e9),
            radar_bands_hz: vec![(78.5e9, 79.5e9)],
            sync_error_bound_s: 1e-6,
            max_interferer_range_m: 300.0,
            packet_airtime_s: 2e-6,
            radio_range_m: 400.0,
            staleness_frames: 5,
        }
    }

    #[test]
    fn fig10_frame_geometry() {
        let c = fig10();
        c.validate().unwrap();
        assert!((c.modified_duty_cycle() - 1.0).abs() < 1e-12);
        assert_eq!(c.num_slots(), 1);
        assert!((c.tau_max_s() - 1e-6).abs() < 1e-18);
        assert!((c.offset_spacing_s() - (300.0 / SPEED_OF_LIGHT + 2e-6)).abs() < 1e-15);
        assert_eq!(c.num_offsets(), 6);
        assert_eq!(c.capacity(), 6);
    }

    #[test]
    fn validation_names_the_violation() {
        let mut c = fig10();
        c.chirps_per_frame = 120;
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("u'")));
        let mut c = fig10();
        c.radar_bands_hz.push((76.0e9, 76.5e9));
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("communication band")));
        let mut c = fig10();
        c.packet_airtime_s = 100e-6;
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_one_vehicle_disjoint() {
        let mut c = fig10();
        c.frame_duration_s = 8e-3;
        assert_eq!(c.num_slots(), 4);
        let mut rng = rng_from_seed(1);
        let r = init_vehicle(&c, 0, 0, 4, &mut rng).unwrap();
        let set: BTreeSet<Resource> = r.iter().map(|x| x.resource).collect();
        assert_eq!(set.len(), 4);
        assert!(init_vehicle(&c, 0, 0, 25, &mut rng).is_err());
        let again = init_vehicle(&c, 0, 0, 4, &mut rng_from_seed(1)).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn sync_error_identity_at_zero() {
        let mut c = fig10();
        c.sync_error_bound_s = 0.0;
        let mut rng = rng_from_seed(2);
        let mut r = init_vehicle(&c, 0, 0, 3, &mut rng).unwrap();
        let before = r.clone();
        apply_sync_error(&c, &mut r, 0.0, &mut rng).unwrap();
        assert_eq!(r, before);
        assert!(apply_sync_error(&c, &mut r, -1e-6, &mut rng).is_err());
    }

    #[test]
    fn csma_single_node_transmits() {
        let mut rng = rng_from_seed(3);
        assert!(matches!(
            csma_attempt(1e-6, 20e-6, 2e-6, &[], &mut rng),
            CsmaDecision::Transmit { .. }
        ));
        let busy = [Transmission {
            vehicle_id: 1,
            start_s: 0.5e-6,
            end_s: 2.5e-6,
        }];
        match csma_attempt(1e-6, 20e-6, 2e-6, &busy, &mut rng) {
            CsmaDecision::Defer { retry_s } => assert!((2.5e-6..=18e-6).contains(&retry_s)),
            d => panic!("{d:?}"),
        }
        assert_eq!(csma_attempt(19e-6, 20e-6, 2e-6, &[], &mut rng), CsmaDecision::Drop);
    }

    #[test]
    fn birthday_collision_formula() {
        assert!((cross_vehicle_collision_probability(6, 1, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert!((cross_vehicle_collision_probability(10, 2, 2) - (1.0 - 8.0 * 7.0 / 90.0)).abs() < 1e-15);
        assert_eq!(cross_vehicle_collision_probability(4, 3, 2), 1.0);
    }
}
