//! Deterministic discrete-event simulation of one service day.
//!
//! Events are processed in (time, event rank, entity id, insertion order)
//! order, so identical inputs give identical logs. Route and GV-plan
//! versions invalidate events scheduled against superseded plans.

use crate::agents::{
    AgentId, AgentKind, CourierState, GvDeliveryMode, GvState, GvTrip, ParcelId, ParcelPool,
    ParcelStatus, RoutePlan, UavState, WaypointAction,
};
use crate::config::SimParams;
use crate::dispatch::{dispatch_batch, AgentRegistry, Policy};
use crate::geo::{euclidean_distance, manhattan_distance, Location, ServiceArea};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// A GV's day: where it starts and its ordered passenger trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvSchedule {
    pub start_loc: Location,
    pub trips: Vec<GvTrip>,
}

/// Everything needed to run one day: geometry, demand, and supply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub area: ServiceArea,
    pub parcels: Vec<crate::agents::Parcel>,
    pub uav_stations: Vec<Location>,
    pub uavs_per_station: usize,
    pub courier_stations: Vec<Location>,
    pub couriers_per_station: usize,
    pub gv_schedules: Vec<GvSchedule>,
}

impl Scenario {
    pub fn uav_count(&self) -> usize {
        self.uav_stations.len() * self.uavs_per_station
    }

    pub fn courier_count(&self) -> usize {
        self.courier_stations.len() * self.couriers_per_station
    }
}

#[derive(Debug, Clone, PartialEq)]
enum EventKind {
    WaypointArrival { agent: AgentId, version: u64, index: usize },
    GvPickup { gv: u32, version: u64, parcel: ParcelId },
    GvDropoff { gv: u32, version: u64, parcel: ParcelId },
    GvFree { gv: u32, version: u64, consumed_trip: bool },
    GvTripEnd { gv: u32, version: u64 },
    GvTripStart { gv: u32, version: u64 },
    OrderArrival(ParcelId),
    DispatchRetry,
    SimEnd,
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::WaypointArrival { .. } => 0,
            EventKind::GvPickup { .. } => 1,
            EventKind::GvDropoff { .. } => 2,
            EventKind::GvFree { .. } => 3,
            EventKind::GvTripEnd { .. } => 4,
            EventKind::GvTripStart { .. } => 5,
            EventKind::OrderArrival(_) => 6,
            EventKind::DispatchRetry => 7,
            EventKind::SimEnd => 8,
        }
    }

    fn entity(&self) -> u64 {
        fn agent_key(a: AgentId) -> u64 {
            a.kind.rank() as u64 * 1_000_000 + a.index as u64
        }
        match self {
            EventKind::WaypointArrival { agent, .. } => agent_key(*agent),
            EventKind::GvPickup { gv, .. }
            | EventKind::GvDropoff { gv, .. }
            | EventKind::GvFree { gv, .. }
            | EventKind::GvTripEnd { gv, .. }
            | EventKind::GvTripStart { gv, .. } => agent_key(AgentId::gv(*gv)),
            EventKind::OrderArrival(p) => p.0,
            EventKind::DispatchRetry | EventKind::SimEnd => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Event {
    t: f64,
    seq: u64,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the earliest first.
        other
            .t
            .total_cmp(&self.t)
            .then(other.kind.rank().cmp(&self.kind.rank()))
            .then(other.kind.entity().cmp(&self.kind.entity()))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Structured simulation log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub event: LogEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogEvent {
    Ordered { parcel: ParcelId },
    Assigned {
        parcel: ParcelId,
        agent: AgentId,
        cost: f64,
        monetized_cost: f64,
        gv_mode: Option<GvDeliveryMode>,
    },
    PickedUp { parcel: ParcelId, agent: AgentId },
    Delivered { parcel: ParcelId, agent: AgentId },
    Failed { parcel: ParcelId },
    TripStarted { gv: u32 },
    TripEnded { gv: u32 },
}

/// Aggregates over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total_orders: usize,
    pub delivered: usize,
    pub failed: usize,
    /// Indexed by [`AgentKind::rank`]: UAV, courier, GV.
    pub delivered_by_kind: [usize; 3],
    /// Monetized cost of deliveries completed by each kind.
    pub cost_by_kind: [f64; 3],
    pub total_cost: f64,
    pub mean_delivery_time: f64,
    /// Mean GV payment per GV-delivered parcel.
    pub gv_price_per_delivery: f64,
}

impl Metrics {
    fn empty(total_orders: usize) -> Self {
        Metrics {
            total_orders,
            delivered: 0,
            failed: 0,
            delivered_by_kind: [0; 3],
            cost_by_kind: [0.0; 3],
            total_cost: 0.0,
            mean_delivery_time: 0.0,
            gv_price_per_delivery: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub metrics: Metrics,
    pub log: Vec<LogRecord>,
    pub pool: ParcelPool,
}

/// Recompute metrics from the event log alone; must agree with the engine's
/// own tallies on every run.
pub fn collect_metrics(log: &[LogRecord], pool: &ParcelPool) -> Metrics {
    let mut m = Metrics::empty(pool.len());
    // Cost of each parcel's final assignment (re-assignment cannot happen,
    // but the map keeps the recomputation independent of that invariant).
    let mut assigned_cost = vec![0.0; pool.len()];
    let mut assigned_kind: Vec<Option<AgentKind>> = vec![None; pool.len()];
    let mut time_sum = 0.0;
    for rec in log {
        match &rec.event {
            LogEvent::Assigned { parcel, agent, monetized_cost, .. } => {
                assigned_cost[parcel.0 as usize] = *monetized_cost;
                assigned_kind[parcel.0 as usize] = Some(agent.kind);
            }
            LogEvent::Delivered { parcel, agent } => {
                m.delivered += 1;
                let k = agent.kind.rank() as usize;
                m.delivered_by_kind[k] += 1;
                m.cost_by_kind[k] += assigned_cost[parcel.0 as usize];
                time_sum += rec.t - pool.get(*parcel).t_o;
            }
            LogEvent::Failed { .. } => m.failed += 1,
            _ => {}
        }
    }
    m.total_cost = m.cost_by_kind.iter().sum();
    if m.delivered > 0 {
        m.mean_delivery_time = time_sum / m.delivered as f64;
    }
    let gv = AgentKind::Gv.rank() as usize;
    if m.delivered_by_kind[gv] > 0 {
        m.gv_price_per_delivery = m.cost_by_kind[gv] / m.delivered_by_kind[gv] as f64;
    }
    m
}

struct Engine<'a> {
    params: &'a SimParams,
    area: &'a ServiceArea,
    policy: &'a Policy,
    reg: AgentRegistry,
    pool: ParcelPool,
    heap: BinaryHeap<Event>,
    seq: u64,
    uav_versions: Vec<u64>,
    courier_versions: Vec<u64>,
    gv_versions: Vec<u64>,
    gv_next_trip: Vec<usize>,
    gv_schedules: Vec<GvSchedule>,
    pending: Vec<ParcelId>,
    /// Monetized cost of each parcel's latest assignment.
    assigned_cost: Vec<f64>,
    retry_scheduled: bool,
    collect_samples: bool,
    samples: Vec<(AgentKind, crate::preference::LabeledSample)>,
    log: Vec<LogRecord>,
    metrics: Metrics,
    time_sum: f64,
}

impl<'a> Engine<'a> {
    fn push(&mut self, t: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event { t, seq: self.seq, kind });
    }

    fn log(&mut self, t: f64, event: LogEvent) {
        self.log.push(LogRecord { t, event });
    }

    fn route_version(&self, agent: AgentId) -> u64 {
        match agent.kind {
            AgentKind::Uav => self.uav_versions[agent.index as usize],
            AgentKind::Courier => self.courier_versions[agent.index as usize],
            AgentKind::Gv => unreachable!(),
        }
    }

    fn bump_route_version(&mut self, agent: AgentId) -> u64 {
        let v = match agent.kind {
            AgentKind::Uav => &mut self.uav_versions[agent.index as usize],
            AgentKind::Courier => &mut self.courier_versions[agent.index as usize],
            AgentKind::Gv => unreachable!(),
        };
        *v += 1;
        *v
    }

    /// Adjust a scheduled trip to the GV's availability: it can only start
    /// once the GV has reached the origin.
    fn adjusted_trip(&self, gv: u32, trip: GvTrip, now: f64) -> GvTrip {
        let loc = self.reg.gvs[gv as usize].loc;
        let speed = self.reg.gvs[gv as usize].speed;
        let start = trip.start.max(now + manhattan_distance(loc, trip.origin) / speed);
        let len = manhattan_distance(trip.origin, trip.destination);
        GvTrip { start, scheduled_end: start + len / speed, ..trip }
    }

    /// Install the GV's next scheduled trip (if any) and queue its start.
    fn schedule_next_trip(&mut self, gv: u32, now: f64) {
        let idx = self.gv_next_trip[gv as usize];
        let next = self.gv_schedules[gv as usize].trips.get(idx).copied();
        match next {
            Some(trip) => {
                let trip = self.adjusted_trip(gv, trip, now);
                self.reg.gvs[gv as usize].trip = Some(trip);
                let version = self.gv_versions[gv as usize];
                self.push(trip.start, EventKind::GvTripStart { gv, version });
            }
            None => self.reg.gvs[gv as usize].trip = None,
        }
    }

    fn fail_parcel(&mut self, id: ParcelId, now: f64) {
        self.pool.get_mut(id).status = ParcelStatus::Failed;
        self.metrics.failed += 1;
        self.log(now, LogEvent::Failed { parcel: id });
    }

    /// Fastest conceivable remaining service time; if even that misses the
    /// deadline the parcel can be failed immediately.
    fn provably_undeliverable(&self, id: ParcelId, now: f64) -> bool {
        let p = self.pool.get(id);
        let fastest = euclidean_distance(p.l_o, p.l_s) / self.params.uav_speed;
        now + fastest > p.t_o + self.params.delta_t + 1e-9
    }

    /// Dispatch `candidates` (a subset of the pending set): new arrivals are
    /// tried alone; retry waves re-try everything still pending.
    fn run_dispatch(&mut self, candidates: Vec<ParcelId>, now: f64) {
        let mut batch = Vec::new();
        for id in candidates {
            if self.provably_undeliverable(id, now) {
                self.pending.retain(|&p| p != id);
                self.fail_parcel(id, now);
            } else {
                batch.push(id);
            }
        }
        let outcome = dispatch_batch(
            self.policy,
            &batch,
            &mut self.reg,
            &mut self.pool,
            now,
            self.params,
            self.area,
            self.collect_samples,
        );
        self.samples.extend(outcome.samples);
        for plan in &outcome.committed {
            self.after_commit(plan, now);
        }
        self.pending.retain(|&id| self.pool.get(id).status == ParcelStatus::Pending);
        if !self.pending.is_empty() && !self.retry_scheduled {
            let t = now + self.params.retry_interval;
            if t <= self.params.horizon {
                self.retry_scheduled = true;
                self.push(t, EventKind::DispatchRetry);
            }
        }
    }

    fn after_commit(&mut self, plan: &crate::feasibility::CandidatePlan, now: f64) {
        self.assigned_cost[plan.parcel.0 as usize] = plan.monetized_cost(self.params);
        self.log(
            now,
            LogEvent::Assigned {
                parcel: plan.parcel,
                agent: plan.agent,
                cost: plan.cost,
                monetized_cost: plan.monetized_cost(self.params),
                gv_mode: plan.gv_mode,
            },
        );
        match &plan.body {
            crate::feasibility::CandidateBody::Route(route) => {
                let version = self.bump_route_version(plan.agent);
                if route.waypoints.len() > 1 {
                    let t = route.waypoints[1].t.max(now);
                    self.push(
                        t,
                        EventKind::WaypointArrival { agent: plan.agent, version, index: 1 },
                    );
                }
            }
            crate::feasibility::CandidateBody::Gv(gv_plan) => {
                let gv = plan.agent.index;
                self.gv_versions[gv as usize] += 1;
                let version = self.gv_versions[gv as usize];
                self.push(
                    gv_plan.pickup_time,
                    EventKind::GvPickup { gv, version, parcel: plan.parcel },
                );
                self.push(
                    gv_plan.dropoff_time,
                    EventKind::GvDropoff { gv, version, parcel: plan.parcel },
                );
                self.push(
                    gv_plan.free_time,
                    EventKind::GvFree {
                        gv,
                        version,
                        consumed_trip: gv_plan.mode != GvDeliveryMode::Unoccupied,
                    },
                );
            }
        }
    }

    fn deliver(&mut self, parcel: ParcelId, agent: AgentId, monetized_cost: f64, t: f64) {
        let p = self.pool.get_mut(parcel);
        debug_assert!(matches!(p.status, ParcelStatus::Assigned(a) if a == agent));
        p.status = ParcelStatus::Delivered(t);
        let k = agent.kind.rank() as usize;
        self.metrics.delivered += 1;
        self.metrics.delivered_by_kind[k] += 1;
        self.metrics.cost_by_kind[k] += monetized_cost;
        self.time_sum += t - self.pool.get(parcel).t_o;
        self.log(t, LogEvent::Delivered { parcel, agent });
    }

    fn on_waypoint(&mut self, agent: AgentId, version: u64, index: usize, t: f64) {
        if self.route_version(agent) != version {
            return;
        }
        let route = match agent.kind {
            AgentKind::Uav => self.reg.uavs[agent.index as usize].route.clone(),
            AgentKind::Courier => self.reg.couriers[agent.index as usize].route.clone(),
            AgentKind::Gv => unreachable!(),
        };
        let w = &route.waypoints[index];
        match agent.kind {
            AgentKind::Uav => {
                let u = &mut self.reg.uavs[agent.index as usize];
                u.loc = w.loc;
                if let Some(e) = w.energy_after {
                    u.e_remaining = e;
                }
            }
            AgentKind::Courier => self.reg.couriers[agent.index as usize].loc = w.loc,
            AgentKind::Gv => unreachable!(),
        }
        match w.action {
            WaypointAction::Pickup => {
                for &id in &w.parcels {
                    self.log(t, LogEvent::PickedUp { parcel: id, agent });
                }
            }
            WaypointAction::Dropoff => {
                for &id in &w.parcels {
                    // The parcel's assignment cost was logged at commit; the
                    // engine tally needs it per delivering parcel. A courier
                    // pays per parcel; a UAV's route-time cost was attributed
                    // to the parcel that triggered the re-plan.
                    let monetized = self.assigned_monetized(id);
                    self.deliver(id, agent, monetized, t);
                }
            }
            WaypointAction::Depot => {}
        }
        if index + 1 < route.waypoints.len() {
            let tn = route.waypoints[index + 1].t.max(t);
            self.push(tn, EventKind::WaypointArrival { agent, version, index: index + 1 });
        } else {
            // Plan complete: idle at the final location. UAVs swap batteries
            // at the station, returning to full charge immediately.
            match agent.kind {
                AgentKind::Uav => {
                    let u = &mut self.reg.uavs[agent.index as usize];
                    u.e_remaining = u.e_max;
                    u.loc = u.station_loc;
                    u.route = RoutePlan::anchored(t, u.station_loc);
                }
                AgentKind::Courier => {
                    let c = &mut self.reg.couriers[agent.index as usize];
                    c.route = RoutePlan::anchored(t, c.loc);
                }
                AgentKind::Gv => unreachable!(),
            }
        }
    }

    /// Monetized cost recorded when `parcel` was last assigned.
    fn assigned_monetized(&self, parcel: ParcelId) -> f64 {
        self.assigned_cost[parcel.0 as usize]
    }

    fn on_gv_free(&mut self, gv: u32, version: u64, consumed_trip: bool, t: f64) {
        if self.gv_versions[gv as usize] != version {
            return;
        }
        let plan = self.reg.gvs[gv as usize].active_delivery.take();
        if let Some(plan) = plan {
            self.reg.gvs[gv as usize].loc = plan.free_loc;
        }
        self.reg.gvs[gv as usize].occupied = false;
        self.gv_versions[gv as usize] += 1;
        if consumed_trip {
            self.gv_next_trip[gv as usize] += 1;
            self.log(t, LogEvent::TripEnded { gv });
        }
        self.schedule_next_trip(gv, t);
    }

    fn on_trip_start(&mut self, gv: u32, version: u64, t: f64) {
        if self.gv_versions[gv as usize] != version {
            return;
        }
        let Some(trip) = self.reg.gvs[gv as usize].trip else { return };
        self.reg.gvs[gv as usize].occupied = true;
        self.reg.gvs[gv as usize].loc = trip.origin;
        self.log(t, LogEvent::TripStarted { gv });
        self.push(trip.scheduled_end, EventKind::GvTripEnd { gv, version });
    }

    fn on_trip_end(&mut self, gv: u32, version: u64, t: f64) {
        if self.gv_versions[gv as usize] != version {
            return;
        }
        let Some(trip) = self.reg.gvs[gv as usize].trip else { return };
        self.reg.gvs[gv as usize].occupied = false;
        self.reg.gvs[gv as usize].loc = trip.destination;
        self.gv_next_trip[gv as usize] += 1;
        self.gv_versions[gv as usize] += 1;
        self.log(t, LogEvent::TripEnded { gv });
        self.schedule_next_trip(gv, t);
    }

    fn run(&mut self) {
        while let Some(ev) = self.heap.pop() {
            let t = ev.t;
            match ev.kind {
                EventKind::OrderArrival(id) => {
                    self.log(t, LogEvent::Ordered { parcel: id });
                    self.pending.push(id);
                    self.run_dispatch(vec![id], t);
                }
                EventKind::DispatchRetry => {
                    self.retry_scheduled = false;
                    let all = self.pending.clone();
                    self.run_dispatch(all, t);
                }
                EventKind::WaypointArrival { agent, version, index } => {
                    self.on_waypoint(agent, version, index, t);
                }
                EventKind::GvPickup { gv, version, parcel } => {
                    if self.gv_versions[gv as usize] == version {
                        self.log(t, LogEvent::PickedUp { parcel, agent: AgentId::gv(gv) });
                    }
                }
                EventKind::GvDropoff { gv, version, parcel } => {
                    if self.gv_versions[gv as usize] == version {
                        let monetized = self.assigned_monetized(parcel);
                        self.deliver(parcel, AgentId::gv(gv), monetized, t);
                    }
                }
                EventKind::GvFree { gv, version, consumed_trip } => {
                    self.on_gv_free(gv, version, consumed_trip, t);
                }
                EventKind::GvTripStart { gv, version } => self.on_trip_start(gv, version, t),
                EventKind::GvTripEnd { gv, version } => self.on_trip_end(gv, version, t),
                EventKind::SimEnd => {
                    let still_pending = std::mem::take(&mut self.pending);
                    for id in still_pending {
                        self.fail_parcel(id, t);
                    }
                }
            }
        }
    }
}

/// Run one full day under the given policy. Deterministic: identical inputs
/// give identical results.
pub fn run_simulation(scenario: &Scenario, policy: &Policy, params: &SimParams) -> SimResult {
    run_simulation_collecting(scenario, policy, params, false).0
}

/// As [`run_simulation`], additionally returning per-candidate training
/// samples labeled by what the policy committed.
pub fn run_simulation_collecting(
    scenario: &Scenario,
    policy: &Policy,
    params: &SimParams,
    collect_samples: bool,
) -> (SimResult, Vec<(AgentKind, crate::preference::LabeledSample)>) {
    let mut reg = AgentRegistry::default();
    for (s, &loc) in scenario.uav_stations.iter().enumerate() {
        for _ in 0..scenario.uavs_per_station {
            let index = reg.uavs.len() as u32;
            reg.uavs.push(UavState::idle_at_station(index, s, loc, params));
        }
    }
    for (s, &loc) in scenario.courier_stations.iter().enumerate() {
        for _ in 0..scenario.couriers_per_station {
            let index = reg.couriers.len() as u32;
            reg.couriers.push(CourierState::idle_at_station(index, s, loc, params));
        }
    }
    for (i, sched) in scenario.gv_schedules.iter().enumerate() {
        reg.gvs.push(GvState::idle(i as u32, sched.start_loc, params));
    }

    let pool = ParcelPool::new(scenario.parcels.clone());
    let total = pool.len();
    let mut engine = Engine {
        params,
        area: &scenario.area,
        policy,
        uav_versions: vec![0; reg.uavs.len()],
        courier_versions: vec![0; reg.couriers.len()],
        gv_versions: vec![0; reg.gvs.len()],
        gv_next_trip: vec![0; reg.gvs.len()],
        gv_schedules: scenario.gv_schedules.clone(),
        reg,
        pool,
        heap: BinaryHeap::new(),
        seq: 0,
        pending: Vec::new(),
        assigned_cost: vec![0.0; total],
        retry_scheduled: false,
        collect_samples,
        samples: Vec::new(),
        log: Vec::new(),
        metrics: Metrics::empty(total),
        time_sum: 0.0,
    };

    for p in &scenario.parcels {
        engine.push(p.t_o, EventKind::OrderArrival(p.id));
    }
    for gv in 0..engine.gv_schedules.len() as u32 {
        engine.schedule_next_trip(gv, 0.0);
    }
    engine.push(params.horizon, EventKind::SimEnd);

    engine.run();

    let mut metrics = engine.metrics.clone();
    metrics.total_cost = metrics.cost_by_kind.iter().sum();
    if metrics.delivered > 0 {
        metrics.mean_delivery_time = engine.time_sum / metrics.delivered as f64;
    }
    let gvk = AgentKind::Gv.rank() as usize;
    if metrics.delivered_by_kind[gvk] > 0 {
        metrics.gv_price_per_delivery =
            metrics.cost_by_kind[gvk] / metrics.delivered_by_kind[gvk] as f64;
    }
    (
        SimResult { metrics, log: engine.log, pool: engine.pool },
        engine.samples,
    )
}
