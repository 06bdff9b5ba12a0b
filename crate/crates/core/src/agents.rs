//! Domain model: parcels, waypoints, routes, and the three agent kinds.

use crate::geo::Location;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParcelId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Uav,
    Courier,
    Gv,
}

impl AgentKind {
    /// Tie-break rank: UAV before courier before GV.
    pub fn rank(self) -> u8 {
        match self {
            AgentKind::Uav => 0,
            AgentKind::Courier => 1,
            AgentKind::Gv => 2,
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AgentKind::Uav => write!(f, "uav"),
            AgentKind::Courier => write!(f, "courier"),
            AgentKind::Gv => write!(f, "gv"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub kind: AgentKind,
    pub index: u32,
}

impl AgentId {
    pub fn uav(index: u32) -> Self {
        AgentId { kind: AgentKind::Uav, index }
    }
    pub fn courier(index: u32) -> Self {
        AgentId { kind: AgentKind::Courier, index }
    }
    pub fn gv(index: u32) -> Self {
        AgentId { kind: AgentKind::Gv, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParcelStatus {
    Pending,
    Assigned(AgentId),
    /// Delivered at the carried shipping timestamp.
    Delivered(f64),
    Failed,
}

/// An order: ordering time, pickup, dropoff, weight, lifecycle state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parcel {
    pub id: ParcelId,
    /// Ordering timestamp, seconds since scenario start.
    pub t_o: f64,
    /// Pickup (restaurant) location.
    pub l_o: Location,
    /// Dropoff (destination cabinet) location.
    pub l_s: Location,
    pub weight: f64,
    pub status: ParcelStatus,
}

impl Parcel {
    pub fn new(id: ParcelId, t_o: f64, l_o: Location, l_s: Location, weight: f64) -> Self {
        assert!(weight > 0.0, "parcel weight must be positive");
        Parcel { id, t_o, l_o, l_s, weight, status: ParcelStatus::Pending }
    }

    /// Delivery time t(p) = t_s - t_o, if delivered.
    pub fn delivery_time(&self) -> Option<f64> {
        match self.status {
            ParcelStatus::Delivered(t_s) => Some(t_s - self.t_o),
            _ => None,
        }
    }
}

/// Parcel storage indexed by id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParcelPool {
    pub parcels: Vec<Parcel>,
}

impl ParcelPool {
    pub fn new(parcels: Vec<Parcel>) -> Self {
        for (i, p) in parcels.iter().enumerate() {
            assert_eq!(p.id.0 as usize, i, "parcel ids must be dense and ordered");
        }
        ParcelPool { parcels }
    }

    pub fn get(&self, id: ParcelId) -> &Parcel {
        &self.parcels[id.0 as usize]
    }

    pub fn get_mut(&mut self, id: ParcelId) -> &mut Parcel {
        &mut self.parcels[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.parcels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parcels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaypointAction {
    /// Route anchor or station return; carries no parcels.
    Depot,
    Pickup,
    Dropoff,
}

impl WaypointAction {
    /// +1 pickup, -1 dropoff, 0 for depot stops.
    pub fn mu(self) -> i8 {
        match self {
            WaypointAction::Pickup => 1,
            WaypointAction::Dropoff => -1,
            WaypointAction::Depot => 0,
        }
    }
}

/// One stop on an agent route with the state after serving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub loc: Location,
    pub action: WaypointAction,
    pub parcels: Vec<ParcelId>,
    /// Parcel count (courier) or carried kilograms (UAV) after this stop.
    pub payload_after: f64,
    /// Remaining joules after this stop (UAV only).
    pub energy_after: Option<f64>,
}

impl Waypoint {
    pub fn depot(t: f64, loc: Location) -> Self {
        Waypoint {
            t,
            loc,
            action: WaypointAction::Depot,
            parcels: Vec::new(),
            payload_after: 0.0,
            energy_after: None,
        }
    }
}

/// Ordered waypoint sequence; `waypoints[0]` anchors the plan at the agent's
/// position when it was made.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoutePlan {
    pub waypoints: Vec<Waypoint>,
}

impl RoutePlan {
    pub fn anchored(t: f64, loc: Location) -> Self {
        RoutePlan { waypoints: vec![Waypoint::depot(t, loc)] }
    }

    pub fn is_idle(&self) -> bool {
        self.waypoints.len() <= 1
    }

    pub fn completion_time(&self) -> f64 {
        self.waypoints.last().map(|w| w.t).unwrap_or(0.0)
    }

    /// Interpolated position at `now` assuming straight legs between stops.
    pub fn position_at(&self, now: f64) -> Location {
        let wps = &self.waypoints;
        if wps.is_empty() {
            return Location::new(0.0, 0.0);
        }
        if now <= wps[0].t {
            return wps[0].loc;
        }
        for pair in wps.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if now <= b.t {
                let span = b.t - a.t;
                if span <= 0.0 {
                    return b.loc;
                }
                let f = ((now - a.t) / span).clamp(0.0, 1.0);
                return Location::new(
                    a.loc.x + f * (b.loc.x - a.loc.x),
                    a.loc.y + f * (b.loc.y - a.loc.y),
                );
            }
        }
        wps.last().unwrap().loc
    }

    /// Parcels picked up but not yet dropped off strictly after `now`. The
    /// anchor waypoint lists parcels already onboard when the plan was made.
    pub fn onboard_at(&self, now: f64) -> Vec<ParcelId> {
        let mut onboard = Vec::new();
        for (i, w) in self.waypoints.iter().enumerate() {
            if w.t > now {
                break;
            }
            match w.action {
                WaypointAction::Depot if i == 0 => onboard.extend(w.parcels.iter().copied()),
                WaypointAction::Pickup => onboard.extend(w.parcels.iter().copied()),
                WaypointAction::Dropoff => onboard.retain(|id| !w.parcels.contains(id)),
                _ => {}
            }
        }
        onboard
    }

    /// Action waypoints strictly after `now`, in order.
    pub fn pending_actions_after(&self, now: f64) -> Vec<Waypoint> {
        self.waypoints
            .iter()
            .filter(|w| w.t > now && w.action != WaypointAction::Depot)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: AgentId,
    pub station: usize,
    pub station_loc: Location,
    pub loc: Location,
    pub speed: f64,
    pub e_max: f64,
    pub e_remaining: f64,
    pub alpha: f64,
    pub route: RoutePlan,
}

impl UavState {
    pub fn idle_at_station(index: u32, station: usize, loc: Location, params: &crate::config::SimParams) -> Self {
        UavState {
            id: AgentId::uav(index),
            station,
            station_loc: loc,
            loc,
            speed: params.uav_speed,
            e_max: params.e_max,
            e_remaining: params.e_max,
            alpha: params.alpha,
            route: RoutePlan::anchored(0.0, loc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourierState {
    pub id: AgentId,
    pub station: usize,
    pub loc: Location,
    pub speed: f64,
    pub n_max: u32,
    pub route: RoutePlan,
}

impl CourierState {
    pub fn idle_at_station(index: u32, station: usize, loc: Location, params: &crate::config::SimParams) -> Self {
        CourierState {
            id: AgentId::courier(index),
            station,
            loc,
            speed: params.courier_speed,
            n_max: params.n_max,
            route: RoutePlan::anchored(0.0, loc),
        }
    }
}

/// A GV's original task: passenger trip with origin, destination, and times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GvTrip {
    pub origin: Location,
    pub destination: Location,
    pub start: f64,
    pub scheduled_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GvDeliveryMode {
    OdPair,
    Halfway,
    Unoccupied,
}

impl std::fmt::Display for GvDeliveryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GvDeliveryMode::OdPair => write!(f, "od-pair"),
            GvDeliveryMode::Halfway => write!(f, "halfway"),
            GvDeliveryMode::Unoccupied => write!(f, "unoccupied"),
        }
    }
}

/// A fully timed single-parcel GV delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvDeliveryPlan {
    pub parcel: ParcelId,
    pub mode: GvDeliveryMode,
    pub pickup_time: f64,
    pub dropoff_time: f64,
    /// When the GV becomes idle again, and where.
    pub free_time: f64,
    pub free_loc: Location,
    /// Pickup detour (plus post-trip dropoff leg for the OD-pair case), meters.
    pub detour: f64,
    /// Mid-trip dropoff detour, meters (Halfway only).
    pub dropoff_detour: f64,
    /// Actual trip start/end after delivery delays, if a trip is involved.
    pub trip_start_actual: Option<f64>,
    pub trip_end_actual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvState {
    pub id: AgentId,
    /// Upcoming or in-progress original task, if any.
    pub trip: Option<GvTrip>,
    /// True iff an original task is in progress.
    pub occupied: bool,
    pub loc: Location,
    pub speed: f64,
    pub active_delivery: Option<GvDeliveryPlan>,
}

impl GvState {
    pub fn idle(index: u32, loc: Location, params: &crate::config::SimParams) -> Self {
        GvState {
            id: AgentId::gv(index),
            trip: None,
            occupied: false,
            loc,
            speed: params.gv_speed,
            active_delivery: None,
        }
    }
}

/// Snapshot reported to the scheduling center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRecord {
    pub agent: AgentId,
    pub timestamp: f64,
    pub loc: Location,
    /// Remaining energy (UAV), parcel count (courier), or occupancy flag (GV).
    pub load: f64,
    /// Stops remaining on the current plan.
    pub stops_remaining: usize,
}

pub enum AgentSnapshot<'a> {
    Uav(&'a UavState),
    Courier(&'a CourierState),
    Gv(&'a GvState),
}

/// Build a status record for an agent at `now`. UAVs and couriers report on
/// waypoint arrival; GVs when a new trip is determined or they become idle.
pub fn status_report(agent: AgentSnapshot<'_>, now: f64) -> StatusRecord {
    match agent {
        AgentSnapshot::Uav(u) => StatusRecord {
            agent: u.id,
            timestamp: now,
            loc: u.route.position_at(now),
            load: u.e_remaining,
            stops_remaining: u.route.waypoints.iter().filter(|w| w.t > now).count(),
        },
        AgentSnapshot::Courier(c) => StatusRecord {
            agent: c.id,
            timestamp: now,
            loc: c.route.position_at(now),
            load: c.route.onboard_at(now).len() as f64,
            stops_remaining: c.route.waypoints.iter().filter(|w| w.t > now).count(),
        },
        AgentSnapshot::Gv(g) => StatusRecord {
            agent: g.id,
            timestamp: now,
            loc: g.loc,
            load: if g.occupied { 1.0 } else { 0.0 },
            stops_remaining: usize::from(g.active_delivery.is_some()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimParams;
    use approx::assert_relative_eq;

    #[test]
    fn courier_status_copies_payload() {
        let params = SimParams::default();
        let mut c = CourierState::idle_at_station(0, 0, Location::new(0.0, 0.0), &params);
        c.route = RoutePlan {
            waypoints: vec![
                Waypoint::depot(0.0, Location::new(0.0, 0.0)),
                Waypoint {
                    t: 100.0,
                    loc: Location::new(100.0, 0.0),
                    action: WaypointAction::Pickup,
                    parcels: vec![ParcelId(0), ParcelId(1)],
                    payload_after: 2.0,
                    energy_after: None,
                },
                Waypoint {
                    t: 400.0,
                    loc: Location::new(400.0, 0.0),
                    action: WaypointAction::Dropoff,
                    parcels: vec![ParcelId(0)],
                    payload_after: 1.0,
                    energy_after: None,
                },
            ],
        };
        let rec = status_report(AgentSnapshot::Courier(&c), 150.0);
        assert_eq!(rec.load, 2.0);
        let rec = status_report(AgentSnapshot::Courier(&c), 450.0);
        assert_eq!(rec.load, 1.0);
    }

    #[test]
    fn gv_status_reports_occupancy() {
        let params = SimParams::default();
        let mut g = GvState::idle(3, Location::new(10.0, 10.0), &params);
        g.occupied = true;
        let rec = status_report(AgentSnapshot::Gv(&g), 42.0);
        assert_eq!(rec.load, 1.0);
        assert_eq!(rec.agent, AgentId::gv(3));
    }

    #[test]
    fn uav_status_carries_energy() {
        let params = SimParams::default();
        let mut u = UavState::idle_at_station(1, 0, Location::new(0.0, 0.0), &params);
        u.e_remaining = 0.4 * u.e_max;
        let rec = status_report(AgentSnapshot::Uav(&u), 0.0);
        assert_relative_eq!(rec.load, 0.4 * u.e_max);
    }

    #[test]
    fn position_interpolates_between_waypoints() {
        let mut plan = RoutePlan::anchored(0.0, Location::new(0.0, 0.0));
        plan.waypoints.push(Waypoint::depot(100.0, Location::new(100.0, 0.0)));
        let p = plan.position_at(50.0);
        assert_relative_eq!(p.x, 50.0);
        assert_relative_eq!(plan.position_at(200.0).x, 100.0);
    }
}
