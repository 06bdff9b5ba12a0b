//! Route construction, feasibility checking, and delivery-cost computation
//! for a candidate parcel on each agent kind.
//!
//! Planners are pure functions of (agent snapshot, parcel, now, config): they
//! return a fully timed candidate plan or the constraint that blocks it. The
//! [`check`] submodule re-verifies plans with independent arithmetic.

use crate::agents::{
    AgentId, CourierState, GvDeliveryMode, GvDeliveryPlan, GvState, Parcel, ParcelId, ParcelPool,
    RoutePlan, UavState, Waypoint, WaypointAction,
};
use crate::config::{EnergyModelParams, SimParams};
use crate::geo::{flight_distance, manhattan_distance, GeoError, Location, ServiceArea};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a candidate parcel cannot be served by an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Infeasible {
    #[error("energy reserve would be violated")]
    Energy,
    #[error("a delivery deadline would be missed")]
    Deadline,
    #[error("courier payload limit would be exceeded")]
    Payload,
    #[error("GV detour limit exceeded")]
    Detour,
    #[error("parcel cannot be picked up within the pickup window")]
    PickupWindow,
    #[error("GV already has an active delivery or in-progress task")]
    Busy,
    #[error("no flight route between waypoints")]
    NoRoute,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parcel weight must be non-negative, got {0}")]
    NegativeWeight(f64),
}

/// Candidate plan body: a re-planned route (UAV/courier) or a timed GV run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CandidateBody {
    Route(RoutePlan),
    Gv(GvDeliveryPlan),
}

/// An evaluated (agent, parcel) option with its delivery cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePlan {
    pub agent: AgentId,
    pub parcel: ParcelId,
    pub body: CandidateBody,
    /// CNY for couriers and GVs; added route seconds for UAVs.
    pub cost: f64,
    pub pickup_time: f64,
    pub gv_mode: Option<GvDeliveryMode>,
}

impl CandidatePlan {
    /// Cost on a common monetary scale; UAV seconds are monetized at the
    /// configured rate.
    pub fn monetized_cost(&self, params: &SimParams) -> f64 {
        match self.agent.kind {
            crate::agents::AgentKind::Uav => self.cost * params.uav_cost_per_second,
            _ => self.cost,
        }
    }
}

/// Energy draw in watts while carrying `weight` kilograms.
pub fn power_rate(weight: f64, params: &EnergyModelParams) -> Result<f64, ModelError> {
    if weight < 0.0 {
        return Err(ModelError::NegativeWeight(weight));
    }
    Ok(params.slope * weight + params.intercept)
}

fn leg_rate(weight: f64, params: &EnergyModelParams, free_empty_legs: bool) -> f64 {
    if free_empty_legs && weight == 0.0 {
        0.0
    } else {
        params.slope * weight + params.intercept
    }
}

/// Total joules to fly `route`, summing per-leg rate x leg time, where the
/// rate uses the weight carried when departing each waypoint. Also rewrites
/// `energy_after` on every waypoint starting from `start_energy`.
pub fn path_energy(
    route: &mut RoutePlan,
    speed: f64,
    area: &ServiceArea,
    params: &EnergyModelParams,
    free_empty_legs: bool,
    start_energy: f64,
) -> Result<f64, GeoError> {
    let n = route.waypoints.len();
    assert!(n >= 2, "path_energy needs at least two waypoints");
    let mut total = 0.0;
    let mut energy = start_energy;
    route.waypoints[0].energy_after = Some(energy);
    for i in 0..n - 1 {
        let w = route.waypoints[i].payload_after;
        let dist = flight_distance(route.waypoints[i].loc, route.waypoints[i + 1].loc, area)?;
        let used = leg_rate(w, params, free_empty_legs) * dist / speed;
        total += used;
        energy -= used;
        route.waypoints[i + 1].energy_after = Some(energy);
    }
    Ok(total)
}

/// A pickup or dropoff to be sequenced during insertion.
#[derive(Debug, Clone)]
struct Stop {
    loc: Location,
    action: WaypointAction,
    parcels: Vec<ParcelId>,
}

fn stops_from_route(route: &RoutePlan, now: f64) -> Vec<Stop> {
    route
        .pending_actions_after(now)
        .into_iter()
        .map(|w| Stop { loc: w.loc, action: w.action, parcels: w.parcels })
        .collect()
}

/// Insert pickup/dropoff of `parcel` into `base` at positions (i, j).
fn sequence_with_insertion(base: &[Stop], parcel: &Parcel, i: usize, j: usize) -> Vec<Stop> {
    let mut seq = Vec::with_capacity(base.len() + 2);
    seq.extend_from_slice(&base[..i]);
    seq.push(Stop { loc: parcel.l_o, action: WaypointAction::Pickup, parcels: vec![parcel.id] });
    seq.extend_from_slice(&base[i..j]);
    seq.push(Stop { loc: parcel.l_s, action: WaypointAction::Dropoff, parcels: vec![parcel.id] });
    seq.extend_from_slice(&base[j..]);
    seq
}

struct Propagated {
    route: RoutePlan,
    completion: f64,
    pickup_time: f64,
}

/// Cheapest insertion of the parcel's pickup and dropoff into the UAV's
/// remaining route, keeping the station return last. Feasible only if the
/// energy reserve and every onboard deadline survive re-propagation from
/// `now`.
pub fn plan_uav_insertion(
    uav: &UavState,
    parcel: &Parcel,
    now: f64,
    pool: &ParcelPool,
    params: &SimParams,
    area: &ServiceArea,
) -> Result<CandidatePlan, Infeasible> {
    let anchor_loc = uav.route.position_at(now);
    let onboard = uav.route.onboard_at(now);
    let onboard_weight: f64 = onboard.iter().map(|&id| pool.get(id).weight).sum();
    let base = stops_from_route(&uav.route, now);
    let old_completion = uav.route.completion_time().max(now);

    let mut best: Option<(f64, Propagated)> = None;
    let mut best_reject: Option<(f64, Infeasible)> = None;

    for i in 0..=base.len() {
        for j in i..=base.len() {
            let seq = sequence_with_insertion(&base, parcel, i, j);
            match propagate_uav(
                uav, parcel, &seq, now, anchor_loc, onboard_weight, &onboard, pool, params, area,
            ) {
                Ok(prop) => {
                    let added = prop.completion - old_completion;
                    if best.as_ref().map_or(true, |(b, _)| added < *b - 1e-12) {
                        best = Some((added, prop));
                    }
                }
                Err((t_reach, why)) => {
                    if best_reject.as_ref().map_or(true, |(b, _)| t_reach < *b - 1e-12) {
                        best_reject = Some((t_reach, why));
                    }
                }
            }
        }
    }

    match best {
        Some((added, prop)) => Ok(CandidatePlan {
            agent: uav.id,
            parcel: parcel.id,
            body: CandidateBody::Route(prop.route),
            cost: added.max(0.0),
            pickup_time: prop.pickup_time,
            gv_mode: None,
        }),
        None => Err(best_reject.map(|(_, w)| w).unwrap_or(Infeasible::Deadline)),
    }
}

#[allow(clippy::too_many_arguments)]
fn propagate_uav(
    uav: &UavState,
    parcel: &Parcel,
    seq: &[Stop],
    now: f64,
    anchor_loc: Location,
    onboard_weight: f64,
    onboard: &[ParcelId],
    pool: &ParcelPool,
    params: &SimParams,
    area: &ServiceArea,
) -> Result<Propagated, (f64, Infeasible)> {
    let e_now = uav.route.position_at(now); // position known; energy below
    let _ = e_now;
    let mut waypoints = Vec::with_capacity(seq.len() + 2);
    let mut anchor = Waypoint::depot(now, anchor_loc);
    anchor.payload_after = onboard_weight;
    anchor.parcels = onboard.to_vec();
    waypoints.push(anchor);

    let mut t = now;
    let mut loc = anchor_loc;
    let mut weight = onboard_weight;
    let mut carried: Vec<ParcelId> = onboard.to_vec();
    let mut used_energy = 0.0;
    let mut pickup_time = f64::INFINITY;

    for stop in seq {
        let dist = flight_distance(loc, stop.loc, area).map_err(|_| (t, Infeasible::NoRoute))?;
        used_energy += leg_rate(weight, &params.energy_model, params.free_empty_legs) * dist
            / uav.speed;
        t += dist / uav.speed + params.service_time;
        loc = stop.loc;
        match stop.action {
            WaypointAction::Pickup => {
                for &id in &stop.parcels {
                    carried.push(id);
                    weight += lookup_weight(id, parcel, pool);
                    if id == parcel.id {
                        pickup_time = t;
                    }
                }
            }
            WaypointAction::Dropoff => {
                for &id in &stop.parcels {
                    carried.retain(|&c| c != id);
                    weight -= lookup_weight(id, parcel, pool);
                    let deadline = lookup_order_time(id, parcel, pool) + params.delta_t;
                    if t > deadline + 1e-9 {
                        return Err((t, Infeasible::Deadline));
                    }
                }
                weight = weight.max(0.0);
            }
            WaypointAction::Depot => {}
        }
        waypoints.push(Waypoint {
            t,
            loc,
            action: stop.action,
            parcels: stop.parcels.clone(),
            payload_after: weight,
            energy_after: None,
        });
    }

    // Station return leg.
    let dist = flight_distance(loc, uav.station_loc, area).map_err(|_| (t, Infeasible::NoRoute))?;
    used_energy +=
        leg_rate(weight, &params.energy_model, params.free_empty_legs) * dist / uav.speed;
    t += dist / uav.speed;
    waypoints.push(Waypoint::depot(t, uav.station_loc));

    if uav.e_remaining - used_energy < uav.alpha * uav.e_max - 1e-9 {
        return Err((t, Infeasible::Energy));
    }

    let mut route = RoutePlan { waypoints };
    // Annotate per-waypoint remaining energy; distances already verified.
    path_energy(
        &mut route,
        uav.speed,
        area,
        &params.energy_model,
        params.free_empty_legs,
        uav.e_remaining,
    )
    .map_err(|_| (t, Infeasible::NoRoute))?;

    Ok(Propagated { route, completion: t, pickup_time })
}

fn lookup_weight(id: ParcelId, candidate: &Parcel, pool: &ParcelPool) -> f64 {
    if id == candidate.id {
        candidate.weight
    } else {
        pool.get(id).weight
    }
}

fn lookup_order_time(id: ParcelId, candidate: &Parcel, pool: &ParcelPool) -> f64 {
    if id == candidate.id {
        candidate.t_o
    } else {
        pool.get(id).t_o
    }
}

/// Courier delivery cost: rate per kilometer of the parcel's own Manhattan
/// delivery distance, independent of the insertion position.
pub fn courier_cost(parcel: &Parcel, params: &SimParams) -> f64 {
    params.courier_rate_per_km * manhattan_distance(parcel.l_o, parcel.l_s) / 1000.0
}

/// Cheapest insertion into the courier route under the payload bound and all
/// delivery deadlines; travel uses Manhattan distance at the riding speed.
pub fn plan_courier_insertion(
    courier: &CourierState,
    parcel: &Parcel,
    now: f64,
    pool: &ParcelPool,
    params: &SimParams,
) -> Result<CandidatePlan, Infeasible> {
    let anchor_loc = courier.route.position_at(now);
    let onboard = courier.route.onboard_at(now);
    let base = stops_from_route(&courier.route, now);
    let old_completion = courier.route.completion_time().max(now);

    let mut best: Option<(f64, Propagated)> = None;
    let mut best_reject: Option<(f64, Infeasible)> = None;

    for i in 0..=base.len() {
        for j in i..=base.len() {
            let seq = sequence_with_insertion(&base, parcel, i, j);
            match propagate_courier(courier, parcel, &seq, now, anchor_loc, &onboard, pool, params)
            {
                Ok(prop) => {
                    let added = prop.completion - old_completion;
                    if best.as_ref().map_or(true, |(b, _)| added < *b - 1e-12) {
                        best = Some((added, prop));
                    }
                }
                Err((t_reach, why)) => {
                    if best_reject.as_ref().map_or(true, |(b, _)| t_reach < *b - 1e-12) {
                        best_reject = Some((t_reach, why));
                    }
                }
            }
        }
    }

    match best {
        Some((_, prop)) => Ok(CandidatePlan {
            agent: courier.id,
            parcel: parcel.id,
            body: CandidateBody::Route(prop.route),
            cost: courier_cost(parcel, params),
            pickup_time: prop.pickup_time,
            gv_mode: None,
        }),
        None => Err(best_reject.map(|(_, w)| w).unwrap_or(Infeasible::Deadline)),
    }
}

#[allow(clippy::too_many_arguments)]
fn propagate_courier(
    courier: &CourierState,
    parcel: &Parcel,
    seq: &[Stop],
    now: f64,
    anchor_loc: Location,
    onboard: &[ParcelId],
    pool: &ParcelPool,
    params: &SimParams,
) -> Result<Propagated, (f64, Infeasible)> {
    let mut waypoints = Vec::with_capacity(seq.len() + 1);
    let mut anchor = Waypoint::depot(now, anchor_loc);
    anchor.payload_after = onboard.len() as f64;
    anchor.parcels = onboard.to_vec();
    waypoints.push(anchor);

    let mut t = now;
    let mut loc = anchor_loc;
    let mut count = onboard.len() as i64;
    let mut pickup_time = f64::INFINITY;

    for stop in seq {
        let dist = manhattan_distance(loc, stop.loc);
        t += dist / courier.speed + params.service_time;
        loc = stop.loc;
        count += stop.action.mu() as i64 * stop.parcels.len() as i64;
        if count > courier.n_max as i64 {
            return Err((t, Infeasible::Payload));
        }
        if stop.action == WaypointAction::Dropoff {
            for &id in &stop.parcels {
                let deadline = lookup_order_time(id, parcel, pool) + params.delta_t;
                if t > deadline + 1e-9 {
                    return Err((t, Infeasible::Deadline));
                }
            }
        }
        if stop.action == WaypointAction::Pickup && stop.parcels.contains(&parcel.id) {
            pickup_time = t;
        }
        waypoints.push(Waypoint {
            t,
            loc,
            action: stop.action,
            parcels: stop.parcels.clone(),
            payload_after: count as f64,
            energy_after: None,
        });
    }

    Ok(Propagated { route: RoutePlan { waypoints }, completion: t, pickup_time })
}

/// Evaluate the three GV cases (OD-pair, Halfway, Unoccupied) and return the
/// cheapest feasible one.
pub fn plan_gv_delivery(
    gv: &GvState,
    parcel: &Parcel,
    now: f64,
    params: &SimParams,
) -> Result<CandidatePlan, Infeasible> {
    if gv.active_delivery.is_some() || gv.occupied {
        return Err(Infeasible::Busy);
    }
    let limits = &params.gv_limits;
    let deadline = parcel.t_o + params.delta_t;
    let pickup_deadline = parcel.t_o + limits.dt_pickup;
    let mut best: Option<(f64, GvDeliveryPlan)> = None;
    let mut reject = Infeasible::Deadline;
    let consider = |cost: f64, plan: GvDeliveryPlan, best: &mut Option<(f64, GvDeliveryPlan)>| {
        if best.as_ref().map_or(true, |(c, _)| cost < *c - 1e-12) {
            *best = Some((cost, plan));
        }
    };

    // Cases involving the upcoming original task, when the pickup can still
    // happen before its (delayed) start.
    if let Some(trip) = gv.trip {
        let to_pickup = manhattan_distance(gv.loc, parcel.l_o);
        let pickup_detour = (to_pickup + manhattan_distance(parcel.l_o, trip.origin)
            - manhattan_distance(gv.loc, trip.origin))
        .max(0.0);
        let t_pu = now + to_pickup / gv.speed + params.service_time;
        let t_at_origin = t_pu + manhattan_distance(parcel.l_o, trip.origin) / gv.speed;
        let trip_start = trip.start.max(t_at_origin);
        let trip_len = manhattan_distance(trip.origin, trip.destination);

        if t_pu > pickup_deadline + 1e-9 {
            reject = Infeasible::PickupWindow;
        } else {
            // OD-pair: drop off after the trip ends; the post-trip leg counts
            // into the detour and the (doubled) price.
            let drop_leg = manhattan_distance(trip.destination, parcel.l_s);
            let d_total = pickup_detour + drop_leg;
            if d_total > limits.d_max + 1e-9 {
                reject = Infeasible::Detour;
            } else {
                let trip_end = trip_start + trip_len / gv.speed;
                let t_s = trip_end + drop_leg / gv.speed + params.service_time;
                if t_s <= deadline + 1e-9 {
                    let cost = 2.0 * params.gv_rate_per_km * d_total / 1000.0;
                    consider(
                        cost,
                        GvDeliveryPlan {
                            parcel: parcel.id,
                            mode: GvDeliveryMode::OdPair,
                            pickup_time: t_pu,
                            dropoff_time: t_s,
                            free_time: t_s,
                            free_loc: parcel.l_s,
                            detour: d_total,
                            dropoff_detour: 0.0,
                            trip_start_actual: Some(trip_start),
                            trip_end_actual: Some(trip_end),
                        },
                        &mut best,
                    );
                } else {
                    reject = Infeasible::Deadline;
                }
            }

            // Halfway: drop off mid-trip with a micro detour through l_s.
            let mid_detour = (manhattan_distance(trip.origin, parcel.l_s)
                + manhattan_distance(parcel.l_s, trip.destination)
                - trip_len)
                .max(0.0);
            if pickup_detour > limits.d_max + 1e-9 {
                reject = Infeasible::Detour;
            } else if mid_detour > limits.d_detour + 1e-9 {
                if best.is_none() {
                    reject = Infeasible::Detour;
                }
            } else {
                let t_s = trip_start
                    + manhattan_distance(trip.origin, parcel.l_s) / gv.speed
                    + params.service_time;
                let trip_end = t_s + manhattan_distance(parcel.l_s, trip.destination) / gv.speed;
                if t_s <= deadline + 1e-9 {
                    let cost =
                        2.0 * params.gv_rate_per_km * (pickup_detour + mid_detour) / 1000.0;
                    consider(
                        cost,
                        GvDeliveryPlan {
                            parcel: parcel.id,
                            mode: GvDeliveryMode::Halfway,
                            pickup_time: t_pu,
                            dropoff_time: t_s,
                            free_time: trip_end,
                            free_loc: trip.destination,
                            detour: pickup_detour,
                            dropoff_detour: mid_detour,
                            trip_start_actual: Some(trip_start),
                            trip_end_actual: Some(trip_end),
                        },
                        &mut best,
                    );
                } else if best.is_none() {
                    reject = Infeasible::Deadline;
                }
            }
        }
    }

    // Unoccupied: idle GV drives pickup -> dropoff directly. With a trip
    // scheduled later, the run must finish before the trip starts so the
    // original task is never displaced.
    {
        let to_pickup = manhattan_distance(gv.loc, parcel.l_o);
        let haul = manhattan_distance(parcel.l_o, parcel.l_s);
        let t_pu = now + to_pickup / gv.speed + params.service_time;
        let t_s = t_pu + haul / gv.speed + params.service_time;
        let clears_trip = gv.trip.map_or(true, |trip| t_s <= trip.start + 1e-9);
        if t_s <= deadline + 1e-9 && clears_trip {
            let driving = to_pickup + haul;
            let cost = params.gv_rate_per_km * driving / 1000.0;
            consider(
                cost,
                GvDeliveryPlan {
                    parcel: parcel.id,
                    mode: GvDeliveryMode::Unoccupied,
                    pickup_time: t_pu,
                    dropoff_time: t_s,
                    free_time: t_s,
                    free_loc: parcel.l_s,
                    detour: driving,
                    dropoff_detour: 0.0,
                    trip_start_actual: None,
                    trip_end_actual: None,
                },
                &mut best,
            );
        } else if best.is_none() && t_s > deadline + 1e-9 {
            reject = Infeasible::Deadline;
        }
    }

    match best {
        Some((cost, plan)) => Ok(CandidatePlan {
            agent: gv.id,
            parcel: parcel.id,
            body: CandidateBody::Gv(plan.clone()),
            cost,
            pickup_time: plan.pickup_time,
            gv_mode: Some(plan.mode),
        }),
        None => Err(reject),
    }
}

/// Independent re-verification of candidate plans. The walkers here recompute
/// times, payloads, and energy from the waypoint geometry alone and must
/// agree with the planners on every accepted plan.
pub mod check {
    use super::*;

    #[derive(Debug, Error, PartialEq)]
    pub enum Violation {
        #[error("timestamps not strictly increasing at waypoint {0}")]
        TimeOrder(usize),
        #[error("stored time diverges from recomputation at waypoint {0}")]
        TimeMismatch(usize),
        #[error("pickup/dropoff precedence broken for parcel {0:?}")]
        Precedence(ParcelId),
        #[error("deadline missed for parcel {0:?}")]
        Deadline(ParcelId),
        #[error("payload bound exceeded at waypoint {0}")]
        Payload(usize),
        #[error("energy reserve violated")]
        Energy,
        #[error("GV limit violated: {0}")]
        GvLimit(&'static str),
    }

    pub fn check_uav_route(
        route: &RoutePlan,
        uav: &UavState,
        pool: &ParcelPool,
        params: &SimParams,
        area: &ServiceArea,
    ) -> Result<(), Violation> {
        let wps = &route.waypoints;
        check_common(wps, pool, params)?;
        // Re-derive leg times from geometry.
        let mut used = 0.0;
        let mut weight: f64 = wps[0].payload_after;
        for i in 0..wps.len() - 1 {
            let dist = flight_distance(wps[i].loc, wps[i + 1].loc, area)
                .map_err(|_| Violation::GvLimit("no flight route"))?;
            let mut expect = wps[i].t + dist / uav.speed;
            if wps[i + 1].action != WaypointAction::Depot {
                expect += params.service_time;
            }
            if (expect - wps[i + 1].t).abs() > 1e-6 {
                return Err(Violation::TimeMismatch(i + 1));
            }
            used += super::leg_rate(weight, &params.energy_model, params.free_empty_legs) * dist
                / uav.speed;
            weight = wps[i + 1].payload_after;
        }
        if uav.e_remaining - used < uav.alpha * uav.e_max - 1e-6 {
            return Err(Violation::Energy);
        }
        // Route must end back at the station.
        let last = wps.last().unwrap();
        if last.action != WaypointAction::Depot
            || manhattan_distance(last.loc, uav.station_loc) > 1e-6
        {
            return Err(Violation::GvLimit("route does not end at station"));
        }
        Ok(())
    }

    pub fn check_courier_route(
        route: &RoutePlan,
        courier: &CourierState,
        pool: &ParcelPool,
        params: &SimParams,
    ) -> Result<(), Violation> {
        let wps = &route.waypoints;
        check_common(wps, pool, params)?;
        let mut count = wps[0].payload_after as i64;
        for (i, pair) in wps.windows(2).enumerate() {
            let dist = manhattan_distance(pair[0].loc, pair[1].loc);
            let mut expect = pair[0].t + dist / courier.speed;
            if pair[1].action != WaypointAction::Depot {
                expect += params.service_time;
            }
            if (expect - pair[1].t).abs() > 1e-6 {
                return Err(Violation::TimeMismatch(i + 1));
            }
            count += pair[1].action.mu() as i64 * pair[1].parcels.len() as i64;
            if count > courier.n_max as i64 {
                return Err(Violation::Payload(i + 1));
            }
        }
        Ok(())
    }

    fn check_common(
        wps: &[Waypoint],
        pool: &ParcelPool,
        params: &SimParams,
    ) -> Result<(), Violation> {
        for i in 1..wps.len() {
            if wps[i].t <= wps[i - 1].t - 1e-9 {
                return Err(Violation::TimeOrder(i));
            }
        }
        // Pickup-before-dropoff pairing, and deadlines on dropoffs.
        let mut picked: Vec<ParcelId> = wps[0].parcels.clone();
        for w in wps {
            match w.action {
                WaypointAction::Pickup => picked.extend(w.parcels.iter().copied()),
                WaypointAction::Dropoff => {
                    for &id in &w.parcels {
                        let pos = picked.iter().position(|&p| p == id);
                        match pos {
                            Some(k) => {
                                picked.remove(k);
                            }
                            // Onboard before the anchor is fine; it just must
                            // not be dropped twice.
                            None => {}
                        }
                        if w.t > pool.get(id).t_o + params.delta_t + 1e-6 {
                            return Err(Violation::Deadline(id));
                        }
                    }
                }
                WaypointAction::Depot => {}
            }
        }
        Ok(())
    }

    pub fn check_gv_plan(
        plan: &GvDeliveryPlan,
        gv: &GvState,
        parcel: &Parcel,
        now: f64,
        params: &SimParams,
    ) -> Result<(), Violation> {
        let limits = &params.gv_limits;
        if plan.dropoff_time > parcel.t_o + params.delta_t + 1e-6 {
            return Err(Violation::Deadline(parcel.id));
        }
        match plan.mode {
            GvDeliveryMode::Unoccupied => {
                let driving = manhattan_distance(gv.loc, parcel.l_o)
                    + manhattan_distance(parcel.l_o, parcel.l_s);
                let t_s = now
                    + driving / gv.speed
                    + 2.0 * params.service_time;
                if (t_s - plan.dropoff_time).abs() > 1e-6 {
                    return Err(Violation::GvLimit("unoccupied timing mismatch"));
                }
            }
            GvDeliveryMode::OdPair | GvDeliveryMode::Halfway => {
                if plan.pickup_time > parcel.t_o + limits.dt_pickup + 1e-6 {
                    return Err(Violation::GvLimit("pickup window"));
                }
                match plan.mode {
                    GvDeliveryMode::OdPair => {
                        if plan.detour > limits.d_max + 1e-6 {
                            return Err(Violation::GvLimit("pickup detour"));
                        }
                        if plan.dropoff_detour.abs() > 1e-9 {
                            return Err(Violation::GvLimit("od-pair dropoff detour must be 0"));
                        }
                    }
                    GvDeliveryMode::Halfway => {
                        if plan.detour > limits.d_max + 1e-6 {
                            return Err(Violation::GvLimit("pickup detour"));
                        }
                        if plan.dropoff_detour > limits.d_detour + 1e-6 {
                            return Err(Violation::GvLimit("dropoff detour"));
                        }
                    }
                    GvDeliveryMode::Unoccupied => unreachable!(),
                }
            }
        }
        Ok(())
    }
}
