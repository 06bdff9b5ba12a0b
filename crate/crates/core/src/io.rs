//! Scenario ingestion and synthesis.
//!
//! Orders come from `orders.csv` (one row per order), GV availability from
//! `trajectories.csv` (timestamped vehicle traces segmented into passenger
//! trips), and complete scenarios round-trip through JSON. A seeded
//! synthesizer generates whole days from scratch.

use crate::agents::{GvTrip, Parcel, ParcelId};
use crate::config::SimParams;
use crate::geo::{manhattan_distance, Location, Rect, ServiceArea};
use crate::sim::{GvSchedule, Scenario};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

/// `orders.csv` row. The dropoff timestamp from the source data is kept for
/// reference but the delivery window is always ordering time plus the
/// configured limit.
#[derive(Debug, Deserialize)]
struct OrderRow {
    t_pickup: f64,
    x_pickup: f64,
    y_pickup: f64,
    #[allow(dead_code)]
    t_dropoff: f64,
    x_dropoff: f64,
    y_dropoff: f64,
}

/// Load orders, sort by ordering time, and assign dense parcel ids.
pub fn load_orders(path: &Path, default_weight: f64) -> Result<Vec<Parcel>, IoError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows: Vec<OrderRow> = Vec::new();
    for (i, rec) in reader.deserialize().enumerate() {
        let row: OrderRow = rec.map_err(|e| IoError::BadRow { row: i + 1, reason: e.to_string() })?;
        if !row.t_pickup.is_finite() || row.t_pickup < 0.0 {
            return Err(IoError::BadRow {
                row: i + 1,
                reason: format!("bad ordering time {}", row.t_pickup),
            });
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| a.t_pickup.total_cmp(&b.t_pickup));
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            Parcel::new(
                ParcelId(i as u64),
                r.t_pickup,
                Location::new(r.x_pickup, r.y_pickup),
                Location::new(r.x_dropoff, r.y_dropoff),
                default_weight,
            )
        })
        .collect())
}

/// `trajectories.csv` row: a timestamped position sample of one vehicle.
#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    vehicle_id: u64,
    t: f64,
    x: f64,
    y: f64,
    occupied: u8,
    #[allow(dead_code)]
    speed: f64,
    #[allow(dead_code)]
    heading: f64,
}

/// Segment vehicle traces into passenger trips: a trip starts at each 0->1
/// occupancy transition and ends at the next 1->0.
pub fn load_trajectories(path: &Path) -> Result<Vec<GvSchedule>, IoError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows: Vec<TrajectoryRow> = Vec::new();
    for (i, rec) in reader.deserialize().enumerate() {
        let row: TrajectoryRow =
            rec.map_err(|e| IoError::BadRow { row: i + 1, reason: e.to_string() })?;
        if row.occupied > 1 {
            return Err(IoError::BadRow {
                row: i + 1,
                reason: format!("occupancy flag must be 0/1, got {}", row.occupied),
            });
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id).then(a.t.total_cmp(&b.t)));

    let mut schedules = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let vid = rows[i].vehicle_id;
        let mut j = i;
        while j < rows.len() && rows[j].vehicle_id == vid {
            j += 1;
        }
        let trace = &rows[i..j];
        let start_loc = Location::new(trace[0].x, trace[0].y);
        let mut trips = Vec::new();
        let mut open: Option<(f64, Location)> = None;
        let mut prev_occ = trace[0].occupied;
        if prev_occ == 1 {
            open = Some((trace[0].t, start_loc));
        }
        for r in &trace[1..] {
            let loc = Location::new(r.x, r.y);
            match (prev_occ, r.occupied) {
                (0, 1) => open = Some((r.t, loc)),
                (1, 0) => {
                    if let Some((start, origin)) = open.take() {
                        trips.push(GvTrip {
                            origin,
                            destination: loc,
                            start,
                            scheduled_end: r.t,
                        });
                    }
                }
                _ => {}
            }
            prev_occ = r.occupied;
        }
        schedules.push(GvSchedule { start_loc, trips });
        i = j;
    }
    Ok(schedules)
}

/// Keep round(ratio * V) vehicles, chosen by seeded shuffle; the survivors
/// keep their original relative order.
pub fn subsample_gvs(schedules: &[GvSchedule], ratio: f64, seed: u64) -> Vec<GvSchedule> {
    let k = (ratio * schedules.len() as f64).round() as usize;
    let k = k.min(schedules.len());
    let mut idx: Vec<usize> = (0..schedules.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut chosen: Vec<usize> = idx.into_iter().take(k).collect();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| schedules[i].clone()).collect()
}

/// Knobs for the scenario synthesizer.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    /// Order count before demand scaling.
    pub base_orders: usize,
    /// Multiplier on the order count.
    pub demand_ratio: f64,
    pub uav_stations: usize,
    pub uavs_per_station: usize,
    pub courier_stations: usize,
    pub couriers_per_station: usize,
    pub gvs: usize,
    pub trips_per_gv: usize,
    pub bounds: Rect,
    pub parcel_weight_range: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            base_orders: 1000,
            demand_ratio: 1.0,
            uav_stations: 15,
            uavs_per_station: 25,
            courier_stations: 50,
            couriers_per_station: 20,
            gvs: 100,
            trips_per_gv: 6,
            bounds: Rect::new(0.0, 0.0, 20_000.0, 20_000.0),
            parcel_weight_range: (0.2, 2.0),
        }
    }
}

/// Standard normal via Box-Muller.
fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Ordering time with lunch and dinner peaks on top of a uniform base. The
/// day runs 08:00-20:00, so the peaks sit at 3 h and 10 h after start.
fn sample_arrival_time(rng: &mut ChaCha8Rng, horizon: f64) -> f64 {
    const PEAK_SIGMA: f64 = 1800.0;
    let peaks = [3.0 * 3600.0, 10.0 * 3600.0];
    loop {
        let t = match rng.gen_range(0..10) {
            // 40% uniform base load, 30% per peak.
            0..=3 => rng.gen_range(0.0..horizon),
            4..=6 => peaks[0] + PEAK_SIGMA * sample_normal(rng),
            _ => peaks[1] + PEAK_SIGMA * sample_normal(rng),
        };
        if (0.0..horizon).contains(&t) {
            return t;
        }
    }
}

fn sample_loc(rng: &mut ChaCha8Rng, bounds: &Rect) -> Location {
    Location::new(
        rng.gen_range(bounds.min_x..bounds.max_x),
        rng.gen_range(bounds.min_y..bounds.max_y),
    )
}

/// Generate a full synthetic day. Deterministic in the seed.
pub fn synth_scenario(cfg: &SynthConfig, params: &SimParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_orders = (cfg.base_orders as f64 * cfg.demand_ratio).round() as usize;

    let mut arrivals: Vec<f64> =
        (0..n_orders).map(|_| sample_arrival_time(&mut rng, params.horizon)).collect();
    arrivals.sort_by(|a, b| a.total_cmp(b));
    let parcels: Vec<Parcel> = arrivals
        .into_iter()
        .enumerate()
        .map(|(i, t_o)| {
            let l_o = sample_loc(&mut rng, &cfg.bounds);
            // Dropoffs cluster within a few kilometers of the pickup.
            let l_s = loop {
                let c = Location::new(
                    l_o.x + 500.0 * sample_normal(&mut rng) * 4.0,
                    l_o.y + 500.0 * sample_normal(&mut rng) * 4.0,
                );
                if cfg.bounds.contains(c) && manhattan_distance(l_o, c) > 100.0 {
                    break c;
                }
            };
            let w = rng.gen_range(cfg.parcel_weight_range.0..cfg.parcel_weight_range.1);
            Parcel::new(ParcelId(i as u64), t_o, l_o, l_s, w)
        })
        .collect();

    let uav_stations: Vec<Location> =
        (0..cfg.uav_stations).map(|_| sample_loc(&mut rng, &cfg.bounds)).collect();
    let courier_stations: Vec<Location> =
        (0..cfg.courier_stations).map(|_| sample_loc(&mut rng, &cfg.bounds)).collect();

    let gv_schedules: Vec<GvSchedule> = (0..cfg.gvs)
        .map(|_| {
            let start_loc = sample_loc(&mut rng, &cfg.bounds);
            let mut t = rng.gen_range(0.0..params.horizon / 4.0);
            let mut loc = start_loc;
            let mut trips = Vec::new();
            for _ in 0..cfg.trips_per_gv {
                let origin = sample_loc(&mut rng, &cfg.bounds);
                let destination = sample_loc(&mut rng, &cfg.bounds);
                let approach = manhattan_distance(loc, origin) / params.gv_speed;
                let start = t + approach + rng.gen_range(60.0..1800.0);
                if start >= params.horizon {
                    break;
                }
                let end = start + manhattan_distance(origin, destination) / params.gv_speed;
                trips.push(GvTrip { origin, destination, start, scheduled_end: end });
                t = end;
                loc = destination;
            }
            GvSchedule { start_loc, trips }
        })
        .collect();

    Scenario {
        area: ServiceArea::new(cfg.bounds),
        parcels,
        uav_stations,
        uavs_per_station: cfg.uavs_per_station,
        courier_stations,
        couriers_per_station: cfg.couriers_per_station,
        gv_schedules,
    }
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<(), IoError> {
    let json = serde_json::to_string_pretty(scenario)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    let json = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&json)?)
}
