//! Tunable parameters shared across planning, dispatch, and simulation.

use serde::{Deserialize, Serialize};

/// Linear UAV power model: watts drawn while carrying `w` kilograms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModelParams {
    /// Watts per kilogram of payload.
    pub slope: f64,
    /// Watts at zero payload.
    pub intercept: f64,
}

impl Default for EnergyModelParams {
    fn default() -> Self {
        EnergyModelParams { slope: 90.3, intercept: 320.9 }
    }
}

/// Spatial and temporal limits for ground-vehicle deliveries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GvLimits {
    /// Maximum pickup detour in meters.
    pub d_max: f64,
    /// Pickup window after ordering, seconds.
    pub dt_pickup: f64,
    /// Maximum mid-trip dropoff detour in meters.
    pub d_detour: f64,
}

impl Default for GvLimits {
    fn default() -> Self {
        GvLimits { d_max: 2000.0, dt_pickup: 600.0, d_detour: 1000.0 }
    }
}

/// Global simulation parameters with defaults matching the evaluated setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Hard delivery deadline, seconds from ordering.
    pub delta_t: f64,
    /// UAV flying speed, m/s.
    pub uav_speed: f64,
    /// Courier riding speed, m/s.
    pub courier_speed: f64,
    /// GV driving speed, m/s.
    pub gv_speed: f64,
    /// UAV battery capacity, joules.
    pub e_max: f64,
    /// Reserve fraction of `e_max` a UAV must retain on station return.
    pub alpha: f64,
    /// Max simultaneous parcels per courier.
    pub n_max: u32,
    /// Nominal UAV payload capacity in kg (feature normalization only).
    pub uav_payload_cap: f64,
    pub energy_model: EnergyModelParams,
    /// Charge empty legs at sigma(0) when false; when true, reproduce the
    /// zero-rate variant for unloaded legs.
    pub free_empty_legs: bool,
    /// Courier pay per delivery kilometer, CNY.
    pub courier_rate_per_km: f64,
    /// Taxi unit price per kilometer, CNY (doubled for occupied-trip cases).
    pub gv_rate_per_km: f64,
    pub gv_limits: GvLimits,
    /// Monetization rate for UAV time cost, CNY per second.
    pub uav_cost_per_second: f64,
    /// Handling time per pickup or dropoff, seconds.
    pub service_time: f64,
    /// Unassigned parcels are retried at this cadence, seconds.
    pub retry_interval: f64,
    /// Simulated day length, seconds (08:00-20:00 window).
    pub horizon: f64,
    /// Per-parcel candidate agents considered per kind; 0 means unlimited.
    pub candidate_cap: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        let energy_model = EnergyModelParams::default();
        SimParams {
            delta_t: 3600.0,
            uav_speed: 16.0,
            courier_speed: 5.0,
            gv_speed: 8.0,
            // 40-minute endurance at empty-payload draw.
            e_max: 2400.0 * energy_model.intercept,
            alpha: 0.1,
            n_max: 5,
            uav_payload_cap: 5.0,
            energy_model,
            free_empty_legs: false,
            courier_rate_per_km: 3.15,
            gv_rate_per_km: 2.7,
            gv_limits: GvLimits::default(),
            uav_cost_per_second: 0.0,
            service_time: 60.0,
            retry_interval: 60.0,
            horizon: 43_200.0,
            candidate_cap: 24,
        }
    }
}

impl SimParams {
    /// Variant with zero handling time, convenient for hand-computed traces.
    pub fn no_service_time(mut self) -> Self {
        self.service_time = 0.0;
        self
    }
}
