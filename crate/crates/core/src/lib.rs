//! Cooperative air-ground instant delivery: delivery models for UAVs,
//! couriers, and crowdsourced ground vehicles, a preference-learning pipeline
//! with transfer to the two vehicle kinds, two-stage parcel assignment with
//! baselines and an exact oracle, and a deterministic discrete-event
//! simulator.

pub mod agents;
pub mod config;
pub mod dispatch;
pub mod feasibility;
pub mod geo;
pub mod io;
pub mod preference;
pub mod sim;
