//! Parcel-to-agent assignment policies.
//!
//! The main policy runs in two stages: a preference gate that only matches a
//! parcel when some agent's learned acceptance score clears a threshold, and
//! a greedy assignment over the remainder that maximizes delivered count and
//! then minimizes cost. Baselines and an exhaustive oracle for small
//! instances live here too.

use crate::agents::{
    AgentId, AgentKind, CourierState, GvState, Parcel, ParcelId, ParcelPool, ParcelStatus,
    UavState,
};
use crate::config::SimParams;
use crate::feasibility::{
    plan_courier_insertion, plan_gv_delivery, plan_uav_insertion, CandidateBody, CandidatePlan,
    Infeasible,
};
use crate::geo::{euclidean_distance, manhattan_distance, Location, ServiceArea};
use crate::preference::{
    courier_features, gv_features, predict_preference, uav_features, FeatureContext,
    FeatureVector, LabeledSample, ModelBundle,
};
use serde::{Deserialize, Serialize};

/// All controllable agents, indexed by kind and dense per-kind index.
#[derive(Debug, Clone, Default)]
pub struct AgentRegistry {
    pub uavs: Vec<UavState>,
    pub couriers: Vec<CourierState>,
    pub gvs: Vec<GvState>,
}

impl AgentRegistry {
    pub fn agent_count(&self) -> usize {
        self.uavs.len() + self.couriers.len() + self.gvs.len()
    }

    pub fn all_ids(&self) -> Vec<AgentId> {
        let mut ids = Vec::with_capacity(self.agent_count());
        ids.extend((0..self.uavs.len()).map(|i| AgentId::uav(i as u32)));
        ids.extend((0..self.couriers.len()).map(|i| AgentId::courier(i as u32)));
        ids.extend((0..self.gvs.len()).map(|i| AgentId::gv(i as u32)));
        ids
    }

    pub fn position_at(&self, id: AgentId, now: f64) -> Location {
        match id.kind {
            AgentKind::Uav => self.uavs[id.index as usize].route.position_at(now),
            AgentKind::Courier => self.couriers[id.index as usize].route.position_at(now),
            AgentKind::Gv => self.gvs[id.index as usize].loc,
        }
    }

    /// Plan `parcel` on a specific agent against its current committed state.
    pub fn plan_for(
        &self,
        id: AgentId,
        parcel: &Parcel,
        now: f64,
        pool: &ParcelPool,
        params: &SimParams,
        area: &ServiceArea,
    ) -> Result<CandidatePlan, Infeasible> {
        match id.kind {
            AgentKind::Uav => {
                plan_uav_insertion(&self.uavs[id.index as usize], parcel, now, pool, params, area)
            }
            AgentKind::Courier => {
                plan_courier_insertion(&self.couriers[id.index as usize], parcel, now, pool, params)
            }
            AgentKind::Gv => plan_gv_delivery(&self.gvs[id.index as usize], parcel, now, params),
        }
    }

    /// Adopt a candidate plan: replace the agent's committed route (UAV,
    /// courier) or delivery run (GV) and mark the parcel assigned.
    pub fn commit(&mut self, plan: &CandidatePlan, pool: &mut ParcelPool) {
        match (&plan.body, plan.agent.kind) {
            (CandidateBody::Route(route), AgentKind::Uav) => {
                self.uavs[plan.agent.index as usize].route = route.clone();
            }
            (CandidateBody::Route(route), AgentKind::Courier) => {
                self.couriers[plan.agent.index as usize].route = route.clone();
            }
            (CandidateBody::Gv(gv_plan), AgentKind::Gv) => {
                self.gvs[plan.agent.index as usize].active_delivery = Some(gv_plan.clone());
            }
            _ => unreachable!("plan body does not match agent kind"),
        }
        pool.get_mut(plan.parcel).status = ParcelStatus::Assigned(plan.agent);
    }
}

/// Per-kind acceptance thresholds for the preference gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub uav: f64,
    pub courier: f64,
    pub gv: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { uav: 0.5, courier: 0.5, gv: 0.5 }
    }
}

impl Thresholds {
    fn for_kind(&self, kind: AgentKind) -> f64 {
        match kind {
            AgentKind::Uav => self.uav,
            AgentKind::Courier => self.courier,
            AgentKind::Gv => self.gv,
        }
    }
}

/// Assignment policy selector.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Preference gate followed by greedy count-then-cost assignment.
    TwoStage { models: ModelBundle, thresholds: Thresholds },
    /// Greedy count-then-cost assignment only, restricted to `kinds`.
    CostGreedy { kinds: Vec<AgentKind> },
    /// Each parcel goes to the feasible agent with the earliest pickup.
    OnDemand,
}

impl Policy {
    pub fn cost_greedy_all() -> Self {
        Policy::CostGreedy { kinds: vec![AgentKind::Uav, AgentKind::Courier, AgentKind::Gv] }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::TwoStage { .. } => "two-stage",
            Policy::CostGreedy { .. } => "cost-greedy",
            Policy::OnDemand => "on-demand",
        }
    }
}

/// Result of one dispatch round.
#[derive(Debug, Clone, Default)]
pub struct DispatchOutcome {
    pub committed: Vec<CandidatePlan>,
    /// Per-kind labeled feature vectors, filled only when sample collection
    /// is requested: the committed candidate per parcel is the positive.
    pub samples: Vec<(AgentKind, LabeledSample)>,
}

/// Lower bound on completion time used to discard provably late candidates
/// without running the planner.
fn provably_late(
    kind: AgentKind,
    agent_pos: Location,
    parcel: &Parcel,
    now: f64,
    params: &SimParams,
) -> bool {
    let (d1, d2, v) = match kind {
        AgentKind::Uav => (
            euclidean_distance(agent_pos, parcel.l_o),
            euclidean_distance(parcel.l_o, parcel.l_s),
            params.uav_speed,
        ),
        AgentKind::Courier => (
            manhattan_distance(agent_pos, parcel.l_o),
            manhattan_distance(parcel.l_o, parcel.l_s),
            params.courier_speed,
        ),
        AgentKind::Gv => (
            manhattan_distance(agent_pos, parcel.l_o),
            manhattan_distance(parcel.l_o, parcel.l_s),
            params.gv_speed,
        ),
    };
    now + (d1 + d2) / v > parcel.t_o + params.delta_t + 1e-9
}

/// Feasible candidates for one parcel across the allowed kinds, planning at
/// most `candidate_cap` nearest agents per kind.
pub fn enumerate_candidates(
    parcel: &Parcel,
    kinds: &[AgentKind],
    reg: &AgentRegistry,
    now: f64,
    pool: &ParcelPool,
    params: &SimParams,
    area: &ServiceArea,
) -> Vec<CandidatePlan> {
    let mut out = Vec::new();
    for &kind in kinds {
        let count = match kind {
            AgentKind::Uav => reg.uavs.len(),
            AgentKind::Courier => reg.couriers.len(),
            AgentKind::Gv => reg.gvs.len(),
        };
        let mut near: Vec<(f64, u32)> = (0..count as u32)
            .filter_map(|i| {
                let id = AgentId { kind, index: i };
                let pos = reg.position_at(id, now);
                if provably_late(kind, pos, parcel, now, params) {
                    return None;
                }
                let d = match kind {
                    AgentKind::Uav => euclidean_distance(pos, parcel.l_o),
                    _ => manhattan_distance(pos, parcel.l_o),
                };
                Some((d, i))
            })
            .collect();
        near.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        near.truncate(params.candidate_cap);
        for (_, i) in near {
            let id = AgentId { kind, index: i };
            if let Ok(plan) = reg.plan_for(id, parcel, now, pool, params, area) {
                out.push(plan);
            }
        }
    }
    out
}

/// Deterministic candidate ordering: monetized cost, then UAV before courier
/// before GV, then agent index, then parcel id.
fn candidate_order(a: &CandidatePlan, b: &CandidatePlan, params: &SimParams) -> std::cmp::Ordering {
    a.monetized_cost(params)
        .partial_cmp(&b.monetized_cost(params))
        .unwrap()
        .then(a.agent.kind.rank().cmp(&b.agent.kind.rank()))
        .then(a.agent.index.cmp(&b.agent.index))
        .then(a.parcel.cmp(&b.parcel))
}

fn features_for(
    plan: &CandidatePlan,
    parcel: &Parcel,
    reg: &AgentRegistry,
    now: f64,
    pool: &ParcelPool,
    params: &SimParams,
    area: &ServiceArea,
    ctx: &FeatureContext,
) -> FeatureVector {
    match plan.agent.kind {
        AgentKind::Uav => uav_features(
            &reg.uavs[plan.agent.index as usize],
            parcel,
            plan,
            now,
            pool,
            params,
            area,
            ctx,
        ),
        AgentKind::Courier => courier_features(
            &reg.couriers[plan.agent.index as usize],
            parcel,
            plan,
            now,
            pool,
            params,
            ctx,
        ),
        AgentKind::Gv => {
            gv_features(&reg.gvs[plan.agent.index as usize], parcel, plan, now, ctx)
        }
    }
}

/// Run one dispatch round over `parcels` (ids of pending parcels), mutating
/// the registry and parcel statuses. Parcels left unassigned stay pending.
#[allow(clippy::too_many_arguments)]
pub fn dispatch_batch(
    policy: &Policy,
    parcels: &[ParcelId],
    reg: &mut AgentRegistry,
    pool: &mut ParcelPool,
    now: f64,
    params: &SimParams,
    area: &ServiceArea,
    collect_samples: bool,
) -> DispatchOutcome {
    let mut ids: Vec<ParcelId> = parcels
        .iter()
        .copied()
        .filter(|&id| pool.get(id).status == ParcelStatus::Pending)
        .collect();
    // Sequential handling in ordering-time order, ties by id.
    ids.sort_by(|&a, &b| {
        pool.get(a)
            .t_o
            .partial_cmp(&pool.get(b).t_o)
            .unwrap()
            .then(a.cmp(&b))
    });

    let all_kinds = [AgentKind::Uav, AgentKind::Courier, AgentKind::Gv];
    let mut outcome = DispatchOutcome::default();
    let ctx = FeatureContext::from_area(area, params);

    match policy {
        Policy::OnDemand => {
            for id in ids {
                let parcel = pool.get(id).clone();
                let cands =
                    enumerate_candidates(&parcel, &all_kinds, reg, now, pool, params, area);
                let best = cands.into_iter().min_by(|a, b| {
                    a.pickup_time
                        .partial_cmp(&b.pickup_time)
                        .unwrap()
                        .then(a.agent.kind.rank().cmp(&b.agent.kind.rank()))
                        .then(a.agent.index.cmp(&b.agent.index))
                });
                if let Some(plan) = best {
                    reg.commit(&plan, pool);
                    outcome.committed.push(plan);
                }
            }
        }
        Policy::CostGreedy { kinds } => {
            greedy_assign(&ids, kinds, reg, pool, now, params, area, collect_samples, &ctx, &mut outcome);
        }
        Policy::TwoStage { models, thresholds } => {
            // Stage 1: preference gate, sequential by ordering time. A parcel
            // is matched here only if some candidate's learned acceptance
            // score clears its kind threshold; the cheapest such candidate
            // wins.
            let mut remainder = Vec::new();
            for id in ids {
                let parcel = pool.get(id).clone();
                let cands =
                    enumerate_candidates(&parcel, &all_kinds, reg, now, pool, params, area);
                let mut gated: Vec<CandidatePlan> = cands
                    .into_iter()
                    .filter(|c| {
                        let f = features_for(c, &parcel, reg, now, pool, params, area, &ctx);
                        predict_preference(models.model_for(c.agent.kind), &f)
                            .map(|s| s >= thresholds.for_kind(c.agent.kind))
                            .unwrap_or(false)
                    })
                    .collect();
                gated.sort_by(|a, b| candidate_order(a, b, params));
                if let Some(plan) = gated.into_iter().next() {
                    reg.commit(&plan, pool);
                    outcome.committed.push(plan);
                } else {
                    remainder.push(id);
                }
            }
            // Stage 2: greedy count-then-cost assignment of the remainder.
            greedy_assign(
                &remainder, &all_kinds, reg, pool, now, params, area, false, &ctx, &mut outcome,
            );
        }
    }
    outcome
}

/// Greedy assignment maximizing delivered count and then total cost: keep
/// committing the globally cheapest feasible candidate, re-planning the
/// committed agent's other candidates after each commit.
#[allow(clippy::too_many_arguments)]
fn greedy_assign(
    parcels: &[ParcelId],
    kinds: &[AgentKind],
    reg: &mut AgentRegistry,
    pool: &mut ParcelPool,
    now: f64,
    params: &SimParams,
    area: &ServiceArea,
    collect_samples: bool,
    ctx: &FeatureContext,
    outcome: &mut DispatchOutcome,
) {
    // (candidate, features at planning time)
    let mut cands: Vec<(CandidatePlan, Option<FeatureVector>)> = Vec::new();
    for &id in parcels {
        let parcel = pool.get(id).clone();
        for plan in enumerate_candidates(&parcel, kinds, reg, now, pool, params, area) {
            let f = collect_samples
                .then(|| features_for(&plan, &parcel, reg, now, pool, params, area, ctx));
            cands.push((plan, f));
        }
    }

    let mut committed_pairs: Vec<(AgentId, ParcelId)> = Vec::new();
    loop {
        let best_idx = cands
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| candidate_order(&a.0, &b.0, params))
            .map(|(i, _)| i);
        let Some(i) = best_idx else { break };
        let (plan, feat) = cands.swap_remove(i);
        reg.commit(&plan, pool);
        committed_pairs.push((plan.agent, plan.parcel));
        if let Some(f) = feat {
            outcome.samples.push((plan.agent.kind, LabeledSample { features: f, label: 1 }));
        }
        let agent = plan.agent;
        let parcel_done = plan.parcel;
        outcome.committed.push(plan);

        // Drop remaining candidates for the served parcel (record them as
        // negatives), and re-plan candidates on the now-busier agent.
        let mut next = Vec::with_capacity(cands.len());
        for (c, f) in cands.drain(..) {
            if c.parcel == parcel_done {
                if let Some(f) = f {
                    outcome.samples.push((c.agent.kind, LabeledSample { features: f, label: 0 }));
                }
                continue;
            }
            if c.agent == agent {
                let parcel = pool.get(c.parcel).clone();
                if let Ok(replanned) = reg.plan_for(agent, &parcel, now, pool, params, area) {
                    let f2 = f.map(|_| {
                        features_for(&replanned, &parcel, reg, now, pool, params, area, ctx)
                    });
                    next.push((replanned, f2));
                }
                // Infeasible after the commit: silently dropped (no sample;
                // the option no longer exists).
                continue;
            }
            next.push((c, f));
        }
        cands = next;
    }
}

/// Exact assignment for small instances: exhaustively try every mapping of
/// parcels (in id order) to agents or to "unassigned", committing
/// sequentially, and keep the lexicographically best (max delivered count,
/// then min total monetized cost).
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub plans: Vec<CandidatePlan>,
    pub delivered: usize,
    pub total_cost: f64,
}

pub fn brute_force_oracle(
    parcels: &[ParcelId],
    reg: &AgentRegistry,
    pool: &ParcelPool,
    now: f64,
    params: &SimParams,
    area: &ServiceArea,
) -> OracleSolution {
    assert!(parcels.len() <= 8, "oracle limited to 8 parcels");
    assert!(reg.agent_count() <= 4, "oracle limited to 4 agents");
    let ids = reg.all_ids();
    let mut best = OracleSolution { plans: Vec::new(), delivered: 0, total_cost: 0.0 };
    let mut acc = Vec::new();
    recurse_oracle(
        parcels, 0, &ids, reg, pool, now, params, area, &mut acc, 0.0, &mut best,
    );
    best
}

#[allow(clippy::too_many_arguments)]
fn recurse_oracle(
    parcels: &[ParcelId],
    k: usize,
    ids: &[AgentId],
    reg: &AgentRegistry,
    pool: &ParcelPool,
    now: f64,
    params: &SimParams,
    area: &ServiceArea,
    acc: &mut Vec<CandidatePlan>,
    cost: f64,
    best: &mut OracleSolution,
) {
    // Bound: even assigning everything left cannot beat the incumbent count.
    if acc.len() + (parcels.len() - k) < best.delivered {
        return;
    }
    if k == parcels.len() {
        let better = acc.len() > best.delivered
            || (acc.len() == best.delivered && cost < best.total_cost - 1e-12);
        if better {
            *best = OracleSolution { plans: acc.clone(), delivered: acc.len(), total_cost: cost };
        }
        return;
    }
    let parcel = pool.get(parcels[k]).clone();
    for &id in ids {
        if let Ok(plan) = reg.plan_for(id, &parcel, now, pool, params, area) {
            let mut reg2 = reg.clone();
            let mut pool2 = pool.clone();
            reg2.commit(&plan, &mut pool2);
            let c = cost + plan.monetized_cost(params);
            acc.push(plan);
            recurse_oracle(parcels, k + 1, ids, &reg2, &pool2, now, params, area, acc, c, best);
            acc.pop();
        }
    }
    // Leave this parcel unassigned.
    recurse_oracle(parcels, k + 1, ids, reg, pool, now, params, area, acc, cost, best);
}
