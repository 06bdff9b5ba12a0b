//! Acceptance-preference learning: feature extraction, a small feed-forward
//! network trained with Adam on binary cross entropy, and transfer of the
//! courier network to GV and UAV decision functions.
//!
//! Everything here is deterministic: all randomness flows from explicit
//! seeds, training is single-threaded, and identical seeds give bit-identical
//! models.

use crate::agents::{AgentKind, CourierState, GvState, Parcel, UavState};
use crate::config::SimParams;
use crate::feasibility::{CandidatePlan, power_rate};
use crate::geo::{manhattan_distance, Location, ServiceArea};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FEATURE_DIM: usize = 9;
const CLAMP_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum PreferenceError {
    #[error("input dimension {got} does not match network input {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("prediction/label lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("malformed record: {0}")]
    MalformedRecord(&'static str),
    #[error("parameter shapes do not agree")]
    ShapeMismatch,
}

pub type FeatureVector = [f64; FEATURE_DIM];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: u8,
}

/// One dense layer, row-major: `w[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Layer {
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_out)
            .map(|_| (0..fan_in).map(|_| rng.gen_range(-limit..limit)).collect())
            .collect();
        Layer { w, b: vec![0.0; fan_out] }
    }

    fn out_dim(&self) -> usize {
        self.b.len()
    }

    fn in_dim(&self) -> usize {
        self.w.first().map(|r| r.len()).unwrap_or(0)
    }
}

/// Feed-forward network: rectifier hidden activations, logistic output.
/// `shared_len` marks how many leading layers came from the transferred
/// courier network (the rest are kind-specific).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub version: u32,
    pub layers: Vec<Layer>,
    pub shared_len: usize,
}

impl Mlp {
    /// New seeded network with the given layer widths, e.g. `[9, 64, 64, 32, 1]`.
    pub fn new(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2 && *dims.last().unwrap() == 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|d| Layer::glorot(d[0], d[1], &mut rng))
            .collect::<Vec<_>>();
        let shared_len = layers.len();
        Mlp { version: 1, layers, shared_len }
    }

    /// All-zero network of the given shape; predicts 0.5 everywhere.
    pub fn zeros(dims: &[usize]) -> Self {
        let layers = dims
            .windows(2)
            .map(|d| Layer { w: vec![vec![0.0; d[0]]; d[1]], b: vec![0.0; d[1]] })
            .collect::<Vec<_>>();
        let shared_len = layers.len();
        Mlp { version: 1, layers, shared_len }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64, PreferenceError> {
        Ok(self.forward_trace(x)?.1)
    }

    /// Forward pass keeping per-layer post-activation outputs for backprop.
    /// `trace[0]` is the input; `trace[k]` the output of layer k-1.
    fn forward_trace(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, f64), PreferenceError> {
        if x.len() != self.input_dim() {
            return Err(PreferenceError::DimensionMismatch {
                got: x.len(),
                want: self.input_dim(),
            });
        }
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_dim()];
            for (o, row) in layer.w.iter().enumerate() {
                let mut z = layer.b[o];
                for (i, wi) in row.iter().enumerate() {
                    z += wi * h[i];
                }
                out[o] = if k == last { sigmoid(z) } else { z.max(0.0) };
            }
            trace.push(out.clone());
            h = out;
        }
        let y = h[0];
        Ok((trace, y))
    }

    pub fn serialize_json(&self) -> String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }

    pub fn deserialize_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn clamp_pred(p: f64) -> f64 {
    p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
}

/// Mean binary cross entropy over a batch; predictions are clamped away from
/// {0, 1} before the logs.
pub fn bce_loss(preds: &[f64], labels: &[u8]) -> Result<f64, PreferenceError> {
    if preds.len() != labels.len() {
        return Err(PreferenceError::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(PreferenceError::EmptyDataset);
    }
    let n = preds.len() as f64;
    let sum: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_pred(p);
            let y = y as f64;
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / n)
}

/// Gradients shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(model: &Mlp) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    w: vec![vec![0.0; l.in_dim()]; l.out_dim()],
                    b: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }
}

/// Exact mean gradients of BCE(forward(x), y) over the batch.
pub fn backprop_gradients(
    model: &Mlp,
    batch: &[LabeledSample],
) -> Result<Gradients, PreferenceError> {
    if batch.is_empty() {
        return Err(PreferenceError::EmptyDataset);
    }
    let mut grads = Gradients::zeros_like(model);
    let n = batch.len() as f64;
    let last = model.layers.len() - 1;
    for sample in batch {
        let (trace, y_hat) = model.forward_trace(&sample.features)?;
        // d(BCE)/dz at the logistic output, with the clamp folded in: when
        // the prediction is clamped, the clamped value enters the loss but
        // its local slope w.r.t. z is zero, matching finite differences.
        let y = sample.label as f64;
        let p = clamp_pred(y_hat);
        let dl_dp = (-(y / p) + (1.0 - y) / (1.0 - p)) / n;
        let dp_dz = if y_hat <= CLAMP_EPS || y_hat >= 1.0 - CLAMP_EPS {
            0.0
        } else {
            y_hat * (1.0 - y_hat)
        };
        let mut delta = vec![dl_dp * dp_dz];
        for k in (0..=last).rev() {
            let input = &trace[k];
            let layer = &model.layers[k];
            for (o, d) in delta.iter().enumerate() {
                grads.layers[k].b[o] += d;
                for (i, g) in grads.layers[k].w[o].iter_mut().enumerate() {
                    *g += d * input[i];
                }
            }
            if k > 0 {
                let mut prev = vec![0.0; layer.in_dim()];
                for (o, d) in delta.iter().enumerate() {
                    for (i, p) in prev.iter_mut().enumerate() {
                        *p += d * layer.w[o][i];
                    }
                }
                // Rectifier derivative of the previous layer's output.
                for (i, p) in prev.iter_mut().enumerate() {
                    if trace[k][i] <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    Ok(grads)
}

/// Adam accumulator state shaped like the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub t: u64,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(model: &Mlp, eta: f64) -> Self {
        let zeros = Gradients::zeros_like(model).layers;
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            eta,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. `lr_scale[k]` rescales the step for layer
/// k (used to fine-tune transferred layers at a reduced rate).
pub fn adam_step(
    model: &mut Mlp,
    grads: &Gradients,
    state: &mut AdamState,
    lr_scale: &[f64],
) -> Result<(), PreferenceError> {
    if grads.layers.len() != model.layers.len() || lr_scale.len() != model.layers.len() {
        return Err(PreferenceError::ShapeMismatch);
    }
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for (k, layer) in model.layers.iter_mut().enumerate() {
        if grads.layers[k].b.len() != layer.b.len()
            || grads.layers[k].in_dim() != layer.in_dim()
        {
            return Err(PreferenceError::ShapeMismatch);
        }
        let eta = state.eta * lr_scale[k];
        for o in 0..layer.out_dim() {
            for i in 0..layer.in_dim() {
                let g = grads.layers[k].w[o][i];
                let m = &mut state.m[k].w[o][i];
                let v = &mut state.v[k].w[o][i];
                *m = state.beta1 * *m + (1.0 - state.beta1) * g;
                *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
                layer.w[o][i] -= eta * (*m / bc1) / ((*v / bc2).sqrt() + state.epsilon);
            }
            let g = grads.layers[k].b[o];
            let m = &mut state.m[k].b[o];
            let v = &mut state.v[k].b[o];
            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
            layer.b[o] -= eta * (*m / bc1) / ((*v / bc2).sqrt() + state.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, batch_size: 32, eta: 1e-3, seed: 7 }
    }
}

/// Mini-batch training with seeded shuffling; returns the per-epoch mean
/// training loss.
pub fn train(
    model: &mut Mlp,
    dataset: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, PreferenceError> {
    train_scaled(model, dataset, cfg, None)
}

fn train_scaled(
    model: &mut Mlp,
    dataset: &[LabeledSample],
    cfg: &TrainConfig,
    lr_scale: Option<Vec<f64>>,
) -> Result<Vec<f64>, PreferenceError> {
    if dataset.is_empty() {
        return Err(PreferenceError::EmptyDataset);
    }
    let scale = lr_scale.unwrap_or_else(|| vec![1.0; model.layers.len()]);
    let mut state = AdamState::new(model, cfg.eta);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<LabeledSample> =
                chunk.iter().map(|&i| dataset[i].clone()).collect();
            let preds: Vec<f64> = batch
                .iter()
                .map(|s| model.forward(&s.features))
                .collect::<Result<_, _>>()?;
            let labels: Vec<u8> = batch.iter().map(|s| s.label).collect();
            epoch_loss += bce_loss(&preds, &labels)?;
            batches += 1.0;
            let grads = backprop_gradients(model, &batch)?;
            adam_step(model, &grads, &mut state, &scale)?;
        }
        curve.push(epoch_loss / batches);
    }
    Ok(curve)
}

/// One candidate decision from a courier delivery log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourierLogRecord {
    /// Ordering time, seconds since scenario start.
    pub t_o: f64,
    pub l_o: Option<Location>,
    /// Detour to reach the pickup, meters.
    pub detour: f64,
    pub speed: f64,
    /// Delivery distance, meters.
    pub dist: f64,
    pub cost: f64,
    pub payload: u32,
    pub n_max: u32,
    /// Remaining time before the most pressing onboard deadline, seconds.
    pub t_re: f64,
    pub accepted: bool,
}

/// Normalization context shared by all feature builders.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext {
    pub extent_x: f64,
    pub extent_y: f64,
    pub origin: Location,
    pub horizon: f64,
    pub delta_t: f64,
}

impl FeatureContext {
    pub fn from_area(area: &ServiceArea, params: &SimParams) -> Self {
        FeatureContext {
            extent_x: area.bounds.width(),
            extent_y: area.bounds.height(),
            origin: Location::new(area.bounds.min_x, area.bounds.min_y),
            horizon: params.horizon,
            delta_t: params.delta_t,
        }
    }

    fn base(&self, t_o: f64, l_o: Location, detour_m: f64, speed: f64, dist_m: f64, cost: f64, load: f64, t_re: f64) -> FeatureVector {
        [
            (t_o / self.horizon).clamp(0.0, 1.0),
            ((l_o.x - self.origin.x) / self.extent_x).clamp(0.0, 1.0),
            ((l_o.y - self.origin.y) / self.extent_y).clamp(0.0, 1.0),
            detour_m / 1000.0,
            speed,
            dist_m / 1000.0,
            cost,
            load,
            (t_re / self.delta_t).clamp(0.0, 1.0),
        ]
    }
}

/// Samples from a courier delivery log: one per candidate decision, label 1
/// iff accepted.
pub fn extract_courier_dataset(
    history: &[CourierLogRecord],
    ctx: &FeatureContext,
) -> Result<Vec<LabeledSample>, PreferenceError> {
    history
        .iter()
        .map(|r| {
            let l_o = r.l_o.ok_or(PreferenceError::MalformedRecord("missing location"))?;
            if !r.t_o.is_finite() || !r.detour.is_finite() {
                return Err(PreferenceError::MalformedRecord("non-finite field"));
            }
            if r.n_max == 0 {
                return Err(PreferenceError::MalformedRecord("zero capacity"));
            }
            let features = ctx.base(
                r.t_o,
                l_o,
                r.detour,
                r.speed,
                r.dist,
                r.cost,
                r.payload as f64 / r.n_max as f64,
                r.t_re,
            );
            Ok(LabeledSample { features, label: u8::from(r.accepted) })
        })
        .collect()
}

/// Courier-kind features for a live candidate.
pub fn courier_features(
    courier: &CourierState,
    parcel: &Parcel,
    candidate: &CandidatePlan,
    now: f64,
    pool: &crate::agents::ParcelPool,
    params: &SimParams,
    ctx: &FeatureContext,
) -> FeatureVector {
    let onboard = courier.route.onboard_at(now);
    let load = onboard.len() as f64 / courier.n_max as f64;
    // Remaining slack before the tightest onboard deadline; a free courier
    // has the full window ahead.
    let t_re = onboard
        .iter()
        .map(|&id| pool.get(id).t_o + params.delta_t - now)
        .fold(params.delta_t, f64::min)
        .max(0.0);
    let pos = courier.route.position_at(now);
    let detour = manhattan_distance(pos, parcel.l_o);
    ctx.base(
        parcel.t_o,
        parcel.l_o,
        detour,
        courier.speed,
        manhattan_distance(parcel.l_o, parcel.l_s),
        candidate.cost,
        load,
        t_re,
    )
}

/// GV-kind features: binary occupancy replaces the payload slot, and the
/// remaining time of the original task fills t_re.
pub fn gv_features(
    gv: &GvState,
    parcel: &Parcel,
    candidate: &CandidatePlan,
    now: f64,
    ctx: &FeatureContext,
) -> FeatureVector {
    let detour = match &candidate.body {
        crate::feasibility::CandidateBody::Gv(plan) => plan.detour + plan.dropoff_detour,
        _ => manhattan_distance(gv.loc, parcel.l_o),
    };
    let busy = gv.trip.is_some();
    let t_re = gv
        .trip
        .map(|t| (t.scheduled_end - now).max(0.0))
        .unwrap_or(0.0);
    ctx.base(
        parcel.t_o,
        parcel.l_o,
        detour,
        gv.speed,
        manhattan_distance(parcel.l_o, parcel.l_s),
        candidate.cost,
        if busy { 1.0 } else { 0.0 },
        t_re,
    )
}

/// UAV-kind features: carried weight over nominal capacity as the load slot,
/// remaining flying time before battery exhaustion as t_re, flight distance
/// as the delivery distance, and the monetized time cost in the cost slot.
pub fn uav_features(
    uav: &UavState,
    parcel: &Parcel,
    candidate: &CandidatePlan,
    now: f64,
    pool: &crate::agents::ParcelPool,
    params: &SimParams,
    area: &ServiceArea,
    ctx: &FeatureContext,
) -> FeatureVector {
    let onboard = uav.route.onboard_at(now);
    let weight: f64 = onboard.iter().map(|&id| pool.get(id).weight).sum();
    let rate = power_rate(weight, &params.energy_model).unwrap_or(params.energy_model.intercept);
    let t_re = (uav.e_remaining / rate).max(0.0);
    let pos = uav.route.position_at(now);
    let dist = crate::geo::flight_distance(parcel.l_o, parcel.l_s, area)
        .unwrap_or_else(|_| manhattan_distance(parcel.l_o, parcel.l_s));
    let detour = crate::geo::flight_distance(pos, parcel.l_o, area)
        .unwrap_or_else(|_| manhattan_distance(pos, parcel.l_o));
    ctx.base(
        parcel.t_o,
        parcel.l_o,
        detour,
        uav.speed,
        dist,
        candidate.monetized_cost(params),
        weight / params.uav_payload_cap,
        t_re,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    /// Copy the source and update every layer at a reduced learning rate.
    GvFineTune,
    /// Keep the source body as the shared block, append freshly initialized
    /// specific layers, and train the composite (shared layers at reduced
    /// rate, specific layers at full rate).
    UavSpecific,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub train: TrainConfig,
    /// Multiplier applied to transferred layers' learning rate.
    pub shared_lr_scale: f64,
    /// Hidden widths of the appended specific block (UavSpecific).
    pub specific_hidden: Vec<usize>,
    pub init_seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            train: TrainConfig::default(),
            shared_lr_scale: 0.1,
            specific_hidden: vec![32],
            init_seed: 11,
        }
    }
}

/// Transfer the trained source network to a target kind and fine-tune it on
/// the target's simulated dataset.
pub fn transfer_finetune(
    source: &Mlp,
    target_dataset: &[LabeledSample],
    mode: TransferMode,
    cfg: &TransferConfig,
) -> Result<Mlp, PreferenceError> {
    match mode {
        TransferMode::GvFineTune => {
            let mut model = source.clone();
            if cfg.train.epochs > 0 {
                let scale = vec![cfg.shared_lr_scale; model.layers.len()];
                train_scaled(&mut model, target_dataset, &cfg.train, Some(scale))?;
            }
            Ok(model)
        }
        TransferMode::UavSpecific => {
            let mut model = source.clone();
            // Replace the logistic head with a specific block fed by the last
            // hidden layer.
            let head = model.layers.pop().ok_or(PreferenceError::ShapeMismatch)?;
            let shared_out = head.in_dim();
            model.shared_len = model.layers.len();
            let mut dims = vec![shared_out];
            dims.extend_from_slice(&cfg.specific_hidden);
            dims.push(1);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
            for d in dims.windows(2) {
                model.layers.push(Layer::glorot(d[0], d[1], &mut rng));
            }
            if cfg.train.epochs > 0 {
                let mut scale = vec![cfg.shared_lr_scale; model.shared_len];
                scale.extend(vec![1.0; model.layers.len() - model.shared_len]);
                train_scaled(&mut model, target_dataset, &cfg.train, Some(scale))?;
            }
            Ok(model)
        }
    }
}

/// Trained decision functions for the three agent kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub courier: Mlp,
    pub gv: Mlp,
    pub uav: Mlp,
}

impl ModelBundle {
    pub fn model_for(&self, kind: AgentKind) -> &Mlp {
        match kind {
            AgentKind::Uav => &self.uav,
            AgentKind::Courier => &self.courier,
            AgentKind::Gv => &self.gv,
        }
    }
}

/// Evaluate the agent-kind preference for a feasible candidate.
pub fn predict_preference(model: &Mlp, features: &FeatureVector) -> Result<f64, PreferenceError> {
    model.forward(features)
}

/// Synthesize accept/reject labels by flipping cost-greedy selections with
/// a small seeded probability, standing in for a real behavioral log.
pub fn flip_labels(samples: &mut [LabeledSample], flip_prob: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in samples.iter_mut() {
        if rng.gen::<f64>() < flip_prob {
            s.label ^= 1;
        }
    }
}

/// Per-kind training samples collected from a simulated day.
#[derive(Debug, Clone, Default)]
pub struct KindSamples {
    pub courier: Vec<LabeledSample>,
    pub gv: Vec<LabeledSample>,
    pub uav: Vec<LabeledSample>,
}

impl KindSamples {
    pub fn split(tagged: Vec<(AgentKind, LabeledSample)>) -> Self {
        let mut out = KindSamples::default();
        for (kind, s) in tagged {
            match kind {
                AgentKind::Uav => out.uav.push(s),
                AgentKind::Courier => out.courier.push(s),
                AgentKind::Gv => out.gv.push(s),
            }
        }
        out
    }
}

/// Full pipeline configuration: train the courier network from its delivery
/// history, then transfer to the two vehicle kinds.
#[derive(Debug, Clone)]
pub struct BundleConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub transfer: TransferConfig,
    pub init_seed: u64,
    /// Label noise injected into the courier history to stand in for human
    /// idiosyncrasy.
    pub flip_prob: f64,
    pub flip_seed: u64,
    /// Per-kind cap on training-set size; a replayed day can emit one sample
    /// per enumerated candidate, far more than training needs.
    pub max_samples: usize,
    pub subsample_seed: u64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        BundleConfig {
            hidden: vec![64, 64, 32],
            train: TrainConfig::default(),
            transfer: TransferConfig::default(),
            init_seed: 17,
            flip_prob: 0.05,
            flip_seed: 18,
            max_samples: 20_000,
            subsample_seed: 19,
        }
    }
}

fn capped(samples: &[LabeledSample], cap: usize, seed: u64) -> Vec<LabeledSample> {
    if samples.len() <= cap {
        return samples.to_vec();
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(cap);
    idx.sort_unstable();
    idx.into_iter().map(|i| samples[i].clone()).collect()
}

/// Train the courier network and derive the GV and UAV networks from it.
/// Empty target datasets leave the transferred network at its zero-epoch
/// (identity / freshly-appended) state.
pub fn train_bundle(
    samples: &KindSamples,
    cfg: &BundleConfig,
) -> Result<(ModelBundle, Vec<f64>), PreferenceError> {
    if samples.courier.is_empty() {
        return Err(PreferenceError::EmptyDataset);
    }
    let mut courier_set = capped(&samples.courier, cfg.max_samples, cfg.subsample_seed);
    flip_labels(&mut courier_set, cfg.flip_prob, cfg.flip_seed);

    let mut dims = vec![FEATURE_DIM];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(1);
    let mut courier = Mlp::new(&dims, cfg.init_seed);
    let curve = train(&mut courier, &courier_set, &cfg.train)?;

    let zero_epochs = |cfg: &TransferConfig| TransferConfig {
        train: TrainConfig { epochs: 0, ..cfg.train.clone() },
        ..cfg.clone()
    };
    let gv_set = capped(&samples.gv, cfg.max_samples, cfg.subsample_seed.wrapping_add(1));
    let gv = if gv_set.is_empty() {
        transfer_finetune(&courier, &[], TransferMode::GvFineTune, &zero_epochs(&cfg.transfer))?
    } else {
        transfer_finetune(&courier, &gv_set, TransferMode::GvFineTune, &cfg.transfer)?
    };
    let uav_set = capped(&samples.uav, cfg.max_samples, cfg.subsample_seed.wrapping_add(2));
    let uav = if uav_set.is_empty() {
        transfer_finetune(&courier, &[], TransferMode::UavSpecific, &zero_epochs(&cfg.transfer))?
    } else {
        transfer_finetune(&courier, &uav_set, TransferMode::UavSpecific, &cfg.transfer)?
    };
    Ok((ModelBundle { courier, gv, uav }, curve))
}
