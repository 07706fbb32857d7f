//! Model fitting: initialization, minibatch sampling and Adam updates.

use std::f64::consts::TAU;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, NormalSample};
use crate::geometry::{SpiralParams, Vec3, Winding};
use crate::grad::ParamVector;
use crate::losses::{radius_term, LossBatch, LossBreakdown, LossWeights, PairSample, PathSample, StretchSample, TermFlags};
use crate::objective::{evaluate_terms, evaluate_with_gradients};
use crate::transform::{ComposedTransform, PerSliceAffine, TransformLayout};

/// Stream id reserved for the evaluation batch behind `final_loss`.
const EVAL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub total_steps: usize,
    pub points_per_path: usize,
    /// Number of linked point pairs per batch.
    pub winding_points: usize,
    pub normal_points: usize,
    pub regularization_points: usize,
    /// Defaults to half of `total_steps`.
    pub distance_start_step: Option<usize>,
    pub paths_per_batch: usize,
    pub center_samples: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub history_every: usize,
    pub weights: LossWeights,
    pub terms: TermFlags,
    /// Offset along normals for the normal loss, in scan units.
    pub normal_eps: f64,
    pub rho: Option<f64>,
    pub direction: Option<Winding>,
    #[serde(skip, default)]
    pub layout: TransformLayout,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 5e-4,
            total_steps: 20_000,
            points_per_path: 100,
            winding_points: 2000,
            normal_points: 2000,
            regularization_points: 1500,
            distance_start_step: None,
            paths_per_batch: 64,
            center_samples: 32,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            history_every: 100,
            weights: LossWeights::default(),
            terms: TermFlags::all(),
            normal_eps: 1.0,
            rho: None,
            direction: None,
            layout: TransformLayout::default(),
        }
    }
}

impl FitConfig {
    pub fn distance_start(&self) -> usize {
        self.distance_start_step.unwrap_or(self.total_steps / 2)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("points_per_path", self.points_per_path),
            ("winding_points", self.winding_points),
            ("normal_points", self.normal_points),
            ("regularization_points", self.regularization_points),
            ("paths_per_batch", self.paths_per_batch),
            ("center_samples", self.center_samples),
            ("history_every", self.history_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.distance_start() > self.total_steps {
            return Err(Error::Config("distance_start_step exceeds total_steps".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        if !(self.normal_eps > 0.0) {
            return Err(Error::Config("normal_eps must be positive".into()));
        }
        if let Some(r) = self.rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config("rho must be positive".into()));
            }
        }
        self.weights.validate()
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update. Each parameter is optimized in units of `scales[i]`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], scales: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i] * scales[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= scales[i] * self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Loss snapshot recorded during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub terms: LossBreakdown,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub transform: ComposedTransform,
    pub center_ref: [f64; 2],
    pub seed: u64,
    pub steps: usize,
    pub final_loss: f64,
    pub history: Vec<HistoryRow>,
}

/// Median winding spacing implied by the link point pairs.
fn spacing_from_links(features: &FeatureSet) -> Option<f64> {
    let mut d: Vec<f64> = features
        .links
        .iter()
        .filter(|l| l.offset != 0)
        .flat_map(|l| l.point_pairs.iter().map(move |(a, b)| (b - a).xy().norm() / l.offset.unsigned_abs() as f64))
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Some(if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) })
}

fn identity_for(features: &FeatureSet, rho: f64, direction: Winding, layout: &TransformLayout) -> Result<(ComposedTransform, [f64; 2])> {
    let bounds = features
        .effective_bounds()
        .ok_or_else(|| Error::Config("features contain no points".into()))?;
    let c = bounds.center();
    let spacing = TAU * rho;
    let far = features
        .paths
        .iter()
        .flat_map(|p| p.points.iter())
        .chain(features.normals.iter().map(|n| &n.position))
        .map(|p| ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let theta_max = (far + spacing) / rho;
    let (z0, z1) = (bounds.min[2], bounds.max[2]);
    if !(z1 > z0) {
        return Err(Error::Config("observations have no z extent".into()));
    }
    let spiral = SpiralParams::new(rho, theta_max, z0, z1, direction)?;
    let (lo, hi) = ComposedTransform::canonical_box(&spiral, spacing);
    let mut t = ComposedTransform::identity(spiral, lo, hi, layout);
    t.affine = PerSliceAffine::translation(layout.affine_keypoints, c.x, c.y);
    Ok((t, [c.x, c.y]))
}

/// Initial transform: the canonical spiral placed at the volume center with
/// all deformation parameters at zero. Returns the transform and the
/// centerline reference.
pub fn init_parameters(features: &FeatureSet, config: &FitConfig) -> Result<(ComposedTransform, [f64; 2])> {
    if features.surface_paths().next().is_none() {
        return Err(Error::Config("features contain no surface paths".into()));
    }
    let rho = match config.rho {
        Some(r) => r,
        None => {
            spacing_from_links(features)
                .ok_or_else(|| Error::Config("no winding links to estimate rho; set rho explicitly".into()))?
                / TAU
        }
    };
    if let Some(d) = config.direction {
        return identity_for(features, rho, d, &config.layout);
    }
    // Pick the handedness under which surface paths are closest to constant
    // continuing radius.
    let mut best: Option<(f64, (ComposedTransform, [f64; 2]))> = None;
    for d in [Winding::Anticlockwise, Winding::Clockwise] {
        let cand = identity_for(features, rho, d, &config.layout)?;
        let mut score = 0.0;
        for p in features.surface_paths() {
            let canon: Vec<Vec3> = p.points.iter().map(|x| cand.0.inverse(x)).collect::<Result<_>>()?;
            score += radius_term(&canon, &cand.0.spiral).value;
        }
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, cand));
        }
    }
    Ok(best.unwrap().1)
}

/// Flattened observations the sampler draws from.
struct SamplePool {
    pairs: Vec<PairSample>,
    normals: Vec<NormalSample>,
}

impl SamplePool {
    fn new(features: &FeatureSet) -> Self {
        let pairs = features
            .links
            .iter()
            .flat_map(|l| l.point_pairs.iter().map(move |&(a, b)| PairSample { a, b, offset: l.offset }))
            .collect();
        SamplePool {
            pairs,
            normals: features.normals.clone(),
        }
    }
}

/// Indices of `k` distinct items out of `n` in increasing order, or all of
/// them when `n ≤ k`.
fn subset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut v = index::sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

/// Builds the minibatch for one step. The generator is keyed by the seed and
/// the step number alone, so any step can be reproduced in isolation.
fn sample_batch(
    features: &FeatureSet,
    pool: &SamplePool,
    config: &FitConfig,
    t: &ComposedTransform,
    center_ref: [f64; 2],
    stream: u64,
) -> LossBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut batch = LossBatch::empty();
    batch.terms = config.terms;
    batch.center_ref = center_ref;
    batch.normal_eps = config.normal_eps;
    for pi in subset(&mut rng, features.paths.len(), config.paths_per_batch) {
        let p = &features.paths[pi];
        let pts = subset(&mut rng, p.points.len(), config.points_per_path)
            .into_iter()
            .map(|i| p.points[i])
            .collect();
        batch.paths.push(PathSample { kind: p.kind, points: pts });
    }
    batch.pairs = subset(&mut rng, pool.pairs.len(), config.winding_points)
        .into_iter()
        .map(|i| pool.pairs[i])
        .collect();
    batch.normals = subset(&mut rng, pool.normals.len(), config.normal_points)
        .into_iter()
        .map(|i| pool.normals[i])
        .collect();
    batch.stretch = subset(&mut rng, pool.normals.len(), config.regularization_points)
        .into_iter()
        .map(|i| {
            let n = &pool.normals[i];
            StretchSample::random(n.position, &n.normal, &mut rng)
        })
        .collect();
    let (z0, z1) = t.z_range();
    batch.center_z = (0..config.center_samples).map(|_| rng.random_range(z0..z1)).collect();
    batch
}

/// Snapshot from which fitting resumes exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub transform: ComposedTransform,
    pub center_ref: [f64; 2],
    pub adam: Adam,
    /// Per-parameter units fixed at initialization.
    pub scales: Vec<f64>,
    pub history: Vec<HistoryRow>,
}

/// Stateful optimizer loop.
pub struct Fitter<'a> {
    features: &'a FeatureSet,
    config: FitConfig,
    pool: SamplePool,
    state: Checkpoint,
}

impl<'a> Fitter<'a> {
    pub fn new(features: &'a FeatureSet, config: FitConfig) -> Result<Self> {
        config.validate()?;
        let (transform, center_ref) = init_parameters(features, &config)?;
        let n = ParamVector::len(&transform);
        let scales = ParamVector::scales(&transform);
        let adam = Adam::new(n, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
        let state = Checkpoint {
            step: 0,
            transform,
            center_ref,
            adam,
            scales,
            history: Vec::new(),
        };
        Ok(Self::with_state(features, config, state))
    }

    pub fn restore(features: &'a FeatureSet, config: FitConfig, checkpoint: Checkpoint) -> Result<Self> {
        config.validate()?;
        let n = ParamVector::len(&checkpoint.transform);
        if checkpoint.adam.m.len() != n || checkpoint.scales.len() != n {
            return Err(Error::Config("checkpoint optimizer state does not match its transform".into()));
        }
        Ok(Self::with_state(features, config, checkpoint))
    }

    fn with_state(features: &'a FeatureSet, config: FitConfig, state: Checkpoint) -> Self {
        Fitter {
            features,
            pool: SamplePool::new(features),
            config,
            state,
        }
    }

    pub fn step(&self) -> usize {
        self.state.step
    }

    pub fn transform(&self) -> &ComposedTransform {
        &self.state.transform
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.state
    }

    fn batch(&self, stream: u64) -> LossBatch {
        sample_batch(
            self.features,
            &self.pool,
            &self.config,
            &self.state.transform,
            self.state.center_ref,
            stream,
        )
    }

    /// Runs updates until `target` steps have been taken (capped at
    /// `total_steps`). On a non-finite loss the state stays at the last good
    /// step.
    pub fn run_until(&mut self, target: usize) -> Result<()> {
        let target = target.min(self.config.total_steps);
        let start = self.config.distance_start();
        while self.state.step < target {
            let step = self.state.step;
            let mut batch = self.batch(step as u64);
            batch.terms.distance &= step >= start;
            let eval = evaluate_with_gradients(&batch, &self.state.transform, &self.config.weights).map_err(|e| match e {
                Error::NonFiniteLoss { term, sample } => {
                    log::error!("non-finite {term} loss at step {step}, sample {sample}");
                    e
                }
                other => other,
            })?;
            let grads = eval.grads.flatten();
            if !eval.grads.all_finite() {
                return Err(Error::NonFinite { step });
            }
            if step.is_multiple_of(self.config.history_every) {
                log::debug!("step {step}: loss {:.6}", eval.total);
                self.state.history.push(HistoryRow {
                    step,
                    terms: eval.terms,
                    total: eval.total,
                });
            }
            let mut params = ParamVector::read(&self.state.transform);
            self.state.adam.step(&mut params, &grads, &self.state.scales);
            let mut next = self.state.transform.clone();
            ParamVector::write(&mut next, &params);
            if !(next.spiral.rho > 0.0) {
                return Err(Error::NonFinite { step });
            }
            self.state.transform = next;
            self.state.step += 1;
        }
        Ok(())
    }

    /// Quantizes to the storage precision and evaluates the final loss.
    pub fn finish(self) -> Result<FittedModel> {
        let mut transform = self.state.transform.clone();
        quantize(&mut transform);
        let final_loss = evaluation_loss(self.features, &self.config, &transform, self.state.center_ref)?;
        Ok(FittedModel {
            transform,
            center_ref: self.state.center_ref,
            seed: self.config.seed,
            steps: self.state.step,
            final_loss,
            history: self.state.history,
        })
    }
}

/// Rounds the grid-valued parameters to single precision, as stored on disk.
pub fn quantize(t: &mut ComposedTransform) {
    for v in t.flow.coarse.data.iter_mut().chain(t.flow.fine.data.iter_mut()) {
        *v = v.map(|c| c as f32 as f64);
    }
    for g in &mut t.gap.values {
        *g = *g as f32 as f64;
    }
}

/// Weighted loss of `t` on the fixed evaluation batch for `features`, with
/// every configured term enabled.
pub fn evaluation_loss(features: &FeatureSet, config: &FitConfig, t: &ComposedTransform, center_ref: [f64; 2]) -> Result<f64> {
    let pool = SamplePool::new(features);
    let batch = sample_batch(features, &pool, config, t, center_ref, EVAL_STREAM);
    Ok(evaluate_terms(&batch, t)?.weighted_total(&config.weights, &batch.terms))
}

/// Fits a model to `features` from scratch.
pub fn fit(features: &FeatureSet, config: &FitConfig) -> Result<FittedModel> {
    let mut f = Fitter::new(features, config.clone())?;
    f.run_until(config.total_steps)?;
    f.finish()
}

/// Loss breakdown of `t` on the evaluation batch.
pub fn evaluation_terms(features: &FeatureSet, config: &FitConfig, t: &ComposedTransform, center_ref: [f64; 2]) -> Result<LossBreakdown> {
    let pool = SamplePool::new(features);
    evaluate_terms(&sample_batch(features, &pool, config, t, center_ref, EVAL_STREAM), t)
}
