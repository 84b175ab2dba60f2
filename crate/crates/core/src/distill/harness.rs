//! Multi-teacher distillation of synthetic teachers into a small student with a
//! shared trunk and one linear head per teacher.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adaloss::{adaloss_update, AdaLossState};
use super::loss::LossConfig;
use super::teacher::{SyntheticShape, TeacherSpec, REFERENCE_TEACHERS};
use crate::analysis::{variance_range_with, VarianceRangeReport};
use crate::error::{Error, Result};
use crate::linalg::standard_normal;
use crate::moments::accumulate;
use crate::normalize::{fit, FitOptions, LinearMap, Method};

const STREAM_TRAIN_LATENT: u64 = 0;
const STREAM_EVAL_LATENT: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_BATCHES: u64 = 3;
const STREAM_TEACHER: u64 = 10;
const STREAM_TRAIN_NOISE: u64 = 100;
const STREAM_EVAL_NOISE: u64 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub name: String,
    pub global_mean: f64,
    pub global_sigma: f64,
    pub channels: usize,
    /// `None` trains on the raw features.
    pub method: Option<Method>,
    /// Weight of this teacher's term in the aggregate loss.
    #[serde(default = "unit")]
    pub weight: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentConfig {
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig { width: 32, depth: 1, activation: Activation::Identity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaLossConfig {
    pub decay: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub teachers: Vec<TeacherConfig>,
    /// Dimension of the signal shared by all teachers and fed to the student.
    pub shared_dim: usize,
    pub shape: SyntheticShape,
    pub student: StudentConfig,
    pub loss: LossConfig,
    pub adaloss: Option<AdaLossConfig>,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_samples: usize,
    pub eval_samples: usize,
    /// Held-out metrics are recorded every `log_every` steps and after the last one.
    pub log_every: usize,
    pub histogram_bins: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig::reference(None, 64)
    }
}

impl DistillConfig {
    /// The four reference teachers, each with `channels` channels, all normalized by
    /// `method`.
    pub fn reference(method: Option<Method>, channels: usize) -> Self {
        let teachers = REFERENCE_TEACHERS
            .iter()
            .map(|&(name, mu, sigma)| TeacherConfig {
                name: name.to_string(),
                global_mean: mu,
                global_sigma: sigma,
                channels,
                method,
                weight: 1.0,
            })
            .collect();
        DistillConfig {
            teachers,
            shared_dim: channels,
            shape: SyntheticShape::default(),
            student: StudentConfig { width: channels.div_ceil(2), ..StudentConfig::default() },
            loss: LossConfig::mse(),
            adaloss: None,
            steps: 2000,
            learning_rate: 0.1,
            batch_size: 512,
            train_samples: 20_000,
            eval_samples: 4096,
            log_every: 10,
            histogram_bins: 48,
            seed: 0,
        }
    }

    /// The same run with every teacher normalized by `method`.
    pub fn with_method(mut self, method: Option<Method>) -> Self {
        for t in &mut self.teachers {
            t.method = method;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.teachers.is_empty() {
            return bad("at least one teacher is required".into());
        }
        for t in &self.teachers {
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return bad(format!("teacher `{}` has weight {}", t.name, t.weight));
            }
            if t.channels > self.shared_dim {
                return bad(format!("teacher `{}` has more channels than the shared dimension", t.name));
            }
        }
        if self.student.width == 0 || self.student.depth == 0 {
            return bad("student width and depth must be positive".into());
        }
        if self.batch_size == 0 || self.train_samples < 2 || self.eval_samples < 2 || self.log_every == 0 {
            return bad("batch size, log interval and sample counts must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.histogram_bins == 0 {
            return bad("histogram needs at least one bin".into());
        }
        self.loss.validate()
    }
}

/// Tag used in reports for a teacher's normalization.
pub fn method_label(method: Option<Method>) -> &'static str {
    method.map_or("baseline", Method::tag)
}

/// Held-out metrics and training state at the logged steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<usize>,
    pub normalized_mse: Vec<f64>,
    pub denormalized_mse: Vec<f64>,
    /// Configured loss on the minibatch of that step, before weighting.
    pub train_loss: Vec<f64>,
    /// Weight applied to the term at that step.
    pub weight: Vec<f64>,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,normalized_mse,denormalized_mse,train_loss,weight\n");
        for i in 0..self.steps.len() {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e}\n",
                self.steps[i], self.normalized_mse[i], self.denormalized_mse[i], self.train_loss[i], self.weight[i]
            ));
        }
        out
    }
}

/// Counts of `log10` per-sample normalized loss over equal-width bins on
/// `[log10_min, log10_max]`; values outside land in the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub log10_min: f64,
    pub log10_max: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    const LOW: f64 = -5.0;
    const HIGH: f64 = 3.0;

    fn of(values: impl Iterator<Item = f64>, bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        let width = (Self::HIGH - Self::LOW) / bins as f64;
        for v in values {
            let x = v.max(1e-300).log10();
            let b = ((x - Self::LOW) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
            counts[b] += 1;
        }
        Histogram { log10_min: Self::LOW, log10_max: Self::HIGH, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherReport {
    pub name: String,
    pub method: String,
    pub global_sigma: f64,
    pub trajectory: Trajectory,
    pub final_normalized_mse: f64,
    pub final_denormalized_mse: f64,
    pub variance: VarianceRangeReport,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub config: DistillConfig,
    /// Learning rate after dividing by the root of the largest weighted target power.
    pub effective_learning_rate: f64,
    pub teachers: Vec<TeacherReport>,
}

impl DistillReport {
    /// `max / min` of the final held-out denormalized MSE across teachers.
    pub fn denormalized_spread(&self) -> f64 {
        spread_ratio(self.teachers.iter().map(|t| t.final_denormalized_mse))
    }

    /// `max / min` of the final held-out normalized MSE across teachers.
    pub fn normalized_spread(&self) -> f64 {
        spread_ratio(self.teachers.iter().map(|t| t.final_normalized_mse))
    }

    /// Share of the summed unnormalized loss contributed by each teacher at step 0.
    pub fn initial_loss_shares(&self) -> Vec<f64> {
        let first: Vec<f64> = self.teachers.iter().map(|t| t.trajectory.denormalized_mse[0]).collect();
        let total: f64 = first.iter().sum();
        first.iter().map(|v| v / total).collect()
    }
}

fn spread_ratio(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi / lo
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Layer {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl Layer {
    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    fn step(&mut self, input: ArrayView2<'_, f64>, grad_out: ArrayView2<'_, f64>, lr: f64) {
        self.weight.scaled_add(-lr, &grad_out.t().dot(&input));
        self.bias.scaled_add(-lr, &grad_out.sum_axis(Axis(0)));
    }
}

struct Student {
    trunk: Vec<Layer>,
    heads: Vec<Layer>,
    activation: Activation,
}

impl Student {
    fn new(cfg: &DistillConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = cfg.student.width;
        let trunk = (0..cfg.student.depth)
            .map(|l| {
                let fan_in = if l == 0 { cfg.shared_dim } else { w };
                Layer { weight: standard_normal(rng, w, fan_in) / (fan_in as f64).sqrt(), bias: Array1::zeros(w) }
            })
            .collect();
        let heads = cfg
            .teachers
            .iter()
            .map(|t| Layer { weight: Array2::zeros((t.channels, w)), bias: Array1::zeros(t.channels) })
            .collect();
        Student { trunk, heads, activation: cfg.student.activation }
    }

    /// Inputs to every trunk layer followed by the trunk output.
    fn trunk_activations(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        for layer in &self.trunk {
            let mut h = layer.forward(acts.last().expect("non-empty").view());
            if self.activation == Activation::Relu {
                h.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(h);
        }
        acts
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let acts = self.trunk_activations(x);
        let h = acts.last().expect("non-empty");
        self.heads.iter().map(|head| head.forward(h.view())).collect()
    }

    /// One gradient step given the loss gradient for each head's output.
    fn backward(&mut self, acts: &[Array2<f64>], head_grads: &[Array2<f64>], lr: f64) {
        let top = acts.last().expect("non-empty");
        let mut grad_h = Array2::<f64>::zeros(top.dim());
        for (head, g) in self.heads.iter_mut().zip(head_grads) {
            grad_h += &g.dot(&head.weight);
            head.step(top.view(), g.view(), lr);
        }
        for (l, layer) in self.trunk.iter_mut().enumerate().rev() {
            if self.activation == Activation::Relu {
                grad_h.zip_mut_with(&acts[l + 1], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let below = grad_h.dot(&layer.weight);
            layer.step(acts[l].view(), grad_h.view(), lr);
            grad_h = below;
        }
    }
}

struct PreparedTeacher {
    back_map: LinearMap,
    train_target: Array2<f64>,
    eval_target: Array2<f64>,
}

fn prepare(cfg: &DistillConfig, z_train: &Array2<f64>, z_eval: &Array2<f64>) -> Result<Vec<PreparedTeacher>> {
    cfg.teachers
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let i = i as u64;
            let spec = TeacherSpec::synthetic(
                t.name.clone(),
                cfg.shared_dim,
                t.channels,
                t.global_mean,
                t.global_sigma,
                &cfg.shape,
                &mut stream(cfg.seed, STREAM_TEACHER + i),
            )?;
            let with_noise = |z: &Array2<f64>, id: u64| -> Result<Array2<f64>> {
                let noise = standard_normal(&mut stream(cfg.seed, id), z.nrows(), t.channels);
                let latent = concatenate(Axis(1), &[z.view(), noise.view()]).expect("same row count");
                Ok(spec.generate(latent.view())?.into_inner())
            };
            let train = with_noise(z_train, STREAM_TRAIN_NOISE + i)?;
            let eval = with_noise(z_eval, STREAM_EVAL_NOISE + i)?;
            match t.method {
                None => Ok(PreparedTeacher { back_map: LinearMap::Scalar(1.0), train_target: train, eval_target: eval }),
                Some(m) => {
                    let data = crate::moments::FeatureMatrix::new(train)?;
                    let stats = accumulate(&data, 4096)?.finalize()?;
                    let nrm = fit(&stats, m, &FitOptions::default())?;
                    Ok(PreparedTeacher {
                        back_map: nrm.inverse().clone(),
                        train_target: nrm.apply(data.view())?,
                        eval_target: nrm.apply(eval.view())?,
                    })
                }
            }
        })
        .collect()
}

fn mean_square(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64
}

/// Trains the student against every teacher at once and reports per-teacher metrics
/// in both normalized and original space.
pub fn run_distillation(cfg: &DistillConfig) -> Result<DistillReport> {
    cfg.validate()?;
    let z_train = standard_normal(&mut stream(cfg.seed, STREAM_TRAIN_LATENT), cfg.train_samples, cfg.shared_dim);
    let z_eval = standard_normal(&mut stream(cfg.seed, STREAM_EVAL_LATENT), cfg.eval_samples, cfg.shared_dim);
    let teachers = prepare(cfg, &z_train, &z_eval)?;

    let power = cfg
        .teachers
        .iter()
        .zip(&teachers)
        .map(|(t, p)| t.weight * mean_square(&p.train_target))
        .fold(0.0, f64::max);
    let lr = cfg.learning_rate / power.sqrt().max(1.0);

    let mut student = Student::new(cfg, &mut stream(cfg.seed, STREAM_INIT));
    let mut batches = stream(cfg.seed, STREAM_BATCHES);
    let mut ada = cfg.adaloss.map(|a| AdaLossState::new(a.decay, a.epsilon)).transpose()?;
    let mut trajectories = vec![Trajectory::default(); teachers.len()];

    let evaluate = |student: &Student, step: usize, train: &[(f64, f64)], traj: &mut [Trajectory]| {
        let preds = student.predict(z_eval.view());
        for ((p, t), (tr, (loss, weight))) in preds.iter().zip(&teachers).zip(traj.iter_mut().zip(train)) {
            let err = p - &t.eval_target;
            tr.steps.push(step);
            tr.normalized_mse.push(mean_square(&err));
            tr.denormalized_mse.push(mean_square(&t.back_map.apply_rows(err.view())));
            tr.train_loss.push(*loss);
            tr.weight.push(*weight);
        }
    };

    let mut last = Vec::new();
    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| batches.random_range(0..cfg.train_samples)).collect();
        let x = z_train.select(Axis(0), &idx);
        let acts = student.trunk_activations(x.view());
        let top = acts.last().expect("non-empty");
        let mut losses = Vec::with_capacity(teachers.len());
        let mut grads = Vec::with_capacity(teachers.len());
        for (head, t) in student.heads.iter().zip(&teachers) {
            let pred = head.forward(top.view());
            let target = t.train_target.select(Axis(0), &idx);
            let (value, grad) = cfg.loss.value_and_grad(pred.view(), target.view())?;
            if !value.is_finite() {
                return Err(Error::TrainingDiverged { step });
            }
            losses.push(value);
            grads.push(grad);
        }
        let ada_weights = match &mut ada {
            Some(state) => adaloss_update(state, &losses)?,
            None => vec![1.0; losses.len()],
        };
        let weights: Vec<f64> = cfg.teachers.iter().zip(&ada_weights).map(|(t, w)| t.weight * w).collect();
        last = losses.iter().copied().zip(weights.iter().copied()).collect();
        if step % cfg.log_every == 0 {
            evaluate(&student, step, &last, &mut trajectories);
        }
        for (g, w) in grads.iter_mut().zip(&weights) {
            *g *= *w;
        }
        student.backward(&acts, &grads, lr);
    }
    evaluate(&student, cfg.steps, &last_or_zero(&last, teachers.len()), &mut trajectories);
    if trajectories.iter().flat_map(|t| &t.denormalized_mse).any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged { step: cfg.steps });
    }

    let preds = student.predict(z_eval.view());
    let mut reports = Vec::with_capacity(teachers.len());
    for (((t, p), pred), traj) in cfg.teachers.iter().zip(&teachers).zip(&preds).zip(trajectories) {
        let err = pred - &p.eval_target;
        let per_sample = err.map_axis(Axis(1), |row| row.dot(&row) / row.len() as f64);
        reports.push(TeacherReport {
            name: t.name.clone(),
            method: method_label(t.method).to_string(),
            global_sigma: t.global_sigma,
            final_normalized_mse: *traj.normalized_mse.last().expect("logged"),
            final_denormalized_mse: *traj.denormalized_mse.last().expect("logged"),
            variance: variance_range_with(&p.back_map, err.view())?,
            histogram: Histogram::of(per_sample.iter().copied(), cfg.histogram_bins),
            trajectory: traj,
        });
    }
    Ok(DistillReport { config: cfg.clone(), effective_learning_rate: lr, teachers: reports })
}

fn last_or_zero(last: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    if last.is_empty() {
        vec![(0.0, 1.0); n]
    } else {
        last.to_vec()
    }
}
