//! Multi-task policy-gradient training: every batch shares one attribute
//! combination, each instance gets a group of sampled rollouts whose mean
//! is the baseline, and rewards are standardised per attribute regime.

mod ema;
mod optim;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{AttributeConfig, Instance, RouteKind};
use crate::instancegen::{generate_instance, GenConfig, GenError, InstanceConfig};
use crate::policy::autodiff::{weighted_sum, Backend, Tape};
use crate::policy::{
    rollout, rollout_traces, trace_log_probs, DecodeMode, Mat, PolicyConfig, PolicyError, PolicyParams, Trace,
};
use crate::Rng as SeededRng;

pub use ema::{normalize_rewards, standardize, EmaEntry, EmaState};
pub use optim::{lr_at, Adam};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("batch mixes attribute combinations {0} and {1}")]
    MixedBatch(AttributeConfig, AttributeConfig),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub group_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub milestones: Vec<usize>,
    pub ema_beta: f64,
    pub ema_eps: f64,
    /// Transformed-network size of training instances.
    pub nodes: usize,
    pub instance: InstanceConfig,
    pub policy: PolicyConfig,
    /// Held-out instances per regime for the per-epoch greedy evaluation;
    /// zero skips it.
    pub eval_instances: usize,
    pub eval_seed: u64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs into `checkpoint_dir`.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            iterations: 50,
            batch_size: 32,
            group_size: 8,
            lr: 1e-3,
            weight_decay: 1e-6,
            lr_decay: 0.1,
            milestones: Vec::new(),
            ema_beta: 0.99,
            ema_eps: 1e-5,
            nodes: 20,
            instance: InstanceConfig::default(),
            policy: PolicyConfig::default(),
            eval_instances: 200,
            eval_seed: 9_001,
            seed: 0,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if self.batch_size == 0 || self.iterations == 0 {
            return bad("batch_size and iterations must be positive");
        }
        if self.epochs > 0 && self.milestones.iter().any(|&m| m >= self.epochs) {
            return bad("milestones must precede the last epoch");
        }
        if !(self.lr > 0.0 && self.weight_decay >= 0.0 && (0.0..1.0).contains(&self.ema_beta) && self.ema_eps > 0.0) {
            return bad("learning rate, weight decay or EMA settings out of range");
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive");
        }
        self.instance
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        GenConfig::for_total_nodes(self.nodes, 0).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        self.policy.validate()?;
        Ok(())
    }
}

/// Loss `-scale · Σ_g a_g · log π(trace_g)` and its parameter gradient.
pub fn policy_gradient(
    params: &PolicyParams,
    inst: &Instance,
    traces: &[Trace],
    advantages: &[f64],
    scale: f64,
) -> Result<(f64, Vec<Mat>), PolicyError> {
    assert_eq!(traces.len(), advantages.len(), "one advantage per trace");
    let shared = params.shared();
    let mut tape = Tape::new(&shared);
    let (lp, owner) = trace_log_probs(&mut tape, params, inst, traces)?;
    if owner.is_empty() {
        return Ok((
            0.0,
            params.tensors().iter().map(|t| Mat::zeros(t.rows, t.cols)).collect(),
        ));
    }
    let w = owner.iter().map(|&t| -advantages[t] * scale).collect();
    let loss = weighted_sum(&mut tape, &lp, w);
    let value = tape.value(&loss).data[0];
    Ok((value, tape.backward(loss)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub mean_reward: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

/// One update from a batch of same-regime instances.
pub fn train_step<R: Rng + ?Sized>(
    batch: &[Instance],
    params: &mut PolicyParams,
    ema: &mut EmaState,
    opt: &mut Adam,
    group_size: usize,
    rng: &mut R,
) -> Result<StepStats, TrainError> {
    let Some(first) = batch.first() else {
        return Err(TrainError::InvalidConfig("empty batch".into()));
    };
    let regime = first.attrs;
    if let Some(other) = batch.iter().find(|i| i.attrs != regime) {
        return Err(TrainError::MixedBatch(regime, other.attrs));
    }
    let scale = 1.0 / (batch.len() * group_size) as f64;
    let mut grads: Vec<Mat> = params.tensors().iter().map(|t| Mat::zeros(t.rows, t.cols)).collect();
    let mut reward_sum = 0.0;
    let mut loss = 0.0;
    for inst in batch {
        let traces = rollout_traces(inst, params, DecodeMode::Sample, group_size, rng)?;
        let rewards: Vec<f64> = traces.iter().map(|t| t.solution.value).collect();
        reward_sum += rewards.iter().sum::<f64>();
        let adv = normalize_rewards(&rewards, regime, ema);
        if adv.iter().all(|&a| a == 0.0) {
            continue;
        }
        // Each instance's loss is already divided by B·G, so the sum over
        // instances is the batch mean.
        let (l, g) = policy_gradient(params, inst, &traces, &adv, scale)?;
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi);
        }
    }
    for (name, g) in params.names().iter().zip(&grads) {
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient(name.clone()));
        }
    }
    let grad_norm = grads
        .iter()
        .flat_map(|g| g.data.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    opt.step(params.tensors_mut(), &grads);
    Ok(StepStats {
        mean_reward: reward_sum * scale,
        loss,
        grad_norm,
    })
}

/// One row of the per-epoch metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub regime: String,
    /// Mean sampled reward over the epoch's batches of this regime.
    pub mean_reward: Option<f64>,
    /// Mean greedy value on the regime's held-out set.
    pub greedy_eval: Option<f64>,
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], w: W) -> Result<(), TrainError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(r: R) -> Result<Vec<MetricRow>, TrainError> {
    let mut rd = csv::Reader::from_reader(r);
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: PolicyParams,
    pub metrics: Vec<MetricRow>,
    pub ema: EmaState,
}

/// The regimes a config trains on: both route kinds and both window
/// settings, with multiple depots when the config has them.
pub fn regimes(cfg: &InstanceConfig) -> Vec<AttributeConfig> {
    if let Some(a) = cfg.attrs {
        return vec![a];
    }
    let md = cfg.depots >= 2;
    let mut out = Vec::new();
    for route in [RouteKind::Closed, RouteKind::Open] {
        for tw in [false, true] {
            let open_ok = match route {
                RouteKind::Open => cfg.open_route_prob > 0.0,
                RouteKind::Closed => cfg.open_route_prob < 1.0,
            };
            let tw_ok = if tw { cfg.tw_prob > 0.0 } else { cfg.tw_prob < 1.0 };
            if open_ok && tw_ok {
                out.push(AttributeConfig {
                    route,
                    time_windows: tw,
                    multi_depot: md,
                });
            }
        }
    }
    out
}

/// `count` instances of one regime drawn from a fixed seed.
pub fn instance_set(
    nodes: usize,
    cfg: &InstanceConfig,
    attrs: AttributeConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<Instance>, TrainError> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let gen = GenConfig::for_total_nodes(nodes, seed)?;
    let icfg = InstanceConfig {
        attrs: Some(attrs),
        ..cfg.clone()
    };
    (0..count)
        .map(|_| Ok(generate_instance(&gen, &icfg, &mut rng)?))
        .collect()
}

/// Held-out evaluation set for one regime; depends only on the seed.
pub fn held_out_set(cfg: &TrainConfig, attrs: AttributeConfig, count: usize) -> Result<Vec<Instance>, TrainError> {
    let tag = AttributeConfig::all().iter().position(|a| *a == attrs).unwrap_or(0) as u64;
    instance_set(cfg.nodes, &cfg.instance, attrs, count, cfg.eval_seed.wrapping_add(tag))
}

/// Mean greedy-decoded value over `set`.
pub fn greedy_mean(params: &PolicyParams, set: &[Instance]) -> Result<f64, PolicyError> {
    let mut rng = SeededRng::seed_from_u64(0);
    let mut total = 0.0;
    for inst in set {
        total += rollout(inst, params, DecodeMode::Greedy, 1, &mut rng)?[0].0.value;
    }
    Ok(total / set.len().max(1) as f64)
}

fn sample_regime<R: Rng + ?Sized>(cfg: &InstanceConfig, rng: &mut R) -> AttributeConfig {
    if let Some(a) = cfg.attrs {
        return a;
    }
    let open = rng.gen_bool(cfg.open_route_prob.clamp(0.0, 1.0));
    let tw = rng.gen_bool(cfg.tw_prob.clamp(0.0, 1.0));
    AttributeConfig {
        route: if open { RouteKind::Open } else { RouteKind::Closed },
        time_windows: tw,
        multi_depot: cfg.depots >= 2,
    }
}

/// Trains from `init`, or from a fresh initialisation drawn from the seed.
pub fn train_from(cfg: &TrainConfig, init: Option<PolicyParams>) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut params = match init {
        Some(p) => p,
        None => PolicyParams::init(cfg.policy, &mut rng)?,
    };
    let mut ema = EmaState::new(cfg.ema_beta, cfg.ema_eps);
    let mut opt = Adam::new(cfg.lr, cfg.weight_decay);
    let gen = GenConfig::for_total_nodes(cfg.nodes, cfg.seed)?;
    let eval_sets: Vec<(AttributeConfig, Vec<Instance>)> = if cfg.eval_instances > 0 {
        regimes(&cfg.instance)
            .into_iter()
            .map(|a| Ok((a, held_out_set(cfg, a, cfg.eval_instances)?)))
            .collect::<Result<_, TrainError>>()?
    } else {
        Vec::new()
    };
    let mut metrics = Vec::new();
    for epoch in 0..cfg.epochs {
        opt.lr = lr_at(cfg.lr, cfg.lr_decay, &cfg.milestones, epoch);
        let mut seen: BTreeMap<AttributeConfig, (f64, usize)> = BTreeMap::new();
        for _ in 0..cfg.iterations {
            let attrs = sample_regime(&cfg.instance, &mut rng);
            let icfg = InstanceConfig {
                attrs: Some(attrs),
                ..cfg.instance.clone()
            };
            let batch = (0..cfg.batch_size)
                .map(|_| generate_instance(&gen, &icfg, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            let stats = train_step(&batch, &mut params, &mut ema, &mut opt, cfg.group_size, &mut rng)?;
            let e = seen.entry(attrs).or_insert((0.0, 0));
            e.0 += stats.mean_reward;
            e.1 += 1;
        }
        let mut names: Vec<AttributeConfig> = seen.keys().copied().collect();
        for (a, _) in &eval_sets {
            if !names.contains(a) {
                names.push(*a);
            }
        }
        names.sort();
        for a in names {
            let greedy_eval = match eval_sets.iter().find(|(r, _)| *r == a) {
                Some((_, set)) => Some(greedy_mean(&params, set)?),
                None => None,
            };
            metrics.push(MetricRow {
                epoch,
                regime: a.name(),
                mean_reward: seen.get(&a).map(|(s, n)| s / *n as f64),
                greedy_eval,
            });
        }
        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, &cfg.checkpoint_dir) {
            if (epoch + 1) % every == 0 {
                std::fs::create_dir_all(dir)?;
                params.save(&dir.join(format!("epoch{}.json", epoch + 1)))?;
            }
        }
    }
    Ok(TrainOutput { params, metrics, ema })
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutput, TrainError> {
    train_from(cfg, None)
}

/// Expands `pretrained` for multiple depots and continues training on
/// multi-depot instances. Every parameter stays trainable.
pub fn finetune_md(pretrained: &PolicyParams, cfg: &TrainConfig) -> Result<TrainOutput, TrainError> {
    let expanded = pretrained.expand_for_md()?;
    let mut cfg = cfg.clone();
    cfg.instance.depots = cfg.instance.depots.max(2);
    if let Some(a) = cfg.instance.attrs.as_mut() {
        a.multi_depot = true;
    }
    cfg.policy = *expanded.config();
    train_from(&cfg, Some(expanded))
}
