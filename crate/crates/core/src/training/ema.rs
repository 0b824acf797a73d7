use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::instance::AttributeConfig;

/// Running reward statistics for one attribute regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaEntry {
    pub mean: f64,
    pub var: f64,
    pub updates: u64,
}

/// Per-regime exponential moving averages of reward mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaState {
    pub beta: f64,
    pub eps: f64,
    entries: BTreeMap<AttributeConfig, EmaEntry>,
}

impl Default for EmaState {
    fn default() -> Self {
        EmaState::new(0.99, 1e-5)
    }
}

impl EmaState {
    pub fn new(beta: f64, eps: f64) -> Self {
        EmaState {
            beta,
            eps,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, regime: AttributeConfig) -> Option<&EmaEntry> {
        self.entries.get(&regime)
    }

    pub fn regimes(&self) -> impl Iterator<Item = AttributeConfig> + '_ {
        self.entries.keys().copied()
    }

    /// Folds one batch into the regime's averages; the first batch seeds
    /// them directly.
    pub fn update(&mut self, regime: AttributeConfig, batch_mean: f64, batch_var: f64) -> EmaEntry {
        let beta = self.beta;
        let e = self
            .entries
            .entry(regime)
            .and_modify(|e| {
                e.mean = beta * e.mean + (1.0 - beta) * batch_mean;
                e.var = beta * e.var + (1.0 - beta) * batch_var;
                e.updates += 1;
            })
            .or_insert(EmaEntry {
                mean: batch_mean,
                var: batch_var,
                updates: 1,
            });
        *e
    }
}

/// Z-scores `rewards` against the regime's running statistics (after
/// folding this group in), as `(r - μ) / (σ + ε)`.
pub fn standardize(rewards: &[f64], regime: AttributeConfig, ema: &mut EmaState) -> Vec<f64> {
    assert!(!rewards.is_empty(), "empty reward group");
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let e = ema.update(regime, mean, var);
    let sd = e.var.max(0.0).sqrt();
    rewards.iter().map(|r| (r - e.mean) / (sd + ema.eps)).collect()
}

/// Standardised rewards minus their group mean, so they sum to zero.
pub fn normalize_rewards(rewards: &[f64], regime: AttributeConfig, ema: &mut EmaState) -> Vec<f64> {
    let z = standardize(rewards, regime, ema);
    let base = z.iter().sum::<f64>() / z.len() as f64;
    z.iter().map(|v| v - base).collect()
}
