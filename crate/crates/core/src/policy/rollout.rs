use std::rc::Rc;

use rand::Rng;

use super::autodiff::{Backend, Plain};
use super::model::{decode_logits, encode_with, stack_masks, Encoded, PolicyParams, StepInput};
use super::tensor::{log_softmax_masked, Mat};
use super::PolicyError;
use crate::env::{reset, Solution, State};
use crate::instance::Instance;
use crate::network::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Most probable action, lowest node id on ties.
    Greedy,
    Sample,
}

/// Encoder output for one instance, ready for repeated decoding.
pub struct Encoding {
    params: Vec<Rc<Mat>>,
    enc: Encoded<Rc<Mat>>,
}

impl Encoding {
    pub fn tokens(&self) -> &Mat {
        &self.enc.tokens
    }
}

pub fn encode(p: &PolicyParams, inst: &Instance) -> Result<Encoding, PolicyError> {
    let params = p.shared();
    let enc = encode_with(&mut Plain::new(&params), p, inst)?;
    Ok(Encoding { params, enc })
}

fn probabilities(p: &PolicyParams, e: &Encoding, step: &StepInput) -> Vec<f64> {
    let mut b = Plain::new(&e.params);
    let steps = std::slice::from_ref(step);
    let mask = stack_masks(steps);
    let logits = decode_logits(&mut b, p, &e.enc, steps, mask.clone());
    let lp = log_softmax_masked(b.value(&logits), &mask);
    lp.data
        .iter()
        .map(|&v| if v == f64::NEG_INFINITY { 0.0 } else { v.exp() })
        .collect()
}

/// Action distribution over all nodes at `state`; infeasible nodes get
/// probability exactly zero.
pub fn decode_step(p: &PolicyParams, e: &Encoding, state: &State<'_>) -> Result<Vec<f64>, PolicyError> {
    let input = StepInput::from_state(state)?;
    Ok(probabilities(p, e, &input))
}

/// A recorded decision: the inputs the decoder saw and the action taken.
#[derive(Debug, Clone)]
pub struct Step {
    pub input: StepInput,
    pub action: NodeId,
}

/// One constructed solution with the decisions that had a choice.
#[derive(Debug, Clone)]
pub struct Trace {
    pub solution: Solution,
    pub log_prob: f64,
    pub steps: Vec<Step>,
}

fn choose<R: Rng + ?Sized>(probs: &[f64], mask: &[bool], mode: DecodeMode, rng: &mut R) -> NodeId {
    let feasible = || (0..probs.len()).filter(|&i| mask[i]);
    match mode {
        DecodeMode::Greedy => {
            let mut best = None;
            for i in feasible() {
                if best.is_none_or(|b: NodeId| probs[i] > probs[b]) {
                    best = Some(i);
                }
            }
            best.expect("mask has a feasible node")
        }
        DecodeMode::Sample => {
            let mut r: f64 = rng.gen();
            let mut last = None;
            for i in feasible() {
                if probs[i] > 0.0 {
                    last = Some(i);
                    r -= probs[i];
                    if r < 0.0 {
                        return i;
                    }
                }
            }
            last.or_else(|| feasible().next()).expect("mask has a feasible node")
        }
    }
}

/// `n` complete solutions with their decision records.
pub fn rollout_traces<R: Rng + ?Sized>(
    inst: &Instance,
    p: &PolicyParams,
    mode: DecodeMode,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Trace>, PolicyError> {
    let e = encode(p, inst)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = reset(inst);
        let mut log_prob = 0.0;
        let mut steps = Vec::new();
        while !s.is_terminal() {
            let input = StepInput::from_state(&s)?;
            let mut feasible = input.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i);
            let only = feasible.next().filter(|_| feasible.next().is_none());
            let action = match only {
                Some(a) => a,
                None => {
                    let probs = probabilities(p, &e, &input);
                    let a = choose(&probs, &input.mask, mode, rng);
                    log_prob += probs[a].ln();
                    steps.push(Step { input, action: a });
                    a
                }
            };
            s.step(action)?;
        }
        out.push(Trace {
            solution: s.to_solution(),
            log_prob,
            steps,
        });
    }
    Ok(out)
}

/// `n` solutions paired with their log-probabilities.
pub fn rollout<R: Rng + ?Sized>(
    inst: &Instance,
    p: &PolicyParams,
    mode: DecodeMode,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(Solution, f64)>, PolicyError> {
    Ok(rollout_traces(inst, p, mode, n, rng)?
        .into_iter()
        .map(|t| (t.solution, t.log_prob))
        .collect())
}

/// Re-evaluates the log-probability of every recorded decision in one
/// batched pass. Returns a column with one row per step and, for each row,
/// the index of its trace.
pub fn trace_log_probs<B: Backend>(
    b: &mut B,
    p: &PolicyParams,
    inst: &Instance,
    traces: &[Trace],
) -> Result<(B::V, Vec<usize>), PolicyError> {
    let enc = encode_with(b, p, inst)?;
    let mut inputs = Vec::new();
    let mut picks = Vec::new();
    let mut owner = Vec::new();
    for (t, tr) in traces.iter().enumerate() {
        for st in &tr.steps {
            inputs.push(st.input.clone());
            picks.push(st.action);
            owner.push(t);
        }
    }
    if inputs.is_empty() {
        return Ok((b.constant(Mat::zeros(0, 1)), owner));
    }
    let mask = stack_masks(&inputs);
    let logits = decode_logits(b, p, &enc, &inputs, mask.clone());
    Ok((b.log_softmax_pick(&logits, mask, Rc::new(picks)), owner))
}
