use rand::seq::IteratorRandom;
use rand::Rng;

use super::SolverError;
use crate::env::{reset, Position, Solution, State};
use crate::instance::Instance;
use crate::network::NodeId;

/// Value density of moving to `i`; zero for original nodes.
fn density(s: &State<'_>, from: NodeId, i: NodeId) -> f64 {
    let net = &s.instance().network;
    if !net.is_artificial(i) {
        return 0.0;
    }
    let t = net.arc_time(from, i).unwrap_or(f64::INFINITY);
    net.value(i) / t
}

fn pick_depot(s: &State<'_>, feasible: &[NodeId]) -> NodeId {
    // Depot whose best first move is densest; lowest id on ties.
    let mut best = (f64::NEG_INFINITY, feasible[0]);
    for &o in feasible {
        let mut probe = s.clone();
        let score = match probe.step(o) {
            Ok(()) if !probe.is_terminal() && probe.drone() == s.drone() => probe
                .feasible_mask()
                .map(|m| m.feasible().map(|i| density(&probe, o, i)).fold(0.0, f64::max))
                .unwrap_or(0.0),
            _ => 0.0,
        };
        if score > best.0 {
            best = (score, o);
        }
    }
    best.1
}

/// Next greedy action: densest feasible artificial node, otherwise the
/// nearest feasible original node. Ties go to the lowest id.
pub fn greedy_action(s: &State<'_>) -> Result<NodeId, SolverError> {
    let mask = s.feasible_mask()?;
    let feasible: Vec<NodeId> = mask.feasible().collect();
    if feasible.is_empty() {
        return Err(SolverError::NoFeasibleAction);
    }
    let from = match s.position() {
        Position::Pending => return Ok(pick_depot(s, &feasible)),
        Position::At(j) => j,
    };
    let net = &s.instance().network;
    let mut best: Option<(f64, NodeId)> = None;
    for &i in feasible.iter().filter(|&&i| net.is_artificial(i)) {
        let v = density(s, from, i);
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, i));
        }
    }
    if let Some((_, i)) = best {
        return Ok(i);
    }
    let mut nearest = (f64::INFINITY, feasible[0]);
    for &i in &feasible {
        let t = net.arc_time(from, i).unwrap_or(f64::INFINITY);
        if t < nearest.0 {
            nearest = (t, i);
        }
    }
    Ok(nearest.1)
}

pub fn greedy_heuristic(inst: &Instance) -> Result<Solution, SolverError> {
    let mut s = reset(inst);
    while !s.is_terminal() {
        let a = greedy_action(&s)?;
        s.step(a)?;
    }
    Ok(s.to_solution())
}

/// Uniform choice among feasible actions until the episode ends.
pub fn random_policy_rollout<R: Rng + ?Sized>(inst: &Instance, rng: &mut R) -> Result<Solution, SolverError> {
    let mut s = reset(inst);
    while !s.is_terminal() {
        let a = s
            .feasible_mask()?
            .feasible()
            .choose(rng)
            .ok_or(SolverError::NoFeasibleAction)?;
        s.step(a)?;
    }
    Ok(s.to_solution())
}
