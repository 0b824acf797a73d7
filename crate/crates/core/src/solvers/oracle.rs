use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::env::{reset, Position, Solution, State};
use crate::instance::Instance;
use crate::network::NodeId;

/// Size guard for the exact search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_artificial: usize,
    pub max_original: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_artificial: 6,
            max_original: 10,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Key {
    drone: usize,
    pos: Position,
    origin: Option<NodeId>,
    collected: u64,
    usage: Vec<usize>,
    /// Exact clock for open routes, where labels only merge when identical.
    clock: Option<u64>,
}

fn key(s: &State<'_>) -> Key {
    let net = &s.instance().network;
    let collected = net
        .artificials()
        .enumerate()
        .filter(|(_, p)| s.is_collected(*p))
        .fold(0u64, |m, (b, _)| m | (1 << b));
    Key {
        drone: s.drone(),
        pos: s.position(),
        origin: s.origin(),
        collected,
        usage: s.depot_usage().to_vec(),
        clock: s.instance().attrs.is_open().then(|| s.clock().to_bits()),
    }
}

struct Label {
    drone: usize,
    clock: f64,
    idx: usize,
}

impl PartialEq for Label {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Label {}
impl PartialOrd for Label {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Label {
    // Reversed: the heap pops the lowest (drone, clock, insertion) first.
    fn cmp(&self, o: &Self) -> Ordering {
        o.drone
            .cmp(&self.drone)
            .then(o.clock.total_cmp(&self.clock))
            .then(o.idx.cmp(&self.idx))
    }
}

fn total_time(s: &Solution) -> f64 {
    s.times.iter().sum()
}

fn better(a: &Solution, b: &Solution) -> bool {
    match a.value.total_cmp(&b.value) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match total_time(a).total_cmp(&total_time(b)) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.routes < b.routes,
        },
    }
}

pub fn exact_oracle(inst: &Instance) -> Result<Solution, SolverError> {
    exact_oracle_with(inst, OracleLimits::default())
}

/// Maximum-value solution over the environment's action space.
///
/// Labels are expanded in (drone, clock) order. On closed routes a label is
/// dropped when another one with the same drone, position, collected set
/// and depot usage got there no later: masks only shrink as the clock grows
/// and the route ends on the same voluntary return, so the earlier label can
/// replay any continuation. Open routes end when the mask runs empty, which
/// an earlier label may never reach on the same moves, so there only
/// identical labels merge.
pub fn exact_oracle_with(inst: &Instance, limits: OracleLimits) -> Result<Solution, SolverError> {
    let net = &inst.network;
    if net.n_artificial() > limits.max_artificial.min(64) || net.n_original() > limits.max_original {
        return Err(SolverError::InstanceTooLarge {
            artificial: net.n_artificial(),
            original: net.n_original(),
        });
    }
    let mut states: Vec<State<'_>> = vec![reset(inst)];
    let mut best_clock: HashMap<Key, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        drone: 0,
        clock: 0.0,
        idx: 0,
    });
    let mut best: Option<Solution> = None;
    while let Some(Label { idx, clock, .. }) = heap.pop() {
        let s = states[idx].clone();
        if s.is_terminal() {
            let sol = s.to_solution();
            if best.as_ref().is_none_or(|b| better(&sol, b)) {
                best = Some(sol);
            }
            continue;
        }
        if best_clock.get(&key(&s)).is_some_and(|&c| c < clock) {
            continue;
        }
        let mask = s.feasible_mask()?;
        for a in mask.feasible() {
            let mut next = s.clone();
            next.step(a)?;
            if !next.is_terminal() {
                match best_clock.entry(key(&next)) {
                    Entry::Occupied(mut e) => {
                        if *e.get() <= next.clock() {
                            continue;
                        }
                        e.insert(next.clock());
                    }
                    Entry::Vacant(e) => {
                        e.insert(next.clock());
                    }
                }
            }
            heap.push(Label {
                drone: next.drone(),
                clock: next.clock(),
                idx: states.len(),
            });
            states.push(next);
        }
    }
    Ok(best.expect("reset state is always explored"))
}
