//! Autoregressive route construction: state, feasibility masks, transitions
//! and termination for all eight variants.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, TwRule};
use crate::network::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("state is terminal")]
    TerminalState,
    #[error("action {action} is infeasible at drone {drone}")]
    InfeasibleAction { action: NodeId, drone: usize },
    #[error("route {route} does not end where the environment ends it")]
    RouteBoundaryMismatch { route: usize },
    #[error("solution has {found} routes, instance has {expected} drones")]
    RouteCount { expected: usize, found: usize },
}

/// Feasibility per node id; `true` means selectable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask(pub Vec<bool>);

impl Mask {
    pub fn allows(&self, i: NodeId) -> bool {
        self.0.get(i).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|b| *b)
    }

    /// Feasible node ids in ascending order.
    pub fn feasible(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }
}

/// Where the active drone is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    /// Multi-depot only: the drone has not picked its launch depot yet.
    Pending,
    At(NodeId),
}

/// A finished set of routes. Each route starts at its depot; drones that
/// never launched have empty routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub routes: Vec<Vec<NodeId>>,
    pub times: Vec<f64>,
    pub value: f64,
}

impl Solution {
    pub fn from_json(s: &str) -> Result<Solution, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Sum of c_p over the distinct artificial nodes in `routes`, added in
/// ascending node order.
pub fn solution_value(inst: &Instance, routes: &[Vec<NodeId>]) -> f64 {
    let net = &inst.network;
    let mut seen = vec![false; net.len()];
    for &i in routes.iter().flatten() {
        if i < seen.len() {
            seen[i] = true;
        }
    }
    net.artificials().filter(|&p| seen[p]).map(|p| net.value(p)).sum()
}

#[derive(Debug, Clone)]
pub struct State<'a> {
    inst: &'a Instance,
    k: usize,
    d: f64,
    pos: Position,
    origin: Option<NodeId>,
    collected: Vec<bool>,
    n_collected: usize,
    depot_used: Vec<usize>,
    routes: Vec<Vec<NodeId>>,
    times: Vec<f64>,
    done: bool,
}

pub fn reset(inst: &Instance) -> State<'_> {
    let mut s = State {
        inst,
        k: 0,
        d: 0.0,
        pos: Position::Pending,
        origin: None,
        collected: vec![false; inst.network.len()],
        n_collected: 0,
        depot_used: vec![0; inst.depots.len()],
        routes: vec![Vec::new(); inst.drones],
        times: vec![0.0; inst.drones],
        done: false,
    };
    if inst.network.n_artificial() == 0 {
        s.done = true;
    } else {
        s.begin_route();
    }
    s
}

impl<'a> State<'a> {
    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    /// Zero-based index of the active drone.
    pub fn drone(&self) -> usize {
        self.k
    }

    /// Time since the active drone launched.
    pub fn clock(&self) -> f64 {
        self.d
    }

    pub fn position(&self) -> Position {
        self.pos
    }

    /// Launch depot of the active drone, once chosen.
    pub fn origin(&self) -> Option<NodeId> {
        self.origin
    }

    pub fn is_collected(&self, i: NodeId) -> bool {
        self.collected[i]
    }

    pub fn collected_count(&self) -> usize {
        self.n_collected
    }

    /// Launches so far per depot, in instance depot order.
    pub fn depot_usage(&self) -> &[usize] {
        &self.depot_used
    }

    pub fn routes(&self) -> &[Vec<NodeId>] {
        &self.routes
    }

    /// Trajectory of the active drone so far.
    pub fn current_route(&self) -> &[NodeId] {
        self.routes.get(self.k).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_terminal(&self) -> bool {
        self.done
    }

    /// Collected value so far.
    pub fn value(&self) -> f64 {
        let net = &self.inst.network;
        net.artificials()
            .filter(|&p| self.collected[p])
            .map(|p| net.value(p))
            .sum()
    }

    pub fn feasible_mask(&self) -> Result<Mask, EnvError> {
        if self.done {
            return Err(EnvError::TerminalState);
        }
        let mut m = vec![false; self.inst.network.len()];
        match self.pos {
            Position::Pending => {
                for (o, dep) in self.inst.depots.iter().enumerate() {
                    if self.depot_used[o] < dep.capacity {
                        m[dep.node] = true;
                    }
                }
            }
            Position::At(j) => {
                for i in self.inst.network.neighbors(j) {
                    m[i] = self.allowed(j, i);
                }
            }
        }
        Ok(Mask(m))
    }

    fn allowed(&self, j: NodeId, i: NodeId) -> bool {
        let inst = self.inst;
        let net = &inst.network;
        let Some(t) = net.arc_time(j, i) else {
            return false;
        };
        let artificial = net.is_artificial(i);
        if artificial && self.collected[i] {
            return false;
        }
        let arrive = self.d + t;
        // Full traversal of the link when entering an artificial node.
        let through = arrive + t;
        let tw_time = if artificial && inst.tw_rule == TwRule::Completion {
            through
        } else {
            arrive
        };
        if tw_time > inst.window(i) {
            return false;
        }
        let budget = inst.budget();
        if inst.attrs.is_open() {
            if artificial {
                through <= budget
            } else {
                arrive <= budget
            }
        } else {
            let dep = self.origin.expect("origin set once positioned");
            if artificial {
                through + net.return_time(net.far_endpoint(i, j), dep) <= budget
            } else {
                arrive + net.return_time(i, dep) <= budget
            }
        }
    }

    pub fn step(&mut self, action: NodeId) -> Result<(), EnvError> {
        let mask = self.feasible_mask()?;
        if !mask.allows(action) {
            return Err(EnvError::InfeasibleAction { action, drone: self.k });
        }
        let net = &self.inst.network;
        match self.pos {
            Position::Pending => {
                let o = self
                    .inst
                    .depots
                    .iter()
                    .position(|d| d.node == action)
                    .expect("mask only admits depots");
                self.depot_used[o] += 1;
                self.origin = Some(action);
                self.pos = Position::At(action);
                self.routes[self.k].push(action);
                if self.feasible_mask()?.is_empty() {
                    self.end_route();
                }
                return Ok(());
            }
            Position::At(j) => {
                self.d += net.arc_time(j, action).expect("mask only admits arcs");
            }
        }
        self.pos = Position::At(action);
        self.routes[self.k].push(action);
        if net.is_artificial(action) {
            self.collected[action] = true;
            self.n_collected += 1;
        }
        let all_collected = self.n_collected == net.n_artificial();
        if self.inst.attrs.is_open() {
            if all_collected || self.feasible_mask()?.is_empty() {
                self.end_route();
            }
        } else if Some(action) == self.origin {
            self.end_route();
        }
        Ok(())
    }

    /// Finishes the active route, then starts the next one unless done.
    fn end_route(&mut self) {
        self.times[self.k] = self.d;
        self.k += 1;
        self.d = 0.0;
        self.origin = None;
        self.pos = Position::Pending;
        if self.k >= self.inst.drones || self.n_collected == self.inst.network.n_artificial() {
            self.done = true;
        } else {
            self.begin_route();
        }
    }

    fn begin_route(&mut self) {
        if self.inst.attrs.multi_depot {
            return;
        }
        let o = self.inst.depot();
        self.depot_used[0] += 1;
        self.origin = Some(o);
        self.pos = Position::At(o);
        self.routes[self.k].push(o);
        if self.feasible_mask().map(|m| m.is_empty()).unwrap_or(false) {
            self.end_route();
        }
    }

    pub fn to_solution(&self) -> Solution {
        Solution {
            routes: self.routes.clone(),
            times: self.times.clone(),
            value: self.value(),
        }
    }
}

/// Replays `sol` through the environment, requiring every action to be
/// feasible and every route to end exactly where the environment ends it.
pub fn replay<'a>(inst: &'a Instance, sol: &Solution) -> Result<State<'a>, EnvError> {
    if sol.routes.len() != inst.drones {
        return Err(EnvError::RouteCount {
            expected: inst.drones,
            found: sol.routes.len(),
        });
    }
    let mut s = reset(inst);
    for (r, route) in sol.routes.iter().enumerate() {
        // Routes the environment closed on its own (no feasible first move,
        // or the mission ended) must match what it recorded.
        if s.done || s.k > r {
            if *route == s.routes[r] {
                continue;
            }
            return Err(EnvError::RouteBoundaryMismatch { route: r });
        }
        if s.k != r || route.is_empty() {
            return Err(EnvError::RouteBoundaryMismatch { route: r });
        }
        let mut actions = route.iter().copied();
        if s.pos != Position::Pending {
            // The depot start is placed by the environment itself.
            if actions.next() != s.origin {
                return Err(EnvError::RouteBoundaryMismatch { route: r });
            }
        }
        for a in actions {
            if s.done || s.k != r {
                return Err(EnvError::RouteBoundaryMismatch { route: r });
            }
            s.step(a)?;
        }
        if !s.done && s.k == r {
            return Err(EnvError::RouteBoundaryMismatch { route: r });
        }
    }
    Ok(s)
}
