//! Solution checker written against the instance data alone. It shares no
//! code with the environment beyond arc-time lookups.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::Solution;
use crate::instance::{Instance, TwRule};
use crate::network::{NetworkError, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Connectivity,
    Exclusivity,
    TimeWindow,
    Budget,
    DepotReturn,
    DepotCapacity,
    /// Route length and start/stop discipline.
    Termination,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Connectivity => "connectivity",
            Rule::Exclusivity => "exclusivity",
            Rule::TimeWindow => "time-window",
            Rule::Budget => "budget",
            Rule::DepotReturn => "depot-return",
            Rule::DepotCapacity => "depot-capacity",
            Rule::Termination => "termination",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub route: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
    pub value: f64,
}

impl ValidationReport {
    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

struct Checker<'a> {
    inst: &'a Instance,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn flag(&mut self, rule: Rule, route: Option<usize>, detail: String) {
        self.out.push(Violation { rule, route, detail });
    }

    /// Whether moving from `j` to `i` at clock `d` respects windows and the
    /// per-route budget.
    fn admissible(&self, j: NodeId, i: NodeId, d: f64, origin: NodeId, seen: &[bool]) -> bool {
        let net = &self.inst.network;
        let Some(t) = net.arc_time(j, i) else { return false };
        let p = net.is_artificial(i);
        if p && seen[i] {
            return false;
        }
        window_ok(self.inst, i, d, t) && budget_ok(self.inst, j, i, d, t, origin)
    }

    fn any_move(&self, j: NodeId, d: f64, origin: NodeId, seen: &[bool]) -> bool {
        (0..self.inst.network.len()).any(|i| self.admissible(j, i, d, origin, seen))
    }
}

fn window_ok(inst: &Instance, i: NodeId, d: f64, t: f64) -> bool {
    if !inst.attrs.time_windows {
        return true;
    }
    let at = if inst.network.is_artificial(i) && inst.tw_rule == TwRule::Completion {
        d + t + t
    } else {
        d + t
    };
    at <= inst.time_windows[i]
}

fn budget_ok(inst: &Instance, j: NodeId, i: NodeId, d: f64, t: f64, origin: NodeId) -> bool {
    let net = &inst.network;
    let b = inst.p_max.min(inst.battery);
    let p = net.is_artificial(i);
    let used = if p { d + t + t } else { d + t };
    if inst.attrs.is_open() {
        return used <= b;
    }
    let land = if p { net.far_endpoint(i, j) } else { i };
    used + net.return_time(land, origin) <= b
}

/// Checks every routing rule and recomputes the collected value.
pub fn validate_solution(inst: &Instance, sol: &Solution) -> Result<ValidationReport, NetworkError> {
    let net = &inst.network;
    let n = net.len();
    if let Some(&bad) = sol.routes.iter().flatten().find(|&&i| i >= n) {
        return Err(NetworkError::UnknownNode(bad as u64));
    }
    let mut c = Checker { inst, out: Vec::new() };
    if sol.routes.len() != inst.drones {
        c.flag(
            Rule::Termination,
            None,
            format!("{} routes for {} drones", sol.routes.len(), inst.drones),
        );
    }
    let closed = !inst.attrs.is_open();
    let total_p = net.n_artificial();
    let mut seen = vec![false; n];
    let mut n_seen = 0usize;
    let mut launches = vec![0usize; inst.depots.len()];
    let mut finished = total_p == 0;

    for (k, route) in sol.routes.iter().enumerate() {
        let rk = Some(k);
        if route.is_empty() {
            if !finished {
                c.flag(Rule::Termination, rk, "drone left idle while work remains".into());
            }
            continue;
        }
        if finished {
            c.flag(Rule::Termination, rk, "route flown after the mission ended".into());
        }
        let origin = route[0];
        match inst.depots.iter().position(|d| d.node == origin) {
            Some(o) if inst.attrs.multi_depot || o == 0 => {
                launches[o] += 1;
                if launches[o] > inst.depots[o].capacity {
                    c.flag(
                        Rule::DepotCapacity,
                        rk,
                        format!(
                            "depot {origin} launches {} drones, capacity {}",
                            launches[o], inst.depots[o].capacity
                        ),
                    );
                }
            }
            _ => {
                c.flag(
                    Rule::DepotReturn,
                    rk,
                    format!("route starts at {origin}, not at a depot"),
                );
            }
        }
        let mut d = 0.0;
        for (s, w) in route.windows(2).enumerate() {
            let (j, i) = (w[0], w[1]);
            if closed && s > 0 && j == origin {
                c.flag(
                    Rule::Termination,
                    rk,
                    "route continues after returning to its depot".into(),
                );
            }
            if !closed && n_seen == total_p {
                c.flag(
                    Rule::Termination,
                    rk,
                    "open route continues after every link was assessed".into(),
                );
            }
            let Some(t) = net.arc_time(j, i) else {
                c.flag(Rule::Connectivity, rk, format!("no arc {j} -> {i}"));
                continue;
            };
            if net.is_artificial(i) {
                if seen[i] {
                    c.flag(Rule::Exclusivity, rk, format!("node {i} assessed twice"));
                } else {
                    seen[i] = true;
                    n_seen += 1;
                }
            }
            if !window_ok(inst, i, d, t) {
                c.flag(
                    Rule::TimeWindow,
                    rk,
                    format!("node {i} reached after its window {}", inst.time_windows[i]),
                );
            }
            if !budget_ok(inst, j, i, d, t, origin) {
                c.flag(
                    Rule::Budget,
                    rk,
                    format!("move {j} -> {i} at time {d} exceeds budget {}", inst.budget()),
                );
            }
            d += t;
        }
        let last = *route.last().expect("non-empty");
        let all = n_seen == total_p;
        if closed {
            if route.len() > 1 && last != origin {
                c.flag(
                    Rule::DepotReturn,
                    rk,
                    format!("route ends at {last}, not at depot {origin}"),
                );
            }
            if route.len() == 1 && c.any_move(origin, 0.0, origin, &seen) {
                c.flag(Rule::Termination, rk, "idle drone had feasible moves".into());
            }
            finished = all;
        } else {
            if !all && c.any_move(last, d, origin, &seen) {
                c.flag(
                    Rule::Termination,
                    rk,
                    format!("open route stops at {last} with moves left"),
                );
            }
            finished = all;
        }
        if k + 1 == inst.drones {
            finished = true;
        }
    }
    let value: f64 = net.artificials().filter(|&p| seen[p]).map(|p| net.value(p)).sum();
    Ok(ValidationReport {
        feasible: c.out.is_empty(),
        violations: c.out,
        value,
    })
}
