//! Mixed-integer model of the routing problem and its LP-format text.
//!
//! Constraint families are labelled `C1` to `C19`. Families without rows of
//! their own (variable domains, the open-route time change) are still
//! recorded on the model so that a variant's family set can be inspected.

#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::instance::{AttributeConfig, Instance};
use crate::network::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Family(pub u8);

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

/// Constraint families expected for a variant.
pub fn families_for(attrs: AttributeConfig) -> BTreeSet<Family> {
    let mut out: BTreeSet<Family> = (1..=9).map(Family).collect();
    if attrs.is_open() {
        out.insert(Family(10));
    }
    if attrs.time_windows {
        out.extend((11..=14).map(Family));
    }
    if attrs.multi_depot {
        out.extend((15..=19).map(Family));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub family: Family,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    pub fn satisfied(&self, values: &[f64], tol: f64) -> bool {
        let a = self.activity(values);
        match self.sense {
            Sense::Le => a <= self.rhs + tol,
            Sense::Ge => a >= self.rhs - tol,
            Sense::Eq => (a - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilpModel {
    pub attrs: AttributeConfig,
    pub vars: Vec<Var>,
    pub objective: Vec<(usize, f64)>,
    pub rows: Vec<Row>,
    pub families: BTreeSet<Family>,
    /// Directed arcs of the transformed graph, in x-variable order per drone.
    pub arcs: Vec<(NodeId, NodeId)>,
    pub drones: usize,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl MilpModel {
    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn binary_count(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// First violated row or bound, if any.
    pub fn violation(&self, values: &[f64], tol: f64) -> Option<String> {
        for (v, var) in self.vars.iter().zip(values) {
            if *var < v.lb - tol || *var > v.ub + tol {
                return Some(format!("bound of {}", v.name));
            }
        }
        self.rows
            .iter()
            .find(|r| !r.satisfied(values, tol))
            .map(|r| r.name.clone())
    }

    /// Family set actually carried by the model: row families plus the
    /// declaration-only families.
    pub fn row_families(&self) -> BTreeSet<Family> {
        self.rows.iter().map(|r| r.family).collect()
    }

    fn add_var(&mut self, name: String, kind: VarKind, lb: f64, ub: f64) -> usize {
        let i = self.vars.len();
        self.index.insert(name.clone(), i);
        self.vars.push(Var { name, kind, lb, ub });
        i
    }

    fn add_row(&mut self, family: u8, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.families.insert(Family(family));
        self.rows.push(Row {
            name,
            family: Family(family),
            terms,
            sense,
            rhs,
        });
    }

    /// Serializes in CPLEX LP grammar. Output depends only on the model.
    pub fn to_lp(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\ {} model", self.attrs);
        let fams: Vec<String> = self.families.iter().map(Family::to_string).collect();
        let _ = writeln!(s, "\\ families: {}", fams.join(" "));
        if self.families.contains(&Family(10)) {
            let _ = writeln!(s, "\\ C10: aux arcs into the depot carry zero time");
        }
        s.push_str("Maximize\n obj:");
        write_terms(&mut s, &self.vars, &self.objective);
        s.push_str("\nSubject To\n");
        for r in &self.rows {
            let _ = write!(s, " {}:", r.name);
            write_terms(&mut s, &self.vars, &r.terms);
            let _ = writeln!(s, " {} {}", r.sense.symbol(), num(r.rhs));
        }
        s.push_str("Bounds\n");
        for v in self.vars.iter().filter(|v| v.kind != VarKind::Binary) {
            if v.ub.is_finite() {
                let _ = writeln!(s, " {} <= {} <= {}", num(v.lb), v.name, num(v.ub));
            } else {
                let _ = writeln!(s, " {} >= {}", v.name, num(v.lb));
            }
        }
        for (kind, title) in [(VarKind::Binary, "Binary"), (VarKind::Integer, "General")] {
            let names: Vec<&str> = self
                .vars
                .iter()
                .filter(|v| v.kind == kind)
                .map(|v| v.name.as_str())
                .collect();
            if !names.is_empty() {
                let _ = writeln!(s, "{title}");
                for chunk in names.chunks(8) {
                    let _ = writeln!(s, " {}", chunk.join(" "));
                }
            }
        }
        s.push_str("End\n");
        s
    }
}

fn num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn write_terms(s: &mut String, vars: &[Var], terms: &[(usize, f64)]) {
    if terms.is_empty() {
        s.push_str(" 0");
        return;
    }
    for (n, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 {
            "-"
        } else if n == 0 {
            ""
        } else {
            "+"
        };
        let mag = c.abs();
        if !sign.is_empty() {
            let _ = write!(s, " {sign}");
        }
        if mag == 1.0 {
            let _ = write!(s, " {}", vars[v].name);
        } else {
            let _ = write!(s, " {} {}", num(mag), vars[v].name);
        }
    }
}

/// Builds the model for `inst` under `attrs`.
pub fn export_milp(inst: &Instance, attrs: AttributeConfig) -> Result<MilpModel, SolverError> {
    if !attrs.multi_depot && inst.depots.len() > 1 {
        return Err(SolverError::InconsistentAttributes(format!(
            "{} depots but the multi-depot attribute is off",
            inst.depots.len()
        )));
    }
    let net = &inst.network;
    let n = net.len();
    let kk = inst.drones;
    let depots: Vec<NodeId> = inst.depots.iter().map(|d| d.node).collect();
    let is_depot = |i: NodeId| depots.contains(&i);
    let md = attrs.multi_depot;
    let tw = attrs.time_windows;

    let mut arcs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if net.arc_time(i, j).is_some() {
                arcs.push((i, j));
            }
        }
    }
    // Time charged on an arc for a drone based at `home`; open routes land
    // for free on the aux arc back into their own depot.
    let cost = |i: NodeId, j: NodeId, home: NodeId| -> f64 {
        let t = net.arc_time(i, j).expect("arc");
        if attrs.is_open() && j == home && !net.is_artificial(i) {
            0.0
        } else {
            t
        }
    };

    let mut m = MilpModel {
        attrs,
        vars: Vec::new(),
        objective: Vec::new(),
        rows: Vec::new(),
        families: BTreeSet::new(),
        arcs: arcs.clone(),
        drones: kk,
        index: BTreeMap::new(),
    };
    let big_n = n as f64;
    let mut x = vec![Vec::with_capacity(arcs.len()); kk];
    let mut z = vec![Vec::new(); kk];
    for k in 0..kk {
        if md {
            for &o in &depots {
                z[k].push(m.add_var(format!("z_{o}_{k}"), VarKind::Binary, 0.0, 1.0));
            }
        }
        for &(i, j) in &arcs {
            x[k].push(m.add_var(format!("x_{i}_{j}_{k}"), VarKind::Binary, 0.0, 1.0));
        }
    }
    let u: Vec<Vec<usize>> = (0..kk)
        .map(|k| {
            (0..n)
                .map(|i| m.add_var(format!("u_{i}_{k}"), VarKind::Integer, 1.0, big_n))
                .collect()
        })
        .collect();
    let a: Vec<Vec<usize>> = if tw {
        (0..kk)
            .map(|k| {
                (0..n)
                    .map(|i| m.add_var(format!("a_{i}_{k}"), VarKind::Continuous, 0.0, f64::INFINITY))
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    m.families.extend([Family(8), Family(9)]);
    if attrs.is_open() {
        m.families.insert(Family(10));
    }
    if tw {
        m.families.insert(Family(14));
    }
    if md {
        m.families.insert(Family(19));
    }
    let arc_ix = |i: NodeId, j: NodeId| arcs.binary_search(&(i, j)).ok();

    // C1: value of each artificial node counted on its outgoing arcs.
    for k in 0..kk {
        for (e, &(i, _)) in arcs.iter().enumerate() {
            if net.is_artificial(i) {
                m.objective.push((x[k][e], net.value(i)));
            }
        }
    }
    m.families.insert(Family(1));

    for p in net.artificials() {
        let terms: Vec<(usize, f64)> = (0..kk)
            .flat_map(|k| {
                arcs.iter()
                    .enumerate()
                    .filter(|(_, a)| a.0 == p)
                    .map(move |(e, _)| (k, e))
            })
            .map(|(k, e)| (x[k][e], 1.0))
            .collect();
        m.add_row(2, format!("C2_{p}"), terms, Sense::Le, 1.0);
    }
    for k in 0..kk {
        for i in 0..n {
            let mut terms = Vec::new();
            for (e, &(s, t)) in arcs.iter().enumerate() {
                if t == i {
                    terms.push((x[k][e], 1.0));
                }
                if s == i {
                    terms.push((x[k][e], -1.0));
                }
            }
            m.add_row(3, format!("C3_{i}_{k}"), terms, Sense::Eq, 0.0);
        }
    }
    // C4: at most one departure per depot; flow balance is already in C3.
    for k in 0..kk {
        for &o in &depots {
            let terms = arcs
                .iter()
                .enumerate()
                .filter(|(_, a)| a.0 == o)
                .map(|(e, _)| (x[k][e], 1.0))
                .collect();
            m.add_row(4, format!("C4_{o}_{k}"), terms, Sense::Le, 1.0);
        }
    }
    if md && attrs.is_open() {
        // The free landing arc depends on the assigned depot: one row per
        // depot, relaxed unless the drone is based there.
        let slack: f64 = arcs.iter().map(|&(i, j)| net.arc_time(i, j).expect("arc")).sum();
        for k in 0..kk {
            for (o, &home) in depots.iter().enumerate() {
                let mut terms: Vec<(usize, f64)> = arcs
                    .iter()
                    .enumerate()
                    .map(|(e, &(i, j))| (x[k][e], cost(i, j, home)))
                    .collect();
                terms.push((z[k][o], slack));
                m.add_row(
                    5,
                    format!("C5_{home}_{k}"),
                    terms.clone(),
                    Sense::Le,
                    inst.battery + slack,
                );
                m.add_row(6, format!("C6_{home}_{k}"), terms, Sense::Le, inst.p_max + slack);
            }
        }
    } else {
        let home = if md { NodeId::MAX } else { depots[0] };
        for k in 0..kk {
            let terms: Vec<(usize, f64)> = arcs
                .iter()
                .enumerate()
                .map(|(e, &(i, j))| (x[k][e], cost(i, j, home)))
                .collect();
            m.add_row(5, format!("C5_{k}"), terms.clone(), Sense::Le, inst.battery);
            m.add_row(6, format!("C6_{k}"), terms, Sense::Le, inst.p_max);
        }
    }
    // C7: ordering on every arc not entering the drone's depot.
    for k in 0..kk {
        for (e, &(i, j)) in arcs.iter().enumerate() {
            if is_depot(j) && !md {
                continue;
            }
            let mut terms = vec![(u[k][i], 1.0), (u[k][j], -1.0), (x[k][e], big_n)];
            if md && is_depot(j) {
                let o = depots.iter().position(|&d| d == j).expect("depot");
                terms.push((z[k][o], -big_n));
            }
            m.add_row(7, format!("C7_{i}_{j}_{k}"), terms, Sense::Le, big_n - 1.0);
        }
        for &o in &depots {
            for &p in net.incident(o) {
                if let (Some(e1), Some(e2)) = (arc_ix(o, p), arc_ix(p, o)) {
                    m.add_row(
                        7,
                        format!("C7_back_{o}_{p}_{k}"),
                        vec![(x[k][e1], 1.0), (x[k][e2], 1.0)],
                        Sense::Le,
                        1.0,
                    );
                }
            }
        }
    }

    if tw {
        let big_t = inst.p_max + net.max_arc_time();
        for k in 0..kk {
            for i in 0..n {
                let l = inst.time_windows[i];
                if l.is_finite() {
                    m.add_row(11, format!("C11_{i}_{k}"), vec![(a[k][i], 1.0)], Sense::Le, l);
                }
            }
            for (e, &(i, j)) in arcs.iter().enumerate() {
                if is_depot(j) && !md {
                    continue;
                }
                // a_j - a_i - M x_ij >= t_ij - M
                let mut terms = vec![(a[k][j], 1.0), (a[k][i], -1.0), (x[k][e], -big_t)];
                if md && is_depot(j) {
                    let o = depots.iter().position(|&d| d == j).expect("depot");
                    terms.push((z[k][o], big_t));
                }
                let t = net.arc_time(i, j).expect("arc");
                m.add_row(12, format!("C12_{i}_{j}_{k}"), terms, Sense::Ge, t - big_t);
            }
            if md {
                for (o, &d) in depots.iter().enumerate() {
                    m.add_row(
                        13,
                        format!("C13_{d}_{k}"),
                        vec![(a[k][d], 1.0), (z[k][o], big_t)],
                        Sense::Le,
                        big_t,
                    );
                }
            } else {
                let d = depots[0];
                m.add_row(13, format!("C13_{d}_{k}"), vec![(a[k][d], 1.0)], Sense::Eq, 0.0);
            }
        }
    }

    if md {
        for k in 0..kk {
            let terms = z[k].iter().map(|&v| (v, 1.0)).collect();
            m.add_row(15, format!("C15_{k}"), terms, Sense::Le, 1.0);
        }
        for k in 0..kk {
            for &o in &depots {
                let mut terms: Vec<(usize, f64)> = arcs
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.0 == o)
                    .map(|(e, _)| (x[k][e], 1.0))
                    .collect();
                terms.extend(z[k].iter().map(|&v| (v, -1.0)));
                m.add_row(16, format!("C16_{o}_{k}"), terms, Sense::Le, 0.0);
            }
        }
        for (o, dep) in inst.depots.iter().enumerate() {
            let terms = (0..kk).map(|k| (z[k][o], 1.0)).collect();
            m.add_row(17, format!("C17_{}", dep.node), terms, Sense::Le, dep.capacity as f64);
        }
        for k in 0..kk {
            for (o, &d) in depots.iter().enumerate() {
                let mut terms: Vec<(usize, f64)> = arcs
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.1 == d)
                    .map(|(e, _)| (x[k][e], 1.0))
                    .collect();
                terms.push((z[k][o], -1.0));
                m.add_row(18, format!("C18_{d}_{k}"), terms, Sense::Ge, 0.0);
            }
        }
    }
    Ok(m)
}

/// Encodes env-style routes as a model assignment. Routes must be simple
/// cycles through their depot (open routes are closed with a free aux arc).
/// Returns `None` when a route revisits a node and so has no encoding.
pub fn encode_routes(model: &MilpModel, inst: &Instance, routes: &[Vec<NodeId>]) -> Option<Vec<f64>> {
    let net = &inst.network;
    let n = net.len();
    let mut vals = vec![0.0; model.vars.len()];
    for k in 0..model.drones {
        for i in 0..n {
            vals[model.var(&format!("u_{i}_{k}"))?] = 1.0;
        }
    }
    for (k, route) in routes.iter().enumerate() {
        if route.len() <= 1 {
            continue;
        }
        let o = route[0];
        let mut walk = route.clone();
        if model.attrs.is_open() {
            let last = walk[walk.len() - 1];
            if net.is_artificial(last) {
                walk.push(net.far_endpoint(last, walk[walk.len() - 2]));
            }
            if walk[walk.len() - 1] != o {
                walk.push(o);
            }
        }
        if walk[walk.len() - 1] != o {
            return None;
        }
        let mut seen = vec![false; n];
        for &i in &walk[..walk.len() - 1] {
            if seen[i] {
                return None;
            }
            seen[i] = true;
        }
        // The model traverses a link end to end; turning back inside it
        // has no encoding.
        for w in walk.windows(3) {
            if net.is_artificial(w[1]) && w[2] != net.far_endpoint(w[1], w[0]) {
                return None;
            }
        }
        if model.attrs.multi_depot {
            vals[model.var(&format!("z_{o}_{k}"))?] = 1.0;
        }
        let mut clock = 0.0;
        for (pos, w) in walk.windows(2).enumerate() {
            vals[model.var(&format!("x_{}_{}_{}", w[0], w[1], k))?] = 1.0;
            vals[model.var(&format!("u_{}_{}", w[0], k))?] = (pos + 1) as f64;
            if model.attrs.time_windows {
                vals[model.var(&format!("a_{}_{}", w[0], k))?] = clock;
            }
            clock += net.arc_time(w[0], w[1])?;
        }
    }
    Some(vals)
}
