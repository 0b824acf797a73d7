//! Brute-force optimum of a small exported model.
//!
//! Binaries are enumerated depth-first with bound pruning on rows that only
//! involve binaries. Once every binary is fixed, the remaining rows are
//! difference constraints over the order and arrival variables and are
//! solved as a shortest-path problem.

use super::milp::{MilpModel, Sense, VarKind};
use super::SolverError;

pub const MAX_BINARIES: usize = 24;
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum MilpOutcome {
    Optimal { objective: f64, values: Vec<f64> },
    Infeasible,
}

impl MilpOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            MilpOutcome::Optimal { objective, .. } => Some(*objective),
            MilpOutcome::Infeasible => None,
        }
    }
}

struct Search<'m> {
    model: &'m MilpModel,
    bins: Vec<usize>,
    is_bin: Vec<bool>,
    /// Binary-only rows touching each variable.
    rows_of: Vec<Vec<usize>>,
    mixed: Vec<usize>,
    obj: Vec<f64>,
    vals: Vec<f64>,
    fixed: Vec<bool>,
    best: Option<(f64, Vec<f64>)>,
}

impl Search<'_> {
    fn row_possible(&self, r: usize) -> bool {
        let row = &self.model.rows[r];
        let (mut lo, mut hi) = (0.0, 0.0);
        for &(v, c) in &row.terms {
            if self.fixed[v] {
                lo += c * self.vals[v];
                hi += c * self.vals[v];
            } else if c > 0.0 {
                hi += c;
            } else {
                lo += c;
            }
        }
        match row.sense {
            Sense::Le => lo <= row.rhs + TOL,
            Sense::Ge => hi >= row.rhs - TOL,
            Sense::Eq => lo <= row.rhs + TOL && hi >= row.rhs - TOL,
        }
    }

    fn bound(&self, depth: usize) -> f64 {
        let fixed: f64 = self.bins[..depth].iter().map(|&v| self.obj[v] * self.vals[v]).sum();
        let open: f64 = self.bins[depth..].iter().map(|&v| self.obj[v].max(0.0)).sum();
        fixed + open
    }

    fn dfs(&mut self, depth: usize) -> Result<(), SolverError> {
        if let Some((b, _)) = &self.best {
            if self.bound(depth) <= *b + TOL {
                return Ok(());
            }
        }
        if depth == self.bins.len() {
            if let Some(cont) = self.solve_rest()? {
                let objective: f64 = self.bins.iter().map(|&v| self.obj[v] * self.vals[v]).sum();
                let mut values = self.vals.clone();
                for (v, x) in cont {
                    values[v] = x;
                }
                self.best = Some((objective, values));
            }
            return Ok(());
        }
        let v = self.bins[depth];
        self.fixed[v] = true;
        for x in [0.0, 1.0] {
            self.vals[v] = x;
            if self.rows_of[v].iter().all(|&r| self.row_possible(r)) {
                self.dfs(depth + 1)?;
            }
        }
        self.fixed[v] = false;
        self.vals[v] = 0.0;
        Ok(())
    }

    /// Values for the non-binary variables, or `None` if none exist.
    fn solve_rest(&self) -> Result<Option<Vec<(usize, f64)>>, SolverError> {
        let m = self.model;
        let others: Vec<usize> = (0..m.vars.len()).filter(|&v| !self.is_bin[v]).collect();
        let mut slot = vec![usize::MAX; m.vars.len()];
        for (k, &v) in others.iter().enumerate() {
            slot[v] = k;
        }
        let zero = others.len();
        // Edge (from, to, w) encodes x_to - x_from <= w.
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        for &v in &others {
            let var = &m.vars[v];
            if var.ub.is_finite() {
                edges.push((zero, slot[v], var.ub));
            }
            if var.lb.is_finite() {
                edges.push((slot[v], zero, -var.lb));
            }
        }
        for &r in &self.mixed {
            let row = &m.rows[r];
            let mut rest = row.rhs;
            let mut free = Vec::new();
            for &(v, c) in &row.terms {
                if self.is_bin[v] {
                    rest -= c * self.vals[v];
                } else if c != 0.0 {
                    free.push((slot[v], c));
                }
            }
            let senses: &[f64] = match row.sense {
                Sense::Le => &[1.0],
                Sense::Ge => &[-1.0],
                Sense::Eq => &[1.0, -1.0],
            };
            for &sg in senses {
                // sg * (sum c x) <= sg * rest
                let r = sg * rest;
                match free.as_slice() {
                    [] => {
                        if 0.0 > r + TOL {
                            return Ok(None);
                        }
                    }
                    [(a, c)] => {
                        let c = sg * c;
                        if c > 0.0 {
                            edges.push((zero, *a, r / c));
                        } else {
                            edges.push((*a, zero, -r / c));
                        }
                    }
                    [(a, ca), (b, cb)] if (ca + cb).abs() < TOL => {
                        let c = sg * ca;
                        if c > 0.0 {
                            edges.push((*b, *a, r / c));
                        } else {
                            edges.push((*a, *b, -r / c));
                        }
                    }
                    _ => return Err(SolverError::UnsupportedRow(row.name.clone())),
                }
            }
        }
        let n = others.len() + 1;
        let mut dist = vec![0.0f64; n];
        for round in 0..=n {
            let mut changed = false;
            for &(f, t, w) in &edges {
                if dist[f] + w < dist[t] - TOL {
                    dist[t] = dist[f] + w;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            if round == n {
                return Ok(None);
            }
        }
        let mut out = Vec::with_capacity(others.len());
        for (k, &v) in others.iter().enumerate() {
            let x = dist[k] - dist[zero];
            if m.vars[v].kind == VarKind::Integer && (x - x.round()).abs() > 1e-6 {
                return Err(SolverError::UnsupportedRow(format!("fractional {}", m.vars[v].name)));
            }
            out.push((v, x));
        }
        Ok(Some(out))
    }
}

/// Optimum of `model` by exhaustive search over its binaries.
pub fn enumerate_milp(model: &MilpModel) -> Result<MilpOutcome, SolverError> {
    let nv = model.vars.len();
    let is_bin: Vec<bool> = model.vars.iter().map(|v| v.kind == VarKind::Binary).collect();
    let bins: Vec<usize> = (0..nv).filter(|&v| is_bin[v]).collect();
    if bins.len() > MAX_BINARIES {
        return Err(SolverError::ModelTooLarge { binaries: bins.len() });
    }
    let mut obj = vec![0.0; nv];
    for &(v, c) in &model.objective {
        if !is_bin[v] {
            return Err(SolverError::UnsupportedRow("objective".into()));
        }
        obj[v] += c;
    }
    let mut rows_of = vec![Vec::new(); nv];
    let mut mixed = Vec::new();
    for (r, row) in model.rows.iter().enumerate() {
        let non_bin = row.terms.iter().filter(|(v, _)| !is_bin[*v]).count();
        if non_bin == 0 {
            for &(v, _) in &row.terms {
                rows_of[v].push(r);
            }
        } else if non_bin > 2 {
            return Err(SolverError::UnsupportedRow(row.name.clone()));
        } else {
            mixed.push(r);
        }
    }
    let mut s = Search {
        model,
        bins,
        is_bin,
        rows_of,
        mixed,
        obj,
        vals: vec![0.0; nv],
        fixed: vec![false; nv],
        best: None,
    };
    // Constant rows (no variables) are checked once up front.
    if model
        .rows
        .iter()
        .enumerate()
        .any(|(r, row)| row.terms.is_empty() && !s.row_possible(r))
    {
        return Ok(MilpOutcome::Infeasible);
    }
    s.dfs(0)?;
    Ok(match s.best {
        Some((objective, values)) => MilpOutcome::Optimal { objective, values },
        None => MilpOutcome::Infeasible,
    })
}
