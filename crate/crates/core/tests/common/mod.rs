#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use pdra::instance::{AttributeConfig, Instance, RouteKind, TwRule};
use pdra::instancegen::{generate_tiny, TinyConfig};
use pdra::Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Tiny instances cycling through all eight variants.
pub fn tiny_suite(count: usize, seed: u64, max_links: usize, drones: usize) -> Vec<Instance> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let attrs = AttributeConfig::all()[i % 8];
            let cfg = TinyConfig {
                max_original: 4,
                max_links,
                drones,
                attrs,
                depots: if attrs.multi_depot { 2 } else { 1 },
                depot_capacity: if attrs.multi_depot {
                    Some(drones.div_ceil(2).max(1))
                } else {
                    None
                },
                ..TinyConfig::default()
            };
            generate_tiny(&cfg, &mut r).unwrap()
        })
        .collect()
}

/// Exhaustive maximum over all environment-legal solutions, written from
/// the routing rules directly: full per-route depth-first enumeration with
/// memoization only at route boundaries.
pub struct Enumerator<'a> {
    inst: &'a Instance,
    n_orig: usize,
    n: usize,
    coords: Vec<(f64, f64)>,
    /// For artificial nodes: (endpoint a, endpoint b, half time).
    links: Vec<(usize, usize, f64)>,
    memo: HashMap<(usize, u64, Vec<usize>), u64>,
    routes: HashMap<(usize, u64), BTreeSet<u64>>,
}

impl<'a> Enumerator<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        let net = &inst.network;
        let links = net
            .artificials()
            .map(|p| {
                let a = net.artificial(p);
                (a.endpoints.0, a.endpoints.1, a.half_time)
            })
            .collect();
        Enumerator {
            inst,
            n_orig: net.n_original(),
            n: net.len(),
            coords: (0..net.len()).map(|i| net.coord(i)).collect(),
            links,
            memo: HashMap::new(),
            routes: HashMap::new(),
        }
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let (p, q) = (self.coords[a], self.coords[b]);
        ((p.0 - q.0) * (p.0 - q.0) + (p.1 - q.1) * (p.1 - q.1)).sqrt()
    }

    fn time(&self, from: usize, to: usize) -> Option<f64> {
        let (fa, ta) = (from >= self.n_orig, to >= self.n_orig);
        match (fa, ta) {
            (false, false) => {
                let t = self.dist(from, to);
                (from != to && t > 0.0).then_some(t)
            }
            (true, true) => None,
            (true, false) => {
                let (a, b, h) = self.links[from - self.n_orig];
                (a == to || b == to).then_some(h)
            }
            (false, true) => {
                let (a, b, h) = self.links[to - self.n_orig];
                (a == from || b == from).then_some(h)
            }
        }
    }

    fn moves(&self, at: usize, d: f64, origin: usize, taken: u64) -> Vec<(usize, f64)> {
        let inst = self.inst;
        let budget = inst.p_max.min(inst.battery);
        let open = inst.attrs.route == RouteKind::Open;
        let mut out = Vec::new();
        for to in 0..self.n {
            let Some(t) = self.time(at, to) else { continue };
            let art = to >= self.n_orig;
            if art && taken & (1 << (to - self.n_orig)) != 0 {
                continue;
            }
            if inst.attrs.time_windows {
                let at_time = if art && inst.tw_rule == TwRule::Completion {
                    d + t + t
                } else {
                    d + t
                };
                if at_time > inst.time_windows[to] {
                    continue;
                }
            }
            let spent = if art { d + t + t } else { d + t };
            let ok = if open {
                spent <= budget
            } else {
                let land = if art {
                    let (a, b, _) = self.links[to - self.n_orig];
                    if a == at {
                        b
                    } else {
                        a
                    }
                } else {
                    to
                };
                spent + self.dist(land, origin) <= budget
            };
            if ok {
                out.push((to, t));
            }
        }
        out
    }

    fn all(&self) -> u64 {
        (1u64 << (self.n - self.n_orig)) - 1
    }

    /// Every collected set a single route from `origin` can end with.
    fn route_outcomes(&mut self, origin: usize, taken: u64) -> BTreeSet<u64> {
        if let Some(s) = self.routes.get(&(origin, taken)) {
            return s.clone();
        }
        let mut out = BTreeSet::new();
        if self.moves(origin, 0.0, origin, taken).is_empty() {
            out.insert(taken);
        } else {
            self.walk(origin, 0.0, origin, taken, &mut out);
        }
        self.routes.insert((origin, taken), out.clone());
        out
    }

    fn walk(&self, at: usize, d: f64, origin: usize, taken: u64, out: &mut BTreeSet<u64>) {
        let open = self.inst.attrs.route == RouteKind::Open;
        for (to, t) in self.moves(at, d, origin, taken) {
            let mut next = taken;
            if to >= self.n_orig {
                next |= 1 << (to - self.n_orig);
            }
            let nd = d + t;
            if open {
                if next == self.all() || self.moves(to, nd, origin, next).is_empty() {
                    out.insert(next);
                } else {
                    self.walk(to, nd, origin, next, out);
                }
            } else if to == origin {
                out.insert(next);
            } else {
                self.walk(to, nd, origin, next, out);
            }
        }
    }

    fn value(&self, set: u64) -> f64 {
        (0..self.n - self.n_orig)
            .filter(|b| set & (1 << b) != 0)
            .map(|b| self.inst.network.value(self.n_orig + b))
            .sum()
    }

    /// Collected set of the best completion from drone `k` on.
    fn best_from(&mut self, k: usize, taken: u64, usage: Vec<usize>) -> u64 {
        let key = (k, taken, usage.clone());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let inst = self.inst;
        let mut best = taken;
        if k < inst.drones && taken != self.all() {
            let starts: Vec<usize> = if inst.attrs.multi_depot {
                (0..inst.depots.len())
                    .filter(|&o| usage[o] < inst.depots[o].capacity)
                    .collect()
            } else {
                vec![0]
            };
            for o in starts {
                let mut u = usage.clone();
                u[o] += 1;
                for end in self.route_outcomes(inst.depots[o].node, taken) {
                    let cand = self.best_from(k + 1, end, u.clone());
                    if self.value(cand) > self.value(best) {
                        best = cand;
                    }
                }
            }
        }
        self.memo.insert(key, best);
        best
    }

    /// Best reachable total value.
    pub fn best_value(&mut self) -> f64 {
        if self.n == self.n_orig {
            return 0.0;
        }
        let usage = vec![0; self.inst.depots.len()];
        let set = self.best_from(0, 0, usage);
        self.value(set)
    }
}

/// Checks the node-split invariants of `transform(net)`; returns a
/// description of the first violation.
pub fn check_transform(net: &pdra::RoadNetwork) -> Result<(), String> {
    let tn = pdra::transform(net);
    let (n, a) = (net.node_count(), net.link_count());
    if tn.len() != n + a || tn.n_artificial() != a {
        return Err(format!("{} nodes for {n} + {a}", tn.len()));
    }
    let c_links: f64 = net.links().iter().map(|l| l.value).sum();
    let c_nodes: f64 = tn.artificials().map(|p| tn.value(p)).sum();
    if c_links != c_nodes || tn.originals().any(|i| tn.value(i) != 0.0) {
        return Err("value not conserved".into());
    }
    for (k, l) in net.links().iter().enumerate() {
        let p = n + k;
        let (ti, tj) = (tn.arc_time(p, l.a), tn.arc_time(l.b, p));
        if ti != Some(l.length / 2.0) || tj != Some(l.length / 2.0) || ti.unwrap() + tj.unwrap() != l.length {
            return Err(format!("link {k} split into {ti:?} + {tj:?}"));
        }
        if tn.neighbors(p) != {
            let mut v = vec![l.a, l.b];
            v.sort_unstable();
            v
        } {
            return Err(format!("artificial node {p} has neighbours {:?}", tn.neighbors(p)));
        }
        if tn.artificials().any(|q| tn.arc_time(p, q).is_some()) {
            return Err(format!("artificial node {p} touches another artificial node"));
        }
    }
    for u in tn.originals() {
        for v in tn.originals() {
            let d = pdra::network::euclidean(tn.coord(u), tn.coord(v));
            let want = (d > 0.0).then_some(d);
            if tn.arc_time(u, v) != want || tn.arc_time(u, v) != tn.arc_time(v, u) {
                return Err(format!("aux arc ({u}, {v})"));
            }
        }
    }
    Ok(())
}

/// Instances spanning all eight variants: alternating 20-node generated
/// networks and tiny ones.
pub fn variant_suite(count: usize, seed: u64) -> Vec<Instance> {
    use pdra::instancegen::{generate_instance, GenConfig, InstanceConfig};
    let mut r = rng(seed);
    let gen = GenConfig::for_total_nodes(20, seed).unwrap();
    (0..count)
        .map(|i| {
            let attrs = AttributeConfig::all()[i % 8];
            let depots = if attrs.multi_depot { 2 } else { 1 };
            if i % 16 < 8 {
                let cfg = InstanceConfig {
                    attrs: Some(attrs),
                    depots,
                    depot_capacity: attrs.multi_depot.then_some(2),
                    ..InstanceConfig::default()
                };
                generate_instance(&gen, &cfg, &mut r).unwrap()
            } else {
                let cfg = TinyConfig {
                    attrs,
                    depots,
                    drones: 3,
                    depot_capacity: attrs.multi_depot.then_some(2),
                    ..TinyConfig::default()
                };
                generate_tiny(&cfg, &mut r).unwrap()
            }
        })
        .collect()
}

/// Small random edits of a solution: node insertions, deletions,
/// replacements, truncations and route swaps.
pub fn mutate(sol: &pdra::Solution, n_nodes: usize, r: &mut Rng) -> pdra::Solution {
    use rand::Rng as _;
    let mut s = sol.clone();
    let k = r.gen_range(0..s.routes.len());
    let route = &mut s.routes[k];
    match r.gen_range(0..5) {
        0 => {
            let at = r.gen_range(0..=route.len());
            route.insert(at, r.gen_range(0..n_nodes));
        }
        1 if !route.is_empty() => {
            route.remove(r.gen_range(0..route.len()));
        }
        2 if !route.is_empty() => {
            let at = r.gen_range(0..route.len());
            route[at] = r.gen_range(0..n_nodes);
        }
        3 => {
            let keep = r.gen_range(0..=route.len());
            route.truncate(keep);
        }
        _ => {
            let j = r.gen_range(0..s.routes.len());
            s.routes.swap(k, j);
        }
    }
    s
}
