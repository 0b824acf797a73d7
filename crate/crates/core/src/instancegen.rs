//! Synthetic network and instance generation.
//!
//! Networks come from a four-stage pipeline: a square lattice on the unit
//! square, random link pruning that keeps the graph connected, bounded node
//! perturbation, and finally Euclidean lengths plus random link values.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{AttributeConfig, Depot, Instance, InstanceError, RouteKind, TwRule};
use crate::network::{build_road_network, euclidean, transform, LinkSpec, NetworkError, Node, RoadNetwork, UnionFind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    /// Uniform on [1, 10], divided by 10.
    #[default]
    Continuous,
    /// Uniform on {1, ..., 10}, divided by 10.
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub grid_side: usize,
    pub prune_keep_fraction: f64,
    /// Perturbation bound as a fraction of the grid spacing.
    pub perturb_magnitude: f64,
    #[serde(default)]
    pub value_mode: ValueMode,
    pub seed: u64,
}

impl GenConfig {
    /// Config whose transformed network has `total` nodes: about half original
    /// nodes on a square grid, the rest artificial (one per kept link).
    pub fn for_total_nodes(total: usize, seed: u64) -> Result<GenConfig, GenError> {
        if total < 5 {
            return Err(GenError::InvalidConfig(format!(
                "{total} nodes is too small for a grid"
            )));
        }
        let side = ((total as f64 / 2.0).sqrt().round() as usize).max(2);
        let n = side * side;
        let lattice = 2 * side * (side - 1);
        let links = total.saturating_sub(n).clamp(n - 1, lattice);
        Ok(GenConfig {
            grid_side: side,
            prune_keep_fraction: links as f64 / lattice as f64,
            perturb_magnitude: 0.3,
            value_mode: ValueMode::Continuous,
            seed,
        })
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.grid_side - 1) as f64
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.grid_side < 2 {
            return Err(GenError::InvalidConfig("grid_side must be at least 2".into()));
        }
        if !(self.prune_keep_fraction > 0.0 && self.prune_keep_fraction <= 1.0) {
            return Err(GenError::InvalidConfig("prune_keep_fraction must lie in (0, 1]".into()));
        }
        if !(self.perturb_magnitude >= 0.0 && self.perturb_magnitude < 0.5) {
            return Err(GenError::InvalidConfig("perturb_magnitude must lie in [0, 0.5)".into()));
        }
        Ok(())
    }

    /// Number of links kept by [`prune_links`] on the full lattice.
    pub fn kept_links(&self) -> usize {
        let n = self.grid_side * self.grid_side;
        let lattice = 2 * self.grid_side * (self.grid_side - 1);
        ((self.prune_keep_fraction * lattice as f64).round() as usize).clamp(n - 1, lattice)
    }
}

/// Square lattice of `grid_side²` evenly spaced nodes with 4-neighbour links.
pub fn generate_grid(cfg: &GenConfig) -> Result<RoadNetwork, GenError> {
    cfg.validate()?;
    let s = cfg.grid_side;
    let sp = cfg.spacing();
    let id = |r: usize, c: usize| (r * s + c + 1) as u32;
    let nodes = (0..s)
        .flat_map(|r| (0..s).map(move |c| (r, c)))
        .map(|(r, c)| Node {
            id: id(r, c),
            x: c as f64 * sp,
            y: r as f64 * sp,
        })
        .collect();
    let mut links = Vec::with_capacity(2 * s * (s - 1));
    for r in 0..s {
        for c in 0..s {
            if c + 1 < s {
                links.push(LinkSpec {
                    from: id(r, c),
                    to: id(r, c + 1),
                    length: sp,
                    value: 0.0,
                });
            }
            if r + 1 < s {
                links.push(LinkSpec {
                    from: id(r, c),
                    to: id(r + 1, c),
                    length: sp,
                    value: 0.0,
                });
            }
        }
    }
    Ok(build_road_network(nodes, links)?)
}

/// Keeps a random spanning tree plus random extra links, up to the keep
/// fraction of the input link count. Kept links retain their input order.
pub fn prune_links<R: Rng + ?Sized>(net: &RoadNetwork, cfg: &GenConfig, rng: &mut R) -> Result<RoadNetwork, GenError> {
    cfg.validate()?;
    let m = net.link_count();
    let n = net.node_count();
    let target = ((cfg.prune_keep_fraction * m as f64).round() as usize).clamp(n.saturating_sub(1), m);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut uf = UnionFind::new(n);
    let mut keep = vec![false; m];
    let mut extras = Vec::new();
    for &e in &order {
        let l = net.links()[e];
        if uf.union(l.a, l.b) {
            keep[e] = true;
        } else {
            extras.push(e);
        }
    }
    let tree = keep.iter().filter(|k| **k).count();
    for &e in extras.iter().take(target.saturating_sub(tree)) {
        keep[e] = true;
    }
    let specs = net.link_specs();
    let kept = specs
        .into_iter()
        .zip(keep)
        .filter_map(|(l, k)| k.then_some(l))
        .collect();
    Ok(net.with_links(kept)?)
}

/// Shifts every coordinate by independent uniform noise in ±magnitude·spacing,
/// clamped to the unit square.
pub fn perturb_nodes<R: Rng + ?Sized>(
    net: &RoadNetwork,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<RoadNetwork, GenError> {
    cfg.validate()?;
    let m = cfg.perturb_magnitude * cfg.spacing();
    let mut jitter = |v: f64| {
        if m > 0.0 {
            (v + rng.gen_range(-m..=m)).clamp(0.0, 1.0)
        } else {
            v
        }
    };
    let nodes = net
        .nodes()
        .iter()
        .map(|n| {
            let x = jitter(n.x);
            let y = jitter(n.y);
            Node { id: n.id, x, y }
        })
        .collect();
    Ok(net.with_nodes(nodes)?)
}

/// Sets link lengths to endpoint distances and draws link values.
pub fn assign_attributes<R: Rng + ?Sized>(
    net: &RoadNetwork,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<RoadNetwork, GenError> {
    let nodes = net.nodes();
    let links = net
        .links()
        .iter()
        .map(|l| {
            let (a, b) = (nodes[l.a], nodes[l.b]);
            let value = match cfg.value_mode {
                ValueMode::Continuous => rng.gen_range(1.0..=10.0) / 10.0,
                ValueMode::Integer => rng.gen_range(1..=10) as f64 / 10.0,
            };
            LinkSpec {
                from: a.id,
                to: b.id,
                length: euclidean((a.x, a.y), (b.x, b.y)),
                value,
            }
        })
        .collect();
    Ok(net.with_links(links)?)
}

/// Runs the full pipeline: grid, prune, perturb, assign.
pub fn generate_network<R: Rng + ?Sized>(cfg: &GenConfig, rng: &mut R) -> Result<RoadNetwork, GenError> {
    let grid = generate_grid(cfg)?;
    let pruned = prune_links(&grid, cfg, rng)?;
    let perturbed = perturb_nodes(&pruned, cfg, rng)?;
    assign_attributes(&perturbed, cfg, rng)
}

/// Sampling ranges for the operational parameters of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceConfig {
    pub p_max_choices: Vec<f64>,
    pub drone_choices: Vec<usize>,
    pub battery: f64,
    pub open_route_prob: f64,
    pub tw_prob: f64,
    /// Number of depots; two or more activates the multi-depot attribute.
    pub depots: usize,
    /// Per-depot capacity; defaults to the drone count (non-binding).
    pub depot_capacity: Option<usize>,
    /// Windows on artificial nodes are drawn from [alpha·p_max, p_max].
    pub tw_alpha: f64,
    pub tw_rule: TwRule,
    /// Fixed attributes; when set, the route/TW probabilities are ignored.
    pub attrs: Option<AttributeConfig>,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            p_max_choices: vec![2.0, 3.0, 4.0],
            drone_choices: vec![2, 3, 4],
            battery: 8.0,
            open_route_prob: 0.5,
            tw_prob: 0.5,
            depots: 1,
            depot_capacity: None,
            tw_alpha: 0.3,
            tw_rule: TwRule::Arrival,
            attrs: None,
        }
    }
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.p_max_choices.is_empty() || self.drone_choices.is_empty() {
            return Err(GenError::InvalidConfig("empty parameter choices".into()));
        }
        if self.depots == 0 {
            return Err(GenError::InvalidConfig("at least one depot is required".into()));
        }
        if !(0.0..=1.0).contains(&self.tw_alpha) {
            return Err(GenError::InvalidConfig("tw_alpha must lie in [0, 1]".into()));
        }
        if let Some(a) = self.attrs {
            if a.multi_depot != (self.depots >= 2) {
                return Err(GenError::InvalidConfig(
                    "multi_depot attribute requires two or more depots".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Generates one full instance.
pub fn generate_instance<R: Rng + ?Sized>(
    gen: &GenConfig,
    cfg: &InstanceConfig,
    rng: &mut R,
) -> Result<Instance, GenError> {
    cfg.validate()?;
    let road = generate_network(gen, rng)?;
    let network = transform(&road);
    let p_max = *cfg.p_max_choices.choose(rng).expect("validated non-empty");
    let drones = *cfg.drone_choices.choose(rng).expect("validated non-empty");
    let open = rng.gen_bool(cfg.open_route_prob.clamp(0.0, 1.0));
    let tw = rng.gen_bool(cfg.tw_prob.clamp(0.0, 1.0));
    let attrs = cfg.attrs.unwrap_or(AttributeConfig {
        route: if open { RouteKind::Open } else { RouteKind::Closed },
        time_windows: tw,
        multi_depot: cfg.depots >= 2,
    });
    let windows: Vec<f64> = network
        .originals()
        .map(|_| f64::INFINITY)
        .chain(
            network
                .artificials()
                .map(|_| rng.gen_range(cfg.tw_alpha * p_max..=p_max)),
        )
        .collect();
    let time_windows = if attrs.time_windows {
        windows
    } else {
        vec![f64::INFINITY; network.len()]
    };
    if cfg.depots > network.n_original() {
        return Err(GenError::InvalidConfig(format!(
            "{} depots requested but the network has {} original nodes",
            cfg.depots,
            network.n_original()
        )));
    }
    let mut originals: Vec<usize> = network.originals().collect();
    originals.shuffle(rng);
    let capacity = cfg.depot_capacity.unwrap_or(drones);
    let mut depots: Vec<Depot> = originals[..cfg.depots]
        .iter()
        .map(|&node| Depot { node, capacity })
        .collect();
    depots.sort_by_key(|d| d.node);
    let inst = Instance {
        network,
        p_max,
        battery: cfg.battery,
        drones,
        attrs,
        time_windows,
        depots,
        tw_rule: cfg.tw_rule,
    };
    inst.validate()?;
    Ok(inst)
}

/// Small random instances for exact-search cross-checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyConfig {
    pub min_original: usize,
    pub max_original: usize,
    pub max_links: usize,
    pub p_max_range: (f64, f64),
    pub drones: usize,
    pub attrs: AttributeConfig,
    pub depots: usize,
    pub depot_capacity: Option<usize>,
    pub tw_alpha: f64,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            min_original: 2,
            max_original: 4,
            max_links: 5,
            p_max_range: (0.4, 1.6),
            drones: 2,
            attrs: AttributeConfig::BASIC,
            depots: 1,
            depot_capacity: None,
            tw_alpha: 0.3,
        }
    }
}

/// Random connected graph on a few uniformly placed nodes.
pub fn generate_tiny<R: Rng + ?Sized>(cfg: &TinyConfig, rng: &mut R) -> Result<Instance, GenError> {
    let lo = cfg.min_original.max(2).max(cfg.depots);
    if cfg.max_original < lo || cfg.max_links + 1 < lo {
        return Err(GenError::InvalidConfig("tiny config admits no connected graph".into()));
    }
    let n = rng.gen_range(lo..=cfg.max_original.min(cfg.max_links + 1));
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: i as u32 + 1,
            x: rng.gen_range(0.0..=1.0),
            y: rng.gen_range(0.0..=1.0),
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    let mut extra: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|e| !pairs.contains(e))
        .collect();
    extra.shuffle(rng);
    let target = rng.gen_range(n - 1..=cfg.max_links.min(n * (n - 1) / 2));
    pairs.extend(extra.into_iter().take(target - (n - 1)));
    let links = pairs
        .iter()
        .map(|&(a, b)| LinkSpec {
            from: nodes[a].id,
            to: nodes[b].id,
            length: euclidean((nodes[a].x, nodes[a].y), (nodes[b].x, nodes[b].y)).max(1e-6),
            value: rng.gen_range(1.0..=10.0) / 10.0,
        })
        .collect();
    let network = transform(&build_road_network(nodes, links)?);
    let p_max = rng.gen_range(cfg.p_max_range.0..=cfg.p_max_range.1);
    let drawn: Vec<f64> = network
        .artificials()
        .map(|_| rng.gen_range(cfg.tw_alpha * p_max..=p_max))
        .collect();
    let time_windows = if cfg.attrs.time_windows {
        vec![f64::INFINITY; network.n_original()]
            .into_iter()
            .chain(drawn)
            .collect()
    } else {
        vec![f64::INFINITY; network.len()]
    };
    let mut originals: Vec<usize> = network.originals().collect();
    originals.shuffle(rng);
    let mut depots: Vec<Depot> = originals[..cfg.depots]
        .iter()
        .map(|&node| Depot {
            node,
            capacity: cfg.depot_capacity.unwrap_or(cfg.drones),
        })
        .collect();
    depots.sort_by_key(|d| d.node);
    let inst = Instance {
        network,
        p_max,
        battery: 8.0,
        drones: cfg.drones,
        attrs: cfg.attrs,
        time_windows,
        depots,
        tw_rule: TwRule::Arrival,
    };
    inst.validate()?;
    Ok(inst)
}
