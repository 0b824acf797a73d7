//! Road networks and their node-based transformation.
//!
//! A [`RoadNetwork`] is the physical, undirected road graph whose links carry
//! an assessment time and an information value. [`transform`] splits every
//! link with an artificial midpoint node so that assessing a link becomes
//! visiting a node, and overlays a complete auxiliary graph between the
//! original nodes for fast transit.

mod tntp;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tntp::{ingest_tntp, IngestOptions};

/// Index of a node in a [`TransformedNetwork`] (originals first, then artificial nodes).
pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no nodes")]
    Empty,
    #[error("duplicate node id {0}")]
    DuplicateNodeId(u32),
    #[error("unknown node {0}")]
    UnknownNode(u64),
    #[error("self-loop on node {0}")]
    SelfLoop(u32),
    #[error("duplicate link between nodes {0} and {1}")]
    DuplicateLink(u32, u32),
    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("coordinate of node {id} outside the unit square: ({x}, {y})")]
    CoordinateOutOfRange { id: u32, x: f64, y: f64 },
    #[error("link ({0}, {1}) has a non-positive or non-finite length")]
    InvalidLength(u32, u32),
    #[error("link ({0}, {1}) has a negative or non-finite value")]
    InvalidValue(u32, u32),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

/// A link as supplied by a caller: endpoints are external node ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub from: u32,
    pub to: u32,
    pub length: f64,
    pub value: f64,
}

/// A validated link; endpoints are indices into [`RoadNetwork::nodes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub length: f64,
    pub value: f64,
}

/// Undirected, connected, simple road graph on the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RoadNetworkWire", into = "RoadNetworkWire")]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
}

#[derive(Serialize, Deserialize)]
struct RoadNetworkWire {
    nodes: Vec<Node>,
    links: Vec<LinkSpec>,
}

impl TryFrom<RoadNetworkWire> for RoadNetwork {
    type Error = NetworkError;

    fn try_from(w: RoadNetworkWire) -> Result<Self, Self::Error> {
        build_road_network(w.nodes, w.links)
    }
}

impl From<RoadNetwork> for RoadNetworkWire {
    fn from(net: RoadNetwork) -> Self {
        let links = net.link_specs();
        RoadNetworkWire {
            nodes: net.nodes,
            links,
        }
    }
}

/// Validates nodes and links into a [`RoadNetwork`].
pub fn build_road_network(nodes: Vec<Node>, links: Vec<LinkSpec>) -> Result<RoadNetwork, NetworkError> {
    if nodes.is_empty() {
        return Err(NetworkError::Empty);
    }
    let mut index = HashMap::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id, i).is_some() {
            return Err(NetworkError::DuplicateNodeId(n.id));
        }
        let inside = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !inside(n.x) || !inside(n.y) {
            return Err(NetworkError::CoordinateOutOfRange {
                id: n.id,
                x: n.x,
                y: n.y,
            });
        }
    }
    let mut seen = HashMap::with_capacity(links.len());
    let mut out = Vec::with_capacity(links.len());
    for l in &links {
        let a = *index.get(&l.from).ok_or(NetworkError::UnknownNode(l.from as u64))?;
        let b = *index.get(&l.to).ok_or(NetworkError::UnknownNode(l.to as u64))?;
        if a == b {
            return Err(NetworkError::SelfLoop(l.from));
        }
        if seen.insert((a.min(b), a.max(b)), ()).is_some() {
            return Err(NetworkError::DuplicateLink(l.from, l.to));
        }
        if !(l.length.is_finite() && l.length > 0.0) {
            return Err(NetworkError::InvalidLength(l.from, l.to));
        }
        if !(l.value.is_finite() && l.value >= 0.0) {
            return Err(NetworkError::InvalidValue(l.from, l.to));
        }
        out.push(Link {
            a,
            b,
            length: l.length,
            value: l.value,
        });
    }
    let components = count_components(nodes.len(), out.iter().map(|l| (l.a, l.b)));
    if components != 1 {
        return Err(NetworkError::DisconnectedGraph { components });
    }
    Ok(RoadNetwork { nodes, links: out })
}

/// Number of connected components of an undirected graph on `n` vertices.
pub fn count_components(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> usize {
    let mut uf = UnionFind::new(n);
    let mut components = n;
    for (a, b) in edges {
        if uf.union(a, b) {
            components -= 1;
        }
    }
    components
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when `a` and `b` were in different sets.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

impl RoadNetwork {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_specs(&self) -> Vec<LinkSpec> {
        self.links
            .iter()
            .map(|l| LinkSpec {
                from: self.nodes[l.a].id,
                to: self.nodes[l.b].id,
                length: l.length,
                value: l.value,
            })
            .collect()
    }

    /// Rebuilds the network with a new link set, re-validating invariants.
    pub fn with_links(&self, links: Vec<LinkSpec>) -> Result<RoadNetwork, NetworkError> {
        build_road_network(self.nodes.clone(), links)
    }

    /// Rebuilds the network with moved nodes; topology is kept.
    pub fn with_nodes(&self, nodes: Vec<Node>) -> Result<RoadNetwork, NetworkError> {
        build_road_network(nodes, self.link_specs())
    }
}

/// Euclidean distance; every coordinate-derived time goes through here so
/// that equal inputs always produce bit-identical times.
#[inline]
pub fn euclidean(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    (dx * dx + dy * dy).sqrt()
}

/// An artificial node created by splitting a road link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtificialNode {
    pub endpoints: (NodeId, NodeId),
    pub half_time: f64,
    pub value: f64,
}

/// Node-based network: original nodes `0..n_original`, artificial nodes after.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedNetwork {
    road: RoadNetwork,
    coords: Vec<(f64, f64)>,
    values: Vec<f64>,
    artificial: Vec<ArtificialNode>,
    incident: Vec<Vec<NodeId>>,
}

/// Splits every link of `net` at its midpoint.
pub fn transform(net: &RoadNetwork) -> TransformedNetwork {
    let n = net.node_count();
    let mut coords: Vec<(f64, f64)> = net.nodes.iter().map(|v| (v.x, v.y)).collect();
    let mut values = vec![0.0; n];
    let mut artificial = Vec::with_capacity(net.link_count());
    let mut incident = vec![Vec::new(); n];
    for (k, l) in net.links.iter().enumerate() {
        let p = n + k;
        let (pa, pb) = (coords[l.a], coords[l.b]);
        coords.push(((pa.0 + pb.0) / 2.0, (pa.1 + pb.1) / 2.0));
        values.push(l.value);
        artificial.push(ArtificialNode {
            endpoints: (l.a, l.b),
            half_time: l.length / 2.0,
            value: l.value,
        });
        incident[l.a].push(p);
        incident[l.b].push(p);
    }
    TransformedNetwork {
        road: net.clone(),
        coords,
        values,
        artificial,
        incident,
    }
}

impl TransformedNetwork {
    pub fn road(&self) -> &RoadNetwork {
        &self.road
    }

    /// |N̄| = |N| + |P|.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn n_original(&self) -> usize {
        self.road.node_count()
    }

    pub fn n_artificial(&self) -> usize {
        self.artificial.len()
    }

    pub fn is_artificial(&self, i: NodeId) -> bool {
        i >= self.n_original()
    }

    pub fn originals(&self) -> std::ops::Range<NodeId> {
        0..self.n_original()
    }

    pub fn artificials(&self) -> std::ops::Range<NodeId> {
        self.n_original()..self.len()
    }

    pub fn coord(&self, i: NodeId) -> (f64, f64) {
        self.coords[i]
    }

    /// Information value c_i (zero for original nodes).
    pub fn value(&self, i: NodeId) -> f64 {
        self.values[i]
    }

    pub fn artificial(&self, p: NodeId) -> &ArtificialNode {
        &self.artificial[p - self.n_original()]
    }

    /// Artificial nodes adjacent to original node `i`.
    pub fn incident(&self, i: NodeId) -> &[NodeId] {
        &self.incident[i]
    }

    /// The endpoint of `p`'s link opposite to `i`.
    pub fn far_endpoint(&self, p: NodeId, i: NodeId) -> NodeId {
        let (a, b) = self.artificial(p).endpoints;
        if a == i {
            b
        } else {
            a
        }
    }

    /// External id of an original node.
    pub fn external_id(&self, i: NodeId) -> u32 {
        self.road.nodes[i].id
    }

    /// Arc time of (i, j) in the transformed graph, `None` when no arc exists.
    /// Coincident original nodes get no aux arc (a zero-time move would let
    /// routes cycle forever).
    pub fn travel_time(&self, i: NodeId, j: NodeId) -> Result<Option<f64>, NetworkError> {
        let n = self.len();
        if i >= n {
            return Err(NetworkError::UnknownNode(i as u64));
        }
        if j >= n {
            return Err(NetworkError::UnknownNode(j as u64));
        }
        Ok(self.arc_time(i, j))
    }

    /// Unchecked variant of [`travel_time`](Self::travel_time) for hot loops.
    #[inline]
    pub fn arc_time(&self, i: NodeId, j: NodeId) -> Option<f64> {
        match (self.is_artificial(i), self.is_artificial(j)) {
            (false, false) => {
                let t = euclidean(self.coords[i], self.coords[j]);
                (t > 0.0).then_some(t)
            }
            (true, true) => None,
            (true, false) => self.half_arc(i, j),
            (false, true) => self.half_arc(j, i),
        }
    }

    fn half_arc(&self, p: NodeId, i: NodeId) -> Option<f64> {
        let a = self.artificial(p);
        (a.endpoints.0 == i || a.endpoints.1 == i).then_some(a.half_time)
    }

    /// Straight-line return time between two original nodes (zero for i == j).
    #[inline]
    pub fn return_time(&self, i: NodeId, depot: NodeId) -> f64 {
        if i == depot {
            0.0
        } else {
            euclidean(self.coords[i], self.coords[depot])
        }
    }

    /// All successors of `i` in the transformed graph, ascending.
    pub fn neighbors(&self, i: NodeId) -> Vec<NodeId> {
        if self.is_artificial(i) {
            let (a, b) = self.artificial(i).endpoints;
            let mut v = vec![a, b];
            v.sort_unstable();
            v
        } else {
            let mut v: Vec<NodeId> = self.originals().filter(|&j| self.arc_time(i, j).is_some()).collect();
            v.extend_from_slice(&self.incident[i]);
            v
        }
    }

    pub fn max_arc_time(&self) -> f64 {
        let aux = self
            .originals()
            .flat_map(|i| self.originals().map(move |j| (i, j)))
            .filter(|(i, j)| i < j)
            .map(|(i, j)| euclidean(self.coords[i], self.coords[j]))
            .fold(0.0, f64::max);
        self.artificial.iter().map(|a| a.half_time).fold(aux, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct TransformedWire {
    original_nodes: Vec<Node>,
    artificial_nodes: Vec<ArtificialWire>,
}

#[derive(Serialize, Deserialize)]
struct ArtificialWire {
    id: NodeId,
    x: f64,
    y: f64,
    value: f64,
    endpoints: (u32, u32),
    half_time: f64,
}

impl Serialize for TransformedNetwork {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let artificial_nodes = self
            .artificials()
            .map(|p| {
                let a = self.artificial(p);
                ArtificialWire {
                    id: p,
                    x: self.coords[p].0,
                    y: self.coords[p].1,
                    value: a.value,
                    endpoints: (self.external_id(a.endpoints.0), self.external_id(a.endpoints.1)),
                    half_time: a.half_time,
                }
            })
            .collect();
        TransformedWire {
            original_nodes: self.road.nodes.clone(),
            artificial_nodes,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransformedNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = TransformedWire::deserialize(d)?;
        let links = w
            .artificial_nodes
            .iter()
            .map(|a| LinkSpec {
                from: a.endpoints.0,
                to: a.endpoints.1,
                length: a.half_time * 2.0,
                value: a.value,
            })
            .collect();
        let road = build_road_network(w.original_nodes, links).map_err(D::Error::custom)?;
        Ok(transform(&road))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u32, x: f64, y: f64) -> Node {
        Node { id, x, y }
    }

    fn link(from: u32, to: u32, length: f64, value: f64) -> LinkSpec {
        LinkSpec {
            from,
            to,
            length,
            value,
        }
    }

    #[test]
    fn minimal_network() {
        let net = build_road_network(vec![node(1, 0.0, 0.0), node(2, 1.0, 0.0)], vec![link(1, 2, 1.0, 0.5)]).unwrap();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.link_count(), 1);
    }

    #[test]
    fn path_graph_is_valid() {
        let nodes = vec![node(1, 0.0, 0.0), node(2, 0.5, 0.0), node(3, 1.0, 0.0)];
        assert!(build_road_network(nodes, vec![link(1, 2, 0.5, 0.3), link(2, 3, 0.5, 0.3)]).is_ok());
    }

    #[test]
    fn rejects_invalid_networks() {
        let four = vec![
            node(1, 0.0, 0.0),
            node(2, 0.1, 0.0),
            node(3, 0.5, 0.5),
            node(4, 0.6, 0.5),
        ];
        assert_eq!(
            build_road_network(four.clone(), vec![link(1, 2, 0.1, 0.2), link(3, 4, 0.1, 0.2)]),
            Err(NetworkError::DisconnectedGraph { components: 2 })
        );
        assert_eq!(
            build_road_network(four.clone(), vec![link(1, 1, 0.1, 0.2)]),
            Err(NetworkError::SelfLoop(1))
        );
        assert_eq!(
            build_road_network(four[..2].to_vec(), vec![link(1, 2, 0.1, 0.2), link(2, 1, 0.1, 0.2)]),
            Err(NetworkError::DuplicateLink(2, 1))
        );
        assert!(matches!(
            build_road_network(vec![node(1, 1.5, 0.0)], vec![]),
            Err(NetworkError::CoordinateOutOfRange { id: 1, .. })
        ));
        assert_eq!(build_road_network(vec![], vec![]), Err(NetworkError::Empty));
        assert_eq!(
            build_road_network(four[..2].to_vec(), vec![link(1, 9, 0.1, 0.2)]),
            Err(NetworkError::UnknownNode(9))
        );
    }

    #[test]
    fn transform_splits_link() {
        let net = build_road_network(vec![node(1, 0.0, 0.0), node(2, 0.4, 0.0)], vec![link(1, 2, 0.4, 0.7)]).unwrap();
        let t = transform(&net);
        assert_eq!(t.len(), 3);
        let p = 2;
        assert_eq!(t.travel_time(p, 0).unwrap(), Some(0.2));
        assert_eq!(t.travel_time(1, p).unwrap(), Some(0.2));
        assert_eq!(t.value(p), 0.7);
        assert_eq!(t.value(0), 0.0);
        assert_eq!(t.coord(p), (0.2, 0.0));
    }

    #[test]
    fn single_node_has_no_artificial_nodes() {
        let net = build_road_network(vec![node(7, 0.5, 0.5)], vec![]).unwrap();
        let t = transform(&net);
        assert_eq!(t.n_artificial(), 0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn travel_time_queries() {
        let nodes = vec![node(1, 0.0, 0.0), node(2, 0.3, 0.4), node(3, 1.0, 1.0)];
        let net = build_road_network(nodes, vec![link(1, 2, 0.5, 0.2), link(2, 3, 0.9, 0.4)]).unwrap();
        let t = transform(&net);
        assert_eq!(t.travel_time(0, 1).unwrap(), Some(0.5));
        assert_eq!(t.travel_time(3, 4).unwrap(), None);
        // p=3 splits (1,2); node 3 (index 2) is not its endpoint.
        assert_eq!(t.travel_time(3, 2).unwrap(), None);
        assert_eq!(t.travel_time(0, 0).unwrap(), None);
        assert_eq!(t.travel_time(0, 99), Err(NetworkError::UnknownNode(99)));
        assert_eq!(t.neighbors(0), vec![1, 2, 3]);
        assert_eq!(t.neighbors(4), vec![1, 2]);
    }

    #[test]
    fn transformed_json_round_trip() {
        let nodes = vec![node(1, 0.0, 0.0), node(2, 0.3, 0.4), node(3, 1.0, 1.0)];
        let net = build_road_network(nodes, vec![link(1, 2, 0.5, 0.2), link(2, 3, 0.9, 0.4)]).unwrap();
        let t = transform(&net);
        let s = serde_json::to_string(&t).unwrap();
        let back: TransformedNetwork = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let road: RoadNetwork = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
        assert_eq!(road, net);
    }
}
