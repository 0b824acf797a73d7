//! Problem instances and the attribute system (open route, time windows, multi-depot).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NodeId, TransformedNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteKind {
    /// Drones land wherever their budget runs out.
    Open,
    /// Drones must return to their origin depot.
    Closed,
}

/// Which optional attributes are active. The eight combinations are the
/// eight problem variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeConfig {
    pub route: RouteKind,
    pub time_windows: bool,
    pub multi_depot: bool,
}

impl AttributeConfig {
    pub const BASIC: AttributeConfig = AttributeConfig {
        route: RouteKind::Closed,
        time_windows: false,
        multi_depot: false,
    };

    /// All eight variants in table order.
    pub fn all() -> [AttributeConfig; 8] {
        let mut out = [Self::BASIC; 8];
        for (i, slot) in out.iter_mut().enumerate() {
            slot.route = if i & 1 == 1 { RouteKind::Open } else { RouteKind::Closed };
            slot.time_windows = i & 2 != 0;
            slot.multi_depot = i & 4 != 0;
        }
        out
    }

    /// The binary route flag fed to the model: 0 = open, 1 = closed.
    pub fn o_flag(&self) -> f64 {
        match self.route {
            RouteKind::Open => 0.0,
            RouteKind::Closed => 1.0,
        }
    }

    pub fn is_open(&self) -> bool {
        self.route == RouteKind::Open
    }

    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.is_open() {
            parts.push("or");
        }
        if self.time_windows {
            parts.push("tw");
        }
        if self.multi_depot {
            parts.push("md");
        }
        if parts.is_empty() {
            "basic".to_string()
        } else {
            parts.join("-")
        }
    }
}

impl fmt::Display for AttributeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PDRA-{}", self.name().to_uppercase())
    }
}

impl FromStr for AttributeConfig {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let lower = lower.strip_prefix("pdra-").unwrap_or(&lower);
        let mut attrs = Self::BASIC;
        if lower != "basic" {
            for part in lower.split('-') {
                match part {
                    "or" if !attrs.is_open() => attrs.route = RouteKind::Open,
                    "tw" if !attrs.time_windows => attrs.time_windows = true,
                    "md" if !attrs.multi_depot => attrs.multi_depot = true,
                    _ => return Err(InstanceError::UnknownVariant(s.to_string())),
                }
            }
        }
        Ok(attrs)
    }
}

/// How the time-window rule treats artificial nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwRule {
    /// `d_t + t_ji <= l_i`: the window binds on arrival at the node.
    #[default]
    Arrival,
    /// `d_t + 2 t_ji <= l_i` for artificial nodes: the window binds on
    /// finishing the link traversal.
    Completion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Depot {
    pub node: NodeId,
    /// Maximum number of drones launched from this depot.
    pub capacity: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("instance needs at least one depot")]
    NoDepot,
    #[error("depot {0} is not an original node")]
    DepotNotOriginal(NodeId),
    #[error("depot {0} listed twice")]
    DuplicateDepot(NodeId),
    #[error("single-depot instance has {0} depots")]
    TooManyDepots(usize),
    #[error("depot capacities sum to {capacity} but {drones} drones must launch")]
    InsufficientCapacity { capacity: usize, drones: usize },
    #[error("time budget p_max must be positive and finite")]
    InvalidBudget,
    #[error("battery limit Q must be positive")]
    InvalidBattery,
    #[error("at least one drone is required")]
    NoDrones,
    #[error("time window vector has {found} entries, expected {expected}")]
    WindowLength { expected: usize, found: usize },
    #[error("time window of node {0} is negative or NaN")]
    InvalidWindow(NodeId),
}

/// A transformed network plus the operational parameters of one mission.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub network: TransformedNetwork,
    pub p_max: f64,
    pub battery: f64,
    pub drones: usize,
    pub attrs: AttributeConfig,
    /// Latest allowed arrival l_i per node; `f64::INFINITY` when unconstrained.
    pub time_windows: Vec<f64>,
    pub depots: Vec<Depot>,
    pub tw_rule: TwRule,
}

impl Instance {
    pub fn validate(&self) -> Result<(), InstanceError> {
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(InstanceError::InvalidBudget);
        }
        if self.battery.is_nan() || self.battery <= 0.0 {
            return Err(InstanceError::InvalidBattery);
        }
        if self.drones == 0 {
            return Err(InstanceError::NoDrones);
        }
        if self.depots.is_empty() {
            return Err(InstanceError::NoDepot);
        }
        if !self.attrs.multi_depot && self.depots.len() != 1 {
            return Err(InstanceError::TooManyDepots(self.depots.len()));
        }
        for (i, d) in self.depots.iter().enumerate() {
            if d.node >= self.network.n_original() {
                return Err(InstanceError::DepotNotOriginal(d.node));
            }
            if self.depots[..i].iter().any(|e| e.node == d.node) {
                return Err(InstanceError::DuplicateDepot(d.node));
            }
        }
        if self.attrs.multi_depot {
            let capacity: usize = self.depots.iter().map(|d| d.capacity).sum();
            if capacity < self.drones {
                return Err(InstanceError::InsufficientCapacity {
                    capacity,
                    drones: self.drones,
                });
            }
        }
        if self.time_windows.len() != self.network.len() {
            return Err(InstanceError::WindowLength {
                expected: self.network.len(),
                found: self.time_windows.len(),
            });
        }
        if let Some(i) = self.time_windows.iter().position(|l| l.is_nan() || *l < 0.0) {
            return Err(InstanceError::InvalidWindow(i));
        }
        Ok(())
    }

    /// Effective per-route budget min(p_max, Q).
    pub fn budget(&self) -> f64 {
        self.p_max.min(self.battery)
    }

    /// The single depot node (first depot for multi-depot instances).
    pub fn depot(&self) -> NodeId {
        self.depots[0].node
    }

    pub fn is_depot(&self, i: NodeId) -> bool {
        self.depots.iter().any(|d| d.node == i)
    }

    /// Time window of node `i`, or infinity when windows are inactive.
    pub fn window(&self, i: NodeId) -> f64 {
        if self.attrs.time_windows {
            self.time_windows[i]
        } else {
            f64::INFINITY
        }
    }

    /// A copy with a different attribute configuration (depots unchanged).
    pub fn with_attrs(&self, attrs: AttributeConfig) -> Instance {
        Instance { attrs, ..self.clone() }
    }

    /// Total value of all artificial nodes.
    pub fn total_value(&self) -> f64 {
        self.network.artificials().map(|p| self.network.value(p)).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceWire {
    network: TransformedNetwork,
    p_max: f64,
    battery: f64,
    drones: usize,
    attrs: AttributeConfig,
    /// `null` encodes an unconstrained window.
    time_windows: Vec<Option<f64>>,
    depots: Vec<Depot>,
    #[serde(default)]
    tw_rule: TwRule,
}

impl Serialize for Instance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        InstanceWire {
            network: self.network.clone(),
            p_max: self.p_max,
            battery: self.battery,
            drones: self.drones,
            attrs: self.attrs,
            time_windows: self.time_windows.iter().map(|l| l.is_finite().then_some(*l)).collect(),
            depots: self.depots.clone(),
            tw_rule: self.tw_rule,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = InstanceWire::deserialize(d)?;
        let inst = Instance {
            network: w.network,
            p_max: w.p_max,
            battery: w.battery,
            drones: w.drones,
            attrs: w.attrs,
            time_windows: w.time_windows.into_iter().map(|l| l.unwrap_or(f64::INFINITY)).collect(),
            depots: w.depots,
            tw_rule: w.tw_rule,
        };
        inst.validate().map_err(D::Error::custom)?;
        Ok(inst)
    }
}
