//! Multi-task drone routing for post-disaster road assessment.
//!
//! Road networks are turned into node-routing problems by splitting each
//! link at an artificial node that carries the link's information value.
//! On top of that sit an instance generator, a masked construction
//! environment covering open routes, time windows and multiple depots, a
//! small attention policy trained with group policy gradients, and
//! reference solvers.

pub mod env;
pub mod eval;
pub mod instance;
pub mod instancegen;
pub mod network;
pub mod policy;
pub mod solvers;
pub mod training;

pub use env::{replay, reset, solution_value, EnvError, Mask, Position, Solution, State};
pub use instance::{AttributeConfig, Depot, Instance, InstanceError, RouteKind, TwRule};
pub use network::{transform, NetworkError, NodeId, RoadNetwork, TransformedNetwork};

/// Seeded generator used throughout.
pub type Rng = rand_chacha::ChaCha8Rng;
