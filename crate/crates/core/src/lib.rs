//! Discrete-time NFV network simulation library.
//!
//! The crate models a physical network hosting service function chains with
//! time-varying multidimensional demands, quantifies resource fragmentation
//! per node and network-wide, runs overload-driven VNF migration under
//! pluggable destination policies (greedy, exhaustive oracle, and a trained
//! multi-hop graph attention model), and generates the labeled datasets the
//! model is trained on.
//!
//! All numeric code is generic over a floating-point [`Scalar`]; the type
//! aliases below pin the `f64` instantiations used by the simulator binary.

pub mod frag;
pub mod mhgat;
pub mod migration;
pub mod scalar;
pub mod sim;
pub mod state;
pub mod topology;
pub mod workload;

pub use scalar::Scalar;

/// `f64` network, the default instantiation.
pub type Network = topology::Network<f64>;
/// `f64` path table.
pub type PathTable = topology::PathTable<f64>;
/// `f64` dynamic placement state.
pub type NetworkState = state::NetworkState<f64>;
/// `f64` SFC request.
pub type SfcRequest = workload::SfcRequest<f64>;
/// `f64` fragmentation parameters.
pub type FragParams = frag::FragParams<f64>;
/// `f64` multi-hop graph attention model.
pub type MhgatModel = mhgat::MhgatModel<f64>;
/// `f64` simulation configuration.
pub type SimConfig = sim::SimConfig<f64>;
