//! SecureCyclon and legacy Cyclon peer sampling, with a deterministic
//! cycle-driven simulator and configurable adversaries.

pub mod adversary;
pub mod descriptor;
pub mod identity;
pub mod metrics;
pub mod secure;
pub mod sim;
pub mod view;

pub use descriptor::{chain_relation, Address, ChainRelation, Descriptor, DescriptorError, DescriptorKey};
pub use identity::{Clock, Ed25519Scheme, KeyPair, KeyedHashScheme, NodeId, Signature, SignatureScheme};
pub use adversary::{AttackPlan, MaliciousPool, Strategy};
pub use secure::{NodeState, SecureConfig, ViolationKind, ViolationProof};
pub use metrics::{cost_model, CostModel, CycleSnapshot, DetectionBucket, MetricsSeries};
pub use sim::{run, ChurnEvent, ConfigError, Mode, ScenarioConfig, SignatureBackend, Simulation, Tuning};
pub use view::{CyclonError, ProtocolParams, View, ViewEntry};

/// Random number generator used throughout the simulator.
pub type SimRng = rand_chacha::ChaCha8Rng;
