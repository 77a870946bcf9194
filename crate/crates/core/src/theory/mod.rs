//! Oracles for the theory: partition values on grids, the explicit grid head,
//! the adversary value as k grows, H-divergence estimates, bound calculators
//! and the invariance checker.

pub mod bounds;
pub mod density;
pub mod grid;
pub mod hdiv;
pub mod head;
pub mod invariance;
pub mod limit;
pub mod linalg;
pub mod partition;

pub use bounds::{
    bound_rhs, high_probability_threshold, m_k, vc_dimension_of_heads, worst_case_bound,
    BoundInputs, BoundReport, WorstCaseInputs, WorstCaseReport,
};
pub use density::{exact_density, tail_radius, ProductDensity};
pub use grid::{estimate_density, DensityEstimate, GridSpec};
pub use hdiv::{h_divergence_estimate, HDivergence, HypothesisConfig};
pub use head::{constructive_head, head_for_assignment};
pub use invariance::{
    invariance_check, BasisFunction, InvarianceInputs, InvarianceReport, LinearPhiDecomposition,
};
pub use limit::{adversary_limit_experiment, LimitConfig, LimitRecord, RepWorld};
pub use linalg::{pseudo_inverse, PseudoInverse};
pub use partition::{
    boundary_interior_counts, partition_value, tv_relation_check, PartitionValue, RegionAssignment,
};
