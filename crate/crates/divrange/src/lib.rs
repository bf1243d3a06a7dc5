//! Exact joint ranges of pairs of f-divergences.
//!
//! The joint range of `(D_f, D_g)` over all pairs of distributions equals the
//! convex hull of its restriction to pairs of two-point distributions. This
//! crate evaluates divergences, sweeps the two-point parameter triangle,
//! builds the hull with its unbounded directions, analyzes the map's singular
//! set and tail behavior, constructs distributions achieving given targets,
//! and verifies membership by Monte Carlo sampling.

pub mod analysis;
pub mod cli;
pub mod divergence;
pub mod generators;
pub mod jointrange;

pub use analysis::{
    achieve, jacobian_det, limit_ratios, ratio_bound_exists, recession_rays, singular_locus,
    unbounded_witness, verify_membership, AnalysisError, LimitRatios, MembershipReport,
    MixturePair, SingularPoint,
};
pub use divergence::{
    block_mixture, divergence, divergence_pair, two_point_pair, DiscreteDistribution,
    DivergenceError, DivergencePoint, TrianglePoint,
};
pub use generators::{
    catalog, conjugate, make_jensen_shannon, make_lecam, make_power, make_total_variation,
    parse_spec, Generator, SpecParseError,
};
pub use jointrange::{
    cloud_2achievable, envelope, hull, joint_range, lower_envelope, region_from_cloud,
    sample_triangle, upper_envelope, Containment, ConvexRegion, Envelope, InfiniteKind,
    LedgerEntry, PointCloud, RangeError, RayDir,
};
