//! Dyadic cubes, sparse collections and forms, the stopping-time recursion,
//! improving-inequality probes and the exponent regions.

pub mod collection;
pub mod dyadic;
pub mod improving;
pub mod recursion;
pub mod regions;

pub use collection::{sparse_form_value, CollectionSummary, SparseCollection, SparseForm, Witness};
pub use dyadic::{BoxBits, DyadicCube, PointSet, WeightedPoints};
pub use recursion::{random_blob_sets, stopping_cubes, stopping_time_recursion, stopping_time_recursion_shells, Certificate, NodeRecord, RecursionConfig};
pub use improving::{adversarial_pairs, cube_side, improving_ratio, norm_scaling_scan, power_iteration, set_pairing, CubeSet, ImprovingReport, NormPoint, NormScan, TrialOutcome};
pub use regions::{figure_svg, klm_vertices, region, region_d, region_klm, region_p, region_s, region_v, render_svg, Layer, Region, RegionJson, RegionKind};
