//! Star-shaped constraint sets and their metric geometry.
//!
//! A continuous set `K` is represented by a membership oracle together with a
//! finite candidate cloud of points of `K`. Packings, coverings and local
//! entropies are computed over the cloud; all guarantees are relative to it.

mod entropy;
mod lattice;
mod packing;
mod set;

pub use entropy::{
    epsilon_star, local_entropy, local_entropy_at, EntropyOracle, EntropySource, FnEntropy,
    LocalEntropy, LocalEntropyOracle, SegmentEntropy,
};
pub use lattice::{monotone_lattice_set, MonotoneLattice};
pub use packing::{
    greedy_maximal_packing, greedy_pack_indices, pack_indices, scan_pack_indices, verify_packing,
    PackingCheck, PackingResult,
};
pub use set::{ConstraintSet, Diameter, FnRegion, Region, SegmentRegion, SingletonRegion};
