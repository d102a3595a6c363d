//! Random-permutation trellis source coding for memoryless sources.
//!
//! A sliding-block decoder maps the last `L` channel bits through a fixed
//! random permutation and the inverse CDF of a Shannon optimal reproduction
//! law. The same decoder serves two purposes:
//!
//! * driven by fair coin flips it simulates the source at `R` bits per
//!   symbol ([`codec::SlidingBlockDecoder::simulate`]);
//! * matched with a full-search Viterbi encoder it compresses a source
//!   sequence ([`codec::viterbi_encode`]).
//!
//! [`ratedist`] computes the distortion-rate function and the reproduction
//! law, [`diagnostics`] checks the necessary conditions an asymptotically
//! optimal code must satisfy, and [`experiment`] runs whole configurations
//! and writes their CSV/JSON artifacts.
//!
//! ```
//! use rptrellis::codec::{viterbi_encode, SlidingBlockDecoder};
//! use rptrellis::ratedist::gaussian_distortion_rate;
//! use rptrellis::sources::SourceModel;
//!
//! let point = gaussian_distortion_rate(1.0, 1.0).unwrap();
//! let decoder = SlidingBlockDecoder::build(&point.reproduction, 8, 1, 1).unwrap();
//! let x = SourceModel::standard_gaussian().sample(2000, 7).unwrap();
//! let encoded = viterbi_encode(&decoder, &x).unwrap();
//! assert!(encoded.mse > point.distortion && encoded.mse < 0.35);
//! ```

pub mod codec;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod ratedist;
pub mod rng;
pub mod sources;
