//! FRQI image encoding and the FRQI-Pairs quantum recurrent classifier,
//! simulated on a dense statevector.
//!
//! * [`qsim`]: statevector, gates, marginals, sampling.
//! * [`frqi`]: image ↔ FRQI state codec.
//! * [`model`]: cell schedules, the parameterized circuit, classifier head.
//! * [`train`]: loss, parameter-shift gradients, optimizers, metrics.
//! * [`data`]: MNIST IDX loading, resizing, balanced subsets, the angle cache.

pub mod data;
pub mod frqi;
pub mod model;
pub mod qsim;
pub mod train;
