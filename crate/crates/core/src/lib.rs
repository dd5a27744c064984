//! Metric entropy of moving-average orbits on the circle.
//!
//! * [`pseudometric`]: finite pseudo-metric spaces with exact and greedy
//!   covering and packing numbers.
//! * [`torus`]: trigonometric polynomials, translations, moving averages and
//!   their orbit metrics.
//! * [`construction`]: certified search for separated families whose orbits
//!   carry large entropy, and assembly of the real-valued counterexample.
//! * [`gaussian_lab`]: Monte Carlo checks of Gaussian process inequalities
//!   and the bridge from orbit metrics to Gaussian canonical metrics.
//! * [`phase`]: exact reduction of `k * a mod 1` for arbitrarily large `k`.
//! * [`cli`]: the `entropylab` command line.

pub mod cli;
pub mod construction;
pub mod error;
pub mod gaussian_lab;
pub mod phase;
pub mod pseudometric;
pub mod torus;

pub use error::{Error, Result};
pub use pseudometric::{FinitePseudoMetric, Mode};
pub use torus::{AveragingFamily, Part, TranslationFamily, TrigPoly};
