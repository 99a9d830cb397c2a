//! Finite-element laboratory for conformal "dumbbell" metrics: a metric that
//! is pinched to a small factor on a collar around a separating hypersurface.
//!
//! The pipeline goes mesh, collar geometry and conformal factor, weighted
//! P1 operators, lowest eigenpairs, then the harmonic collar model, nodal
//! sets and discrete Morse counts. A 1D Sturm-Liouville solver serves as an
//! independent reference for product scenes.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod assembly;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod harmonic;
pub mod mesh;
pub mod morse;
pub mod metric;
pub mod nodal;
pub mod oracle;
pub mod sparse;
pub mod util;

pub use error::{Error, Result};
