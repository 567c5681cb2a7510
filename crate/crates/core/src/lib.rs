//! Fitting of C^k-continuous piecewise polynomial splines by first-order
//! gradient descent.
//!
//! A [`SplineModel`] stores one polynomial per segment in a center-shifted
//! monomial basis. Training minimizes a blend of the least-squares
//! approximation error and the squared continuity defects at the
//! breakpoints (see [`loss`]), using one of the optimizers in [`optim`].
//! Whatever defect survives training can be removed exactly afterwards with
//! local corrective Hermite polynomials (see [`repair`]).
//!
//! ```
//! use ckspline::{fit, SampleSet, TrainConfig};
//!
//! let xs: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
//! let ys = xs.clone();
//! let samples = SampleSet::new(xs, ys).unwrap();
//! let mut config = TrainConfig::default();
//! config.segments = 1;
//! config.degree = 1;
//! config.epochs = 2000;
//! let report = fit(&samples, &config).unwrap();
//! assert!(report.final_loss().unwrap().total < 1e-6);
//! ```

pub mod error;
pub mod io;
pub mod loss;
pub mod optim;
pub mod repair;
pub mod spline;
pub mod train;

pub use error::{Error, Result};
pub use loss::{BoundaryMode, LossBreakdown, LossConfig};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use repair::{repair_continuity, two_point_hermite, RepairReport};
pub use spline::{rebase, CoefMatrix, DomainMap, SampleSet, SplineModel};
pub use train::{fit, Init, Regularization, Scaling, TrainConfig, TrainingReport};
