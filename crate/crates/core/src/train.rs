//! Training loop, preprocessing and initialization.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{gradient, total_loss, LossBreakdown, LossConfig};
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::spline::{CoefMatrix, DomainMap, SampleSet, SplineModel};

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " `{}` (expected one of: {})"),
                        other,
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }
    };
}

keyword_enum!(Regularization { None => "none", DegreeBased => "degree_based" });
keyword_enum!(Init { Zeros => "zeros", LeastSquares => "least_squares" });
keyword_enum!(Scaling { None => "none", UnitSegments => "unit_segments" });

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub segments: usize,
    pub degree: usize,
    pub epochs: usize,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub regularization: Regularization,
    pub init: Init,
    pub scaling: Scaling,
    pub record_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            segments: 1,
            degree: 3,
            epochs: 1000,
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            regularization: Regularization::None,
            init: Init::Zeros,
            scaling: Scaling::UnitSegments,
            record_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments == 0 {
            return Err(Error::Config("segment count must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.loss.k > self.degree {
            return Err(Error::Config(format!(
                "continuity order k = {} exceeds degree {}",
                self.loss.k, self.degree
            )));
        }
        self.loss.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub history: Vec<HistoryRow>,
    /// Last model with a finite loss.
    pub final_model: SplineModel,
    /// Internal-coordinate samples the losses were computed on.
    pub samples: SampleSet,
    /// Epoch at which the loss or gradient stopped being finite.
    pub diverged_at: Option<usize>,
    /// Segments whose least-squares initialization was rank deficient.
    pub rank_deficient_segments: Vec<usize>,
}

impl TrainingReport {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn final_loss(&self) -> Option<&LossBreakdown> {
        self.history.last().map(|r| &r.loss)
    }
}

/// `r_j = (1/(1+j)) / Σ_t 1/(1+t)` for `j = 0..=d`.
pub fn regularization_vector(degree: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..=degree).map(|j| 1.0 / (1 + j) as f64).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / sum).collect()
}

/// Scales column `j` of every row by `r[j]`.
pub fn apply_regularization(grads: &CoefMatrix, r: &[f64]) -> Result<CoefMatrix> {
    if r.len() != grads.cols() {
        return Err(Error::Config(format!(
            "regularization vector has {} entries for {} gradient columns",
            r.len(),
            grads.cols()
        )));
    }
    let mut out = grads.clone();
    for i in 0..out.rows() {
        for (g, w) in out.row_mut(i).iter_mut().zip(r) {
            *g *= w;
        }
    }
    Ok(out)
}

/// Builds a zero spline with `m` uniform segments covering the samples and
/// returns it with the samples mapped into its internal coordinates.
///
/// With [`Scaling::UnitSegments`] the internal domain is `[0, m]`, so every
/// segment has unit length.
pub fn make_scaled_problem(
    samples: &SampleSet,
    segments: usize,
    degree: usize,
    scaling: Scaling,
) -> Result<(SplineModel, SampleSet)> {
    let xs = samples.xs();
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    if lo == hi {
        return Err(Error::DegenerateDomain(lo));
    }
    if segments == 0 {
        return Err(Error::Config("segment count must be positive".into()));
    }
    let (map, t_lo, t_hi) = match scaling {
        Scaling::None => (DomainMap::IDENTITY, lo, hi),
        Scaling::UnitSegments => {
            let scale = segments as f64 / (hi - lo);
            (DomainMap::new(scale, -scale * lo)?, 0.0, segments as f64)
        }
    };
    let model = SplineModel::uniform(t_lo, t_hi, segments, degree, map)?;
    let internal: Vec<f64> = xs
        .iter()
        .map(|&x| map.forward(x).clamp(t_lo, t_hi))
        .collect();
    let internal = SampleSet::new(internal, samples.ys().to_vec())?;
    Ok((model, internal))
}

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub model: SplineModel,
    /// Segments that fell back to the minimum-norm solution.
    pub rank_deficient: Vec<usize>,
}

/// Independent per-segment least-squares fit in each segment's shifted
/// basis, ignoring continuity. Samples are in internal coordinates.
pub fn least_squares_init(model: &SplineModel, samples: &SampleSet) -> Result<LeastSquaresFit> {
    let cols = model.degree() + 1;
    let mut owned: Vec<Vec<(f64, f64)>> = vec![Vec::new(); model.segments()];
    for (index, (x, y)) in samples.iter().enumerate() {
        let i = model.segment_index(x).map_err(|_| {
            let (lo, hi) = model.domain();
            Error::SampleOutOfDomain { index, x, lo, hi }
        })?;
        owned[i].push((x - model.centers()[i], y));
    }

    let mut coefficients = CoefMatrix::zeros(model.segments(), cols);
    let mut rank_deficient = Vec::new();
    for (i, pts) in owned.iter().enumerate() {
        if pts.is_empty() {
            rank_deficient.push(i);
            continue;
        }
        let design = DMatrix::from_fn(pts.len(), cols, |r, c| pts[r].0.powi(c as i32));
        let rhs = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
        let svd = design.clone().svd(false, false);
        let sigma_max = svd.singular_values.max();
        let tol = f64::EPSILON * pts.len().max(cols) as f64 * sigma_max;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();

        let solution = if rank == cols {
            let normal = design.transpose() * &design;
            let moments = design.transpose() * &rhs;
            normal.cholesky().map(|ch| ch.solve(&moments))
        } else {
            None
        };
        let solution = match solution {
            Some(s) => s,
            None => {
                rank_deficient.push(i);
                design
                    .svd(true, true)
                    .solve(&rhs, tol)
                    .map_err(|e| Error::Config(format!("least-squares solve failed: {e}")))?
            }
        };
        coefficients.row_mut(i).copy_from_slice(solution.as_slice());
    }

    let mut fitted = model.clone();
    fitted.set_coefficients(coefficients)?;
    Ok(LeastSquaresFit {
        model: fitted,
        rank_deficient,
    })
}

/// Runs the training loop on an already initialized model. Samples are in
/// the model's internal coordinates.
pub fn train(model: SplineModel, samples: &SampleSet, config: &TrainConfig) -> Result<TrainingReport> {
    config.validate()?;
    config.loss.validate_for(&model)?;
    let reg = match config.regularization {
        Regularization::None => None,
        Regularization::DegreeBased => Some(regularization_vector(model.degree())),
    };
    let mut state = OptimizerState::new(config.optimizer, model.coefficients().shape())?;
    let mut model = model;
    let mut history = Vec::new();
    let mut diverged_at = None;
    let mut last_good = model.coefficients().clone();

    for epoch in 0..=config.epochs {
        let loss = total_loss(&model, samples, &config.loss)?;
        if !loss.is_finite() {
            diverged_at = Some(epoch);
            break;
        }
        last_good.clone_from(model.coefficients());
        if epoch % config.record_every == 0 || epoch == config.epochs {
            history.push(HistoryRow { epoch, loss });
            log::debug!(
                "epoch {epoch}: loss {:.6e} (l2 {:.6e}, ck {:.6e})",
                loss.total,
                loss.l2,
                loss.ck
            );
        }
        if epoch == config.epochs {
            break;
        }
        let mut grads = gradient(&model, samples, &config.loss)?;
        if let Some(r) = &reg {
            grads = apply_regularization(&grads, r)?;
        }
        match state.step(model.coefficients_mut(), &grads) {
            Ok(()) => {}
            Err(Error::NonFiniteGradient { .. }) => {
                diverged_at = Some(epoch);
                break;
            }
            Err(e) => return Err(e),
        }
    }

    if diverged_at.is_some() {
        model.set_coefficients(last_good)?;
    }
    Ok(TrainingReport {
        history,
        final_model: model,
        samples: samples.clone(),
        diverged_at,
        rank_deficient_segments: Vec::new(),
    })
}

/// Scales the samples, initializes a spline and trains it.
pub fn fit(samples: &SampleSet, config: &TrainConfig) -> Result<TrainingReport> {
    config.validate()?;
    if config.degree < 2 * config.loss.k + 1 {
        log::warn!(
            "degree {} < 2k+1 = {}: continuity repair will not be available",
            config.degree,
            2 * config.loss.k + 1
        );
    }
    let (model, internal) = make_scaled_problem(samples, config.segments, config.degree, config.scaling)?;
    let (model, rank_deficient) = match config.init {
        Init::Zeros => (model, Vec::new()),
        Init::LeastSquares => {
            let ls = least_squares_init(&model, &internal)?;
            (ls.model, ls.rank_deficient)
        }
    };
    let mut report = train(model, &internal, config)?;
    report.rank_deficient_segments = rank_deficient;
    Ok(report)
}
