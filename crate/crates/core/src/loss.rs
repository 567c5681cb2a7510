//! Approximation, continuity and strain losses together with their exact
//! gradients with respect to every spline coefficient.
//!
//! Every loss is a quadratic form in the coefficients, so the gradients
//! below are derived by hand and are exact up to rounding. [`fd_gradient`]
//! is a central-difference oracle used to check them.
//!
//! Samples passed to these functions are in the model's internal
//! coordinates; derivatives are taken with respect to internal coordinates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{basis_derivative, CoefMatrix, SampleSet, SplineModel};

/// How the two ends of the spline domain are tied together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Interior breakpoints only.
    #[default]
    Open,
    /// Additionally match derivatives `1..=k` between the two ends.
    Cyclic,
    /// Additionally match derivatives `0..=k` between the two ends.
    Periodic,
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Self::Open),
            "cyclic" => Ok(Self::Cyclic),
            "periodic" => Ok(Self::Periodic),
            other => Err(Error::Config(format!(
                "unknown boundary mode `{other}` (expected open, cyclic or periodic)"
            ))),
        }
    }
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Open => "open",
            Self::Cyclic => "cyclic",
            Self::Periodic => "periodic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Blend weight between approximation error and continuity defect.
    pub lambda: f64,
    /// Highest derivative order that has to match at breakpoints.
    pub k: usize,
    pub boundary_mode: BoundaryMode,
    pub strain_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            k: 0,
            boundary_mode: BoundaryMode::Open,
            strain_weight: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.strain_weight >= 0.0 && self.strain_weight.is_finite()) {
            return Err(Error::Config(format!(
                "strain weight must be finite and non-negative, got {}",
                self.strain_weight
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, model: &SplineModel) -> Result<()> {
        self.validate()?;
        if self.k > model.degree() {
            return Err(Error::Config(format!(
                "continuity order k = {} exceeds spline degree {}",
                self.k,
                model.degree()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l2: f64,
    pub ck: f64,
    pub strain: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.l2.is_finite() && self.ck.is_finite() && self.strain.is_finite()
    }
}

/// A place where two segment ends have to agree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    /// Segment ending at the joint, evaluated at `left_t`.
    pub left_segment: usize,
    pub left_t: f64,
    /// Segment starting at the joint, evaluated at `right_t`.
    pub right_segment: usize,
    pub right_t: f64,
    /// Lowest derivative order that is matched (1 for the cyclic wrap joint).
    pub first_order: usize,
}

impl Joint {
    pub fn is_wrap(&self) -> bool {
        self.left_t != self.right_t
    }
}

/// Joints of `model` under `mode` and the equilibration divisor of the
/// continuity loss. The wrap-around joint, when present, comes last.
pub fn joints(model: &SplineModel, mode: BoundaryMode) -> (Vec<Joint>, usize) {
    let m = model.segments();
    let bps = model.breakpoints();
    let mut out: Vec<Joint> = (1..m)
        .map(|i| Joint {
            left_segment: i - 1,
            left_t: bps[i],
            right_segment: i,
            right_t: bps[i],
            first_order: 0,
        })
        .collect();
    let divisor = match mode {
        BoundaryMode::Open => m - 1,
        BoundaryMode::Cyclic | BoundaryMode::Periodic => {
            out.push(Joint {
                left_segment: m - 1,
                left_t: bps[m],
                right_segment: 0,
                right_t: bps[0],
                first_order: usize::from(mode == BoundaryMode::Cyclic),
            });
            m
        }
    };
    (out, divisor)
}

/// `δ_j = p_right^{(j)} - p_left^{(j)}` at a joint for `j = 0..=k`; orders
/// the joint does not match are reported as 0.
pub fn joint_defects(model: &SplineModel, joint: &Joint, k: usize) -> Vec<f64> {
    (0..=k)
        .map(|j| {
            if j < joint.first_order {
                0.0
            } else {
                model.eval_segment(joint.right_segment, joint.right_t, j)
                    - model.eval_segment(joint.left_segment, joint.left_t, j)
            }
        })
        .collect()
}

/// Internal-coordinate samples mapped to their owning segments.
fn owners(model: &SplineModel, samples: &SampleSet) -> Result<Vec<usize>> {
    samples
        .xs()
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            model.segment_index(x).map_err(|_| {
                let (lo, hi) = model.domain();
                Error::SampleOutOfDomain { index, x, lo, hi }
            })
        })
        .collect()
}

/// `(m/n) Σ |f(x_i) - y_i|²`.
pub fn l2_loss(model: &SplineModel, samples: &SampleSet) -> Result<f64> {
    let owner = owners(model, samples)?;
    let sum: f64 = samples
        .iter()
        .zip(&owner)
        .map(|((x, y), &i)| {
            let r = model.eval_segment(i, x, 0) - y;
            r * r
        })
        .sum();
    Ok(model.segments() as f64 / samples.len() as f64 * sum)
}

pub fn l2_gradient(model: &SplineModel, samples: &SampleSet) -> Result<CoefMatrix> {
    let owner = owners(model, samples)?;
    let (m, cols) = model.coefficients().shape();
    let factor = 2.0 * m as f64 / samples.len() as f64;
    let mut grad = CoefMatrix::zeros(m, cols);
    for ((x, y), &i) in samples.iter().zip(&owner) {
        let residual = model.eval_segment(i, x, 0) - y;
        let u = x - model.centers()[i];
        let row = grad.row_mut(i);
        let mut power = factor * residual;
        for g in row.iter_mut() {
            *g += power;
            power *= u;
        }
    }
    Ok(grad)
}

/// Mean squared continuity defect over all joints of the boundary mode.
pub fn ck_loss(model: &SplineModel, config: &LossConfig) -> Result<f64> {
    config.validate_for(model)?;
    let (joints, divisor) = joints(model, config.boundary_mode);
    if divisor == 0 {
        return Ok(0.0);
    }
    let sum: f64 = joints
        .iter()
        .flat_map(|jt| joint_defects(model, jt, config.k))
        .map(|d| d * d)
        .sum();
    Ok(sum / divisor as f64)
}

pub fn ck_gradient(model: &SplineModel, config: &LossConfig) -> Result<CoefMatrix> {
    config.validate_for(model)?;
    let (m, cols) = model.coefficients().shape();
    let mut grad = CoefMatrix::zeros(m, cols);
    let (joints, divisor) = joints(model, config.boundary_mode);
    if divisor == 0 {
        return Ok(grad);
    }
    let centers = model.centers();
    for jt in &joints {
        let u_left = jt.left_t - centers[jt.left_segment];
        let u_right = jt.right_t - centers[jt.right_segment];
        for (j, delta) in joint_defects(model, jt, config.k).into_iter().enumerate() {
            if j < jt.first_order {
                continue;
            }
            let w = 2.0 * delta / divisor as f64;
            for t in j..cols {
                let r = grad.get(jt.right_segment, t) + w * basis_derivative(t, j, u_right);
                grad.set(jt.right_segment, t, r);
                let l = grad.get(jt.left_segment, t) - w * basis_derivative(t, j, u_left);
                grad.set(jt.left_segment, t, l);
            }
        }
    }
    Ok(grad)
}

/// `∫ u^p du` over `[lo, hi]`.
fn monomial_integral(p: usize, lo: f64, hi: f64) -> f64 {
    let e = (p + 1) as i32;
    (hi.powi(e) - lo.powi(e)) / e as f64
}

/// `∫ f''(t)² dt` over the whole domain, integrated exactly per segment.
pub fn strain_loss(model: &SplineModel) -> f64 {
    let d = model.degree();
    if d < 2 {
        return 0.0;
    }
    let bps = model.breakpoints();
    (0..model.segments())
        .map(|i| {
            let mu = model.centers()[i];
            let (lo, hi) = (bps[i] - mu, bps[i + 1] - mu);
            let second: Vec<f64> = (2..=d)
                .map(|t| model.coefficients().get(i, t) * (t * (t - 1)) as f64)
                .collect();
            let mut square = vec![0.0; 2 * second.len() - 1];
            for (a, qa) in second.iter().enumerate() {
                for (b, qb) in second.iter().enumerate() {
                    square[a + b] += qa * qb;
                }
            }
            square
                .iter()
                .enumerate()
                .map(|(p, c)| c * monomial_integral(p, lo, hi))
                .sum::<f64>()
        })
        .sum()
}

pub fn strain_gradient(model: &SplineModel) -> CoefMatrix {
    let d = model.degree();
    let (m, cols) = model.coefficients().shape();
    let mut grad = CoefMatrix::zeros(m, cols);
    if d < 2 {
        return grad;
    }
    let bps = model.breakpoints();
    for i in 0..m {
        let mu = model.centers()[i];
        let (lo, hi) = (bps[i] - mu, bps[i + 1] - mu);
        let row = model.coefficients().row(i);
        for a in 2..=d {
            let fa = (a * (a - 1)) as f64;
            let g: f64 = (2..=d)
                .map(|b| {
                    let fb = (b * (b - 1)) as f64;
                    fa * fb * row[b] * monomial_integral(a + b - 4, lo, hi)
                })
                .sum();
            grad.set(i, a, 2.0 * g);
        }
    }
    grad
}

pub fn total_loss(model: &SplineModel, samples: &SampleSet, config: &LossConfig) -> Result<LossBreakdown> {
    config.validate_for(model)?;
    let l2 = l2_loss(model, samples)?;
    let ck = ck_loss(model, config)?;
    let strain = if config.strain_weight > 0.0 {
        strain_loss(model)
    } else {
        0.0
    };
    Ok(LossBreakdown {
        total: config.lambda * l2 + (1.0 - config.lambda) * ck + config.strain_weight * strain,
        l2,
        ck,
        strain,
    })
}

/// Exact gradient of [`total_loss`]'s `total`.
pub fn gradient(model: &SplineModel, samples: &SampleSet, config: &LossConfig) -> Result<CoefMatrix> {
    config.validate_for(model)?;
    let mut grad = l2_gradient(model, samples)?;
    grad.scale(config.lambda);
    grad.add_scaled(1.0 - config.lambda, &ck_gradient(model, config)?);
    if config.strain_weight > 0.0 {
        grad.add_scaled(config.strain_weight, &strain_gradient(model));
    }
    Ok(grad)
}

/// Central finite-difference gradient of `total`, one coefficient at a time.
pub fn fd_gradient(model: &SplineModel, samples: &SampleSet, config: &LossConfig, h: f64) -> Result<CoefMatrix> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {h}")));
    }
    let (m, cols) = model.coefficients().shape();
    let mut grad = CoefMatrix::zeros(m, cols);
    let mut probe = model.clone();
    for i in 0..m {
        for j in 0..cols {
            let base = model.coefficients().get(i, j);
            probe.coefficients_mut().set(i, j, base + h);
            let up = total_loss(&probe, samples, config)?.total;
            probe.coefficients_mut().set(i, j, base - h);
            let down = total_loss(&probe, samples, config)?.total;
            probe.coefficients_mut().set(i, j, base);
            grad.set(i, j, (up - down) / (2.0 * h));
        }
    }
    Ok(grad)
}
