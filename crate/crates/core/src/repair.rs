//! Exact removal of continuity defects with local corrective polynomials.
//!
//! At every joint both adjacent segments are pulled onto the mean of their
//! derivatives `0..=k`. The corrector added to a segment is the two-point
//! Hermite polynomial of degree `2k+1` that carries the required change at
//! the joint and vanishes with all derivatives up to order `k` at the
//! segment's opposite end, so no other joint is disturbed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{joint_defects, joints, BoundaryMode, Joint};
use crate::spline::{falling_factorial, rebase, SplineModel};

const MAX_CONDITION: f64 = 1e12;

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// Returns `None` for an exactly singular matrix.
fn solve_pivoted(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col] == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn norm1(a: &[Vec<f64>]) -> f64 {
    (0..a.len())
        .map(|c| a.iter().map(|row| row[c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Confluent Vandermonde matrix for derivatives `0..=k` at `s = 0` and `s = 1`.
fn confluent_vandermonde(k: usize) -> Vec<Vec<f64>> {
    let n = 2 * k + 2;
    let mut a = vec![vec![0.0; n]; n];
    for j in 0..=k {
        a[j][j] = falling_factorial(j, j);
        for t in j..n {
            a[k + 1 + j][t] = falling_factorial(t, j);
        }
    }
    a
}

/// 1-norm condition number of the Hermite system for order `k`.
pub fn hermite_condition(k: usize) -> f64 {
    let a = confluent_vandermonde(k);
    let n = a.len();
    let inv_cols: Option<Vec<Vec<f64>>> = (0..n)
        .map(|c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            solve_pivoted(a.clone(), e)
        })
        .collect();
    match inv_cols {
        // columns of the inverse; norm1 wants rows, so transpose
        Some(cols) => {
            let inv: Vec<Vec<f64>> = (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
            norm1(&a) * norm1(&inv)
        }
        None => f64::INFINITY,
    }
}

/// The unique polynomial of degree `2k+1` whose derivatives `0..=k` equal
/// `left_derivs` at `left_x` and `right_derivs` at `right_x`, returned in the
/// shifted basis around `center`.
pub fn two_point_hermite(
    left_x: f64,
    left_derivs: &[f64],
    right_x: f64,
    right_derivs: &[f64],
    center: f64,
) -> Result<Vec<f64>> {
    if !(left_x < right_x) {
        return Err(Error::Config(format!(
            "Hermite interval [{left_x}, {right_x}] is empty"
        )));
    }
    if left_derivs.is_empty() || left_derivs.len() != right_derivs.len() {
        return Err(Error::Config(format!(
            "Hermite data needs equal, non-empty derivative lists (got {} and {})",
            left_derivs.len(),
            right_derivs.len()
        )));
    }
    let k = left_derivs.len() - 1;
    let n = 2 * k + 2;
    if left_derivs.iter().chain(right_derivs).all(|v| *v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let condition = hermite_condition(k);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }

    // solve on s = (x - left_x) / h ∈ [0, 1]; d^j/ds^j = h^j d^j/dx^j
    let h = right_x - left_x;
    let mut rhs = Vec::with_capacity(n);
    rhs.extend(left_derivs.iter().enumerate().map(|(j, v)| v * h.powi(j as i32)));
    rhs.extend(right_derivs.iter().enumerate().map(|(j, v)| v * h.powi(j as i32)));
    let unit = solve_pivoted(confluent_vandermonde(k), rhs).ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let at_left: Vec<f64> = unit
        .iter()
        .enumerate()
        .map(|(t, c)| c / h.powi(t as i32))
        .collect();
    Ok(rebase(&at_left, left_x, center))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRepair {
    pub left_segment: usize,
    pub right_segment: usize,
    pub wrap: bool,
    /// Mean derivatives `m_j` both sides were moved to.
    pub targets: Vec<f64>,
    /// `|δ_j|` before repair, `j = 0..=k`.
    pub pre_defects: Vec<f64>,
    pub post_defects: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub k: usize,
    pub boundary_mode: BoundaryMode,
    pub joints: Vec<JointRepair>,
    /// Largest coefficient magnitude over all correctors.
    pub max_correction: f64,
}

impl RepairReport {
    pub fn max_post_defect(&self) -> f64 {
        self.joints
            .iter()
            .flat_map(|j| j.post_defects.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn max_pre_defect(&self) -> f64 {
        self.joints
            .iter()
            .flat_map(|j| j.pre_defects.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Whether every post-repair defect satisfies
    /// `|δ_j| <= tol * max(1, |m_j|)`.
    pub fn within(&self, tol: f64) -> bool {
        self.joints.iter().all(|jr| {
            jr.post_defects
                .iter()
                .zip(&jr.targets)
                .all(|(d, m)| *d <= tol * m.abs().max(1.0))
        })
    }
}

struct Corrector {
    segment: usize,
    coeffs: Vec<f64>,
}

/// Correctors for one joint, left segment first.
fn joint_correctors(model: &SplineModel, joint: &Joint, k: usize) -> Result<(Vec<f64>, [Corrector; 2])> {
    let bps = model.breakpoints();
    let centers = model.centers();
    let (ls, rs) = (joint.left_segment, joint.right_segment);
    let mut targets = vec![0.0; k + 1];
    let mut left_change = vec![0.0; k + 1];
    let mut right_change = vec![0.0; k + 1];
    for j in joint.first_order..=k {
        let from_left = model.eval_segment(ls, joint.left_t, j);
        let from_right = model.eval_segment(rs, joint.right_t, j);
        let mean = 0.5 * (from_left + from_right);
        targets[j] = mean;
        left_change[j] = mean - from_left;
        right_change[j] = mean - from_right;
    }
    let zeros = vec![0.0; k + 1];
    let left = two_point_hermite(bps[ls], &zeros, bps[ls + 1], &left_change, centers[ls])?;
    let right = two_point_hermite(bps[rs], &right_change, bps[rs + 1], &zeros, centers[rs])?;
    Ok((
        targets,
        [
            Corrector { segment: ls, coeffs: left },
            Corrector { segment: rs, coeffs: right },
        ],
    ))
}

fn check_degree(model: &SplineModel, k: usize) -> Result<()> {
    if model.degree() < 2 * k + 1 {
        return Err(Error::DegreeTooLow {
            degree: model.degree(),
            k,
        });
    }
    Ok(())
}

fn apply(model: &mut SplineModel, correctors: &[Corrector]) -> f64 {
    let mut max_correction: f64 = 0.0;
    let coeffs = model.coefficients_mut();
    for c in correctors {
        let row = coeffs.row_mut(c.segment);
        for (a, delta) in row.iter_mut().zip(&c.coeffs) {
            *a += delta;
            max_correction = max_correction.max(delta.abs());
        }
    }
    max_correction
}

/// Makes the spline `C^k` at every joint of `mode` (interior breakpoints,
/// plus the wrap-around joint for cyclic/periodic). Requires `degree >= 2k+1`.
pub fn repair_continuity(model: &SplineModel, k: usize, mode: BoundaryMode) -> Result<(SplineModel, RepairReport)> {
    check_degree(model, k)?;
    let (joints, _) = joints(model, mode);
    let mut pending = Vec::with_capacity(2 * joints.len());
    let mut records = Vec::with_capacity(joints.len());
    for jt in &joints {
        let (targets, pair) = joint_correctors(model, jt, k)?;
        pending.extend(pair);
        records.push((jt, targets));
    }
    let mut repaired = model.clone();
    let max_correction = apply(&mut repaired, &pending);

    let joints = records
        .into_iter()
        .map(|(jt, targets)| JointRepair {
            left_segment: jt.left_segment,
            right_segment: jt.right_segment,
            wrap: jt.is_wrap(),
            targets,
            pre_defects: joint_defects(model, jt, k).iter().map(|d| d.abs()).collect(),
            post_defects: joint_defects(&repaired, jt, k).iter().map(|d| d.abs()).collect(),
        })
        .collect();
    Ok((
        repaired,
        RepairReport {
            k,
            boundary_mode: mode,
            joints,
            max_correction,
        },
    ))
}

/// Repairs a single joint (index into the joint list of `mode`, wrap joint
/// last) and leaves every other joint's derivatives `0..=k` untouched.
pub fn repair_joint(model: &SplineModel, joint: usize, k: usize, mode: BoundaryMode) -> Result<SplineModel> {
    check_degree(model, k)?;
    let (joints, _) = joints(model, mode);
    let jt = joints
        .get(joint)
        .ok_or_else(|| Error::Config(format!("joint {joint} out of range ({} joints)", joints.len())))?;
    let (_, pair) = joint_correctors(model, jt, k)?;
    let mut repaired = model.clone();
    apply(&mut repaired, &pair);
    Ok(repaired)
}
