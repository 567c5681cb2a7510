//! Piecewise polynomials in center-shifted monomial form.
//!
//! Segment `i` (0-based here) covers `[ξ_i, ξ_{i+1}]` and is stored as
//! `p_i(t) = Σ_j α_{i,j} (t - μ_i)^j` with `μ_i` the segment midpoint. All
//! breakpoints, centers and coefficients live in *internal* coordinates; the
//! [`DomainMap`] converts between original inputs and internal coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `t! / (t - j)!`, exact in integer arithmetic for `t <= 20`.
pub fn falling_factorial(t: usize, j: usize) -> f64 {
    if j > t {
        return 0.0;
    }
    if t <= 20 {
        ((t - j + 1)..=t).map(|v| v as u64).product::<u64>() as f64
    } else {
        ((t - j + 1)..=t).map(|v| v as f64).product()
    }
}

/// Evaluates the `j`-th derivative of `Σ c_t u^t` at `u` by Horner's scheme
/// on the derivative coefficient sequence.
pub fn eval_poly(coeffs: &[f64], u: f64, j: usize) -> f64 {
    if j >= coeffs.len() {
        return 0.0;
    }
    let mut acc = 0.0;
    for t in (j..coeffs.len()).rev() {
        acc = acc * u + coeffs[t] * falling_factorial(t, j);
    }
    acc
}

/// Value of the basis function `d^j/du^j u^t` at `u`.
pub fn basis_derivative(t: usize, j: usize, u: f64) -> f64 {
    if j > t {
        0.0
    } else {
        falling_factorial(t, j) * u.powi((t - j) as i32)
    }
}

/// Taylor shift: re-expresses `Σ α_t (x - from)^t` as `Σ β_t (x - to)^t`.
pub fn rebase(coeffs: &[f64], from: f64, to: f64) -> Vec<f64> {
    let mut out = coeffs.to_vec();
    let shift = to - from;
    if shift == 0.0 {
        return out;
    }
    // x - from = (x - to) + shift; repeated synthetic division by (y - shift)
    let n = out.len();
    for i in 0..n {
        for t in (i..n.saturating_sub(1)).rev() {
            out[t] += shift * out[t + 1];
        }
    }
    out
}

/// Dense row-per-segment matrix, lowest power first.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CoefMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidModel(
                "coefficient rows have differing lengths".into(),
            ));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// First entry (row, col) that is NaN or infinite.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.cols, p % self.cols))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &CoefMatrix) {
        assert_eq!(self.shape(), other.shape(), "matrix shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }
}

/// Affine map `t = scale * x + offset` from original to internal coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainMap {
    pub scale: f64,
    pub offset: f64,
}

impl DomainMap {
    pub const IDENTITY: DomainMap = DomainMap {
        scale: 1.0,
        offset: 0.0,
    };

    pub fn new(scale: f64, offset: f64) -> Result<Self> {
        if scale == 0.0 || !scale.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidModel(format!(
                "domain map {scale}*x + {offset} is not invertible"
            )));
        }
        Ok(Self { scale, offset })
    }

    pub fn forward(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }

    pub fn inverse(&self, t: f64) -> f64 {
        (t - self.offset) / self.scale
    }
}

impl Default for DomainMap {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Sorted sample abscissae with their target values.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl SampleSet {
    /// Requires at least two finite samples sorted by `x`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidSamples(format!(
                "{} abscissae but {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidSamples(format!(
                "need at least 2 samples, got {}",
                xs.len()
            )));
        }
        if let Some(i) = xs
            .iter()
            .zip(&ys)
            .position(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::InvalidSamples(format!("sample {i} is not finite")));
        }
        if let Some(i) = xs.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidSamples(format!(
                "abscissae not sorted at sample {}",
                i + 1
            )));
        }
        Ok(Self { xs, ys })
    }

    /// Stable-sorts the pairs by `x` before validating.
    pub fn from_unsorted(pairs: Vec<(f64, f64)>) -> Result<Self> {
        let mut pairs = pairs;
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ys) = pairs.into_iter().unzip();
        Self::new(xs, ys)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }
}

/// A spline of `m` polynomial segments of common degree `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct SplineModel {
    breakpoints: Vec<f64>,
    degree: usize,
    coefficients: CoefMatrix,
    centers: Vec<f64>,
    domain_map: DomainMap,
}

fn midpoint(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

impl SplineModel {
    pub fn new(
        breakpoints: Vec<f64>,
        degree: usize,
        coefficients: CoefMatrix,
        domain_map: DomainMap,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidModel("need at least one segment".into()));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidModel(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        let m = breakpoints.len() - 1;
        if coefficients.shape() != (m, degree + 1) {
            return Err(Error::InvalidModel(format!(
                "coefficient matrix is {:?}, expected ({m}, {})",
                coefficients.shape(),
                degree + 1
            )));
        }
        if let Some((i, j)) = coefficients.first_non_finite() {
            return Err(Error::InvalidModel(format!(
                "coefficient ({i}, {j}) is not finite"
            )));
        }
        let domain_map = DomainMap::new(domain_map.scale, domain_map.offset)?;
        let centers = breakpoints.windows(2).map(|w| midpoint(w[0], w[1])).collect();
        Ok(Self {
            breakpoints,
            degree,
            coefficients,
            centers,
            domain_map,
        })
    }

    /// Zero spline with `m` equal segments over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, m: usize, degree: usize, domain_map: DomainMap) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidModel("segment count must be positive".into()));
        }
        let width = hi - lo;
        let mut breakpoints: Vec<f64> = (0..=m).map(|i| lo + width * i as f64 / m as f64).collect();
        breakpoints[m] = hi;
        Self::new(breakpoints, degree, CoefMatrix::zeros(m, degree + 1), domain_map)
    }

    pub fn segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn coefficients(&self) -> &CoefMatrix {
        &self.coefficients
    }

    pub fn domain_map(&self) -> DomainMap {
        self.domain_map
    }

    /// Internal-coordinate interval `[ξ_0, ξ_m]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], self.breakpoints[self.segments()])
    }

    /// Original-coordinate interval covered by the spline.
    pub fn original_domain(&self) -> (f64, f64) {
        let (lo, hi) = self.domain();
        let (a, b) = (self.domain_map.inverse(lo), self.domain_map.inverse(hi));
        (a.min(b), a.max(b))
    }

    /// Replaces the coefficient matrix wholesale. The shape must match.
    pub fn set_coefficients(&mut self, coefficients: CoefMatrix) -> Result<()> {
        if coefficients.shape() != self.coefficients.shape() {
            return Err(Error::InvalidModel(format!(
                "coefficient matrix is {:?}, expected {:?}",
                coefficients.shape(),
                self.coefficients.shape()
            )));
        }
        self.coefficients = coefficients;
        Ok(())
    }

    pub(crate) fn coefficients_mut(&mut self) -> &mut CoefMatrix {
        &mut self.coefficients
    }

    /// 0-based index of the segment owning internal coordinate `t`.
    ///
    /// Segments are half-open `[ξ_i, ξ_{i+1})` except the last, which is closed.
    pub fn segment_index(&self, t: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&t) {
            return Err(Error::Domain { x: t, lo, hi });
        }
        let interior = &self.breakpoints[1..self.segments()];
        Ok(interior.partition_point(|&b| b <= t))
    }

    /// `p_i^{(j)}(t)` for segment `i`, in internal coordinates. Works outside
    /// the segment's own interval.
    pub fn eval_segment(&self, i: usize, t: f64, j: usize) -> f64 {
        eval_poly(self.coefficients.row(i), t - self.centers[i], j)
    }

    /// `f^{(j)}(t)` at internal coordinate `t`.
    pub fn eval_internal(&self, t: f64, j: usize) -> Result<f64> {
        let i = self.segment_index(t)?;
        Ok(self.eval_segment(i, t, j))
    }

    /// `f^{(j)}(x)` at original coordinate `x`, differentiated with respect
    /// to `x`.
    pub fn eval(&self, x: f64, j: usize) -> Result<f64> {
        let t = self.snap(self.domain_map.forward(x));
        let i = self.segment_index(t).map_err(|_| {
            let (lo, hi) = self.original_domain();
            Error::Domain { x, lo, hi }
        })?;
        Ok(self.eval_segment(i, t, j) * self.domain_map.scale.powi(j as i32))
    }

    /// Pulls a mapped abscissa that overshot an end of the domain by a few
    /// rounding errors back onto it.
    pub(crate) fn snap(&self, t: f64) -> f64 {
        let (lo, hi) = self.domain();
        let tol = 4.0 * f64::EPSILON * (hi - lo).max(lo.abs()).max(hi.abs());
        if t < lo && lo - t <= tol {
            lo
        } else if t > hi && t - hi <= tol {
            hi
        } else {
            t
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    breakpoints: Vec<f64>,
    degree: usize,
    centers: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    domain_map: DomainMap,
}

impl From<SplineModel> for ModelRepr {
    fn from(m: SplineModel) -> Self {
        Self {
            coefficients: m.coefficients.to_rows(),
            breakpoints: m.breakpoints,
            degree: m.degree,
            centers: m.centers,
            domain_map: m.domain_map,
        }
    }
}

impl TryFrom<ModelRepr> for SplineModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        let coefficients = CoefMatrix::from_rows(&r.coefficients)?;
        let model = SplineModel::new(r.breakpoints, r.degree, coefficients, r.domain_map)?;
        if r.centers.len() != model.centers.len()
            || r.centers.iter().zip(&model.centers).any(|(a, b)| a != b)
        {
            return Err(Error::InvalidModel(
                "centers are not the segment midpoints".into(),
            ));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(bps: Vec<f64>, rows: &[Vec<f64>]) -> SplineModel {
        let d = rows[0].len() - 1;
        SplineModel::new(bps, d, CoefMatrix::from_rows(rows).unwrap(), DomainMap::IDENTITY).unwrap()
    }

    #[test]
    fn segment_index_half_open() {
        let m = model(vec![0.0, 1.0, 2.0], &[vec![0.0], vec![0.0]]);
        assert_eq!(m.segment_index(0.5).unwrap(), 0);
        assert_eq!(m.segment_index(1.0).unwrap(), 1);
        assert_eq!(m.segment_index(2.0).unwrap(), 1);
        assert_eq!(m.segment_index(0.0).unwrap(), 0);
        assert!(matches!(
            m.segment_index(2.5),
            Err(Error::Domain { lo, hi, .. }) if lo == 0.0 && hi == 2.0
        ));
        assert!(m.segment_index(-1e-9).is_err());
    }

    #[test]
    fn eval_segment_values() {
        // centers are forced to midpoints, so exercise the raw polynomial helper
        assert_eq!(eval_poly(&[1.0, 2.0, 3.0], 2.0, 0), 17.0);
        assert_eq!(eval_poly(&[1.0, 2.0, 3.0], 2.0, 1), 14.0);
        assert_eq!(eval_poly(&[1.0, 2.0, 3.0], 2.0, 3), 0.0);

        let m = model(vec![-3.0, 3.0], &[vec![1.0, 2.0, 3.0]]);
        assert_eq!(m.eval_segment(0, 2.0, 0), 17.0);
        assert_eq!(m.eval_segment(0, 2.0, 1), 14.0);

        let m = model(vec![0.0, 2.0], &[vec![0.7, -1.0, 3.0]]);
        assert_eq!(m.eval_segment(0, 1.0, 0), 0.7);
    }

    #[test]
    fn eval_with_domain_map() {
        let m = model(vec![0.0, 1.0], &[vec![0.5, 1.0]]);
        assert_eq!(m.eval(0.25, 0).unwrap(), 0.25);
        assert_eq!(m.eval(0.25, 2).unwrap(), 0.0);

        // internal t = 2x, p(t) = t on [0, 2]
        let scaled = SplineModel::new(
            vec![0.0, 2.0],
            1,
            CoefMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            DomainMap::new(2.0, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(scaled.eval(0.5, 1).unwrap(), 2.0);
        assert_eq!(scaled.eval(0.5, 0).unwrap(), 1.0);
        assert!(scaled.eval(1.5, 0).is_err());
    }

    #[test]
    fn rebase_examples() {
        assert_eq!(rebase(&[0.0, 1.0], 0.0, 1.0), vec![1.0, 1.0]);
        assert_eq!(rebase(&[0.0, 0.0, 1.0], 0.0, 1.0), vec![1.0, 2.0, 1.0]);
        assert_eq!(rebase(&[0.3, -2.0, 5.0], 0.7, 0.7), vec![0.3, -2.0, 5.0]);
    }

    #[test]
    fn falling_factorial_exact() {
        assert_eq!(falling_factorial(5, 2), 20.0);
        assert_eq!(falling_factorial(20, 20), 2432902008176640000.0);
        assert_eq!(falling_factorial(3, 4), 0.0);
        assert_eq!(falling_factorial(4, 0), 1.0);
    }

    #[test]
    fn model_validation() {
        let c = CoefMatrix::zeros(1, 2);
        assert!(SplineModel::new(vec![0.0, 0.0], 1, c.clone(), DomainMap::IDENTITY).is_err());
        assert!(SplineModel::new(vec![0.0, 1.0], 2, c.clone(), DomainMap::IDENTITY).is_err());
        assert!(SplineModel::new(vec![0.0, 1.0], 1, c, DomainMap { scale: 0.0, offset: 0.0 }).is_err());
        assert!(SampleSet::new(vec![0.0], vec![1.0]).is_err());
        assert!(SampleSet::new(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(SampleSet::new(vec![0.0, f64::NAN], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn json_round_trip_rejects_bad_centers() {
        let m = model(vec![0.0, 1.0, 3.0], &[vec![1.0, 2.0], vec![-1.0, 0.5]]);
        let text = serde_json::to_string(&m).unwrap();
        let back: SplineModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let tampered = text.replace("\"centers\":[0.5,2.0]", "\"centers\":[0.5,2.5]");
        assert_ne!(tampered, text);
        assert!(serde_json::from_str::<SplineModel>(&tampered).is_err());
    }

    fn naive(coeffs: &[f64], u: f64) -> f64 {
        coeffs.iter().enumerate().map(|(t, c)| c * u.powi(t as i32)).sum()
    }

    proptest! {
        #[test]
        fn horner_matches_power_sum(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 1..=10),
            u in -1.0f64..1.0,
        ) {
            let h = eval_poly(&coeffs, u, 0);
            let n = naive(&coeffs, u);
            let scale: f64 = coeffs.iter().enumerate().map(|(t, c)| (c * u.powi(t as i32)).abs()).sum();
            prop_assert!((h - n).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn derivative_matches_central_difference(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 1..=10),
            u in -0.5f64..0.5,
        ) {
            let h = 1e-5;
            let fd = (eval_poly(&coeffs, u + h, 0) - eval_poly(&coeffs, u - h, 0)) / (2.0 * h);
            let exact = eval_poly(&coeffs, u, 1);
            let scale = exact.abs().max(1.0);
            prop_assert!((fd - exact).abs() <= 1e-5 * scale);
        }

        #[test]
        fn rebase_round_trip(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 1..=10),
            a in -1.0f64..1.0,
            b in -1.0f64..1.0,
        ) {
            let back = rebase(&rebase(&coeffs, a, b), b, a);
            let scale = coeffs.iter().fold(1.0f64, |m, c| m.max(c.abs()));
            for (x, y) in back.iter().zip(&coeffs) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn rebase_preserves_values(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 1..=8),
            a in -1.0f64..1.0,
            b in -1.0f64..1.0,
            x in -1.0f64..1.0,
        ) {
            let shifted = rebase(&coeffs, a, b);
            prop_assert!((eval_poly(&coeffs, x - a, 0) - eval_poly(&shifted, x - b, 0)).abs() <= 1e-10);
        }
    }
}
