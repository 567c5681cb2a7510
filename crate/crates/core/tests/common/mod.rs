#![allow(dead_code)]

use std::f64::consts::PI;

use ckspline::{CoefMatrix, DomainMap, SampleSet, SplineModel};
use rand::Rng;

/// `sin(2πx/16) + 0.5 sin(4πx/16)` at 128 uniform points over [0, 16].
pub fn benchmark_samples() -> SampleSet {
    let xs: Vec<f64> = (0..128).map(|i| 16.0 * i as f64 / 127.0).collect();
    let ys = xs
        .iter()
        .map(|x| (2.0 * PI * x / 16.0).sin() + 0.5 * (4.0 * PI * x / 16.0).sin())
        .collect();
    SampleSet::new(xs, ys).unwrap()
}

pub fn benchmark_csv() -> String {
    let s = benchmark_samples();
    let mut out = String::from("x,y\n");
    for (x, y) in s.iter() {
        out.push_str(&format!("{x:.17e},{y:.17e}\n"));
    }
    out
}

pub fn random_model(rng: &mut impl Rng, m: usize, d: usize, unit: bool) -> SplineModel {
    let mut bps = vec![0.0];
    for _ in 0..m {
        let w = if unit { 1.0 } else { rng.gen_range(0.5..2.0) };
        bps.push(bps.last().unwrap() + w);
    }
    let mut c = CoefMatrix::zeros(m, d + 1);
    for v in c.as_mut_slice() {
        *v = rng.gen_range(-1.0..1.0);
    }
    SplineModel::new(bps, d, c, DomainMap::IDENTITY).unwrap()
}

pub fn random_samples(rng: &mut impl Rng, model: &SplineModel, n: usize) -> SampleSet {
    let (lo, hi) = model.domain();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(lo..=hi), rng.gen_range(-2.0..2.0)))
        .collect();
    pairs.push((lo, 0.5));
    pairs.push((hi, -0.5));
    // one sample exactly on an interior breakpoint when there is one
    if model.segments() > 1 {
        pairs.push((model.breakpoints()[1], 1.0));
    }
    SampleSet::from_unsorted(pairs).unwrap()
}

/// The spline reflected through x ↦ -x.
pub fn mirror(model: &SplineModel) -> SplineModel {
    let bps: Vec<f64> = model.breakpoints().iter().rev().map(|b| -b).collect();
    let m = model.segments();
    let rows: Vec<Vec<f64>> = (0..m)
        .rev()
        .map(|i| {
            model
                .coefficients()
                .row(i)
                .iter()
                .enumerate()
                .map(|(t, a)| if t % 2 == 0 { *a } else { -a })
                .collect()
        })
        .collect();
    SplineModel::new(
        bps,
        model.degree(),
        CoefMatrix::from_rows(&rows).unwrap(),
        DomainMap::IDENTITY,
    )
    .unwrap()
}

/// Derivatives `0..=k` of both neighbors at every breakpoint, plus the outer ends.
pub fn boundary_derivatives(model: &SplineModel, k: usize) -> Vec<f64> {
    let bps = model.breakpoints();
    let m = model.segments();
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..=k {
            out.push(model.eval_segment(i, bps[i], j));
            out.push(model.eval_segment(i, bps[i + 1], j));
        }
    }
    out
}
