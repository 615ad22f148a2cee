//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Midpoint product rule on the sphere of radius `r`, uniform in
/// `(cos polar, azimuth)`. Returns `sum w f(x)` with weights summing to the
/// sphere area.
pub fn sphere_quadrature(r: f64, n_polar: usize, n_azimuth: usize, mut f: impl FnMut([f64; 3]) -> f64) -> f64 {
    let du = 2.0 / n_polar as f64;
    let dphi = TAU / n_azimuth as f64;
    let w = r * r * du * dphi;
    let mut total = 0.0;
    for a in 0..n_polar {
        let z = -1.0 + (a as f64 + 0.5) * du;
        let s = (1.0 - z * z).sqrt();
        for b in 0..n_azimuth {
            let phi = (b as f64 + 0.5) * dphi;
            total += w * f([r * s * phi.cos(), r * s * phi.sin(), r * z]);
        }
    }
    total
}

/// Kinetic energy `1/2 sum x_a^2 / I_a` for a diagonal inertia.
pub fn kinetic(inertia: [f64; 3], x: [f64; 3]) -> f64 {
    0.5 * (0..3).map(|a| x[a] * x[a] / inertia[a]).sum::<f64>()
}

/// Gibbs averages of a single free body on the sphere of radius `r`:
/// `(Z, <E>, Var E)`.
pub fn gibbs_moments(inertia: [f64; 3], r: f64, beta: f64, n: usize) -> (f64, f64, f64) {
    let z = sphere_quadrature(r, n, 2 * n, |x| (-beta * kinetic(inertia, x)).exp());
    let e1 = sphere_quadrature(r, n, 2 * n, |x| {
        let e = kinetic(inertia, x);
        e * (-beta * e).exp()
    }) / z;
    let e2 = sphere_quadrature(r, n, 2 * n, |x| {
        let e = kinetic(inertia, x);
        e * e * (-beta * e).exp()
    }) / z;
    (z, e1, e2 - e1 * e1)
}

/// Probability of each energy bin `[edges[k], edges[k + 1])` under the Gibbs
/// density of a single free body.
pub fn gibbs_energy_bins(inertia: [f64; 3], r: f64, beta: f64, edges: &[f64], n: usize) -> Vec<f64> {
    let mut mass = vec![0.0; edges.len() - 1];
    let mut total = 0.0;
    sphere_quadrature(r, n, 2 * n, |x| {
        let e = kinetic(inertia, x);
        let w = (-beta * e).exp();
        total += w;
        if let Some(k) = bin_of(edges, e) {
            mass[k] += w;
        }
        0.0
    });
    mass.iter().map(|m| m / total).collect()
}

pub fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    if x < edges[0] || x > *edges.last().unwrap() {
        return None;
    }
    let k = edges.partition_point(|&e| e <= x);
    Some(k.saturating_sub(1).min(edges.len() - 2))
}

/// Kolmogorov-Smirnov distance between a sample and the uniform law on `[a, b]`.
pub fn ks_uniform(samples: &[f64], a: f64, b: f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = ((v - a) / (b - a)).clamp(0.0, 1.0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Pearson chi-square statistic and its upper-tail p-value, with
/// `bins - 1` degrees of freedom.
pub fn chi_square(counts: &[usize], probs: &[f64]) -> (f64, f64) {
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    (stat, dist.sf(stat))
}

/// Prints one verdict line and hands back the outcome.
pub fn report(name: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
