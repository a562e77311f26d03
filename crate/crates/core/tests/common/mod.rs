#![allow(dead_code)]

use dcglasso::{GroupStructure, GroupedDesign, Standardize};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian design with contiguous groups of `size` and a response driven
/// by the first group plus noise; raw scale.
pub fn raw_design(n: usize, p: usize, size: usize, seed: u64) -> GroupedDesign {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| {
        let signal: f64 = (0..size.min(p)).map(|j| x[(i, j)]).sum();
        signal + 0.5 * r.sample::<f64, _>(StandardNormal) + 3.0
    });
    GroupedDesign::new(x, y, GroupStructure::contiguous(p, size).unwrap()).unwrap()
}

pub fn design(n: usize, p: usize, size: usize, seed: u64) -> GroupedDesign {
    raw_design(n, p, size, seed).standardize(Standardize::Full, true)
}

/// Cached `X^T X`, `X^T y` and `y^T y` of a design, for oracles that only
/// need the quadratic form.
pub struct Quadratic {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub groups: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl Quadratic {
    pub fn new(d: &GroupedDesign) -> Self {
        let x = d.x();
        let y = d.y();
        Quadratic {
            xtx: x.transpose() * x,
            xty: x.transpose() * y,
            yty: y.dot(y),
            groups: d.structure().groups().to_vec(),
            weights: d.structure().weights().to_vec(),
        }
    }

    pub fn objective(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        let rss = self.yty - 2.0 * beta.dot(&self.xty) + beta.dot(&(&self.xtx * beta));
        rss + lambda * self.penalty(beta)
    }

    pub fn penalty(&self, beta: &DVector<f64>) -> f64 {
        self.groups
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| w * g.iter().map(|&j| beta[j] * beta[j]).sum::<f64>().sqrt())
            .sum()
    }

    /// Gradient of the squared loss, `2 (X^T X beta - X^T y)`.
    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        (&self.xtx * beta - &self.xty) * 2.0
    }

    /// Proximal gradient with step `1 / L`, `L = 2 * lambda_max(X^T X)`.
    pub fn prox_gradient(&self, lambda: f64, iters: usize) -> DVector<f64> {
        let eig = self.xtx.clone().symmetric_eigenvalues();
        let lip = 2.0 * eig.iter().cloned().fold(0.0, f64::max);
        let step = 1.0 / lip;
        let mut beta = DVector::zeros(self.xty.len());
        for _ in 0..iters {
            let z = &beta - self.gradient(&beta) * step;
            for (g, w) in self.groups.iter().zip(&self.weights) {
                let norm = g.iter().map(|&j| z[j] * z[j]).sum::<f64>().sqrt();
                let shrink = if norm > step * lambda * w {
                    1.0 - step * lambda * w / norm
                } else {
                    0.0
                };
                for &j in g {
                    beta[j] = z[j] * shrink;
                }
            }
        }
        beta
    }

    /// Subgradient descent along the minimum-norm subgradient with steps
    /// `c / sqrt(k + 1)`; returns the best objective seen.
    pub fn subgradient_best(&self, lambda: f64, iters: usize) -> f64 {
        let eig = self.xtx.clone().symmetric_eigenvalues();
        let c = 1.0 / (2.0 * eig.iter().cloned().fold(0.0, f64::max));
        let mut beta = DVector::zeros(self.xty.len());
        let mut best = self.objective(&beta, lambda);
        let mut dir = DVector::zeros(beta.len());
        for k in 0..iters {
            let grad = self.gradient(&beta);
            for (g, w) in self.groups.iter().zip(&self.weights) {
                let bn = g.iter().map(|&j| beta[j] * beta[j]).sum::<f64>().sqrt();
                let thr = lambda * w;
                if bn > 0.0 {
                    for &j in g {
                        dir[j] = grad[j] + thr * beta[j] / bn;
                    }
                } else {
                    let gn = g.iter().map(|&j| grad[j] * grad[j]).sum::<f64>().sqrt();
                    let keep = if gn > thr { 1.0 - thr / gn } else { 0.0 };
                    for &j in g {
                        dir[j] = grad[j] * keep;
                    }
                }
            }
            beta -= &dir * (c / ((k + 1) as f64).sqrt());
            best = best.min(self.objective(&beta, lambda));
        }
        best
    }
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}
