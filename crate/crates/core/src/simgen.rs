//! Seeded synthetic benchmarks.
//!
//! Grouped scenarios expand each latent factor `Z_i` into the three columns
//! `(Z_i, h2 Z_i^2, h3 Z_i^3)` where `h2, h3` normalize the realized columns
//! to unit Euclidean norm. Every `s`-th group (1-based) is active with
//! coefficients `(2/3, -1, 1/3) * t_i`, `t_i = (-1)^u (3 + v)`.
//!
//! The overlap benchmark uses a chain of 10-feature groups with stride 5.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Flag, Result};
use crate::model::{validate_structure, GroupStructure, GroupedDesign};

/// How the noise scale `k` relates to the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrMode {
    /// `sd(signal) / (k sd(eps)) = snr`
    #[default]
    SdRatio,
    /// `var(signal) / (k^2 var(eps)) = snr`
    VarianceRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub q: usize,
    /// Sparsity stride: groups whose 1-based index is a multiple of `s` are active.
    pub s: usize,
    pub rho: f64,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_snr")]
    pub snr: f64,
    #[serde(default)]
    pub snr_mode: SnrMode,
}

fn default_snr() -> f64 {
    3.0
}

impl ScenarioSpec {
    /// Scenarios 1-6: `(q, s, rho)` = (100,10,.5), (100,20,.5), (1000,10,.5),
    /// (1000,20,.5), (1000,10,0), (1000,20,0).
    pub fn preset(id: u8, n: usize, seed: u64) -> Result<Self> {
        let (q, s, rho) = match id {
            1 => (100, 10, 0.5),
            2 => (100, 20, 0.5),
            3 => (1000, 10, 0.5),
            4 => (1000, 20, 0.5),
            5 => (1000, 10, 0.0),
            6 => (1000, 20, 0.0),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown scenario {id}; expected 1-6"
                )))
            }
        };
        Ok(ScenarioSpec {
            q,
            s,
            rho,
            n,
            seed,
            snr: 3.0,
            snr_mode: SnrMode::SdRatio,
        })
    }

    pub fn p(&self) -> usize {
        3 * self.q
    }

    /// 0-based indices of the active groups.
    pub fn active_groups(&self) -> Vec<usize> {
        (0..self.q).filter(|g| (g + 1) % self.s == 0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.s == 0 || self.s > self.q {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= s <= q, got s = {}, q = {}",
                self.s, self.q
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("n must be at least 2".into()));
        }
        if !(self.snr > 0.0) {
            return Err(Error::InvalidConfig("snr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta_true: Vec<f64>,
    pub active_groups: Vec<usize>,
    /// Noise multiplier `k`.
    pub noise_scale: f64,
    /// Per-group signed magnitudes `t_i` (empty for the overlap benchmark).
    pub t: Vec<f64>,
    /// Unscaled noise draw; `y = X beta_true + noise_scale * noise`.
    #[serde(skip)]
    pub noise: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
}

impl GroundTruth {
    pub fn true_features(&self) -> Vec<usize> {
        self.beta_true
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn equicorrelated(n: usize, q: usize, rho: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let shared = rho.sqrt();
    let own = (1.0 - rho).sqrt();
    let mut z = DMatrix::zeros(n, q);
    for i in 0..n {
        let g = normal(rng);
        for j in 0..q {
            z[(i, j)] = shared * g + own * normal(rng);
        }
    }
    z
}

/// Rows i.i.d. from `N(0, S)` with unit variances and every correlation `rho`,
/// built as `sqrt(rho) g 1^T + sqrt(1 - rho) G`.
pub fn gen_equicorrelated(n: usize, q: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("rho must lie in [0, 1), got {rho}")));
    }
    Ok(equicorrelated(n, q, rho, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn gen_scenario(spec: &ScenarioSpec) -> Result<(GroupedDesign, GroundTruth)> {
    spec.validate()?;
    let (n, q) = (spec.n, spec.q);
    let p = spec.p();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z = equicorrelated(n, q, spec.rho, &mut rng);

    let mut x = DMatrix::zeros(n, p);
    for g in 0..q {
        let zc = z.column(g);
        let sq: Vec<f64> = zc.iter().map(|v| v * v).collect();
        let cu: Vec<f64> = zc.iter().map(|v| v * v * v).collect();
        let h2 = 1.0 / sq.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h3 = 1.0 / cu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !h2.is_finite() {
            return Err(Error::DegenerateColumn(3 * g + 1));
        }
        if !h3.is_finite() {
            return Err(Error::DegenerateColumn(3 * g + 2));
        }
        for i in 0..n {
            x[(i, 3 * g)] = zc[i];
            x[(i, 3 * g + 1)] = h2 * sq[i];
            x[(i, 3 * g + 2)] = h3 * cu[i];
        }
    }

    let t: Vec<f64> = (0..q)
        .map(|_| {
            let u: bool = rng.random();
            let v = normal(&mut rng);
            if u {
                -(3.0 + v)
            } else {
                3.0 + v
            }
        })
        .collect();
    let active_groups = spec.active_groups();
    let mut beta_true = vec![0.0; p];
    for &g in &active_groups {
        beta_true[3 * g] = 2.0 / 3.0 * t[g];
        beta_true[3 * g + 1] = -t[g];
        beta_true[3 * g + 2] = 1.0 / 3.0 * t[g];
    }
    let signal = &x * DVector::from_column_slice(&beta_true);
    let sd = sample_sd(signal.as_slice());
    let noise_scale = match spec.snr_mode {
        SnrMode::SdRatio => sd / spec.snr,
        SnrMode::VarianceRatio => sd / spec.snr.sqrt(),
    };
    let noise: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let y = DVector::from_iterator(
        n,
        signal.iter().zip(&noise).map(|(s, e)| s + noise_scale * e),
    );
    let structure = GroupStructure::contiguous(p, 3)?;
    let design = GroupedDesign::new(x, y, structure)?;
    Ok((
        design,
        GroundTruth {
            beta_true,
            active_groups,
            noise_scale,
            t,
            noise,
            flags: Vec::new(),
        },
    ))
}

pub const OVERLAP_GROUP_SIZE: usize = 10;
pub const OVERLAP_STRIDE: usize = 5;
pub const OVERLAP_ACTIVE_PROB: f64 = 0.1;
pub const OVERLAP_NOISE: f64 = 0.01;

/// Chain of 10-feature groups, each overlapping half of the previous one.
pub fn overlap_chain(p: usize) -> Result<GroupStructure> {
    if p < OVERLAP_GROUP_SIZE || !p.is_multiple_of(OVERLAP_STRIDE) {
        return Err(Error::InvalidConfig(format!(
            "overlap benchmark needs p >= 10 and p divisible by 5, got {p}"
        )));
    }
    let count = (p - OVERLAP_GROUP_SIZE) / OVERLAP_STRIDE + 1;
    validate_structure(
        (0..count)
            .map(|j| (j * OVERLAP_STRIDE..j * OVERLAP_STRIDE + OVERLAP_GROUP_SIZE).collect())
            .collect(),
        p,
        true,
    )
}

/// Overlapping-group benchmark: each group active with probability 0.1,
/// i.i.d. standard normal design and active coefficients, noise scale 0.01.
/// If no group comes up active the activations are redrawn and flagged.
pub fn gen_overlap_scenario(p: usize, n: usize, seed: u64) -> Result<(GroupedDesign, GroundTruth)> {
    let structure = overlap_chain(p)?;
    if n < 2 {
        return Err(Error::InvalidConfig("n must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = structure.num_groups();
    let mut attempts = 0;
    let active_groups = loop {
        attempts += 1;
        let active: Vec<usize> = (0..q)
            .filter(|_| rng.random::<f64>() < OVERLAP_ACTIVE_PROB)
            .collect();
        if !active.is_empty() {
            break active;
        }
    };
    let x = DMatrix::from_fn(n, p, |_, _| normal(&mut rng));
    let mut beta_true = vec![0.0; p];
    for f in structure.features_of(&active_groups) {
        beta_true[f] = normal(&mut rng);
    }
    let noise: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let signal = &x * DVector::from_column_slice(&beta_true);
    let y = DVector::from_iterator(
        n,
        signal.iter().zip(&noise).map(|(s, e)| s + OVERLAP_NOISE * e),
    );
    let flags = if attempts > 1 {
        vec![Flag::GroupsResampled { attempts }]
    } else {
        Vec::new()
    };
    Ok((
        GroupedDesign::new(x, y, structure)?,
        GroundTruth {
            beta_true,
            active_groups,
            noise_scale: OVERLAP_NOISE,
            t: Vec::new(),
            noise,
            flags,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn equicorrelation_moments() {
        let z = gen_equicorrelated(100_000, 3, 0.5, 1).unwrap();
        for j in 0..3 {
            let c: Vec<f64> = z.column(j).iter().copied().collect();
            let var = sample_sd(&c).powi(2);
            assert!((var - 1.0).abs() < 0.02, "variance {var}");
        }
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let ca: Vec<f64> = z.column(a).iter().copied().collect();
            let cb: Vec<f64> = z.column(b).iter().copied().collect();
            let r = corr(&ca, &cb);
            assert!((r - 0.5).abs() < 0.02, "corr {r}");
        }
        let z0 = gen_equicorrelated(100_000, 2, 0.0, 2).unwrap();
        let ca: Vec<f64> = z0.column(0).iter().copied().collect();
        let cb: Vec<f64> = z0.column(1).iter().copied().collect();
        assert!(corr(&ca, &cb).abs() < 0.02);
    }

    #[test]
    fn scenario_presets() {
        let s1 = ScenarioSpec::preset(1, 50, 0).unwrap();
        assert_eq!(s1.p(), 300);
        assert_eq!(s1.active_groups().len(), 10);
        assert_eq!(s1.active_groups()[0], 9);
        assert_eq!(ScenarioSpec::preset(2, 50, 0).unwrap().active_groups().len(), 5);
        assert_eq!(ScenarioSpec::preset(5, 50, 0).unwrap().active_groups().len(), 100);
        assert_eq!(ScenarioSpec::preset(6, 50, 0).unwrap().active_groups().len(), 50);
        assert!(ScenarioSpec::preset(7, 50, 0).is_err());
    }

    #[test]
    fn scenario_construction() {
        let spec = ScenarioSpec::preset(1, 400, 3).unwrap();
        let (d, truth) = gen_scenario(&spec).unwrap();
        assert_eq!(d.p(), 300);
        assert_eq!(d.n(), 400);
        // quadratic and cubic columns have unit norm
        for g in 0..100 {
            for off in 1..3 {
                let c = d.column(3 * g + off);
                assert_abs_diff_eq!(c.iter().map(|v| v * v).sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
        for g in 0..100 {
            let b = &truth.beta_true[3 * g..3 * g + 3];
            if truth.active_groups.contains(&g) {
                let t = truth.t[g];
                assert_eq!(b, &[2.0 / 3.0 * t, -t, 1.0 / 3.0 * t]);
            } else {
                assert_eq!(b, &[0.0, 0.0, 0.0]);
            }
        }
        // noise scale reproduces the sd ratio
        let signal = d.x() * DVector::from_column_slice(&truth.beta_true);
        let sd = sample_sd(signal.as_slice());
        assert_abs_diff_eq!(truth.noise_scale, sd / 3.0, epsilon = 1e-12);
        // y - k eps equals the signal
        for i in 0..400 {
            let clean = d.y()[i] - truth.noise_scale * truth.noise[i];
            assert_abs_diff_eq!(clean, signal[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn scenario_is_deterministic() {
        let spec = ScenarioSpec::preset(2, 100, 9).unwrap();
        let (a, ta) = gen_scenario(&spec).unwrap();
        let (b, tb) = gen_scenario(&spec).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
        assert_eq!(ta, tb);
    }

    #[test]
    fn variance_ratio_mode() {
        let mut spec = ScenarioSpec::preset(1, 200, 4).unwrap();
        spec.snr_mode = SnrMode::VarianceRatio;
        let (d, truth) = gen_scenario(&spec).unwrap();
        let signal = d.x() * DVector::from_column_slice(&truth.beta_true);
        let sd = sample_sd(signal.as_slice());
        assert_abs_diff_eq!(truth.noise_scale, sd / 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn overlap_chain_counts() {
        let s = overlap_chain(1000).unwrap();
        assert_eq!(s.num_groups(), 199);
        assert_eq!(s.group(1), &(5..15).collect::<Vec<_>>()[..]);
        assert!(s.is_overlapping());
        assert!(overlap_chain(1003).is_err());
        assert!(overlap_chain(5).is_err());
    }

    #[test]
    fn overlap_truth_is_union_of_groups() {
        let (d, truth) = gen_overlap_scenario(200, 50, 5).unwrap();
        let s = d.structure();
        let union = s.features_of(&truth.active_groups);
        assert_eq!(truth.true_features(), union);
        let signal = d.x() * DVector::from_column_slice(&truth.beta_true);
        for i in 0..50 {
            assert_abs_diff_eq!(d.y()[i] - 0.01 * truth.noise[i], signal[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn overlap_activation_rate() {
        // Binomial(199, 0.1) mean 19.9; average over seeds
        let total: usize = (0..200)
            .map(|seed| gen_overlap_scenario(1000, 2, seed).unwrap().1.active_groups.len())
            .sum();
        let mean = total as f64 / 200.0;
        assert!((mean - 19.9).abs() < 1.0, "mean active groups {mean}");
    }
}
