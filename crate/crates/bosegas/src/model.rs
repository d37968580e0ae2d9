//! Momentum lattice, interaction potential and run configuration.
//!
//! Everything downstream is parameterized by a [`ModeSet`] (the finite
//! momentum lattice on the unit torus) and a [`Potential`] given by its
//! Fourier coefficients on that lattice. Momenta are `p = 2π n` with
//! integer labels `n ∈ ℤ^d`, `|n|_∞ <= n_max`, so negation and mode
//! addition are exact integer operations.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite momentum lattice `{ 2π n : n ∈ ℤ^d, |n|_∞ <= n_max }`.
///
/// Modes are ordered lexicographically in the integer label `n`, so any
/// basis enumerated on top of the set is reproducible from the
/// configuration alone. The set is closed under negation and contains
/// the zero mode exactly once.
#[derive(Debug, Clone)]
pub struct ModeSet {
    dimension: usize,
    n_max: i64,
    labels: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
    zero: usize,
    negation: Vec<usize>,
}

impl ModeSet {
    /// Enumerate the product grid `|n|_∞ <= n_max` in dimension `d`.
    pub fn build(dimension: usize, n_max: i64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Model("dimension must be >= 1".into()));
        }
        if n_max < 0 {
            return Err(Error::Model("n_max must be >= 0".into()));
        }
        let width = (2 * n_max + 1) as usize;
        let count = width.pow(dimension as u32);
        let mut labels = Vec::with_capacity(count);
        let mut current = vec![-n_max; dimension];
        'outer: loop {
            labels.push(current.clone());
            // odometer increment, least significant coordinate last
            let mut k = dimension;
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                if current[k] < n_max {
                    current[k] += 1;
                    for c in current.iter_mut().skip(k + 1) {
                        *c = -n_max;
                    }
                    continue 'outer;
                }
            }
        }
        debug_assert_eq!(labels.len(), count);
        labels.sort();
        let index: HashMap<Vec<i64>, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let zero = index[&vec![0i64; dimension]];
        let negation = labels
            .iter()
            .map(|l| {
                let neg: Vec<i64> = l.iter().map(|x| -x).collect();
                index[&neg]
            })
            .collect();
        Ok(ModeSet {
            dimension,
            n_max,
            labels,
            index,
            zero,
            negation,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_max(&self) -> i64 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Integer label of mode `i`.
    pub fn label(&self, i: usize) -> &[i64] {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &[i64]) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Position of the zero mode.
    pub fn zero_index(&self) -> usize {
        self.zero
    }

    /// Index of `-p` for mode index `i`.
    pub fn negate(&self, i: usize) -> usize {
        self.negation[i]
    }

    /// Index of `p + q`, or `None` when the sum leaves the cutoff.
    pub fn add(&self, i: usize, j: usize) -> Option<usize> {
        let sum: Vec<i64> = self.labels[i]
            .iter()
            .zip(self.labels[j].iter())
            .map(|(a, b)| a + b)
            .collect();
        self.index.get(&sum).copied()
    }

    /// `|p|^2 = (2π)^2 |n|^2` for mode index `i`.
    pub fn p_squared(&self, i: usize) -> f64 {
        let n2: i64 = self.labels[i].iter().map(|x| x * x).sum();
        (2.0 * PI) * (2.0 * PI) * n2 as f64
    }

    /// Indices of all modes with `p != 0`.
    pub fn nonzero_modes(&self) -> impl Iterator<Item = usize> + '_ {
        let zero = self.zero;
        (0..self.len()).filter(move |&i| i != zero)
    }
}

/// Fourier coefficients `ŵ(p) >= 0` of an even interaction potential,
/// supported on a [`ModeSet`].
#[derive(Debug, Clone)]
pub struct Potential {
    mode_set: Arc<ModeSet>,
    w_hat: Vec<f64>,
    l1_norm: f64,
}

impl Potential {
    /// Build from `(label, value)` pairs. Evenness is completed
    /// automatically: giving `ŵ(n)` also sets `ŵ(-n)`, and giving both
    /// with different values is rejected.
    pub fn from_pairs(mode_set: Arc<ModeSet>, pairs: &[(Vec<i64>, f64)]) -> Result<Self> {
        let mut w_hat = vec![f64::NAN; mode_set.len()];
        for (label, value) in pairs {
            if !value.is_finite() || *value < 0.0 {
                return Err(Error::Model(format!(
                    "w_hat({label:?}) = {value} must be finite and nonnegative"
                )));
            }
            let i = mode_set
                .index_of(label)
                .ok_or_else(|| Error::ModeOutOfSet(label.clone()))?;
            for j in [i, mode_set.negate(i)] {
                let slot = &mut w_hat[j];
                if slot.is_nan() {
                    *slot = *value;
                } else if *slot != *value {
                    return Err(Error::Model(format!(
                        "w_hat is not even: conflicting values {slot} and {value} for ±{label:?}"
                    )));
                }
            }
        }
        for slot in w_hat.iter_mut() {
            if slot.is_nan() {
                *slot = 0.0;
            }
        }
        let l1_norm = w_hat.iter().sum();
        Ok(Potential {
            mode_set,
            w_hat,
            l1_norm,
        })
    }

    /// The free gas, `ŵ ≡ 0`.
    pub fn zero(mode_set: Arc<ModeSet>) -> Self {
        let n = mode_set.len();
        Potential {
            mode_set,
            w_hat: vec![0.0; n],
            l1_norm: 0.0,
        }
    }

    /// Constant coefficients `ŵ(p) = value` on the whole set.
    pub fn uniform(mode_set: Arc<ModeSet>, value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Model(format!(
                "uniform coefficient {value} must be finite and nonnegative"
            )));
        }
        let n = mode_set.len();
        Ok(Potential {
            mode_set,
            l1_norm: value * n as f64,
            w_hat: vec![value; n],
        })
    }

    pub fn mode_set(&self) -> &Arc<ModeSet> {
        &self.mode_set
    }

    /// `ŵ(p)` for mode index `i`.
    pub fn w_hat(&self, i: usize) -> f64 {
        self.w_hat[i]
    }

    /// Cached `Σ_p ŵ(p)`; equals `w(0)` by the Fourier sum.
    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    pub fn is_zero(&self) -> bool {
        self.l1_norm == 0.0
    }

    /// Evaluate `w(x) = Σ_p ŵ(p) cos(p·x)` at a torus point
    /// `x ∈ [0,1)^d` (so `p·x = 2π n·x`). The imaginary parts of the
    /// Fourier sum cancel by evenness, hence the cosine form.
    pub fn evaluate_w(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.mode_set.dimension(), "point dimension");
        let mut acc = 0.0;
        for i in 0..self.mode_set.len() {
            let w = self.w_hat[i];
            if w == 0.0 {
                continue;
            }
            let phase: f64 = self
                .mode_set
                .label(i)
                .iter()
                .zip(x.iter())
                .map(|(&n, &xi)| n as f64 * xi)
                .sum();
            acc += w * (2.0 * PI * phase).cos();
        }
        acc
    }
}

/// Full run configuration shared by every subcommand.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub mode_set: Arc<ModeSet>,
    pub potential: Potential,
    /// Particle numbers to run; single-`N` commands use the first entry.
    pub n_list: Vec<usize>,
    /// Maximal excited-particle number `M` when truncating the
    /// excitation space.
    pub excitation_cutoff: usize,
    pub eigensolver_tol: f64,
    pub expm_tol: f64,
    pub rng_seed: u64,
}

impl ModelConfig {
    pub fn n_particles(&self) -> usize {
        self.n_list[0]
    }

    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::Config("N list is empty".into()));
        }
        if self.n_list.iter().any(|&n| n < 2) {
            return Err(Error::Config("every N must be >= 2".into()));
        }
        if self.excitation_cutoff < 1 {
            return Err(Error::Config("excitation_cutoff must be >= 1".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.eigensolver_tol) || !positive(self.expm_tol) {
            return Err(Error::Config("tolerances must be > 0".into()));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        raw.resolve()
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

/// On-disk configuration shape (TOML).
#[derive(Debug, Deserialize, Serialize)]
pub struct RawConfig {
    pub dimension: usize,
    pub n_max: i64,
    /// List of `[integer label, value]` pairs; evenness is completed.
    #[serde(default)]
    pub w_hat: Vec<(Vec<i64>, f64)>,
    #[serde(rename = "N")]
    n: OneOrMany,
    pub excitation_cutoff: usize,
    #[serde(default = "default_eig_tol")]
    pub eigensolver_tol: f64,
    #[serde(default = "default_expm_tol")]
    pub expm_tol: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_eig_tol() -> f64 {
    1e-10
}

fn default_expm_tol() -> f64 {
    1e-12
}

impl From<&ModelConfig> for RawConfig {
    fn from(config: &ModelConfig) -> Self {
        // echo only one representative of each ±n pair, as a user would
        let mut w_hat = Vec::new();
        let mut seen = vec![false; config.mode_set.len()];
        for i in 0..config.mode_set.len() {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            seen[config.mode_set.negate(i)] = true;
            let v = config.potential.w_hat(i);
            if v != 0.0 {
                w_hat.push((config.mode_set.label(i).to_vec(), v));
            }
        }
        RawConfig {
            dimension: config.mode_set.dimension(),
            n_max: config.mode_set.n_max(),
            w_hat,
            n: OneOrMany::Many(config.n_list.clone()),
            excitation_cutoff: config.excitation_cutoff,
            eigensolver_tol: config.eigensolver_tol,
            expm_tol: config.expm_tol,
            rng_seed: config.rng_seed,
        }
    }
}

impl RawConfig {
    fn resolve(self) -> Result<ModelConfig> {
        let mode_set = Arc::new(ModeSet::build(self.dimension, self.n_max)?);
        let potential = Potential::from_pairs(mode_set.clone(), &self.w_hat)?;
        let mut n_list = match self.n {
            OneOrMany::One(n) => vec![n],
            OneOrMany::Many(v) => v,
        };
        n_list.sort_unstable();
        n_list.dedup();
        let config = ModelConfig {
            mode_set,
            potential,
            n_list,
            excitation_cutoff: self.excitation_cutoff,
            eigensolver_tol: self.eigensolver_tol,
            expm_tol: self.expm_tol,
            rng_seed: self.rng_seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn zero_mode_only() {
        let m = ModeSet::build(1, 0).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.zero_index(), 0);
        assert_eq!(m.label(0), &[0]);
    }

    #[test]
    fn d1_nmax2_has_five_modes() {
        let m = ModeSet::build(1, 2).unwrap();
        assert_eq!(m.len(), 5);
        let labels: Vec<i64> = (0..5).map(|i| m.label(i)[0]).collect();
        assert_eq!(labels, vec![-2, -1, 0, 1, 2]);
        assert!((m.p_squared(3) - (2.0 * PI).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn d2_nmax1_closed_under_negation() {
        // brute-force enumeration of {-1,0,1}^2
        let m = ModeSet::build(2, 1).unwrap();
        assert_eq!(m.len(), 9);
        for i in 0..m.len() {
            let j = m.negate(i);
            let neg: Vec<i64> = m.label(i).iter().map(|x| -x).collect();
            assert_eq!(m.label(j), neg.as_slice());
            assert_eq!(m.negate(j), i);
        }
        assert_eq!(m.label(m.zero_index()), &[0, 0]);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(ModeSet::build(0, 1).is_err());
        assert!(ModeSet::build(1, -1).is_err());
    }

    #[test]
    fn mode_addition_respects_cutoff() {
        let m = ModeSet::build(1, 1).unwrap();
        let plus = m.index_of(&[1]).unwrap();
        let minus = m.index_of(&[-1]).unwrap();
        assert_eq!(m.add(plus, minus), Some(m.zero_index()));
        assert_eq!(m.add(plus, plus), None);
    }

    #[test]
    fn zero_potential_evaluates_to_zero() {
        let m = Arc::new(ModeSet::build(1, 2).unwrap());
        let w = Potential::zero(m);
        assert_eq!(w.evaluate_w(&[0.37]), 0.0);
        assert_eq!(w.l1_norm(), 0.0);
    }

    #[test]
    fn constant_potential_from_zero_mode() {
        let m = Arc::new(ModeSet::build(1, 1).unwrap());
        let w = Potential::from_pairs(m, &[(vec![0], 1.0)]).unwrap();
        for x in [0.0, 0.2, 0.9] {
            assert!((w.evaluate_w(&[x]) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn three_term_sum_at_origin() {
        let m = Arc::new(ModeSet::build(1, 1).unwrap());
        let w = Potential::from_pairs(m, &[(vec![0], 1.0), (vec![1], 1.0)]).unwrap();
        assert!((w.evaluate_w(&[0.0]) - 3.0).abs() < 1e-12);
        assert!((w.l1_norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn evenness_completion_and_conflict() {
        let m = Arc::new(ModeSet::build(1, 2).unwrap());
        let w = Potential::from_pairs(m.clone(), &[(vec![1], 0.5)]).unwrap();
        assert_eq!(w.w_hat(m.index_of(&[-1]).unwrap()), 0.5);
        let bad = Potential::from_pairs(m.clone(), &[(vec![1], 0.5), (vec![-1], 0.6)]);
        assert!(bad.is_err());
        let neg = Potential::from_pairs(m, &[(vec![1], -0.1)]);
        assert!(neg.is_err());
    }

    #[test]
    fn w_is_even_at_random_points() {
        let m = Arc::new(ModeSet::build(2, 1).unwrap());
        let w = Potential::from_pairs(
            m,
            &[
                (vec![0, 0], 0.3),
                (vec![1, 0], 0.7),
                (vec![1, 1], 0.2),
                (vec![0, 1], 1.1),
            ],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let neg = [-x[0], -x[1]];
            assert!((w.evaluate_w(&x) - w.evaluate_w(&neg)).abs() < 1e-12);
        }
        assert!((w.evaluate_w(&[0.0, 0.0]) - w.l1_norm()).abs() < 1e-12);
    }

    #[test]
    fn config_round_trip() {
        let text = r#"
            dimension = 1
            n_max = 2
            w_hat = [[[0], 1.0], [[1], 1.0], [[2], 1.0]]
            N = [6, 8, 10]
            excitation_cutoff = 10
            eigensolver_tol = 1e-10
            expm_tol = 1e-12
            rng_seed = 42
        "#;
        let cfg = ModelConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.n_list, vec![6, 8, 10]);
        assert_eq!(cfg.mode_set.len(), 5);
        assert_eq!(cfg.potential.l1_norm(), 5.0);
        assert_eq!(cfg.rng_seed, 42);
    }

    #[test]
    fn config_rejects_small_n() {
        let text = r#"
            dimension = 1
            n_max = 1
            N = 1
            excitation_cutoff = 4
        "#;
        assert!(ModelConfig::from_toml_str(text).is_err());
    }
}
