//! Closed-form Bogoliubov theory on the truncated momentum lattice.
//!
//! For each nonzero mode the quadratic theory is parameterized by
//!
//! ```text
//! e_p     = sqrt(p^4 + 2 p^2 ŵ(p))                 dispersion
//! α_p     = ŵ(p) / (p^2 + ŵ(p) + e_p)             mixing ratio in [0,1)
//! β_p     = artanh(α_p) / 2                        generator coefficient
//! σ_p     = cosh(2β_p) = 1/sqrt(1-α_p^2)
//! γ_p     = sinh(2β_p) = α_p/sqrt(1-α_p^2)
//! ```
//!
//! The doubled angle in `σ_p`, `γ_p` comes from the quadratic generator
//! `Σ_{p≠0} β_p (a_p* a_-p* - a_p a_-p)`: the sum runs over all nonzero
//! `p`, so each unordered pair `{p,-p}` is hit twice and the exponential
//! mixes with hyperbolic functions of `2β_p`. The same choice makes the
//! per-mode condensate depletion `γ_p^2 = α_p^2/(1-α_p^2)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ModeSet, Potential};

/// Per-mode Bogoliubov coefficients plus the energy constant and the
/// predicted depletion. Zero-mode slots hold the neutral values
/// (`α=γ=0`, `σ=1`, `e=0`) so the arrays are indexed by mode directly.
#[derive(Debug, Clone)]
pub struct BogoliubovData {
    mode_set: Arc<ModeSet>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    sigma: Vec<f64>,
    gamma: Vec<f64>,
    dispersion: Vec<f64>,
    e_bog: f64,
    depletion: f64,
}

impl BogoliubovData {
    /// Evaluate all closed forms for `potential` on its mode set.
    ///
    /// The energy constant is accumulated in the rationalized form
    /// `E_Bog = -1/2 Σ_{p≠0} ŵ(p)^2 / (p^2 + ŵ(p) + e_p)`, which is
    /// algebraically equal to `-1/2 Σ (p^2 + ŵ(p) - e_p)` but avoids the
    /// cancellation of nearly equal large terms at high `|p|`.
    pub fn coefficients(potential: &Potential) -> Result<Self> {
        let mode_set = potential.mode_set().clone();
        let count = mode_set.len();
        if count == 1 && !potential.is_zero() {
            return Err(Error::Model(
                "potential couples excited modes but the mode set has only p = 0".into(),
            ));
        }
        let mut alpha = vec![0.0; count];
        let mut beta = vec![0.0; count];
        let mut sigma = vec![1.0; count];
        let mut gamma = vec![0.0; count];
        let mut dispersion = vec![0.0; count];
        let mut e_bog = 0.0;
        let mut depletion = 0.0;
        for i in mode_set.nonzero_modes() {
            let p2 = mode_set.p_squared(i);
            let w = potential.w_hat(i);
            let e = (p2 * p2 + 2.0 * p2 * w).sqrt();
            let a = w / (p2 + w + e);
            let b = a.atanh() / 2.0;
            let s = (2.0 * b).cosh();
            let g = (2.0 * b).sinh();
            alpha[i] = a;
            beta[i] = b;
            sigma[i] = s;
            gamma[i] = g;
            dispersion[i] = e;
            e_bog -= 0.5 * w * w / (p2 + w + e);
            depletion += g * g;
        }
        Ok(BogoliubovData {
            mode_set,
            alpha,
            beta,
            sigma,
            gamma,
            dispersion,
            e_bog,
            depletion,
        })
    }

    pub fn mode_set(&self) -> &Arc<ModeSet> {
        &self.mode_set
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i]
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.beta[i]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigma[i]
    }

    pub fn gamma(&self, i: usize) -> f64 {
        self.gamma[i]
    }

    /// Dispersion `e_p`; zero for the zero mode.
    pub fn dispersion(&self, i: usize) -> f64 {
        self.dispersion[i]
    }

    /// Ground-state energy constant of the quadratic theory.
    pub fn e_bog(&self) -> f64 {
        self.e_bog
    }

    /// Predicted number of excited particles, `Σ_{p≠0} γ_p^2`.
    pub fn depletion(&self) -> f64 {
        self.depletion
    }

    /// Largest `σ_p`; finite by construction, reported for diagnostics.
    pub fn sigma_sup(&self) -> f64 {
        self.sigma.iter().cloned().fold(1.0, f64::max)
    }

    /// `Σ_{p≠0} γ_p`, the summability diagnostic for the cubic kernel.
    pub fn gamma_sum(&self) -> f64 {
        self.gamma.iter().sum()
    }

    /// Cubic kernel
    /// `η_{p,q} = ŵ(p) (γ_{p+q} γ_p σ_q - σ_{p+q} σ_p γ_q) / (e_{p+q} + e_p + e_q)`.
    ///
    /// The numerator is exactly the coefficient of
    /// `a*_{p+q} a*_{-p} a*_{-q}` produced when the quadratic rotation is
    /// applied to the cubic part of the excitation Hamiltonian, so the
    /// generator built from `η` removes that term to leading order.
    /// Requires `p`, `q` and `p+q` to be nonzero modes of the set.
    pub fn cubic_kernel(&self, potential: &Potential, p: usize, q: usize) -> Result<f64> {
        let zero = self.mode_set.zero_index();
        if p == zero || q == zero {
            return Err(Error::Operator("cubic kernel needs p, q != 0".into()));
        }
        let s = self
            .mode_set
            .add(p, q)
            .ok_or_else(|| Error::ModeOutOfSet(self.sum_label(p, q)))?;
        if s == zero {
            return Err(Error::Operator("cubic kernel needs p + q != 0".into()));
        }
        let numerator = potential.w_hat(p)
            * (self.gamma[s] * self.gamma[p] * self.sigma[q]
                - self.sigma[s] * self.sigma[p] * self.gamma[q]);
        Ok(numerator / (self.dispersion[s] + self.dispersion[p] + self.dispersion[q]))
    }

    fn sum_label(&self, p: usize, q: usize) -> Vec<i64> {
        self.mode_set
            .label(p)
            .iter()
            .zip(self.mode_set.label(q).iter())
            .map(|(a, b)| a + b)
            .collect()
    }

    /// All admissible kernel triples `(p, q, p+q)` within the set.
    pub fn kernel_triples(&self) -> Vec<(usize, usize, usize)> {
        let zero = self.mode_set.zero_index();
        let mut out = Vec::new();
        for p in self.mode_set.nonzero_modes() {
            for q in self.mode_set.nonzero_modes() {
                if let Some(s) = self.mode_set.add(p, q) {
                    if s != zero {
                        out.push((p, q, s));
                    }
                }
            }
        }
        out
    }

    /// `Σ_{p,q} |η_{p,q}|` over all admissible triples.
    pub fn kernel_l1_norm(&self, potential: &Potential) -> f64 {
        self.kernel_triples()
            .iter()
            .map(|&(p, q, _)| self.cubic_kernel(potential, p, q).unwrap().abs())
            .sum()
    }

    /// Two-term density-matrix prediction for `N` particles.
    pub fn predicted_density_matrix(&self, n_particles: usize) -> DensityMatrixPrediction {
        let n = n_particles as f64;
        let mut weights = vec![0.0; self.mode_set.len()];
        for i in self.mode_set.nonzero_modes() {
            weights[i] = self.gamma[i] * self.gamma[i];
        }
        weights[self.mode_set.zero_index()] = n - self.depletion;
        DensityMatrixPrediction {
            regime_valid: self.depletion < n,
            weights,
        }
    }
}

/// Diagonal density-matrix prediction: weight `N - Σγ^2` on the
/// condensate mode and `γ_p^2` on each excited mode. The trace is `N`
/// by construction.
#[derive(Debug, Clone)]
pub struct DensityMatrixPrediction {
    /// Per-mode weights, indexed like the mode set.
    pub weights: Vec<f64>,
    /// False when the depletion reaches `N`, i.e. the asymptotic
    /// expansion is meaningless at this particle number.
    pub regime_valid: bool,
}

impl DensityMatrixPrediction {
    pub fn trace(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModeSet;
    use approx::assert_abs_diff_eq;

    fn set(n_max: i64) -> Arc<ModeSet> {
        Arc::new(ModeSet::build(1, n_max).unwrap())
    }

    #[test]
    fn free_gas_is_trivial() {
        let m = set(2);
        let w = Potential::zero(m.clone());
        let bog = BogoliubovData::coefficients(&w).unwrap();
        for i in 0..m.len() {
            assert_eq!(bog.alpha(i), 0.0);
            assert_eq!(bog.gamma(i), 0.0);
            assert_eq!(bog.sigma(i), 1.0);
            assert_abs_diff_eq!(bog.dispersion(i), m.p_squared(i), epsilon = 1e-12);
        }
        assert_eq!(bog.e_bog(), 0.0);
        assert_eq!(bog.depletion(), 0.0);
    }

    #[test]
    fn closed_forms_at_single_mode() {
        // ŵ(±2π) = 1; frozen high-precision evaluations of the closed forms
        let m = set(1);
        let w = Potential::from_pairs(m.clone(), &[(vec![1], 1.0)]).unwrap();
        let bog = BogoliubovData::coefficients(&w).unwrap();
        let i = m.index_of(&[1]).unwrap();
        assert_abs_diff_eq!(bog.dispersion(i), 40.4660634575783, epsilon = 1e-12);
        assert_abs_diff_eq!(bog.alpha(i), 0.012354146779134169, epsilon = 1e-14);
        assert_abs_diff_eq!(bog.beta(i), 0.006177387676839022, epsilon = 1e-14);
        assert_abs_diff_eq!(bog.sigma(i), 1.0000763212078212, epsilon = 1e-13);
        assert_abs_diff_eq!(bog.gamma(i), 0.012355089662537953, epsilon = 1e-14);
        // modes {±2π}: E_Bog = -((2π)^2 + 1 - e)
        assert_abs_diff_eq!(bog.e_bog(), -0.012354146779134169, epsilon = 1e-13);
    }

    #[test]
    fn rejects_coupling_without_excited_modes() {
        let m = set(0);
        let w = Potential::from_pairs(m, &[(vec![0], 1.0)]).unwrap();
        assert!(BogoliubovData::coefficients(&w).is_err());
    }

    #[test]
    fn hyperbolic_and_bound_identities() {
        let m = set(2);
        let w = Potential::uniform(m.clone(), 1.0).unwrap();
        let bog = BogoliubovData::coefficients(&w).unwrap();
        for i in m.nonzero_modes() {
            let s = bog.sigma(i);
            let g = bog.gamma(i);
            assert_abs_diff_eq!(s * s - g * g, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!((2.0 * bog.beta(i)).tanh(), bog.alpha(i), epsilon = 1e-12);
            // independent route through α
            let a = bog.alpha(i);
            assert_abs_diff_eq!(s, 1.0 / (1.0 - a * a).sqrt(), epsilon = 1e-12);
            assert_abs_diff_eq!(g, a / (1.0 - a * a).sqrt(), epsilon = 1e-12);
            let p2 = m.p_squared(i);
            let e = bog.dispersion(i);
            assert!(e >= p2 - 1e-12);
            assert!(e <= p2 + w.w_hat(i) + 1e-12);
            // evenness
            let j = m.negate(i);
            assert_eq!(bog.alpha(i), bog.alpha(j));
            assert_eq!(bog.dispersion(i), bog.dispersion(j));
            assert_eq!(bog.gamma(i), bog.gamma(j));
        }
    }

    #[test]
    fn rationalized_energy_matches_direct_difference() {
        let m = set(2);
        let w = Potential::uniform(m.clone(), 3.0).unwrap();
        let bog = BogoliubovData::coefficients(&w).unwrap();
        let direct: f64 = m
            .nonzero_modes()
            .map(|i| -0.5 * (m.p_squared(i) + w.w_hat(i) - bog.dispersion(i)))
            .sum();
        assert_abs_diff_eq!(bog.e_bog(), direct, epsilon = 1e-12);
    }

    #[test]
    fn gamma_monotone_in_coupling_strength() {
        let m = set(2);
        let mut last = vec![-1.0; m.len()];
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let w = Potential::uniform(m.clone(), t).unwrap();
            let bog = BogoliubovData::coefficients(&w).unwrap();
            for i in m.nonzero_modes() {
                assert!(bog.gamma(i) >= last[i]);
                last[i] = bog.gamma(i);
            }
        }
    }

    #[test]
    fn predicted_density_matrix_weights() {
        let m = set(1);
        let w = Potential::from_pairs(m.clone(), &[(vec![1], 1.0)]).unwrap();
        let bog = BogoliubovData::coefficients(&w).unwrap();
        let pred = bog.predicted_density_matrix(10);
        assert!(pred.regime_valid);
        assert_abs_diff_eq!(pred.trace(), 10.0, epsilon = 1e-12);
        let i = m.index_of(&[1]).unwrap();
        assert_abs_diff_eq!(pred.weights[i], 0.0001526482405693522, epsilon = 1e-15);
        assert_eq!(pred.weights[i], pred.weights[m.negate(i)]);
    }

    #[test]
    fn free_gas_prediction_is_pure_condensate() {
        let m = set(2);
        let w = Potential::zero(m.clone());
        let bog = BogoliubovData::coefficients(&w).unwrap();
        let pred = bog.predicted_density_matrix(10);
        assert_eq!(pred.weights[m.zero_index()], 10.0);
        assert_eq!(pred.trace(), 10.0);
    }

    #[test]
    fn kernel_frozen_value() {
        // d=1, ŵ(2π)=ŵ(4π)=1, p=q=2π: independent high-precision
        // evaluation of the five closed-form factors
        let m = set(2);
        let w = Potential::from_pairs(m.clone(), &[(vec![1], 1.0), (vec![2], 1.0)]).unwrap();
        let bog = BogoliubovData::coefficients(&w).unwrap();
        let p = m.index_of(&[1]).unwrap();
        let eta = bog.cubic_kernel(&w, p, p).unwrap();
        assert_abs_diff_eq!(eta, -5.13554057098042e-5, epsilon = 1e-17);
    }

    #[test]
    fn kernel_zero_cases() {
        let m = set(2);
        let free = Potential::zero(m.clone());
        let bog0 = BogoliubovData::coefficients(&free).unwrap();
        let p = m.index_of(&[1]).unwrap();
        assert_eq!(bog0.cubic_kernel(&free, p, p).unwrap(), 0.0);
        assert_eq!(bog0.kernel_l1_norm(&free), 0.0);

        // ŵ(q)=0, ŵ(p+q)=0 but ŵ(p)≠0: both γ factors vanish.
        // take p = 4π, q = -2π, p+q = 2π with ŵ supported on ±4π only
        let w = Potential::from_pairs(m.clone(), &[(vec![2], 1.0)]).unwrap();
        let bog = BogoliubovData::coefficients(&w).unwrap();
        let p4 = m.index_of(&[2]).unwrap();
        let qm1 = m.index_of(&[-1]).unwrap();
        assert_eq!(bog.cubic_kernel(&w, p4, qm1).unwrap(), 0.0);
    }

    #[test]
    fn kernel_domain_errors() {
        let m = set(1);
        let w = Potential::from_pairs(m.clone(), &[(vec![1], 1.0)]).unwrap();
        let bog = BogoliubovData::coefficients(&w).unwrap();
        let p = m.index_of(&[1]).unwrap();
        let mi = m.index_of(&[-1]).unwrap();
        // p+q = 0 forbidden and p+q outside the set rejected
        assert!(bog.cubic_kernel(&w, p, mi).is_err());
        assert!(bog.cubic_kernel(&w, p, p).is_err());
        // only the pair {±2π}: no admissible triple at all
        assert_eq!(bog.kernel_l1_norm(&w), 0.0);
        assert!(bog.kernel_triples().is_empty());
    }

    #[test]
    fn kernel_l1_frozen_value() {
        // brute-force double loop over the 6 admissible triples
        let m = set(2);
        let w = Potential::uniform(m.clone(), 1.0).unwrap();
        let bog = BogoliubovData::coefficients(&w).unwrap();
        assert_eq!(bog.kernel_triples().len(), 6);
        assert_abs_diff_eq!(
            bog.kernel_l1_norm(&w),
            2.3038999626874137e-4,
            epsilon = 1e-16
        );
    }
}
