//! Recipes for every operator of the theory, their assembly on sector
//! bases, unitaries from generators, and the classical interaction-energy
//! bound.
//!
//! Operator-valued coefficients (functions of the excited-particle
//! number) are attached on a definite side of each monomial; ordering
//! matters on truncated spaces and the recipes keep the side on which
//! the identities below hold exactly. Momentum labels falling outside
//! the mode set are dropped from the sums, which is the single
//! truncation knob of the whole artifact.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bogoliubov::BogoliubovData;
use crate::error::{Error, Result};
use crate::expm::{expm_dense, Unitary, DENSE_EXPM_LIMIT};
use crate::fock::{
    Factor, Monomial, NumberWeight, OperatorBuilder, SectorBasis, SparseHermitianOperator,
};
use crate::model::{ModeSet, Potential};

/// A sum of coefficient-weighted operator monomials, independent of any
/// particular basis. Every constructor below conserves total momentum
/// term by term.
#[derive(Clone, Debug)]
pub struct OperatorRecipe {
    monomials: Vec<Monomial>,
}

impl OperatorRecipe {
    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn conserves_momentum(&self, mode_set: &ModeSet) -> bool {
        self.monomials
            .iter()
            .all(|m| m.momentum_transfer(mode_set).iter().all(|&x| x == 0))
    }

    pub fn assemble(&self, basis: &SectorBasis) -> Result<SparseHermitianOperator> {
        let mut builder = OperatorBuilder::new(basis);
        for m in &self.monomials {
            builder.add(m)?;
        }
        Ok(builder.build())
    }

    fn push(&mut self, m: Monomial) {
        self.monomials.push(m);
    }

    fn push_with_adjoint(&mut self, m: Monomial) {
        self.monomials.push(m.adjoint());
        self.monomials.push(m);
    }

    /// Full second-quantized Hamiltonian on a canonical sector:
    /// `Σ_p p² a_p* a_p + (2(N-1))^{-1} Σ_{p,q,k} ŵ(k) a*_{p-k} a*_{q+k} a_p a_q`.
    pub fn hamiltonian(potential: &Potential, n_particles: usize) -> Result<Self> {
        if n_particles < 2 {
            return Err(Error::Model("the pair interaction needs N >= 2".into()));
        }
        let modes = potential.mode_set().clone();
        let mut recipe = OperatorRecipe {
            monomials: Vec::new(),
        };
        for p in modes.nonzero_modes() {
            recipe.push(Monomial::new(
                modes.p_squared(p),
                vec![Factor::Create(p), Factor::Annihilate(p)],
            ));
        }
        let scale = 1.0 / (2.0 * (n_particles as f64 - 1.0));
        for p in 0..modes.len() {
            for q in 0..modes.len() {
                for k in 0..modes.len() {
                    let w = potential.w_hat(k);
                    if w == 0.0 {
                        continue;
                    }
                    let nk = modes.negate(k);
                    let (Some(pk), Some(qk)) = (modes.add(p, nk), modes.add(q, k)) else {
                        continue;
                    };
                    recipe.push(Monomial::new(
                        w * scale,
                        vec![
                            Factor::Create(pk),
                            Factor::Create(qk),
                            Factor::Annihilate(p),
                            Factor::Annihilate(q),
                        ],
                    ));
                }
            }
        }
        Ok(recipe)
    }

    /// Quadratic excitation Hamiltonian
    /// `Σ_{p≠0} (p² + ŵ(p)) a_p* a_p + ½ ŵ(p)(a_p* a_-p* + a_p a_-p)`.
    pub fn bogoliubov_hamiltonian(potential: &Potential) -> Self {
        let modes = potential.mode_set().clone();
        let mut recipe = OperatorRecipe {
            monomials: Vec::new(),
        };
        for p in modes.nonzero_modes() {
            let w = potential.w_hat(p);
            recipe.push(Monomial::new(
                modes.p_squared(p) + w,
                vec![Factor::Create(p), Factor::Annihilate(p)],
            ));
            if w != 0.0 {
                let np = modes.negate(p);
                recipe.push(Monomial::new(
                    0.5 * w,
                    vec![Factor::Create(p), Factor::Create(np)],
                ));
                recipe.push(Monomial::new(
                    0.5 * w,
                    vec![Factor::Annihilate(p), Factor::Annihilate(np)],
                ));
            }
        }
        recipe
    }

    /// The 1/N-expanded excitation Hamiltonian: the quadratic theory
    /// plus every correction of order N^{-1/2} and N^{-1}. Well defined
    /// on any excitation cutoff because the square roots of the exact
    /// substitution have been expanded away.
    pub fn excitation_hamiltonian(potential: &Potential, n_particles: usize) -> Result<Self> {
        if n_particles < 2 {
            return Err(Error::Model("the pair interaction needs N >= 2".into()));
        }
        let modes = potential.mode_set().clone();
        let n = n_particles as f64;
        let mut recipe = Self::bogoliubov_hamiltonian(potential);

        // N_+(1 - N_+) w0 / (2(N-1))
        let w0 = potential.w_hat(modes.zero_index());
        if w0 != 0.0 {
            let c = w0 / (2.0 * (n - 1.0));
            let weight: NumberWeight = Arc::new(move |k| {
                let k = k as f64;
                c * k * (1.0 - k)
            });
            recipe.push(Monomial::new(1.0, vec![Factor::Weight(weight)]));
        }

        // Σ_p (1 - N_+)/(N-1) ŵ(p) a_p* a_p
        for p in modes.nonzero_modes() {
            let w = potential.w_hat(p);
            if w == 0.0 {
                continue;
            }
            let c = w / (n - 1.0);
            let weight: NumberWeight = Arc::new(move |k| c * (1.0 - k as f64));
            recipe.push(Monomial::new(
                1.0,
                vec![
                    Factor::Weight(weight),
                    Factor::Create(p),
                    Factor::Annihilate(p),
                ],
            ));
        }

        // ½ Σ_p ŵ(p) a_p* a_-p* (1 - 2N_+)/(2N) + h.c.
        for p in modes.nonzero_modes() {
            let w = potential.w_hat(p);
            if w == 0.0 {
                continue;
            }
            let np = modes.negate(p);
            let weight: NumberWeight = Arc::new(move |k| (1.0 - 2.0 * k as f64) / (2.0 * n));
            recipe.push_with_adjoint(Monomial::new(
                0.5 * w,
                vec![
                    Factor::Create(p),
                    Factor::Create(np),
                    Factor::Weight(weight),
                ],
            ));
        }

        // N^{-1/2} Σ_{l,p≠0, l+p≠0} ŵ(l) a*_{p+l} a*_{-l} a_p + h.c.
        let zero = modes.zero_index();
        for l in modes.nonzero_modes() {
            let w = potential.w_hat(l);
            if w == 0.0 {
                continue;
            }
            for p in modes.nonzero_modes() {
                let Some(pl) = modes.add(p, l) else { continue };
                if pl == zero {
                    continue;
                }
                recipe.push_with_adjoint(Monomial::new(
                    w / n.sqrt(),
                    vec![
                        Factor::Create(pl),
                        Factor::Create(modes.negate(l)),
                        Factor::Annihilate(p),
                    ],
                ));
            }
        }

        recipe.push_quartic(potential, 1.0 / (2.0 * (n - 1.0)));
        Ok(recipe)
    }

    // (scale) Σ_{k,p≠0, l≠-p,k} ŵ(l) a*_{p+l} a*_{k-l} a_p a_k ; the
    // index set is closed under taking adjoints, so no h.c. is needed.
    fn push_quartic(&mut self, potential: &Potential, scale: f64) {
        let modes = potential.mode_set().clone();
        let zero = modes.zero_index();
        for l in 0..modes.len() {
            let w = potential.w_hat(l);
            if w == 0.0 {
                continue;
            }
            let nl = modes.negate(l);
            for p in modes.nonzero_modes() {
                let Some(pl) = modes.add(p, l) else { continue };
                if pl == zero {
                    continue;
                }
                for k in modes.nonzero_modes() {
                    if k == l {
                        continue;
                    }
                    let Some(kl) = modes.add(k, nl) else { continue };
                    if kl == zero {
                        continue;
                    }
                    self.push(Monomial::new(
                        w * scale,
                        vec![
                            Factor::Create(pl),
                            Factor::Create(kl),
                            Factor::Annihilate(p),
                            Factor::Annihilate(k),
                        ],
                    ));
                }
            }
        }
    }

    /// The canonical Hamiltonian transported to excitation coordinates
    /// with the zero-mode operators resolved exactly into square-root
    /// weights of the excited-particle number. On a cutoff `M = N` this
    /// agrees entrywise with conjugating [`Self::hamiltonian`] by the
    /// excitation map, constant `N ŵ(0)/2` excluded.
    pub fn substituted_hamiltonian(potential: &Potential, n_particles: usize) -> Result<Self> {
        if n_particles < 2 {
            return Err(Error::Model("the pair interaction needs N >= 2".into()));
        }
        let modes = potential.mode_set().clone();
        let n = n_particles as f64;
        let mut recipe = OperatorRecipe {
            monomials: Vec::new(),
        };

        // N_+(1 - N_+) w0/(2(N-1)) plus the kinetic and quadratic diagonal
        let w0 = potential.w_hat(modes.zero_index());
        if w0 != 0.0 {
            let c = w0 / (2.0 * (n - 1.0));
            let weight: NumberWeight = Arc::new(move |k| {
                let k = k as f64;
                c * k * (1.0 - k)
            });
            recipe.push(Monomial::new(1.0, vec![Factor::Weight(weight)]));
        }
        for p in modes.nonzero_modes() {
            let p2 = modes.p_squared(p);
            let w = potential.w_hat(p);
            let weight: NumberWeight =
                Arc::new(move |k| p2 + w * (n - k as f64) / (n - 1.0));
            recipe.push(Monomial::new(
                1.0,
                vec![
                    Factor::Weight(weight),
                    Factor::Create(p),
                    Factor::Annihilate(p),
                ],
            ));
        }

        // ½ Σ_p ŵ(p) a_p* a_-p* sqrt((N-N_+)(N-N_+-1))/(N-1) + h.c.
        for p in modes.nonzero_modes() {
            let w = potential.w_hat(p);
            if w == 0.0 {
                continue;
            }
            let np = modes.negate(p);
            let weight: NumberWeight = Arc::new(move |k| {
                let r = n - k as f64;
                (r.max(0.0) * (r - 1.0).max(0.0)).sqrt() / (n - 1.0)
            });
            recipe.push_with_adjoint(Monomial::new(
                0.5 * w,
                vec![
                    Factor::Create(p),
                    Factor::Create(np),
                    Factor::Weight(weight),
                ],
            ));
        }

        // Σ ŵ(l) a*_{p+l} a*_{-l} a_p sqrt(N-N_+)/(N-1) + h.c.
        let zero = modes.zero_index();
        for l in modes.nonzero_modes() {
            let w = potential.w_hat(l);
            if w == 0.0 {
                continue;
            }
            for p in modes.nonzero_modes() {
                let Some(pl) = modes.add(p, l) else { continue };
                if pl == zero {
                    continue;
                }
                let weight: NumberWeight =
                    Arc::new(move |k| (n - k as f64).max(0.0).sqrt() / (n - 1.0));
                recipe.push_with_adjoint(Monomial::new(
                    w,
                    vec![
                        Factor::Create(pl),
                        Factor::Create(modes.negate(l)),
                        Factor::Annihilate(p),
                        Factor::Weight(weight),
                    ],
                ));
            }
        }

        recipe.push_quartic(potential, 1.0 / (2.0 * (n - 1.0)));
        Ok(recipe)
    }

    /// Coefficient of `a*_{p+q} a*_{-p} a*_{-q}` produced when the
    /// quadratic rotation hits the N^{-1/2} terms of the excitation
    /// Hamiltonian.
    pub fn cubic_coefficient(
        bog: &BogoliubovData,
        potential: &Potential,
        p: usize,
        q: usize,
        s: usize,
    ) -> f64 {
        potential.w_hat(p)
            * (bog.gamma(s) * bog.gamma(p) * bog.sigma(q)
                - bog.sigma(s) * bog.sigma(p) * bog.gamma(q))
    }

    /// Residual cubic term after the quadratic rotation:
    /// `N^{-1/2} Σ c_{p,q} a*_{p+q} a*_{-p} a*_{-q} + h.c.`
    pub fn cubic_term(bog: &BogoliubovData, potential: &Potential, n_particles: usize) -> Self {
        let scale = 1.0 / (n_particles as f64).sqrt();
        let modes = bog.mode_set().clone();
        let mut recipe = OperatorRecipe {
            monomials: Vec::new(),
        };
        for (p, q, s) in bog.kernel_triples() {
            let c = Self::cubic_coefficient(bog, potential, p, q, s);
            if c == 0.0 {
                continue;
            }
            recipe.push_with_adjoint(Monomial::new(
                c * scale,
                vec![
                    Factor::Create(s),
                    Factor::Create(modes.negate(p)),
                    Factor::Create(modes.negate(q)),
                ],
            ));
        }
        recipe
    }

    /// Anti-Hermitian generator `Σ_{p≠0} β_p (a_p* a_-p* - a_p a_-p)`
    /// of the quadratic rotation.
    pub fn quadratic_generator(bog: &BogoliubovData) -> Self {
        let modes = bog.mode_set().clone();
        let mut recipe = OperatorRecipe {
            monomials: Vec::new(),
        };
        for p in modes.nonzero_modes() {
            let b = bog.beta(p);
            if b == 0.0 {
                continue;
            }
            let np = modes.negate(p);
            recipe.push(Monomial::new(
                b,
                vec![Factor::Create(p), Factor::Create(np)],
            ));
            recipe.push(Monomial::new(
                -b,
                vec![Factor::Annihilate(p), Factor::Annihilate(np)],
            ));
        }
        recipe
    }

    /// Anti-Hermitian cubic generator
    /// `N^{-1/2} Σ η_{p,q} (a*_{p+q} a*_{-p} a*_{-q} 1^{<=N} - 1^{<=N} a_{p+q} a_{-p} a_{-q})`.
    ///
    /// The particle cutoff `1^{<=N}` is implemented exactly; it is the
    /// identity whenever the basis cutoff `M <= N`.
    pub fn cubic_generator(
        bog: &BogoliubovData,
        potential: &Potential,
        n_particles: usize,
    ) -> Self {
        let scale = 1.0 / (n_particles as f64).sqrt();
        let modes = bog.mode_set().clone();
        let nf = n_particles as u32;
        let mut recipe = OperatorRecipe {
            monomials: Vec::new(),
        };
        for (p, q, s) in bog.kernel_triples() {
            let eta = bog
                .cubic_kernel(potential, p, q)
                .expect("triples are admissible by construction");
            if eta == 0.0 {
                continue;
            }
            let indicator: NumberWeight = Arc::new(move |k| if k <= nf { 1.0 } else { 0.0 });
            let creation = Monomial::new(
                eta * scale,
                vec![
                    Factor::Create(s),
                    Factor::Create(modes.negate(p)),
                    Factor::Create(modes.negate(q)),
                    Factor::Weight(indicator),
                ],
            );
            let mut annihilation = creation.adjoint();
            annihilation.coefficient = -annihilation.coefficient;
            recipe.push(creation);
            recipe.push(annihilation);
        }
        recipe
    }

    /// Diagonal `Σ_{p≠0} e_p a_p* a_p` of the rotated quadratic theory.
    pub fn dispersion_diagonal(bog: &BogoliubovData) -> Self {
        let modes = bog.mode_set().clone();
        let mut recipe = OperatorRecipe {
            monomials: Vec::new(),
        };
        for p in modes.nonzero_modes() {
            recipe.push(Monomial::new(
                bog.dispersion(p),
                vec![Factor::Create(p), Factor::Annihilate(p)],
            ));
        }
        recipe
    }

    /// Excited-particle number `N_+ = Σ_{p≠0} a_p* a_p`.
    pub fn number_operator(mode_set: &Arc<ModeSet>) -> Self {
        let mut recipe = OperatorRecipe {
            monomials: Vec::new(),
        };
        for p in mode_set.nonzero_modes() {
            recipe.push(Monomial::new(
                1.0,
                vec![Factor::Create(p), Factor::Annihilate(p)],
            ));
        }
        recipe
    }
}

/// Limit on the anti-Hermiticity defect accepted by
/// [`unitary_from_generator`].
pub const ANTI_HERMITIAN_LIMIT: f64 = 1e-10;

/// Exponentiate an anti-Hermitian generator into a [`Unitary`]. Small
/// dimensions get a dense orthogonal matrix (checked to `10·tol`);
/// beyond [`DENSE_EXPM_LIMIT`] the result applies the exponential
/// through Krylov propagation instead of materializing it.
pub fn unitary_from_generator(gen: &SparseHermitianOperator, tol: f64) -> Result<Unitary> {
    let defect = gen.antisymmetry_defect();
    if defect > ANTI_HERMITIAN_LIMIT {
        return Err(Error::NotAntiHermitian {
            defect,
            limit: ANTI_HERMITIAN_LIMIT,
        });
    }
    if gen.dim() <= DENSE_EXPM_LIMIT {
        let u = expm_dense(&gen.to_dense())?;
        let n = u.nrows();
        let residual = (u.transpose() * &u - DMatrix::identity(n, n)).abs().max();
        if residual > 10.0 * tol {
            return Err(Error::Expm(format!(
                "unitarity residual {residual:e} exceeds 10*tol = {:e}",
                10.0 * tol
            )));
        }
        Ok(Unitary::Dense(u))
    } else {
        Ok(Unitary::Action {
            generator: gen.clone(),
            tol,
        })
    }
}

/// `U op U^T` as a dense matrix. Hermiticity of Hermitian inputs is
/// preserved to the accuracy of the exponential.
pub fn conjugate(op: &SparseHermitianOperator, u: &Unitary) -> Result<DMatrix<f64>> {
    if op.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            left: op.dim(),
            right: u.dim(),
        });
    }
    match u {
        Unitary::Dense(m) => {
            let dense = op.to_dense();
            Ok(m * dense * m.transpose())
        }
        Unitary::Action { .. } => {
            let n = op.dim();
            let mut out = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                let col = u.apply(&op.matvec(&u.apply_inverse(&e)?))?;
                out.set_column(j, &col);
            }
            Ok(out)
        }
    }
}

/// The `(vacuum, vacuum)` entry of an excitation-sector operator.
pub fn vacuum_expectation(op: &SparseHermitianOperator, basis: &SectorBasis) -> Result<f64> {
    let vac = basis
        .vacuum_index()
        .ok_or_else(|| Error::Operator("basis does not contain the vacuum".into()))?;
    if op.dim() != basis.len() {
        return Err(Error::DimensionMismatch {
            left: op.dim(),
            right: basis.len(),
        });
    }
    Ok(op.entry(vac, vac))
}

/// Monte-Carlo sweep of the classical interaction-energy floor
/// `(N-1)^{-1} Σ_{i<j} w(x_i - x_j) >= N ŵ(0)/2 - N w(0)/(N-1)`
/// over uniform position tuples on the torus.
#[derive(Debug, Clone)]
pub struct OnsagerReport {
    pub samples: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
    /// Samples with slack below `-1e-9`.
    pub violations: usize,
}

pub fn onsager_check(
    potential: &Potential,
    n_particles: usize,
    samples: usize,
    seed: u64,
) -> Result<OnsagerReport> {
    if samples == 0 {
        return Err(Error::Model("need at least one sample".into()));
    }
    if n_particles < 2 {
        return Err(Error::Model("need at least two particles".into()));
    }
    let modes = potential.mode_set();
    let d = modes.dimension();
    let w0_hat = potential.w_hat(modes.zero_index());
    let w_origin = potential.l1_norm();
    let n = n_particles as f64;
    let bound = n / 2.0 * w0_hat - n / (n - 1.0) * w_origin;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_slack = f64::INFINITY;
    let mut sum_slack = 0.0;
    let mut violations = 0usize;
    let mut positions = vec![vec![0.0f64; d]; n_particles];
    let mut diff = vec![0.0f64; d];
    for _ in 0..samples {
        for x in positions.iter_mut() {
            for c in x.iter_mut() {
                *c = rng.gen::<f64>();
            }
        }
        let mut energy = 0.0;
        for i in 0..n_particles {
            for j in (i + 1)..n_particles {
                for (k, dk) in diff.iter_mut().enumerate() {
                    *dk = positions[i][k] - positions[j][k];
                }
                energy += potential.evaluate_w(&diff);
            }
        }
        let slack = energy / (n - 1.0) - bound;
        min_slack = min_slack.min(slack);
        sum_slack += slack;
        if slack < -1e-9 {
            violations += 1;
        }
    }
    Ok(OnsagerReport {
        samples,
        min_slack,
        mean_slack: sum_slack / samples as f64,
        violations,
    })
}
