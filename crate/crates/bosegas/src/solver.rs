//! Extremal eigenpairs, observable extraction and the transformed-state
//! residuals.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expm::Unitary;
use crate::fock::{ExcitationMap, Factor, Monomial, OperatorBuilder, SectorBasis, SectorKind,
    SparseHermitianOperator};

/// Dimensions up to this bound are diagonalized densely; larger ones go
/// through the iterative solver.
pub const DENSE_EIG_LIMIT: usize = 500;

/// Ground-state squared tail weight beyond the excitation cutoff that
/// is still considered negligible.
pub const TAIL_GATE: f64 = 1e-10;

/// Normalized lowest eigenpair with a fixed phase: the coefficient of
/// the designated reference state is real and nonnegative.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub vector: DVector<f64>,
    /// `‖H ψ - E ψ‖` of the returned pair.
    pub residual: f64,
}

/// Smallest eigenpair of a Hermitian operator. `reference` names the
/// basis state whose coefficient fixes the overall sign (the condensate
/// state or the vacuum); when its amplitude is negligible the largest
/// component decides.
pub fn ground_state(
    op: &SparseHermitianOperator,
    tol: f64,
    seed: u64,
    reference: usize,
) -> Result<GroundState> {
    let dim = op.dim();
    if dim == 0 {
        return Err(Error::Operator("empty basis".into()));
    }
    let defect = op.hermiticity_defect();
    if defect > 1e-10 {
        return Err(Error::Operator(format!(
            "operator is not Hermitian (defect {defect:e})"
        )));
    }
    let (energy, mut vector) = if dim <= DENSE_EIG_LIMIT {
        let dense = op.to_dense();
        let (e, v) = dense_smallest(&dense);
        // the QR sweep can leave clustered-spectrum eigenvectors with a
        // residual far above tol; inverse iteration restores it
        refine_eigenpair(&dense, e, v, tol)
    } else {
        lanczos_smallest(op, tol, seed)?
    };
    vector /= vector.norm();
    let anchor = if vector[reference].abs() > 1e-8 {
        vector[reference]
    } else {
        vector[vector.iamax()]
    };
    if anchor < 0.0 {
        vector.neg_mut();
    }
    let residual = (op.matvec(&vector) - &vector * energy).norm();
    if residual > tol {
        return Err(Error::SolverConvergence {
            iterations: 0,
            best_residual: residual,
            tol,
        });
    }
    Ok(GroundState {
        energy,
        vector,
        residual,
    })
}

fn refine_eigenpair(
    h: &DMatrix<f64>,
    mut energy: f64,
    mut vector: DVector<f64>,
    tol: f64,
) -> (f64, DVector<f64>) {
    let n = h.nrows();
    for _ in 0..8 {
        let residual = (h * &vector - &vector * energy).norm();
        if residual <= 0.1 * tol {
            break;
        }
        let shifted = h - DMatrix::identity(n, n) * energy;
        let Some(next) = shifted.full_piv_lu().solve(&vector) else {
            break;
        };
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        vector = next / norm;
        energy = vector.dot(&(h * &vector));
    }
    (energy, vector)
}

pub(crate) fn dense_smallest(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into())
}

/// Restarted Lanczos with full reorthogonalization and a deterministic
/// seeded start vector.
pub fn lanczos_smallest(
    op: &SparseHermitianOperator,
    tol: f64,
    seed: u64,
) -> Result<(f64, DVector<f64>)> {
    let dim = op.dim();
    let steps = dim.min(120);
    let max_restarts = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = DVector::from_fn(dim, |_, _| rng.gen::<f64>() - 0.5);
    start /= start.norm();
    let mut best_residual = f64::INFINITY;
    for restart in 0..max_restarts {
        let mut basis: Vec<DVector<f64>> = vec![start.clone()];
        let mut alpha = Vec::with_capacity(steps);
        let mut beta = Vec::with_capacity(steps);
        for j in 0..steps {
            let mut w = op.matvec(&basis[j]);
            let a = basis[j].dot(&w);
            alpha.push(a);
            // full reorthogonalization, twice for good measure
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&w);
                    w -= q * c;
                }
            }
            let b = w.norm();
            if b < 1e-13 || j + 1 == steps {
                beta.push(b);
                break;
            }
            beta.push(b);
            basis.push(w / b);
        }
        let m = alpha.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let (theta, s) = dense_smallest(&t);
        let mut ritz = DVector::zeros(dim);
        for (i, q) in basis.iter().enumerate() {
            ritz += q * s[i];
        }
        ritz /= ritz.norm();
        let residual = (op.matvec(&ritz) - &ritz * theta).norm();
        best_residual = best_residual.min(residual);
        if residual <= tol {
            return Ok((theta, ritz));
        }
        if restart + 1 == max_restarts {
            return Err(Error::SolverConvergence {
                iterations: max_restarts,
                best_residual,
                tol,
            });
        }
        start = ritz;
    }
    unreachable!()
}

/// One-body density matrix `γ_{pq} = <ψ| a_p* a_q |ψ>` indexed by modes.
#[derive(Debug, Clone)]
pub struct OneBodyDensityMatrix {
    pub matrix: DMatrix<f64>,
}

impl OneBodyDensityMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)]).collect()
    }

    /// Largest off-diagonal magnitude; vanishes on momentum sectors.
    pub fn off_diagonal_max(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut out = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    out = out.max(self.matrix[(i, j)].abs());
                }
            }
        }
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let eig = self.matrix.clone().symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Assemble `γ^{(1)}` of a canonical-sector state. On a fixed-momentum
/// sector the off-diagonal entries vanish identically because
/// `a_p* a_q` leaves the sector for `p != q`.
pub fn one_body_density_matrix(
    state: &GroundState,
    basis: &SectorBasis,
) -> Result<OneBodyDensityMatrix> {
    if !matches!(basis.kind(), SectorKind::Canonical { .. }) {
        return Err(Error::Operator(
            "density matrix is defined on a canonical sector".into(),
        ));
    }
    if state.vector.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            left: state.vector.len(),
            right: basis.len(),
        });
    }
    let modes = basis.mode_set().clone();
    let count = modes.len();
    let mut gamma = DMatrix::zeros(count, count);
    for p in 0..count {
        for q in 0..count {
            let mut builder = OperatorBuilder::new(basis);
            builder.add(&Monomial::new(
                1.0,
                vec![Factor::Create(p), Factor::Annihilate(q)],
            ))?;
            let m = builder.build();
            gamma[(p, q)] = state.vector.dot(&m.matvec(&state.vector));
        }
    }
    Ok(OneBodyDensityMatrix { matrix: gamma })
}

/// `<ψ, N_+^s ψ>`, exact from the occupation diagonals.
pub fn expectation_moment(vector: &DVector<f64>, basis: &SectorBasis, s: u32) -> f64 {
    assert_eq!(vector.len(), basis.len());
    (0..basis.len())
        .map(|i| {
            let n = basis.excitation_number(i) as f64;
            vector[i] * vector[i] * n.powi(s as i32)
        })
        .sum()
}

/// `Σ |eigenvalues(A - B)|` for Hermitian matrices on the same mode
/// indexing.
pub fn trace_norm_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    let diff = a - b;
    let eig = diff.symmetric_eigen();
    Ok(eig.eigenvalues.iter().map(|v| v.abs()).sum())
}

/// Residuals of the fully transformed ground state
/// `Φ = U_S U_B U_N Ψ_N`.
#[derive(Debug, Clone)]
pub struct TransformedResiduals {
    /// `<Φ, N_+ Φ>`.
    pub phi_number: f64,
    /// `‖U_N Ψ_N - U_B^T U_S^T |0>‖²` with the vacuum coefficient of
    /// `Φ` taken real nonnegative.
    pub norm_gap: f64,
    /// Squared ground-state weight beyond the excitation cutoff,
    /// dropped by the map.
    pub tail_weight: f64,
    /// Whether the tail stayed below [`TAIL_GATE`].
    pub tail_ok: bool,
}

pub fn transformed_residuals(
    state: &GroundState,
    map: &ExcitationMap,
    excitation_basis: &SectorBasis,
    u_quadratic: &Unitary,
    u_cubic: &Unitary,
) -> Result<TransformedResiduals> {
    let (mut mapped, tail_weight) = map.forward(&state.vector)?;
    let vac = excitation_basis
        .vacuum_index()
        .ok_or_else(|| Error::Operator("excitation basis lacks the vacuum".into()))?;
    let mut phi = u_cubic.apply(&u_quadratic.apply(&mapped)?)?;
    if phi[vac] < 0.0 {
        phi.neg_mut();
        mapped.neg_mut();
    }
    let phi_number = expectation_moment(&phi, excitation_basis, 1);
    let mut norm_gap = 0.0;
    for i in 0..phi.len() {
        let d = if i == vac { phi[i] - 1.0 } else { phi[i] };
        norm_gap += d * d;
    }
    Ok(TransformedResiduals {
        phi_number,
        norm_gap,
        tail_weight,
        tail_ok: tail_weight <= TAIL_GATE,
    })
}
