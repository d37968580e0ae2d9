//! Matrix exponentials: dense scaling-and-squaring with a Padé core for
//! small dimensions, and an Arnoldi (Krylov) action-only evaluator for
//! large ones.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fock::SparseHermitianOperator;

/// Above this dimension `unitary_from_generator` stops materializing the
/// dense exponential and switches to the action-only evaluator.
pub const DENSE_EXPM_LIMIT: usize = 2000;

// Padé order thresholds from the scaling-and-squaring method
// (orders 3, 5, 7, 9, 13 on the 1-norm of the scaled matrix).
const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
    (13, 5.371920351148152),
];

fn pade_coefficients(order: usize) -> Vec<f64> {
    match order {
        3 => vec![120.0, 60.0, 12.0, 1.0],
        5 => vec![30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => vec![
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => vec![
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => vec![
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!(),
    }
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_approximant(a: &DMatrix<f64>, order: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let b = pade_coefficients(order);
    let identity = DMatrix::identity(n, n);
    let a2 = a * a;
    let (u, v) = if order < 13 {
        // U = A Σ b_{2k+1} A^{2k},  V = Σ b_{2k} A^{2k}
        let mut term = identity.clone();
        let mut u_sum = DMatrix::zeros(n, n);
        let mut v_sum = DMatrix::zeros(n, n);
        for k in 0..=(order / 2) {
            u_sum += &term * b[2 * k + 1];
            v_sum += &term * b[2 * k];
            if k < order / 2 {
                term = &term * &a2;
            }
        }
        (a * u_sum, v_sum)
    } else {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
            + &a6 * b[7]
            + &a4 * b[5]
            + &a2 * b[3]
            + &identity * b[1];
        let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
            + &a6 * b[6]
            + &a4 * b[4]
            + &a2 * b[2]
            + &identity * b[0];
        (a * u_inner, v)
    };
    let lhs = &v - &u;
    let rhs = &v + &u;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Expm("singular Padé denominator".into()))
}

/// Dense `exp(A)` for a general real square matrix.
pub fn expm_dense(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert_eq!(a.nrows(), a.ncols(), "exponential of a square matrix");
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::Expm("matrix norm is not finite".into()));
    }
    for (order, theta) in THETA.iter().take(4) {
        if norm <= *theta {
            return pade_approximant(a, *order);
        }
    }
    let theta13 = THETA[4].1;
    let scaling = if norm > theta13 {
        (norm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(scaling);
    let mut result = pade_approximant(&scaled, 13)?;
    for _ in 0..scaling {
        result = &result * &result;
    }
    Ok(result)
}

/// `exp(A) v` through an Arnoldi projection, without forming `exp(A)`.
///
/// Grows the Krylov space until the standard residual estimate
/// `‖v‖ h_{m+1,m} |[exp(H_m)]_{m,1}|` drops below `tol`, splitting the
/// propagation into substeps when the space hits its size limit.
pub fn expm_action(op: &SparseHermitianOperator, v: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    if v.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            left: v.len(),
            right: op.dim(),
        });
    }
    let mut current = v.clone();
    let mut remaining = 1.0f64;
    let mut steps = 0;
    while remaining > 0.0 {
        steps += 1;
        if steps > 64 {
            return Err(Error::Expm(format!(
                "Krylov propagation did not reach tolerance {tol:e}"
            )));
        }
        let (next, advanced) = krylov_substep(op, &current, remaining, tol)?;
        current = next;
        remaining -= advanced;
    }
    Ok(current)
}

fn krylov_substep(
    op: &SparseHermitianOperator,
    v: &DVector<f64>,
    t: f64,
    tol: f64,
) -> Result<(DVector<f64>, f64)> {
    let dim = op.dim();
    let beta = v.norm();
    if beta == 0.0 {
        return Ok((v.clone(), t));
    }
    let m_max = dim.min(60);
    let mut basis: Vec<DVector<f64>> = vec![v / beta];
    let mut h = DMatrix::<f64>::zeros(m_max + 1, m_max);
    let mut m_used = m_max;
    let mut breakdown = false;
    for j in 0..m_max {
        let mut w = op.matvec(&basis[j]);
        // modified Gram-Schmidt with one reorthogonalization pass
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = q.dot(&w);
                h[(i, j)] += c;
                w -= q * c;
            }
        }
        let nrm = w.norm();
        h[(j + 1, j)] = nrm;
        if nrm < 1e-14 {
            m_used = j + 1;
            breakdown = true;
            break;
        }
        basis.push(w / nrm);
        // check convergence every few vectors to amortize the small expm
        let m = j + 1;
        if m >= 4 && (m % 4 == 0 || m == m_max) {
            let hm = h.view((0, 0), (m, m)).into_owned() * t;
            let em = expm_dense(&hm)?;
            let err = beta * h[(m, m - 1)].abs() * t * em[(m - 1, 0)].abs();
            if err <= tol {
                m_used = m;
                break;
            }
        }
        m_used = m + 1;
    }
    let m = m_used.min(basis.len());
    let hm = h.view((0, 0), (m, m)).into_owned() * t;
    let em = expm_dense(&hm)?;
    let err = if breakdown || m == dim {
        0.0
    } else {
        beta * h[(m, m - 1)].abs() * t * em[(m - 1, 0)].abs()
    };
    let step = if err <= tol { t } else { t * 0.5 };
    let hm_step = h.view((0, 0), (m, m)).into_owned() * step;
    let em_step = expm_dense(&hm_step)?;
    let mut out = DVector::zeros(dim);
    for (i, q) in basis.iter().take(m).enumerate() {
        out += q * (beta * em_step[(i, 0)]);
    }
    Ok((out, step))
}

/// Unitary realized either as a dense orthogonal matrix or as an
/// action-only Krylov propagator over its generator.
#[derive(Debug, Clone)]
pub enum Unitary {
    Dense(DMatrix<f64>),
    Action {
        generator: SparseHermitianOperator,
        tol: f64,
    },
}

impl Unitary {
    pub fn identity(dim: usize) -> Self {
        Unitary::Dense(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            Unitary::Dense(m) => m.nrows(),
            Unitary::Action { generator, .. } => generator.dim(),
        }
    }

    /// `U v`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Unitary::Dense(m) => {
                if v.len() != m.ncols() {
                    return Err(Error::DimensionMismatch {
                        left: v.len(),
                        right: m.ncols(),
                    });
                }
                Ok(m * v)
            }
            Unitary::Action { generator, tol } => expm_action(generator, v, *tol),
        }
    }

    /// `U^T v = U^{-1} v` (the generator is anti-Hermitian, so the
    /// inverse is the exponential of the negated generator).
    pub fn apply_inverse(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Unitary::Dense(m) => {
                if v.len() != m.nrows() {
                    return Err(Error::DimensionMismatch {
                        left: v.len(),
                        right: m.nrows(),
                    });
                }
                Ok(m.transpose() * v)
            }
            Unitary::Action { generator, tol } => expm_action(&generator.scale(-1.0), v, *tol),
        }
    }

    pub fn dense(&self) -> Option<&DMatrix<f64>> {
        match self {
            Unitary::Dense(m) => Some(m),
            Unitary::Action { .. } => None,
        }
    }

    /// `max |U^T U - I|`; for the action variant the product is probed
    /// column by column, so this is only used on small dimensions.
    pub fn unitarity_defect(&self) -> Result<f64> {
        match self {
            Unitary::Dense(m) => {
                let p = m.transpose() * m;
                let n = p.nrows();
                Ok((p - DMatrix::identity(n, n)).abs().max())
            }
            Unitary::Action { generator, tol } => {
                let n = generator.dim();
                let mut defect = 0.0f64;
                for j in 0..n {
                    let mut e = DVector::zeros(n);
                    e[j] = 1.0;
                    let u = expm_action(generator, &e, *tol)?;
                    let back = expm_action(&generator.scale(-1.0), &u, *tol)?;
                    for i in 0..n {
                        let expected = if i == j { 1.0 } else { 0.0 };
                        defect = defect.max((back[i] - expected).abs());
                    }
                }
                Ok(defect)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn sparse_from_dense(m: &DMatrix<f64>) -> SparseHermitianOperator {
        let mut map = BTreeMap::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    map.insert((r, c), m[(r, c)]);
                }
            }
        }
        SparseHermitianOperator::from_triplets(m.nrows(), map)
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = DMatrix::zeros(4, 4);
        let e = expm_dense(&z).unwrap();
        assert!((e - DMatrix::identity(4, 4)).abs().max() < 1e-15);
    }

    #[test]
    fn rotation_block() {
        // antisymmetric [[0,-t],[t,0]] exponentiates to a rotation
        for t in [1e-3, 0.3, 2.0, 11.0] {
            let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
            let e = expm_dense(&a).unwrap();
            assert_abs_diff_eq!(e[(0, 0)], t.cos(), epsilon = 1e-13);
            assert_abs_diff_eq!(e[(1, 0)], t.sin(), epsilon = 1e-13);
            assert_abs_diff_eq!(e[(0, 1)], -t.sin(), epsilon = 1e-13);
        }
    }

    #[test]
    fn hyperbolic_block() {
        // symmetric off-diagonal [[0,t],[t,0]] gives cosh/sinh mixing
        let t = 0.7;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, t, t, 0.0]);
        let e = expm_dense(&a).unwrap();
        assert_abs_diff_eq!(e[(0, 0)], t.cosh(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(0, 1)], t.sinh(), epsilon = 1e-14);
    }

    #[test]
    fn krylov_action_matches_dense() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 60;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                if rng.gen::<f64>() < 0.15 {
                    let v = rng.gen::<f64>() - 0.5;
                    a[(i, j)] = v;
                    a[(j, i)] = -v;
                }
            }
        }
        let sp = sparse_from_dense(&a);
        let dense = expm_dense(&a).unwrap();
        let v = DVector::from_fn(n, |i, _| ((i + 1) as f64).sin());
        let via_dense = &dense * &v;
        let via_krylov = expm_action(&sp, &v, 1e-12).unwrap();
        assert!((via_dense - via_krylov).norm() < 1e-10);
    }

    #[test]
    fn action_variant_beyond_dense_limit() {
        // a single rotation plane embedded in a large sparse generator:
        // the exponential is known in closed form
        let dim = DENSE_EXPM_LIMIT + 1;
        let theta = 0.8;
        let mut map = BTreeMap::new();
        map.insert((0, 1), -theta);
        map.insert((1, 0), theta);
        let gen = SparseHermitianOperator::from_triplets(dim, map);
        let u = crate::operators::unitary_from_generator(&gen, 1e-12).unwrap();
        assert!(u.dense().is_none());
        let mut v = DVector::zeros(dim);
        v[0] = 1.0;
        v[dim - 1] = 2.0;
        let w = u.apply(&v).unwrap();
        assert_abs_diff_eq!(w[0], theta.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], theta.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(w[dim - 1], 2.0, epsilon = 1e-12);
        let back = u.apply_inverse(&w).unwrap();
        assert!((back - v).norm() < 1e-11);
    }

    #[test]
    fn krylov_inverse_round_trip() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -0.4, 0.1, 0.4, 0.0, -0.2, -0.1, 0.2, 0.0]);
        let sp = sparse_from_dense(&a);
        let u = Unitary::Action {
            generator: sp,
            tol: 1e-13,
        };
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let w = u.apply(&v).unwrap();
        let back = u.apply_inverse(&w).unwrap();
        assert!((back - v).norm() < 1e-11);
        assert!(u.unitarity_defect().unwrap() < 1e-10);
    }
}
