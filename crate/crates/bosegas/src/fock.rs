//! Occupation-number bases of momentum-conserving particle sectors and
//! exact second-quantized matrix elements on them.
//!
//! A [`SectorBasis`] enumerates occupation vectors either over all modes
//! with fixed total particle number (canonical sector) or over the
//! nonzero modes with bounded total occupation (excitation sector),
//! optionally restricted to a fixed total momentum. Operators are
//! assembled monomial by monomial with the standard amplitudes
//! `a_p |..n_p..> = √n_p |..n_p-1..>` and
//! `a_p* |..n_p..> = √(n_p+1) |..n_p+1..>`; a final state outside the
//! sector is dropped, which realizes the projected operator `P·Op·P`
//! and keeps Hermitian generators exactly Hermitian under truncation.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ModeSet;

/// Occupation vector over the active modes of a basis.
pub type Occupation = Vec<u32>;

/// Which sector a basis enumerates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SectorKind {
    /// All modes, fixed total particle number `N`.
    Canonical { n_particles: usize },
    /// Nonzero modes only, total occupation `<= cutoff`; contains the vacuum.
    Excitation { cutoff: usize },
}

/// Deterministically ordered occupation basis of one sector.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    mode_set: Arc<ModeSet>,
    kind: SectorKind,
    /// `None` enumerates every total momentum (full-space cross-checks).
    total_momentum: Option<Vec<i64>>,
    /// Global mode indices carrying occupations, in mode-set order.
    active: Vec<usize>,
    active_of_global: Vec<Option<usize>>,
    states: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
}

impl SectorBasis {
    /// Canonical `N`-particle sector. `total_momentum = Some(&[0,..])`
    /// restricts to that momentum; `None` enumerates the full space.
    pub fn canonical(
        mode_set: Arc<ModeSet>,
        n_particles: usize,
        total_momentum: Option<&[i64]>,
    ) -> Self {
        let active: Vec<usize> = (0..mode_set.len()).collect();
        Self::enumerate(
            mode_set,
            SectorKind::Canonical { n_particles },
            total_momentum,
            active,
        )
    }

    /// Excitation sector with `Σ n_p <= cutoff` over the nonzero modes.
    pub fn excitation(
        mode_set: Arc<ModeSet>,
        cutoff: usize,
        total_momentum: Option<&[i64]>,
    ) -> Self {
        let active: Vec<usize> = mode_set.nonzero_modes().collect();
        Self::enumerate(
            mode_set,
            SectorKind::Excitation { cutoff },
            total_momentum,
            active,
        )
    }

    /// Zero-momentum shorthand used throughout the ground-state work.
    pub fn canonical_zero_momentum(mode_set: Arc<ModeSet>, n_particles: usize) -> Self {
        let zero = vec![0i64; mode_set.dimension()];
        Self::canonical(mode_set, n_particles, Some(&zero))
    }

    pub fn excitation_zero_momentum(mode_set: Arc<ModeSet>, cutoff: usize) -> Self {
        let zero = vec![0i64; mode_set.dimension()];
        Self::excitation(mode_set, cutoff, Some(&zero))
    }

    fn enumerate(
        mode_set: Arc<ModeSet>,
        kind: SectorKind,
        total_momentum: Option<&[i64]>,
        active: Vec<usize>,
    ) -> Self {
        let dimension = mode_set.dimension();
        let target = total_momentum.map(|m| m.to_vec());
        let (budget, exact) = match kind {
            SectorKind::Canonical { n_particles } => (n_particles, true),
            SectorKind::Excitation { cutoff } => (cutoff, false),
        };
        let mut states: Vec<Occupation> = Vec::new();
        let mut occ: Occupation = vec![0; active.len()];
        let mut momentum = vec![0i64; dimension];
        #[allow(clippy::too_many_arguments)]
        fn rec(
            mode_set: &ModeSet,
            active: &[usize],
            slot: usize,
            left: usize,
            exact: bool,
            occ: &mut Occupation,
            momentum: &mut Vec<i64>,
            target: &Option<Vec<i64>>,
            states: &mut Vec<Occupation>,
        ) {
            if slot == active.len() {
                if (!exact || left == 0) && target.as_ref().is_none_or(|t| momentum == t) {
                    states.push(occ.clone());
                }
                return;
            }
            let label = mode_set.label(active[slot]);
            for k in 0..=left {
                if k > 0 {
                    // incremental momentum update keeps the loop cheap
                    for (m, &l) in momentum.iter_mut().zip(label.iter()) {
                        *m += l;
                    }
                }
                occ[slot] = k as u32;
                rec(
                    mode_set,
                    active,
                    slot + 1,
                    left - k,
                    exact,
                    occ,
                    momentum,
                    target,
                    states,
                );
            }
            for (m, &l) in momentum.iter_mut().zip(label.iter()) {
                *m -= l * left as i64;
            }
            occ[slot] = 0;
        }
        rec(
            &mode_set,
            &active,
            0,
            budget,
            exact,
            &mut occ,
            &mut momentum,
            &target,
            &mut states,
        );
        states.sort();
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let mut active_of_global = vec![None; mode_set.len()];
        for (a, &g) in active.iter().enumerate() {
            active_of_global[g] = Some(a);
        }
        SectorBasis {
            mode_set,
            kind,
            total_momentum: target,
            active,
            active_of_global,
            states,
            index,
        }
    }

    pub fn mode_set(&self) -> &Arc<ModeSet> {
        &self.mode_set
    }

    pub fn kind(&self) -> &SectorKind {
        &self.kind
    }

    pub fn total_momentum(&self) -> Option<&[i64]> {
        self.total_momentum.as_deref()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &Occupation {
        &self.states[i]
    }

    pub fn states(&self) -> &[Occupation] {
        &self.states
    }

    pub fn index_of(&self, occ: &Occupation) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Global mode indices carrying occupations.
    pub fn active_modes(&self) -> &[usize] {
        &self.active
    }

    /// Position of the all-zero state (excitation sectors).
    pub fn vacuum_index(&self) -> Option<usize> {
        self.index.get(&vec![0u32; self.active.len()]).copied()
    }

    /// Position of the pure condensate state (canonical sectors).
    pub fn condensate_index(&self) -> Option<usize> {
        match self.kind {
            SectorKind::Canonical { n_particles } => {
                let slot = self.active_of_global[self.mode_set.zero_index()]?;
                let mut occ = vec![0u32; self.active.len()];
                occ[slot] = n_particles as u32;
                self.index_of(&occ)
            }
            SectorKind::Excitation { .. } => None,
        }
    }

    /// Number of excited particles of state `i` (occupation outside the
    /// zero mode).
    pub fn excitation_number(&self, i: usize) -> u32 {
        self.excitation_number_of(&self.states[i])
    }

    fn excitation_number_of(&self, occ: &Occupation) -> u32 {
        match self.kind {
            SectorKind::Excitation { .. } => occ.iter().sum(),
            SectorKind::Canonical { .. } => {
                let zero_slot = self.active_of_global[self.mode_set.zero_index()].unwrap();
                occ.iter().sum::<u32>() - occ[zero_slot]
            }
        }
    }

    pub fn particle_count(&self, i: usize) -> u32 {
        self.states[i].iter().sum()
    }

    /// Total momentum label `Σ n_p · label(p)` of state `i`.
    pub fn momentum_label(&self, i: usize) -> Vec<i64> {
        let mut out = vec![0i64; self.mode_set.dimension()];
        for (slot, &g) in self.active.iter().enumerate() {
            let n = self.states[i][slot] as i64;
            for (o, &l) in out.iter_mut().zip(self.mode_set.label(g).iter()) {
                *o += n * l;
            }
        }
        out
    }
}

/// Weight functions of the excited-particle number that multiply a
/// monomial at a definite position in the operator product.
pub type NumberWeight = Arc<dyn Fn(u32) -> f64 + Send + Sync>;

/// One factor of a normal- or non-normal-ordered operator monomial.
/// Mode indices are global (into the [`ModeSet`]).
#[derive(Clone)]
pub enum Factor {
    Create(usize),
    Annihilate(usize),
    /// Multiply by `f(N_+)` evaluated on the state the factor acts on.
    Weight(NumberWeight),
}

impl std::fmt::Debug for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Factor::Create(m) => write!(f, "a*({m})"),
            Factor::Annihilate(m) => write!(f, "a({m})"),
            Factor::Weight(_) => write!(f, "f(N+)"),
        }
    }
}

/// A scalar coefficient times an ordered product of factors, written in
/// operator order (leftmost factor acts last).
#[derive(Clone, Debug)]
pub struct Monomial {
    pub coefficient: f64,
    pub factors: Vec<Factor>,
}

impl Monomial {
    pub fn new(coefficient: f64, factors: Vec<Factor>) -> Self {
        Monomial {
            coefficient,
            factors,
        }
    }

    /// Hermitian conjugate: reversed factor order with `a ↔ a*`;
    /// number weights are real and stay in place.
    pub fn adjoint(&self) -> Monomial {
        let factors = self
            .factors
            .iter()
            .rev()
            .map(|f| match f {
                Factor::Create(m) => Factor::Annihilate(*m),
                Factor::Annihilate(m) => Factor::Create(*m),
                Factor::Weight(w) => Factor::Weight(w.clone()),
            })
            .collect();
        Monomial::new(self.coefficient, factors)
    }

    /// Net momentum label added by the monomial (creations minus
    /// annihilations); zero for momentum-conserving terms.
    pub fn momentum_transfer(&self, mode_set: &ModeSet) -> Vec<i64> {
        let mut out = vec![0i64; mode_set.dimension()];
        for f in &self.factors {
            let (sign, m) = match f {
                Factor::Create(m) => (1i64, *m),
                Factor::Annihilate(m) => (-1i64, *m),
                Factor::Weight(_) => continue,
            };
            for (o, &l) in out.iter_mut().zip(mode_set.label(m).iter()) {
                *o += sign * l;
            }
        }
        out
    }
}

/// Exact matrix elements of one monomial in a sector basis, as sparse
/// `(row, col, value)` entries. Final states outside the sector are
/// dropped (projection semantics); intermediate states are tracked as
/// plain occupation vectors and never need to belong to the sector.
pub fn matrix_element_monomial(
    basis: &SectorBasis,
    monomial: &Monomial,
) -> Result<Vec<(usize, usize, f64)>> {
    let mut map = BTreeMap::new();
    accumulate_monomial(basis, monomial, &mut map)?;
    Ok(map.into_iter().map(|((r, c), v)| (r, c, v)).collect())
}

pub(crate) fn accumulate_monomial(
    basis: &SectorBasis,
    monomial: &Monomial,
    into: &mut BTreeMap<(usize, usize), f64>,
) -> Result<()> {
    // translate global mode indices once
    let mut slots = Vec::with_capacity(monomial.factors.len());
    for f in &monomial.factors {
        let slot = match f {
            Factor::Create(m) | Factor::Annihilate(m) => {
                if *m >= basis.mode_set.len() {
                    return Err(Error::ModeOutOfSet(vec![*m as i64]));
                }
                basis.active_of_global[*m].ok_or_else(|| {
                    Error::Operator(format!(
                        "mode {:?} does not act on this sector",
                        basis.mode_set.label(*m)
                    ))
                })?
            }
            Factor::Weight(_) => usize::MAX,
        };
        slots.push(slot);
    }
    if monomial.coefficient == 0.0 {
        return Ok(());
    }
    let mut occ: Occupation = Vec::new();
    for (col, state) in basis.states.iter().enumerate() {
        occ.clear();
        occ.extend_from_slice(state);
        let mut amp = monomial.coefficient;
        let mut dead = false;
        for (f, &slot) in monomial.factors.iter().zip(slots.iter()).rev() {
            match f {
                Factor::Annihilate(_) => {
                    let n = occ[slot];
                    if n == 0 {
                        dead = true;
                        break;
                    }
                    amp *= (n as f64).sqrt();
                    occ[slot] = n - 1;
                }
                Factor::Create(_) => {
                    let n = occ[slot];
                    amp *= (n as f64 + 1.0).sqrt();
                    occ[slot] = n + 1;
                }
                Factor::Weight(w) => {
                    amp *= w(basis.excitation_number_of(&occ));
                    if amp == 0.0 {
                        dead = true;
                        break;
                    }
                }
            }
        }
        if dead {
            continue;
        }
        if let Some(row) = basis.index.get(&occ) {
            *into.entry((*row, col)).or_insert(0.0) += amp;
        }
    }
    Ok(())
}

/// Real sparse operator on a sector basis in CSR layout.
///
/// The name records the dominant use: Hermitian Hamiltonians and
/// anti-Hermitian unitary generators. `hermiticity_defect` /
/// `antisymmetry_defect` measure how well either property holds.
#[derive(Debug, Clone)]
pub struct SparseHermitianOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseHermitianOperator {
    pub fn from_triplets(dim: usize, triplets: BTreeMap<(usize, usize), f64>) -> Self {
        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _) in triplets.keys() {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        // BTreeMap iterates row-major, matching CSR order
        for ((_, c), v) in triplets {
            col_idx.push(c);
            values.push(v);
        }
        SparseHermitianOperator {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_triplets(dim, BTreeMap::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim);
        let mut out = DVector::zeros(self.dim);
        for r in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * v[self.col_idx[k]];
            }
            out[r] = acc;
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.col_idx[k] == c {
                return self.values[k];
            }
        }
        0.0
    }

    /// `max |A - A^T|` over entries.
    pub fn hermiticity_defect(&self) -> f64 {
        self.entries()
            .map(|(r, c, v)| (v - self.entry(c, r)).abs())
            .fold(0.0, f64::max)
    }

    /// `max |A + A^T|` over entries.
    pub fn antisymmetry_defect(&self) -> f64 {
        self.entries()
            .map(|(r, c, v)| (v + self.entry(c, r)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest entry connecting states of different total momentum;
    /// exactly zero for momentum-conserving recipes.
    pub fn momentum_defect(&self, basis: &SectorBasis) -> f64 {
        self.entries()
            .filter(|&(r, c, _)| basis.momentum_label(r) != basis.momentum_label(c))
            .map(|(_, _, v)| v.abs())
            .fold(0.0, f64::max)
    }
}

/// Assembles a sum of monomials into one sparse operator.
pub struct OperatorBuilder<'a> {
    basis: &'a SectorBasis,
    map: BTreeMap<(usize, usize), f64>,
}

impl<'a> OperatorBuilder<'a> {
    pub fn new(basis: &'a SectorBasis) -> Self {
        OperatorBuilder {
            basis,
            map: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, monomial: &Monomial) -> Result<&mut Self> {
        accumulate_monomial(self.basis, monomial, &mut self.map)?;
        Ok(self)
    }

    /// Add `m + m†`.
    pub fn add_with_adjoint(&mut self, monomial: &Monomial) -> Result<&mut Self> {
        self.add(monomial)?;
        self.add(&monomial.adjoint())
    }

    /// Add a diagonal in some function of the excited-particle number.
    pub fn add_number_diagonal(&mut self, f: impl Fn(u32) -> f64) -> &mut Self {
        for i in 0..self.basis.len() {
            let v = f(self.basis.excitation_number(i));
            if v != 0.0 {
                *self.map.entry((i, i)).or_insert(0.0) += v;
            }
        }
        self
    }

    pub fn build(self) -> SparseHermitianOperator {
        let mut map = self.map;
        map.retain(|_, v| *v != 0.0);
        SparseHermitianOperator::from_triplets(self.basis.len(), map)
    }
}

/// The occupation-coordinate bijection between the canonical
/// `N`-particle sector and the excitation sector: it strips the
/// zero-mode count on the way in and restores `n_0 = N - Σ n_p` on the
/// way out. Amplitudes are carried unchanged.
pub struct ExcitationMap {
    n_particles: usize,
    cutoff: usize,
    /// canonical state index -> excitation state index, `None` when the
    /// excitation number exceeds the cutoff.
    forward_index: Vec<Option<usize>>,
    canonical_dim: usize,
    excitation_dim: usize,
    backward_index: Vec<Option<usize>>,
}

impl ExcitationMap {
    pub fn new(canonical: &SectorBasis, excitation: &SectorBasis) -> Result<Self> {
        let n_particles = match canonical.kind() {
            SectorKind::Canonical { n_particles } => *n_particles,
            _ => return Err(Error::Operator("source basis must be canonical".into())),
        };
        let cutoff = match excitation.kind() {
            SectorKind::Excitation { cutoff } => *cutoff,
            _ => return Err(Error::Operator("target basis must be excitation".into())),
        };
        if !Arc::ptr_eq(canonical.mode_set(), excitation.mode_set())
            && canonical.mode_set().len() != excitation.mode_set().len()
        {
            return Err(Error::Operator("mode sets differ".into()));
        }
        if canonical.total_momentum() != excitation.total_momentum() {
            return Err(Error::Operator(
                "momentum restrictions of the two bases differ".into(),
            ));
        }
        let zero_slot = canonical.active_modes()
            .iter()
            .position(|&g| g == canonical.mode_set().zero_index())
            .expect("canonical basis carries the zero mode");
        let mut forward_index = Vec::with_capacity(canonical.len());
        for i in 0..canonical.len() {
            let occ = canonical.state(i);
            let stripped: Occupation = occ
                .iter()
                .enumerate()
                .filter(|&(s, _)| s != zero_slot)
                .map(|(_, &n)| n)
                .collect();
            forward_index.push(excitation.index_of(&stripped));
        }
        let mut backward_index = vec![None; excitation.len()];
        for (c, e) in forward_index.iter().enumerate() {
            if let Some(e) = e {
                backward_index[*e] = Some(c);
            }
        }
        Ok(ExcitationMap {
            n_particles,
            cutoff,
            forward_index,
            canonical_dim: canonical.len(),
            excitation_dim: excitation.len(),
            backward_index,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Map a canonical-sector vector into excitation coordinates.
    /// Returns the mapped vector and the squared weight dropped because
    /// the source excitation number exceeded the cutoff `M`.
    pub fn forward(&self, v: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if v.len() != self.canonical_dim {
            return Err(Error::DimensionMismatch {
                left: v.len(),
                right: self.canonical_dim,
            });
        }
        let mut out = DVector::zeros(self.excitation_dim);
        let mut tail = 0.0;
        for (i, target) in self.forward_index.iter().enumerate() {
            match target {
                Some(j) => out[*j] = v[i],
                None => tail += v[i] * v[i],
            }
        }
        Ok((out, tail))
    }

    /// Inverse map; excitation states with more than `N` particles have
    /// no preimage, their squared weight is returned as the tail.
    pub fn backward(&self, v: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if v.len() != self.excitation_dim {
            return Err(Error::DimensionMismatch {
                left: v.len(),
                right: self.excitation_dim,
            });
        }
        let mut out = DVector::zeros(self.canonical_dim);
        let mut tail = 0.0;
        for (j, source) in self.backward_index.iter().enumerate() {
            match source {
                Some(i) => out[*i] = v[j],
                None => tail += v[j] * v[j],
            }
        }
        Ok((out, tail))
    }

    /// Conjugate a canonical-sector operator by the bijection. Requires
    /// `cutoff >= N` so the map is injective on the whole sector.
    pub fn conjugate_forward(&self, op: &SparseHermitianOperator) -> Result<SparseHermitianOperator> {
        if op.dim() != self.canonical_dim {
            return Err(Error::DimensionMismatch {
                left: op.dim(),
                right: self.canonical_dim,
            });
        }
        if self.cutoff < self.n_particles {
            return Err(Error::Operator(
                "conjugation by the excitation map needs cutoff >= N".into(),
            ));
        }
        let mut map = BTreeMap::new();
        for (r, c, v) in op.entries() {
            let (Some(r2), Some(c2)) = (self.forward_index[r], self.forward_index[c]) else {
                continue;
            };
            *map.entry((r2, c2)).or_insert(0.0) += v;
        }
        Ok(SparseHermitianOperator::from_triplets(
            self.excitation_dim,
            map,
        ))
    }
}
