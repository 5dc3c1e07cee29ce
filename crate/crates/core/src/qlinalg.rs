//! Sparse complex state vectors over named-register basis spaces, linear
//! operators, density matrices, partial trace, and trace distance.
//!
//! States live in a composite Hilbert space described by a
//! [`RegisterLayout`]: an ordered list of named registers with given
//! cardinalities.  A basis index is the mixed-radix composite of the
//! per-register indices, with the *first* register most significant.
//! Amplitudes are stored sparsely; entries whose magnitude falls below
//! [`AMPLITUDE_DROP_THRESHOLD`] are removed so that exact cancellations do
//! not bloat supports.
//!
//! Operators are closures `SparseState -> SparseState` bundled with their
//! adjoint, so that exponentially large spaces never require materialized
//! matrices; dense matrices are built on demand only for small dimensions
//! (eigendecompositions, trace norms).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use std::collections::HashMap;
use std::sync::Arc;

use crate::{Error, Result};

/// Amplitudes with magnitude below this are dropped from sparse states.
/// Far below every test tolerance, but large enough to clear exact-zero
/// cancellations produced by involutions and projector complements.
pub const AMPLITUDE_DROP_THRESHOLD: f64 = 1e-14;

/// Dimensions up to this use exact eigendecomposition for operator norms;
/// larger spaces fall back to power iteration.
pub const EXACT_NORM_DIM_CAP: usize = 512;

/// Power-iteration budget for operator-norm estimation.
const POWER_ITERATIONS: usize = 200;
/// Relative tolerance for early exit of the power iteration.
const POWER_REL_TOL: f64 = 1e-8;

/// Hermiticity tolerance for density-matrix-like inputs.
const HERMITIAN_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// RegisterLayout
// ---------------------------------------------------------------------------

/// An ordered list of named registers; basis index = mixed-radix composite
/// of per-register indices (first register most significant).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    names: Vec<String>,
    cards: Vec<usize>,
    strides: Vec<usize>,
    dim: usize,
}

impl RegisterLayout {
    /// Build a layout from `(name, cardinality)` pairs.
    ///
    /// Errors on duplicate names or zero cardinalities.
    pub fn new(registers: &[(&str, usize)]) -> Result<Self> {
        let mut names = Vec::with_capacity(registers.len());
        let mut cards = Vec::with_capacity(registers.len());
        for &(name, card) in registers {
            if card == 0 {
                return Err(Error::InvalidArgument(format!(
                    "register `{name}` has cardinality 0"
                )));
            }
            if names.iter().any(|n| n == name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate register name `{name}`"
                )));
            }
            names.push(name.to_string());
            cards.push(card);
        }
        let mut strides = vec![1usize; cards.len()];
        for i in (0..cards.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * cards[i + 1];
        }
        let dim = cards.iter().product::<usize>().max(1);
        Ok(Self {
            names,
            cards,
            strides,
            dim,
        })
    }

    /// Total dimension (product of cardinalities).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of registers.
    pub fn num_registers(&self) -> usize {
        self.names.len()
    }

    /// Position of a register by name.
    pub fn position(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownRegister(name.to_string()))
    }

    /// Cardinality of the register at `pos`.
    pub fn cardinality(&self, pos: usize) -> usize {
        self.cards[pos]
    }

    /// Register names in order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    /// Compose per-register values into a basis index.
    pub fn encode(&self, values: &[usize]) -> usize {
        debug_assert_eq!(values.len(), self.cards.len());
        values
            .iter()
            .zip(&self.strides)
            .zip(&self.cards)
            .map(|((&v, &s), &c)| {
                debug_assert!(v < c);
                v * s
            })
            .sum()
    }

    /// Decompose a basis index into per-register values.
    pub fn decode(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.dim);
        self.strides
            .iter()
            .zip(&self.cards)
            .map(|(&s, &c)| (index / s) % c)
            .collect()
    }

    /// Value of the register at `pos` within a basis index.
    pub fn value_at(&self, index: usize, pos: usize) -> usize {
        (index / self.strides[pos]) % self.cards[pos]
    }

    /// Replace the value of the register at `pos` within a basis index.
    pub fn with_value(&self, index: usize, pos: usize, value: usize) -> usize {
        debug_assert!(value < self.cards[pos]);
        self.with_value_signed(index, pos, value)
    }
}

impl RegisterLayout {
    fn with_value_signed(&self, index: usize, pos: usize, value: usize) -> usize {
        let old = self.value_at(index, pos);
        (index as isize + (value as isize - old as isize) * self.strides[pos] as isize) as usize
    }
}

// ---------------------------------------------------------------------------
// SparseState
// ---------------------------------------------------------------------------

/// A sparse complex amplitude vector over a [`RegisterLayout`] basis.
#[derive(Clone, Debug)]
pub struct SparseState {
    layout: Arc<RegisterLayout>,
    amps: HashMap<usize, Complex64>,
}

impl SparseState {
    /// The zero vector.
    pub fn zero(layout: Arc<RegisterLayout>) -> Self {
        Self {
            layout,
            amps: HashMap::new(),
        }
    }

    /// A computational basis state |index⟩.
    pub fn basis(layout: Arc<RegisterLayout>, index: usize) -> Self {
        assert!(index < layout.dim(), "basis index out of range");
        let mut amps = HashMap::new();
        amps.insert(index, Complex64::new(1.0, 0.0));
        Self { layout, amps }
    }

    /// A basis state given per-register values.
    pub fn basis_from(layout: Arc<RegisterLayout>, values: &[usize]) -> Self {
        let idx = layout.encode(values);
        Self::basis(layout, idx)
    }

    /// Build from `(index, amplitude)` pairs (amplitudes summed on
    /// collision, then pruned).
    pub fn from_terms<I: IntoIterator<Item = (usize, Complex64)>>(
        layout: Arc<RegisterLayout>,
        terms: I,
    ) -> Self {
        let mut st = Self::zero(layout);
        for (idx, amp) in terms {
            st.add_term(idx, amp);
        }
        st.prune();
        st
    }

    pub fn layout(&self) -> &Arc<RegisterLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Amplitude at a basis index (zero if absent).
    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps
            .get(&index)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Number of stored (nonzero) terms.
    pub fn num_terms(&self) -> usize {
        self.amps.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.amps.iter().map(|(&i, &a)| (i, a))
    }

    /// Add `amp` to the term at `index` (no pruning).
    pub fn add_term(&mut self, index: usize, amp: Complex64) {
        debug_assert!(index < self.layout.dim());
        *self.amps.entry(index).or_insert(Complex64::new(0.0, 0.0)) += amp;
    }

    /// Remove terms below [`AMPLITUDE_DROP_THRESHOLD`].
    pub fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() > AMPLITUDE_DROP_THRESHOLD);
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨self|other⟩ (conjugate-linear in `self`).
    pub fn dot(&self, other: &SparseState) -> Complex64 {
        assert_eq!(self.dim(), other.dim(), "dot on mismatched dimensions");
        let (small, big, conj_small) = if self.amps.len() <= other.amps.len() {
            (&self.amps, &other.amps, true)
        } else {
            (&other.amps, &self.amps, false)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (&i, &a) in small {
            if let Some(&b) = big.get(&i) {
                acc += if conj_small { a.conj() * b } else { b.conj() * a };
            }
        }
        acc
    }

    /// self += c·other.
    pub fn add_scaled(&mut self, other: &SparseState, c: Complex64) {
        assert_eq!(self.dim(), other.dim());
        for (&i, &a) in &other.amps {
            self.add_term(i, c * a);
        }
    }

    /// Scale in place.
    pub fn scale(&mut self, c: Complex64) {
        for a in self.amps.values_mut() {
            *a *= c;
        }
    }

    /// Normalized copy (panics on zero vector).
    pub fn normalized(&self) -> SparseState {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize the zero vector");
        let mut st = self.clone();
        st.scale(Complex64::new(1.0 / n, 0.0));
        st
    }

    /// Dense column-vector view (small dimensions only).
    pub fn to_dense(&self) -> DVector<Complex64> {
        let mut v = DVector::from_element(self.dim(), Complex64::new(0.0, 0.0));
        for (&i, &a) in &self.amps {
            v[i] = a;
        }
        v
    }
}

// ---------------------------------------------------------------------------
// LinearOp
// ---------------------------------------------------------------------------

type ApplyFn = Arc<dyn Fn(&SparseState) -> SparseState + Send + Sync>;

/// A linear map on a fixed-dimension space, carried as an applicable
/// closure together with its adjoint.
#[derive(Clone)]
pub struct LinearOp {
    dim: usize,
    fwd: ApplyFn,
    adj: ApplyFn,
}

impl LinearOp {
    /// Build from forward and adjoint closures.
    pub fn from_fns<F, G>(dim: usize, fwd: F, adj: G) -> Self
    where
        F: Fn(&SparseState) -> SparseState + Send + Sync + 'static,
        G: Fn(&SparseState) -> SparseState + Send + Sync + 'static,
    {
        Self {
            dim,
            fwd: Arc::new(fwd),
            adj: Arc::new(adj),
        }
    }

    /// The identity.
    pub fn identity(dim: usize) -> Self {
        Self::from_fns(dim, |s| s.clone(), |s| s.clone())
    }

    /// A diagonal operator d(index) ↦ multiplier.
    pub fn diagonal<F>(dim: usize, d: F) -> Self
    where
        F: Fn(usize) -> Complex64 + Send + Sync + 'static,
    {
        let d = Arc::new(d);
        let d2 = d.clone();
        Self::from_fns(
            dim,
            move |s| {
                let mut out = SparseState::zero(s.layout().clone());
                for (i, a) in s.iter() {
                    out.add_term(i, a * d(i));
                }
                out.prune();
                out
            },
            move |s| {
                let mut out = SparseState::zero(s.layout().clone());
                for (i, a) in s.iter() {
                    out.add_term(i, a * d2(i).conj());
                }
                out.prune();
                out
            },
        )
    }

    /// A diagonal projector from a basis-index predicate.
    pub fn projector_where<F>(dim: usize, keep: F) -> Self
    where
        F: Fn(usize) -> bool + Send + Sync + 'static,
    {
        let keep = Arc::new(keep);
        Self::diagonal(dim, move |i| {
            if keep(i) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// A basis permutation |i⟩ ↦ |σ(i)⟩ with inverse `σ_inv`.
    pub fn basis_permutation<F, G>(dim: usize, sigma: F, sigma_inv: G) -> Self
    where
        F: Fn(usize) -> usize + Send + Sync + 'static,
        G: Fn(usize) -> usize + Send + Sync + 'static,
    {
        Self::from_fns(
            dim,
            move |s| {
                let mut out = SparseState::zero(s.layout().clone());
                for (i, a) in s.iter() {
                    out.add_term(sigma(i), a);
                }
                out
            },
            move |s| {
                let mut out = SparseState::zero(s.layout().clone());
                for (i, a) in s.iter() {
                    out.add_term(sigma_inv(i), a);
                }
                out
            },
        )
    }

    /// Wrap a dense matrix (column-major action `out = M·in`).
    pub fn from_matrix(m: &DMatrix<Complex64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator matrix must be square");
        let dim = m.nrows();
        let m = Arc::new(m.clone());
        let mh = Arc::new(m.adjoint());
        let apply = |mat: Arc<DMatrix<Complex64>>| {
            move |s: &SparseState| {
                let mut out = SparseState::zero(s.layout().clone());
                for (j, a) in s.iter() {
                    for i in 0..mat.nrows() {
                        let e = mat[(i, j)];
                        if e.norm_sqr() > 0.0 {
                            out.add_term(i, e * a);
                        }
                    }
                }
                out.prune();
                out
            }
        };
        Self {
            dim,
            fwd: Arc::new(apply(m)),
            adj: Arc::new(apply(mh)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Apply to a state (result pruned).
    pub fn apply(&self, s: &SparseState) -> SparseState {
        assert_eq!(s.dim(), self.dim, "operator/state dimension mismatch");
        let mut out = (self.fwd)(s);
        out.prune();
        out
    }

    /// Apply the adjoint.
    pub fn apply_adjoint(&self, s: &SparseState) -> SparseState {
        assert_eq!(s.dim(), self.dim, "operator/state dimension mismatch");
        let mut out = (self.adj)(s);
        out.prune();
        out
    }

    /// The adjoint operator.
    pub fn adjoint(&self) -> LinearOp {
        LinearOp {
            dim: self.dim,
            fwd: self.adj.clone(),
            adj: self.fwd.clone(),
        }
    }

    /// Operator product `self · rhs` (rhs applied first).
    pub fn times(&self, rhs: &LinearOp) -> LinearOp {
        assert_eq!(self.dim, rhs.dim);
        let (a_f, a_a) = (self.fwd.clone(), self.adj.clone());
        let (b_f, b_a) = (rhs.fwd.clone(), rhs.adj.clone());
        LinearOp {
            dim: self.dim,
            fwd: Arc::new(move |s| a_f(&b_f(s))),
            adj: Arc::new(move |s| b_a(&a_a(s))),
        }
    }

    /// Linear combination `self + c·rhs`.
    pub fn add_scaled(&self, rhs: &LinearOp, c: Complex64) -> LinearOp {
        assert_eq!(self.dim, rhs.dim);
        let (a_f, a_a) = (self.fwd.clone(), self.adj.clone());
        let (b_f, b_a) = (rhs.fwd.clone(), rhs.adj.clone());
        LinearOp {
            dim: self.dim,
            fwd: Arc::new(move |s| {
                let mut out = a_f(s);
                out.add_scaled(&b_f(s), c);
                out.prune();
                out
            }),
            adj: Arc::new(move |s| {
                let mut out = a_a(s);
                out.add_scaled(&b_a(s), c.conj());
                out.prune();
                out
            }),
        }
    }

    /// Difference `self − rhs`.
    pub fn sub(&self, rhs: &LinearOp) -> LinearOp {
        self.add_scaled(rhs, Complex64::new(-1.0, 0.0))
    }

    /// Materialize as a dense matrix by applying to each basis state.
    /// Intended for small dimensions.
    pub fn to_matrix(&self, layout: &Arc<RegisterLayout>) -> DMatrix<Complex64> {
        assert_eq!(layout.dim(), self.dim);
        let mut m = DMatrix::from_element(self.dim, self.dim, Complex64::new(0.0, 0.0));
        for j in 0..self.dim {
            let col = self.apply(&SparseState::basis(layout.clone(), j));
            for (i, a) in col.iter() {
                m[(i, j)] = a;
            }
        }
        m
    }

    /// Spectral (operator) norm.
    ///
    /// Exact eigendecomposition of O†O when `dim ≤ 512`; otherwise power
    /// iteration on O†O with 200 iterations and relative tolerance 1e-8,
    /// seeded deterministically.
    pub fn operator_norm(&self, layout: &Arc<RegisterLayout>) -> f64 {
        assert_eq!(layout.dim(), self.dim);
        if self.dim <= EXACT_NORM_DIM_CAP {
            let m = self.to_matrix(layout);
            let gram = m.adjoint() * &m;
            let eigs = hermitian_eigenvalues_unchecked(&gram);
            return eigs.last().copied().unwrap_or(0.0).max(0.0).sqrt();
        }
        let mut rng = crate::rng::seeded(0x5EED_0001);
        let mut v = SparseState::from_terms(
            layout.clone(),
            (0..self.dim).map(|i| {
                (
                    i,
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
                )
            }),
        );
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        v.scale(Complex64::new(1.0 / n, 0.0));
        let mut est = 0.0f64;
        for _ in 0..POWER_ITERATIONS {
            let w = self.apply(&v);
            let mut t = self.apply_adjoint(&w);
            let lambda = w.norm().powi(2); // v normalized ⇒ ⟨v|O†O|v⟩
            let tn = t.norm();
            if tn <= AMPLITUDE_DROP_THRESHOLD {
                return 0.0;
            }
            t.scale(Complex64::new(1.0 / tn, 0.0));
            let new_est = lambda.max(0.0).sqrt();
            if est > 0.0 && (new_est - est).abs() <= POWER_REL_TOL * est {
                return new_est.max(est);
            }
            est = new_est;
            v = t;
        }
        est
    }
}

/// Product of a sequence of operators, applied right-to-left
/// (`product_of(&[a, b, c]) = a·b·c`).
pub fn product_of(ops: &[LinearOp]) -> LinearOp {
    assert!(!ops.is_empty());
    let mut acc = ops[ops.len() - 1].clone();
    for op in ops[..ops.len() - 1].iter().rev() {
        acc = op.times(&acc);
    }
    acc
}

// ---------------------------------------------------------------------------
// tensor_embed
// ---------------------------------------------------------------------------

/// Embed `op`, acting on the listed target registers (in the given order),
/// as `op ⊗ 1` on the full layout.
pub fn tensor_embed(
    op: &LinearOp,
    target_registers: &[&str],
    layout: &Arc<RegisterLayout>,
) -> Result<LinearOp> {
    let mut positions = Vec::with_capacity(target_registers.len());
    for name in target_registers {
        positions.push(layout.position(name)?);
    }
    let sub_dim: usize = positions.iter().map(|&p| layout.cardinality(p)).product();
    if sub_dim != op.dim() {
        return Err(Error::CardinalityMismatch {
            name: target_registers.join(","),
            expected: op.dim(),
            got: sub_dim,
        });
    }
    let sub_names: Vec<(String, usize)> = positions
        .iter()
        .enumerate()
        .map(|(k, &p)| (format!("t{k}"), layout.cardinality(p)))
        .collect();
    let sub_pairs: Vec<(&str, usize)> = sub_names.iter().map(|(n, c)| (n.as_str(), *c)).collect();
    let sub_layout = Arc::new(RegisterLayout::new(&sub_pairs)?);

    let embed = |inner: ApplyFn, layout: Arc<RegisterLayout>, positions: Vec<usize>, sub: Arc<RegisterLayout>| {
        Arc::new(move |s: &SparseState| {
            // Group amplitudes by the content of all non-target registers.
            let mut groups: HashMap<usize, Vec<(usize, Complex64)>> = HashMap::new();
            for (idx, amp) in s.iter() {
                let mut rest = idx;
                let mut sub_vals = Vec::with_capacity(positions.len());
                for &p in &positions {
                    sub_vals.push(layout.value_at(idx, p));
                    rest = layout.with_value_signed(rest, p, 0);
                }
                let sub_idx = sub.encode(&sub_vals);
                groups.entry(rest).or_default().push((sub_idx, amp));
            }
            let mut out = SparseState::zero(s.layout().clone());
            for (rest, terms) in groups {
                let sub_state = SparseState::from_terms(sub.clone(), terms);
                let sub_out = inner(&sub_state);
                for (sub_idx, amp) in sub_out.iter() {
                    let vals = sub.decode(sub_idx);
                    let mut full = rest;
                    for (&p, &v) in positions.iter().zip(&vals) {
                        full = layout.with_value_signed(full, p, v);
                    }
                    out.add_term(full, amp);
                }
            }
            out.prune();
            out
        }) as ApplyFn
    };

    Ok(LinearOp {
        dim: layout.dim(),
        fwd: embed(
            op.fwd.clone(),
            layout.clone(),
            positions.clone(),
            sub_layout.clone(),
        ),
        adj: embed(op.adj.clone(), layout.clone(), positions, sub_layout),
    })
}

// ---------------------------------------------------------------------------
// DensityMatrix
// ---------------------------------------------------------------------------

/// A dense Hermitian density matrix.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0)),
        }
    }

    /// ρ = |ψ⟩⟨ψ| for a (dense-able) pure state.
    pub fn from_pure(state: &SparseState) -> Self {
        let mut rho = Self::zeros(state.dim());
        rho.accumulate_pure(state, 1.0);
        rho
    }

    /// ρ += w·|ψ⟩⟨ψ| (sparse outer product).
    pub fn accumulate_pure(&mut self, state: &SparseState, weight: f64) {
        for (i, a) in state.iter() {
            for (j, b) in state.iter() {
                self.mat[(i, j)] += Complex64::new(weight, 0.0) * a * b.conj();
            }
        }
    }

    pub fn from_matrix(mat: DMatrix<Complex64>) -> Result<Self> {
        let dev = hermitian_deviation(&mat);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// Scale in place (used when averaging views over oracle draws).
    pub fn scale(&mut self, w: f64) {
        self.mat *= Complex64::new(w, 0.0);
    }

    /// self += other (dimension-checked).
    pub fn add_assign(&mut self, other: &DensityMatrix) {
        assert_eq!(self.dim(), other.dim());
        self.mat += &other.mat;
    }
}

/// Max entrywise deviation of `m` from its adjoint.
fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let mut dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

// ---------------------------------------------------------------------------
// partial trace, trace distance, eigenvalues, restricted norm
// ---------------------------------------------------------------------------

/// Reduced density matrix on the `keep` registers (ordered as in the
/// layout), tracing out the rest.
pub fn partial_trace(state: &SparseState, keep: &[&str]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("empty keep set".into()));
    }
    let layout = state.layout();
    let mut keep_pos: Vec<usize> = keep
        .iter()
        .map(|n| layout.position(n))
        .collect::<Result<_>>()?;
    keep_pos.sort_unstable();
    keep_pos.dedup();
    let kept_cards: Vec<usize> = keep_pos.iter().map(|&p| layout.cardinality(p)).collect();
    let kept_dim: usize = kept_cards.iter().product();

    // Group amplitudes by traced-register content; each group contributes
    // the outer product of its kept-part vector.
    let mut groups: HashMap<usize, Vec<(usize, Complex64)>> = HashMap::new();
    for (idx, amp) in state.iter() {
        let mut traced_key = idx;
        let mut kept_idx = 0usize;
        for (&p, &c) in keep_pos.iter().zip(&kept_cards) {
            kept_idx = kept_idx * c + layout.value_at(idx, p);
            traced_key = layout.with_value_signed(traced_key, p, 0);
        }
        groups.entry(traced_key).or_default().push((kept_idx, amp));
    }
    let mut rho = DensityMatrix::zeros(kept_dim);
    for (_, terms) in groups {
        for &(i, a) in &terms {
            for &(j, b) in &terms {
                rho.mat[(i, j)] += a * b.conj();
            }
        }
    }
    Ok(rho)
}

/// Eigenvalues of a Hermitian matrix, real and sorted ascending (ties
/// broken by original index — `sort_by` is stable).
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    Ok(hermitian_eigenvalues_unchecked(m))
}

fn hermitian_eigenvalues_unchecked(m: &DMatrix<Complex64>) -> Vec<f64> {
    // Symmetrize to scrub floating-point asymmetry before decomposing.
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Trace distance (1/2)‖a − b‖₁ via Hermitian eigendecomposition of a − b.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let diff = a.matrix() - b.matrix();
    let eigs = hermitian_eigenvalues(&diff)?;
    Ok(0.5 * eigs.iter().map(|l| l.abs()).sum::<f64>())
}

/// ‖Π|ψ⟩‖ for a projector Π.
pub fn restricted_norm(state: &SparseState, size_projector: &LinearOp) -> f64 {
    size_projector.apply(state).norm()
}

/// Haar-style random unitary: QR of a Gaussian complex matrix with the
/// R-diagonal phases folded into Q.
pub fn random_unitary<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    use rand::distributions::Distribution;
    let normal = rand_distr_standard_normal();
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(normal.sample(rng), normal.sample(rng))
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, j)] *= phase.conj();
        }
    }
    q
}

// A minimal standard normal via Box–Muller; avoids pulling rand_distr in
// as a dependency for one distribution.
struct BoxMuller;
impl rand::distributions::Distribution<f64> for BoxMuller {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
fn rand_distr_standard_normal() -> BoxMuller {
    BoxMuller
}
