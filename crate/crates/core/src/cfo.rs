//! The compressed oracle for random *functions*: the pointwise compression
//! fc, the extended purified query P, the compressed oracle CF = fc·P·fc†,
//! validity projectors, and executable forms of the soundness, bounded-
//! growth, and fundamental lemmas.
//!
//! The purifying register holds a partial-function database that begins
//! empty; each query modifies at most one entry.  Compression swaps the
//! uniform superposition of outputs at the queried point with the
//! undefined marker:
//!
//! fc_{x,D} = 1 − |+_{x,D}⟩⟨+_{x,D}| − |D⟩⟨D| + |+_{x,D}⟩⟨D| + |D⟩⟨+_{x,D}|
//!
//! with |+_{x,D}⟩ = (1/√N) Σ_y |D[x→y]⟩, extended blockwise over the
//! partition of databases into single-point completion classes.  The same
//! swap template with a restricted value set S_{x,D} yields the
//! "no-bad-outputs" compression G_x, and (in other modules) the
//! permutation compression pC and the canonical Feistel compressions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;

use crate::databases::{enumerate_space, Database, DatabaseSpace, SpaceKind};
use crate::qlinalg::{
    partial_trace, random_unitary, tensor_embed, DensityMatrix, LinearOp, RegisterLayout,
    SparseState,
};
use crate::{Error, Result};

/// Amplitude below which a class is considered untouched when checking
/// whether a compression would overflow the database cap.
const OVERFLOW_AMP_TOL: f64 = 1e-12;

/// Default cap on exact standard-experiment enumeration (N^M functions).
pub const STANDARD_ENUM_CAP: usize = 65_536;

// ---------------------------------------------------------------------------
// Shared swap-compression engine
// ---------------------------------------------------------------------------

/// Apply a swap compression at a (possibly per-term) input point to the
/// database register at `db_pos` of `layout`.
///
/// For each amplitude the controlling input `x` is derived from the full
/// basis index via `x_of`; the class of the term is its base database
/// (the table with `x` erased) together with all in-space single-point
/// completions.  `allowed` selects the value set S for the uniform
/// superposition |S⟩; the block operator applied per class is
/// 1 − |S⟩⟨S| − |B⟩⟨B| + |S⟩⟨B| + |B⟩⟨S|.  An empty S degenerates the
/// block to the identity.
///
/// Errors if a class with nonnegligible amplitude requires completions
/// beyond the space's size cap.
pub fn apply_swap_compression(
    space: &DatabaseSpace,
    layout: &Arc<RegisterLayout>,
    db_pos: usize,
    x_of: &dyn Fn(usize) -> usize,
    allowed: &dyn Fn(&Database, usize) -> Vec<usize>,
    state: &SparseState,
) -> Result<SparseState> {
    let n = space.codomain_size();
    // key = full index with the db register moved to the class base;
    // value = (x, amplitude at base, amplitudes by y).
    struct Class {
        x: usize,
        base_index: usize,
        a_bot: Complex64,
        a_y: HashMap<usize, Complex64>,
    }
    let mut classes: HashMap<usize, Class> = HashMap::new();
    for (idx, amp) in state.iter() {
        let x = x_of(idx);
        let db_idx = layout.value_at(idx, db_pos);
        let db = space.database(db_idx);
        let (base, y) = match db.get(x) {
            Some(y) => (db.assign(x, None), Some(y)),
            None => (db, None),
        };
        let base_index = space
            .index_of(&base)
            .expect("erasing an entry stays within the capped space");
        let key = layout.with_value(idx, db_pos, base_index);
        let class = classes.entry(key).or_insert_with(|| Class {
            x,
            base_index,
            a_bot: Complex64::new(0.0, 0.0),
            a_y: HashMap::new(),
        });
        match y {
            Some(y) => {
                *class.a_y.entry(y).or_insert(Complex64::new(0.0, 0.0)) += amp;
            }
            None => class.a_bot += amp,
        }
    }

    let mut out = SparseState::zero(state.layout().clone());
    for (key, class) in classes {
        let base = space.database(class.base_index);
        let s_vals = allowed(&base, class.x);
        if s_vals.is_empty() {
            // Degenerate block: identity.
            out.add_term(key, class.a_bot);
            for (&y, &a) in &class.a_y {
                let ext = base.assign(class.x, Some(y));
                let ext_idx = space.index_of(&ext).expect("member of an enumerated class");
                out.add_term(layout.with_value(key, db_pos, ext_idx), a);
            }
            continue;
        }
        let inv_sqrt = 1.0 / (s_vals.len() as f64).sqrt();
        let mut s_amp = Complex64::new(0.0, 0.0);
        for &y in &s_vals {
            if let Some(&a) = class.a_y.get(&y) {
                s_amp += a * inv_sqrt;
            }
        }
        let correction = (class.a_bot - s_amp) * inv_sqrt;
        if base.size() + 1 > space.t_max() && correction.norm() > OVERFLOW_AMP_TOL {
            return Err(Error::CompressionOverflow {
                size: base.size() + 1,
                cap: space.t_max(),
            });
        }
        // New base amplitude: ⟨B|G|ψ⟩ = s_amp.
        out.add_term(key, s_amp);
        // Completions: y ∈ S gets a_y + correction; y ∉ S is untouched.
        let mut handled: Vec<usize> = Vec::new();
        if correction.norm() > 0.0 {
            for &y in &s_vals {
                let a = class
                    .a_y
                    .get(&y)
                    .copied()
                    .unwrap_or(Complex64::new(0.0, 0.0));
                let ext = base.assign(class.x, Some(y));
                let ext_idx = space.index_of(&ext).expect("cap checked above");
                out.add_term(layout.with_value(key, db_pos, ext_idx), a + correction);
                handled.push(y);
            }
        }
        for (&y, &a) in &class.a_y {
            if handled.contains(&y) {
                continue;
            }
            let a_new = if s_vals.contains(&y) { a + correction } else { a };
            let ext = base.assign(class.x, Some(y));
            let ext_idx = space.index_of(&ext).expect("member of an enumerated class");
            out.add_term(layout.with_value(key, db_pos, ext_idx), a_new);
        }
        let _ = n;
    }
    out.prune();
    Ok(out)
}

/// Value set for the plain function compression fc: all of [N].
pub fn fc_allowed(space: &DatabaseSpace) -> impl Fn(&Database, usize) -> Vec<usize> {
    let n = space.codomain_size();
    move |_base: &Database, _x: usize| (0..n).collect()
}

/// Value set for the permutation compression pC: [N] \ Im(base).
pub fn pc_allowed() -> impl Fn(&Database, usize) -> Vec<usize> {
    |base: &Database, _x: usize| {
        let im = base.image();
        (0..base.codomain_size())
            .filter(|y| !im.contains(y))
            .collect()
    }
}

/// Build the swap compression as a [`LinearOp`] (Hermitian involution) on
/// a layout, with the controlling input read from the register at
/// `x_pos` (or fixed when `x_pos` is `None` via `fixed_x`).
pub fn swap_compression_op(
    space: Arc<DatabaseSpace>,
    layout: Arc<RegisterLayout>,
    db_pos: usize,
    x_pos: Option<usize>,
    fixed_x: usize,
    allowed: Arc<dyn Fn(&Database, usize) -> Vec<usize> + Send + Sync>,
) -> LinearOp {
    let apply = {
        let space = space.clone();
        let layout = layout.clone();
        let allowed = allowed.clone();
        move |s: &SparseState| {
            let x_of: Box<dyn Fn(usize) -> usize> = match x_pos {
                Some(p) => Box::new({
                    let layout = layout.clone();
                    move |idx| layout.value_at(idx, p)
                }),
                None => Box::new(move |_| fixed_x),
            };
            apply_swap_compression(&space, &layout, db_pos, &*x_of, &*allowed, s)
                .expect("compression overflow: database cap too small for this state")
        }
    };
    let apply2 = apply.clone();
    // Hermitian involution: the adjoint is the same map.
    LinearOp::from_fns(layout.dim(), apply, apply2)
}

// ---------------------------------------------------------------------------
// Configuration and adversaries
// ---------------------------------------------------------------------------

/// Parameters of a compressed-function-oracle experiment.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionOracleConfig {
    /// Input space size M.
    pub m: usize,
    /// Output space size N (power of two: answers are XORed into Y).
    pub n: usize,
    /// Database size cap for the purifying register.
    pub t_max: usize,
    /// Cardinalities of the adversary's workspace sub-registers.
    pub workspace: Vec<usize>,
}

impl FunctionOracleConfig {
    pub fn new(m: usize, n: usize, t_max: usize, workspace: Vec<usize>) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::InvalidArgument("N must be a power of two".into()));
        }
        if t_max > m {
            return Err(Error::InvalidArgument("t_max must be ≤ M".into()));
        }
        Ok(Self {
            m,
            n,
            t_max,
            workspace,
        })
    }

    /// Enumerated partial-function space D_{≤t_max}.
    pub fn space(&self) -> Result<Arc<DatabaseSpace>> {
        Ok(Arc::new(enumerate_space(
            SpaceKind::Functions,
            self.m,
            self.n,
            self.t_max,
        )?))
    }

    fn adversary_registers(&self) -> Vec<(String, usize)> {
        let mut regs: Vec<(String, usize)> = self
            .workspace
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("w{i}"), c))
            .collect();
        regs.push(("x".into(), self.m));
        regs.push(("y".into(), self.n));
        regs
    }

    /// Layout of the adversary's registers (workspace ⊗ X ⊗ Y).
    pub fn adversary_layout(&self) -> Arc<RegisterLayout> {
        let regs = self.adversary_registers();
        let pairs: Vec<(&str, usize)> = regs.iter().map(|(n, c)| (n.as_str(), *c)).collect();
        Arc::new(RegisterLayout::new(&pairs).unwrap())
    }

    /// Full layout: adversary registers followed by the database register.
    pub fn full_layout(&self, space: &DatabaseSpace) -> Arc<RegisterLayout> {
        let mut regs = self.adversary_registers();
        regs.push(("db".into(), space.len()));
        let pairs: Vec<(&str, usize)> = regs.iter().map(|(n, c)| (n.as_str(), *c)).collect();
        Arc::new(RegisterLayout::new(&pairs).unwrap())
    }

    /// Names of the adversary registers, for embedding and partial traces.
    pub fn adversary_register_names(&self) -> Vec<String> {
        self.adversary_registers()
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }
}

/// An adversary: q + 1 explicit unitaries on the adversary layout,
/// interleaved with oracle queries, starting from a basis state.
#[derive(Clone)]
pub struct AdversaryCircuit {
    pub unitaries: Vec<LinearOp>,
    pub initial_index: usize,
}

impl AdversaryCircuit {
    /// From dense matrices, with a unitarity check.
    pub fn new(matrices: Vec<DMatrix<Complex64>>, initial_index: usize) -> Result<Self> {
        for u in &matrices {
            let dim = u.nrows();
            let dev = (u.adjoint() * u - DMatrix::identity(dim, dim)).norm();
            if dev > 1e-10 * (dim as f64) {
                return Err(Error::InvalidArgument(format!(
                    "adversary unitary deviates from unitarity by {dev:.3e}"
                )));
            }
        }
        Self::from_ops(matrices.iter().map(LinearOp::from_matrix).collect(), initial_index)
    }

    /// From operators directly (large layouts where dense matrices are
    /// infeasible); the caller is responsible for unitarity.
    pub fn from_ops(unitaries: Vec<LinearOp>, initial_index: usize) -> Result<Self> {
        if unitaries.is_empty() {
            return Err(Error::InvalidArgument(
                "an adversary needs at least A_0".into(),
            ));
        }
        Ok(Self {
            unitaries,
            initial_index,
        })
    }

    /// Number of oracle queries.
    pub fn num_queries(&self) -> usize {
        self.unitaries.len() - 1
    }
}

/// A Haar-style random adversary with `q` queries on `layout`.
pub fn random_adversary<R: Rng>(
    layout: &Arc<RegisterLayout>,
    q: usize,
    rng: &mut R,
) -> AdversaryCircuit {
    let dim = layout.dim();
    let unitaries = (0..=q).map(|_| random_unitary(dim, rng)).collect();
    AdversaryCircuit::new(unitaries, 0).expect("QR output is unitary")
}

/// A basis-permutation operator from a bijection on register values,
/// carried sparsely (usable on layouts far too large for a dense
/// matrix).
pub fn basis_permutation_op(
    layout: &Arc<RegisterLayout>,
    f: impl Fn(&mut Vec<usize>),
) -> LinearOp {
    let dim = layout.dim();
    let mut sigma = vec![0usize; dim];
    let mut inv = vec![0usize; dim];
    let mut seen = vec![false; dim];
    for j in 0..dim {
        let mut vals = layout.decode(j);
        f(&mut vals);
        let i = layout.encode(&vals);
        assert!(!seen[i], "basis map is not a bijection");
        seen[i] = true;
        sigma[j] = i;
        inv[i] = j;
    }
    LinearOp::basis_permutation(dim, move |j| sigma[j], move |i| inv[i])
}

/// A unitary permutation matrix from a basis bijection on register values.
pub fn basis_permutation_matrix(
    layout: &Arc<RegisterLayout>,
    f: impl Fn(&mut Vec<usize>),
) -> DMatrix<Complex64> {
    let dim = layout.dim();
    let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    let mut seen = vec![false; dim];
    for j in 0..dim {
        let mut vals = layout.decode(j);
        f(&mut vals);
        let i = layout.encode(&vals);
        assert!(!seen[i], "basis map is not a bijection");
        seen[i] = true;
        m[(i, j)] = Complex64::new(1.0, 0.0);
    }
    m
}

// ---------------------------------------------------------------------------
// Oracle operators
// ---------------------------------------------------------------------------

/// The block compression fc_x = ⊕_D fc_{x,D} on the database register
/// alone (single-register layout over `space`).
pub fn build_fc(space: &Arc<DatabaseSpace>, x: usize) -> LinearOp {
    let layout = space.layout("db");
    swap_compression_op(
        space.clone(),
        layout,
        0,
        None,
        x,
        Arc::new(fc_allowed(space)),
    )
}

/// The controlled compression fc_{XD} on a full experiment layout.
pub fn build_controlled_fc(cfg: &FunctionOracleConfig, space: &Arc<DatabaseSpace>) -> LinearOp {
    let layout = cfg.full_layout(space);
    let x_pos = layout.position("x").unwrap();
    let db_pos = layout.position("db").unwrap();
    swap_compression_op(
        space.clone(),
        layout,
        db_pos,
        Some(x_pos),
        0,
        Arc::new(fc_allowed(space)),
    )
}

/// The extended purified query P: XORs D(x) into Y when x ∈ Dom(D),
/// identity otherwise.  An involution.
pub fn build_purified_query(cfg: &FunctionOracleConfig, space: &Arc<DatabaseSpace>) -> LinearOp {
    let layout = cfg.full_layout(space);
    let x_pos = layout.position("x").unwrap();
    let y_pos = layout.position("y").unwrap();
    let db_pos = layout.position("db").unwrap();
    let space = space.clone();
    let lay = layout.clone();
    let map = move |idx: usize| -> usize {
        let x = lay.value_at(idx, x_pos);
        let db = space.database(lay.value_at(idx, db_pos));
        match db.get(x) {
            Some(v) => {
                let y = lay.value_at(idx, y_pos);
                lay.with_value(idx, y_pos, y ^ v)
            }
            None => idx,
        }
    };
    let map2 = map.clone();
    LinearOp::basis_permutation(layout.dim(), map, map2)
}

/// The compressed function oracle CF = fc · P · fc† on the full layout.
pub fn build_cf(cfg: &FunctionOracleConfig, space: &Arc<DatabaseSpace>) -> LinearOp {
    let fc = build_controlled_fc(cfg, space);
    let p = build_purified_query(cfg, space);
    fc.times(&p).times(&fc.adjoint())
}

/// fc_x applied to the database register of a full-layout state, with the
/// input point fixed externally (used by consistency checks that must not
/// consult the X register).
pub fn apply_fc_at(
    space: &DatabaseSpace,
    layout: &Arc<RegisterLayout>,
    db_pos: usize,
    x: usize,
    state: &SparseState,
) -> Result<SparseState> {
    let n = space.codomain_size();
    apply_swap_compression(
        space,
        layout,
        db_pos,
        &|_| x,
        &move |_base, _x| (0..n).collect(),
        state,
    )
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Exact adversary view against a uniformly random function: the average
/// over all N^M truth tables of ρ(A_q O_f … A_0 |init⟩).
pub fn run_standard_experiment(
    cfg: &FunctionOracleConfig,
    adv: &AdversaryCircuit,
) -> Result<DensityMatrix> {
    let num_functions = cfg
        .n
        .checked_pow(cfg.m as u32)
        .ok_or_else(|| Error::BudgetExceeded("N^M overflows".into()))?;
    if num_functions > STANDARD_ENUM_CAP {
        return Err(Error::CapExceeded {
            count: num_functions,
            cap: STANDARD_ENUM_CAP,
        });
    }
    let layout = cfg.adversary_layout();
    let x_pos = layout.position("x").unwrap();
    let y_pos = layout.position("y").unwrap();
    let unitaries = &adv.unitaries;

    let mut rho = DensityMatrix::zeros(layout.dim());
    let weight = 1.0 / num_functions as f64;
    for f_code in 0..num_functions {
        let f: Vec<usize> = (0..cfg.m)
            .map(|x| (f_code / cfg.n.pow(x as u32)) % cfg.n)
            .collect();
        let mut psi = SparseState::basis(layout.clone(), adv.initial_index);
        for (t, u) in unitaries.iter().enumerate() {
            psi = u.apply(&psi);
            if t < adv.num_queries() {
                // O_f: y ← y ⊕ f(x).
                let mut queried = SparseState::zero(layout.clone());
                for (idx, amp) in psi.iter() {
                    let x = layout.value_at(idx, x_pos);
                    let y = layout.value_at(idx, y_pos);
                    queried.add_term(layout.with_value(idx, y_pos, y ^ f[x]), amp);
                }
                psi = queried;
            }
        }
        rho.accumulate_pure(&psi, weight);
    }
    Ok(rho)
}

/// Compressed-oracle run: returns the full final state (purifying
/// register included) and the adversary view Tr_D of it.
pub fn run_compressed_experiment(
    cfg: &FunctionOracleConfig,
    adv: &AdversaryCircuit,
) -> Result<(SparseState, DensityMatrix)> {
    let space = cfg.space()?;
    let layout = cfg.full_layout(&space);
    let cf = build_cf(cfg, &space);
    let adv_names = cfg.adversary_register_names();
    let adv_name_refs: Vec<&str> = adv_names.iter().map(|s| s.as_str()).collect();

    // Purifying register starts at |⊥⟩ (index 0 by enumeration order).
    let mut vals = layout.decode(0);
    let adv_layout = cfg.adversary_layout();
    let init_vals = adv_layout.decode(adv.initial_index);
    vals[..init_vals.len()].copy_from_slice(&init_vals);
    let mut psi = SparseState::basis_from(layout.clone(), &vals);

    for (t, u) in adv.unitaries.iter().enumerate() {
        let embedded = tensor_embed(u, &adv_name_refs, &layout)?;
        psi = embedded.apply(&psi);
        if t < adv.num_queries() {
            psi = cf.apply(&psi);
        }
    }
    let view = partial_trace(&psi, &adv_name_refs)?;
    Ok((psi, view))
}

/// JSON record of a soundness/meaningfulness experiment.
#[derive(Clone, Debug, Serialize)]
pub struct CfoExperimentRecord {
    pub config: FunctionOracleConfig,
    pub seed: Option<u64>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub trace_distance: Option<f64>,
}

// ---------------------------------------------------------------------------
// Fundamental lemma
// ---------------------------------------------------------------------------

/// Result of a fundamental-lemma check: `lhs` is the norm with
/// decompress-conjugated checks, `rhs` includes the √(l/N) slack.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl LemmaCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

/// Decode the output tuple (x_1, y_1, …, x_l, y_l) held, by convention,
/// in the last 2l workspace sub-registers.
pub(crate) fn decode_output_tuple(
    layout: &RegisterLayout,
    first_tuple_reg: usize,
    l: usize,
    idx: usize,
) -> Vec<(usize, usize)> {
    (0..l)
        .map(|i| {
            let x = layout.value_at(idx, first_tuple_reg + 2 * i);
            let y = layout.value_at(idx, first_tuple_reg + 2 * i + 1);
            (x, y)
        })
        .collect()
}

/// Check the fundamental lemma for a compressed-function-oracle run.
///
/// The adversary's workspace must end in 2l sub-registers of
/// cardinalities (M, N) repeated, holding the claimed pairs
/// (x_1, y_1, …, x_l, y_l).  Requires `t_max ≥ q + 1` so the conjugated
/// checks can decompress.
pub fn fundamental_lemma_check(
    cfg: &FunctionOracleConfig,
    adv: &AdversaryCircuit,
    l: usize,
) -> Result<LemmaCheck> {
    if cfg.t_max < adv.num_queries() + 1 {
        return Err(Error::InvalidArgument(
            "fundamental lemma needs t_max ≥ q + 1 for decompression".into(),
        ));
    }
    validate_tuple_registers(&cfg.workspace, cfg.m, cfg.n, l)?;
    let space = cfg.space()?;
    let layout = cfg.full_layout(&space);
    let db_pos = layout.position("db").unwrap();
    let first_tuple_reg = cfg.workspace.len() - 2 * l;

    let (psi, _) = run_compressed_experiment(cfg, adv)?;

    // Π^(CF): diagonal — keep terms whose database agrees with every
    // claimed pair.
    let space_in = space.clone();
    let layout_in = layout.clone();
    let projected = SparseState::from_terms(
        layout.clone(),
        psi.iter().filter(|&(idx, _)| {
            let db = space_in.database(layout_in.value_at(idx, db_pos));
            decode_output_tuple(&layout_in, first_tuple_reg, l, idx)
                .into_iter()
                .all(|(x, y)| db.get(x) == Some(y))
        }),
    );
    let rhs_term = projected.norm();

    // Π^(O_f): group by output tuple, then apply
    // fc_{x_i} Π_{(x_i,y_i)∈db} fc_{x_i}† for i = l..1.
    let mut groups: HashMap<Vec<(usize, usize)>, SparseState> = HashMap::new();
    for (idx, amp) in psi.iter() {
        let tuple = decode_output_tuple(&layout, first_tuple_reg, l, idx);
        groups
            .entry(tuple)
            .or_insert_with(|| SparseState::zero(layout.clone()))
            .add_term(idx, amp);
    }
    let mut lhs_sq = 0.0f64;
    for (tuple, mut part) in groups {
        for &(x, y) in tuple.iter().rev() {
            part = apply_fc_at(&space, &layout, db_pos, x, &part)?;
            let space2 = space.clone();
            let lay2 = layout.clone();
            part = SparseState::from_terms(
                layout.clone(),
                part.iter().filter(|&(idx, _)| {
                    space2.database(lay2.value_at(idx, db_pos)).get(x) == Some(y)
                }),
            );
            part = apply_fc_at(&space, &layout, db_pos, x, &part)?;
        }
        lhs_sq += part.norm().powi(2);
    }

    Ok(LemmaCheck {
        lhs: lhs_sq.sqrt(),
        rhs: rhs_term + ((l as f64) / (cfg.n as f64)).sqrt(),
    })
}

pub(crate) fn validate_tuple_registers(
    workspace: &[usize],
    m: usize,
    n: usize,
    l: usize,
) -> Result<()> {
    if workspace.len() < 2 * l {
        return Err(Error::InvalidArgument(format!(
            "workspace has {} sub-registers, need at least {}",
            workspace.len(),
            2 * l
        )));
    }
    let tail = &workspace[workspace.len() - 2 * l..];
    for i in 0..l {
        if tail[2 * i] != m || tail[2 * i + 1] != n {
            return Err(Error::InvalidArgument(
                "output tuple registers must have cardinalities (M, N) repeated".into(),
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Validity
// ---------------------------------------------------------------------------

/// Ξ = Π_x fc_x Γ_x fc_x† on the database register: the projector onto
/// valid (compressed) databases.  Applying it to states of size close to
/// the cap requires one unit of headroom per defined point.
pub fn validity_projector(space: &Arc<DatabaseSpace>) -> LinearOp {
    let layout = space.layout("db");
    let mut op = LinearOp::identity(space.len());
    for x in 0..space.domain_size() {
        let fc = build_fc(space, x);
        let gamma = space.defined_projector(x);
        let xi_x = fc.times(&gamma).times(&fc.adjoint());
        op = op.times(&xi_x);
    }
    let _ = layout;
    op
}

/// Run the compressed experiment and report whether the final state stays
/// in the valid subspace Ξ (within `tol`).
pub fn check_validity_preserved(
    cfg: &FunctionOracleConfig,
    adv: &AdversaryCircuit,
    tol: f64,
) -> Result<bool> {
    let space = cfg.space()?;
    let layout = cfg.full_layout(&space);
    let (psi, _) = run_compressed_experiment(cfg, adv)?;
    let xi = tensor_embed(&validity_projector(&space), &["db"], &layout)?;
    let mut diff = xi.apply(&psi);
    diff.add_scaled(&psi, Complex64::new(-1.0, 0.0));
    Ok(diff.norm() <= tol)
}

// ---------------------------------------------------------------------------
// Restricted compression (no-bad-outputs form)
// ---------------------------------------------------------------------------

/// Build G_x from per-base value sets S_{x,D} ⊆ [N]; errors are deferred
/// to application time (empty sets degenerate to identity blocks, see the
/// module notes).
pub fn restricted_compression(
    space: &Arc<DatabaseSpace>,
    x: usize,
    sets: Arc<dyn Fn(&Database, usize) -> Vec<usize> + Send + Sync>,
) -> LinearOp {
    let layout = space.layout("db");
    swap_compression_op(space.clone(), layout, 0, None, x, sets)
}

/// ‖(fc_x − G_x) Π^{≤t}‖ on the capped database space.
pub fn compression_closeness(
    space: &Arc<DatabaseSpace>,
    x: usize,
    sets: Arc<dyn Fn(&Database, usize) -> Vec<usize> + Send + Sync>,
    t: usize,
) -> Result<f64> {
    if t + 1 > space.t_max() {
        return Err(Error::InvalidArgument(
            "need one unit of cap headroom above t".into(),
        ));
    }
    let layout = space.layout("db");
    let fc = build_fc(space, x);
    let g = restricted_compression(space, x, sets);
    let diff = fc.sub(&g).times(&space.size_at_most_projector(t)?);
    Ok(diff.operator_norm(&layout))
}
