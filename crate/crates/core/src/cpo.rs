//! The compressed oracle for random *permutations*: the injectivity-
//! preserving compression pC, the database flip F, and the two-way oracle
//! cP with a direction bit, plus executable forms of bounded growth and
//! the fundamental lemma, and a numeric soundness measurement against the
//! exact random-permutation view.
//!
//! pC_{x,I} swaps the uniform superposition of *non-colliding* outputs
//!
//! |+_{x,I}⟩ = (1/√(N−|I|)) Σ_{y ∉ Im(I)} |I[x→y]⟩
//!
//! with the undefined marker at x, controlled on the rest of the
//! database; compressions at different points therefore no longer
//! commute.  Inverse queries conjugate a forward query by the flip
//! F|I⟩ = |I⁻¹⟩:
//!
//! cP|b⟩ = |b⟩ ⊗ { pC·P·pC†  (b = 0);  F·pC·P·pC†·F†  (b = 1) }.
//!
//! Soundness here is a *measured* quantity (the known analytic bound is
//! vacuous at desk scale): experiments report the trace distance between
//! the compressed view and the exact average over all N! permutations,
//! guarded by frozen regression values rather than asserted small.

use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;

use crate::cfo::{
    apply_swap_compression, decode_output_tuple, pc_allowed, swap_compression_op,
    validate_tuple_registers, AdversaryCircuit,
};
use crate::databases::{all_permutations, enumerate_space, DatabaseSpace, SpaceKind};
use crate::qlinalg::{
    partial_trace, tensor_embed, DensityMatrix, LinearOp, RegisterLayout, SparseState,
};
use crate::{Error, Result};

/// Default cap on exact permutation enumeration (N! views).
pub const PERM_ENUM_CAP: usize = 720;

/// Parameters of a compressed-permutation-oracle experiment.
#[derive(Clone, Debug, Serialize)]
pub struct PermOracleConfig {
    /// Permutation domain size N (power of two: answers XOR into Y).
    pub n: usize,
    /// Database size cap for the purifying register.
    pub t_max: usize,
    /// Cardinalities of the adversary's workspace sub-registers.
    pub workspace: Vec<usize>,
}

impl PermOracleConfig {
    pub fn new(n: usize, t_max: usize, workspace: Vec<usize>) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::InvalidArgument("N must be a power of two".into()));
        }
        if t_max > n {
            return Err(Error::InvalidArgument("t_max must be ≤ N".into()));
        }
        Ok(Self { n, t_max, workspace })
    }

    /// Enumerated injective space I_{≤t_max}.
    pub fn space(&self) -> Result<Arc<DatabaseSpace>> {
        Ok(Arc::new(enumerate_space(
            SpaceKind::Injective,
            self.n,
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
        regs.push(("b".into(), 2));
        regs.push(("x".into(), self.n));
        regs.push(("y".into(), self.n));
        regs
    }

    /// Layout of the adversary's registers (workspace ⊗ B ⊗ X ⊗ Y).
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

    pub fn adversary_register_names(&self) -> Vec<String> {
        self.adversary_registers()
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

/// pC_x on the database register alone.
pub fn build_pc_at(space: &Arc<DatabaseSpace>, x: usize) -> LinearOp {
    let layout = space.layout("db");
    swap_compression_op(space.clone(), layout, 0, None, x, Arc::new(pc_allowed()))
}

/// The controlled compression pC_{XI} on the full experiment layout.
pub fn build_pc(cfg: &PermOracleConfig, space: &Arc<DatabaseSpace>) -> LinearOp {
    let layout = cfg.full_layout(space);
    let x_pos = layout.position("x").unwrap();
    let db_pos = layout.position("db").unwrap();
    swap_compression_op(
        space.clone(),
        layout,
        db_pos,
        Some(x_pos),
        0,
        Arc::new(pc_allowed()),
    )
}

/// The flip F|I⟩ = |I⁻¹⟩ on the full layout: a basis involution.
pub fn build_flip(cfg: &PermOracleConfig, space: &Arc<DatabaseSpace>) -> LinearOp {
    let layout = cfg.full_layout(space);
    let db_pos = layout.position("db").unwrap();
    let space = space.clone();
    let lay = layout.clone();
    let map = move |idx: usize| -> usize {
        let i = space.injective(lay.value_at(idx, db_pos));
        let flipped = space
            .index_of_injective(&i.flip())
            .expect("flip preserves size, stays in the capped space");
        lay.with_value(idx, db_pos, flipped)
    };
    let map2 = map.clone();
    LinearOp::basis_permutation(layout.dim(), map, map2)
}

/// The extended purified query P on the full layout: y ⊕= I(x) when
/// defined, identity otherwise.
pub fn build_perm_query(cfg: &PermOracleConfig, space: &Arc<DatabaseSpace>) -> LinearOp {
    let layout = cfg.full_layout(space);
    let x_pos = layout.position("x").unwrap();
    let y_pos = layout.position("y").unwrap();
    let db_pos = layout.position("db").unwrap();
    let space = space.clone();
    let lay = layout.clone();
    let map = move |idx: usize| -> usize {
        let x = lay.value_at(idx, x_pos);
        match space.injective(lay.value_at(idx, db_pos)).get(x) {
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

/// The full compressed permutation oracle cP, controlled on the
/// direction bit.
pub fn build_cp(cfg: &PermOracleConfig, space: &Arc<DatabaseSpace>) -> LinearOp {
    let layout = cfg.full_layout(space);
    let b_pos = layout.position("b").unwrap();
    let pc = build_pc(cfg, space);
    let p = build_perm_query(cfg, space);
    let f = build_flip(cfg, space);
    let forward = pc.times(&p).times(&pc.adjoint());
    let inverse = f.times(&forward).times(&f.adjoint());
    let lay = layout.clone();
    let apply = move |s: &SparseState| {
        let fwd_part = SparseState::from_terms(
            s.layout().clone(),
            s.iter().filter(|&(idx, _)| lay.value_at(idx, b_pos) == 0),
        );
        let inv_part = SparseState::from_terms(
            s.layout().clone(),
            s.iter().filter(|&(idx, _)| lay.value_at(idx, b_pos) == 1),
        );
        let mut out = forward.apply(&fwd_part);
        out.add_scaled(&inverse.apply(&inv_part), num_complex::Complex64::new(1.0, 0.0));
        out
    };
    let apply2 = apply.clone();
    // Each branch is Hermitian (involution conjugates of the involution P).
    LinearOp::from_fns(layout.dim(), apply, apply2)
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Exact adversary view against a uniformly random permutation,
/// honoring the direction bit: y ⊕= φ^{1−2b}(x).
pub fn run_perm_standard_experiment(
    cfg: &PermOracleConfig,
    adv: &AdversaryCircuit,
) -> Result<DensityMatrix> {
    let num_perms = crate::databases::factorial(cfg.n);
    if num_perms > PERM_ENUM_CAP {
        return Err(Error::CapExceeded {
            count: num_perms,
            cap: PERM_ENUM_CAP,
        });
    }
    let layout = cfg.adversary_layout();
    let b_pos = layout.position("b").unwrap();
    let x_pos = layout.position("x").unwrap();
    let y_pos = layout.position("y").unwrap();
    let unitaries = &adv.unitaries;

    let mut rho = DensityMatrix::zeros(layout.dim());
    let weight = 1.0 / num_perms as f64;
    for phi in all_permutations(cfg.n) {
        let mut psi = SparseState::basis(layout.clone(), adv.initial_index);
        for (t, u) in unitaries.iter().enumerate() {
            psi = u.apply(&psi);
            if t < adv.num_queries() {
                let mut queried = SparseState::zero(layout.clone());
                for (idx, amp) in psi.iter() {
                    let b = layout.value_at(idx, b_pos);
                    let x = layout.value_at(idx, x_pos);
                    let y = layout.value_at(idx, y_pos);
                    let v = if b == 0 {
                        phi.apply(x)
                    } else {
                        phi.apply_inverse(x)
                    };
                    queried.add_term(layout.with_value(idx, y_pos, y ^ v), amp);
                }
                psi = queried;
            }
        }
        rho.accumulate_pure(&psi, weight);
    }
    Ok(rho)
}

/// Compressed-oracle run: full final state and the adversary view Tr_I.
pub fn run_cp_experiment(
    cfg: &PermOracleConfig,
    adv: &AdversaryCircuit,
) -> Result<(SparseState, DensityMatrix)> {
    let space = cfg.space()?;
    let layout = cfg.full_layout(&space);
    let cp = build_cp(cfg, &space);
    let adv_names = cfg.adversary_register_names();
    let adv_name_refs: Vec<&str> = adv_names.iter().map(|s| s.as_str()).collect();

    let mut vals = layout.decode(0);
    let init_vals = cfg.adversary_layout().decode(adv.initial_index);
    vals[..init_vals.len()].copy_from_slice(&init_vals);
    let mut psi = SparseState::basis_from(layout.clone(), &vals);

    for (t, u) in adv.unitaries.iter().enumerate() {
        let embedded = tensor_embed(u, &adv_name_refs, &layout)?;
        psi = embedded.apply(&psi);
        if t < adv.num_queries() {
            psi = cp.apply(&psi);
        }
    }
    let view = partial_trace(&psi, &adv_name_refs)?;
    Ok((psi, view))
}

/// JSON record of a permutation-oracle experiment.
#[derive(Clone, Debug, Serialize)]
pub struct PermExperimentRecord {
    pub n: usize,
    pub q: usize,
    pub seed: Option<u64>,
    pub trace_distance: Option<f64>,
    pub lemma_lhs: Option<f64>,
    pub lemma_rhs: Option<f64>,
}

// ---------------------------------------------------------------------------
// Fundamental lemma
// ---------------------------------------------------------------------------

/// Result of a permutation fundamental-lemma check: `lhs` carries the
/// pC-conjugated checks, `rhs` the plain in-database checks plus the
/// l/√(N−t−l) slack.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PermLemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl PermLemmaCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

/// Check the permutation fundamental lemma: with t = q queries,
/// ‖Π^(O_φ)ψ‖ ≤ ‖Π^(cP)ψ‖ + l/√(N−t−l).  The output tuple lives in the
/// last 2l workspace sub-registers (cardinalities (N, N) repeated);
/// requires `t_max ≥ q + 1` for the conjugated decompressions.
pub fn perm_fundamental_lemma_check(
    cfg: &PermOracleConfig,
    adv: &AdversaryCircuit,
    l: usize,
) -> Result<PermLemmaCheck> {
    let t = adv.num_queries();
    if cfg.n <= t + l {
        return Err(Error::InvalidArgument(
            "need N − t − l > 0 for the slack term".into(),
        ));
    }
    if l > 0 && cfg.t_max < t + 1 {
        return Err(Error::InvalidArgument(
            "fundamental lemma needs t_max ≥ q + 1 for decompression".into(),
        ));
    }
    validate_tuple_registers(&cfg.workspace, cfg.n, cfg.n, l)?;
    let space = cfg.space()?;
    let layout = cfg.full_layout(&space);
    let db_pos = layout.position("db").unwrap();
    let first_tuple_reg = cfg.workspace.len() - 2 * l;

    let (psi, _) = run_cp_experiment(cfg, adv)?;

    // Π^(cP): diagonal in-database checks.
    let space_in = space.clone();
    let lay_in = layout.clone();
    let projected = SparseState::from_terms(
        layout.clone(),
        psi.iter().filter(|&(idx, _)| {
            let db = space_in.injective(lay_in.value_at(idx, db_pos));
            decode_output_tuple(&lay_in, first_tuple_reg, l, idx)
                .into_iter()
                .all(|(x, y)| db.get(x) == Some(y))
        }),
    );
    let rhs_term = projected.norm();

    // Π^(O_φ): grouped by tuple, pC-conjugated checks right to left.
    let mut groups: HashMap<Vec<(usize, usize)>, SparseState> = HashMap::new();
    for (idx, amp) in psi.iter() {
        let tuple = decode_output_tuple(&layout, first_tuple_reg, l, idx);
        groups
            .entry(tuple)
            .or_insert_with(|| SparseState::zero(layout.clone()))
            .add_term(idx, amp);
    }
    let allowed = pc_allowed();
    let mut lhs_sq = 0.0f64;
    for (tuple, mut part) in groups {
        for &(x, y) in tuple.iter().rev() {
            part = apply_swap_compression(&space, &layout, db_pos, &|_| x, &allowed, &part)?;
            let space2 = space.clone();
            let lay2 = layout.clone();
            part = SparseState::from_terms(
                layout.clone(),
                part.iter().filter(|&(idx, _)| {
                    space2.injective(lay2.value_at(idx, db_pos)).get(x) == Some(y)
                }),
            );
            part = apply_swap_compression(&space, &layout, db_pos, &|_| x, &allowed, &part)?;
        }
        lhs_sq += part.norm().powi(2);
    }

    Ok(PermLemmaCheck {
        lhs: lhs_sq.sqrt(),
        rhs: rhs_term + (l as f64) / ((cfg.n - t - l) as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use super::*;
    use crate::cfo::{basis_permutation_matrix, random_adversary};
    use crate::databases::InjectiveDatabase;
    use crate::qlinalg::trace_distance;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pc_swaps_bottom_with_noncolliding_superposition() {
        let space = Arc::new(enumerate_space(SpaceKind::Injective, 4, 4, 2).unwrap());
        let layout = space.layout("db");
        let pc = build_pc_at(&space, 1);

        // pC_x|⊥⟩ = |+_{x,⊥}⟩ with amplitude 1/2 each at N = 4.
        let bottom = SparseState::basis(layout.clone(), 0);
        let out = pc.apply(&bottom);
        for y in 0..4 {
            let i = InjectiveDatabase::empty(4).assign(1, Some(y));
            let idx = space.index_of_injective(&i).unwrap();
            assert_abs_diff_eq!(out.amplitude(idx).re, 0.5, epsilon = 1e-12);
        }
        // Involution: pC_x|+_{x,I}⟩ = |I⟩.
        let back = pc.apply(&out);
        assert_abs_diff_eq!(back.amplitude(0).re, 1.0, epsilon = 1e-12);
        assert_eq!(back.num_terms(), 1);

        // Colliding outputs are excluded: from base {(0,2)}, completing at
        // x=1 never produces y=2.
        let base = InjectiveDatabase::empty(4).assign(0, Some(2));
        let base_idx = space.index_of_injective(&base).unwrap();
        let out = pc.apply(&SparseState::basis(layout.clone(), base_idx));
        let colliding = base.assign(1, Some(2));
        assert!(space.index_of_injective(&colliding).is_some() || colliding.size() < 2);
        for y in 0..4 {
            let i = base.assign(1, Some(y));
            let idx = space.index_of_injective(&i).unwrap();
            let expected = if y == 2 { 0.0 } else { 1.0 / 3.0f64.sqrt() };
            assert_abs_diff_eq!(out.amplitude(idx).re, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn pc_fixes_vectors_orthogonal_to_the_swap_plane() {
        let space = Arc::new(enumerate_space(SpaceKind::Injective, 4, 4, 1).unwrap());
        let layout = space.layout("db");
        let pc = build_pc_at(&space, 0);
        // |{(0,1)}⟩ − |{(0,3)}⟩ is orthogonal to |+_{0,⊥}⟩ and |⊥⟩.
        let i1 = space
            .index_of_injective(&InjectiveDatabase::empty(4).assign(0, Some(1)))
            .unwrap();
        let i3 = space
            .index_of_injective(&InjectiveDatabase::empty(4).assign(0, Some(3)))
            .unwrap();
        let diff = SparseState::from_terms(
            layout.clone(),
            [(i1, c(1.0, 0.0)), (i3, c(-1.0, 0.0))],
        );
        let mut out = pc.apply(&diff);
        out.add_scaled(&diff, c(-1.0, 0.0));
        assert!(out.norm() < 1e-12);
    }

    #[test]
    fn flip_examples() {
        let cfg = PermOracleConfig::new(4, 2, vec![]).unwrap();
        let space = cfg.space().unwrap();
        let layout = cfg.full_layout(&space);
        let f = build_flip(&cfg, &space);

        // F|⊥⟩ = |⊥⟩ (b = x = y = 0).
        let bottom = SparseState::basis_from(layout.clone(), &[0, 0, 0, 0]);
        let out = f.apply(&bottom);
        assert_abs_diff_eq!(out.amplitude(0).re, 1.0, epsilon = 1e-12);

        // F|{(0,2)}⟩ = |{(2,0)}⟩.
        let i02 = space
            .index_of_injective(&InjectiveDatabase::empty(4).assign(0, Some(2)))
            .unwrap();
        let i20 = space
            .index_of_injective(&InjectiveDatabase::empty(4).assign(2, Some(0)))
            .unwrap();
        let psi = SparseState::basis_from(layout.clone(), &[0, 0, 0, i02]);
        let out = f.apply(&psi);
        assert_abs_diff_eq!(
            out.amplitude(layout.encode(&[0, 0, 0, i20])).re,
            1.0,
            epsilon = 1e-12
        );

        // F² = identity on a superposition.
        let psi = SparseState::from_terms(
            layout.clone(),
            [
                (layout.encode(&[0, 1, 2, i02]), c(0.6, 0.0)),
                (layout.encode(&[1, 0, 3, i20]), c(0.0, 0.8)),
            ],
        );
        let mut twice = f.apply(&f.apply(&psi));
        twice.add_scaled(&psi, c(-1.0, 0.0));
        assert!(twice.norm() < 1e-12);
    }

    #[test]
    fn cp_branches_match_their_compositions() {
        let cfg = PermOracleConfig::new(4, 2, vec![]).unwrap();
        let space = cfg.space().unwrap();
        let layout = cfg.full_layout(&space);
        let cp = build_cp(&cfg, &space);
        let pc = build_pc(&cfg, &space);
        let p = build_perm_query(&cfg, &space);
        let f = build_flip(&cfg, &space);
        let forward = pc.times(&p).times(&pc);
        let inverse = f.times(&forward).times(&f);

        let mut rng = crate::rng::seeded(23);
        let db_small = tensor_embed(
            &space.size_at_most_projector(1).unwrap(),
            &["db"],
            &layout,
        )
        .unwrap();
        for _ in 0..3 {
            let raw = SparseState::from_terms(
                layout.clone(),
                (0..layout.dim())
                    .map(|i| (i, c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))),
            );
            let psi = db_small.apply(&raw).normalized();
            // Split by b and compare against the branch compositions.
            let b_pos = layout.position("b").unwrap();
            let fwd = SparseState::from_terms(
                layout.clone(),
                psi.iter().filter(|&(i, _)| layout.value_at(i, b_pos) == 0),
            );
            let inv = SparseState::from_terms(
                layout.clone(),
                psi.iter().filter(|&(i, _)| layout.value_at(i, b_pos) == 1),
            );
            let via_cp = cp.apply(&psi);
            let mut manual = forward.apply(&fwd);
            manual.add_scaled(&inverse.apply(&inv), c(1.0, 0.0));
            let mut diff = via_cp.clone();
            diff.add_scaled(&manual, c(-1.0, 0.0));
            assert!(diff.norm() < 1e-12);
            assert_abs_diff_eq!(via_cp.norm(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn inverse_query_on_bottom_matches_forward_by_flip_symmetry() {
        let cfg = PermOracleConfig::new(4, 1, vec![]).unwrap();
        let space = cfg.space().unwrap();
        let layout = cfg.full_layout(&space);
        let cp = build_cp(&cfg, &space);
        // |b=0, x=2, y=0⟩|⊥⟩ vs |b=1, x=2, y=0⟩|⊥⟩: same amplitudes up to
        // the flip of the database content.
        let fwd = cp.apply(&SparseState::basis_from(layout.clone(), &[0, 2, 0, 0]));
        let inv = cp.apply(&SparseState::basis_from(layout.clone(), &[1, 2, 0, 0]));
        for (idx, amp) in fwd.iter() {
            let vals = layout.decode(idx);
            let flipped = space
                .index_of_injective(&space.injective(vals[3]).flip())
                .unwrap();
            let mirror = layout.encode(&[1, vals[1], vals[2], flipped]);
            assert_abs_diff_eq!((inv.amplitude(mirror) - amp).norm(), 0.0, epsilon = 1e-12);
        }
    }

    /// A classical round-trip circuit: query φ(x0) forward, then query the
    /// result backward; the output register ends near |x0 ⊕ x0⟩... see body.
    fn round_trip_adversary(layout: &Arc<RegisterLayout>, x0: usize) -> AdversaryCircuit {
        // Registers: b, x, y (no workspace).
        let a0 = basis_permutation_matrix(layout, move |vals| {
            vals[1] ^= x0; // x ← x0, b = 0
        });
        let a1 = basis_permutation_matrix(layout, move |vals| {
            vals.swap(1, 2); // x ← φ(x0), y ← x0
            vals[2] ^= x0; // y ← 0
            vals[0] ^= 1; // b ← 1
        });
        let a2 = basis_permutation_matrix(layout, |_| {});
        AdversaryCircuit::new(vec![a0, a1, a2], 0).unwrap()
    }

    #[test]
    fn forward_then_inverse_recovers_the_input() {
        for n in [4usize, 8] {
            let cfg = PermOracleConfig::new(n, 2, vec![]).unwrap();
            let layout = cfg.adversary_layout();
            let x0 = 1usize;
            let adv = round_trip_adversary(&layout, x0);
            let (_, view) = run_cp_experiment(&cfg, &adv).unwrap();
            // Probability that the output register holds x0.
            let y_pos = layout.position("y").unwrap();
            let mut p = 0.0;
            for i in 0..layout.dim() {
                if layout.value_at(i, y_pos) == x0 {
                    p += view.matrix()[(i, i)].re;
                }
            }
            assert!(p >= 1.0 - 4.0 / n as f64, "N={n}: recovery prob {p}");
        }
    }

    #[test]
    fn standard_two_forward_queries_never_collide() {
        // Two classical forward queries at distinct points: outputs are
        // uniform over distinct pairs.
        let cfg = PermOracleConfig::new(4, 2, vec![4]).unwrap();
        let layout = cfg.adversary_layout();
        // Registers: w0 (holds first answer), b, x, y.
        let a0 = basis_permutation_matrix(&layout, |_| {}); // query x = 0
        let a1 = basis_permutation_matrix(&layout, |vals| {
            vals[0] ^= vals[3]; // save y
            vals[3] ^= vals[0]; // y ← 0
            vals[2] ^= 1; // x ← 1
        });
        let a2 = basis_permutation_matrix(&layout, |_| {});
        let adv = AdversaryCircuit::new(vec![a0, a1, a2], 0).unwrap();
        let rho = run_perm_standard_experiment(&cfg, &adv).unwrap();
        let mut collision_mass = 0.0;
        let mut pair_probs = Vec::new();
        for i in 0..layout.dim() {
            let vals = layout.decode(i);
            let p = rho.matrix()[(i, i)].re;
            if vals[0] == vals[3] {
                collision_mass += p;
            } else if p > 1e-12 {
                pair_probs.push(p);
            }
        }
        assert!(collision_mass < 1e-12);
        // 4 × 3 ordered distinct pairs, each with probability 1/12.
        assert_eq!(pair_probs.len(), 12);
        for p in pair_probs {
            assert_abs_diff_eq!(p, 1.0 / 12.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bounded_growth_is_exact() {
        let cfg = PermOracleConfig::new(4, 3, vec![]).unwrap();
        let space = cfg.space().unwrap();
        let layout = cfg.full_layout(&space);
        let db_pos = layout.position("db").unwrap();
        let mut rng = crate::rng::seeded(29);
        for q in 1..=2usize {
            let adv = random_adversary(&cfg.adversary_layout(), q, &mut rng);
            let (psi, _) = run_cp_experiment(&cfg, &adv).unwrap();
            let overflow: f64 = psi
                .iter()
                .filter(|&(idx, _)| space.size_of_index(layout.value_at(idx, db_pos)) > q)
                .map(|(_, a)| a.norm_sqr())
                .sum();
            assert!(overflow.sqrt() <= 1e-12, "q={q} overflow {overflow}");
        }
    }

    #[test]
    fn q0_views_agree_exactly() {
        let cfg = PermOracleConfig::new(4, 1, vec![2]).unwrap();
        let mut rng = crate::rng::seeded(31);
        let adv = random_adversary(&cfg.adversary_layout(), 0, &mut rng);
        let rho = run_perm_standard_experiment(&cfg, &adv).unwrap();
        let (_, view) = run_cp_experiment(&cfg, &adv).unwrap();
        assert_abs_diff_eq!(trace_distance(&rho, &view).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn classical_fresh_query_views_agree() {
        // One classical forward query: both views are uniform over [N],
        // trace distance 0 — soundness is exact for classical access.
        let cfg = PermOracleConfig::new(4, 1, vec![]).unwrap();
        let layout = cfg.adversary_layout();
        let id = DMatrix::identity(layout.dim(), layout.dim());
        let adv = AdversaryCircuit::new(vec![id.clone(), id], 0).unwrap();
        let rho = run_perm_standard_experiment(&cfg, &adv).unwrap();
        let (_, view) = run_cp_experiment(&cfg, &adv).unwrap();
        assert!(trace_distance(&rho, &view).unwrap() < 1e-12);
        let y_pos = layout.position("y").unwrap();
        for y in 0..4 {
            let i = layout.with_value(layout.encode(&[0, 0, 0]), y_pos, y);
            assert_abs_diff_eq!(rho.matrix()[(i, i)].re, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn fundamental_lemma_for_honest_and_blind_adversaries() {
        // Workspace: tuple registers (x̂, ŷ) with cardinalities (N, N).
        let cfg = PermOracleConfig::new(4, 2, vec![4, 4]).unwrap();
        let layout = cfg.adversary_layout();

        // Honest: forward query x = 3, copy (x, y) into the tuple.
        let a0 = basis_permutation_matrix(&layout, |vals| {
            vals[3] ^= 3;
        });
        let a1 = basis_permutation_matrix(&layout, |vals| {
            vals[0] ^= vals[3];
            vals[1] ^= vals[4];
        });
        let honest = AdversaryCircuit::new(vec![a0, a1], 0).unwrap();
        let check = perm_fundamental_lemma_check(&cfg, &honest, 1).unwrap();
        assert!(check.lhs > 0.9, "honest lhs {}", check.lhs);
        assert!(check.holds(1e-9));

        // Blind guess (0, 1), no queries.
        let a0 = basis_permutation_matrix(&layout, |vals| {
            vals[1] ^= 1;
        });
        let blind = AdversaryCircuit::new(vec![a0], 0).unwrap();
        let check = perm_fundamental_lemma_check(&cfg, &blind, 1).unwrap();
        assert!(
            check.lhs <= 1.0 / (3.0f64).sqrt() + 1e-9,
            "blind lhs {}",
            check.lhs
        );
        assert!(check.holds(1e-9));

        // l = 0 trivial.
        let id = DMatrix::identity(layout.dim(), layout.dim());
        let trivial = AdversaryCircuit::new(vec![id], 0).unwrap();
        let check = perm_fundamental_lemma_check(&cfg, &trivial, 0).unwrap();
        assert_abs_diff_eq!(check.lhs, 1.0, epsilon = 1e-10);
        assert!(check.holds(1e-9));
    }

    #[test]
    fn fundamental_lemma_on_random_adversaries() {
        let cfg = PermOracleConfig::new(4, 2, vec![4, 4]).unwrap();
        let mut rng = crate::rng::seeded(37);
        for _ in 0..3 {
            let adv = random_adversary(&cfg.adversary_layout(), 1, &mut rng);
            let check = perm_fundamental_lemma_check(&cfg, &adv, 1).unwrap();
            assert!(check.holds(1e-9), "lhs {} rhs {}", check.lhs, check.rhs);
        }
    }
}
