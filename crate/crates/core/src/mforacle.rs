//! The purified masked-Feistel oracle and its soundness machinery:
//! the query operator mfP, the masked compression mfC and its sanitized
//! and ideal variants, the flip mfF, the two-way oracle cmfO,
//! sophisticated states |P(I)⟩, the intertwiner into the tagged union
//! H(I) ⊕ H(P), the subspace projectors (sophisticated, valid,
//! query-valid, in-database, elegant, flip-elegant, allowability), twirl
//! distributions with cromulence estimation, and the end-to-end
//! soundness experiment.
//!
//! The purification register is (π, ω, D_h, D_k, D_f): two twirling
//! permutations on [2^{2n}] and three capped function databases on
//! [2^n].  Full-space construction is supported at n = 1 only (the
//! permutation registers enumerate S_4); larger n is reachable through
//! the Monte Carlo samplers.
//!
//! The union space H(I) ⊕ H(P) is realized as a tagged product layout:
//! tag 0 holds a compressed injective database (the H(I) branch, with
//! the purification registers pinned to 0), tag 1 holds a purification
//! (with the database register pinned to 0).  Compressed-permutation
//! operators act on the tag-0 branch and as the identity on tag 1;
//! masked-Feistel operators do the reverse.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;

use crate::cfo::{apply_swap_compression, pc_allowed, validity_projector, AdversaryCircuit};
use crate::databases::{
    all_permutations, enumerate_space, factorial, DatabaseSpace, InjectiveDatabase, Permutation,
    SpaceKind,
};
use crate::feistel_core::{
    allowed_values, apply_masked_compression, apply_masked_decompression, enumerate_supporting,
    feistel_permutation, is_allowable, triple_support, FeistelParams, TripleDb,
};
use crate::qlinalg::{DensityMatrix, LinearOp, RegisterLayout, SparseState};
use crate::{Error, Result};

/// Amplitudes below this threshold are dropped when assembling
/// projector outputs.
const PROJECTOR_DROP_TOL: f64 = 1e-14;

/// Minimum acceptance rate before rejection sampling aborts.
pub const REJECTION_FLOOR: f64 = 1e-4;

// ---------------------------------------------------------------------------
// Twirl distributions
// ---------------------------------------------------------------------------

/// Which end of an n-bit two-round Feistel pair a permutation came from.
fn feist2_tables(params: FeistelParams, d1: &[usize], d2: &[usize]) -> Permutation {
    feistel_permutation(params, &[d1.to_vec(), d2.to_vec()]).expect("two rounds")
}

/// The distribution of the two outer twirling permutations (π, ω) on
/// [2^{2n}].
#[derive(Clone, Debug)]
pub enum TwirlDistribution {
    /// π, ω independent uniform over S_{2^{2n}}.
    Uniform,
    /// π ∼ two-round Feistel, ω ∼ inverse two-round Feistel:
    /// p(π, ω) = p_{Feist²×Feist²}(π, ω⁻¹).
    Feistel2Pair,
    /// Explicit weighted list of (π index, ω index, weight) over the
    /// `all_permutations` ordering; weights must be nonnegative and sum
    /// to one.
    Custom(Vec<(usize, usize, f64)>),
}

impl TwirlDistribution {
    /// The exact weight matrix p(π, ω) indexed by the
    /// `all_permutations(2^{2n})` ordering; enumerable at n = 1 (and
    /// for custom lists).
    pub fn enumerate_weights(&self, params: FeistelParams) -> Result<Vec<Vec<f64>>> {
        let full = params.full();
        let count = factorial(full);
        if count > crate::cpo::PERM_ENUM_CAP {
            return Err(Error::CapExceeded {
                count,
                cap: crate::cpo::PERM_ENUM_CAP,
            });
        }
        let perms = all_permutations(full);
        let index: HashMap<Vec<usize>, usize> = perms
            .iter()
            .enumerate()
            .map(|(i, p)| (p.table().to_vec(), i))
            .collect();
        let mut w = vec![vec![0.0; count]; count];
        match self {
            TwirlDistribution::Uniform => {
                let p = 1.0 / (count * count) as f64;
                for row in &mut w {
                    row.fill(p);
                }
            }
            TwirlDistribution::Feistel2Pair => {
                // Marginal of Feist² over all (d1, d2) round-function
                // pairs; ω gets the weight of its inverse.
                let half = params.half();
                let tables = half.pow(half as u32);
                let mut marginal = vec![0.0; count];
                for c1 in 0..tables {
                    for c2 in 0..tables {
                        let dec = |c: usize| -> Vec<usize> {
                            (0..half).map(|i| (c / half.pow(i as u32)) % half).collect()
                        };
                        let pi = feist2_tables(params, &dec(c1), &dec(c2));
                        marginal[index[&pi.table().to_vec()]] += 1.0 / (tables * tables) as f64;
                    }
                }
                let inv_idx: Vec<usize> = perms
                    .iter()
                    .map(|p| {
                        let mut inv = vec![0; full];
                        for v in 0..full {
                            inv[p.apply(v)] = v;
                        }
                        index[&inv]
                    })
                    .collect();
                for (pi, row) in w.iter_mut().enumerate() {
                    for (om, cell) in row.iter_mut().enumerate() {
                        *cell = marginal[pi] * marginal[inv_idx[om]];
                    }
                }
            }
            TwirlDistribution::Custom(list) => {
                let mut total = 0.0;
                for &(pi, om, p) in list {
                    if p < 0.0 {
                        return Err(Error::InvalidArgument("negative twirl weight".into()));
                    }
                    if pi >= count || om >= count {
                        return Err(Error::InvalidArgument("twirl index out of range".into()));
                    }
                    w[pi][om] += p;
                    total += p;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "twirl weights sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(w)
    }

    /// Draw one (π, ω) pair; works at any n.
    pub fn sample<R: Rng>(&self, params: FeistelParams, rng: &mut R) -> (Permutation, Permutation) {
        use rand::seq::SliceRandom;
        let full = params.full();
        let half = params.half();
        match self {
            TwirlDistribution::Uniform => {
                let mut t1: Vec<usize> = (0..full).collect();
                let mut t2: Vec<usize> = (0..full).collect();
                t1.shuffle(rng);
                t2.shuffle(rng);
                (
                    Permutation::from_table(t1).unwrap(),
                    Permutation::from_table(t2).unwrap(),
                )
            }
            TwirlDistribution::Feistel2Pair => {
                let mut round = || -> Vec<usize> {
                    (0..half).map(|_| rng.gen_range(0..half)).collect()
                };
                let pi = feist2_tables(params, &round(), &round());
                let psi = feist2_tables(params, &round(), &round());
                (pi, invert(&psi))
            }
            TwirlDistribution::Custom(list) => {
                let perms = all_permutations(full);
                let r: f64 = rng.gen();
                let mut acc = 0.0;
                for &(pi, om, p) in list {
                    acc += p;
                    if r < acc {
                        return (perms[pi].clone(), perms[om].clone());
                    }
                }
                let &(pi, om, _) = list.last().expect("nonempty custom list");
                (perms[pi].clone(), perms[om].clone())
            }
        }
    }
}

fn invert(p: &Permutation) -> Permutation {
    let n = p.table().len();
    let mut t = vec![0; n];
    for v in 0..n {
        t[p.apply(v)] = v;
    }
    Permutation::from_table(t).unwrap()
}

/// π * I * ω: the internal database {(π(x), ω⁻¹(y))} supported when the
/// full masked-Feistel ensemble supports I.
pub fn star_action(
    pi: &Permutation,
    i: &InjectiveDatabase,
    omega: &Permutation,
) -> InjectiveDatabase {
    let n = pi.table().len();
    let mut out = InjectiveDatabase::empty(n);
    for (x, y) in i.pairs() {
        out = out.assign(pi.apply(x), Some(omega.apply_inverse(y)));
    }
    out
}

// ---------------------------------------------------------------------------
// Purification space
// ---------------------------------------------------------------------------

type PMap = HashMap<usize, Complex64>;

/// The tagged union H(I) ⊕ H(P) together with the adversary-facing
/// registers (workspace, direction bit, X, Y).
#[derive(Clone)]
pub struct PurificationSpace {
    pub params: FeistelParams,
    pub t_max: usize,
    pub workspace: Vec<usize>,
    pub layout: Arc<RegisterLayout>,
    p_layout: Arc<RegisterLayout>,
    pub idb: Arc<DatabaseSpace>,
    pub comp: Arc<DatabaseSpace>,
    pub perms: Vec<Permutation>,
    perm_inv: Vec<usize>,
    b_pos: usize,
    x_pos: usize,
    y_pos: usize,
    tag_pos: usize,
}

/// Positions inside the internal purification sub-layout.
const P_TAG: usize = 0;
const P_IDB: usize = 1;
const P_PI: usize = 2;
const P_OM: usize = 3;
const P_H: usize = 4;
const P_K: usize = 5;
const P_F: usize = 6;

impl PurificationSpace {
    pub fn new(params: FeistelParams, t_max: usize, workspace: Vec<usize>) -> Result<Self> {
        let full = params.full();
        let half = params.half();
        if factorial(full) > crate::cpo::PERM_ENUM_CAP {
            return Err(Error::CapExceeded {
                count: factorial(full),
                cap: crate::cpo::PERM_ENUM_CAP,
            });
        }
        let idb = Arc::new(enumerate_space(
            SpaceKind::Injective,
            full,
            full,
            t_max.min(full),
        )?);
        let comp = Arc::new(enumerate_space(
            SpaceKind::Functions,
            half,
            half,
            t_max.min(half),
        )?);
        let perms = all_permutations(full);
        let index: HashMap<Vec<usize>, usize> = perms
            .iter()
            .enumerate()
            .map(|(i, p)| (p.table().to_vec(), i))
            .collect();
        let perm_inv: Vec<usize> = perms.iter().map(|p| index[invert(p).table()]).collect();

        let np = perms.len();
        let mut regs: Vec<(String, usize)> = workspace
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("w{i}"), c))
            .collect();
        regs.push(("b".into(), 2));
        regs.push(("x".into(), full));
        regs.push(("y".into(), full));
        regs.push(("tag".into(), 2));
        regs.push(("idb".into(), idb.len()));
        regs.push(("pi".into(), np));
        regs.push(("om".into(), np));
        regs.push(("h".into(), comp.len()));
        regs.push(("k".into(), comp.len()));
        regs.push(("f".into(), comp.len()));
        let pairs: Vec<(&str, usize)> = regs.iter().map(|(n, c)| (n.as_str(), *c)).collect();
        let layout = Arc::new(RegisterLayout::new(&pairs)?);
        let p_layout = Arc::new(RegisterLayout::new(&[
            ("tag", 2),
            ("idb", idb.len()),
            ("pi", np),
            ("om", np),
            ("h", comp.len()),
            ("k", comp.len()),
            ("f", comp.len()),
        ])?);
        let b_pos = layout.position("b")?;
        Ok(Self {
            params,
            t_max,
            workspace,
            x_pos: b_pos + 1,
            y_pos: b_pos + 2,
            tag_pos: b_pos + 3,
            layout,
            p_layout,
            idb,
            comp,
            perms,
            perm_inv,
            b_pos,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn triple_pos(&self) -> (usize, usize, usize) {
        (self.tag_pos + 4, self.tag_pos + 5, self.tag_pos + 6)
    }

    /// Compress the seven trailing registers of a full index into a
    /// purification sub-index.
    fn p_key(&self, idx: usize) -> usize {
        let vals = self.layout.decode(idx);
        self.p_layout.encode(&vals[self.tag_pos..self.tag_pos + 7])
    }

    /// The full index with the seven trailing registers zeroed.
    fn ctx(&self, idx: usize) -> usize {
        let mut i = idx;
        for pos in self.tag_pos..self.tag_pos + 7 {
            i = self.layout.with_value(i, pos, 0);
        }
        i
    }

    fn combine(&self, ctx: usize, p_key: usize) -> usize {
        let vals = self.p_layout.decode(p_key);
        let mut i = ctx;
        for (off, &v) in vals.iter().enumerate() {
            i = self.layout.with_value(i, self.tag_pos + off, v);
        }
        i
    }

    /// Full-layout basis state on the H(I) branch (adversary registers
    /// zeroed).
    pub fn i_branch_state(&self, i: &InjectiveDatabase) -> SparseState {
        let idx = self
            .idb
            .index_of_injective(i)
            .expect("database within the cap");
        let key = self.p_layout.encode(&[0, idx, 0, 0, 0, 0, 0]);
        SparseState::basis(self.layout.clone(), self.combine(0, key))
    }

    /// Full-layout basis purification |π, ω, D⟩ on the H(P) branch.
    pub fn basis_purification(
        &self,
        pi_idx: usize,
        om_idx: usize,
        d: &TripleDb,
    ) -> SparseState {
        let key = self.purification_key(pi_idx, om_idx, d);
        SparseState::basis(self.layout.clone(), self.combine(0, key))
    }

    fn purification_key(&self, pi_idx: usize, om_idx: usize, d: &TripleDb) -> usize {
        let h = self.comp.index_of(&d.d_h).expect("h within cap");
        let k = self.comp.index_of(&d.d_k).expect("k within cap");
        let f = self.comp.index_of(&d.d_f).expect("f within cap");
        self.p_layout.encode(&[1, 0, pi_idx, om_idx, h, k, f])
    }

    /// The resolving set R_I with normalized conditional weights
    /// p_{D_I}(π, ω); errors when R_I is empty.
    pub fn resolving_pairs(
        &self,
        dist: &TwirlDistribution,
        i: &InjectiveDatabase,
    ) -> Result<Vec<(usize, usize, f64)>> {
        let weights = dist.enumerate_weights(self.params)?;
        let mut pairs = Vec::new();
        let mut total = 0.0;
        for (pi_idx, row) in weights.iter().enumerate() {
            for (om_idx, &p) in row.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let a = star_action(&self.perms[pi_idx], i, &self.perms[om_idx]);
                if is_allowable(self.params, &a) {
                    pairs.push((pi_idx, om_idx, p));
                    total += p;
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::InvalidArgument(
                "no twirl pair resolves the database".into(),
            ));
        }
        for p in &mut pairs {
            p.2 /= total;
        }
        Ok(pairs)
    }

    /// |P(I)⟩ as a purification sub-index map.
    fn sophisticated_pmap(
        &self,
        dist: &TwirlDistribution,
        i: &InjectiveDatabase,
    ) -> Result<PMap> {
        let mut map = PMap::new();
        for (pi_idx, om_idx, p) in self.resolving_pairs(dist, i)? {
            let a = star_action(&self.perms[pi_idx], i, &self.perms[om_idx]);
            let triples = enumerate_supporting(self.params, &a)?;
            let amp = Complex64::new((p / triples.len() as f64).sqrt(), 0.0);
            for d in &triples {
                *map.entry(self.purification_key(pi_idx, om_idx, d))
                    .or_insert(Complex64::new(0.0, 0.0)) += amp;
            }
        }
        Ok(map)
    }

    /// The sophisticated state |P(I)⟩ on the full layout (adversary
    /// registers zeroed).
    pub fn sophisticated_state(
        &self,
        dist: &TwirlDistribution,
        i: &InjectiveDatabase,
    ) -> Result<SparseState> {
        let map = self.sophisticated_pmap(dist, i)?;
        Ok(SparseState::from_terms(
            self.layout.clone(),
            map.into_iter().map(|(k, a)| (self.combine(0, k), a)),
        ))
    }

    /// All existing sophisticated states (R_I nonempty) within the cap,
    /// plus the |+_{x,P(I)}⟩ superpositions whose components all exist.
    pub fn soph_basis(&self, dist: &TwirlDistribution) -> Result<SophBasis> {
        let full = self.params.full();
        let mut entries = Vec::new();
        let mut by_idb = HashMap::new();
        for idb_idx in 0..self.idb.len() {
            let i = self.idb.injective(idb_idx);
            if let Ok(map) = self.sophisticated_pmap(dist, &i) {
                by_idb.insert(idb_idx, entries.len());
                entries.push((idb_idx, map));
            }
        }
        // Blocks (x, I): x undefined and every extension present.  A
        // block contributes only when it is complete, i.e. P(I[x→y])
        // exists for every fresh y.
        let mut plus = HashMap::new();
        let mut blocks = HashMap::new();
        for (base_pos, &(idb_idx, _)) in entries.iter().enumerate() {
            let i = self.idb.injective(idb_idx);
            let t = i.size();
            'outer: for x in 0..full {
                if i.get(x).is_some() {
                    continue;
                }
                let im = i.image();
                let mut map = PMap::new();
                let mut members = vec![base_pos];
                let scale = Complex64::new(1.0 / ((full - t) as f64).sqrt(), 0.0);
                for y in 0..full {
                    if im.contains(&y) {
                        continue;
                    }
                    let ext = self.idb.index_of_injective(&i.assign(x, Some(y)));
                    let Some(ext_idx) = ext else { continue 'outer };
                    let Some(&pos) = by_idb.get(&ext_idx) else {
                        continue 'outer;
                    };
                    members.push(pos);
                    for (&k, &a) in &entries[pos].1 {
                        *map.entry(k).or_insert(Complex64::new(0.0, 0.0)) += scale * a;
                    }
                }
                plus.insert((x, idb_idx), map);
                blocks.insert((x, idb_idx), members);
            }
        }
        Ok(SophBasis {
            entries,
            by_idb,
            plus,
            blocks,
        })
    }

    /// Bucket a state by its adversary-register context and rewrite
    /// each bucket's purification part with `f(x, map)`.
    fn apply_xp(
        &self,
        s: &SparseState,
        f: &dyn Fn(usize, &PMap) -> PMap,
    ) -> SparseState {
        let mut buckets: HashMap<usize, PMap> = HashMap::new();
        for (idx, amp) in s.iter() {
            *buckets
                .entry(self.ctx(idx))
                .or_default()
                .entry(self.p_key(idx))
                .or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        let mut out = SparseState::zero(self.layout.clone());
        for (ctx, map) in buckets {
            let x = self.layout.value_at(ctx, self.x_pos);
            for (k, a) in f(x, &map) {
                if a.norm() > PROJECTOR_DROP_TOL {
                    out.add_term(self.combine(ctx, k), a);
                }
            }
        }
        out.prune();
        out
    }

    fn xp_op(
        &self,
        f: impl Fn(usize, &PMap) -> PMap + Clone + Send + Sync + 'static,
    ) -> LinearOp {
        let me = self.clone();
        let apply = move |s: &SparseState| me.apply_xp(s, &f);
        let a2 = apply.clone();
        LinearOp::from_fns(self.dim(), apply, a2)
    }

    fn diagonal_op(
        &self,
        keep: impl Fn(&Self, usize) -> bool + Clone + Send + Sync + 'static,
    ) -> LinearOp {
        let me = self.clone();
        LinearOp::projector_where(self.dim(), move |idx| keep(&me, idx))
    }

    fn p_reg(&self, idx: usize, off: usize) -> usize {
        self.layout.value_at(idx, self.tag_pos + off)
    }

    /// The triple stored at a tag-1 index.
    fn triple_at(&self, idx: usize) -> TripleDb {
        TripleDb {
            d_h: self.comp.database(self.p_reg(idx, P_H)),
            d_k: self.comp.database(self.p_reg(idx, P_K)),
            d_f: self.comp.database(self.p_reg(idx, P_F)),
        }
    }

    // -- Elementary operators -------------------------------------------

    /// mfP: on the H(P) branch XOR the chain-determined answer ω(v)
    /// into Y when the chain at π(x) is complete; identity otherwise
    /// and on the H(I) branch.  (Forward queries; cmfO supplies the
    /// direction handling.)
    pub fn mfp_op(&self) -> LinearOp {
        let me = self.clone();
        let map = move |idx: usize| -> usize {
            if me.p_reg(idx, P_TAG) != 1 {
                return idx;
            }
            let x = me.layout.value_at(idx, me.x_pos);
            let pi = &me.perms[me.p_reg(idx, P_PI)];
            let om = &me.perms[me.p_reg(idx, P_OM)];
            let d = me.triple_at(idx);
            let u = pi.apply(x);
            let (ul, ur) = (me.params.left(u), me.params.right(u));
            let Some(z) = d.d_h.get(ul) else { return idx };
            let Some(w) = d.d_k.get(ur ^ z) else { return idx };
            let Some(z2) = d.d_f.get(ul ^ w) else { return idx };
            let v = u ^ me.params.concat(w, z ^ z2);
            let y = me.layout.value_at(idx, me.y_pos);
            me.layout.with_value(idx, me.y_pos, y ^ om.apply(v))
        };
        let m2 = map.clone();
        LinearOp::basis_permutation(self.dim(), map, m2)
    }

    /// The extended purified permutation query P: on the H(I) branch
    /// XOR I(x) into Y when defined; identity otherwise and on H(P).
    pub fn perm_query_op(&self) -> LinearOp {
        let me = self.clone();
        let map = move |idx: usize| -> usize {
            if me.p_reg(idx, P_TAG) != 0 {
                return idx;
            }
            let x = me.layout.value_at(idx, me.x_pos);
            match me.idb.injective(me.p_reg(idx, P_IDB)).get(x) {
                Some(v) => {
                    let y = me.layout.value_at(idx, me.y_pos);
                    me.layout.with_value(idx, me.y_pos, y ^ v)
                }
                None => idx,
            }
        };
        let m2 = map.clone();
        LinearOp::basis_permutation(self.dim(), map, m2)
    }

    /// mfF: invert and exchange the twirl permutations and swap the H
    /// and F databases (H(P) branch; identity on H(I)).
    pub fn mff_op(&self) -> LinearOp {
        let me = self.clone();
        let map = move |idx: usize| -> usize {
            if me.p_reg(idx, P_TAG) != 1 {
                return idx;
            }
            let pi = me.p_reg(idx, P_PI);
            let om = me.p_reg(idx, P_OM);
            let h = me.p_reg(idx, P_H);
            let f = me.p_reg(idx, P_F);
            let mut i = me.layout.with_value(idx, me.tag_pos + P_PI, me.perm_inv[om]);
            i = me.layout.with_value(i, me.tag_pos + P_OM, me.perm_inv[pi]);
            i = me.layout.with_value(i, me.tag_pos + P_H, f);
            me.layout.with_value(i, me.tag_pos + P_F, h)
        };
        let m2 = map.clone();
        LinearOp::basis_permutation(self.dim(), map, m2)
    }

    /// The database flip F|I⟩ = |I⁻¹⟩ on the H(I) branch.
    pub fn flip_op(&self) -> LinearOp {
        let me = self.clone();
        let map = move |idx: usize| -> usize {
            if me.p_reg(idx, P_TAG) != 0 {
                return idx;
            }
            let i = me.idb.injective(me.p_reg(idx, P_IDB));
            let flipped = me
                .idb
                .index_of_injective(&i.flip())
                .expect("flip preserves size");
            me.layout.with_value(idx, me.tag_pos + P_IDB, flipped)
        };
        let m2 = map.clone();
        LinearOp::basis_permutation(self.dim(), map, m2)
    }

    fn controlled_on_b(&self, op: LinearOp) -> LinearOp {
        let me = self.clone();
        let apply = move |s: &SparseState| {
            let hold = SparseState::from_terms(
                s.layout().clone(),
                s.iter().filter(|&(i, _)| me.layout.value_at(i, me.b_pos) == 0),
            );
            let act = SparseState::from_terms(
                s.layout().clone(),
                s.iter().filter(|&(i, _)| me.layout.value_at(i, me.b_pos) == 1),
            );
            let mut out = op.apply(&act);
            out.add_scaled(&hold, Complex64::new(1.0, 0.0));
            out
        };
        let a2 = apply.clone();
        // mfF and F are involutions, so both branches are Hermitian.
        LinearOp::from_fns(self.dim(), apply, a2)
    }

    /// ctrl-mfF: apply mfF when the direction bit is 1.
    pub fn ctrl_mff_op(&self) -> LinearOp {
        self.controlled_on_b(self.mff_op())
    }

    /// ctrl-F on the H(I) branch.
    pub fn ctrl_flip_op(&self) -> LinearOp {
        self.controlled_on_b(self.flip_op())
    }

    /// mfC (`canonical = false`) or its sanitized variant m̃fC
    /// (`canonical = true`): per (x, π) bucket, the masked compression
    /// U_{π(x)} resp. G_{π(x)} on the internal databases.
    pub fn mfc_op(&self, canonical: bool) -> LinearOp {
        let me = self.clone();
        let run = move |s: &SparseState, compress: bool| -> SparseState {
            let mut hold = SparseState::zero(me.layout.clone());
            let mut buckets: HashMap<(usize, usize), SparseState> = HashMap::new();
            for (idx, amp) in s.iter() {
                if me.p_reg(idx, P_TAG) != 1 {
                    hold.add_term(idx, amp);
                    continue;
                }
                let key = (me.layout.value_at(idx, me.x_pos), me.p_reg(idx, P_PI));
                buckets
                    .entry(key)
                    .or_insert_with(|| SparseState::zero(me.layout.clone()))
                    .add_term(idx, amp);
            }
            let mut out = hold;
            for ((x, pi_idx), part) in buckets {
                let u = me.perms[pi_idx].apply(x);
                let res = if compress {
                    apply_masked_compression(
                        me.params,
                        &me.comp,
                        me.triple_pos(),
                        u,
                        canonical,
                        &part,
                    )
                } else {
                    apply_masked_decompression(
                        me.params,
                        &me.comp,
                        me.triple_pos(),
                        u,
                        canonical,
                        &part,
                    )
                };
                out.add_scaled(&res, Complex64::new(1.0, 0.0));
            }
            out.prune();
            out
        };
        let run2 = run.clone();
        LinearOp::from_fns(
            self.dim(),
            move |s| run(s, true),
            move |s| run2(s, false),
        )
    }

    /// pC on the H(I) branch, controlled on X; identity on H(P).
    pub fn pc_op(&self) -> LinearOp {
        let me = self.clone();
        let run = move |s: &SparseState| -> SparseState {
            let hold = SparseState::from_terms(
                s.layout().clone(),
                s.iter().filter(|&(i, _)| me.p_reg(i, P_TAG) != 0),
            );
            let act = SparseState::from_terms(
                s.layout().clone(),
                s.iter().filter(|&(i, _)| me.p_reg(i, P_TAG) == 0),
            );
            let x_pos = me.x_pos;
            let lay = me.layout.clone();
            let mut out = apply_swap_compression(
                &me.idb,
                &me.layout,
                me.tag_pos + P_IDB,
                &|idx| lay.value_at(idx, x_pos),
                &pc_allowed(),
                &act,
            )
            .expect("database cap too small for pC");
            out.add_scaled(&hold, Complex64::new(1.0, 0.0));
            out.prune();
            out
        };
        let r2 = run.clone();
        LinearOp::from_fns(self.dim(), run, r2)
    }

    /// The compressed permutation oracle cP on the H(I) branch
    /// (identity on H(P)).
    pub fn cp_op(&self) -> LinearOp {
        let pc = self.pc_op();
        let p = self.perm_query_op();
        let forward = pc.times(&p).times(&pc.adjoint());
        let cf = self.ctrl_flip_op();
        cf.times(&forward).times(&cf.adjoint())
    }

    /// cmfO = ctrl-mfF · mfC · mfP · mfC† · ctrl-mfF†.
    pub fn cmfo_op(&self) -> LinearOp {
        let mfc = self.mfc_op(false);
        let core = mfc.times(&self.mfp_op()).times(&mfc.adjoint());
        let cf = self.ctrl_mff_op();
        cf.times(&core).times(&cf.adjoint())
    }

    // -- Subspace projectors ---------------------------------------------

    /// Π^soph = Σ_I |P(I)⟩⟨P(I)|.
    pub fn soph_projector(&self, basis: &Arc<SophBasis>) -> LinearOp {
        let basis = basis.clone();
        self.xp_op(move |_x, v| {
            let mut out = PMap::new();
            for (_, state) in &basis.entries {
                accumulate_projection(&mut out, state, v);
            }
            out
        })
    }

    /// The intertwiner (1 + Σ_I |I⟩⟨P(I)| − |P(I)⟩⟨P(I)|) Π_{H(P)}: an
    /// isometry from the purification branch mapping each sophisticated
    /// state onto its database label and fixing the orthogonal
    /// complement.  The adjoint maps labels back and lands in H(P).
    pub fn intertwiner(&self, basis: &Arc<SophBasis>) -> LinearOp {
        let basis = basis.clone();
        let basis2 = basis.clone();
        let p_layout = self.p_layout.clone();
        let p_layout2 = p_layout.clone();
        let tag_of = |lay: &RegisterLayout, k: usize| lay.value_at(k, P_TAG);
        let fwd = self.clone().into_xp_fn(move |_x, v: &PMap| {
            let v1: PMap = v
                .iter()
                .filter(|(&k, _)| tag_of(&p_layout, k) == 1)
                .map(|(&k, &a)| (k, a))
                .collect();
            let mut out = v1.clone();
            for (idb_idx, state) in &basis.entries {
                let ov = pmap_dot(state, &v1);
                if ov.norm() <= PROJECTOR_DROP_TOL {
                    continue;
                }
                let label = p_layout.encode(&[0, *idb_idx, 0, 0, 0, 0, 0]);
                *out.entry(label).or_insert(Complex64::new(0.0, 0.0)) += ov;
                for (&k, &a) in state {
                    *out.entry(k).or_insert(Complex64::new(0.0, 0.0)) -= ov * a;
                }
            }
            out
        });
        let adj = self.clone().into_xp_fn(move |_x, v: &PMap| {
            let v1: PMap = v
                .iter()
                .filter(|(&k, _)| tag_of(&p_layout2, k) == 1)
                .map(|(&k, &a)| (k, a))
                .collect();
            let mut out = v1.clone();
            for (idb_idx, state) in &basis2.entries {
                let label = p_layout2.encode(&[0, *idb_idx, 0, 0, 0, 0, 0]);
                let from_label = v.get(&label).copied().unwrap_or(Complex64::new(0.0, 0.0));
                let ov = pmap_dot(state, &v1);
                let coeff = from_label - ov;
                if coeff.norm() <= PROJECTOR_DROP_TOL {
                    continue;
                }
                for (&k, &a) in state {
                    *out.entry(k).or_insert(Complex64::new(0.0, 0.0)) += coeff * a;
                }
            }
            out
        });
        LinearOp::from_fns(self.dim(), fwd, adj)
    }

    fn into_xp_fn(
        self,
        f: impl Fn(usize, &PMap) -> PMap + Clone + Send + Sync + 'static,
    ) -> impl Fn(&SparseState) -> SparseState + Clone + Send + Sync + 'static {
        move |s: &SparseState| self.apply_xp(s, &f)
    }

    /// Π^val = Ξ_H Ξ_K Ξ_F on the internal function databases (identity
    /// on the H(I) branch).
    pub fn valid_projector(&self) -> LinearOp {
        let xi = validity_projector(&self.comp).to_matrix(&self.comp.layout("db"));
        let me = self.clone();
        let apply = move |s: &SparseState| {
            let hold = SparseState::from_terms(
                s.layout().clone(),
                s.iter().filter(|&(i, _)| me.p_reg(i, P_TAG) != 1),
            );
            let mut act = SparseState::from_terms(
                s.layout().clone(),
                s.iter().filter(|&(i, _)| me.p_reg(i, P_TAG) == 1),
            );
            for off in [P_H, P_K, P_F] {
                act = apply_matrix_on_register(&me.layout, me.tag_pos + off, &xi, &act);
            }
            let mut out = act;
            out.add_scaled(&hold, Complex64::new(1.0, 0.0));
            out.prune();
            out
        };
        let a2 = apply.clone();
        LinearOp::from_fns(self.dim(), apply, a2)
    }

    /// Π^indb: the query point is defined after decompression — on
    /// H(P), Supp(D)(π(x)) ≠ ⊥; on H(I), I(x) ≠ ⊥.
    pub fn indb_projector(&self) -> LinearOp {
        self.diagonal_op(|me, idx| {
            let x = me.layout.value_at(idx, me.x_pos);
            if me.p_reg(idx, P_TAG) == 1 {
                let u = me.perms[me.p_reg(idx, P_PI)].apply(x);
                triple_support(me.params, &me.triple_at(idx)).get(u).is_some()
            } else {
                me.idb.injective(me.p_reg(idx, P_IDB)).get(x).is_some()
            }
        })
    }

    /// Π^♥: the internal database allows π(x) (H(P) branch; identity on
    /// H(I)).
    pub fn heart_projector(&self) -> LinearOp {
        self.diagonal_op(|me, idx| {
            if me.p_reg(idx, P_TAG) != 1 {
                return true;
            }
            let x = me.layout.value_at(idx, me.x_pos);
            let u = me.perms[me.p_reg(idx, P_PI)].apply(x);
            let supp = triple_support(me.params, &me.triple_at(idx));
            supp.get(u).is_none() && allowed_values(me.params, &supp, u).is_ok()
        })
    }

    /// Π^qval = ctrl-mfF · mfC · Π^indb · mfC† · ctrl-mfF†.
    pub fn qval_projector(&self) -> LinearOp {
        let mfc = self.mfc_op(false);
        let inner = mfc.times(&self.indb_projector()).times(&mfc.adjoint());
        let cf = self.ctrl_mff_op();
        cf.times(&inner).times(&cf.adjoint())
    }

    /// Π^ele: per x, the direct sum over complete blocks
    /// {P(I)} ∪ {P(I[x→y])} of the block projector minus the
    /// |+_{x,P(I)}⟩ direction.
    pub fn ele_projector(&self, basis: &Arc<SophBasis>) -> LinearOp {
        let basis = basis.clone();
        self.xp_op(move |x, v| {
            let mut out = PMap::new();
            for ((bx, idb_idx), members) in &basis.blocks {
                if *bx != x {
                    continue;
                }
                for &pos in members {
                    accumulate_projection(&mut out, &basis.entries[pos].1, v);
                }
                let plus = &basis.plus[&(x, *idb_idx)];
                let ov = pmap_dot(plus, v);
                for (&k, &a) in plus {
                    *out.entry(k).or_insert(Complex64::new(0.0, 0.0)) -= ov * a;
                }
            }
            out
        })
    }

    /// Π^fele = ctrl-mfF · Π^ele · ctrl-mfF†.
    pub fn fele_projector(&self, basis: &Arc<SophBasis>) -> LinearOp {
        let cf = self.ctrl_mff_op();
        cf.times(&self.ele_projector(basis)).times(&cf.adjoint())
    }

    // -- Ideal operators ---------------------------------------------------

    /// The ideal masked-Feistel compression m̄fC: blockwise the swap of
    /// |P(I)⟩ and |+_{x,P(I)}⟩ (a Hermitian involution mirroring pC).
    pub fn ideal_mfc_op(&self, basis: &Arc<SophBasis>) -> LinearOp {
        let basis = basis.clone();
        self.xp_op(move |x, v| {
            let mut out = v.clone();
            for ((bx, idb_idx), plus) in &basis.plus {
                if *bx != x {
                    continue;
                }
                let base = &basis.entries[basis.by_idb[idb_idx]].1;
                let ov_base = pmap_dot(base, v);
                let ov_plus = pmap_dot(plus, v);
                // −|P⟩⟨P| − |+⟩⟨+| + |P⟩⟨+| + |+⟩⟨P|.
                for (&k, &a) in base {
                    *out.entry(k).or_insert(Complex64::new(0.0, 0.0)) +=
                        (ov_plus - ov_base) * a;
                }
                for (&k, &a) in plus {
                    *out.entry(k).or_insert(Complex64::new(0.0, 0.0)) +=
                        (ov_base - ov_plus) * a;
                }
            }
            out
        })
    }

    /// The ideal oracle c̄mfO = ctrl-mfF · m̄fC · mfP · m̄fC† · ctrl-mfF†.
    pub fn ideal_cmfo_op(&self, basis: &Arc<SophBasis>) -> LinearOp {
        let mfc = self.ideal_mfc_op(basis);
        let core = mfc.times(&self.mfp_op()).times(&mfc.adjoint());
        let cf = self.ctrl_mff_op();
        cf.times(&core).times(&cf.adjoint())
    }
}

/// Precomputed sophisticated states |P(I)⟩ and extension superpositions
/// |+_{x,P(I)}⟩ for one twirl distribution.
pub struct SophBasis {
    /// (database index, purification-sub-index amplitude map) per I
    /// with nonempty resolving set.
    entries: Vec<(usize, PMap)>,
    by_idb: HashMap<usize, usize>,
    /// |+_{x,P(I)}⟩ keyed by (x, database index of I).
    plus: HashMap<(usize, usize), PMap>,
    /// Entry positions of {P(I)} ∪ {P(I[x→y])} per complete block.
    blocks: HashMap<(usize, usize), Vec<usize>>,
}

impl SophBasis {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn pmap_dot(a: &PMap, b: &PMap) -> Complex64 {
    let (small, big, conj_small) = if a.len() <= b.len() {
        (a, b, true)
    } else {
        (b, a, false)
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, v) in small {
        if let Some(w) = big.get(k) {
            acc += if conj_small { v.conj() * w } else { w.conj() * v };
        }
    }
    acc
}

fn accumulate_projection(out: &mut PMap, state: &PMap, v: &PMap) {
    let ov = pmap_dot(state, v);
    if ov.norm() <= PROJECTOR_DROP_TOL {
        return;
    }
    for (&k, &a) in state {
        *out.entry(k).or_insert(Complex64::new(0.0, 0.0)) += ov * a;
    }
}

fn apply_matrix_on_register(
    layout: &Arc<RegisterLayout>,
    pos: usize,
    mat: &nalgebra::DMatrix<Complex64>,
    s: &SparseState,
) -> SparseState {
    let mut out = SparseState::zero(layout.clone());
    for (idx, amp) in s.iter() {
        let v = layout.value_at(idx, pos);
        for v2 in 0..mat.nrows() {
            let c = mat[(v2, v)];
            if c.norm() > PROJECTOR_DROP_TOL {
                out.add_term(layout.with_value(idx, pos, v2), c * amp);
            }
        }
    }
    out.prune();
    out
}

// ---------------------------------------------------------------------------
// Cromulence estimation
// ---------------------------------------------------------------------------

/// A point estimate with a Wilson confidence interval.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

/// Wilson score interval for k successes in n trials at z standard
/// deviations.
pub fn wilson(k: usize, n: usize, z: f64) -> Estimate {
    if n == 0 {
        return Estimate {
            value: f64::NAN,
            lo: 0.0,
            hi: 1.0,
            samples: 0,
        };
    }
    let p = k as f64 / n as f64;
    let nf = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    Estimate {
        value: p,
        lo: (center - half).max(0.0),
        hi: (center + half).min(1.0),
        samples: n,
    }
}

/// Measured values of the four cromulence conditions for one (I, x)
/// instance: the resolving probability, the two left-substring moments
/// (with their exact targets 1/2^n and 1/2^{2n}), and — when exactly
/// enumerable — the worst relative normalization deviation.
#[derive(Clone, Debug, Serialize)]
pub struct CromulenceReport {
    pub n: usize,
    pub t: usize,
    pub exact: bool,
    pub cond1: Estimate,
    pub cond2: Estimate,
    pub cond2_target: f64,
    pub cond3: Estimate,
    pub cond3_target: f64,
    pub cond4_max_rel_dev: Option<f64>,
}

/// Estimate the cromulence conditions for `dist` at (I, x).  Exact
/// enumeration at n = 1 (or custom lists); Monte Carlo rejection
/// sampling otherwise, aborting if acceptance falls below
/// [`REJECTION_FLOOR`].
pub fn estimate_cromulence(
    dist: &TwirlDistribution,
    params: FeistelParams,
    i: &InjectiveDatabase,
    x: usize,
    budget: usize,
    seed: u64,
) -> Result<CromulenceReport> {
    let full = params.full();
    if i.get(x).is_some() {
        return Err(Error::InvalidArgument("x must be undefined in I".into()));
    }
    let im = i.image();
    let fresh: Vec<usize> = (0..full).filter(|y| !im.contains(y)).collect();
    let (y, y2) = (fresh[0], fresh[1]);
    let t = i.size();

    if let Ok(weights) = dist.enumerate_weights(params) {
        return exact_cromulence(params, &weights, i, x, y, y2, t);
    }

    // Monte Carlo: sample from D, condition by rejection.
    let mut rng = crate::rng::seeded(seed);
    let mut in_r_i = 0usize;
    let mut in_r_xi = 0usize;
    let mut cond2_hits = 0usize;
    let mut cond3_hits = 0usize;
    let l = 0usize;
    for _ in 0..budget {
        let (pi, om) = dist.sample(params, &mut rng);
        let a = star_action(&pi, i, &om);
        if !is_allowable(params, &a) {
            continue;
        }
        in_r_i += 1;
        let u = pi.apply(x);
        if a.get(u).is_some() || allowed_values(params, &a, u).is_err() {
            continue;
        }
        in_r_xi += 1;
        let vy = om.apply_inverse(y);
        let vy2 = om.apply_inverse(y2);
        if params.left(vy) == l {
            cond2_hits += 1;
            if params.left(vy2) == l {
                cond3_hits += 1;
            }
        }
    }
    if (in_r_i as f64) < REJECTION_FLOOR * budget as f64 {
        return Err(Error::InvalidArgument(format!(
            "resolving acceptance rate {} below floor",
            in_r_i as f64 / budget as f64
        )));
    }
    Ok(CromulenceReport {
        n: params.n,
        t,
        exact: false,
        cond1: wilson(in_r_xi, in_r_i, 3.0),
        cond2: wilson(cond2_hits, in_r_xi, 3.0),
        cond2_target: 1.0 / params.half() as f64,
        cond3: wilson(cond3_hits, in_r_xi, 3.0),
        cond3_target: 1.0 / full as f64,
        cond4_max_rel_dev: None,
    })
}

fn exact_cromulence(
    params: FeistelParams,
    weights: &[Vec<f64>],
    i: &InjectiveDatabase,
    x: usize,
    y: usize,
    y2: usize,
    t: usize,
) -> Result<CromulenceReport> {
    let full = params.full();
    let perms = all_permutations(full);
    struct Pair {
        om: usize,
        p: f64,
        allows_x: bool,
    }
    let mut pairs = Vec::new();
    let mut mass_ri = 0.0;
    let mut mass_rxi = 0.0;
    for (pi_idx, row) in weights.iter().enumerate() {
        for (om_idx, &p) in row.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let a = star_action(&perms[pi_idx], i, &perms[om_idx]);
            if !is_allowable(params, &a) {
                continue;
            }
            let u = perms[pi_idx].apply(x);
            let allows_x = a.get(u).is_none() && allowed_values(params, &a, u).is_ok();
            mass_ri += p;
            if allows_x {
                mass_rxi += p;
            }
            pairs.push(Pair {
                om: om_idx,
                p,
                allows_x,
            });
        }
    }
    if mass_ri <= 0.0 {
        return Err(Error::InvalidArgument("empty resolving set".into()));
    }
    let cond1 = mass_rxi / mass_ri;
    if mass_rxi <= 0.0 {
        // No resolving pair allows x: the conditioned moments are
        // undefined.  This saturates the t²/2^n error regime.
        let exactify = |v: f64| Estimate {
            value: v,
            lo: v,
            hi: v,
            samples: 0,
        };
        return Ok(CromulenceReport {
            n: params.n,
            t,
            exact: true,
            cond1: exactify(0.0),
            cond2: exactify(f64::NAN),
            cond2_target: 1.0 / params.half() as f64,
            cond3: exactify(f64::NAN),
            cond3_target: 1.0 / full as f64,
            cond4_max_rel_dev: None,
        });
    }
    // Worst-case deviation of the first and second moments over all l.
    let mut cond2_worst = 0.0f64;
    let mut cond2_val = 0.0;
    let mut cond3_worst = 0.0f64;
    let mut cond3_val = 0.0;
    let target2 = 1.0 / params.half() as f64;
    let target3 = 1.0 / full as f64;
    for l in 0..params.half() {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for pr in pairs.iter().filter(|p| p.allows_x) {
            let om = &perms[pr.om];
            let hit1 = params.left(om.apply_inverse(y)) == l;
            let hit2 = params.left(om.apply_inverse(y2)) == l;
            if hit1 {
                m1 += pr.p;
            }
            if hit1 && hit2 {
                m2 += pr.p;
            }
        }
        m1 /= mass_rxi;
        m2 /= mass_rxi;
        if (m1 - target2).abs() >= cond2_worst {
            cond2_worst = (m1 - target2).abs();
            cond2_val = m1;
        }
        if (m2 - target3).abs() >= cond3_worst {
            cond3_worst = (m2 - target3).abs();
            cond3_val = m2;
        }
    }
    // Condition (4): normalization ratio over R_{I[x→y]}.
    let iy = i.assign(x, Some(y));
    let mut mass_rixy = 0.0;
    let mut rixy = Vec::new();
    for (pi_idx, row) in weights.iter().enumerate() {
        for (om_idx, &p) in row.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let a = star_action(&perms[pi_idx], &iy, &perms[om_idx]);
            if is_allowable(params, &a) {
                mass_rixy += p;
                rixy.push((pi_idx, om_idx, p));
            }
        }
    }
    let mut cond4 = 0.0f64;
    for (pi_idx, om_idx, p) in rixy {
        let a = star_action(&perms[pi_idx], &iy, &perms[om_idx]);
        let base = star_action(&perms[pi_idx], i, &perms[om_idx]);
        let u = perms[pi_idx].apply(x);
        let v_size = allowed_values(params, &base, u)
            .map(|(v, _)| v.len())
            .unwrap_or(0);
        if v_size == 0 {
            continue;
        }
        debug_assert!(a.size() == t + 1);
        let lhs = (p / mass_rixy / (full - t) as f64).sqrt();
        let rhs = (p / mass_rxi / v_size as f64).sqrt();
        if rhs > 0.0 {
            cond4 = cond4.max((lhs - rhs).abs() / rhs);
        }
    }
    let exactify = |v: f64| Estimate {
        value: v,
        lo: v,
        hi: v,
        samples: 0,
    };
    Ok(CromulenceReport {
        n: params.n,
        t,
        exact: true,
        cond1: exactify(cond1),
        cond2: exactify(cond2_val),
        cond2_target: target2,
        cond3: exactify(cond3_val),
        cond3_target: target3,
        cond4_max_rel_dev: Some(cond4),
    })
}

// ---------------------------------------------------------------------------
// Shifted two-round-Feistel sampler
// ---------------------------------------------------------------------------

/// Sample (π, ω) from the two-round-Feistel pair distribution
/// conditioned on resolving I, using the five-step shifted procedure:
/// constrained selection, independent right shifts on π and ω, uniform
/// fill, and a joint left shift.
pub fn shifted_feistel_sampler<R: Rng>(
    params: FeistelParams,
    i: &InjectiveDatabase,
    rng: &mut R,
) -> Result<(Permutation, Permutation)> {
    let half = params.half();
    let max_attempts = ((1.0 / REJECTION_FLOOR) as usize).max(10);
    let mut attempt = 0;
    let (mut d1p, mut d2p, mut d1o, mut d2o);
    loop {
        attempt += 1;
        if attempt > max_attempts {
            return Err(Error::InvalidArgument(
                "step-1 conditioning unsatisfiable within the attempt budget".into(),
            ));
        }
        d1p = vec![None; half];
        d2p = vec![None; half];
        d1o = vec![None; half];
        d2o = vec![None; half];
        for (x, _) in i.pairs() {
            let xl = params.left(x);
            let z = *d1p[xl].get_or_insert_with(|| rng.gen_range(0..half));
            d2p[params.right(x) ^ z].get_or_insert_with(|| rng.gen_range(0..half));
        }
        for (_, y) in i.pairs() {
            let yl = params.left(y);
            let z = *d1o[yl].get_or_insert_with(|| rng.gen_range(0..half));
            d2o[params.right(y) ^ z].get_or_insert_with(|| rng.gen_range(0..half));
        }
        // A = π * I * ω is now fully determined on Dom(I).
        let mut a = InjectiveDatabase::empty(params.full());
        for (x, y) in i.pairs() {
            let u = partial_feist2(params, &d1p, &d2p, x);
            let v = partial_feist2(params, &d1o, &d2o, y);
            a = a.assign(u, Some(v));
        }
        if a.size() == i.size() && is_allowable(params, &a) {
            break;
        }
    }
    // Right shift by s on π and s' on ω.
    for tables in [(&mut d1p, &mut d2p), (&mut d1o, &mut d2o)] {
        let s: usize = rng.gen_range(0..half);
        let (d1, d2) = tables;
        for v in d1.iter_mut().flatten() {
            *v ^= s;
        }
        let old = d2.clone();
        for z in 0..half {
            d2[z ^ s] = old[z];
        }
    }
    // Uniform fill.
    for table in [&mut d1p, &mut d2p, &mut d1o, &mut d2o] {
        for v in table.iter_mut() {
            v.get_or_insert_with(|| rng.gen_range(0..half));
        }
    }
    // Joint left shift by s''.
    let s2: usize = rng.gen_range(0..half);
    for table in [&mut d2p, &mut d2o] {
        for v in table.iter_mut().flatten() {
            *v ^= s2;
        }
    }
    let unwrap = |t: &[Option<usize>]| -> Vec<usize> { t.iter().map(|v| v.unwrap()).collect() };
    let pi = feist2_tables(params, &unwrap(&d1p), &unwrap(&d2p));
    let psi = feist2_tables(params, &unwrap(&d1o), &unwrap(&d2o));
    Ok((pi, invert(&psi)))
}

/// Evaluate the partial two-round Feistel (used before the tables are
/// filled; both lookups must exist).
fn partial_feist2(
    params: FeistelParams,
    d1: &[Option<usize>],
    d2: &[Option<usize>],
    x: usize,
) -> usize {
    let (xl, xr) = (params.left(x), params.right(x));
    let r = xr ^ d1[xl].expect("first-round value sampled");
    let l = xl ^ d2[r].expect("second-round value sampled");
    params.concat(l, r)
}

/// Direct rejection sampler from the two-round-Feistel pair
/// distribution conditioned on resolving I.
pub fn direct_feistel_sampler<R: Rng>(
    params: FeistelParams,
    i: &InjectiveDatabase,
    rng: &mut R,
) -> Result<(Permutation, Permutation)> {
    let dist = TwirlDistribution::Feistel2Pair;
    let max_attempts = ((1.0 / REJECTION_FLOOR) as usize).max(10);
    for _ in 0..max_attempts {
        let (pi, om) = dist.sample(params, rng);
        if is_allowable(params, &star_action(&pi, i, &om)) {
            return Ok((pi, om));
        }
    }
    Err(Error::InvalidArgument(
        "rejection sampler exceeded the attempt budget".into(),
    ))
}

// ---------------------------------------------------------------------------
// Soundness experiment
// ---------------------------------------------------------------------------

/// Measured quantities of one soundness run: the exact trace distance
/// between the compressed-permutation view and the true random
/// permutation view, the trace distance between the seven-round Feistel
/// view and the random permutation view, the per-query hybrid
/// deviations ‖(I·cmfO − cP·I)|φ_t⟩‖, and the end-to-end intertwined
/// gap they bound.
#[derive(Clone, Debug, Serialize)]
pub struct SoundnessReport {
    pub n: usize,
    pub q: usize,
    pub cp_distance: f64,
    pub feist7_distance: f64,
    pub hybrid_deviations: Vec<f64>,
    pub intertwined_gap: f64,
}

/// Adversary view against an explicit weighted family of permutations.
pub fn view_over_permutations(
    layout: &Arc<RegisterLayout>,
    adv: &AdversaryCircuit,
    family: &[(Permutation, f64)],
) -> Result<DensityMatrix> {
    let b_pos = layout.position("b")?;
    let x_pos = layout.position("x")?;
    let y_pos = layout.position("y")?;
    let unitaries = &adv.unitaries;
    let mut rho = DensityMatrix::zeros(layout.dim());
    for (phi, weight) in family {
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
        rho.accumulate_pure(&psi, *weight);
    }
    Ok(rho)
}

/// All m-round Feistel permutations with uniform round functions, as a
/// weighted family (uniform over the (2^n)^{2^n·m} round tuples).
pub fn feistel_family(params: FeistelParams, rounds: usize) -> Vec<(Permutation, f64)> {
    let half = params.half();
    let tables = half.pow(half as u32);
    let count = tables.pow(rounds as u32);
    let weight = 1.0 / count as f64;
    let mut family = Vec::with_capacity(count);
    for code in 0..count {
        let mut c = code;
        let mut fs = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let fc = c % tables;
            c /= tables;
            fs.push((0..half).map(|i| (fc / half.pow(i as u32)) % half).collect());
        }
        family.push((
            feistel_permutation(params, &fs).expect("rounds ≥ 1"),
            weight,
        ));
    }
    family
}

/// Run the full soundness experiment at n = 1: exact views, hybrid
/// deviations, and the triangle-inequality gap.
pub fn run_soundness_experiment(
    space: &PurificationSpace,
    dist: &TwirlDistribution,
    adv: &AdversaryCircuit,
) -> Result<SoundnessReport> {
    let params = space.params;
    let full = params.full();
    let q = adv.num_queries();
    if q > 3 {
        return Err(Error::InvalidArgument("q ≤ 3 at full enumeration".into()));
    }

    // (a) Compressed permutation oracle vs. uniform permutations.
    let cfg = crate::cpo::PermOracleConfig::new(full, (q + 1).min(full), space.workspace.clone())?;
    let standard = crate::cpo::run_perm_standard_experiment(&cfg, adv)?;
    let (_, compressed) = crate::cpo::run_cp_experiment(&cfg, adv)?;
    let cp_distance = crate::qlinalg::trace_distance(&standard, &compressed)?;

    // (b) Seven-round Feistel vs. uniform permutations.
    let adv_layout = cfg.adversary_layout();
    let feist7 = view_over_permutations(&adv_layout, adv, &feistel_family(params, 7))?;
    let feist7_distance = crate::qlinalg::trace_distance(&standard, &feist7)?;

    // (c) Hybrid deviations in the union space.
    let basis = Arc::new(space.soph_basis(dist)?);
    let intertwiner = space.intertwiner(&basis);
    let cmfo = space.cmfo_op();
    let cp = space.cp_op();
    let adv_names: Vec<String> = (0..space.workspace.len())
        .map(|i| format!("w{i}"))
        .chain(["b".into(), "x".into(), "y".into()])
        .collect();
    let adv_refs: Vec<&str> = adv_names.iter().map(|s| s.as_str()).collect();

    let mut phi = space.sophisticated_state(dist, &InjectiveDatabase::empty(full))?;
    // Transplant the adversary's initial register values.
    {
        let init_vals = adv_layout.decode(adv.initial_index);
        let shifted = SparseState::from_terms(
            space.layout.clone(),
            phi.iter().map(|(idx, a)| {
                let mut i = idx;
                for (pos, &v) in init_vals.iter().enumerate() {
                    i = space.layout.with_value(i, pos, v);
                }
                (i, a)
            }),
        );
        phi = shifted;
    }
    let mut cp_side = {
        let mut st = space.i_branch_state(&InjectiveDatabase::empty(full));
        let init_vals = adv_layout.decode(adv.initial_index);
        st = SparseState::from_terms(
            space.layout.clone(),
            st.iter().map(|(idx, a)| {
                let mut i = idx;
                for (pos, &v) in init_vals.iter().enumerate() {
                    i = space.layout.with_value(i, pos, v);
                }
                (i, a)
            }),
        );
        st
    };

    let mut hybrid_deviations = Vec::with_capacity(q);
    for (t, u) in adv.unitaries.iter().enumerate() {
        let embedded =
            crate::qlinalg::tensor_embed(u, &adv_refs, &space.layout)?;
        phi = embedded.apply(&phi);
        cp_side = embedded.apply(&cp_side);
        if t < q {
            let lhs = intertwiner.apply(&cmfo.apply(&phi));
            let rhs = cp.apply(&intertwiner.apply(&phi));
            let mut diff = lhs;
            diff.add_scaled(&rhs, Complex64::new(-1.0, 0.0));
            hybrid_deviations.push(diff.norm());
            phi = cmfo.apply(&phi);
            cp_side = cp.apply(&cp_side);
        }
    }
    let mut gap = intertwiner.apply(&phi);
    gap.add_scaled(&cp_side, Complex64::new(-1.0, 0.0));
    Ok(SoundnessReport {
        n: params.n,
        q,
        cp_distance,
        feist7_distance,
        hybrid_deviations,
        intertwined_gap: gap.norm(),
    })
}

/// Random superposition of `terms` basis purifications (H(P) branch)
/// with random adversary registers — a generic probe state for the
/// operator-identity checks below.
pub fn random_purification_state<R: Rng>(
    space: &PurificationSpace,
    rng: &mut R,
    terms: usize,
) -> SparseState {
    let mut st = SparseState::zero(space.layout.clone());
    for _ in 0..terms {
        let mut vals = vec![0usize; space.layout.decode(0).len()];
        vals[space.b_pos] = rng.gen_range(0..2);
        vals[space.x_pos] = rng.gen_range(0..space.params.full());
        vals[space.y_pos] = rng.gen_range(0..space.params.full());
        vals[space.tag_pos] = 1;
        vals[space.tag_pos + P_PI] = rng.gen_range(0..space.perms.len());
        vals[space.tag_pos + P_OM] = rng.gen_range(0..space.perms.len());
        vals[space.tag_pos + P_H] = rng.gen_range(0..space.comp.len());
        vals[space.tag_pos + P_K] = rng.gen_range(0..space.comp.len());
        vals[space.tag_pos + P_F] = rng.gen_range(0..space.comp.len());
        st.add_term(
            space.layout.encode(&vals),
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
        );
    }
    st.normalized()
}

fn state_diff(a: &SparseState, b: &SparseState) -> f64 {
    let mut d = a.clone();
    d.add_scaled(b, Complex64::new(-1.0, 0.0));
    d.norm()
}

/// Maximum deviation of the sophisticated states from orthonormality:
/// max |⟨I'|I⟩ − δ_{I,I'}| over all pairs of sophisticated states.
pub fn orthonormality_deviation(
    space: &PurificationSpace,
    dist: &TwirlDistribution,
) -> Result<f64> {
    let basis = space.soph_basis(dist)?;
    let mut worst: f64 = 0.0;
    for (a, (_, va)) in basis.entries.iter().enumerate() {
        for (b, (_, vb)) in basis.entries.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            let dot = pmap_dot(va, vb);
            worst = worst.max((dot - Complex64::new(target, 0.0)).norm());
        }
    }
    Ok(worst)
}

/// Measure the four exact operator identities tying the intertwiner to
/// the purified and compressed oracles, on `trials` random probe
/// states.  Returns (identity name, worst deviation) per identity;
/// every value is exactly zero in exact arithmetic.
pub fn remark_deviations(
    space: &PurificationSpace,
    dist: &TwirlDistribution,
    trials: usize,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    let basis = Arc::new(space.soph_basis(dist)?);
    let inter = space.intertwiner(&basis);
    let soph = space.soph_projector(&basis);
    let ele = space.ele_projector(&basis);
    let fele = space.fele_projector(&basis);
    let indb = space.indb_projector();
    let ideal = space.ideal_mfc_op(&basis);
    let ideal_o = space.ideal_cmfo_op(&basis);
    let mff = space.mff_op();
    let flip = space.flip_op();
    let mfp = space.mfp_op();
    let pq = space.perm_query_op();
    let pc = space.pc_op();
    let cp = space.cp_op();
    let mut worst = [0.0f64; 5];
    let mut rng = crate::rng::seeded(seed);
    for _ in 0..trials {
        let psi = random_purification_state(space, &mut rng, 40);
        let s = soph.apply(&psi);
        worst[0] = worst[0].max(state_diff(
            &flip.apply(&inter.apply(&s)),
            &inter.apply(&mff.apply(&s)),
        ));
        worst[1] = worst[1].max(state_diff(
            &pq.apply(&inter.apply(&s)),
            &inter.apply(&mfp.apply(&s)),
        ));
        let e = ele.apply(&psi);
        worst[2] = worst[2].max(state_diff(
            &inter.apply(&ideal.apply_adjoint(&e)),
            &pc.apply_adjoint(&inter.apply(&e)),
        ));
        worst[3] = worst[3].max(state_diff(
            &ele.apply(&ideal.apply(&psi)),
            &ideal.apply(&indb.apply(&soph.apply(&psi))),
        ));
        let fe = fele.apply(&psi);
        worst[4] = worst[4].max(state_diff(
            &inter.apply(&ideal_o.apply(&fe)),
            &cp.apply(&inter.apply(&fe)),
        ));
    }
    let names = [
        "flip-intertwines",
        "query-intertwines",
        "ideal-compression-adjoint",
        "ideal-compression-range",
        "ideal-oracle-intertwines",
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(n, w)| (n.to_string(), w))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfo::basis_permutation_op;
    use crate::databases::Database;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn params1() -> FeistelParams {
        FeistelParams::new(1).unwrap()
    }

    fn space1() -> PurificationSpace {
        PurificationSpace::new(params1(), 2, vec![]).unwrap()
    }

    fn random_p_state<R: Rng>(space: &PurificationSpace, rng: &mut R, terms: usize) -> SparseState {
        // Random superposition of basis purifications with random b, x, y.
        let mut st = SparseState::zero(space.layout.clone());
        for _ in 0..terms {
            let mut vals = vec![0usize; space.layout.decode(0).len()];
            vals[space.b_pos] = rng.gen_range(0..2);
            vals[space.x_pos] = rng.gen_range(0..space.params.full());
            vals[space.y_pos] = rng.gen_range(0..space.params.full());
            vals[space.tag_pos] = 1;
            vals[space.tag_pos + P_PI] = rng.gen_range(0..space.perms.len());
            vals[space.tag_pos + P_OM] = rng.gen_range(0..space.perms.len());
            vals[space.tag_pos + P_H] = rng.gen_range(0..space.comp.len());
            vals[space.tag_pos + P_K] = rng.gen_range(0..space.comp.len());
            vals[space.tag_pos + P_F] = rng.gen_range(0..space.comp.len());
            st.add_term(
                space.layout.encode(&vals),
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
            );
        }
        st.normalized()
    }

    fn norm_diff(a: &SparseState, b: &SparseState) -> f64 {
        let mut d = a.clone();
        d.add_scaled(b, Complex64::new(-1.0, 0.0));
        d.norm()
    }

    #[test]
    fn star_action_examples() {
        let params = params1();
        let id = Permutation::identity(4);
        let i = InjectiveDatabase::from_pairs(4, &[(0, 3)]).unwrap();
        assert_eq!(star_action(&id, &i, &id).pairs(), i.pairs());
        // Resolving ⇔ the twirled database is allowable.
        let perms = all_permutations(4);
        for pi in perms.iter().take(6) {
            for om in perms.iter().take(6) {
                let a = star_action(pi, &i, om);
                assert_eq!(a.size(), i.size());
                assert!(is_allowable(params, &a)); // size 1 always allowable
            }
        }
    }

    #[test]
    fn twirl_weights_are_distributions() {
        let params = params1();
        for dist in [TwirlDistribution::Uniform, TwirlDistribution::Feistel2Pair] {
            let w = dist.enumerate_weights(params).unwrap();
            let total: f64 = w.iter().flatten().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            assert!(w.iter().flatten().all(|&p| p >= 0.0));
        }
        // Two-round Feistel at n = 1 hits 16 permutations with equal mass.
        let w = TwirlDistribution::Feistel2Pair
            .enumerate_weights(params)
            .unwrap();
        let marginal: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();
        let support: Vec<f64> = marginal.iter().copied().filter(|&p| p > 0.0).collect();
        assert_eq!(support.len(), 16);
        for p in support {
            assert_abs_diff_eq!(p, 1.0 / 16.0, epsilon = 1e-12);
        }
        // Flip symmetry: p(π, ω) = p(ω⁻¹, π⁻¹).
        let perms = all_permutations(4);
        let index: HashMap<Vec<usize>, usize> = perms
            .iter()
            .enumerate()
            .map(|(i, p)| (p.table().to_vec(), i))
            .collect();
        for (pi, row) in w.iter().enumerate() {
            for (om, &p) in row.iter().enumerate() {
                let fp = index[invert(&perms[om]).table()];
                let fo = index[invert(&perms[pi]).table()];
                assert_abs_diff_eq!(p, w[fp][fo], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sophisticated_states_are_orthonormal() {
        let space = space1();
        for dist in [TwirlDistribution::Uniform, TwirlDistribution::Feistel2Pair] {
            let basis = space.soph_basis(&dist).unwrap();
            // ⊥ and all 16 singletons exist; size-2 databases have empty
            // resolving sets at n = 1 (internal left collisions).
            assert_eq!(basis.len(), 17);
            for (a, (_, sa)) in basis.entries.iter().enumerate() {
                for (b, (_, sb)) in basis.entries.iter().enumerate() {
                    let ov = pmap_dot(sa, sb);
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(ov.re, expect, epsilon = 1e-10);
                    assert_abs_diff_eq!(ov.im, 0.0, epsilon = 1e-10);
                }
            }
            let two = InjectiveDatabase::from_pairs(4, &[(0, 0), (1, 1)]).unwrap();
            assert!(space.sophisticated_state(&dist, &two).is_err());
        }
        // |P(⊥)⟩: equal weights over all (π, ω), empty triple.
        let bot = space
            .sophisticated_state(&TwirlDistribution::Uniform, &InjectiveDatabase::empty(4))
            .unwrap();
        assert_eq!(bot.num_terms(), 576);
        for (_, a) in bot.iter() {
            assert_abs_diff_eq!(a.re, 1.0 / 24.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn flip_covariance_of_sophisticated_states() {
        let space = space1();
        let mff = space.mff_op();
        for dist in [TwirlDistribution::Uniform, TwirlDistribution::Feistel2Pair] {
            let i = InjectiveDatabase::from_pairs(4, &[(1, 2)]).unwrap();
            let flipped = space.sophisticated_state(&dist, &i.flip()).unwrap();
            let moved = mff.apply(&space.sophisticated_state(&dist, &i).unwrap());
            assert!(norm_diff(&moved, &flipped) < 1e-10);
        }
        // mfF² = identity on random states.
        let mut rng = crate::rng::seeded(101);
        let psi = random_p_state(&space, &mut rng, 40);
        assert!(norm_diff(&mff.apply(&mff.apply(&psi)), &psi) < 1e-12);
    }

    #[test]
    fn mfp_matches_masked_feistel_on_full_tables() {
        let space = space1();
        let params = params1();
        let mfp = space.mfp_op();
        let mut rng = crate::rng::seeded(103);
        for _ in 0..20 {
            let pi_idx = rng.gen_range(0..24);
            let om_idx = rng.gen_range(0..24);
            let h: Vec<usize> = (0..2).map(|_| rng.gen_range(0..2)).collect();
            let k: Vec<usize> = (0..2).map(|_| rng.gen_range(0..2)).collect();
            let f: Vec<usize> = (0..2).map(|_| rng.gen_range(0..2)).collect();
            let total = |g: &[usize]| {
                let mut d = Database::empty(2, 2);
                for (x, &v) in g.iter().enumerate() {
                    d = d.assign(x, Some(v));
                }
                d
            };
            let d = TripleDb {
                d_h: total(&h),
                d_k: total(&k),
                d_f: total(&f),
            };
            let spec = crate::feistel_core::MaskedFeistelSpec {
                pi: space.perms[pi_idx].clone(),
                omega: space.perms[om_idx].clone(),
                h,
                k,
                f,
            };
            for x in 0..4 {
                let mut st = space.basis_purification(pi_idx, om_idx, &d);
                st = SparseState::from_terms(
                    space.layout.clone(),
                    st.iter()
                        .map(|(idx, a)| (space.layout.with_value(idx, space.x_pos, x), a)),
                );
                let out = mfp.apply(&st);
                let (idx, _) = out.iter().next().unwrap();
                assert_eq!(
                    space.layout.value_at(idx, space.y_pos),
                    crate::feistel_core::masked_feistel_eval(params, &spec, x)
                );
            }
        }
    }

    #[test]
    fn intertwiner_is_an_isometry() {
        let space = space1();
        let dist = TwirlDistribution::Uniform;
        let basis = Arc::new(space.soph_basis(&dist).unwrap());
        let inter = space.intertwiner(&basis);
        // |P(⊥)⟩ ↦ |⊥⟩.
        let bot = space
            .sophisticated_state(&dist, &InjectiveDatabase::empty(4))
            .unwrap();
        let mapped = inter.apply(&bot);
        assert!(norm_diff(&mapped, &space.i_branch_state(&InjectiveDatabase::empty(4))) < 1e-10);
        // Isometry and exact inversion on random states.
        let mut rng = crate::rng::seeded(107);
        for _ in 0..5 {
            let psi = random_p_state(&space, &mut rng, 50);
            let out = inter.apply(&psi);
            assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-10);
            assert!(norm_diff(&inter.apply_adjoint(&out), &psi) < 1e-10);
        }
        // A basis purification orthogonal to every |P(I)⟩ maps to itself:
        // project out the sophisticated component first.
        let soph = space.soph_projector(&basis);
        let psi = random_p_state(&space, &mut rng, 50);
        let mut perp = psi.clone();
        perp.add_scaled(&soph.apply(&psi), Complex64::new(-1.0, 0.0));
        let perp = perp.normalized();
        assert!(norm_diff(&inter.apply(&perp), &perp) < 1e-10);
    }

    #[test]
    fn projectors_are_idempotent_and_hermitian() {
        let space = space1();
        let dist = TwirlDistribution::Uniform;
        let basis = Arc::new(space.soph_basis(&dist).unwrap());
        let mut rng = crate::rng::seeded(109);
        let ops: Vec<(&str, LinearOp)> = vec![
            ("soph", space.soph_projector(&basis)),
            ("val", space.valid_projector()),
            ("qval", space.qval_projector()),
            ("indb", space.indb_projector()),
            ("ele", space.ele_projector(&basis)),
            ("fele", space.fele_projector(&basis)),
            ("heart", space.heart_projector()),
        ];
        for (name, op) in &ops {
            for _ in 0..3 {
                let u = random_p_state(&space, &mut rng, 30);
                let v = random_p_state(&space, &mut rng, 30);
                let pu = op.apply(&u);
                // Idempotent.
                assert!(norm_diff(&op.apply(&pu), &pu) < 1e-10, "{name} not idempotent");
                // Hermitian: ⟨u, Πv⟩ = ⟨Πu, v⟩.
                let lhs = u.dot(&op.apply(&v));
                let rhs = pu.dot(&v);
                assert!((lhs - rhs).norm() < 1e-10, "{name} not Hermitian");
            }
        }
    }

    #[test]
    fn exact_intertwining_remarks_hold() {
        let space = space1();
        for dist in [TwirlDistribution::Uniform, TwirlDistribution::Feistel2Pair] {
            for (name, dev) in remark_deviations(&space, &dist, 4, 113).unwrap() {
                assert!(dev < 1e-10, "{name}: {dev}");
            }
        }
    }

    #[test]
    fn cmfo_preserves_validity() {
        let space = space1();
        let cmfo = space.cmfo_op();
        let valid = space.valid_projector();
        let mut rng = crate::rng::seeded(127);
        for _ in 0..3 {
            let psi = valid.apply(&random_p_state(&space, &mut rng, 30));
            if psi.norm() < 1e-6 {
                continue;
            }
            let psi = psi.normalized();
            let out = cmfo.apply(&psi);
            assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-10);
            let mut invalid = out.clone();
            invalid.add_scaled(&valid.apply(&out), Complex64::new(-1.0, 0.0));
            assert!(invalid.norm() < 1e-10);
        }
    }

    #[test]
    fn heart_projector_gentleness_matches_enumeration() {
        // ‖(1 − Π^♥)Π^{x∉db}|P(I)⟩‖ = √Pr[(π,ω) ∉ R_{x,I}] exactly.
        let space = space1();
        let dist = TwirlDistribution::Uniform;
        let heart = space.heart_projector();
        let i = InjectiveDatabase::from_pairs(4, &[(2, 1)]).unwrap();
        let x = 0; // x ∉ Dom(I)
        let psi = space.sophisticated_state(&dist, &i).unwrap();
        let psi = SparseState::from_terms(
            space.layout.clone(),
            psi.iter()
                .map(|(idx, a)| (space.layout.with_value(idx, space.x_pos, x), a)),
        );
        let mut dropped = psi.clone();
        dropped.add_scaled(&heart.apply(&psi), Complex64::new(-1.0, 0.0));
        // Direct enumeration of the non-allowing resolving mass.
        let pairs = space.resolving_pairs(&dist, &i).unwrap();
        let bad: f64 = pairs
            .iter()
            .filter(|&&(pi, om, _)| {
                let a = star_action(&space.perms[pi], &i, &space.perms[om]);
                let u = space.perms[pi].apply(x);
                a.get(u).is_some() || allowed_values(space.params, &a, u).is_err()
            })
            .map(|&(_, _, p)| p)
            .sum();
        assert_abs_diff_eq!(dropped.norm(), bad.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn cromulence_exact_at_n1() {
        let params = params1();
        // Empty database: everything resolves, condition (2) is exactly
        // 1/2^n for both distributions.
        for dist in [TwirlDistribution::Uniform, TwirlDistribution::Feistel2Pair] {
            let report =
                estimate_cromulence(&dist, params, &InjectiveDatabase::empty(4), 0, 0, 7)
                    .unwrap();
            assert!(report.exact);
            assert_abs_diff_eq!(report.cond1.value, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(report.cond2.value, 0.5, epsilon = 1e-12);
            assert!(report.cond4_max_rel_dev.is_some());
        }
        // At one bit a size-1 database leaves nothing extendable: no
        // resolving pair allows a second point (every two-entry
        // database has a half-string collision), so condition (1)
        // collapses to 0 — the t²/2^n error term saturates.
        let i = InjectiveDatabase::from_pairs(4, &[(1, 3)]).unwrap();
        let report =
            estimate_cromulence(&TwirlDistribution::Uniform, params, &i, 0, 0, 7).unwrap();
        assert_abs_diff_eq!(report.cond1.value, 0.0, epsilon = 1e-12);
        assert!(report.cond2.value.is_nan());
    }

    #[test]
    fn cromulence_feistel2_sampled_at_n2() {
        let params = FeistelParams::new(2).unwrap();
        let report = estimate_cromulence(
            &TwirlDistribution::Feistel2Pair,
            params,
            &InjectiveDatabase::empty(16),
            0,
            100_000,
            11,
        )
        .unwrap();
        assert!(!report.exact);
        // Condition (2) = 1/4 within the 3σ Wilson interval.
        assert!(
            report.cond2.lo <= 0.25 && 0.25 <= report.cond2.hi,
            "interval [{}, {}] misses 1/4",
            report.cond2.lo,
            report.cond2.hi
        );
    }

    #[test]
    fn shifted_sampler_matches_direct_sampler() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let params = params1();
        let i = InjectiveDatabase::from_pairs(4, &[(0, 2)]).unwrap();
        let mut rng = crate::rng::seeded(131);
        let samples = 40_000;
        let mut shifted: HashMap<(Vec<usize>, Vec<usize>), usize> = HashMap::new();
        let mut direct: HashMap<(Vec<usize>, Vec<usize>), usize> = HashMap::new();
        for _ in 0..samples {
            let (pi, om) = shifted_feistel_sampler(params, &i, &mut rng).unwrap();
            assert!(is_allowable(params, &star_action(&pi, &i, &om)));
            *shifted
                .entry((pi.table().to_vec(), om.table().to_vec()))
                .or_default() += 1;
            let (pi, om) = direct_feistel_sampler(params, &i, &mut rng).unwrap();
            *direct
                .entry((pi.table().to_vec(), om.table().to_vec()))
                .or_default() += 1;
        }
        // Two-sample χ² over the union support.
        let keys: std::collections::BTreeSet<_> =
            shifted.keys().chain(direct.keys()).cloned().collect();
        let mut stat = 0.0;
        let mut dof = 0usize;
        for key in &keys {
            let a = *shifted.get(key).unwrap_or(&0) as f64;
            let b = *direct.get(key).unwrap_or(&0) as f64;
            let e = (a + b) / 2.0;
            if e > 0.0 {
                stat += (a - e).powi(2) / e + (b - e).powi(2) / e;
                dof += 1;
            }
        }
        let cutoff = ChiSquared::new((dof - 1) as f64)
            .unwrap()
            .inverse_cdf(0.999);
        assert!(stat < cutoff, "χ² = {stat} ≥ {cutoff} over {dof} cells");
    }

    #[test]
    fn soundness_experiment_q0_and_q1() {
        let space = space1();
        let dist = TwirlDistribution::Uniform;
        let layout = crate::cpo::PermOracleConfig::new(4, 1, vec![])
            .unwrap()
            .adversary_layout();
        // q = 0: a single identity unitary; all distances vanish.
        let adv = AdversaryCircuit {
            unitaries: vec![basis_permutation_op(&layout, |_| {})],
            initial_index: 0,
        };
        let report = run_soundness_experiment(&space, &dist, &adv).unwrap();
        assert!(report.cp_distance < 1e-12);
        assert!(report.feist7_distance < 1e-12);
        assert!(report.intertwined_gap < 1e-12);

        // q = 1 classical forward query at x = 2.
        let x_pos = layout.position("x").unwrap();
        let prep = basis_permutation_op(&layout, |vals| vals[x_pos] ^= 2);
        let done = basis_permutation_op(&layout, |_| {});
        let adv = AdversaryCircuit {
            unitaries: vec![prep, done],
            initial_index: 0,
        };
        let report = run_soundness_experiment(&space, &dist, &adv).unwrap();
        // One classical query is answered identically everywhere.
        assert!(report.cp_distance < 1e-9, "cp {}", report.cp_distance);
        assert!(report.feist7_distance < 1e-9, "f7 {}", report.feist7_distance);
        assert_eq!(report.hybrid_deviations.len(), 1);
        let sum: f64 = report.hybrid_deviations.iter().sum();
        assert!(
            report.intertwined_gap <= sum + 1e-8,
            "gap {} > Σdev {}",
            report.intertwined_gap,
            sum
        );
    }
}
