//! Classical Feistel machinery and the combinatorics of three-round
//! databases: masked-Feistel evaluation, chains, canonicity,
//! allowability, database extension, extension/pipe sets, and the
//! canonical compression operators G^(H), G^(K), G^(F).
//!
//! All strings are 2n bits wide with left/right n-bit halves; the left
//! half x_L is the *high* n bits of the integer encoding (fixed
//! project-wide).  A triple D = (D_h, D_k, D_f) of partial functions on
//! [2^n] supports a chain u → v when
//!
//! D_h(u_L) ⊕ u_R = D_f(v_L) ⊕ v_R = m  and  u_L ⊕ v_L = D_k(m),
//!
//! and is *canonical* when no two chains share m, u_L, or v_L and every
//! database entry participates in exactly one chain.
//!
//! Note on counting: the number of canonical triples supporting an
//! allowable injective database of size t is the falling factorial
//! 2^n·(2^n−1)···(2^n−t+1).  A fixed pair ordering already enumerates
//! each triple exactly once, since the h-values z_j = D_h((u_j)_L) are
//! uniquely recoverable from the finished triple; this is verified
//! against an independent brute-force enumeration in the tests.

use serde::Serialize;
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::cfo::apply_swap_compression;
use crate::databases::{enumerate_space, Database, DatabaseSpace, InjectiveDatabase, Permutation, SpaceKind};
use crate::qlinalg::{LinearOp, RegisterLayout, SparseState};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Parameters and bit conventions
// ---------------------------------------------------------------------------

/// Half-width parameter: strings are 2n bits, halves are n bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FeistelParams {
    pub n: usize,
}

impl FeistelParams {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be ≥ 1".into()));
        }
        Ok(Self { n })
    }

    /// 2^n: the half-string alphabet size.
    pub fn half(&self) -> usize {
        1 << self.n
    }

    /// 2^{2n}: the full-string alphabet size.
    pub fn full(&self) -> usize {
        1 << (2 * self.n)
    }

    /// High n bits.
    pub fn left(&self, x: usize) -> usize {
        x >> self.n
    }

    /// Low n bits.
    pub fn right(&self, x: usize) -> usize {
        x & (self.half() - 1)
    }

    /// l ∥ r with l in the high bits.
    pub fn concat(&self, l: usize, r: usize) -> usize {
        (l << self.n) | r
    }
}

// ---------------------------------------------------------------------------
// Plain Feistel rounds
// ---------------------------------------------------------------------------

/// Which half feeds the round function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundDirection {
    /// x_L ∥ (x_R ⊕ g(x_L)).
    LeftToRight,
    /// (x_L ⊕ g(x_R)) ∥ x_R.
    RightToLeft,
}

/// One (un-swapped) Feistel round.
pub fn feistel_round(params: FeistelParams, x: usize, g: &[usize], dir: RoundDirection) -> usize {
    let (l, r) = (params.left(x), params.right(x));
    match dir {
        RoundDirection::LeftToRight => params.concat(l, r ^ g[l]),
        RoundDirection::RightToLeft => params.concat(l ^ g[r], r),
    }
}

/// The permutation composed of the given rounds; the first round is
/// left-to-right and directions alternate.
pub fn feistel_permutation(params: FeistelParams, rounds: &[Vec<usize>]) -> Result<Permutation> {
    if rounds.is_empty() {
        return Err(Error::InvalidArgument("at least one round".into()));
    }
    let table: Vec<usize> = (0..params.full())
        .map(|x| {
            let mut v = x;
            for (i, g) in rounds.iter().enumerate() {
                let dir = if i % 2 == 0 {
                    RoundDirection::LeftToRight
                } else {
                    RoundDirection::RightToLeft
                };
                v = feistel_round(params, v, g, dir);
            }
            v
        })
        .collect();
    Permutation::from_table(table)
}

// ---------------------------------------------------------------------------
// Masked Feistel
// ---------------------------------------------------------------------------

/// A fully specified masked-Feistel permutation: outer twirls π, ω and
/// total inner round functions h, k, f.
#[derive(Clone, Debug)]
pub struct MaskedFeistelSpec {
    pub pi: Permutation,
    pub omega: Permutation,
    pub h: Vec<usize>,
    pub k: Vec<usize>,
    pub f: Vec<usize>,
}

/// Forward evaluation: u = π(x); m = u_R ⊕ h(u_L); v_L = u_L ⊕ k(m);
/// v_R = m ⊕ f(v_L); y = ω(v).
pub fn masked_feistel_eval(params: FeistelParams, spec: &MaskedFeistelSpec, x: usize) -> usize {
    let u = spec.pi.apply(x);
    let (ul, ur) = (params.left(u), params.right(u));
    let m = ur ^ spec.h[ul];
    let vl = ul ^ spec.k[m];
    let vr = m ^ spec.f[vl];
    spec.omega.apply(params.concat(vl, vr))
}

/// Inverse evaluation: v = ω⁻¹(y); m = v_R ⊕ f(v_L); u_L = v_L ⊕ k(m);
/// u_R = m ⊕ h(u_L); x = π⁻¹(u).
pub fn masked_feistel_inverse_eval(
    params: FeistelParams,
    spec: &MaskedFeistelSpec,
    y: usize,
) -> usize {
    let v = spec.omega.apply_inverse(y);
    let (vl, vr) = (params.left(v), params.right(v));
    let m = vr ^ spec.f[vl];
    let ul = vl ^ spec.k[m];
    let ur = m ^ spec.h[ul];
    spec.pi.apply_inverse(params.concat(ul, ur))
}

// ---------------------------------------------------------------------------
// Triple databases and chains
// ---------------------------------------------------------------------------

/// A triple of partial-function databases on [2^n].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TripleDb {
    pub d_h: Database,
    pub d_k: Database,
    pub d_f: Database,
}

impl TripleDb {
    pub fn empty(params: FeistelParams) -> Self {
        let half = params.half();
        Self {
            d_h: Database::empty(half, half),
            d_k: Database::empty(half, half),
            d_f: Database::empty(half, half),
        }
    }

    /// |D| = max component size.
    pub fn size(&self) -> usize {
        self.d_h.size().max(self.d_k.size()).max(self.d_f.size())
    }

    pub fn to_text(&self) -> String {
        format!(
            "h: {}, k: {}, f: {}",
            self.d_h.to_text(),
            self.d_k.to_text(),
            self.d_f.to_text()
        )
    }
}

/// A full chain u → v with middle value m.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Chain {
    pub u: usize,
    pub m: usize,
    pub v: usize,
}

/// All full chains in the triple (at most one per starting point u).
pub fn find_chains(params: FeistelParams, d: &TripleDb) -> Vec<Chain> {
    let mut chains = Vec::new();
    for u in 0..params.full() {
        let (ul, ur) = (params.left(u), params.right(u));
        let Some(z) = d.d_h.get(ul) else { continue };
        let m = ur ^ z;
        let Some(w) = d.d_k.get(m) else { continue };
        let vl = ul ^ w;
        let Some(z2) = d.d_f.get(vl) else { continue };
        chains.push(Chain {
            u,
            m,
            v: params.concat(vl, m ^ z2),
        });
    }
    chains
}

/// Which end a semi-chain grows from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SemiDirection {
    Rightward,
    Leftward,
}

/// Length (0–3) of the semi-chain from `u` (rightward: u is an input;
/// leftward: u is an output).
pub fn semichain_length(
    params: FeistelParams,
    d: &TripleDb,
    u: usize,
    dir: SemiDirection,
) -> usize {
    let (first, second, third): (&Database, &Database, &Database) = match dir {
        SemiDirection::Rightward => (&d.d_h, &d.d_k, &d.d_f),
        SemiDirection::Leftward => (&d.d_f, &d.d_k, &d.d_h),
    };
    let (ul, ur) = (params.left(u), params.right(u));
    let Some(z) = first.get(ul) else { return 0 };
    let m = ur ^ z;
    let Some(w) = second.get(m) else { return 1 };
    if third.get(ul ^ w).is_none() {
        2
    } else {
        3
    }
}

/// The injective database supported by the triple (Supp(D)).
pub fn triple_support(params: FeistelParams, d: &TripleDb) -> InjectiveDatabase {
    let mut supp = InjectiveDatabase::empty(params.full());
    for c in find_chains(params, d) {
        supp = supp.assign(c.u, Some(c.v));
    }
    supp
}

/// Canonicity: no two chains collide (distinct m, u_L, v_L) and every
/// database entry participates in exactly one chain.
pub fn is_canonical(params: FeistelParams, d: &TripleDb) -> bool {
    let chains = find_chains(params, d);
    let ms: BTreeSet<usize> = chains.iter().map(|c| c.m).collect();
    let uls: BTreeSet<usize> = chains.iter().map(|c| params.left(c.u)).collect();
    let vls: BTreeSet<usize> = chains.iter().map(|c| params.left(c.v)).collect();
    let t = chains.len();
    if ms.len() != t || uls.len() != t || vls.len() != t {
        return false;
    }
    // Minimality: used entries exhaust each component.
    uls == d.d_h.domain().into_iter().collect()
        && ms == d.d_k.domain().into_iter().collect()
        && vls == d.d_f.domain().into_iter().collect()
}

/// Remove the chain beginning at `u` (D[u → ⊥]); identity when no chain
/// starts at u.
pub fn remove_chain(params: FeistelParams, d: &TripleDb, u: usize) -> TripleDb {
    let (ul, ur) = (params.left(u), params.right(u));
    let Some(z) = d.d_h.get(ul) else {
        return d.clone();
    };
    let m = ur ^ z;
    let Some(w) = d.d_k.get(m) else {
        return d.clone();
    };
    let vl = ul ^ w;
    if d.d_f.get(vl).is_none() {
        return d.clone();
    }
    TripleDb {
        d_h: d.d_h.assign(ul, None),
        d_k: d.d_k.assign(m, None),
        d_f: d.d_f.assign(vl, None),
    }
}

// ---------------------------------------------------------------------------
// Allowability
// ---------------------------------------------------------------------------

/// True iff the injective database has no input, output, or internal
/// left collision.
pub fn is_allowable(params: FeistelParams, i: &InjectiveDatabase) -> bool {
    let pairs = i.pairs();
    for (a, &(x, y)) in pairs.iter().enumerate() {
        for &(xp, yp) in &pairs[a + 1..] {
            if params.left(x) == params.left(xp) || params.left(y) == params.left(yp) {
                return false;
            }
        }
        // Internal left collisions range over all (x', y') ∈ Dom × Im.
        for &(xp, _) in &pairs {
            for &(_, yp) in &pairs {
                if (x, y) != (xp, yp)
                    && params.left(x) ^ params.left(y) == params.left(xp) ^ params.left(yp)
                {
                    return false;
                }
            }
        }
    }
    true
}

/// V_{u,A} = {v : A[u→v] allowable} and its left substrings L_{u,A}.
/// Errors when A does not allow u (V empty or u already defined).
pub fn allowed_values(
    params: FeistelParams,
    a: &InjectiveDatabase,
    u: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if a.get(u).is_some() {
        return Err(Error::InvalidArgument(format!("{u} already defined")));
    }
    let im = a.image();
    let v_set: Vec<usize> = (0..params.full())
        .filter(|&v| !im.contains(&v) && is_allowable(params, &a.assign(u, Some(v))))
        .collect();
    if v_set.is_empty() {
        return Err(Error::InvalidArgument(format!("database does not allow {u}")));
    }
    let l_set: Vec<usize> = v_set
        .iter()
        .map(|&v| params.left(v))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok((v_set, l_set))
}

/// Whether A allows u (some v makes A[u→v] allowable).
pub fn allows(params: FeistelParams, a: &InjectiveDatabase, u: usize) -> bool {
    allowed_values(params, a, u).is_ok()
}

// ---------------------------------------------------------------------------
// Database extension (Algorithm 1)
// ---------------------------------------------------------------------------

/// One run of database extension with explicit per-chain h-values `zs`;
/// errors if `i` is non-allowable or a choice is infeasible.
pub fn extend_database(
    params: FeistelParams,
    i: &InjectiveDatabase,
    zs: &[usize],
) -> Result<TripleDb> {
    if !is_allowable(params, i) {
        return Err(Error::InvalidArgument("database is not allowable".into()));
    }
    let pairs = i.pairs();
    if zs.len() != pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "need {} h-values, got {}",
            pairs.len(),
            zs.len()
        )));
    }
    let mut d = TripleDb::empty(params);
    for (&(u, v), &z) in pairs.iter().zip(zs) {
        let (ul, ur) = (params.left(u), params.right(u));
        let (vl, vr) = (params.left(v), params.right(v));
        if d.d_k.get(ur ^ z).is_some() {
            return Err(Error::InvalidArgument(format!(
                "infeasible choice z={z} for input {u}: middle value collides"
            )));
        }
        d.d_h = d.d_h.assign(ul, Some(z));
        d.d_k = d.d_k.assign(ur ^ z, Some(ul ^ vl));
        d.d_f = d.d_f.assign(vl, Some(vr ^ z ^ ur));
    }
    Ok(d)
}

/// All canonical triples supporting exactly `i` (exhaustive over the
/// feasible h-value choices; the count is the falling factorial
/// 2^n·(2^n−1)···(2^n−t+1)).
pub fn enumerate_supporting(
    params: FeistelParams,
    i: &InjectiveDatabase,
) -> Result<Vec<TripleDb>> {
    if !is_allowable(params, i) {
        return Err(Error::InvalidArgument("database is not allowable".into()));
    }
    let pairs = i.pairs();
    let mut out = Vec::new();
    let mut zs: Vec<usize> = Vec::new();
    fn rec(
        params: FeistelParams,
        pairs: &[(usize, usize)],
        zs: &mut Vec<usize>,
        i: &InjectiveDatabase,
        out: &mut Vec<TripleDb>,
    ) {
        if zs.len() == pairs.len() {
            out.push(extend_database(params, i, zs).expect("feasible by construction"));
            return;
        }
        let j = zs.len();
        let (u, _) = pairs[j];
        let ur = params.right(u);
        // Middle values already used by earlier chains.
        let used: BTreeSet<usize> = pairs[..j]
            .iter()
            .zip(zs.iter())
            .map(|(&(up, _), &zp)| params.right(up) ^ zp)
            .collect();
        for z in 0..params.half() {
            if !used.contains(&(ur ^ z)) {
                zs.push(z);
                rec(params, pairs, zs, i, out);
                zs.pop();
            }
        }
    }
    rec(params, &pairs, &mut zs, i, &mut out);
    Ok(out)
}

/// All allowable injective databases of size t over [2^{2n}].
pub fn enumerate_allowable(params: FeistelParams, t: usize) -> Vec<InjectiveDatabase> {
    use itertools::Itertools;
    let full = params.full();
    let mut out = Vec::new();
    for dom in (0..full).combinations(t) {
        for vals in (0..full).permutations(t) {
            let mut i = InjectiveDatabase::empty(full);
            for (&x, &y) in dom.iter().zip(&vals) {
                i = i.assign(x, Some(y));
            }
            if i.size() == t && is_allowable(params, &i) {
                out.push(i);
            }
        }
    }
    out
}

/// All canonical triples of size t (via exhaustive extension of all
/// allowable databases).
pub fn enumerate_canonical(params: FeistelParams, t: usize) -> Vec<TripleDb> {
    let mut set: BTreeSet<TripleDb> = BTreeSet::new();
    for i in enumerate_allowable(params, t) {
        for d in enumerate_supporting(params, &i).expect("allowable by construction") {
            set.insert(d);
        }
    }
    set.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Chain census
// ---------------------------------------------------------------------------

/// Counts of chains and rightward semi-chains by length for one triple
/// or aggregated per (n, t).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CensusRow {
    pub n: usize,
    pub t: usize,
    pub chains: usize,
    pub semi2: usize,
    pub semi1: usize,
    pub semi0: usize,
}

/// Census of one triple: counts of rightward semi-chain lengths over
/// all 2^{2n} starting points.
pub fn census_of(params: FeistelParams, d: &TripleDb) -> CensusRow {
    let mut counts = [0usize; 4];
    for u in 0..params.full() {
        counts[semichain_length(params, d, u, SemiDirection::Rightward)] += 1;
    }
    CensusRow {
        n: params.n,
        t: d.size(),
        chains: counts[3],
        semi2: counts[2],
        semi1: counts[1],
        semi0: counts[0],
    }
}

/// The predicted census for a canonical triple of size t.
pub fn expected_census(params: FeistelParams, t: usize) -> CensusRow {
    let half = params.half();
    CensusRow {
        n: params.n,
        t,
        chains: t,
        semi2: t * t.saturating_sub(1),
        semi1: t * (half - t),
        semi0: (half - t) * half,
    }
}

// ---------------------------------------------------------------------------
// Extension sets and pipes
// ---------------------------------------------------------------------------

/// D↑^u_h = {D} ∪ {(D_h[u_L→z], D_k, D_f) : u_R ⊕ z ∉ Dom(D_k)}.
/// Requires D canonical and u allowed and fresh.
pub fn up_pipe_h(params: FeistelParams, d: &TripleDb, u: usize) -> Result<Vec<TripleDb>> {
    check_up_pre(params, d, u)?;
    let (ul, ur) = (params.left(u), params.right(u));
    let mut out = vec![d.clone()];
    for z in 0..params.half() {
        if d.d_k.get(ur ^ z).is_none() {
            out.push(TripleDb {
                d_h: d.d_h.assign(ul, Some(z)),
                d_k: d.d_k.clone(),
                d_f: d.d_f.clone(),
            });
        }
    }
    Ok(out)
}

/// D↑^u_{h,k}: the h pipe, each extension further extended on K by
/// w ∈ u_L ⊕ L_{u,Supp(D)}.
pub fn up_pipe_hk(params: FeistelParams, d: &TripleDb, u: usize) -> Result<Vec<TripleDb>> {
    let (ul, ur) = (params.left(u), params.right(u));
    let (_, l_set) = allowed_values(params, &triple_support(params, d), u)?;
    let mut out = Vec::new();
    for d1 in up_pipe_h(params, d, u)? {
        out.push(d1.clone());
        let Some(z) = d1.d_h.get(ul) else { continue };
        if d.d_h.get(ul).is_some() {
            continue; // the base itself, no new h entry
        }
        for &l in &l_set {
            let w = ul ^ l;
            out.push(TripleDb {
                d_h: d1.d_h.clone(),
                d_k: d1.d_k.assign(ur ^ z, Some(w)),
                d_f: d1.d_f.clone(),
            });
        }
    }
    out.dedup();
    Ok(out)
}

/// D↑^u_{h,k,f}: the h,k pipe, each two-extension further extended on F
/// by every z' ∈ {0,1}^n.
pub fn up_pipe_hkf(params: FeistelParams, d: &TripleDb, u: usize) -> Result<Vec<TripleDb>> {
    let (ul, ur) = (params.left(u), params.right(u));
    let mut out = Vec::new();
    for d2 in up_pipe_hk(params, d, u)? {
        out.push(d2.clone());
        let Some(z) = d2.d_h.get(ul) else { continue };
        if d.d_h.get(ul).is_some() {
            continue;
        }
        let Some(w) = d2.d_k.get(ur ^ z) else { continue };
        if d.d_k.get(ur ^ z).is_some() {
            continue;
        }
        for z2 in 0..params.half() {
            out.push(TripleDb {
                d_h: d2.d_h.clone(),
                d_k: d2.d_k.clone(),
                d_f: d2.d_f.assign(ul ^ w, Some(z2)),
            });
        }
    }
    out.dedup();
    Ok(out)
}

/// The full three-extensions D[u→·]: members of the h,k,f pipe with a
/// complete new chain from u.
pub fn full_extensions(params: FeistelParams, d: &TripleDb, u: usize) -> Result<Vec<TripleDb>> {
    Ok(up_pipe_hkf(params, d, u)?
        .into_iter()
        .filter(|e| triple_support(params, e).get(u).is_some())
        .collect())
}

fn check_up_pre(params: FeistelParams, d: &TripleDb, u: usize) -> Result<()> {
    if !is_canonical(params, d) {
        return Err(Error::InvalidArgument("triple is not canonical".into()));
    }
    let supp = triple_support(params, d);
    if supp.get(u).is_some() {
        return Err(Error::InvalidArgument(format!("{u} already supported")));
    }
    if !allows(params, &supp, u) {
        return Err(Error::InvalidArgument(format!("{u} not allowed")));
    }
    Ok(())
}

/// D↓^u_h: reassignments of D_h at u_L avoiding middle-value collisions
/// (⊥ included; the original value excluded by the middle-value rule).
pub fn down_pipe_h(params: FeistelParams, d: &TripleDb, u: usize) -> Result<Vec<TripleDb>> {
    check_down_pre(params, d, u)?;
    let (ul, ur) = (params.left(u), params.right(u));
    let mut out = vec![TripleDb {
        d_h: d.d_h.assign(ul, None),
        d_k: d.d_k.clone(),
        d_f: d.d_f.clone(),
    }];
    for z in 0..params.half() {
        if d.d_k.get(ur ^ z).is_none() {
            out.push(TripleDb {
                d_h: d.d_h.assign(ul, Some(z)),
                d_k: d.d_k.clone(),
                d_f: d.d_f.clone(),
            });
        }
    }
    Ok(out)
}

/// D↓^u_k: reassignments of D_k at m = u_R ⊕ D_h(u_L) over
/// u_L ⊕ L_{u, D[u→⊥]} ∪ {⊥}.
pub fn down_pipe_k(params: FeistelParams, d: &TripleDb, u: usize) -> Result<Vec<TripleDb>> {
    check_down_pre(params, d, u)?;
    let (ul, ur) = (params.left(u), params.right(u));
    let m = ur ^ d.d_h.get(ul).expect("u supported");
    let removed = remove_chain(params, d, u);
    let (_, l_set) = allowed_values(params, &triple_support(params, &removed), u)?;
    let mut out = vec![TripleDb {
        d_h: d.d_h.clone(),
        d_k: d.d_k.assign(m, None),
        d_f: d.d_f.clone(),
    }];
    for &l in &l_set {
        out.push(TripleDb {
            d_h: d.d_h.clone(),
            d_k: d.d_k.assign(m, Some(ul ^ l)),
            d_f: d.d_f.clone(),
        });
    }
    Ok(out)
}

/// D↓^u_f: reassignments of D_f at D(u)_L over {0,1}^n ∪ {⊥}.
pub fn down_pipe_f(params: FeistelParams, d: &TripleDb, u: usize) -> Result<Vec<TripleDb>> {
    check_down_pre(params, d, u)?;
    let supp = triple_support(params, d);
    let vl = params.left(supp.get(u).expect("u supported"));
    let mut out = vec![TripleDb {
        d_h: d.d_h.clone(),
        d_k: d.d_k.clone(),
        d_f: d.d_f.assign(vl, None),
    }];
    for z in 0..params.half() {
        out.push(TripleDb {
            d_h: d.d_h.clone(),
            d_k: d.d_k.clone(),
            d_f: d.d_f.assign(vl, Some(z)),
        });
    }
    Ok(out)
}

fn check_down_pre(params: FeistelParams, d: &TripleDb, u: usize) -> Result<()> {
    if !is_canonical(params, d) {
        return Err(Error::InvalidArgument("triple is not canonical".into()));
    }
    if triple_support(params, d).get(u).is_none() {
        return Err(Error::InvalidArgument(format!("{u} not supported")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Triple spaces and compression operators
// ---------------------------------------------------------------------------

/// The composite Hilbert space H ⊗ K ⊗ F of capped function databases
/// on [2^n], with the canonical and standard compression operators.
pub struct TripleSpace {
    pub params: FeistelParams,
    pub t_max: usize,
    pub component: Arc<DatabaseSpace>,
    pub layout: Arc<RegisterLayout>,
}

/// Register positions within a [`TripleSpace`] layout.
pub const H_POS: usize = 0;
pub const K_POS: usize = 1;
pub const F_POS: usize = 2;

impl TripleSpace {
    pub fn new(params: FeistelParams, t_max: usize) -> Result<Self> {
        let half = params.half();
        let component = Arc::new(enumerate_space(SpaceKind::Functions, half, half, t_max)?);
        let l = component.len();
        let layout = Arc::new(RegisterLayout::new(&[("h", l), ("k", l), ("f", l)])?);
        Ok(Self {
            params,
            t_max,
            component,
            layout,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn index_of(&self, d: &TripleDb) -> Option<usize> {
        let h = self.component.index_of(&d.d_h)?;
        let k = self.component.index_of(&d.d_k)?;
        let f = self.component.index_of(&d.d_f)?;
        Some(self.layout.encode(&[h, k, f]))
    }

    pub fn triple_at(&self, index: usize) -> TripleDb {
        let vals = self.layout.decode(index);
        TripleDb {
            d_h: self.component.database(vals[H_POS]),
            d_k: self.component.database(vals[K_POS]),
            d_f: self.component.database(vals[F_POS]),
        }
    }

    /// Uniform superposition over a set of triples.
    pub fn uniform_over(&self, triples: &[TripleDb]) -> Result<SparseState> {
        if triples.is_empty() {
            return Err(Error::InvalidArgument("empty set".into()));
        }
        let amp = num_complex::Complex64::new(1.0 / (triples.len() as f64).sqrt(), 0.0);
        let mut st = SparseState::zero(self.layout.clone());
        for d in triples {
            let idx = self
                .index_of(d)
                .ok_or_else(|| Error::CapExceeded {
                    count: d.size(),
                    cap: self.t_max,
                })?;
            st.add_term(idx, amp);
        }
        Ok(st)
    }

    /// |+_{D(A)}⟩: the uniform superposition over canonical triples
    /// supporting exactly A.
    pub fn canonical_superposition(&self, a: &InjectiveDatabase) -> Result<SparseState> {
        self.uniform_over(&enumerate_supporting(self.params, a)?)
    }

    /// Projector onto triples of size ≤ t (max component size).
    pub fn size_at_most_projector(&self, t: usize) -> LinearOp {
        let cutoffs: Vec<bool> = (0..self.component.len())
            .map(|i| self.component.size_of_index(i) <= t)
            .collect();
        let lay = self.layout.clone();
        LinearOp::projector_where(self.dim(), move |idx| {
            lay.decode(idx).iter().all(|&c| cutoffs[c])
        })
    }

    // -- Standard compression U --

    /// U^(H)_u = fc_{u_L} on H.
    pub fn u_h_op(&self, u: usize) -> LinearOp {
        self.component_op(u, apply_u_h)
    }

    /// U^(K)_u: fc on K at u_R ⊕ D_h(u_L) when defined, else identity.
    pub fn u_k_op(&self, u: usize) -> LinearOp {
        self.component_op(u, apply_u_k)
    }

    /// U^(F)_u: fc on F at u_L ⊕ D_k(u_R ⊕ D_h(u_L)) when the cascade is
    /// defined, else identity.
    pub fn u_f_op(&self, u: usize) -> LinearOp {
        self.component_op(u, apply_u_f)
    }

    /// U_u = U^(H)·U^(K)·U^(F): compression on input u (F acts first).
    pub fn u_op(&self, u: usize) -> LinearOp {
        self.u_h_op(u).times(&self.u_k_op(u)).times(&self.u_f_op(u))
    }

    // -- Canonical compression G --

    /// G^(H)_u: swap on H over H(u, D_k) = {z : u_R ⊕ z ∉ Dom(D_k)},
    /// controlled on the K register.
    pub fn g_h_op(&self, u: usize) -> LinearOp {
        self.component_op(u, apply_g_h)
    }

    /// G^(K)_u: swap on K over K(u, D) = {w : u_L ⊕ w ∈ L_{u,Supp(D)}},
    /// active only on blocks whose H-entry at u_L peels off to a
    /// canonical triple that allows u; identity elsewhere.
    pub fn g_k_op(&self, u: usize) -> LinearOp {
        self.component_op(u, apply_g_k)
    }

    /// G^(F)_u = U^(F)_u.
    pub fn g_f_op(&self, u: usize) -> LinearOp {
        self.u_f_op(u)
    }

    /// G_u = G^(H)·G^(K)·G^(F): canonical compression (F acts first);
    /// the adjoint is the canonical decompression.
    pub fn g_op(&self, u: usize) -> LinearOp {
        self.g_h_op(u).times(&self.g_k_op(u)).times(&self.g_f_op(u))
    }

    fn component_op(
        &self,
        u: usize,
        f: fn(
            FeistelParams,
            &Arc<DatabaseSpace>,
            (usize, usize, usize),
            usize,
            &SparseState,
        ) -> SparseState,
    ) -> LinearOp {
        let params = self.params;
        let comp = self.component.clone();
        let apply = move |s: &SparseState| f(params, &comp, (H_POS, K_POS, F_POS), u, s);
        let a2 = apply.clone();
        LinearOp::from_fns(self.dim(), apply, a2)
    }
}

// ---------------------------------------------------------------------------
// Compression primitives on arbitrary layouts
// ---------------------------------------------------------------------------
//
// These free functions act on any register layout containing H/K/F
// database registers at the given positions; all other registers ride
// along unchanged. Each is a Hermitian involution.

/// U^(H)_u: fc_{u_L} on the H register.
pub fn apply_u_h(
    params: FeistelParams,
    comp: &Arc<DatabaseSpace>,
    pos: (usize, usize, usize),
    u: usize,
    s: &SparseState,
) -> SparseState {
    let half = params.half();
    apply_swap_compression(
        comp,
        s.layout(),
        pos.0,
        &|_| params.left(u),
        &|_b, _x| (0..half).collect(),
        s,
    )
    .expect("cap too small for H compression")
}

/// U^(K)_u: fc on K at u_R ⊕ D_h(u_L) when defined, else identity.
pub fn apply_u_k(
    params: FeistelParams,
    comp: &Arc<DatabaseSpace>,
    pos: (usize, usize, usize),
    u: usize,
    s: &SparseState,
) -> SparseState {
    let half = params.half();
    apply_k_compression(params, comp, pos, u, &|_d| Some((0..half).collect()), s)
}

/// U^(F)_u: fc on F at u_L ⊕ D_k(u_R ⊕ D_h(u_L)) when the cascade is
/// defined, else identity.
pub fn apply_u_f(
    params: FeistelParams,
    comp: &Arc<DatabaseSpace>,
    pos: (usize, usize, usize),
    u: usize,
    s: &SparseState,
) -> SparseState {
    let half = params.half();
    let layout = s.layout().clone();
    // Bucket by (h, k) register values; the F point depends on both.
    let mut buckets: HashMap<(usize, usize), SparseState> = HashMap::new();
    for (idx, amp) in s.iter() {
        let key = (layout.value_at(idx, pos.0), layout.value_at(idx, pos.1));
        buckets
            .entry(key)
            .or_insert_with(|| SparseState::zero(layout.clone()))
            .add_term(idx, amp);
    }
    let mut out = SparseState::zero(layout.clone());
    for ((h_idx, k_idx), part) in buckets {
        let d_h = comp.database(h_idx);
        let d_k = comp.database(k_idx);
        let point = d_h
            .get(params.left(u))
            .and_then(|z| d_k.get(params.right(u) ^ z))
            .map(|w| params.left(u) ^ w);
        let res = match point {
            Some(xf) => apply_swap_compression(
                comp,
                &layout,
                pos.2,
                &|_| xf,
                &|_b, _x| (0..half).collect(),
                &part,
            )
            .expect("cap too small for F compression"),
            None => part,
        };
        out.add_scaled(&res, num_complex::Complex64::new(1.0, 0.0));
    }
    out.prune();
    out
}

/// G^(H)_u: swap on H over H(u, D_k) = {z : u_R ⊕ z ∉ Dom(D_k)},
/// controlled on the K register.
pub fn apply_g_h(
    params: FeistelParams,
    comp: &Arc<DatabaseSpace>,
    pos: (usize, usize, usize),
    u: usize,
    s: &SparseState,
) -> SparseState {
    let layout = s.layout().clone();
    let mut buckets: HashMap<usize, SparseState> = HashMap::new();
    for (idx, amp) in s.iter() {
        buckets
            .entry(layout.value_at(idx, pos.1))
            .or_insert_with(|| SparseState::zero(layout.clone()))
            .add_term(idx, amp);
    }
    let mut out = SparseState::zero(layout.clone());
    for (k_idx, part) in buckets {
        let dom_k = comp.database(k_idx).domain();
        let ur = params.right(u);
        let allowed: Vec<usize> = (0..params.half())
            .filter(|&z| !dom_k.contains(&(ur ^ z)))
            .collect();
        let res = apply_swap_compression(
            comp,
            &layout,
            pos.0,
            &|_| params.left(u),
            &move |_b, _x| allowed.clone(),
            &part,
        )
        .expect("cap too small for canonical H compression");
        out.add_scaled(&res, num_complex::Complex64::new(1.0, 0.0));
    }
    out.prune();
    out
}

/// G^(K)_u: swap on K over K(u, D) = {w : u_L ⊕ w ∈ L_{u,Supp(D)}},
/// active only on blocks whose H-entry at u_L peels off to a canonical
/// triple that allows u; identity elsewhere.
pub fn apply_g_k(
    params: FeistelParams,
    comp: &Arc<DatabaseSpace>,
    pos: (usize, usize, usize),
    u: usize,
    s: &SparseState,
) -> SparseState {
    apply_k_compression(
        params,
        comp,
        pos,
        u,
        &|d: &TripleDb| {
            // d = (D_h, base D_k, D_f) with the K point undefined; peel
            // the h extension (u_L, z) and demand a canonical remainder
            // with a fresh left substring that allows u.
            let ul = params.left(u);
            let d2 = TripleDb {
                d_h: d.d_h.assign(ul, None),
                d_k: d.d_k.clone(),
                d_f: d.d_f.clone(),
            };
            if !is_canonical(params, &d2) {
                return None;
            }
            let supp = triple_support(params, &d2);
            if supp.domain().iter().any(|&x| params.left(x) == ul) {
                return None;
            }
            let (_, l_set) = allowed_values(params, &supp, u).ok()?;
            Some(l_set.into_iter().map(|l| ul ^ l).collect())
        },
        s,
    )
}

/// Masked compression on input u: F, then K, then H. Canonical form
/// (G_u) when `canonical`, standard (U_u) otherwise.
pub fn apply_masked_compression(
    params: FeistelParams,
    comp: &Arc<DatabaseSpace>,
    pos: (usize, usize, usize),
    u: usize,
    canonical: bool,
    s: &SparseState,
) -> SparseState {
    let after_f = apply_u_f(params, comp, pos, u, s);
    let after_k = if canonical {
        apply_g_k(params, comp, pos, u, &after_f)
    } else {
        apply_u_k(params, comp, pos, u, &after_f)
    };
    if canonical {
        apply_g_h(params, comp, pos, u, &after_k)
    } else {
        apply_u_h(params, comp, pos, u, &after_k)
    }
}

/// Masked decompression on input u (the adjoint of
/// [`apply_masked_compression`]): H, then K, then F.
pub fn apply_masked_decompression(
    params: FeistelParams,
    comp: &Arc<DatabaseSpace>,
    pos: (usize, usize, usize),
    u: usize,
    canonical: bool,
    s: &SparseState,
) -> SparseState {
    let after_h = if canonical {
        apply_g_h(params, comp, pos, u, s)
    } else {
        apply_u_h(params, comp, pos, u, s)
    };
    let after_k = if canonical {
        apply_g_k(params, comp, pos, u, &after_h)
    } else {
        apply_u_k(params, comp, pos, u, &after_h)
    };
    apply_u_f(params, comp, pos, u, &after_k)
}

/// Shared skeleton for K-register compressions: buckets by (H, F)
/// register values, derives the K point m = u_R ⊕ D_h(u_L), and swaps
/// over the value set chosen by `set_of` (None ⇒ identity, which also
/// covers U^(K)'s undefined-cascade branch).
fn apply_k_compression(
    params: FeistelParams,
    comp: &Arc<DatabaseSpace>,
    pos: (usize, usize, usize),
    u: usize,
    set_of: &dyn Fn(&TripleDb) -> Option<Vec<usize>>,
    s: &SparseState,
) -> SparseState {
    let layout = s.layout().clone();
    let mut buckets: HashMap<(usize, usize), SparseState> = HashMap::new();
    for (idx, amp) in s.iter() {
        let key = (layout.value_at(idx, pos.0), layout.value_at(idx, pos.2));
        buckets
            .entry(key)
            .or_insert_with(|| SparseState::zero(layout.clone()))
            .add_term(idx, amp);
    }
    let mut out = SparseState::zero(layout.clone());
    for ((h_idx, f_idx), part) in buckets {
        let d_h = comp.database(h_idx);
        let d_f = comp.database(f_idx);
        let res = match d_h.get(params.left(u)) {
            Some(z) => {
                let m = params.right(u) ^ z;
                let d_h2 = d_h.clone();
                let d_f2 = d_f.clone();
                apply_swap_compression(
                    comp,
                    &layout,
                    pos.1,
                    &|_| m,
                    &move |base_k: &Database, _x| {
                        let d = TripleDb {
                            d_h: d_h2.clone(),
                            d_k: base_k.clone(),
                            d_f: d_f2.clone(),
                        };
                        set_of(&d).unwrap_or_default()
                    },
                    &part,
                )
                .expect("cap too small for K compression")
            }
            None => part,
        };
        out.add_scaled(&res, num_complex::Complex64::new(1.0, 0.0));
    }
    out.prune();
    out
}
