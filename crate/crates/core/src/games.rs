//! Predicate-search games against real and compressed permutation
//! oracles: the predicate projector Π_R, brute-force sparsity, the
//! search-bound inequality √p₁ ≤ √p₂ + l/√(N−q−l) + Adv, the modified
//! compressions that commute with Π_R exactly (cycle-avoiding and
//! sparsity-avoiding variants), the concrete problems (one-more, cycle
//! finding, double-sided zero search, sponge preimage/collision,
//! Davies-Meyer preimage/collision), and exact desk-scale
//! distinguishers for 3/4/7-round Feistel.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;

use crate::cfo::{swap_compression_op, AdversaryCircuit};
use crate::cpo::{
    run_cp_experiment, run_perm_standard_experiment, PermOracleConfig, PERM_ENUM_CAP,
};
use crate::databases::{
    all_permutations, enumerate_space, factorial, Database, DatabaseSpace, InjectiveDatabase,
    Permutation, SpaceKind,
};
use crate::feistel_core::FeistelParams;
use crate::mforacle::{feistel_family, view_over_permutations};
use crate::qlinalg::{trace_distance, LinearOp, SparseState};
use crate::{Error, Result};

/// Longest candidate list tried when a predicate carries no arity hint.
const MAX_UNHINTED_LIST: usize = 5;

// ---------------------------------------------------------------------------
// Predicates
// ---------------------------------------------------------------------------

/// A search target: a set of finite lists of (input, output) pairs.
/// `decide` answers membership of one list; it must be pure.  Lists are
/// checked in the order given; predicates that care about order are
/// probed over all orderings during database satisfaction, so `decide`
/// need not be symmetric.
#[derive(Clone)]
pub struct Predicate {
    pub name: String,
    /// Exact list length of every member, when fixed.  Bounds the
    /// satisfaction search; without it list lengths up to the database
    /// size (capped) are tried.
    pub arity: Option<usize>,
    decide: Arc<dyn Fn(&[(usize, usize)]) -> bool + Send + Sync>,
}

impl Predicate {
    pub fn new(
        name: impl Into<String>,
        arity: Option<usize>,
        decide: impl Fn(&[(usize, usize)]) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            arity,
            decide: Arc::new(decide),
        }
    }

    pub fn decide(&self, list: &[(usize, usize)]) -> bool {
        (self.decide)(list)
    }

    /// I ∩ R ≠ ∅: does some list of pairs drawn from I (repeats
    /// allowed) satisfy the predicate?
    pub fn satisfied_by(&self, i: &InjectiveDatabase) -> Result<bool> {
        let pairs = i.pairs();
        if pairs.is_empty() {
            return Ok(false);
        }
        let limit = match self.arity {
            Some(a) => a,
            None if pairs.len() <= MAX_UNHINTED_LIST => pairs.len(),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "predicate `{}` has no arity hint and the database has {} pairs",
                    self.name,
                    pairs.len()
                )))
            }
        };
        let mut list = Vec::with_capacity(limit);
        for len in 1..=limit {
            if self.search(&pairs, len, &mut list) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn search(&self, pairs: &[(usize, usize)], len: usize, list: &mut Vec<(usize, usize)>) -> bool {
        if list.len() == len {
            return self.decide(list);
        }
        for &p in pairs {
            list.push(p);
            if self.search(pairs, len, list) {
                list.pop();
                return true;
            }
            list.pop();
        }
        false
    }
}

/// R = all lists of q+1 pairs with distinct inputs.
pub fn one_more_predicate(q: usize) -> Predicate {
    Predicate::new(format!("one-more-{q}"), Some(q + 1), move |list| {
        list.len() == q + 1
            && (0..list.len()).all(|i| (0..i).all(|j| list[i].0 != list[j].0))
    })
}

/// R = all cycles [x_1, …, x_l] with φ(x_i) = x_{i+1 mod l}; l = 1
/// reads as a fixed point.
pub fn cycle_predicate() -> Predicate {
    Predicate::new("cycle", None, |list| {
        !list.is_empty()
            && (0..list.len()).all(|i| (0..i).all(|j| list[i].0 != list[j].0))
            && (0..list.len()).all(|i| list[i].1 == list[(i + 1) % list.len()].0)
    })
}

/// Double-sided zero search on [2^{2n}]: a single pair
/// (x∥0^n, y∥0^n) — both low halves zero.
pub fn dszs_predicate(n: usize) -> Predicate {
    let mask = (1usize << n) - 1;
    Predicate::new(format!("dszs-{n}"), Some(1), move |list| {
        list.len() == 1 && list[0].0 & mask == 0 && list[0].1 & mask == 0
    })
}

/// Davies-Meyer zero preimage: φ(x) ⊕ x = 0, i.e. the single pair
/// (x, x).
pub fn dm_zero_preimage_predicate() -> Predicate {
    Predicate::new("dm-zero-preimage", Some(1), |list| {
        list.len() == 1 && list[0].0 == list[0].1
    })
}

/// Davies-Meyer collision: x ≠ x', y ≠ y', x ⊕ y = x' ⊕ y'.
pub fn dm_collision_predicate() -> Predicate {
    Predicate::new("dm-collision", Some(2), |list| {
        list.len() == 2 && {
            let ((x, y), (x2, y2)) = (list[0], list[1]);
            x != x2 && y != y2 && x ^ y == x2 ^ y2
        }
    })
}

/// R = {[(x₀, y₀)]}: exactly one fixed pair.
pub fn fixed_pair_predicate(x0: usize, y0: usize) -> Predicate {
    Predicate::new(format!("fixed-pair-{x0}-{y0}"), Some(1), move |list| {
        list.len() == 1 && list[0] == (x0, y0)
    })
}

/// R = all single pairs (satisfied by any correct input-output claim).
pub fn any_pair_predicate() -> Predicate {
    Predicate::new("any-pair", Some(1), |list| list.len() == 1)
}

/// R = ∅.
pub fn empty_predicate() -> Predicate {
    Predicate::new("empty", Some(1), |_| false)
}

// ---------------------------------------------------------------------------
// Sponge
// ---------------------------------------------------------------------------

/// A sponge instance: rate r, capacity c, and the underlying
/// permutation on r+c bits.  Strings order the rate part first
/// (x[0:r] = high bits, x[r:r+c] = low bits).
#[derive(Clone, Debug)]
pub struct SpongeParams {
    pub r: usize,
    pub c: usize,
    pub perm: Permutation,
}

impl SpongeParams {
    pub fn new(r: usize, c: usize, perm: Permutation) -> Result<Self> {
        if r == 0 || c == 0 {
            return Err(Error::InvalidArgument("need r, c ≥ 1".into()));
        }
        if perm.table().len() != 1 << (r + c) {
            return Err(Error::InvalidArgument(format!(
                "permutation acts on {} elements, expected 2^{}",
                perm.table().len(),
                r + c
            )));
        }
        Ok(Self { r, c, perm })
    }

    /// Absorb the r-bit blocks and squeeze one r-bit digest:
    /// u_{i+1} = φ(u_i ⊕ (m_i ∥ 0^c)), output u_l[0:r].
    pub fn eval(&self, message: &[usize]) -> Result<usize> {
        if message.is_empty() {
            return Err(Error::InvalidArgument("empty message".into()));
        }
        let mut u = 0usize;
        for &m in message {
            if m >= 1 << self.r {
                return Err(Error::InvalidArgument("block exceeds the rate".into()));
            }
            u = self.perm.apply(u ^ (m << self.c));
        }
        Ok(u >> self.c)
    }
}

/// x₁ capacity zero and consecutive capacity parts chained:
/// y_i[r:r+c] = x_{i+1}[r:r+c].
fn is_absorb_chain(c: usize, list: &[(usize, usize)]) -> bool {
    let mask = (1usize << c) - 1;
    !list.is_empty()
        && list[0].0 & mask == 0
        && list.windows(2).all(|w| w[0].1 & mask == w[1].0 & mask)
}

/// Sponge preimage predicate for digest w: an absorb chain whose final
/// rate part equals w.
pub fn sponge_preimage_predicate(r: usize, c: usize, w: usize) -> Predicate {
    Predicate::new(format!("sponge-pre-{r}-{c}-{w}"), None, move |list| {
        is_absorb_chain(c, list) && list.last().unwrap().1 >> c == w
    })
}

/// Internal z-preimage: an absorb chain whose final capacity part
/// equals z.
pub fn sponge_internal_preimage_predicate(r: usize, c: usize, z: usize) -> Predicate {
    let mask = (1usize << c) - 1;
    Predicate::new(format!("sponge-ipre-{r}-{c}-{z}"), None, move |list| {
        is_absorb_chain(c, list) && list.last().unwrap().1 & mask == z
    })
}

/// Internal collision: a 0^c internal preimage alone, or two distinct
/// chains reaching the same nonzero internal state (list
/// concatenation; the halves must differ).
pub fn sponge_internal_collision_predicate(r: usize, c: usize) -> Predicate {
    let mask = (1usize << c) - 1;
    Predicate::new(format!("sponge-icol-{r}-{c}"), None, move |list| {
        if is_absorb_chain(c, list) && list.last().unwrap().1 & mask == 0 {
            return true;
        }
        (1..list.len()).any(|k| {
            let (a, b) = list.split_at(k);
            a != b
                && is_absorb_chain(c, a)
                && is_absorb_chain(c, b)
                && a.last().unwrap().1 & mask == b.last().unwrap().1 & mask
                && a.last().unwrap().1 & mask != 0
        })
    })
}

/// Sponge collision: two distinct absorb chains with the same final
/// rate part (list concatenation).
pub fn sponge_collision_predicate(r: usize, c: usize) -> Predicate {
    Predicate::new(format!("sponge-col-{r}-{c}"), None, move |list| {
        (1..list.len()).any(|k| {
            let (a, b) = list.split_at(k);
            a != b
                && is_absorb_chain(c, a)
                && is_absorb_chain(c, b)
                && a.last().unwrap().1 >> c == b.last().unwrap().1 >> c
        })
    })
}

// ---------------------------------------------------------------------------
// Predicate projector and sparsity
// ---------------------------------------------------------------------------

/// Π_R on the compressed database register: diagonal, keeping |I⟩ iff
/// I ∩ R ≠ ∅.
pub fn predicate_projector(space: &Arc<DatabaseSpace>, p: &Predicate) -> Result<LinearOp> {
    let keep: Vec<bool> = (0..space.len())
        .map(|i| p.satisfied_by(&space.injective(i)))
        .collect::<Result<_>>()?;
    Ok(LinearOp::projector_where(space.len(), move |i| keep[i]))
}

/// Where the sparsity maximum was attained.
#[derive(Clone, Debug, Serialize)]
pub struct SparsityWitness {
    pub database: Vec<(usize, usize)>,
    /// "input" when maximizing over fresh x (counting images y),
    /// "output" when maximizing over fresh y (counting preimages x).
    pub direction: String,
    pub point: usize,
    pub hits: usize,
}

/// Exact t-sparsity with its witness.
#[derive(Clone, Debug, Serialize)]
pub struct SparsityReport {
    pub n: usize,
    pub t: usize,
    pub s_t: usize,
    pub witness: Option<SparsityWitness>,
}

/// Brute-force t-sparsity: the maximum over unsatisfied I of size ≤ t
/// of how many single assignments (in either direction) satisfy R.
pub fn brute_sparsity(p: &Predicate, n_size: usize, t: usize) -> Result<SparsityReport> {
    let space = enumerate_space(SpaceKind::Injective, n_size, n_size, t)?;
    let mut s_t = 0usize;
    let mut witness = None;
    for idx in 0..space.len() {
        let i = space.injective(idx);
        if p.satisfied_by(&i)? {
            continue;
        }
        let dom = i.domain();
        let im = i.image();
        for x in (0..n_size).filter(|x| !dom.contains(x)) {
            let hits = (0..n_size)
                .filter(|y| !im.contains(y))
                .filter(|&y| p.satisfied_by(&i.assign(x, Some(y))).unwrap_or(false))
                .count();
            if hits > s_t {
                s_t = hits;
                witness = Some(SparsityWitness {
                    database: i.pairs(),
                    direction: "input".into(),
                    point: x,
                    hits,
                });
            }
        }
        for y in (0..n_size).filter(|y| !im.contains(y)) {
            let hits = (0..n_size)
                .filter(|x| !dom.contains(x))
                .filter(|&x| p.satisfied_by(&i.assign(x, Some(y))).unwrap_or(false))
                .count();
            if hits > s_t {
                s_t = hits;
                witness = Some(SparsityWitness {
                    database: i.pairs(),
                    direction: "output".into(),
                    point: y,
                    hits,
                });
            }
        }
    }
    Ok(SparsityReport {
        n: n_size,
        t,
        s_t,
        witness,
    })
}

// ---------------------------------------------------------------------------
// Games
// ---------------------------------------------------------------------------

/// Decode the claimed output list from the last 2l workspace
/// sub-registers ((x_i, y_i) repeated).
fn output_tuple(cfg: &PermOracleConfig, idx: usize, l: usize) -> Vec<(usize, usize)> {
    let layout = cfg.adversary_layout();
    let first = cfg.workspace.len() - 2 * l;
    (0..l)
        .map(|i| {
            (
                layout.value_at(idx, first + 2 * i),
                layout.value_at(idx, first + 2 * i + 1),
            )
        })
        .collect()
}

fn validate_output_registers(cfg: &PermOracleConfig, l: usize) -> Result<()> {
    if cfg.workspace.len() < 2 * l
        || cfg.workspace[cfg.workspace.len() - 2 * l..]
            .iter()
            .any(|&c| c != cfg.n)
    {
        return Err(Error::InvalidArgument(
            "output tuple registers must be the last 2l workspace sub-registers of cardinality N"
                .into(),
        ));
    }
    Ok(())
}

/// Exact win probability of the real predicate-search game: a uniform
/// permutation is drawn, the adversary queries it q times, and wins
/// when its claimed l pairs hold under φ and satisfy R.  Enumerates S_N
/// when feasible; otherwise Monte Carlo over `mc = (samples, seed)`.
pub fn play_real_game(
    cfg: &PermOracleConfig,
    p: &Predicate,
    adv: &AdversaryCircuit,
    l: usize,
    mc: Option<(usize, u64)>,
) -> Result<f64> {
    validate_output_registers(cfg, l)?;
    let layout = cfg.adversary_layout();
    let b_pos = layout.position("b")?;
    let x_pos = layout.position("x")?;
    let y_pos = layout.position("y")?;
    let unitaries = &adv.unitaries;

    let perms: Vec<Permutation> = if factorial(cfg.n) <= PERM_ENUM_CAP {
        all_permutations(cfg.n)
    } else {
        let Some((samples, seed)) = mc else {
            return Err(Error::CapExceeded {
                count: factorial(cfg.n),
                cap: PERM_ENUM_CAP,
            });
        };
        let mut rng = crate::rng::seeded(seed);
        (0..samples)
            .map(|_| {
                let mut t: Vec<usize> = (0..cfg.n).collect();
                t.shuffle(&mut rng);
                Permutation::from_table(t).unwrap()
            })
            .collect()
    };

    let mut total = 0.0;
    for phi in &perms {
        let mut psi = SparseState::basis(layout.clone(), adv.initial_index);
        for (t, u) in unitaries.iter().enumerate() {
            psi = u.apply(&psi);
            if t < adv.num_queries() {
                let mut queried = SparseState::zero(layout.clone());
                for (idx, amp) in psi.iter() {
                    let v = if layout.value_at(idx, b_pos) == 0 {
                        phi.apply(layout.value_at(idx, x_pos))
                    } else {
                        phi.apply_inverse(layout.value_at(idx, x_pos))
                    };
                    let y = layout.value_at(idx, y_pos);
                    queried.add_term(layout.with_value(idx, y_pos, y ^ v), amp);
                }
                psi = queried;
            }
        }
        let mut win = 0.0;
        for (idx, amp) in psi.iter() {
            let tuple = output_tuple(cfg, idx, l);
            if tuple.iter().all(|&(x, y)| phi.apply(x) == y) && p.decide(&tuple) {
                win += amp.norm_sqr();
            }
        }
        total += win;
    }
    Ok(total / perms.len() as f64)
}

/// Win probability of the compressed-oracle game: p₂ = ‖Π_R|ψ^(cP)⟩‖².
pub fn play_compressed_game(
    cfg: &PermOracleConfig,
    p: &Predicate,
    adv: &AdversaryCircuit,
) -> Result<f64> {
    let space = cfg.space()?;
    let layout = cfg.full_layout(&space);
    let db_pos = layout.position("db")?;
    let (psi, _) = run_cp_experiment(cfg, adv)?;
    let mut sat = vec![None; space.len()];
    let mut p2 = 0.0;
    for (idx, amp) in psi.iter() {
        let db = layout.value_at(idx, db_pos);
        let hit = match sat[db] {
            Some(v) => v,
            None => {
                let v = p.satisfied_by(&space.injective(db))?;
                sat[db] = Some(v);
                v
            }
        };
        if hit {
            p2 += amp.norm_sqr();
        }
    }
    Ok(p2)
}

/// Both sides of the search-bound inequality for one (adversary,
/// predicate, l) instance: √p₁ ≤ √p₂ + l/√(N−q−l) + Adv, using the
/// measured trace distance between the real and compressed views as
/// the advantage surrogate.
#[derive(Clone, Debug, Serialize)]
pub struct SearchBoundReport {
    pub n: usize,
    pub q: usize,
    pub l: usize,
    pub p1: f64,
    pub p2: f64,
    pub advantage: f64,
    pub bound_rhs: f64,
}

impl SearchBoundReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.p1.sqrt() <= self.bound_rhs + tol
    }
}

pub fn search_bound_check(
    cfg: &PermOracleConfig,
    p: &Predicate,
    adv: &AdversaryCircuit,
    l: usize,
) -> Result<SearchBoundReport> {
    let q = adv.num_queries();
    if cfg.n <= q + l {
        return Err(Error::InvalidArgument(
            "need N − q − l > 0 for the slack term".into(),
        ));
    }
    let p1 = play_real_game(cfg, p, adv, l, None)?;
    let p2 = play_compressed_game(cfg, p, adv)?;
    let standard = run_perm_standard_experiment(cfg, adv)?;
    let (_, compressed) = run_cp_experiment(cfg, adv)?;
    let advantage = trace_distance(&standard, &compressed)?;
    let bound_rhs = p2.sqrt() + (l as f64) / ((cfg.n - q - l) as f64).sqrt() + advantage;
    Ok(SearchBoundReport {
        n: cfg.n,
        q,
        l,
        p1,
        p2,
        advantage,
        bound_rhs,
    })
}

// ---------------------------------------------------------------------------
// Modified compressions
// ---------------------------------------------------------------------------

/// Which value set the compression superposes over.
#[derive(Clone)]
pub enum CompressionVariant {
    /// pC: fresh images [N] \ Im(I).
    Standard,
    /// Cycle-avoiding p̃C: [N] \ (Dom(I) ∪ Im(I)).
    NonDomainImage,
    /// Sparsity-avoiding forward p̃C^→: [N] \ Im(I) minus images whose
    /// assignment would newly satisfy the predicate.
    AvoidForward(Predicate),
    /// Sparsity-avoiding inverse p̃C^←: acts on the flipped database
    /// held during a b = 1 query; [N] \ Im minus preimages whose
    /// assignment would newly satisfy the predicate on the re-flipped
    /// database.
    AvoidInverse(Predicate),
}

fn injective_of(db: &Database) -> InjectiveDatabase {
    InjectiveDatabase::from_table(db.codomain_size(), db.table().to_vec())
        .expect("compressed permutation databases are injective")
}

impl CompressionVariant {
    fn allowed(&self) -> Arc<dyn Fn(&Database, usize) -> Vec<usize> + Send + Sync> {
        match self.clone() {
            CompressionVariant::Standard => Arc::new(crate::cfo::pc_allowed()),
            CompressionVariant::NonDomainImage => Arc::new(|db: &Database, x| {
                // The cell at x is cleared before this is consulted, so
                // x itself must be excluded too: a value y = x would
                // close a fixed point.
                let i = injective_of(db);
                let dom = i.domain();
                let im = i.image();
                (0..db.codomain_size())
                    .filter(|&y| y != x && !dom.contains(&y) && !im.contains(&y))
                    .collect()
            }),
            CompressionVariant::AvoidForward(p) => Arc::new(move |db: &Database, x| {
                let i = injective_of(db);
                let im = i.image();
                let fresh = (0..db.codomain_size()).filter(|y| !im.contains(y));
                if p.satisfied_by(&i).expect("decidable within the cap") {
                    fresh.collect()
                } else {
                    fresh
                        .filter(|&y| !p.satisfied_by(&i.assign(x, Some(y))).unwrap_or(true))
                        .collect()
                }
            }),
            CompressionVariant::AvoidInverse(p) => Arc::new(move |db: &Database, y| {
                // `db` is the flipped database J = I⁻¹; re-flip before
                // consulting the predicate.
                let j = injective_of(db);
                let im = j.image();
                let fresh = (0..db.codomain_size()).filter(|x| !im.contains(x));
                if p.satisfied_by(&j.flip()).expect("decidable within the cap") {
                    fresh.collect()
                } else {
                    fresh
                        .filter(|&x| {
                            !p.satisfied_by(&j.assign(y, Some(x)).flip()).unwrap_or(true)
                        })
                        .collect()
                }
            }),
        }
    }
}

/// The (possibly modified) compression on the full experiment layout,
/// controlled on the X register.
pub fn build_variant_pc(
    cfg: &PermOracleConfig,
    space: &Arc<DatabaseSpace>,
    variant: &CompressionVariant,
) -> LinearOp {
    let layout = cfg.full_layout(space);
    let x_pos = layout.position("x").unwrap();
    let db_pos = layout.position("db").unwrap();
    swap_compression_op(
        space.clone(),
        layout,
        db_pos,
        Some(x_pos),
        0,
        variant.allowed(),
    )
}

/// The modified two-way oracle: the forward branch conjugated by the
/// forward variant, the inverse branch flip-conjugated around the
/// inverse variant.
pub fn build_variant_cp(
    cfg: &PermOracleConfig,
    space: &Arc<DatabaseSpace>,
    forward: &CompressionVariant,
    inverse: &CompressionVariant,
) -> LinearOp {
    let layout = cfg.full_layout(space);
    let b_pos = layout.position("b").unwrap();
    let pc_f = build_variant_pc(cfg, space, forward);
    let pc_i = build_variant_pc(cfg, space, inverse);
    let p = crate::cpo::build_perm_query(cfg, space);
    let f = crate::cpo::build_flip(cfg, space);
    let fwd = pc_f.times(&p).times(&pc_f.adjoint());
    let inv = f
        .times(&pc_i.times(&p).times(&pc_i.adjoint()))
        .times(&f.adjoint());
    let lay = layout.clone();
    let apply = move |s: &SparseState| {
        let fwd_part = SparseState::from_terms(
            s.layout().clone(),
            s.iter().filter(|&(i, _)| lay.value_at(i, b_pos) == 0),
        );
        let inv_part = SparseState::from_terms(
            s.layout().clone(),
            s.iter().filter(|&(i, _)| lay.value_at(i, b_pos) == 1),
        );
        let mut out = fwd.apply(&fwd_part);
        out.add_scaled(&inv.apply(&inv_part), Complex64::new(1.0, 0.0));
        out
    };
    let apply2 = apply.clone();
    LinearOp::from_fns(layout.dim(), apply, apply2)
}

/// Commutator norm ‖[Π_R, op]‖ and restricted closeness
/// ‖(pC − p̃C)·Π_{≤t}‖ for one modified-compression construction.
#[derive(Clone, Debug, Serialize)]
pub struct CommutatorReport {
    pub n: usize,
    pub t: usize,
    pub commutator_norm: f64,
    pub closeness: f64,
    /// √(s/N) with s the relevant sparsity (t for the cycle variant).
    pub reference_scale: f64,
}

/// Measure the commutator of Π_R with the modified oracle and the
/// distance of the modified compression from pC on size-≤t databases.
pub fn commutator_check(
    cfg: &PermOracleConfig,
    p: &Predicate,
    forward: &CompressionVariant,
    inverse: &CompressionVariant,
    sparsity: usize,
) -> Result<CommutatorReport> {
    let space = cfg.space()?;
    let layout = cfg.full_layout(&space);
    let pi_r = crate::qlinalg::tensor_embed(&predicate_projector(&space, p)?, &["db"], &layout)?;
    let cp_mod = build_variant_cp(cfg, &space, forward, inverse);
    // Restrict to databases with room for one more entry so the query
    // never overflows the size cap; that is exactly the reachable
    // subspace after t queries.
    let t = cfg.t_max.saturating_sub(1);
    let small = crate::qlinalg::tensor_embed(&space.size_at_most_projector(t)?, &["db"], &layout)?;
    let commutator = pi_r
        .times(&cp_mod)
        .sub(&cp_mod.times(&pi_r))
        .times(&small);
    let commutator_norm = commutator.operator_norm(&layout);

    let pc = build_variant_pc(cfg, &space, &CompressionVariant::Standard);
    let pc_mod = build_variant_pc(cfg, &space, forward);
    let closeness = pc.sub(&pc_mod).times(&small).operator_norm(&layout);
    Ok(CommutatorReport {
        n: cfg.n,
        t,
        commutator_norm,
        closeness,
        reference_scale: (sparsity as f64 / cfg.n as f64).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Feistel distinguishers
// ---------------------------------------------------------------------------

/// Exact figures for the XOR-statistic attack and the
/// information-theoretic ceiling at one round count.
#[derive(Clone, Debug, Serialize)]
pub struct DistinguisherReport {
    pub n: usize,
    pub rounds: usize,
    pub q: usize,
    /// |Pr[statistic | Feistel] − Pr[statistic | uniform]| for the
    /// two-query probe sharing the left input half, accepting iff the
    /// output left halves agree.
    pub advantage: f64,
    /// Trace distance of the joint response distributions — the best
    /// any statistic on the same queries can do.
    pub ceiling: f64,
}

/// The two probe points: equal left halves, right halves 0 and 1.
fn probe_points(params: FeistelParams) -> (usize, usize) {
    (params.concat(0, 0), params.concat(0, 1))
}

fn statistic_holds(params: FeistelParams, y1: usize, y2: usize) -> bool {
    params.left(y1) == params.left(y2)
}

/// Run the exact two-query distinguisher against `rounds`-round
/// Feistel at n = 1: the XOR-statistic advantage and the
/// trace-distance ceiling over the same queries.
pub fn distinguisher_suite(params: FeistelParams, rounds: usize) -> Result<DistinguisherReport> {
    if !matches!(rounds, 3 | 4 | 7) {
        return Err(Error::InvalidArgument("rounds must be 3, 4, or 7".into()));
    }
    let full = params.full();
    if factorial(full) > PERM_ENUM_CAP {
        return Err(Error::CapExceeded {
            count: factorial(full),
            cap: PERM_ENUM_CAP,
        });
    }
    let (x1, x2) = probe_points(params);
    let family = feistel_family(params, rounds);
    let uniform: Vec<(Permutation, f64)> = all_permutations(full)
        .into_iter()
        .map(|p| (p, 1.0 / factorial(full) as f64))
        .collect();
    let dist = |fam: &[(Permutation, f64)]| -> HashMap<(usize, usize), f64> {
        let mut d = HashMap::new();
        for (phi, w) in fam {
            *d.entry((phi.apply(x1), phi.apply(x2))).or_insert(0.0) += w;
        }
        d
    };
    let df = dist(&family);
    let du = dist(&uniform);
    let stat = |d: &HashMap<(usize, usize), f64>| -> f64 {
        d.iter()
            .filter(|(&(y1, y2), _)| statistic_holds(params, y1, y2))
            .map(|(_, w)| w)
            .sum()
    };
    let advantage = (stat(&df) - stat(&du)).abs();
    let keys: std::collections::BTreeSet<_> = df.keys().chain(du.keys()).copied().collect();
    let ceiling = keys
        .iter()
        .map(|k| (df.get(k).unwrap_or(&0.0) - du.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
        / 2.0;
    Ok(DistinguisherReport {
        n: params.n,
        rounds,
        q: 2,
        advantage,
        ceiling,
    })
}

/// Trace distance between the adversary's view against the
/// `rounds`-round Feistel family and against uniform permutations.
pub fn feistel_view_distance(
    params: FeistelParams,
    rounds: usize,
    cfg: &PermOracleConfig,
    adv: &AdversaryCircuit,
) -> Result<f64> {
    let layout = cfg.adversary_layout();
    let family = feistel_family(params, rounds);
    let view = view_over_permutations(&layout, adv, &family)?;
    let standard = run_perm_standard_experiment(cfg, adv)?;
    trace_distance(&standard, &view)
}
