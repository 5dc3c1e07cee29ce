//! Partial functions, injective partial functions, permutations, and their
//! enumerated Hilbert-space encodings.
//!
//! A *database* is a partial function [M] → [N]; the undefined marker ⊥ is
//! encoded as the value `N` so that tables are dense fixed-width vectors.
//! An *injective database* refines this with "at most one preimage of any
//! y", and a [`Permutation`] is a total bijection.  [`DatabaseSpace`]
//! enumerates all databases up to a size cap into a deterministic,
//! bijective index ↔ database codec, ordered by size then lexicographically
//! on (domain subset, assigned values) so that size projectors are
//! contiguous index ranges.

use itertools::Itertools;
use std::collections::HashMap;
use std::sync::Arc;

use crate::qlinalg::{LinearOp, RegisterLayout, SparseState};
use crate::{Error, Result};
use num_complex::Complex64;

/// Default enumeration cap for [`enumerate_space`].
pub const DEFAULT_SPACE_CAP: usize = 5_000_000;

// ---------------------------------------------------------------------------
// Database
// ---------------------------------------------------------------------------

/// A partial function [M] → [N]; ⊥ is stored as the value `N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Database {
    m: usize,
    n: usize,
    table: Vec<usize>,
}

impl Database {
    /// The everywhere-undefined database.
    pub fn empty(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            table: vec![n; m],
        }
    }

    pub fn from_table(m: usize, n: usize, table: Vec<usize>) -> Result<Self> {
        if table.len() != m || table.iter().any(|&v| v > n) {
            return Err(Error::InvalidArgument(format!(
                "bad database table for M={m}, N={n}"
            )));
        }
        Ok(Self { m, n, table })
    }

    pub fn domain_size(&self) -> usize {
        self.m
    }

    pub fn codomain_size(&self) -> usize {
        self.n
    }

    /// D(x), or None for ⊥.
    pub fn get(&self, x: usize) -> Option<usize> {
        let v = self.table[x];
        (v < self.n).then_some(v)
    }

    /// Number of defined entries |D|.
    pub fn size(&self) -> usize {
        self.table.iter().filter(|&&v| v < self.n).count()
    }

    /// Defined inputs, ascending.
    pub fn domain(&self) -> Vec<usize> {
        (0..self.m).filter(|&x| self.table[x] < self.n).collect()
    }

    /// Values over the domain, in domain order.
    pub fn image(&self) -> Vec<usize> {
        self.domain().into_iter().map(|x| self.table[x]).collect()
    }

    /// D[x→y]: overwrite position x (y = None erases).
    pub fn assign(&self, x: usize, y: Option<usize>) -> Database {
        let mut t = self.table.clone();
        t[x] = y.unwrap_or(self.n);
        Database {
            m: self.m,
            n: self.n,
            table: t,
        }
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    /// Canonical text form: defined pairs `x→y` sorted by x.
    pub fn to_text(&self) -> String {
        let pairs: Vec<String> = self
            .domain()
            .into_iter()
            .map(|x| format!("{x}→{}", self.table[x]))
            .collect();
        format!("{{{}}}", pairs.join(", "))
    }
}

// ---------------------------------------------------------------------------
// InjectiveDatabase
// ---------------------------------------------------------------------------

/// An injective partial function [N] → [N] (at most one preimage of any y).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InjectiveDatabase {
    n: usize,
    table: Vec<usize>,
}

impl InjectiveDatabase {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            table: vec![n; n],
        }
    }

    pub fn from_table(n: usize, table: Vec<usize>) -> Result<Self> {
        if table.len() != n || table.iter().any(|&v| v > n) {
            return Err(Error::InvalidArgument("bad injective table".into()));
        }
        let defined: Vec<usize> = table.iter().copied().filter(|&v| v < n).collect();
        let mut sorted = defined.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != defined.len() {
            return Err(Error::InvalidArgument(
                "injective table has a repeated value".into(),
            ));
        }
        Ok(Self { n, table })
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut db = Self::empty(n);
        for &(x, y) in pairs {
            if x >= n || y >= n {
                return Err(Error::InvalidArgument("pair out of range".into()));
            }
            db = db.assign(x, Some(y));
        }
        if db.size() != pairs.len() {
            return Err(Error::InvalidArgument(
                "pairs collide under injective assignment".into(),
            ));
        }
        Ok(db)
    }

    pub fn size_param(&self) -> usize {
        self.n
    }

    pub fn get(&self, x: usize) -> Option<usize> {
        let v = self.table[x];
        (v < self.n).then_some(v)
    }

    /// Preimage: x with I(x) = y, if any.
    pub fn preimage(&self, y: usize) -> Option<usize> {
        (0..self.n).find(|&x| self.table[x] == y)
    }

    pub fn size(&self) -> usize {
        self.table.iter().filter(|&&v| v < self.n).count()
    }

    pub fn domain(&self) -> Vec<usize> {
        (0..self.n).filter(|&x| self.table[x] < self.n).collect()
    }

    pub fn image(&self) -> Vec<usize> {
        let mut im: Vec<usize> = self.table.iter().copied().filter(|&v| v < self.n).collect();
        im.sort_unstable();
        im
    }

    /// Defined pairs (x, I(x)) sorted by x.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.domain()
            .into_iter()
            .map(|x| (x, self.table[x]))
            .collect()
    }

    /// I[x→y]: overwrite position x; when y collides with an existing
    /// entry I(x′) = y, that conflicting x′ is discarded from the domain.
    pub fn assign(&self, x: usize, y: Option<usize>) -> InjectiveDatabase {
        let mut t = self.table.clone();
        if let Some(y) = y {
            if let Some(x_conflict) = (0..self.n).find(|&x2| t[x2] == y && x2 != x) {
                t[x_conflict] = self.n;
            }
            t[x] = y;
        } else {
            t[x] = self.n;
        }
        InjectiveDatabase {
            n: self.n,
            table: t,
        }
    }

    /// The inverse partial function: (y, x) for every (x, y).
    pub fn flip(&self) -> InjectiveDatabase {
        let mut t = vec![self.n; self.n];
        for (x, y) in self.pairs() {
            t[y] = x;
        }
        InjectiveDatabase {
            n: self.n,
            table: t,
        }
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn to_text(&self) -> String {
        let pairs: Vec<String> = self
            .pairs()
            .into_iter()
            .map(|(x, y)| format!("{x}→{y}"))
            .collect();
        format!("{{{}}}", pairs.join(", "))
    }
}

// ---------------------------------------------------------------------------
// Permutation
// ---------------------------------------------------------------------------

/// A total bijection on [n].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    table: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            table: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    pub fn from_table(table: Vec<usize>) -> Result<Self> {
        let n = table.len();
        let mut inverse = vec![usize::MAX; n];
        for (x, &y) in table.iter().enumerate() {
            if y >= n || inverse[y] != usize::MAX {
                return Err(Error::InvalidArgument("table is not a bijection".into()));
            }
            inverse[y] = x;
        }
        Ok(Self { table, inverse })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn apply(&self, x: usize) -> usize {
        self.table[x]
    }

    pub fn apply_inverse(&self, y: usize) -> usize {
        self.inverse[y]
    }

    /// The inverse permutation.
    pub fn inverse(&self) -> Permutation {
        Permutation {
            table: self.inverse.clone(),
            inverse: self.table.clone(),
        }
    }

    /// self ∘ other (other applied first).
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.len(), other.len());
        Permutation::from_table((0..self.len()).map(|x| self.apply(other.apply(x))).collect())
            .expect("composition of bijections is a bijection")
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }
}

/// All n! permutations of [n], in lexicographic table order.
pub fn all_permutations(n: usize) -> Vec<Permutation> {
    (0..n)
        .permutations(n)
        .map(|t| Permutation::from_table(t).unwrap())
        .collect()
}

// ---------------------------------------------------------------------------
// DatabaseSpace
// ---------------------------------------------------------------------------

/// Which family a space enumerates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    /// Partial functions [M] → [N].
    Functions,
    /// Injective partial functions [N] → [N].
    Injective,
}

/// A deterministic enumeration of all databases of size ≤ `t_max`,
/// providing the bijective index ↔ database codec used to give database
/// registers a basis.
#[derive(Clone, Debug)]
pub struct DatabaseSpace {
    kind: SpaceKind,
    m: usize,
    n: usize,
    t_max: usize,
    tables: Vec<Vec<usize>>,
    index_of: HashMap<Vec<usize>, usize>,
    /// `size_offsets[t]` = first index of the size-t block; a final entry
    /// holds the total count.
    size_offsets: Vec<usize>,
}

/// Enumerate a database space with the default cap.
pub fn enumerate_space(kind: SpaceKind, m: usize, n: usize, t_max: usize) -> Result<DatabaseSpace> {
    enumerate_space_capped(kind, m, n, t_max, DEFAULT_SPACE_CAP)
}

/// Enumerate with an explicit feasibility cap on the state count.
pub fn enumerate_space_capped(
    kind: SpaceKind,
    m: usize,
    n: usize,
    t_max: usize,
    cap: usize,
) -> Result<DatabaseSpace> {
    if kind == SpaceKind::Injective && m != n {
        return Err(Error::InvalidArgument(
            "injective spaces require M = N".into(),
        ));
    }
    if t_max > m {
        return Err(Error::InvalidArgument(format!(
            "t_max {t_max} exceeds domain size {m}"
        )));
    }
    let count = space_count(kind, m, n, t_max);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }

    let mut tables = Vec::with_capacity(count);
    let mut size_offsets = Vec::with_capacity(t_max + 2);
    for t in 0..=t_max {
        size_offsets.push(tables.len());
        for dom in (0..m).combinations(t) {
            match kind {
                SpaceKind::Functions => {
                    for values in (0..t).map(|_| 0..n).multi_cartesian_product_or_unit(t) {
                        let mut table = vec![n; m];
                        for (&x, &y) in dom.iter().zip(&values) {
                            table[x] = y;
                        }
                        tables.push(table);
                    }
                }
                SpaceKind::Injective => {
                    for values in (0..n).permutations(t) {
                        let mut table = vec![n; m];
                        for (&x, &y) in dom.iter().zip(&values) {
                            table[x] = y;
                        }
                        tables.push(table);
                    }
                }
            }
        }
    }
    size_offsets.push(tables.len());
    debug_assert_eq!(tables.len(), count);

    let index_of = tables
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(DatabaseSpace {
        kind,
        m,
        n,
        t_max,
        tables,
        index_of,
        size_offsets,
    })
}

/// Closed-form count: Σ_t C(M,t)·N^t (functions) or Σ_t C(N,t)²·t!
/// (injective).
pub fn space_count(kind: SpaceKind, m: usize, n: usize, t_max: usize) -> usize {
    (0..=t_max)
        .map(|t| match kind {
            SpaceKind::Functions => binomial(m, t) * n.pow(t as u32),
            SpaceKind::Injective => binomial(n, t) * binomial(n, t) * factorial(t),
        })
        .sum()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

// Helper: cartesian product of `t` copies of a range, yielding a single
// empty tuple when t = 0.
trait MultiProd: Iterator + Sized {
    fn multi_cartesian_product_or_unit(self, t: usize) -> Vec<Vec<usize>>;
}
impl<I: Iterator<Item = std::ops::Range<usize>>> MultiProd for I {
    fn multi_cartesian_product_or_unit(self, t: usize) -> Vec<Vec<usize>> {
        if t == 0 {
            vec![vec![]]
        } else {
            self.multi_cartesian_product().collect()
        }
    }
}

impl DatabaseSpace {
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn domain_size(&self) -> usize {
        self.m
    }

    pub fn codomain_size(&self) -> usize {
        self.n
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Database at an index (any kind).
    pub fn database(&self, index: usize) -> Database {
        Database {
            m: self.m,
            n: self.n,
            table: self.tables[index].clone(),
        }
    }

    /// Injective database at an index (injective spaces only).
    pub fn injective(&self, index: usize) -> InjectiveDatabase {
        assert_eq!(self.kind, SpaceKind::Injective);
        InjectiveDatabase {
            n: self.n,
            table: self.tables[index].clone(),
        }
    }

    pub fn index_of_table(&self, table: &[usize]) -> Option<usize> {
        self.index_of.get(table).copied()
    }

    pub fn index_of(&self, db: &Database) -> Option<usize> {
        self.index_of_table(&db.table)
    }

    pub fn index_of_injective(&self, db: &InjectiveDatabase) -> Option<usize> {
        self.index_of_table(&db.table)
    }

    /// Size of the database at an index (cheap: block lookup).
    pub fn size_of_index(&self, index: usize) -> usize {
        match self.size_offsets.binary_search(&index) {
            Ok(t) if t <= self.t_max => t,
            Ok(t) => t - 1,
            Err(t) => t - 1,
        }
    }

    /// Single-register layout for states over this space.
    pub fn layout(&self, register_name: &str) -> Arc<RegisterLayout> {
        Arc::new(RegisterLayout::new(&[(register_name, self.len())]).unwrap())
    }

    /// Projector onto databases of exactly size t.
    pub fn size_projector(&self, t: usize) -> Result<LinearOp> {
        if t > self.t_max {
            return Err(Error::InvalidArgument(format!(
                "size {t} out of range (cap {})",
                self.t_max
            )));
        }
        let (lo, hi) = (self.size_offsets[t], self.size_offsets[t + 1]);
        Ok(LinearOp::projector_where(self.len(), move |i| {
            lo <= i && i < hi
        }))
    }

    /// Projector onto databases of size ≤ t.
    pub fn size_at_most_projector(&self, t: usize) -> Result<LinearOp> {
        if t > self.t_max {
            return Err(Error::InvalidArgument(format!(
                "size {t} out of range (cap {})",
                self.t_max
            )));
        }
        let hi = self.size_offsets[t + 1];
        Ok(LinearOp::projector_where(self.len(), move |i| i < hi))
    }

    /// Projector onto databases with D(x) = y.
    pub fn consistency_projector(&self, x: usize, y: usize) -> LinearOp {
        let defined: Vec<bool> = self.tables.iter().map(|t| t[x] == y).collect();
        LinearOp::projector_where(self.len(), move |i| defined[i])
    }

    /// Projector onto databases with x ∈ Dom(D).
    pub fn defined_projector(&self, x: usize) -> LinearOp {
        let n = self.n;
        let defined: Vec<bool> = self.tables.iter().map(|t| t[x] < n).collect();
        LinearOp::projector_where(self.len(), move |i| defined[i])
    }

    /// Uniform superposition over single-point completions at x:
    /// functions: (1/√N) Σ_y |base[x→y]⟩;
    /// injective: (1/√(N−|I|)) Σ_{y ∉ Im(I)} |base[x→y]⟩.
    pub fn uniform_completion_state(&self, base_index: usize, x: usize) -> Result<SparseState> {
        let table = &self.tables[base_index];
        if table[x] < self.n {
            return Err(Error::InvalidArgument(format!(
                "base database already defined at {x}"
            )));
        }
        let base_size = table.iter().filter(|&&v| v < self.n).count();
        if base_size + 1 > self.t_max {
            return Err(Error::CompressionOverflow {
                size: base_size + 1,
                cap: self.t_max,
            });
        }
        let ys: Vec<usize> = match self.kind {
            SpaceKind::Functions => (0..self.n).collect(),
            SpaceKind::Injective => {
                let im: Vec<usize> = table.iter().copied().filter(|&v| v < self.n).collect();
                let free: Vec<usize> = (0..self.n).filter(|y| !im.contains(y)).collect();
                if free.is_empty() {
                    return Err(Error::InvalidArgument("image is full".into()));
                }
                free
            }
        };
        let amp = Complex64::new(1.0 / (ys.len() as f64).sqrt(), 0.0);
        let layout = self.layout("db");
        let terms = ys.into_iter().map(|y| {
            let mut t = table.clone();
            t[x] = y;
            let idx = self
                .index_of_table(&t)
                .expect("completion stays within the capped space");
            (idx, amp)
        });
        Ok(SparseState::from_terms(layout, terms))
    }
}
