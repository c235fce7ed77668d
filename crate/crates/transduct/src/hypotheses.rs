//! Hypotheses over tree nodes, hypothesis classes, version spaces, and the
//! Littlestone dimension.
//!
//! The random construction pairs each branch `b` (a root-to-leaf bitstring of
//! length d+1) with a hypothesis that labels the nodes on `b`'s path with the
//! successive bits of `b` and labels every off-path node by a keyed prf with
//! exact bias 2^-s. Members are never materialized: a class of 2^(d+1)
//! hypotheses over 2^(d+1)-1 nodes needs O(1) memory, and a version space
//! over it is one bit (or one index) per member.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebits::{Bit, NodeId, Tree, MAX_DEPTH};

/// SplitMix64 finalizer constants (Steele, Lea, Flood's generator).
const SPLITMIX_MUL_1: u64 = 0xbf58_476d_1ce4_e5b9;
const SPLITMIX_MUL_2: u64 = 0x94d0_49bb_1331_11eb;
/// Odd salts separating the branch and node encodings inside the prf key.
const BRANCH_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const NODE_SALT: u64 = 0xc2b2_ae3d_27d4_eb4f;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(SPLITMIX_MUL_1);
    z ^= z >> 27;
    z = z.wrapping_mul(SPLITMIX_MUL_2);
    z ^= z >> 31;
    z
}

/// Length-marked encoding of a bitstring: (1 << len) | value. Injective over
/// all strings of length <= 63, so distinct branches or nodes never collide.
#[inline]
fn length_marked(len: u8, value: u64) -> u64 {
    (1u64 << len) | value
}

/// Off-path label of branch-`b` hypothesis at node `x`: 1 with exact
/// probability 2^-bias_exp over the choice of prf output, deterministic in
/// (seed, b, x).
#[inline]
fn offpath_label(seed: u64, d: u8, branch: u64, x: NodeId, bias_exp: u32) -> Bit {
    let key = seed
        ^ length_marked(d + 1, branch).wrapping_mul(BRANCH_SALT)
        ^ length_marked(x.depth(), x.bits()).wrapping_mul(NODE_SALT);
    (mix64(key) & ((1u64 << bias_exp) - 1) == 0) as Bit
}

/// A single hypothesis: a binary labeling of all nodes of a depth-d tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    /// Label table indexed by breadth-first node index.
    Explicit(ExplicitHypothesis),
    /// Branch-following hypothesis with prf off-path labels.
    Lazy { d: u8, branch: u64, seed: u64, bias_exp: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplicitHypothesis {
    d: u8,
    labels: Vec<Bit>,
}

impl ExplicitHypothesis {
    pub fn new(d: u8, labels: Vec<Bit>) -> Result<ExplicitHypothesis> {
        let tree = Tree::new(d)?;
        if labels.len() as u64 != tree.node_count() {
            return Err(Error::InvalidParameter(format!(
                "explicit hypothesis needs {} labels for depth {d}, got {}",
                tree.node_count(),
                labels.len()
            )));
        }
        if labels.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("labels must be bits".into()));
        }
        Ok(ExplicitHypothesis { d, labels })
    }

    /// Builds the table by evaluating `f` on every node in BFS order.
    pub fn from_fn(d: u8, mut f: impl FnMut(NodeId) -> Bit) -> Result<ExplicitHypothesis> {
        let tree = Tree::new(d)?;
        ExplicitHypothesis::new(d, tree.bfs_nodes().map(|u| f(u) & 1).collect())
    }
}

impl Hypothesis {
    pub fn depth(&self) -> u8 {
        match self {
            Hypothesis::Explicit(e) => e.d,
            Hypothesis::Lazy { d, .. } => *d,
        }
    }

    pub fn eval(&self, x: NodeId) -> Bit {
        match self {
            Hypothesis::Explicit(e) => e.labels[x.bfs_index() as usize],
            Hypothesis::Lazy { d, branch, seed, bias_exp } => {
                lazy_eval(*d, *branch, *seed, *bias_exp, x)
            }
        }
    }

    /// The root-to-leaf path this hypothesis walks when each step follows its
    /// own label: u_0 is the root, u_{i+1} is u_i's eval(u_i)-child, and the
    /// walk stops at depth d. Returns d + 1 nodes.
    pub fn path_of(&self) -> Vec<NodeId> {
        let d = self.depth();
        let mut path = Vec::with_capacity(d as usize + 1);
        let mut u = NodeId::ROOT;
        path.push(u);
        for _ in 0..d {
            u = u.extend(self.eval(u));
            path.push(u);
        }
        path
    }

    /// Converts to an explicit label table.
    pub fn materialize(&self) -> Result<ExplicitHypothesis> {
        ExplicitHypothesis::from_fn(self.depth(), |u| self.eval(u))
    }
}

#[inline]
fn lazy_on_path(d: u8, branch: u64, x: NodeId) -> bool {
    // x is on the branch path iff x's string is a prefix of the branch.
    x.depth() <= d && branch >> (d + 1 - x.depth()) == x.bits()
}

#[inline]
fn lazy_eval(d: u8, branch: u64, seed: u64, bias_exp: u32, x: NodeId) -> Bit {
    if lazy_on_path(d, branch, x) {
        ((branch >> (d - x.depth())) & 1) as Bit
    } else {
        offpath_label(seed, d, branch, x, bias_exp)
    }
}

/// Descriptor for serialization: enough to regenerate (lazy) or identify
/// (explicit) the class inside a transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassDescriptor {
    LazyRandom { d: u8, bias_exp: u32, seed: u64 },
    Explicit { d: u8, count: u64 },
}

#[derive(Clone, Debug)]
enum ClassKind {
    LazyRandom { seed: u64, bias_exp: u32 },
    Explicit(Vec<ExplicitHypothesis>),
}

/// An ordered hypothesis class; member index identifies a hypothesis.
#[derive(Clone, Debug)]
pub struct HypothesisClass {
    d: u8,
    kind: ClassKind,
}

impl HypothesisClass {
    /// The random branch class: 2^(d+1) members, one per branch in
    /// lexicographic branch order, off-path labels i.i.d.-style with exact
    /// bias 2^-bias_exp under the keyed prf.
    pub fn lazy_random(d: u8, bias_exp: u32, seed: u64) -> Result<HypothesisClass> {
        if d > MAX_DEPTH {
            return Err(Error::DepthOverflow { depth: d, d: MAX_DEPTH });
        }
        if bias_exp == 0 || bias_exp > 62 {
            return Err(Error::InvalidParameter(format!(
                "bias_exp must be in 1..=62, got {bias_exp}"
            )));
        }
        Ok(HypothesisClass { d, kind: ClassKind::LazyRandom { seed, bias_exp } })
    }

    /// Default off-path bias exponent: round(sqrt(d)), at least 1.
    pub fn default_bias_exp(d: u8) -> u32 {
        ((d as f64).sqrt().round() as u32).max(1)
    }

    pub fn explicit(d: u8, members: Vec<ExplicitHypothesis>) -> Result<HypothesisClass> {
        if members.iter().any(|m| m.d != d) {
            return Err(Error::InvalidParameter("member depth mismatch".into()));
        }
        Ok(HypothesisClass { d, kind: ClassKind::Explicit(members) })
    }

    /// All 2^k binary functions over `points` (labels 0 elsewhere), in
    /// lexicographic label order with points[0] most significant.
    pub fn all_functions(d: u8, points: &[NodeId]) -> Result<HypothesisClass> {
        let tree = Tree::new(d)?;
        let k = points.len();
        if k > 16 {
            return Err(Error::InvalidParameter("all_functions: too many points".into()));
        }
        for &p in points {
            if !tree.contains(p) {
                return Err(Error::InvalidParameter(format!("point {p} outside depth-{d} tree")));
            }
        }
        let mut members = Vec::with_capacity(1 << k);
        for pattern in 0u32..1 << k {
            members.push(ExplicitHypothesis::from_fn(d, |u| {
                match points.iter().position(|&p| p == u) {
                    Some(j) => ((pattern >> (k - 1 - j)) & 1) as Bit,
                    None => 0,
                }
            })?);
        }
        HypothesisClass::explicit(d, members)
    }

    pub fn depth(&self) -> u8 {
        self.d
    }

    pub fn tree(&self) -> Tree {
        Tree::new(self.d).expect("depth validated at construction")
    }

    pub fn len(&self) -> u64 {
        match &self.kind {
            ClassKind::LazyRandom { .. } => 1u64 << (self.d + 1),
            ClassKind::Explicit(m) => m.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn eval(&self, member: u64, x: NodeId) -> Bit {
        match &self.kind {
            ClassKind::LazyRandom { seed, bias_exp } => {
                lazy_eval(self.d, member, *seed, *bias_exp, x)
            }
            ClassKind::Explicit(m) => m[member as usize].labels[x.bfs_index() as usize],
        }
    }

    /// Is `x` on the self-labeled path of this member (x in path(h))?
    #[inline]
    pub fn on_path(&self, member: u64, x: NodeId) -> bool {
        match &self.kind {
            ClassKind::LazyRandom { .. } => lazy_on_path(self.d, member, x),
            ClassKind::Explicit(m) => {
                let h = &m[member as usize];
                let mut u = NodeId::ROOT;
                for i in 0..x.depth() {
                    let b = h.labels[u.bfs_index() as usize];
                    if b != x.bit_at(i) {
                        return false;
                    }
                    u = u.extend(b);
                }
                true
            }
        }
    }

    pub fn member(&self, i: u64) -> Hypothesis {
        debug_assert!(i < self.len());
        match &self.kind {
            ClassKind::LazyRandom { seed, bias_exp } => {
                Hypothesis::Lazy { d: self.d, branch: i, seed: *seed, bias_exp: *bias_exp }
            }
            ClassKind::Explicit(m) => Hypothesis::Explicit(m[i as usize].clone()),
        }
    }

    pub fn descriptor(&self) -> ClassDescriptor {
        match &self.kind {
            ClassKind::LazyRandom { seed, bias_exp } => {
                ClassDescriptor::LazyRandom { d: self.d, bias_exp: *bias_exp, seed: *seed }
            }
            ClassKind::Explicit(m) => {
                ClassDescriptor::Explicit { d: self.d, count: m.len() as u64 }
            }
        }
    }

    /// Materializes every member into explicit tables (small d only).
    pub fn materialize(&self) -> Result<HypothesisClass> {
        if self.d > 12 {
            return Err(Error::BudgetExceeded(format!(
                "refusing to materialize a depth-{} class",
                self.d
            )));
        }
        let members = (0..self.len())
            .map(|i| self.member(i).materialize())
            .collect::<Result<Vec<_>>>()?;
        HypothesisClass::explicit(self.d, members)
    }

    /// Checks that on-path labels realize every branch: member i, walked
    /// along its own labels from the root, spells out exactly branch i.
    /// True for the lazy construction by design; meaningful on round-trips.
    pub fn onpath_shattering_holds(&self) -> bool {
        let d = self.d;
        if self.len() != 1u64 << (d + 1) {
            return false;
        }
        for i in 0..self.len() {
            let mut u = NodeId::ROOT;
            for k in 0..=d {
                let y = self.eval(i, u);
                let want = ((i >> (d - k)) & 1) as Bit;
                if y != want {
                    return false;
                }
                if k < d {
                    u = u.extend(y);
                }
            }
        }
        true
    }

    /// Writes the explicit-table form: a `d=<d>` header, then one line per
    /// member: branch bitstring (member index, d+1 bits), a space, and all
    /// 2^(d+1)-1 labels in BFS node order.
    pub fn write_explicit_table(&self, w: &mut impl Write) -> Result<()> {
        if self.d > 12 {
            return Err(Error::BudgetExceeded(format!(
                "refusing to emit a depth-{} table",
                self.d
            )));
        }
        let tree = self.tree();
        writeln!(w, "d={}", self.d)?;
        let width = self.d as usize + 1;
        let mut line = String::with_capacity(width + 1 + tree.node_count() as usize);
        for i in 0..self.len() {
            line.clear();
            for k in (0..width).rev() {
                line.push(if (i >> k) & 1 == 1 { '1' } else { '0' });
            }
            line.push(' ');
            for u in tree.bfs_nodes() {
                line.push(if self.eval(i, u) == 1 { '1' } else { '0' });
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the explicit-table form back into an explicit class; member
    /// order follows the file.
    pub fn read_explicit_table(r: &mut impl BufRead) -> Result<HypothesisClass> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty table file".into()))??;
        let d: u8 = header
            .strip_prefix("d=")
            .ok_or_else(|| Error::Parse(format!("expected d=<d> header, got {header:?}")))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad depth in header: {e}")))?;
        let tree = Tree::new(d)?;
        let mut members = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (_, labels) = line
                .split_once(' ')
                .ok_or_else(|| Error::Parse(format!("missing space in row {line:?}")))?;
            if labels.len() as u64 != tree.node_count() {
                return Err(Error::Parse(format!(
                    "row has {} labels, expected {}",
                    labels.len(),
                    tree.node_count()
                )));
            }
            let bits = labels
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(Error::Parse(format!("bad label char {c:?}"))),
                })
                .collect::<Result<Vec<Bit>>>()?;
            members.push(ExplicitHypothesis::new(d, bits)?);
        }
        HypothesisClass::explicit(d, members)
    }
}

/// Version spaces larger than this are refused outright; a dense bitset at
/// the cap is 16 MiB.
pub const MAX_VERSION_SPACE: u64 = 1 << 27;
/// Dense sets demote to sorted index lists once this sparse they stay sparse
/// forever because restriction only shrinks.
const SPARSE_FRACTION: u64 = 64;

#[derive(Clone, Debug)]
enum Repr {
    Dense { words: Vec<u64>, count: u64 },
    Sparse(Vec<u32>),
}

/// The subset of a class consistent with the labels seen so far. Immutable;
/// every restriction returns a fresh value.
#[derive(Clone, Debug)]
pub struct VersionSpace {
    universe: u64,
    repr: Repr,
}

impl VersionSpace {
    /// The full class.
    pub fn full(class: &HypothesisClass) -> Result<VersionSpace> {
        let n = class.len();
        if n > MAX_VERSION_SPACE {
            return Err(Error::BudgetExceeded(format!(
                "class of {n} members exceeds the version-space cap of {MAX_VERSION_SPACE}"
            )));
        }
        let words = vec![u64::MAX; n.div_ceil(64) as usize];
        let mut vs = VersionSpace { universe: n, repr: Repr::Dense { words, count: n } };
        if let Repr::Dense { words, .. } = &mut vs.repr {
            if n % 64 != 0 {
                if let Some(w) = words.last_mut() {
                    *w = (1u64 << (n % 64)) - 1;
                }
            }
        }
        Ok(vs)
    }

    /// A specific subset, for tests and oracles. Indices must be < class.len().
    pub fn from_members(class: &HypothesisClass, members: &[u64]) -> Result<VersionSpace> {
        let n = class.len();
        let mut idx: Vec<u32> = Vec::with_capacity(members.len());
        for &m in members {
            if m >= n {
                return Err(Error::InvalidParameter(format!("member {m} out of range")));
            }
            idx.push(m as u32);
        }
        idx.sort_unstable();
        idx.dedup();
        Ok(VersionSpace { universe: n, repr: Repr::Sparse(idx) })
    }

    pub fn len(&self) -> u64 {
        match &self.repr {
            Repr::Dense { count, .. } => *count,
            Repr::Sparse(v) => v.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn universe(&self) -> u64 {
        self.universe
    }

    pub fn contains(&self, i: u64) -> bool {
        match &self.repr {
            Repr::Dense { words, .. } => {
                (words[(i / 64) as usize] >> (i % 64)) & 1 == 1
            }
            Repr::Sparse(v) => v.binary_search(&(i as u32)).is_ok(),
        }
    }

    /// Smallest alive member index.
    pub fn min_member(&self) -> Option<u64> {
        match &self.repr {
            Repr::Dense { words, .. } => {
                for (wi, &w) in words.iter().enumerate() {
                    if w != 0 {
                        return Some(wi as u64 * 64 + w.trailing_zeros() as u64);
                    }
                }
                None
            }
            Repr::Sparse(v) => v.first().map(|&i| i as u64),
        }
    }

    #[inline]
    fn for_each_alive(&self, mut f: impl FnMut(u64)) {
        match &self.repr {
            Repr::Dense { words, .. } => {
                for (wi, &word) in words.iter().enumerate() {
                    let mut w = word;
                    while w != 0 {
                        let b = w.trailing_zeros() as u64;
                        f(wi as u64 * 64 + b);
                        w &= w - 1;
                    }
                }
            }
            Repr::Sparse(v) => {
                for &i in v {
                    f(i as u64);
                }
            }
        }
    }

    /// Sorted alive members; intended for small spaces (memo keys, tests).
    pub fn members(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.len() as usize);
        self.for_each_alive(|i| out.push(i));
        out
    }

    fn from_filtered(&self, keep: impl Fn(u64) -> bool) -> VersionSpace {
        match &self.repr {
            Repr::Dense { words, .. } => {
                let mut out = vec![0u64; words.len()];
                let mut count = 0u64;
                self.for_each_alive(|i| {
                    if keep(i) {
                        out[(i / 64) as usize] |= 1 << (i % 64);
                        count += 1;
                    }
                });
                let vs = VersionSpace {
                    universe: self.universe,
                    repr: Repr::Dense { words: out, count },
                };
                if count * SPARSE_FRACTION <= self.universe {
                    let mut idx = Vec::with_capacity(count as usize);
                    vs.for_each_alive(|i| idx.push(i as u32));
                    VersionSpace { universe: self.universe, repr: Repr::Sparse(idx) }
                } else {
                    vs
                }
            }
            Repr::Sparse(v) => {
                let idx: Vec<u32> = v.iter().copied().filter(|&i| keep(i as u64)).collect();
                VersionSpace { universe: self.universe, repr: Repr::Sparse(idx) }
            }
        }
    }

    /// Members consistent with label `y` at `x`.
    pub fn restrict(&self, class: &HypothesisClass, x: NodeId, y: Bit) -> VersionSpace {
        debug_assert_eq!(self.universe, class.len());
        self.from_filtered(|i| class.eval(i, x) == y)
    }

    /// How many alive members label `x` with 1.
    pub fn count_ones_at(&self, class: &HypothesisClass, x: NodeId) -> u64 {
        let mut c = 0;
        self.for_each_alive(|i| c += (class.eval(i, x) == 1) as u64);
        c
    }

    /// Splits into (off-path, on-path) by whether `x` lies on each member's
    /// self-labeled path.
    pub fn partition_on_path(
        &self,
        class: &HypothesisClass,
        x: NodeId,
    ) -> (VersionSpace, VersionSpace) {
        (
            self.from_filtered(|i| !class.on_path(i, x)),
            self.from_filtered(|i| class.on_path(i, x)),
        )
    }

    /// Is `x` on the self-labeled path of every alive member?
    pub fn all_on_path(&self, class: &HypothesisClass, x: NodeId) -> bool {
        match &self.repr {
            Repr::Dense { words, .. } => {
                for (wi, &word) in words.iter().enumerate() {
                    let mut w = word;
                    while w != 0 {
                        let i = wi as u64 * 64 + w.trailing_zeros() as u64;
                        if !class.on_path(i, x) {
                            return false;
                        }
                        w &= w - 1;
                    }
                }
                true
            }
            Repr::Sparse(v) => v.iter().all(|&i| class.on_path(i as u64, x)),
        }
    }

    /// Canonical key for memo tables: the sorted member list. Collision-safe
    /// because the key is the set itself.
    pub fn memo_key(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.len() as usize);
        self.for_each_alive(|i| out.push(i as u32));
        out
    }
}

/// Guards for the Littlestone-dimension recursion; the exact computation is
/// exponential and only meant for desk-scale inputs.
pub const LDIM_MAX_MEMBERS: u64 = 1 << 14;
pub const LDIM_MAX_DOMAIN: usize = 1 << 10;

/// Littlestone dimension of the alive members over `domain`, by the mistake-
/// tree recursion: L(H) = max over points splitting H of 1 + min(L(H0), L(H1)),
/// and 0 when no point splits. Memoized on the alive set.
pub fn ldim(class: &HypothesisClass, vs: &VersionSpace, domain: &[NodeId]) -> Result<u32> {
    if vs.len() > LDIM_MAX_MEMBERS {
        return Err(Error::BudgetExceeded(format!(
            "ldim guard: {} alive members exceeds {LDIM_MAX_MEMBERS}",
            vs.len()
        )));
    }
    if domain.len() > LDIM_MAX_DOMAIN {
        return Err(Error::BudgetExceeded(format!(
            "ldim guard: {} domain points exceeds {LDIM_MAX_DOMAIN}",
            domain.len()
        )));
    }
    let mut memo = Some(HashMap::new());
    Ok(ldim_rec(class, vs.memo_key(), domain, &mut memo))
}

/// As [`ldim`] but without memoization; exercised by tests to show the memo
/// does not change results.
#[cfg(test)]
fn ldim_unmemoized(
    class: &HypothesisClass,
    vs: &VersionSpace,
    domain: &[NodeId],
) -> u32 {
    ldim_rec(class, vs.memo_key(), domain, &mut None)
}

fn ldim_rec(
    class: &HypothesisClass,
    members: Vec<u32>,
    domain: &[NodeId],
    memo: &mut Option<HashMap<Vec<u32>, u32>>,
) -> u32 {
    if members.len() <= 1 {
        return 0;
    }
    if let Some(m) = memo.as_ref() {
        if let Some(&v) = m.get(&members) {
            return v;
        }
    }
    // A depth-L mistake tree needs 2^L distinct members below each split.
    let cap = 63 - (members.len() as u64).leading_zeros();
    let mut best = 0u32;
    for &x in domain {
        let mut zeros = Vec::new();
        let mut ones = Vec::new();
        for &i in &members {
            if class.eval(i as u64, x) == 1 {
                ones.push(i);
            } else {
                zeros.push(i);
            }
        }
        if zeros.is_empty() || ones.is_empty() {
            continue;
        }
        let bound = 1 + 63 - (zeros.len().min(ones.len()) as u64).leading_zeros();
        if bound <= best {
            continue;
        }
        let l0 = ldim_rec(class, zeros, domain, memo);
        let l1 = ldim_rec(class, ones, domain, memo);
        best = best.max(1 + l0.min(l1));
        if best >= cap {
            break;
        }
    }
    if let Some(m) = memo.as_mut() {
        m.insert(members, best);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn n(s: &str) -> NodeId {
        s.parse().unwrap()
    }

    #[test]
    fn explicit_path_follows_own_labels() {
        // Labels by BFS index: 1 everywhere except x_2 ("1") and x_3 ("00").
        let h = Hypothesis::Explicit(
            ExplicitHypothesis::from_fn(2, |u| {
                let i = u.bfs_index();
                (i != 2 && i != 3) as Bit
            })
            .unwrap(),
        );
        assert_eq!(h.path_of(), vec![NodeId::ROOT, n("1"), n("10")]);
    }

    #[test]
    fn lazy_branch_path_and_bits() {
        let class = HypothesisClass::lazy_random(4, 2, 7).unwrap();
        assert_eq!(class.len(), 32);
        assert!(class.onpath_shattering_holds());
        // Member 0b10110's path is the prefixes of "10110".
        let h = class.member(0b10110);
        let path = h.path_of();
        assert_eq!(path.last().unwrap(), &n("1011"));
        assert_eq!(path[1], n("1"));
        for (k, &u) in path.iter().enumerate() {
            assert_eq!(h.eval(u), ((0b10110 >> (4 - k)) & 1) as Bit);
        }
    }

    #[test]
    fn offpath_bias_monte_carlo() {
        // Mean off-path label over many (seed, node) pairs must sit within
        // 5 sigma of 2^-s; frozen seeds make this deterministic.
        let d = 8u8;
        let s = 3u32;
        let trials = 100_000u64;
        let tree = Tree::new(d).unwrap();
        let mut ones = 0u64;
        for t in 0..trials {
            let seed = mix64(0xabcd_0001 ^ t);
            let class = HypothesisClass::lazy_random(d, s, seed).unwrap();
            let member = mix64(seed ^ 1) % class.len();
            // Pick a node, skipping on-path hits so only prf labels count.
            let mut x = NodeId::from_bfs_index(mix64(seed ^ 2) % tree.node_count());
            while class.on_path(member, x) {
                x = NodeId::from_bfs_index((x.bfs_index() + 1) % tree.node_count());
            }
            ones += class.eval(member, x) as u64;
        }
        let p = 1.0 / (1u64 << s) as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let mean = ones as f64 / trials as f64;
        assert!(
            (mean - p).abs() <= 5.0 * sigma,
            "off-path bias {mean} too far from {p} (5 sigma = {})",
            5.0 * sigma
        );
    }

    #[test]
    fn restrict_counts() {
        // Point "0" is the most significant label bit, so members 8..16 of
        // the 16-member class label it 1.
        let points = [n("0"), n("1"), n("01"), n("10")];
        let class = HypothesisClass::all_functions(2, &points).unwrap();
        let vs = VersionSpace::full(&class).unwrap();
        assert_eq!(vs.len(), 16);
        assert_eq!(vs.count_ones_at(&class, n("0")), 8);
        // An 8-member space with ones-ratio 1/4 at "0" restricts to 2 / 6.
        let sub = VersionSpace::from_members(&class, &[0, 1, 2, 3, 4, 5, 8, 9]).unwrap();
        assert_eq!(sub.len(), 8);
        assert_eq!(sub.count_ones_at(&class, n("0")), 2);
        assert_eq!(sub.restrict(&class, n("0"), 1).len(), 2);
        assert_eq!(sub.restrict(&class, n("0"), 0).len(), 6);
    }

    #[test]
    fn full_version_space_handles_partial_words() {
        let points = [n("0"), n("1"), n("01")];
        let class = HypothesisClass::all_functions(2, &points).unwrap();
        let vs = VersionSpace::full(&class).unwrap();
        assert_eq!(vs.members(), (0..8).collect::<Vec<u64>>());
        assert_eq!(vs.min_member(), Some(0));
    }

    #[test]
    fn dense_demotes_to_sparse() {
        // Restricting along member 17's own path shrinks the space far past
        // the sparse threshold without ever losing member 17.
        let class = HypothesisClass::lazy_random(9, 3, 5).unwrap();
        let mut cur = VersionSpace::full(&class).unwrap();
        let path = class.member(17).path_of();
        for (k, &u) in path.iter().enumerate() {
            let y = ((17u64 >> (9 - k)) & 1) as Bit;
            cur = cur.restrict(&class, u, y);
            assert!(cur.contains(17), "lost member 17 at step {k}");
        }
        assert!(cur.len() < 64, "expected a sparse remnant, got {}", cur.len());
        assert_eq!(cur.min_member(), cur.members().first().copied());
    }

    #[test]
    fn partition_on_path_splits_exactly() {
        let class = HypothesisClass::lazy_random(5, 2, 11).unwrap();
        let vs = VersionSpace::full(&class).unwrap();
        let x = n("10");
        let (off, on) = vs.partition_on_path(&class, x);
        assert_eq!(off.len() + on.len(), vs.len());
        // On-path members are exactly the branches extending "10".
        assert_eq!(on.len(), 1 << 4);
        assert!(on.members().iter().all(|&i| class.on_path(i, x)));
        assert!(off.members().iter().all(|&i| !class.on_path(i, x)));
        assert!(on.all_on_path(&class, x));
        assert!(!vs.all_on_path(&class, x));
    }

    /// Naive reference: the same recursion but with no memo, no pruning, and
    /// hypotheses held as plain label vectors.
    fn ldim_naive(tables: &[Vec<Bit>], domain_idx: &[usize]) -> u32 {
        if tables.len() <= 1 {
            return 0;
        }
        let mut best = 0;
        for &x in domain_idx {
            let zeros: Vec<Vec<Bit>> =
                tables.iter().filter(|t| t[x] == 0).cloned().collect();
            let ones: Vec<Vec<Bit>> =
                tables.iter().filter(|t| t[x] == 1).cloned().collect();
            if zeros.is_empty() || ones.is_empty() {
                continue;
            }
            best = best.max(1 + ldim_naive(&zeros, domain_idx).min(ldim_naive(&ones, domain_idx)));
        }
        best
    }

    /// Tree-enumeration oracle: try every assignment of domain points to the
    /// internal nodes of a complete depth-(l-1) tree and check that each of
    /// the 2^l leaf patterns is realized by some hypothesis.
    fn shatters_some_tree(tables: &[Vec<Bit>], domain_idx: &[usize], l: u32) -> bool {
        if l == 0 {
            return !tables.is_empty();
        }
        let slots = (1usize << l) - 1;
        let k = domain_idx.len();
        let mut assign = vec![0usize; slots];
        loop {
            let ok = (0..1u32 << l).all(|pattern| {
                tables.iter().any(|t| {
                    let mut node = 0usize;
                    for step in 0..l {
                        let b = (pattern >> (l - 1 - step)) & 1;
                        if t[domain_idx[assign[node]]] != b as Bit {
                            return false;
                        }
                        node = 2 * node + 1 + b as usize;
                    }
                    true
                })
            });
            if ok {
                return true;
            }
            let mut j = 0;
            loop {
                if j == slots {
                    return false;
                }
                assign[j] += 1;
                if assign[j] < k {
                    break;
                }
                assign[j] = 0;
                j += 1;
            }
        }
    }

    fn class_of_tables(d: u8, points: &[NodeId], tables: &[Vec<Bit>]) -> HypothesisClass {
        let members = tables
            .iter()
            .map(|t| {
                ExplicitHypothesis::from_fn(d, |u| {
                    points.iter().position(|&p| p == u).map_or(0, |j| t[j])
                })
                .unwrap()
            })
            .collect();
        HypothesisClass::explicit(d, members).unwrap()
    }

    #[test]
    fn ldim_matches_naive_and_tree_oracle_exhaustively() {
        // Every class over a 3-point domain (subsets of the 8 functions).
        let points = [n("0"), n("1"), n("11")];
        let domain_idx = [0usize, 1, 2];
        let all: Vec<Vec<Bit>> = (0u8..8)
            .map(|p| vec![(p >> 2) & 1, (p >> 1) & 1, p & 1])
            .collect();
        for mask in 1u32..256 {
            let tables: Vec<Vec<Bit>> = (0..8)
                .filter(|&i| (mask >> i) & 1 == 1)
                .map(|i| all[i as usize].clone())
                .collect();
            let class = class_of_tables(3, &points, &tables);
            let vs = VersionSpace::full(&class).unwrap();
            let got = ldim(&class, &vs, &points).unwrap();
            assert_eq!(got, ldim_naive(&tables, &domain_idx), "mask {mask}");
            assert_eq!(got, ldim_unmemoized(&class, &vs, &points), "memo mismatch, mask {mask}");
            // Tree oracle: a depth-(got-1) shattered tree exists, none deeper.
            assert!(shatters_some_tree(&tables, &domain_idx, got), "mask {mask}");
            if got < 3 {
                assert!(!shatters_some_tree(&tables, &domain_idx, got + 1), "mask {mask}");
            }
        }
    }

    #[test]
    fn ldim_sampled_four_point_classes() {
        let points = [n("0"), n("1"), n("10"), n("11")];
        let domain_idx = [0usize, 1, 2, 3];
        let all: Vec<Vec<Bit>> = (0u8..16)
            .map(|p| vec![(p >> 3) & 1, (p >> 2) & 1, (p >> 1) & 1, p & 1])
            .collect();
        let mut state = 0x1234_5678_9abc_def0u64;
        for _ in 0..300 {
            state = mix64(state);
            let mask = (state % 0xffff + 1) as u32;
            let tables: Vec<Vec<Bit>> = (0..16)
                .filter(|&i| (mask >> i) & 1 == 1)
                .map(|i| all[i as usize].clone())
                .collect();
            let class = class_of_tables(2, &points, &tables);
            let vs = VersionSpace::full(&class).unwrap();
            let got = ldim(&class, &vs, &points).unwrap();
            assert_eq!(got, ldim_naive(&tables, &domain_idx), "mask {mask}");
        }
    }

    #[test]
    fn ldim_of_all_functions_is_domain_size() {
        for k in 1..=4u32 {
            let tree = Tree::new(4).unwrap();
            let points: Vec<NodeId> = tree.bfs_nodes().take(k as usize).collect();
            let class = HypothesisClass::all_functions(4, &points).unwrap();
            let vs = VersionSpace::full(&class).unwrap();
            assert_eq!(ldim(&class, &vs, &points).unwrap(), k);
        }
    }

    #[test]
    fn ldim_singleton_is_zero() {
        let class = HypothesisClass::all_functions(2, &[n("0")]).unwrap();
        let vs = VersionSpace::from_members(&class, &[1]).unwrap();
        assert_eq!(ldim(&class, &vs, &[n("0"), n("1")]).unwrap(), 0);
    }

    #[test]
    fn ldim_guards() {
        let class = HypothesisClass::lazy_random(16, 4, 1).unwrap();
        let vs = VersionSpace::full(&class).unwrap();
        assert!(matches!(
            ldim(&class, &vs, &[NodeId::ROOT]),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn explicit_table_roundtrip() {
        let class = HypothesisClass::lazy_random(3, 2, 42).unwrap();
        let mut buf = Vec::new();
        class.write_explicit_table(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("d=3\n"));
        assert_eq!(text.lines().count(), 1 + 16);
        let back = HypothesisClass::read_explicit_table(&mut Cursor::new(&buf)).unwrap();
        assert_eq!(back.len(), class.len());
        let tree = class.tree();
        for i in 0..class.len() {
            for u in tree.bfs_nodes() {
                assert_eq!(back.eval(i, u), class.eval(i, u));
            }
        }
        assert!(back.onpath_shattering_holds());
    }

    proptest! {
        #[test]
        fn lazy_eval_matches_materialized(d in 1u8..6, seed in any::<u64>(), s in 1u32..5) {
            let class = HypothesisClass::lazy_random(d, s, seed).unwrap();
            let mat = class.materialize().unwrap();
            let tree = class.tree();
            for i in 0..class.len() {
                for u in tree.bfs_nodes() {
                    prop_assert_eq!(class.eval(i, u), mat.eval(i, u));
                }
                prop_assert_eq!(class.member(i).path_of(), mat.member(i).path_of());
            }
        }

        #[test]
        fn restrict_idempotent_and_commutative(
            seed in any::<u64>(),
            xa in 0u64..15,
            xb in 0u64..15,
            ya in 0u8..2,
            yb in 0u8..2,
        ) {
            let class = HypothesisClass::lazy_random(3, 2, seed).unwrap();
            let vs = VersionSpace::full(&class).unwrap();
            let a = NodeId::from_bfs_index(xa);
            let b = NodeId::from_bfs_index(xb);
            let once = vs.restrict(&class, a, ya);
            let twice = once.restrict(&class, a, ya);
            prop_assert_eq!(once.members(), twice.members());
            let ab = vs.restrict(&class, a, ya).restrict(&class, b, yb);
            let ba = vs.restrict(&class, b, yb).restrict(&class, a, ya);
            prop_assert_eq!(ab.members(), ba.members());
        }
    }
}
