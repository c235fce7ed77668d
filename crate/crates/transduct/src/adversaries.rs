//! Adversary strategies.
//!
//! The centerpiece is the balanced-ratio adversary for the transductive
//! game: a sequence constructor walks the tree breadth-first, branching a
//! budget of tracked sub-classes on label-balanced nodes, and the labeling
//! policy then contradicts the learner exactly when the live version space
//! is balanced at the announced node. Also here: a Littlestone-tree
//! adversary for the standard game and scripted replay adversaries used as
//! fixtures.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;

use crate::engine::{StandardAdversary, TransductiveAdversary};
use crate::error::{Error, Result};
use crate::hypotheses::{ldim, HypothesisClass, VersionSpace};
use crate::seqmin::{RigidTable, Sym};
use crate::treebits::{Bit, NodeId};

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact nonnegative rational in lowest terms. All comparisons against
/// counts are cross-multiplications; no floats touch adversary decisions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Ratio> {
        if den == 0 {
            return Err(Error::InvalidParameter("ratio denominator is zero".into()));
        }
        let g = gcd(num, den).max(1);
        Ok(Ratio { num: num / g, den: den / g })
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// self <= k/n.
    pub fn le_frac(self, k: u64, n: u64) -> bool {
        debug_assert!(n > 0 && k <= n && n <= u32::MAX as u64);
        (self.num as u128) * (n as u128) <= (self.den as u128) * (k as u128)
    }

    /// 1 - self <= k/n. Saturates: a ratio above 1 never passes.
    pub fn complement_le_frac(self, k: u64, n: u64) -> bool {
        debug_assert!(n > 0 && k <= n && n <= u32::MAX as u64);
        let comp = self.den.saturating_sub(self.num);
        (comp as u128) * (n as u128) <= (self.den as u128) * (k as u128)
    }

    /// k/n lies in [self, 1 - self]: the balance window.
    pub fn window_contains(self, k: u64, n: u64) -> bool {
        debug_assert!(n > 0 && k <= n && n <= u32::MAX as u64);
        let (num, den, k, n) = (self.num as u128, self.den as u128, k as u128, n as u128);
        num * n <= den * k && den * k <= (den - num.min(den)) * n
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Ratio {
    type Err = Error;

    /// Accepts "p/q", a decimal like "0.25", or a bare integer.
    fn from_str(s: &str) -> Result<Ratio> {
        let s = s.trim();
        let bad = |why: &str| Error::Parse(format!("invalid ratio {s:?}: {why}"));
        if let Some((p, q)) = s.split_once('/') {
            let num = p.trim().parse().map_err(|_| bad("bad numerator"))?;
            let den = q.trim().parse().map_err(|_| bad("bad denominator"))?;
            return Ratio::new(num, den);
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad("bad fractional part"));
            }
            if frac.len() > 18 {
                return Err(bad("more than 18 decimal places"));
            }
            let int: u64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| bad("bad integer part"))?
            };
            let den = 10u64.pow(frac.len() as u32);
            let frac: u64 = frac.parse().map_err(|_| bad("bad fractional part"))?;
            let num = int
                .checked_mul(den)
                .and_then(|v| v.checked_add(frac))
                .ok_or_else(|| bad("value too large"))?;
            return Ratio::new(num, den);
        }
        let num = s.parse().map_err(|_| bad("expected p/q, a decimal, or an integer"))?;
        Ratio::new(num, 1)
    }
}

/// Default balance margin 2^(-sqrt(d)/2), rounded to a multiple of 2^-30
/// and clamped strictly below 1/2 (at d <= 4 the formula value reaches 1/2,
/// which the window invariant forbids).
pub fn default_epsilon(d: u8) -> Ratio {
    const SCALE: u64 = 1 << 30;
    let value = (2f64).powf(-(d as f64).sqrt() / 2.0);
    let mut num = (value * SCALE as f64).round() as u64;
    num = num.clamp(1, SCALE / 2 - 1);
    Ratio::new(num, SCALE).expect("denominator is fixed")
}

/// Smallest positive integer M with M >= sqrt(d)/c, exactly.
pub fn budget_for(d: u8, c: Ratio) -> u64 {
    let target = (d as u128) * (c.den as u128).pow(2);
    let mut m = ((d as f64).sqrt() * c.den as f64 / c.num as f64) as u64;
    m = m.saturating_sub(2).max(1);
    while (m as u128 * c.num as u128).pow(2) < target {
        m += 1;
    }
    m
}

/// Parameters of the balanced-ratio strategy: the balance margin epsilon,
/// the branching budget M, and the factor c that produced the default M.
#[derive(Clone, Copy, Debug)]
pub struct BalancedRatioParams {
    pub epsilon: Ratio,
    /// M: how many balanced nodes the sequence constructor branches on.
    pub budget: u64,
    /// c in the default M = ceil(sqrt(d)/c); kept for reporting.
    pub lower_bound_factor: Ratio,
}

impl BalancedRatioParams {
    pub fn defaults_for(d: u8) -> BalancedRatioParams {
        let c = Ratio::new(2, 1).expect("constant");
        BalancedRatioParams {
            epsilon: default_epsilon(d),
            budget: budget_for(d, c),
            lower_bound_factor: c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.epsilon;
        if e.num == 0 || 2 * e.num >= e.den {
            return Err(Error::InvalidParameter(format!(
                "epsilon {e} must lie strictly between 0 and 1/2"
            )));
        }
        if self.budget == 0 {
            return Err(Error::InvalidParameter("budget M must be at least 1".into()));
        }
        Ok(())
    }
}

struct TrackedClass {
    vs: VersionSpace,
    /// Length of this class's branch index; branching is allowed while
    /// it is below the budget.
    branch_len: u64,
}

/// Output of the sequence constructor, optionally with the per-round
/// tracked families for replay checks.
pub struct SequenceConstruction {
    pub sequence: Vec<NodeId>,
    /// families[t] = tracked classes right after sequence[t] was processed.
    pub families: Option<Vec<Vec<VersionSpace>>>,
}

pub fn construct_sequence(
    class: &HypothesisClass,
    params: &BalancedRatioParams,
) -> Result<Vec<NodeId>> {
    Ok(construct_sequence_traced(class, params, false)?.sequence)
}

/// Breadth-first sequence construction. A worklist starts at the root; per
/// popped node every tracked class either branches on both labels (when the
/// node is balanced for it and its branch index is shorter than M) or
/// restricts to its majority label, and the popped node's y-child is
/// enqueued whenever the node is on the path of every member of the
/// y-restricted class. Tracked classes with identical alive sets and branch
/// lengths behave identically forever and are merged.
pub fn construct_sequence_traced(
    class: &HypothesisClass,
    params: &BalancedRatioParams,
    keep_families: bool,
) -> Result<SequenceConstruction> {
    params.validate()?;
    let d = class.depth();
    let mut tracked = vec![TrackedClass { vs: VersionSpace::full(class)?, branch_len: 0 }];
    let mut queue = VecDeque::from([NodeId::ROOT]);
    let mut ever: HashSet<NodeId> = HashSet::from([NodeId::ROOT]);
    let mut sequence = Vec::new();
    let mut families = Vec::new();
    let length_bound = (d as usize + 1) << (params.budget + 1).min(32);
    while let Some(x) = queue.pop_front() {
        sequence.push(x);
        // The length bound is provable for this construction; exceeding
        // it means a bug, and without a stop the loop could run away.
        if sequence.len() >= length_bound {
            return Err(Error::BudgetExceeded(format!(
                "sequence construction exceeded its (d+1)*2^(M+1) = {length_bound} bound"
            )));
        }
        let mut next: Vec<TrackedClass> = Vec::with_capacity(tracked.len() + 1);
        let mut seen: HashSet<(Vec<u32>, u64)> = HashSet::new();
        for tc in &tracked {
            let total = tc.vs.len();
            debug_assert!(total > 0, "tracked classes never empty");
            let ones = tc.vs.count_ones_at(class, x);
            let branch =
                params.epsilon.window_contains(ones, total) && tc.branch_len < params.budget;
            let labels: &[Bit] = if branch {
                &[0, 1]
            } else if 2 * ones >= total {
                &[1]
            } else {
                &[0]
            };
            for &y in labels {
                let child_vs = tc.vs.restrict(class, x, y);
                debug_assert!(!child_vs.is_empty());
                let branch_len = tc.branch_len + branch as u64;
                if x.depth() < d && child_vs.all_on_path(class, x) {
                    let child_node = x.extend(y);
                    if ever.insert(child_node) {
                        queue.push_back(child_node);
                    }
                }
                if seen.insert((child_vs.memo_key(), branch_len)) {
                    next.push(TrackedClass { vs: child_vs, branch_len });
                }
            }
        }
        if keep_families {
            families.push(next.iter().map(|tc| tc.vs.clone()).collect());
        }
        tracked = next;
    }
    Ok(SequenceConstruction { sequence, families: keep_families.then_some(families) })
}

/// True iff every non-root element's parent appears earlier in the
/// sequence; this makes each path_to(x_i) a subsequence of the prefix.
pub fn ancestry_closed(sequence: &[NodeId]) -> bool {
    let mut seen = HashSet::new();
    for &x in sequence {
        if let Some(p) = x.parent() {
            if !seen.contains(&p) {
                return false;
            }
        }
        seen.insert(x);
    }
    true
}

/// One labeling step of the balanced adversary, for shrinkage audits.
#[derive(Clone, Copy, Debug)]
pub struct ShrinkStep {
    pub prev: u64,
    pub next: u64,
    pub forced: bool,
}

/// Replays labeled rounds and reports whether, at every depth 0..=d, some
/// round presented a node of that depth lying on the path of every then
/// alive member.
pub fn onpath_coverage_holds(
    class: &HypothesisClass,
    rounds: &[(NodeId, Bit)],
) -> Result<bool> {
    let d = class.depth();
    let mut vs = VersionSpace::full(class)?;
    let mut covered = vec![false; d as usize + 1];
    for &(x, y) in rounds {
        if vs.all_on_path(class, x) {
            covered[x.depth() as usize] = true;
        }
        vs = vs.restrict(class, x, y);
    }
    Ok(covered.into_iter().all(|c| c))
}

/// Checks |final| >= eps^F * (1-eps)^(n-F) * initial exactly, where F is
/// the number of forced steps in the log.
pub fn shrinkage_bound_holds(epsilon: Ratio, log: &[ShrinkStep], initial: u64) -> bool {
    let forced = log.iter().filter(|s| s.forced).count() as u32;
    let unforced = log.len() as u32 - forced;
    let final_size = log.last().map_or(initial, |s| s.next);
    let lhs = BigUint::from(epsilon.num).pow(forced)
        * BigUint::from(epsilon.den - epsilon.num).pow(unforced)
        * initial;
    let rhs = BigUint::from(epsilon.den).pow(forced + unforced) * final_size;
    lhs <= rhs
}

/// The balanced-ratio transductive adversary. Announces a constructed
/// sequence (or a caller-supplied one), then per round contradicts the
/// learner when the live version space's ones-ratio at the node falls in
/// [eps, 1-eps], and plays the majority label otherwise.
#[derive(Clone)]
pub struct BalancedAdversary {
    class: Arc<HypothesisClass>,
    epsilon: Ratio,
    seq: Vec<NodeId>,
    vs: VersionSpace,
    t: usize,
    forced: u64,
    log: Vec<ShrinkStep>,
}

impl BalancedAdversary {
    pub fn new(class: &Arc<HypothesisClass>, params: &BalancedRatioParams) -> Result<BalancedAdversary> {
        let seq = construct_sequence(class, params)?;
        BalancedAdversary::with_sequence(class, params, seq)
    }

    /// Same labeling policy on an arbitrary announced sequence.
    pub fn with_sequence(
        class: &Arc<HypothesisClass>,
        params: &BalancedRatioParams,
        seq: Vec<NodeId>,
    ) -> Result<BalancedAdversary> {
        params.validate()?;
        Ok(BalancedAdversary {
            class: Arc::clone(class),
            epsilon: params.epsilon,
            seq,
            vs: VersionSpace::full(class)?,
            t: 0,
            forced: 0,
            log: Vec::new(),
        })
    }

    pub fn version_space(&self) -> &VersionSpace {
        &self.vs
    }

    pub fn shrink_log(&self) -> &[ShrinkStep] {
        &self.log
    }

    pub fn epsilon(&self) -> Ratio {
        self.epsilon
    }
}

impl TransductiveAdversary for BalancedAdversary {
    fn sequence(&self) -> &[NodeId] {
        &self.seq
    }

    fn assign_label(&mut self, y_hat: Bit) -> Result<Bit> {
        let x = *self.seq.get(self.t).ok_or_else(|| {
            Error::InvalidParameter("adversary consulted beyond its sequence".into())
        })?;
        let total = self.vs.len();
        if total == 0 {
            return Err(Error::RealizabilityViolation { round: self.t + 1 });
        }
        let ones = self.vs.count_ones_at(&self.class, x);
        let in_window = self.epsilon.window_contains(ones, total);
        let y = if in_window { 1 - y_hat } else { (2 * ones >= total) as Bit };
        self.vs = self.vs.restrict(&self.class, x, y);
        if self.vs.is_empty() {
            // Impossible by construction: the window has both sides
            // populated and the majority side is never empty.
            return Err(Error::RealizabilityViolation { round: self.t + 1 });
        }
        self.forced += in_window as u64;
        self.log.push(ShrinkStep { prev: total, next: self.vs.len(), forced: in_window });
        self.t += 1;
        Ok(y)
    }

    fn snapshot(&self) -> Box<dyn TransductiveAdversary> {
        Box::new(self.clone())
    }

    fn forced_count(&self) -> u64 {
        self.forced
    }
}

/// Standard-game adversary that forces min(n, ldim) mistakes: while the
/// live class still has positive Littlestone dimension it presents a point
/// splitting it most evenly (by the dimension of the two restrictions) and
/// contradicts the learner; afterwards it labels consistently.
pub struct LittlestoneAdversary {
    class: Arc<HypothesisClass>,
    domain: Vec<NodeId>,
    vs: VersionSpace,
    pending: Option<(NodeId, bool)>,
    forced: u64,
}

impl LittlestoneAdversary {
    pub fn new(class: &Arc<HypothesisClass>, domain: Vec<NodeId>) -> Result<LittlestoneAdversary> {
        if domain.is_empty() {
            return Err(Error::InvalidParameter("littlestone adversary needs a domain".into()));
        }
        Ok(LittlestoneAdversary {
            class: Arc::clone(class),
            domain,
            vs: VersionSpace::full(class)?,
            pending: None,
            forced: 0,
        })
    }
}

impl StandardAdversary for LittlestoneAdversary {
    fn next_instance(&mut self) -> Result<NodeId> {
        // Among points realized with both labels, keep the min dimension of
        // the two restrictions maximal; first such point wins ties.
        let mut best: Option<(u32, NodeId)> = None;
        for &x in &self.domain {
            let vs0 = self.vs.restrict(&self.class, x, 0);
            let vs1 = self.vs.restrict(&self.class, x, 1);
            if vs0.is_empty() || vs1.is_empty() {
                continue;
            }
            let score = ldim(&self.class, &vs0, &self.domain)?
                .min(ldim(&self.class, &vs1, &self.domain)?);
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, x));
            }
        }
        let (x, forcing) = match best {
            Some((_, x)) => (x, true),
            None => (self.domain[0], false),
        };
        self.pending = Some((x, forcing));
        Ok(x)
    }

    fn assign_label(&mut self, y_hat: Bit) -> Result<Bit> {
        let (x, forcing) = self
            .pending
            .take()
            .ok_or_else(|| Error::InvalidParameter("label requested before an instance".into()))?;
        let y = if forcing {
            self.forced += 1;
            1 - y_hat
        } else {
            // No point splits the class: all alive members agree everywhere
            // on the domain.
            let member = self
                .vs
                .min_member()
                .ok_or(Error::RealizabilityViolation { round: 0 })?;
            self.class.eval(member, x)
        };
        self.vs = self.vs.restrict(&self.class, x, y);
        Ok(y)
    }

    fn forced_count(&self) -> u64 {
        self.forced
    }
}

/// How a scripted adversary labels.
#[derive(Clone, Debug)]
pub enum Labeling {
    /// Label round t with the t-th bit, ignoring predictions.
    Fixed(Vec<Bit>),
    /// Contradict the learner for the first k rounds, then label 0.
    FlipFirstK(usize),
    /// Consult a rigid table on the emitted-label history: a bit entry is
    /// emitted as-is, a star contradicts the learner, a missing entry
    /// labels 0.
    Rigid(RigidTable),
}

/// Replays a fixed sequence with a scripted labeling; usable in both game
/// settings.
#[derive(Clone)]
pub struct ScriptedAdversary {
    seq: Vec<NodeId>,
    labeling: Labeling,
    history: Vec<Bit>,
    t: usize,
    forced: u64,
}

impl ScriptedAdversary {
    pub fn new(seq: Vec<NodeId>, labeling: Labeling) -> Result<ScriptedAdversary> {
        if let Labeling::Fixed(labels) = &labeling {
            if labels.len() != seq.len() {
                return Err(Error::SequenceLengthMismatch {
                    expected: seq.len(),
                    got: labels.len(),
                });
            }
        }
        Ok(ScriptedAdversary { seq, labeling, history: Vec::new(), t: 0, forced: 0 })
    }

    /// Inherent copy so callers holding the concrete type avoid the
    /// two-trait ambiguity.
    pub fn forced_count(&self) -> u64 {
        self.forced
    }

    fn emit(&mut self, y_hat: Bit) -> Result<Bit> {
        if self.t >= self.seq.len() {
            return Err(Error::InvalidParameter(
                "adversary consulted beyond its sequence".into(),
            ));
        }
        let y = match &self.labeling {
            Labeling::Fixed(labels) => labels[self.t],
            Labeling::FlipFirstK(k) => {
                if self.t < *k {
                    self.forced += 1;
                    1 - y_hat
                } else {
                    0
                }
            }
            Labeling::Rigid(table) => match table.get(&self.history) {
                Some(Sym::Zero) | None => 0,
                Some(Sym::One) => 1,
                Some(Sym::Star) => {
                    self.forced += 1;
                    1 - y_hat
                }
            },
        };
        self.history.push(y);
        self.t += 1;
        Ok(y)
    }
}

impl TransductiveAdversary for ScriptedAdversary {
    fn sequence(&self) -> &[NodeId] {
        &self.seq
    }

    fn assign_label(&mut self, y_hat: Bit) -> Result<Bit> {
        self.emit(y_hat)
    }

    fn snapshot(&self) -> Box<dyn TransductiveAdversary> {
        Box::new(self.clone())
    }

    fn forced_count(&self) -> u64 {
        self.forced
    }
}

impl StandardAdversary for ScriptedAdversary {
    fn next_instance(&mut self) -> Result<NodeId> {
        self.seq.get(self.t).copied().ok_or_else(|| {
            Error::InvalidParameter("adversary consulted beyond its sequence".into())
        })
    }

    fn assign_label(&mut self, y_hat: Bit) -> Result<Bit> {
        self.emit(y_hat)
    }

    fn forced_count(&self) -> u64 {
        self.forced
    }
}

/// Parses the scripted-adversary file format. Line 1: comma-separated node
/// bitstrings (empty field = root). Line 2: either a string of label bits,
/// or "f:" followed by whitespace-separated history=symbol pairs with
/// symbol in {0, 1, *} (the root history is the empty string, as in "=1").
/// Blank lines and lines starting with '#' are ignored.
pub fn parse_scripted(text: &str) -> Result<ScriptedAdversary> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let seq_line = lines
        .next()
        .ok_or_else(|| Error::Parse("scripted file: missing sequence line".into()))?;
    let seq = seq_line
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<NodeId>>>()?;
    let label_line = lines
        .next()
        .ok_or_else(|| Error::Parse("scripted file: missing labeling line".into()))?;
    let labeling = if let Some(rest) = label_line.strip_prefix("f:") {
        let mut table = RigidTable::new(seq.len())?;
        for pair in rest.split_whitespace() {
            let (hist, sym) = pair.split_once('=').ok_or_else(|| {
                Error::Parse(format!("rigid entry {pair:?}: expected history=symbol"))
            })?;
            let history = hist
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(Error::Parse(format!("rigid entry {pair:?}: bad history bit {c:?}"))),
                })
                .collect::<Result<Vec<Bit>>>()?;
            let sym = match sym {
                "0" => Sym::Zero,
                "1" => Sym::One,
                "*" => Sym::Star,
                other => {
                    return Err(Error::Parse(format!(
                        "rigid entry {pair:?}: bad symbol {other:?}"
                    )))
                }
            };
            table.insert(&history, sym)?;
        }
        Labeling::Rigid(table)
    } else {
        let labels = label_line
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Parse(format!("bad label bit {c:?}"))),
            })
            .collect::<Result<Vec<Bit>>>()?;
        Labeling::Fixed(labels)
    };
    ScriptedAdversary::new(seq, labeling)
}
