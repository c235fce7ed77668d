//! Learner strategies: halving, the standard optimal algorithm, trivial
//! baselines, and the splitting-experts transductive learner.
//!
//! The transductive learner maintains a pool of experts, each a guess about
//! how the announced sequence threads the tree. An expert is a triple
//! (danger zone S, anchor u, version space H): S holds announced nodes that
//! might still lie on the target's path, u is the deepest node the expert
//! has assumed on-path, and H is the subset of the class consistent with
//! both the labels and the expert's assumptions. Experts that mispredict
//! are rewritten (shrunk or split in two) and their weight is shared among
//! the successors; the pool prediction is an exact weighted majority.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use num_bigint::BigUint;

use crate::dyadic::Dyadic;
use crate::engine::LearnerStrategy;
use crate::error::{Error, Result};
use crate::hypotheses::{ldim, HypothesisClass, VersionSpace};
use crate::treebits::{Bit, NodeId};

pub fn ceil_sqrt(d: u64) -> u64 {
    let r = d.isqrt();
    if r * r < d {
        r + 1
    } else {
        r
    }
}

/// Majority vote of the alive members at `x`; ties predict 1, an empty
/// space predicts 0.
pub fn halving_predict(class: &HypothesisClass, vs: &VersionSpace, x: NodeId) -> Bit {
    if vs.is_empty() {
        return 0;
    }
    (2 * vs.count_ones_at(class, x) >= vs.len()) as Bit
}

/// Keeps the members consistent with the received label.
pub fn halving_update(
    class: &HypothesisClass,
    vs: &VersionSpace,
    x: NodeId,
    y: Bit,
) -> VersionSpace {
    vs.restrict(class, x, y)
}

/// Classic halving: at most floor(log2 |class|) mistakes on realizable runs.
pub struct HalvingLearner {
    class: Arc<HypothesisClass>,
    vs: VersionSpace,
}

impl HalvingLearner {
    pub fn new(class: Arc<HypothesisClass>) -> Result<HalvingLearner> {
        let vs = VersionSpace::full(&class)?;
        Ok(HalvingLearner { class, vs })
    }

    pub fn version_space(&self) -> &VersionSpace {
        &self.vs
    }
}

impl LearnerStrategy for HalvingLearner {
    fn predict(&mut self, x: NodeId) -> Result<Bit> {
        Ok(halving_predict(&self.class, &self.vs, x))
    }

    fn receive_label(&mut self, x: NodeId, y: Bit) -> Result<()> {
        self.vs = halving_update(&self.class, &self.vs, x, y);
        Ok(())
    }
}

/// Predicts the label whose restriction keeps the larger Littlestone
/// dimension over `domain`; ties predict 1. A forced point (one empty
/// restriction) always predicts the feasible label: an empty side must
/// never win the tie, or a shrunken space is punished indefinitely.
pub fn soa_predict(
    class: &HypothesisClass,
    vs: &VersionSpace,
    domain: &[NodeId],
    x: NodeId,
) -> Result<Bit> {
    let r0 = vs.restrict(class, x, 0);
    let r1 = vs.restrict(class, x, 1);
    if r1.is_empty() {
        return Ok(0);
    }
    if r0.is_empty() {
        return Ok(1);
    }
    let l0 = ldim(class, &r0, domain)?;
    let l1 = ldim(class, &r1, domain)?;
    Ok((l1 >= l0) as Bit)
}

/// Standard optimal algorithm; at most ldim(class) mistakes on realizable
/// runs. Exponential-time via the exact ldim recursion: desk scale only.
pub struct SoaLearner {
    class: Arc<HypothesisClass>,
    domain: Vec<NodeId>,
    vs: VersionSpace,
}

impl SoaLearner {
    pub fn new(class: Arc<HypothesisClass>, domain: Vec<NodeId>) -> Result<SoaLearner> {
        let vs = VersionSpace::full(&class)?;
        Ok(SoaLearner { class, domain, vs })
    }
}

impl LearnerStrategy for SoaLearner {
    fn predict(&mut self, x: NodeId) -> Result<Bit> {
        // An empty space (unrealizable run) degrades to predicting 0.
        if self.vs.is_empty() {
            return Ok(0);
        }
        soa_predict(&self.class, &self.vs, &self.domain, x)
    }

    fn receive_label(&mut self, x: NodeId, y: Bit) -> Result<()> {
        self.vs = self.vs.restrict(&self.class, x, y);
        Ok(())
    }
}

pub struct AlwaysZero;
pub struct AlwaysOne;

impl LearnerStrategy for AlwaysZero {
    fn predict(&mut self, _x: NodeId) -> Result<Bit> {
        Ok(0)
    }
    fn receive_label(&mut self, _x: NodeId, _y: Bit) -> Result<()> {
        Ok(())
    }
}

impl LearnerStrategy for AlwaysOne {
    fn predict(&mut self, _x: NodeId) -> Result<Bit> {
        Ok(1)
    }
    fn receive_label(&mut self, _x: NodeId, _y: Bit) -> Result<()> {
        Ok(())
    }
}

/// Deterministic pseudo-random bit per round from a seed; ignores instances.
pub struct SeededRandom {
    state: u64,
}

impl SeededRandom {
    pub fn new(seed: u64) -> SeededRandom {
        SeededRandom { state: seed ^ 0x6a09_e667_f3bc_c908 }
    }
}

impl LearnerStrategy for SeededRandom {
    fn predict(&mut self, _x: NodeId) -> Result<Bit> {
        // SplitMix64 step.
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z ^= z >> 30;
        z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z ^= z >> 27;
        z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        Ok((z & 1) as Bit)
    }
    fn receive_label(&mut self, _x: NodeId, _y: Bit) -> Result<()> {
        Ok(())
    }
}

/// Consistent baseline: tracks its version space and predicts by majority
/// vote over it, exactly as halving does.
pub struct LazyConsistent {
    class: Arc<HypothesisClass>,
    vs: VersionSpace,
}

impl LazyConsistent {
    pub fn new(class: Arc<HypothesisClass>) -> Result<LazyConsistent> {
        let vs = VersionSpace::full(&class)?;
        Ok(LazyConsistent { class, vs })
    }
}

impl LearnerStrategy for LazyConsistent {
    fn predict(&mut self, x: NodeId) -> Result<Bit> {
        Ok(halving_predict(&self.class, &self.vs, x))
    }
    fn receive_label(&mut self, x: NodeId, y: Bit) -> Result<()> {
        self.vs = self.vs.restrict(&self.class, x, y);
        Ok(())
    }
}

/// One expert of the transductive learner.
#[derive(Clone, Debug)]
pub struct ExpertState {
    pub id: u64,
    /// Danger zone: announced nodes possibly still on the target's path.
    pub danger: BTreeSet<NodeId>,
    /// Deepest node this expert has assumed to be on the target's path.
    pub anchor: NodeId,
    pub vs: VersionSpace,
    pub weight: Dyadic,
    /// Mistakes made along this expert's ancestry, including its own.
    pub lineage_mistakes: u64,
}

/// Which rewrite an extended update performed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateCase {
    /// Version space already at halving size: the expert rides along.
    HalvingMode,
    /// More than a third of the danger zone hung below the wrong child:
    /// drop that side.
    DangerShrink,
    /// Split on whether `x` is on the target's path.
    Split,
}

/// The expert's prediction for `x`:
/// 1. halving vote once its version space is small;
/// 2. if `x` is a strict ancestor of the anchor, follow the anchor's branch;
/// 3. otherwise 1 iff strictly more than a third of the danger zone lies
///    below `x`'s 1-child.
pub fn expert_prediction(
    class: &HypothesisClass,
    e: &ExpertState,
    x: NodeId,
    halving_threshold: u64,
) -> Bit {
    if e.vs.len() <= halving_threshold {
        return halving_predict(class, &e.vs, x);
    }
    if x.is_ancestor(e.anchor) && x != e.anchor {
        return e.anchor.bit_at(x.depth());
    }
    let below_one = e.danger.iter().filter(|&&s| x.is_b_descendant(1, s)).count();
    (3 * below_one > e.danger.len()) as Bit
}

/// Restricts the expert's version space by the received label. Every expert
/// gets this every round, mistaken or not.
pub fn expert_basic_update(class: &HypothesisClass, e: &mut ExpertState, x: NodeId, y: Bit) {
    e.vs = e.vs.restrict(class, x, y);
}

/// Rewrites a mistaken expert (after its basic update). Successor weights
/// are weight/(2|U|), so the erring weight mass always exactly halves.
/// Split successors get fresh ids from `next_id`, off-path first.
pub fn expert_extended_update(
    class: &HypothesisClass,
    e: ExpertState,
    x: NodeId,
    y: Bit,
    halving_threshold: u64,
    next_id: &mut u64,
) -> (Vec<ExpertState>, UpdateCase) {
    let mistakes = e.lineage_mistakes + 1;
    if e.vs.len() <= halving_threshold {
        let succ = ExpertState {
            weight: e.weight.halved(),
            lineage_mistakes: mistakes,
            ..e
        };
        return (vec![succ], UpdateCase::HalvingMode);
    }
    let wrong_side: Vec<NodeId> = e
        .danger
        .iter()
        .copied()
        .filter(|&s| x.is_b_descendant(1 - y, s))
        .collect();
    if 3 * wrong_side.len() > e.danger.len() {
        let mut danger = e.danger;
        for s in wrong_side {
            danger.remove(&s);
        }
        let succ = ExpertState {
            danger,
            weight: e.weight.halved(),
            lineage_mistakes: mistakes,
            ..e
        };
        return (vec![succ], UpdateCase::DangerShrink);
    }
    // Split: off-path keeps S and u; on-path keeps only descendants of x in
    // S and deepens the anchor to x when x extends it.
    let (vs_off, vs_on) = e.vs.partition_on_path(class, x);
    let weight = e.weight.quartered();
    let off = ExpertState {
        id: {
            *next_id += 1;
            *next_id
        },
        danger: e.danger.clone(),
        anchor: e.anchor,
        vs: vs_off,
        weight: weight.clone(),
        lineage_mistakes: mistakes,
    };
    let on_danger: BTreeSet<NodeId> = e
        .danger
        .iter()
        .copied()
        .filter(|&s| x.is_ancestor(s) && s != x)
        .collect();
    let on = ExpertState {
        id: {
            *next_id += 1;
            *next_id
        },
        danger: on_danger,
        anchor: if e.anchor.is_ancestor(x) { x } else { e.anchor },
        vs: vs_on,
        weight,
        lineage_mistakes: mistakes,
    };
    (vec![off, on], UpdateCase::Split)
}

/// Ancestry record of one expert: who spawned it and under which on-path
/// assumption (splits only).
#[derive(Clone, Debug)]
pub struct Lineage {
    pub parent: Option<u64>,
    pub assumption: Option<(NodeId, bool)>,
}

/// Walks the genealogy and checks every on-path assumption on the expert's
/// ancestry against the given member's actual path.
pub fn is_assumption_consistent(
    genealogy: &HashMap<u64, Lineage>,
    mut id: u64,
    class: &HypothesisClass,
    member: u64,
) -> bool {
    loop {
        let lin = genealogy.get(&id).expect("expert id missing from genealogy");
        if let Some((x, on)) = lin.assumption {
            if class.on_path(member, x) != on {
                return false;
            }
        }
        match lin.parent {
            Some(p) => id = p,
            None => return true,
        }
    }
}

/// Per-expert observation captured when instrumentation is on.
#[derive(Clone, Debug)]
pub struct ExpertObs {
    pub id: u64,
    pub anchor: NodeId,
    pub danger: Vec<NodeId>,
    pub alive: u64,
    pub weight: Dyadic,
    pub lineage_mistakes: u64,
}

/// Pool state after one round's updates.
#[derive(Clone, Debug)]
pub struct RoundObs {
    pub x: NodeId,
    pub yhat: Bit,
    pub y: Bit,
    pub pool: Vec<ExpertObs>,
    pub pool_weight: Dyadic,
}

/// Instrumentation trace of a full game.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub initial_pool: Vec<ExpertObs>,
    pub initial_weight: Dyadic,
    pub rounds: Vec<RoundObs>,
}

#[derive(Clone, Debug)]
pub struct TransductiveParams {
    /// Danger-zone horizon: the first tmax announced nodes seed S.
    /// Defaults to min(n, 2 * 2^ceil(sqrt(d))).
    pub tmax: Option<usize>,
    /// Version-space size at which experts switch to plain halving.
    /// Defaults to 2^ceil(sqrt(d)).
    pub halving_threshold: Option<u64>,
    /// Abort (with a diagnostic error) if the pool ever exceeds this.
    pub expert_cap: usize,
    /// Capture per-round pool observations.
    pub instrument: bool,
}

impl Default for TransductiveParams {
    fn default() -> TransductiveParams {
        TransductiveParams {
            tmax: None,
            halving_threshold: None,
            expert_cap: 1 << 20,
            instrument: false,
        }
    }
}

/// The splitting-experts transductive learner.
pub struct TransductiveExpertsLearner {
    class: Arc<HypothesisClass>,
    params: TransductiveParams,
    threshold: u64,
    pool: Vec<ExpertState>,
    preds: Vec<Bit>,
    last_yhat: Bit,
    sequence: Option<Vec<NodeId>>,
    round: usize,
    next_id: u64,
    alg_mistakes: u64,
    genealogy: HashMap<u64, Lineage>,
    trace: Option<Trace>,
}

impl TransductiveExpertsLearner {
    pub fn new(class: Arc<HypothesisClass>, params: TransductiveParams) -> TransductiveExpertsLearner {
        let threshold = params
            .halving_threshold
            .unwrap_or_else(|| 1u64 << ceil_sqrt(class.depth() as u64).min(62));
        TransductiveExpertsLearner {
            class,
            params,
            threshold,
            pool: Vec::new(),
            preds: Vec::new(),
            last_yhat: 0,
            sequence: None,
            round: 0,
            next_id: 0,
            alg_mistakes: 0,
            genealogy: HashMap::new(),
            trace: None,
        }
    }

    pub fn halving_threshold(&self) -> u64 {
        self.threshold
    }

    pub fn resolved_tmax(&self, n: usize) -> usize {
        self.params
            .tmax
            .unwrap_or_else(|| {
                let s = ceil_sqrt(self.class.depth() as u64).min(61);
                (2u64 << s).try_into().unwrap_or(usize::MAX)
            })
            .min(n)
    }

    pub fn pool(&self) -> &[ExpertState] {
        &self.pool
    }

    pub fn genealogy(&self) -> &HashMap<u64, Lineage> {
        &self.genealogy
    }

    pub fn trace(&self) -> Option<&Trace> {
        self.trace.as_ref()
    }

    pub fn algorithm_mistakes(&self) -> u64 {
        self.alg_mistakes
    }

    pub fn pool_weight(&self) -> Dyadic {
        self.pool
            .iter()
            .fold(Dyadic::zero(), |acc, e| acc.add(&e.weight))
    }

    fn observe_pool(&self) -> Vec<ExpertObs> {
        self.pool
            .iter()
            .map(|e| ExpertObs {
                id: e.id,
                anchor: e.anchor,
                danger: e.danger.iter().copied().collect(),
                alive: e.vs.len(),
                weight: e.weight.clone(),
                lineage_mistakes: e.lineage_mistakes,
            })
            .collect()
    }
}

impl LearnerStrategy for TransductiveExpertsLearner {
    fn receive_sequence(&mut self, sequence: &[NodeId]) -> Result<()> {
        let tmax = self.resolved_tmax(sequence.len());
        let danger: BTreeSet<NodeId> = sequence[..tmax].iter().copied().collect();
        let vs = VersionSpace::full(&self.class)?;
        self.pool = vec![ExpertState {
            id: 0,
            danger,
            anchor: NodeId::ROOT,
            vs,
            weight: Dyadic::one(),
            lineage_mistakes: 0,
        }];
        self.genealogy.insert(0, Lineage { parent: None, assumption: None });
        self.sequence = Some(sequence.to_vec());
        if self.params.instrument {
            self.trace = Some(Trace {
                initial_pool: self.observe_pool(),
                initial_weight: Dyadic::one(),
                rounds: Vec::new(),
            });
        }
        Ok(())
    }

    fn predict(&mut self, x: NodeId) -> Result<Bit> {
        let seq = self.sequence.as_ref().ok_or_else(|| {
            Error::InvalidParameter(
                "transductive learner needs the announced sequence before round 1".into(),
            )
        })?;
        if seq.get(self.round) != Some(&x) {
            return Err(Error::InvalidParameter(format!(
                "instance {x} does not match announced round {}",
                self.round + 1
            )));
        }
        self.preds = self
            .pool
            .iter()
            .map(|e| expert_prediction(&self.class, e, x, self.threshold))
            .collect();
        let mut total = Dyadic::zero();
        let mut ones = Dyadic::zero();
        for (e, &p) in self.pool.iter().zip(&self.preds) {
            total = total.add(&e.weight);
            if p == 1 {
                ones = ones.add(&e.weight);
            }
        }
        let two = BigUint::from(2u8);
        let one = BigUint::from(1u8);
        self.last_yhat =
            (Dyadic::scaled_cmp(&two, &ones, &one, &total) != std::cmp::Ordering::Less) as Bit;
        Ok(self.last_yhat)
    }

    fn receive_label(&mut self, x: NodeId, y: Bit) -> Result<()> {
        let preds = std::mem::take(&mut self.preds);
        if preds.len() != self.pool.len() {
            return Err(Error::InvalidParameter(
                "receive_label called without a matching predict".into(),
            ));
        }
        if self.last_yhat != y {
            self.alg_mistakes += 1;
        }
        let old_pool = std::mem::take(&mut self.pool);
        let mut new_pool = Vec::with_capacity(old_pool.len() + 1);
        for (mut e, own) in old_pool.into_iter().zip(preds) {
            expert_basic_update(&self.class, &mut e, x, y);
            if own == y {
                new_pool.push(e);
                continue;
            }
            let parent = e.id;
            let (succ, case) =
                expert_extended_update(&self.class, e, x, y, self.threshold, &mut self.next_id);
            if case == UpdateCase::Split {
                debug_assert_eq!(succ.len(), 2);
                self.genealogy.insert(
                    succ[0].id,
                    Lineage { parent: Some(parent), assumption: Some((x, false)) },
                );
                self.genealogy.insert(
                    succ[1].id,
                    Lineage { parent: Some(parent), assumption: Some((x, true)) },
                );
            }
            new_pool.extend(succ);
        }
        if new_pool.len() > self.params.expert_cap {
            return Err(Error::ExpertCapExceeded { cap: self.params.expert_cap });
        }
        self.pool = new_pool;
        self.round += 1;
        if self.trace.is_some() {
            let pool = self.observe_pool();
            let pool_weight = self.pool_weight();
            if let Some(trace) = self.trace.as_mut() {
                trace.rounds.push(RoundObs { x, yhat: self.last_yhat, y, pool, pool_weight });
            }
        }
        Ok(())
    }
}
