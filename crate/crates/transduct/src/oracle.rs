//! Exact game values by exhaustive minimax search on tiny instances: the
//! ground truth that learners, adversaries, and the sequence transforms are
//! verified against. No pruning beyond memoization; budgets guard the
//! exponential blowup.

use std::collections::HashMap;

use crate::engine::TransductiveAdversary;
use crate::error::{Error, Result};
use crate::hypotheses::{HypothesisClass, VersionSpace};
use crate::seqmin::determinism_precheck;
use crate::treebits::NodeId;

/// Caps on exhaustive search. A query over the cap fails fast with
/// BudgetExceeded instead of running away.
#[derive(Clone, Copy, Debug)]
pub struct OracleBudget {
    pub max_hypotheses: u64,
    pub max_domain: usize,
    pub max_rounds: usize,
    pub max_nodes_expanded: u64,
}

impl Default for OracleBudget {
    fn default() -> OracleBudget {
        OracleBudget {
            max_hypotheses: 1 << 12,
            max_domain: 64,
            max_rounds: 8,
            max_nodes_expanded: 100_000_000,
        }
    }
}

/// An oracle answer plus how much search it took.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleOutcome {
    pub value: u64,
    pub nodes: u64,
}

fn check_class(class: &HypothesisClass, budget: &OracleBudget) -> Result<()> {
    if class.len() > budget.max_hypotheses {
        return Err(Error::BudgetExceeded(format!(
            "oracle guard: class of {} exceeds max_hypotheses {}",
            class.len(),
            budget.max_hypotheses
        )));
    }
    Ok(())
}

fn spend(nodes: &mut u64, budget: &OracleBudget) -> Result<()> {
    *nodes += 1;
    if *nodes > budget.max_nodes_expanded {
        return Err(Error::BudgetExceeded(format!(
            "oracle guard: exceeded max_nodes_expanded {}",
            budget.max_nodes_expanded
        )));
    }
    Ok(())
}

/// Game value of one round given the two continuation values; None marks an
/// infeasible label. The learner moves first, the adversary answers.
fn round_value(v0: Option<u64>, v1: Option<u64>) -> u64 {
    match (v0, v1) {
        (Some(a), None) => a,
        (None, Some(b)) => b,
        // min over predictions of max over labels of mistake + continuation.
        (Some(a), Some(b)) => (a.max(1 + b)).min((1 + a).max(b)),
        (None, None) => unreachable!("a nonempty version space realizes some label"),
    }
}

struct FixedSeqSearch<'a> {
    class: &'a HypothesisClass,
    budget: &'a OracleBudget,
    nodes: u64,
    memo: Option<HashMap<(usize, Vec<u32>), u64>>,
}

impl FixedSeqSearch<'_> {
    fn value(&mut self, vs: &VersionSpace, seq: &[NodeId], i: usize) -> Result<u64> {
        if i == seq.len() {
            return Ok(0);
        }
        spend(&mut self.nodes, self.budget)?;
        let key = (i, vs.memo_key());
        if let Some(hit) = self.memo.as_ref().and_then(|m| m.get(&key)) {
            return Ok(*hit);
        }
        let vs0 = vs.restrict(self.class, seq[i], 0);
        let vs1 = vs.restrict(self.class, seq[i], 1);
        let v0 = if vs0.is_empty() { None } else { Some(self.value(&vs0, seq, i + 1)?) };
        let v1 = if vs1.is_empty() { None } else { Some(self.value(&vs1, seq, i + 1)?) };
        let v = round_value(v0, v1);
        if let Some(m) = self.memo.as_mut() {
            m.insert(key, v);
        }
        Ok(v)
    }
}

/// Minimax mistake value of the transductive game on the announced
/// sequence: the learner sees all of `seq` up front, the adversary may pick
/// any labeling that keeps the class realizable.
pub fn trans_value_fixed_seq(
    class: &HypothesisClass,
    seq: &[NodeId],
    budget: &OracleBudget,
) -> Result<OracleOutcome> {
    check_class(class, budget)?;
    if seq.len() > budget.max_rounds {
        return Err(Error::BudgetExceeded(format!(
            "oracle guard: {} rounds exceeds max_rounds {}",
            seq.len(),
            budget.max_rounds
        )));
    }
    let mut search =
        FixedSeqSearch { class, budget, nodes: 0, memo: Some(HashMap::new()) };
    let vs = VersionSpace::full(class)?;
    let value = search.value(&vs, seq, 0)?;
    Ok(OracleOutcome { value, nodes: search.nodes })
}

/// Reference recursion without the memo table, for soundness checks.
#[cfg(test)]
pub(crate) fn trans_value_fixed_seq_unmemoized(
    class: &HypothesisClass,
    seq: &[NodeId],
    budget: &OracleBudget,
) -> Result<OracleOutcome> {
    let mut search = FixedSeqSearch { class, budget, nodes: 0, memo: None };
    let vs = VersionSpace::full(class)?;
    let value = search.value(&vs, seq, 0)?;
    Ok(OracleOutcome { value, nodes: search.nodes })
}

fn check_domain(domain: &[NodeId], n: usize, budget: &OracleBudget) -> Result<()> {
    if domain.is_empty() {
        return Err(Error::InvalidParameter("oracle needs a nonempty domain".into()));
    }
    if domain.len() > budget.max_domain {
        return Err(Error::BudgetExceeded(format!(
            "oracle guard: domain of {} exceeds max_domain {}",
            domain.len(),
            budget.max_domain
        )));
    }
    if n > budget.max_rounds {
        return Err(Error::BudgetExceeded(format!(
            "oracle guard: {n} rounds exceeds max_rounds {}",
            budget.max_rounds
        )));
    }
    Ok(())
}

/// Transductive value maximized over announced sequences: max over
/// domain^n of trans_value_fixed_seq. Plain enumeration; the inner values
/// are memoized on (alive set, remaining suffix) and shared across
/// sequences.
pub fn trans_value(
    class: &HypothesisClass,
    domain: &[NodeId],
    n: usize,
    budget: &OracleBudget,
) -> Result<OracleOutcome> {
    struct Enumeration<'a> {
        class: &'a HypothesisClass,
        domain: &'a [NodeId],
        budget: &'a OracleBudget,
        nodes: u64,
        memo: HashMap<(Vec<u32>, Vec<NodeId>), u64>,
    }

    impl Enumeration<'_> {
        fn fixed(&mut self, vs: &VersionSpace, suffix: &[NodeId]) -> Result<u64> {
            let Some((&x, rest)) = suffix.split_first() else {
                return Ok(0);
            };
            spend(&mut self.nodes, self.budget)?;
            let key = (vs.memo_key(), suffix.to_vec());
            if let Some(&hit) = self.memo.get(&key) {
                return Ok(hit);
            }
            let vs0 = vs.restrict(self.class, x, 0);
            let vs1 = vs.restrict(self.class, x, 1);
            let v0 = if vs0.is_empty() { None } else { Some(self.fixed(&vs0, rest)?) };
            let v1 = if vs1.is_empty() { None } else { Some(self.fixed(&vs1, rest)?) };
            let v = round_value(v0, v1);
            self.memo.insert(key, v);
            Ok(v)
        }

        fn best(&mut self, vs: &VersionSpace, prefix: &mut Vec<NodeId>, left: usize) -> Result<u64> {
            if left == 0 {
                return self.fixed(vs, prefix);
            }
            let mut best = 0;
            for &x in self.domain {
                prefix.push(x);
                best = best.max(self.best(vs, prefix, left - 1)?);
                prefix.pop();
            }
            Ok(best)
        }
    }

    check_class(class, budget)?;
    check_domain(domain, n, budget)?;
    let mut search = Enumeration {
        class,
        domain,
        budget,
        nodes: 0,
        memo: HashMap::new(),
    };
    let vs = VersionSpace::full(class)?;
    let value = search.best(&vs, &mut Vec::new(), n)?;
    Ok(OracleOutcome { value, nodes: search.nodes })
}

/// Minimax mistake value of the standard game: per round the adversary
/// picks any domain point, then the usual predict/label exchange. Equals
/// min(n, ldim) by the classic argument; the acceptance battery checks
/// that equality.
pub fn std_value(
    class: &HypothesisClass,
    domain: &[NodeId],
    n: usize,
    budget: &OracleBudget,
) -> Result<OracleOutcome> {
    struct Search<'a> {
        class: &'a HypothesisClass,
        domain: &'a [NodeId],
        budget: &'a OracleBudget,
        nodes: u64,
        memo: HashMap<(Vec<u32>, usize), u64>,
    }

    impl Search<'_> {
        fn value(&mut self, vs: &VersionSpace, left: usize) -> Result<u64> {
            if left == 0 {
                return Ok(0);
            }
            spend(&mut self.nodes, self.budget)?;
            let key = (vs.memo_key(), left);
            if let Some(&hit) = self.memo.get(&key) {
                return Ok(hit);
            }
            let mut best = 0;
            for &x in self.domain {
                let vs0 = vs.restrict(self.class, x, 0);
                let vs1 = vs.restrict(self.class, x, 1);
                let v0 = if vs0.is_empty() { None } else { Some(self.value(&vs0, left - 1)?) };
                let v1 = if vs1.is_empty() { None } else { Some(self.value(&vs1, left - 1)?) };
                best = best.max(round_value(v0, v1));
            }
            self.memo.insert(key, best);
            Ok(best)
        }
    }

    check_class(class, budget)?;
    check_domain(domain, n, budget)?;
    let mut search =
        Search { class, domain, budget, nodes: 0, memo: HashMap::new() };
    let vs = VersionSpace::full(class)?;
    let value = search.value(&vs, n)?;
    Ok(OracleOutcome { value, nodes: search.nodes })
}

/// Fewest mistakes any learner can achieve against this fixed deterministic
/// adversary: DFS over prediction sequences with snapshot/restore. The
/// matching prediction is explored first so pruning against the incumbent
/// bites early.
pub fn forced_mistakes(
    adv: &dyn TransductiveAdversary,
    budget: &OracleBudget,
) -> Result<OracleOutcome> {
    fn dfs(
        state: &dyn TransductiveAdversary,
        left: usize,
        acc: u64,
        best: &mut u64,
        nodes: &mut u64,
        budget: &OracleBudget,
    ) -> Result<()> {
        if acc >= *best {
            return Ok(());
        }
        if left == 0 {
            *best = acc;
            return Ok(());
        }
        spend(nodes, budget)?;
        let mut probe0 = state.snapshot();
        let y0 = probe0.assign_label(0)?;
        let mut probe1 = state.snapshot();
        let y1 = probe1.assign_label(1)?;
        if y0 == y1 {
            // Label independent of the prediction: both branches reach the
            // same state, so only the matching (costless) one can be optimal.
            let next = if y0 == 0 { probe0 } else { probe1 };
            return dfs(next.as_ref(), left - 1, acc, best, nodes, budget);
        }
        // Reactive round: the two labels split the state; the costs are
        // equal (both 1 when flipping, both 0 when agreeing).
        let cost = (y0 != 0) as u64;
        for next in [probe0, probe1] {
            dfs(next.as_ref(), left - 1, acc + cost, best, nodes, budget)?;
        }
        Ok(())
    }

    determinism_precheck(adv)?;
    let n = adv.sequence().len();
    let mut best = n as u64 + 1;
    let mut nodes = 0;
    dfs(adv, n, 0, &mut best, &mut nodes, budget)?;
    Ok(OracleOutcome { value: best, nodes })
}
