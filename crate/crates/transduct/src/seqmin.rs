//! Sequence minimalization.
//!
//! Any deterministic adversary that forces M mistakes on a sequence can be
//! made *rigid*: its label at round t becomes a function f of the emitted
//! label history alone, with a star value meaning "contradict the learner".
//! Rounds reachable with a star under fewer than M prior stars are the
//! *essential* ones; there are at most 2^M - 1 of them, and replaying the
//! rigid adversary on just those instances still forces M mistakes.

use std::collections::BTreeMap;
use std::fmt;

use crate::engine::TransductiveAdversary;
use crate::error::{Error, Result};
use crate::treebits::{Bit, NodeId};

/// Value of the rigid decision function at one label history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sym {
    Zero,
    One,
    Star,
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sym::Zero => "0",
            Sym::One => "1",
            Sym::Star => "*",
        })
    }
}

const MAX_HORIZON: usize = 62;

/// The decision table of a rigid adversary: emitted-label history -> Sym.
/// Only reachable histories are stored; after a 0/1 entry only the child
/// extending by that bit is reachable, after a star both are.
#[derive(Clone, Debug)]
pub struct RigidTable {
    horizon: usize,
    entries: BTreeMap<(u8, u64), Sym>,
}

fn history_key(history: &[Bit]) -> (u8, u64) {
    let mut bits = 0u64;
    for &b in history {
        bits = bits << 1 | b as u64;
    }
    (history.len() as u8, bits)
}

impl RigidTable {
    pub fn new(horizon: usize) -> Result<RigidTable> {
        if horizon > MAX_HORIZON {
            return Err(Error::InvalidParameter(format!(
                "rigid table horizon {horizon} exceeds {MAX_HORIZON}"
            )));
        }
        Ok(RigidTable { horizon, entries: BTreeMap::new() })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn insert(&mut self, history: &[Bit], sym: Sym) -> Result<()> {
        if history.len() >= self.horizon {
            return Err(Error::InvalidParameter(format!(
                "history of length {} is not below the horizon {}",
                history.len(),
                self.horizon
            )));
        }
        self.entries.insert(history_key(history), sym);
        Ok(())
    }

    pub fn get(&self, history: &[Bit]) -> Option<Sym> {
        self.entries.get(&history_key(history)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn star_count(&self) -> usize {
        self.entries.values().filter(|&&s| s == Sym::Star).count()
    }

    /// Entries in (length, lexicographic) order.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<Bit>, Sym)> + '_ {
        self.entries.iter().map(|(&(len, bits), &sym)| {
            let history: Vec<Bit> =
                (0..len).map(|i| ((bits >> (len - 1 - i)) & 1) as Bit).collect();
            (history, sym)
        })
    }
}

/// Two replays of the same probe predictions must label identically;
/// rigidification is meaningless for randomized adversaries.
pub(crate) fn determinism_precheck(adv: &dyn TransductiveAdversary) -> Result<()> {
    let n = adv.sequence().len();
    for probe in [0 as Bit, 1 as Bit] {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut clone = adv.snapshot();
            let labels =
                (0..n).map(|_| clone.assign_label(probe)).collect::<Result<Vec<Bit>>>()?;
            runs.push(labels);
        }
        if runs[0] != runs[1] {
            return Err(Error::ProbeNondeterminism(format!(
                "two replays under constant prediction {probe} labeled differently"
            )));
        }
    }
    Ok(())
}

/// Probes `state` (the inner adversary advanced to `history`) with both
/// predictions to classify the next entry, then recurses into reachable
/// children; exploration of a branch stops once it has seen `budget` stars.
fn extract_entries(
    state: &dyn TransductiveAdversary,
    n: usize,
    stars: u64,
    budget: u64,
    history: &mut Vec<Bit>,
    table: &mut RigidTable,
) -> Result<()> {
    if history.len() == n {
        return Ok(());
    }
    let mut probe0 = state.snapshot();
    let y0 = probe0.assign_label(0)?;
    if y0 == 0 {
        table.insert(history, Sym::Zero)?;
        history.push(0);
        extract_entries(probe0.as_ref(), n, stars, budget, history, table)?;
        history.pop();
        return Ok(());
    }
    let mut probe1 = state.snapshot();
    let y1 = probe1.assign_label(1)?;
    if y1 == 1 {
        table.insert(history, Sym::One)?;
        history.push(1);
        extract_entries(probe1.as_ref(), n, stars, budget, history, table)?;
        history.pop();
        return Ok(());
    }
    // The adversary contradicted both probes: a forced round. probe0 was
    // fed 0 and answered 1, so it is the y=1 child; probe1 the y=0 child.
    debug_assert!(y0 == 1 && y1 == 0);
    table.insert(history, Sym::Star)?;
    if stars + 1 >= budget {
        return Ok(());
    }
    history.push(1);
    extract_entries(probe0.as_ref(), n, stars + 1, budget, history, table)?;
    history.pop();
    history.push(0);
    extract_entries(probe1.as_ref(), n, stars + 1, budget, history, table)?;
    history.pop();
    Ok(())
}

/// The middle-man wrapper: relays the inner adversary's labels, feeding it
/// the prediction it is willing to accept (or the learner's when it
/// contradicts both). Its labels depend only on the label history and the
/// current prediction.
pub struct RigidAdversary {
    inner: Box<dyn TransductiveAdversary>,
    seq: Vec<NodeId>,
    forced: u64,
}

impl TransductiveAdversary for RigidAdversary {
    fn sequence(&self) -> &[NodeId] {
        &self.seq
    }

    fn assign_label(&mut self, y_hat: Bit) -> Result<Bit> {
        let mut probe0 = self.inner.snapshot();
        if probe0.assign_label(0)? == 0 {
            self.inner = probe0;
            return Ok(0);
        }
        let mut probe1 = self.inner.snapshot();
        if probe1.assign_label(1)? == 1 {
            self.inner = probe1;
            return Ok(1);
        }
        // Star round: pass the learner's actual prediction through.
        self.forced += 1;
        if y_hat == 0 {
            self.inner = probe0;
            Ok(1)
        } else {
            self.inner = probe1;
            Ok(0)
        }
    }

    fn snapshot(&self) -> Box<dyn TransductiveAdversary> {
        Box::new(RigidAdversary {
            inner: self.inner.snapshot(),
            seq: self.seq.clone(),
            forced: self.forced,
        })
    }

    fn forced_count(&self) -> u64 {
        self.forced
    }
}

/// Wraps a deterministic adversary as a rigid one and extracts its decision
/// table, exploring reachable histories until `star_budget` stars deep.
pub fn rigidify(
    adv: &dyn TransductiveAdversary,
    star_budget: u64,
) -> Result<(RigidAdversary, RigidTable)> {
    determinism_precheck(adv)?;
    let seq = adv.sequence().to_vec();
    let mut table = RigidTable::new(seq.len())?;
    let mut history = Vec::new();
    extract_entries(adv, seq.len(), 0, star_budget, &mut history, &mut table)?;
    Ok((RigidAdversary { inner: adv.snapshot(), seq, forced: 0 }, table))
}

/// Rounds t reachable with f(history) = star under fewer than M prior
/// stars; 1-based, sorted. At most 2^M - 1 of them exist.
pub fn essential_indices(table: &RigidTable, m: u64) -> Vec<usize> {
    fn walk(
        table: &RigidTable,
        history: &mut Vec<Bit>,
        stars: u64,
        m: u64,
        out: &mut Vec<usize>,
    ) {
        match table.get(history) {
            None => {}
            Some(Sym::Zero) => {
                history.push(0);
                walk(table, history, stars, m, out);
                history.pop();
            }
            Some(Sym::One) => {
                history.push(1);
                walk(table, history, stars, m, out);
                history.pop();
            }
            Some(Sym::Star) => {
                let t = history.len() + 1;
                if !out.contains(&t) {
                    out.push(t);
                }
                if stars + 1 < m {
                    for b in [0, 1] {
                        history.push(b);
                        walk(table, history, stars + 1, m, out);
                        history.pop();
                    }
                }
            }
        }
    }
    if m == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    walk(table, &mut Vec::new(), 0, m, &mut out);
    out.sort_unstable();
    debug_assert!(out.len() as u64 <= (1u64 << m.min(62)) - 1);
    out
}

/// Plays the essential rounds against the learner and silently feeds
/// prediction 0 to the inner rigid adversary at every other round.
pub struct MinimalAdversary {
    rigid: RigidAdversary,
    /// 1-based essential rounds of the inner game, ascending.
    essential: Vec<usize>,
    sub_seq: Vec<NodeId>,
    inner_round: usize,
    outer_round: usize,
    forced: u64,
}

impl MinimalAdversary {
    pub fn essential_indices(&self) -> &[usize] {
        &self.essential
    }
}

impl TransductiveAdversary for MinimalAdversary {
    fn sequence(&self) -> &[NodeId] {
        &self.sub_seq
    }

    fn assign_label(&mut self, y_hat: Bit) -> Result<Bit> {
        let target = *self.essential.get(self.outer_round).ok_or_else(|| {
            Error::InvalidParameter("adversary consulted beyond its sequence".into())
        })?;
        while self.inner_round + 1 < target {
            self.rigid.assign_label(0)?;
            self.inner_round += 1;
        }
        let y = self.rigid.assign_label(y_hat)?;
        self.inner_round += 1;
        self.outer_round += 1;
        self.forced += (y != y_hat) as u64;
        Ok(y)
    }

    fn snapshot(&self) -> Box<dyn TransductiveAdversary> {
        Box::new(MinimalAdversary {
            rigid: RigidAdversary {
                inner: self.rigid.inner.snapshot(),
                seq: self.rigid.seq.clone(),
                forced: self.rigid.forced,
            },
            essential: self.essential.clone(),
            sub_seq: self.sub_seq.clone(),
            inner_round: self.inner_round,
            outer_round: self.outer_round,
            forced: self.forced,
        })
    }

    fn forced_count(&self) -> u64 {
        self.forced
    }
}

/// Rigidifies `adv`, keeps only the essential rounds for forcing `m`
/// mistakes, and returns the shortened sequence with the relaying strategy.
pub fn minimalize(
    adv: &dyn TransductiveAdversary,
    m: u64,
) -> Result<(Vec<NodeId>, MinimalAdversary)> {
    let (rigid, table) = rigidify(adv, m)?;
    let essential = essential_indices(&table, m);
    let sub_seq: Vec<NodeId> = essential.iter().map(|&t| rigid.seq[t - 1]).collect();
    let minimal = MinimalAdversary {
        rigid,
        essential,
        sub_seq: sub_seq.clone(),
        inner_round: 0,
        outer_round: 0,
        forced: 0,
    };
    Ok((sub_seq, minimal))
}
