//! Game referee for the two online-learning protocols.
//!
//! Standard protocol, per round: the adversary reveals an instance, the
//! learner predicts, the adversary assigns the label. Transductive protocol:
//! the adversary announces the entire instance sequence before round one and
//! then only assigns labels. In strict mode the referee maintains its own
//! version space and rejects any label sequence that empties it; trusted
//! mode skips that recomputation for large sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypotheses::{ClassDescriptor, HypothesisClass, VersionSpace};
use crate::treebits::{Bit, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Standard,
    Transductive,
}

/// Whether the referee recomputes realizability each round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RealizabilityMode {
    #[default]
    Strict,
    Trusted,
}

/// A learner. In the transductive game `receive_sequence` is called once
/// before round one; in the standard game it is never called. Rounds then
/// alternate `predict` / `receive_label` on the same instance.
pub trait LearnerStrategy {
    fn receive_sequence(&mut self, _sequence: &[NodeId]) -> Result<()> {
        Ok(())
    }
    fn predict(&mut self, x: NodeId) -> Result<Bit>;
    fn receive_label(&mut self, x: NodeId, y: Bit) -> Result<()>;
}

/// An adversary for the transductive game: owns a fixed announced sequence
/// and assigns labels after seeing each prediction. `snapshot` clones the
/// full strategy state so callers can probe alternative prediction branches
/// (sequence minimalization, forced-mistake search); implementations must be
/// deterministic given their construction-time seed.
pub trait TransductiveAdversary {
    fn sequence(&self) -> &[NodeId];
    fn assign_label(&mut self, y_hat: Bit) -> Result<Bit>;
    fn snapshot(&self) -> Box<dyn TransductiveAdversary>;
    /// Rounds so far on which the strategy deliberately contradicted the
    /// learner (diagnostic; 0 where the notion does not apply).
    fn forced_count(&self) -> u64 {
        0
    }
}

/// An adversary for the standard game: picks the next instance, then labels
/// it after seeing the prediction.
pub trait StandardAdversary {
    fn next_instance(&mut self) -> Result<NodeId>;
    fn assign_label(&mut self, y_hat: Bit) -> Result<Bit>;
    fn forced_count(&self) -> u64 {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub x: NodeId,
    pub yhat: Bit,
    pub y: Bit,
}

/// A finished game. Serializes with fields in declaration order; `sequence`
/// is present exactly for transductive games.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub setting: Setting,
    pub d: u8,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sequence: Option<Vec<NodeId>>,
    pub rounds: Vec<Round>,
    pub mistakes: u64,
    pub class: ClassDescriptor,
}

pub fn count_mistakes(rounds: &[Round]) -> u64 {
    rounds.iter().filter(|r| r.yhat != r.y).count() as u64
}

fn check_bit(b: Bit, what: &str) -> Result<()> {
    if b > 1 {
        return Err(Error::InvalidParameter(format!("{what} emitted non-bit value {b}")));
    }
    Ok(())
}

struct Referee {
    vs: Option<VersionSpace>,
}

impl Referee {
    fn new(class: &HypothesisClass, mode: RealizabilityMode) -> Result<Referee> {
        Ok(Referee {
            vs: match mode {
                RealizabilityMode::Strict => Some(VersionSpace::full(class)?),
                RealizabilityMode::Trusted => None,
            },
        })
    }

    fn observe(&mut self, class: &HypothesisClass, x: NodeId, y: Bit, round: usize) -> Result<()> {
        if let Some(vs) = &self.vs {
            let next = vs.restrict(class, x, y);
            if next.is_empty() {
                return Err(Error::RealizabilityViolation { round });
            }
            self.vs = Some(next);
        }
        Ok(())
    }
}

/// Plays the transductive game for `n` rounds and returns the transcript.
/// The adversary's announced sequence must have length exactly `n`.
pub fn play_transductive(
    class: &HypothesisClass,
    learner: &mut dyn LearnerStrategy,
    adversary: &mut dyn TransductiveAdversary,
    n: usize,
    mode: RealizabilityMode,
) -> Result<Transcript> {
    let sequence = adversary.sequence().to_vec();
    if sequence.len() != n {
        return Err(Error::SequenceLengthMismatch { expected: n, got: sequence.len() });
    }
    let tree = class.tree();
    for &x in &sequence {
        if !tree.contains(x) {
            return Err(Error::InvalidParameter(format!(
                "announced instance {x} lies outside the depth-{} tree",
                class.depth()
            )));
        }
    }
    let mut referee = Referee::new(class, mode)?;
    learner.receive_sequence(&sequence)?;
    let mut rounds = Vec::with_capacity(n);
    for (t, &x) in sequence.iter().enumerate() {
        let yhat = learner.predict(x)?;
        check_bit(yhat, "learner")?;
        let y = adversary.assign_label(yhat)?;
        check_bit(y, "adversary")?;
        referee.observe(class, x, y, t + 1)?;
        learner.receive_label(x, y)?;
        rounds.push(Round { x, yhat, y });
    }
    let mistakes = count_mistakes(&rounds);
    Ok(Transcript {
        setting: Setting::Transductive,
        d: class.depth(),
        sequence: Some(sequence),
        rounds,
        mistakes,
        class: class.descriptor(),
    })
}

/// Plays the standard game for `n` rounds and returns the transcript.
pub fn play_standard(
    class: &HypothesisClass,
    learner: &mut dyn LearnerStrategy,
    adversary: &mut dyn StandardAdversary,
    n: usize,
    mode: RealizabilityMode,
) -> Result<Transcript> {
    let tree = class.tree();
    let mut referee = Referee::new(class, mode)?;
    let mut rounds = Vec::with_capacity(n);
    for t in 0..n {
        let x = adversary.next_instance()?;
        if !tree.contains(x) {
            return Err(Error::InvalidParameter(format!(
                "instance {x} at round {} lies outside the depth-{} tree",
                t + 1,
                class.depth()
            )));
        }
        let yhat = learner.predict(x)?;
        check_bit(yhat, "learner")?;
        let y = adversary.assign_label(yhat)?;
        check_bit(y, "adversary")?;
        referee.observe(class, x, y, t + 1)?;
        learner.receive_label(x, y)?;
        rounds.push(Round { x, yhat, y });
    }
    let mistakes = count_mistakes(&rounds);
    Ok(Transcript {
        setting: Setting::Standard,
        d: class.depth(),
        sequence: None,
        rounds,
        mistakes,
        class: class.descriptor(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::HypothesisClass;

    fn node(s: &str) -> NodeId {
        s.parse().unwrap()
    }

    /// Records the order of protocol messages it sees.
    #[derive(Default)]
    struct ProbeLearner {
        events: Vec<String>,
    }

    impl LearnerStrategy for ProbeLearner {
        fn receive_sequence(&mut self, sequence: &[NodeId]) -> Result<()> {
            self.events.push(format!("seq:{}", sequence.len()));
            Ok(())
        }
        fn predict(&mut self, x: NodeId) -> Result<Bit> {
            self.events.push(format!("predict:{x}"));
            Ok(0)
        }
        fn receive_label(&mut self, x: NodeId, y: Bit) -> Result<()> {
            self.events.push(format!("label:{x}={y}"));
            Ok(())
        }
    }

    /// Fixed sequence, fixed labels.
    #[derive(Clone)]
    struct FixedAdv {
        seq: Vec<NodeId>,
        labels: Vec<Bit>,
        t: usize,
    }

    impl TransductiveAdversary for FixedAdv {
        fn sequence(&self) -> &[NodeId] {
            &self.seq
        }
        fn assign_label(&mut self, _y_hat: Bit) -> Result<Bit> {
            let y = self.labels[self.t];
            self.t += 1;
            Ok(y)
        }
        fn snapshot(&self) -> Box<dyn TransductiveAdversary> {
            Box::new(self.clone())
        }
    }

    impl StandardAdversary for FixedAdv {
        fn next_instance(&mut self) -> Result<NodeId> {
            Ok(self.seq[self.t])
        }
        fn assign_label(&mut self, _y_hat: Bit) -> Result<Bit> {
            let y = self.labels[self.t];
            self.t += 1;
            Ok(y)
        }
    }

    fn two_point_class() -> HypothesisClass {
        HypothesisClass::all_functions(1, &[node("0"), node("1")]).unwrap()
    }

    #[test]
    fn transductive_message_order() {
        let class = two_point_class();
        let mut learner = ProbeLearner::default();
        let mut adv =
            FixedAdv { seq: vec![node("0"), node("1")], labels: vec![1, 0], t: 0 };
        let t = play_transductive(&class, &mut learner, &mut adv, 2, RealizabilityMode::Strict)
            .unwrap();
        assert_eq!(
            learner.events,
            vec!["seq:2", "predict:0", "label:0=1", "predict:1", "label:1=0"]
        );
        assert_eq!(t.mistakes, 1);
        assert_eq!(t.sequence.as_deref(), Some(&[node("0"), node("1")][..]));
    }

    #[test]
    fn standard_message_order_has_no_sequence() {
        let class = two_point_class();
        let mut learner = ProbeLearner::default();
        let mut adv =
            FixedAdv { seq: vec![node("1"), node("0")], labels: vec![0, 0], t: 0 };
        let t =
            play_standard(&class, &mut learner, &mut adv, 2, RealizabilityMode::Strict).unwrap();
        assert_eq!(
            learner.events,
            vec!["predict:1", "label:1=0", "predict:0", "label:0=0"]
        );
        assert_eq!(t.sequence, None);
        assert_eq!(t.setting, Setting::Standard);
    }

    #[test]
    fn sequence_length_mismatch() {
        let class = two_point_class();
        let mut learner = ProbeLearner::default();
        let mut adv = FixedAdv { seq: vec![node("0")], labels: vec![0], t: 0 };
        let err = play_transductive(&class, &mut learner, &mut adv, 2, RealizabilityMode::Strict)
            .unwrap_err();
        assert!(matches!(err, Error::SequenceLengthMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn strict_mode_rejects_unrealizable_labels() {
        // Singleton class labeling everything 0; labeling "0" with 1 empties
        // the version space at round 1.
        let class = HypothesisClass::all_functions(1, &[]).unwrap();
        assert_eq!(class.len(), 1);
        let mut learner = ProbeLearner::default();
        let mut adv = FixedAdv { seq: vec![node("0")], labels: vec![1], t: 0 };
        let err = play_transductive(&class, &mut learner, &mut adv, 1, RealizabilityMode::Strict)
            .unwrap_err();
        assert!(matches!(err, Error::RealizabilityViolation { round: 1 }));
        // Trusted mode lets the same labels through.
        let mut learner = ProbeLearner::default();
        let mut adv = FixedAdv { seq: vec![node("0")], labels: vec![1], t: 0 };
        let t = play_transductive(&class, &mut learner, &mut adv, 1, RealizabilityMode::Trusted)
            .unwrap();
        assert_eq!(t.rounds.len(), 1);
    }

    #[test]
    fn strict_transcript_replays_to_nonempty_space() {
        let class = HypothesisClass::lazy_random(3, 2, 9).unwrap();
        let seq: Vec<NodeId> = class.member(5).path_of();
        let labels: Vec<Bit> = (0..=3u8).map(|k| ((5u64 >> (3 - k)) & 1) as Bit).collect();
        let mut learner = ProbeLearner::default();
        let mut adv = FixedAdv { seq: seq.clone(), labels, t: 0 };
        let t = play_transductive(&class, &mut learner, &mut adv, 4, RealizabilityMode::Strict)
            .unwrap();
        let mut vs = crate::hypotheses::VersionSpace::full(&class).unwrap();
        for r in &t.rounds {
            vs = vs.restrict(&class, r.x, r.y);
        }
        assert!(!vs.is_empty());
        assert!(vs.contains(5));
    }

    #[test]
    fn transcript_json_shape_and_roundtrip() {
        let class = two_point_class();
        let mut learner = ProbeLearner::default();
        let mut adv = FixedAdv { seq: vec![node("0")], labels: vec![1], t: 0 };
        let t = play_transductive(&class, &mut learner, &mut adv, 1, RealizabilityMode::Strict)
            .unwrap();
        let js = serde_json::to_string(&t).unwrap();
        // Field order is part of the format.
        let keys: Vec<usize> = ["\"setting\"", "\"d\"", "\"sequence\"", "\"rounds\"", "\"mistakes\"", "\"class\""]
            .iter()
            .map(|k| js.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "field order broken in {js}");
        assert!(js.contains(r#""rounds":[{"x":"0","yhat":0,"y":1}]"#));
        let back: Transcript = serde_json::from_str(&js).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn deterministic_replay_is_byte_identical() {
        let class = HypothesisClass::lazy_random(4, 2, 3).unwrap();
        let run = || {
            let seq: Vec<NodeId> = class.member(9).path_of();
            let labels: Vec<Bit> =
                (0..=4u8).map(|k| ((9u64 >> (4 - k)) & 1) as Bit).collect();
            let mut learner = ProbeLearner::default();
            let mut adv = FixedAdv { seq, labels, t: 0 };
            let t =
                play_transductive(&class, &mut learner, &mut adv, 5, RealizabilityMode::Strict)
                    .unwrap();
            serde_json::to_vec(&t).unwrap()
        };
        assert_eq!(run(), run());
    }
}
