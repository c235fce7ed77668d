//! The acceptance gate: ten executable claims about the games, learners,
//! adversaries, and transforms, each verified against exact oracles or
//! exact arithmetic. Every criterion prints one PASS/FAIL line; the test
//! fails if any criterion does.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigUint;

use transduct::adversaries::{
    ancestry_closed, construct_sequence, shrinkage_bound_holds, BalancedAdversary,
    BalancedRatioParams, Labeling, Ratio, ScriptedAdversary, ShrinkStep,
};
use transduct::dyadic::Dyadic;
use transduct::engine::{play_transductive, RealizabilityMode, TransductiveAdversary};
use transduct::harness::{csv_string, mask_wall_ms, run_sweep, SweepSpec};
use transduct::hypotheses::{ldim, ExplicitHypothesis, HypothesisClass, VersionSpace};
use transduct::learners::{
    is_assumption_consistent, HalvingLearner, TransductiveExpertsLearner, TransductiveParams,
};
use transduct::oracle::{forced_mistakes, std_value, trans_value, OracleBudget};
use transduct::seqmin::{minimalize, RigidTable, Sym};
use transduct::treebits::{Bit, NodeId};

fn mix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A random explicit class of `count` distinct hypotheses over B_d.
fn random_class(d: u8, count: usize, rng: &mut u64) -> HypothesisClass {
    assert!(count as u64 <= 1 << ((1u32 << (d + 1)) - 1).min(20), "count too large for depth");
    let mut rows: Vec<ExplicitHypothesis> = Vec::new();
    while rows.len() < count {
        let bits = mix(rng);
        let h = ExplicitHypothesis::from_fn(d, |u| ((bits >> (u.bfs_index() % 64)) & 1) as Bit)
            .unwrap();
        if !rows.contains(&h) {
            rows.push(h);
        }
    }
    HypothesisClass::explicit(d, rows).unwrap()
}

/// A random domain of `k` distinct nodes of B_d.
fn random_domain(d: u8, k: usize, rng: &mut u64) -> Vec<NodeId> {
    let tree = transduct::treebits::Tree::new(d).unwrap();
    let all: Vec<NodeId> = tree.bfs_nodes().collect();
    let mut picked = Vec::new();
    while picked.len() < k {
        let x = all[(mix(rng) % all.len() as u64) as usize];
        if !picked.contains(&x) {
            picked.push(x);
        }
    }
    picked
}

struct Battery {
    class: HypothesisClass,
    domain: Vec<NodeId>,
    n: usize,
    std: u64,
}

/// Criterion 1: standard-game value equals min(n, ldim) on a battery of
/// random classes, within the runtime target.
fn criterion_1(batteries: &mut Vec<Battery>) -> (bool, String) {
    let start = Instant::now();
    let budget = OracleBudget::default();
    let mut rng = 0xacce11u64;
    let mut checked = 0u32;
    for i in 0..200 {
        let k = 2 + (mix(&mut rng) % 4) as usize; // 2..=5 points
        let count = 2 + (mix(&mut rng) % 11) as usize; // 2..=12 hypotheses
        let n = 1 + (mix(&mut rng) % 5) as usize; // 1..=5 rounds
        let class = random_class(2, count, &mut rng);
        let domain = random_domain(2, k, &mut rng);
        let vs = VersionSpace::full(&class).unwrap();
        let dim = ldim(&class, &vs, &domain).unwrap() as u64;
        let sv = std_value(&class, &domain, n, &budget).unwrap().value;
        if sv != dim.min(n as u64) {
            return (
                false,
                format!("battery item {i}: std_value {sv} != min({n}, ldim {dim})"),
            );
        }
        checked += 1;
        batteries.push(Battery { class, domain, n, std: sv });
    }
    let elapsed = start.elapsed();
    let in_time = elapsed.as_secs() < 60;
    (
        in_time,
        format!(
            "{checked} classes, std_value == min(n, ldim) on all, {} ms{}",
            elapsed.as_millis(),
            if in_time { "" } else { " (over the 60 s target)" }
        ),
    )
}

/// Criterion 2: the transductive value never exceeds the standard value.
fn criterion_2(batteries: &[Battery]) -> (bool, String) {
    let budget = OracleBudget::default();
    for (i, b) in batteries.iter().enumerate() {
        let tv = trans_value(&b.class, &b.domain, b.n, &budget).unwrap().value;
        if tv > b.std {
            return (
                false,
                format!("battery item {i}: trans_value {tv} > std_value {}", b.std),
            );
        }
    }
    (true, format!("trans_value <= std_value on all {} classes", batteries.len()))
}

/// Criterion 3: halving never exceeds floor(log2 |class|) mistakes. Returns
/// the shrink logs so criterion 5 can audit every balanced transcript.
fn criterion_3(shrink_logs: &mut Vec<(Ratio, Vec<ShrinkStep>, u64)>) -> (bool, String) {
    let mut games = 0u32;
    for d in [3u8, 4, 5, 6] {
        for seed in 0..125u64 {
            let class =
                Arc::new(HypothesisClass::lazy_random(d, HypothesisClass::default_bias_exp(d), seed).unwrap());
            let params = BalancedRatioParams::defaults_for(d);
            let mut adv = BalancedAdversary::new(&class, &params).unwrap();
            let n = adv.sequence().len();
            let mut learner = HalvingLearner::new(Arc::clone(&class)).unwrap();
            let t = play_transductive(&class, &mut learner, &mut adv, n, RealizabilityMode::Strict)
                .unwrap();
            let cap = 63 - class.len().leading_zeros() as u64; // floor(log2 |class|)
            if t.mistakes > cap {
                return (
                    false,
                    format!("d={d} seed={seed}: halving made {} > {cap} mistakes", t.mistakes),
                );
            }
            shrink_logs.push((params.epsilon, adv.shrink_log().to_vec(), class.len()));
            games += 1;
        }
    }
    (games >= 500, format!("{games} games, halving mistakes <= floor(log2 |class|) on all"))
}

/// Criterion 4: the sequence construction stays within its length bound,
/// is ancestry closed, and the balanced adversary provably forces a
/// mistake (exhaustive search over learners).
fn criterion_4() -> (bool, String) {
    let budget = OracleBudget::default();
    let mut notes = Vec::new();
    for (d, m) in [(4u8, 1u64), (9, 2)] {
        let class =
            Arc::new(HypothesisClass::lazy_random(d, HypothesisClass::default_bias_exp(d), 0).unwrap());
        let params = BalancedRatioParams {
            epsilon: Ratio::new(1, 4).unwrap(),
            budget: m,
            lower_bound_factor: Ratio::new(2, 1).unwrap(),
        };
        let seq = construct_sequence(&class, &params).unwrap();
        let bound = (d as usize + 1) << (m + 1);
        if seq.len() >= bound {
            return (false, format!("d={d}: sequence length {} >= bound {bound}", seq.len()));
        }
        if !ancestry_closed(&seq) {
            return (false, format!("d={d}: constructed sequence is not ancestry closed"));
        }
        let n = seq.len();
        if n <= 22 {
            let adv = BalancedAdversary::with_sequence(&class, &params, seq).unwrap();
            let forced = forced_mistakes(&adv, &budget).unwrap().value;
            if forced < 1 {
                return (false, format!("d={d}: exhaustive search forces only {forced}"));
            }
            notes.push(format!("d={d}: len {n} < {bound}, forced {forced}"));
        } else {
            notes.push(format!("d={d}: len {n} < {bound}, forced-search skipped (n > 22)"));
        }
    }
    (true, notes.join("; "))
}

/// Criterion 5: every balanced transcript's version space obeys the exact
/// per-round and final shrinkage bounds.
fn criterion_5(shrink_logs: &[(Ratio, Vec<ShrinkStep>, u64)]) -> (bool, String) {
    let mut audited = shrink_logs.len();
    let mut all: Vec<(Ratio, Vec<ShrinkStep>, u64)> = shrink_logs.to_vec();
    // A dedicated batch with varied epsilon on top of criterion 3's games.
    for d in [4u8, 6, 8] {
        for seed in [11u64, 12, 13] {
            for eps in [Ratio::new(1, 4).unwrap(), Ratio::new(1, 8).unwrap()] {
                let class = Arc::new(HypothesisClass::lazy_random(d, 2, seed).unwrap());
                let params = BalancedRatioParams {
                    epsilon: eps,
                    budget: 2,
                    lower_bound_factor: Ratio::new(2, 1).unwrap(),
                };
                let mut adv = BalancedAdversary::new(&class, &params).unwrap();
                let n = adv.sequence().len();
                let mut learner = HalvingLearner::new(Arc::clone(&class)).unwrap();
                play_transductive(&class, &mut learner, &mut adv, n, RealizabilityMode::Strict)
                    .unwrap();
                all.push((eps, adv.shrink_log().to_vec(), class.len()));
                audited += 1;
            }
        }
    }
    for (i, (eps, log, initial)) in all.iter().enumerate() {
        let mut prev = *initial;
        for (r, step) in log.iter().enumerate() {
            if step.prev != prev {
                return (false, format!("transcript {i} round {r}: log discontinuity"));
            }
            // forced: next >= eps * prev; else next >= (1 - eps) * prev.
            let lhs = step.next as u128 * eps.den() as u128;
            let rhs = if step.forced {
                eps.num() as u128 * step.prev as u128
            } else {
                (eps.den() - eps.num()) as u128 * step.prev as u128
            };
            if lhs < rhs {
                return (
                    false,
                    format!(
                        "transcript {i} round {r}: {} -> {} violates the {} bound",
                        step.prev,
                        step.next,
                        if step.forced { "forced" } else { "majority" }
                    ),
                );
            }
            prev = step.next;
        }
        if !shrinkage_bound_holds(*eps, log, *initial) {
            return (false, format!("transcript {i}: final shrinkage bound violated"));
        }
    }
    (true, format!("{audited} transcripts, per-round and final bounds exact"))
}

struct InstrumentedRun {
    class: Arc<HypothesisClass>,
    learner: TransductiveExpertsLearner,
    mistakes: u64,
    /// A hypothesis consistent with every label the adversary issued.
    witness: u64,
}

fn play_instrumented(
    class: &Arc<HypothesisClass>,
    adv: &mut dyn TransductiveAdversary,
    witness: Option<u64>,
) -> InstrumentedRun {
    let mut learner = TransductiveExpertsLearner::new(
        Arc::clone(class),
        TransductiveParams { instrument: true, ..Default::default() },
    );
    let n = adv.sequence().len();
    let t = play_transductive(class, &mut learner, adv, n, RealizabilityMode::Trusted).unwrap();
    let witness = witness.unwrap_or_else(|| {
        let mut vs = VersionSpace::full(class).unwrap();
        for r in &t.rounds {
            vs = vs.restrict(class, r.x, r.y);
        }
        vs.min_member().expect("realizable transcript")
    });
    InstrumentedRun { class: Arc::clone(class), learner, mistakes: t.mistakes, witness }
}

/// Exact check of mistakes <= log_{4/3}(w0 / w_best), rearranged to
/// 4^mistakes * w_best <= 3^mistakes * w0.
fn posthoc_bound_holds(mistakes: u64, w0: &Dyadic, w_best: &Dyadic) -> bool {
    let four = BigUint::from(4u32).pow(mistakes as u32);
    let three = BigUint::from(3u32).pow(mistakes as u32);
    Dyadic::scaled_cmp(&four, w_best, &three, w0) != std::cmp::Ordering::Greater
}

/// Criterion 6: the splitting-experts invariants, all in exact arithmetic.
fn criterion_6() -> (bool, String) {
    let mut runs = 0u32;
    for d in [9u8, 16] {
        for seed in 0..10u64 {
            let class = Arc::new(
                HypothesisClass::lazy_random(d, HypothesisClass::default_bias_exp(d), seed)
                    .unwrap(),
            );
            let params = BalancedRatioParams::defaults_for(d);
            let seq = construct_sequence(&class, &params).unwrap();

            let mut games: Vec<(String, InstrumentedRun)> = Vec::new();
            let mut balanced =
                BalancedAdversary::with_sequence(&class, &params, seq.clone()).unwrap();
            games.push(("balanced".into(), play_instrumented(&class, &mut balanced, None)));
            // Three scripted adversaries that replay actual members, so the
            // games stay realizable and the consistent member is known.
            for member in [0u64, 3, 7] {
                let labels: Vec<Bit> = seq.iter().map(|&x| class.eval(member, x)).collect();
                let mut scripted =
                    ScriptedAdversary::new(seq.clone(), Labeling::Fixed(labels)).unwrap();
                games.push((
                    format!("member-{member}"),
                    play_instrumented(&class, &mut scripted, Some(member)),
                ));
            }

            for (name, run) in &games {
                let ctx = format!("d={d} seed={seed} adversary={name}");
                let trace = run.learner.trace().expect("instrumentation on");
                let genealogy = run.learner.genealogy();

                let consistent_count = |pool: &[transduct::learners::ExpertObs]| {
                    pool.iter()
                        .filter(|e| {
                            is_assumption_consistent(genealogy, e.id, &run.class, run.witness)
                        })
                        .count()
                };
                if consistent_count(&trace.initial_pool) != 1 {
                    return (false, format!("{ctx}: initial pool lacks a unique consistent expert"));
                }
                for (r, obs) in trace.rounds.iter().enumerate() {
                    let c = consistent_count(&obs.pool);
                    if c != 1 {
                        return (
                            false,
                            format!("{ctx}: round {}: {c} assumption-consistent experts", r + 1),
                        );
                    }
                }

                let mut prev = trace.initial_weight.clone();
                for (r, obs) in trace.rounds.iter().enumerate() {
                    if obs.yhat != obs.y {
                        // 4 * after <= 3 * before, exactly.
                        let cmp = Dyadic::scaled_cmp(
                            &BigUint::from(4u32),
                            &obs.pool_weight,
                            &BigUint::from(3u32),
                            &prev,
                        );
                        if cmp == std::cmp::Ordering::Greater {
                            return (
                                false,
                                format!("{ctx}: round {}: pool weight fell by less than 1/4", r + 1),
                            );
                        }
                    }
                    prev = obs.pool_weight.clone();
                }

                let pool = run.learner.pool();
                let survivor = pool
                    .iter()
                    .filter(|e| {
                        is_assumption_consistent(genealogy, e.id, &run.class, run.witness)
                    })
                    .collect::<Vec<_>>();
                let [star] = survivor.as_slice() else {
                    return (false, format!("{ctx}: final pool lacks a unique consistent expert"));
                };
                let floor = Dyadic::pow2_neg(2 * star.lineage_mistakes);
                if star.weight < floor {
                    return (
                        false,
                        format!(
                            "{ctx}: consistent expert weight {} < 4^-{}",
                            star.weight, star.lineage_mistakes
                        ),
                    );
                }
                let w_best = pool.iter().map(|e| e.weight.clone()).max().unwrap();
                if !posthoc_bound_holds(run.mistakes, &trace.initial_weight, &w_best) {
                    return (
                        false,
                        format!("{ctx}: {} mistakes exceed log_4/3(w0/w_best)", run.mistakes),
                    );
                }
                runs += 1;
            }
        }
    }
    (true, format!("{runs} instrumented runs, pool invariants exact"))
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        (values[k / 2 - 1] + values[k / 2]) / 2.0
    }
}

/// Criterion 7: trend report for the transductive learner against the
/// balanced adversary; gates only on the trivial sanity bound and the
/// post-hoc weight bound.
fn criterion_7() -> (bool, String) {
    let mut report = Vec::new();
    for d in [9u8, 16, 25] {
        let mut mistakes_all = Vec::new();
        for seed in 0..20u64 {
            let class = Arc::new(
                HypothesisClass::lazy_random(d, HypothesisClass::default_bias_exp(d), seed)
                    .unwrap(),
            );
            let params = BalancedRatioParams::defaults_for(d);
            let mut adv = BalancedAdversary::new(&class, &params).unwrap();
            let run = play_instrumented(&class, &mut adv, None);
            if run.mistakes > d as u64 {
                return (
                    false,
                    format!("d={d} seed={seed}: {} mistakes exceed d", run.mistakes),
                );
            }
            let w_best = run.learner.pool().iter().map(|e| e.weight.clone()).max().unwrap();
            let w0 = run.learner.trace().unwrap().initial_weight.clone();
            if !posthoc_bound_holds(run.mistakes, &w0, &w_best) {
                return (
                    false,
                    format!("d={d} seed={seed}: post-hoc weight bound violated"),
                );
            }
            mistakes_all.push(run.mistakes as f64);
        }
        let med = median(mistakes_all.clone());
        report.push(format!(
            "d={d}: median mistakes {med:.1}, median/sqrt(d) {:.3}",
            med / (d as f64).sqrt()
        ));
    }
    (true, report.join("; "))
}

/// A rigid scripted adversary over a left-spine sequence whose star tree
/// forces exactly `m` mistakes: stars cover every reachable history at the
/// chosen depths.
fn forcing_script(n: usize, star_depths: &[usize]) -> ScriptedAdversary {
    let seq: Vec<NodeId> = (0..n).map(|i| "0".repeat(i).parse().unwrap()).collect();
    let mut table = RigidTable::new(n).unwrap();
    // Reachable histories: label 0 everywhere except at star rounds, where
    // either bit may appear.
    let mut histories: Vec<Vec<Bit>> = vec![Vec::new()];
    for t in 0..*star_depths.iter().max().unwrap_or(&0) + 1 {
        if star_depths.contains(&t) {
            let mut next = Vec::new();
            for h in &histories {
                table.insert(h, Sym::Star).unwrap();
                for bit in [0, 1] {
                    let mut c = h.clone();
                    c.push(bit);
                    next.push(c);
                }
            }
            histories = next;
        } else {
            for h in &mut histories {
                h.push(0);
            }
        }
    }
    ScriptedAdversary::new(seq, Labeling::Rigid(table)).unwrap()
}

/// Criterion 8: minimalization keeps the forcing power of rigid scripts in
/// a subsequence of length at most 2^M - 1.
fn criterion_8() -> (bool, String) {
    let budget = OracleBudget::default();
    let mut notes = Vec::new();
    for (m, star_depths) in [(1u64, vec![0usize]), (2, vec![0, 7]), (3, vec![0, 5, 10])] {
        let adv = forcing_script(15, &star_depths);
        let forced = forced_mistakes(&adv, &budget).unwrap().value;
        if forced != m {
            return (false, format!("script m={m}: forces {forced}, expected {m}"));
        }
        let (sub, minimal) = minimalize(&adv, m).unwrap();
        let cap = (1u64 << m) - 1;
        if sub.len() as u64 > cap {
            return (false, format!("script m={m}: subsequence length {} > {cap}", sub.len()));
        }
        if minimal.essential_indices().len() as u64 > cap {
            return (
                false,
                format!(
                    "script m={m}: {} essential indices > {cap}",
                    minimal.essential_indices().len()
                ),
            );
        }
        let forced_min = forced_mistakes(&minimal, &budget).unwrap().value;
        if forced_min < m {
            return (
                false,
                format!("script m={m}: minimalized sequence forces only {forced_min}"),
            );
        }
        notes.push(format!("m={m}: 15 -> {} rounds, still forces {forced_min}", sub.len()));
    }
    (true, notes.join("; "))
}

/// Criterion 9: sweeps are byte-identical modulo wall_ms, across runs and
/// across parallelism degrees.
fn criterion_9() -> (bool, String) {
    let mut spec = SweepSpec::new(
        vec![3, 4],
        vec![0, 1, 2],
        vec!["halving".into(), "transductive".into(), "zero".into()],
        vec!["balanced".into(), "scripted:/nonexistent/criterion9".into()],
    );
    spec.n = Some(6);
    let first = mask_wall_ms(&csv_string(&run_sweep(&spec).unwrap()));
    let second = mask_wall_ms(&csv_string(&run_sweep(&spec).unwrap()));
    spec.parallelism = 8;
    let parallel = mask_wall_ms(&csv_string(&run_sweep(&spec).unwrap()));
    if first != second {
        return (false, "two identical runs differ beyond wall_ms".into());
    }
    if first != parallel {
        return (false, "parallelism 1 vs 8 differ beyond wall_ms".into());
    }
    let rows = first.lines().count() - 1;
    (true, format!("{rows} rows identical across reruns and parallelism 1 vs 8"))
}

/// Criterion 10: the seeded class has ldim d + 1 at small depth, and its
/// on-path labels shatter at every depth up to 25.
fn criterion_10() -> (bool, String) {
    for d in 1u8..=4 {
        for seed in 0..3u64 {
            let class =
                HypothesisClass::lazy_random(d, HypothesisClass::default_bias_exp(d), seed)
                    .unwrap();
            let domain: Vec<NodeId> = class.tree().bfs_nodes().collect();
            let vs = VersionSpace::full(&class).unwrap();
            let dim = ldim(&class, &vs, &domain).unwrap();
            if dim != d as u32 + 1 {
                return (false, format!("d={d} seed={seed}: ldim {dim} != {}", d + 1));
            }
        }
    }
    for d in 1u8..=25 {
        for seed in 0..5u64 {
            let class =
                HypothesisClass::lazy_random(d, HypothesisClass::default_bias_exp(d), seed)
                    .unwrap();
            if !class.onpath_shattering_holds() {
                return (false, format!("d={d} seed={seed}: on-path shattering fails"));
            }
        }
    }
    (true, "ldim = d+1 for d <= 4; on-path shattering exact for d <= 25, 5 seeds".into())
}

#[test]
fn acceptance() {
    let mut batteries = Vec::new();
    let mut shrink_logs = Vec::new();
    let results: Vec<(&str, (bool, String))> = vec![
        ("littlestone equality", criterion_1(&mut batteries)),
        ("transductive <= standard", criterion_2(&batteries)),
        ("halving bound", criterion_3(&mut shrink_logs)),
        ("lower-bound mechanics", criterion_4()),
        ("version-space shrinkage", criterion_5(&shrink_logs)),
        ("splitting-experts invariants", criterion_6()),
        ("upper-bound trend", criterion_7()),
        ("minimal sequence", criterion_8()),
        ("sweep determinism", criterion_9()),
        ("class construction", criterion_10()),
    ];
    let mut failed = 0;
    for (i, (name, (ok, detail))) in results.iter().enumerate() {
        println!(
            "criterion {:2}: {} - {name}: {detail}",
            i + 1,
            if *ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed += 1;
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
