//! Sweep grid runner and bit-exact result emission. Cells are independent
//! games; a worker pool runs them in any order and a final sort restores a
//! canonical row order, so identical specs produce identical CSV bytes
//! except for the wall_ms column.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::adversaries::{
    construct_sequence, parse_scripted, BalancedAdversary, BalancedRatioParams,
    LittlestoneAdversary, Ratio,
};
use crate::engine::{
    play_standard, play_transductive, LearnerStrategy, RealizabilityMode, StandardAdversary,
    TransductiveAdversary, Transcript,
};
use crate::error::{Error, Result};
use crate::hypotheses::HypothesisClass;
use crate::learners::{
    AlwaysOne, AlwaysZero, HalvingLearner, LazyConsistent, SeededRandom, SoaLearner,
    TransductiveExpertsLearner, TransductiveParams,
};
use crate::treebits::NodeId;

pub const CSV_HEADER: &str = "d,seed,learner,adversary,n,mistakes,forced,sqrt_d,ratio,wall_ms,error";

pub const LEARNER_NAMES: &[&str] =
    &["halving", "soa", "transductive", "zero", "one", "random", "lazy"];

/// A grid of games: every (d, seed, learner, adversary) combination is one
/// cell, repeated `repetitions` times (repeats differ only in wall_ms and
/// exist for timing studies).
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub d_values: Vec<u8>,
    pub seeds: Vec<u64>,
    pub learners: Vec<String>,
    pub adversaries: Vec<String>,
    pub repetitions: u32,
    pub parallelism: usize,
    /// Round count override: truncates balanced sequences, sets the horizon
    /// for standard games (which otherwise run d rounds).
    pub n: Option<usize>,
    /// Class off-path bias exponent; default round(sqrt(d)).
    pub bias_exp: Option<u32>,
    pub epsilon: Option<Ratio>,
    /// Branching budget M for the balanced sequence construction.
    pub budget: Option<u64>,
    pub tmax: Option<usize>,
    pub halving_threshold: Option<u64>,
    pub expert_cap: Option<usize>,
    /// Trusted by default: per-round realizability audits re-scan the whole
    /// class and dominate large-d sweeps.
    pub mode: RealizabilityMode,
    pub out: Option<PathBuf>,
}

impl SweepSpec {
    pub fn new(
        d_values: Vec<u8>,
        seeds: Vec<u64>,
        learners: Vec<String>,
        adversaries: Vec<String>,
    ) -> SweepSpec {
        SweepSpec {
            d_values,
            seeds,
            learners,
            adversaries,
            repetitions: 1,
            parallelism: 1,
            n: None,
            bias_exp: None,
            epsilon: None,
            budget: None,
            tmax: None,
            halving_threshold: None,
            expert_cap: None,
            mode: RealizabilityMode::Trusted,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_values.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidParameter(
                "sweep needs at least one d and one seed".into(),
            ));
        }
        if self.learners.is_empty() || self.adversaries.is_empty() {
            return Err(Error::InvalidParameter(
                "sweep needs at least one learner and one adversary".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be positive".into()));
        }
        for name in &self.learners {
            if !LEARNER_NAMES.contains(&name.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "unknown learner '{name}' (expected one of {})",
                    LEARNER_NAMES.join("|")
                )));
            }
        }
        for name in &self.adversaries {
            adversary_kind(name)?;
        }
        Ok(())
    }
}

enum AdversaryKind<'a> {
    Balanced,
    Littlestone,
    Scripted(&'a str),
}

fn adversary_kind(name: &str) -> Result<AdversaryKind<'_>> {
    match name {
        "balanced" => Ok(AdversaryKind::Balanced),
        "littlestone" => Ok(AdversaryKind::Littlestone),
        _ => match name.strip_prefix("scripted:") {
            Some(path) if !path.is_empty() => Ok(AdversaryKind::Scripted(path)),
            _ => Err(Error::InvalidParameter(format!(
                "unknown adversary '{name}' (expected balanced|littlestone|scripted:<file>)"
            ))),
        },
    }
}

/// One emitted line of a sweep. Error cells keep the identifying columns
/// and zero the measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub d: u8,
    pub seed: u64,
    pub learner: String,
    pub adversary: String,
    pub n: usize,
    pub mistakes: u64,
    pub forced: u64,
    pub sqrt_d: f64,
    pub ratio: f64,
    pub wall_ms: u64,
    pub error: String,
}

/// Options threaded to learners that take them; the rest ignore them.
#[derive(Clone, Copy, Debug, Default)]
pub struct LearnerOptions {
    pub tmax: Option<usize>,
    pub halving_threshold: Option<u64>,
    pub expert_cap: Option<usize>,
}

/// The learner registry: every name in LEARNER_NAMES constructs here.
/// `domain` feeds ldim-based learners; `seed` feeds randomized ones.
pub fn build_learner(
    name: &str,
    class: &Arc<HypothesisClass>,
    opts: LearnerOptions,
    seed: u64,
    domain: &[NodeId],
) -> Result<Box<dyn LearnerStrategy>> {
    Ok(match name {
        "halving" => Box::new(HalvingLearner::new(Arc::clone(class))?),
        "soa" => Box::new(SoaLearner::new(Arc::clone(class), domain.to_vec())?),
        "transductive" => Box::new(TransductiveExpertsLearner::new(
            Arc::clone(class),
            TransductiveParams {
                tmax: opts.tmax,
                halving_threshold: opts.halving_threshold,
                expert_cap: opts.expert_cap.unwrap_or(TransductiveParams::default().expert_cap),
                instrument: false,
            },
        )),
        "zero" => Box::new(AlwaysZero),
        "one" => Box::new(AlwaysOne),
        "random" => Box::new(SeededRandom::new(seed)),
        "lazy" => Box::new(LazyConsistent::new(Arc::clone(class))?),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "unknown learner '{name}' (expected one of {})",
                LEARNER_NAMES.join("|")
            )));
        }
    })
}

fn learner_options(spec: &SweepSpec) -> LearnerOptions {
    LearnerOptions {
        tmax: spec.tmax,
        halving_threshold: spec.halving_threshold,
        expert_cap: spec.expert_cap,
    }
}

fn balanced_params(spec: &SweepSpec, d: u8) -> BalancedRatioParams {
    let mut params = BalancedRatioParams::defaults_for(d);
    if let Some(eps) = spec.epsilon {
        params.epsilon = eps;
    }
    if let Some(m) = spec.budget {
        params.budget = m;
    }
    params
}

/// Deduplicated, sorted instance list a standard game or ldim computation
/// ranges over.
fn sorted_domain(nodes: &[NodeId]) -> Vec<NodeId> {
    let mut domain: Vec<NodeId> = nodes.to_vec();
    domain.sort();
    domain.dedup();
    domain
}

fn play_cell(
    spec: &SweepSpec,
    d: u8,
    seed: u64,
    learner_name: &str,
    adversary_name: &str,
) -> Result<(usize, u64, u64)> {
    let bias = spec.bias_exp.unwrap_or(HypothesisClass::default_bias_exp(d));
    let class = Arc::new(HypothesisClass::lazy_random(d, bias, seed)?);
    match adversary_kind(adversary_name)? {
        AdversaryKind::Balanced => {
            let params = balanced_params(spec, d);
            let mut seq = construct_sequence(&class, &params)?;
            if let Some(n) = spec.n {
                seq.truncate(n);
            }
            let mut adv = BalancedAdversary::with_sequence(&class, &params, seq)?;
            let n = adv.sequence().len();
            let mut learner =
                build_learner(learner_name, &class, learner_options(spec), seed, &sorted_domain(adv.sequence()))?;
            let t = play_transductive(&class, learner.as_mut(), &mut adv, n, spec.mode)?;
            Ok((n, t.mistakes, adv.forced_count()))
        }
        AdversaryKind::Scripted(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_with_path(path.as_ref(), e))?;
            let mut adv = parse_scripted(&text)?;
            let n = adv.sequence().len();
            let mut learner =
                build_learner(learner_name, &class, learner_options(spec), seed, &sorted_domain(adv.sequence()))?;
            let t = play_transductive(&class, learner.as_mut(), &mut adv, n, spec.mode)?;
            Ok((n, t.mistakes, adv.forced_count()))
        }
        AdversaryKind::Littlestone => {
            let domain: Vec<NodeId> = class.tree().bfs_nodes().collect();
            let mut adv = LittlestoneAdversary::new(&class, domain.clone())?;
            let n = spec.n.unwrap_or(d as usize);
            let mut learner = build_learner(learner_name, &class, learner_options(spec), seed, &domain)?;
            let t = play_standard(&class, learner.as_mut(), &mut adv, n, spec.mode)?;
            Ok((n, t.mistakes, adv.forced_count()))
        }
    }
}

/// Error text flattened for the CSV error column: one line, no commas.
fn csv_safe(msg: &str) -> String {
    msg.replace(['\n', '\r'], " ").replace(',', ";")
}

fn run_cell(
    spec: &SweepSpec,
    d: u8,
    seed: u64,
    learner: &str,
    adversary: &str,
) -> ResultRow {
    let start = Instant::now();
    let outcome = play_cell(spec, d, seed, learner, adversary);
    let wall_ms = start.elapsed().as_millis() as u64;
    let sqrt_d = (d as f64).sqrt();
    match outcome {
        Ok((n, mistakes, forced)) => ResultRow {
            d,
            seed,
            learner: learner.to_string(),
            adversary: adversary.to_string(),
            n,
            mistakes,
            forced,
            sqrt_d,
            ratio: mistakes as f64 / sqrt_d,
            wall_ms,
            error: String::new(),
        },
        Err(e) => ResultRow {
            d,
            seed,
            learner: learner.to_string(),
            adversary: adversary.to_string(),
            n: 0,
            mistakes: 0,
            forced: 0,
            sqrt_d,
            ratio: 0.0,
            wall_ms,
            error: csv_safe(&e.to_string()),
        },
    }
}

/// Run every cell of the grid. Cell failures become error rows; the sweep
/// itself fails only on an invalid spec or an unbuildable worker pool.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut cells: Vec<(u8, u64, &str, &str)> = Vec::new();
    for _ in 0..spec.repetitions {
        for &d in &spec.d_values {
            for &seed in &spec.seeds {
                for learner in &spec.learners {
                    for adversary in &spec.adversaries {
                        cells.push((d, seed, learner, adversary));
                    }
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let mut rows: Vec<ResultRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, seed, learner, adversary)| run_cell(spec, d, seed, learner, adversary))
            .collect()
    });
    // Stable sort: repeated cells stay adjacent in submission order.
    rows.sort_by(|a, b| {
        (a.d, a.seed, &a.learner, &a.adversary).cmp(&(b.d, b.seed, &b.learner, &b.adversary))
    });
    Ok(rows)
}

pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.6},{:.6},{},{}\n",
            r.d,
            r.seed,
            r.learner,
            r.adversary,
            r.n,
            r.mistakes,
            r.forced,
            r.sqrt_d,
            r.ratio,
            r.wall_ms,
            r.error
        ));
    }
    out
}

fn io_with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    fs::write(path, csv_string(rows)).map_err(|e| io_with_path(path, e))
}

pub fn emit_transcript_json(transcript: &Transcript, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(transcript)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_with_path(path, e))
}

pub fn read_transcript_json(path: &Path) -> Result<Transcript> {
    let text = fs::read_to_string(path).map_err(|e| io_with_path(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Blank out the wall_ms column of an emitted CSV, for determinism
/// comparisons. Wall time is the one legitimately nondeterministic field.
pub fn mask_wall_ms(csv: &str) -> String {
    let mut out = String::with_capacity(csv.len());
    for (i, line) in csv.lines().enumerate() {
        if i == 0 || line.is_empty() {
            out.push_str(line);
        } else {
            let fields: Vec<&str> = line.split(',').collect();
            for (j, f) in fields.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(if j == 9 { "-" } else { f });
            }
        }
        out.push('\n');
    }
    out
}

/// Flat key=value config: '#' comments and blank lines skipped, later keys
/// override earlier ones.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse(format!(
                "config line {}: expected key=value, got '{line}'",
                i + 1
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// File settings overlaid with CLI settings; the CLI wins.
pub fn apply_overrides(
    mut base: BTreeMap<String, String>,
    overrides: BTreeMap<String, String>,
) -> BTreeMap<String, String> {
    base.extend(overrides);
    base
}

/// "3,7..10,12" -> [3,7,8,9,12]; ranges are half-open.
pub fn parse_u64_list(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        if let Some((a, b)) = item.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad_list_item(item))?;
            let b: u64 = b.trim().parse().map_err(|_| bad_list_item(item))?;
            out.extend(a..b);
        } else {
            out.push(item.parse().map_err(|_| bad_list_item(item))?);
        }
    }
    Ok(out)
}

fn bad_list_item(item: &str) -> Error {
    Error::Parse(format!("expected integer or a..b range, got '{item}'"))
}

pub fn parse_u8_list(text: &str) -> Result<Vec<u8>> {
    parse_u64_list(text)?
        .into_iter()
        .map(|v| {
            u8::try_from(v).map_err(|_| Error::Parse(format!("depth {v} does not fit in u8")))
        })
        .collect()
}

fn parse_str_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

const SPEC_KEYS: &[&str] = &[
    "d", "seeds", "learners", "adversaries", "reps", "parallelism", "n", "bias_exp",
    "epsilon", "budget", "tmax", "halving_threshold", "expert_cap", "mode", "out",
];

/// Build a sweep from resolved settings. Unknown keys are rejected so a
/// typo'd config fails loudly instead of silently using a default.
pub fn spec_from_map(map: &BTreeMap<String, String>) -> Result<SweepSpec> {
    for key in map.keys() {
        if !SPEC_KEYS.contains(&key.as_str()) {
            return Err(Error::Parse(format!(
                "unknown setting '{key}' (expected one of {})",
                SPEC_KEYS.join("|")
            )));
        }
    }
    let get = |k: &str| map.get(k).map(String::as_str);
    let mut spec = SweepSpec::new(
        parse_u8_list(get("d").unwrap_or(""))?,
        parse_u64_list(get("seeds").unwrap_or(""))?,
        parse_str_list(get("learners").unwrap_or("")),
        parse_str_list(get("adversaries").unwrap_or("")),
    );
    if let Some(v) = get("reps") {
        spec.repetitions =
            v.parse().map_err(|_| Error::Parse(format!("reps: expected integer, got '{v}'")))?;
    }
    if let Some(v) = get("parallelism") {
        spec.parallelism = v
            .parse()
            .map_err(|_| Error::Parse(format!("parallelism: expected integer, got '{v}'")))?;
    }
    if let Some(v) = get("n") {
        spec.n =
            Some(v.parse().map_err(|_| Error::Parse(format!("n: expected integer, got '{v}'")))?);
    }
    if let Some(v) = get("bias_exp") {
        spec.bias_exp = Some(
            v.parse().map_err(|_| Error::Parse(format!("bias_exp: expected integer, got '{v}'")))?,
        );
    }
    if let Some(v) = get("epsilon") {
        spec.epsilon = Some(v.parse()?);
    }
    if let Some(v) = get("budget") {
        spec.budget = Some(
            v.parse().map_err(|_| Error::Parse(format!("budget: expected integer, got '{v}'")))?,
        );
    }
    if let Some(v) = get("tmax") {
        spec.tmax = Some(
            v.parse().map_err(|_| Error::Parse(format!("tmax: expected integer, got '{v}'")))?,
        );
    }
    if let Some(v) = get("halving_threshold") {
        spec.halving_threshold = Some(v.parse().map_err(|_| {
            Error::Parse(format!("halving_threshold: expected integer, got '{v}'"))
        })?);
    }
    if let Some(v) = get("expert_cap") {
        spec.expert_cap = Some(
            v.parse()
                .map_err(|_| Error::Parse(format!("expert_cap: expected integer, got '{v}'")))?,
        );
    }
    if let Some(v) = get("mode") {
        spec.mode = match v {
            "strict" => RealizabilityMode::Strict,
            "trusted" => RealizabilityMode::Trusted,
            _ => {
                return Err(Error::Parse(format!(
                    "mode: expected strict or trusted, got '{v}'"
                )))
            }
        };
    }
    if let Some(v) = get("out") {
        spec.out = Some(PathBuf::from(v));
    }
    Ok(spec)
}
