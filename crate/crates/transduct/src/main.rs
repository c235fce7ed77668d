use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::exit;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use transduct::adversaries::{
    construct_sequence, parse_scripted, BalancedAdversary, BalancedRatioParams,
    LittlestoneAdversary, Ratio,
};
use transduct::engine::{
    play_standard, play_transductive, RealizabilityMode, StandardAdversary,
    TransductiveAdversary,
};
use transduct::harness::{
    apply_overrides, build_learner, csv_string, emit_csv, emit_transcript_json, parse_config,
    run_sweep, spec_from_map, LearnerOptions,
};
use transduct::hypotheses::{ldim, HypothesisClass, VersionSpace};
use transduct::oracle::{
    forced_mistakes, std_value, trans_value, trans_value_fixed_seq, OracleBudget, OracleOutcome,
};
use transduct::seqmin::{minimalize, rigidify};
use transduct::treebits::NodeId;
use transduct::{Error, Result};

#[derive(Parser)]
#[command(name = "transduct", version, about = "Online learning games on binary trees: play, sweep, and verify against exact oracles")]
struct Cli {
    /// Seed for lazily generated classes and seeded learners.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Referee re-checks realizability every round (default for play).
    #[arg(long, global = true, conflicts_with = "trusted")]
    strict: bool,

    /// Referee trusts the adversary (default for sweep; much faster).
    #[arg(long, global = true)]
    trusted: bool,

    /// Output path (CSV for sweep, transcript JSON for play, class table
    /// for gen-class). Defaults to stdout where it makes sense.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Flat key=value settings file; explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Play one game and report mistakes and forced rounds.
    Play(PlayArgs),
    /// Run a (d, seed, learner, adversary) grid and emit CSV.
    Sweep(SweepArgs),
    /// Exact minimax game values by exhaustive search.
    Oracle(OracleArgs),
    /// Rigidify an adversary, extract essential rounds, verify the
    /// minimalized subsequence still forces the same mistakes.
    Minseq(MinseqArgs),
    /// Materialize a lazily generated class to an explicit table.
    GenClass(GenClassArgs),
    /// Littlestone dimension of a class over a domain.
    Ldim(LdimArgs),
}

#[derive(Args)]
struct PlayArgs {
    /// random:<d>[:<bias>[:<seed>]] | explicit:<path> | full:<k>
    #[arg(long)]
    class: String,
    /// halving | soa | transductive | zero | one | random | lazy
    #[arg(long)]
    learner: String,
    /// balanced | littlestone | scripted:<file>
    #[arg(long)]
    adversary: String,
    /// Rounds: truncates balanced sequences, sets the standard horizon.
    #[arg(long)]
    n: Option<usize>,
    /// Balanced-window half width, e.g. 1/4 or 0.25.
    #[arg(long)]
    epsilon: Option<Ratio>,
    /// Branching budget M of the balanced sequence construction.
    #[arg(long)]
    budget: Option<u64>,
    /// Danger-zone horizon of the transductive learner.
    #[arg(long)]
    tmax: Option<usize>,
    /// Version-space size at which experts fall back to halving.
    #[arg(long)]
    halving_threshold: Option<u64>,
    /// Abort if the expert pool ever exceeds this size.
    #[arg(long)]
    expert_cap: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Depths, e.g. 9,16,25.
    #[arg(long)]
    d: Option<String>,
    /// Seeds, e.g. 0..20 or 1,5,7.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated learner names.
    #[arg(long)]
    learners: Option<String>,
    /// Comma-separated adversary names.
    #[arg(long)]
    adversaries: Option<String>,
    /// Repetitions of the whole grid.
    #[arg(long)]
    reps: Option<u32>,
    /// Worker threads; results are order-stable regardless.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Rounds: truncates balanced sequences, sets the standard horizon.
    #[arg(long)]
    n: Option<usize>,
    /// Root-bias exponent of the generated classes.
    #[arg(long)]
    bias_exp: Option<u32>,
    /// Balanced-window half width, e.g. 1/4 or 0.25.
    #[arg(long)]
    epsilon: Option<String>,
    /// Branching budget M of the balanced sequence construction.
    #[arg(long)]
    budget: Option<u64>,
    /// Danger-zone horizon of the transductive learner.
    #[arg(long)]
    tmax: Option<usize>,
    /// Version-space size at which experts fall back to halving.
    #[arg(long)]
    halving_threshold: Option<u64>,
    /// Abort if the expert pool ever exceeds this size.
    #[arg(long)]
    expert_cap: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    /// std | trans | trans-fixed | forced
    #[arg(long)]
    mode: String,
    /// Class spec; required for std, trans, trans-fixed, and balanced forced.
    #[arg(long)]
    class: Option<String>,
    /// Instance pool for std/trans: comma-separated nodes, or "all".
    #[arg(long)]
    domain: Option<String>,
    /// Announced sequence for trans-fixed: comma-separated nodes.
    #[arg(long)]
    sequence: Option<String>,
    /// Horizon for std/trans.
    #[arg(long)]
    n: Option<usize>,
    /// Adversary for forced mode: balanced | scripted:<file>.
    #[arg(long)]
    adversary: Option<String>,
    /// Balanced-window half width, e.g. 1/4 or 0.25.
    #[arg(long)]
    epsilon: Option<Ratio>,
    /// Branching budget M of the balanced sequence construction.
    #[arg(long)]
    budget: Option<u64>,
    /// Refuse classes larger than this.
    #[arg(long)]
    max_hypotheses: Option<u64>,
    /// Refuse domains larger than this.
    #[arg(long)]
    max_domain: Option<usize>,
    /// Refuse horizons longer than this for std/trans.
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Abort after this many search-node expansions.
    #[arg(long)]
    max_nodes: Option<u64>,
}

#[derive(Args)]
struct MinseqArgs {
    /// balanced | scripted:<file>
    #[arg(long)]
    adversary: String,
    /// Class spec (required for balanced).
    #[arg(long)]
    class: Option<String>,
    /// Star budget: probing stops after this many prediction-dependent rounds.
    #[arg(long, alias = "M")]
    m: u64,
    /// Balanced-window half width, e.g. 1/4 or 0.25.
    #[arg(long)]
    epsilon: Option<Ratio>,
    /// Branching budget M of the balanced sequence construction.
    #[arg(long)]
    budget: Option<u64>,
    /// Abort after this many search-node expansions.
    #[arg(long)]
    max_nodes: Option<u64>,
}

#[derive(Args)]
struct GenClassArgs {
    /// Tree depth (at most 12 for explicit tables).
    #[arg(long)]
    d: u8,
    /// Off-path bias exponent; default round(sqrt(d)).
    #[arg(long)]
    bias_exp: Option<u32>,
}

#[derive(Args)]
struct LdimArgs {
    /// random:<d>[:<bias>[:<seed>]] | explicit:<path> | full:<k>
    #[arg(long)]
    class: String,
    /// Comma-separated nodes, or "all" (default) for the whole tree.
    #[arg(long)]
    domain: Option<String>,
}

fn main() {
    // Die quietly when the reader of a pipe goes away (e.g. | head).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            exit(code);
        }
    };
    match run(cli) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Cmd::Play(args) => cmd_play(&cli, args),
        Cmd::Sweep(args) => cmd_sweep(&cli, args),
        Cmd::Oracle(args) => cmd_oracle(&cli, args),
        Cmd::Minseq(args) => cmd_minseq(&cli, args),
        Cmd::GenClass(args) => cmd_gen_class(&cli, args),
        Cmd::Ldim(args) => cmd_ldim(&cli, args),
    }
}

/// random:<d>[:<bias>[:<seed>]] | explicit:<path> | full:<k>
fn parse_class(spec: &str, default_seed: u64) -> Result<Arc<HypothesisClass>> {
    let bad = || {
        Error::InvalidParameter(format!(
            "class '{spec}': expected random:<d>[:<bias>[:<seed>]], explicit:<path>, or full:<k>"
        ))
    };
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    let class = match kind {
        "random" => {
            let mut parts = rest.split(':');
            let d: u8 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let bias = match parts.next() {
                Some(p) => p.parse().map_err(|_| bad())?,
                None => HypothesisClass::default_bias_exp(d),
            };
            let seed = match parts.next() {
                Some(p) => p.parse().map_err(|_| bad())?,
                None => default_seed,
            };
            if parts.next().is_some() {
                return Err(bad());
            }
            HypothesisClass::lazy_random(d, bias, seed)?
        }
        "explicit" => {
            let file = fs::File::open(rest)
                .map_err(|e| Error::InvalidParameter(format!("class file {rest}: {e}")))?;
            HypothesisClass::read_explicit_table(&mut BufReader::new(file))?
        }
        "full" => {
            let k: usize = rest.parse().map_err(|_| bad())?;
            if k == 0 || k > 16 {
                return Err(Error::InvalidParameter(format!(
                    "full:<k> supports 1..=16 points, got {k}"
                )));
            }
            // Smallest tree that has k nodes.
            let mut d = 0u8;
            while ((1u64 << (d + 1)) - 1) < k as u64 {
                d += 1;
            }
            let tree = transduct::treebits::Tree::new(d)?;
            let points: Vec<NodeId> = tree.bfs_nodes().take(k).collect();
            HypothesisClass::all_functions(d, &points)?
        }
        _ => return Err(bad()),
    };
    Ok(Arc::new(class))
}

/// Comma-separated node list; an empty field is the root.
fn parse_nodes(text: &str) -> Result<Vec<NodeId>> {
    text.split(',').map(|s| s.trim().parse()).collect()
}

fn parse_domain(text: Option<&str>, class: &HypothesisClass) -> Result<Vec<NodeId>> {
    match text {
        None | Some("all") => Ok(class.tree().bfs_nodes().collect()),
        Some(list) => parse_nodes(list),
    }
}

fn mode_for(cli: &Cli, default: RealizabilityMode) -> RealizabilityMode {
    if cli.strict {
        RealizabilityMode::Strict
    } else if cli.trusted {
        RealizabilityMode::Trusted
    } else {
        default
    }
}

fn balanced_params(
    d: u8,
    epsilon: Option<Ratio>,
    budget: Option<u64>,
) -> BalancedRatioParams {
    let mut params = BalancedRatioParams::defaults_for(d);
    if let Some(eps) = epsilon {
        params.epsilon = eps;
    }
    if let Some(m) = budget {
        params.budget = m;
    }
    params
}

fn cmd_play(cli: &Cli, args: &PlayArgs) -> Result<i32> {
    let class = parse_class(&args.class, cli.seed)?;
    let d = class.depth();
    let mode = mode_for(cli, RealizabilityMode::Strict);
    let opts = LearnerOptions {
        tmax: args.tmax,
        halving_threshold: args.halving_threshold,
        expert_cap: args.expert_cap,
    };

    let (transcript, forced) = if args.adversary == "littlestone" {
        let domain: Vec<NodeId> = class.tree().bfs_nodes().collect();
        let mut adv = LittlestoneAdversary::new(&class, domain.clone())?;
        let n = args.n.unwrap_or(d as usize);
        let mut learner = build_learner(&args.learner, &class, opts, cli.seed, &domain)?;
        let t = play_standard(&class, learner.as_mut(), &mut adv, n, mode)?;
        (t, adv.forced_count())
    } else {
        let mut adv: Box<dyn TransductiveAdversary> = if args.adversary == "balanced" {
            let params = balanced_params(d, args.epsilon, args.budget);
            let mut seq = construct_sequence(&class, &params)?;
            if let Some(n) = args.n {
                seq.truncate(n);
            }
            Box::new(BalancedAdversary::with_sequence(&class, &params, seq)?)
        } else if let Some(path) = args.adversary.strip_prefix("scripted:") {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidParameter(format!("script {path}: {e}")))?;
            Box::new(parse_scripted(&text)?)
        } else {
            return Err(Error::InvalidParameter(format!(
                "unknown adversary '{}' (expected balanced|littlestone|scripted:<file>)",
                args.adversary
            )));
        };
        let seq = adv.sequence().to_vec();
        let mut learner = build_learner(&args.learner, &class, opts, cli.seed, &seq)?;
        let n = seq.len();
        let t = play_transductive(&class, learner.as_mut(), adv.as_mut(), n, mode)?;
        (t, adv.forced_count())
    };

    println!("setting: {:?}", transcript.setting);
    println!("d: {d}");
    println!("n: {}", transcript.rounds.len());
    println!("mistakes: {}", transcript.mistakes);
    println!("forced: {forced}");
    if let Some(path) = &cli.out {
        emit_transcript_json(&transcript, path)?;
        println!("transcript: {}", path.display());
    }
    Ok(0)
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Result<i32> {
    let mut settings = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => BTreeMap::new(),
    };

    let mut flags = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            flags.insert(k.to_string(), v);
        }
    };
    put("d", args.d.clone());
    put("seeds", args.seeds.clone());
    put("learners", args.learners.clone());
    put("adversaries", args.adversaries.clone());
    put("reps", args.reps.map(|v| v.to_string()));
    put("parallelism", args.parallelism.map(|v| v.to_string()));
    put("n", args.n.map(|v| v.to_string()));
    put("bias_exp", args.bias_exp.map(|v| v.to_string()));
    put("epsilon", args.epsilon.clone());
    put("budget", args.budget.map(|v| v.to_string()));
    put("tmax", args.tmax.map(|v| v.to_string()));
    put("halving_threshold", args.halving_threshold.map(|v| v.to_string()));
    put("expert_cap", args.expert_cap.map(|v| v.to_string()));
    if cli.strict {
        flags.insert("mode".to_string(), "strict".to_string());
    } else if cli.trusted {
        flags.insert("mode".to_string(), "trusted".to_string());
    }
    if let Some(path) = &cli.out {
        flags.insert("out".to_string(), path.display().to_string());
    }

    settings = apply_overrides(settings, flags);
    let spec = spec_from_map(&settings)?;
    let rows = run_sweep(&spec)?;
    match &spec.out {
        Some(path) => {
            emit_csv(&rows, path)?;
            eprintln!("{} rows -> {}", rows.len(), path.display());
        }
        None => print!("{}", csv_string(&rows)),
    }
    Ok(0)
}

fn oracle_budget(args: &OracleArgs) -> OracleBudget {
    let mut budget = OracleBudget::default();
    if let Some(v) = args.max_hypotheses {
        budget.max_hypotheses = v;
    }
    if let Some(v) = args.max_domain {
        budget.max_domain = v;
    }
    if let Some(v) = args.max_rounds {
        budget.max_rounds = v;
    }
    if let Some(v) = args.max_nodes {
        budget.max_nodes_expanded = v;
    }
    budget
}

fn require<'a, T>(opt: &'a Option<T>, what: &str, mode: &str) -> Result<&'a T> {
    opt.as_ref().ok_or_else(|| {
        Error::InvalidParameter(format!("oracle mode '{mode}' requires --{what}"))
    })
}

fn cmd_oracle(cli: &Cli, args: &OracleArgs) -> Result<i32> {
    let budget = oracle_budget(args);
    let outcome: OracleOutcome = match args.mode.as_str() {
        "std" | "trans" => {
            let class = parse_class(require(&args.class, "class", &args.mode)?, cli.seed)?;
            let domain = parse_domain(args.domain.as_deref(), &class)?;
            let n = *require(&args.n, "n", &args.mode)?;
            if args.mode == "std" {
                std_value(&class, &domain, n, &budget)?
            } else {
                trans_value(&class, &domain, n, &budget)?
            }
        }
        "trans-fixed" => {
            let class = parse_class(require(&args.class, "class", "trans-fixed")?, cli.seed)?;
            let seq = parse_nodes(require(&args.sequence, "sequence", "trans-fixed")?)?;
            trans_value_fixed_seq(&class, &seq, &budget)?
        }
        "forced" => {
            let name = require(&args.adversary, "adversary", "forced")?;
            let adv: Box<dyn TransductiveAdversary> = if name == "balanced" {
                let class = parse_class(require(&args.class, "class", "forced")?, cli.seed)?;
                let params = balanced_params(class.depth(), args.epsilon, args.budget);
                Box::new(BalancedAdversary::new(&class, &params)?)
            } else if let Some(path) = name.strip_prefix("scripted:") {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::InvalidParameter(format!("script {path}: {e}")))?;
                Box::new(parse_scripted(&text)?)
            } else {
                return Err(Error::InvalidParameter(format!(
                    "forced mode wants balanced or scripted:<file>, got '{name}'"
                )));
            };
            forced_mistakes(adv.as_ref(), &budget)?
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown oracle mode '{other}' (expected std|trans|trans-fixed|forced)"
            )))
        }
    };
    println!("value: {}", outcome.value);
    println!("nodes expanded: {}", outcome.nodes);
    Ok(0)
}

/// Horizon above which exact forced-mistake search is not attempted.
const FORCED_SEARCH_MAX_ROUNDS: usize = 22;

fn cmd_minseq(cli: &Cli, args: &MinseqArgs) -> Result<i32> {
    let adv: Box<dyn TransductiveAdversary> = if args.adversary == "balanced" {
        let class = parse_class(
            args.class.as_deref().ok_or_else(|| {
                Error::InvalidParameter("minseq over balanced requires --class".into())
            })?,
            cli.seed,
        )?;
        let params = balanced_params(class.depth(), args.epsilon, args.budget);
        Box::new(BalancedAdversary::new(&class, &params)?)
    } else if let Some(path) = args.adversary.strip_prefix("scripted:") {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("script {path}: {e}")))?;
        Box::new(parse_scripted(&text)?)
    } else {
        return Err(Error::InvalidParameter(format!(
            "minseq wants balanced or scripted:<file>, got '{}'",
            args.adversary
        )));
    };

    let n = adv.sequence().len();
    let (_, table) = rigidify(adv.as_ref(), args.m)?;
    let (sub, minimal) = minimalize(adv.as_ref(), args.m)?;

    println!("rounds: {n}");
    println!("star budget m: {}", args.m);
    println!("rigid table ({} entries, {} stars):", table.len(), table.star_count());
    for (history, sym) in table.entries() {
        let key = if history.is_empty() {
            "(empty)".to_string()
        } else {
            history.iter().map(|b| char::from(b'0' + b)).collect()
        };
        println!("  {key} = {sym}");
    }
    let essential = minimal.essential_indices();
    println!(
        "essential rounds: {}",
        if essential.is_empty() {
            "(none)".to_string()
        } else {
            essential.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
        }
    );
    println!(
        "subsequence ({} of {n}): {}",
        sub.len(),
        sub.iter().map(|x| format!("[{x}]")).collect::<Vec<_>>().join(",")
    );

    let cap = (1u64 << args.m.min(62)) - 1;
    let len_ok = sub.len() as u64 <= cap;
    println!(
        "length bound: {} <= 2^{} - 1 = {cap}: {}",
        sub.len(),
        args.m,
        if len_ok { "ok" } else { "VIOLATED" }
    );

    let mut budget = OracleBudget::default();
    if let Some(v) = args.max_nodes {
        budget.max_nodes_expanded = v;
    }
    let forced_original = if n <= FORCED_SEARCH_MAX_ROUNDS {
        match forced_mistakes(adv.as_ref(), &budget) {
            Ok(out) => {
                println!("forced mistakes, original sequence: {}", out.value);
                Some(out.value)
            }
            Err(Error::BudgetExceeded(_)) => {
                println!("forced mistakes, original sequence: skipped (node budget)");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        println!("forced mistakes, original sequence: skipped ({n} rounds > {FORCED_SEARCH_MAX_ROUNDS})");
        None
    };
    let forced_minimal = match forced_mistakes(&minimal, &budget) {
        Ok(out) => {
            println!("forced mistakes, subsequence: {}", out.value);
            Some(out.value)
        }
        Err(Error::BudgetExceeded(_)) => {
            println!("forced mistakes, subsequence: skipped (node budget)");
            None
        }
        Err(e) => return Err(e),
    };

    let mut verdict_ok = len_ok;
    let mut note = String::new();
    match (forced_original, forced_minimal) {
        (Some(orig), Some(min)) => {
            let want = orig.min(args.m);
            if min < want {
                verdict_ok = false;
                note = format!(" (subsequence forces {min} < min(m, original) = {want})");
            }
        }
        _ => note = " (forced comparison skipped)".to_string(),
    }
    println!("verdict: {}{note}", if verdict_ok { "PASS" } else { "FAIL" });
    Ok(if verdict_ok { 0 } else { 3 })
}

fn cmd_gen_class(cli: &Cli, args: &GenClassArgs) -> Result<i32> {
    let bias = args.bias_exp.unwrap_or(HypothesisClass::default_bias_exp(args.d));
    let class = HypothesisClass::lazy_random(args.d, bias, cli.seed)?;
    let explicit = class.materialize()?;
    match &cli.out {
        Some(path) => {
            let mut file = fs::File::create(path)
                .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
            explicit.write_explicit_table(&mut file)?;
            eprintln!("{} hypotheses -> {}", explicit.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            explicit.write_explicit_table(&mut stdout.lock())?;
        }
    }
    Ok(0)
}

fn cmd_ldim(cli: &Cli, args: &LdimArgs) -> Result<i32> {
    let class = parse_class(&args.class, cli.seed)?;
    let domain = parse_domain(args.domain.as_deref(), &class)?;
    let vs = VersionSpace::full(&class)?;
    let value = ldim(&class, &vs, &domain)?;
    println!("ldim: {value}");
    Ok(0)
}
