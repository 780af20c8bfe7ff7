//! `freeorder`: build, lift, verify and evaluate low-entropy arrival orders.
//!
//! Exit codes: 0 on success, 1 when a checked invariant fails, 2 for usage
//! errors (bad flags, invalid parameters, unreadable or malformed files).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freeorder::adversary::{find_semitone, hard_assignment_sample, semitone_target, wp_adversary};
use freeorder::algorithms::ValueAssignment;
use freeorder::analysis::{bound_reports, f_argmax, f_exact, f_value};
use freeorder::derandomizer::{construct_distribution, parse_delta, DerandomizerConfig};
use freeorder::dimred::{build_family, choose_parameters, lift_multiset, verify_family, ReductionFamily};
use freeorder::harness::{
    build_pipeline, event_family, evaluate, evaluate_timed, threads_from_env, with_threads, Algorithm, EvalReport,
    EventBound, OrderSource, PipelineSpec, Problem, ValueSource, KSEC_DEFAULT_P,
};
use freeorder::perm_core::PermutationMultiset;
use freeorder::Error;
use num_rational::BigRational;

#[derive(Parser)]
#[command(name = "freeorder", version, about = "Low-entropy arrival orders for free-order secretary problems")]
struct Cli {
    /// Worker threads (overrides FREEORDER_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a multiset preserving the single-choice events at dimension ell.
    #[command(name = "construct-1sec")]
    Construct1sec(ConstructArgs),
    /// Construct a multiset preserving the multiple-choice selection events.
    #[command(name = "construct-ksec")]
    ConstructKsec(ConstructArgs),
    /// Build the Reed–Solomon reduction family [n] -> [q].
    #[command(name = "build-dimred")]
    BuildDimred {
        #[arg(long)]
        n: usize,
        /// Target dimension; q is the smallest prime at or above it.
        #[arg(long = "ell-dim")]
        ell_dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check collision and balance bounds of a family file.
    #[command(name = "verify-family")]
    VerifyFamily { family: PathBuf },
    /// Lift a low-dimension multiset through a family.
    Lift {
        #[arg(long)]
        low: PathBuf,
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo evaluation of an algorithm.
    Eval(EvalArgs),
    /// Entropy in bits of a multiset's uniform distribution.
    Entropy { permset: PathBuf },
    /// Lower-bound adversaries.
    #[command(subcommand)]
    Adversary(AdversaryCommand),
    /// Closed-form analytics.
    #[command(subcommand)]
    Analysis(AnalysisCommand),
    /// Run the fast brute-force oracle checks.
    Selfcheck,
    /// Construct, lift and evaluate in one go, writing every artifact.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ConstructArgs {
    /// Dimension ell of the events.
    #[arg(long = "ell-dim")]
    ell_dim: usize,
    #[arg(long)]
    k: usize,
    /// Relative slack as a fraction, e.g. 1/8.
    #[arg(long)]
    delta: Option<String>,
    /// Tracked ranks (multiple choice only).
    #[arg(long, default_value_t = 2)]
    track: usize,
    /// Event lower bound: a fraction, or `exact` for each event's measure.
    #[arg(long)]
    p: Option<String>,
    /// PERMSET output (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Estimator trace output (JSON lines).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmKind {
    Classic,
    WaitAndPick,
    Ksec,
    KsecLifted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct EvalArgs {
    /// PERMSET to draw orders from.
    #[arg(long, conflicts_with = "uniform")]
    orders: Option<PathBuf>,
    /// Draw uniform orders over [N] instead.
    #[arg(long)]
    uniform: Option<usize>,
    #[arg(long, value_enum, default_value_t = AlgorithmKind::Classic)]
    algorithm: AlgorithmKind,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1)]
    tau: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Low dimension for `ksec-lifted`.
    #[arg(long)]
    low: Option<usize>,
    /// VALUES file; fresh uniform values per trial when absent.
    #[arg(long)]
    values: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Record wall-clock time in the report.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AdversaryCommand {
    /// Find a sequence semitone for every order of a PERMSET.
    Semitone {
        #[arg(long)]
        orders: PathBuf,
    },
    /// Draw a hard value assignment on a semitone sequence.
    Hard {
        #[arg(long)]
        orders: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use only the first this-many sequence elements.
        #[arg(long)]
        length: Option<usize>,
        /// VALUES output (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON sidecar with the sequence, exponents and halving path.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Values defeating wait-and-pick on every order of a PERMSET.
    Wp {
        #[arg(long)]
        orders: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnalysisCommand {
    /// Exact f(k, m).
    F {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
    },
    /// The maximizing checkpoint of f(k, ·).
    Argmax {
        #[arg(long)]
        k: usize,
    },
    /// Every applicable bound as JSON.
    Bounds {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        ell: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Onesec,
    Ksec,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// Target low dimension (default log2 n for onesec, k^8 for ksec).
    #[arg(long = "ell-dim")]
    ell_dim: Option<usize>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving every artifact.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

/// Errors with their exit codes.
enum Failure {
    Usage(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invariant(_) => Failure::Invariant(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Runs `write` against the file at `path`, or stdout when absent. A reader
/// closing stdout early is not an error.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?);
            write(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            match write(&mut w).and_then(|()| Ok(w.flush()?)) {
                Err(Failure::Usage(msg)) if msg.contains("Broken pipe") => Ok(()),
                other => other,
            }
        }
    }
}

fn print(text: impl std::fmt::Display) -> CliResult {
    emit(None, |w| Ok(writeln!(w, "{text}")?))
}

fn read_permset(path: &Path) -> CliResult<PermutationMultiset> {
    Ok(PermutationMultiset::read_permset(open(path)?)?)
}

fn construct(args: &ConstructArgs, problem: Problem) -> CliResult {
    let default_delta = match problem {
        Problem::Onesec => "1/8",
        Problem::Ksec => "1/2",
    };
    let delta = parse_delta(args.delta.as_deref().unwrap_or(default_delta))?;
    let bound = match (args.p.as_deref(), problem) {
        (Some("exact"), _) | (None, Problem::Onesec) => EventBound::Exact,
        (Some(p), _) => EventBound::Constant(parse_delta(p)?),
        (None, Problem::Ksec) => EventBound::Constant(parse_delta(&format!("{}/{}", KSEC_DEFAULT_P.0, KSEC_DEFAULT_P.1))?),
    };
    let (b, events) = event_family(problem, args.ell_dim, args.k, args.track, &bound)?;
    let cfg = DerandomizerConfig::for_events(&events, delta)?;
    let out = construct_distribution(&events, &b, &cfg)?;
    eprintln!("{} events, support {}, initial estimator {:.6}", events.len(), out.multiset.len(), out.trace.iter().find(|t| t.s == 1).map_or(f64::NAN, |t| t.phi));
    if let Some(log) = &args.log {
        emit(Some(log), |w| Ok(w.write_all(out.trace_jsonl().as_bytes())?))?;
    }
    emit(args.out.as_deref(), |w| Ok(out.multiset.write_permset(w)?))
}

fn eval(args: &EvalArgs) -> CliResult {
    let file_orders;
    let orders = match (&args.orders, args.uniform) {
        (Some(path), None) => {
            file_orders = read_permset(path)?;
            OrderSource::Multiset(&file_orders)
        }
        (None, Some(n)) => OrderSource::Uniform(n),
        _ => return Err(Failure::Usage("give exactly one of --orders and --uniform".into())),
    };
    let algorithm = match args.algorithm {
        AlgorithmKind::Classic => Algorithm::Classic,
        AlgorithmKind::WaitAndPick => Algorithm::WaitAndPick {
            m: args.m.ok_or_else(|| Failure::Usage("wait-and-pick needs --m".into()))?,
            tau: args.tau,
            k: args.k,
        },
        AlgorithmKind::Ksec => Algorithm::Ksec { k: args.k },
        AlgorithmKind::KsecLifted => Algorithm::KsecLifted {
            k: args.k,
            low: args.low.ok_or_else(|| Failure::Usage("ksec-lifted needs --low".into()))?,
        },
    };
    let values = match &args.values {
        Some(path) => ValueSource::Fixed(ValueAssignment::read_values(open(path)?)?),
        None => ValueSource::Random,
    };
    let report = if args.timing {
        evaluate_timed(orders, &algorithm, &values, args.trials, args.seed)?
    } else {
        evaluate(orders, &algorithm, &values, args.trials, args.seed)?
    };
    let text = match args.format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => csv_report(&report),
    };
    emit(args.out.as_deref(), |w| Ok(w.write_all(text.as_bytes())?))
}

fn csv_report(r: &EvalReport) -> String {
    format!(
        "schema,algorithm,orders,n,trials,seed,mean_ratio,ratio_half_width,success,success_half_width,entropy_bits\n\
         EVAL-1,\"{}\",\"{}\",{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
        r.algorithm, r.orders, r.n, r.trials, r.seed, r.mean_ratio, r.ratio_half_width, r.success, r.success_half_width, r.entropy_bits
    )
}

fn adversary(cmd: &AdversaryCommand) -> CliResult {
    match cmd {
        AdversaryCommand::Semitone { orders } => {
            let ms = read_permset(orders)?;
            let seq = find_semitone(ms.entries())?;
            let doc = serde_json::json!({
                "length": seq.len(),
                "target": semitone_target(ms.n(), ms.len()),
                "sequence": seq.elements(),
            });
            print(doc)?;
        }
        AdversaryCommand::Hard { orders, k, eps, seed, length, out, sidecar } => {
            let ms = read_permset(orders)?;
            let mut seq = find_semitone(ms.entries())?;
            if let Some(len) = length {
                seq = seq.truncated(*len);
            }
            let hard = hard_assignment_sample(&seq, ms.n(), *k, *eps, *seed)?;
            if let Some(path) = sidecar {
                emit(Some(path), |w| Ok(writeln!(w, "{}", hard.sidecar_json())?))?;
            }
            emit(out.as_deref(), |w| Ok(hard.values.write_values(w)?))?;
        }
        AdversaryCommand::Wp { orders, m, k, eps, out } => {
            let ms = read_permset(orders)?;
            let va = wp_adversary(ms.entries(), *m, *k, *eps)?;
            emit(out.as_deref(), |w| Ok(va.write_values(w)?))?;
        }
    }
    Ok(())
}

fn analysis(cmd: &AnalysisCommand) -> CliResult {
    match cmd {
        AnalysisCommand::F { k, m } => {
            print(format!("{} {:.17}", f_exact(*k, *m)?, f_value(*k, *m)?))?;
        }
        AnalysisCommand::Argmax { k } => print(f_argmax(*k)?)?,
        AnalysisCommand::Bounds { n, k, ell } => {
            let reports = bound_reports(*n, *k, *ell)?;
            print(serde_json::to_string_pretty(&reports).map_err(|e| Failure::Usage(e.to_string()))?)?;
        }
    }
    Ok(())
}

fn selfcheck() -> CliResult {
    use freeorder::algorithms::wait_and_pick;
    use freeorder::events::{atomic_holds, atomic_prob, conditional_atomic_prob, AtomicEvent, Bucketing};
    use freeorder::perm_core::{all_permutations, SemiRandomPermutation};

    let mut failures = 0;
    let mut report = |name: &str, ok: bool| {
        let _ = print(format!("{name}: {}", if ok { "PASS" } else { "FAIL" }));
        failures += usize::from(!ok);
    };

    let b = Bucketing::new(5, vec![2, 5]).map_err(Failure::from)?;
    let atoms = [(vec![1, 3], vec![1, 2]), (vec![4, 2, 5], vec![1, 2, 2]), (vec![2, 1], vec![2, 2])];
    let mut ok = true;
    let mut cond_ok = true;
    for (sigma, f) in atoms {
        let a = AtomicEvent::new(sigma, f)?;
        let perms: Vec<_> = all_permutations(5).collect();
        let hits = perms.iter().filter(|pi| atomic_holds(&a, &b, pi).unwrap_or(false)).count();
        ok &= is_fraction(&atomic_prob(&a, &b)?, hits, 120);
        for pi in perms.iter().step_by(11) {
            for r in 0..5 {
                let prefix = pi.to_vec()[..r].to_vec();
                let sp = SemiRandomPermutation::new(5, prefix.clone())?;
                let completions = perms.iter().filter(|p| p.to_vec()[..r] == prefix[..]).filter(|p| atomic_holds(&a, &b, p).unwrap_or(false)).count();
                let total = perms.iter().filter(|p| p.to_vec()[..r] == prefix[..]).count();
                cond_ok &= is_fraction(&conditional_atomic_prob(&a, &sp, &b)?, completions, total);
            }
        }
    }
    report("atomic probabilities", ok);
    report("conditional probabilities", cond_ok);

    let mut f_ok = true;
    for n in 2..=6 {
        let va = ValueAssignment::new((1..=n).map(|v| v as f64).collect())?;
        for m in 1..n {
            let wins = all_permutations(n).filter(|pi| wait_and_pick(&va, pi, m, 1, 1).map(|r| r.success).unwrap_or(false)).count();
            let total: usize = (1..=n).product();
            f_ok &= is_fraction(&f_exact(n, m)?, wins, total);
        }
    }
    report("classic success formula", f_ok);

    let mut fam_ok = true;
    for (q, d, n) in [(2, 1, 4), (3, 1, 9), (11, 1, 100), (13, 2, 400)] {
        let fam = build_family(n, q, d)?;
        fam_ok &= verify_family(&fam).satisfies(&fam);
    }
    report("reduction families", fam_ok);

    if failures > 0 {
        return Err(Failure::Invariant(format!("{failures} self-check(s) failed")));
    }
    Ok(())
}

/// Whether `r` equals `num / den`.
fn is_fraction(r: &BigRational, num: usize, den: usize) -> bool {
    r.numer() * den == r.denom() * num
}

fn pipeline(args: &PipelineArgs) -> CliResult {
    let problem = match args.problem {
        ProblemArg::Onesec => Problem::Onesec,
        ProblemArg::Ksec => Problem::Ksec,
    };
    let ell_dim = args.ell_dim.unwrap_or(match problem {
        Problem::Onesec => (args.n as f64).log2().floor() as usize,
        Problem::Ksec => args.k.saturating_pow(8),
    });
    let mut spec = PipelineSpec::new(problem, args.n, args.k, ell_dim);
    if let Some(d) = &args.delta {
        spec.delta = parse_delta(d)?;
    }
    let p = build_pipeline(&spec)?;
    for w in &p.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    emit(Some(&dir.join("low.permset")), |w| Ok(p.construction.multiset.write_permset(w)?))?;
    emit(Some(&dir.join("lifted.permset")), |w| Ok(p.lifted.write_permset(w)?))?;
    emit(Some(&dir.join("family.rsfam")), |w| Ok(p.family.write_csv(w)?))?;
    emit(Some(&dir.join("trace.jsonl")), |w| Ok(w.write_all(p.construction.trace_jsonl().as_bytes())?))?;
    emit(Some(&dir.join("summary.json")), |w| Ok(writeln!(w, "{}", p.summary_json()?)?))?;
    let algorithm = match problem {
        Problem::Onesec => Algorithm::Classic,
        Problem::Ksec => Algorithm::KsecLifted { k: args.k, low: p.q },
    };
    let report = evaluate(OrderSource::Multiset(&p.lifted), &algorithm, &ValueSource::Random, args.trials, args.seed)?;
    emit(Some(&dir.join("eval.json")), |w| Ok(writeln!(w, "{}", report.to_json())?))?;
    print(p.summary_json()?)?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Construct1sec(args) => construct(args, Problem::Onesec),
        Command::ConstructKsec(args) => construct(args, Problem::Ksec),
        Command::BuildDimred { n, ell_dim, out } => {
            let (q, d) = choose_parameters(*n, *ell_dim)?;
            let fam = build_family(*n, q, d)?;
            emit(out.as_deref(), |w| Ok(fam.write_csv(w)?))
        }
        Command::VerifyFamily { family } => {
            let fam = ReductionFamily::read_csv(open(family)?)?;
            let r = verify_family(&fam);
            let ok = r.satisfies(&fam);
            print(
                serde_json::json!({
                    "n": fam.n(), "q": fam.q(), "d": fam.d(),
                    "max_collisions": r.max_collisions,
                    "preimage_min": r.preimage_min,
                    "preimage_max": r.preimage_max,
                    "ok": ok,
                })
            )?;
            if ok {
                Ok(())
            } else {
                Err(Failure::Invariant("family violates its bounds".into()))
            }
        }
        Command::Lift { low, family, out } => {
            let low = read_permset(low)?;
            let fam = ReductionFamily::read_csv(open(family)?)?;
            let lifted = lift_multiset(&low, &fam, fam.n())?;
            emit(out.as_deref(), |w| Ok(lifted.write_permset(w)?))
        }
        Command::Eval(args) => eval(args),
        Command::Entropy { permset } => {
            print(format!("{:?}", read_permset(permset)?.entropy_bits()?))?;
            Ok(())
        }
        Command::Adversary(cmd) => adversary(cmd),
        Command::Analysis(cmd) => analysis(cmd),
        Command::Selfcheck => selfcheck(),
        Command::Pipeline(args) => pipeline(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(threads_from_env);
    let outcome = match with_threads(threads, || run(cli)) {
        Ok(result) => result,
        Err(e) => Err(Failure::from(e)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
