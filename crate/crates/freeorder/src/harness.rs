//! End-to-end pipelines (event family, construction at a prime dimension,
//! lifting to `n`) and reproducible Monte-Carlo evaluation.
//!
//! Trial `t` of an evaluation with master seed `s` uses
//! `u = derive_seed(s, t)`: the order is drawn with seed `u` and the values
//! (when random) with seed `derive_seed(u, 1)`. Per-trial outcomes are
//! collected in trial order and summed sequentially, so reports do not depend
//! on the number of worker threads.

use std::fmt;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::algorithms::{
    classic_secretary, multi_threshold_with_schedule, wait_and_pick, KsecSchedule, RunResult, ValueAssignment,
};
use crate::analysis::{bound_reports, BoundReport};
use crate::derandomizer::{
    construct_distribution, event_frequencies, verify_frequencies, Construction, DerandomizerConfig,
};
use crate::dimred::{build_family, choose_parameters, lift_multiset, lifting_warning, ReductionFamily};
use crate::error::{Error, Result};
use crate::events::{ksec_selection_family, onesec_family, Bucketing, PositiveEvent};
use crate::perm_core::{derive_seed, seeded_rng, sequential_draw, Permutation, PermutationMultiset};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "FREEORDER_THREADS";

/// Schema tag of evaluation reports.
pub const EVAL_SCHEMA: &str = "EVAL-1";

/// Default lower bound `p_γ` for multiple-choice selection events.
pub const KSEC_DEFAULT_P: (i64, i64) = (1, 10);

/// Minimum number of Monte-Carlo trials accepted by [`evaluate`].
pub const MIN_TRIALS: usize = 1000;

/// Which positive-event family a pipeline preserves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    /// Single choice: the classic rule with `k` tracked values.
    Onesec,
    /// Multiple choice: the multiple-threshold rule with budget `k`.
    Ksec,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Onesec => "onesec",
            Problem::Ksec => "ksec",
        })
    }
}

/// Lower bounds assigned to the events before construction.
#[derive(Clone, Debug, PartialEq)]
pub enum EventBound {
    /// Each event's exact measure.
    Exact,
    /// One constant for every event; an event whose measure falls below it
    /// is an error.
    Constant(BigRational),
}

/// Parameters of [`build_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSpec {
    /// Event family.
    pub problem: Problem,
    /// Requested ground-set size; the pipeline uses `q·⌊n/q⌋`.
    pub n: usize,
    /// Tracked values (single choice) or budget (multiple choice).
    pub k: usize,
    /// Target low dimension; the construction runs at the smallest prime
    /// `q ≥ ell_dim`.
    pub ell_dim: usize,
    /// Relative slack `δ` of the construction.
    pub delta: BigRational,
    /// Tracked ranks for the multiple-choice selection events.
    pub track: usize,
    /// Event lower bounds.
    pub bound: EventBound,
}

impl PipelineSpec {
    /// Defaults per problem: single choice uses exact measures and
    /// `δ = 1/4`; multiple choice uses `p_γ = 1/10`, `δ = 1/2` and two
    /// tracked ranks.
    pub fn new(problem: Problem, n: usize, k: usize, ell_dim: usize) -> Self {
        let (delta, bound) = match problem {
            Problem::Onesec => (BigRational::new(1.into(), 4.into()), EventBound::Exact),
            Problem::Ksec => (
                BigRational::new(1.into(), 2.into()),
                EventBound::Constant(BigRational::new(KSEC_DEFAULT_P.0.into(), KSEC_DEFAULT_P.1.into())),
            ),
        };
        Self { problem, n, k, ell_dim, delta, track: 2, bound }
    }

    fn validate(&self) -> Result<()> {
        if self.ell_dim < self.k + 1 {
            return Err(Error::invalid(format!("ell_dim={} must be at least k+1={}", self.ell_dim, self.k + 1)));
        }
        if self.k < 2 {
            return Err(Error::invalid("k must be at least 2"));
        }
        Ok(())
    }
}

/// Everything a pipeline produces.
#[derive(Clone, Debug)]
pub struct Pipeline {
    /// The input parameters.
    pub spec: PipelineSpec,
    /// Prime low dimension.
    pub q: usize,
    /// Polynomial degree of the reduction family.
    pub d: usize,
    /// Effective ground-set size `q·⌊n/q⌋`.
    pub n: usize,
    /// Bucketing of the low-dimension events.
    pub bucketing: Bucketing,
    /// The preserved events with their lower bounds.
    pub events: Vec<PositiveEvent>,
    /// Construction parameters.
    pub config: DerandomizerConfig,
    /// The low-dimension construction and its trace.
    pub construction: Construction,
    /// The reduction family `[n] → [q]`.
    pub family: ReductionFamily,
    /// The lifted multiset `L_n`.
    pub lifted: PermutationMultiset,
    /// Warnings about parameters outside the guaranteed regime.
    pub warnings: Vec<String>,
}

impl Pipeline {
    /// `log₂|L_low| + log₂ q`, the entropy ceiling of the lifted multiset.
    pub fn entropy_ceiling(&self) -> f64 {
        (self.construction.multiset.len() as f64).log2() + (self.q as f64).log2()
    }

    /// JSON summary of the run (parameters, sizes, estimator values,
    /// warnings); byte-stable for fixed inputs.
    pub fn summary_json(&self) -> Result<String> {
        let c = &self.construction;
        let phi = |x: &BigRational| float_raw(x.to_f64().unwrap_or(f64::NAN));
        let summary = PipelineJson {
            problem: self.spec.problem,
            n_requested: self.spec.n,
            n: self.n,
            k: self.spec.k,
            ell_dim: self.spec.ell_dim,
            q: self.q,
            d: self.d,
            delta: self.spec.delta.to_string(),
            events: self.events.len(),
            support: c.multiset.len(),
            lifted_support: self.lifted.len(),
            phi_start: phi(&c.phi_start),
            phi_initial: phi(&c.phi_initial),
            phi_final: phi(&c.phi_final),
            entropy_bits: float_raw(self.lifted.entropy_bits()?),
            entropy_ceiling: float_raw(self.entropy_ceiling()),
            warnings: &self.warnings,
        };
        serde_json::to_string_pretty(&summary).map_err(|e| Error::invariant(e.to_string()))
    }
}

#[derive(Serialize)]
struct PipelineJson<'a> {
    problem: Problem,
    n_requested: usize,
    n: usize,
    k: usize,
    ell_dim: usize,
    q: usize,
    d: usize,
    delta: String,
    events: usize,
    support: usize,
    lifted_support: usize,
    phi_start: Box<RawValue>,
    phi_initial: Box<RawValue>,
    phi_final: Box<RawValue>,
    entropy_bits: Box<RawValue>,
    entropy_ceiling: Box<RawValue>,
    warnings: &'a [String],
}

/// The event family for `problem` at dimension `q`, with lower bounds set
/// per `bound`.
pub fn event_family(
    problem: Problem,
    q: usize,
    k: usize,
    track: usize,
    bound: &EventBound,
) -> Result<(Bucketing, Vec<PositiveEvent>)> {
    let (b, events) = match problem {
        Problem::Onesec => onesec_family(q, k)?,
        Problem::Ksec => ksec_selection_family(&KsecSchedule::new(q, k)?, track)?,
    };
    let events = match bound {
        EventBound::Exact => events,
        EventBound::Constant(p) => events
            .into_iter()
            .map(|e| {
                if e.lower_bound() < p {
                    return Err(Error::invalid(format!(
                        "event {} has measure {} below the requested bound {p}",
                        e.id(),
                        e.lower_bound()
                    )));
                }
                e.with_lower_bound(p.clone())
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok((b, events))
}

/// Builds the event family at the prime dimension `q ≥ ell_dim`,
/// constructs its frequency-preserving multiset, lifts it to
/// `n = q·⌊n_request/q⌋` and checks the entropy ceiling.
pub fn build_pipeline(spec: &PipelineSpec) -> Result<Pipeline> {
    spec.validate()?;
    let (q, _) = choose_parameters(spec.n, spec.ell_dim)?;
    let n = q * (spec.n / q);
    if n < q {
        return Err(Error::invalid(format!("n={} is smaller than the dimension q={q}", spec.n)));
    }
    let (_, d) = choose_parameters(n, spec.ell_dim)?;
    let mut warnings: Vec<String> = lifting_warning(q, n).into_iter().collect();
    if spec.problem == Problem::Ksec && (spec.ell_dim as f64) < (spec.k as f64).powi(8) {
        warnings.push(format!("ell_dim={} is below k^8; desk-scale override", spec.ell_dim));
    }
    let (bucketing, events) = event_family(spec.problem, q, spec.k, spec.track, &spec.bound)?;
    let config = DerandomizerConfig::for_events(&events, spec.delta.clone())?;
    let construction = construct_distribution(&events, &bucketing, &config)?;
    let family = build_family(n, q, d)?;
    let lifted = lift_multiset(&construction.multiset, &family, n)?;
    let pipeline = Pipeline { spec: spec.clone(), q, d, n, bucketing, events, config, construction, family, lifted, warnings };
    if pipeline.lifted.len() != pipeline.construction.multiset.len() * q {
        return Err(Error::invariant("lifted support size differs from |L_low|·q"));
    }
    let entropy = pipeline.lifted.entropy_bits()?;
    if entropy > pipeline.entropy_ceiling() + 1e-9 {
        return Err(Error::invariant(format!("entropy {entropy} exceeds {}", pipeline.entropy_ceiling())));
    }
    Ok(pipeline)
}

/// Re-verifies the frequency guarantee of a (possibly reloaded) low
/// multiset against the pipeline's events.
pub fn reverify(pipeline: &Pipeline, low: &PermutationMultiset) -> Result<()> {
    let counts = event_frequencies(low, &pipeline.events, &pipeline.bucketing)?;
    verify_frequencies(&counts, &pipeline.events, &pipeline.config.delta, low.len())
}

/// Where evaluation orders come from.
#[derive(Clone, Copy, Debug)]
pub enum OrderSource<'a> {
    /// Uniform over the entries of a multiset.
    Multiset(&'a PermutationMultiset),
    /// Uniform over all permutations of `[n]`.
    Uniform(usize),
}

impl OrderSource<'_> {
    /// Ground-set size.
    pub fn n(&self) -> usize {
        match self {
            OrderSource::Multiset(ms) => ms.n(),
            OrderSource::Uniform(n) => *n,
        }
    }

    /// Entropy of the order distribution in bits (`log₂ n!` for uniform).
    pub fn entropy_bits(&self) -> Result<f64> {
        match self {
            OrderSource::Multiset(ms) => ms.entropy_bits(),
            OrderSource::Uniform(n) => Ok((2..=*n).map(|i| (i as f64).log2()).sum()),
        }
    }

    fn draw(&self, seed: u64) -> Result<Permutation> {
        match self {
            OrderSource::Multiset(ms) => ms.sample(seed).cloned(),
            OrderSource::Uniform(n) => sequential_draw(*n, seed),
        }
    }

    fn label(&self) -> String {
        match self {
            OrderSource::Multiset(ms) => format!("multiset(count={})", ms.len()),
            OrderSource::Uniform(n) => format!("uniform(n={n})"),
        }
    }
}

/// Online algorithm under evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum Algorithm {
    /// Wait-and-pick with `m = ⌊n/e⌋`, `τ = 1`, `k = 1`.
    Classic,
    /// Wait-and-pick with explicit parameters.
    WaitAndPick {
        /// Checkpoint.
        m: usize,
        /// Statistic.
        tau: usize,
        /// Budget.
        k: usize,
    },
    /// The multiple-threshold algorithm with budget `k` and its own `δ`.
    Ksec {
        /// Budget.
        k: usize,
    },
    /// The multiple-threshold algorithm with the schedule of dimension
    /// `low` scaled up to `n` (which `low` must divide), matching orders
    /// lifted from that dimension.
    KsecLifted {
        /// Budget.
        k: usize,
        /// Low dimension.
        low: usize,
    },
}

impl Algorithm {
    /// Budget `k`.
    pub fn k(&self) -> usize {
        match self {
            Algorithm::Classic => 1,
            Algorithm::WaitAndPick { k, .. } | Algorithm::Ksec { k } | Algorithm::KsecLifted { k, .. } => *k,
        }
    }

    /// The threshold schedule at dimension `n` for the multiple-choice
    /// variants.
    pub fn schedule(&self, n: usize) -> Result<Option<KsecSchedule>> {
        match self {
            Algorithm::Ksec { k } => Ok(Some(KsecSchedule::new(n, *k)?)),
            Algorithm::KsecLifted { k, low } => {
                if *low == 0 || !n.is_multiple_of(*low) {
                    return Err(Error::invalid(format!("low dimension {low} does not divide n={n}")));
                }
                Ok(Some(KsecSchedule::new(*low, *k)?.scaled(n / low)?))
            }
            _ => Ok(None),
        }
    }

    fn label(&self) -> String {
        match self {
            Algorithm::Classic => "classic".into(),
            Algorithm::WaitAndPick { m, tau, k } => format!("wait_and_pick(m={m},tau={tau},k={k})"),
            Algorithm::Ksec { k } => format!("ksec(k={k})"),
            Algorithm::KsecLifted { k, low } => format!("ksec_lifted(k={k},low={low})"),
        }
    }
}

/// Values for each trial.
#[derive(Clone, Debug)]
pub enum ValueSource {
    /// The same assignment every trial.
    Fixed(ValueAssignment),
    /// Independent uniform values in `[0,1)` drawn per trial.
    Random,
}

impl ValueSource {
    fn draw(&self, n: usize, seed: u64) -> Result<ValueAssignment> {
        match self {
            ValueSource::Fixed(va) => Ok(va.clone()),
            ValueSource::Random => {
                let mut rng = seeded_rng(seed);
                ValueAssignment::new((0..n).map(|_| rng.random::<f64>()).collect())
            }
        }
    }
}

/// Result of [`evaluate`]. Floats are written with 17 significant digits.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Algorithm description.
    pub algorithm: String,
    /// Order-source description.
    pub orders: String,
    /// Ground-set size.
    pub n: usize,
    /// Number of trials.
    pub trials: usize,
    /// Master seed.
    pub seed: u64,
    /// Mean competitive ratio.
    pub mean_ratio: f64,
    /// `3·s/√trials` for the ratio.
    pub ratio_half_width: f64,
    /// Frequency of selecting a maximum value.
    pub success: f64,
    /// `3·√(p̂(1−p̂)/trials)`.
    pub success_half_width: f64,
    /// Entropy of the order distribution in bits.
    pub entropy_bits: f64,
    /// Reference bounds.
    pub bounds: Vec<BoundReport>,
    /// Wall-clock seconds; left out of the JSON unless set, so reports of
    /// identical runs stay byte-identical.
    pub runtime_secs: Option<f64>,
}

/// A float as a JSON number with 17 significant digits (`null` when not
/// finite).
pub fn float_raw(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { format!("{x:.16e}") } else { "null".to_string() };
    RawValue::from_string(text).expect("valid JSON number")
}

#[derive(Serialize)]
struct EvalJson<'a> {
    schema: &'static str,
    algorithm: &'a str,
    orders: &'a str,
    n: usize,
    trials: usize,
    seed: u64,
    mean_ratio: Box<RawValue>,
    ratio_half_width: Box<RawValue>,
    success: Box<RawValue>,
    success_half_width: Box<RawValue>,
    entropy_bits: Box<RawValue>,
    bounds: Vec<RawBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtime_secs: Option<Box<RawValue>>,
}

#[derive(Serialize)]
struct RawBound {
    name: String,
    value: Box<RawValue>,
    inputs: std::collections::BTreeMap<String, Box<RawValue>>,
}

impl EvalReport {
    /// The EVAL-1 JSON document.
    pub fn to_json(&self) -> String {
        let bounds: Vec<RawBound> = self
            .bounds
            .iter()
            .map(|b| RawBound {
                name: b.name.clone(),
                value: float_raw(b.value),
                inputs: b.inputs.iter().map(|(k, &v)| (k.clone(), float_raw(v))).collect(),
            })
            .collect();
        let doc = EvalJson {
            schema: EVAL_SCHEMA,
            algorithm: &self.algorithm,
            orders: &self.orders,
            n: self.n,
            trials: self.trials,
            seed: self.seed,
            mean_ratio: float_raw(self.mean_ratio),
            ratio_half_width: float_raw(self.ratio_half_width),
            success: float_raw(self.success),
            success_half_width: float_raw(self.success_half_width),
            entropy_bits: float_raw(self.entropy_bits),
            bounds,
            runtime_secs: self.runtime_secs.map(float_raw),
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }
}

/// Runs `algorithm` for `trials` independent trials and aggregates ratio
/// and success frequency.
pub fn evaluate(
    orders: OrderSource<'_>,
    algorithm: &Algorithm,
    values: &ValueSource,
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid(format!("at least {MIN_TRIALS} trials are required")));
    }
    let n = orders.n();
    if let ValueSource::Fixed(va) = values {
        if va.n() != n {
            return Err(Error::invalid("value assignment and orders disagree on n"));
        }
    }
    let schedule = algorithm.schedule(n)?;
    let run = |va: &ValueAssignment, pi: &Permutation| -> Result<RunResult> {
        match algorithm {
            Algorithm::Classic => classic_secretary(va, pi),
            Algorithm::WaitAndPick { m, tau, k } => wait_and_pick(va, pi, *m, *tau, *k),
            Algorithm::Ksec { .. } | Algorithm::KsecLifted { .. } => multi_threshold_with_schedule(va, pi, schedule.as_ref().expect("built above")),
        }
    };
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let u = derive_seed(seed, t as u64);
            let pi = orders.draw(u)?;
            let va = values.draw(n, derive_seed(u, 1))?;
            let r = run(&va, &pi)?;
            Ok((r.ratio, r.success))
        })
        .collect::<Result<Vec<(f64, bool)>>>()?;
    let tf = trials as f64;
    let mean = outcomes.iter().map(|o| o.0).sum::<f64>() / tf;
    let var = outcomes.iter().map(|o| (o.0 - mean).powi(2)).sum::<f64>() / (tf - 1.0);
    let p = outcomes.iter().filter(|o| o.1).count() as f64 / tf;
    Ok(EvalReport {
        algorithm: algorithm.label(),
        orders: orders.label(),
        n,
        trials,
        seed,
        mean_ratio: mean,
        ratio_half_width: 3.0 * (var / tf).sqrt(),
        success: p,
        success_half_width: 3.0 * (p * (1.0 - p) / tf).sqrt(),
        entropy_bits: orders.entropy_bits()?,
        bounds: bound_reports(n, algorithm.k(), 0)?,
        runtime_secs: None,
    })
}

/// [`evaluate`] with the wall-clock time recorded in the report.
pub fn evaluate_timed(
    orders: OrderSource<'_>,
    algorithm: &Algorithm,
    values: &ValueSource,
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    let start = Instant::now();
    let mut report = evaluate(orders, algorithm, values, trials, seed)?;
    report.runtime_secs = Some(start.elapsed().as_secs_f64());
    Ok(report)
}

/// Fixed value assignments used to compare order distributions: each is a
/// plausible worst case for orders with block or index structure.
pub fn instance_panel(n: usize, k: usize, seed: u64) -> Result<Vec<(String, ValueAssignment)>> {
    if k == 0 || k > n {
        return Err(Error::invalid("need 1 <= k <= n"));
    }
    let mut panel = Vec::new();
    panel.push(("descending".to_string(), (0..n).map(|i| (n - i) as f64).collect::<Vec<_>>()));
    panel.push(("ascending".to_string(), (1..=n).map(|i| i as f64).collect()));
    let mut top_k = vec![1.0 / n as f64; n];
    top_k[..k].iter_mut().for_each(|v| *v = 1.0);
    panel.push(("top_k_first".to_string(), top_k.clone()));
    top_k.reverse();
    panel.push(("top_k_last".to_string(), top_k));
    panel.push(("geometric".to_string(), (0..n).map(|i| 0.5f64.powi((i % 64) as i32)).collect()));
    let order = sequential_draw(n, seed)?;
    let mut shuffled = vec![0.0; n];
    for (rank, &e) in order.as_slice().iter().enumerate() {
        shuffled[e as usize - 1] = (n - rank) as f64;
    }
    panel.push(("shuffled".to_string(), shuffled));
    panel.into_iter().map(|(name, v)| Ok((name, ValueAssignment::new(v)?))).collect()
}

/// Threads requested through [`THREADS_ENV`], if set to a positive number.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&t| t > 0)
}

/// Runs `f` on a dedicated pool with `threads` workers (all available when
/// `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
