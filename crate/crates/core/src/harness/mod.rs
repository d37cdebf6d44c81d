//! Seeded experiment driver: episodes, benchmark grids, λ sweeps and CSV output.
//!
//! Episode `i` of a run uses the seed `derive_seed(base_seed, i)`. The
//! environment draws from stream 0 of that seed and the planner from stream 1,
//! so every algorithm faces the same environment noise for the same episode.

mod config;
mod stats;

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{domain_defaults, Algorithm, DomainDefaults, EpsA, RunConfig, VarianceMode, LOW_VARIANCE_REPEATS};
pub use stats::{bootstrap_ci, derive_seed, mean};

use crate::domains::build_domain;
use crate::dropping::{CompressionStats, DropPolicy, DropStats};
use crate::error::{Error, Result};
use crate::mdp::{seeded_rng, step, Action};
use crate::search::{plan, PlanDiagnostics};

pub const CSV_COLUMNS: [&str; 23] = [
    "run_id",
    "domain",
    "instance_seed",
    "algorithm",
    "n_iters",
    "lambda",
    "eps_a",
    "eps_t",
    "mode",
    "drop_policy",
    "tau",
    "c_hat",
    "n_check",
    "p",
    "variance_mode",
    "episode_index",
    "seed",
    "return",
    "mean_decision_ms",
    "final_C",
    "drop_ratio_l1",
    "drop_ratio_l2",
    "drop_ratio_rest",
];

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub run_id: String,
    pub episode_index: u64,
    pub seed: u64,
    pub total_return: f64,
    pub decisions: u32,
    pub mean_decision_ms: f64,
    pub actions: Vec<Action>,
    /// Compression of the last decision's tree; `None` without abstraction.
    pub final_compression: Option<CompressionStats>,
    /// Drop counts summed over all decisions.
    pub drops: DropStats,
    pub error: Option<String>,
}

/// Run one episode, calling `observe` with the diagnostics of every decision.
pub fn run_episode_observed(
    cfg: &RunConfig,
    run_id: &str,
    episode_index: u64,
    mut observe: impl FnMut(&PlanDiagnostics),
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let model = build_domain(&cfg.domain)?;
    let search = cfg.search_config();
    let seed = derive_seed(cfg.base_seed, episode_index);
    let mut env_rng = seeded_rng(seed, 0);
    let mut planner_rng = seeded_rng(seed, 1);
    let mut state = model.initial_state(&mut env_rng);
    let mut result = EpisodeResult {
        run_id: run_id.to_string(),
        episode_index,
        seed,
        total_return: 0.0,
        decisions: 0,
        mean_decision_ms: 0.0,
        actions: Vec::new(),
        final_compression: None,
        drops: DropStats::default(),
        error: None,
    };
    let mut total_ms = 0.0;
    for depth in 0..cfg.horizon {
        if model.is_terminal(&state) {
            break;
        }
        let start = Instant::now();
        let (action, diag) = plan(model.as_ref(), state.clone(), depth, &search, &mut planner_rng)?;
        total_ms += start.elapsed().as_secs_f64() * 1e3;
        observe(&diag);
        if search.abstraction.is_some() {
            result.final_compression = Some(diag.compression);
        }
        for (acc, d) in result.drops.layers.iter_mut().zip(diag.drops.layers) {
            acc.eligible += d.eligible;
            acc.dropped += d.dropped;
        }
        let (next, reward) = step(model.as_ref(), &state, action, &mut env_rng)?;
        result.total_return += reward;
        result.actions.push(action);
        result.decisions += 1;
        state = next;
    }
    if result.decisions > 0 {
        result.mean_decision_ms = total_ms / result.decisions as f64;
    }
    Ok(result)
}

pub fn run_episode(cfg: &RunConfig, episode_index: u64) -> Result<EpisodeResult> {
    let id = cfg.run_id.clone().unwrap_or_else(|| default_run_id(cfg, 0));
    run_episode_observed(cfg, &id, episode_index, |_| {})
}

fn default_run_id(cfg: &RunConfig, index: usize) -> String {
    format!("{index:03}-{}-{}-n{}", cfg.domain.name, cfg.algorithm, cfg.iterations)
}

/// Per-config aggregate over the successful episodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub config: String,
    pub episodes: usize,
    pub failures: usize,
    pub mean_return: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub confidence: f64,
    pub mean_decision_ms: f64,
}

impl RunSummary {
    /// Whether the two confidence intervals are disjoint.
    pub fn separated_from(&self, other: &RunSummary) -> bool {
        self.ci_lo > other.ci_hi || other.ci_lo > self.ci_hi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaChoice {
    pub domain: String,
    pub iterations: u64,
    pub variance: VarianceMode,
    /// Mean return per swept λ, in grid order.
    pub results: Vec<(f64, f64)>,
    pub best: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BenchmarkReport {
    /// Resolved configs, in run order.
    pub configs: Vec<RunConfig>,
    pub episodes: Vec<EpisodeResult>,
    pub summaries: Vec<RunSummary>,
    pub lambda_choices: Vec<LambdaChoice>,
}

impl BenchmarkReport {
    pub fn failures(&self) -> usize {
        self.episodes.iter().filter(|e| e.error.is_some()).count()
    }

    pub fn summary(&self, run_id: &str) -> Option<&RunSummary> {
        self.summaries.iter().find(|s| s.run_id == run_id)
    }

    pub fn episodes_of<'a>(&'a self, run_id: &'a str) -> impl Iterator<Item = &'a EpisodeResult> + 'a {
        self.episodes.iter().filter(move |e| e.run_id == run_id)
    }

    /// CSV with the fixed column order, one row per episode in run order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for e in &self.episodes {
            let run = self
                .configs
                .iter()
                .zip(&self.summaries)
                .find(|(_, s)| s.run_id == e.run_id)
                .map(|(c, _)| c)
                .ok_or_else(|| Error::Internal(format!("episode of unknown run {}", e.run_id)))?;
            w.write_record(csv_row(run, e))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable summary block per config.
    pub fn write_summary<W: Write>(&self, mut out: W) -> Result<()> {
        for c in &self.lambda_choices {
            writeln!(
                out,
                "lambda sweep {} n={} variance={}: best lambda {} ({})",
                c.domain,
                c.iterations,
                c.variance.as_str(),
                c.best,
                c.results.iter().map(|(l, m)| format!("{l}:{m:.3}")).collect::<Vec<_>>().join(" ")
            )?;
        }
        for s in &self.summaries {
            writeln!(
                out,
                "{}: mean return {:.4} [{:.4}, {:.4}] ({:.0}% CI) over {} episodes, {} failed, {:.3} ms/decision",
                s.run_id,
                s.mean_return,
                s.ci_lo,
                s.ci_hi,
                s.confidence * 100.0,
                s.episodes,
                s.failures,
                s.mean_decision_ms
            )?;
        }
        Ok(())
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(cfg: &RunConfig, e: &EpisodeResult) -> Vec<String> {
    let abs = cfg.abstraction_params();
    let (tau, c_hat, n_check, p) = match cfg.drop_policy() {
        DropPolicy::None => (None, None, None, None),
        DropPolicy::Iaad { tau, c_hat, n_check } => (Some(tau), Some(c_hat), Some(n_check), None),
        DropPolicy::Isd { tau } => (Some(tau), None, None, None),
        DropPolicy::Cad { p, .. } => (None, None, None, Some(p)),
    };
    let ratios = if cfg.algorithm == Algorithm::OgaCad { e.drops.ratios() } else { [None; 3] };
    let ok = e.error.is_none();
    vec![
        e.run_id.clone(),
        cfg.domain.name.to_string(),
        cfg.domain.instance_seed.to_string(),
        cfg.algorithm.to_string(),
        cfg.iterations.to_string(),
        cfg.resolved_lambda().to_string(),
        fmt_opt(abs.map(|a| EpsA(a.eps_a))),
        fmt_opt(abs.map(|a| a.eps_t)),
        fmt_opt(abs.map(|a| a.mode)),
        cfg.drop_policy().name().to_string(),
        fmt_opt(tau),
        fmt_opt(c_hat),
        fmt_opt(n_check),
        fmt_opt(p),
        cfg.variance.as_str().to_string(),
        e.episode_index.to_string(),
        e.seed.to_string(),
        fmt_opt(ok.then_some(e.total_return)),
        fmt_opt(ok.then_some(e.mean_decision_ms)),
        fmt_opt(e.final_compression.filter(|_| ok).map(|c| c.c)),
        fmt_opt(ratios[0]),
        fmt_opt(ratios[1]),
        fmt_opt(ratios[2]),
    ]
}

fn failed_episode(cfg: &RunConfig, run_id: &str, index: u64, err: Error) -> EpisodeResult {
    EpisodeResult {
        run_id: run_id.to_string(),
        episode_index: index,
        seed: derive_seed(cfg.base_seed, index),
        total_return: 0.0,
        decisions: 0,
        mean_decision_ms: 0.0,
        actions: Vec::new(),
        final_compression: None,
        drops: DropStats::default(),
        error: Some(err.to_string()),
    }
}

/// Run every (config, episode) pair on a pool of `parallelism` workers.
/// Results come back in run order regardless of scheduling.
fn execute(configs: &[(String, RunConfig)], parallelism: usize) -> Result<Vec<EpisodeResult>> {
    let jobs: Vec<(usize, u64)> =
        configs.iter().enumerate().flat_map(|(i, (_, c))| (0..c.episodes).map(move |e| (i, e))).collect();
    let work = || -> Vec<EpisodeResult> {
        jobs.par_iter()
            .map(|&(i, e)| {
                let (id, cfg) = &configs[i];
                run_episode_observed(cfg, id, e, |_| {}).unwrap_or_else(|err| failed_episode(cfg, id, e, err))
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    Ok(pool.install(work))
}

fn summarize(run_id: &str, cfg: &RunConfig, index: usize, episodes: &[EpisodeResult]) -> Result<RunSummary> {
    let ok: Vec<&EpisodeResult> = episodes.iter().filter(|e| e.run_id == run_id && e.error.is_none()).collect();
    let failures = episodes.iter().filter(|e| e.run_id == run_id && e.error.is_some()).count();
    let returns: Vec<f64> = ok.iter().map(|e| e.total_return).collect();
    let (mean_return, ci_lo, ci_hi, ms) = if returns.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mut rng = seeded_rng(derive_seed(cfg.base_seed, index as u64), 2);
        let (lo, hi) = bootstrap_ci(&returns, cfg.confidence, cfg.bootstrap_resamples, &mut rng)?;
        let ms: Vec<f64> = ok.iter().map(|e| e.mean_decision_ms).collect();
        (mean(&returns), lo, hi, mean(&ms))
    };
    Ok(RunSummary {
        run_id: run_id.to_string(),
        config: cfg.to_json(),
        episodes: ok.len(),
        failures,
        mean_return,
        ci_lo,
        ci_hi,
        confidence: cfg.confidence,
        mean_decision_ms: ms,
    })
}

/// Run a grid of configs. With `lambda_grid`, each (domain, n, variance) group
/// first runs plain MCTS at every grid λ; the λ with the highest mean return
/// (ties to the smaller λ) is then pinned for every config of the group that
/// leaves λ unset.
pub fn run_benchmark(grid: &[RunConfig], parallelism: usize, lambda_grid: Option<&[f64]>) -> Result<BenchmarkReport> {
    for cfg in grid {
        cfg.validate()?;
    }
    let mut report = BenchmarkReport::default();
    let mut resolved: Vec<RunConfig> = grid.to_vec();
    if let Some(lambdas) = lambda_grid {
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("lambda grid must be non-empty and positive".into()));
        }
        let mut groups: Vec<RunConfig> = Vec::new();
        for cfg in grid {
            if !groups.iter().any(|g| same_group(g, cfg)) {
                groups.push(cfg.clone());
            }
        }
        let mut sweep_runs: Vec<(String, RunConfig)> = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            for &l in lambdas {
                let mut c = RunConfig::new(g.domain.clone(), Algorithm::Mcts, g.iterations);
                c.lambda = Some(l);
                c.variance = g.variance;
                c.rollout_limit = g.rollout_limit;
                c.horizon = g.horizon;
                c.episodes = g.episodes;
                c.base_seed = g.base_seed;
                c.bootstrap_resamples = g.bootstrap_resamples;
                c.confidence = g.confidence;
                let id = format!("sweep{gi:02}-{}-n{}-lambda{l}", g.domain.name, g.iterations);
                c.run_id = Some(id.clone());
                sweep_runs.push((id, c));
            }
        }
        let episodes = execute(&sweep_runs, parallelism)?;
        for (gi, g) in groups.iter().enumerate() {
            let mut results = Vec::with_capacity(lambdas.len());
            for (li, &l) in lambdas.iter().enumerate() {
                let (id, c) = &sweep_runs[gi * lambdas.len() + li];
                let s = summarize(id, c, gi * lambdas.len() + li, &episodes)?;
                results.push((l, s.mean_return));
            }
            let best = select_lambda(&results);
            for cfg in resolved.iter_mut().filter(|c| same_group(c, g) && c.lambda.is_none()) {
                cfg.lambda = Some(best);
            }
            report.lambda_choices.push(LambdaChoice {
                domain: g.domain.name.to_string(),
                iterations: g.iterations,
                variance: g.variance,
                results,
                best,
            });
        }
        for (i, (id, c)) in sweep_runs.iter().enumerate() {
            report.summaries.push(summarize(id, c, i, &episodes)?);
            report.configs.push(c.clone());
        }
        report.episodes = episodes;
    }
    let offset = report.configs.len();
    let runs: Vec<(String, RunConfig)> = resolved
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c.run_id.clone().unwrap_or_else(|| default_run_id(&c, i)), c))
        .collect();
    let episodes = execute(&runs, parallelism)?;
    for (i, (id, c)) in runs.iter().enumerate() {
        report.summaries.push(summarize(id, c, offset + i, &episodes)?);
        report.configs.push(c.clone());
    }
    report.episodes.extend(episodes);
    Ok(report)
}

/// Contents of a `bench run --config` file: either a bare array of run
/// configs or an object with the runs and optional sweep settings.
#[derive(Clone, Debug, PartialEq, serde::Deserialize)]
#[serde(untagged)]
pub enum BenchmarkFile {
    Runs(Vec<RunConfig>),
    Full(BenchmarkSpec),
}

#[derive(Clone, Debug, PartialEq, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub runs: Vec<RunConfig>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub parallelism: Option<usize>,
}

impl BenchmarkFile {
    pub fn parse(text: &str) -> Result<BenchmarkSpec> {
        match serde_json::from_str::<BenchmarkFile>(text) {
            Ok(BenchmarkFile::Runs(runs)) => Ok(BenchmarkSpec { runs, lambda_grid: None, parallelism: None }),
            Ok(BenchmarkFile::Full(spec)) => Ok(spec),
            // untagged errors are vague; report the structured attempt instead
            Err(_) => Ok(serde_json::from_str::<BenchmarkSpec>(text)?),
        }
    }
}

fn same_group(a: &RunConfig, b: &RunConfig) -> bool {
    a.domain == b.domain && a.iterations == b.iterations && a.variance == b.variance
}

/// Best λ by mean return; NaN means lose, ties go to the smaller λ.
pub fn select_lambda(results: &[(f64, f64)]) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for &(l, m) in results {
        if m.is_nan() {
            continue;
        }
        best = match best {
            Some((bl, bm)) if bm > m || (bm == m && bl <= l) => Some((bl, bm)),
            _ => Some((l, m)),
        };
    }
    best.map_or(results.first().map_or(f64::NAN, |r| r.0), |b| b.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{DomainName, DomainSpec};

    fn small(algo: Algorithm, episodes: u64) -> RunConfig {
        let mut c = RunConfig::new(DomainSpec::small(DomainName::Navigation), algo, 50);
        c.episodes = episodes;
        c.horizon = 10;
        c.bootstrap_resamples = 1000;
        c
    }

    #[test]
    fn episode_is_deterministic_and_bounded() {
        let cfg = small(Algorithm::Mcts, 1);
        let a = run_episode(&cfg, 3).unwrap();
        let b = run_episode(&cfg, 3).unwrap();
        assert_eq!((a.total_return, &a.actions), (b.total_return, &b.actions));
        assert!(a.total_return <= 0.0 && a.total_return >= -(cfg.horizon as f64));
        assert!(a.decisions <= cfg.horizon);
        assert!(a.final_compression.is_none());
    }

    #[test]
    fn empty_grid_has_header_only() {
        let report = run_benchmark(&[], 1, None).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn rows_and_summaries() {
        let mut a = small(Algorithm::Oga, 4);
        let mut b = a.clone();
        b.base_seed = 7;
        a.run_id = Some("a".into());
        b.run_id = Some("b".into());
        let report = run_benchmark(&[a, b], 1, None).unwrap();
        assert_eq!(report.episodes.len(), 8);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        for s in &report.summaries {
            let rets: Vec<f64> = report.episodes_of(&s.run_id).map(|e| e.total_return).collect();
            assert!((s.mean_return - mean(&rets)).abs() < 1e-12);
        }
        assert_ne!(report.episodes[0].seed, report.episodes[4].seed);
    }

    #[test]
    fn lambda_ties_go_to_smaller() {
        assert_eq!(select_lambda(&[(0.5, 1.0), (1.0, 2.0), (2.0, 2.0)]), 1.0);
        assert_eq!(select_lambda(&[(4.0, 3.0), (2.0, 3.0)]), 2.0);
        assert_eq!(select_lambda(&[(1.0, f64::NAN), (2.0, -1.0)]), 2.0);
    }

    #[test]
    fn benchmark_file_forms() {
        let arr = r#"[{"domain": {"name": "sysadmin"}, "algorithm": "mcts", "iterations": 10}]"#;
        assert_eq!(BenchmarkFile::parse(arr).unwrap().runs.len(), 1);
        let obj = r#"{"runs": [], "lambda_grid": [1, 2]}"#;
        assert_eq!(BenchmarkFile::parse(obj).unwrap().lambda_grid, Some(vec![1.0, 2.0]));
        assert!(BenchmarkFile::parse(r#"{"runs": [], "extra": 1}"#).is_err());
    }

    #[test]
    fn sweep_pins_lambda() {
        let report = run_benchmark(&[small(Algorithm::Oga, 2)], 1, Some(&[1.0, 8.0])).unwrap();
        assert_eq!(report.lambda_choices.len(), 1);
        let best = report.lambda_choices[0].best;
        assert_eq!(report.configs.last().unwrap().lambda, Some(best));
        assert_eq!(report.episodes.len(), 6);
    }
}
