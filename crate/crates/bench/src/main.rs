use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use absdrop::abstraction::NonExpandedMode;
use absdrop::domains::{DomainName, DomainSpec, Preset};
use absdrop::dropping::CadRule;
use absdrop::harness::{
    run_benchmark, run_episode, Algorithm, BenchmarkFile, BenchmarkReport, EpsA, RunConfig, VarianceMode,
};
use absdrop::search::Recommend;
use absdrop::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bench", version, about = "Run seeded planning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every config of a JSON grid file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; overrides the file.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run plain MCTS over a grid of exploration factors and report the best.
    SweepLambda {
        #[arg(long, default_value = "0.5,1,2,4,8,16,24,32")]
        grid: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run a single episode and print its action trace.
    Episode {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum DropArg {
    None,
    Iaad,
    Isd,
    Cad,
}

#[derive(Clone, Copy, ValueEnum)]
enum CadRuleArg {
    Literal,
    OutsideOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecommendArg {
    Ucb,
    MaxMean,
    MaxVisits,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Small,
    Desk,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    domain: DomainName,
    #[arg(long, default_value = "desk")]
    preset: PresetArg,
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
    /// mcts, oga, oga_iaad, oga_isd or oga_cad.
    #[arg(long, default_value = "mcts")]
    algo: Algorithm,
    #[arg(long, default_value_t = 1000)]
    iters: u64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value = "high")]
    variance: VarianceMode,
    /// Number, or "max" for no reward threshold.
    #[arg(long)]
    eps_a: Option<EpsA>,
    #[arg(long)]
    eps_t: Option<f64>,
    #[arg(long)]
    mode: Option<NonExpandedMode>,
    /// Refines `--algo oga` into one of the dropping variants.
    #[arg(long, value_enum)]
    drop: Option<DropArg>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    c_hat: Option<f64>,
    #[arg(long, default_value_t = 10)]
    n_check: u64,
    #[arg(long)]
    p: Option<f64>,
    /// Side of the interval on which CAD drops.
    #[arg(long, value_enum)]
    cad_rule: Option<CadRuleArg>,
    /// Root recommendation; `ucb` reads the same statistics as the tree policy.
    #[arg(long, value_enum)]
    recommend: Option<RecommendArg>,
    #[arg(long, default_value_t = 3)]
    k: u32,
    #[arg(long, default_value_t = 50)]
    horizon: u32,
    #[arg(long, default_value_t = 100)]
    episodes: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn algorithm(&self) -> Result<Algorithm> {
        let Some(drop) = self.drop else {
            return Ok(self.algo);
        };
        let refined = match drop {
            DropArg::None => Algorithm::Oga,
            DropArg::Iaad => Algorithm::OgaIaad,
            DropArg::Isd => Algorithm::OgaIsd,
            DropArg::Cad => Algorithm::OgaCad,
        };
        if self.algo == Algorithm::Oga || self.algo == refined {
            Ok(refined)
        } else {
            Err(Error::Config(format!("--drop conflicts with --algo {}", self.algo)))
        }
    }

    fn run_config(&self, base_seed: u64) -> Result<RunConfig> {
        let preset = match self.preset {
            PresetArg::Small => Preset::Small,
            PresetArg::Desk => Preset::Desk,
        };
        let algorithm = self.algorithm()?;
        let domain = DomainSpec::preset(self.domain, preset).with_seed(self.instance_seed);
        let mut cfg = RunConfig::new(domain, algorithm, self.iters);
        cfg.lambda = self.lambda;
        cfg.variance = self.variance;
        cfg.horizon = self.horizon;
        cfg.episodes = self.episodes;
        cfg.base_seed = base_seed;
        cfg.recommend = self.recommend.map(|r| match r {
            RecommendArg::Ucb => Recommend::Ucb,
            RecommendArg::MaxMean => Recommend::MaxMean,
            RecommendArg::MaxVisits => Recommend::MaxVisits,
        });
        if algorithm.uses_abstraction() {
            cfg.eps_a = self.eps_a;
            cfg.eps_t = self.eps_t;
            cfg.mode = self.mode;
            cfg.k = Some(self.k);
        } else if self.eps_a.is_some() || self.eps_t.is_some() || self.mode.is_some() {
            return Err(Error::Config("mcts takes no abstraction parameters".into()));
        }
        match algorithm {
            Algorithm::OgaIaad => {
                cfg.tau = self.tau;
                cfg.c_hat = self.c_hat;
                cfg.n_check = Some(self.n_check);
            }
            Algorithm::OgaIsd => cfg.tau = self.tau,
            Algorithm::OgaCad => {
                cfg.p = self.p;
                cfg.cad_rule = self.cad_rule.map(|r| match r {
                    CadRuleArg::Literal => CadRule::Literal,
                    CadRuleArg::OutsideOnly => CadRule::OutsideOnly,
                });
            }
            Algorithm::Mcts | Algorithm::Oga => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_outputs(report: &BenchmarkReport, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => report.write_csv(BufWriter::new(File::create(path)?))?,
        None => report.write_csv(io::stdout().lock())?,
    }
    report.write_summary(io::stderr().lock())
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad grid value '{t}'"))))
        .collect()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, threads, out } => {
            let spec = BenchmarkFile::parse(&std::fs::read_to_string(&config)?)?;
            let threads = threads.or(spec.parallelism).unwrap_or(1);
            let report = run_benchmark(&spec.runs, threads, spec.lambda_grid.as_deref())?;
            write_outputs(&report, out.as_ref())?;
            Ok(report.failures() == 0)
        }
        Command::SweepLambda { grid, common } => {
            let mut cfg = common.run_config(42)?;
            if cfg.algorithm != Algorithm::Mcts {
                return Err(Error::Config("the lambda sweep runs plain mcts".into()));
            }
            cfg.lambda = None;
            let mut runs = Vec::new();
            for l in parse_grid(&grid)? {
                let mut c = cfg.clone();
                c.lambda = Some(l);
                c.run_id = Some(format!("{}-n{}-lambda{l}", c.domain.name, c.iterations));
                runs.push(c);
            }
            let report = run_benchmark(&runs, common.threads, None)?;
            write_outputs(&report, common.out.as_ref())?;
            let results: Vec<(f64, f64)> = report
                .configs
                .iter()
                .zip(&report.summaries)
                .map(|(c, s)| (c.lambda.unwrap_or(f64::NAN), s.mean_return))
                .collect();
            eprintln!("best lambda: {}", absdrop::harness::select_lambda(&results));
            Ok(report.failures() == 0)
        }
        Command::Episode { seed, index, common } => {
            let cfg = common.run_config(seed)?;
            let ep = run_episode(&cfg, index)?;
            let mut out = io::stdout().lock();
            writeln!(out, "return {}", ep.total_return)?;
            writeln!(out, "decisions {}", ep.decisions)?;
            writeln!(out, "mean_decision_ms {:.3}", ep.mean_decision_ms)?;
            if let Some(c) = ep.final_compression {
                writeln!(out, "final_C {}", c.c)?;
            }
            let trace: Vec<String> = ep.actions.iter().map(|a| a.to_string()).collect();
            writeln!(out, "actions {}", trace.join(" "))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some episodes failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
