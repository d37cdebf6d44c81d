use absdrop::domains::{DomainName, DomainSpec};
use absdrop::harness::{bootstrap_ci, mean, run_benchmark, Algorithm, BenchmarkReport, EpsA, RunConfig, CSV_COLUMNS};
use absdrop::mdp::seeded_rng;
use proptest::prelude::*;

fn grid() -> Vec<RunConfig> {
    let mut out = Vec::new();
    for (name, algorithm) in [
        (DomainName::Sysadmin, Algorithm::Mcts),
        (DomainName::Sysadmin, Algorithm::OgaCad),
        (DomainName::Navigation, Algorithm::OgaIaad),
        (DomainName::GameOfLife, Algorithm::Oga),
    ] {
        let mut cfg = RunConfig::new(DomainSpec::small(name), algorithm, 60);
        cfg.lambda = Some(2.0);
        cfg.horizon = 10;
        cfg.episodes = 5;
        cfg.bootstrap_resamples = 1000;
        if algorithm.uses_abstraction() {
            cfg.eps_a = Some(EpsA(1.0));
        }
        out.push(cfg);
    }
    out
}

/// CSV text with the timing column blanked.
fn csv_without_timing(report: &BenchmarkReport) -> String {
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let timing = CSV_COLUMNS.iter().position(|c| *c == "mean_decision_ms").unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let mut out = String::new();
    for row in reader.records() {
        let row = row.unwrap();
        let fields: Vec<&str> = row.iter().enumerate().map(|(i, f)| if i == timing { "" } else { f }).collect();
        out += &fields.join(",");
        out.push('\n');
    }
    out
}

#[test]
fn csv_is_independent_of_parallelism() {
    let one = run_benchmark(&grid(), 1, None).unwrap();
    let three = run_benchmark(&grid(), 3, None).unwrap();
    assert_eq!(one.failures(), 0);
    assert_eq!(csv_without_timing(&one), csv_without_timing(&three));
    assert_eq!(csv_without_timing(&one).lines().count(), 20);
}

#[test]
fn summaries_match_episode_rows() {
    let report = run_benchmark(&grid(), 2, None).unwrap();
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_COLUMNS);
    let ret = CSV_COLUMNS.iter().position(|c| *c == "return").unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    for s in &report.summaries {
        let returns: Vec<f64> = rows.iter().filter(|r| r[0] == s.run_id).map(|r| r[ret].parse().unwrap()).collect();
        assert_eq!(returns.len(), 5);
        assert!((mean(&returns) - s.mean_return).abs() < 1e-9);
        assert!(s.ci_lo <= s.mean_return && s.mean_return <= s.ci_hi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn bootstrap_interval_brackets_the_sample_mean(xs in proptest::collection::vec(-100.0f64..100.0, 1..60), seed in any::<u64>()) {
        let (lo, hi) = bootstrap_ci(&xs, 0.99, 1000, &mut seeded_rng(seed, 2)).unwrap();
        let m = mean(&xs);
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= lo && lo <= hi && hi <= max);
        prop_assert!(lo <= m + 1e-9 && m <= hi + 1e-9);
    }
}
