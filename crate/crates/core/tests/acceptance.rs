//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness
//! so the lines always reach the console.
//!
//! A criterion listed in `KNOWN_RED` may fail without failing the run; the list
//! must match the observed failures exactly, so a fix or a new regression both
//! surface as a failed run.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use trunc_auction::equilibrium::{optimal_screening, RegularityPolicy};
use trunc_auction::identification::IdentifyOptions;
use trunc_auction::oracle::{prop5_counterexample, Check};
use trunc_auction::verify::{
    derivative_factor_arbitration, equilibrium_checks, lemma1_suite, roundtrip_suite, twin_checks, worked_example_checks,
};
use trunc_auction::{Format, SellerPreferences, ValueDistribution};

const SEED: u64 = 7;

/// First-price sellers with CRRA utility: the grid argmax moves with N. Analysed in
/// the decisions ledger.
const KNOWN_RED: &[u32] = &[2];

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    elapsed: Duration,
    details: Vec<String>,
}

fn failed_checks(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}: observed {:.6}, target {:.6}, tol {}", c.name, c.observed, c.target, c.tolerance))
        .collect()
}

fn timed(
    id: u32,
    title: &'static str,
    budget: Duration,
    f: impl FnOnce() -> (bool, Vec<String>),
) -> Outcome {
    let start = Instant::now();
    let (mut pass, mut details) = f();
    let elapsed = start.elapsed();
    if elapsed > budget {
        pass = false;
        details.push(format!("runtime {:.1}s exceeds {:.0}s", elapsed.as_secs_f64(), budget.as_secs_f64()));
    }
    Outcome { id, title, pass, elapsed, details }
}

fn criterion_1() -> Outcome {
    timed(1, "counterexample shares, floor mass, conditional CDF, invalid share", Duration::from_secs(10), || {
        let report = prop5_counterexample(200_000, SEED).expect("counterexample runs");
        let checks: Vec<Check> = report.checks.into_iter().filter(|c| !c.name.starts_with("ks_")).collect();
        (checks.iter().all(|c| c.pass), failed_checks(&checks))
    })
}

fn criterion_2() -> Outcome {
    timed(2, "optimal screening invariant in N across laws, utilities, outside options, formats", Duration::from_secs(60), || {
        let cases = lemma1_suite(10_001).expect("invariance suite runs");
        let details: Vec<String> = cases
            .iter()
            .filter(|c| !(c.invariant && c.foc_ok))
            .map(|c| {
                let argmax: Vec<String> = c.argmax.iter().map(|(n, a)| format!("N={n}:{a:.4}")).collect();
                format!(
                    "{} {} v0={} {:?}: spread {} steps, foc ok {}, argmax {}",
                    c.distribution,
                    c.utility,
                    c.outside_option,
                    c.format,
                    c.spread_steps,
                    c.foc_ok,
                    argmax.join(" ")
                )
            })
            .collect();
        (details.is_empty(), details)
    })
}

fn criterion_3() -> Outcome {
    timed(3, "uniform optimal reserve is one half", Duration::from_secs(1), || {
        let d = ValueDistribution::uniform(0.0, 1.0).expect("uniform");
        let rn = SellerPreferences::risk_neutral(0.0);
        let mut details = Vec::new();
        for format in [Format::FirstPrice, Format::SecondPrice] {
            let s = optimal_screening(&d, &rn, format, 2, RegularityPolicy::Warn).expect("screening solves");
            if (s.alpha - 0.5).abs() > 1e-9 {
                details.push(format!("{format:?}: {}", s.alpha));
            }
        }
        (details.is_empty(), details)
    })
}

fn criterion_4() -> Outcome {
    timed(4, "round-trip identification over the conclusion table", Duration::from_secs(15 * 60), || {
        let cells = roundtrip_suite(1_000_000, 10_000, SEED, &IdentifyOptions::default()).expect("round trip runs");
        let mut details = Vec::new();
        for c in &cells {
            println!("    {} {} expected {:?} observed {:?}", if c.pass { "ok  " } else { "FAIL" }, c.cell, c.expected, c.observed);
            if !c.pass {
                details.push(format!("{}: {:?} {:?}", c.cell, c.message, failed_checks(&c.checks)));
            }
        }
        (details.is_empty(), details)
    })
}

fn criterion_5() -> Outcome {
    timed(5, "twins reproduce the price law with distinct values; counterexample price laws coincide", Duration::from_secs(120), || {
        let mut checks = twin_checks(1_000_000, SEED).expect("twins build");
        let report = prop5_counterexample(200_000, SEED).expect("counterexample runs");
        checks.extend(report.checks.into_iter().filter(|c| c.name.starts_with("ks_")));
        (checks.iter().all(|c| c.pass), failed_checks(&checks))
    })
}

fn criterion_6() -> Outcome {
    timed(6, "equilibrium bid ODE residual, entry boundary bid, entry best response", Duration::from_secs(60), || {
        let checks = equilibrium_checks().expect("equilibrium checks run");
        (checks.iter().all(|c| c.pass), failed_checks(&checks))
    })
}

fn criterion_7() -> Outcome {
    timed(7, "three-auction replay reproduces the observed tables exactly", Duration::from_secs(1), || {
        let checks = worked_example_checks().expect("replay runs");
        (checks.iter().all(|c| c.pass), failed_checks(&checks))
    })
}

fn criterion_8() -> Outcome {
    timed(8, "derivative-factor arbitration records the variant meeting 0.05", Duration::from_secs(120), || {
        let arb = derivative_factor_arbitration(1_000_000, SEED).expect("arbitration runs");
        for t in &arb.trials {
            println!("    {}: chain rule {:.4}, printed {:.4}", t.cell, t.chain_rule_error, t.printed_error);
        }
        println!("    meeting tolerance: {:?}", arb.meets);
        let pass = !arb.meets.is_empty();
        (pass, if pass { Vec::new() } else { vec!["neither variant meets the tolerance".into()] })
    })
}

fn main() -> ExitCode {
    let runs: [fn() -> Outcome; 8] =
        [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8];
    let mut red = Vec::new();
    for run in runs {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let known = if !o.pass && KNOWN_RED.contains(&o.id) { " [known red, see decisions ledger]" } else { "" };
        println!("criterion {} {tag}{known}: {} ({:.1}s)", o.id, o.title, o.elapsed.as_secs_f64());
        for d in &o.details {
            println!("    {d}");
        }
        if !o.pass {
            red.push(o.id);
        }
    }
    if red == KNOWN_RED {
        println!("acceptance: {} of 8 criteria pass; red set matches the known list {KNOWN_RED:?}", 8 - red.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: red set {red:?} differs from the known list {KNOWN_RED:?}");
        ExitCode::FAILURE
    }
}
