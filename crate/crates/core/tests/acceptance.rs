//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails. Criteria 9 and 10 take tens of minutes on one core and
//! run only with `LVT_EXTENDED=1` or `--extended`.

use std::f64::consts::FRAC_PI_2;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;

use lvt::analytic::{self, LegendreLhvModel};
use lvt::construct::{assemble_model, make_frame_with_floor, validate_model, weights_with_floor, SettingsEnsemble, DEFAULT_RHO_MIN};
use lvt::inequalities::{self, OptimizerBudget};
use lvt::model::{legendre, quantum_joint};
use lvt::oracle::{linear_response_ceiling, max_visibility_lp};
use lvt::quadrature::{sphere_quadrature, SphereRule};
use lvt::rng;
use lvt::search::{self, SearchConfig};
use lvt::{Direction, Outcome, VisibilityEstimate, Visibility};

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict { passed, detail: detail.into() }
    }
}

fn run(id: &str, limit: Duration, check: impl FnOnce() -> Verdict) -> bool {
    let started = Instant::now();
    let verdict = check();
    let elapsed = started.elapsed();
    let in_time = elapsed <= limit;
    let passed = verdict.passed && in_time;
    println!(
        "{} criterion {id}: {} [{:.2} s / {} s{}]",
        if passed { "PASS" } else { "FAIL" },
        verdict.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", over time" }
    );
    passed
}

fn analytic_threshold() -> Verdict {
    let v = analytic::analytic_threshold().value();
    let flip = analytic::bisect_positivity_flip(1e-12);
    let exact = v == 1.0 / 3.0;
    let flip_ok = (flip - 1.0 / 3.0).abs() <= 1e-10;
    Verdict::new(exact && flip_ok, format!("threshold {v}, positivity flip at {flip:.13}"))
}

fn reconstruction_identity() -> Verdict {
    let rule = SphereRule::new(8).unwrap();
    let mut r = rng::stream(2, 0);
    let (mut closed, mut quad) = (0.0f64, 0.0f64);
    for v in [0.0, 0.1, 1.0 / 3.0] {
        let vis = Visibility::new(v).unwrap();
        let model = LegendreLhvModel::for_visibility(vis);
        for _ in 0..50 {
            let a = Direction::random(&mut r);
            let b = Direction::random(&mut r);
            let m = Outcome::BOTH[r.random_range(0..2)];
            let m2 = Outcome::BOTH[r.random_range(0..2)];
            let reference = model.reconstruct_joint(m, m2, &a, &b);
            closed = closed.max((reference - quantum_joint(m, m2, &a, &b, vis)).abs());
            quad = quad.max((model.quadrature_joint(m, m2, &a, &b, &rule) - reference).abs());
        }
    }
    Verdict::new(
        closed < 1e-12 && quad < 1e-10,
        format!("max closed-form error {closed:.1e}, max quadrature error {quad:.1e}"),
    )
}

fn orthogonality_identity() -> Verdict {
    let mut r = rng::stream(3, 0);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let a = Direction::random(&mut r);
        let b = Direction::random(&mut r);
        for j in 0..=4 {
            for k in 0..=4 {
                let integral =
                    sphere_quadrature(|l| legendre(j, a.dot(l)).unwrap() * legendre(k, b.dot(l)).unwrap(), 8).unwrap();
                let expected = if j == k { legendre(j, a.dot(&b)).unwrap() / (2 * j + 1) as f64 } else { 0.0 };
                worst = worst.max((integral - expected).abs());
            }
        }
    }
    Verdict::new(worst < 1e-10, format!("max residual {worst:.1e}"))
}

fn constructive_soundness() -> Verdict {
    let mut r = rng::stream(4, 0);
    let (mut failures, mut worst) = (0, 0.0f64);
    for trial in 0..200u64 {
        let n = r.random_range(1..=10);
        let m = r.random_range(4..=16);
        let settings = SettingsEnsemble::random(n, &mut r).unwrap();
        let raw: Vec<f64> = (0..m).map(|_| r.random::<f64>()).collect();
        let rho = weights_with_floor(&raw, DEFAULT_RHO_MIN).unwrap();
        let frame = make_frame_with_floor(&rho, DEFAULT_RHO_MIN, rng::child_seed(4, trial)).unwrap();
        let model = assemble_model(&settings, &frame);
        let report = validate_model(&model, &settings, 1e-9).unwrap();
        worst = worst.max(report.max_violation());
        if !report.passed {
            failures += 1;
        }
    }
    Verdict::new(failures == 0, format!("{failures}/200 models invalid, max violation {worst:.1e}"))
}

fn bell_threshold() -> Verdict {
    let opt = inequalities::bell_threshold_numeric(&OptimizerBudget::default());
    let residual = opt.config.residual();
    Verdict::new(
        (opt.threshold - 2.0 / 3.0).abs() <= 1e-3 && residual < 0.05,
        format!("threshold {:.6}, |a+c-b| = {residual:.1e}", opt.threshold),
    )
}

fn chsh_threshold() -> Verdict {
    let opt = inequalities::chsh_threshold_numeric(&OptimizerBudget::default());
    Verdict::new(
        (opt.threshold - 0.5f64.sqrt()).abs() <= 1e-3 && (opt.phi - FRAC_PI_2).abs() <= 0.02,
        format!("threshold {:.6}, phi = {:.4}", opt.threshold, opt.phi),
    )
}

/// Hidden states for the oracle comparison; four states fall short of the
/// oracle already at N = 3.
const ORACLE_M: usize = 8;
const ORACLE_RESTARTS: usize = 8;

fn oracle_agreement() -> Verdict {
    let cfg = SearchConfig { m_states: ORACLE_M, restarts: ORACLE_RESTARTS, ..SearchConfig::default() };
    let minimal = SearchConfig::default();
    let mut lines = Vec::new();
    let mut passed = true;
    for n in [2usize, 3, 4] {
        let mut r = rng::stream(7, n as u64);
        let (mut above, mut below, mut worst_gap, mut ceiling_limited, mut minimal_below) = (0, 0, 0.0f64, 0, 0);
        for i in 0..20u64 {
            let settings = SettingsEnsemble::random(n, &mut r).unwrap();
            let oracle = max_visibility_lp(&settings).unwrap().value;
            let seed = rng::child_seed(7, i);
            let (_, est) = search::inner_maximize(&settings, &cfg.with_n(n).with_seed(seed)).unwrap();
            if est.value > oracle + 5e-3 {
                above += 1;
            }
            if est.value < oracle - 0.02 {
                below += 1;
                worst_gap = worst_gap.max(oracle - est.value);
                let ceiling = if n >= 3 { linear_response_ceiling(&settings).unwrap() } else { f64::NAN };
                if ceiling < oracle - 0.02 {
                    ceiling_limited += 1;
                }
            }
            let (_, four) = search::inner_maximize(&settings, &minimal.with_n(n).with_seed(seed)).unwrap();
            if four.value < oracle - 0.02 {
                minimal_below += 1;
            }
        }
        passed &= above == 0 && below == 0;
        lines.push(format!(
            "N={n}: {above} above, {below} below (worst gap {worst_gap:.3}, {ceiling_limited} with linear-response ceiling below tolerance; M=4: {minimal_below} below)"
        ));
    }
    Verdict::new(passed, format!("M={ORACLE_M} {}", lines.join("; ")))
}

fn within_two_sigma_decrease(e: &[VisibilityEstimate]) -> bool {
    e.windows(2).all(|w| w[1].value <= w[0].value + 2.0 * w[0].std_error.hypot(w[1].std_error))
}

fn describe(e: &[VisibilityEstimate]) -> String {
    e.iter()
        .map(|e| format!("N={}: {:.4}±{:.4}", e.n_settings.unwrap_or(0), e.value, e.std_error))
        .collect::<Vec<_>>()
        .join(", ")
}

fn small_sweep_trend() -> Verdict {
    let report = search::n_sweep(&[3, 10, 30, 100], &SearchConfig::default()).unwrap();
    let e = &report.estimates;
    let complete = report.failures.is_empty() && e.len() == 4;
    let floor = e.iter().all(|e| e.value >= 1.0 / 3.0 - 2.0 * e.std_error);
    Verdict::new(complete && within_two_sigma_decrease(e) && floor, describe(e))
}

fn dense_outer_minimum() -> Verdict {
    let est = search::outer_minimize(&SearchConfig::default().with_n(1000)).unwrap();
    Verdict::new((0.36..=0.38).contains(&est.value), format!("N=1000: {:.4}±{:.4}", est.value, est.std_error))
}

fn extrapolated_limit() -> Verdict {
    let report = search::n_sweep(&[3, 10, 30, 100, 300, 1000], &SearchConfig::default()).unwrap();
    let fit = search::extrapolate(&report.estimates).unwrap();
    Verdict::new(
        (0.30..=0.36).contains(&fit.v_inf),
        format!("V_inf {:.4}±{:.4} (alpha {}) from {}", fit.v_inf, fit.estimate.std_error, fit.alpha, describe(&report.estimates)),
    )
}

fn lvt(args: &[&str]) -> (Vec<u8>, bool) {
    let out = Command::new(env!("CARGO_BIN_EXE_lvt")).args(args).output().expect("lvt binary runs");
    (out.stdout, out.status.success())
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let csv = csv.to_str().unwrap();
    let commands: [&[&str]; 6] = [
        &["analytic", "--scan", "0.3:0.4:0.01"],
        &["bell", "--seed", "5"],
        &["chsh", "--seed", "5"],
        &["oracle", "--random", "6", "--seed", "5"],
        &["construct", "--random", "8", "--m", "9", "--seed", "5"],
        &["search", "--n", "3,6", "--outer-iters", "3", "--inner-iters", "3000", "--seed", "5", "--out", csv],
    ];
    let mut mismatched = Vec::new();
    for cmd in commands {
        let args: Vec<&str> = cmd.iter().copied().chain(["--json", "--threads", "2"]).collect();
        let (first, ok1) = lvt(&args);
        let first_csv = std::fs::read(csv).unwrap_or_default();
        let (second, ok2) = lvt(&args);
        let second_csv = std::fs::read(csv).unwrap_or_default();
        if !(ok1 && ok2) || first.is_empty() || first != second || first_csv != second_csv {
            mismatched.push(cmd[0]);
        }
    }
    Verdict::new(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} commands byte-identical across repeated runs", commands.len())
        } else {
            format!("differing or failed: {}", mismatched.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let extended = std::env::var("LVT_EXTENDED").is_ok_and(|v| v == "1") || std::env::args().any(|a| a == "--extended");
    let secs = Duration::from_secs;
    let mut results = vec![
        run("1 analytic threshold", secs(1), analytic_threshold),
        run("2 reconstruction identity", secs(5), reconstruction_identity),
        run("3 orthogonality identity", secs(5), orthogonality_identity),
        run("4 constructive soundness", secs(10), constructive_soundness),
        run("5 Bell threshold", secs(10), bell_threshold),
        run("6 CHSH threshold", secs(10), chsh_threshold),
        run("7 oracle agreement", secs(120), oracle_agreement),
        run("8 small-N sweep trend", secs(600), small_sweep_trend),
    ];
    if extended {
        results.push(run("9 N=1000 outer minimum", secs(6 * 3600), dense_outer_minimum));
        results.push(run("10 extrapolated limit", secs(6 * 3600), extrapolated_limit));
    } else {
        println!("SKIP criterion 9 N=1000 outer minimum: extended, set LVT_EXTENDED=1");
        println!("SKIP criterion 10 extrapolated limit: extended, set LVT_EXTENDED=1");
    }
    results.push(run("11 determinism", secs(60), determinism));
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
