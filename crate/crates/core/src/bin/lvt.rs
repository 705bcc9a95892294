use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use lvt::analytic::{self, LegendreLhvModel};
use lvt::construct::{
    assemble_model, gram_svd, make_frame_with_floor, validate_model, weights_with_floor, SettingsEnsemble,
    DEFAULT_RHO_MIN, MIN_STATES,
};
use lvt::inequalities::{self, OptimizerBudget};
use lvt::oracle::{self, MAX_ORACLE_N};
use lvt::record::{write_csv, RunRecord};
use lvt::rng;
use lvt::search::{self, SearchConfig};
use lvt::{Error, Provenance, VisibilityEstimate};

/// Runs without `--long` must project below this many seconds.
const LONG_RUN_SECONDS: f64 = 60.0;
/// Stream that draws `--random` settings; shared by every command.
const SETTINGS_STREAM: u64 = 0x5E77;
const VALIDATION_TOL: f64 = 1e-9;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RESOURCE: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "lvt", version, about = "Threshold visibility of local hidden-variable models for the singlet state")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print the run record as JSON instead of a summary.
    #[arg(long, global = true)]
    json: bool,

    /// Record wall times in the JSON record and CSV (makes output vary between runs).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form threshold of the rotation-invariant model.
    Analytic(AnalyticArgs),
    /// Monte-Carlo max-min search over a sweep of settings counts.
    Search(SearchArgs),
    /// Exact maximum visibility for fixed settings by linear programming.
    Oracle(OracleArgs),
    /// Bell threshold (with strict anticorrelation) by numerical optimization.
    Bell(InequalityArgs),
    /// CHSH threshold by numerical optimization.
    Chsh(InequalityArgs),
    /// Assemble one model from a random frame and validate it.
    Construct(ConstructArgs),
}

#[derive(Args, Debug, Serialize)]
struct AnalyticArgs {
    /// Positivity scan `start:stop:step` over the visibility.
    #[arg(long, value_parser = parse_scan)]
    scan: Option<(f64, f64, f64)>,
}

#[derive(Args, Debug, Serialize)]
struct SearchArgs {
    /// Settings counts, comma separated and ascending.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    n: Vec<usize>,
    /// Hidden states.
    #[arg(long, default_value_t = MIN_STATES)]
    m: usize,
    #[arg(long, env = "LVT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SearchConfig::default().inner_iters)]
    inner_iters: usize,
    #[arg(long, default_value_t = SearchConfig::default().outer_iters)]
    outer_iters: usize,
    #[arg(long, default_value_t = SearchConfig::default().restarts)]
    restarts: usize,
    /// Base step scale of the climb.
    #[arg(long, default_value_t = SearchConfig::default().step_scale)]
    step: f64,
    #[arg(long, default_value_t = SearchConfig::default().patience)]
    patience: usize,
    #[arg(long, default_value_t = DEFAULT_RHO_MIN)]
    rho_min: f64,
    /// Fixed settings file; runs only the inner maximization on it.
    #[arg(long, conflicts_with = "n")]
    settings: Option<PathBuf>,
    /// Write the estimate table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit `V(N) = V_inf + c N^-alpha` over the sweep.
    #[arg(long)]
    extrapolate: bool,
    /// Allow runs projected to take longer than a minute.
    #[arg(long)]
    long: bool,
}

impl SearchArgs {
    fn config(&self) -> SearchConfig {
        SearchConfig {
            n_settings: self.n.first().copied().unwrap_or(1),
            m_states: self.m,
            inner_iters: self.inner_iters,
            outer_iters: self.outer_iters,
            restarts: self.restarts,
            step_scale: self.step,
            patience: self.patience,
            seed: self.seed,
            rho_min: self.rho_min,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SettingsSource {
    /// Settings file: `{"a": [[x,y,z], ...], "b": [...]}`.
    #[arg(long, conflicts_with = "random")]
    settings: Option<PathBuf>,
    /// Draw N random settings per side from the seed.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, env = "LVT_SEED", default_value_t = 0)]
    seed: u64,
    /// Also write the settings used to this file.
    #[arg(long)]
    save_settings: Option<PathBuf>,
}

impl SettingsSource {
    fn load(&self) -> Result<SettingsEnsemble, Error> {
        let settings = match (&self.settings, self.random) {
            (Some(path), _) => SettingsEnsemble::from_json(&fs::read_to_string(path)?)?,
            (None, Some(n)) => SettingsEnsemble::random(n, &mut rng::stream(self.seed, SETTINGS_STREAM))?,
            (None, None) => return Err(Error::InvalidInput("pass --settings FILE or --random N".into())),
        };
        if let Some(path) = &self.save_settings {
            fs::write(path, settings.to_json()?)?;
        }
        Ok(settings)
    }
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    #[command(flatten)]
    source: SettingsSource,
}

#[derive(Args, Debug, Serialize)]
struct InequalityArgs {
    #[arg(long, env = "LVT_SEED", default_value_t = 0)]
    seed: u64,
    /// Independent local searches.
    #[arg(long, default_value_t = OptimizerBudget::default().starts)]
    starts: usize,
}

#[derive(Args, Debug, Serialize)]
struct ConstructArgs {
    #[command(flatten)]
    source: SettingsSource,
    #[arg(long, default_value_t = MIN_STATES)]
    m: usize,
    #[arg(long, default_value_t = DEFAULT_RHO_MIN)]
    rho_min: f64,
}

fn parse_scan(text: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err("expected start:stop:step".into());
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    Ok((num(parts[0])?, num(parts[1])?, num(parts[2])?))
}

/// Outcome of a command before printing.
struct Output {
    record: RunRecord,
    summary: String,
    /// CSV destination with per-row wall times.
    csv: Option<(PathBuf, Vec<Option<f64>>)>,
    partial: bool,
}

impl Output {
    fn new(record: RunRecord, summary: String) -> Self {
        Output { record, summary, csv: None, partial: false }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let started = Instant::now();
    let result = match &cli.command {
        Command::Analytic(args) => run_analytic(args),
        Command::Search(args) => run_search(args, cli.timing),
        Command::Oracle(args) => run_oracle(args),
        Command::Bell(args) => run_bell(args),
        Command::Chsh(args) => run_chsh(args),
        Command::Construct(args) => run_construct(args),
    };
    let elapsed = started.elapsed().as_secs_f64();
    match result.and_then(|out| emit(out, &cli, elapsed)) {
        Ok(partial) => {
            eprintln!("wall time {elapsed:.3} s");
            if partial {
                ExitCode::from(EXIT_PARTIAL)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidInput(_) => EXIT_USAGE,
                Error::ResourceLimit(_) => EXIT_RESOURCE,
                _ => EXIT_FAILURE,
            })
        }
    }
}

fn emit(mut out: Output, cli: &Cli, elapsed: f64) -> Result<bool, Error> {
    if cli.timing {
        out.record.wall_time_s = Some(elapsed);
    }
    if let Some((path, times)) = &out.csv {
        let file = fs::File::create(path)?;
        write_csv(file, &out.record.estimates, times)?;
    }
    if cli.json {
        println!("{}", out.record.to_json()?);
    } else {
        print!("{}", out.summary);
    }
    Ok(out.partial)
}

fn config_value<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn run_analytic(args: &AnalyticArgs) -> Result<Output, Error> {
    let threshold = analytic::analytic_threshold();
    let model = LegendreLhvModel::for_visibility(threshold);
    let flip = analytic::bisect_positivity_flip(1e-12);
    let mut record = RunRecord::new("analytic", config_value(args), 0);
    record.estimates.push(VisibilityEstimate::exact(threshold.value(), Provenance::Analytic));
    let mut summary = format!(
        "threshold visibility {}\nboundary response coefficients {:?}\npositivity flips at {flip:.12}\n",
        threshold.value(),
        model.coefficients()
    );
    let mut details = json!({ "coefficients": model.coefficients(), "positivity_flip": flip });
    if let Some((start, stop, step)) = args.scan {
        let scan = analytic::positivity_scan(start, stop, step)?;
        summary.push_str("visibility,c1,min_response,valid\n");
        for p in &scan {
            summary.push_str(&format!("{},{},{},{}\n", p.visibility, p.c1, p.min_response, p.valid));
        }
        details["scan"] = serde_json::to_value(&scan)?;
    }
    record.details = details;
    Ok(Output::new(record, summary))
}

fn run_search(args: &SearchArgs, timing: bool) -> Result<Output, Error> {
    let cfg = args.config();
    cfg.validate()?;
    let mut record = RunRecord::new("search", config_value(args), args.seed);

    if let Some(path) = &args.settings {
        let settings = SettingsEnsemble::from_json(&fs::read_to_string(path)?)?;
        let projected = search::projected_seconds(&[settings.len()], &SearchConfig { outer_iters: 1, ..cfg.clone() });
        check_budget(projected, args.long)?;
        let started = Instant::now();
        let (model, estimate) = search::inner_maximize(&settings, &cfg.with_n(settings.len()))?;
        let report = validate_model(&model, &settings, VALIDATION_TOL)?;
        let summary = format!(
            "N={} inner maximum {} ({} climb steps, model valid: {})\n",
            settings.len(),
            estimate.value,
            estimate.iterations_used,
            report.passed
        );
        record.details = json!({ "validation": report });
        record.estimates.push(estimate);
        let mut out = Output::new(record, summary);
        out.csv = args.out.clone().map(|p| (p, vec![timing.then(|| started.elapsed().as_secs_f64())]));
        return Ok(out);
    }

    if args.n.is_empty() {
        return Err(Error::InvalidInput("--n needs at least one value".into()));
    }
    if args.n.contains(&0) {
        return Err(Error::InvalidInput("settings counts must be at least 1".into()));
    }
    let projected = search::projected_seconds(&args.n, &cfg);
    check_budget(projected, args.long)?;
    eprintln!("projected wall time {projected:.1} s (single thread)");

    let mut times = Vec::new();
    let mut last = Instant::now();
    let report = search::n_sweep_with(&args.n, &cfg, |est| {
        let dt = last.elapsed().as_secs_f64();
        last = Instant::now();
        times.push(timing.then_some(dt));
        eprintln!(
            "N={} V={:.6} ± {:.6} ({} climb steps, {dt:.2} s)",
            est.n_settings.unwrap_or(0),
            est.value,
            est.std_error,
            est.iterations_used
        );
    })?;
    for (n, err) in &report.failures {
        eprintln!("N={n} failed: {err}");
    }

    let mut summary = String::from("n,visibility,std_error\n");
    for e in &report.estimates {
        summary.push_str(&format!("{},{},{}\n", e.n_settings.unwrap_or(0), e.value, e.std_error));
    }
    let mut details = json!({
        "failures": report.failures.iter().map(|(n, e)| json!({"n": n, "error": e})).collect::<Vec<_>>(),
    });
    let mut estimates = report.estimates.clone();
    if args.extrapolate {
        let fit = search::extrapolate(&report.estimates)?;
        summary.push_str(&format!(
            "extrapolated V_inf {} ± {} (alpha {}, c {})\n",
            fit.v_inf, fit.estimate.std_error, fit.alpha, fit.c
        ));
        details["extrapolation"] = json!({
            "v_inf": fit.v_inf,
            "c": fit.c,
            "alpha": fit.alpha,
            "residual_ss": fit.residual_ss,
        });
        estimates.push(fit.estimate);
        times.push(None);
    }
    if estimates.is_empty() {
        return Err(Error::ConstructionFailure("every settings count in the sweep failed".into()));
    }
    record.estimates = estimates;
    record.details = details;
    let partial = !report.failures.is_empty();
    let mut out = Output::new(record, summary);
    out.csv = args.out.clone().map(|p| (p, times));
    out.partial = partial;
    Ok(out)
}

fn check_budget(projected: f64, long: bool) -> Result<(), Error> {
    if projected > LONG_RUN_SECONDS && !long {
        return Err(Error::ResourceLimit(format!(
            "projected wall time {projected:.0} s exceeds {LONG_RUN_SECONDS:.0} s; pass --long to run anyway"
        )));
    }
    Ok(())
}

fn run_oracle(args: &OracleArgs) -> Result<Output, Error> {
    let settings = args.source.load()?;
    if settings.len() > MAX_ORACLE_N {
        return Err(Error::ResourceLimit(format!(
            "oracle supports N <= {MAX_ORACLE_N}; got N = {}",
            settings.len()
        )));
    }
    let mut estimate = oracle::max_visibility_lp(&settings)?;
    estimate.seed = args.source.seed;
    let ceiling = if settings.len() <= oracle::MAX_CEILING_N && gram_svd(&settings).rank() == 3 {
        Some(oracle::linear_response_ceiling(&settings)?)
    } else {
        None
    };
    let mut summary = format!("N={} exact maximum visibility {}\n", settings.len(), estimate.value);
    if let Some(c) = ceiling {
        summary.push_str(&format!("linear-response ceiling {c}\n"));
    }
    let mut record = RunRecord::new("oracle", config_value(args), args.source.seed);
    record.details = json!({
        "settings": serde_json::from_str::<serde_json::Value>(&settings.to_json()?)?,
        "linear_response_ceiling": ceiling,
    });
    record.estimates.push(estimate);
    Ok(Output::new(record, summary))
}

fn budget(args: &InequalityArgs) -> Result<OptimizerBudget, Error> {
    if args.starts == 0 {
        return Err(Error::InvalidInput("--starts must be at least 1".into()));
    }
    Ok(OptimizerBudget { starts: args.starts, seed: args.seed, ..OptimizerBudget::default() })
}

fn run_bell(args: &InequalityArgs) -> Result<Output, Error> {
    let opt = inequalities::bell_threshold_numeric(&budget(args)?);
    let mut record = RunRecord::new("bell", config_value(args), args.seed);
    record.estimates.push(VisibilityEstimate {
        value: opt.threshold,
        std_error: 0.0,
        n_settings: None,
        provenance: Provenance::Bell,
        seed: args.seed,
        iterations_used: opt.evaluations,
    });
    let summary = format!(
        "Bell threshold {} (closed form {}); best |a + c - b| = {:.3e}\n",
        opt.threshold,
        inequalities::BELL_THRESHOLD,
        opt.config.residual()
    );
    record.details = json!({ "optimum": opt, "closed_form": inequalities::BELL_THRESHOLD });
    Ok(Output::new(record, summary))
}

fn run_chsh(args: &InequalityArgs) -> Result<Output, Error> {
    let opt = inequalities::chsh_threshold_numeric(&budget(args)?);
    let mut record = RunRecord::new("chsh", config_value(args), args.seed);
    record.estimates.push(VisibilityEstimate {
        value: opt.threshold,
        std_error: 0.0,
        n_settings: None,
        provenance: Provenance::Chsh,
        seed: args.seed,
        iterations_used: opt.evaluations,
    });
    let summary = format!(
        "CHSH threshold {} (closed form {}); best angle between b and b' = {:.6} rad\n",
        opt.threshold,
        inequalities::CHSH_THRESHOLD,
        opt.phi
    );
    record.details = json!({
        "optimum": opt,
        "closed_form": inequalities::CHSH_THRESHOLD,
        "prior_bounds": [
            inequalities::PRIOR_BOUND_COPLANAR,
            inequalities::PRIOR_BOUND_QUARTER_PI,
            inequalities::PRIOR_BOUND_THREE_QUARTERS,
        ],
    });
    Ok(Output::new(record, summary))
}

fn run_construct(args: &ConstructArgs) -> Result<Output, Error> {
    if args.m < MIN_STATES {
        return Err(Error::InvalidInput(format!("--m must be at least {MIN_STATES}")));
    }
    let settings = args.source.load()?;
    let seed = args.source.seed;
    let mut r = rng::stream(seed, 0);
    let raw: Vec<f64> = (0..args.m).map(|_| rand::Rng::random::<f64>(&mut r)).collect();
    let rho = weights_with_floor(&raw, args.rho_min)?;
    let frame = make_frame_with_floor(&rho, args.rho_min, rng::child_seed(seed, 1))?;
    let model = assemble_model(&settings, &frame);
    let report = validate_model(&model, &settings, VALIDATION_TOL)?;
    let svd = gram_svd(&settings);
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|j| m.row(j).iter().copied().collect()).collect()
    };
    let mut record = RunRecord::new("construct", config_value(args), seed);
    record.estimates.push(VisibilityEstimate {
        value: model.visibility.value(),
        std_error: 0.0,
        n_settings: Some(settings.len()),
        provenance: Provenance::McSearch,
        seed,
        iterations_used: 1,
    });
    record.details = json!({
        "singular_values": svd.p,
        "rho": model.rho,
        "a_table": rows(&model.a_table),
        "b_table": rows(&model.b_table),
        "validation": report,
    });
    let summary = format!(
        "N={} M={} visibility {} (singular values {:?}); validation {} (max violation {:.2e})\n",
        settings.len(),
        args.m,
        model.visibility.value(),
        svd.p,
        if report.passed { "passed" } else { "FAILED" },
        report.max_violation()
    );
    let mut out = Output::new(record, summary);
    out.partial = !report.passed;
    Ok(out)
}
