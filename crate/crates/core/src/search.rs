//! Monte-Carlo max–min search for the threshold visibility.
//!
//! For fixed settings, hill climbing over the auxiliary frame `(q, t, ρ)`
//! maximizes the visibility of the assembled model (inner loop). Over
//! settings, the smallest of these maxima is kept (outer loop): at those
//! settings no frame represents the correlations at a higher visibility.
//! The outer minimum is computed for a sweep of settings counts `N` and
//! extrapolated to `N -> inf`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{
    gram_svd, make_frame_with_floor, weights_with_floor, Assembler, AuxiliaryFrame, DiscreteLhvModel,
    SettingsEnsemble, DEFAULT_RHO_MIN, MIN_STATES,
};
use crate::error::{Error, Result};
use crate::estimate::{Provenance, VisibilityEstimate};
use crate::model::Direction;
use crate::rng::{self, StreamRng};

const OUTER_STREAM: u64 = 1 << 40;
const BOOTSTRAP_STREAM: u64 = (1 << 40) + 1;
const BOOTSTRAP_RESAMPLES: usize = 200;
/// A restart ends once its step factor has been halved this far.
const MIN_STEP_FACTOR: f64 = 1e-6;
const ACCEPT_RUN: usize = 10;
/// Smoothing exponents of the climb stages; `None` is the exact objective.
const SHARPNESS: [Option<i32>; 6] = [Some(8), Some(32), Some(128), Some(512), Some(2048), None];
/// A smoothed stage ends once its step factor has been halved this far.
const STAGE_STEP_FACTOR: f64 = 1e-3;
const STAGE_RESTART_FACTOR: f64 = 0.25;
/// Share of moves that perturb every frame entry instead of a single one.
const JOINT_MOVE_PROB: f64 = 0.5;
/// Angular scale of the local moves applied to the current worst settings.
const SETTINGS_JITTER: f64 = 0.1;
const SWEEP_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Exponents tried when fitting `V(N) = V_inf + c N^(-alpha)`.
pub const EXTRAPOLATION_ALPHAS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_settings: usize,
    pub m_states: usize,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub restarts: usize,
    pub step_scale: f64,
    /// Consecutive rejections before the step is halved.
    pub patience: usize,
    pub seed: u64,
    pub rho_min: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_settings: 10,
            m_states: MIN_STATES,
            inner_iters: 20000,
            outer_iters: 20,
            restarts: 4,
            step_scale: 0.2,
            patience: 60,
            seed: 0,
            rho_min: DEFAULT_RHO_MIN,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        if self.n_settings < 1 {
            return fail("n_settings must be at least 1".into());
        }
        if self.m_states < MIN_STATES {
            return fail(format!("m_states must be at least {MIN_STATES}, got {}", self.m_states));
        }
        if self.inner_iters < 1 || self.outer_iters < 1 || self.restarts < 1 || self.patience < 1 {
            return fail("iteration counts must be at least 1".into());
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return fail(format!("step_scale must be positive, got {}", self.step_scale));
        }
        if !(self.rho_min > 0.0 && self.rho_min * self.m_states as f64 <= 1.0) {
            return fail(format!("rho_min must lie in (0, 1/M], got {}", self.rho_min));
        }
        Ok(())
    }

    pub fn with_n(&self, n_settings: usize) -> Self {
        SearchConfig { n_settings, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SearchConfig { seed, ..self.clone() }
    }
}

/// Gaussian move of one randomly chosen entry of `q`, `t` or `ρ`.
fn perturb_component(frame: &mut AuxiliaryFrame, sigma: f64, rho_min: f64, rng: &mut StreamRng) -> Result<()> {
    let m = frame.states();
    let component = rng.random_range(0..7 * m);
    let noise: f64 = rng.sample(StandardNormal);
    if component < 6 * m {
        let (mat, idx) = if component < 3 * m { (frame.q_mut(), component) } else { (frame.t_mut(), component - 3 * m) };
        let (i, n) = (idx / m, idx % m);
        let row_scale = mat.row(i).norm() / (m as f64).sqrt();
        mat[(i, n)] += sigma * row_scale * noise;
        Ok(())
    } else {
        let n = component - 6 * m;
        let mut free: Vec<f64> = frame.rho().iter().map(|r| r - rho_min).collect();
        let total: f64 = free.iter().sum();
        free[n] += sigma * noise * total / m as f64;
        frame.set_rho(weights_with_floor(&free, rho_min)?);
        Ok(())
    }
}

/// Gaussian move of every entry of `q`, `t` and `ρ` at once, with the total
/// step length matching a single-entry move.
fn perturb_all(frame: &mut AuxiliaryFrame, sigma: f64, rho_min: f64, rng: &mut StreamRng) -> Result<()> {
    let m = frame.states();
    let sigma = sigma / ((7 * m) as f64).sqrt();
    for which in 0..2 {
        let mat = if which == 0 { frame.q_mut() } else { frame.t_mut() };
        for i in 0..3 {
            let row_scale = mat.row(i).norm() / (m as f64).sqrt();
            for n in 0..m {
                let noise: f64 = rng.sample(StandardNormal);
                mat[(i, n)] += sigma * row_scale * noise;
            }
        }
    }
    let mut free: Vec<f64> = frame.rho().iter().map(|r| r - rho_min).collect();
    let total: f64 = free.iter().sum();
    for w in free.iter_mut() {
        let noise: f64 = rng.sample(StandardNormal);
        *w += sigma * noise * total / m as f64;
    }
    frame.set_rho(weights_with_floor(&free, rho_min)?);
    Ok(())
}

struct Climb {
    frame: AuxiliaryFrame,
    visibility: f64,
    evaluations: u64,
    trace: Vec<f64>,
}

/// Log of the balanced inverse visibility `log max|A'| + log max|B'|`
/// (`sharpness = None`) or of its smoothed form with `p`-norms over the
/// table entries in place of the maxima. Returns the objective and the
/// exact visibility.
fn objective(asm: &Assembler, frame: &AuxiliaryFrame, sharpness: Option<i32>) -> (f64, f64) {
    let (a, b) = asm.raw_tables(frame);
    let (ma, mb) = (a.amax(), b.amax());
    if ma == 0.0 || mb == 0.0 {
        return (f64::NEG_INFINITY, 1.0);
    }
    let v = (1.0 / (ma * mb)).min(1.0);
    let obj = match sharpness {
        None => ma.ln() + mb.ln(),
        Some(p) => {
            let norm = |t: &nalgebra::DMatrix<f64>, top: f64| {
                top.ln() + t.iter().map(|x| (x.abs() / top).powi(p)).sum::<f64>().ln() / p as f64
            };
            norm(&a, ma) + norm(&b, mb)
        }
    };
    (obj, v)
}

/// One hill-climbing run from a random frame.
///
/// Moves are accepted when they lower the current objective. The objective
/// starts as a smoothed form of the visibility and sharpens stage by stage
/// towards the exact one; the best exact visibility met is kept.
fn climb(asm: &Assembler, cfg: &SearchConfig, rng: &mut StreamRng, keep_trace: bool) -> Result<Climb> {
    let m = cfg.m_states;
    let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    let rho = weights_with_floor(&raw, cfg.rho_min)?;
    let mut frame = make_frame_with_floor(&rho, cfg.rho_min, rng.random())?;
    asm.balance(&mut frame);
    let mut stage = 0;
    let (mut current, mut best) = objective(asm, &frame, SHARPNESS[0]);
    let mut best_frame = frame.clone();
    let mut evaluations = 1u64;
    let mut trace = Vec::new();
    if keep_trace {
        trace.push(best);
    }

    // each smoothed stage may use at most this many iterations
    let stage_budget = (cfg.inner_iters / SHARPNESS.len()).max(1);
    let mut stage_iters = 0usize;
    let mut factor = 1.0_f64;
    let mut rejections = 0usize;
    let mut acceptances = 0usize;
    for _ in 0..cfg.inner_iters {
        if best >= 1.0 {
            break;
        }
        let last_stage = stage + 1 == SHARPNESS.len();
        if last_stage && factor < MIN_STEP_FACTOR {
            break;
        }
        if !last_stage && (factor < STAGE_STEP_FACTOR || stage_iters >= stage_budget) {
            stage += 1;
            stage_iters = 0;
            current = objective(asm, &frame, SHARPNESS[stage]).0;
            factor = factor.max(STAGE_RESTART_FACTOR);
        }
        stage_iters += 1;
        let sigma = cfg.step_scale * factor;
        let mut candidate = frame.clone();
        if rng.random_bool(JOINT_MOVE_PROB) {
            perturb_all(&mut candidate, sigma, cfg.rho_min, rng)?;
        } else {
            perturb_component(&mut candidate, sigma, cfg.rho_min, rng)?;
        }

        evaluations += 1;
        let outcome = match candidate.project_onto_constraints() {
            Ok(()) => {
                asm.balance(&mut candidate);
                Some(objective(asm, &candidate, SHARPNESS[stage]))
            }
            Err(_) => None,
        };
        match outcome {
            Some((value, v)) if value < current => {
                current = value;
                if v > best {
                    best = v;
                    best_frame = candidate.clone();
                    if keep_trace {
                        trace.push(best);
                    }
                }
                frame = candidate;
                rejections = 0;
                acceptances += 1;
                if acceptances >= ACCEPT_RUN {
                    factor = (factor * 2.0).min(1.0);
                    acceptances = 0;
                }
            }
            _ => {
                acceptances = 0;
                rejections += 1;
                if rejections >= cfg.patience {
                    factor *= 0.5;
                    rejections = 0;
                }
            }
        }
    }
    Ok(Climb { frame: best_frame, visibility: best, evaluations, trace })
}

/// Inner maximization with the accepted-move history of every restart.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub model: DiscreteLhvModel,
    pub estimate: VisibilityEstimate,
    /// Best-so-far visibility after each accepted move, per restart.
    pub traces: Vec<Vec<f64>>,
}

fn inner_run(settings: &SettingsEnsemble, cfg: &SearchConfig, keep_trace: bool) -> Result<InnerOutcome> {
    cfg.validate()?;
    let asm = Assembler::new(&gram_svd(settings));
    let runs: Vec<Result<Climb>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| climb(&asm, cfg, &mut rng::stream(cfg.seed, r as u64), keep_trace))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let evaluations: u64 = runs.iter().map(|c| c.evaluations).sum();
    let traces = runs.iter().map(|c| c.trace.clone()).collect();
    let best = runs
        .into_iter()
        .reduce(|acc, c| if c.visibility > acc.visibility { c } else { acc })
        .expect("restarts >= 1");
    let model = asm.assemble(&best.frame);
    let estimate = VisibilityEstimate {
        value: model.visibility.value(),
        std_error: 0.0,
        n_settings: Some(settings.len()),
        provenance: Provenance::McSearch,
        seed: cfg.seed,
        iterations_used: evaluations,
    };
    Ok(InnerOutcome { model, estimate, traces })
}

/// Largest visibility reachable by hill climbing over frames for fixed
/// settings; best of `cfg.restarts` independent runs.
pub fn inner_maximize(settings: &SettingsEnsemble, cfg: &SearchConfig) -> Result<(DiscreteLhvModel, VisibilityEstimate)> {
    let out = inner_run(settings, cfg, false)?;
    Ok((out.model, out.estimate))
}

pub fn inner_maximize_traced(settings: &SettingsEnsemble, cfg: &SearchConfig) -> Result<InnerOutcome> {
    inner_run(settings, cfg, true)
}

/// Outer minimization with its per-sample inner maxima.
#[derive(Debug, Clone)]
pub struct OuterOutcome {
    pub estimate: VisibilityEstimate,
    pub samples: Vec<f64>,
    pub worst_settings: SettingsEnsemble,
}

fn jitter(settings: &SettingsEnsemble, rng: &mut StreamRng) -> Result<SettingsEnsemble> {
    let mut moved = |side: &[Direction]| -> Result<Vec<Direction>> {
        side.iter()
            .map(|d| {
                let g: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                Direction::normalize(
                    d.x() + SETTINGS_JITTER * g[0],
                    d.y() + SETTINGS_JITTER * g[1],
                    d.z() + SETTINGS_JITTER * g[2],
                )
            })
            .collect()
    };
    let a = moved(settings.a_side())?;
    let b = moved(settings.b_side())?;
    SettingsEnsemble::new(a, b)
}

/// Standard deviation of the minimum over bootstrap resamples.
fn bootstrap_min_error(samples: &[f64], seed: u64) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let mut r = rng::stream(seed, BOOTSTRAP_STREAM);
    let mins: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            (0..samples.len())
                .map(|_| samples[r.random_range(0..samples.len())])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    // shifted by the first draw so identical draws give exactly zero
    let shift = mins[0];
    let mean = mins.iter().map(|x| x - shift).sum::<f64>() / mins.len() as f64;
    let var = mins.iter().map(|x| (x - shift - mean).powi(2)).sum::<f64>() / (mins.len() - 1) as f64;
    var.sqrt()
}

pub fn outer_search(cfg: &SearchConfig) -> Result<OuterOutcome> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, OUTER_STREAM);
    let mut samples = Vec::with_capacity(cfg.outer_iters);
    let mut worst: Option<(f64, SettingsEnsemble)> = None;
    let mut evaluations = 0u64;
    for o in 0..cfg.outer_iters {
        let settings = match &worst {
            Some((_, current)) if r.random_bool(0.5) => jitter(current, &mut r)?,
            _ => SettingsEnsemble::random(cfg.n_settings, &mut r)?,
        };
        let inner_cfg = cfg.with_seed(rng::child_seed(cfg.seed, o as u64));
        let (_, est) = inner_maximize(&settings, &inner_cfg)?;
        evaluations += est.iterations_used;
        samples.push(est.value);
        if worst.as_ref().is_none_or(|(v, _)| est.value < *v) {
            worst = Some((est.value, settings));
        }
    }
    let (value, worst_settings) = worst.expect("outer_iters >= 1");
    let estimate = VisibilityEstimate {
        value,
        std_error: bootstrap_min_error(&samples, cfg.seed),
        n_settings: Some(cfg.n_settings),
        provenance: Provenance::McSearch,
        seed: cfg.seed,
        iterations_used: evaluations,
    };
    Ok(OuterOutcome { estimate, samples, worst_settings })
}

/// Smallest inner maximum over random and locally perturbed settings.
pub fn outer_minimize(cfg: &SearchConfig) -> Result<VisibilityEstimate> {
    Ok(outer_search(cfg)?.estimate)
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub estimates: Vec<VisibilityEstimate>,
    pub failures: Vec<(usize, String)>,
}

/// Seed used for the `index`-th entry of a sweep.
pub fn sweep_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(SWEEP_SEED_STRIDE))
}

/// One outer minimization per settings count; failures are collected and
/// the sweep continues.
pub fn n_sweep(n_values: &[usize], cfg: &SearchConfig) -> Result<SweepReport> {
    n_sweep_with(n_values, cfg, |_| {})
}

/// [`n_sweep`] with a callback after each finished estimate.
pub fn n_sweep_with<F: FnMut(&VisibilityEstimate)>(n_values: &[usize], cfg: &SearchConfig, mut progress: F) -> Result<SweepReport> {
    if n_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("sweep values must be sorted ascending"));
    }
    let mut report = SweepReport::default();
    for (i, &n) in n_values.iter().enumerate() {
        match outer_minimize(&cfg.with_n(n).with_seed(sweep_seed(cfg.seed, i))) {
            Ok(est) => {
                progress(&est);
                report.estimates.push(est);
            }
            Err(e) => report.failures.push((n, e.to_string())),
        }
    }
    Ok(report)
}

/// Least-squares fit of `V(N) = v_inf + c N^(-alpha)`.
#[derive(Debug, Clone, Serialize)]
pub struct Extrapolation {
    pub v_inf: f64,
    pub c: f64,
    pub alpha: f64,
    pub residual_ss: f64,
    pub estimate: VisibilityEstimate,
}

pub fn extrapolate(estimates: &[VisibilityEstimate]) -> Result<Extrapolation> {
    let mut points = Vec::with_capacity(estimates.len());
    for e in estimates {
        let n = e.n_settings.ok_or_else(|| Error::invalid("extrapolation needs finite N"))?;
        points.push((n as f64, e.value, e.std_error));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::invalid(format!("extrapolation needs >= 3 distinct N, got {}", distinct.len())));
    }

    let k = points.len() as f64;
    let mut best: Option<(f64, f64, f64, f64, f64)> = None; // (rss, v_inf, c, alpha, se)
    for alpha in EXTRAPOLATION_ALPHAS {
        let xs: Vec<f64> = points.iter().map(|p| p.0.powf(-alpha)).collect();
        let sx: f64 = xs.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxy: f64 = xs.iter().zip(&points).map(|(x, p)| x * p.1).sum();
        let det = k * sxx - sx * sx;
        if det.abs() < 1e-300 {
            continue;
        }
        let c = (k * sxy - sx * sy) / det;
        let v_inf = (sy - c * sx) / k;
        let rss: f64 = xs.iter().zip(&points).map(|(x, p)| (p.1 - v_inf - c * x).powi(2)).sum();
        // v_inf = Σ w_i y_i with w_i = (sxx - sx x_i) / det
        let propagated: f64 = xs.iter().zip(&points).map(|(x, p)| ((sxx - sx * x) / det * p.2).powi(2)).sum();
        let dof = points.len() as f64 - 2.0;
        let fit_var = if dof > 0.0 { rss / dof * sxx / det } else { 0.0 };
        let se = (fit_var + propagated).sqrt();
        if best.is_none_or(|b| rss < b.0 - 1e-15) {
            best = Some((rss, v_inf, c, alpha, se));
        }
    }
    let (rss, v_inf, c, alpha, se) = best.ok_or_else(|| Error::invalid("degenerate extrapolation data"))?;
    let estimate = VisibilityEstimate {
        value: v_inf.clamp(0.0, 1.0),
        std_error: se,
        n_settings: None,
        provenance: Provenance::McSearch,
        seed: estimates.first().map_or(0, |e| e.seed),
        iterations_used: estimates.iter().map(|e| e.iterations_used).sum(),
    };
    Ok(Extrapolation { v_inf, c, alpha, residual_ss: rss, estimate })
}

/// Seconds per climb step that do not depend on the table size.
const STEP_SECONDS: f64 = 1.5e-6;
/// Seconds per table entry and climb step.
const ENTRY_SECONDS: f64 = 7e-8;
/// Seconds per squared settings count for the Gram matrix and its SVD.
const GRAM_SECONDS: f64 = 6e-8;

/// Single-thread wall-time projection of a sweep in seconds, assuming every
/// restart spends its full step budget.
pub fn projected_seconds(n_values: &[usize], cfg: &SearchConfig) -> f64 {
    n_values
        .iter()
        .map(|&n| {
            let n = n as f64;
            let per_step = STEP_SECONDS + ENTRY_SECONDS * 2.0 * n * cfg.m_states as f64;
            let inner = cfg.restarts as f64 * cfg.inner_iters as f64 * per_step;
            cfg.outer_iters as f64 * (inner + GRAM_SECONDS * n * n)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::validate_model;
    use crate::oracle::{linear_response_ceiling, max_visibility_lp};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn estimate(n: usize, value: f64) -> VisibilityEstimate {
        VisibilityEstimate {
            value,
            std_error: 0.0,
            n_settings: Some(n),
            provenance: Provenance::McSearch,
            seed: 0,
            iterations_used: 0,
        }
    }

    fn quick() -> SearchConfig {
        SearchConfig { inner_iters: 3000, restarts: 4, outer_iters: 4, ..Default::default() }
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        let bad = [
            SearchConfig { m_states: 3, ..Default::default() },
            SearchConfig { n_settings: 0, ..Default::default() },
            SearchConfig { restarts: 0, ..Default::default() },
            SearchConfig { step_scale: 0.0, ..Default::default() },
            SearchConfig { rho_min: 0.3, ..Default::default() },
            SearchConfig { rho_min: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn single_aligned_pair_reaches_full_visibility() {
        let s = SettingsEnsemble::new(vec![Direction::Z], vec![Direction::Z]).unwrap();
        let (model, est) = inner_maximize(&s, &quick()).unwrap();
        assert!(est.value > 1.0 - 1e-3, "{}", est.value);
        assert!(validate_model(&model, &s, 1e-9).unwrap().passed);
    }

    #[test]
    fn chsh_geometry_reaches_inverse_sqrt2() {
        let b = Direction::X;
        let b2 = Direction::Y;
        let a = Direction::normalize(-1.0, 1.0, 0.0).unwrap();
        let a2 = Direction::normalize(-1.0, -1.0, 0.0).unwrap();
        let s = SettingsEnsemble::new(vec![a, a2], vec![b, b2]).unwrap();
        let cfg = SearchConfig { restarts: 8, inner_iters: 6000, ..quick() };
        let (model, est) = inner_maximize(&s, &cfg).unwrap();
        assert!((est.value - FRAC_1_SQRT_2).abs() < 5e-3, "{}", est.value);
        assert!(validate_model(&model, &s, 1e-9).unwrap().passed);
    }

    #[test]
    fn accepted_moves_never_decrease() {
        let s = SettingsEnsemble::random(5, &mut rng::stream(3, 0)).unwrap();
        let out = inner_maximize_traced(&s, &quick()).unwrap();
        for trace in &out.traces {
            assert!(trace.windows(2).all(|w| w[1] >= w[0]));
        }
        assert!(validate_model(&out.model, &s, 1e-8).unwrap().passed);
    }

    #[test]
    fn inner_maximum_stays_below_exact_bounds() {
        for seed in 0..4 {
            let n = 3 + seed as usize % 2;
            let s = SettingsEnsemble::random(n, &mut rng::stream(seed, 50)).unwrap();
            let (_, est) = inner_maximize(&s, &quick()).unwrap();
            let oracle = max_visibility_lp(&s).unwrap().value;
            let ceiling = linear_response_ceiling(&s).unwrap();
            assert!(est.value <= oracle + 5e-3, "seed {seed}: {} > {oracle}", est.value);
            assert!(est.value <= ceiling + 1e-9, "seed {seed}: {} > {ceiling}", est.value);
        }
    }

    #[test]
    fn outer_minimum_is_not_below_one_third() {
        let cfg = SearchConfig { n_settings: 12, outer_iters: 6, ..quick() };
        let est = outer_minimize(&cfg).unwrap();
        assert!(est.value >= 1.0 / 3.0 - 2.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn inner_search_is_deterministic_across_thread_counts() {
        let s = SettingsEnsemble::random(6, &mut rng::stream(4, 0)).unwrap();
        let cfg = quick();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (_, a) = one.install(|| inner_maximize(&s, &cfg)).unwrap();
        let (_, b) = inner_maximize(&s, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn outer_single_setting_is_one() {
        let cfg = SearchConfig { n_settings: 1, ..quick() };
        let est = outer_minimize(&cfg).unwrap();
        assert!(est.value > 1.0 - 1e-3, "{}", est.value);
    }

    #[test]
    fn sweep_matches_direct_call_and_handles_empty() {
        let cfg = SearchConfig { outer_iters: 2, inner_iters: 500, restarts: 2, ..Default::default() };
        let direct = outer_minimize(&cfg.with_n(3)).unwrap();
        let swept = n_sweep(&[3], &cfg).unwrap();
        assert_eq!(swept.estimates, vec![direct]);
        assert!(n_sweep(&[], &cfg).unwrap().estimates.is_empty());
        assert!(n_sweep(&[10, 3], &cfg).is_err());
    }

    #[test]
    fn sweep_collects_failures() {
        let cfg = SearchConfig { outer_iters: 1, inner_iters: 200, restarts: 1, ..Default::default() };
        let report = n_sweep(&[0, 2], &cfg).unwrap();
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].0, 0);
        assert_eq!(report.estimates.len(), 1);
    }

    #[test]
    fn extrapolation_recovers_exact_model() {
        let data: Vec<_> = [4usize, 16, 64, 256]
            .iter()
            .map(|&n| estimate(n, 1.0 / 3.0 + (n as f64).powf(-0.5)))
            .collect();
        let fit = extrapolate(&data).unwrap();
        assert!((fit.v_inf - 1.0 / 3.0).abs() < 1e-6);
        assert_eq!(fit.alpha, 0.5);
        assert!((fit.c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn extrapolation_of_constant_data() {
        let data: Vec<_> = [3usize, 10, 30].iter().map(|&n| estimate(n, 0.4)).collect();
        let fit = extrapolate(&data).unwrap();
        assert!((fit.v_inf - 0.4).abs() < 1e-12);
        assert!(fit.c.abs() < 1e-12);
        assert!(fit.estimate.std_error < 1e-12);
    }

    #[test]
    fn extrapolation_needs_three_distinct_points() {
        let data = vec![estimate(3, 0.5), estimate(3, 0.5), estimate(10, 0.4)];
        assert!(extrapolate(&data).is_err());
        assert!(extrapolate(&[]).is_err());
    }

    #[test]
    fn bootstrap_error_behaviour() {
        assert_eq!(bootstrap_min_error(&[0.4], 0), 0.0);
        assert_eq!(bootstrap_min_error(&[0.4, 0.4, 0.4], 0), 0.0);
        assert!(bootstrap_min_error(&[0.4, 0.5, 0.45, 0.41], 0) > 0.0);
    }
}

