//! Bell (strict anticorrelation) and CHSH bounds on the threshold
//! visibility, in closed form and by direct numerical optimization over
//! measurement directions.
//!
//! Inserting the singlet joint probability into the inequalities gives
//!
//! ```text
//! Bell:  (V/2) (3 - |a + c - b|²) <= 1
//! CHSH:  (V/2) (|a + b' - b|² + |a' - b' - b|² - 6) <= 2
//! ```
//!
//! Bell's form assumes `P(+1,+1; b, b) = 0` (perfect anticorrelation at equal
//! settings), an extra hypothesis beyond local realism. CHSH uses local
//! realism alone.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{quantum_joint, Direction, Outcome, Visibility};
use crate::rng;

/// Earlier upper bounds on the threshold, quoted for comparison only.
pub const PRIOR_BOUND_COPLANAR: f64 = 8.0 / (PI * PI);
pub const PRIOR_BOUND_QUARTER_PI: f64 = FRAC_PI_4;
pub const PRIOR_BOUND_THREE_QUARTERS: f64 = 0.75;

/// Closed-form Bell threshold.
pub const BELL_THRESHOLD: f64 = 2.0 / 3.0;

/// Closed-form CHSH threshold.
pub const CHSH_THRESHOLD: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn norm_sq(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn combine(terms: &[(f64, &Direction)]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (w, d) in terms {
        let d = d.to_array();
        for i in 0..3 {
            out[i] += w * d[i];
        }
    }
    out
}

fn triple(a: &Direction, b: &Direction, c: &Direction) -> f64 {
    let x = b.cross(c);
    a.x() * x[0] + a.y() * x[1] + a.z() * x[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BellConfiguration {
    pub a: Direction,
    pub b: Direction,
    pub c: Direction,
}

impl BellConfiguration {
    /// `|a + c - b|`; zero at the optimum.
    pub fn residual(&self) -> f64 {
        norm_sq(combine(&[(1.0, &self.a), (1.0, &self.c), (-1.0, &self.b)])).sqrt()
    }
}

/// `(V/2)(3 - |a + c - b|²)`; the inequality is violated iff this exceeds 1.
pub fn bell_lhs(cfg: &BellConfiguration, v: Visibility) -> f64 {
    0.5 * v.value() * (3.0 - cfg.residual().powi(2))
}

/// `P(+1,+1; a, b) + P(+1,+1; b, c) - P(+1,+1; a, c)`, nonnegative for any
/// local model with strict anticorrelation.
pub fn bell_probability_form(cfg: &BellConfiguration, v: Visibility) -> f64 {
    let up = Outcome::Up;
    quantum_joint(up, up, &cfg.a, &cfg.b, v) + quantum_joint(up, up, &cfg.b, &cfg.c, v)
        - quantum_joint(up, up, &cfg.a, &cfg.c, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshConfiguration {
    pub a: Direction,
    pub a2: Direction,
    pub b: Direction,
    pub b2: Direction,
}

impl ChshConfiguration {
    /// Angle between `b` and `b'`.
    pub fn phi(&self) -> f64 {
        self.b.angle_to(&self.b2)
    }

    /// `a ∥ b' - b`, `a' ∥ -(b' + b)`: the maximizing choice for fixed `b, b'`.
    pub fn aligned(b: Direction, b2: Direction) -> Result<Self> {
        if b.dot(&b2).abs() > 1.0 - 1e-12 {
            return Err(Error::invalid("alignment undefined for b = ±b'"));
        }
        let [x, y, z] = combine(&[(1.0, &b2), (-1.0, &b)]);
        let a = Direction::normalize(x, y, z)?;
        let [x, y, z] = combine(&[(-1.0, &b2), (-1.0, &b)]);
        let a2 = Direction::normalize(x, y, z)?;
        Ok(ChshConfiguration { a, a2, b, b2 })
    }

    /// Largest `|scalar triple product|` among the four directions.
    pub fn coplanarity_defect(&self) -> f64 {
        let d = [self.a, self.a2, self.b, self.b2];
        let mut worst = 0.0_f64;
        for i in 0..4 {
            for j in i + 1..4 {
                for k in j + 1..4 {
                    worst = worst.max(triple(&d[i], &d[j], &d[k]).abs());
                }
            }
        }
        worst
    }
}

/// `(V/2)(|a + b' - b|² + |a' - b' - b|² - 6)`; violated iff above 2.
pub fn chsh_lhs(cfg: &ChshConfiguration, v: Visibility) -> f64 {
    let first = norm_sq(combine(&[(1.0, &cfg.a), (1.0, &cfg.b2), (-1.0, &cfg.b)]));
    let second = norm_sq(combine(&[(1.0, &cfg.a2), (-1.0, &cfg.b2), (-1.0, &cfg.b)]));
    0.5 * v.value() * (first + second - 6.0)
}

/// `2√2 V sin(φ/2 + π/4)`, the CHSH left side at optimal alignment of
/// `a, a'` for given `b, b'`.
pub fn chsh_angle_form(b: &Direction, b2: &Direction, v: Visibility) -> Result<f64> {
    if b.dot(b2).abs() > 1.0 - 1e-12 {
        return Err(Error::invalid("angle form undefined for b = ±b'"));
    }
    let phi = b.angle_to(b2);
    Ok(2.0 * SQRT_2 * v.value() * (phi / 2.0 + FRAC_PI_4).sin())
}

/// `P(1,1;a,b) - P(1,1;a,b') + P(1,1;a',b) + P(1,1;a',b') - P(1;a') - P(1;b)`,
/// nonpositive for any local model.
pub fn chsh_probability_form(cfg: &ChshConfiguration, v: Visibility) -> f64 {
    let up = Outcome::Up;
    let p = |x: &Direction, y: &Direction| quantum_joint(up, up, x, y, v);
    let marginal_a2: f64 = Outcome::BOTH.iter().map(|&m| quantum_joint(up, m, &cfg.a2, &cfg.b, v)).sum();
    let marginal_b: f64 = Outcome::BOTH.iter().map(|&m| quantum_joint(m, up, &cfg.a2, &cfg.b, v)).sum();
    p(&cfg.a, &cfg.b) - p(&cfg.a, &cfg.b2) + p(&cfg.a2, &cfg.b) + p(&cfg.a2, &cfg.b2) - marginal_a2 - marginal_b
}

/// Multi-start compass search over spherical angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerBudget {
    pub starts: usize,
    pub max_evals_per_start: usize,
    pub min_step: f64,
    pub seed: u64,
}

impl Default for OptimizerBudget {
    fn default() -> Self {
        OptimizerBudget { starts: 64, max_evals_per_start: 20_000, min_step: 1e-9, seed: 0 }
    }
}

fn directions_from(angles: &[f64]) -> Vec<Direction> {
    angles.chunks(2).map(|c| Direction::from_spherical(c[0], c[1])).collect()
}

/// Maximizes `objective` over `k` directions; returns the best value, its
/// directions, and the total number of evaluations.
fn maximize_directions<F>(k: usize, objective: F, budget: &OptimizerBudget) -> (f64, Vec<Direction>, u64)
where
    F: Fn(&[Direction]) -> f64 + Sync,
{
    let runs: Vec<(f64, Vec<f64>, u64)> = (0..budget.starts)
        .into_par_iter()
        .map(|start| {
            let mut r = rng::stream(budget.seed, start as u64);
            let mut x: Vec<f64> = (0..k)
                .flat_map(|_| {
                    let d = Direction::random(&mut r);
                    [d.z().clamp(-1.0, 1.0).acos(), d.y().atan2(d.x())]
                })
                .collect();
            let f = |x: &[f64]| objective(&directions_from(x));
            let mut best = f(&x);
            let mut evals = 1u64;
            let mut step = 0.5 + 0.5 * r.random::<f64>();
            while step >= budget.min_step && (evals as usize) < budget.max_evals_per_start {
                let mut improved = false;
                for i in 0..x.len() {
                    for dir in [1.0, -1.0] {
                        let old = x[i];
                        x[i] = old + dir * step;
                        let value = f(&x);
                        evals += 1;
                        if value > best {
                            best = value;
                            improved = true;
                            break;
                        }
                        x[i] = old;
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            (best, x, evals)
        })
        .collect();

    let evals = runs.iter().map(|r| r.2).sum();
    let (best, x, _) = runs
        .into_iter()
        .reduce(|acc, r| if r.0 > acc.0 { r } else { acc })
        .expect("at least one start");
    (best, directions_from(&x), evals)
}

#[derive(Debug, Clone, Serialize)]
pub struct BellOptimum {
    pub threshold: f64,
    /// max over directions of `(3 - |a + c - b|²) / 2`
    pub max_factor: f64,
    pub config: BellConfiguration,
    pub evaluations: u64,
}

fn bell_factor(d: &[Direction]) -> f64 {
    let cfg = BellConfiguration { a: d[0], b: d[1], c: d[2] };
    bell_lhs(&cfg, Visibility::ONE)
}

/// Threshold `1 / max (3 - |a + c - b|²)/2` over unit `a, b, c`.
pub fn bell_threshold_numeric(budget: &OptimizerBudget) -> BellOptimum {
    let (max_factor, d, evaluations) = maximize_directions(3, bell_factor, budget);
    BellOptimum {
        threshold: 1.0 / max_factor,
        max_factor,
        config: BellConfiguration { a: d[0], b: d[1], c: d[2] },
        evaluations,
    }
}

/// Same optimization restricted to `b = a`; the factor cannot exceed 1.
pub fn bell_threshold_numeric_b_equals_a(budget: &OptimizerBudget) -> BellOptimum {
    let (max_factor, d, evaluations) =
        maximize_directions(2, |d: &[Direction]| bell_factor(&[d[0], d[0], d[1]]), budget);
    BellOptimum {
        threshold: 1.0 / max_factor,
        max_factor,
        config: BellConfiguration { a: d[0], b: d[0], c: d[1] },
        evaluations,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChshOptimum {
    pub threshold: f64,
    /// max over directions of `(|a + b' - b|² + |a' - b' - b|² - 6) / 2`
    pub max_factor: f64,
    pub phi: f64,
    pub config: ChshConfiguration,
    pub evaluations: u64,
}

/// Threshold `2 / max` of the CHSH quartet expression over four unit vectors.
pub fn chsh_threshold_numeric(budget: &OptimizerBudget) -> ChshOptimum {
    let objective = |d: &[Direction]| {
        chsh_lhs(&ChshConfiguration { a: d[0], a2: d[1], b: d[2], b2: d[3] }, Visibility::ONE)
    };
    let (max_factor, d, evaluations) = maximize_directions(4, objective, budget);
    let config = ChshConfiguration { a: d[0], a2: d[1], b: d[2], b2: d[3] };
    ChshOptimum { threshold: 2.0 / max_factor, max_factor, phi: config.phi(), config, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn vis(v: f64) -> Visibility {
        Visibility::new(v).unwrap()
    }

    fn bell_optimal() -> BellConfiguration {
        let h = 3f64.sqrt() / 2.0;
        BellConfiguration {
            a: Direction::X,
            b: Direction::new(0.5, h, 0.0).unwrap(),
            c: Direction::new(-0.5, h, 0.0).unwrap(),
        }
    }

    fn random_rotation(r: &mut rng::StreamRng) -> impl Fn(&Direction) -> Direction {
        // Gram–Schmidt on two random directions
        let e1 = Direction::random(r);
        let w = Direction::random(r);
        let d = e1.dot(&w);
        let e2 = Direction::normalize(w.x() - d * e1.x(), w.y() - d * e1.y(), w.z() - d * e1.z()).unwrap();
        let e3 = e1.cross(&e2);
        move |v: &Direction| {
            let x = [v.x(), v.y(), v.z()];
            Direction::new(
                x[0] * e1.x() + x[1] * e2.x() + x[2] * e3[0],
                x[0] * e1.y() + x[1] * e2.y() + x[2] * e3[1],
                x[0] * e1.z() + x[1] * e2.z() + x[2] * e3[2],
            )
            .unwrap()
        }
    }

    #[test]
    fn bell_examples() {
        let cfg = bell_optimal();
        assert!(cfg.residual() < 1e-15);
        assert!((bell_lhs(&cfg, vis(2.0 / 3.0)) - 1.0).abs() < 1e-15);
        assert!((bell_lhs(&cfg, vis(0.7)) - 1.05).abs() < 1e-14);
        let d = Direction::from_spherical(1.0, 2.0);
        let same = BellConfiguration { a: d, b: d, c: d };
        assert!((bell_lhs(&same, vis(0.9)) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn bell_reduction_matches_probabilities() {
        let mut r = rng::stream(1, 0);
        for _ in 0..50 {
            let cfg = BellConfiguration {
                a: Direction::random(&mut r),
                b: Direction::random(&mut r),
                c: Direction::random(&mut r),
            };
            let v = vis(r.random());
            let lhs = bell_lhs(&cfg, v);
            let prob = bell_probability_form(&cfg, v);
            assert!((lhs - (1.0 - 4.0 * prob)).abs() < 1e-12);
        }
    }

    #[test]
    fn bell_is_rotation_invariant() {
        let mut r = rng::stream(2, 0);
        let cfg = BellConfiguration {
            a: Direction::random(&mut r),
            b: Direction::random(&mut r),
            c: Direction::random(&mut r),
        };
        let v = vis(0.8);
        for _ in 0..20 {
            let rot = random_rotation(&mut r);
            let turned = BellConfiguration { a: rot(&cfg.a), b: rot(&cfg.b), c: rot(&cfg.c) };
            assert!((bell_lhs(&turned, v) - bell_lhs(&cfg, v)).abs() < 1e-12);
        }
    }

    #[test]
    fn chsh_examples() {
        let cfg = ChshConfiguration::aligned(Direction::X, Direction::Y).unwrap();
        assert!((cfg.phi() - FRAC_PI_2).abs() < 1e-15);
        assert!((chsh_lhs(&cfg, vis(CHSH_THRESHOLD)) - 2.0).abs() < 1e-14);
        assert!((chsh_lhs(&cfg, vis(0.75)) - 2.0 * SQRT_2 * 0.75).abs() < 1e-14);
        assert!((chsh_lhs(&cfg, vis(0.75)) - 2.1213).abs() < 1e-4);
        assert_eq!(chsh_lhs(&cfg, vis(0.0)), 0.0);
        let angle = chsh_angle_form(&Direction::X, &Direction::Y, vis(CHSH_THRESHOLD)).unwrap();
        assert!((angle - 2.0).abs() < 1e-14);
    }

    #[test]
    fn angle_form_refuses_parallel_settings() {
        let z = Direction::Z;
        assert!(chsh_angle_form(&z, &z, vis(0.5)).is_err());
        assert!(chsh_angle_form(&z, &-z, vis(0.5)).is_err());
        assert!(ChshConfiguration::aligned(z, -z).is_err());
    }

    #[test]
    fn angle_form_matches_quartet_at_alignment() {
        let mut r = rng::stream(3, 0);
        for _ in 0..50 {
            let (b, b2) = (Direction::random(&mut r), Direction::random(&mut r));
            let v = vis(r.random());
            let cfg = ChshConfiguration::aligned(b, b2).unwrap();
            let quartet = chsh_lhs(&cfg, v);
            let angle = chsh_angle_form(&b, &b2, v).unwrap();
            assert!((quartet - angle).abs() < 1e-10);
        }
    }

    #[test]
    fn chsh_reduction_matches_probabilities() {
        let mut r = rng::stream(4, 0);
        for _ in 0..50 {
            let cfg = ChshConfiguration {
                a: Direction::random(&mut r),
                a2: Direction::random(&mut r),
                b: Direction::random(&mut r),
                b2: Direction::random(&mut r),
            };
            let v = vis(r.random());
            let lhs = chsh_lhs(&cfg, v);
            let prob = chsh_probability_form(&cfg, v);
            assert!((lhs - (4.0 * prob + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn bell_optimizer_finds_two_thirds() {
        let opt = bell_threshold_numeric(&OptimizerBudget { starts: 16, ..Default::default() });
        assert!((opt.threshold - 2.0 / 3.0).abs() < 1e-3);
        assert!(opt.config.residual() < 0.05);
    }

    #[test]
    fn bell_optimizer_with_b_equal_a_is_trivial() {
        let opt = bell_threshold_numeric_b_equals_a(&OptimizerBudget { starts: 8, ..Default::default() });
        assert!((opt.max_factor - 1.0).abs() < 1e-6);
        assert!((opt.threshold - 1.0).abs() < 1e-6);
    }

    #[test]
    fn chsh_optimizer_finds_inverse_sqrt2() {
        let opt = chsh_threshold_numeric(&OptimizerBudget { starts: 16, ..Default::default() });
        assert!((opt.threshold - CHSH_THRESHOLD).abs() < 1e-3);
        assert!((opt.phi - FRAC_PI_2).abs() < 0.02);
        assert!(opt.config.coplanarity_defect() < 0.05);
    }

    #[test]
    fn optimizer_is_deterministic() {
        let budget = OptimizerBudget { starts: 6, seed: 17, ..Default::default() };
        let x = chsh_threshold_numeric(&budget);
        let y = chsh_threshold_numeric(&budget);
        assert_eq!(x.threshold.to_bits(), y.threshold.to_bits());
    }

    #[test]
    fn threshold_ordering() {
        let analytic = crate::analytic::analytic_threshold().value();
        assert!(analytic < BELL_THRESHOLD);
        assert!(BELL_THRESHOLD < CHSH_THRESHOLD);
        assert!(CHSH_THRESHOLD < PRIOR_BOUND_THREE_QUARTERS);
        assert!(PRIOR_BOUND_THREE_QUARTERS < PRIOR_BOUND_QUARTER_PI);
        assert!(PRIOR_BOUND_QUARTER_PI < PRIOR_BOUND_COPLANAR);
    }
}
