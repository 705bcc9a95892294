//! Rotation-invariant LHV model with a Legendre-series response function.
//!
//! The hidden variable is a unit vector `λ` drawn uniformly from the sphere.
//! Side A answers `m` along `n` with probability `f(m n·λ)`, side B with
//! `f(-m n·λ)`, where `f(x) = Σ c_j P_j(x)`. The addition theorem collapses
//! the joint probability to `Σ c_j² / (2j+1) P_j(-m m' a·b)`; matching the
//! quantum joint leaves `c_0 = 1/2`, `c_1 = √(3V)/2`, and `f(-1) >= 0` holds
//! iff `V <= 1/3`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{legendre_unchecked, Direction, Outcome, Visibility};
use crate::quadrature::SphereRule;

/// Interior points used to certify `f >= 0`, in addition to `x = ±1`.
pub const POSITIVITY_GRID: usize = 1001;

/// Which side of the experiment a response belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Response function `f(x) = Σ c_j P_j(x)` with an explicit finite list of
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendreLhvModel {
    coefficients: Vec<f64>,
}

impl LegendreLhvModel {
    pub fn new(coefficients: Vec<f64>) -> Self {
        LegendreLhvModel { coefficients }
    }

    /// `c_0 = 1/2`, `c_1 = √(3V)/2`, nothing else.
    pub fn for_visibility(v: Visibility) -> Self {
        LegendreLhvModel::new(vec![0.5, (3.0 * v.value()).sqrt() / 2.0])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `f(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(j, c)| c * legendre_unchecked(j, x))
            .sum()
    }

    /// Minimum of `f` over the endpoints and the interior grid.
    pub fn min_response(&self) -> f64 {
        let grid = (1..POSITIVITY_GRID + 1)
            .map(|i| -1.0 + 2.0 * i as f64 / (POSITIVITY_GRID + 1) as f64);
        [-1.0, 1.0]
            .into_iter()
            .chain(grid)
            .map(|x| self.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// `f(x) + f(-x) = 2 c_0` must be 1 for `f` to be a probability.
    pub fn is_normalized(&self) -> bool {
        self.coefficients.first().is_some_and(|c0| (c0 - 0.5).abs() <= 1e-14)
    }

    /// Normalized and nonnegative on `[-1, 1]`.
    pub fn is_valid(&self) -> bool {
        self.is_normalized() && self.min_response() >= 0.0
    }

    fn check_valid(&self) -> Result<()> {
        if !self.is_normalized() {
            return Err(Error::InvalidModel(format!(
                "c_0 must be 1/2 for a probability response, got {:?}",
                self.coefficients.first()
            )));
        }
        let min = self.min_response();
        if min < 0.0 {
            return Err(Error::InvalidModel(format!("response function reaches {min} < 0")));
        }
        Ok(())
    }

    /// Probability that `side` reports `m` along `n` given hidden `lambda`.
    pub fn response(&self, side: Side, m: Outcome, n: &Direction, lambda: &Direction) -> Result<f64> {
        self.check_valid()?;
        Ok(self.response_unchecked(side, m, n, lambda))
    }

    fn response_unchecked(&self, side: Side, m: Outcome, n: &Direction, lambda: &Direction) -> f64 {
        let m = match side {
            Side::A => m,
            Side::B => -m,
        };
        self.eval(m.sign() * n.dot(lambda))
    }

    /// Closed-form joint probability `Σ c_j²/(2j+1) P_j(-m m' a·b)`.
    pub fn reconstruct_joint(&self, m: Outcome, m2: Outcome, a: &Direction, b: &Direction) -> f64 {
        let x = (-m.sign() * m2.sign() * a.dot(b)).clamp(-1.0, 1.0);
        self.coefficients
            .iter()
            .enumerate()
            .map(|(j, c)| c * c / (2 * j + 1) as f64 * legendre_unchecked(j, x))
            .sum()
    }

    /// The same joint probability by integrating the product of responses
    /// over the hidden direction.
    pub fn quadrature_joint(&self, m: Outcome, m2: Outcome, a: &Direction, b: &Direction, rule: &SphereRule) -> f64 {
        rule.average(|l| {
            self.response_unchecked(Side::A, m, a, l) * self.response_unchecked(Side::B, m2, b, l)
        })
    }
}

/// The threshold visibility of the rotation-invariant model, exactly 1/3.
pub fn analytic_threshold() -> Visibility {
    Visibility::new(1.0 / 3.0).expect("1/3 is a visibility")
}

/// Bisection on `V` for the point where [`LegendreLhvModel::for_visibility`]
/// stops being valid.
pub fn bisect_positivity_flip(tol: f64) -> f64 {
    let valid = |v: f64| LegendreLhvModel::for_visibility(Visibility::new(v).unwrap()).is_valid();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    debug_assert!(valid(lo) && !valid(hi));
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if valid(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    pub visibility: f64,
    pub c1: f64,
    pub min_response: f64,
    pub valid: bool,
}

/// Validity of the analytic model along `start, start + step, ..., <= stop`.
pub fn positivity_scan(start: f64, stop: f64, step: f64) -> Result<Vec<ScanPoint>> {
    if !(step > 0.0) || !(start <= stop) {
        return Err(Error::invalid(format!("bad scan range {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| {
            let v = Visibility::new(start + i as f64 * step)?;
            let model = LegendreLhvModel::for_visibility(v);
            Ok(ScanPoint {
                visibility: v.value(),
                c1: model.coefficients()[1],
                min_response: model.min_response(),
                valid: model.is_valid(),
            })
        })
        .collect()
}
