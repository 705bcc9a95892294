//! Quantum-side ground truth for the singlet pair with visibility `V`.

use std::fmt;
use std::ops::Neg;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs whose norm is within this distance of 1 are renormalized;
/// anything further away is rejected.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A unit vector on the sphere: a measurement setting or a hidden variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "[f64; 3]")]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction {
    pub const X: Direction = Direction { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Direction = Direction { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Direction = Direction { x: 0.0, y: 0.0, z: 1.0 };

    /// Builds a direction from components that are already (nearly) unit.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!(
                "direction ({x}, {y}, {z}) has norm {norm}, expected 1"
            )));
        }
        Ok(Direction { x: x / norm, y: y / norm, z: z / norm })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalize(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::invalid(format!("cannot normalize ({x}, {y}, {z})")));
        }
        Ok(Direction { x: x / norm, y: y / norm, z: z / norm })
    }

    /// Polar angle `theta` from +z, azimuth `phi` from +x.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Direction { x: st * cp, y: st * sp, z: ct }
    }

    /// Uniform on the sphere: three standard normals, normalized.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            let z: f64 = rng.sample(StandardNormal);
            if let Ok(d) = Direction::normalize(x, y, z) {
                return d;
            }
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Direction) -> [f64; 3] {
        [
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        ]
    }

    /// Angle to `other` in `[0, pi]`.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        self.dot(other).clamp(-1.0, 1.0).acos()
    }
}

impl Neg for Direction {
    type Output = Direction;

    fn neg(self) -> Direction {
        Direction { x: -self.x, y: -self.y, z: -self.z }
    }
}

impl From<Direction> for [f64; 3] {
    fn from(d: Direction) -> [f64; 3] {
        d.to_array()
    }
}

impl TryFrom<[f64; 3]> for Direction {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Direction::new(v[0], v[1], v[2])
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v = <[f64; 3]>::deserialize(de)?;
        Direction::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// A spin measurement result, `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Up,
    Down,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Up, Outcome::Down];

    pub fn from_sign(value: i32) -> Result<Self> {
        match value {
            1 => Ok(Outcome::Up),
            -1 => Ok(Outcome::Down),
            other => Err(Error::invalid(format!("outcome must be +1 or -1, got {other}"))),
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Outcome::Up => 1.0,
            Outcome::Down => -1.0,
        }
    }
}

impl Neg for Outcome {
    type Output = Outcome;

    fn neg(self) -> Outcome {
        match self {
            Outcome::Up => Outcome::Down,
            Outcome::Down => Outcome::Up,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Up => "+1",
            Outcome::Down => "-1",
        })
    }
}

/// Visibility `V` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Visibility(f64);

impl Visibility {
    pub const ZERO: Visibility = Visibility(0.0);
    pub const ONE: Visibility = Visibility(1.0);

    pub fn new(v: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&v) {
            Ok(Visibility(v))
        } else {
            Err(Error::invalid(format!("visibility must lie in [0, 1], got {v}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Visibility {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Visibility::new(v)
    }
}

impl From<Visibility> for f64 {
    fn from(v: Visibility) -> f64 {
        v.0
    }
}

/// Joint probability of outcomes `(m, m2)` for settings `(a, b)`:
/// `(1 - m m2 V a.b) / 4`.
pub fn quantum_joint(m: Outcome, m2: Outcome, a: &Direction, b: &Direction, v: Visibility) -> f64 {
    0.25 * (1.0 - m.sign() * m2.sign() * v.value() * a.dot(b))
}

/// Single-side marginal; the correlation term cancels, leaving 1/2.
pub fn quantum_marginal(m: Outcome, a: &Direction, v: Visibility) -> f64 {
    // summed explicitly so the identity is exercised rather than assumed
    Outcome::BOTH
        .iter()
        .map(|&m2| quantum_joint(m, m2, a, a, v))
        .sum()
}

/// Legendre polynomial `P_j(x)` by the three-term recurrence.
///
/// Arguments up to `1e-12` outside `[-1, 1]` are clamped.
pub fn legendre(j: usize, x: f64) -> Result<f64> {
    if !(x.abs() <= 1.0 + 1e-12) {
        return Err(Error::invalid(format!("Legendre argument {x} outside [-1, 1]")));
    }
    Ok(legendre_unchecked(j, x.clamp(-1.0, 1.0)))
}

pub(crate) fn legendre_unchecked(j: usize, x: f64) -> f64 {
    legendre_with_derivative(j, x).0
}

/// `(P_j(x), P_{j-1}(x))`; the second entry is 0 for `j == 0`.
pub(crate) fn legendre_with_derivative(j: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..j {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}
