//! Gauss–Legendre rules and a product rule for averages over the sphere.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{legendre_with_derivative, Direction};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (p, p_prev) = legendre_with_derivative(n, x);
            deriv = nf * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / deriv;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (p, p_prev) = legendre_with_derivative(n, x);
        if deriv == 0.0 || !deriv.is_finite() {
            deriv = nf * (x * p - p_prev) / (x * x - 1.0);
        }
        let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Product rule on the sphere: Gauss–Legendre in `cos(theta)` times a uniform
/// azimuth grid, normalized so that the constant function averages to 1.
#[derive(Debug, Clone)]
pub struct SphereRule {
    degree: usize,
    points: Vec<(Direction, f64)>,
}

impl SphereRule {
    /// Exact for polynomials in the direction components of total degree up
    /// to `2 * degree + 1`.
    pub fn new(degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::invalid("quadrature degree must be at least 1"));
        }
        let (nodes, weights) = gauss_legendre(degree + 1);
        let n_phi = 2 * (degree + 1);
        let mut points = Vec::with_capacity(nodes.len() * n_phi);
        for (&c, &w) in nodes.iter().zip(&weights) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for k in 0..n_phi {
                let phi = 2.0 * PI * k as f64 / n_phi as f64;
                let d = Direction::normalize(s * phi.cos(), s * phi.sin(), c)
                    .expect("quadrature node on the unit sphere");
                // (w / 2) for cos(theta), (1 / n_phi) for phi
                points.push((d, 0.5 * w / n_phi as f64));
            }
        }
        Ok(SphereRule { degree, points })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(Direction, f64)] {
        &self.points
    }

    /// Average of `f` over the unit sphere.
    pub fn average<F: Fn(&Direction) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(|(d, w)| w * f(d)).sum()
    }
}

/// Average of `f` over the sphere, `∫ f dΩ / 4π`.
pub fn sphere_quadrature<F: Fn(&Direction) -> f64>(f: F, degree: usize) -> Result<f64> {
    Ok(SphereRule::new(degree)?.average(f))
}
