//! Exact maximum visibility for fixed settings by linear programming over
//! deterministic local strategies.
//!
//! A local model reproduces the correlations `V·G` iff `V·G` lies in the
//! convex hull of the sign matrices `a bᵀ`, `a, b ∈ {±1}^N`. Zero marginals
//! come for free: mixing each strategy with its global sign flip leaves
//! every correlation unchanged.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::Serialize;

use crate::construct::{gram_svd, SettingsEnsemble};
use crate::error::{Error, Result};
use crate::estimate::{Provenance, VisibilityEstimate};
use crate::model::Direction;
use crate::simplex::{self, ColumnSource};

/// Largest settings count the oracle accepts.
pub const MAX_ORACLE_N: usize = 12;

/// Gram matrices with no entry above this are treated as all-zero.
const ZERO_GRAM: f64 = 1e-12;

/// Deterministic `±1` answers of both sides for every setting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DeterministicStrategy {
    pub a_signs: Vec<i8>,
    pub b_signs: Vec<i8>,
}

fn sign_bit(bits: usize, i: usize) -> i8 {
    if (bits >> i) & 1 == 1 {
        -1
    } else {
        1
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_ORACLE_N {
        Err(Error::ResourceLimit(format!(
            "oracle enumerates 2^(2N-1) strategies; N = {n} exceeds the cap of {MAX_ORACLE_N}"
        )))
    } else if n == 0 {
        Err(Error::invalid("oracle needs N >= 1"))
    } else {
        Ok(())
    }
}

/// All `2^(2n-1)` strategies with `a_signs[0] = +1`.
pub fn enumerate_strategies(n: usize) -> Result<Vec<DeterministicStrategy>> {
    check_size(n)?;
    let src = StrategyLp { n, gram: DMatrix::zeros(n, n), gauge_fixed: true };
    Ok((0..src.strategy_count()).map(|s| src.strategy(s)).collect())
}

/// Column layout: 0 is `V`, `1 + s` is the weight of strategy `s`.
/// Rows: `j * N + k` for the correlation constraints, then convexity.
struct StrategyLp {
    n: usize,
    gram: DMatrix<f64>,
    gauge_fixed: bool,
}

impl StrategyLp {
    fn a_bits(&self) -> usize {
        if self.gauge_fixed {
            self.n - 1
        } else {
            self.n
        }
    }

    fn strategy_count(&self) -> usize {
        1 << (self.a_bits() + self.n)
    }

    fn a_signs(&self, a_idx: usize) -> Vec<i8> {
        let offset = usize::from(self.gauge_fixed);
        (0..self.n)
            .map(|j| if j < offset { 1 } else { sign_bit(a_idx, j - offset) })
            .collect()
    }

    fn strategy(&self, s: usize) -> DeterministicStrategy {
        let a_idx = s >> self.n;
        let b_idx = s & ((1 << self.n) - 1);
        DeterministicStrategy {
            a_signs: self.a_signs(a_idx),
            b_signs: (0..self.n).map(|k| sign_bit(b_idx, k)).collect(),
        }
    }

    fn index_of(&self, a_idx: usize, b_signs: &[f64]) -> usize {
        let b_idx = b_signs
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &s)| if s < 0.0 { acc | (1 << k) } else { acc });
        (a_idx << self.n) | b_idx
    }

    /// For each `a`, the column sums `Σ_j a_j Y_jk` of the dual matrix.
    fn for_each_a<F: FnMut(usize, &[f64])>(&self, y: &[f64], mut f: F) {
        let n = self.n;
        let mut sums = vec![0.0; n];
        for a_idx in 0..(1 << self.a_bits()) {
            let a = self.a_signs(a_idx);
            sums.iter_mut().for_each(|s| *s = 0.0);
            for j in 0..n {
                let aj = f64::from(a[j]);
                for k in 0..n {
                    sums[k] += aj * y[j * n + k];
                }
            }
            f(a_idx, &sums);
        }
    }
}

impl ColumnSource for StrategyLp {
    fn rows(&self) -> usize {
        self.n * self.n + 1
    }

    fn columns(&self) -> usize {
        1 + self.strategy_count()
    }

    fn cost(&self, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            0.0
        }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        let n = self.n;
        if j == 0 {
            for r in 0..n * n {
                out[r] = self.gram[(r / n, r % n)];
            }
            out[n * n] = 0.0;
        } else {
            let s = self.strategy(j - 1);
            for r in 0..n * n {
                out[r] = -f64::from(s.a_signs[r / n] * s.b_signs[r % n]);
            }
            out[n * n] = 1.0;
        }
    }

    fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.rows()];
        b[self.n * self.n] = 1.0;
        b
    }

    // Reduced cost of strategy (a, b) is aᵀ Y b - y_conv, maximized over b
    // by b_k = sign(Σ_j a_j Y_jk).
    fn best_column(&self, y: &[f64], cost_scale: f64) -> (usize, f64) {
        let n = self.n;
        let y_conv = y[n * n];
        let v_reduced = cost_scale - (0..n * n).map(|r| y[r] * self.gram[(r / n, r % n)]).sum::<f64>();
        let mut best = (0, v_reduced);
        self.for_each_a(y, |a_idx, sums| {
            let value = sums.iter().map(|s| s.abs()).sum::<f64>() - y_conv;
            if value > best.1 {
                best = (1 + self.index_of(a_idx, sums), value);
            }
        });
        best
    }

    // |y·A_s| = |aᵀ Y b - y_conv|, maximized by b = ±sign(Σ_j a_j Y_jk).
    fn best_abs_column(&self, y: &[f64]) -> (usize, f64) {
        let n = self.n;
        let y_conv = y[n * n];
        let v_mag = (0..n * n).map(|r| y[r] * self.gram[(r / n, r % n)]).sum::<f64>().abs();
        let mut best = (0, v_mag);
        self.for_each_a(y, |a_idx, sums| {
            let value = sums.iter().map(|s| s.abs()).sum::<f64>() + y_conv.abs();
            if value > best.1 {
                let b: Vec<f64> = sums.iter().map(|&s| if y_conv > 0.0 { -s } else { s }).collect();
                best = (1 + self.index_of(a_idx, &b), value);
            }
        });
        best
    }
}

/// Optimal visibility with the mixture of strategies that certifies it.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSolution {
    /// LP optimum, not capped at 1.
    pub visibility: f64,
    pub mixture: Vec<(DeterministicStrategy, f64)>,
    pub pivots: usize,
}

impl OracleSolution {
    /// `Σ_s w_s a_s b_sᵀ`.
    pub fn correlations(&self, n: usize) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(n, n);
        for (s, w) in &self.mixture {
            for j in 0..n {
                for k in 0..n {
                    c[(j, k)] += w * f64::from(s.a_signs[j] * s.b_signs[k]);
                }
            }
        }
        c
    }
}

/// Solves `max V  s.t.  V·G = Σ_s w_s a_s b_sᵀ, w >= 0, Σ w = 1` for any
/// square `G` (not necessarily a physical Gram matrix).
pub fn solve_gram(gram: &DMatrix<f64>, gauge_fixed: bool) -> Result<OracleSolution> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::invalid("oracle needs a square correlation matrix"));
    }
    check_size(n)?;
    if gram.amax() <= ZERO_GRAM {
        return Err(Error::invalid("all-zero correlations admit any visibility"));
    }
    let src = StrategyLp { n, gram: gram.clone(), gauge_fixed };
    let sol = simplex::maximize(&src)?;
    let mixture = sol
        .basic
        .iter()
        .filter(|(j, w)| *j > 0 && *w > 0.0)
        .map(|&(j, w)| (src.strategy(j - 1), w))
        .collect();
    Ok(OracleSolution { visibility: sol.objective, mixture, pivots: sol.iterations })
}

/// Largest visibility at which the settings admit a local model, capped at 1.
pub fn max_visibility_lp(settings: &SettingsEnsemble) -> Result<VisibilityEstimate> {
    check_size(settings.len())?;
    let n = settings.len();
    let mut estimate = VisibilityEstimate {
        value: 1.0,
        std_error: 0.0,
        n_settings: Some(n),
        provenance: Provenance::Oracle,
        seed: 0,
        iterations_used: 0,
    };
    if settings.gram().amax() > ZERO_GRAM {
        let sol = solve_gram(settings.gram(), true)?;
        estimate.value = sol.visibility.min(1.0);
        estimate.iterations_used = sol.pivots as u64;
    }
    Ok(estimate)
}

/// Largest settings count [`linear_response_ceiling`] accepts.
pub const MAX_CEILING_N: usize = 64;

/// Vertices of the polytope `{x : |d·x| <= 1 for every d in dirs}`.
fn response_vertices(dirs: &[Direction]) -> Vec<Vector3<f64>> {
    let rows: Vec<Vector3<f64>> = dirs.iter().map(|d| Vector3::from(d.to_array())).collect();
    let mut out: Vec<Vector3<f64>> = Vec::new();
    let n = rows.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let m = Matrix3::from_rows(&[rows[i].transpose(), rows[j].transpose(), rows[k].transpose()]);
                if m.determinant().abs() < 1e-10 {
                    continue;
                }
                let Some(inv) = m.try_inverse() else { continue };
                for signs in 0..8 {
                    let rhs = Vector3::from_fn(|c, _| f64::from(sign_bit(signs, c)));
                    let x = inv * rhs;
                    let inside = rows.iter().all(|d| d.dot(&x).abs() <= 1.0 + 1e-9);
                    if inside && !out.iter().any(|y| (y - x).amax() < 1e-9) {
                        out.push(x);
                    }
                }
            }
        }
    }
    out
}

/// Columns: 0 is `V`, then one per vertex pair `(α, β)` holding `vec(α βᵀ)`
/// and a 1 in the convexity row.
struct VertexPairLp {
    left: Vec<Vector3<f64>>,
    right: Vec<Vector3<f64>>,
}

impl ColumnSource for VertexPairLp {
    fn rows(&self) -> usize {
        10
    }

    fn columns(&self) -> usize {
        1 + self.left.len() * self.right.len()
    }

    fn cost(&self, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            0.0
        }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        if j == 0 {
            out.iter_mut().for_each(|x| *x = 0.0);
            for d in 0..3 {
                out[d * 3 + d] = -1.0;
            }
            return;
        }
        let (l, r) = (&self.left[(j - 1) / self.right.len()], &self.right[(j - 1) % self.right.len()]);
        for x in 0..3 {
            for y in 0..3 {
                out[x * 3 + y] = l[x] * r[y];
            }
        }
        out[9] = 1.0;
    }

    fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; 10];
        b[9] = 1.0;
        b
    }
}

/// Largest visibility over local models whose tables are linear in the
/// setting direction, `A_jn = a_j·α_n` and `B_kn = b_k·β_n`, with any number
/// of hidden states. Capped at 1.
///
/// Every model assembled from an SVD frame has this form, so the value
/// bounds the frame search from above. It coincides with
/// [`max_visibility_lp`] for `N = 3` and can fall below it for `N >= 4`.
/// Both sides must span three dimensions.
pub fn linear_response_ceiling(settings: &SettingsEnsemble) -> Result<f64> {
    let n = settings.len();
    if n > MAX_CEILING_N {
        return Err(Error::ResourceLimit(format!("ceiling enumerates O(N^4) candidates; N = {n} exceeds {MAX_CEILING_N}")));
    }
    if gram_svd(settings).rank() < 3 {
        return Err(Error::invalid("ceiling needs settings spanning three dimensions on both sides"));
    }
    let src = VertexPairLp { left: response_vertices(settings.a_side()), right: response_vertices(settings.b_side()) };
    Ok(simplex::maximize(&src)?.objective.min(1.0))
}
