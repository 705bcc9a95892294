//! Explicit discrete LHV models from the SVD of the settings Gram matrix.
//!
//! With `G[j][k] = a_j·b_k = Σ_i p_i U[j][i] V[k][i]` and auxiliary vectors
//! `q_i`, `t_i` in hidden-state space satisfying `q_i·t_j = δ_ij` and
//! `Σ_n √ρ_n q_i[n] = Σ_n √ρ_n t_i[n] = 0`, the tables
//!
//! ```text
//! A'[j][n] = Σ_i U[j][i] √p_i q_i[n] / √ρ_n
//! B'[k][n] = Σ_i V[k][i] √p_i t_i[n] / √ρ_n
//! ```
//!
//! satisfy `Σ_n ρ_n A'[j][n] B'[k][n] = G[j][k]` with zero `ρ`-weighted
//! marginals. Scaling both tables by `√V` with `1/√V = max |A'|, |B'|`
//! yields expectation tables bounded by 1, i.e. a local model at visibility
//! `V`.

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Direction, Visibility};
use crate::rng;

/// Smallest hidden-state weight allowed before dividing by `√ρ_n`.
pub const DEFAULT_RHO_MIN: f64 = 1e-6;

/// Singular values below this fraction of the largest are exact zeros.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Minimum number of hidden states for which biorthogonal frames exist.
pub const MIN_STATES: usize = 4;

const FRAME_ATTEMPTS: u64 = 100;
const FRAME_STREAM: u64 = 0xF4A3E;

/// Measurement directions for both sides and their Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingsEnsemble {
    a_side: Vec<Direction>,
    b_side: Vec<Direction>,
    gram: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct SettingsFile {
    a: Vec<Direction>,
    b: Vec<Direction>,
}

impl SettingsEnsemble {
    pub fn new(a_side: Vec<Direction>, b_side: Vec<Direction>) -> Result<Self> {
        if a_side.is_empty() || a_side.len() != b_side.len() {
            return Err(Error::invalid(format!(
                "settings need N >= 1 directions on each side, got {} and {}",
                a_side.len(),
                b_side.len()
            )));
        }
        let n = a_side.len();
        let gram = DMatrix::from_fn(n, n, |j, k| a_side[j].dot(&b_side[k]).clamp(-1.0, 1.0));
        Ok(SettingsEnsemble { a_side, b_side, gram })
    }

    /// `n` uniform directions per side.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let a = (0..n).map(|_| Direction::random(rng)).collect();
        let b = (0..n).map(|_| Direction::random(rng)).collect();
        SettingsEnsemble::new(a, b)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SettingsFile = serde_json::from_str(text)?;
        SettingsEnsemble::new(file.a, file.b)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SettingsFile { a: self.a_side.clone(), b: self.b_side.clone() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn len(&self) -> usize {
        self.a_side.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_side.is_empty()
    }

    pub fn a_side(&self) -> &[Direction] {
        &self.a_side
    }

    pub fn b_side(&self) -> &[Direction] {
        &self.b_side
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

/// Rank-3 factorization `G = U diag(p) Vᵀ`.
///
/// `u` and `v` are `N x 3`. For `N < 3` the columns past `N` are zero and
/// their singular values are zero.
#[derive(Debug, Clone)]
pub struct GramSvd {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub p: [f64; 3],
}

impl GramSvd {
    pub fn rank(&self) -> usize {
        self.p.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.u.nrows();
        DMatrix::from_fn(n, n, |j, k| (0..3).map(|i| self.p[i] * self.u[(j, i)] * self.v[(k, i)]).sum())
    }

    /// `U diag(√p)` and `V diag(√p)`.
    fn scaled(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut us = self.u.clone();
        let mut vs = self.v.clone();
        for i in 0..3 {
            let s = self.p[i].sqrt();
            us.column_mut(i).scale_mut(s);
            vs.column_mut(i).scale_mut(s);
        }
        (us, vs)
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Returns `(U, σ, V)` with `W = U diag(σ) Vᵀ`, singular values sorted
/// descending (stable on ties). Columns of `U` whose singular value is zero
/// are completed to an orthonormal set.
pub(crate) fn jacobi_svd(w: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = w.shape();
    let mut a = w.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let scale = a.norm_squared();
    // columns below this squared norm no longer rotate
    let negligible = 1e-30 * scale;
    let mut sq: Vec<f64> = (0..cols).map(|j| a.column(j).norm_squared()).collect();
    let data = a.as_mut_slice();
    let basis = v.as_mut_slice();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                if sq[p] <= negligible || sq[q] <= negligible {
                    continue;
                }
                let (head, tail) = data.split_at_mut(q * rows);
                let (cp, cq) = (&mut head[p * rows..(p + 1) * rows], &mut tail[..rows]);
                let gamma: f64 = cp.iter().zip(cq.iter()).map(|(x, y)| x * y).sum();
                let (alpha, beta) = (sq[p], sq[q]);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (mut np, mut nq) = (0.0, 0.0);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (c * *x - s * *y, s * *x + c * *y);
                    *x = xp;
                    *y = yq;
                    np += xp * xp;
                    nq += yq * yq;
                }
                sq[p] = np;
                sq[q] = nq;
                let (head, tail) = basis.split_at_mut(q * cols);
                for (x, y) in head[p * cols..(p + 1) * cols].iter_mut().zip(tail[..cols].iter_mut()) {
                    let (xp, yq) = (c * *x - s * *y, s * *x + c * *y);
                    *x = xp;
                    *y = yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let k = rows.min(cols);
    let top = order.first().map_or(0.0, |&j| norms[j]);
    let mut u = DMatrix::zeros(rows, k);
    let mut sigma = vec![0.0; k];
    let mut v_sorted = DMatrix::zeros(cols, k);
    let mut filled = 0;
    for (slot, &j) in order.iter().take(k).enumerate() {
        v_sorted.set_column(slot, &v.column(j));
        if norms[j] > 1e-14 * top && norms[j] > 0.0 {
            sigma[slot] = norms[j];
            u.set_column(slot, &(a.column(j) / norms[j]));
            filled = slot + 1;
        }
    }
    complete_columns(&mut u, filled, k);
    (u, sigma, v_sorted)
}

/// Keeps the first `filled` orthonormal columns of `m` and replaces columns
/// `filled..upto` with standard basis vectors orthogonalized against them.
fn complete_columns(m: &mut DMatrix<f64>, filled: usize, upto: usize) {
    let rows = m.nrows();
    let mut next = 0;
    for slot in filled..upto {
        while next < rows {
            let mut e = nalgebra::DVector::<f64>::zeros(rows);
            e[next] = 1.0;
            next += 1;
            for _ in 0..2 {
                for c in 0..slot {
                    let d = m.column(c).dot(&e);
                    e -= m.column(c) * d;
                }
            }
            let n = e.norm();
            if n > 1e-8 {
                m.set_column(slot, &(e / n));
                break;
            }
        }
    }
}

/// Orthonormal basis `Q` of the column space of `w`, grown by picking the
/// residual column of largest norm until every residual column is below
/// `1e-15 ‖w‖_F`. Then `w = Q Qᵀ w` to that accuracy.
fn pivoted_range(w: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = w.nrows();
    let stop = 1e-15 * w.norm();
    let mut residual = w.clone();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    while basis.len() < rows.min(w.ncols()) {
        let (j, norm) = (0..residual.ncols())
            .map(|j| (j, residual.column(j).norm()))
            .fold((0, 0.0), |best, c| if c.1 > best.1 { c } else { best });
        if norm <= stop {
            break;
        }
        let mut q = residual.column(j) / norm;
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&q);
                q -= b * d;
            }
            q.normalize_mut();
        }
        let coeffs = q.transpose() * &residual;
        residual -= &q * coeffs;
        basis.push(q);
    }
    let mut out = DMatrix::zeros(rows, basis.len());
    for (c, b) in basis.iter().enumerate() {
        out.set_column(c, b);
    }
    out
}

fn truncate_to_rank3(u: &DMatrix<f64>, sigma: &[f64], v: &DMatrix<f64>) -> GramSvd {
    let (n_u, n_v) = (u.nrows(), v.nrows());
    let p_max = sigma.first().copied().unwrap_or(0.0);
    let mut u3 = DMatrix::zeros(n_u, 3);
    let mut v3 = DMatrix::zeros(n_v, 3);
    let mut p = [0.0; 3];
    let kept = sigma.len().min(3);
    for slot in 0..kept {
        p[slot] = if p_max > 0.0 && sigma[slot] >= RANK_TOLERANCE * p_max { sigma[slot] } else { 0.0 };
        u3.set_column(slot, &u.column(slot));
        v3.set_column(slot, &v.column(slot));
    }
    complete_columns(&mut u3, kept, n_u.min(3));
    complete_columns(&mut v3, kept, n_v.min(3));
    GramSvd { u: u3, v: v3, p }
}

/// SVD of the full `N x N` Gram matrix, truncated to its (at most) three
/// nonzero singular values, sorted descending with ties kept in input order.
///
/// The matrix is first projected onto an orthonormal basis `Q` of its
/// column space, `G = Q R`; one-sided Jacobi then diagonalizes the small
/// factor, `Rᵀ = X Σ Yᵀ`, giving `G = (Q Y) Σ Xᵀ`.
pub fn gram_svd(settings: &SettingsEnsemble) -> GramSvd {
    let g = settings.gram();
    let q = pivoted_range(g);
    if q.ncols() == 0 {
        return truncate_to_rank3(&q, &[], &DMatrix::zeros(g.ncols(), 0));
    }
    let r_t = g.transpose() * &q;
    let (x, sigma, y) = jacobi_svd(&r_t);
    truncate_to_rank3(&(q * y), &sigma, &x)
}

/// The same factorization routed through the `N x 3` direction matrices:
/// thin QR of each side, then the SVD of the 3x3 core `R_a R_bᵀ`.
pub fn gram_svd_factored(settings: &SettingsEnsemble) -> Result<GramSvd> {
    let n = settings.len();
    if n < 3 {
        return Err(Error::invalid("factored SVD needs N >= 3"));
    }
    let rows = |side: &[Direction]| DMatrix::from_fn(n, 3, |j, c| side[j].to_array()[c]);
    let qr_a = rows(settings.a_side()).qr();
    let qr_b = rows(settings.b_side()).qr();
    let core = qr_a.r() * qr_b.r().transpose();
    let (x, sigma, y) = jacobi_svd(&core);
    let u = qr_a.q() * x;
    let v = qr_b.q() * y;
    Ok(truncate_to_rank3(&u, &sigma, &v))
}

/// Auxiliary hidden-state vectors `q_i`, `t_i` (rows of 3 x M matrices) and
/// weights `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryFrame {
    q: DMatrix<f64>,
    t: DMatrix<f64>,
    rho: Vec<f64>,
}

impl AuxiliaryFrame {
    /// Takes raw vectors and weights, then projects out `√ρ` and
    /// biorthogonalizes `t` against `q`.
    pub fn from_raw(q: DMatrix<f64>, t: DMatrix<f64>, rho: Vec<f64>) -> Result<Self> {
        let m = rho.len();
        if q.shape() != (3, m) || t.shape() != (3, m) {
            return Err(Error::invalid(format!(
                "frame vectors must be 3 x {m}, got {:?} and {:?}",
                q.shape(),
                t.shape()
            )));
        }
        check_weights(&rho, 0.0)?;
        let mut frame = AuxiliaryFrame { q, t, rho };
        frame.reproject()?;
        Ok(frame)
    }

    pub fn states(&self) -> usize {
        self.rho.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// `max |q_i·t_j - δ_ij|`.
    pub fn biorthogonality_residual(&self) -> f64 {
        let k = &self.q * self.t.transpose();
        (k - DMatrix::<f64>::identity(3, 3)).amax()
    }

    /// `max |Σ_n √ρ_n q_i[n]|` over both `q` and `t`.
    pub fn weight_orthogonality_residual(&self) -> f64 {
        let s = sqrt_weights(&self.rho);
        let rq = &self.q * &s;
        let rt = &self.t * &s;
        rq.amax().max(rt.amax())
    }

    /// `q <- s q`, `t <- t / s`; preserves both constraint families.
    pub fn rescale(&mut self, s: f64) {
        self.q *= s;
        self.t /= s;
    }

    pub(crate) fn q_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.q
    }

    pub(crate) fn t_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.t
    }

    pub(crate) fn set_rho(&mut self, rho: Vec<f64>) {
        self.rho = rho;
    }

    /// Restores orthogonality to `√ρ`, then moves `T` by the smallest
    /// correction (rows in the span of `Q`) that gives `Q Tᵀ = I`.
    ///
    /// Fails when `Q Qᵀ` is numerically singular.
    pub(crate) fn project_onto_constraints(&mut self) -> Result<()> {
        self.remove_weight_direction();
        let gram = &self.q * self.q.transpose();
        let g3 = Matrix3::from_fn(|i, j| gram[(i, j)]);
        let scale: f64 = (0..3).map(|i| gram[(i, i)]).product();
        if !(scale > 0.0) || !(g3.determinant() >= 1e-10 * scale) {
            return Err(Error::ConstructionFailure("Q Qᵀ is singular".into()));
        }
        let k = &self.q * self.t.transpose();
        let residual = Matrix3::from_fn(|i, j| if i == j { 1.0 } else { 0.0 } - k[(i, j)]);
        let x = g3
            .cholesky()
            .ok_or_else(|| Error::ConstructionFailure("Q Qᵀ is singular".into()))?
            .solve(&residual);
        let x = DMatrix::from_fn(3, 3, |i, j| x[(j, i)]);
        self.t += x * &self.q;
        Ok(())
    }

    fn remove_weight_direction(&mut self) {
        let s = sqrt_weights(&self.rho);
        let s = s.normalize();
        for mat in [&mut self.q, &mut self.t] {
            let proj = &*mat * &s;
            for i in 0..3 {
                for n in 0..s.len() {
                    mat[(i, n)] -= proj[i] * s[n];
                }
            }
        }
    }

    /// Restores orthogonality to `√ρ` and `Q Tᵀ = I`.
    ///
    /// Fails when the cross-Gram `Q Tᵀ` is numerically singular.
    pub(crate) fn reproject(&mut self) -> Result<()> {
        self.remove_weight_direction();
        let k = &self.q * self.t.transpose();
        let k3 = Matrix3::from_fn(|i, j| k[(i, j)]);
        let scale: f64 = (0..3).map(|i| self.q.row(i).norm() * self.t.row(i).norm()).product();
        if !(scale > 0.0) || !(k3.determinant().abs() >= 1e-8 * scale) {
            return Err(Error::ConstructionFailure("cross-Gram Q Tᵀ is singular".into()));
        }
        let kinv_t = k3.try_inverse().ok_or_else(|| Error::ConstructionFailure("cross-Gram Q Tᵀ is singular".into()))?.transpose();
        let kinv_t = DMatrix::from_fn(3, 3, |i, j| kinv_t[(i, j)]);
        self.t = kinv_t * &self.t;
        Ok(())
    }
}

fn sqrt_weights(rho: &[f64]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(rho.len(), rho.iter().map(|r| r.sqrt()))
}

fn check_weights(rho: &[f64], rho_min: f64) -> Result<()> {
    if rho.len() < MIN_STATES {
        return Err(Error::invalid(format!(
            "need M >= {MIN_STATES} hidden states for biorthogonal frames, got {}",
            rho.len()
        )));
    }
    if let Some(r) = rho.iter().find(|&&r| !(r > 0.0 && r >= rho_min)) {
        return Err(Error::invalid(format!("weight {r} below floor {rho_min}")));
    }
    let total: f64 = rho.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Maps nonnegative raw weights onto the simplex with every entry at least
/// `rho_min`: `ρ_n = ρ_min + (1 - M ρ_min) w_n / Σ w`.
pub fn weights_with_floor(raw: &[f64], rho_min: f64) -> Result<Vec<f64>> {
    let m = raw.len();
    if m == 0 || !(rho_min > 0.0) || rho_min * m as f64 > 1.0 {
        return Err(Error::invalid(format!("weight floor {rho_min} infeasible for M = {m}")));
    }
    let clipped: Vec<f64> = raw.iter().map(|&w| if w.is_finite() { w.max(0.0) } else { 0.0 }).collect();
    let total: f64 = clipped.iter().sum();
    let free = 1.0 - rho_min * m as f64;
    Ok(if total > 0.0 {
        clipped.iter().map(|w| rho_min + free * w / total).collect()
    } else {
        vec![1.0 / m as f64; m]
    })
}

/// Random biorthogonal frame over the given weights, using the default floor.
pub fn make_frame(rho: &[f64], seed: u64) -> Result<AuxiliaryFrame> {
    make_frame_with_floor(rho, DEFAULT_RHO_MIN, seed)
}

/// Samples six Gaussian M-vectors, projects out `√ρ`, and solves
/// `(Q Tᵀ) C = I` to biorthogonalize. A singular draw is retried with the
/// next seed.
pub fn make_frame_with_floor(rho: &[f64], rho_min: f64, seed: u64) -> Result<AuxiliaryFrame> {
    check_weights(rho, rho_min)?;
    let m = rho.len();
    for attempt in 0..FRAME_ATTEMPTS {
        let mut r = rng::stream(seed.wrapping_add(attempt), FRAME_STREAM);
        let q = DMatrix::from_fn(3, m, |_, _| r.sample::<f64, _>(StandardNormal));
        let t = DMatrix::from_fn(3, m, |_, _| r.sample::<f64, _>(StandardNormal));
        match AuxiliaryFrame::from_raw(q, t, rho.to_vec()) {
            Ok(frame) => return Ok(frame),
            Err(Error::ConstructionFailure(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ConstructionFailure(format!(
        "no nonsingular frame after {FRAME_ATTEMPTS} draws from seed {seed}"
    )))
}

/// Expectation tables `A[j][n] = 1 - 2 P_A(+1 | a_j, n)` and
/// `B[k][n] = 2 P_B(+1 | b_k, n) - 1` with hidden-state weights `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLhvModel {
    pub rho: Vec<f64>,
    pub a_table: DMatrix<f64>,
    pub b_table: DMatrix<f64>,
    pub visibility: Visibility,
}

impl DiscreteLhvModel {
    pub fn states(&self) -> usize {
        self.rho.len()
    }

    /// `P_A(+1 | a_j, n)`.
    pub fn prob_a_up(&self, j: usize, n: usize) -> f64 {
        (1.0 - self.a_table[(j, n)]) / 2.0
    }

    /// `P_B(+1 | b_k, n)`.
    pub fn prob_b_up(&self, k: usize, n: usize) -> f64 {
        (1.0 + self.b_table[(k, n)]) / 2.0
    }
}

/// Precomputed `U√p`, `V√p` for repeated evaluation against many frames.
#[derive(Debug, Clone)]
pub struct Assembler {
    us: DMatrix<f64>,
    vs: DMatrix<f64>,
    rank: usize,
}

impl Assembler {
    pub fn new(svd: &GramSvd) -> Self {
        let (us, vs) = svd.scaled();
        Assembler { us, vs, rank: svd.rank() }
    }

    pub fn settings_count(&self) -> usize {
        self.us.nrows()
    }

    /// `(A', B')` for `frame`.
    pub fn raw_tables(&self, frame: &AuxiliaryFrame) -> (DMatrix<f64>, DMatrix<f64>) {
        let inv: Vec<f64> = frame.rho.iter().map(|r| 1.0 / r.sqrt()).collect();
        let mut a = &self.us * &frame.q;
        let mut b = &self.vs * &frame.t;
        for (n, w) in inv.iter().enumerate() {
            a.column_mut(n).scale_mut(*w);
            b.column_mut(n).scale_mut(*w);
        }
        (a, b)
    }

    /// `(max |A'|, max |B'|)` without materializing the tables.
    pub fn table_maxima(&self, frame: &AuxiliaryFrame) -> (f64, f64) {
        let inv: Vec<f64> = frame.rho.iter().map(|r| 1.0 / r.sqrt()).collect();
        (max_product(&self.us, &frame.q, &inv), max_product(&self.vs, &frame.t, &inv))
    }

    /// Model with `1/√V = max |A'|, |B'|`, capped at `V = 1`.
    pub fn assemble(&self, frame: &AuxiliaryFrame) -> DiscreteLhvModel {
        let n = self.us.nrows();
        let m = frame.states();
        if self.rank == 0 {
            return DiscreteLhvModel {
                rho: frame.rho.clone(),
                a_table: DMatrix::zeros(n, m),
                b_table: DMatrix::zeros(n, m),
                visibility: Visibility::ONE,
            };
        }
        let (a, b) = self.raw_tables(frame);
        let peak = a.amax().max(b.amax());
        let v = (1.0 / (peak * peak)).min(1.0);
        let s = v.sqrt();
        DiscreteLhvModel {
            rho: frame.rho.clone(),
            a_table: a * s,
            b_table: b * s,
            visibility: Visibility::new(v).expect("capped visibility"),
        }
    }

    /// Visibility reachable from `frame` after the optimal rescaling
    /// `q <- s q, t <- t / s`, i.e. `1 / (max|A'| max|B'|)`, capped at 1.
    pub fn balanced_visibility(&self, frame: &AuxiliaryFrame) -> f64 {
        if self.rank == 0 {
            return 1.0;
        }
        let (ma, mb) = self.table_maxima(frame);
        (1.0 / (ma * mb)).min(1.0)
    }

    /// Rescales `frame` so that `max |A'| = max |B'|`.
    pub fn balance(&self, frame: &mut AuxiliaryFrame) {
        if self.rank == 0 {
            return;
        }
        let (ma, mb) = self.table_maxima(frame);
        if ma > 0.0 && mb > 0.0 {
            frame.rescale((mb / ma).sqrt());
        }
    }
}

fn max_product(left: &DMatrix<f64>, right: &DMatrix<f64>, col_scale: &[f64]) -> f64 {
    let (rows, inner) = left.shape();
    let cols = right.ncols();
    let mut best = 0.0_f64;
    for n in 0..cols {
        let w = col_scale[n];
        for j in 0..rows {
            let mut acc = 0.0;
            for i in 0..inner {
                acc += left[(j, i)] * right[(i, n)];
            }
            best = best.max((acc * w).abs());
        }
    }
    best
}

/// Builds the model for `frame` over `settings`.
///
/// An all-zero Gram matrix yields `V = 1` with zero tables.
pub fn assemble_model(settings: &SettingsEnsemble, frame: &AuxiliaryFrame) -> DiscreteLhvModel {
    Assembler::new(&gram_svd(settings)).assemble(frame)
}

/// Largest violation of each constraint family; `passed` iff all are within
/// `tol`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `max |Σ_n ρ_n A_jn B_kn - V G_jk|`
    pub correlation: f64,
    /// `max (|A|, |B|) - 1`, floored at 0
    pub bounds: f64,
    /// `max |Σ_n ρ_n A_jn|`, `max |Σ_n ρ_n B_kn|`
    pub marginals: f64,
    /// distance of the implied response probabilities from `[0, 1]`
    pub probabilities: f64,
    /// weights: negativity and `|Σρ - 1|`
    pub weights: f64,
    pub tol: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn max_violation(&self) -> f64 {
        self.correlation.max(self.bounds).max(self.marginals).max(self.probabilities).max(self.weights)
    }
}

pub fn validate_model(model: &DiscreteLhvModel, settings: &SettingsEnsemble, tol: f64) -> Result<ValidationReport> {
    let n = settings.len();
    let m = model.states();
    if model.a_table.shape() != (n, m) || model.b_table.shape() != (n, m) {
        return Err(Error::invalid(format!(
            "tables {:?}/{:?} do not match N = {n}, M = {m}",
            model.a_table.shape(),
            model.b_table.shape()
        )));
    }
    let v = model.visibility.value();
    let gram = settings.gram();
    let rho = &model.rho;

    let mut correlation = 0.0_f64;
    for j in 0..n {
        for k in 0..n {
            let s: f64 = (0..m).map(|i| rho[i] * model.a_table[(j, i)] * model.b_table[(k, i)]).sum();
            correlation = correlation.max((s - v * gram[(j, k)]).abs());
        }
    }
    let bounds = (model.a_table.amax().max(model.b_table.amax()) - 1.0).max(0.0);
    let mut marginals = 0.0_f64;
    for table in [&model.a_table, &model.b_table] {
        for j in 0..n {
            let s: f64 = (0..m).map(|i| rho[i] * table[(j, i)]).sum();
            marginals = marginals.max(s.abs());
        }
    }
    let outside = |p: f64| (-p).max(p - 1.0).max(0.0);
    let mut probabilities = 0.0_f64;
    for j in 0..n {
        for i in 0..m {
            probabilities = probabilities.max(outside(model.prob_a_up(j, i))).max(outside(model.prob_b_up(j, i)));
        }
    }
    let weights = rho
        .iter()
        .map(|r| (-r).max(0.0))
        .fold((rho.iter().sum::<f64>() - 1.0).abs(), f64::max);

    let mut report = ValidationReport { correlation, bounds, marginals, probabilities, weights, tol, passed: false };
    report.passed = report.max_violation() <= tol;
    Ok(report)
}
