//! Two-phase revised simplex over implicitly generated columns.
//!
//! Solves `max cᵀx  s.t.  A x = b, x >= 0` with `b >= 0`. Columns are never
//! stored; a [`ColumnSource`] produces them on demand and may price them
//! faster than a full scan. Pricing is Dantzig's rule, switching to Bland's
//! rule during long runs of degenerate pivots so the method terminates.

use crate::error::{Error, Result};

const PRICE_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;
const DEGENERATE_RUN: usize = 30;

pub(crate) trait ColumnSource {
    fn rows(&self) -> usize;
    fn columns(&self) -> usize;
    fn cost(&self, j: usize) -> f64;
    fn column(&self, j: usize, out: &mut [f64]);
    fn rhs(&self) -> Vec<f64>;

    /// Column maximizing the reduced cost `cost_scale * c_j - y·A_j`.
    fn best_column(&self, y: &[f64], cost_scale: f64) -> (usize, f64) {
        let mut col = vec![0.0; self.rows()];
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..self.columns() {
            let d = self.reduced_cost(j, y, cost_scale, &mut col);
            if d > best.1 {
                best = (j, d);
            }
        }
        best
    }

    /// Column maximizing `|y·A_j|`.
    fn best_abs_column(&self, y: &[f64]) -> (usize, f64) {
        let mut col = vec![0.0; self.rows()];
        let mut best = (0, 0.0);
        for j in 0..self.columns() {
            self.column(j, &mut col);
            let d = dot(y, &col).abs();
            if d > best.1 {
                best = (j, d);
            }
        }
        best
    }

    fn reduced_cost(&self, j: usize, y: &[f64], cost_scale: f64, scratch: &mut [f64]) -> f64 {
        self.column(j, scratch);
        cost_scale * self.cost(j) - dot(y, scratch)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub objective: f64,
    /// `(column, value)` for basic structural columns with nonzero value.
    pub basic: Vec<(usize, f64)>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Structural(usize),
    Artificial(usize),
}

struct Revised<'a, S: ColumnSource> {
    src: &'a S,
    m: usize,
    basis: Vec<Var>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    b: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

impl<'a, S: ColumnSource> Revised<'a, S> {
    fn new(src: &'a S) -> Self {
        let m = src.rows();
        let b = src.rhs();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Revised {
            src,
            m,
            basis: (0..m).map(Var::Artificial).collect(),
            binv,
            xb: b.clone(),
            b,
            since_refactor: 0,
            iterations: 0,
            max_iterations: 50_000 + 100 * m * m,
        }
    }

    fn var_column(&self, v: Var, out: &mut [f64]) {
        match v {
            Var::Structural(j) => self.src.column(j, out),
            Var::Artificial(i) => {
                out.iter_mut().for_each(|x| *x = 0.0);
                out[i] = 1.0;
            }
        }
    }

    /// Phase 1 minimizes the artificial sum; phase 2 uses structural costs.
    fn var_cost(&self, v: Var, phase_one: bool) -> f64 {
        match (v, phase_one) {
            (Var::Artificial(_), true) => -1.0,
            (Var::Artificial(_), false) => 0.0,
            (Var::Structural(_), true) => 0.0,
            (Var::Structural(j), false) => self.src.cost(j),
        }
    }

    fn duals(&self, phase_one: bool) -> Vec<f64> {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&v| self.var_cost(v, phase_one)).collect();
        let mut y = vec![0.0; m];
        for (r, c) in cb.iter().enumerate() {
            if *c != 0.0 {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk += c * self.binv[r * m + k];
                }
            }
        }
        y
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|r| dot(&self.binv[r * m..(r + 1) * m], col)).collect()
    }

    fn objective(&self, phase_one: bool) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(&v, x)| self.var_cost(v, phase_one) * x).sum()
    }

    fn is_basic(&self, j: usize) -> bool {
        self.basis.contains(&Var::Structural(j))
    }

    /// First structural column (by index) with positive reduced cost.
    fn bland_entering(&self, y: &[f64], cost_scale: f64) -> Option<usize> {
        let mut col = vec![0.0; self.m];
        (0..self.src.columns())
            .find(|&j| !self.is_basic(j) && self.src.reduced_cost(j, y, cost_scale, &mut col) > PRICE_TOL)
    }

    fn pivot(&mut self, row: usize, entering: Var, d: &[f64]) {
        let m = self.m;
        let theta = self.xb[row] / d[row];
        for r in 0..m {
            if r != row {
                self.xb[r] -= theta * d[r];
                if self.xb[r] < 0.0 && self.xb[r] > -1e-12 {
                    self.xb[r] = 0.0;
                }
            }
        }
        self.xb[row] = theta;
        let piv = d[row];
        for k in 0..m {
            self.binv[row * m + k] /= piv;
        }
        for r in 0..m {
            if r != row && d[r] != 0.0 {
                let f = d[r];
                for k in 0..m {
                    self.binv[r * m + k] -= f * self.binv[row * m + k];
                }
            }
        }
        self.basis[row] = entering;
        self.since_refactor += 1;
        self.iterations += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    /// Recomputes `B⁻¹` and `x_B` from scratch by Gauss–Jordan elimination.
    fn refactor(&mut self) {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (c, &v) in self.basis.iter().enumerate() {
            self.var_column(v, &mut col);
            for r in 0..m {
                bmat[r * m + c] = col[r];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| bmat[x * m + c].abs().total_cmp(&bmat[y * m + c].abs()))
                .expect("nonempty");
            if bmat[p * m + c].abs() < 1e-14 {
                // keep the product-form inverse rather than a broken one
                self.since_refactor = 0;
                return;
            }
            if p != c {
                for k in 0..m {
                    bmat.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = bmat[c * m + c];
            for k in 0..m {
                bmat[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = bmat[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            bmat[r * m + k] -= f * bmat[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.xb = self.ftran(&self.b.clone());
        for x in &mut self.xb {
            if *x < 0.0 && *x > -1e-10 {
                *x = 0.0;
            }
        }
        self.since_refactor = 0;
    }

    fn run_phase(&mut self, phase_one: bool) -> Result<()> {
        let cost_scale = if phase_one { 0.0 } else { 1.0 };
        let mut degenerate = 0usize;
        let mut col = vec![0.0; self.m];
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Solver(format!("no convergence after {} pivots", self.iterations)));
            }
            let y = self.duals(phase_one);
            let bland = degenerate >= DEGENERATE_RUN;
            let entering = if bland {
                self.bland_entering(&y, cost_scale)
            } else {
                let (j, d) = self.src.best_column(&y, cost_scale);
                (d > PRICE_TOL).then_some(j)
            };
            let Some(j) = entering else { return Ok(()) };

            self.src.column(j, &mut col);
            let d = self.ftran(&col);
            // ratio test; ties prefer artificials, then (under Bland) the
            // smallest variable index
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                if d[r] > PIVOT_TOL {
                    let ratio = self.xb[r].max(0.0) / d[r];
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12 {
                                true
                            } else if ratio <= lratio + 1e-12 {
                                tie_break(self.basis[r], self.basis[lr], bland)
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(Error::Solver("objective is unbounded".into()));
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, Var::Structural(j), &d);
        }
    }

    /// Pivots zero-level artificials out of the basis where possible.
    fn expel_artificials(&mut self) {
        let mut col = vec![0.0; self.m];
        for row in 0..self.m {
            if !matches!(self.basis[row], Var::Artificial(_)) {
                continue;
            }
            let r = self.binv[row * self.m..(row + 1) * self.m].to_vec();
            let (j, mag) = self.src.best_abs_column(&r);
            if mag > PIVOT_TOL && !self.is_basic(j) {
                self.src.column(j, &mut col);
                let d = self.ftran(&col);
                self.pivot(row, Var::Structural(j), &d);
            }
            // otherwise the row is redundant and the artificial stays at 0
        }
    }
}

fn tie_break(candidate: Var, incumbent: Var, bland: bool) -> bool {
    match (candidate, incumbent) {
        (Var::Artificial(_), Var::Structural(_)) => true,
        (Var::Structural(_), Var::Artificial(_)) => false,
        (Var::Artificial(a), Var::Artificial(b)) => a < b,
        (Var::Structural(a), Var::Structural(b)) => bland && a < b,
    }
}

pub(crate) fn maximize<S: ColumnSource>(src: &S) -> Result<LpSolution> {
    if src.rhs().iter().any(|&b| b < 0.0) {
        return Err(Error::Solver("right-hand side must be nonnegative".into()));
    }
    let mut lp = Revised::new(src);
    lp.run_phase(true)?;
    let infeasibility = -lp.objective(true);
    if infeasibility > 1e-8 {
        return Err(Error::Solver(format!("infeasible (artificial sum {infeasibility})")));
    }
    lp.expel_artificials();
    lp.run_phase(false)?;
    lp.refactor();
    let basic = lp
        .basis
        .iter()
        .zip(&lp.xb)
        .filter_map(|(&v, &x)| match v {
            Var::Structural(j) if x != 0.0 => Some((j, x)),
            _ => None,
        })
        .collect();
    Ok(LpSolution { objective: lp.objective(false), basic, iterations: lp.iterations })
}
