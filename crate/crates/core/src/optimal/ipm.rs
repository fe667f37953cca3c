//! Mehrotra predictor-corrector interior-point method for
//! `min c'x  s.t.  A x = b, x >= 0`, with the normal equations `A D A'`
//! assembled and factored as a banded matrix.
//!
//! The constraint matrix is stored column-wise; bandwidth is derived from the
//! row spread of each column, so problems whose rows can be ordered to keep
//! columns local (time-staged problems) factor in linear time.

use super::banded::{BandedCholesky, SymBanded};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct StandardLp {
    pub rows: usize,
    pub columns: Vec<Vec<(usize, f64)>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

const REFINEMENT_SWEEPS: usize = 3;

/// A stalled run is still accepted when its best iterate is within this
/// factor of the requested tolerance.
const STALL_ACCEPTANCE: f64 = 100.0;

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl StandardLp {
    pub fn bandwidth(&self) -> usize {
        self.columns
            .iter()
            .map(|col| {
                let lo = col.iter().map(|e| e.0).min().unwrap_or(0);
                let hi = col.iter().map(|e| e.0).max().unwrap_or(0);
                hi - lo
            })
            .max()
            .unwrap_or(0)
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (col, &xj) in self.columns.iter().zip(x) {
            if xj != 0.0 {
                for &(i, a) in col {
                    out[i] += a * xj;
                }
            }
        }
        out
    }

    fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(i, a)| a * y[i]).sum())
            .collect()
    }

    fn normal_matrix(&self, d: &[f64], bw: usize) -> BandedCholesky {
        let mut m = SymBanded::zeros(self.rows, bw);
        for (col, &dj) in self.columns.iter().zip(d) {
            for (p, &(i, ai)) in col.iter().enumerate() {
                for &(k, ak) in &col[..=p] {
                    m.add(i, k, dj * ai * ak);
                }
            }
        }
        for i in 0..self.rows {
            let d = m.get(i, i);
            m.add(i, i, 1e-14 * d);
        }
        m.factor()
    }

    /// Objective value `c'x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }

    pub fn solve(&self, opts: IpmOptions) -> Result<IpmSolution> {
        let m = self.rows;
        let n = self.columns.len();
        if self.c.len() != n || self.b.len() != m {
            return Err(Error::Lp("dimension mismatch".into()));
        }
        if n == 0 {
            return Ok(IpmSolution {
                x: vec![],
                y: vec![0.0; m],
                z: vec![],
                primal_objective: 0.0,
                dual_objective: 0.0,
                iterations: 0,
            });
        }
        let bw = self.bandwidth();

        // Starting point from the least-squares solutions of A x = b and A'y + z = c.
        let ones = vec![1.0; n];
        let chol = self.normal_matrix(&ones, bw);
        let mut x = self.mul_t(&chol.solve(&self.b));
        let mut y = chol.solve(&self.mul(&self.c));
        let aty = self.mul_t(&y);
        let mut z: Vec<f64> = self.c.iter().zip(&aty).map(|(c, a)| c - a).collect();
        let dx = (-1.5 * x.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0);
        let dz = (-1.5 * z.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0);
        x.iter_mut().for_each(|v| *v += dx);
        z.iter_mut().for_each(|v| *v += dz);
        let xz = dot(&x, &z);
        let sx: f64 = x.iter().sum();
        let sz: f64 = z.iter().sum();
        let (ex, ez) = if xz > 0.0 && sx > 0.0 && sz > 0.0 {
            (0.5 * xz / sz, 0.5 * xz / sx)
        } else {
            (1.0, 1.0)
        };
        x.iter_mut().for_each(|v| *v = (*v + ex).max(1e-12));
        z.iter_mut().for_each(|v| *v = (*v + ez).max(1e-12));

        let b_norm = 1.0 + norm_inf(&self.b);
        let c_norm = 1.0 + norm_inf(&self.c);

        // best iterate by the worst of the three relative residuals; returned
        // when the iteration stalls at the attainable accuracy
        let mut best: Option<(f64, IpmSolution)> = None;
        for iter in 0..opts.max_iterations {
            let ax = self.mul(&x);
            let rb: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let aty = self.mul_t(&y);
            let rc: Vec<f64> = (0..n).map(|j| self.c[j] - aty[j] - z[j]).collect();
            let pobj = dot(&self.c, &x);
            let dobj = dot(&self.b, &y);
            let gap = dot(&x, &z);
            let mu = gap / n as f64;

            if !mu.is_finite() || !pobj.is_finite() {
                break;
            }
            let merit = (norm_inf(&rb) / b_norm)
                .max(norm_inf(&rc) / c_norm)
                .max(gap / (1.0 + pobj.abs()));
            let improved = best.as_ref().map_or(true, |(m, _)| merit < *m);
            if improved || merit <= opts.tolerance {
                best = Some((
                    merit,
                    IpmSolution {
                        x: x.clone(),
                        y: y.clone(),
                        z: z.clone(),
                        primal_objective: pobj,
                        dual_objective: dobj,
                        iterations: iter,
                    },
                ));
            }
            if merit <= opts.tolerance {
                break;
            }
            // complementarity far below the residual floor: further steps only
            // amplify rounding in the normal equations
            if gap <= 1e-6 * opts.tolerance * (1.0 + pobj.abs()) {
                break;
            }

            let d: Vec<f64> = x.iter().zip(&z).map(|(x, z)| x / z).collect();
            let chol = self.normal_matrix(&d, bw);

            // rhs = rb + A (D rc) - A (rxz / z); dx = D (A'dy - rc) + rxz / z; dz = (rxz - z dx) / x
            let direction = |rxz: &[f64]| {
                let w: Vec<f64> = (0..n).map(|j| d[j] * rc[j] - rxz[j] / z[j]).collect();
                let aw = self.mul(&w);
                let rhs: Vec<f64> = rb.iter().zip(&aw).map(|(a, b)| a + b).collect();
                let mut dy = chol.solve(&rhs);
                // the factor is of a slightly regularized, badly scaled matrix;
                // a few refinement sweeps against the exact product restore accuracy
                for _ in 0..REFINEMENT_SWEEPS {
                    let t = self.mul_t(&dy);
                    let dt: Vec<f64> = t.iter().zip(&d).map(|(t, d)| t * d).collect();
                    let adt = self.mul(&dt);
                    let res: Vec<f64> = rhs.iter().zip(&adt).map(|(r, a)| r - a).collect();
                    let corr = chol.solve(&res);
                    dy.iter_mut().zip(&corr).for_each(|(y, c)| *y += c);
                }
                let atdy = self.mul_t(&dy);
                let dx: Vec<f64> = (0..n)
                    .map(|j| d[j] * (atdy[j] - rc[j]) + rxz[j] / z[j])
                    .collect();
                let dz: Vec<f64> = (0..n).map(|j| (rxz[j] - z[j] * dx[j]) / x[j]).collect();
                (dx, dy, dz)
            };
            let max_step = |v: &[f64], dv: &[f64]| {
                v.iter()
                    .zip(dv)
                    .filter(|(_, d)| **d < 0.0)
                    .map(|(v, d)| -v / d)
                    .fold(1.0f64, f64::min)
            };

            let rxz_aff: Vec<f64> = (0..n).map(|j| -x[j] * z[j]).collect();
            let (dx_a, _, dz_a) = direction(&rxz_aff);
            let ap = max_step(&x, &dx_a);
            let ad = max_step(&z, &dz_a);
            let mu_aff = (0..n)
                .map(|j| (x[j] + ap * dx_a[j]) * (z[j] + ad * dz_a[j]))
                .sum::<f64>()
                / n as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let rxz: Vec<f64> = (0..n)
                .map(|j| -x[j] * z[j] - dx_a[j] * dz_a[j] + sigma * mu)
                .collect();
            let (dx, dy, dz) = direction(&rxz);
            let eta = (1.0 - mu.min(0.5)).max(0.9).min(0.999_9);
            let ap = (eta * max_step(&x, &dx)).min(1.0);
            let ad = (eta * max_step(&z, &dz)).min(1.0);
            for j in 0..n {
                x[j] += ap * dx[j];
                z[j] += ad * dz[j];
            }
            for i in 0..m {
                y[i] += ad * dy[i];
            }
        }
        match best {
            Some((merit, sol)) if merit <= STALL_ACCEPTANCE * opts.tolerance => Ok(sol),
            Some((merit, sol)) => Err(Error::Lp(format!(
                "no convergence within {} iterations (best relative residual {merit:.3e} at iteration {})",
                opts.max_iterations, sol.iterations
            ))),
            None => Err(Error::Lp("diverged at the starting point".into())),
        }
    }
}
