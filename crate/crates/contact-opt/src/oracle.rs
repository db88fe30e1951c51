//! Independent direct-transcription solver.
//!
//! Controls at `N + 1` uniform nodes are the decision variables; states are
//! recovered by one RK4 step per interval with the control interpolated
//! linearly, so the dynamics hold by construction and the accumulated cost
//! is the matching quadrature. Fixed endpoints enter through a quadratic
//! penalty with a staged weight ramp. Gradients are forward differences: an
//! oracle needs no adjoint.
//!
//! The optimizers live behind the [`Optimizer`] trait and are registered by
//! name ("quasi-newton", "gradient-descent"). Everything here is kept
//! independent of the indirect solvers it cross-checks: no Hamiltonians, no
//! costates, no contact structure.

use crate::error::{Error, Result};
use crate::expr::BoundExpr;
#[cfg(test)]
use crate::expr::Expr;
use crate::herglotz_ocp::HerglotzOcpProblem;
use crate::integrate::Trajectory;
use crate::ocp::{OcpProblem, Sense};

/// Transcription resolution and optimizer selection.
#[derive(Debug, Clone)]
pub struct TranscriptionConfig {
    /// Number of control intervals (at least 4).
    pub intervals: usize,
    /// Registered optimizer name.
    pub optimizer: String,
    /// Iteration budget per penalty stage.
    pub max_iters: usize,
    /// Gradient max-norm target.
    pub tol: f64,
    /// Endpoint-penalty weights, applied in sequence with warm starts.
    pub penalty_stages: Vec<f64>,
}

impl Default for TranscriptionConfig {
    fn default() -> Self {
        // the endpoint-penalty ramp stops at 1e4: the induced endpoint bias
        // is ~1e-4 while forward-difference gradients stay resolvable at the
        // 1e-5 tolerance (larger weights push the difference noise above it)
        TranscriptionConfig {
            intervals: 64,
            optimizer: "quasi-newton".to_string(),
            max_iters: 500,
            tol: 1e-5,
            penalty_stages: vec![1e2, 1e4],
        }
    }
}

#[derive(Debug, Clone)]
pub struct TranscriptionResult {
    /// Node-sampled curve: states, the accumulated-cost coordinate, controls.
    pub trajectory: Trajectory,
    /// Classical problems: the integral of `F`. Herglotz problems: `z(b)`.
    pub objective: f64,
    /// Final gradient max-norm of the penalized objective.
    pub grad_norm: f64,
    pub terminal_residual: f64,
    pub iterations: usize,
    /// True when the gradient target was not reached within the budget; the
    /// last iterate is still returned.
    pub stalled: bool,
}

// ---- optimizer registry ---------------------------------------------------

#[derive(Debug, Clone)]
pub struct OptimRun {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A smooth unconstrained minimizer working from forward-difference
/// gradients.
pub trait Optimizer: Sync {
    fn name(&self) -> &'static str;
    fn minimize(
        &self,
        objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
        x0: Vec<f64>,
        tol: f64,
        max_iters: usize,
    ) -> Result<OptimRun>;
}

struct GradientDescent;
struct QuasiNewton;

static GRADIENT_DESCENT: GradientDescent = GradientDescent;
static QUASI_NEWTON: QuasiNewton = QuasiNewton;
static OPTIMIZERS: [&dyn Optimizer; 2] = [&QUASI_NEWTON, &GRADIENT_DESCENT];

pub fn optimizers() -> &'static [&'static dyn Optimizer] {
    &OPTIMIZERS
}

pub fn optimizer(name: &str) -> Result<&'static dyn Optimizer> {
    OPTIMIZERS
        .iter()
        .copied()
        .find(|o| o.name() == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown optimizer `{name}` (registered: {})",
                OPTIMIZERS
                    .iter()
                    .map(|o| o.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
}

fn fd_gradient(
    objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    fx: f64,
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-7 * (1.0 + x[j].abs());
        let old = xp[j];
        xp[j] = old + h;
        g[j] = (objective(&xp)? - fx) / h;
        xp[j] = old;
    }
    Ok(g)
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

fn backtrack(
    objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    fx: f64,
    dir: &[f64],
    slope: f64,
) -> Result<Option<(Vec<f64>, f64, f64)>> {
    let mut alpha = 1.0;
    for _ in 0..40 {
        let xt: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
        match objective(&xt) {
            Ok(ft) if ft <= fx + 1e-4 * alpha * slope => return Ok(Some((xt, ft, alpha))),
            Ok(_) | Err(_) => alpha *= 0.5,
        }
    }
    Ok(None)
}

impl Optimizer for GradientDescent {
    fn name(&self) -> &'static str {
        "gradient-descent"
    }

    fn minimize(
        &self,
        objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
        x0: Vec<f64>,
        tol: f64,
        max_iters: usize,
    ) -> Result<OptimRun> {
        let mut x = x0;
        let mut fx = objective(&x)?;
        let mut g = fd_gradient(objective, &x, fx)?;
        let mut iterations = 0;
        while iterations < max_iters {
            if max_norm(&g) <= tol {
                break;
            }
            iterations += 1;
            let dir: Vec<f64> = g.iter().map(|&v| -v).collect();
            let slope: f64 = -g.iter().map(|v| v * v).sum::<f64>();
            match backtrack(objective, &x, fx, &dir, slope)? {
                Some((xt, ft, _)) => {
                    x = xt;
                    fx = ft;
                    g = fd_gradient(objective, &x, fx)?;
                }
                None => break,
            }
        }
        let grad_norm = max_norm(&g);
        Ok(OptimRun {
            converged: grad_norm <= tol,
            x,
            value: fx,
            grad_norm,
            iterations,
        })
    }
}

impl Optimizer for QuasiNewton {
    fn name(&self) -> &'static str {
        "quasi-newton"
    }

    fn minimize(
        &self,
        objective: &mut dyn FnMut(&[f64]) -> Result<f64>,
        x0: Vec<f64>,
        tol: f64,
        max_iters: usize,
    ) -> Result<OptimRun> {
        let n = x0.len();
        let mut x = x0;
        let mut fx = objective(&x)?;
        let mut g = fd_gradient(objective, &x, fx)?;
        // dense inverse-Hessian approximation, identity start
        let mut h_inv = vec![vec![0.0; n]; n];
        for (i, row) in h_inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut iterations = 0;
        while iterations < max_iters {
            if max_norm(&g) <= tol {
                break;
            }
            iterations += 1;
            let mut dir = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    dir[i] -= h_inv[i][j] * g[j];
                }
            }
            let mut slope: f64 = dir.iter().zip(&g).map(|(d, gv)| d * gv).sum();
            if slope >= 0.0 {
                // not a descent direction; reset to steepest descent
                for (i, row) in h_inv.iter_mut().enumerate() {
                    row.fill(0.0);
                    row[i] = 1.0;
                }
                for (d, gv) in dir.iter_mut().zip(&g) {
                    *d = -gv;
                }
                slope = -g.iter().map(|v| v * v).sum::<f64>();
            }
            let Some((xt, ft, alpha)) = backtrack(objective, &x, fx, &dir, slope)? else {
                break;
            };
            let g_new = fd_gradient(objective, &xt, ft)?;
            let s: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
            let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
            if sy > 1e-12 * max_norm(&s) * max_norm(&yv) {
                // BFGS update of the inverse Hessian
                let rho = 1.0 / sy;
                let mut hy = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        hy[i] += h_inv[i][j] * yv[j];
                    }
                }
                let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
                for i in 0..n {
                    for j in 0..n {
                        h_inv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j]
                            - rho * (hy[i] * s[j] + s[i] * hy[j]);
                    }
                }
            }
            x = xt;
            fx = ft;
            g = g_new;
        }
        let grad_norm = max_norm(&g);
        Ok(OptimRun {
            converged: grad_norm <= tol,
            x,
            value: fx,
            grad_norm,
            iterations,
        })
    }
}

// ---- transcription ---------------------------------------------------------

struct Transcription {
    states: Vec<String>,
    controls: Vec<String>,
    z_name: String,
    x_bound: Vec<BoundExpr>,
    f_bound: BoundExpr,
    interval: [f64; 2],
    x_start: Vec<f64>,
    x_end: Vec<f64>,
    z_start: f64,
    maximize_z: bool,
    n: usize,
}

impl Transcription {
    fn m(&self) -> usize {
        self.states.len()
    }

    fn k(&self) -> usize {
        self.controls.len()
    }

    /// RK4 over each interval with linear control interpolation; returns the
    /// node samples `(x, z)`.
    fn simulate(&self, u_nodes: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let m = self.m();
        let k = self.k();
        let n = self.n;
        let h = (self.interval[1] - self.interval[0]) / n as f64;
        let mut vals = vec![0.0; m + 1 + k];
        let mut x = self.x_start.clone();
        let mut z = self.z_start;
        let mut xs = Vec::with_capacity(n + 1);
        let mut zs = Vec::with_capacity(n + 1);
        xs.push(x.clone());
        zs.push(z);

        let mut ks = vec![vec![0.0; m + 1]; 4];
        let mut ytmp = vec![0.0; m + 1];
        for step in 0..n {
            let u_left = &u_nodes[step * k..(step + 1) * k];
            let u_right = &u_nodes[(step + 1) * k..(step + 2) * k];
            let mut eval = |theta: f64, xv: &[f64], out: &mut Vec<f64>| -> Result<()> {
                vals[..m].copy_from_slice(&xv[..m]);
                vals[m] = xv[m];
                for j in 0..k {
                    vals[m + 1 + j] = (1.0 - theta) * u_left[j] + theta * u_right[j];
                }
                for (i, xb) in self.x_bound.iter().enumerate() {
                    out[i] = xb.eval(&vals)?;
                }
                out[m] = self.f_bound.eval(&vals)?;
                Ok(())
            };
            let mut y = x.clone();
            y.push(z);
            eval(0.0, &y, &mut ks[0])?;
            for i in 0..=m {
                ytmp[i] = y[i] + 0.5 * h * ks[0][i];
            }
            eval(0.5, &ytmp, &mut ks[1])?;
            for i in 0..=m {
                ytmp[i] = y[i] + 0.5 * h * ks[1][i];
            }
            eval(0.5, &ytmp, &mut ks[2])?;
            for i in 0..=m {
                ytmp[i] = y[i] + h * ks[2][i];
            }
            eval(1.0, &ytmp, &mut ks[3])?;
            for i in 0..=m {
                y[i] += h / 6.0 * (ks[0][i] + 2.0 * ks[1][i] + 2.0 * ks[2][i] + ks[3][i]);
            }
            x.copy_from_slice(&y[..m]);
            z = y[m];
            xs.push(x.clone());
            zs.push(z);
        }
        Ok((xs, zs))
    }

    fn run(&self, cfg: &TranscriptionConfig) -> Result<TranscriptionResult> {
        if cfg.intervals < 4 {
            return Err(Error::Config(
                "transcription needs at least 4 intervals".into(),
            ));
        }
        let opt = optimizer(&cfg.optimizer)?;
        let m = self.m();
        let k = self.k();
        let n = self.n;
        let mut u = vec![0.0; k * (n + 1)];
        let mut iterations = 0;
        let mut grad_norm = f64::INFINITY;
        let mut converged = false;

        // penalty ramp, then multiplier updates at the final weight so the
        // endpoint bias drops well below the discretization error
        let mut multipliers = vec![0.0; m];
        let stages = cfg.penalty_stages.len();
        let outer_total = stages + 3;
        for outer in 0..outer_total {
            let mu = cfg.penalty_stages[outer.min(stages - 1)];
            let lambda = multipliers.clone();
            let mut objective = |uv: &[f64]| -> Result<f64> {
                let (xs, zs) = self.simulate(uv)?;
                let z_b = *zs.last().expect("nodes");
                let base = if self.maximize_z { -z_b } else { z_b };
                let xe = xs.last().expect("nodes");
                let mut pen = 0.0;
                for i in 0..xs[0].len() {
                    let gap = xe[i] - self.x_end[i];
                    pen += lambda[i] * gap + 0.5 * mu * gap * gap;
                }
                Ok(base + pen)
            };
            let run = opt.minimize(&mut objective, u, cfg.tol, cfg.max_iters)?;
            u = run.x;
            iterations += run.iterations;
            grad_norm = run.grad_norm;
            converged = run.converged && outer + 1 == outer_total;
            if outer + 1 >= stages {
                let (xs, _) = self.simulate(&u)?;
                let xe = xs.last().expect("nodes");
                for i in 0..m {
                    multipliers[i] += mu * (xe[i] - self.x_end[i]);
                }
            }
        }

        let (xs, zs) = self.simulate(&u)?;
        let z_b = *zs.last().expect("nodes");
        let terminal_residual = xs
            .last()
            .expect("nodes")
            .iter()
            .zip(&self.x_end)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);

        let m = self.m();
        let mut chart = self.states.clone();
        chart.push(self.z_name.clone());
        chart.extend(self.controls.iter().cloned());
        let h = (self.interval[1] - self.interval[0]) / n as f64;
        let times: Vec<f64> = (0..=n).map(|j| self.interval[0] + h * j as f64).collect();
        let samples: Vec<Vec<f64>> = (0..=n)
            .map(|j| {
                let mut row = xs[j].clone();
                row.push(zs[j]);
                row.extend_from_slice(&u[j * k..(j + 1) * k]);
                row
            })
            .collect();
        let trajectory = Trajectory {
            chart,
            times,
            derivs: vec![vec![0.0; m + 1 + k]; n + 1],
            samples,
            diagnostics: Vec::new(),
        };
        Ok(TranscriptionResult {
            trajectory,
            objective: z_b,
            grad_norm,
            terminal_residual,
            iterations,
            stalled: !converged,
        })
    }
}

/// Transcribe and optimize a classical problem. The reported objective is
/// the accumulated integral of `F` (the trajectory's last `x0` column).
pub fn transcribe_classical(
    problem: &OcpProblem,
    cfg: &TranscriptionConfig,
) -> Result<TranscriptionResult> {
    problem.validate()?;
    let mut layout = problem.states.clone();
    let z_name = if problem.states.iter().any(|s| s == "x0") {
        "cost_acc".to_string()
    } else {
        "x0".to_string()
    };
    layout.push(z_name.clone());
    layout.extend(problem.controls.iter().cloned());
    let t = Transcription {
        states: problem.states.clone(),
        controls: problem.controls.clone(),
        z_name,
        x_bound: problem
            .dynamics
            .iter()
            .map(|e| e.bind(&layout))
            .collect::<Result<Vec<_>>>()?,
        f_bound: problem.cost.bind(&layout)?,
        interval: problem.interval,
        x_start: problem.x_start.clone(),
        x_end: problem.x_end.clone(),
        z_start: 0.0,
        maximize_z: problem.sense == Sense::Maximize,
        n: cfg.intervals,
    };
    t.run(cfg)
}

/// Transcribe and optimize a Herglotz problem: `z` is propagated through
/// `dz = F(x, z, u)` and the optimizer works on `z(b)` directly.
pub fn transcribe_herglotz(
    problem: &HerglotzOcpProblem,
    cfg: &TranscriptionConfig,
) -> Result<TranscriptionResult> {
    problem.validate()?;
    let mut layout = problem.states.clone();
    layout.push("z".to_string());
    layout.extend(problem.controls.iter().cloned());
    let t = Transcription {
        states: problem.states.clone(),
        controls: problem.controls.clone(),
        z_name: "z".to_string(),
        x_bound: problem
            .dynamics
            .iter()
            .map(|e| e.bind(&layout))
            .collect::<Result<Vec<_>>>()?,
        f_bound: problem.cost.bind(&layout)?,
        interval: problem.interval,
        x_start: problem.x_start.clone(),
        x_end: problem.x_end.clone(),
        z_start: problem.z_start,
        maximize_z: problem.sense == Sense::Maximize,
        n: cfg.intervals,
    };
    t.run(cfg)
}

/// Max gap over interior transcription nodes between matching columns of an
/// oracle trajectory and a dense reference trajectory.
pub fn interior_gap(
    oracle: &Trajectory,
    reference: &Trajectory,
    columns: &[(usize, usize)],
) -> f64 {
    let mut worst = 0.0f64;
    for (j, t) in oracle.times.iter().enumerate() {
        if j == 0 || j + 1 == oracle.times.len() {
            continue;
        }
        let r = reference.sample_at(*t);
        for &(oc, rc) in columns {
            worst = worst.max((oracle.samples[j][oc] - r[rc]).abs());
        }
    }
    worst
}
