//! Explicit ODE integration with dense output, and a damped-Newton shooting
//! solver.
//!
//! Integration methods live behind the [`Method`] trait and are registered
//! by name ("rk4", "rk45"); configs select one at runtime. Both methods
//! record every accepted step together with the right-hand side there, so
//! trajectories support cubic-Hermite dense output.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Right-hand side of an ODE system: `rhs(t, y, dy)` fills `dy`.
pub type Rhs<'a> = &'a mut dyn FnMut(f64, &[f64], &mut [f64]) -> Result<()>;

/// A time-sampled curve over a named coordinate chart.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub chart: Vec<String>,
    /// Strictly increasing sample times.
    pub times: Vec<f64>,
    /// One coordinate vector per time, each of chart length.
    pub samples: Vec<Vec<f64>>,
    /// Right-hand side at each sample (drives dense output).
    pub derivs: Vec<Vec<f64>>,
    /// Named per-sample extras (Hamiltonian values, residuals, ...).
    pub diagnostics: Vec<(String, Vec<f64>)>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.chart.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn last(&self) -> &[f64] {
        self.samples.last().expect("non-empty trajectory")
    }

    /// Index of a named chart coordinate.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.chart.iter().position(|c| c == name)
    }

    /// Series of one chart coordinate.
    pub fn series(&self, index: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(move |s| s[index])
    }

    pub fn push_diagnostic(&mut self, name: &str, column: Vec<f64>) {
        assert_eq!(column.len(), self.times.len(), "diagnostic length mismatch");
        self.diagnostics.push((name.to_string(), column));
    }

    /// Cubic-Hermite dense output at an interior time.
    pub fn sample_at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        assert!(n >= 1, "empty trajectory");
        if t <= self.times[0] {
            return self.samples[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.samples[n - 1].clone();
        }
        let k = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).expect("finite times"))
        {
            Ok(exact) => return self.samples[exact].clone(),
            Err(after) => after - 1,
        };
        let h = self.times[k + 1] - self.times[k];
        let s = (t - self.times[k]) / h;
        let (h00, h10, h01, h11) = hermite_basis(s);
        let dim = self.dim();
        let mut out = vec![0.0; dim];
        for i in 0..dim {
            out[i] = h00 * self.samples[k][i]
                + h10 * h * self.derivs[k][i]
                + h01 * self.samples[k + 1][i]
                + h11 * h * self.derivs[k + 1][i];
        }
        out
    }

    /// Resample onto a uniform grid of `n + 1` points over the stored span.
    pub fn resample_uniform(&self, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let a = self.start_time();
        let b = self.end_time();
        let mut times = Vec::with_capacity(n + 1);
        let mut samples = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = a + (b - a) * (k as f64) / (n as f64);
            times.push(t);
            samples.push(self.sample_at(t));
        }
        (times, samples)
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

/// Integration method and tolerances.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    /// Registered method name: "rk4" (fixed step) or "rk45" (adaptive).
    pub method: String,
    /// Fixed step for rk4; also the initial step for rk45 when set.
    pub step: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: "rk45".to_string(),
            step: None,
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            method: "rk4".to_string(),
            step: Some(step),
            ..Default::default()
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            method: "rk45".to_string(),
            step: None,
            rtol,
            atol,
            max_steps: 1_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rtol <= 0.0 || self.atol <= 0.0 {
            return Err(Error::Config("rtol and atol must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if let Some(h) = self.step {
            if !(h > 0.0) {
                return Err(Error::Config("step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One integration strategy; implementations are stateless and selected by
/// name from the registry.
pub trait Method: Sync {
    fn name(&self) -> &'static str;
    fn run(
        &self,
        rhs: Rhs,
        y0: &[f64],
        span: [f64; 2],
        cfg: &IntegratorConfig,
    ) -> Result<Trajectory>;
}

struct Rk4;
struct Rk45;

static RK4: Rk4 = Rk4;
static RK45: Rk45 = Rk45;
static METHODS: [&dyn Method; 2] = [&RK4, &RK45];

/// All registered integration methods.
pub fn methods() -> &'static [&'static dyn Method] {
    &METHODS
}

/// Look a method up by its registered name.
pub fn method(name: &str) -> Result<&'static dyn Method> {
    METHODS
        .iter()
        .copied()
        .find(|m| m.name() == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown integration method `{name}` (registered: {})",
                METHODS
                    .iter()
                    .map(|m| m.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
}

/// Integrate `rhs` from `y0` over `span` with the configured method.
pub fn integrate(
    rhs: Rhs,
    y0: &[f64],
    span: [f64; 2],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    method(&cfg.method)?.run(rhs, y0, span, cfg)
}

/// Integrate and name the chart in one call.
pub fn integrate_named(
    chart: &[String],
    rhs: Rhs,
    y0: &[f64],
    span: [f64; 2],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut traj = integrate(rhs, y0, span, cfg)?;
    traj.chart = chart.to_vec();
    Ok(traj)
}

fn empty_trajectory(dim: usize) -> Trajectory {
    Trajectory {
        chart: (0..dim).map(|i| format!("y{i}")).collect(),
        times: Vec::new(),
        samples: Vec::new(),
        derivs: Vec::new(),
        diagnostics: Vec::new(),
    }
}

impl Method for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn run(
        &self,
        rhs: Rhs,
        y0: &[f64],
        span: [f64; 2],
        cfg: &IntegratorConfig,
    ) -> Result<Trajectory> {
        let [a, b] = span;
        if !(b > a) {
            return Err(Error::Config("integration span must have b > a".into()));
        }
        let dim = y0.len();
        let step = cfg.step.unwrap_or((b - a) / 1000.0);
        let n_steps = ((b - a) / step).ceil().max(1.0) as usize;
        if n_steps > cfg.max_steps {
            return Err(Error::Integration {
                t: a,
                msg: format!("{n_steps} fixed steps exceed max_steps = {}", cfg.max_steps),
            });
        }
        let h = (b - a) / n_steps as f64;

        let mut traj = empty_trajectory(dim);
        let mut y = y0.to_vec();
        let mut f = vec![0.0; dim];
        rhs(a, &y, &mut f)?;
        traj.times.push(a);
        traj.samples.push(y.clone());
        traj.derivs.push(f.clone());

        let mut k2 = vec![0.0; dim];
        let mut k3 = vec![0.0; dim];
        let mut k4 = vec![0.0; dim];
        let mut ytmp = vec![0.0; dim];

        for step_idx in 0..n_steps {
            let t = a + h * step_idx as f64;
            // k1 is the stored derivative at the current sample
            for i in 0..dim {
                ytmp[i] = y[i] + 0.5 * h * f[i];
            }
            rhs(t + 0.5 * h, &ytmp, &mut k2)?;
            for i in 0..dim {
                ytmp[i] = y[i] + 0.5 * h * k2[i];
            }
            rhs(t + 0.5 * h, &ytmp, &mut k3)?;
            for i in 0..dim {
                ytmp[i] = y[i] + h * k3[i];
            }
            rhs(t + h, &ytmp, &mut k4)?;
            for i in 0..dim {
                y[i] += h / 6.0 * (f[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let t_next = if step_idx + 1 == n_steps {
                b
            } else {
                a + h * (step_idx + 1) as f64
            };
            rhs(t_next, &y, &mut f)?;
            traj.times.push(t_next);
            traj.samples.push(y.clone());
            traj.derivs.push(f.clone());
        }
        Ok(traj)
    }
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl Method for Rk45 {
    fn name(&self) -> &'static str {
        "rk45"
    }

    fn run(
        &self,
        rhs: Rhs,
        y0: &[f64],
        span: [f64; 2],
        cfg: &IntegratorConfig,
    ) -> Result<Trajectory> {
        let [a, b] = span;
        if !(b > a) {
            return Err(Error::Config("integration span must have b > a".into()));
        }
        let dim = y0.len();
        let mut traj = empty_trajectory(dim);

        let mut t = a;
        let mut y = y0.to_vec();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
        rhs(t, &y, &mut k[0])?;
        traj.times.push(t);
        traj.samples.push(y.clone());
        traj.derivs.push(k[0].clone());

        let mut h = cfg.step.unwrap_or((b - a) / 100.0).min(b - a);
        let h_min = 1e-14 * (b - a).abs();
        let mut ytmp = vec![0.0; dim];
        let mut y5 = vec![0.0; dim];
        let mut steps = 0usize;

        while t < b {
            if steps >= cfg.max_steps {
                return Err(Error::Integration {
                    t,
                    msg: format!("max_steps = {} exceeded", cfg.max_steps),
                });
            }
            steps += 1;
            if t + h > b {
                h = b - t;
            }
            // stages 1..6 (stage 0 is the stored derivative, FSAL)
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += DP_A[s][j] * kj[i];
                    }
                    ytmp[i] = y[i] + h * acc;
                }
                let ts = t + DP_C[s] * h;
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                rhs(ts, &ytmp, &mut tail[0])?;
            }
            let mut err = 0.0f64;
            for i in 0..dim {
                let mut acc5 = 0.0;
                let mut acc4 = 0.0;
                for s in 0..7 {
                    acc5 += DP_B5[s] * k[s][i];
                    acc4 += DP_B4[s] * k[s][i];
                }
                y5[i] = y[i] + h * acc5;
                let scale = cfg.atol + cfg.rtol * y[i].abs().max(y5[i].abs());
                err = err.max((h * (acc5 - acc4)).abs() / scale);
            }
            if err <= 1.0 {
                // cubic Hermite between stored samples is only fourth order,
                // so interior micro-samples (RK4 sub-steps inside the
                // accepted step) keep dense output within the local tolerance
                push_micro_samples(rhs, &mut traj, t, &y, h, DENSE_SUBDIVISIONS)?;
                t += h;
                y.copy_from_slice(&y5);
                // FSAL: stage 6 is the derivative at the accepted point
                let (head, tail) = k.split_at_mut(6);
                head[0].copy_from_slice(&tail[0]);
                traj.times.push(t);
                traj.samples.push(y.clone());
                traj.derivs.push(k[0].clone());
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
            if h < h_min {
                return Err(Error::Integration {
                    t,
                    msg: format!("step size underflow (h = {h:.3e})"),
                });
            }
        }
        Ok(traj)
    }
}

const DENSE_SUBDIVISIONS: usize = 8;

/// Advance a copy of `y` through `sub - 1` interior RK4 sub-steps of an
/// accepted step and record them; the caller stores the high-order endpoint.
fn push_micro_samples(
    rhs: Rhs,
    traj: &mut Trajectory,
    t: f64,
    y: &[f64],
    h: f64,
    sub: usize,
) -> Result<()> {
    let dim = y.len();
    let hs = h / sub as f64;
    let mut yk = y.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut ytmp = vec![0.0; dim];
    for j in 0..sub - 1 {
        let tj = t + hs * j as f64;
        rhs(tj, &yk, &mut k1)?;
        for i in 0..dim {
            ytmp[i] = yk[i] + 0.5 * hs * k1[i];
        }
        rhs(tj + 0.5 * hs, &ytmp, &mut k2)?;
        for i in 0..dim {
            ytmp[i] = yk[i] + 0.5 * hs * k2[i];
        }
        rhs(tj + 0.5 * hs, &ytmp, &mut k3)?;
        for i in 0..dim {
            ytmp[i] = yk[i] + hs * k3[i];
        }
        rhs(tj + hs, &ytmp, &mut k4)?;
        for i in 0..dim {
            yk[i] += hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let tj1 = tj + hs;
        rhs(tj1, &yk, &mut k1)?;
        traj.times.push(tj1);
        traj.samples.push(yk.clone());
        traj.derivs.push(k1.clone());
    }
    Ok(())
}

// ---- shooting ----------------------------------------------------------

/// Newton shooting configuration.
#[derive(Debug, Clone)]
pub struct ShootingConfig {
    /// Max-norm residual target.
    pub tol: f64,
    pub max_iters: usize,
    /// Random restarts drawn around the initial guess on failure.
    pub restarts: usize,
    pub restart_radius: f64,
    pub seed: u64,
    /// Forward-difference step scale for the Jacobian.
    pub fd_step: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            tol: 1e-8,
            max_iters: 50,
            restarts: 16,
            restart_radius: 4.0,
            seed: 0,
            fd_step: 1e-7,
        }
    }
}

/// Residual map for shooting: unknowns -> residual vector (same length).
pub type Residual<'a> = &'a mut dyn FnMut(&[f64]) -> Result<Vec<f64>>;

/// Solve `residual(x) = 0` by damped Newton with forward-difference
/// Jacobians and random restarts inside a box around the guess.
pub fn shoot(residual: Residual, guess: &[f64], cfg: &ShootingConfig) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_norm = f64::INFINITY;
    let mut last_err: Option<Error> = None;

    for attempt in 0..=cfg.restarts {
        let mut x: Vec<f64> = if attempt == 0 {
            guess.to_vec()
        } else {
            guess
                .iter()
                .map(|&g| g + rng.random_range(-cfg.restart_radius..cfg.restart_radius))
                .collect()
        };
        match newton_attempt(residual, &mut x, cfg) {
            Ok(()) => return Ok(x),
            Err(e) => {
                if let Error::NoConvergence { residual: r, .. } = &e {
                    best_norm = best_norm.min(*r);
                }
                last_err = Some(e);
            }
        }
    }
    match last_err {
        Some(Error::NoConvergence { what, iters, .. }) => Err(Error::NoConvergence {
            what: format!("{what} (after {} restarts)", cfg.restarts),
            iters,
            residual: best_norm,
        }),
        Some(e) => Err(e),
        None => unreachable!("at least one attempt runs"),
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

fn newton_attempt(residual: Residual, x: &mut Vec<f64>, cfg: &ShootingConfig) -> Result<()> {
    let n = x.len();
    let mut r = residual(x)?;
    if r.len() != n {
        return Err(Error::Dimension(format!(
            "shooting residual has length {} for {} unknowns",
            r.len(),
            n
        )));
    }
    let mut rnorm = max_norm(&r);

    for iter in 0..cfg.max_iters {
        if rnorm <= cfg.tol {
            return Ok(());
        }
        // forward-difference Jacobian, column by column
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let hj = cfg.fd_step * (1.0 + x[j].abs());
            let mut xp = x.clone();
            xp[j] += hj;
            let rp = residual(&xp)?;
            for i in 0..n {
                jac[(i, j)] = (rp[i] - r[i]) / hj;
            }
        }
        let svd = jac.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 0.0) || smax / smin > 1e12 {
            return Err(Error::Singular(format!(
                "shooting Jacobian is singular (condition {:.3e})",
                if smin > 0.0 {
                    smax / smin
                } else {
                    f64::INFINITY
                }
            )));
        }
        let rhs_vec = DVector::from_iterator(n, r.iter().map(|&v| -v));
        let delta = jac
            .lu()
            .solve(&rhs_vec)
            .ok_or_else(|| Error::Singular("shooting Jacobian LU solve failed".into()))?;

        // backtracking on the residual norm
        let mut alpha = 1.0;
        let mut advanced = false;
        for _ in 0..30 {
            let xt: Vec<f64> = x
                .iter()
                .zip(delta.iter())
                .map(|(xi, di)| xi + alpha * di)
                .collect();
            // a failed evaluation means the step left the domain; shrink
            if let Ok(rt) = residual(&xt) {
                let rtn = max_norm(&rt);
                if rtn < (1.0 - 1e-4 * alpha) * rnorm || rtn <= cfg.tol {
                    *x = xt;
                    r = rt;
                    rnorm = rtn;
                    advanced = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !advanced {
            return Err(Error::NoConvergence {
                what: "shooting line search".to_string(),
                iters: iter + 1,
                residual: rnorm,
            });
        }
    }
    if rnorm <= cfg.tol {
        Ok(())
    } else {
        Err(Error::NoConvergence {
            what: "shooting Newton iteration".to_string(),
            iters: cfg.max_iters,
            residual: rnorm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_rk45(rtol: f64) -> IntegratorConfig {
        IntegratorConfig::rk45(rtol, 1e-14)
    }

    #[test]
    fn exponential_growth_matches_closed_form() {
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0];
            Ok(())
        };
        let traj = integrate(&mut rhs, &[1.0], [0.0, 1.0], &cfg_rk45(1e-10)).unwrap();
        let yb = traj.last()[0];
        assert!((yb - 1.0f64.exp()).abs() < 1e-9, "y(1) = {yb}");
    }

    #[test]
    fn zero_rhs_is_exactly_constant() {
        let mut rhs = |_t: f64, _y: &[f64], dy: &mut [f64]| {
            dy.fill(0.0);
            Ok(())
        };
        let traj = integrate(&mut rhs, &[2.5, -1.0], [0.0, 3.0], &cfg_rk45(1e-8)).unwrap();
        for s in &traj.samples {
            assert_eq!(s, &vec![2.5, -1.0]);
        }
    }

    #[test]
    fn harmonic_oscillator_returns_after_one_period() {
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        };
        let period = 2.0 * std::f64::consts::PI;
        let traj = integrate(&mut rhs, &[1.0, 0.0], [0.0, period], &cfg_rk45(1e-9)).unwrap();
        let end = traj.last();
        assert!((end[0] - 1.0).abs() < 1e-6 && end[1].abs() < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order_on_exponential() {
        let err_for = |h: f64| {
            let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[0];
                Ok(())
            };
            let traj = integrate(&mut rhs, &[1.0], [0.0, 1.0], &IntegratorConfig::rk4(h)).unwrap();
            (traj.last()[0] - 1.0f64.exp()).abs()
        };
        let e1 = err_for(0.02);
        let e2 = err_for(0.01);
        assert!(e1 / e2 >= 14.0, "halving factor {}", e1 / e2);
    }

    #[test]
    fn dense_output_matches_reintegration() {
        let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0] * (t).cos();
            Ok(())
        };
        let rtol = 1e-9;
        let traj = integrate(&mut rhs, &[1.0], [0.0, 2.0], &cfg_rk45(rtol)).unwrap();
        for &t in &[0.37, 0.9, 1.414, 1.99] {
            let dense = traj.sample_at(t)[0];
            let mut rhs2 = |t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[0] * (t).cos();
                Ok(())
            };
            let again = integrate(&mut rhs2, &[1.0], [0.0, t], &cfg_rk45(rtol)).unwrap();
            let direct = again.last()[0];
            assert!(
                (dense - direct).abs() <= 5.0 * rtol * (1.0 + direct.abs()),
                "t = {t}: dense {dense} vs {direct}"
            );
        }
    }

    #[test]
    fn shoot_solves_linear_residual_in_one_step() {
        let mut calls = 0usize;
        let mut res = |x: &[f64]| {
            calls += 1;
            Ok(vec![x[0] - 2.0])
        };
        let sol = shoot(&mut res, &[0.0], &ShootingConfig::default()).unwrap();
        assert!((sol[0] - 2.0).abs() < 1e-8);
        // one or two Newton steps (the second mops up finite-difference
        // noise in the Jacobian), a handful of evaluations total
        assert!(calls <= 8, "calls = {calls}");
    }

    #[test]
    fn shoot_reports_no_convergence_without_root() {
        let mut res = |x: &[f64]| Ok(vec![x[0] * x[0] + 1.0]);
        let cfg = ShootingConfig {
            restarts: 2,
            ..Default::default()
        };
        let err = shoot(&mut res, &[0.5], &cfg).unwrap_err();
        match err {
            Error::NoConvergence { .. } | Error::Singular(_) => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_method_is_rejected() {
        let mut rhs = |_t: f64, _y: &[f64], _dy: &mut [f64]| Ok(());
        let cfg = IntegratorConfig {
            method: "euler".to_string(),
            ..Default::default()
        };
        assert!(matches!(
            integrate(&mut rhs, &[0.0], [0.0, 1.0], &cfg),
            Err(Error::Config(_))
        ));
    }
}
