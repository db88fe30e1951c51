//! Herglotz Lagrangian systems on charts `(q^1..q^n, v^1..v^n, z)`.
//!
//! The evolution equations are
//!
//! ```text
//!   d/dt (dL/dv^i) - dL/dq^i = (dL/dz)(dL/dv^i),   dz/dt = L
//! ```
//!
//! expanded along a second-order field (`dq = v`) into a linear solve
//! against the velocity Hessian `W_ij = d2L/dv^i dv^j`. A singular `W` is a
//! hard error: constant-rank degenerate Lagrangians are out of scope.
//!
//! The action of a path is not an integral but the terminal value of the
//! scalar ODE `dz/dt = L(q(t), v(t), z)`; [`herglotz_action`] integrates it
//! with the crate integrator over a linearly interpolated `(q, v)` path.

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr};
use crate::geometry::ensure_distinct;
use crate::integrate::{self, IntegratorConfig, Trajectory};
use nalgebra::{DMatrix, DVector};

/// A Lagrangian `L(q, v, z)` over named positions, velocities and `z`.
#[derive(Debug, Clone)]
pub struct HerglotzLagrangian {
    pub positions: Vec<String>,
    pub velocities: Vec<String>,
    pub z: String,
    pub lagrangian: Expr,
}

impl HerglotzLagrangian {
    pub fn new(
        positions: Vec<String>,
        velocities: Vec<String>,
        z: impl Into<String>,
        lagrangian: Expr,
    ) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::Dimension(format!(
                "{} positions but {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        let lag = HerglotzLagrangian {
            positions,
            velocities,
            z: z.into(),
            lagrangian,
        };
        let names = lag.chart();
        ensure_distinct(&names)?;
        for v in lag.lagrangian.vars() {
            if !names.iter().any(|n| n == v) {
                return Err(Error::UnboundVariable { name: v.clone() });
            }
        }
        Ok(lag)
    }

    /// Single-coordinate convenience: chart `(q, v, z)`.
    pub fn one_dof(lagrangian: Expr) -> Result<Self> {
        HerglotzLagrangian::new(vec!["q".into()], vec!["v".into()], "z", lagrangian)
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    /// Chart names in order: positions, velocities, z.
    pub fn chart(&self) -> Vec<String> {
        let mut names = self.positions.clone();
        names.extend(self.velocities.iter().cloned());
        names.push(self.z.clone());
        names
    }

    /// Momenta `p_i = dL/dv^i` at a point.
    pub fn legendre_momenta(&self, point: &Bindings) -> Result<Vec<f64>> {
        let wrt: Vec<&str> = self.velocities.iter().map(String::as_str).collect();
        let jet = self.lagrangian.eval_jet(point, &wrt, 1)?;
        Ok(jet.grad)
    }

    /// Velocity Hessian `W` at a point.
    pub fn velocity_hessian(&self, point: &Bindings) -> Result<DMatrix<f64>> {
        let wrt: Vec<&str> = self.velocities.iter().map(String::as_str).collect();
        let jet = self.lagrangian.eval_jet(point, &wrt, 2)?;
        Ok(jet.hess.expect("order-2 jet"))
    }

    /// Right-hand side `(dq, dv, dz)` of the evolution equations at a point.
    pub fn herglotz_rhs(&self, point: &Bindings) -> Result<Vec<f64>> {
        let n = self.n();
        let chart = self.chart();
        let wrt: Vec<&str> = chart.iter().map(String::as_str).collect();
        let jet = self.lagrangian.eval_jet(point, &wrt, 2)?;
        let hess = jet.hess.as_ref().expect("order-2 jet");
        let l_value = jet.value;

        // chart slots: positions 0..n, velocities n..2n, z at 2n
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] = hess[(n + i, n + j)];
            }
        }
        let svd = w.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 0.0) || smax / smin > 1e12 {
            return Err(Error::Singular(format!(
                "velocity Hessian d2L/dv2 is singular (condition {:.3e}); \
                 the Lagrangian is not regular",
                if smin > 0.0 {
                    smax / smin
                } else {
                    f64::INFINITY
                }
            )));
        }

        let v_vals: Vec<f64> = self
            .velocities
            .iter()
            .map(|name| point.get(name).expect("validated by eval_jet"))
            .collect();
        let l_z = jet.grad[2 * n];
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            let mut b = jet.grad[i] + l_z * jet.grad[n + i]; // dL/dq^i + (dL/dz)(dL/dv^i)
            for j in 0..n {
                b -= hess[(j, n + i)] * v_vals[j]; // mixed q-v curvature along dq = v
            }
            b -= hess[(2 * n, n + i)] * l_value; // z-v curvature along dz = L
            rhs[i] = b;
        }
        let accel = w
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("velocity Hessian solve failed".into()))?;

        let mut out = Vec::with_capacity(2 * n + 1);
        out.extend_from_slice(&v_vals);
        out.extend(accel.iter().copied());
        out.push(l_value);
        Ok(out)
    }

    /// Integrate the evolution equations from chart values `(q0, v0, z0)`.
    pub fn flow(
        &self,
        start: &[f64],
        span: [f64; 2],
        cfg: &IntegratorConfig,
    ) -> Result<Trajectory> {
        let chart = self.chart();
        if start.len() != chart.len() {
            return Err(Error::Dimension(format!(
                "start point has {} values for a chart of dimension {}",
                start.len(),
                chart.len()
            )));
        }
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            let point = Bindings::from_slices(&chart, y);
            let r = self.herglotz_rhs(&point)?;
            dy.copy_from_slice(&r);
            Ok(())
        };
        integrate::integrate_named(&chart, &mut rhs, start, span, cfg)
    }

    /// Terminal value `z(b)` of the action ODE `dz = L(q(t), v(t), z)` along
    /// a `(q, v)` path, starting from `z(a) = z0`. The path is interpolated
    /// linearly in `(q, v)`; each path interval is one RK4 step.
    pub fn herglotz_action(&self, path: &Trajectory, z0: f64) -> Result<f64> {
        let n = self.n();
        if path.dim() != 2 * n {
            return Err(Error::Dimension(format!(
                "action path must carry (q, v) with {} columns, got {}",
                2 * n,
                path.dim()
            )));
        }
        if path.len() < 2 {
            return Err(Error::Invalid(
                "action path needs at least two samples".into(),
            ));
        }
        let chart = self.chart();
        let interp = |t: f64| -> Vec<f64> {
            // piecewise-linear in (q, v), clamped at the ends
            let times = &path.times;
            let k = match times.binary_search_by(|probe| probe.partial_cmp(&t).expect("finite")) {
                Ok(exact) => return path.samples[exact].clone(),
                Err(0) => return path.samples[0].clone(),
                Err(after) if after >= times.len() => return path.samples.last().unwrap().clone(),
                Err(after) => after - 1,
            };
            let s = (t - times[k]) / (times[k + 1] - times[k]);
            path.samples[k]
                .iter()
                .zip(&path.samples[k + 1])
                .map(|(a, b)| a + s * (b - a))
                .collect()
        };
        let bound = self.lagrangian.bind(&chart)?;
        let mut vals = vec![0.0; 2 * n + 1];
        let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            let qv = interp(t);
            vals[..2 * n].copy_from_slice(&qv);
            vals[2 * n] = y[0];
            dy[0] = bound.eval(&vals)?;
            Ok(())
        };
        let steps = path.len() - 1;
        let span = [path.start_time(), path.end_time()];
        let cfg = IntegratorConfig::rk4((span[1] - span[0]) / steps as f64);
        let traj = integrate::integrate(&mut rhs, &[z0], span, &cfg)?;
        Ok(traj.last()[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn damped_oscillator() -> HerglotzLagrangian {
        HerglotzLagrangian::one_dof(Expr::parse("v^2/2 - q^2/2 - 0.1*z").unwrap()).unwrap()
    }

    fn point(pairs: &[(&str, f64)]) -> Bindings {
        Bindings::from_pairs(pairs.iter().map(|&(n, v)| (n, v)))
    }

    #[test]
    fn damped_oscillator_rhs() {
        let lag = damped_oscillator();
        let rhs = lag
            .herglotz_rhs(&point(&[("q", 1.0), ("v", 0.0), ("z", 0.0)]))
            .unwrap();
        assert_eq!(rhs[0], 0.0); // dq = v
        assert!((rhs[1] + 1.0).abs() < 1e-14); // dv = -q - 0.1 v
        assert!((rhs[2] + 0.5).abs() < 1e-14); // dz = L
    }

    #[test]
    fn z_independent_lagrangian_reduces_to_classical_equations() {
        let lag = HerglotzLagrangian::one_dof(Expr::parse("v^2/2 - sin(q)").unwrap()).unwrap();
        for &(q, v) in &[(0.3, 1.0), (-1.2, 0.4), (2.0, -0.8)] {
            let rhs = lag
                .herglotz_rhs(&point(&[("q", q), ("v", v), ("z", 5.0)]))
                .unwrap();
            // classical second-order equation: dv = -dV/dq = -cos(q)
            assert!((rhs[1] + q.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn quartic_velocity_lagrangian_is_singular_at_rest() {
        let lag = HerglotzLagrangian::one_dof(Expr::parse("v^4").unwrap()).unwrap();
        let err = lag
            .herglotz_rhs(&point(&[("q", 0.0), ("v", 0.0), ("z", 0.0)]))
            .unwrap_err();
        assert!(matches!(err, Error::Singular(_)), "{err}");
    }

    #[test]
    fn legendre_momenta_examples() {
        let lag = HerglotzLagrangian::one_dof(Expr::parse("v^2/2").unwrap()).unwrap();
        let p = lag
            .legendre_momenta(&point(&[("q", 0.0), ("v", 3.0), ("z", 0.0)]))
            .unwrap();
        assert_eq!(p, vec![3.0]);

        let lag = damped_oscillator();
        let p = lag
            .legendre_momenta(&point(&[("q", 2.0), ("v", -1.5), ("z", 4.0)]))
            .unwrap();
        assert_eq!(p, vec![-1.5]);

        let lag = HerglotzLagrangian::new(
            vec!["q1".into(), "q2".into()],
            vec!["v1".into(), "v2".into()],
            "z",
            Expr::parse("v1*v2").unwrap(),
        )
        .unwrap();
        let p = lag
            .legendre_momenta(&point(&[
                ("q1", 0.0),
                ("q2", 0.0),
                ("v1", 2.0),
                ("v2", 5.0),
                ("z", 0.0),
            ]))
            .unwrap();
        assert_eq!(p, vec![5.0, 2.0]);
    }

    fn sampled_path(n_cols: usize, steps: usize, f: impl Fn(f64) -> Vec<f64>) -> Trajectory {
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        let samples: Vec<Vec<f64>> = times.iter().map(|&t| f(t)).collect();
        Trajectory {
            chart: (0..n_cols).map(|i| format!("c{i}")).collect(),
            derivs: vec![vec![0.0; n_cols]; times.len()],
            diagnostics: Vec::new(),
            times,
            samples,
        }
    }

    #[test]
    fn action_of_z_independent_lagrangian_is_the_integral() {
        let lag = HerglotzLagrangian::one_dof(Expr::parse("v^2/2 - q^2/2").unwrap()).unwrap();
        // q(t) = sin t, v = cos t on [0, 1]
        let path = sampled_path(2, 2000, |t| vec![t.sin(), t.cos()]);
        let action = lag.herglotz_action(&path, 0.0).unwrap();
        // integral of (cos^2 - sin^2)/2 = sin(2t)/4 over [0,1]
        let exact = (2.0f64).sin() / 4.0;
        assert!((action - exact).abs() < 1e-8, "{action} vs {exact}");
    }

    #[test]
    fn pure_decay_action_has_closed_form() {
        let lag = HerglotzLagrangian::one_dof(Expr::parse("-0.1*z").unwrap()).unwrap();
        let path = sampled_path(2, 100, |t| vec![t, 1.0]);
        let action = lag.herglotz_action(&path, 1.0).unwrap();
        assert!((action - (-0.1f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn zero_lagrangian_keeps_the_start_value() {
        let lag = HerglotzLagrangian::one_dof(Expr::parse("0").unwrap()).unwrap();
        let path = sampled_path(2, 10, |t| vec![t, 1.0]);
        assert_eq!(lag.herglotz_action(&path, 2.5).unwrap(), 2.5);
    }

    #[test]
    fn flow_is_stationary_for_the_action() {
        // trajectory of the damped oscillator as a critical point of the
        // action under perturbations vanishing at the endpoints
        let lag = damped_oscillator();
        let cfg = IntegratorConfig::rk4(5e-4);
        let traj = lag.flow(&[1.0, 0.0, 0.0], [0.0, 1.0], &cfg).unwrap();
        let steps = 2000usize;
        let (times, qv): (Vec<f64>, Vec<Vec<f64>>) = traj.resample_uniform(steps);
        let base_path = Trajectory {
            chart: vec!["q".into(), "v".into()],
            times: times.clone(),
            samples: qv.iter().map(|s| vec![s[0], s[1]]).collect(),
            derivs: vec![vec![0.0; 2]; times.len()],
            diagnostics: Vec::new(),
        };
        let a0 = lag.herglotz_action(&base_path, 0.0).unwrap();

        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let eps = 1e-5;
        for _ in 0..20 {
            let k = rng.random_range(1..=5) as f64;
            let amp: f64 = rng.random_range(0.2..1.0);
            let omega = k * std::f64::consts::PI;
            let perturbed = Trajectory {
                chart: base_path.chart.clone(),
                times: times.clone(),
                samples: times
                    .iter()
                    .zip(&base_path.samples)
                    .map(|(&t, s)| {
                        vec![
                            s[0] + eps * amp * (omega * t).sin(),
                            s[1] + eps * amp * omega * (omega * t).cos(),
                        ]
                    })
                    .collect(),
                derivs: vec![vec![0.0; 2]; times.len()],
                diagnostics: Vec::new(),
            };
            let a1 = lag.herglotz_action(&perturbed, 0.0).unwrap();
            // C1 norm of the perturbation: sup |dq| + sup |dv|
            let delta_norm = eps * amp * (1.0 + omega);
            assert!(
                (a1 - a0).abs() <= 1e-4 * delta_norm,
                "first variation too large: {} vs {}",
                (a1 - a0).abs(),
                1e-4 * delta_norm
            );
        }
    }

    #[test]
    fn evolution_equations_hold_along_the_flow() {
        // finite differences of dL/dv along the integrated flow against
        // dL/dq + (dL/dz)(dL/dv)
        let lag = damped_oscillator();
        let cfg = IntegratorConfig::rk4(1e-3);
        let traj = lag.flow(&[1.0, 0.0, 0.0], [0.0, 1.0], &cfg).unwrap();
        let chart = lag.chart();
        let momenta: Vec<f64> = traj
            .samples
            .iter()
            .map(|s| {
                lag.legendre_momenta(&Bindings::from_slices(&chart, s))
                    .unwrap()[0]
            })
            .collect();
        let h = traj.times[1] - traj.times[0];
        let mut worst = 0.0f64;
        for k in 1..traj.len() - 1 {
            let dpdt = (momenta[k + 1] - momenta[k - 1]) / (2.0 * h);
            let point = Bindings::from_slices(&chart, &traj.samples[k]);
            let wrt: Vec<&str> = chart.iter().map(String::as_str).collect();
            let jet = lag.lagrangian.eval_jet(&point, &wrt, 1).unwrap();
            let target = jet.grad[0] + jet.grad[2] * jet.grad[1];
            worst = worst.max((dpdt - target).abs());
        }
        assert!(worst <= 1e-6, "max residual {worst}");
    }
}
