//! Optimal control with action-dependent cost: the running cost feeds a
//! state `z` through `dz = F(x, z, u)` and the terminal value `z(b)` is the
//! quantity being optimized.
//!
//! Two equivalent dynamical pictures are built:
//!
//! * the **full extended system** on the chart
//!   `(x0, x^i, z, p0, p_i, pz, u^a)` with Hamiltonian
//!   `H = p0 F + p_i X^i + pz F`, whose flow keeps `p0` constant and makes
//!   `w = p0 + pz` obey the scalar law `dw = -(dF/dz) w`, and
//! * the **reduced contact system** on `(x^i, p_i, z)` with
//!   `H0 = p_i X^i - F` and the Darboux form `dz - p_i dx^i`, whose
//!   right-hand side is generated by the geometry module's master contact
//!   formula rather than retyped.
//!
//! The two are intertwined by the fiberwise projection
//! `(x, z, p, pz) -> (x, -p/(lambda0 + pz), z)`, a conformal equivalence
//! with factor `-1/(lambda0 + pz)`: projected full trajectories satisfy the
//! reduced equations wherever `lambda0 + pz != 0`.

use crate::error::{Error, Result};
use crate::expr::{Bindings, BoundExpr, Expr};
use crate::geometry::{ensure_distinct, matrix_condition_ok, ContactChart, ContactFlow};
use crate::integrate::{self, IntegratorConfig, ShootingConfig, Trajectory};
use crate::lagrangian::HerglotzLagrangian;
use crate::ocp::Sense;
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An optimal control problem whose cost accumulates through
/// `dz = F(x, z, u)`; dynamics components may also depend on `z`.
#[derive(Debug, Clone)]
pub struct HerglotzOcpProblem {
    pub states: Vec<String>,
    pub controls: Vec<String>,
    pub dynamics: Vec<Expr>,
    pub cost: Expr,
    pub interval: [f64; 2],
    pub x_start: Vec<f64>,
    pub x_end: Vec<f64>,
    pub z_start: f64,
    pub sense: Sense,
}

impl HerglotzOcpProblem {
    pub fn m(&self) -> usize {
        self.states.len()
    }

    pub fn k(&self) -> usize {
        self.controls.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.dynamics.len() != m {
            return Err(Error::Dimension(format!(
                "{} dynamics components for {m} states",
                self.dynamics.len()
            )));
        }
        if self.x_start.len() != m || self.x_end.len() != m {
            return Err(Error::Dimension(
                "boundary vectors must match the state dimension".into(),
            ));
        }
        if !(self.interval[1] > self.interval[0]) {
            return Err(Error::Config("interval must satisfy b > a".into()));
        }
        let mut names = self.states.clone();
        names.extend(self.controls.iter().cloned());
        names.push("z".to_string());
        ensure_distinct(&names)?;
        for e in self.dynamics.iter().chain(std::iter::once(&self.cost)) {
            for v in e.vars() {
                if !names.iter().any(|n| n == v) {
                    return Err(Error::UnboundVariable { name: v.clone() });
                }
            }
        }
        Ok(())
    }
}

// ---- full extended system -------------------------------------------------

/// The presymplectic lift of a Herglotz control problem.
#[derive(Debug, Clone)]
pub struct FullExtendedSystem {
    pub problem: HerglotzOcpProblem,
    /// Chart order: `x0`, states, `z`, `p0`, costates `p1..pm`, `pz`, controls.
    pub chart: Vec<String>,
    pub costates: Vec<String>,
    /// `p0 F + p_i X^i + pz F`, linear in `p0` and `pz`.
    pub hamiltonian: Expr,
    pub lambda0: f64,
    f_bound: BoundExpr,
    x_bound: Vec<BoundExpr>,
    h_bound: BoundExpr,
}

/// Build the full extended system; `lambda0` defaults by the problem sense.
pub fn extend_full(
    problem: HerglotzOcpProblem,
    lambda0: Option<f64>,
) -> Result<FullExtendedSystem> {
    problem.validate()?;
    let m = problem.m();
    let costates: Vec<String> = (1..=m).map(|i| format!("p{i}")).collect();
    let mut chart = vec!["x0".to_string()];
    chart.extend(problem.states.iter().cloned());
    chart.push("z".to_string());
    chart.push("p0".to_string());
    chart.extend(costates.iter().cloned());
    chart.push("pz".to_string());
    chart.extend(problem.controls.iter().cloned());
    ensure_distinct(&chart).map_err(|_| {
        Error::NameCollision(
            "state or control names collide with the reserved x0/z/p0/p1..pm/pz".into(),
        )
    })?;

    let mut h = Expr::var("p0")
        .add(Expr::var("pz"))
        .mul(problem.cost.clone());
    for (p, x) in costates.iter().zip(&problem.dynamics) {
        h = h.add(Expr::var(p).mul(x.clone()));
    }
    let lambda0 = lambda0.unwrap_or_else(|| problem.sense.default_lambda0());
    if lambda0 == 0.0 {
        return Err(Error::Invalid("lambda0 must be nonzero".into()));
    }
    let f_bound = problem.cost.bind(&chart)?;
    let x_bound = problem
        .dynamics
        .iter()
        .map(|e| e.bind(&chart))
        .collect::<Result<Vec<_>>>()?;
    let h_bound = h.bind(&chart)?;
    Ok(FullExtendedSystem {
        problem,
        chart,
        costates,
        hamiltonian: h,
        lambda0,
        f_bound,
        x_bound,
        h_bound,
    })
}

impl FullExtendedSystem {
    pub fn m(&self) -> usize {
        self.problem.m()
    }

    pub fn k(&self) -> usize {
        self.problem.k()
    }

    /// Phase dimension (everything except the controls).
    pub fn phase_dim(&self) -> usize {
        2 * self.m() + 4
    }

    fn z_slot(&self) -> usize {
        self.m() + 1
    }

    fn p0_slot(&self) -> usize {
        self.m() + 2
    }

    fn pz_slot(&self) -> usize {
        2 * self.m() + 3
    }

    fn control_slots(&self) -> std::ops::Range<usize> {
        2 * self.m() + 4..2 * self.m() + 4 + self.k()
    }

    /// Slots the cost and dynamics are differentiated against: states and z.
    fn xz_slots(&self) -> Vec<usize> {
        let mut s: Vec<usize> = (1..=self.m()).collect();
        s.push(self.z_slot());
        s
    }

    pub fn hamiltonian_value(&self, vals: &[f64]) -> Result<f64> {
        self.h_bound.eval(vals)
    }

    pub fn stationarity_norm(&self, vals: &[f64]) -> Result<f64> {
        if self.k() == 0 {
            return Ok(0.0);
        }
        let slots: Vec<usize> = self.control_slots().collect();
        let jet = self.h_bound.eval_jet_slots(vals, &slots, 1)?;
        Ok(jet.grad.iter().fold(0.0f64, |m, &g| m.max(g.abs())))
    }

    /// `dF/dz` at a full chart point (drives the `p0 + pz` law).
    pub fn cost_z_derivative(&self, vals: &[f64]) -> Result<f64> {
        let jet = self.f_bound.eval_jet_slots(vals, &[self.z_slot()], 1)?;
        Ok(jet.grad[0])
    }

    /// Tangent vector over `(x0, x, z, p0, p, pz)`; control rates are kernel
    /// directions and are not part of the phase flow. The `p0` component is
    /// exactly zero; when `F` and `X` are z-independent the `pz` component
    /// is exactly zero as well.
    pub fn full_rhs(&self, vals: &[f64]) -> Result<Vec<f64>> {
        let m = self.m();
        let slots = self.xz_slots();
        let f_jet = self.f_bound.eval_jet_slots(vals, &slots, 1)?;
        let w = vals[self.p0_slot()] + vals[self.pz_slot()];
        let mut out = vec![0.0; self.phase_dim()];
        out[0] = f_jet.value;
        out[self.z_slot()] = f_jet.value;
        for i in 0..m {
            out[m + 3 + i] = -w * f_jet.grad[i];
        }
        let mut pz_dot = -w * f_jet.grad[m];
        for (j, xb) in self.x_bound.iter().enumerate() {
            let x_jet = xb.eval_jet_slots(vals, &slots, 1)?;
            out[1 + j] = x_jet.value;
            let p_j = vals[m + 3 + j];
            for i in 0..m {
                out[m + 3 + i] -= p_j * x_jet.grad[i];
            }
            pz_dot -= p_j * x_jet.grad[m];
        }
        out[self.p0_slot()] = 0.0;
        out[self.pz_slot()] = pz_dot;
        Ok(out)
    }

    /// Newton solve of the stationarity conditions on the full chart.
    pub fn eliminate_controls(&self, vals: &mut [f64], u_guess: &[f64]) -> Result<Vec<f64>> {
        let k = self.k();
        if k == 0 {
            return Ok(Vec::new());
        }
        let slots: Vec<usize> = self.control_slots().collect();
        for (slot, &u) in slots.iter().zip(u_guess) {
            vals[*slot] = u;
        }
        let mut residual = f64::INFINITY;
        for _ in 0..50 {
            let jet = self.h_bound.eval_jet_slots(vals, &slots, 2)?;
            residual = jet.grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
            let hess = jet.hess.expect("order-2 jet");
            if !matrix_condition_ok(&hess) {
                return Err(Error::Singular(
                    "control Hessian d2H/du2 is singular on the full extended system".into(),
                ));
            }
            if residual <= 1e-12 {
                return Ok(slots.iter().map(|&s| vals[s]).collect());
            }
            let g = DVector::from_iterator(k, jet.grad.iter().map(|&v| -v));
            let step = hess
                .lu()
                .solve(&g)
                .ok_or_else(|| Error::Singular("control Hessian solve failed".into()))?;
            for (i, slot) in slots.iter().enumerate() {
                vals[*slot] += step[i];
            }
        }
        Err(Error::NoConvergence {
            what: "full-system control elimination".to_string(),
            iters: 50,
            residual,
        })
    }

    /// Integrate the full flow from `x(a) = x_start`, `x0(a) = z(a) =
    /// z_start`, `p0 = lambda0`, given initial `p(a)` and `pz(a)`; controls
    /// are eliminated at every evaluation. The trajectory carries control
    /// columns and H diagnostics.
    pub fn integrate_from(
        &self,
        p_a: &[f64],
        pz_a: f64,
        integrator: &IntegratorConfig,
    ) -> Result<Trajectory> {
        let m = self.m();
        let k = self.k();
        let mut y0 = vec![0.0; self.phase_dim()];
        y0[0] = self.problem.z_start;
        y0[1..1 + m].copy_from_slice(&self.problem.x_start);
        y0[self.z_slot()] = self.problem.z_start;
        y0[self.p0_slot()] = self.lambda0;
        y0[m + 3..2 * m + 3].copy_from_slice(p_a);
        y0[self.pz_slot()] = pz_a;

        let mut vals = vec![0.0; self.chart.len()];
        let mut u_warm = vec![0.0; k];
        let phase = self.phase_dim();
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            vals[..phase].copy_from_slice(y);
            let warm = u_warm.clone();
            let u = self.eliminate_controls(&mut vals, &warm)?;
            if !u.is_empty() {
                u_warm.copy_from_slice(&u);
            }
            let r = self.full_rhs(&vals)?;
            dy.copy_from_slice(&r);
            Ok(())
        };
        let phase_chart: Vec<String> = self.chart[..phase].to_vec();
        let traj = integrate::integrate_named(
            &phase_chart,
            &mut rhs,
            &y0,
            self.problem.interval,
            integrator,
        )?;
        self.decorate(traj)
    }

    fn decorate(&self, traj: Trajectory) -> Result<Trajectory> {
        let k = self.k();
        let phase = self.phase_dim();
        let mut vals = vec![0.0; self.chart.len()];
        let mut u_warm = vec![0.0; k];
        let mut h_col = Vec::with_capacity(traj.len());
        let mut dhdu_col = Vec::with_capacity(traj.len());
        let mut samples = Vec::with_capacity(traj.len());
        for s in &traj.samples {
            vals[..phase].copy_from_slice(s);
            let warm = u_warm.clone();
            let u = self.eliminate_controls(&mut vals, &warm)?;
            if !u.is_empty() {
                u_warm.copy_from_slice(&u);
            }
            h_col.push(self.hamiltonian_value(&vals)?);
            dhdu_col.push(self.stationarity_norm(&vals)?);
            let mut row = s.clone();
            row.extend_from_slice(&u);
            samples.push(row);
        }
        let mut derivs = Vec::with_capacity(traj.len());
        for d in &traj.derivs {
            let mut row = d.clone();
            row.extend(std::iter::repeat_n(0.0, k));
            derivs.push(row);
        }
        let mut out = Trajectory {
            chart: self.chart.clone(),
            times: traj.times,
            samples,
            derivs,
            diagnostics: Vec::new(),
        };
        out.push_diagnostic("H", h_col);
        out.push_diagnostic("dHdu_norm", dhdu_col);
        Ok(out)
    }
}

/// Verification of the scalar law for `w = p0 + pz` along a full-system
/// trajectory: `w(t) = w(a) exp(-I(t))` with `I(t)` the running integral of
/// `dF/dz`, plus the minimum of `|w|` (degeneracy monitor).
#[derive(Debug, Clone, Copy)]
pub struct PzLawReport {
    pub min_abs_w: f64,
    pub max_rel_residual: f64,
    /// Exact-zero checks for z-independent data: max `|pz(t) - pz(a)|`.
    pub max_pz_drift: f64,
}

pub fn pz_invariant_check(sys: &FullExtendedSystem, traj: &Trajectory) -> Result<PzLawReport> {
    let p0_slot = sys.p0_slot();
    let pz_slot = sys.pz_slot();
    let mut vals = vec![0.0; sys.chart.len()];
    let width = sys.chart.len().min(traj.dim());

    let mut a_vals = Vec::with_capacity(traj.len());
    for s in &traj.samples {
        vals[..width].copy_from_slice(&s[..width]);
        a_vals.push(sys.cost_z_derivative(&vals)?);
    }
    let w0 = traj.samples[0][p0_slot] + traj.samples[0][pz_slot];
    let mut integral = 0.0;
    let mut min_abs_w = f64::INFINITY;
    let mut max_rel = 0.0f64;
    let mut max_pz_drift = 0.0f64;
    let pz0 = traj.samples[0][pz_slot];
    for i in 0..traj.len() {
        if i > 0 {
            let h = traj.times[i] - traj.times[i - 1];
            integral += 0.5 * (a_vals[i - 1] + a_vals[i]) * h;
        }
        let w = traj.samples[i][p0_slot] + traj.samples[i][pz_slot];
        min_abs_w = min_abs_w.min(w.abs());
        let law = w0 * (-integral).exp();
        let scale = w.abs().max(w0.abs()).max(1e-30);
        max_rel = max_rel.max((w - law).abs() / scale);
        max_pz_drift = max_pz_drift.max((traj.samples[i][pz_slot] - pz0).abs());
    }
    Ok(PzLawReport {
        min_abs_w,
        max_rel_residual: max_rel,
        max_pz_drift,
    })
}

// ---- reduced contact system -----------------------------------------------

/// The reduced contact picture `(x^i, p_i, z)` with `H0 = p_i X^i - F`.
#[derive(Debug, Clone)]
pub struct ReducedContactOcp {
    pub problem: HerglotzOcpProblem,
    pub chart: ContactChart,
    /// `p_i X^i - F` over (states, costates, z, controls).
    pub h0: Expr,
    pub lambda0: f64,
    flow: ContactFlow,
    h0_bound: BoundExpr,
    layout: Vec<String>,
}

/// Build the reduced contact system for the normal branch `p0 = lambda0`.
pub fn reduce(problem: HerglotzOcpProblem, lambda0: f64) -> Result<ReducedContactOcp> {
    if lambda0 == 0.0 {
        return Err(Error::Invalid(
            "reduction needs lambda0 != 0 (normal branch only)".into(),
        ));
    }
    problem.validate()?;
    let m = problem.m();
    let costates: Vec<String> = (1..=m).map(|i| format!("p{i}")).collect();
    let chart = ContactChart::new(problem.states.clone(), costates.clone(), "z")?;
    let mut h0 = problem.cost.clone().neg();
    for (p, x) in costates.iter().zip(&problem.dynamics) {
        h0 = h0.add(Expr::var(p).mul(x.clone()));
    }
    let flow = ContactFlow::new(&chart, &h0, &problem.controls)?;
    let layout = flow.layout().to_vec();
    let h0_bound = h0.bind(&layout)?;
    Ok(ReducedContactOcp {
        problem,
        chart,
        h0,
        lambda0,
        flow,
        h0_bound,
        layout,
    })
}

impl ReducedContactOcp {
    pub fn m(&self) -> usize {
        self.chart.n()
    }

    pub fn k(&self) -> usize {
        self.problem.k()
    }

    /// Evaluation layout: states, costates, z, controls.
    pub fn layout(&self) -> &[String] {
        &self.layout
    }

    fn control_slots(&self) -> std::ops::Range<usize> {
        2 * self.m() + 1..2 * self.m() + 1 + self.k()
    }

    pub fn h0_value(&self, vals: &[f64]) -> Result<f64> {
        self.h0_bound.eval(vals)
    }

    pub fn stationarity_norm(&self, vals: &[f64]) -> Result<f64> {
        if self.k() == 0 {
            return Ok(0.0);
        }
        let slots: Vec<usize> = self.control_slots().collect();
        let jet = self.h0_bound.eval_jet_slots(vals, &slots, 1)?;
        Ok(jet.grad.iter().fold(0.0f64, |m, &g| m.max(g.abs())))
    }

    /// Contact components `(dx, dp, dz)` generated by the master formula.
    pub fn rhs(&self, vals: &[f64]) -> Result<Vec<f64>> {
        self.flow.rhs(vals)
    }

    pub fn eliminate_controls(&self, vals: &mut [f64], u_guess: &[f64]) -> Result<Vec<f64>> {
        let k = self.k();
        if k == 0 {
            return Ok(Vec::new());
        }
        let slots: Vec<usize> = self.control_slots().collect();
        for (slot, &u) in slots.iter().zip(u_guess) {
            vals[*slot] = u;
        }
        let mut residual = f64::INFINITY;
        for _ in 0..50 {
            let jet = self.h0_bound.eval_jet_slots(vals, &slots, 2)?;
            residual = jet.grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
            let hess = jet.hess.expect("order-2 jet");
            if !matrix_condition_ok(&hess) {
                return Err(Error::Singular(
                    "control Hessian d2H0/du2 is singular on the reduced system".into(),
                ));
            }
            if residual <= 1e-12 {
                return Ok(slots.iter().map(|&s| vals[s]).collect());
            }
            let g = DVector::from_iterator(k, jet.grad.iter().map(|&v| -v));
            let step = hess
                .lu()
                .solve(&g)
                .ok_or_else(|| Error::Singular("control Hessian solve failed".into()))?;
            for (i, slot) in slots.iter().enumerate() {
                vals[*slot] += step[i];
            }
        }
        Err(Error::NoConvergence {
            what: "reduced-system control elimination".to_string(),
            iters: 50,
            residual,
        })
    }

    /// Integrate the reduced flow from `(x_start, p_a, z_start)` with
    /// controls eliminated per step; the trajectory carries controls and
    /// diagnostics.
    pub fn integrate_from(&self, p_a: &[f64], integrator: &IntegratorConfig) -> Result<Trajectory> {
        let m = self.m();
        let k = self.k();
        let mut y0 = vec![0.0; 2 * m + 1];
        y0[..m].copy_from_slice(&self.problem.x_start);
        y0[m..2 * m].copy_from_slice(p_a);
        y0[2 * m] = self.problem.z_start;

        let mut vals = vec![0.0; self.layout.len()];
        let mut u_warm = vec![0.0; k];
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            vals[..2 * m + 1].copy_from_slice(y);
            let warm = u_warm.clone();
            let u = self.eliminate_controls(&mut vals, &warm)?;
            if !u.is_empty() {
                u_warm.copy_from_slice(&u);
            }
            let r = self.flow.rhs(&vals)?;
            dy.copy_from_slice(&r);
            Ok(())
        };
        let phase_chart: Vec<String> = self.layout[..2 * m + 1].to_vec();
        let traj = integrate::integrate_named(
            &phase_chart,
            &mut rhs,
            &y0,
            self.problem.interval,
            integrator,
        )?;
        self.decorate(traj)
    }

    fn decorate(&self, traj: Trajectory) -> Result<Trajectory> {
        let m = self.m();
        let k = self.k();
        let mut vals = vec![0.0; self.layout.len()];
        let mut u_warm = vec![0.0; k];
        let mut h_col = Vec::with_capacity(traj.len());
        let mut dhdu_col = Vec::with_capacity(traj.len());
        let mut samples = Vec::with_capacity(traj.len());
        for s in &traj.samples {
            vals[..2 * m + 1].copy_from_slice(s);
            let warm = u_warm.clone();
            let u = self.eliminate_controls(&mut vals, &warm)?;
            if !u.is_empty() {
                u_warm.copy_from_slice(&u);
            }
            h_col.push(self.h0_value(&vals)?);
            dhdu_col.push(self.stationarity_norm(&vals)?);
            let mut row = s.clone();
            row.extend_from_slice(&u);
            samples.push(row);
        }
        let mut derivs = Vec::with_capacity(traj.len());
        for d in &traj.derivs {
            let mut row = d.clone();
            row.extend(std::iter::repeat_n(0.0, k));
            derivs.push(row);
        }
        let mut out = Trajectory {
            chart: self.layout.clone(),
            times: traj.times,
            samples,
            derivs,
            diagnostics: Vec::new(),
        };
        out.push_diagnostic("H0", h_col);
        out.push_diagnostic("dH0du_norm", dhdu_col);
        Ok(out)
    }

    /// Shooting on the unknown initial reduced costates.
    pub fn solve_bvp(
        &self,
        shooting: &ShootingConfig,
        integrator: &IntegratorConfig,
        costate_guess: Option<Vec<f64>>,
    ) -> Result<ReducedSolution> {
        let m = self.m();
        let guess = costate_guess.unwrap_or_else(|| vec![0.0; m]);
        let mut residual = |p_a: &[f64]| -> Result<Vec<f64>> {
            let traj = self.integrate_from(p_a, integrator)?;
            let end = traj.last();
            Ok((0..m).map(|i| end[i] - self.problem.x_end[i]).collect())
        };
        let p_a = integrate::shoot(&mut residual, &guess, shooting)?;
        let traj = self.integrate_from(&p_a, integrator)?;
        let end = traj.last();
        let terminal_residual = (0..m)
            .map(|i| (end[i] - self.problem.x_end[i]).abs())
            .fold(0.0f64, f64::max);
        let max_stationarity = traj
            .diagnostics
            .iter()
            .find(|(n, _)| n == "dH0du_norm")
            .map(|(_, c)| c.iter().fold(0.0f64, |m, &v| m.max(v)))
            .unwrap_or(0.0);
        Ok(ReducedSolution {
            trajectory: traj,
            costate_start: p_a,
            terminal_residual,
            max_stationarity,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub trajectory: Trajectory,
    pub costate_start: Vec<f64>,
    pub terminal_residual: f64,
    pub max_stationarity: f64,
}

// ---- projection between the pictures ---------------------------------------

/// Fiberwise projection of a full phase sample `(x0, x, z, p0, p, pz)` to
/// the reduced chart `(x, p~, z)` with `p~ = -p / (lambda0 + pz)`.
pub fn project_sample(m: usize, lambda0: f64, full: &[f64]) -> Result<Vec<f64>> {
    let w = lambda0 + full[2 * m + 3];
    if w.abs() < 1e-10 {
        return Err(Error::Singular(format!(
            "projection degenerates: |lambda0 + pz| = {:.3e}",
            w.abs()
        )));
    }
    let mut out = Vec::with_capacity(2 * m + 1);
    out.extend_from_slice(&full[1..1 + m]);
    for j in 0..m {
        out.push(-full[m + 3 + j] / w);
    }
    out.push(full[m + 1]);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ProjectionReport {
    pub trajectory: Trajectory,
    /// Max over samples of the mismatch between the time derivative of the
    /// projected curve (chain rule through the full flow) and the reduced
    /// right-hand side at the projected point.
    pub max_rhs_residual: f64,
    /// Max drift of `x0 - z`, which vanishes along matched initializations.
    pub max_x0_z_drift: f64,
    pub min_abs_w: f64,
}

/// Project a full-system trajectory and verify it satisfies the reduced
/// equations. Fails fast when `x0(a) != z(a)`.
pub fn consistency_project(
    sys: &FullExtendedSystem,
    reduced: &ReducedContactOcp,
    traj: &Trajectory,
) -> Result<ProjectionReport> {
    let m = sys.m();
    let k = sys.k();
    let first = &traj.samples[0];
    if (first[0] - first[sys.z_slot()]).abs() > 1e-12 {
        return Err(Error::Invalid(format!(
            "projection requires x0(a) = z(a); got x0(a) = {}, z(a) = {}",
            first[0],
            first[sys.z_slot()]
        )));
    }
    let lambda0 = sys.lambda0;
    let mut vals_full = vec![0.0; sys.chart.len()];
    let mut vals_red = vec![0.0; reduced.layout().len()];
    let mut u_warm = vec![0.0; k];
    let mut max_resid = 0.0f64;
    let mut max_drift = 0.0f64;
    let mut min_abs_w = f64::INFINITY;
    let mut projected_samples = Vec::with_capacity(traj.len());

    for s in &traj.samples {
        max_drift = max_drift.max((s[0] - s[sys.z_slot()]).abs());
        // full-system derivative at the sample (controls from the stored
        // columns when present, otherwise re-eliminated)
        let width = s.len().min(vals_full.len());
        vals_full[..width].copy_from_slice(&s[..width]);
        if s.len() < sys.chart.len() {
            let warm = u_warm.clone();
            let u = sys.eliminate_controls(&mut vals_full, &warm)?;
            if !u.is_empty() {
                u_warm.copy_from_slice(&u);
            }
        }
        let full_rhs = sys.full_rhs(&vals_full)?;
        let w = lambda0 + vals_full[sys.pz_slot()];
        min_abs_w = min_abs_w.min(w.abs());
        let projected = project_sample(m, lambda0, &vals_full[..sys.phase_dim()])?;

        // chain rule: d(p~)/dt = -dp/dt / w + p dpz/dt / w^2
        let mut chain = Vec::with_capacity(2 * m + 1);
        chain.extend_from_slice(&full_rhs[1..1 + m]);
        let pz_dot = full_rhs[sys.pz_slot()];
        for j in 0..m {
            let p_j = vals_full[m + 3 + j];
            chain.push(-full_rhs[m + 3 + j] / w + p_j * pz_dot / (w * w));
        }
        chain.push(full_rhs[sys.z_slot()]);

        // reduced right-hand side at the projected point, same controls
        vals_red[..2 * m + 1].copy_from_slice(&projected);
        for (i, slot) in reduced.control_slots().enumerate() {
            vals_red[slot] = vals_full[2 * m + 4 + i];
        }
        let red_rhs = reduced.rhs(&vals_red)?;
        for (a, b) in chain.iter().zip(&red_rhs) {
            max_resid = max_resid.max((a - b).abs());
        }
        projected_samples.push(projected);
    }

    let projected = Trajectory {
        chart: reduced.layout()[..2 * m + 1].to_vec(),
        times: traj.times.clone(),
        derivs: vec![vec![0.0; 2 * m + 1]; traj.len()],
        samples: projected_samples,
        diagnostics: Vec::new(),
    };
    Ok(ProjectionReport {
        trajectory: projected,
        max_rhs_residual: max_resid,
        max_x0_z_drift: max_drift,
        min_abs_w,
    })
}

/// Max residual of the conformal-equivalence identities of the projection at
/// random points: the pullback of the reduced contact form equals
/// `-1/(lambda0 + pz)` times the induced form `(-lambda0 - pz) dz - p dx`,
/// and the pullback of `H0` equals the same factor times
/// `(lambda0 + pz) F + p X`.
pub fn projection_conformal_residual(
    problem: &HerglotzOcpProblem,
    lambda0: f64,
    n_points: usize,
    seed: u64,
) -> Result<f64> {
    let reduced = reduce(problem.clone(), lambda0)?;
    let m = problem.m();
    let k = problem.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut vals_red = vec![0.0; reduced.layout().len()];
    for _ in 0..n_points {
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
        let p: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
        let u: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
        let z: f64 = rng.random_range(-1.5..1.5);
        let mut pz: f64 = rng.random_range(-1.5..1.5);
        let mut w = lambda0 + pz;
        if w.abs() < 0.1 {
            pz += 0.5;
            w = lambda0 + pz;
        }
        let factor = -1.0 / w;

        // one-form part: coefficients over the source chart (x, z, p, pz)
        for j in 0..m {
            let pullback = p[j] / w; // (Phi* eta0) on dx^j
            let induced = -p[j]; // eta~ on dx^j
            worst = worst.max((pullback - factor * induced).abs());
        }
        let pullback_dz = 1.0;
        let induced_dz = -lambda0 - pz;
        worst = worst.max((pullback_dz - factor * induced_dz).abs());

        // Hamiltonian part: H0 at the image vs factor * ((lambda0+pz) F + p X)
        vals_red[..m].copy_from_slice(&x);
        for j in 0..m {
            vals_red[m + j] = -p[j] / w;
        }
        vals_red[2 * m] = z;
        for (i, slot) in reduced.control_slots().enumerate() {
            vals_red[slot] = u[i];
        }
        let h0 = reduced.h0_value(&vals_red)?;

        let mut point = Bindings::new();
        for (name, &v) in problem.states.iter().zip(&x) {
            point.set(name, v);
        }
        for (name, &v) in problem.controls.iter().zip(&u) {
            point.set(name, v);
        }
        point.set("z", z);
        let f_val = problem.cost.eval(&point)?;
        let mut h_tilde = w * f_val;
        for (xdyn, &p_j) in problem.dynamics.iter().zip(&p) {
            h_tilde += p_j * xdyn.eval(&point)?;
        }
        worst = worst.max((h0 - factor * h_tilde).abs());
    }
    Ok(worst)
}

// ---- Herglotz equation recovery ---------------------------------------------

/// Two-route check that the velocity-controlled problem recovers the
/// Lagrangian evolution equations.
#[derive(Debug, Clone)]
pub struct RecoveryReport {
    /// Indirect solution of the velocity-controlled problem.
    pub solution: ReducedSolution,
    /// Direct flow of the Lagrangian evolution equations from matched data.
    pub reference_flow: Trajectory,
    /// Max finite-difference residual of
    /// `d/dt(dL/dv) - dL/dq - (dL/dz)(dL/dv)` along the indirect solution.
    pub max_el_residual: f64,
    /// Max gap between the two routes on shared `(q, z)` coordinates.
    pub max_flow_gap: f64,
}

/// Pose the Lagrangian as a control problem (controls are the velocities,
/// the cost is the Lagrangian, the dynamics are `dq = v`), solve it through
/// the reduced contact system, and compare with the direct flow.
pub fn herglotz_equation_recovery(
    lag: &HerglotzLagrangian,
    q_start: &[f64],
    v_start: &[f64],
    z_start: f64,
    interval: [f64; 2],
    shooting: &ShootingConfig,
    integrator: &IntegratorConfig,
) -> Result<RecoveryReport> {
    let n = lag.n();
    if q_start.len() != n || v_start.len() != n {
        return Err(Error::Dimension("boundary data must match n".into()));
    }
    // route 1: direct flow of the evolution equations
    let mut start = q_start.to_vec();
    start.extend_from_slice(v_start);
    start.push(z_start);
    let reference_flow = lag.flow(&start, interval, integrator)?;
    let end = reference_flow.last();
    let q_end = end[..n].to_vec();

    // route 2: velocity-controlled problem through the reduced system
    let problem = HerglotzOcpProblem {
        states: lag.positions.clone(),
        controls: lag.velocities.clone(),
        dynamics: lag.velocities.iter().map(|v| Expr::var(v)).collect(),
        cost: lag.lagrangian.clone(),
        interval,
        x_start: q_start.to_vec(),
        x_end: q_end,
        z_start,
        sense: Sense::Minimize,
    };
    let reduced = reduce(problem, -1.0)?;
    // the reduced costates are the momenta dL/dv, so the flow start is a
    // good shooting guess
    let mut point = Bindings::new();
    for (name, &v) in lag.positions.iter().zip(q_start) {
        point.set(name, v);
    }
    for (name, &v) in lag.velocities.iter().zip(v_start) {
        point.set(name, v);
    }
    point.set(&lag.z, z_start);
    let p_guess = lag.legendre_momenta(&point)?;
    let solution = reduced.solve_bvp(shooting, integrator, Some(p_guess))?;

    // generalized evolution-equation residual by finite differences of the
    // momenta along the indirect solution
    let traj = &solution.trajectory;
    let chart = lag.chart();
    let mut lag_vals = Vec::with_capacity(traj.len());
    for s in &traj.samples {
        let mut b = Bindings::new();
        for (i, name) in lag.positions.iter().enumerate() {
            b.set(name, s[i]);
        }
        for (i, name) in lag.velocities.iter().enumerate() {
            b.set(name, s[2 * n + 1 + i]); // controls are the velocities
        }
        b.set(&lag.z, s[2 * n]);
        lag_vals.push(b);
    }
    let wrt: Vec<&str> = chart.iter().map(String::as_str).collect();
    let momenta: Vec<Vec<f64>> = lag_vals
        .iter()
        .map(|b| lag.legendre_momenta(b))
        .collect::<Result<Vec<_>>>()?;
    let mut max_el = 0.0f64;
    for i in 1..traj.len() - 1 {
        let dt = traj.times[i + 1] - traj.times[i - 1];
        let jet = lag.lagrangian.eval_jet(&lag_vals[i], &wrt, 1)?;
        for j in 0..n {
            let dpdt = (momenta[i + 1][j] - momenta[i - 1][j]) / dt;
            let target = jet.grad[j] + jet.grad[2 * n] * jet.grad[n + j];
            max_el = max_el.max((dpdt - target).abs());
        }
    }

    // shared-coordinate gap between the two routes (q and z)
    let mut max_gap = 0.0f64;
    for (t, s) in traj.times.iter().zip(&traj.samples) {
        let r = reference_flow.sample_at(*t);
        for j in 0..n {
            max_gap = max_gap.max((s[j] - r[j]).abs());
        }
        max_gap = max_gap.max((s[2 * n] - r[2 * n]).abs());
    }

    Ok(RecoveryReport {
        solution,
        reference_flow,
        max_el_residual: max_el,
        max_flow_gap: max_gap,
    })
}
