//! Classical optimal control by the presymplectic route.
//!
//! A problem `(states, controls, dynamics X(x,u), cost F(x,u), [a,b],
//! x(a), x(b))` is extended with a cost coordinate `x0` (running cost) and
//! lifted to the chart `(x0, x^i, p0, p_i, u^a)` with Hamiltonian
//! `H = p0 F + p_i X^i`. Extremals satisfy
//!
//! ```text
//!   dx0 = F      dp0 = 0          (p0 is constant along solutions)
//!   dx  = X      dp_i = -p0 dF/dx^i - p_j dX^j/dx^i
//!   dH/du^a = 0                    (stationarity in the controls)
//! ```
//!
//! `p0 = lambda0 != 0` is the normal branch, which restricts to a contact
//! system (see [`PmpSystem::normal_restriction`]); `p0 = 0` is the abnormal
//! branch, a presymplectic system with the cost direction in the kernel.
//! Regular problems determine `u` from the stationarity conditions by a
//! Newton solve per right-hand-side evaluation; [`solve_bvp`] then shoots on
//! the unknown initial costates.

use crate::error::{Error, Result};
use crate::expr::{BoundExpr, Expr};
use crate::geometry::{ensure_distinct, matrix_condition_ok, ContactChart, ContactFlow};
use crate::integrate::{self, IntegratorConfig, ShootingConfig, Trajectory};
use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// Default normal multiplier: extremal equations are invariant under
    /// scaling `(p0, p) -> (c p0, c p)`, so only the sign matters.
    pub fn default_lambda0(self) -> f64 {
        match self {
            Sense::Minimize => -1.0,
            Sense::Maximize => 1.0,
        }
    }
}

/// A classical optimal control problem. Dynamics and cost may reference
/// states and controls only.
#[derive(Debug, Clone)]
pub struct OcpProblem {
    pub states: Vec<String>,
    pub controls: Vec<String>,
    pub dynamics: Vec<Expr>,
    pub cost: Expr,
    pub interval: [f64; 2],
    pub x_start: Vec<f64>,
    pub x_end: Vec<f64>,
    pub sense: Sense,
}

impl OcpProblem {
    pub fn validate(&self) -> Result<()> {
        let m = self.states.len();
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

    pub fn m(&self) -> usize {
        self.states.len()
    }

    pub fn k(&self) -> usize {
        self.controls.len()
    }
}

/// The extended presymplectic system of an optimal control problem.
#[derive(Debug, Clone)]
pub struct PmpSystem {
    pub problem: OcpProblem,
    /// Chart order: `x0`, states, `p0`, costates `p1..pm`, controls.
    pub chart: Vec<String>,
    pub costates: Vec<String>,
    /// `p0 F + p_i X^i`, linear in `p0`.
    pub hamiltonian: Expr,
    /// Constant value of `p0` along the branch being solved.
    pub lambda0: f64,
    f_bound: BoundExpr,
    x_bound: Vec<BoundExpr>,
    h_bound: BoundExpr,
}

/// Build the extended system. Reserved names `x0`, `p0`, `p1..pm` must not
/// collide with user states or controls.
pub fn extend(problem: OcpProblem) -> Result<PmpSystem> {
    problem.validate()?;
    let m = problem.m();
    let costates: Vec<String> = (1..=m).map(|i| format!("p{i}")).collect();
    let mut chart = vec!["x0".to_string()];
    chart.extend(problem.states.iter().cloned());
    chart.push("p0".to_string());
    chart.extend(costates.iter().cloned());
    chart.extend(problem.controls.iter().cloned());
    ensure_distinct(&chart).map_err(|_| {
        Error::NameCollision("state or control names collide with the reserved x0/p0/p1..pm".into())
    })?;

    let mut h = Expr::var("p0").mul(problem.cost.clone());
    for (p, x) in costates.iter().zip(&problem.dynamics) {
        h = h.add(Expr::var(p).mul(x.clone()));
    }
    let lambda0 = problem.sense.default_lambda0();
    let f_bound = problem.cost.bind(&chart)?;
    let x_bound = problem
        .dynamics
        .iter()
        .map(|e| e.bind(&chart))
        .collect::<Result<Vec<_>>>()?;
    let h_bound = h.bind(&chart)?;
    Ok(PmpSystem {
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

impl PmpSystem {
    pub fn m(&self) -> usize {
        self.problem.m()
    }

    pub fn k(&self) -> usize {
        self.problem.k()
    }

    pub fn with_lambda0(mut self, lambda0: f64) -> Self {
        self.lambda0 = lambda0;
        self
    }

    /// Slots of the extended phase variables within the chart.
    fn state_slots(&self) -> std::ops::Range<usize> {
        1..1 + self.m()
    }

    fn control_slots(&self) -> std::ops::Range<usize> {
        2 * self.m() + 2..2 * self.m() + 2 + self.k()
    }

    pub fn hamiltonian_value(&self, vals: &[f64]) -> Result<f64> {
        self.h_bound.eval(vals)
    }

    /// Max-norm of the stationarity conditions `dH/du` at a full chart point.
    pub fn stationarity_norm(&self, vals: &[f64]) -> Result<f64> {
        if self.k() == 0 {
            return Ok(0.0);
        }
        let slots: Vec<usize> = self.control_slots().collect();
        let jet = self.h_bound.eval_jet_slots(vals, &slots, 1)?;
        Ok(jet.grad.iter().fold(0.0f64, |m, &g| m.max(g.abs())))
    }

    /// Tangent vector over `(x0, x, p0, p)`; `vals` binds the full chart
    /// including controls. The `p0` component is exactly zero.
    pub fn pmp_rhs(&self, vals: &[f64]) -> Result<Vec<f64>> {
        let m = self.m();
        let slots: Vec<usize> = self.state_slots().collect();
        let f_jet = self.f_bound.eval_jet_slots(vals, &slots, 1)?;
        let p0 = vals[m + 1];
        let mut out = vec![0.0; 2 * m + 2];
        out[0] = f_jet.value;
        for i in 0..m {
            out[m + 2 + i] = -p0 * f_jet.grad[i];
        }
        for (j, xb) in self.x_bound.iter().enumerate() {
            let x_jet = xb.eval_jet_slots(vals, &slots, 1)?;
            out[1 + j] = x_jet.value;
            let p_j = vals[m + 2 + j];
            for i in 0..m {
                out[m + 2 + i] -= p_j * x_jet.grad[i];
            }
        }
        out[m + 1] = 0.0;
        Ok(out)
    }

    /// Solve the stationarity conditions `dH/du = 0` by Newton iteration from
    /// `u_guess`, writing the controls into `vals` and returning them.
    /// Residual target 1e-12 (max-norm), at most 50 iterations.
    pub fn eliminate_controls(&self, vals: &mut [f64], u_guess: &[f64]) -> Result<Vec<f64>> {
        let k = self.k();
        if k == 0 {
            return Ok(Vec::new());
        }
        if u_guess.len() != k {
            return Err(Error::Dimension(format!(
                "control guess has {} entries for {k} controls",
                u_guess.len()
            )));
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
            // stationarity must also *determine* the controls
            if !matrix_condition_ok(&hess) {
                return Err(Error::Singular(
                    "control Hessian d2H/du2 is singular; the problem is not regular \
                     (apply the constraint algorithm at higher depth)"
                        .into(),
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
            what: "control elimination (stationarity dH/du = 0)".to_string(),
            iters: 50,
            residual,
        })
    }

    /// The contact restriction to the hypersurface `p0 = lambda0 != 0`.
    pub fn normal_restriction(&self, lambda0: f64) -> Result<NormalRestriction> {
        if lambda0 == 0.0 {
            return Err(Error::Invalid(
                "the contact restriction needs lambda0 != 0; p0 = 0 is the abnormal branch".into(),
            ));
        }
        let z_name = if self.chart.iter().any(|n| n == "z") {
            "z_contact".to_string()
        } else {
            "z".to_string()
        };
        let chart = ContactChart::new(self.problem.states.clone(), self.costates.clone(), z_name)?;
        // restriction of H to p0 = lambda0
        let h_n = self.hamiltonian.subst("p0", &Expr::num(lambda0));
        let flow = ContactFlow::new(&chart, &h_n, &self.problem.controls)?;
        Ok(NormalRestriction {
            chart,
            hamiltonian: h_n,
            lambda0,
            flow,
        })
    }

    /// The presymplectic restriction to `p0 = 0`: lifted dynamics with no
    /// cost term. The cost-coordinate rate is undetermined (kernel
    /// direction); it is reported as `F` by convention.
    pub fn abnormal_restriction(&self) -> AbnormalRestriction<'_> {
        AbnormalRestriction { system: self }
    }
}

/// Contact-side form of the normal branch. The Darboux coordinate `z`
/// corresponds to `-lambda0 * x0`, so the contact flow reproduces the
/// extended equations exactly on `p0 = lambda0`.
#[derive(Debug, Clone)]
pub struct NormalRestriction {
    pub chart: ContactChart,
    /// `lambda0 F + p_i X^i` over (states, costates[, controls]).
    pub hamiltonian: Expr,
    pub lambda0: f64,
    flow: ContactFlow,
}

impl NormalRestriction {
    pub fn z_from_x0(&self, x0: f64) -> f64 {
        -self.lambda0 * x0
    }

    pub fn x0_from_z(&self, z: f64) -> f64 {
        -z / self.lambda0
    }

    /// Contact components `(dq, dp, dz)`; `vals` follows
    /// (states, costates, z, controls).
    pub fn rhs(&self, vals: &[f64]) -> Result<Vec<f64>> {
        self.flow.rhs(vals)
    }

    /// The same tangent vector mapped to the extended chart order
    /// `(x0, x, p0 = 0, p)`.
    pub fn rhs_extended(&self, vals: &[f64]) -> Result<Vec<f64>> {
        let n = self.chart.n();
        let contact = self.flow.rhs(vals)?;
        let mut out = vec![0.0; 2 * n + 2];
        out[0] = self.x0_from_z(contact[2 * n]);
        out[1..1 + n].copy_from_slice(&contact[..n]);
        // p0 slot stays 0: p0 is frozen at lambda0 on the hypersurface
        out[n + 2..2 * n + 2].copy_from_slice(&contact[n..2 * n]);
        Ok(out)
    }
}

/// Reduced dynamics of the abnormal branch over `(x, p)`.
pub struct AbnormalRestriction<'a> {
    system: &'a PmpSystem,
}

impl AbnormalRestriction<'_> {
    /// `(dx, dp)` plus the reported cost rate `dx0 = F`; `vals` follows the
    /// full extended chart with `p0` ignored.
    pub fn rhs(&self, vals: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut v = vals.to_vec();
        let m = self.system.m();
        v[m + 1] = 0.0;
        let full = self.system.pmp_rhs(&v)?;
        let mut xp = Vec::with_capacity(2 * m);
        xp.extend_from_slice(&full[1..1 + m]);
        xp.extend_from_slice(&full[m + 2..2 * m + 2]);
        Ok((xp, full[0]))
    }
}

// ---- indirect solve ------------------------------------------------------

/// Result bundle of an indirect solve: the trajectory carries per-sample
/// controls and diagnostics, the report the terminal data.
#[derive(Debug, Clone)]
pub struct IndirectSolution {
    pub trajectory: Trajectory,
    pub costate_start: Vec<f64>,
    pub terminal_residual: f64,
    pub max_stationarity: f64,
    pub p0_drift: f64,
}

/// Shooting over unknown initial costates: integrate the extended equations
/// with controls eliminated at every right-hand-side evaluation and apply
/// Newton to the endpoint mismatch `x(b) - x_end`.
pub fn solve_bvp(
    sys: &PmpSystem,
    shooting: &ShootingConfig,
    integrator: &IntegratorConfig,
    costate_guess: Option<Vec<f64>>,
) -> Result<IndirectSolution> {
    let m = sys.m();
    let guess = costate_guess.unwrap_or_else(|| vec![0.0; m]);
    if guess.len() != m {
        return Err(Error::Dimension(format!(
            "costate guess has {} entries for {m} states",
            guess.len()
        )));
    }

    let mut residual = |p_a: &[f64]| -> Result<Vec<f64>> {
        let traj = integrate_extended(sys, p_a, integrator)?;
        let end = traj.last();
        Ok((0..m).map(|i| end[1 + i] - sys.problem.x_end[i]).collect())
    };
    let p_a = integrate::shoot(&mut residual, &guess, shooting)?;

    let traj = integrate_extended(sys, &p_a, integrator)?;
    let end = traj.last();
    let terminal_residual = (0..m)
        .map(|i| (end[1 + i] - sys.problem.x_end[i]).abs())
        .fold(0.0f64, f64::max);

    let decorated = decorate_trajectory(sys, traj)?;
    let p0_drift = decorated
        .series(m + 1)
        .map(|p0| (p0 - sys.lambda0).abs())
        .fold(0.0f64, f64::max);
    let max_stationarity = decorated
        .diagnostics
        .iter()
        .find(|(name, _)| name == "dHdu_norm")
        .map(|(_, col)| col.iter().fold(0.0f64, |m, &v| m.max(v)))
        .unwrap_or(0.0);

    Ok(IndirectSolution {
        trajectory: decorated,
        costate_start: p_a,
        terminal_residual,
        max_stationarity,
        p0_drift,
    })
}

/// Integrate the extended equations from `x(a)` with given initial costates;
/// the trajectory holds phase samples only (controls are re-eliminated when
/// decorating).
fn integrate_extended(
    sys: &PmpSystem,
    p_a: &[f64],
    integrator: &IntegratorConfig,
) -> Result<Trajectory> {
    let m = sys.m();
    let k = sys.k();
    let mut y0 = vec![0.0; 2 * m + 2];
    y0[1..1 + m].copy_from_slice(&sys.problem.x_start);
    y0[m + 1] = sys.lambda0;
    y0[m + 2..2 * m + 2].copy_from_slice(p_a);

    let mut vals = vec![0.0; sys.chart.len()];
    let mut u_warm = vec![0.0; k];
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        vals[..2 * m + 2].copy_from_slice(y);
        let warm = u_warm.clone();
        let u = sys.eliminate_controls(&mut vals, &warm)?;
        u_warm.copy_from_slice(&u);
        let r = sys.pmp_rhs(&vals)?;
        dy.copy_from_slice(&r);
        Ok(())
    };
    let phase_chart: Vec<String> = sys.chart[..2 * m + 2].to_vec();
    integrate::integrate_named(
        &phase_chart,
        &mut rhs,
        &y0,
        sys.problem.interval,
        integrator,
    )
}

/// Append per-sample controls and diagnostics (H value, stationarity norm)
/// to a phase trajectory, yielding the full chart.
fn decorate_trajectory(sys: &PmpSystem, traj: Trajectory) -> Result<Trajectory> {
    let m = sys.m();
    let k = sys.k();
    let n_samples = traj.len();
    let mut vals = vec![0.0; sys.chart.len()];
    let mut u_warm = vec![0.0; k];
    let mut u_cols = vec![Vec::with_capacity(n_samples); k];
    let mut h_col = Vec::with_capacity(n_samples);
    let mut dhdu_col = Vec::with_capacity(n_samples);

    let mut samples = Vec::with_capacity(n_samples);
    for s in &traj.samples {
        vals[..2 * m + 2].copy_from_slice(s);
        let warm = u_warm.clone();
        let u = sys.eliminate_controls(&mut vals, &warm)?;
        if k > 0 {
            u_warm.copy_from_slice(&u);
        }
        for (col, &ui) in u_cols.iter_mut().zip(&u) {
            col.push(ui);
        }
        h_col.push(sys.hamiltonian_value(&vals)?);
        dhdu_col.push(sys.stationarity_norm(&vals)?);
        let mut row = s.clone();
        row.extend_from_slice(&u);
        samples.push(row);
    }

    let mut derivs = Vec::with_capacity(n_samples);
    for (d, s) in traj.derivs.iter().zip(&samples) {
        let mut row = d.clone();
        row.extend(std::iter::repeat_n(0.0, s.len() - d.len()));
        derivs.push(row);
    }

    let mut out = Trajectory {
        chart: sys.chart.clone(),
        times: traj.times,
        samples,
        derivs,
        diagnostics: Vec::new(),
    };
    out.push_diagnostic("H", h_col);
    out.push_diagnostic("dHdu_norm", dhdu_col);
    Ok(out)
}

/// Quadrature of the running cost along a solved trajectory (per-interval
/// Simpson with dense-output midpoints, controls re-eliminated there), for
/// the cost-bookkeeping check `x0(b) - x0(a) = integral of F`.
pub fn cost_quadrature(sys: &PmpSystem, traj: &Trajectory) -> Result<f64> {
    let m = sys.m();
    let k = sys.k();
    let phase = 2 * m + 2;
    let mut vals = vec![0.0; sys.chart.len()];
    let width = sys.chart.len().min(traj.dim());

    let mut f_vals = Vec::with_capacity(traj.len());
    for s in &traj.samples {
        vals[..width].copy_from_slice(&s[..width]);
        f_vals.push(sys.f_bound.eval(&vals)?);
    }
    let mut acc = 0.0;
    for i in 0..traj.len() - 1 {
        let h = traj.times[i + 1] - traj.times[i];
        let mid = traj.sample_at(0.5 * (traj.times[i] + traj.times[i + 1]));
        vals[..phase].copy_from_slice(&mid[..phase]);
        // warm-start the midpoint elimination from the stored left controls
        let warm: Vec<f64> = if traj.dim() >= phase + k {
            traj.samples[i][phase..phase + k].to_vec()
        } else {
            vec![0.0; k]
        };
        sys.eliminate_controls(&mut vals, &warm)?;
        let f_mid = sys.f_bound.eval(&vals)?;
        acc += h / 6.0 * (f_vals[i] + 4.0 * f_mid + f_vals[i + 1]);
    }
    Ok(acc)
}
