//! Port-thermodynamic systems and the homogeneous/contact correspondence.
//!
//! A degree-1 homogeneous Hamiltonian `H(q, z, P, P_z)` on the doubled
//! symplectic chart descends, away from `P_z = 0`, to the contact
//! Hamiltonian `h(q, p, z) = H(q, z, p, -1)` under the fiberwise projection
//! `p = -P / P_z`; the symplectic flow of `H` then pushes forward to the
//! contact flow of `h`. The homogeneous picture is used for verification
//! only; dynamics production runs on the contact side.
//!
//! A port-thermodynamic system is a Legendrian submanifold of state
//! equations together with a control-parametrized contact Hamiltonian
//! `h = h_a + h_c^a u_a` vanishing on it, so the flow is tangent to the
//! state equations for every control; the entropy rate along the flow (the
//! `S`-component, `p dh/dp - h`) must be nonnegative. The gas-piston-damper
//! system instantiates all of it, including the lift of the whole control
//! system to a contact system on the doubled chart (momenta `P_*`), whose
//! Hamiltonian is assembled from the component dynamics as `P.X - F`.

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr};
use crate::geometry::{symplectic_vf, ContactChart, ContactFlow};
use crate::integrate::{self, IntegratorConfig, Trajectory};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

// ---- homogenization ---------------------------------------------------------

/// Chart of the doubled symplectic picture: positions, the `z` coordinate,
/// their conjugate momenta `P_i` and `P_z`.
#[derive(Debug, Clone)]
pub struct HomogeneousChart {
    pub positions: Vec<String>,
    pub z: String,
    pub momenta: Vec<String>,
    pub pz: String,
}

impl HomogeneousChart {
    pub fn names(&self) -> Vec<String> {
        let mut names = self.positions.clone();
        names.push(self.z.clone());
        names.extend(self.momenta.iter().cloned());
        names.push(self.pz.clone());
        names
    }
}

/// Result of descending a homogeneous Hamiltonian to the contact picture.
#[derive(Debug, Clone)]
pub struct Dehomogenized {
    pub chart: ContactChart,
    /// `h(q, p, z) = H(q, z, p, -1)` as an expression over the contact chart.
    pub h: Expr,
    /// The image `(q, p = -P/P_z, z)` of the input point.
    pub contact_point: Vec<f64>,
    /// `h` at the image point; equals `-H/P_z` at the input point.
    pub value: f64,
}

/// Verify degree-1 homogeneity of `H` at `point` (scalings 2 and -3,
/// relative tolerance 1e-10) and descend it to the contact picture.
/// Requires `|P_z| > 1e-12`.
pub fn dehomogenize(
    chart: &HomogeneousChart,
    hamiltonian: &Expr,
    point: &Bindings,
) -> Result<Dehomogenized> {
    let pz = point.get(&chart.pz).ok_or_else(|| Error::UnboundVariable {
        name: chart.pz.clone(),
    })?;
    if pz.abs() <= 1e-12 {
        return Err(Error::Invalid(format!(
            "dehomogenization requires |{}| > 1e-12, got {pz:.3e}",
            chart.pz
        )));
    }
    let h_at = hamiltonian.eval(point)?;
    for lambda in [2.0, -3.0] {
        let mut scaled = Bindings::new();
        for (name, value) in point.iter() {
            let is_momentum = chart.momenta.iter().any(|m| m == name) || name == chart.pz;
            scaled.set(name, if is_momentum { lambda * value } else { value });
        }
        let h_scaled = hamiltonian.eval(&scaled)?;
        let residual = (h_scaled - lambda * h_at).abs();
        if residual > 1e-10 * (1.0 + h_at.abs()) {
            return Err(Error::Invalid(format!(
                "Hamiltonian is not homogeneous of degree 1: scaling by {lambda} \
                 leaves residual {residual:.3e}"
            )));
        }
    }

    // contact momenta named p_<position>
    let contact_momenta: Vec<String> = chart.positions.iter().map(|q| format!("p_{q}")).collect();
    let mut h = hamiltonian.subst(&chart.pz, &Expr::num(-1.0));
    for (big, small) in chart.momenta.iter().zip(&contact_momenta) {
        h = h.rename(big, small);
    }
    let contact_chart = ContactChart::new(
        chart.positions.clone(),
        contact_momenta.clone(),
        chart.z.clone(),
    )?;

    let mut contact_point = Vec::with_capacity(contact_chart.dim());
    let mut image = Bindings::new();
    for q in &chart.positions {
        let v = point
            .get(q)
            .ok_or_else(|| Error::UnboundVariable { name: q.clone() })?;
        contact_point.push(v);
        image.set(q, v);
    }
    for (big, small) in chart.momenta.iter().zip(&contact_momenta) {
        let big_v = point
            .get(big)
            .ok_or_else(|| Error::UnboundVariable { name: big.clone() })?;
        let p = -big_v / pz;
        contact_point.push(p);
        image.set(small, p);
    }
    let z = point.get(&chart.z).ok_or_else(|| Error::UnboundVariable {
        name: chart.z.clone(),
    })?;
    contact_point.push(z);
    image.set(&chart.z, z);

    let value = h.eval(&image)?;
    Ok(Dehomogenized {
        chart: contact_chart,
        h,
        contact_point,
        value,
    })
}

/// Push the symplectic flow of a homogeneous `H` through the projection and
/// compare with the contact flow of its descent at the image point; returns
/// the max component residual.
pub fn homogeneous_flow_projects(
    chart: &HomogeneousChart,
    hamiltonian: &Expr,
    point: &Bindings,
) -> Result<f64> {
    let deh = dehomogenize(chart, hamiltonian, point)?;
    let n = chart.positions.len();

    // symplectic flow on pairs (positions + z | momenta + P_z)
    let mut positions = chart.positions.clone();
    positions.push(chart.z.clone());
    let mut momenta = chart.momenta.clone();
    momenta.push(chart.pz.clone());
    let flow = symplectic_vf(&positions, &momenta, hamiltonian, point)?;
    let (q_dot, rest) = flow.split_at(n);
    let (z_dot, p_dot_big) = rest.split_first().expect("z slot");
    let (pz_dot, big_dots) = p_dot_big.split_last().expect("pz slot");

    let pz = point.get(&chart.pz).expect("validated");
    let mut pushforward = Vec::with_capacity(2 * n + 1);
    pushforward.extend_from_slice(q_dot);
    for i in 0..n {
        let big = point.get(&chart.momenta[i]).expect("validated");
        // d/dt of -P_i / P_z along the symplectic flow
        pushforward.push(-big_dots[i] / pz + big * pz_dot / (pz * pz));
    }
    pushforward.push(*z_dot);

    let contact_flow = ContactFlow::new(&deh.chart, &deh.h, &[])?;
    let contact = contact_flow.rhs(&deh.contact_point)?;

    let mut worst = 0.0f64;
    for (a, b) in pushforward.iter().zip(&contact) {
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

// ---- port-thermodynamic systems ----------------------------------------------

/// Legendrian state equations plus a control-parametrized contact
/// Hamiltonian vanishing on them.
#[derive(Debug, Clone)]
pub struct PortThermoSystem {
    pub chart: ContactChart,
    pub controls: Vec<String>,
    /// Constraint expressions that vanish exactly on the state submanifold.
    pub legendrian: Vec<Expr>,
    pub h_internal: Expr,
    pub h_control: Vec<Expr>,
}

impl PortThermoSystem {
    /// `h_a + h_c^a u_a` over chart and control names.
    pub fn h_total(&self) -> Expr {
        let mut h = self.h_internal.clone();
        for (hc, u) in self.h_control.iter().zip(&self.controls) {
            h = h.add(hc.clone().mul(Expr::var(u)));
        }
        h
    }

    /// Entropy production rate `p dh/dp - h` (the `S`-component of the
    /// contact flow) at a point binding chart and controls.
    pub fn entropy_rate(&self, point: &Bindings) -> Result<f64> {
        let flow = ContactFlow::new(&self.chart, &self.h_total(), &self.controls)?;
        let vals = crate::geometry::values_for(flow.layout(), point)?;
        let rhs = flow.rhs(&vals)?;
        Ok(rhs[self.chart.dim() - 1])
    }
}

/// Gas-piston-damper data: piston mass, damping coefficient, internal energy
/// `U(V, S)`.
#[derive(Debug, Clone)]
pub struct GasPistonParams {
    pub mass: f64,
    pub damping: f64,
    pub internal_energy: Expr,
}

impl Default for GasPistonParams {
    /// `U = exp(S) V^(-2/3)`: an ideal-gas-like law with strictly positive
    /// temperature `dU/dS` everywhere.
    fn default() -> Self {
        GasPistonParams {
            mass: 1.0,
            damping: 0.5,
            internal_energy: Expr::parse("exp(S)*V^(-2/3)").expect("constant expression"),
        }
    }
}

/// The assembled gas-piston system with its Legendrian parametrization.
#[derive(Debug, Clone)]
pub struct GasPiston {
    pub params: GasPistonParams,
    pub system: PortThermoSystem,
    u_v: Expr,
    u_s: Expr,
}

/// Chart: positions `(V, pi, E)`, momenta `(p_V, p_pi, p_E)`, `z = S`;
/// one control `u` acting on the piston.
pub fn gas_piston_system(params: GasPistonParams) -> Result<GasPiston> {
    if !(params.mass > 0.0) {
        return Err(Error::Config("piston mass must be positive".into()));
    }
    let u_expr = &params.internal_energy;
    for v in u_expr.vars() {
        if v != "V" && v != "S" {
            return Err(Error::UnboundVariable { name: v.clone() });
        }
    }
    let m = params.mass;
    let d = params.damping;
    let u_v = u_expr.diff("V");
    let u_s = u_expr.diff("S");

    let chart = ContactChart::new(
        vec!["V".into(), "pi".into(), "E".into()],
        vec!["p_V".into(), "p_pi".into(), "p_E".into()],
        "S",
    )?;
    let pi_over_m = Expr::var("pi").scale(1.0 / m);
    // h_a = p_V pi/m + p_pi (-U_V - d pi/m) - d (pi/m)^2 / U_S
    let h_internal = Expr::var("p_V")
        .mul(pi_over_m.clone())
        .add(Expr::var("p_pi").mul(u_v.clone().neg().sub(pi_over_m.clone().scale(d))))
        .sub(
            pi_over_m
                .clone()
                .mul(pi_over_m.clone())
                .scale(d)
                .div(u_s.clone()),
        );
    // h_c = p_pi + p_E pi/m
    let h_control = vec![Expr::var("p_pi").add(Expr::var("p_E").mul(pi_over_m.clone()))];
    // state equations: E = pi^2/2m + U, p_V = -p_E U_V, p_pi = -p_E pi/m,
    // p_E = 1/U_S
    let legendrian = vec![
        Expr::var("E")
            .sub(Expr::var("pi").mul(Expr::var("pi")).scale(1.0 / (2.0 * m)))
            .sub(u_expr.clone()),
        Expr::var("p_V").add(Expr::var("p_E").mul(u_v.clone())),
        Expr::var("p_pi").add(Expr::var("p_E").mul(pi_over_m)),
        Expr::var("p_E").sub(Expr::num(1.0).div(u_s.clone())),
    ];
    Ok(GasPiston {
        params,
        system: PortThermoSystem {
            chart,
            controls: vec!["u".into()],
            legendrian,
            h_internal,
            h_control,
        },
        u_v,
        u_s,
    })
}

/// Sampling box for the Legendrian parameters `(V, pi, S)`.
#[derive(Debug, Clone, Copy)]
pub struct LegendrianBox {
    pub v: [f64; 2],
    pub pi: [f64; 2],
    pub s: [f64; 2],
}

impl Default for LegendrianBox {
    fn default() -> Self {
        LegendrianBox {
            v: [0.5, 2.0],
            pi: [-1.0, 1.0],
            s: [-0.5, 0.5],
        }
    }
}

impl GasPiston {
    /// Full chart values of the state-equation point over `(V, pi, S)`.
    /// Errors when the temperature `dU/dS` is not positive there.
    pub fn legendrian_point(&self, v: f64, pi: f64, s: f64) -> Result<Vec<f64>> {
        let mut b = Bindings::new();
        b.set("V", v);
        b.set("S", s);
        let temperature = self.u_s.eval(&b)?;
        if !(temperature > 0.0) {
            return Err(Error::Invalid(format!(
                "non-positive temperature dU/dS = {temperature:.3e} at V = {v}, S = {s}"
            )));
        }
        let u_val = self.params.internal_energy.eval(&b)?;
        let u_v_val = self.u_v.eval(&b)?;
        let m = self.params.mass;
        let p_e = 1.0 / temperature;
        Ok(vec![
            v,
            pi,
            pi * pi / (2.0 * m) + u_val,
            -p_e * u_v_val,
            -p_e * pi / m,
            p_e,
            s,
        ])
    }

    pub fn sample_legendrian(
        &self,
        count: usize,
        bounds: &LegendrianBox,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let v = rng.random_range(bounds.v[0]..bounds.v[1]);
                let pi = rng.random_range(bounds.pi[0]..bounds.pi[1]);
                let s = rng.random_range(bounds.s[0]..bounds.s[1]);
                self.legendrian_point(v, pi, s)
            })
            .collect()
    }
}

/// Residuals of the defining properties at state-equation points.
#[derive(Debug, Clone, Copy)]
pub struct LegendrianReport {
    /// Max `|h_a|` over the samples.
    pub max_h_internal: f64,
    /// Max `|h_c^a|` over the samples.
    pub max_h_control: f64,
    /// Min entropy production rate over the samples (second law: >= 0).
    pub min_entropy_rate: f64,
    /// Min temperature `dU/dS` over the samples.
    pub min_temperature: f64,
}

/// Evaluate `h_a`, each `h_c`, the entropy rate and the temperature at the
/// given state-equation points (the control value only enters the rate).
pub fn verify_on_legendrian(
    gp: &GasPiston,
    samples: &[Vec<f64>],
    control: f64,
) -> Result<LegendrianReport> {
    let sys = &gp.system;
    let names = sys.chart.names();
    let mut report = LegendrianReport {
        max_h_internal: 0.0,
        max_h_control: 0.0,
        min_entropy_rate: f64::INFINITY,
        min_temperature: f64::INFINITY,
    };
    for sample in samples {
        let mut point = Bindings::from_slices(&names, sample);
        report.max_h_internal = report
            .max_h_internal
            .max(sys.h_internal.eval(&point)?.abs());
        for hc in &sys.h_control {
            report.max_h_control = report.max_h_control.max(hc.eval(&point)?.abs());
        }
        point.set("u", control);
        report.min_entropy_rate = report.min_entropy_rate.min(sys.entropy_rate(&point)?);
        report.min_temperature = report.min_temperature.min(gp.u_s.eval(&point)?);
    }
    Ok(report)
}

/// Flow from a state-equation point with a prescribed control signal
/// (an expression over the chart names and `t`).
#[derive(Debug, Clone)]
pub struct FlowCheck {
    pub trajectory: Trajectory,
    /// Max state-equation residual over all samples.
    pub max_state_eq_residual: f64,
    /// Most negative single-step entropy change (>= -1e-12 when the second
    /// law holds).
    pub min_entropy_step: f64,
}

pub fn gas_piston_flow_check(
    gp: &GasPiston,
    start: (f64, f64, f64),
    control: &Expr,
    span: [f64; 2],
    cfg: &IntegratorConfig,
) -> Result<FlowCheck> {
    let sys = &gp.system;
    let y0 = gp.legendrian_point(start.0, start.1, start.2)?;
    let chart_names = sys.chart.names();
    for v in control.vars() {
        if v != "t" && !chart_names.iter().any(|n| n == v) {
            return Err(Error::UnboundVariable { name: v.clone() });
        }
    }
    let flow = ContactFlow::new(&sys.chart, &sys.h_total(), &sys.controls)?;
    let mut layout_names = chart_names.clone();
    layout_names.push("t".to_string());
    let control_bound = control.bind(&layout_names)?;
    let dim = sys.chart.dim();
    let mut vals = vec![0.0; dim + 1];
    let mut cvals = vec![0.0; dim + 1];
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        cvals[..dim].copy_from_slice(y);
        cvals[dim] = t;
        let u = control_bound.eval(&cvals)?;
        vals[..dim].copy_from_slice(y);
        vals[dim] = u;
        let r = flow.rhs(&vals)?;
        dy.copy_from_slice(&r);
        Ok(())
    };
    let traj = integrate::integrate_named(&chart_names, &mut rhs, &y0, span, cfg)?;

    let mut max_resid = 0.0f64;
    for s in &traj.samples {
        let point = Bindings::from_slices(&chart_names, s);
        for c in &sys.legendrian {
            max_resid = max_resid.max(c.eval(&point)?.abs());
        }
    }
    let s_slot = dim - 1;
    let mut min_step = f64::INFINITY;
    for w in traj.samples.windows(2) {
        min_step = min_step.min(w[1][s_slot] - w[0][s_slot]);
    }
    Ok(FlowCheck {
        trajectory: traj,
        max_state_eq_residual: max_resid,
        min_entropy_step: min_step,
    })
}

// ---- lifting a controlled contact system ------------------------------------

/// The contact system governing optimal steering of a controlled contact
/// system: state space = the base chart, `z`-role = the base `z`, momenta
/// `P_<name>`, Hamiltonian `P.X - F` where `(X, F)` are the components of
/// the base contact flow of `h_u`.
#[derive(Debug, Clone)]
pub struct ControlledContactLift {
    pub base_chart: ContactChart,
    pub controls: Vec<String>,
    pub lift_chart: ContactChart,
    /// `P.X - F` over the lift chart and controls.
    pub hamiltonian: Expr,
    /// Base state dynamics `X` (q-rates then p-rates), over base chart and
    /// controls.
    pub state_dynamics: Vec<Expr>,
    /// Base `z`-rate `F = p dh/dp - h`.
    pub z_rate: Expr,
    /// Stationarity conditions `dH/du^a` (independent of `u` when `h` is
    /// affine in the controls: such problems are singular).
    pub constraints: Vec<Expr>,
    /// Drift coefficient `dF/dz - P_j dX^j/dz` assembled from components.
    pub alpha: Expr,
}

/// Apply the lift to a control-parametrized contact Hamiltonian.
pub fn lift_contact_control(
    base: &ContactChart,
    h: &Expr,
    controls: &[String],
) -> Result<ControlledContactLift> {
    let n = base.n();
    let z = &base.z;
    // component dynamics of the base contact flow, symbolically
    let mut state_dynamics = Vec::with_capacity(2 * n);
    for p in &base.momenta {
        state_dynamics.push(h.diff(p));
    }
    let h_z = h.diff(z);
    for (q, p) in base.positions.iter().zip(&base.momenta) {
        state_dynamics.push(h.diff(q).neg().sub(Expr::var(p).mul(h_z.clone())));
    }
    // z-rate F = p dh/dp - h
    let mut z_rate = h.clone().neg();
    for p in &base.momenta {
        z_rate = z_rate.add(Expr::var(p).mul(h.diff(p)));
    }

    // lift chart: positions = all base phase names, momenta P_<name>
    let mut lift_positions = base.positions.clone();
    lift_positions.extend(base.momenta.iter().cloned());
    let lift_momenta: Vec<String> = lift_positions.iter().map(|x| format!("P_{x}")).collect();
    let lift_chart = ContactChart::new(lift_positions, lift_momenta.clone(), z.clone())?;

    // H = P.X - F
    let mut hamiltonian = z_rate.clone().neg();
    for (pm, x) in lift_momenta.iter().zip(&state_dynamics) {
        hamiltonian = hamiltonian.add(Expr::var(pm).mul(x.clone()));
    }
    let constraints = controls.iter().map(|u| hamiltonian.diff(u)).collect();

    // alpha = dF/dz - P_j dX^j/dz, assembled from the components
    let mut alpha = z_rate.diff(z);
    for (pm, x) in lift_momenta.iter().zip(&state_dynamics) {
        alpha = alpha.sub(Expr::var(pm).mul(x.diff(z)));
    }

    Ok(ControlledContactLift {
        base_chart: base.clone(),
        controls: controls.to_vec(),
        lift_chart,
        hamiltonian,
        state_dynamics,
        z_rate,
        constraints,
        alpha,
    })
}

/// The lift applied to the gas-piston system.
pub fn gas_piston_lift(gp: &GasPiston) -> Result<ControlledContactLift> {
    lift_contact_control(&gp.system.chart, &gp.system.h_total(), &gp.system.controls)
}

// ---- term audit of the lifted Hamiltonian -------------------------------------

/// Hand-transcribed closed form of the lifted gas-piston Hamiltonian used as
/// a cross-check target by the term audit. Its velocity coefficients are
/// paired with swapped momentum labels relative to the generated `P.X - F`
/// form, and its momentum-equation coefficients lack the drift part; the
/// audit aligns the labels and reports the remaining discrepancies.
pub fn gas_piston_lift_closed_form(params: &GasPistonParams) -> Expr {
    let m = params.mass;
    let d = params.damping;
    let u_v = params.internal_energy.diff("V");
    let u_s = params.internal_energy.diff("S");
    let u_vv = u_v.diff("V");
    let u_vs = u_v.diff("S");
    let pi = Expr::var("pi");
    let pi2 = pi.clone().mul(pi.clone());

    // -(d p_pi/m - p_E u/m - p_V/m + 2 pi d/(m^2 U_S)) P_pi
    let t1 = Expr::var("p_pi")
        .scale(d / m)
        .sub(Expr::var("p_E").mul(Expr::var("u")).scale(1.0 / m))
        .sub(Expr::var("p_V").scale(1.0 / m))
        .add(pi.clone().scale(2.0 * d / (m * m)).div(u_s.clone()))
        .neg()
        .mul(Expr::var("P_pi"));
    // -(p_pi U_VV - pi^2 d U_VS/(m^2 U_S^2)) P_V
    let t2 = Expr::var("p_pi")
        .mul(u_vv)
        .sub(
            pi2.clone()
                .scale(d / (m * m))
                .mul(u_vs)
                .div(u_s.clone().mul(u_s.clone())),
        )
        .neg()
        .mul(Expr::var("P_V"));
    // -(pi d/m - u + U_V) P_p_pi
    let t3 = pi
        .clone()
        .scale(d / m)
        .sub(Expr::var("u"))
        .add(u_v)
        .neg()
        .mul(Expr::var("P_p_pi"));
    // + pi P_p_E u/m + pi P_p_V/m
    let t4 = pi
        .clone()
        .mul(Expr::var("P_p_E"))
        .mul(Expr::var("u"))
        .scale(1.0 / m);
    let t5 = pi.clone().mul(Expr::var("P_p_V")).scale(1.0 / m);
    // - pi^2 d/(m^2 U_S)
    let t6 = pi2.scale(d / (m * m)).div(u_s).neg();

    t1.add(t2).add(t3).add(t4).add(t5).add(t6)
}

/// Comparison of one affine-in-momentum term of the two constructions.
#[derive(Debug, Clone)]
pub struct TermComparison {
    /// Momentum name, or "constant" for the momentum-free part.
    pub name: String,
    /// Max residual comparing like-named coefficients.
    pub literal_residual: f64,
    /// Max residual after swapping `P_x <-> P_p_x` labels in the closed form.
    pub aligned_residual: f64,
}

#[derive(Debug, Clone)]
pub struct TermAudit {
    pub terms: Vec<TermComparison>,
    /// Names of terms that disagree (> 1e-9) even after label alignment.
    pub discrepant: Vec<String>,
    /// Max residual over the aligned-and-matching terms.
    pub max_matched_residual: f64,
}

const TERM_TOL: f64 = 1e-9;

/// Compare the generated lifted Hamiltonian with the transcribed closed form
/// coefficient-by-coefficient (both are affine in the lift momenta) at
/// random base points.
pub fn gas_piston_lift_term_audit(gp: &GasPiston, n_points: usize, seed: u64) -> Result<TermAudit> {
    let lift = gas_piston_lift(gp)?;
    let reference = gas_piston_lift_closed_form(&gp.params);
    let momenta = lift.lift_chart.momenta.clone();
    let mut layout = lift.lift_chart.names();
    layout.extend(lift.controls.iter().cloned());
    let generated = lift.hamiltonian.bind(&layout)?;
    let reference = reference.bind(&layout)?;

    let momentum_slots: Vec<usize> = momenta
        .iter()
        .map(|m| layout.iter().position(|n| n == m).expect("chart name"))
        .collect();
    // label alignment: P_q <-> P_p_q
    let aligned_index: Vec<usize> = momenta
        .iter()
        .map(|m| {
            let target = if let Some(base) = m.strip_prefix("P_p_") {
                format!("P_{base}")
            } else {
                format!("P_p_{}", m.strip_prefix("P_").expect("momentum prefix"))
            };
            momenta.iter().position(|n| n == &target).expect("pair")
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut literal = vec![0.0f64; momenta.len() + 1];
    let mut aligned = vec![0.0f64; momenta.len() + 1];
    let bounds = LegendrianBox::default();
    for _ in 0..n_points {
        // base phase point near the physical region plus a random control
        let v = rng.random_range(bounds.v[0]..bounds.v[1]);
        let pi = rng.random_range(bounds.pi[0]..bounds.pi[1]);
        let s = rng.random_range(bounds.s[0]..bounds.s[1]);
        let base = gp.legendrian_point(v, pi, s)?;
        let mut vals = vec![0.0; layout.len()];
        // positions of the lift = base phase variables; perturb off the
        // state equations so the comparison is not special to them
        for i in 0..6 {
            vals[i] = base[i] + rng.random_range(-0.3..0.3);
        }
        let z_slot = layout.iter().position(|n| n == "S").expect("S");
        vals[z_slot] = s;
        let u_slot = layout.iter().position(|n| n == "u").expect("u");
        vals[u_slot] = rng.random_range(-1.0..1.0);

        // affine coefficient extraction: constant at P = 0, coefficients by
        // unit momentum seeds
        for slot in &momentum_slots {
            vals[*slot] = 0.0;
        }
        let const_gen = generated.eval(&vals)?;
        let const_ref = reference.eval(&vals)?;
        literal[momenta.len()] = literal[momenta.len()].max((const_gen - const_ref).abs());
        aligned[momenta.len()] = aligned[momenta.len()].max((const_gen - const_ref).abs());

        let mut gen_coeffs = vec![0.0; momenta.len()];
        let mut ref_coeffs = vec![0.0; momenta.len()];
        for (j, slot) in momentum_slots.iter().enumerate() {
            vals[*slot] = 1.0;
            gen_coeffs[j] = generated.eval(&vals)? - const_gen;
            ref_coeffs[j] = reference.eval(&vals)? - const_ref;
            vals[*slot] = 0.0;
        }
        for j in 0..momenta.len() {
            literal[j] = literal[j].max((gen_coeffs[j] - ref_coeffs[j]).abs());
            aligned[j] = aligned[j].max((gen_coeffs[j] - ref_coeffs[aligned_index[j]]).abs());
        }
    }

    let mut terms = Vec::new();
    let mut discrepant = Vec::new();
    let mut max_matched = 0.0f64;
    for j in 0..=momenta.len() {
        let name = if j == momenta.len() {
            "constant".to_string()
        } else {
            momenta[j].clone()
        };
        if aligned[j] <= TERM_TOL {
            max_matched = max_matched.max(aligned[j]);
        } else {
            discrepant.push(name.clone());
        }
        terms.push(TermComparison {
            name,
            literal_residual: literal[j],
            aligned_residual: aligned[j],
        });
    }
    Ok(TermAudit {
        terms,
        discrepant,
        max_matched_residual: max_matched,
    })
}

/// Max residual of the drift coefficient of the lifted system against the
/// assembled component form, and of the `P = 0` reduction identity
/// `H = h_u - p dh/dp`, at random points.
pub fn gas_piston_lift_identity_checks(
    gp: &GasPiston,
    n_points: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let lift = gas_piston_lift(gp)?;
    let mut layout = lift.lift_chart.names();
    layout.extend(lift.controls.iter().cloned());
    let h_bound = lift.hamiltonian.bind(&layout)?;
    let alpha_bound = lift.alpha.bind(&layout)?;
    let z_slot = layout.iter().position(|n| n == "S").expect("S");
    let momentum_slots: Vec<usize> = lift
        .lift_chart
        .momenta
        .iter()
        .map(|m| layout.iter().position(|n| n == m).expect("name"))
        .collect();

    // the base Hamiltonian and its momentum derivatives for the P = 0 check
    let base_names = gp.system.chart.names();
    let h_base = gp.system.h_total();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = LegendrianBox::default();
    let mut alpha_worst = 0.0f64;
    let mut reduce_worst = 0.0f64;
    for _ in 0..n_points {
        let v = rng.random_range(bounds.v[0]..bounds.v[1]);
        let pi = rng.random_range(bounds.pi[0]..bounds.pi[1]);
        let s = rng.random_range(bounds.s[0]..bounds.s[1]);
        let base = gp.legendrian_point(v, pi, s)?;
        let mut vals = vec![0.0; layout.len()];
        for i in 0..6 {
            vals[i] = base[i] + rng.random_range(-0.3..0.3);
        }
        vals[z_slot] = s;
        *vals.last_mut().expect("control slot") = rng.random_range(-1.0..1.0);
        for slot in &momentum_slots {
            vals[*slot] = rng.random_range(-1.0..1.0);
        }

        // alpha from the assembled components vs -dH/dz of the built H
        let alpha_assembled = alpha_bound.eval(&vals)?;
        let jet = h_bound.eval_jet_slots(&vals, &[z_slot], 1)?;
        alpha_worst = alpha_worst.max((alpha_assembled + jet.grad[0]).abs());

        // P = 0: H = h_u - p dh/dp (equivalently -F)
        for slot in &momentum_slots {
            vals[*slot] = 0.0;
        }
        let h_at_zero = h_bound.eval(&vals)?;
        let mut point = Bindings::new();
        for name in &base_names {
            let slot = layout.iter().position(|n| n == name).expect("base name");
            point.set(name, vals[slot]);
        }
        point.set("u", *vals.last().expect("control"));
        let wrt: Vec<&str> = gp.system.chart.momenta.iter().map(String::as_str).collect();
        let base_jet = h_base.eval_jet(&point, &wrt, 1)?;
        let mut expectation = base_jet.value;
        for (i, p_name) in gp.system.chart.momenta.iter().enumerate() {
            expectation -= point.get(p_name).expect("bound") * base_jet.grad[i];
        }
        reduce_worst = reduce_worst.max((h_at_zero - expectation).abs());
    }
    Ok((alpha_worst, reduce_worst))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(pairs: &[(&str, f64)]) -> Bindings {
        Bindings::from_pairs(pairs.iter().map(|&(n, v)| (n, v)))
    }

    fn one_dof_chart() -> HomogeneousChart {
        HomogeneousChart {
            positions: vec!["q".into()],
            z: "z".into(),
            momenta: vec!["P".into()],
            pz: "Pz".into(),
        }
    }

    #[test]
    fn momentum_hamiltonian_descends_to_the_fiber_coordinate() {
        let chart = one_dof_chart();
        let h_big = Expr::parse("P").unwrap();
        let deh = dehomogenize(
            &chart,
            &h_big,
            &point(&[("q", 0.4), ("z", 1.0), ("P", 2.0), ("Pz", -1.0)]),
        )
        .unwrap();
        // h(q, p, z) = H(q, z, p, -1) = p; image point p = -P/Pz = 2
        assert_eq!(deh.h.to_string(), "p_q");
        assert_eq!(deh.contact_point, vec![0.4, 2.0, 1.0]);
        assert_eq!(deh.value, 2.0);
        // identity: h at the image equals -H/Pz
        assert_eq!(deh.value, -2.0 / -1.0);
    }

    #[test]
    fn pz_hamiltonian_descends_to_a_constant() {
        let chart = one_dof_chart();
        let h_big = Expr::parse("Pz").unwrap();
        let deh = dehomogenize(
            &chart,
            &h_big,
            &point(&[("q", 0.0), ("z", 0.0), ("P", 1.0), ("Pz", 0.5)]),
        )
        .unwrap();
        assert_eq!(deh.value, -1.0);
    }

    #[test]
    fn scaling_check_accepts_linear_and_rejects_affine() {
        let chart = one_dof_chart();
        let ok = Expr::parse("q*P + 2*Pz").unwrap();
        assert!(dehomogenize(
            &chart,
            &ok,
            &point(&[("q", 1.0), ("z", 0.0), ("P", 0.7), ("Pz", -0.4)]),
        )
        .is_ok());
        let bad = Expr::parse("P + 1").unwrap();
        assert!(matches!(
            dehomogenize(
                &chart,
                &bad,
                &point(&[("q", 1.0), ("z", 0.0), ("P", 0.7), ("Pz", -0.4)]),
            ),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn near_zero_pz_is_rejected() {
        let chart = one_dof_chart();
        let h_big = Expr::parse("P").unwrap();
        assert!(dehomogenize(
            &chart,
            &h_big,
            &point(&[("q", 0.0), ("z", 0.0), ("P", 1.0), ("Pz", 1e-13)]),
        )
        .is_err());
    }

    #[test]
    fn symplectic_flows_project_onto_contact_flows() {
        let chart = one_dof_chart();
        let battery = [
            "P",
            "Pz",
            "q*Pz",
            "sin(q)*P + cos(q)*Pz",
            "z*P - q*Pz",
            "P^3/(P^2 + Pz^2)",
        ];
        for src in battery {
            let h_big = Expr::parse(src).unwrap();
            for (p, pz) in [(2.0, -1.0), (0.7, 0.9), (-1.3, 0.4)] {
                let residual = homogeneous_flow_projects(
                    &chart,
                    &h_big,
                    &point(&[("q", 0.6), ("z", -0.2), ("P", p), ("Pz", pz)]),
                )
                .unwrap();
                assert!(
                    residual <= 1e-9,
                    "{src} at ({p}, {pz}): residual {residual}"
                );
            }
        }
    }

    #[test]
    fn gas_piston_hamiltonian_vanishes_on_the_state_equations() {
        let gp = gas_piston_system(GasPistonParams::default()).unwrap();
        let samples = gp
            .sample_legendrian(50, &LegendrianBox::default(), 7)
            .unwrap();
        let report = verify_on_legendrian(&gp, &samples, 0.3).unwrap();
        assert!(report.max_h_internal <= 1e-10, "{report:?}");
        assert!(report.max_h_control <= 1e-10, "{report:?}");
        assert!(report.min_temperature > 0.0);
    }

    #[test]
    fn entropy_rate_is_nonnegative_and_has_the_closed_form() {
        let gp = gas_piston_system(GasPistonParams::default()).unwrap();
        let m = gp.params.mass;
        let d = gp.params.damping;
        let samples = gp
            .sample_legendrian(25, &LegendrianBox::default(), 8)
            .unwrap();
        let names = gp.system.chart.names();
        for sample in &samples {
            let mut b = Bindings::from_slices(&names, sample);
            b.set("u", -0.4);
            let rate = gp.system.entropy_rate(&b).unwrap();
            let temperature = gp.u_s.eval(&b).unwrap();
            let pi = sample[1];
            let expected = d * pi * pi / (m * m * temperature);
            assert!((rate - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
            assert!(rate >= 0.0);
        }
    }

    #[test]
    fn undamped_piston_produces_no_entropy() {
        let params = GasPistonParams {
            damping: 0.0,
            ..Default::default()
        };
        let gp = gas_piston_system(params).unwrap();
        let samples = gp
            .sample_legendrian(10, &LegendrianBox::default(), 9)
            .unwrap();
        let report = verify_on_legendrian(&gp, &samples, 0.9).unwrap();
        assert!(report.min_entropy_rate.abs() <= 1e-12);
    }

    #[test]
    fn flow_stays_on_the_state_equations_with_entropy_nondecreasing() {
        let gp = gas_piston_system(GasPistonParams::default()).unwrap();
        let control = Expr::parse("0.2*sin(t)").unwrap();
        let check = gas_piston_flow_check(
            &gp,
            (1.0, 0.4, 0.0),
            &control,
            [0.0, 1.0],
            &IntegratorConfig::rk4(1e-3),
        )
        .unwrap();
        assert!(check.max_state_eq_residual <= 1e-6, "{check:?}");
        assert!(check.min_entropy_step >= -1e-12, "{check:?}");
    }

    #[test]
    fn lifted_hamiltonian_identities() {
        let gp = gas_piston_system(GasPistonParams::default()).unwrap();
        let (alpha_resid, reduce_resid) = gas_piston_lift_identity_checks(&gp, 50, 13).unwrap();
        assert!(alpha_resid <= 1e-9, "alpha residual {alpha_resid}");
        assert!(reduce_resid <= 1e-12, "P = 0 residual {reduce_resid}");
    }

    #[test]
    fn lift_term_audit_matches_velocity_terms_and_reports_the_rest() {
        let gp = gas_piston_system(GasPistonParams::default()).unwrap();
        let audit = gas_piston_lift_term_audit(&gp, 50, 21).unwrap();
        assert!(audit.max_matched_residual <= 1e-9);
        let matched: Vec<&str> = audit
            .terms
            .iter()
            .filter(|t| t.aligned_residual <= 1e-9)
            .map(|t| t.name.as_str())
            .collect();
        for name in ["constant", "P_V", "P_pi", "P_E"] {
            assert!(matched.contains(&name), "{name} should match: {audit:?}");
        }
        // the transcription's momentum-equation coefficients lack the drift
        // part and flip a sign; they must be reported, not silently passed
        for name in ["P_p_V", "P_p_pi", "P_p_E"] {
            assert!(
                audit.discrepant.iter().any(|d| d == name),
                "{name} should be reported discrepant: {audit:?}"
            );
        }
    }

    #[test]
    fn lift_constraint_is_control_free_hence_singular() {
        let gp = gas_piston_system(GasPistonParams::default()).unwrap();
        let lift = gas_piston_lift(&gp).unwrap();
        assert_eq!(lift.constraints.len(), 1);
        // the Hamiltonian is affine in u, so dH/du does not involve u
        assert!(!lift.constraints[0].references("u"));
    }

    #[test]
    fn lift_agrees_with_the_generic_reduction_machinery() {
        use crate::herglotz_ocp::{reduce, HerglotzOcpProblem};
        use crate::ocp::Sense;
        let gp = gas_piston_system(GasPistonParams::default()).unwrap();
        let lift = gas_piston_lift(&gp).unwrap();

        // same construction through the generic reduction, with S renamed to
        // the generic z and the lift momenta renamed to p1..p6
        let states: Vec<String> = lift.lift_chart.positions.clone();
        let dynamics: Vec<Expr> = lift
            .state_dynamics
            .iter()
            .map(|e| e.rename("S", "z"))
            .collect();
        let cost = lift.z_rate.rename("S", "z");
        let problem = HerglotzOcpProblem {
            states: states.clone(),
            controls: vec!["u".into()],
            dynamics,
            cost,
            interval: [0.0, 1.0],
            x_start: vec![0.0; 6],
            x_end: vec![0.0; 6],
            z_start: 0.0,
            sense: Sense::Minimize,
        };
        let reduced = reduce(problem, -1.0).unwrap();

        let mut lift_layout = lift.lift_chart.names();
        lift_layout.push("u".to_string());
        let lift_bound = lift.hamiltonian.bind(&lift_layout).unwrap();
        let red_layout = reduced.layout().to_vec();

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..25 {
            let base = gp
                .legendrian_point(
                    rng.random_range(0.6..1.8),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.4..0.4),
                )
                .unwrap();
            let mut lift_vals = vec![0.0; lift_layout.len()];
            for i in 0..6 {
                lift_vals[i] = base[i] + rng.random_range(-0.2..0.2);
            }
            for j in 6..12 {
                lift_vals[j] = rng.random_range(-1.0..1.0);
            }
            lift_vals[12] = base[6];
            lift_vals[13] = rng.random_range(-1.0..1.0);

            // reduced layout: states, p1..p6, z, u
            let mut red_vals = vec![0.0; red_layout.len()];
            red_vals[..6].copy_from_slice(&lift_vals[..6]);
            red_vals[6..12].copy_from_slice(&lift_vals[6..12]);
            red_vals[12] = lift_vals[12];
            red_vals[13] = lift_vals[13];

            let a = lift_bound.eval(&lift_vals).unwrap();
            let b = reduced.h0_value(&red_vals).unwrap();
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}
