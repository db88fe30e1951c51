//! Contact and precontact Hamiltonian structures in Darboux coordinates.
//!
//! Everything here is chart-based: a contact chart is an ordered list of
//! position names `q^1..q^n`, momentum names `p_1..p_n` and a distinguished
//! `z` coordinate, carrying the one-form `eta = dz - p_i dq^i` with Reeb
//! field `d/dz`. The Hamiltonian vector field of `H` has components
//!
//! ```text
//!   dq^i/dt =  dH/dp_i
//!   dp_i/dt = -dH/dq^i - p_i dH/dz
//!   dz/dt   =  p_i dH/dp_i - H
//! ```
//!
//! which is the single master formula reused by every flow-producing module
//! in the crate. Along it, `eta(X_H) = -H` and `L_X eta = -(dH/dz) eta`,
//! so `dH/dt = -H dH/dz`: energy decays at rate `dH/dz`.

use crate::error::{Error, Result};
use crate::expr::{Bindings, BoundExpr, Expr, JetValue};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Ordered Darboux chart: positions, conjugate momenta, and the `z` name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactChart {
    pub positions: Vec<String>,
    pub momenta: Vec<String>,
    pub z: String,
}

impl ContactChart {
    pub fn new(positions: Vec<String>, momenta: Vec<String>, z: impl Into<String>) -> Result<Self> {
        let chart = ContactChart {
            positions,
            momenta,
            z: z.into(),
        };
        if chart.positions.len() != chart.momenta.len() {
            return Err(Error::Dimension(format!(
                "chart has {} positions but {} momenta",
                chart.positions.len(),
                chart.momenta.len()
            )));
        }
        let names = chart.names();
        ensure_distinct(&names)?;
        Ok(chart)
    }

    /// The standard chart `q1..qn, p1..pn, z`.
    pub fn darboux(n: usize) -> Self {
        ContactChart {
            positions: (1..=n).map(|i| format!("q{i}")).collect(),
            momenta: (1..=n).map(|i| format!("p{i}")).collect(),
            z: "z".to_string(),
        }
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.n() + 1
    }

    /// Chart names in canonical order: positions, momenta, z.
    pub fn names(&self) -> Vec<String> {
        let mut names = self.positions.clone();
        names.extend(self.momenta.iter().cloned());
        names.push(self.z.clone());
        names
    }
}

pub(crate) fn ensure_distinct(names: &[String]) -> Result<()> {
    for (i, a) in names.iter().enumerate() {
        if names[i + 1..].iter().any(|b| b == a) {
            return Err(Error::NameCollision(format!("duplicate name `{a}`")));
        }
    }
    Ok(())
}

/// A contact Hamiltonian system `(chart, H)` in Darboux coordinates.
#[derive(Debug, Clone)]
pub struct ContactSystem {
    pub chart: ContactChart,
    pub hamiltonian: Expr,
}

impl ContactSystem {
    /// Build and validate: `H` may only reference chart names.
    pub fn new(chart: ContactChart, hamiltonian: Expr) -> Result<Self> {
        let names = chart.names();
        for v in hamiltonian.vars() {
            if !names.iter().any(|n| n == v) {
                return Err(Error::UnboundVariable { name: v.clone() });
            }
        }
        Ok(ContactSystem { chart, hamiltonian })
    }

    pub fn n(&self) -> usize {
        self.chart.n()
    }

    /// The Hamiltonian vector field at a point binding the full chart.
    pub fn vector_field(&self, point: &Bindings) -> Result<Vec<f64>> {
        let flow = ContactFlow::new(&self.chart, &self.hamiltonian, &[])?;
        let vals = values_for(&flow.layout, point)?;
        flow.rhs(&vals)
    }

    /// The Reeb vector field: constant `d/dz` in any Darboux chart.
    pub fn reeb(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.chart.dim()];
        *r.last_mut().expect("non-empty chart") = 1.0;
        r
    }
}

pub(crate) fn values_for(layout: &[String], point: &Bindings) -> Result<Vec<f64>> {
    layout
        .iter()
        .map(|name| {
            point
                .get(name)
                .ok_or_else(|| Error::UnboundVariable { name: name.clone() })
        })
        .collect()
}

/// Reusable evaluator for the contact Hamiltonian vector field of `h` on a
/// chart, optionally with extra parameter names (controls) appended to the
/// evaluation layout. Parameters are held fixed by the formula: on stationary
/// controls this is exactly the flow after control elimination.
#[derive(Debug, Clone)]
pub struct ContactFlow {
    n: usize,
    h: BoundExpr,
    layout: Vec<String>,
}

impl ContactFlow {
    pub fn new(chart: &ContactChart, h: &Expr, params: &[String]) -> Result<Self> {
        let mut layout = chart.names();
        layout.extend(params.iter().cloned());
        ensure_distinct(&layout)?;
        let h = h.bind(&layout)?;
        Ok(ContactFlow {
            n: chart.n(),
            h,
            layout,
        })
    }

    pub fn layout(&self) -> &[String] {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn hamiltonian_value(&self, vals: &[f64]) -> Result<f64> {
        self.h.eval(vals)
    }

    /// Chart components `(dq, dp, dz)` of the flow; `vals` follows the layout.
    pub fn rhs(&self, vals: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(vals, &mut out)?;
        Ok(out)
    }

    pub fn rhs_into(&self, vals: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        let chart_slots: Vec<usize> = (0..2 * n + 1).collect();
        let jet = self.h.eval_jet_slots(vals, &chart_slots, 1)?;
        let (h_q, rest) = jet.grad.split_at(n);
        let (h_p, h_z) = rest.split_at(n);
        let h_z = h_z[0];
        let mut z_dot = -jet.value;
        for i in 0..n {
            let p_i = vals[n + i];
            out[i] = h_p[i];
            out[n + i] = -h_q[i] - p_i * h_z;
            z_dot += p_i * h_p[i];
        }
        out[2 * n] = z_dot;
        Ok(())
    }
}

/// Residuals of the defining identities of the Hamiltonian vector field at a
/// point: `|eta(X_H) + H|` and the max-norm of `L_{X_H} eta + R(H) eta` as a
/// covector, both assembled from exact second derivatives of `H` rather than
/// from the identities themselves.
pub fn check_contact_identities(sys: &ContactSystem, point: &Bindings) -> Result<(f64, f64)> {
    let n = sys.n();
    let dim = sys.chart.dim();
    let names = sys.chart.names();
    let layout_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let jet: JetValue = sys.hamiltonian.eval_jet(point, &layout_refs, 2)?;
    let hess = jet.hess.as_ref().expect("order-2 jet");
    let vals = values_for(&names, point)?;

    // field components from the gradient
    let mut x = vec![0.0; dim];
    let h_z = jet.grad[2 * n];
    let mut z_dot = -jet.value;
    for i in 0..n {
        let p_i = vals[n + i];
        x[i] = jet.grad[n + i];
        x[n + i] = -jet.grad[i] - p_i * h_z;
        z_dot += p_i * jet.grad[n + i];
    }
    x[2 * n] = z_dot;

    // eta(X) + H with eta = dz - p_i dq^i
    let mut eta_x = x[2 * n];
    for i in 0..n {
        eta_x -= vals[n + i] * x[i];
    }
    let residual_eta = (eta_x + jet.value).abs();

    // L_X eta = i_X d(eta) + d(eta(X)), assembled component-wise:
    //   d(eta) = dq^i ^ dp_i, so i_X d(eta) = X_q^i dp_i - X_p^i dq^i
    //   d(eta(X))_w = sum_i [ d(p_i X_q^i)/dw ] ... with X_q^i = dH/dp_i and
    //   eta(X) = p_i dH/dp_i - H, everything reduces to Hessian entries.
    let mut lie = vec![0.0; dim];
    for w in 0..dim {
        // d/dw of X_z = sum_i p_i H_{p_i} - H
        let mut d_xz = -jet.grad[w];
        for i in 0..n {
            d_xz += vals[n + i] * hess[(n + i, w)];
            if w == n + i {
                d_xz += jet.grad[n + i];
            }
        }
        // d/dw of sum_i p_i X_q^i with X_q^i = H_{p_i}
        let mut d_pxq = 0.0;
        for i in 0..n {
            d_pxq += vals[n + i] * hess[(n + i, w)];
            if w == n + i {
                d_pxq += x[i];
            }
        }
        let grad_f = d_xz - d_pxq;
        let ixd = if w < n {
            -x[n + w] // -X_p^w on dq^w
        } else if w < 2 * n {
            x[w - n] // +X_q^i on dp_i
        } else {
            0.0
        };
        let eta_coeff = if w < n {
            -vals[n + w]
        } else if w < 2 * n {
            0.0
        } else {
            1.0
        };
        lie[w] = ixd + grad_f + h_z * eta_coeff;
    }
    let residual_lie = lie.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    Ok((residual_eta, residual_lie))
}

// ---- one-form classification -------------------------------------------

/// Result of classifying a one-form at a point: the largest odd class
/// `2r + 1` with `eta ^ (d eta)^r != 0`, plus the rank of `d eta` which
/// disambiguates degenerate cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneFormClass {
    pub class: usize,
    pub rank_d_eta: usize,
}

const WEDGE_EPS: f64 = 1e-10;

/// Classify a one-form `a_i dx^i` (coefficients as expressions over `chart`)
/// at a point, by explicit evaluation of the wedge powers. The chart
/// dimension is capped at 7; the expansion grows factorially beyond that.
pub fn classify_one_form(
    coeffs: &[Expr],
    chart: &[String],
    point: &Bindings,
) -> Result<OneFormClass> {
    let dim = chart.len();
    if coeffs.len() != dim {
        return Err(Error::Dimension(format!(
            "{} coefficients for a chart of dimension {dim}",
            coeffs.len()
        )));
    }
    if dim > 7 {
        return Err(Error::Dimension(format!(
            "one-form classification supports dimension <= 7, got {dim}"
        )));
    }
    let chart_refs: Vec<&str> = chart.iter().map(String::as_str).collect();

    // eta as a 1-form and d(eta) as a 2-form, from exact derivatives
    let mut eta: Form = HashMap::new();
    let mut jac = vec![vec![0.0; dim]; dim]; // jac[i][j] = d a_j / d x_i
    for (j, coeff) in coeffs.iter().enumerate() {
        let jet = coeff.eval_jet(point, &chart_refs, 1)?;
        if jet.value != 0.0 {
            eta.insert(vec![j as u8], jet.value);
        }
        for i in 0..dim {
            jac[i][j] = jet.grad[i];
        }
    }
    let mut d_eta: Form = HashMap::new();
    let mut d_eta_matrix = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let c = jac[i][j] - jac[j][i];
            d_eta_matrix[(i, j)] = c;
            d_eta_matrix[(j, i)] = -c;
            if c != 0.0 {
                d_eta.insert(vec![i as u8, j as u8], c);
            }
        }
    }

    let svd = d_eta_matrix.svd(false, false);
    let smax = svd.singular_values.max();
    let rank_d_eta = if smax <= WEDGE_EPS {
        0
    } else {
        svd.singular_values
            .iter()
            .filter(|&&s| s > WEDGE_EPS * smax.max(1.0))
            .count()
    };

    // largest r with eta ^ (d eta)^r nonzero
    let mut best: Option<usize> = None;
    let mut current = eta.clone();
    let mut r = 0;
    loop {
        if max_coeff(&current) > WEDGE_EPS {
            best = Some(r);
        }
        r += 1;
        if 2 * r + 1 > dim {
            break;
        }
        current = wedge(&current, &d_eta);
        if current.is_empty() {
            break;
        }
    }
    let class = match best {
        Some(r) => 2 * r + 1,
        // eta itself vanishes at the point; class 0 is the honest answer
        None => 0,
    };
    Ok(OneFormClass { class, rank_d_eta })
}

type Form = HashMap<Vec<u8>, f64>;

fn max_coeff(form: &Form) -> f64 {
    form.values().fold(0.0f64, |m, &v| m.max(v.abs()))
}

fn wedge(a: &Form, b: &Form) -> Form {
    let mut out: Form = HashMap::new();
    for (ka, ca) in a {
        for (kb, cb) in b {
            if ka.iter().any(|i| kb.contains(i)) {
                continue;
            }
            let (key, sign) = merge_sorted(ka, kb);
            *out.entry(key).or_insert(0.0) += sign * ca * cb;
        }
    }
    out.retain(|_, v| *v != 0.0);
    out
}

/// Merge two strictly increasing index lists, returning the sorted merge and
/// the sign of the permutation that sorts the concatenation.
fn merge_sorted(a: &[u8], b: &[u8]) -> (Vec<u8>, f64) {
    let mut key = Vec::with_capacity(a.len() + b.len());
    let mut sign = 1.0;
    let mut i = 0;
    let mut j = 0;
    while i < a.len() || j < b.len() {
        let take_a = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x < y,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        if take_a {
            key.push(a[i]);
            i += 1;
        } else {
            // b[j] jumps over the remaining (a.len() - i) elements of a
            if (a.len() - i) % 2 == 1 {
                sign = -sign;
            }
            key.push(b[j]);
            j += 1;
        }
    }
    (key, sign)
}

/// The Darboux contact form `dz - p_i dq^i` as coefficient expressions over
/// the chart, for classification and pullback tests.
pub fn darboux_form_coeffs(chart: &ContactChart) -> Vec<Expr> {
    let n = chart.n();
    let mut coeffs = Vec::with_capacity(chart.dim());
    for i in 0..n {
        coeffs.push(Expr::var(&chart.momenta[i]).neg());
    }
    for _ in 0..n {
        coeffs.push(Expr::num(0.0));
    }
    coeffs.push(Expr::num(1.0));
    coeffs
}

// ---- symplectic flows (verification side) --------------------------------

/// Canonical symplectic Hamiltonian vector field on a chart of conjugate
/// pairs `(x^i, p_i)`: `dx = dH/dp, dp = -dH/dx`. Used by the homogeneous /
/// cotangent-lift verification paths.
pub fn symplectic_vf(
    positions: &[String],
    momenta: &[String],
    hamiltonian: &Expr,
    point: &Bindings,
) -> Result<Vec<f64>> {
    if positions.len() != momenta.len() {
        return Err(Error::Dimension(
            "symplectic chart needs equal position and momentum counts".into(),
        ));
    }
    let m = positions.len();
    let mut layout = positions.to_vec();
    layout.extend(momenta.iter().cloned());
    let wrt: Vec<&str> = layout.iter().map(String::as_str).collect();
    let jet = hamiltonian.eval_jet(point, &wrt, 1)?;
    let mut out = vec![0.0; 2 * m];
    for i in 0..m {
        out[i] = jet.grad[m + i];
        out[m + i] = -jet.grad[i];
    }
    Ok(out)
}

// ---- presymplectic control systems ---------------------------------------

/// A presymplectic system whose kernel directions are exactly the control
/// directions: a symplectic base chart of conjugate pairs plus free controls.
#[derive(Debug, Clone)]
pub struct PresymplecticControlSystem {
    pub positions: Vec<String>,
    pub momenta: Vec<String>,
    pub controls: Vec<String>,
    pub hamiltonian: Expr,
}

impl PresymplecticControlSystem {
    pub fn new(
        positions: Vec<String>,
        momenta: Vec<String>,
        controls: Vec<String>,
        hamiltonian: Expr,
    ) -> Result<Self> {
        if positions.len() != momenta.len() {
            return Err(Error::Dimension(
                "presymplectic base needs equal position and momentum counts".into(),
            ));
        }
        let sys = PresymplecticControlSystem {
            positions,
            momenta,
            controls,
            hamiltonian,
        };
        let names = sys.names();
        ensure_distinct(&names)?;
        for v in sys.hamiltonian.vars() {
            if !names.iter().any(|n| n == v) {
                return Err(Error::UnboundVariable { name: v.clone() });
            }
        }
        Ok(sys)
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = self.positions.clone();
        names.extend(self.momenta.iter().cloned());
        names.extend(self.controls.iter().cloned());
        names
    }
}

/// One constraint produced by the algorithm, with the coefficients that
/// multiply the free control rates in its time derivative (the
/// "control-solvable" block).
#[derive(Debug, Clone)]
pub struct Constraint {
    pub expr: Expr,
    pub provenance: String,
    pub control_coeffs: Vec<Expr>,
}

#[derive(Debug, Clone)]
pub struct ConstraintLevel {
    pub level: usize,
    pub constraints: Vec<Constraint>,
    /// True when the free control rates can absorb this level's tangency
    /// conditions at the probe points (full-rank control block).
    pub control_solvable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureReason {
    /// The new level added no functionally independent constraint.
    RankStable,
    /// The new level's conditions determine control rates instead of
    /// cutting the manifold.
    ControlSolvable,
}

/// Ordered constraint levels with closure bookkeeping.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub levels: Vec<ConstraintLevel>,
    pub closed_at: Option<usize>,
    pub reason: Option<ClosureReason>,
    /// Set when `depth` was exhausted without closure (reported, not fatal).
    pub depth_exceeded: bool,
}

impl ConstraintSet {
    /// True when level 0 carries no content (all constraints identically 0).
    pub fn level0_empty_of_content(&self) -> bool {
        self.closed_at == Some(0)
    }
}

const PROBE_SAMPLES: usize = 48;
const PROBE_HALF_WIDTH: f64 = 1.5;
const PROBE_SEED: u64 = 0x5EED;
const RANK_EPS: f64 = 1e-10;

/// Run the compatibility/constraint algorithm to the requested depth.
///
/// Level 0 holds the stationarity conditions `dH/du^a`; level `r+1` holds the
/// derivatives of level `r` along the symplectic Hamiltonian field of `H`
/// over the base pairs, with the control directions excluded and their
/// coefficients collected into the control-solvable block. Closure is
/// detected by rank stabilization of the constraint values at probe points
/// (threshold 1e-10), or when a level is fully absorbable by control rates.
pub fn compatibility_constraints(
    sys: &PresymplecticControlSystem,
    depth: usize,
) -> Result<ConstraintSet> {
    if depth < 1 {
        return Err(Error::Config("constraint depth must be at least 1".into()));
    }
    let names = sys.names();
    let samples = probe_points(&names)?;

    let mut set = ConstraintSet {
        levels: Vec::new(),
        closed_at: None,
        reason: None,
        depth_exceeded: false,
    };

    // level 0: dH/du^a
    let mut current: Vec<Constraint> = sys
        .controls
        .iter()
        .map(|u| Constraint {
            expr: sys.hamiltonian.diff(u),
            provenance: format!("dH/d{u}"),
            control_coeffs: Vec::new(),
        })
        .collect();

    let mut all_rows: Vec<Vec<f64>> = Vec::new();
    let mut prev_rank = 0usize;

    for level in 0..=depth {
        let solvable = control_block_solvable(&current, sys, &samples)?;
        set.levels.push(ConstraintLevel {
            level,
            constraints: current.clone(),
            control_solvable: solvable,
        });

        for c in &current {
            all_rows.push(eval_rows(&c.expr, &names, &samples)?);
        }
        let rank = function_rank(&all_rows);
        if rank == prev_rank {
            set.closed_at = Some(level);
            set.reason = Some(ClosureReason::RankStable);
            return Ok(set);
        }
        if solvable && level >= 1 {
            set.closed_at = Some(level);
            set.reason = Some(ClosureReason::ControlSolvable);
            return Ok(set);
        }
        prev_rank = rank;
        if level == depth {
            break;
        }
        current = current
            .iter()
            .map(|c| derive_along_flow(c, sys))
            .collect::<Result<Vec<_>>>()?;
    }
    set.depth_exceeded = true;
    Ok(set)
}

fn derive_along_flow(c: &Constraint, sys: &PresymplecticControlSystem) -> Result<Constraint> {
    // Poisson bracket {phi, H} over the base pairs; controls excluded.
    let mut terms = Vec::new();
    for (x, p) in sys.positions.iter().zip(&sys.momenta) {
        let phi_x = c.expr.diff(x);
        let phi_p = c.expr.diff(p);
        let h_p = sys.hamiltonian.diff(p);
        let h_x = sys.hamiltonian.diff(x);
        terms.push(phi_x.mul(h_p));
        terms.push(phi_p.mul(h_x).neg());
    }
    let expr = Expr::sum(terms);
    let control_coeffs = sys.controls.iter().map(|u| c.expr.diff(u)).collect();
    Ok(Constraint {
        expr,
        provenance: format!("D_t[{}]", c.provenance),
        control_coeffs,
    })
}

fn probe_points(names: &[String]) -> Result<Vec<Bindings>> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut out = Vec::with_capacity(PROBE_SAMPLES);
    for _ in 0..PROBE_SAMPLES {
        let mut b = Bindings::new();
        for name in names {
            b.set(name, rng.random_range(-PROBE_HALF_WIDTH..PROBE_HALF_WIDTH));
        }
        out.push(b);
    }
    Ok(out)
}

fn eval_rows(expr: &Expr, names: &[String], samples: &[Bindings]) -> Result<Vec<f64>> {
    let bound = expr.bind(names)?;
    samples
        .iter()
        .map(|b| {
            let vals = values_for(names, b)?;
            bound.eval(&vals)
        })
        .collect()
}

fn function_rank(rows: &[Vec<f64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let svd = m.svd(false, false);
    let smax = svd.singular_values.max();
    if smax <= RANK_EPS {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > RANK_EPS * smax.max(1.0))
        .count()
}

fn control_block_solvable(
    constraints: &[Constraint],
    sys: &PresymplecticControlSystem,
    samples: &[Bindings],
) -> Result<bool> {
    if constraints.is_empty() || sys.controls.is_empty() {
        return Ok(false);
    }
    if constraints.iter().any(|c| c.control_coeffs.is_empty()) {
        return Ok(false);
    }
    let names = sys.names();
    let rows = constraints.len();
    let cols = sys.controls.len();
    if rows > cols {
        return Ok(false);
    }
    for sample in samples {
        let vals = values_for(&names, sample)?;
        let mut m = DMatrix::zeros(rows, cols);
        for (i, c) in constraints.iter().enumerate() {
            for (j, coeff) in c.control_coeffs.iter().enumerate() {
                m[(i, j)] = coeff.bind(&names)?.eval(&vals)?;
            }
        }
        let svd = m.svd(false, false);
        let smax = svd.singular_values.max();
        let rank = if smax <= RANK_EPS {
            0
        } else {
            svd.singular_values
                .iter()
                .filter(|&&s| s > RANK_EPS * smax.max(1.0))
                .count()
        };
        if rank < rows {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff the control Hessian `d2H/du du` is invertible at the point
/// (condition number at most 1e12).
pub fn regularity_test(sys: &PresymplecticControlSystem, point: &Bindings) -> Result<bool> {
    let k = sys.controls.len();
    if k == 0 {
        return Ok(false);
    }
    let wrt: Vec<&str> = sys.controls.iter().map(String::as_str).collect();
    let jet = sys.hamiltonian.eval_jet(point, &wrt, 2)?;
    let hess = jet.hess.expect("order-2 jet");
    Ok(matrix_condition_ok(&hess))
}

pub(crate) fn matrix_condition_ok(m: &DMatrix<f64>) -> bool {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    smin > 0.0 && smax / smin <= 1e12
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(pairs: &[(&str, f64)]) -> Bindings {
        Bindings::from_pairs(pairs.iter().map(|&(n, v)| (n, v)))
    }

    fn system(n: usize, h: &str) -> ContactSystem {
        ContactSystem::new(ContactChart::darboux(n), Expr::parse(h).unwrap()).unwrap()
    }

    #[test]
    fn flow_of_momentum_hamiltonian() {
        let sys = system(1, "p1");
        let v = sys
            .vector_field(&point(&[("q1", 0.0), ("p1", 2.0), ("z", 5.0)]))
            .unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn flow_of_pure_z_hamiltonian() {
        let sys = system(1, "z");
        let v = sys
            .vector_field(&point(&[("q1", 1.0), ("p1", 3.0), ("z", 2.0)]))
            .unwrap();
        assert_eq!(v, vec![0.0, -3.0, -2.0]);
    }

    #[test]
    fn flow_of_zero_hamiltonian() {
        let sys = system(1, "0");
        let v = sys
            .vector_field(&point(&[("q1", 0.3), ("p1", -1.2), ("z", 9.0)]))
            .unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn reeb_is_unit_z_direction() {
        assert_eq!(system(1, "p1").reeb(), vec![0.0, 0.0, 1.0]);
        let r = system(3, "q1").reeb();
        assert_eq!(r.len(), 7);
        assert_eq!(r[6], 1.0);
        assert!(r[..6].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reeb_contracts_d_eta_to_zero() {
        // d(eta) has no dz leg: its matrix annihilates the Reeb direction
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for n in 1..=2usize {
            let chart = ContactChart::darboux(n);
            let names = chart.names();
            let coeffs = darboux_form_coeffs(&chart);
            let wrt: Vec<&str> = names.iter().map(String::as_str).collect();
            let dim = names.len();
            for _ in 0..25 {
                let mut point = Bindings::new();
                for name in &names {
                    point.set(name, rng.random_range(-2.0..2.0));
                }
                // c_{z,w} = d a_w / dz - d a_z / dw for every w
                let z = dim - 1;
                let mut jac = vec![vec![0.0; dim]; dim];
                for (j, coeff) in coeffs.iter().enumerate() {
                    let jet = coeff.eval_jet(&point, &wrt, 1).unwrap();
                    for i in 0..dim {
                        jac[i][j] = jet.grad[i];
                    }
                }
                for w in 0..dim {
                    let contraction = jac[z][w] - jac[w][z];
                    assert_eq!(contraction, 0.0);
                }
            }
        }
    }

    #[test]
    fn identities_hold_for_simple_hamiltonians() {
        for h in ["p1", "z", "0", "p1^2/2 + q1^2/2 + 0.3*z"] {
            let sys = system(1, h);
            let (r_eta, r_lie) =
                check_contact_identities(&sys, &point(&[("q1", 0.7), ("p1", -0.4), ("z", 1.1)]))
                    .unwrap();
            assert!(r_eta <= 1e-12, "{h}: eta residual {r_eta}");
            assert!(r_lie <= 1e-12, "{h}: lie residual {r_lie}");
        }
    }

    #[test]
    fn darboux_form_has_full_class() {
        for n in 1..=3usize {
            let chart = ContactChart::darboux(n);
            let coeffs = darboux_form_coeffs(&chart);
            let names = chart.names();
            let mut b = Bindings::new();
            for (i, name) in names.iter().enumerate() {
                b.set(name, 0.3 + 0.17 * i as f64);
            }
            let c = classify_one_form(&coeffs, &names, &b).unwrap();
            assert_eq!(c.class, 2 * n + 1);
            assert_eq!(c.rank_d_eta, 2 * n);
        }
    }

    #[test]
    fn pure_dz_has_class_one() {
        let chart = ContactChart::darboux(1);
        let coeffs = vec![Expr::num(0.0), Expr::num(0.0), Expr::num(1.0)];
        let c = classify_one_form(
            &coeffs,
            &chart.names(),
            &point(&[("q1", 0.2), ("p1", 0.4), ("z", -1.0)]),
        )
        .unwrap();
        assert_eq!(c.class, 1);
        assert_eq!(c.rank_d_eta, 0);
    }

    #[test]
    fn degenerate_momentum_form_reports_class_and_rank() {
        // -p dx on (x0, x, p): the form is nonzero at p = 1 but eta ^ d(eta)
        // vanishes, so the class is 1 while d(eta) has rank 2.
        let chart: Vec<String> = ["x0", "x", "p"].iter().map(|s| s.to_string()).collect();
        let coeffs = vec![Expr::num(0.0), Expr::var("p").neg(), Expr::num(0.0)];
        let c = classify_one_form(
            &coeffs,
            &chart,
            &point(&[("x0", 0.0), ("x", 0.5), ("p", 1.0)]),
        )
        .unwrap();
        assert_eq!(c.class, 1);
        assert_eq!(c.rank_d_eta, 2);
    }

    fn lq_presymplectic() -> PresymplecticControlSystem {
        // H = p0 (x^2 + u^2)/2 + p u over base (x0, x; p0, p) with control u
        PresymplecticControlSystem::new(
            vec!["x0".into(), "x".into()],
            vec!["p0".into(), "p".into()],
            vec!["u".into()],
            Expr::parse("p0*(x^2 + u^2)/2 + p*u").unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constraint_level_zero_is_control_stationarity() {
        let sys = lq_presymplectic();
        let set = compatibility_constraints(&sys, 3).unwrap();
        let level0 = &set.levels[0];
        assert_eq!(level0.constraints.len(), 1);
        let names = sys.names();
        let expect = Expr::parse("p0*u + p").unwrap().bind(&names).unwrap();
        let got = level0.constraints[0].expr.bind(&names).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let vals: Vec<f64> = (0..names.len())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let a = expect.eval(&vals).unwrap();
            let b = got.eval(&vals).unwrap();
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        // regular problem: the first tangency level is control-solvable
        assert_eq!(set.closed_at, Some(1));
        assert_eq!(set.reason, Some(ClosureReason::ControlSolvable));
    }

    #[test]
    fn control_free_hamiltonian_closes_at_level_zero() {
        let sys = PresymplecticControlSystem::new(
            vec!["x0".into(), "x".into()],
            vec!["p0".into(), "p".into()],
            vec!["u".into()],
            Expr::parse("p0*x^2/2 + p*x").unwrap(),
        )
        .unwrap();
        let set = compatibility_constraints(&sys, 3).unwrap();
        assert_eq!(set.closed_at, Some(0));
        assert!(set.level0_empty_of_content());
    }

    #[test]
    fn regularity_matches_control_hessian() {
        let sys = lq_presymplectic();
        let p = point(&[
            ("x0", 0.0),
            ("x", 1.0),
            ("p0", -1.0),
            ("p", 0.5),
            ("u", 0.2),
        ]);
        assert!(regularity_test(&sys, &p).unwrap());

        let singular = PresymplecticControlSystem::new(
            vec!["x0".into(), "x".into()],
            vec!["p0".into(), "p".into()],
            vec!["u".into()],
            Expr::parse("p0*x^2/2 + p*u").unwrap(),
        )
        .unwrap();
        assert!(!regularity_test(&singular, &p).unwrap());
    }

    #[test]
    fn symplectic_field_of_quadratic_hamiltonian() {
        let h = Expr::parse("(x^2 + p^2)/2").unwrap();
        let v = symplectic_vf(
            &["x".to_string()],
            &["p".to_string()],
            &h,
            &point(&[("x", 2.0), ("p", 3.0)]),
        )
        .unwrap();
        assert_eq!(v, vec![3.0, -2.0]);
    }
}
