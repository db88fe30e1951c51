//! Problem-file schema (JSON, one object, expression strings for math) and
//! conversion into library types.

use contact_opt::error::{Error, Result};
use contact_opt::expr::Expr;
use contact_opt::geometry::{ContactChart, ContactSystem};
use contact_opt::herglotz_ocp::HerglotzOcpProblem;
use contact_opt::integrate::{IntegratorConfig, ShootingConfig};
use contact_opt::lagrangian::HerglotzLagrangian;
use contact_opt::ocp::{OcpProblem, Sense};
use contact_opt::oracle::TranscriptionConfig;
use contact_opt::thermo::{GasPistonParams, LegendrianBox};
use serde::Deserialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub kind: String,
    #[serde(default)]
    pub states: Vec<String>,
    #[serde(default)]
    pub controls: Vec<String>,
    #[serde(default)]
    pub dynamics: BTreeMap<String, String>,
    pub cost: Option<String>,
    #[serde(rename = "L")]
    pub lagrangian: Option<String>,
    #[serde(rename = "H")]
    pub hamiltonian: Option<String>,
    pub n: Option<usize>,
    pub chart: Option<Vec<String>>,
    pub interval: Option<[f64; 2]>,
    pub boundary: Option<Boundary>,
    pub z_start: Option<f64>,
    pub lambda0: Option<f64>,
    pub sense: Option<String>,
    pub integrator: Option<IntegratorSection>,
    pub shooting: Option<ShootingSection>,
    pub oracle: Option<OracleSection>,
    pub gas_piston: Option<GasPistonSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    #[serde(default)]
    pub start: BTreeMap<String, f64>,
    #[serde(default)]
    pub end: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: Option<String>,
    pub step: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingSection {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub restarts: Option<usize>,
    pub restart_radius: Option<f64>,
    pub guess: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub intervals: Option<usize>,
    pub optimizer: Option<String>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasPistonSection {
    pub m: f64,
    pub d: f64,
    #[serde(rename = "U")]
    pub internal_energy: String,
    #[serde(default)]
    pub boxes: Option<BTreeMap<String, [f64; 2]>>,
    pub u: Option<serde_json::Value>,
    /// Starting `(V, pi, S)` on the state equations.
    pub start: Option<[f64; 3]>,
}

/// Command-line overrides applied on top of the problem file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: u64,
    pub tol: Option<f64>,
    pub steps: Option<usize>,
    pub depth: Option<usize>,
    pub lambda0: Option<f64>,
}

impl ProblemFile {
    pub fn load(path: &std::path::Path) -> Result<ProblemFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Invalid(format!("invalid problem file {}: {e}", path.display())))
    }

    pub fn parse_expr(&self, field: &str, src: &str) -> Result<Expr> {
        Expr::parse(src).map_err(|e| Error::Invalid(format!("in field `{field}`: {e}")))
    }

    pub fn sense(&self) -> Result<Sense> {
        match self.sense.as_deref() {
            None | Some("minimize") => Ok(Sense::Minimize),
            Some("maximize") => Ok(Sense::Maximize),
            Some(other) => Err(Error::Invalid(format!(
                "sense must be `minimize` or `maximize`, got `{other}`"
            ))),
        }
    }

    pub fn interval(&self) -> Result<[f64; 2]> {
        self.interval
            .ok_or_else(|| Error::Invalid("missing `interval`".into()))
    }

    fn boundary(&self) -> Result<&Boundary> {
        self.boundary
            .as_ref()
            .ok_or_else(|| Error::Invalid("missing `boundary`".into()))
    }

    fn state_vector(&self, side: &BTreeMap<String, f64>, what: &str) -> Result<Vec<f64>> {
        self.states
            .iter()
            .map(|name| {
                side.get(name).copied().ok_or_else(|| {
                    Error::Invalid(format!("boundary.{what} is missing state `{name}`"))
                })
            })
            .collect()
    }

    fn dynamics_exprs(&self) -> Result<Vec<Expr>> {
        if self.states.is_empty() {
            return Err(Error::Invalid("missing `states`".into()));
        }
        self.states
            .iter()
            .map(|name| {
                let src = self.dynamics.get(name).ok_or_else(|| {
                    Error::Invalid(format!("`dynamics` is missing an entry for state `{name}`"))
                })?;
                self.parse_expr(&format!("dynamics.{name}"), src)
            })
            .collect()
    }

    pub fn to_ocp(&self) -> Result<OcpProblem> {
        let cost_src = self
            .cost
            .as_ref()
            .ok_or_else(|| Error::Invalid("missing `cost`".into()))?;
        let boundary = self.boundary()?;
        let problem = OcpProblem {
            states: self.states.clone(),
            controls: self.controls.clone(),
            dynamics: self.dynamics_exprs()?,
            cost: self.parse_expr("cost", cost_src)?,
            interval: self.interval()?,
            x_start: self.state_vector(&boundary.start, "start")?,
            x_end: self.state_vector(&boundary.end, "end")?,
            sense: self.sense()?,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn to_herglotz_ocp(&self) -> Result<HerglotzOcpProblem> {
        let cost_src = self
            .cost
            .as_ref()
            .ok_or_else(|| Error::Invalid("missing `cost`".into()))?;
        let boundary = self.boundary()?;
        let problem = HerglotzOcpProblem {
            states: self.states.clone(),
            controls: self.controls.clone(),
            dynamics: self.dynamics_exprs()?,
            cost: self.parse_expr("cost", cost_src)?,
            interval: self.interval()?,
            x_start: self.state_vector(&boundary.start, "start")?,
            x_end: self.state_vector(&boundary.end, "end")?,
            z_start: self.z_start.unwrap_or(0.0),
            sense: self.sense()?,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Positions come from `states`, velocities from `controls` (they are
    /// the controls of the equivalent velocity-controlled problem).
    pub fn to_lagrangian(&self) -> Result<HerglotzLagrangian> {
        let l_src = self
            .lagrangian
            .as_ref()
            .ok_or_else(|| Error::Invalid("missing `L`".into()))?;
        HerglotzLagrangian::new(
            self.states.clone(),
            self.controls.clone(),
            "z",
            self.parse_expr("L", l_src)?,
        )
    }

    pub fn to_contact(&self) -> Result<ContactSystem> {
        let h_src = self
            .hamiltonian
            .as_ref()
            .ok_or_else(|| Error::Invalid("missing `H`".into()))?;
        let chart = if let Some(names) = &self.chart {
            if names.len() < 3 || names.len() % 2 == 0 {
                return Err(Error::Invalid(
                    "`chart` must list q1..qn, p1..pn, z (odd length >= 3)".into(),
                ));
            }
            let n = names.len() / 2;
            ContactChart::new(
                names[..n].to_vec(),
                names[n..2 * n].to_vec(),
                names[2 * n].clone(),
            )?
        } else {
            let n = self
                .n
                .ok_or_else(|| Error::Invalid("contact kind needs `n` or `chart`".into()))?;
            ContactChart::darboux(n)
        };
        ContactSystem::new(chart, self.parse_expr("H", h_src)?)
    }

    pub fn to_gas_piston(&self) -> Result<(GasPistonParams, LegendrianBox, Expr, [f64; 3])> {
        let section = self
            .gas_piston
            .as_ref()
            .ok_or_else(|| Error::Invalid("missing `gas_piston` section".into()))?;
        let params = GasPistonParams {
            mass: section.m,
            damping: section.d,
            internal_energy: self.parse_expr("gas_piston.U", &section.internal_energy)?,
        };
        let mut bounds = LegendrianBox::default();
        if let Some(map) = &section.boxes {
            if let Some(r) = map.get("V") {
                bounds.v = *r;
            }
            if let Some(r) = map.get("pi") {
                bounds.pi = *r;
            }
            if let Some(r) = map.get("S") {
                bounds.s = *r;
            }
        }
        let control = match &section.u {
            None => Expr::num(0.0),
            Some(serde_json::Value::Number(x)) => Expr::num(x.as_f64().unwrap_or(0.0)),
            Some(serde_json::Value::String(src)) => self.parse_expr("gas_piston.u", src)?,
            Some(other) => {
                return Err(Error::Invalid(format!(
                    "gas_piston.u must be a number or expression string, got {other}"
                )))
            }
        };
        let start = section.start.unwrap_or([1.0, 0.4, 0.0]);
        Ok((params, bounds, control, start))
    }

    /// Start point for flow kinds, in chart order.
    pub fn start_point(&self, chart: &[String]) -> Result<Vec<f64>> {
        let boundary = self.boundary()?;
        chart
            .iter()
            .map(|name| {
                boundary
                    .start
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::Invalid(format!("boundary.start is missing `{name}`")))
            })
            .collect()
    }

    pub fn integrator_config(&self, ov: &Overrides) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::rk4(1e-3);
        if let Some(section) = &self.integrator {
            if let Some(m) = &section.method {
                cfg.method = m.clone();
            }
            cfg.step = section.step.or(cfg.step);
            if let Some(r) = section.rtol {
                cfg.rtol = r;
            }
            if let Some(a) = section.atol {
                cfg.atol = a;
            }
            if let Some(ms) = section.max_steps {
                cfg.max_steps = ms;
            }
        }
        if let (Some(steps), Some(interval)) = (ov.steps, self.interval) {
            cfg.method = "rk4".to_string();
            cfg.step = Some((interval[1] - interval[0]) / steps.max(1) as f64);
        }
        cfg
    }

    pub fn shooting_config(&self, ov: &Overrides) -> ShootingConfig {
        let mut cfg = ShootingConfig {
            seed: ov.seed,
            ..Default::default()
        };
        if let Some(section) = &self.shooting {
            if let Some(t) = section.tol {
                cfg.tol = t;
            }
            if let Some(it) = section.max_iters {
                cfg.max_iters = it;
            }
            if let Some(r) = section.restarts {
                cfg.restarts = r;
            }
            if let Some(r) = section.restart_radius {
                cfg.restart_radius = r;
            }
        }
        if let Some(t) = ov.tol {
            cfg.tol = t;
        }
        cfg
    }

    pub fn costate_guess(&self) -> Option<Vec<f64>> {
        self.shooting.as_ref().and_then(|s| s.guess.clone())
    }

    pub fn oracle_config(&self, intervals_override: Option<usize>) -> TranscriptionConfig {
        let mut cfg = TranscriptionConfig::default();
        if let Some(section) = &self.oracle {
            if let Some(n) = section.intervals {
                cfg.intervals = n;
            }
            if let Some(opt) = &section.optimizer {
                cfg.optimizer = opt.clone();
            }
            if let Some(it) = section.max_iters {
                cfg.max_iters = it;
            }
            if let Some(t) = section.tol {
                cfg.tol = t;
            }
        }
        if let Some(n) = intervals_override {
            cfg.intervals = n;
        }
        cfg
    }

    pub fn lambda0(&self, ov: &Overrides, sense: Sense) -> f64 {
        ov.lambda0
            .or(self.lambda0)
            .unwrap_or_else(|| sense.default_lambda0())
    }
}
