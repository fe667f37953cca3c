//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment. Sweeps are written as
//! `sweep.<field> = v1, v2, ...`; several sweeps expand to their cartesian
//! product in file order. Later assignments (including `--set` overrides)
//! replace earlier ones.

use std::fmt;
use std::path::{Path, PathBuf};

use reentrant_sched::optimal::{default_horizon, SolveConfig};
use reentrant_sched::{fixed_priority, switch_at_time, switch_on_curve, Class, Params, Policy, State};

use crate::error::{CliError, CliResult};

/// A model quantity that can be set or swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    R1,
    R2,
    Gamma1,
    Gamma2,
    Mu,
    Q1p,
    Q1r,
    Q2p,
    Q2r,
}

impl Field {
    pub const ALL: [Field; 9] = [
        Field::R1,
        Field::R2,
        Field::Gamma1,
        Field::Gamma2,
        Field::Mu,
        Field::Q1p,
        Field::Q1r,
        Field::Q2p,
        Field::Q2r,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::R1 => "r1",
            Field::R2 => "r2",
            Field::Gamma1 => "gamma1",
            Field::Gamma2 => "gamma2",
            Field::Mu => "mu",
            Field::Q1p => "q1p",
            Field::Q1r => "q1r",
            Field::Q2p => "q2p",
            Field::Q2r => "q2r",
        }
    }

    pub fn parse(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw values of every [`Field`], validated only when turned into model types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelValues {
    pub values: [f64; 9],
}

impl ModelValues {
    pub fn get(&self, field: Field) -> f64 {
        self.values[field as usize]
    }

    pub fn set(&mut self, field: Field, v: f64) {
        self.values[field as usize] = v;
    }

    pub fn params(&self) -> CliResult<Params> {
        Params::new(
            self.get(Field::R1),
            self.get(Field::R2),
            self.get(Field::Gamma1),
            self.get(Field::Gamma2),
            self.get(Field::Mu),
        )
        .map_err(|e| CliError::config("params", e.to_string()))
    }

    pub fn state(&self) -> CliResult<State> {
        State::new(
            self.get(Field::Q1p),
            self.get(Field::Q1r),
            self.get(Field::Q2p),
            self.get(Field::Q2r),
        )
        .map_err(|e| CliError::config("initial_state", e.to_string()))
    }

    /// `field=value` pairs, for error contexts.
    pub fn describe(&self) -> String {
        Field::ALL
            .iter()
            .map(|f| format!("{f}={}", self.get(*f)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Default for ModelValues {
    /// Reference parameters, start `(2, 0, 2, 0)`.
    fn default() -> Self {
        ModelValues {
            values: [0.2, 0.8, 2.0, 0.2, 2.0, 2.0, 0.0, 2.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Auto,
    Fixed(f64),
}

impl Horizon {
    pub fn resolve(&self, state0: &State, params: &Params) -> f64 {
        match *self {
            Horizon::Auto => default_horizon(state0, params),
            Horizon::Fixed(t) => t,
        }
    }
}

/// Policy selected for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    Closed(Policy),
    /// Piecewise-constant controls of the LP optimum.
    Optimal,
}

impl PolicySpec {
    /// `fp1`, `fp2`, `switch-time:<class>:<time>`, `switch-curve:<class>:<backlog>`
    /// or `optimal`.
    pub fn parse(s: &str) -> CliResult<Self> {
        let bad = |msg: &str| CliError::config("policy", format!("{msg} in `{s}`"));
        let class = |c: &str| {
            c.parse::<u32>()
                .ok()
                .and_then(Class::from_number)
                .ok_or_else(|| bad("class must be 1 or 2"))
        };
        let number = |v: &str| v.parse::<f64>().map_err(|_| bad("expected a number"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["fp1"] => Ok(PolicySpec::Closed(fixed_priority(Class::One))),
            ["fp2"] => Ok(PolicySpec::Closed(fixed_priority(Class::Two))),
            ["optimal"] => Ok(PolicySpec::Optimal),
            ["switch-time", c, t] => Ok(PolicySpec::Closed(switch_at_time(class(c)?, number(t)?))),
            ["switch-curve", c, h] => Ok(PolicySpec::Closed(switch_on_curve(class(c)?, number(h)?))),
            _ => Err(bad("unknown policy")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelValues,
    pub horizon: Horizon,
    pub grid_points: usize,
    pub lp_tolerance: f64,
    pub sweep: Vec<(Field, Vec<f64>)>,
    pub output_path: Option<PathBuf>,
    pub seed: u64,
    pub policy: PolicySpec,
    /// Uniform samples per simulated trajectory, on top of the breakpoints.
    pub samples: usize,
    /// Loads evaluated by `asymptotics`.
    pub epsilons: Vec<f64>,
    /// Random instances in the LP-versus-fixed-priority verification suite.
    pub lp_instances: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelValues::default(),
            horizon: Horizon::Auto,
            grid_points: 2000,
            lp_tolerance: SolveConfig::DEFAULT_LP_TOLERANCE,
            sweep: Vec::new(),
            output_path: None,
            seed: 0,
            policy: PolicySpec::Closed(fixed_priority(Class::One)),
            samples: 500,
            epsilons: (-4..=4).map(|k| 10f64.powi(k)).collect(),
            lp_instances: 50,
        }
    }
}

fn parse_f64(field: &str, v: &str) -> CliResult<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::config(field, format!("`{}` is not a number", v.trim())))?;
    if !x.is_finite() {
        return Err(CliError::config(field, "value must be finite"));
    }
    Ok(x)
}

fn parse_list(field: &str, v: &str) -> CliResult<Vec<f64>> {
    let list: Vec<f64> = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_f64(field, s))
        .collect::<CliResult<_>>()?;
    if list.is_empty() {
        return Err(CliError::config(field, "empty list"));
    }
    Ok(list)
}

fn parse_count(field: &str, v: &str) -> CliResult<usize> {
    v.trim()
        .parse()
        .map_err(|_| CliError::config(field, format!("`{}` is not a nonnegative integer", v.trim())))
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = key.trim();
        if let Some(name) = key.strip_prefix("sweep.") {
            let field = Field::parse(name)
                .ok_or_else(|| CliError::config(key, "sweeps must name a parameter or initial-state field"))?;
            let values = parse_list(key, value)?;
            match self.sweep.iter_mut().find(|(f, _)| *f == field) {
                Some(entry) => entry.1 = values,
                None => self.sweep.push((field, values)),
            }
            return Ok(());
        }
        if let Some(field) = Field::parse(key) {
            self.model.set(field, parse_f64(key, value)?);
            return Ok(());
        }
        match key {
            "horizon" => {
                self.horizon = if value.trim() == "auto" {
                    Horizon::Auto
                } else {
                    let t = parse_f64(key, value)?;
                    if t <= 0.0 {
                        return Err(CliError::config(key, "must be positive or `auto`"));
                    }
                    Horizon::Fixed(t)
                }
            }
            "grid_points" => {
                let n = parse_count(key, value)?;
                if n < 2 {
                    return Err(CliError::config(key, "must be at least 2"));
                }
                self.grid_points = n;
            }
            "lp_tolerance" => {
                let tol = parse_f64(key, value)?;
                if tol <= 0.0 {
                    return Err(CliError::config(key, "must be positive"));
                }
                self.lp_tolerance = tol;
            }
            "seed" => {
                self.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| CliError::config(key, format!("`{}` is not an unsigned integer", value.trim())))?
            }
            "output" => self.output_path = Some(PathBuf::from(value.trim())),
            "policy" => self.policy = PolicySpec::parse(value)?,
            "samples" => self.samples = parse_count(key, value)?,
            "epsilons" => {
                let eps = parse_list(key, value)?;
                if eps.iter().any(|e| *e <= 0.0) {
                    return Err(CliError::config(key, "loads must be positive"));
                }
                self.epsilons = eps;
            }
            "lp_instances" => self.lp_instances = parse_count(key, value)?,
            _ => return Err(CliError::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies every assignment of a config text.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`"))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> CliResult<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::config(assignment, "override must look like key=value"))?;
        self.set(k, v)
    }

    /// Every model point of the sweep, with the swept values in sweep order.
    /// Without a sweep this is the single configured point.
    pub fn sweep_points(&self) -> Vec<(Vec<f64>, ModelValues)> {
        let mut points = vec![(Vec::new(), self.model)];
        for (field, values) in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|(swept, model)| {
                    values.iter().map(move |&v| {
                        let mut m = model;
                        m.set(*field, v);
                        let mut s = swept.clone();
                        s.push(v);
                        (s, m)
                    })
                })
                .collect();
        }
        points
    }

    pub fn solve_config(&self, state0: &State, params: &Params) -> CliResult<SolveConfig> {
        let horizon = self.horizon.resolve(state0, params);
        Ok(SolveConfig::new(horizon, self.grid_points)?.with_tolerance(self.lp_tolerance))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_assignments_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# reference run\nr1 = 0.1\ngamma2=0.5 # slow returns\nhorizon = 20\ngrid_points = 400\nsweep.q1p = 1, 2,3\n",
        )
        .unwrap();
        assert_eq!(cfg.model.get(Field::R1), 0.1);
        assert_eq!(cfg.model.get(Field::Gamma2), 0.5);
        assert_eq!(cfg.horizon, Horizon::Fixed(20.0));
        assert_eq!(cfg.grid_points, 400);
        assert_eq!(cfg.sweep, vec![(Field::Q1p, vec![1.0, 2.0, 3.0])]);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::parse("gamma1 = fast").unwrap_err();
        assert!(err.to_string().contains("gamma1"), "{err}");
        let err = ExperimentConfig::parse("sweep.epsilon = 1,2").unwrap_err();
        assert!(err.to_string().contains("sweep.epsilon"), "{err}");
        let err = ExperimentConfig::parse("colour = red").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let cfg = ExperimentConfig::parse("r1 = 0.9").unwrap();
        assert!(cfg.model.params().unwrap_err().to_string().contains("params"));
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg = ExperimentConfig::parse("seed = 3\nsweep.gamma2 = 0.1").unwrap();
        cfg.apply_override("seed=9").unwrap();
        cfg.apply_override("sweep.gamma2=0.2,0.3").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.sweep, vec![(Field::Gamma2, vec![0.2, 0.3])]);
        assert!(cfg.apply_override("seed").is_err());
    }

    #[test]
    fn sweep_is_cartesian_in_order() {
        let cfg = ExperimentConfig::parse("sweep.q1p = 1,2\nsweep.q2p = 3,4,5").unwrap();
        let pts = cfg.sweep_points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].0, vec![1.0, 3.0]);
        assert_eq!(pts[1].0, vec![1.0, 4.0]);
        assert_eq!(pts[5].0, vec![2.0, 5.0]);
        assert_eq!(pts[5].1.get(Field::Q2p), 5.0);
        assert_eq!(ExperimentConfig::default().sweep_points().len(), 1);
    }

    #[test]
    fn policy_specs() {
        assert_eq!(PolicySpec::parse("optimal").unwrap(), PolicySpec::Optimal);
        assert_eq!(
            PolicySpec::parse("switch-time:2:1.5").unwrap(),
            PolicySpec::Closed(switch_at_time(Class::Two, 1.5))
        );
        assert!(PolicySpec::parse("switch-time:3:1").is_err());
        assert!(PolicySpec::parse("lifo").is_err());
    }
}
