//! Run specification: strict JSON schema, sweep expansion, validation.
//!
//! A spec file names one command plus its problem, optional solver-config
//! overrides, command parameters, and an optional sweep. Sweeps are expanded
//! by patching the parsed JSON document per point and re-deserializing
//! strictly, so a sweep can target any spec field by dot path and unknown
//! fields are rejected everywhere.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use lipimpl::problems;
use lipimpl::{OscillatorSpec, SolverConfig};

/// Spec parse/validation failure; maps to exit status 2.
#[derive(Debug)]
pub struct SpecError(pub String);

impl std::fmt::Display for SpecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SpecError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Theta,
    Lipschitz,
    Assumptions,
    Oscillator,
    Proposition,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Theta => "theta",
            Command::Lipschitz => "lipschitz",
            Command::Assumptions => "assumptions",
            Command::Oscillator => "oscillator",
            Command::Proposition => "proposition",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemSpec {
    /// A named built-in: an implicit problem, the "trig" family, or
    /// "oscillator" for the default oscillator.
    Builtin(String),
    /// An inline oscillator spec.
    Oscillator(OscillatorSpec),
}

/// Scalar-or-vector parameter; scalars promote to one-dimensional vectors.
#[derive(Clone, Debug, Serialize)]
pub struct NumberList(pub Vec<f64>);

impl<'de> Deserialize<'de> for NumberList {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Scalar(f64),
            List(Vec<f64>),
        }
        Ok(match Raw::deserialize(deserializer)? {
            Raw::Scalar(x) => NumberList(vec![x]),
            Raw::List(xs) => NumberList(xs),
        })
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigPatch {
    pub residual_tol: Option<f64>,
    pub step_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub q_target: Option<f64>,
    pub fd_step: Option<f64>,
}

impl ConfigPatch {
    pub fn apply(&self, mut base: SolverConfig) -> SolverConfig {
        if let Some(v) = self.residual_tol {
            base.residual_tol = v;
        }
        if let Some(v) = self.step_tol {
            base.step_tol = v;
        }
        if let Some(v) = self.max_iter {
            base.max_iter = v;
        }
        if let Some(v) = self.alpha {
            base.alpha = v;
        }
        if let Some(v) = self.beta {
            base.beta = v;
        }
        if let Some(v) = self.q_target {
            base.q_target = v;
        }
        if let Some(v) = self.fd_step {
            base.fd_step = v;
        }
        base
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub x: Option<NumberList>,
    pub v: Option<Vec<f64>>,
    pub v1: Option<Vec<f64>>,
    pub v2: Option<Vec<f64>>,
    pub eps: Option<NumberList>,
    pub delta: Option<f64>,
    pub margin: Option<f64>,
    pub n_pairs: Option<usize>,
    pub grid: Option<[usize; 2]>,
    pub delta_ladder: Option<Vec<f64>>,
    pub eps_scan: Option<Vec<f64>>,
    pub n_t_pairs: Option<usize>,
    pub n_param_points: Option<usize>,
    pub t_radius: Option<f64>,
    pub v_radius: Option<f64>,
    pub eps_radius: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub format: Option<Format>,
    pub path: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Checked against 1 before deserialization; kept so the field is known.
    #[allow(dead_code)]
    pub schema: u32,
    pub command: Command,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub config: ConfigPatch,
    #[serde(default)]
    pub params: Params,
    /// Expanded before per-point deserialization; kept so the field is known.
    #[allow(dead_code)]
    #[serde(default)]
    pub sweep: Vec<SweepEntry>,
    #[serde(default)]
    pub output: OutputSpec,
    pub seed: u64,
}

/// One expanded sweep point: the patched spec plus the substitutions that
/// produced it.
#[derive(Debug)]
pub struct Point {
    pub spec: RunSpec,
    pub substitutions: Vec<(String, Value)>,
}

/// Parses a spec file and expands its sweep into per-point specs.
pub fn load_points(text: &str) -> Result<Vec<Point>, SpecError> {
    let mut root: Value = serde_json::from_str(text).map_err(|e| {
        SpecError(format!(
            "parse error at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;

    match root.get("schema").and_then(Value::as_u64) {
        Some(1) => {}
        Some(other) => {
            return Err(SpecError(format!(
                "unsupported schema version {other}, expected 1"
            )))
        }
        None => return Err(SpecError("missing required field 'schema'".into())),
    }

    // Sweep paths may create keys under these objects.
    if let Some(obj) = root.as_object_mut() {
        for key in ["params", "config"] {
            obj.entry(key)
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }

    let sweep: Vec<SweepEntry> = match root.get("sweep") {
        None => Vec::new(),
        Some(raw) => serde_json::from_value(raw.clone())
            .map_err(|e| SpecError(format!("invalid sweep: {e}")))?,
    };
    for entry in &sweep {
        if entry.values.is_empty() {
            return Err(SpecError(format!(
                "sweep path '{}' has no values",
                entry.path
            )));
        }
    }

    let mut combos: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for entry in &sweep {
        let mut next = Vec::with_capacity(combos.len() * entry.values.len());
        for combo in &combos {
            for value in &entry.values {
                let mut grown = combo.clone();
                grown.push((entry.path.clone(), value.clone()));
                next.push(grown);
            }
        }
        combos = next;
    }

    let mut points = Vec::with_capacity(combos.len());
    for substitutions in combos {
        let mut doc = root.clone();
        for (path, value) in &substitutions {
            set_path(&mut doc, path, value.clone())?;
        }
        let spec: RunSpec =
            serde_json::from_value(doc).map_err(|e| SpecError(format!("invalid spec: {e}")))?;
        validate_point(&spec)?;
        points.push(Point {
            spec,
            substitutions,
        });
    }
    Ok(points)
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), SpecError> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(SpecError(format!("sweep path '{path}' is malformed")));
    }
    let mut current = root;
    for (i, segment) in segments.iter().enumerate() {
        if i + 1 == segments.len() {
            let object = current.as_object_mut().ok_or_else(|| {
                SpecError(format!(
                    "sweep path '{path}': parent of '{segment}' is not an object"
                ))
            })?;
            object.insert((*segment).to_string(), value);
            return Ok(());
        }
        current = current.get_mut(*segment).ok_or_else(|| {
            SpecError(format!(
                "sweep path '{path}': segment '{segment}' does not resolve"
            ))
        })?;
    }
    unreachable!("paths have at least one segment");
}

/// Command/problem compatibility and required parameters.
fn validate_point(spec: &RunSpec) -> Result<(), SpecError> {
    match (&spec.command, &spec.problem) {
        (Command::Solve, ProblemSpec::Builtin(name)) => {
            if !problems::IMPLICIT_NAMES.contains(&name.as_str()) {
                return Err(SpecError(format!(
                    "command 'solve' needs a built-in implicit problem, got '{name}' \
                     (expected one of {:?})",
                    problems::IMPLICIT_NAMES
                )));
            }
            if spec.params.x.is_none() {
                return Err(SpecError("command 'solve' requires params.x".into()));
            }
        }
        (Command::Solve, ProblemSpec::Oscillator(_)) => {
            return Err(SpecError(
                "command 'solve' operates on built-in implicit problems, not oscillators".into(),
            ));
        }
        (Command::Theta | Command::Lipschitz | Command::Assumptions, problem) => {
            if let ProblemSpec::Builtin(name) = problem {
                if name != "trig" && name != "oscillator" {
                    return Err(SpecError(format!(
                        "command '{}' needs the 'trig' family, the 'oscillator' built-in, \
                         or an inline oscillator, got '{name}'",
                        spec.command.name()
                    )));
                }
            }
        }
        (Command::Oscillator | Command::Proposition, ProblemSpec::Builtin(name)) => {
            if name != "oscillator" {
                return Err(SpecError(format!(
                    "command '{}' needs an oscillator problem, got built-in '{name}'",
                    spec.command.name()
                )));
            }
        }
        (Command::Oscillator | Command::Proposition, ProblemSpec::Oscillator(_)) => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_solve_spec_parses() {
        let points = load_points(
            r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
                "params": {"x": 0.1}, "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].spec.command, Command::Solve);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = load_points(
            r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
                "params": {"x": 0.1}, "seed": 7, "bogus": true}"#,
        )
        .unwrap_err();
        assert!(err.0.contains("bogus"), "{err}");
    }

    #[test]
    fn schema_version_is_checked() {
        let err = load_points(r#"{"schema": 2, "command": "solve"}"#).unwrap_err();
        assert!(err.0.contains("schema"), "{err}");
    }

    #[test]
    fn sweep_expands_cartesian() {
        let points = load_points(
            r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
                "sweep": [{"path": "params.x", "values": [0.1, 0.2, 0.3]},
                          {"path": "config.beta", "values": [1.0, 2.0]}],
                "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(points.len(), 6);
        assert_eq!(points[0].spec.params.x.as_ref().unwrap().0, vec![0.1]);
        assert_eq!(points[5].spec.config.beta, Some(2.0));
    }

    #[test]
    fn unresolved_sweep_path_is_an_error() {
        let err = load_points(
            r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
                "params": {"x": 0.1},
                "sweep": [{"path": "problem.oscillator.eps", "values": [0.1]}],
                "seed": 7}"#,
        )
        .unwrap_err();
        assert!(err.0.contains("does not resolve"), "{err}");
    }

    #[test]
    fn command_problem_compatibility() {
        let err = load_points(
            r#"{"schema": 1, "command": "proposition", "problem": {"builtin": "cubic"}, "seed": 1}"#,
        )
        .unwrap_err();
        assert!(err.0.contains("oscillator"), "{err}");

        let err = load_points(
            r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"}, "seed": 1}"#,
        )
        .unwrap_err();
        assert!(err.0.contains("params.x"), "{err}");
    }
}
