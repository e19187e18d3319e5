//! Command pipelines and the sweep driver.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use lipimpl::perturb::{
    delta_ladder_scan, empirical_lipschitz_quotient, estimate_assumption_constants,
    solve_theta_certified, DeltaScan, PerturbedFamily, SampleSpec,
};
use lipimpl::{
    exclusion_region_check, integrate_system, problems, solve_implicit, unrotate, Error,
    OscillatorSpec, SolverConfig, SwitchReport,
};

use crate::output::{to_pretty_json, write_atomic, Cell, Table};
use crate::spec::{Command, Format, Params, Point, ProblemSpec, RunSpec, SpecError};

pub struct Cli {
    pub spec: PathBuf,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertFlag {
    pub name: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub index: usize,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub certificates: Vec<CertFlag>,
    pub sweep: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub command: String,
    pub seed: u64,
    pub format: String,
    pub points: Vec<PointSummary>,
    pub all_certificates_pass: bool,
}

struct RunContext<'a> {
    out_dir: &'a Path,
    format: Format,
    seed: u64,
}

struct Rendered {
    bytes: Vec<u8>,
    certificates: Vec<CertFlag>,
    metrics: Map<String, Value>,
}

/// Entry point behind the binary: expands the sweep, runs every point, and
/// writes the summary last. Returns the process exit code.
pub fn run_all(cli: &Cli) -> Result<u8, SpecError> {
    let text = fs::read_to_string(&cli.spec).map_err(|e| {
        SpecError(format!(
            "cannot read spec file '{}': {e}",
            cli.spec.display()
        ))
    })?;
    let points = crate::spec::load_points(&text)?;
    let first = &points[0].spec;

    let format = cli.format.or(first.output.format).unwrap_or(Format::Csv);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| first.output.path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = cli.seed.unwrap_or(first.seed);
    let workers = cli.workers.unwrap_or(1).max(1);
    let command = first.command;

    fs::create_dir_all(&out_dir).map_err(|e| {
        SpecError(format!(
            "cannot create output directory '{}': {e}",
            out_dir.display()
        ))
    })?;

    let ctx = RunContext {
        out_dir: &out_dir,
        format,
        seed,
    };
    log::info!(
        "running {} point(s) of '{}' with {workers} worker(s)",
        points.len(),
        command.name()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SpecError(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<PointSummary> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(index, point)| execute_point(point, index, &ctx))
            .collect()
    });

    let mut any_error = false;
    let mut any_cert_failed = false;
    for outcome in &outcomes {
        match outcome.status.as_str() {
            "error" => any_error = true,
            "certificate_failed" => any_cert_failed = true,
            _ => {}
        }
        let certs: Vec<String> = outcome
            .certificates
            .iter()
            .map(|c| format!("{}={}", c.name, c.pass))
            .collect();
        let file = outcome.file.as_deref().unwrap_or("-");
        match &outcome.error {
            Some(message) => {
                eprintln!(
                    "point {:04} [{}] {}",
                    outcome.index, outcome.status, message
                )
            }
            None => println!(
                "point {:04} [{}] {} file={file}",
                outcome.index,
                outcome.status,
                certs.join(" ")
            ),
        }
    }

    let all_pass = !any_error && !any_cert_failed;
    let summary = Summary {
        schema: 1,
        command: command.name().to_string(),
        seed,
        format: format.extension().to_string(),
        points: outcomes,
        all_certificates_pass: all_pass,
    };
    write_atomic(
        &out_dir.join("summary.json"),
        to_pretty_json(&summary).as_bytes(),
    )
    .map_err(|e| SpecError(format!("cannot write summary: {e}")))?;

    Ok(if any_error {
        3
    } else if any_cert_failed {
        1
    } else {
        0
    })
}

fn execute_point(point: &Point, index: usize, ctx: &RunContext) -> PointSummary {
    let mut sweep = Map::new();
    for (path, value) in &point.substitutions {
        sweep.insert(path.clone(), value.clone());
    }

    let rendered =
        catch_unwind(AssertUnwindSafe(|| dispatch(&point.spec, ctx))).unwrap_or_else(|payload| {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic during point execution".to_string());
            Err(Error::Integrator(message))
        });

    match rendered {
        Err(error) => PointSummary {
            index,
            status: "error".into(),
            file: None,
            certificates: Vec::new(),
            sweep,
            error: Some(error.to_string()),
            metrics: Map::new(),
        },
        Ok(rendered) => {
            let file = format!("point_{index:04}.{}", ctx.format.extension());
            if let Err(e) = write_atomic(&ctx.out_dir.join(&file), &rendered.bytes) {
                return PointSummary {
                    index,
                    status: "error".into(),
                    file: None,
                    certificates: rendered.certificates,
                    sweep,
                    error: Some(format!("cannot write result file: {e}")),
                    metrics: rendered.metrics,
                };
            }
            let failed = rendered.certificates.iter().any(|c| !c.pass);
            PointSummary {
                index,
                status: if failed {
                    "certificate_failed".into()
                } else {
                    "ok".into()
                },
                file: Some(file),
                certificates: rendered.certificates,
                sweep,
                error: None,
                metrics: rendered.metrics,
            }
        }
    }
}

fn dispatch(spec: &RunSpec, ctx: &RunContext) -> Result<Rendered, Error> {
    match spec.command {
        Command::Solve => solve_point(spec, ctx),
        Command::Theta => theta_point(spec, ctx),
        Command::Lipschitz => lipschitz_point(spec, ctx),
        Command::Assumptions => assumptions_point(spec, ctx),
        Command::Oscillator => oscillator_point(spec, ctx),
        Command::Proposition => proposition_point(spec, ctx),
    }
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

fn vector_columns(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (0..dim).map(|i| format!("{prefix}{i}")).collect()
    }
}

fn render<T: Serialize>(format: Format, table: Table, record: &T) -> Vec<u8> {
    match format {
        Format::Csv => table.to_csv().into_bytes(),
        Format::Json => to_pretty_json(record).into_bytes(),
    }
}

/// Resolves the family-typed problems: the "trig" built-in, the default
/// oscillator, or an inline oscillator. Returns the family, the nominal eps
/// for the run, and the oscillator spec when there is one.
fn family_for(
    problem: &ProblemSpec,
) -> Result<(PerturbedFamily, f64, Option<OscillatorSpec>), Error> {
    let (family, eps, osc) = match problem {
        ProblemSpec::Builtin(name) if name == "trig" => {
            (problems::trig_family(&problems::trig_config())?, 0.0, None)
        }
        ProblemSpec::Builtin(name) if name == "oscillator" => {
            let spec = problems::default_oscillator();
            let family = spec.family()?;
            let eps = spec.eps;
            (family, eps, Some(spec))
        }
        ProblemSpec::Builtin(name) => {
            return Err(Error::InvalidProblem(format!(
                "'{name}' is not a family-typed problem"
            )))
        }
        ProblemSpec::Oscillator(spec) => (spec.family()?, spec.eps, Some(spec.clone())),
    };
    if osc.is_some() || !family.has_analytic_jacobians() {
        eprintln!(
            "notice: smoothness of the family at the base eps is assumed, not verified; \
             derivatives away from the base come from the integrated field or central \
             differences"
        );
    }
    Ok((family, eps, osc))
}

fn oscillator_for(problem: &ProblemSpec) -> Result<OscillatorSpec, Error> {
    match problem {
        ProblemSpec::Builtin(name) if name == "oscillator" => Ok(problems::default_oscillator()),
        ProblemSpec::Oscillator(spec) => Ok(spec.clone()),
        ProblemSpec::Builtin(name) => Err(Error::InvalidProblem(format!(
            "'{name}' is not an oscillator problem"
        ))),
    }
}

fn eps_vector(params: &Params, default_eps: f64) -> DVector<f64> {
    match &params.eps {
        Some(list) => DVector::from_vec(list.0.clone()),
        None => DVector::from_vec(vec![default_eps]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: u64,
    pub q_measured: f64,
    pub residual: f64,
    pub ball_ok: bool,
}

fn solve_point(spec: &RunSpec, _ctx: &RunContext) -> Result<Rendered, Error> {
    let ProblemSpec::Builtin(name) = &spec.problem else {
        return Err(Error::InvalidProblem(
            "solve needs a built-in problem".into(),
        ));
    };
    let base = problems::implicit_config(name).unwrap_or_default();
    let config = spec.config.apply(base);
    let problem = problems::implicit_problem(name, &config)?;
    let x_values = spec.params.x.as_ref().expect("validated").0.clone();
    let x = DVector::from_vec(x_values.clone());

    let (y, cert) = solve_implicit(&problem, &config, &x)?;
    let record = SolveRecord {
        x: x_values,
        y: y.iter().copied().collect(),
        iterations: cert.iterations as u64,
        q_measured: cert.q_measured,
        residual: cert.residual,
        ball_ok: cert.ball_ok,
    };

    let mut columns: Vec<String> = vector_columns("x", record.x.len());
    columns.extend(vector_columns("y", record.y.len()));
    columns.extend(["iterations", "q_measured", "residual", "ball_ok"].map(String::from));
    let mut table = Table {
        columns,
        rows: Vec::new(),
    };
    let mut row: Vec<Cell> = record.x.iter().copied().map(Cell::F).collect();
    row.extend(record.y.iter().copied().map(Cell::F));
    row.extend([
        Cell::I(record.iterations),
        Cell::F(record.q_measured),
        Cell::F(record.residual),
        Cell::B(record.ball_ok),
    ]);
    table.push(row);

    let mut metrics = Map::new();
    metrics.insert("residual".into(), number(record.residual));
    metrics.insert("q_measured".into(), number(record.q_measured));
    Ok(Rendered {
        bytes: render(_ctx.format, table, &record),
        certificates: vec![CertFlag {
            name: "ball_ok".into(),
            pass: record.ball_ok,
        }],
        metrics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaRecord {
    pub v: Vec<f64>,
    pub eps: Vec<f64>,
    pub theta: Vec<f64>,
    pub iterations: u64,
    pub q_measured: f64,
    pub residual: f64,
    pub ball_ok: bool,
}

fn theta_point(spec: &RunSpec, ctx: &RunContext) -> Result<Rendered, Error> {
    let (family, default_eps, _) = family_for(&spec.problem)?;
    let config = spec.config.apply(SolverConfig::for_radius(family.radius()));
    let v = spec
        .params
        .v
        .as_ref()
        .map(|v| DVector::from_vec(v.clone()))
        .unwrap_or_else(|| family.v0().clone());
    let eps = eps_vector(&spec.params, default_eps);

    let (theta, cert) = solve_theta_certified(&family, &v, &eps, &config)?;
    let record = ThetaRecord {
        v: v.iter().copied().collect(),
        eps: eps.iter().copied().collect(),
        theta: theta.iter().copied().collect(),
        iterations: cert.iterations as u64,
        q_measured: cert.q_measured,
        residual: cert.residual,
        ball_ok: cert.ball_ok,
    };

    let mut columns = vector_columns("v", record.v.len());
    columns.extend(vector_columns("eps", record.eps.len()));
    columns.extend(vector_columns("theta", record.theta.len()));
    columns.extend(["iterations", "q_measured", "residual", "ball_ok"].map(String::from));
    let mut table = Table {
        columns,
        rows: Vec::new(),
    };
    let mut row: Vec<Cell> = record.v.iter().copied().map(Cell::F).collect();
    row.extend(record.eps.iter().copied().map(Cell::F));
    row.extend(record.theta.iter().copied().map(Cell::F));
    row.extend([
        Cell::I(record.iterations),
        Cell::F(record.q_measured),
        Cell::F(record.residual),
        Cell::B(record.ball_ok),
    ]);
    table.push(row);

    let mut metrics = Map::new();
    if let Some(&t) = record.theta.first() {
        metrics.insert("theta".into(), number(t));
    }
    Ok(Rendered {
        bytes: render(ctx.format, table, &record),
        certificates: vec![CertFlag {
            name: "ball_ok".into(),
            pass: record.ball_ok,
        }],
        metrics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzRecord {
    pub eps: Vec<f64>,
    pub delta: f64,
    pub margin: f64,
    pub n_pairs: u64,
    pub pairs_used: u64,
    pub theta: Vec<f64>,
    pub modulus: f64,
    pub quotient_sup: f64,
    pub ine_ok: bool,
}

fn lipschitz_point(spec: &RunSpec, ctx: &RunContext) -> Result<Rendered, Error> {
    let (family, default_eps, _) = family_for(&spec.problem)?;
    let config = spec.config.apply(SolverConfig::for_radius(family.radius()));
    let eps = eps_vector(&spec.params, default_eps);
    let delta = spec.params.delta.unwrap_or(1e-2);
    let margin = spec.params.margin.unwrap_or(0.1);
    let n_pairs = spec.params.n_pairs.unwrap_or(64);

    let result =
        empirical_lipschitz_quotient(&family, &eps, delta, n_pairs, ctx.seed, margin, &config)?;
    let record = LipschitzRecord {
        eps: eps.iter().copied().collect(),
        delta: result.delta,
        margin: result.margin,
        n_pairs: n_pairs as u64,
        pairs_used: result.pairs_used as u64,
        theta: result.theta.iter().copied().collect(),
        modulus: result.modulus,
        quotient_sup: result.quotient_sup,
        ine_ok: result.ine_ok,
    };

    let mut columns = vector_columns("eps", record.eps.len());
    columns.extend(
        [
            "delta",
            "margin",
            "n_pairs",
            "pairs_used",
            "theta",
            "modulus",
            "quotient_sup",
            "ine_ok",
        ]
        .map(String::from),
    );
    let mut table = Table {
        columns,
        rows: Vec::new(),
    };
    let mut row: Vec<Cell> = record.eps.iter().copied().map(Cell::F).collect();
    row.extend([
        Cell::F(record.delta),
        Cell::F(record.margin),
        Cell::I(record.n_pairs),
        Cell::I(record.pairs_used),
        Cell::F(record.theta[0]),
        Cell::F(record.modulus),
        Cell::F(record.quotient_sup),
        Cell::B(record.ine_ok),
    ]);
    table.push(row);

    let mut metrics = Map::new();
    metrics.insert("quotient_sup".into(), number(record.quotient_sup));
    metrics.insert("modulus".into(), number(record.modulus));
    Ok(Rendered {
        bytes: render(ctx.format, table, &record),
        certificates: vec![CertFlag {
            name: "ine_ok".into(),
            pass: record.ine_ok,
        }],
        metrics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionsRow {
    pub eps: Vec<f64>,
    pub v: Vec<f64>,
    pub l_eps_v: f64,
    pub l_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionsRecord {
    pub rows: Vec<AssumptionsRow>,
    pub k_slope: f64,
    pub lipschitz_f: f64,
    pub max_l_eps_v: f64,
    pub max_l_eps: f64,
}

fn assumptions_point(spec: &RunSpec, ctx: &RunContext) -> Result<Rendered, Error> {
    let (family, _, oscillator) = family_for(&spec.problem)?;
    let mut plan = SampleSpec::for_radius(family.radius());
    plan.eps_nonneg = oscillator.is_some();
    if let Some(n) = spec.params.n_t_pairs {
        plan.n_t_pairs = n;
    }
    if let Some(n) = spec.params.n_param_points {
        plan.n_param_points = n;
    }
    if let Some(r) = spec.params.t_radius {
        plan.t_radius = r;
    }
    if let Some(r) = spec.params.v_radius {
        plan.v_radius = r;
    }
    if let Some(r) = spec.params.eps_radius {
        plan.eps_radius = r;
    }

    let estimates = estimate_assumption_constants(&family, &plan, ctx.seed)?;
    let rows: Vec<AssumptionsRow> = estimates
        .l_eps_v
        .iter()
        .zip(&estimates.l_eps)
        .map(|(mixed, intercept)| AssumptionsRow {
            eps: mixed.eps.iter().copied().collect(),
            v: mixed.v.iter().copied().collect(),
            l_eps_v: mixed.value,
            l_eps: intercept.value,
        })
        .collect();
    let record = AssumptionsRecord {
        max_l_eps_v: estimates.max_l_eps_v(),
        max_l_eps: estimates.max_l_eps(),
        k_slope: estimates.k_slope,
        lipschitz_f: estimates.lipschitz_f,
        rows,
    };

    let eps_dim = record.rows.first().map_or(1, |r| r.eps.len());
    let v_dim = record.rows.first().map_or(1, |r| r.v.len());
    let mut columns = vector_columns("eps", eps_dim);
    columns.extend(vector_columns("v", v_dim));
    columns.extend(["l_eps_v", "l_eps"].map(String::from));
    let mut table = Table {
        columns,
        rows: Vec::new(),
    };
    for row in &record.rows {
        let mut cells: Vec<Cell> = row.eps.iter().copied().map(Cell::F).collect();
        cells.extend(row.v.iter().copied().map(Cell::F));
        cells.extend([Cell::F(row.l_eps_v), Cell::F(row.l_eps)]);
        table.push(cells);
    }

    let mut metrics = Map::new();
    metrics.insert("k_slope".into(), number(record.k_slope));
    metrics.insert("lipschitz_f".into(), number(record.lipschitz_f));
    metrics.insert("max_l_eps_v".into(), number(record.max_l_eps_v));
    metrics.insert("max_l_eps".into(), number(record.max_l_eps));
    Ok(Rendered {
        bytes: render(ctx.format, table, &record),
        certificates: Vec::new(),
        metrics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorRecord {
    pub eps: f64,
    pub v: [f64; 2],
    pub events: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_field: Option<Vec<[f64; 2]>>,
}

fn oscillator_point(spec: &RunSpec, ctx: &RunContext) -> Result<Rendered, Error> {
    let osc = oscillator_for(&spec.problem)?;
    let v = match &spec.params.v {
        Some(values) if values.len() == 2 => [values[0], values[1]],
        Some(_) => {
            return Err(Error::InvalidProblem(
                "params.v must have two components".into(),
            ))
        }
        None => osc.v0,
    };
    let traj = integrate_system(&osc, v)?;
    let record = OscillatorRecord {
        eps: traj.eps,
        v: traj.v,
        events: traj.events.clone(),
        times: traj.times.clone(),
        states: traj.states.clone(),
        y_field: traj.y_field.clone(),
    };

    let mut table = Table::new(&["t", "x1", "x2", "u", "u_dot", "y1", "y2"]);
    for (i, (&t, state)) in record.times.iter().zip(&record.states).enumerate() {
        let (u, u_dot) = unrotate(t, state[0], state[1]);
        let (y1, y2) = match &record.y_field {
            Some(field) => (Cell::F(field[i][0]), Cell::F(field[i][1])),
            None => (Cell::Empty, Cell::Empty),
        };
        table.push(vec![
            Cell::F(t),
            Cell::F(state[0]),
            Cell::F(state[1]),
            Cell::F(u),
            Cell::F(u_dot),
            y1,
            y2,
        ]);
    }

    let mut metrics = Map::new();
    metrics.insert("events".into(), Value::from(record.events.len() as u64));
    metrics.insert("eps".into(), number(record.eps));
    Ok(Rendered {
        bytes: render(ctx.format, table, &record),
        certificates: Vec::new(),
        metrics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<SwitchReport>,
    pub scan: DeltaScan,
}

fn proposition_point(spec: &RunSpec, ctx: &RunContext) -> Result<Rendered, Error> {
    let (family, _, osc) = family_for(&spec.problem)?;
    let osc = osc.ok_or_else(|| {
        Error::InvalidProblem("command 'proposition' needs an oscillator problem".into())
    })?;
    let config = spec.config.apply(SolverConfig::for_radius(family.radius()));

    let v1 = match &spec.params.v1 {
        Some(values) if values.len() == 2 => [values[0], values[1]],
        Some(_) => {
            return Err(Error::InvalidProblem(
                "params.v1 must have two components".into(),
            ))
        }
        None => osc.v0,
    };
    let v2 = match &spec.params.v2 {
        Some(values) if values.len() == 2 => [values[0], values[1]],
        Some(_) => {
            return Err(Error::InvalidProblem(
                "params.v2 must have two components".into(),
            ))
        }
        None => v1,
    };
    let eps = spec.params.eps.as_ref().map(|e| e.0[0]).unwrap_or(osc.eps);
    let margin = spec.params.margin.unwrap_or(0.1);
    let grid = spec.params.grid.unwrap_or([400, 40]);
    let ladder = spec
        .params
        .delta_ladder
        .clone()
        .unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3]);
    let n_pairs = spec.params.n_pairs.unwrap_or(64);

    let mut eps_scan = spec
        .params
        .eps_scan
        .clone()
        .unwrap_or_else(|| vec![0.0, eps]);
    eps_scan.dedup();
    let eps_vectors: Vec<DVector<f64>> = eps_scan
        .iter()
        .map(|&e| DVector::from_vec(vec![e]))
        .collect();

    let scan = delta_ladder_scan(
        &family,
        &eps_vectors,
        &ladder,
        margin,
        n_pairs,
        ctx.seed,
        &config,
    )?;
    let mut certificates = vec![CertFlag {
        name: "ine_ok".into(),
        pass: scan.best.is_some(),
    }];

    let report = match scan.best {
        None => None,
        Some(_) => {
            let report = exclusion_region_check(
                &osc,
                &family,
                v1,
                v2,
                eps,
                margin,
                (grid[0], grid[1]),
                Some(&scan),
                &config,
            )?;
            certificates.push(CertFlag {
                name: "nv_ok".into(),
                pass: report.nv_ok,
            });
            Some(report)
        }
    };
    let record = PropositionRecord { report, scan };

    let mut table = Table::new(&[
        "theta",
        "modulus",
        "exclusion_lo",
        "exclusion_hi",
        "min_abs_f",
        "nv_ok",
        "ine_ok",
        "delta",
        "quotient_sup",
        "margin",
        "eps",
        "v1_0",
        "v1_1",
        "v2_0",
        "v2_1",
    ]);
    let best_quotient = record
        .scan
        .best
        .and_then(|d| record.scan.rows.iter().find(|r| r.delta == d))
        .map(|r| r.quotient_sup);
    let ine_ok = record.scan.best.is_some();
    match &record.report {
        Some(r) => table.push(vec![
            Cell::F(r.theta),
            Cell::F(r.modulus),
            Cell::F(r.exclusion_interval[0]),
            Cell::F(r.exclusion_interval[1]),
            Cell::F(r.min_abs_f),
            Cell::B(r.nv_ok),
            Cell::B(ine_ok),
            Cell::F(r.delta),
            best_quotient.map(Cell::F).unwrap_or(Cell::Empty),
            Cell::F(r.margin),
            Cell::F(r.eps),
            Cell::F(r.v1[0]),
            Cell::F(r.v1[1]),
            Cell::F(r.v2[0]),
            Cell::F(r.v2[1]),
        ]),
        None => table.push(vec![
            Cell::Empty,
            Cell::F(record.scan.modulus),
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            Cell::B(false),
            Cell::Empty,
            Cell::Empty,
            Cell::F(record.scan.margin),
            Cell::F(eps),
            Cell::F(v1[0]),
            Cell::F(v1[1]),
            Cell::F(v2[0]),
            Cell::F(v2[1]),
        ]),
    }

    let mut metrics = Map::new();
    metrics.insert("modulus".into(), number(record.scan.modulus));
    if let Some(r) = &record.report {
        metrics.insert("theta".into(), number(r.theta));
        if r.min_abs_f.is_finite() {
            metrics.insert("min_abs_f".into(), number(r.min_abs_f));
        }
    }
    Ok(Rendered {
        bytes: render(ctx.format, table, &record),
        certificates,
        metrics,
    })
}
