use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use hetvar::io::{
    write_coefficients_csv, write_path_csv, write_selection_coefficients_csv, write_solution_paths_csv,
    write_study_records_csv, write_study_summary_csv, write_trace_csv,
};
use hetvar::simulate::{mse, pps, predict_mean, replicate_study, simulate_hetero, PpsMode, SimulationSpec, StudyConfig};
use hetvar::{
    fit_vb_full, forward_backward_var, forward_var, standardize, validate_dataset, ColumnRoles, DesignData,
    IsotropicPrior, ModelPriorPolicy, PriorSpec, ScalingInfo, SelectionConfig, SelectionResult, SolverConfig, Table,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cli::{
    Command, DataArgs, EvaluateArgs, FitArgs, Method, PathsArgs, PpsKind, PriorArgs, PriorKind, Scenario,
    ScenarioArgs, SearchArgs, SelectArgs, SimulateArgs, SolverArgs, StudyArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] hetvar::Error),
    #[error("{0}")]
    NotConverged(String),
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

impl CliError {
    /// 64 usage, 1 data, 2 solver failure or non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 64,
            Self::NotConverged(_) | Self::Lib(hetvar::Error::NotPositiveDefinite(_)) => 2,
            Self::Lib(_) | Self::Json { .. } => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Everything `evaluate` and `paths` need from a selection run.
#[derive(Debug, Serialize, Deserialize)]
struct Artifact {
    roles: ColumnRoles,
    scaling: ScalingInfo,
    result: SelectionResult,
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Select(a) => select(a),
        Command::Simulate(a) => simulate(a),
        Command::Study(a) => study(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Paths(a) => paths(a),
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(hetvar::Error::from)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(hetvar::Error::from)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush().map_err(hetvar::Error::from)?;
    }
    tmp.persist(path).map_err(|e| hetvar::Error::from(e.error))?;
    Ok(())
}

fn write_key_values(path: &Path, rows: &[(&str, String)]) -> Result<()> {
    write_atomic(path, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["key", "value"]).map_err(hetvar::Error::from)?;
        for (k, v) in rows {
            c.write_record([k, v.as_str()]).map_err(hetvar::Error::from)?;
        }
        c.flush().map_err(hetvar::Error::from)?;
        Ok(())
    })
}

fn roles(args: &DataArgs, homoscedastic: bool) -> Result<(Table, ColumnRoles)> {
    let table = Table::from_csv_path(&args.data)?;
    let mut roles = ColumnRoles::all_predictors(&table, &args.response);
    roles.add_intercepts = !args.no_intercept;
    if !args.mean.is_empty() {
        roles.mean = args.mean.clone();
    }
    if homoscedastic {
        if !args.var.is_empty() {
            return Err(CliError::Usage("--homoscedastic keeps the variance model intercept-only; drop --var".into()));
        }
        if args.no_intercept {
            return Err(CliError::Usage("--homoscedastic needs the variance intercept; drop --no-intercept".into()));
        }
        roles.var.clear();
    } else if !args.var.is_empty() {
        roles.var = args.var.clone();
    }
    Ok((table, roles))
}

fn solver_config(s: &SolverArgs) -> SolverConfig {
    SolverConfig {
        elbo_tol: s.elbo_tol,
        max_outer_iters: s.max_outer_iters,
        homoscedastic: s.homoscedastic,
        ..SolverConfig::default()
    }
}

fn isotropic(p: &PriorArgs) -> IsotropicPrior {
    let iso = IsotropicPrior::new(p.sigma2_beta, p.sigma2_alpha);
    if p.shrink {
        iso.with_shrinkage(p.shrink_a, p.shrink_b)
    } else {
        iso
    }
}

/// Full-length inclusion probabilities from values for the non-intercept
/// columns; intercept entries are placeholders the policy ignores.
fn full_length(flag: &str, values: &[f64], len: usize, intercept: Option<usize>) -> Result<Vec<f64>> {
    let want = len - usize::from(intercept.is_some());
    if values.len() != want {
        return Err(CliError::Usage(format!("{flag} needs {want} values for the per-predictor prior, got {}", values.len())));
    }
    let mut it = values.iter();
    Ok((0..len).map(|j| if Some(j) == intercept { 0.5 } else { *it.next().unwrap() }).collect())
}

fn model_policy(s: &SearchArgs, p: usize, q: usize, intercept: Option<usize>) -> Result<ModelPriorPolicy> {
    let single = |flag: &str, v: &[f64]| -> Result<f64> {
        match v {
            [x] => Ok(*x),
            [] => Err(CliError::Usage(format!("--prior bernoulli requires {flag}"))),
            _ => Err(CliError::Usage(format!("{flag} takes one value for the bernoulli prior"))),
        }
    };
    let unused = |kind: &str| -> Result<()> {
        if s.pi_mu.is_empty() && s.pi_sigma.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("--pi-mu and --pi-sigma do not apply to --prior {kind}")))
        }
    };
    Ok(match s.prior {
        PriorKind::Uniform => {
            unused("uniform")?;
            ModelPriorPolicy::Uniform
        }
        PriorKind::Ebic => {
            unused("ebic")?;
            ModelPriorPolicy::Ebic
        }
        PriorKind::Bernoulli => ModelPriorPolicy::Bernoulli {
            pi_mean: single("--pi-mu", &s.pi_mu)?,
            pi_var: single("--pi-sigma", &s.pi_sigma)?,
        },
        PriorKind::PerPredictor => ModelPriorPolicy::PerPredictor {
            pi_mean: full_length("--pi-mu", &s.pi_mu, p, intercept)?,
            pi_var: full_length("--pi-sigma", &s.pi_sigma, q, intercept)?,
        },
    })
}

fn selection_config(
    search: &SearchArgs,
    prior: &PriorArgs,
    solver: &SolverArgs,
    policy: ModelPriorPolicy,
) -> SelectionConfig {
    SelectionConfig {
        solver: solver_config(solver),
        prior: isotropic(prior),
        policy,
        restricted: search.restrict,
        max_tries: search.max_tries,
        max_iterations: search.max_iter,
        ..SelectionConfig::default()
    }
}

fn names(v: &[String]) -> String {
    v.join(" ")
}

fn fit(a: FitArgs) -> Result<()> {
    let (table, roles) = roles(&a.data, a.solver.homoscedastic)?;
    let data = validate_dataset(&table, &roles)?;
    let (data, _) = standardize(&data, a.standardize)?;
    let prior = PriorSpec::isotropic(data.p(), data.q(), isotropic(&a.prior))?;
    let out = fit_vb_full(&data.full_model_data(), &prior, &solver_config(&a.solver))?;
    write_atomic(&a.out.join("trace.csv"), |w| Ok(write_trace_csv(&out.trace, w)?))?;
    let mn: Vec<&str> = data.mean_names.iter().map(String::as_str).collect();
    let vn: Vec<&str> = data.var_names.iter().map(String::as_str).collect();
    write_atomic(&a.out.join("coefficients.csv"), |w| Ok(write_coefficients_csv(&out.fit, &mn, &vn, w)?))?;
    write_key_values(
        &a.out.join("summary.csv"),
        &[
            ("n", data.n().to_string()),
            ("p", data.p().to_string()),
            ("q", data.q().to_string()),
            ("elbo", out.fit.elbo.to_string()),
            ("iterations", out.fit.iterations.to_string()),
            ("converged", out.fit.converged.to_string()),
        ],
    )?;
    if !out.fit.converged {
        return Err(CliError::NotConverged(format!(
            "fit did not converge in {} iterations; partial trace written",
            out.fit.iterations
        )));
    }
    println!("elbo {} after {} iterations", out.fit.elbo, out.fit.iterations);
    Ok(())
}

fn run_search(data: &DesignData, cfg: &SelectionConfig, method: Method) -> hetvar::Result<SelectionResult> {
    match method {
        Method::Fvar => forward_var(data, cfg),
        Method::Fbvar => forward_backward_var(data, cfg),
    }
}

fn select(a: SelectArgs) -> Result<()> {
    let (table, roles) = roles(&a.data, a.solver.homoscedastic)?;
    let data = validate_dataset(&table, &roles)?;
    let (data, scaling) = standardize(&data, a.search.standardize)?;
    let policy = model_policy(&a.search, data.p(), data.q(), data.intercept_mean)?;
    let cfg = selection_config(&a.search, &a.prior, &a.solver, policy);
    let result = run_search(&data, &cfg, a.search.method)?;
    write_atomic(&a.out.join("path.csv"), |w| Ok(write_path_csv(&result.path, w)?))?;
    write_atomic(&a.out.join("coefficients.csv"), |w| Ok(write_selection_coefficients_csv(&result, w)?))?;
    write_atomic(&a.out.join("solution_paths.csv"), |w| Ok(write_solution_paths_csv(&result, w)?))?;
    let mean: Vec<String> = result.selected_mean_names().iter().map(|s| s.to_string()).collect();
    let var: Vec<String> = result.selected_var_names().iter().map(|s| s.to_string()).collect();
    write_key_values(
        &a.out.join("summary.csv"),
        &[
            ("mean_selected", names(&mean)),
            ("var_selected", names(&var)),
            ("elbo", result.elbo.to_string()),
            ("log_prior", result.log_prior.to_string()),
            ("score", result.score.to_string()),
            ("forward_iterations", result.forward_iterations.to_string()),
            ("backward_iterations", result.backward_iterations.to_string()),
            ("refits", result.refits.to_string()),
            ("converged", result.fit.converged.to_string()),
        ],
    )?;
    let converged = result.fit.converged;
    let artifact = Artifact { roles, scaling, result };
    let json_path = a.out.join("result.json");
    write_atomic(&json_path, |w| {
        serde_json::to_writer(w, &artifact)
            .map_err(|source| CliError::Json { path: json_path.display().to_string(), source })
    })?;
    if !converged {
        return Err(CliError::NotConverged("final model fit did not converge; outputs written".into()));
    }
    println!("mean: {}", names(&mean));
    println!("variance: {}", names(&var));
    Ok(())
}

fn scenario_spec(s: &ScenarioArgs) -> Result<SimulationSpec> {
    let mut spec = match s.scenario {
        Scenario::SmallP => SimulationSpec::small_p(s.n, s.sigma),
        Scenario::Sparse => {
            if s.p < 5 {
                return Err(CliError::Usage("--p must be at least 5 for the sparse scenario".into()));
            }
            SimulationSpec::sparse_homoscedastic(s.p, s.n, s.sigma)
        }
    };
    spec.n_valid = s.n_valid.unwrap_or(s.n);
    spec.validate()?;
    Ok(spec)
}

fn write_dataset(path: &Path, d: &DesignData) -> Result<()> {
    write_atomic(path, |w| {
        let mut c = csv::Writer::from_writer(w);
        let cols: Vec<usize> = (0..d.p()).filter(|&j| Some(j) != d.intercept_mean).collect();
        let header: Vec<&str> = std::iter::once("y").chain(cols.iter().map(|&j| d.mean_names[j].as_str())).collect();
        c.write_record(&header).map_err(hetvar::Error::from)?;
        for i in 0..d.n() {
            let row: Vec<String> =
                std::iter::once(d.y[i]).chain(cols.iter().map(|&j| d.x[(i, j)])).map(|v| v.to_string()).collect();
            c.write_record(&row).map_err(hetvar::Error::from)?;
        }
        c.flush().map_err(hetvar::Error::from)?;
        Ok(())
    })
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = scenario_spec(&a.scenario)?;
    let (train, valid, _) = simulate_hetero(&spec, a.scenario.seed)?;
    write_dataset(&a.out.join("train.csv"), &train)?;
    write_dataset(&a.out.join("valid.csv"), &valid)?;
    write_atomic(&a.out.join("truth.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["name", "beta", "alpha"]).map_err(hetvar::Error::from)?;
        for ((name, b), al) in spec.column_names().iter().zip(spec.beta()).zip(spec.alpha()) {
            c.write_record([name.clone(), b.to_string(), al.to_string()]).map_err(hetvar::Error::from)?;
        }
        c.flush().map_err(hetvar::Error::from)?;
        Ok(())
    })
}

fn pps_mode(k: PpsKind) -> PpsMode {
    match k {
        PpsKind::PlugIn => PpsMode::PlugIn,
        PpsKind::Integrated => PpsMode::IntegratedMean,
    }
}

fn study(a: StudyArgs) -> Result<()> {
    let spec = scenario_spec(&a.scenario)?;
    let width = spec.p() + 1;
    let policy = model_policy(&a.search, width, width, Some(0))?;
    let cfg = StudyConfig {
        selection: selection_config(&a.search, &a.prior, &a.solver, policy),
        backward: a.search.method == Method::Fbvar,
        standardize: a.search.standardize,
        pps_mode: pps_mode(a.pps_mode),
    };
    let summary = replicate_study(&spec, a.replications, &cfg, a.scenario.seed)?;
    write_atomic(&a.out.join("records.csv"), |w| Ok(write_study_records_csv(&summary, w)?))?;
    write_atomic(&a.out.join("summary.csv"), |w| Ok(write_study_summary_csv(&summary, w)?))?;
    println!(
        "CFR mean {:.1}%, CFR var {:.1}%, MSE {:.4}, PPS {:.4}, {} failures",
        summary.cfr_mean, summary.cfr_var, summary.mse.mean, summary.pps.mean, summary.failures
    );
    Ok(())
}

fn load_artifact(path: &Path) -> Result<Artifact> {
    let f = File::open(path).map_err(hetvar::Error::from)?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| CliError::Json { path: path.display().to_string(), source })
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let art = load_artifact(&a.result)?;
    let table = Table::from_csv_path(&a.data)?;
    let data = art.scaling.apply(&validate_dataset(&table, &art.roles)?)?;
    let r = &art.result;
    let pred = predict_mean(&data, &r.index, &r.fit)?;
    let m = mse(pred.as_slice(), data.y.as_slice())?;
    let s = pps(&data, &r.index, &r.fit, pps_mode(a.pps_mode))?;
    println!("mse {m}");
    println!("pps {s}");
    if let Some(out) = &a.out {
        write_key_values(out, &[("n", data.n().to_string()), ("mse", m.to_string()), ("pps", s.to_string())])?;
    }
    Ok(())
}

fn paths(a: PathsArgs) -> Result<()> {
    let art = load_artifact(&a.result)?;
    write_atomic(&a.out, |w| Ok(write_solution_paths_csv(&art.result, w)?))
}
