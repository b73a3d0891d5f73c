//! Command runners. Every runner writes its artifacts into the output
//! directory and returns a JSON summary plus the exit code.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use plap::eigen::{estimate_spectrum, RayleighOptions};
use plap::minimax::{
    default_tolerance, solve, verify_solution, GeometryOptions, LinkingOptions, PathOptions, SolveOptions,
};
use plap::suites::{run_all, SuitePlan};
use plap::{cerami_residual, eval_energy, ProblemSpec};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, RunConfig, StudyKind};
use crate::fieldio::{read_field_file, write_field_file};
use crate::{exit, CliError};

/// Exit code and machine-readable summary of one run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: u8,
    pub summary: Value,
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_text(text: &str, path: &Path) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Runs `cfg`, writing into `out`. Relative input paths resolve against
/// `base` (the directory holding the configuration file). Run metadata goes
/// to `metadata.json`; everything else is deterministic in the seed.
pub fn run(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Outcome, CliError> {
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let result = dispatch(cfg, base, out);
    let (code, error) = match &result {
        Ok(o) => (o.code, None),
        Err(e) => (e.exit_code(), Some(e.to_string())),
    };
    let meta = json!({
        "command": cfg.command,
        "seed": cfg.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "started_unix": started,
        "wall_time_seconds": clock.elapsed().as_secs_f64(),
        "exit_code": code,
        "error": error,
    });
    write_json(&meta, &out.join("metadata.json"))?;
    result
}

fn dispatch(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Eval => run_eval(cfg, base, out),
        Command::Eigen => run_eigen(cfg, out),
        Command::Solve => run_solve(cfg, out),
        Command::Verify => run_verify(cfg, out),
        Command::Study => run_study(cfg, out),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn run_eval(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let eval = cfg
        .eval
        .as_ref()
        .ok_or_else(|| CliError::Config("eval.field: required by command eval".into()))?;
    let u = read_field_file(&resolve(base, &eval.field), &spec.grid)?;
    let energy = eval_energy(&u, &spec)?;
    let summary = json!({
        "energy": energy,
        "cerami": cerami_residual(&u, &spec)?,
    });
    write_json(&summary, &out.join("energy.json"))?;
    Ok(Outcome {
        code: exit::SUCCESS,
        summary,
    })
}

fn rayleigh_options(cfg: &RunConfig) -> RayleighOptions<f64> {
    RayleighOptions {
        tol: cfg.tolerances.eigen,
        max_iter: cfg.eigen.max_iter,
        starts: cfg.eigen.starts,
        seed: cfg.seed,
    }
}

fn run_eigen(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let spectrum = estimate_spectrum(&spec, cfg.eigen.count, &rayleigh_options(cfg))?;
    let mut entries = Vec::new();
    let mut values_csv = String::from("index,lambda\n");
    for (k, e) in spectrum.entries.iter().enumerate() {
        let field = match &e.pair {
            Some(pair) => {
                let name = format!("eigen_{}.csv", k + 1);
                write_field_file(&pair.u, &spec.grid, &out.join(&name))?;
                Some(name)
            }
            None => None,
        };
        values_csv.push_str(&format!("{},{:.16e}\n", k + 1, e.value));
        entries.push(json!({
            "index": k + 1,
            "lambda": e.value,
            "certification": e.certification,
            "upper_bound": e.upper_bound,
            "residual": e.pair.as_ref().map(|p| p.residual),
            "normalization_defect": e.pair.as_ref().map(|p| p.normalization_defect),
            "field": field,
        }));
    }
    let summary = json!({
        "exhaustive": spectrum.exhaustive,
        "m_index": spectrum.m_index(spec.lambda.abs()),
        "entries": entries,
    });
    write_json(&summary, &out.join("spectrum.json"))?;
    write_text(&values_csv, &out.join("eigenvalues.csv"))?;
    Ok(Outcome {
        code: exit::SUCCESS,
        summary,
    })
}

fn solve_options(cfg: &RunConfig) -> SolveOptions<f64> {
    SolveOptions {
        tol: cfg.tolerances.cerami,
        seed: cfg.seed,
        eigen: rayleigh_options(cfg),
        geometry: GeometryOptions {
            rays: cfg.solve.rays,
            ..GeometryOptions::default()
        },
        path: PathOptions {
            nodes: cfg.solve.path_nodes,
            max_iter: cfg.solve.path_max_iter,
            ..PathOptions::default()
        },
        linking: LinkingOptions {
            samples: cfg.solve.samples,
            max_iter: cfg.solve.linking_max_iter,
            ..LinkingOptions::default()
        },
    }
}

fn run_solve(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec: ProblemSpec<f64> = cfg.spec()?;
    let opts = solve_options(cfg);
    let tol = opts.tol.unwrap_or_else(|| default_tolerance(spec.p));
    let result = solve(&spec, &opts)?;
    // the geometry refers to the representation with lambda >= 0
    let report = verify_solution(&result.u, &spec.with_nonnegative_lambda(), tol, Some(&result.geometry))?;
    write_field_file(&result.u, &spec.grid, &out.join("solution.csv"))?;
    let mut trace = String::from("iteration,Phi,cerami,norm\n");
    for r in &result.trace {
        trace.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            r.iteration, r.phi, r.cerami, r.norm
        ));
    }
    write_text(&trace, &out.join("trace.csv"))?;
    write_json(&result.geometry, &out.join("geometry.json"))?;
    let summary = json!({
        "tolerance": tol,
        "result": result,
        "verification": report,
        "field": "solution.csv",
    });
    write_json(&summary, &out.join("result.json"))?;
    Ok(Outcome {
        code: if report.passed { exit::SUCCESS } else { exit::CONVERGENCE },
        summary,
    })
}

fn run_verify(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.spec()?;
    let v = &cfg.verify;
    let plan = SuitePlan {
        gradient_fields: v.gradient_fields,
        homogeneity_fields: v.homogeneity_fields,
        monotonicity_pairs: v.monotonicity_pairs,
        cone_samples: v.cone_samples,
        flip_fields: v.flip_fields,
        anchor_nodes: v.anchor_nodes,
        seed: cfg.seed,
    };
    let suites = run_all(&spec, &plan)?;
    for s in &suites {
        println!("{}", s.line());
    }
    let passed = suites.iter().all(|s| s.passed);
    let summary = json!({ "passed": passed, "suites": suites });
    write_json(&summary, &out.join("suites.json"))?;
    Ok(Outcome {
        code: if passed { exit::SUCCESS } else { exit::SUITE_FAILURE },
        summary,
    })
}

fn run_study(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let study = cfg
        .study
        .as_ref()
        .ok_or_else(|| CliError::Config("study: required by command study".into()))?;
    let points: Vec<RunConfig> = (0..study.values.len())
        .map(|k| cfg.study_point(k))
        .collect::<Result<_, _>>()?;
    // points are independent; collecting in order keeps output deterministic
    let results: Vec<(u8, Value)> = points
        .par_iter()
        .enumerate()
        .map(|(k, point)| {
            let dir = out.join(format!("point_{k:03}"));
            let r = fs::create_dir_all(&dir)
                .map_err(|e| CliError::io(&dir, e))
                .and_then(|_| dispatch(point, Path::new("."), &dir));
            match r {
                Ok(o) => (o.code, o.summary),
                Err(e) => (e.exit_code(), json!({ "error": e.to_string() })),
            }
        })
        .collect();
    let param = match study.kind {
        StudyKind::Grid => "nodes",
        StudyKind::Box => "extent",
        StudyKind::Lambda => "lambda",
    };
    let mut csv = format!("{param},status,value,cerami,norm_w,lambda1,lambda2,lambda3\n");
    let mut records = Vec::new();
    for ((value, point), (code, summary)) in study.values.iter().zip(&points).zip(&results) {
        let num = |v: &Value| v.as_f64().map(|x| format!("{x:.16e}")).unwrap_or_default();
        let (phi, cerami, norm) = match point.command {
            Command::Solve => (
                num(&summary["result"]["value"]),
                num(&summary["result"]["cerami"]),
                num(&summary["result"]["norm_w"]),
            ),
            _ => Default::default(),
        };
        let lambdas: Vec<String> = (0..3).map(|i| num(&summary["entries"][i]["lambda"])).collect();
        csv.push_str(&format!(
            "{value},{code},{phi},{cerami},{norm},{}\n",
            lambdas.join(",")
        ));
        records.push(json!({ param: value, "exit_code": code, "summary": summary }));
    }
    write_text(&csv, &out.join("study.csv"))?;
    let code = results.iter().map(|r| r.0).max().unwrap_or(exit::SUCCESS);
    let summary = json!({ "kind": study.kind, "task": study.task, "points": records });
    write_json(&summary, &out.join("study.json"))?;
    Ok(Outcome { code, summary })
}
