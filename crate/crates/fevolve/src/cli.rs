//! Batch front door: JSON-configured runs with flag overrides, CSV/JSON
//! artifacts, and a 0/1/2 exit contract (0 = certificates pass, 2 =
//! certificate failure, 1 = error).

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::elliptic::{elliptic_apriori_bound, semilinear_solve};
use crate::error::{Error, Result};
use crate::evolution::{delta_existence, lipschitz_constants, picard_error_bound, picard_solve};
use crate::linalg::fit_log_slope;
use crate::mesh_basis::interpolation_error_l2;
use crate::problems::{instantiate, list_presets, Overrides, ProblemInstance};
use crate::spectral::{norm_convergence_study, spectral_bracketing, SpectralReport};

type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveElliptic,
    SolveEvolution,
    SpectralStudy,
    ConvergenceStudy,
    ListPresets,
}

impl Command {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(json!(s))
            .map_err(|_| Error::ConfigParse(format!("unknown command '{s}'")))
    }
}

/// Full run configuration; serializes round-trip stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Spacing(s); studies take the whole list, solves take the first entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Picard depth / max elliptic iterations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::ConfigParse(e.to_string()))
    }
}

/// A completed run: certificate verdict plus the summary JSON written next
/// to the CSV artifacts.
pub struct RunOutcome {
    pub certificates_ok: bool,
    pub summary: serde_json::Value,
}

fn h_tag(hs: &[f64]) -> String {
    hs.iter()
        .map(|h| format!("{h}"))
        .collect::<Vec<_>>()
        .join("-")
}

fn write_artifact(out_dir: &Option<PathBuf>, name: &str, content: &str) -> Result<()> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), content)?;
    }
    Ok(())
}

fn preset_name(config: &RunConfig) -> String {
    config
        .preset
        .clone()
        .unwrap_or_else(|| "heat_1d".to_string())
}

pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    match config.command {
        Command::ListPresets => run_list_presets(config),
        Command::SpectralStudy => run_spectral_study(config),
        Command::ConvergenceStudy => run_convergence_study(config),
        Command::SolveElliptic => run_solve_elliptic(config),
        Command::SolveEvolution => run_solve_evolution(config),
    }
}

fn run_list_presets(config: &RunConfig) -> Result<RunOutcome> {
    let catalogue = list_presets();
    let text = serde_json::to_string_pretty(&catalogue).expect("serializable");
    println!("{text}");
    write_artifact(&config.out_dir, "presets.json", &text)?;
    Ok(RunOutcome {
        certificates_ok: true,
        summary: json!({ "command": "list-presets", "presets": catalogue.as_array().unwrap().len() }),
    })
}

/// Stiffness/mass pair of a preset at one spacing, with the continuum
/// coercivity bracket implied by its dimension.
fn preset_pencil(
    name: &str,
    h: f64,
    r: Option<f64>,
) -> Result<(nalgebra::DMatrix<f64>, Arc<crate::mesh_basis::GramMatrix>, f64)> {
    let inst = instantiate(name, Some(h), r, Overrides::default())?;
    let (fo, mass) = match &inst.problem {
        ProblemInstance::Semilinear(p) => (p.fo.clone(), p.mass.clone()),
        ProblemInstance::Evolution(p) => (
            p.fo
                .clone()
                .ok_or_else(|| Error::DegenerateProblem("preset has no operator part".into()))?,
            p.mass.clone(),
        ),
    };
    // bracket from the box: lambda_min >= dim * pi^2 on the unit cube
    let dim = inst.projector.grid().dim();
    let bracket_lo = dim as f64 * std::f64::consts::PI.powi(2);
    // spectrum of the identity-tensor part
    let plain = crate::operator::build_difference_factor(inst.projector.clone());
    let s = plain.assemble_matrix(None)?;
    let _ = fo;
    Ok((s, mass, bracket_lo))
}

fn study_hs(config: &RunConfig) -> Vec<f64> {
    let mut hs = config
        .h
        .clone()
        .unwrap_or_else(|| vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]);
    hs.sort_by(|a, b| b.partial_cmp(a).expect("non-finite h"));
    hs
}

fn run_spectral_study(config: &RunConfig) -> Result<RunOutcome> {
    let name = preset_name(config);
    let hs = study_hs(config);
    let mut rows: Vec<SpectralReport> = Vec::new();
    for &h in &hs {
        let (s, mass, lo) = preset_pencil(&name, h, config.r)?;
        let op = crate::operator::DiscreteOperator::square(s, "stiffness", mass.clone());
        rows.push(spectral_bracketing(&op, &mass, h, Some((lo, f64::INFINITY)))?);
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[1].lambda_min <= w[0].lambda_min + 1e-10);
    let certificates_ok = monotone && rows.iter().all(|r| r.bracketing_ok && r.stability_ok);
    let mut csv = String::from(SpectralReport::csv_header());
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let file = format!("spectral-study_{name}_{}.csv", h_tag(&hs));
    write_artifact(&config.out_dir, &file, &csv)?;
    let summary = json!({
        "command": "spectral-study",
        "preset": name,
        "h": hs,
        "monotone_lambda_min": monotone,
        "bracketing_ok": certificates_ok,
        "lambda_min": rows.iter().map(|r| r.lambda_min).collect::<Vec<_>>(),
        "csv": file,
    });
    write_artifact(
        &config.out_dir,
        &format!("spectral-study_{name}_summary.json"),
        &serde_json::to_string_pretty(&summary).expect("serializable"),
    )?;
    Ok(RunOutcome {
        certificates_ok,
        summary,
    })
}

fn run_convergence_study(config: &RunConfig) -> Result<RunOutcome> {
    let name = preset_name(config);
    let hs = study_hs(config);
    let mut family = Vec::new();
    let mut projs = Vec::new();
    for &h in &hs {
        let (s, mass, _) = preset_pencil(&name, h, config.r)?;
        let inst = instantiate(&name, Some(h), config.r, Overrides::default())?;
        projs.push(inst.projector);
        family.push((h, s, (*mass).clone()));
    }
    let study = norm_convergence_study(&family, 2.0)?;
    // projection order on a smooth reference field
    let dim = projs[0].grid().dim();
    let field = move |x: &[f64]| {
        let mut v = 1.0;
        for axis in 0..dim {
            v *= (std::f64::consts::PI * x[axis]).sin();
        }
        v
    };
    let errs: Vec<f64> = projs
        .iter()
        .map(|p| interpolation_error_l2(p, &field))
        .collect();
    let mu = fit_log_slope(&hs, &errs);
    let mut csv = String::from("h,lambda_min,lambda_max,norm_A,norm_Ainv,projection_error\n");
    for (row, err) in study.rows.iter().zip(&errs) {
        csv.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            row.h, row.lambda_min, row.lambda_max, row.norm_a, row.norm_ainv, err
        ));
    }
    let file = format!("convergence-study_{name}_{}.csv", h_tag(&hs));
    write_artifact(&config.out_dir, &file, &csv)?;
    let certificates_ok = study.monotone && (mu - 2.0).abs() < 0.2;
    let summary = json!({
        "command": "convergence-study",
        "preset": name,
        "h": hs,
        "monotone": study.monotone,
        "extrapolated_lambda_min": study.extrapolated_lambda_min,
        "projection_order": mu,
        "csv": file,
    });
    write_artifact(
        &config.out_dir,
        &format!("convergence-study_{name}_summary.json"),
        &serde_json::to_string_pretty(&summary).expect("serializable"),
    )?;
    Ok(RunOutcome {
        certificates_ok,
        summary,
    })
}

fn run_solve_elliptic(config: &RunConfig) -> Result<RunOutcome> {
    let name = config
        .preset
        .clone()
        .unwrap_or_else(|| "semilinear_poisson_2d".to_string());
    let h = config.h.as_ref().and_then(|v| v.first().copied());
    let inst = instantiate(&name, h, config.r, Overrides::default())?;
    let ProblemInstance::Semilinear(p) = &inst.problem else {
        return Err(Error::ConfigParse(format!(
            "preset '{name}' is not an elliptic problem"
        )));
    };
    let tol = config.tol.unwrap_or(1e-11);
    let max_iter = config.k.unwrap_or(200);
    let n = p.mass.dim();
    let (u, rep, cert) = semilinear_solve(p, DVector::zeros(n), tol, max_iter)?;
    let norm_ah = {
        let mut fo = (*p.fo).clone();
        fo.measure_constants(&p.mass)?.mu_ai
    };
    let bound = elliptic_apriori_bound(p, rep.iterations, inst.h, norm_ah, 0.0)?;
    // solution CSV: node coordinates then value
    let dim = inst.projector.grid().dim();
    let mut csv = String::new();
    for axis in 0..dim {
        csv.push_str(&format!("x{axis},"));
    }
    csv.push_str("u\n");
    for (d, &node) in inst.projector.dof_nodes().iter().enumerate() {
        let xy = inst.projector.grid().node_coords(node);
        for c in &xy {
            csv.push_str(&format!("{c},"));
        }
        csv.push_str(&format!("{:.12e}\n", u[d]));
    }
    let file = format!("solve-elliptic_{name}_{}.csv", inst.h);
    write_artifact(&config.out_dir, &file, &csv)?;
    let certificates_ok = rep.converged && cert.ball_confined && cert.residual <= 10.0 * tol;
    let summary = json!({
        "command": "solve-elliptic",
        "preset": name,
        "h": inst.h,
        "dofs": n,
        "iterations": rep.iterations,
        "K": rep.ratio,
        "residual": cert.residual,
        "apriori_bound_at_k": bound,
        "u_norm_inf": u.amax(),
        "csv": file,
    });
    write_artifact(
        &config.out_dir,
        &format!("solve-elliptic_{name}_summary.json"),
        &serde_json::to_string_pretty(&summary).expect("serializable"),
    )?;
    Ok(RunOutcome {
        certificates_ok,
        summary,
    })
}

fn run_solve_evolution(config: &RunConfig) -> Result<RunOutcome> {
    let name = preset_name(config);
    let h = config.h.as_ref().and_then(|v| v.first().copied());
    let inst = instantiate(&name, h, config.r, Overrides::default())?;
    let ProblemInstance::Evolution(p) = &inst.problem else {
        return Err(Error::ConfigParse(format!(
            "preset '{name}' is not an evolution problem"
        )));
    };
    let lc = lipschitz_constants(p)?;
    let delta = delta_existence(p)?;
    let k = config.k.unwrap_or(6);
    let dt = config.dt.unwrap_or(delta / 200.0);
    // window (0, t1) at half the certified interval, snapped to dt
    let steps = ((0.5 * delta) / dt).floor().max(2.0) as usize;
    let t1 = steps as f64 * dt;
    let u0 = inst
        .projector
        .decompose(&|x: &[f64]| {
            let mut v = 0.5 * p.r;
            for (axis, &c) in x.iter().enumerate() {
                let _ = axis;
                v *= (std::f64::consts::PI * c).sin();
            }
            v
        })
        .map(|v| C64::new(v, 0.0));
    let sol = picard_solve(p, u0, k, dt, (0.0, t1))?;
    // bound over the integrated window; at the full delta the geometric
    // factor degenerates (c_g * delta = 1 for the linear presets)
    let bound = picard_error_bound(k, lc.c_g, lc.m_g, t1)?;
    let complex = p.scale.im != 0.0;
    let mut csv = Vec::new();
    sol.write_csv(&mut csv, complex)?;
    let file = format!("solve-evolution_{name}_{}.csv", inst.h);
    write_artifact(
        &config.out_dir,
        &file,
        std::str::from_utf8(&csv).expect("utf8 csv"),
    )?;
    let base = p.mass.norm_complex(&sol.trajectory[0]);
    let mass_ok = if complex {
        sol.mass_drift <= 1e-6 * base
    } else {
        true
    };
    let certificates_ok = mass_ok && bound.is_finite();
    let mut summary = sol.summary();
    summary["command"] = json!("solve-evolution");
    summary["preset"] = json!(name);
    summary["h"] = json!(inst.h);
    summary["bound_at_k"] = json!(bound);
    summary["csv"] = json!(file);
    write_artifact(
        &config.out_dir,
        &format!("solve-evolution_{name}_summary.json"),
        &serde_json::to_string_pretty(&summary).expect("serializable"),
    )?;
    Ok(RunOutcome {
        certificates_ok,
        summary,
    })
}
