//! Subcommand implementations.
//!
//! `demo` is literally `collect`, `synth`, `verify` run back to back on a
//! built-in benchmark configuration: each stage reads the artifact written by
//! the previous one, so a demo run and a manual pipeline run with the same
//! seed produce identical artifacts.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use niosyn_core::augmentation::{artificial_noise_bound, augment_log, ArtificialSystem};
use niosyn_core::auxrep::aux_shift;
use niosyn_core::consistency::build_set;
use niosyn_core::experiment::{assemble, collect, diagnostics, DataMatrices, ExperimentLog};
use niosyn_core::lti::StateSpaceModel;
use niosyn_core::plants;
use niosyn_core::sdp::LmiProblem;
use niosyn_core::synthesis::{
    assemble_lmi, synthesize, DynController, LmiVariant, SynthOutcome,
    SynthesisOptions,
};
use niosyn_core::verify::{certify, closed_loop_report, simulate_noisy_closed_loop};

use crate::config::RunConfig;
use crate::jsonio::*;
use crate::{CliError, ErrorKind, SynthFlags};

fn ensure_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}: {e}", out.display())))
}

fn parse_variant(s: &str) -> LmiVariant {
    match s {
        "eq18" => LmiVariant::Eq18,
        _ => LmiVariant::Zqa,
    }
}

fn parse_x0(text: Option<&str>, n: usize) -> Result<DVector<f64>, CliError> {
    match text {
        None => Ok(DVector::zeros(n)),
        Some(t) => {
            let parts: Result<Vec<f64>, _> = t.split(',').map(|p| p.trim().parse()).collect();
            let parts =
                parts.map_err(|e| CliError::schema(format!("x0 must be comma-separated: {e}")))?;
            if parts.len() != n {
                return Err(CliError::schema(format!(
                    "x0 has {} entries, plant expects {n}",
                    parts.len()
                )));
            }
            Ok(DVector::from_row_slice(&parts))
        }
    }
}

fn synth_threads() -> usize {
    std::env::var("NIO_SYNTH_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

/// Replays the plant logs through an artificial system, retrying with fresh
/// contractive draws when the augmented data miss the richness condition
/// (checked against the tightest legitimate bound, headroom 1).
fn augment_with_retries(
    config: &RunConfig,
    model: &StateSpaceModel,
    ell: usize,
    plant_logs: &[ExperimentLog],
    first: ArtificialSystem,
) -> Result<(Vec<ExperimentLog>, ArtificialSystem, f64), CliError> {
    let plan = config.plan();
    let retries = config.augment.as_ref().map_or(0, |s| s.max_retries);
    let mut candidate = first;
    let mut last_margin = f64::NEG_INFINITY;
    for attempt in 0..=retries {
        let dya = artificial_noise_bound(&candidate, plan.du_bar)
            .map_err(|e| CliError::schema(e.to_string()))?;
        let logs: Result<Vec<ExperimentLog>, _> =
            plant_logs.iter().map(|l| augment_log(l, &candidate)).collect();
        let logs = logs.map_err(|e| CliError::schema(e.to_string()))?;
        let data = assemble(&logs, ell).map_err(|e| CliError::schema(e.to_string()))?;
        let bound = niosyn_core::augmentation::augmented_energy_bound(
            plan.dy_bar, plan.du_bar, dya, ell, data.n_cols, 1.0, data.p, data.m,
        );
        let diag = diagnostics(&data, &bound);
        if diag.assumption2_ok {
            return Ok((logs, candidate, dya));
        }
        last_margin = diag.assumption2_margin;
        candidate = niosyn_core::augmentation::default_artificial(
            model.n(),
            model.p(),
            model.m(),
            ell,
            niosyn_core::augmentation::ArtificialStyle::RandomContractive {
                seed: config.seed ^ (0xA57_0000 + attempt as u64),
            },
        )
        .map_err(|e| CliError::schema(e.to_string()))?;
    }
    Err(CliError {
        kind: ErrorKind::AssumptionViolated,
        message: format!(
            "augmented data stay below the richness condition after {retries} artificial-system \
             draws (last margin {last_margin:.3e})"
        ),
    })
}

/// Collects data per the configuration and writes `data.json`.
fn collect_to_file(config: &RunConfig, out: &Path, dump_csv: bool) -> Result<PathBuf, CliError> {
    config.validate()?;
    let model = config.plant()?;
    let ell = config.resolve_ell(&model)?;
    let plan = config.plan();
    let art = config.artificial(&model, ell)?;

    let logs = collect(&model, ell, &plan, config.seed)
        .map_err(|e| CliError::schema(e.to_string()))?;
    let (logs, augmentation) = match art {
        None => (logs, None),
        Some(first) => {
            let (aug_logs, art, dya) =
                augment_with_retries(config, &model, ell, &logs, first)?;
            (
                aug_logs,
                Some(AugmentationJson {
                    a_a: MatrixJson::from_matrix(&art.a),
                    b_a: MatrixJson::from_matrix(&art.b),
                    c_a: MatrixJson::from_matrix(&art.c),
                    dya_bar: dya,
                }),
            )
        }
    };
    let data = assemble(&logs, ell).map_err(|e| CliError::schema(e.to_string()))?;

    let config_hash = content_hash(
        &serde_json::to_value(config).map_err(|e| CliError::schema(e.to_string()))?,
    );
    let doc = DataJson {
        meta: MetaJson::now(),
        seed: config.seed,
        ell,
        p: data.p,
        m: data.m,
        n_cols: data.n_cols,
        config_hash,
        plan: PlanJson {
            num_experiments: plan.num_experiments,
            samples_per_experiment: plan.samples_per_experiment,
            input_amplitude: plan.input_amplitude,
            du_bar: plan.du_bar,
            dy_bar: plan.dy_bar,
            x0_amplitude: plan.x0_amplitude,
        },
        augmentation,
        logs: logs
            .iter()
            .map(|l| LogJson {
                u_meas: vector_list(&l.u_meas),
                y_meas: vector_list(&l.y_meas),
            })
            .collect(),
        psi1: MatrixJson::from_matrix(&data.psi1),
        psi0: MatrixJson::from_matrix(&data.psi0),
        u1: MatrixJson::from_matrix(&data.u1),
    };
    ensure_out(out)?;
    let path = out.join("data.json");
    write_json(&path, &doc)?;
    if dump_csv {
        write_csv_matrix(&out.join("psi1.csv"), &data.psi1)?;
        write_csv_matrix(&out.join("psi0.csv"), &data.psi0)?;
        write_csv_matrix(&out.join("u1.csv"), &data.u1)?;
    }
    Ok(path)
}

pub fn cmd_collect(
    config_path: &Path,
    seed_override: Option<u64>,
    dump_csv: bool,
    out: &Path,
) -> Result<(), CliError> {
    let (mut config, _) = read_json::<RunConfig>(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let path = collect_to_file(&config, out, dump_csv)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn dump_lmi(problem: &LmiProblem, path: &Path) -> Result<(), CliError> {
    #[derive(serde::Serialize)]
    struct VarDto {
        name: String,
        rows: usize,
        cols: usize,
        symmetric: bool,
        require_pd: bool,
    }
    #[derive(serde::Serialize)]
    struct TermDto {
        var: usize,
        block_row: usize,
        block_col: usize,
        left: MatrixJson,
        right: MatrixJson,
        transpose: bool,
    }
    #[derive(serde::Serialize)]
    struct ConstraintDto {
        name: String,
        block_sizes: Vec<usize>,
        constant: MatrixJson,
        terms: Vec<TermDto>,
    }
    #[derive(serde::Serialize)]
    struct ProblemDto {
        epsilon: Option<f64>,
        vars: Vec<VarDto>,
        constraints: Vec<ConstraintDto>,
    }
    let dto = ProblemDto {
        epsilon: problem.epsilon,
        vars: problem
            .vars
            .iter()
            .map(|v| VarDto {
                name: v.name.clone(),
                rows: v.rows,
                cols: v.cols,
                symmetric: v.symmetric,
                require_pd: v.require_pd,
            })
            .collect(),
        constraints: problem
            .constraints
            .iter()
            .map(|c| ConstraintDto {
                name: c.name.clone(),
                block_sizes: c.block_sizes.clone(),
                constant: MatrixJson::from_matrix(&c.constant),
                terms: c
                    .terms
                    .iter()
                    .map(|t| TermDto {
                        var: t.var,
                        block_row: t.block_row,
                        block_col: t.block_col,
                        left: MatrixJson::from_matrix(&t.left),
                        right: MatrixJson::from_matrix(&t.right),
                        transpose: t.transpose,
                    })
                    .collect(),
            })
            .collect(),
    };
    write_json(path, &dto)?;
    Ok(())
}

/// Synthesizes from a data artifact and writes `controller.json`.
fn synth_from_file(
    data_path: &Path,
    flags: &SynthFlags,
    default_theta_scale: f64,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let (doc, data_hash) = read_json::<DataJson>(data_path)?;
    let theta_scale = flags.theta_scale.unwrap_or(default_theta_scale);
    if theta_scale <= 0.0 {
        return Err(CliError::schema("theta-scale must be positive"));
    }

    let data = DataMatrices {
        p: doc.p,
        m: doc.m,
        ell: doc.ell,
        psi1: doc.psi1.to_matrix()?,
        psi0: doc.psi0.to_matrix()?,
        u1: doc.u1.to_matrix()?,
        n_cols: doc.n_cols,
        delta10: None,
        s0: None,
        n0: None,
    };
    let w = (doc.p + doc.m) * doc.ell;
    if data.psi1.shape() != (w, doc.n_cols) || data.psi0.shape() != (w, doc.n_cols) {
        return Err(CliError::schema("window matrices do not match dims"));
    }

    let art = doc
        .augmentation
        .as_ref()
        .map(|a| -> Result<(ArtificialSystem, f64), CliError> {
            let art = ArtificialSystem::new(
                a.a_a.to_matrix()?,
                a.b_a.to_matrix()?,
                a.c_a.to_matrix()?,
            )
            .map_err(|e| CliError::schema(e.to_string()))?;
            Ok((art, a.dya_bar))
        })
        .transpose()?;

    let dya_bar = art.as_ref().map_or(0.0, |(_, d)| *d);
    let bound = niosyn_core::augmentation::augmented_energy_bound(
        doc.plan.dy_bar,
        doc.plan.du_bar,
        dya_bar,
        doc.ell,
        doc.n_cols,
        theta_scale,
        doc.p,
        doc.m,
    );
    let level = bound.theta[(0, 0)];

    let diag = diagnostics(&data, &bound);
    let shift = aux_shift(doc.p, doc.m, doc.ell);
    let set = build_set(&data, &bound, &shift).map_err(|e| CliError {
        kind: ErrorKind::AssumptionViolated,
        message: e.to_string(),
    })?;

    let opts = SynthesisOptions {
        variant: parse_variant(&flags.variant),
        epsilon: flags.epsilon,
        ..Default::default()
    };
    ensure_out(out)?;
    // Audit artifact: the full description of the consistent set.
    #[derive(serde::Serialize)]
    struct SetDto {
        acal: MatrixJson,
        bcal: MatrixJson,
        ccal: MatrixJson,
        zcen: MatrixJson,
        qcal: MatrixJson,
        radius: f64,
    }
    write_json(
        &out.join("set.json"),
        &SetDto {
            acal: MatrixJson::from_matrix(set.acal()),
            bcal: MatrixJson::from_matrix(set.bcal()),
            ccal: MatrixJson::from_matrix(set.ccal()),
            zcen: MatrixJson::from_matrix(set.zcen()),
            qcal: MatrixJson::from_matrix(set.qcal()),
            radius: set.radius(),
        },
    )?;
    if flags.dump_lmi {
        let problem = assemble_lmi(&set, &shift, opts.epsilon, opts.variant)
            .map_err(CliError::from)?;
        dump_lmi(&problem, &out.join("lmi.json"))?;
    }
    let result = match synthesize(&set, &shift, &opts).map_err(CliError::from)? {
        SynthOutcome::Feasible(result) => result,
        SynthOutcome::Infeasible { best_margin } => {
            return Err(CliError {
                kind: ErrorKind::Infeasible,
                message: format!(
                    "no gain stabilizes every system consistent with the data \
                     (best normalized level {best_margin:.3e})"
                ),
            })
        }
    };

    let cert = certify(
        &set,
        &shift,
        &result.k,
        &result.p,
        200,
        doc.seed ^ 0xC397_11AA,
        synth_threads(),
    );

    let controller = ControllerJson {
        meta: MetaJson::now(),
        seed: doc.seed,
        data_hash,
        theta: ThetaJson {
            dy_bar: doc.plan.dy_bar,
            du_bar: doc.plan.du_bar,
            dya_bar,
            scale: theta_scale,
            n_cols: doc.n_cols,
            level,
        },
        epsilon: result.epsilon,
        variant: result.variant.as_str().to_string(),
        shift: ShiftJson { p: doc.p, m: doc.m, ell: doc.ell },
        k: MatrixJson::from_matrix(&result.k),
        p_lyap: MatrixJson::from_matrix(&result.p),
        y: MatrixJson::from_matrix(&result.y),
        achieved_margin: result.achieved_margin,
        p_condition: result.p_condition,
        assumption2_margin: diag.assumption2_margin,
        augmentation: doc.augmentation.clone(),
        certification: CertificationJson {
            samples: cert.samples,
            failures: cert.failures,
            worst_lyapunov_slack: cert.worst_lyapunov_slack,
            worst_spectral_radius: cert.worst_spectral_radius,
            all_pass: cert.all_pass,
        },
    };
    let path = out.join("controller.json");
    write_json(&path, &controller)?;
    if !cert.all_pass {
        return Err(CliError {
            kind: ErrorKind::Numerical,
            message: format!(
                "certification failed on {} of {} samples",
                cert.failures, cert.samples
            ),
        });
    }
    Ok(path)
}

pub fn cmd_synth(data_path: &Path, flags: &SynthFlags, out: &Path) -> Result<(), CliError> {
    let path = synth_from_file(data_path, flags, 1.0, out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn controller_from_doc(doc: &ControllerJson) -> Result<DynController, CliError> {
    let shift = aux_shift(doc.shift.p, doc.shift.m, doc.shift.ell);
    let k = doc.k.to_matrix()?;
    if k.nrows() != doc.shift.m || k.ncols() != shift.dim() {
        return Err(CliError::schema(format!(
            "gain is {}x{}, shift expects {}x{}",
            k.nrows(),
            k.ncols(),
            doc.shift.m,
            shift.dim()
        )));
    }
    let augmentation = doc
        .augmentation
        .as_ref()
        .map(|a| -> Result<ArtificialSystem, CliError> {
            ArtificialSystem::new(a.a_a.to_matrix()?, a.b_a.to_matrix()?, a.c_a.to_matrix()?)
                .map_err(|e| CliError::schema(e.to_string()))
        })
        .transpose()?;
    Ok(DynController { shift, k, augmentation })
}

#[allow(clippy::too_many_arguments)]
fn verify_to_file(
    plant_path: &Path,
    controller_path: &Path,
    seed: u64,
    horizon: usize,
    du_bar: f64,
    dy_bar: f64,
    x0_text: Option<&str>,
    out: &Path,
) -> Result<(PathBuf, bool), CliError> {
    let (plant_doc, plant_hash) = read_json::<PlantJson>(plant_path)?;
    let plant = plant_doc.to_model()?;
    let (ctrl_doc, controller_hash) = read_json::<ControllerJson>(controller_path)?;
    let ctrl = controller_from_doc(&ctrl_doc)?;

    let report = closed_loop_report(&plant, &ctrl).map_err(|e| CliError::schema(e.to_string()))?;
    let x0 = parse_x0(x0_text, plant.n())?;
    let run = simulate_noisy_closed_loop(&plant, &ctrl, du_bar, dy_bar, &x0, horizon, seed)
        .map_err(|e| CliError::schema(e.to_string()))?;

    let ok = report.schur && !run.diverged;
    let doc = ReportJson {
        meta: MetaJson::now(),
        seed,
        plant_hash,
        controller_hash,
        closed_loop: ClosedLoopJson {
            dim: report.matrix.nrows(),
            eigenvalues: report.eigenvalues.iter().map(|l| [l.re, l.im]).collect(),
            spectral_radius: report.spectral_radius,
            schur: report.schur,
        },
        noisy_run: Some(NoisyRunJson {
            seed,
            horizon,
            du_bar,
            dy_bar,
            x0: x0.iter().copied().collect(),
            tail_max_y: run.tail_max_y,
            max_y: run.max_y,
            diverged: run.diverged,
        }),
        verdict: if ok { "ok".to_string() } else { "not-schur".to_string() },
    };
    ensure_out(out)?;
    let path = out.join("report.json");
    write_json(&path, &doc)?;
    Ok((path, ok))
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_verify(
    plant: &Path,
    controller: &Path,
    seed: u64,
    horizon: usize,
    du_bar: f64,
    dy_bar: f64,
    x0: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let (path, ok) = verify_to_file(plant, controller, seed, horizon, du_bar, dy_bar, x0, out)?;
    eprintln!("wrote {}", path.display());
    if !ok {
        return Err(CliError {
            kind: ErrorKind::Infeasible,
            message: "closed loop is not certified Schur".into(),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    plant_path: &Path,
    controller_path: &Path,
    seed: u64,
    horizon: usize,
    du_bar: f64,
    dy_bar: f64,
    x0_text: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let (plant_doc, _) = read_json::<PlantJson>(plant_path)?;
    let plant = plant_doc.to_model()?;
    let (ctrl_doc, _) = read_json::<ControllerJson>(controller_path)?;
    let ctrl = controller_from_doc(&ctrl_doc)?;
    let x0 = parse_x0(x0_text, plant.n())?;
    let run = simulate_noisy_closed_loop(&plant, &ctrl, du_bar, dy_bar, &x0, horizon, seed)
        .map_err(|e| CliError::schema(e.to_string()))?;

    ensure_out(out)?;
    let y = nalgebra::DMatrix::from_fn(run.y_true.len(), plant.p(), |i, j| run.y_true[i][j]);
    let u = nalgebra::DMatrix::from_fn(run.u_cmd.len(), plant.m(), |i, j| run.u_cmd[i][j]);
    write_csv_matrix(&out.join("y.csv"), &y)?;
    write_csv_matrix(&out.join("u.csv"), &u)?;
    let summary = NoisyRunJson {
        seed,
        horizon,
        du_bar,
        dy_bar,
        x0: x0.iter().copied().collect(),
        tail_max_y: run.tail_max_y,
        max_y: run.max_y,
        diverged: run.diverged,
    };
    write_json(&out.join("simulation.json"), &summary)?;
    if run.diverged {
        return Err(CliError {
            kind: ErrorKind::Infeasible,
            message: "closed-loop state diverged".into(),
        });
    }
    eprintln!("wrote {}", out.join("simulation.json").display());
    Ok(())
}

/// Built-in demo configuration for one of the benchmark plants.
fn demo_config(name: &str, seed: u64, noise_scale: f64) -> Result<(RunConfig, StateSpaceModel), CliError> {
    let (model, plan, augment) = match name {
        "batch-reactor" => (plants::batch_reactor(), plants::batch_reactor_plan(), None),
        "augmented" => (
            plants::oscillator_integrator(),
            plants::oscillator_integrator_plan(),
            Some(crate::config::AugmentationSpec {
                style: Some("plain-ones".to_string()),
                seed: None,
                a_a: None,
                b_a: None,
                c_a: None,
                max_retries: 8,
            }),
        ),
        other => return Err(CliError::schema(format!("unknown demo '{other}'"))),
    };
    let config = RunConfig {
        plant: crate::config::PlantSpec::Explicit(PlantJson::from_model(&model)),
        ell: crate::config::EllSpec::Auto("auto".to_string()),
        num_experiments: plan.num_experiments,
        samples_per_experiment: plan.samples_per_experiment,
        input_amplitude: plan.input_amplitude,
        du_bar: plan.du_bar * noise_scale,
        dy_bar: plan.dy_bar * noise_scale,
        x0_amplitude: plan.x0_amplitude,
        seed,
        augment,
    };
    Ok((config, model))
}

pub fn cmd_demo(
    name: &str,
    seed: u64,
    flags: &SynthFlags,
    noise_scale: f64,
    out: &Path,
) -> Result<(), CliError> {
    let (config, model) = demo_config(name, seed, noise_scale)?;
    ensure_out(out)?;
    let plant_path = out.join("plant.json");
    write_json(&plant_path, &PlantJson::from_model(&model))?;

    let data_path = collect_to_file(&config, out, false)?;
    // The benchmark noise bound carries the published factor-two headroom.
    let controller_path = synth_from_file(&data_path, flags, 2.0, out)?;

    let x0 = if name == "augmented" {
        Some("-0.07,-2.19,-2.49".to_string())
    } else {
        None
    };
    let (report_path, ok) = verify_to_file(
        &plant_path,
        &controller_path,
        seed,
        400,
        config.du_bar,
        config.dy_bar,
        x0.as_deref(),
        out,
    )?;
    eprintln!(
        "wrote {}, {}, {}",
        data_path.display(),
        controller_path.display(),
        report_path.display()
    );
    if !ok {
        return Err(CliError {
            kind: ErrorKind::Infeasible,
            message: "closed loop is not certified Schur".into(),
        });
    }
    Ok(())
}
