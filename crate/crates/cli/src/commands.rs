use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use mird::diffusion::verify::{mc_verify, reduction_check, schedule_checks, Scenario};
use mird::diffusion::SamplerOptions;
use mird::flow::{read_flo, FlowParams};
use mird::imaging::{psnr, read_png, ssim, write_png, Image};
use mird::pipeline::{interpolate as run_interpolate, prepare, prepared_uncertainty, rmse_map, InterpConfig};
use mird::schedule::{partition_weights, NoiseSchedule};
use mird::synth::{gen_triplet, load_triplets, random_triplet, save_triplet, SceneSpec};
use mird::taumetric::{analyze_tau, batch_tau, tau_histogram, write_tau_csv, FlowSource, TauEstimate};
use mird::Error;
use rayon::prelude::*;
use serde_json::json;

use crate::{InterpCommon, InterpolateArgs, ScheduleCmdArgs, SynthArgs, TauArgs, UncertaintyArgs, VerifyArgs};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io(PathBuf, io::Error),
    VerifyFailed(Vec<String>),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerifyFailed(_) => 1,
            CliError::Io(..) => 3,
            CliError::Core(e) => match e.root() {
                Error::Io { .. } | Error::Codec(_) | Error::Format { .. } => 3,
                Error::Numerical { .. } => 4,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
            CliError::VerifyFailed(checks) => write!(f, "verification failed: {}", checks.join(", ")),
        }
    }
}

type CliResult = Result<(), CliError>;

fn write_file(path: &Path, contents: &[u8]) -> CliResult {
    fs::write(path, contents).map_err(|e| CliError::Io(path.to_owned(), e))
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| CliError::Io(path.to_owned(), e))
}

fn stdout_write(bytes: &[u8]) -> CliResult {
    io::stdout()
        .lock()
        .write_all(bytes)
        .map_err(|e| CliError::Io("<stdout>".into(), e))
}

struct Inputs {
    i0: Image,
    i1: Image,
    gt: Option<Image>,
    cfg: InterpConfig,
}

fn load_inputs(a: &InterpCommon) -> Result<Inputs, CliError> {
    let cfg = InterpConfig {
        schedule: a.schedule.config(),
        denoiser: a.denoiser,
        tau: a.tau,
        infill: a.infill,
        seed: a.seed,
        ..InterpConfig::default()
    };
    cfg.schedule.validate()?;
    Ok(Inputs {
        i0: read_png(&a.i0)?,
        i1: read_png(&a.i1)?,
        gt: a.gt.as_ref().map(read_png).transpose()?,
        cfg,
    })
}

pub fn interpolate(a: InterpolateArgs) -> CliResult {
    let start = Instant::now();
    let inp = load_inputs(&a.common)?;
    let options = SamplerOptions {
        keep_trajectory: a.dump_trajectory.is_some(),
    };
    let out = run_interpolate(&inp.i0, &inp.i1, &inp.cfg, inp.gt.as_ref(), options)?;
    write_png(&out.output, &a.out)?;
    if let (Some(dir), Some(traj)) = (&a.dump_trajectory, &out.run.trajectory) {
        create_dir(dir)?;
        let steps = traj.len() - 1;
        for (k, x) in traj.iter().enumerate() {
            write_png(&x.clamp_unit(), dir.join(format!("x_{:03}.png", steps - k)))?;
        }
    }
    let mut summary = json!({
        "tau_used": out.tau_used,
        "steps": inp.cfg.schedule.steps,
        "seed": inp.cfg.seed,
        "denoiser": inp.cfg.denoiser,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    if let Some(gt) = &inp.gt {
        summary["psnr"] = json!(psnr(&out.output, gt)?);
        summary["ssim"] = ssim(&out.output, gt).map_or(serde_json::Value::Null, |v| json!(v));
    }
    stdout_write(format!("{summary}\n").as_bytes())
}

/// Scales a non-negative map so its maximum is 1; returns the factor.
fn display_scale(maps: &[&Image]) -> f64 {
    let peak = maps.iter().flat_map(|m| m.data()).copied().fold(0.0, f64::max);
    if peak > 0.0 {
        1.0 / peak
    } else {
        1.0
    }
}

pub fn uncertainty(a: UncertaintyArgs) -> CliResult {
    let inp = load_inputs(&a.common)?;
    let prep = prepare(&inp.i0, &inp.i1, &inp.cfg, inp.gt.as_ref())?;
    let report = prepared_uncertainty(&prep, inp.cfg.seed, a.samples as usize)?;
    create_dir(&a.out_dir)?;
    let scale = display_scale(&[&report.minmax_map, &report.sd_map]);
    write_png(&report.mean_img, a.out_dir.join("mean.png"))?;
    write_png(&report.sd_map.map(|v| (v * scale).min(1.0)), a.out_dir.join("sd.png"))?;
    write_png(
        &report.minmax_map.map(|v| (v * scale).min(1.0)),
        a.out_dir.join("minmax.png"),
    )?;
    let mut summary = json!({
        "samples": report.samples,
        "corr": report.mean_pairwise_corr,
        "global_sd": report.global_sd(),
        "global_minmax": report.global_minmax(),
        "display_scale": scale,
        "seed": inp.cfg.seed,
    });
    if let Some(gt) = &inp.gt {
        // Error of the single interpolation (run seed), as opposed to the ensemble mean.
        let output = prep.sample(inp.cfg.seed, SamplerOptions::default())?.final_image;
        write_png(&output, a.out_dir.join("interp.png"))?;
        let rmse = rmse_map(&output, gt)?;
        let rs = display_scale(&[&rmse]);
        write_png(&rmse.map(|v| v * rs), a.out_dir.join("rmse.png"))?;
        summary["rmse_display_scale"] = json!(rs);
        summary["sd_rmse_corr"] = json!(mird::pipeline::pearson(report.sd_map.data(), rmse.data()));
    }
    let text = format!("{summary}\n");
    write_file(&a.out_dir.join("summary.json"), text.as_bytes())?;
    stdout_write(text.as_bytes())
}

fn estimate_json(e: &TauEstimate) -> serde_json::Value {
    json!({ "tau": e.tau, "mass0": e.mass_0, "mass1": e.mass_1, "degenerate": e.degenerate })
}

pub fn tau(a: TauArgs) -> CliResult {
    if let Some(dir) = &a.dir {
        return batch(dir, a.csv.as_deref(), a.histogram.as_deref());
    }
    let (Some(p0), Some(pt), Some(p1)) = (&a.i0, &a.itau, &a.i1) else {
        unreachable!("clap requires the three frames outside batch mode");
    };
    let (i0, it, i1) = (read_png(p0)?, read_png(pt)?, read_png(p1)?);
    let source = match (&a.flow0, &a.flow1) {
        (Some(f0), Some(f1)) => FlowSource::Injected {
            f0_tau: read_flo(f0)?,
            f1_tau: read_flo(f1)?,
        },
        _ => FlowSource::Estimator(FlowParams::default()),
    };
    let analysis = analyze_tau(&i0, &it, &i1, &source)?;
    if let Some(dir) = &a.mask_dir {
        create_dir(dir)?;
        write_png(&analysis.mask_0.to_image(), dir.join("mask0.png"))?;
        write_png(&analysis.mask_1.to_image(), dir.join("mask1.png"))?;
    }
    stdout_write(format!("{}\n", estimate_json(&analysis.estimate)).as_bytes())
}

fn batch(dir: &Path, csv: Option<&Path>, histogram: Option<&Path>) -> CliResult {
    let (samples, broken) = load_triplets(dir)?;
    for (path, e) in &broken {
        eprintln!("skipped {}: {e}", path.display());
    }
    if samples.is_empty() {
        eprintln!("warning: no triplets found under {}", dir.display());
    }
    let estimates = batch_tau(&samples, &FlowParams::default());
    let mut rows = Vec::new();
    for (s, e) in samples.iter().zip(estimates) {
        let path = dir.join(&s.name).display().to_string();
        match e {
            Ok(e) => rows.push((path, e)),
            Err(e) => eprintln!("skipped {path}: {e}"),
        }
    }
    let mut out = Vec::new();
    write_tau_csv(&rows, &mut out).map_err(|e| CliError::Io("<csv>".into(), e))?;
    match csv {
        Some(p) => write_file(p, &out)?,
        None => stdout_write(&out)?,
    }
    let taus: Vec<f64> = rows.iter().map(|(_, e)| e.tau).collect();
    let summary = tau_histogram(&taus).summary();
    match histogram {
        Some(p) => write_file(p, summary.as_bytes()),
        None => {
            eprint!("{summary}");
            Ok(())
        }
    }
}

pub fn schedule(a: ScheduleCmdArgs) -> CliResult {
    let mut cfg = a.schedule.config();
    if let Some(w) = a.weights {
        cfg.weights = w;
    } else if let Some(t) = a.tau {
        cfg.weights = partition_weights(t)?.to_vec();
    }
    let sched = NoiseSchedule::build(&cfg)?;
    let mut out = Vec::new();
    sched.write_csv(&mut out).map_err(|e| CliError::Io("<csv>".into(), e))?;
    stdout_write(&out)
}

pub fn synth(a: SynthArgs) -> CliResult {
    if let Some(spec_path) = &a.spec {
        let text = fs::read_to_string(spec_path).map_err(|e| CliError::Io(spec_path.clone(), e))?;
        let spec = SceneSpec::from_json(&text)?;
        let mut sample = gen_triplet(&spec, a.tau.expect("clap requires --tau with --spec"))?;
        if !a.flow {
            sample.gt_flow_01 = None;
        }
        save_triplet(&sample, &a.out)?;
        return stdout_write(format!("{}\n", json!({ "written": 1, "out": a.out })).as_bytes());
    }
    let count = a.count.expect("clap requires --count without --spec");
    if a.tau_min > a.tau_max {
        return Err(Error::Config(format!("--tau-min {} exceeds --tau-max {}", a.tau_min, a.tau_max)).into());
    }
    create_dir(&a.out)?;
    (0..count).into_par_iter().try_for_each(|k| {
        let mut sample = random_triplet(a.seed, k, a.height, a.width, (a.tau_min, a.tau_max))?;
        if !a.flow {
            sample.gt_flow_01 = None;
        }
        save_triplet(&sample, a.out.join(&sample.name))
    })?;
    stdout_write(format!("{}\n", json!({ "written": count, "out": a.out })).as_bytes())
}

pub fn verify(a: VerifyArgs) -> CliResult {
    let cfg = a.schedule.config();
    let mut sched = NoiseSchedule::build(&cfg)?;
    if a.inject_broken_schedule {
        let mut sums = sched.eta_sums().to_vec();
        let mid = sums.len() / 2;
        sums.swap(mid, mid + 1);
        sched = NoiseSchedule::from_ladder_unchecked(sums, cfg.weights.clone(), cfg.kappa);
    }
    let mut report = schedule_checks(&sched, cfg.eta_1_sum(), cfg.eta_t_sum);
    report.extend(reduction_check(1000, a.seed)?);
    report.extend(mc_verify(&sched, &Scenario::default(), a.samples as usize, a.seed)?);
    stdout_write(report.to_csv().as_bytes())?;
    if report.all_passed() {
        Ok(())
    } else {
        let mut failed: Vec<String> = report
            .failures()
            .map(|r| format!("{}/{}", r.check, r.statistic))
            .collect();
        failed.dedup();
        Err(CliError::VerifyFailed(failed))
    }
}
