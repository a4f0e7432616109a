//! One function per subcommand, all returning the library's `Result` so
//! `main` can translate usage errors and internal failures into distinct
//! exit codes.

use std::path::{Path, PathBuf};

use sop_core::calibrate::{
    calibrate, calibrate_parallel_capped, load_run, save_run, CalibrateHyper, CalibrationMode,
    CalibrationRun,
};
use sop_core::data::{
    default_ratios, generate_synthetic, load_csv, prepare, write_csv, PreparedData, RawSeries,
    Split, SynthSpec,
};
use sop_core::error::{Error, Result};
use sop_core::eval::{emit_report, evaluate, metrics_csv, metrics_rows, promotion, transfer,
    MtlcReport, Report};
use sop_core::numerics::Rng;
use sop_core::plug::{partition, Axis, PlugBank};
use sop_core::socket::{
    cache_predictions, export_predictions, load_external_predictions, load_socket, save_socket,
    train_socket, FrozenSocket, PredictionCache, SocketHyper, SocketKind,
};

use crate::config::{write_resolved, ExperimentConfig, PlugCount};

fn parse_kind(s: &str) -> Result<SocketKind> {
    match s {
        "linear-decomp" => Ok(SocketKind::LinearDecomp),
        "mlp" => Ok(SocketKind::Mlp),
        "external" => Ok(SocketKind::External),
        other => Err(Error::Config(format!(
            "socket_kind must be linear-decomp, mlp or external, got \"{other}\""
        ))),
    }
}

fn parse_axis(s: &str) -> Result<Axis> {
    match s {
        "variable" => Ok(Axis::Variable),
        "step" => Ok(Axis::Step),
        other => Err(Error::Config(format!(
            "plug_axis must be variable or step, got \"{other}\""
        ))),
    }
}

fn parse_mode(s: &str) -> Result<CalibrationMode> {
    match s {
        "non-collective" => Ok(CalibrationMode::PerGroup),
        "collective" => Ok(CalibrationMode::Collective),
        other => Err(Error::Config(format!(
            "mode must be non-collective or collective, got \"{other}\""
        ))),
    }
}

/// The one seed in the config drives everything; the generator gets its
/// own derived stream so dataset noise and model init never collide.
fn synth_spec(cfg: &ExperimentConfig) -> SynthSpec {
    SynthSpec {
        n: cfg.synth_n,
        length: cfg.synth_length,
        periods: cfg.synth_periods.clone(),
        noise_std: cfg.synth_noise_std.clone(),
        slopes: cfg.synth_slopes.clone(),
        rho: cfg.synth_rho,
        seed: Rng::new(cfg.seed).derive("synth").next_u64(),
    }
}

fn load_series(cfg: &ExperimentConfig) -> Result<RawSeries> {
    match &cfg.dataset {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "dataset {} not found",
                    path.display()
                )));
            }
            load_csv(path)
        }
        None => generate_synthetic(&synth_spec(cfg)),
    }
}

fn prepared(cfg: &ExperimentConfig, series: &RawSeries) -> Result<PreparedData> {
    prepare(series, cfg.t, cfg.s, cfg.stride, cfg.split)
}

/// A socket directory is either a trained model (`socket.json`) or an
/// exported prediction bundle (`predictions.json`).
fn load_socket_any(dir: &Path) -> Result<FrozenSocket> {
    if dir.join("predictions.json").exists() {
        load_external_predictions(dir)
    } else if dir.join("socket.json").exists() {
        load_socket(dir)
    } else {
        Err(Error::Config(format!(
            "{} holds neither socket.json nor predictions.json",
            dir.display()
        )))
    }
}

fn require_socket_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.socket.clone().ok_or_else(|| {
        Error::Config("this command needs a socket directory (--socket or config key \"socket\")".into())
    })
}

/// Train/val/test caches for a socket: external bundles carry them,
/// trainable sockets run over the configured dataset's windows. The
/// fingerprint check refuses a dataset or windowing different from the one
/// the socket was trained on.
fn socket_caches(
    cfg: &ExperimentConfig,
    socket: &FrozenSocket,
) -> Result<(PredictionCache, PredictionCache, PredictionCache)> {
    if socket.kind == SocketKind::External {
        return Ok((
            socket.external_cache(Split::Train)?.clone(),
            socket.external_cache(Split::Val)?.clone(),
            socket.external_cache(Split::Test)?.clone(),
        ));
    }
    let series = load_series(cfg)?;
    let data = prepared(cfg, &series)?;
    if data.fingerprint != socket.fingerprint {
        return Err(Error::Config(format!(
            "socket was trained on different data or windowing (fingerprint {} vs {})",
            socket.fingerprint, data.fingerprint
        )));
    }
    let c = |split: Split| {
        cache_predictions(socket, data.windows(split), split, &data.fingerprint)
    };
    Ok((c(Split::Train)?, c(Split::Val)?, c(Split::Test)?))
}

/// Materializes the optional knobs the command actually used, so the
/// emitted file replays the run without any other input. `plugs` stays
/// untouched for commands that never build a bank.
fn materialized(
    cfg: &ExperimentConfig,
    dataset_name: &str,
    plugs: Option<usize>,
    socket: Option<&Path>,
) -> ExperimentConfig {
    let mut out = cfg.clone();
    out.split = Some(cfg.split.unwrap_or_else(|| default_ratios(dataset_name)));
    if let Some(count) = plugs {
        out.plug_count = PlugCount::Count(count);
        out.workers = Some(cfg.workers.unwrap_or(count.max(1)));
    }
    if let Some(dir) = socket {
        out.socket = Some(dir.to_path_buf());
    }
    out
}

fn dataset_name(cfg: &ExperimentConfig, socket: &FrozenSocket) -> String {
    if socket.kind == SocketKind::External {
        return "external".into();
    }
    match &cfg.dataset {
        Some(path) => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        None => "synthetic".into(),
    }
}

pub fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let series = generate_synthetic(&synth_spec(cfg))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("data.csv");
    write_csv(&path, &series)?;
    write_resolved(out, &materialized(cfg, &series.name, None, None))?;
    println!(
        "wrote {} ({} rows x {} variables)",
        path.display(),
        series.rows(),
        series.n()
    );
    Ok(())
}

pub fn train_socket_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let kind = parse_kind(&cfg.socket_kind)?;
    if kind == SocketKind::External {
        return Err(Error::Config(
            "external sockets are imported with predict-socket output, not trained".into(),
        ));
    }
    let series = load_series(cfg)?;
    let data = prepared(cfg, &series)?;
    let hyper = SocketHyper {
        hidden: cfg.socket_hidden,
        kernel: cfg.socket_kernel,
        lr: cfg.socket_lr,
        batch_size: cfg.socket_batch_size,
        max_epochs: cfg.socket_max_epochs,
        patience: cfg.socket_patience,
    };
    let (socket, report) = train_socket(kind, &data, &hyper, cfg.seed)?;
    save_socket(out, &socket)?;
    let report_path = out.join("train_report.json");
    let body =
        serde_json::to_string_pretty(&report).map_err(|e| Error::json(&report_path, e))?;
    std::fs::write(&report_path, body).map_err(|e| Error::io(&report_path, e))?;
    write_resolved(out, &materialized(cfg, &series.name, None, None))?;
    println!(
        "trained {} socket {} (best val {:.6} at epoch {})",
        socket.kind.name(),
        &socket.digest[..16],
        report.best_val,
        report.best_epoch
    );
    Ok(())
}

pub fn predict_socket(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = require_socket_dir(cfg)?;
    let socket = load_socket_any(&dir)?;
    if socket.kind == SocketKind::External {
        return Err(Error::Config(
            "that directory already holds exported predictions".into(),
        ));
    }
    let (train_c, val_c, test_c) = socket_caches(cfg, &socket)?;
    export_predictions(out, &socket, &[train_c, val_c, test_c])?;
    write_resolved(out, &materialized(cfg, &dataset_name(cfg, &socket), None, Some(&dir)))?;
    println!("exported predictions for socket {}", &socket.digest[..16]);
    Ok(())
}

pub fn calibrate_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = require_socket_dir(cfg)?;
    let socket = load_socket_any(&dir)?;
    let (train_c, val_c, test_c) = socket_caches(cfg, &socket)?;

    let axis = parse_axis(&cfg.plug_axis)?;
    let axis_len = match axis {
        Axis::Variable => train_c.n(),
        Axis::Step => train_c.s(),
    };
    let count = cfg.plug_count.resolve(axis_len)?;
    let spec = partition(axis, train_c.n(), train_c.s(), count)?;
    let mode = parse_mode(&cfg.mode)?;
    let hyper = CalibrateHyper {
        d: cfg.d,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        eps: cfg.eps,
    };
    let bank = PlugBank::init(spec, hyper.d, hyper.eps, cfg.seed)?;
    let workers = cfg.workers.unwrap_or(count).max(1);
    let (bank, run) = if cfg.parallel {
        calibrate_parallel_capped(mode, &train_c, &val_c, bank, &hyper, cfg.seed, workers)?
    } else {
        calibrate(mode, &train_c, &val_c, bank, &hyper, cfg.seed)?
    };
    save_run(out, &run, &bank)?;
    write_resolved(out, &materialized(cfg, &dataset_name(cfg, &socket), Some(count), Some(&dir)))?;

    let base = evaluate(&test_c.yhat, &test_c.y)?;
    let cal = evaluate(&bank.apply(&test_c.yhat)?, &test_c.y)?;
    let promo = promotion(base.overall.mse, cal.overall.mse)?;
    println!(
        "{} M={}: test mse {:.6} -> {:.6} (promotion {:+.3}%), stop epochs {:?}",
        run.mode.name(),
        count,
        base.overall.mse,
        cal.overall.mse,
        promo,
        run.stop_epochs()
    );
    Ok(())
}

fn load_run_dir(run_dir: &Path) -> Result<(CalibrationRun, PlugBank<f32>)> {
    if !run_dir.join("run.json").exists() {
        return Err(Error::Config(format!(
            "{} is not a calibration run directory",
            run_dir.display()
        )));
    }
    load_run(run_dir)
}

/// The socket a run was calibrated against, loaded and verified by digest.
fn socket_for_run(cfg: &ExperimentConfig, run: &CalibrationRun) -> Result<FrozenSocket> {
    let dir = require_socket_dir(cfg)?;
    let socket = load_socket_any(&dir)?;
    if socket.digest != run.socket_digest {
        return Err(Error::Config(format!(
            "run was calibrated against socket {}, directory holds {}",
            &run.socket_digest[..16],
            &socket.digest[..16]
        )));
    }
    Ok(socket)
}

pub fn eval_cmd(cfg: &ExperimentConfig, run_dir: &Path, out: Option<&Path>) -> Result<()> {
    let (run, bank) = load_run_dir(run_dir)?;
    let socket = socket_for_run(cfg, &run)?;
    let (_, _, test_c) = socket_caches(cfg, &socket)?;
    let base = evaluate(&test_c.yhat, &test_c.y)?;
    let cal = evaluate(&bank.apply(&test_c.yhat)?, &test_c.y)?;
    let promo = promotion(base.overall.mse, cal.overall.mse)?;

    let out = out.unwrap_or(run_dir);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rows = metrics_rows("base", &base);
    rows.extend(metrics_rows("calibrated", &cal));
    let path = out.join("metrics.csv");
    std::fs::write(&path, metrics_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    println!(
        "test mse {:.6} -> {:.6}, mae {:.6} -> {:.6}, promotion {:+.3}%",
        base.overall.mse, cal.overall.mse, base.overall.mae, cal.overall.mae, promo
    );
    Ok(())
}

pub fn report_cmd(cfg: &ExperimentConfig, run_dir: &Path, out: Option<&Path>) -> Result<()> {
    let (run, bank) = load_run_dir(run_dir)?;
    let socket = socket_for_run(cfg, &run)?;
    let (_, _, test_c) = socket_caches(cfg, &socket)?;
    let base = evaluate(&test_c.yhat, &test_c.y)?;
    let cal = evaluate(&bank.apply(&test_c.yhat)?, &test_c.y)?;
    let report = Report {
        dataset: dataset_name(cfg, &socket),
        fingerprint: run.fingerprint.clone(),
        socket_digest: run.socket_digest.clone(),
        mode: run.mode,
        seed: run.seed,
        promotion_pct: promotion(base.overall.mse, cal.overall.mse)?,
        base,
        calibrated: cal,
        mtlc: MtlcReport::from_run(&run)?,
        outcomes: run.outcomes.clone(),
    };
    let out = out.unwrap_or(run_dir);
    emit_report(out, &report)?;
    println!(
        "report for {} run in {} (promotion {:+.3}%)",
        report.mode.name(),
        out.display(),
        report.promotion_pct
    );
    Ok(())
}

pub fn transfer_cmd(
    cfg: &ExperimentConfig,
    run_dir: &Path,
    to_socket: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let (run, bank) = load_run_dir(run_dir)?;
    let target = load_socket_any(to_socket)?;
    let test_c = if target.kind == SocketKind::External {
        target.external_cache(Split::Test)?.clone()
    } else {
        let series = load_series(cfg)?;
        let data = prepared(cfg, &series)?;
        if data.fingerprint != target.fingerprint {
            return Err(Error::Config(format!(
                "target socket was trained on different data or windowing (fingerprint {} vs {})",
                target.fingerprint, data.fingerprint
            )));
        }
        cache_predictions(&target, data.windows(Split::Test), Split::Test, &data.fingerprint)?
    };
    let report = transfer(&bank, &run.socket_digest, &test_c)?;
    let out = out.unwrap_or(run_dir);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("transfer.json");
    let body = serde_json::to_string_pretty(&report).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    println!(
        "plugs from socket {} onto {}: test mse {:.6} -> {:.6} (promotion {:+.3}%)",
        &report.from_socket[..16],
        &report.to_socket[..16],
        report.base.overall.mse,
        report.calibrated.overall.mse,
        report.promotion_pct
    );
    Ok(())
}

/// One calibration run per plug count, all against the same socket. With
/// no socket configured, one is trained first into `<out>/socket`.
pub fn sweep(cfg: &ExperimentConfig, counts: &[usize], out: &Path) -> Result<()> {
    if counts.is_empty() {
        return Err(Error::Config("sweep needs at least one plug count".into()));
    }
    let socket_dir = match &cfg.socket {
        Some(dir) => dir.clone(),
        None => {
            let dir = out.join("socket");
            train_socket_cmd(cfg, &dir)?;
            dir
        }
    };
    for &count in counts {
        let run_dir = out.join(format!("m{count:03}"));
        let mut run_cfg = cfg.clone();
        run_cfg.socket = Some(socket_dir.clone());
        run_cfg.plug_count = PlugCount::Count(count);
        print!("M={count}: ");
        calibrate_cmd(&run_cfg, &run_dir)?;
    }
    Ok(())
}
