//! Experiment harness: scaling-law and finetune-bound verification runs, the
//! end-to-end ticket pipeline, and run comparison.
//!
//! Every subcommand takes a mandatory `--seed` (no wall-clock entropy
//! anywhere), an output directory, and an optional TOML config merged over
//! the built-in defaults. Outputs follow a fixed layout: `config-echo.toml`,
//! CSV files, `summary.json` with per-assertion pass/fail, and (for pipeline
//! runs) a `checkpoints/` subdirectory. The process exits 0 only when every
//! configured assertion passed, 1 on assertion failure, 2 on config or I/O
//! errors.

mod config;
mod summary;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use config::{echo_toml, FileConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use summary::{Assertion, Summary};
use ticketlab_core::data::{fmt_f64, save_checkpoint, write_atomic, Checkpoint, CheckpointGroup};
use ticketlab_core::pipeline::{compare_runs, run_pipeline, Method, PipelineConfig, TicketRow};
use ticketlab_core::theory::{
    gram_concentration_experiment, theorem1_experiment, theorem2_experiment,
};

#[derive(Parser)]
#[command(name = "ticketlab", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML config file; omitted sections fall back to defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; required, all randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for seed/grid fan-out (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    ModifiedLth,
    Imp,
}

#[derive(Subcommand)]
enum Cmd {
    /// Kernel-sum pruning scaling sweep on linear conv nets.
    Thm1,
    /// Pretrain/prune/reset/finetune distance bound plus Gram dynamics.
    Thm2,
    /// Full ticket pipeline with transfer probes.
    Pipeline {
        #[arg(long)]
        method: Option<MethodArg>,
        /// Override for the reconstruction penalty.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Join completed pipeline runs on their sparsity grids.
    Compare {
        /// Output directories of completed pipeline runs.
        runs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let seed = cli.seed.context("--seed is required")?;
    let out = cli.out.clone().context("--out is required")?;
    let threads = cli.threads.unwrap_or_else(num_threads_default);
    // Parse and validate the config before touching the output directory, so
    // a malformed file never leaves partial outputs behind.
    let file_cfg = FileConfig::load(cli.config.as_deref())?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .ok();

    std::fs::create_dir_all(&out)?;
    match cli.cmd {
        Cmd::Thm1 => cmd_thm1(&file_cfg, seed, &out, threads),
        Cmd::Thm2 => cmd_thm2(&file_cfg, seed, &out, threads),
        Cmd::Pipeline { method, lambda } => {
            cmd_pipeline(&file_cfg, seed, &out, threads, method, lambda)
        }
        Cmd::Compare { runs } => cmd_compare(&runs, seed, &out, threads),
    }
}

fn num_threads_default() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn cmd_thm1(file_cfg: &FileConfig, seed: u64, out: &Path, threads: usize) -> Result<bool> {
    let cfg = file_cfg.thm1.clone().unwrap_or_default();
    write_atomic(&out.join("config-echo.toml"), echo_toml("thm1", &cfg)?.as_bytes())?;
    let t0 = Instant::now();
    let report = theorem1_experiment(&cfg, seed)?;
    let mut summary = Summary::new("thm1", seed, threads);
    summary.runtime_seconds = t0.elapsed().as_secs_f64();

    let mut table = ticketlab_core::data::CsvTable::new(&["seed", "p", "pooled_ratio", "map_ratio"]);
    for pt in &report.points {
        table.push(vec![
            pt.seed.to_string(),
            fmt_f64(pt.p),
            fmt_f64(pt.pooled_ratio),
            fmt_f64(pt.map_ratio),
        ]);
    }
    table.write(&out.join("thm1_points.csv"))?;
    summary.csv("thm1_points.csv", "thm1-points/v1");

    summary.push(Assertion::new(
        "pooled_slope_in_window",
        (1.3..=1.7).contains(&report.pooled_slope),
        report.pooled_slope,
        "[1.3, 1.7]",
    ));
    summary.push(Assertion::new(
        "map_slope_in_window",
        (0.35..=0.65).contains(&report.map_slope),
        report.map_slope,
        "[0.35, 0.65]",
    ));
    let fit = serde_json::json!({
        "pooled_slope": report.pooled_slope,
        "pooled_intercept": report.pooled_intercept,
        "map_slope": report.map_slope,
        "map_intercept": report.map_intercept,
    });
    write_atomic(&out.join("thm1_fit.json"), serde_json::to_vec_pretty(&fit)?.as_slice())?;
    summary.write(out)?;
    println!(
        "thm1: pooled slope {:.4}, map slope {:.4} -> {}",
        report.pooled_slope,
        report.map_slope,
        if summary.pass { "pass" } else { "FAIL" }
    );
    Ok(summary.pass)
}

fn cmd_thm2(file_cfg: &FileConfig, seed: u64, out: &Path, threads: usize) -> Result<bool> {
    let cfg = file_cfg.thm2.clone().unwrap_or_default();
    let gram_cfg = file_cfg.gram.clone().unwrap_or_default();
    let mut echo = echo_toml("thm2", &cfg)?;
    echo.push_str(&echo_toml("gram", &gram_cfg)?);
    write_atomic(&out.join("config-echo.toml"), echo.as_bytes())?;
    let t0 = Instant::now();
    let report = theorem2_experiment(&cfg, seed)?;
    let conc = gram_concentration_experiment(&gram_cfg, seed)?;
    let mut summary = Summary::new("thm2", seed, threads);
    summary.runtime_seconds = t0.elapsed().as_secs_f64();

    let mut table = ticketlab_core::data::CsvTable::new(&[
        "seed",
        "p",
        "filters",
        "filters_kept",
        "realized_q",
        "lambda0_analytic",
        "lambda0_empirical",
        "eta",
        "pretrain_iters",
        "finetune_iters",
        "finetune_residual_sq",
        "max_filter_movement",
        "movement_bound",
        "envelope_ok",
        "movement_ok",
        "grad_bound_ok",
        "distance",
        "half_p",
        "closed_form",
        "bound_ok",
    ]);
    for r in &report.rows {
        table.push(vec![
            r.seed.to_string(),
            fmt_f64(r.p),
            r.filters.to_string(),
            r.filters_kept.to_string(),
            fmt_f64(r.realized_q),
            fmt_f64(r.lambda0_analytic),
            fmt_f64(r.lambda0_empirical),
            fmt_f64(r.eta),
            r.pretrain_iters.to_string(),
            r.finetune_iters.to_string(),
            fmt_f64(r.finetune_residual_sq),
            fmt_f64(r.max_filter_movement),
            fmt_f64(r.movement_bound),
            r.envelope_ok.to_string(),
            r.movement_ok.to_string(),
            r.grad_bound_ok.to_string(),
            fmt_f64(r.distance),
            fmt_f64(r.half_p),
            fmt_f64(r.closed_form),
            r.bound_ok.to_string(),
        ]);
    }
    table.write(&out.join("thm2_rows.csv"))?;
    summary.csv("thm2_rows.csv", "thm2-rows/v1");

    for &p in &cfg.p_grid {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.p == p).collect();
        let need = (0.9 * rows.len() as f64).ceil() as usize;
        let bound_passes = rows.iter().filter(|r| r.bound_ok).count();
        summary.push(Assertion::new(
            &format!("distance_at_least_half_p_at_{p}"),
            bound_passes >= need,
            bound_passes as f64,
            format!(">= {need} of {}", rows.len()),
        ));
        if p > 0.0 {
            let close = rows.iter().filter(|r| r.closed_form_rel_err <= 0.25).count();
            summary.push(Assertion::new(
                &format!("distance_within_25pct_of_closed_form_at_{p}"),
                close >= need,
                close as f64,
                format!(">= {need} of {}", rows.len()),
            ));
        }
    }
    let dynamics_ok = report
        .rows
        .iter()
        .all(|r| r.envelope_ok && r.movement_ok && r.grad_bound_ok);
    summary.push(Assertion::new(
        "ntk_dynamics_bounds_every_step",
        dynamics_ok,
        dynamics_ok as u8 as f64,
        "envelope, movement and gradient bounds at every step",
    ));
    let need = (0.9 * conc.rows.len() as f64).ceil() as usize;
    summary.push(Assertion::new(
        "empirical_gram_eigenvalue_concentration",
        conc.passes >= need,
        conc.passes as f64,
        format!(">= {need} of {}", conc.rows.len()),
    ));

    let mut gram_table =
        ticketlab_core::data::CsvTable::new(&["seed", "lambda_min_empirical", "lambda0", "ok"]);
    for (s, emp, lam, ok) in &conc.rows {
        gram_table.push(vec![s.to_string(), fmt_f64(*emp), fmt_f64(*lam), ok.to_string()]);
    }
    gram_table.write(&out.join("gram_concentration.csv"))?;
    summary.csv("gram_concentration.csv", "gram-concentration/v1");

    summary.write(out)?;
    println!(
        "thm2: {} rows, concentration {}/{} -> {}",
        report.rows.len(),
        conc.passes,
        conc.rows.len(),
        if summary.pass { "pass" } else { "FAIL" }
    );
    Ok(summary.pass)
}

fn cmd_pipeline(
    file_cfg: &FileConfig,
    seed: u64,
    out: &Path,
    threads: usize,
    method: Option<MethodArg>,
    lambda: Option<f64>,
) -> Result<bool> {
    let mut cfg = file_cfg.pipeline.clone().unwrap_or_default();
    if let Some(m) = method {
        cfg.method = match m {
            MethodArg::ModifiedLth => Method::ModifiedLth,
            MethodArg::Imp => Method::Imp,
        };
    }
    if let Some(l) = lambda {
        cfg.loss.lambda = l;
    }
    cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_atomic(&out.join("config-echo.toml"), echo_toml("pipeline", &cfg)?.as_bytes())?;

    let t0 = Instant::now();
    let output = run_pipeline(&cfg, seed)?;
    let mut summary = Summary::new("pipeline", seed, threads);
    summary.runtime_seconds = t0.elapsed().as_secs_f64();

    output.csv().write(&out.join("tickets.csv"))?;
    summary.csv("tickets.csv", "pipeline-tickets/v1");
    let mut curve = ticketlab_core::data::CsvTable::new(&["epoch", "recon_loss"]);
    for (i, l) in output.decoder_loss_curve.iter().enumerate() {
        curve.push(vec![i.to_string(), fmt_f64(*l)]);
    }
    curve.write(&out.join("decoder_curve.csv"))?;
    summary.csv("decoder_curve.csv", "decoder-curve/v1");

    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let mut pre = Checkpoint {
        seed: Some(seed),
        config_echo: Some(echo_toml("pipeline", &cfg)?),
        groups: output
            .theta_pre
            .iter()
            .map(|(name, values)| {
                (
                    name.clone(),
                    CheckpointGroup { shape: vec![values.len()], values: values.clone() },
                )
            })
            .collect(),
        masks: Default::default(),
    };
    save_checkpoint(&ckpt_dir.join("theta_pre.ckpt"), &pre)?;
    for ticket in &output.tickets {
        pre.groups.clear();
        pre.masks = ticket
            .mask
            .group_names()
            .map(|n| (n.to_string(), ticket.mask.group(n).unwrap().to_vec()))
            .collect();
        pre.config_echo = Some(format!("round = {}\nrewind = \"{}\"", ticket.round, ticket.rewind_reference));
        save_checkpoint(&ckpt_dir.join(format!("ticket_round_{}.ckpt", ticket.round)), &pre)?;
    }

    // Structural assertions: ladder sparsities and nested masks.
    let n0 = output.tickets[0].mask.total_bits() as f64;
    let ladder_ok = output.tickets.iter().enumerate().all(|(i, t)| {
        (t.sparsity - (1.0 - (1.0 - cfg.prune_rate).powi(i as i32 + 1))).abs() <= 0.5001 / n0
    });
    summary.push(Assertion::new(
        "sparsity_tracks_ladder",
        ladder_ok,
        ladder_ok as u8 as f64,
        "within half a weight of 1-(1-p)^i",
    ));
    let nested = output
        .tickets
        .windows(2)
        .all(|w| w[1].mask.nests(&w[0].mask));
    summary.push(Assertion::new("masks_nested", nested, nested as u8 as f64, "zeros only accumulate"));

    summary.write(out)?;
    println!(
        "pipeline: pretrain acc {:.3}, {} tickets -> {}",
        output.pretrain_test_acc,
        output.tickets.len(),
        if summary.pass { "pass" } else { "FAIL" }
    );
    Ok(summary.pass)
}

fn cmd_compare(runs: &[PathBuf], seed: u64, out: &Path, threads: usize) -> Result<bool> {
    if runs.len() < 2 {
        bail!("compare needs at least two run directories");
    }
    let mut named = Vec::new();
    for dir in runs {
        let rows = read_ticket_rows(&dir.join("tickets.csv"))
            .with_context(|| format!("reading {}", dir.join("tickets.csv").display()))?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "run".to_string());
        named.push((name, rows));
    }
    let table = compare_runs(&named).map_err(|e| anyhow::anyhow!("{e}"))?;
    table.write(&out.join("compare.csv"))?;
    let mut summary = Summary::new("compare", seed, threads);
    summary.csv("compare.csv", "compare/v1");
    summary.write(out)?;
    println!("compare: joined {} runs over {} tickets", named.len(), table.rows.len());
    Ok(true)
}

fn read_ticket_rows(path: &Path) -> Result<Vec<TicketRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().context("empty tickets.csv")?;
    let expect = "round,sparsity,upstream_loss,upstream_class_acc,featmap_dist_ticket,featmap_dist_finetuned,down_class_acc,down_pixel_acc";
    if header != expect {
        bail!("unexpected tickets.csv header: {header}");
    }
    let mut rows = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            bail!("malformed tickets.csv row: {line}");
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            Ok(if s.is_empty() { None } else { Some(s.parse()?) })
        };
        rows.push(TicketRow {
            round: f[0].parse()?,
            sparsity: f[1].parse()?,
            upstream_loss: f[2].parse()?,
            upstream_class_acc: f[3].parse()?,
            featmap_dist_ticket: f[4].parse()?,
            featmap_dist_finetuned: f[5].parse()?,
            down_class_acc: opt(f[6])?,
            down_pixel_acc: opt(f[7])?,
        });
    }
    Ok(rows)
}
