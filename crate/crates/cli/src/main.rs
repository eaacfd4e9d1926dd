//! `layerwise`: build simulations, learning-control runs and lifted-matrix
//! exports from a `key=value` config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use layerwise_core::config::load_config;
use layerwise_core::control::{fast_cooling_ratio, ControllabilityReport};
use layerwise_core::export::{fmt17, history_csv, layer_pgm, matrix_csv, sequence_csv, summary_csv, TOOLKIT_VERSION};
use layerwise_core::lift::lift_layer;
use layerwise_core::silc::{run_closed_loop, run_closed_loop_on_paths, voxel_grid, History, SilcConfig};
use layerwise_core::thermal::corner_pulse_decay;
use layerwise_core::{Error, Result, RunConfig};

#[derive(Parser)]
#[command(name = "layerwise", version, about = "Layer-to-layer thermal simulation and spatial learning control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Config file (`key=value` lines).
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build every layer at nominal power.
    SimulateOpenloop(Common),
    /// Build with spatial learning control.
    SimulateSilc(Common),
    /// Write D_L, Q, P and G_s for one layer.
    BuildMatrices {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        layer: usize,
    },
    /// Print the controllability report of one layer.
    CheckControllability {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        layer: usize,
    },
    /// Write the corner-pulse decay sequence.
    PulseDecay(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::SimulateOpenloop(c) => simulate(&c, false, "simulate-openloop"),
        Command::SimulateSilc(c) => simulate(&c, true, "simulate-silc"),
        Command::BuildMatrices { common, layer } => build_matrices(&common, layer),
        Command::CheckControllability { common, layer } => check(&common, layer),
        Command::PulseDecay(c) => pulse_decay(&c),
    }
}

fn load(c: &Common) -> Result<(RunConfig, PathBuf)> {
    let cfg = load_config(&c.config)?;
    let out = c.output.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn meta(cfg: &RunConfig, command: &str, extra: &str) -> String {
    format!("toolkit=layerwise\nversion={TOOLKIT_VERSION}\ncommand={command}\n{}{extra}", cfg.resolved_text())
}

fn simulate(c: &Common, learn: bool, command: &str) -> Result<()> {
    let (cfg, out) = load(c)?;
    // Open loop keeps the learning bookkeeping but never changes the power.
    let silc = if learn { cfg.silc } else { SilcConfig { gamma: 0.0, ..cfg.silc } };
    let mut h: History = match &cfg.paths {
        Some(p) => run_closed_loop_on_paths(&cfg.plant, &cfg.path, &silc, &p[..cfg.layers])?,
        None => run_closed_loop(&cfg.plant, &cfg.path, &silc, cfg.layers)?,
    };
    if !learn {
        h.layers.iter_mut().for_each(|r| r.controlled = false);
    }
    let vspec = voxel_grid(&cfg.plant.geometry, cfg.path.voxel_size)?;
    let mut scales = format!("reference_resolved={}\npgm_grid={}x{}\n", fmt17(h.reference), vspec.m1, vspec.m2);
    for r in &h.layers {
        let (img, lo, hi) = layer_pgm(r, vspec.m1, vspec.m2)?;
        write(&out, &format!("layer_{:04}.pgm", r.layer), img)?;
        writeln!(scales, "pgm_scale_layer_{:04}={},{}", r.layer, fmt17(lo), fmt17(hi)).unwrap();
    }
    write(&out, "history.csv", history_csv(&h))?;
    if learn {
        write(&out, "summary.csv", summary_csv(&h))?;
    }
    write(&out, "meta", meta(&cfg, command, &scales))?;
    println!("{} layers written to {}", h.layers.len(), out.display());
    Ok(())
}

fn lifted(cfg: &RunConfig, layer: usize) -> Result<layerwise_core::lift::LiftedSystem> {
    if layer == 0 || layer > cfg.layers {
        return Err(Error::Argument(format!("layer {layer} outside 1..={}", cfg.layers)));
    }
    let sys = cfg.system(layer)?;
    let sched = cfg.schedule(layer)?;
    let vspec = voxel_grid(&cfg.plant.geometry, cfg.path.voxel_size)?;
    lift_layer(&sys, &sched, &cfg.analysis_measurement(), &cfg.plant.mask, &vspec, cfg.path.p_mode)
}

fn build_matrices(c: &Common, layer: usize) -> Result<()> {
    let (cfg, out) = load(c)?;
    let lifted = lifted(&cfg, layer)?;
    let tag = format!("layer_{layer:04}");
    write(&out, &format!("dl_{tag}.csv"), matrix_csv(&lifted.dl))?;
    write(&out, &format!("q_{tag}.csv"), matrix_csv(&lifted.q))?;
    write(&out, &format!("p_{tag}.csv"), matrix_csv(&lifted.p))?;
    write(&out, &format!("gs_{tag}.csv"), matrix_csv(&lifted.gs))?;
    let voxels: Vec<String> = lifted.sets.voxels().iter().map(|v| v.0.to_string()).collect();
    let extra = format!(
        "matrices_layer={layer}\nlift_measurement_used={}\nvoxel_ids={}\n",
        cfg.analysis_measurement().name(),
        voxels.join(" ")
    );
    write(&out, "meta", meta(&cfg, "build-matrices", &extra))?;
    println!("N_t={} voxels={} written to {}", lifted.dl.nrows(), lifted.sets.len(), out.display());
    Ok(())
}

fn check(c: &Common, layer: usize) -> Result<()> {
    let (cfg, _) = load(c)?;
    let lifted = lifted(&cfg, layer)?;
    let report = ControllabilityReport::build(&lifted.dl, &lifted.sets)?;
    print!("layer={layer}\nN_t={}\nvoxels={}\n{}", lifted.dl.nrows(), lifted.sets.len(), report.to_key_value());
    Ok(())
}

fn pulse_decay(c: &Common) -> Result<()> {
    let (cfg, out) = load(c)?;
    let p = cfg.pulse;
    let seq = corner_pulse_decay(&cfg.plant.material, &cfg.plant.mesh, p.samples, p.period, p.spacing)?;
    let csv = sequence_csv("sample,temperature", &seq);
    write(&out, "pulse_decay.csv", &csv)?;
    let worst = fast_cooling_ratio(&layerwise_core::control::toeplitz_dl(&seq));
    let extra = format!("pulse_worst_ratio={}\n", fmt17(worst.worst_ratio));
    write(&out, "meta", meta(&cfg, "pulse-decay", &extra))?;
    print!("{csv}");
    println!("# worst_consecutive_ratio={} implies_dominance={}", worst.worst_ratio, worst.implies_dominance);
    Ok(())
}
