use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thermotwin::records::{self, ModelRecord};
use thermotwin::CHANNELS;
use thermotwin_service::config::Config;
use thermotwin_service::output::Staging;
use thermotwin_service::{server, workflows};

#[derive(Parser)]
#[command(name = "thermotwin", version, about = "Thermal array digital twin: identify, tune, simulate and stream")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML session file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if its parent exists.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Session seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulated seconds per wall-clock second (serve only); `inf` runs unpaced.
    #[arg(long, global = true, default_value_t = 1.0)]
    time_scale: f64,
    /// Diagonal model records, overriding `[inputs] models`.
    #[arg(long, global = true)]
    models: Option<PathBuf>,
    /// Gain records, overriding `[inputs] gains`.
    #[arg(long, global = true)]
    gains: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Step experiments on the simulated plant; writes dataset.csv and models.csv.
    Identify,
    /// Pairwise gaps of a model family; writes gap.csv and nominal.csv.
    Gap {
        /// Model records, one member per row.
        #[arg(long)]
        family: Option<PathBuf>,
    },
    /// PI tuning of every diagonal channel; writes gains.csv.
    Tune,
    /// Headless closed-loop run; writes runlog.csv and events.jsonl.
    Simulate,
    /// Streams the scenario to TCP and WebSocket clients.
    Serve,
    /// Plot-ready CSV from a run log, gap matrix or model records.
    Export {
        #[arg(long, value_enum)]
        kind: ExportKind,
        /// runlog.csv, gap.csv or models.csv depending on the kind.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Runlog,
    Gap,
    Bode,
}

fn load(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = &common.models {
        cfg.inputs.models = Some(p.clone());
    }
    if let Some(p) = &common.gains {
        cfg.inputs.gains = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<&Path> {
    common.out.as_deref().context("--out is required")
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let mut cfg = load(common)?;
    let seed = Some(cfg.seed);
    match cli.command {
        Cmd::Identify => {
            let mut stage = Staging::new(out_dir(common)?)?;
            let id = workflows::identify(&cfg)?;
            stage.write("dataset.csv", |w| Ok(records::write_dataset(w, &id.datasets, seed)?))?;
            stage.write("models.csv", |w| Ok(records::write_models(w, &id.models, seed)?))?;
            if !id.family.is_empty() {
                stage.write("family.csv", |w| Ok(records::write_models(w, &id.family, seed)?))?;
            }
            report(stage.commit()?);
            for m in id.models.iter().filter(|m| m.channel == m.input) {
                println!(
                    "G{:<2} K={:.4} T={:.3} alpha={:.3} fit={:.1}% validation={:.1}%",
                    m.channel + 1,
                    m.model.gain,
                    m.model.time_const,
                    m.model.order,
                    m.fit,
                    id.validation_fit[m.channel]
                );
            }
        }
        Cmd::Gap { family } => {
            if family.is_some() {
                cfg.inputs.family = family;
            }
            let mut stage = Staging::new(out_dir(common)?)?;
            let g = workflows::gap(&cfg)?;
            stage.write("gap.csv", |w| Ok(records::write_gap_matrix(w, &g.matrix, seed)?))?;
            let nominal = ModelRecord {
                channel: 0,
                input: 0,
                model: g.members[g.nominal],
                fit: f64::NAN,
            };
            stage.write("nominal.csv", |w| Ok(records::write_models(w, &[nominal], seed)?))?;
            report(stage.commit()?);
            for (i, row) in g.matrix.values.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
                println!("{} {}", g.matrix.labels[i], cells.join(" "));
            }
            println!("nominal: {}", g.matrix.labels[g.nominal]);
        }
        Cmd::Tune => {
            let mut stage = Staging::new(out_dir(common)?)?;
            let gains = workflows::tune(&cfg)?;
            stage.write("gains.csv", |w| Ok(records::write_gains(w, &gains, seed)?))?;
            report(stage.commit()?);
            for g in &gains {
                println!(
                    "ch{:<2} K={:.4} I={:.5} PM={:.2} GM={:.2} feasible={}",
                    g.channel + 1,
                    g.gains.prop_k,
                    g.gains.integ_i,
                    g.pm,
                    g.gm,
                    g.feasible
                );
            }
        }
        Cmd::Simulate => {
            let mut stage = Staging::new(out_dir(common)?)?;
            let log = workflows::simulate(&cfg)?;
            stage.write("runlog.csv", |w| Ok(records::write_runlog(w, &log, seed)?))?;
            stage.write("events.jsonl", |w| Ok(records::write_events(w, &log.events, seed)?))?;
            report(stage.commit()?);
        }
        Cmd::Serve => {
            // fail on a bad output path before the session starts
            let stage = common.out.as_deref().map(Staging::new).transpose()?;
            let plant = workflows::plant(&cfg)?;
            let gains = workflows::gains(&cfg)?;
            let handle = server::serve(&plant, &gains, cfg.session(common.time_scale))?;
            eprintln!("listening on {}", handle.local_addr());
            let log = handle.wait()?;
            if let Some(mut stage) = stage {
                stage.write("runlog.csv", |w| Ok(records::write_runlog(w, &log, seed)?))?;
                stage.write("events.jsonl", |w| Ok(records::write_events(w, &log.events, seed)?))?;
                report(stage.commit()?);
            }
        }
        Cmd::Export { kind, input } => {
            let mut stage = Staging::new(out_dir(common)?)?;
            export(&cfg, kind, input.as_deref(), &mut stage)?;
            report(stage.commit()?);
        }
    }
    Ok(())
}

fn export(cfg: &Config, kind: ExportKind, input: Option<&Path>, stage: &mut Staging) -> Result<()> {
    let open = |p: &Path| -> Result<std::io::BufReader<std::fs::File>> {
        Ok(std::io::BufReader::new(
            std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
        ))
    };
    let seed = Some(cfg.seed);
    match kind {
        ExportKind::Runlog => {
            let p = input.context("--input runlog.csv is required")?;
            let log = records::read_runlog(open(p)?).with_context(|| format!("reading {}", p.display()))?;
            stage.write("temperatures.csv", |w| {
                writeln!(w, "# seed={}", cfg.seed)?;
                writeln!(w, "t,channel,setpoint,measured,drive")?;
                for r in &log.rows {
                    for ch in 0..CHANNELS {
                        writeln!(w, "{},{},{},{},{}", r.t, ch + 1, r.setpoint[ch], r.measured[ch], r.drive[ch])?;
                    }
                }
                Ok(())
            })?;
            stage.write("uniformity.csv", |w| {
                let rows = log.rows.iter().map(|r| vec![r.t, r.uniformity()]);
                Ok(records::write_columns(w, &["t".into(), "spread".into()], rows, seed)?)
            })?;
        }
        ExportKind::Gap => {
            let p = input.context("--input gap.csv is required")?;
            let m = records::read_gap_matrix(open(p)?).with_context(|| format!("reading {}", p.display()))?;
            stage.write("gap_triplets.csv", |w| Ok(records::write_gap_triplets(w, &m, seed)?))?;
        }
        ExportKind::Bode => {
            let diag: Vec<_> = match input {
                Some(p) => workflows::read_model_file(p)?
                    .into_iter()
                    .filter(|r| r.channel == r.input)
                    .map(|r| r.model)
                    .collect(),
                None => workflows::diagonal_models(cfg)?.to_vec(),
            };
            if diag.is_empty() {
                bail!("no diagonal models to export");
            }
            let gains = if cfg.inputs.gains.is_some() || input.is_none() {
                workflows::gains(cfg)?.to_vec()
            } else {
                Vec::new()
            };
            let rows = workflows::bode(&diag, &gains, 20)?;
            stage.write("bode.csv", |w| {
                writeln!(w, "# seed={}", cfg.seed)?;
                writeln!(w, "channel,omega,plant_db,plant_deg,loop_db,loop_deg")?;
                for r in &rows {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        r.channel + 1,
                        r.omega,
                        r.plant_db,
                        r.plant_deg,
                        r.loop_db,
                        r.loop_deg
                    )?;
                }
                Ok(())
            })?;
        }
    }
    Ok(())
}

fn report(files: Vec<PathBuf>) {
    for f in files {
        eprintln!("wrote {}", f.display());
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
