use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evslam::commands::{self, gen_spec, run_config, synthesize_spec};
use evslam::config::KeyValues;
use evslam::dataset::read_events;
use evslam::error::{write_file, CliError, CliResult};
use evslam::formats::{evs, tum};
use evslam::metrics::{compute_ate, Alignment};
use evslam_core::world::DegradeMode;

#[derive(Parser)]
#[command(name = "evslam", about = "Event-assisted implicit RGB-D SLAM at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets, one directory per mode under --out.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<DegradeMode>,
    },
    /// Run the pipeline on a dataset.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        /// Run configuration; defaults apply to every missing key.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Absolute trajectory error of an estimate against ground truth.
    Ate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value = "se3", value_parser = parse_alignment)]
        align: Alignment,
    },
    /// Mean absolute depth error of a checkpoint on a dataset.
    DepthL1 {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 50)]
        poses: usize,
        #[arg(long, default_value_t = 500)]
        pixels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract the zero isosurface of a checkpoint as a PLY mesh.
    Mesh {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and completion of a mesh against a scene description.
    MeshMetrics {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 20000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Event stream tools.
    Events {
        #[command(subcommand)]
        command: EventsCommand,
    },
}

#[derive(Subcommand)]
enum EventsCommand {
    /// Simulate the event stream of a generation config into one file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the header and the records of an event file as CSV.
    Dump {
        file: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn parse_mode(s: &str) -> Result<DegradeMode, String> {
    DegradeMode::parse(s).ok_or_else(|| format!("unknown mode {s:?} (normal, blur, dark)"))
}

fn parse_alignment(s: &str) -> Result<Alignment, String> {
    Alignment::parse(s).ok_or_else(|| format!("unknown alignment {s:?} (se3, sim3)"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undefined".into())
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    let mut say = |s: String| {
        let _ = writeln!(out, "{s}");
    };
    match cli.command {
        Command::Gen { config, out, seed, mode } => {
            let spec = gen_spec(&KeyValues::load(&config)?, seed, mode)?;
            for dir in commands::cmd_gen(&spec, &out)? {
                say(format!("wrote {}", dir.display()));
            }
        }
        Command::Run { dataset, config, out, seed } => {
            let kv = match config {
                Some(p) => KeyValues::load(&p)?,
                None => KeyValues::default(),
            };
            let run = commands::cmd_run(&dataset, run_config(&kv, seed)?, &out)?;
            say(format!("tracked {} frames into {}", run.trajectory.len(), out.display()));
        }
        Command::Ate { est, gt, align } => {
            let e = evslam::dataset::read_trajectory(&est)?;
            let g = evslam::dataset::read_trajectory(&gt)?;
            let r = compute_ate(&e, &g, align).map_err(CliError::Data)?;
            say(format!(
                "rmse_cm={:.4} mean_cm={:.4} median_cm={:.4} matches={} align={}",
                r.rmse,
                r.mean,
                r.median,
                r.matches,
                r.alignment.name()
            ));
        }
        Command::DepthL1 { dataset, checkpoint, poses, pixels, seed } => {
            let l1 = commands::cmd_depth_l1(&dataset, &checkpoint, poses, pixels, seed)?;
            say(format!("depth_l1_cm={l1:.4}"));
        }
        Command::Mesh { checkpoint, resolution, out } => {
            let m = commands::cmd_mesh(&checkpoint, resolution, &out)?;
            say(format!("vertices={} faces={}", m.vertices.len(), m.faces.len()));
        }
        Command::MeshMetrics { mesh, scene, samples, seed } => {
            let r = commands::cmd_mesh_metrics(&mesh, &scene, samples, seed)?;
            say(format!(
                "accuracy_cm={} completion_cm={} completion_ratio={:.2}",
                opt(r.accuracy),
                opt(r.completion),
                r.completion_ratio
            ));
        }
        Command::Events { command: EventsCommand::Simulate { config, out, seed } } => {
            let spec = gen_spec(&KeyValues::load(&config)?, seed, Some(DegradeMode::Normal))?;
            let (_, seq) = synthesize_spec(&spec, DegradeMode::Normal)?;
            write_file(&out, &evs::encode(&seq.events))?;
            say(format!("wrote {} events to {}", seq.events.len(), out.display()));
        }
        Command::Events { command: EventsCommand::Dump { file, limit } } => {
            let s = read_events(&file)?;
            let (w, h) = s.resolution();
            say(format!("# width={w} height={h} threshold_c={} linlog_b={} events={}", s.threshold_c(), s.linlog_b(), s.len()));
            say("t,u,v,p".into());
            for r in s.records().iter().take(limit.unwrap_or(usize::MAX)) {
                say(format!("{},{},{},{}", tum::format_time(r.t), r.u, r.v, r.p));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evslam: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
