use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use irtrack_core::calibration::{CalibrationState, Calibrator, DeviceKind, DEFAULT_PAIRING_WINDOW_US};
use irtrack_core::depth::CameraModel;
use irtrack_core::geometry::RigidTransform;
use irtrack_core::tracking::{ToolTracker, TrackerParams};
use irtrack_eval::io::write_report;
use irtrack_eval::relative::run_relative_tracking;
use irtrack_eval::session::{calibrate_session, hmd_observations, record_session, replay_session, PoseSource, Session};
use irtrack_eval::stats::{ErrorSample, StatsSummary};
use irtrack_eval::task::{run_task_experiment, TaskConfig};
use irtrack_protocol::log::read_log;
use irtrack_protocol::{subscribe, Backoff, PacketServer, TrackingPacket};
use irtrack_sim::{presets, render_frame, simulate_tracker_packets, NoiseModel, Scene};
use serde::Serialize;

/// Infrared tool tracking for a head-mounted depth camera: simulation,
/// detection, calibration against an optical tracker, and accuracy studies.
#[derive(Parser, Debug)]
#[command(name = "irtrack", version)]
struct Cli {
    /// Scene JSON; each command has a built-in default.
    #[arg(long, global = true)]
    scene: Option<PathBuf>,
    /// Noise model JSON; defaults to the built-in noise model.
    #[arg(long, global = true)]
    noise: Option<PathBuf>,
    /// Overrides the noise model's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a scene into a recorded session directory (needs --out).
    Simulate {
        #[arg(long, default_value_t = 90)]
        frames: u64,
    },
    /// Detect tools in every frame of a recorded session.
    Track {
        #[arg(long)]
        session: PathBuf,
    },
    /// Stream tracker packets to subscribers, from a scene or a packet log.
    ServeTracker {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Packet log to replay instead of simulating the scene.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 450)]
        frames: u64,
        /// Subscribers to wait for before streaming.
        #[arg(long, default_value_t = 1)]
        clients: usize,
        #[arg(long, default_value_t = 30)]
        wait_secs: u64,
        /// Packets per second; 0 streams as fast as possible.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// One-shot calibration from a recorded session or a live tracker.
    Calibrate {
        #[arg(long, conflicts_with = "connect")]
        session: Option<PathBuf>,
        /// Tracker server to subscribe to; headset frames are simulated.
        #[arg(long)]
        connect: Option<String>,
        /// Paired looks to average.
        #[arg(long, default_value_t = 45)]
        looks: usize,
    },
    /// Relative pose of two static arrays, headset versus tracker.
    EvalRelative {
        #[arg(long, default_value_t = 7000)]
        pairs: usize,
    },
    /// Simulated guided-drilling study.
    EvalTask {
        #[arg(long, default_value_t = 8)]
        users: u32,
        #[arg(long, default_value_t = 16)]
        readings: u32,
    },
    /// Resolve every tool's render pose over a recorded session.
    Replay {
        #[arg(long)]
        session: PathBuf,
        /// Calibration JSON; without it the session calibrates as it goes.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let noise = load_noise(&cli)?;
    match &cli.command {
        Command::Simulate { frames } => {
            let Some(out) = &cli.out else {
                bail!("simulate needs --out DIR");
            };
            let scene = load_scene(&cli, presets::relative_tracking_scene)?;
            let manifest = record_session(&scene, &noise, *frames, out)?;
            eprintln!("recorded {} frames to {}", manifest.frames.len(), out.display());
        }
        Command::Track { session } => {
            let session = Session::open(session)?;
            let mut tracker = session.tracker(TrackerParams::default());
            let mut rows = Vec::new();
            for entry in &session.manifest.frames {
                for (tool_id, pose) in tracker.detect_tools(&session.frame(entry)?) {
                    rows.push(PoseRow::new(entry.index, entry.timestamp_us, tool_id, None, &pose));
                }
            }
            emit(&cli, "poses", &rows)?;
        }
        Command::ServeTracker {
            listen,
            log,
            frames,
            clients,
            wait_secs,
            rate,
        } => {
            let (packets, scene_rate) = match log {
                Some(path) => (read_log(path).with_context(|| format!("reading {}", path.display()))?, None),
                None => {
                    let scene = load_scene(&cli, presets::relative_tracking_scene)?;
                    let packets: Vec<TrackingPacket> = (0..*frames)
                        .map(|k| {
                            let t = scene.frame_time(k);
                            TrackingPacket::from_device_observations(irtrack_sim::timestamp_us(t), &simulate_tracker_packets(&scene, t, &noise))
                        })
                        .collect();
                    (packets, Some(scene.frame_rate_hz))
                }
            };
            let hz = rate.or(scene_rate).unwrap_or(0.0);
            let interval = (hz > 0.0).then(|| Duration::from_secs_f64(1.0 / hz));
            let server = PacketServer::bind(listen.as_str())?;
            eprintln!("listening on {}", server.local_addr());
            if !server.wait_for_clients(*clients, Duration::from_secs(*wait_secs)) {
                bail!("fewer than {clients} subscribers after {wait_secs} s");
            }
            let sent = server.serve(packets, interval)?;
            server.shutdown();
            eprintln!("sent {sent} packets");
        }
        Command::Calibrate { session, connect, looks } => {
            let state = match (session, connect) {
                (Some(dir), _) => calibrate_session(&Session::open(dir)?, *looks)?,
                (None, Some(addr)) => calibrate_live(&cli, &noise, addr, *looks)?,
                (None, None) => bail!("calibrate needs --session DIR or --connect ADDR"),
            };
            let snapshot = state.to_snapshot().context("no tool was seen by both devices")?;
            if let Some(out) = &cli.out {
                std::fs::create_dir_all(out)?;
                state.save(&out.join("calibration.json"))?;
            }
            println!("{}", serde_json::to_string_pretty(&snapshot)?);
        }
        Command::EvalRelative { pairs } => {
            let scene = load_scene(&cli, presets::relative_tracking_scene)?;
            let run = run_relative_tracking(&scene, &noise, *pairs)?;
            eprintln!("{} pairs, {} frames skipped", run.samples.len(), run.skipped);
            report(&cli, "relative", &run.samples, &run.summary)?;
        }
        Command::EvalTask { users, readings } => {
            let scene = load_scene(&cli, presets::task_scene)?;
            let config = TaskConfig {
                users: *users,
                readings_per_trajectory: *readings,
                ..Default::default()
            };
            let run = run_task_experiment(&scene, &noise, &config)?;
            report(&cli, "task", &run.samples, &run.summary)?;
        }
        Command::Replay { session, calibration } => {
            let session = Session::open(session)?;
            let calibration = calibration.as_deref().map(CalibrationState::load).transpose()?;
            let rows: Vec<PoseRow> = replay_session(&session, calibration)?
                .iter()
                .map(|r| PoseRow::new(r.frame, r.timestamp_us, r.tool_id, Some(r.source), &r.pose))
                .collect();
            emit(&cli, "replay", &rows)?;
        }
    }
    Ok(())
}

fn load_noise(cli: &Cli) -> Result<NoiseModel> {
    let noise = match &cli.noise {
        Some(path) => NoiseModel::load(path).with_context(|| format!("loading noise model {}", path.display()))?,
        None => NoiseModel::default(),
    };
    Ok(match cli.seed {
        Some(seed) => noise.with_seed(seed),
        None => noise,
    })
}

fn load_scene(cli: &Cli, default: fn() -> Scene) -> Result<Scene> {
    match &cli.scene {
        Some(path) => Scene::load(path).with_context(|| format!("loading scene {}", path.display())),
        None => Ok(default()),
    }
}

/// Subscribes to a tracker and pairs each packet with a simulated headset
/// frame of the scene at the same instant.
fn calibrate_live(cli: &Cli, noise: &NoiseModel, addr: &str, looks: usize) -> Result<CalibrationState> {
    let scene = load_scene(cli, presets::relative_tracking_scene)?;
    let mut tracker = ToolTracker::new(scene.geometries(), CameraModel::new(scene.camera.intrinsics), TrackerParams::default());
    let mut calibrator = Calibrator::new(DEFAULT_PAIRING_WINDOW_US, looks);
    let mut paired = 0;
    for packet in subscribe(addr, &Backoff::default())? {
        let packet = packet?;
        let frame = render_frame(&scene, packet.timestamp_us as f64 * 1e-6, noise);
        let before = *calibrator.state();
        let after = *calibrator.update(&hmd_observations(&mut tracker, &frame), &packet.to_device_observations(DeviceKind::OpticalTracker));
        if after != before {
            paired += 1;
            if paired >= looks {
                break;
            }
        }
    }
    Ok(*calibrator.state())
}

#[derive(Debug, Serialize)]
struct PoseRow {
    frame: u64,
    timestamp_us: u64,
    tool_id: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<PoseSource>,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    x_mm: f64,
    y_mm: f64,
    z_mm: f64,
}

impl PoseRow {
    fn new(frame: u64, timestamp_us: u64, tool_id: u16, source: Option<PoseSource>, pose: &RigidTransform) -> Self {
        let [qw, qx, qy, qz] = pose.wxyz();
        let t = pose.translation();
        Self {
            frame,
            timestamp_us,
            tool_id,
            source,
            qw,
            qx,
            qy,
            qz,
            x_mm: t.x,
            y_mm: t.y,
            z_mm: t.z,
        }
    }
}

/// Rows to `<out>/<name>.<ext>` when --out is set, otherwise to stdout.
fn emit<T: Serialize>(cli: &Cli, name: &str, rows: &[T]) -> Result<()> {
    let mut sink: Box<dyn Write> = match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let ext = if cli.format == Format::Csv { "csv" } else { "json" };
            Box::new(std::fs::File::create(dir.join(format!("{name}.{ext}")))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    write_rows(&mut sink, cli.format, rows)
}

fn write_rows<T: Serialize>(sink: &mut dyn Write, format: Format, rows: &[T]) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *sink, rows)?;
            writeln!(sink)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    channel: &'static str,
    count: usize,
    mean: f64,
    sd: f64,
    median: f64,
}

fn report(cli: &Cli, prefix: &str, samples: &[ErrorSample], summary: &StatsSummary) -> Result<()> {
    if let Some(out) = &cli.out {
        write_report(out, prefix, samples, summary)?;
        eprintln!("wrote {prefix} results to {}", out.display());
    }
    let stdout = &mut io::stdout().lock();
    match cli.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *stdout, summary)?;
            writeln!(stdout)?;
        }
        Format::Csv => {
            let rows = [
                ("translation_mm", &summary.translation_mm),
                ("rotation_deg", &summary.rotation_deg),
            ]
            .map(|(channel, c)| SummaryRow {
                channel,
                count: summary.count,
                mean: c.mean,
                sd: c.sd,
                median: c.median,
            });
            write_rows(stdout, Format::Csv, &rows)?;
        }
    }
    Ok(())
}
