//! Relative-tracking and guided-drilling experiments built on the simulator,
//! plus their statistics and output files.

pub mod guidance;
pub mod io;
pub mod relative;
pub mod session;
pub mod stats;
pub mod task;

pub use guidance::{guidance_signal, trajectory_error, GuidanceSignal, ToolModel, TrajectoryPlan};
pub use relative::{run_relative_tracking, RelativeRun};
pub use stats::{box_plot_table, summarize, BoxPlotRow, ChannelStats, ErrorSample, StatsSummary};
pub use task::{run_task_experiment, TaskConfig, TaskRun};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no samples to summarize")]
    NoSamples,
    #[error("scene needs at least {needed} tools, has {found}")]
    TooFewTools { needed: usize, found: usize },
    #[error("only {collected} of {requested} pairs after {frames} frames ({skipped} skipped)")]
    TooManySkipped {
        requested: usize,
        collected: usize,
        frames: u64,
        skipped: u64,
    },
    #[error("user {user}: no frame paired tool {tool_id} between headset and tracker")]
    CalibrationFailed { user: u32, tool_id: u16 },
    #[error("user {user}, trajectory {trajectory}: {source}")]
    Alignment {
        user: u32,
        trajectory: u32,
        source: irtrack_sim::Error,
    },
    #[error("user {user}, trajectory {trajectory}: tracker lost the tool during readings")]
    TrackerLost { user: u32, trajectory: u32 },
    #[error(transparent)]
    Core(#[from] irtrack_core::Error),
    #[error(transparent)]
    Sim(#[from] irtrack_sim::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
