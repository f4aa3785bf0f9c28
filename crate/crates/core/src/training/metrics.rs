use std::io::{self, Write};

use super::StepStats;

pub const METRICS_HEADER: &str = "step,t_mean,loss,lr,wallclock_s";

/// CSV training log, one row per logged step.
pub struct MetricsLog<W: Write> {
    out: W,
}

impl<W: Write> MetricsLog<W> {
    /// Starts a new log, writing the header row.
    pub fn create(mut out: W) -> io::Result<Self> {
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(MetricsLog { out })
    }

    /// Continues a log that already has its header.
    pub fn resume(out: W) -> Self {
        MetricsLog { out }
    }

    pub fn append(&mut self, stats: &StepStats, wallclock_s: f64) -> io::Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{}",
            stats.step, stats.t_mean, stats.loss, stats.lr, wallclock_s
        )
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
