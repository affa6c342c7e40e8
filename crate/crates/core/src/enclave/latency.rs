// Licensed under the Apache-2.0 license

use std::fmt;

/// Synthesis estimate for the core's critical path, in nanoseconds. Informational only.
pub const ESTIMATED_CLOCK_NS: f64 = 2.88;
/// Uncertainty attached to [`ESTIMATED_CLOCK_NS`]. Informational only.
pub const CLOCK_UNCERTAINTY_NS: f64 = 1.25;
/// Target clock period the core was synthesized against.
pub const TARGET_CLOCK_PERIOD_NS: u64 = 10;

pub const PIPELINED_LATENCY_CYCLES: u64 = 34;
pub const UNPIPELINED_LATENCY_CYCLES: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineMode {
    /// Compare loop built with the pipeline directive.
    Pipelined,
    Unpipelined,
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineMode::Pipelined => f.pad("pipelined"),
            PipelineMode::Unpipelined => f.pad("unpipelined"),
        }
    }
}

/// Fixed START-to-DONE latency of the authentication core.
///
/// The latency does not depend on the candidate key: every transaction takes
/// exactly [`LatencyModel::latency_cycles`] clock cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyModel {
    pub mode: PipelineMode,
    pub clock_period_ns: u64,
}

impl LatencyModel {
    pub const fn pipelined() -> Self {
        Self {
            mode: PipelineMode::Pipelined,
            clock_period_ns: TARGET_CLOCK_PERIOD_NS,
        }
    }

    pub const fn unpipelined() -> Self {
        Self {
            mode: PipelineMode::Unpipelined,
            clock_period_ns: TARGET_CLOCK_PERIOD_NS,
        }
    }

    pub const fn from_pipelined(pipelined: bool) -> Self {
        if pipelined {
            Self::pipelined()
        } else {
            Self::unpipelined()
        }
    }

    pub const fn latency_cycles(&self) -> u64 {
        match self.mode {
            PipelineMode::Pipelined => PIPELINED_LATENCY_CYCLES,
            PipelineMode::Unpipelined => UNPIPELINED_LATENCY_CYCLES,
        }
    }

    pub const fn cycles_to_ns(&self, cycles: u64) -> u64 {
        cycles.saturating_mul(self.clock_period_ns)
    }

    /// Duration of one full transaction.
    pub const fn latency_ns(&self) -> u64 {
        self.cycles_to_ns(self.latency_cycles())
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self::pipelined()
    }
}
