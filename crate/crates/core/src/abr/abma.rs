use std::collections::VecDeque;
use std::sync::Arc;

use super::{AbrError, BufferMap, Decision, DecisionContext, GridSpec, ParamMap, ParamReader};

/// Time-based controller parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AbmaParams {
    /// Download-time samples kept for the estimate.
    pub window: usize,
    /// Highest acceptable predicted stall probability.
    pub epsilon_stall: f64,
    /// Samples required before leaving the lowest level.
    pub min_probes: usize,
    pub grid: GridSpec,
}

impl Default for AbmaParams {
    fn default() -> Self {
        Self::with_window(50)
    }
}

impl AbmaParams {
    pub fn with_window(window: usize) -> Self {
        Self {
            window,
            epsilon_stall: 0.05,
            min_probes: window.div_ceil(5),
            grid: GridSpec::default(),
        }
    }

    pub fn from_map(map: &ParamMap) -> Result<Self, AbrError> {
        let mut r = ParamReader::new("abma+", map);
        let window = r.get("W", 50.0);
        r.check("W", window, window >= 1.0 && window.fract() == 0.0, "must be a positive integer")?;
        let d = Self::with_window(window as usize);
        let epsilon_stall = r.get("epsilon_stall", d.epsilon_stall);
        let min_probes = r.get("min_probes", d.min_probes as f64);
        let buffer_step = r.get("map_buffer_step", d.grid.buffer_step);
        let trials = r.get("map_trials", d.grid.trials as f64);
        let horizon = r.get("map_horizon", d.grid.horizon as f64);
        r.check(
            "epsilon_stall",
            epsilon_stall,
            (0.0..=1.0).contains(&epsilon_stall),
            "must lie in [0, 1]",
        )?;
        r.check(
            "min_probes",
            min_probes,
            min_probes >= 1.0 && min_probes <= window && min_probes.fract() == 0.0,
            "must be an integer in [1, W]",
        )?;
        r.check("map_buffer_step", buffer_step, buffer_step > 0.0, "must be > 0")?;
        r.check("map_trials", trials, trials >= 1.0 && trials.fract() == 0.0, "must be a positive integer")?;
        r.check("map_horizon", horizon, horizon >= 1.0 && horizon.fract() == 0.0, "must be a positive integer")?;
        r.finish()?;
        Ok(Self {
            window: d.window,
            epsilon_stall,
            min_probes: min_probes as usize,
            grid: GridSpec {
                buffer_step,
                trials: trials as usize,
                horizon: horizon as usize,
                ..d.grid
            },
        })
    }
}

/// Picks the highest level whose predicted stall probability stays under
/// `epsilon_stall`, using download-time statistics and a buffer map.
#[derive(Debug, Clone)]
pub struct Abma {
    params: AbmaParams,
    map: Arc<BufferMap>,
    /// Seconds per bit of recent downloads.
    probes: VecDeque<f64>,
}

impl Abma {
    pub fn new(params: AbmaParams, map: Arc<BufferMap>) -> Self {
        Self {
            probes: VecDeque::with_capacity(params.window),
            params,
            map,
        }
    }

    pub fn params(&self) -> &AbmaParams {
        &self.params
    }

    pub fn probe_count(&self) -> usize {
        self.probes.len()
    }

    /// Mean and coefficient of variation of seconds-per-bit over the window.
    /// Summation runs over sorted values so the result ignores sample order.
    pub fn estimate(&self) -> Option<(f64, f64)> {
        if self.probes.is_empty() {
            return None;
        }
        let mut v: Vec<f64> = self.probes.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        Some((mean, cv))
    }

    /// Highest level acceptable at `buffer` given per-bit mean and cv.
    pub fn level_for(&self, buffer: f64, mean: f64, cv: f64, avg_sizes: &[f64], tau: f64) -> usize {
        avg_sizes
            .iter()
            .rposition(|&s| {
                let m = mean * s / tau;
                self.map.lookup(buffer, m, cv) <= self.params.epsilon_stall
            })
            .unwrap_or(0)
    }

    pub fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision {
        let Some(last) = ctx.last else {
            return Decision::now(0);
        };
        if self.probes.len() == self.params.window {
            self.probes.pop_front();
        }
        self.probes.push_back(last.download_time() / last.bits as f64);
        if self.probes.len() < self.params.min_probes {
            return Decision::now(0);
        }
        let (mean, cv) = self.estimate().expect("nonempty window");
        Decision::now(self.level_for(
            ctx.buffer,
            mean,
            cv,
            ctx.avg_sizes,
            ctx.segment_duration(),
        ))
    }
}
