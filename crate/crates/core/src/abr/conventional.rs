use super::{dead_zone_quantize, ewma, AbrError, Decision, DecisionContext, ParamMap, ParamReader};

/// Throughput-based four-step controller: last-segment throughput, EWMA
/// smoothing, dead-zone quantizer, bimodal scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct ConventionalParams {
    /// EWMA weight of the newest sample.
    pub alpha: f64,
    pub up_margin: f64,
    pub down_margin: f64,
    /// Wait before the next request when the buffer is full, seconds.
    pub full_delay: f64,
}

impl ConventionalParams {
    pub fn defaults(segment_duration: f64) -> Self {
        Self {
            alpha: 0.2,
            up_margin: 0.15,
            down_margin: 0.0,
            full_delay: segment_duration,
        }
    }

    pub fn from_map(map: &ParamMap, segment_duration: f64) -> Result<Self, AbrError> {
        let d = Self::defaults(segment_duration);
        let mut r = ParamReader::new("conventional", map);
        let p = Self {
            alpha: r.get("alpha", d.alpha),
            up_margin: r.get("up_margin", d.up_margin),
            down_margin: r.get("down_margin", d.down_margin),
            full_delay: r.get("full_delay", d.full_delay),
        };
        r.check("alpha", p.alpha, p.alpha > 0.0 && p.alpha <= 1.0, "must lie in (0, 1]")?;
        r.check("up_margin", p.up_margin, (0.0..1.0).contains(&p.up_margin), "must lie in [0, 1)")?;
        r.check("down_margin", p.down_margin, p.down_margin >= 0.0, "must be >= 0")?;
        r.check("full_delay", p.full_delay, p.full_delay >= 0.0, "must be >= 0")?;
        r.finish()?;
        Ok(p)
    }
}

#[derive(Debug, Clone)]
pub struct Conventional {
    params: ConventionalParams,
    estimate: Option<f64>,
}

impl Conventional {
    pub fn new(params: ConventionalParams) -> Self {
        Self {
            params,
            estimate: None,
        }
    }

    pub fn estimate(&self) -> Option<f64> {
        self.estimate
    }

    pub fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision {
        let Some(last) = ctx.last else {
            return Decision::now(0);
        };
        let sample = last.throughput();
        let est = match self.estimate {
            Some(prev) => ewma(prev, sample, self.params.alpha),
            None => sample,
        };
        self.estimate = Some(est);
        let level = dead_zone_quantize(
            est,
            last.level,
            ctx.ladder,
            self.params.up_margin,
            self.params.down_margin,
        );
        let delay = if ctx.buffer_full() {
            self.params.full_delay
        } else {
            0.0
        };
        Decision { level, delay }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abr::test_support::{cbr_sizes, ctx, last_at};
    use crate::video::RepresentationLadder;

    fn run_constant(rate: f64, start_level: usize, steps: usize) -> Vec<usize> {
        let ladder = RepresentationLadder::default();
        let sizes = cbr_sizes(&ladder);
        let mut c = Conventional::new(ConventionalParams::defaults(4.0));
        let mut level = start_level;
        let mut out = Vec::new();
        for i in 0..steps {
            let bits = sizes[level] as u64;
            let last = last_at(level, bits, rate, 10.0 + i as f64);
            level = c.decide(&ctx(&ladder, &sizes, 8.0, 92.0, Some(last))).level;
            out.push(level);
        }
        out
    }

    #[test]
    fn bootstrap_is_lowest() {
        let ladder = RepresentationLadder::default();
        let sizes = cbr_sizes(&ladder);
        let mut c = Conventional::new(ConventionalParams::defaults(4.0));
        assert_eq!(c.decide(&ctx(&ladder, &sizes, 0.0, 16.0, None)), Decision::now(0));
    }

    #[test]
    fn saturates_at_top() {
        let levels = run_constant(10e6, 0, 5);
        assert_eq!(*levels.last().unwrap(), 6);
    }

    #[test]
    fn descends_after_step_within_ewma_bound() {
        // converged at 4 Mb/s, then the link drops to 0.4 Mb/s
        let ladder = RepresentationLadder::default();
        let sizes = cbr_sizes(&ladder);
        let p = ConventionalParams::defaults(4.0);
        let mut c = Conventional::new(p.clone());
        let mut level = 0;
        for i in 0..40 {
            let last = last_at(level, sizes[level] as u64, 4e6, i as f64);
            level = c.decide(&ctx(&ladder, &sizes, 8.0, 92.0, Some(last))).level;
        }
        let high_level = level;
        assert_eq!(high_level, ladder.highest_at_most(4e6 * 0.85));
        let target = ladder.highest_at_most(4e5 * (1.0 - p.up_margin));
        // after n steps the estimate sits within eps of the new rate
        let eps: f64 = 0.01;
        let bound = (eps.ln() / (1.0 - p.alpha).ln()).ceil() as usize;
        let mut reached = None;
        for i in 0..bound {
            let last = last_at(level, sizes[level] as u64, 4e5, 100.0 + i as f64);
            level = c.decide(&ctx(&ladder, &sizes, 8.0, 92.0, Some(last))).level;
            if level <= target + 1 && reached.is_none() {
                reached = Some(i + 1);
            }
        }
        assert!(reached.is_some_and(|n| n <= bound), "reached {reached:?} bound {bound}");
        assert!(level < high_level);
    }

    #[test]
    fn full_buffer_delays() {
        let ladder = RepresentationLadder::default();
        let sizes = cbr_sizes(&ladder);
        let mut c = Conventional::new(ConventionalParams::defaults(4.0));
        let last = last_at(0, sizes[0] as u64, 1e6, 5.0);
        assert_eq!(c.decide(&ctx(&ladder, &sizes, 13.0, 16.0, Some(last))).delay, 4.0);
        assert_eq!(c.decide(&ctx(&ladder, &sizes, 12.0, 16.0, Some(last))).delay, 0.0);
    }

    #[test]
    fn constant_rate_never_reverses() {
        for &rate in &[150e3, 700e3, 1.6e6, 2.5e6, 3.3e6] {
            for start in 0..7 {
                let levels = run_constant(rate, start, 60);
                let ups = levels.windows(2).any(|w| w[1] > w[0]);
                let downs = levels.windows(2).any(|w| w[1] < w[0]);
                assert!(!(ups && downs), "rate {rate} start {start}: {levels:?}");
            }
        }
    }
}
