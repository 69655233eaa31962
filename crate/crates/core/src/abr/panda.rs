use super::{dead_zone_quantize, ewma, AbrError, Decision, DecisionContext, ParamMap, ParamReader};

/// Probe-and-adapt parameters. Rates are bits/s, times seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PandaParams {
    /// Probing convergence rate, 1/s.
    pub kappa: f64,
    /// Additive probing increment, bits/s.
    pub w: f64,
    /// Smoothing rate, 1/s.
    pub alpha: f64,
    /// Up-switch safety margin of the quantizer.
    pub epsilon: f64,
    /// Buffer convergence rate of the scheduler, 1/s.
    pub beta: f64,
    /// Buffer level the scheduler steers towards, seconds.
    pub b_target: f64,
}

impl PandaParams {
    /// Published defaults; the 26 s buffer target is clamped to leave one
    /// segment of headroom under `b_max`.
    pub fn defaults(segment_duration: f64, b_max: f64) -> Self {
        Self {
            kappa: 0.14,
            w: 300_000.0,
            alpha: 0.2,
            epsilon: 0.15,
            beta: 0.2,
            b_target: 26.0_f64.min(b_max - segment_duration).max(0.0),
        }
    }

    pub fn from_map(map: &ParamMap, segment_duration: f64, b_max: f64) -> Result<Self, AbrError> {
        let d = Self::defaults(segment_duration, b_max);
        let mut r = ParamReader::new("panda", map);
        let p = Self {
            kappa: r.get("kappa", d.kappa),
            w: r.get("w", d.w),
            alpha: r.get("alpha", d.alpha),
            epsilon: r.get("epsilon", d.epsilon),
            beta: r.get("beta", d.beta),
            b_target: r.get("b_target", d.b_target),
        };
        r.check("kappa", p.kappa, p.kappa > 0.0, "must be > 0")?;
        r.check("w", p.w, p.w >= 0.0, "must be >= 0")?;
        r.check("alpha", p.alpha, p.alpha > 0.0, "must be > 0")?;
        r.check("epsilon", p.epsilon, (0.0..1.0).contains(&p.epsilon), "must lie in [0, 1)")?;
        r.check("beta", p.beta, p.beta >= 0.0, "must be >= 0")?;
        r.check("b_target", p.b_target, p.b_target >= 0.0, "must be >= 0")?;
        r.finish()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PandaState {
    /// Probed bandwidth share.
    target: f64,
    /// Smoothed version of `target`.
    smoothed: f64,
    /// Inter-request time that preceded the current decision.
    interval: f64,
}

#[derive(Debug, Clone)]
pub struct Panda {
    params: PandaParams,
    state: Option<PandaState>,
}

impl Panda {
    pub fn new(params: PandaParams) -> Self {
        Self {
            params,
            state: None,
        }
    }

    /// `(target, smoothed)` rates after the latest update.
    pub fn estimates(&self) -> Option<(f64, f64)> {
        self.state.map(|s| (s.target, s.smoothed))
    }

    /// Additive-increase / multiplicative-decrease probe of the bandwidth share.
    fn probe(&self, target: f64, measured: f64, interval: f64) -> f64 {
        let p = &self.params;
        let overshoot = (target - measured + p.w).max(0.0);
        (target + p.kappa * interval * (p.w - overshoot)).max(1.0)
    }

    pub fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision {
        let Some(last) = ctx.last else {
            return Decision::now(0);
        };
        let p = &self.params;
        let measured = last.throughput();
        let download = last.download_time();

        let (target, smoothed) = match self.state {
            None => (measured, measured),
            Some(s) => {
                let target = self.probe(s.target, measured, s.interval);
                let weight = (p.alpha * s.interval).min(1.0);
                (target, ewma(s.smoothed, target, weight))
            }
        };

        let level = dead_zone_quantize(smoothed, last.level, ctx.ladder, p.epsilon, 0.0);
        let rate = ctx.ladder.rate(level) as f64;
        let target_interval =
            rate * ctx.segment_duration() / smoothed + p.beta * (ctx.buffer - p.b_target);
        let interval = target_interval.max(download);
        self.state = Some(PandaState {
            target,
            smoothed,
            interval,
        });
        Decision {
            level,
            delay: (target_interval - download).max(0.0),
        }
    }
}
