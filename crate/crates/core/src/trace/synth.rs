use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Sample, ThroughputTrace, TraceError, TraceLabel};

/// Square wave starting at `high`, switching level every `phase_length`
/// seconds. The last phase is truncated at `total`.
pub fn synth_controlled(
    high: f64,
    low: f64,
    phase_length: f64,
    total: f64,
) -> Result<ThroughputTrace, TraceError> {
    if !(low > 0.0 && high > low) {
        return Err(TraceError::Domain(format!(
            "controlled profile needs high > low > 0, got high={high} low={low}"
        )));
    }
    if !(phase_length > 0.0 && total > 0.0) || !total.is_finite() {
        return Err(TraceError::Domain(format!(
            "phase length and total must be positive, got {phase_length} and {total}"
        )));
    }
    let mut samples = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * phase_length;
        if t >= total {
            break;
        }
        let rate = if k.is_multiple_of(2) { high } else { low };
        samples.push(Sample { t, rate });
        k += 1;
    }
    let last = samples[samples.len() - 1].rate;
    samples.push(Sample { t: total, rate: last });
    ThroughputTrace::new(samples, TraceLabel::Controlled)
}

/// Throughput quantiles (probability, bits/s) for a bus-style mobile
/// profile. Interior points are the 7-level ladder rates at their CDF
/// quantiles; the 0 and 1 endpoints bound the tails.
pub const NORMAL_PROFILE_QUANTILES: [(f64, f64); 9] = [
    (0.0, 64_000.0),
    (0.01, 129_000.0),
    (0.05, 378_000.0),
    (0.10, 578_000.0),
    (0.25, 985_000.0),
    (0.50, 1_536_000.0),
    (0.75, 2_353_000.0),
    (0.95, 2_969_000.0),
    (1.0, 4_000_000.0),
];

/// Parameters for a synthetic mobile trace: a Gaussian AR(1) process pushed
/// through a piecewise-linear inverse CDF, with optional hard outages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileProfileSpec {
    pub duration: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Lag-one correlation of the latent Gaussian per step.
    #[serde(default = "default_correlation")]
    pub correlation: f64,
    /// `(probability, rate)` knots, probabilities strictly increasing from 0 to 1.
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<(f64, f64)>,
    /// `(start, length)` zero-throughput windows.
    #[serde(default)]
    pub outages: Vec<(f64, f64)>,
}

fn default_step() -> f64 {
    1.0
}

fn default_correlation() -> f64 {
    0.95
}

fn default_quantiles() -> Vec<(f64, f64)> {
    NORMAL_PROFILE_QUANTILES.to_vec()
}

impl MobileProfileSpec {
    pub fn normal(duration: f64) -> Self {
        Self {
            duration,
            step: default_step(),
            correlation: default_correlation(),
            quantiles: default_quantiles(),
            outages: Vec::new(),
        }
    }

    pub fn with_outage(mut self, start: f64, length: f64) -> Self {
        self.outages.push((start, length));
        self
    }

    fn inverse_cdf(&self, u: f64) -> f64 {
        let q = &self.quantiles;
        let i = q.partition_point(|&(p, _)| p <= u).clamp(1, q.len() - 1);
        let (p0, r0) = q[i - 1];
        let (p1, r1) = q[i];
        let w = ((u - p0) / (p1 - p0)).clamp(0.0, 1.0);
        r0 + w * (r1 - r0)
    }

    fn validate(&self) -> Result<(), TraceError> {
        if !(self.duration > 0.0 && self.step > 0.0) {
            return Err(TraceError::Domain("duration and step must be positive".into()));
        }
        if !(self.correlation >= 0.0 && self.correlation < 1.0) {
            return Err(TraceError::Domain("correlation must lie in [0, 1)".into()));
        }
        let q = &self.quantiles;
        let ok = q.len() >= 2
            && q[0].0 == 0.0
            && q[q.len() - 1].0 == 1.0
            && q.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1)
            && q.iter().all(|&(_, r)| r >= 0.0);
        if !ok {
            return Err(TraceError::Domain(
                "quantile knots must span [0, 1] with nondecreasing rates".into(),
            ));
        }
        if self.outages.iter().any(|&(s, l)| !(s >= 0.0 && l > 0.0)) {
            return Err(TraceError::Domain("outages need start >= 0 and length > 0".into()));
        }
        Ok(())
    }

    fn in_outage(&self, t: f64) -> bool {
        self.outages.iter().any(|&(start, len)| {
            let end = start + len;
            (t >= start && t < end) || (t == self.duration && end >= self.duration && start < t)
        })
    }
}

/// Seeded synthetic mobile trace.
pub fn synth_mobile(
    spec: &MobileProfileSpec,
    label: TraceLabel,
    seed: u64,
) -> Result<ThroughputTrace, TraceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = spec.correlation;
    let innovation = (1.0 - phi * phi).sqrt();
    let mut z: f64 = rng.sample(StandardNormal);

    let mut base = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * spec.step;
        if t >= spec.duration {
            break;
        }
        let u = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
        base.push(Sample {
            t,
            rate: spec.inverse_cdf(u),
        });
        let eps: f64 = rng.sample(StandardNormal);
        z = phi * z + innovation * eps;
        k += 1;
    }
    let last = base[base.len() - 1].rate;
    base.push(Sample {
        t: spec.duration,
        rate: last,
    });
    let base = ThroughputTrace::new(base, label.clone())?;
    if spec.outages.is_empty() {
        return Ok(base);
    }

    let mut cuts: Vec<f64> = base.samples().iter().map(|s| s.t).collect();
    for &(start, len) in &spec.outages {
        for edge in [start, start + len] {
            if edge < spec.duration {
                cuts.push(edge);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let samples = cuts
        .into_iter()
        .map(|t| Sample {
            t,
            rate: if spec.in_outage(t) { 0.0 } else { base.rate_at(t) },
        })
        .collect();
    ThroughputTrace::new(samples, label)
}
