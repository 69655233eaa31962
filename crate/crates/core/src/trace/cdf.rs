use super::{ThroughputTrace, TraceError};

/// Duration-weighted empirical distribution of a trace's throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl EmpiricalCdf {
    /// Builds a CDF from `(value, weight)` pairs. Zero-weight pairs are ignored.
    pub fn from_weighted<I>(pairs: I) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().filter(|&(_, w)| w > 0.0).collect();
        if pairs.is_empty() {
            return Err(TraceError::Domain("empirical CDF of an empty sample".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();

        let mut values: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (v, w) in pairs {
            match values.last() {
                Some(&last) if last == v => *weights.last_mut().unwrap() += w,
                _ => {
                    values.push(v);
                    weights.push(w);
                }
            }
        }
        let mut acc = 0.0;
        let mut probs: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        // rounding may leave the last step a hair under 1
        *probs.last_mut().unwrap() = 1.0;
        Ok(Self { values, probs })
    }

    /// Merges several traces into one profile distribution.
    pub fn from_traces<'a, I>(traces: I) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = &'a ThroughputTrace>,
    {
        Self::from_weighted(traces.into_iter().flat_map(weighted_samples))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let idx = self.values.partition_point(|&v| v <= x);
        if idx == 0 {
            0.0
        } else {
            self.probs[idx - 1]
        }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

fn weighted_samples(trace: &ThroughputTrace) -> impl Iterator<Item = (f64, f64)> + '_ {
    trace.samples().windows(2).map(|w| (w[0].rate, w[1].t - w[0].t))
}

/// Empirical CDF of one trace, each sample weighted by how long it holds.
pub fn ecdf(trace: &ThroughputTrace) -> Result<EmpiricalCdf, TraceError> {
    EmpiricalCdf::from_weighted(weighted_samples(trace))
}

/// Smallest value `v` with `CDF(v) >= q`.
pub fn quantile(cdf: &EmpiricalCdf, q: f64) -> Result<f64, TraceError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(TraceError::Domain(format!("quantile level {q} outside (0, 1]")));
    }
    let idx = cdf.probs.partition_point(|&p| p < q);
    Ok(cdf.values[idx.min(cdf.values.len() - 1)])
}
