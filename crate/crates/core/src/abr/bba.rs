use super::{AbrError, Decision, DecisionContext, ParamMap, ParamReader};

/// Buffer-based segment map.
///
/// Below `reservoir` seconds the lowest level is used, above
/// `reservoir + cushion` the highest. In between, the allowed segment size
/// grows linearly from the lowest level's mean size to the highest's.
#[derive(Debug, Clone, PartialEq)]
pub struct BbaParams {
    pub reservoir: f64,
    pub cushion: f64,
}

impl BbaParams {
    /// Reservoir and cushion keep the published 90 s / 126 s split of a
    /// 240 s buffer, scaled to `b_max`.
    pub fn defaults(b_max: f64) -> Self {
        Self {
            reservoir: 0.375 * b_max,
            cushion: 0.525 * b_max,
        }
    }

    pub fn from_map(map: &ParamMap, b_max: f64) -> Result<Self, AbrError> {
        let d = Self::defaults(b_max);
        let mut r = ParamReader::new("bba", map);
        let p = Self {
            reservoir: r.get("reservoir", d.reservoir),
            cushion: r.get("cushion", d.cushion),
        };
        r.check("reservoir", p.reservoir, p.reservoir >= 0.0, "must be >= 0")?;
        r.check("cushion", p.cushion, p.cushion > 0.0, "must be > 0")?;
        r.check(
            "cushion",
            p.cushion,
            p.reservoir + p.cushion <= b_max + 1e-9,
            "reservoir + cushion must not exceed b_max",
        )?;
        r.finish()?;
        Ok(p)
    }
}

#[derive(Debug, Clone)]
pub struct Bba {
    params: BbaParams,
}

impl Bba {
    pub fn new(params: BbaParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &BbaParams {
        &self.params
    }

    /// Level for a given buffer occupancy.
    pub fn level_for(&self, buffer: f64, avg_sizes: &[f64]) -> usize {
        let top = avg_sizes.len() - 1;
        let p = &self.params;
        if buffer <= p.reservoir {
            return 0;
        }
        if buffer >= p.reservoir + p.cushion {
            return top;
        }
        let frac = (buffer - p.reservoir) / p.cushion;
        let allowed = avg_sizes[0] + frac * (avg_sizes[top] - avg_sizes[0]);
        avg_sizes
            .iter()
            .rposition(|&s| s <= allowed)
            .unwrap_or(0)
    }

    pub fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision {
        Decision::now(self.level_for(ctx.buffer, ctx.avg_sizes))
    }
}
