use super::{AbrError, Decision, DecisionContext, ParamMap, ParamReader};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BolaVariant {
    /// Plain utility maximisation.
    U,
    /// Caps up-switches at the last measured throughput.
    O,
}

/// Lyapunov drift-plus-penalty parameters.
///
/// `v` trades utility against buffer drift; when unset it is derived from the
/// buffer capacity so that the top level is reached one segment below a full
/// buffer. `gamma` (1/s) weights the rebuffering penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct BolaParams {
    pub v: Option<f64>,
    pub gamma: f64,
    pub variant: BolaVariant,
    /// Buffer capacity in whole segments.
    pub q_max: f64,
}

impl BolaParams {
    pub fn defaults(variant: BolaVariant, segment_duration: f64, b_max: f64) -> Self {
        Self {
            v: None,
            gamma: 5.0 / segment_duration,
            variant,
            q_max: (b_max / segment_duration).floor(),
        }
    }

    pub fn from_map(
        map: &ParamMap,
        variant: BolaVariant,
        segment_duration: f64,
        b_max: f64,
    ) -> Result<Self, AbrError> {
        let d = Self::defaults(variant, segment_duration, b_max);
        let name = match variant {
            BolaVariant::U => "bola-u",
            BolaVariant::O => "bola-o",
        };
        let mut r = ParamReader::new(name, map);
        let v = map.contains_key("V").then(|| r.get("V", 0.0));
        let p = Self {
            v,
            gamma: r.get("gamma", d.gamma),
            variant,
            q_max: d.q_max,
        };
        if let Some(v) = p.v {
            r.check("V", v, v > 0.0, "must be > 0")?;
        }
        r.check("gamma", p.gamma, p.gamma > 0.0, "must be > 0")?;
        r.finish()?;
        Ok(p)
    }
}

#[derive(Debug, Clone)]
pub struct Bola {
    params: BolaParams,
}

impl Bola {
    pub fn new(params: BolaParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &BolaParams {
        &self.params
    }

    fn control_v(&self, utilities: &[f64], gamma_tau: f64) -> f64 {
        self.params.v.unwrap_or_else(|| {
            let top = utilities[utilities.len() - 1];
            (self.params.q_max - 1.0).max(1.0) / (top + gamma_tau)
        })
    }

    /// Utility-maximising level for a buffer of `q` whole segments.
    /// Ties go to the higher level.
    pub fn level_for_queue(&self, q: f64, avg_sizes: &[f64], segment_duration: f64) -> usize {
        let utilities: Vec<f64> = avg_sizes.iter().map(|s| (s / avg_sizes[0]).ln()).collect();
        let gamma_tau = self.params.gamma * segment_duration;
        let v = self.control_v(&utilities, gamma_tau);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, (&u, &s)) in utilities.iter().zip(avg_sizes).enumerate() {
            let score = (v * (u + gamma_tau) - q) / s;
            if score >= best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    pub fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision {
        let Some(last) = ctx.last else {
            return Decision::now(0);
        };
        let tau = ctx.segment_duration();
        let q = (ctx.buffer / tau).floor();
        let chosen = self.level_for_queue(q, ctx.avg_sizes, tau);
        let level = match self.params.variant {
            BolaVariant::U => chosen,
            BolaVariant::O if chosen > last.level => {
                let cap = ctx.ladder.highest_at_most(last.throughput());
                chosen.min(cap).max(last.level)
            }
            BolaVariant::O => chosen,
        };
        Decision::now(level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abr::test_support::{cbr_sizes, ctx, last_at};
    use crate::video::RepresentationLadder;

    fn bola(variant: BolaVariant, b_max: f64) -> Bola {
        Bola::new(BolaParams::defaults(variant, 4.0, b_max))
    }

    #[test]
    fn empty_buffer_lowest_full_buffer_highest() {
        let ladder = RepresentationLadder::default();
        let sizes = cbr_sizes(&ladder);
        for b_max in [16.0, 92.0] {
            let b = bola(BolaVariant::U, b_max);
            assert_eq!(b.level_for_queue(0.0, &sizes, 4.0), 0);
            assert_eq!(b.level_for_queue((b_max / 4.0_f64).floor(), &sizes, 4.0), 6);
        }
    }

    #[test]
    fn small_buffer_map() {
        // with four segments of room the map is coarse
        let ladder = RepresentationLadder::default();
        let sizes = cbr_sizes(&ladder);
        let b = bola(BolaVariant::U, 16.0);
        let levels: Vec<usize> = (0..=4).map(|q| b.level_for_queue(q as f64, &sizes, 4.0)).collect();
        assert_eq!(levels, vec![0, 0, 2, 6, 6]);
    }

    #[test]
    fn bola_o_caps_upswitch() {
        let ladder = RepresentationLadder::default();
        let sizes = cbr_sizes(&ladder);
        // buffer says top level, but throughput only supports level 1
        let last = last_at(1, sizes[1] as u64, 400_000.0, 50.0);
        let mut u = bola(BolaVariant::U, 92.0);
        let mut o = bola(BolaVariant::O, 92.0);
        let c = ctx(&ladder, &sizes, 90.0, 92.0, Some(last));
        assert_eq!(u.decide(&c).level, 6);
        assert_eq!(o.decide(&c).level, 1);
        // cap below the previous level does not force a down-switch
        let last = last_at(4, sizes[4] as u64, 200_000.0, 50.0);
        let c = ctx(&ladder, &sizes, 90.0, 92.0, Some(last));
        assert_eq!(o.decide(&c).level, 4);
    }

    #[test]
    fn explicit_v_is_used() {
        let mut map = ParamMap::new();
        map.insert("V".into(), 0.5);
        let p = BolaParams::from_map(&map, BolaVariant::U, 4.0, 16.0).unwrap();
        assert_eq!(p.v, Some(0.5));
        map.insert("V".into(), -1.0);
        assert!(BolaParams::from_map(&map, BolaVariant::U, 4.0, 16.0).is_err());
    }
}
