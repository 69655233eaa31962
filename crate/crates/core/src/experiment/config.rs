use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::abr::{AbmaParams, AlgorithmKind, AlgorithmSpec, BbaParams, BolaParams, BolaVariant};
use crate::abr::{ConventionalParams, PandaParams, ParamMap};
use crate::trace::{
    synth_controlled, synth_mobile, EmpiricalCdf, MobileProfileSpec, ProfileManifest,
    ThroughputTrace, TraceLabel,
};
use crate::video::{
    ladder_from_quantiles, load_segments, synth_segments, RepresentationLadder, SegmentSizeTable,
    DEFAULT_SEGMENT_DURATION,
};

pub const SCHEMA_VERSION: u32 = 1;

fn default_omega() -> u32 {
    2
}
fn default_vbr_cv() -> f64 {
    0.15
}
fn default_segment_count() -> usize {
    150
}
fn default_true() -> bool {
    true
}
fn default_tau() -> f64 {
    DEFAULT_SEGMENT_DURATION
}

/// Top-level experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default = "default_omega")]
    pub omega: u32,
    /// Buffer capacities to sweep, seconds.
    pub b_max: Vec<f64>,
    /// Coefficient of variation of synthetic VBR segment sizes.
    #[serde(default = "default_vbr_cv")]
    pub vbr_cv: f64,
    /// Segments in the synthetic movie; sessions loop over it.
    #[serde(default = "default_segment_count")]
    pub segment_count: usize,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(rename = "profile")]
    pub profiles: Vec<ProfileConfig>,
    #[serde(rename = "algorithm")]
    pub algorithms: Vec<AlgorithmConfig>,
    /// Directory for persisted buffer maps.
    #[serde(default)]
    pub buffer_map_cache: Option<PathBuf>,
    /// Write per-session logs into the bundle.
    #[serde(default = "default_true")]
    pub write_logs: bool,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    /// Explicit rates; the built-in ladder when neither this nor
    /// `quantiles` is given.
    pub rates_kbps: Option<Vec<u64>>,
    /// Derive rates from the throughput CDF of `quantile_profile`.
    pub quantiles: Option<Vec<f64>>,
    pub quantile_profile: Option<String>,
    #[serde(default = "default_tau")]
    pub segment_duration: f64,
    /// Segment-size CSV (`level,segment_index,bytes`) used instead of
    /// synthetic VBR sizes.
    pub segments: Option<PathBuf>,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            rates_kbps: None,
            quantiles: None,
            quantile_profile: None,
            segment_duration: DEFAULT_SEGMENT_DURATION,
            segments: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub name: String,
    /// Manifest listing the profile's trace files.
    pub manifest: Option<PathBuf>,
    pub synthetic: Option<SyntheticProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SyntheticProfile {
    Mobile {
        traces: usize,
        duration: f64,
        #[serde(default = "MobileDefaults::step")]
        step: f64,
        #[serde(default = "MobileDefaults::correlation")]
        correlation: f64,
        /// `(probability, rate)` knots; the built-in bus-style profile
        /// when omitted.
        #[serde(default)]
        quantiles: Option<Vec<(f64, f64)>>,
        /// `(start, length)` outages.
        #[serde(default)]
        outages: Vec<(f64, f64)>,
    },
    Controlled {
        #[serde(default = "ControlledDefaults::high")]
        high: f64,
        #[serde(default = "ControlledDefaults::low")]
        low: f64,
        #[serde(default = "ControlledDefaults::phase")]
        phase: f64,
        #[serde(default = "ControlledDefaults::duration")]
        duration: f64,
    },
}

struct MobileDefaults;

impl MobileDefaults {
    fn step() -> f64 {
        MobileProfileSpec::normal(1.0).step
    }
    fn correlation() -> f64 {
        MobileProfileSpec::normal(1.0).correlation
    }
}

struct ControlledDefaults;

impl ControlledDefaults {
    fn high() -> f64 {
        4e6
    }
    fn low() -> f64 {
        4e5
    }
    fn phase() -> f64 {
        30.0
    }
    fn duration() -> f64 {
        90.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    /// Name in outputs; defaults to the algorithm id.
    pub label: Option<String>,
    #[serde(default)]
    pub params: ParamMap,
}

impl AlgorithmConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.id().to_string())
    }

    pub fn spec(&self) -> AlgorithmSpec {
        AlgorithmSpec {
            kind: self.kind,
            params: self.params.clone(),
        }
    }
}

/// Derives an independent seed from a base seed and a context string.
pub fn derive_seed(base: u64, context: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(context.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// A named trace of one profile.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub id: String,
    pub trace: ThroughputTrace,
}

#[derive(Debug, Clone)]
pub struct ResolvedProfile {
    pub name: String,
    pub traces: Vec<TraceEntry>,
}

/// Everything a matrix run needs, loaded and checked up front.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ladder: RepresentationLadder,
    pub profiles: Vec<ResolvedProfile>,
    /// Shared segment table when one was supplied as a file.
    pub fixed_segments: Option<SegmentSizeTable>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn buffer_map_dir(&self) -> Option<PathBuf> {
        self.buffer_map_cache.as_deref().map(|p| self.resolve(p))
    }

    /// Checks that need no file access.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |m: String| Err(ExperimentError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return err(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.profiles.is_empty() {
            return err("at least one [[profile]] is required".into());
        }
        if self.algorithms.is_empty() {
            return err("at least one [[algorithm]] is required".into());
        }
        if self.b_max.is_empty() {
            return err("b_max must list at least one buffer size".into());
        }
        let tau = self.ladder.segment_duration;
        if !(tau > 0.0 && tau.is_finite()) {
            return err(format!("segment_duration {tau} must be positive"));
        }
        if self.omega == 0 {
            return err("omega must be at least 1".into());
        }
        for &b in &self.b_max {
            if !(b.is_finite() && b >= self.omega as f64 * tau) {
                return err(format!("b_max {b} must be finite and at least omega * tau"));
            }
        }
        if self.segment_count == 0 {
            return err("segment_count must be positive".into());
        }
        let mut names = BTreeSet::new();
        for p in &self.profiles {
            if !names.insert(p.name.as_str()) {
                return err(format!("duplicate profile `{}`", p.name));
            }
            if p.manifest.is_some() == p.synthetic.is_some() {
                return err(format!(
                    "profile `{}` needs exactly one of `manifest` or `synthetic`",
                    p.name
                ));
            }
        }
        let mut labels = BTreeSet::new();
        for a in &self.algorithms {
            if !labels.insert(a.label()) {
                return err(format!("duplicate algorithm label `{}`", a.label()));
            }
            for &b in &self.b_max {
                check_params(a, tau, b)?;
            }
        }
        match (&self.ladder.rates_kbps, &self.ladder.quantiles) {
            (Some(_), Some(_)) => return err("ladder: give rates_kbps or quantiles, not both".into()),
            (None, Some(_)) => match &self.ladder.quantile_profile {
                Some(name) if names.contains(name.as_str()) => {}
                Some(name) => return err(format!("ladder: unknown quantile_profile `{name}`")),
                None => return err("ladder: quantiles need quantile_profile".into()),
            },
            _ => {}
        }
        Ok(())
    }

    /// Loads traces, builds the ladder and reads any segment file.
    pub fn prepare(&self) -> Result<Prepared, ExperimentError> {
        let mut profiles = Vec::with_capacity(self.profiles.len());
        for p in &self.profiles {
            profiles.push(self.resolve_profile(p)?);
        }
        let tau = self.ladder.segment_duration;
        let ladder = match (&self.ladder.rates_kbps, &self.ladder.quantiles) {
            (Some(kbps), None) => {
                let rates: Vec<u64> = kbps.iter().map(|r| r * 1000).collect();
                RepresentationLadder::from_rates(&rates, tau)?
            }
            (None, Some(qs)) => {
                let name = self.ladder.quantile_profile.as_deref().unwrap_or_default();
                let prof = profiles.iter().find(|p| p.name == name).expect("validated");
                let cdf = EmpiricalCdf::from_traces(prof.traces.iter().map(|t| &t.trace))?;
                ladder_from_quantiles(&cdf, qs, tau)?
            }
            _ if tau == DEFAULT_SEGMENT_DURATION => RepresentationLadder::default(),
            _ => {
                let rates: Vec<u64> = crate::video::DEFAULT_LADDER_KBPS
                    .iter()
                    .map(|r| r * 1000)
                    .collect();
                RepresentationLadder::from_rates(&rates, tau)?
            }
        };
        let fixed_segments = match &self.ladder.segments {
            Some(path) => {
                let path = self.resolve(path);
                let bytes = fs::read(&path)
                    .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
                let table = load_segments(&bytes)?;
                if table.levels() != ladder.len() {
                    return Err(ExperimentError::Config(format!(
                        "segment file has {} levels, ladder has {}",
                        table.levels(),
                        ladder.len()
                    )));
                }
                Some(table)
            }
            None => None,
        };
        Ok(Prepared {
            ladder,
            profiles,
            fixed_segments,
        })
    }

    fn resolve_profile(&self, p: &ProfileConfig) -> Result<ResolvedProfile, ExperimentError> {
        let label: TraceLabel = p.name.parse().expect("infallible");
        let traces = match (&p.manifest, &p.synthetic) {
            (Some(path), None) => {
                let manifest = ProfileManifest::load(&self.resolve(path))?;
                manifest
                    .load_traces()?
                    .into_iter()
                    .map(|(id, trace)| TraceEntry { id, trace })
                    .collect()
            }
            (
                None,
                Some(SyntheticProfile::Mobile {
                    traces,
                    duration,
                    step,
                    correlation,
                    quantiles,
                    outages,
                }),
            ) => {
                let mut spec = MobileProfileSpec::normal(*duration);
                spec.step = *step;
                spec.correlation = *correlation;
                if let Some(q) = quantiles {
                    spec.quantiles = q.clone();
                }
                spec.outages = outages.clone();
                (0..*traces)
                .map(|i| {
                    let id = format!("{}-{i:02}", p.name);
                    let seed = derive_seed(self.seed, &format!("trace/{id}"));
                    synth_mobile(&spec, label.clone(), seed).map(|trace| TraceEntry { id, trace })
                })
                .collect::<Result<_, _>>()?
            }
            (
                None,
                Some(SyntheticProfile::Controlled {
                    high,
                    low,
                    phase,
                    duration,
                }),
            ) => vec![TraceEntry {
                id: format!("{}-00", p.name),
                trace: synth_controlled(*high, *low, *phase, *duration)?,
            }],
            _ => unreachable!("validated"),
        };
        if traces.is_empty() {
            return Err(ExperimentError::Config(format!("profile `{}` has no traces", p.name)));
        }
        let mut ids = BTreeSet::new();
        for t in &traces {
            if !ids.insert(t.id.as_str()) {
                return Err(ExperimentError::Config(format!(
                    "profile `{}`: duplicate trace id `{}`",
                    p.name, t.id
                )));
            }
        }
        Ok(ResolvedProfile {
            name: p.name.clone(),
            traces,
        })
    }

    /// Segment sizes for a trace: the shared file, or a VBR draw seeded by
    /// the trace id.
    pub fn segments_for(
        &self,
        prepared: &Prepared,
        trace_id: &str,
    ) -> Result<SegmentSizeTable, ExperimentError> {
        if let Some(t) = &prepared.fixed_segments {
            return Ok(t.clone());
        }
        let seed = derive_seed(self.seed, &format!("segments/{trace_id}"));
        Ok(synth_segments(
            &prepared.ladder,
            self.segment_count,
            self.vbr_cv,
            seed,
        )?)
    }

    pub fn buffer_map_seed(&self) -> u64 {
        derive_seed(self.seed, "buffer-map")
    }
}

/// Parameter validation without building buffer maps.
fn check_params(a: &AlgorithmConfig, tau: f64, b_max: f64) -> Result<(), ExperimentError> {
    let p = &a.params;
    match a.kind {
        AlgorithmKind::Conventional => ConventionalParams::from_map(p, tau).map(drop),
        AlgorithmKind::Panda => PandaParams::from_map(p, tau, b_max).map(drop),
        AlgorithmKind::Bba => BbaParams::from_map(p, b_max).map(drop),
        AlgorithmKind::BolaU => BolaParams::from_map(p, BolaVariant::U, tau, b_max).map(drop),
        AlgorithmKind::BolaO => BolaParams::from_map(p, BolaVariant::O, tau, b_max).map(drop),
        AlgorithmKind::AbmaPlus => AbmaParams::from_map(p).map(drop),
    }
    .map_err(|e| ExperimentError::Config(format!("algorithm `{}`: {e}", a.label())))
}
