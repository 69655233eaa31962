use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Sample, ThroughputTrace, TraceError, TraceLabel};

/// On-disk trace encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TraceFormat {
    /// `t_seconds,throughput_bits_per_second`
    #[default]
    #[serde(rename = "csv-rate")]
    CsvRate,
    /// `t_seconds,bytes_received_in_interval`; each row's bytes arrived over
    /// the interval ending at its timestamp. The first row fixes the time
    /// origin and its byte count is not used.
    #[serde(rename = "csv-bytes")]
    CsvBytes,
}

impl FromStr for TraceFormat {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv-rate" => Ok(TraceFormat::CsvRate),
            "csv-bytes" => Ok(TraceFormat::CsvBytes),
            other => Err(TraceError::Domain(format!("unknown trace format `{other}`"))),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceFormat::CsvRate => "csv-rate",
            TraceFormat::CsvBytes => "csv-bytes",
        })
    }
}

fn parse_rows(input: &[u8]) -> Result<Vec<(usize, f64, f64)>, TraceError> {
    let text = std::str::from_utf8(input).map_err(|e| TraceError::Parse {
        line: 0,
        msg: format!("not utf-8: {e}"),
    })?;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(TraceError::Parse {
                line,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(t), Ok(v)) => rows.push((line, t, v)),
            // a non-numeric first row is a header
            _ if rows.is_empty() && fields[0].parse::<f64>().is_err() => continue,
            _ => {
                return Err(TraceError::Parse {
                    line,
                    msg: format!("cannot parse `{raw}` as two numbers"),
                })
            }
        }
    }
    Ok(rows)
}

/// Decodes a trace from CSV bytes.
pub fn parse_trace(
    input: &[u8],
    format: TraceFormat,
    label: TraceLabel,
) -> Result<ThroughputTrace, TraceError> {
    let rows = parse_rows(input)?;
    if rows.is_empty() {
        return Err(TraceError::Empty);
    }
    for pair in rows.windows(2) {
        if pair[1].1 <= pair[0].1 {
            return Err(TraceError::Ordering {
                line: pair[1].0,
                t: pair[1].1,
            });
        }
    }
    for &(line, t, v) in &rows {
        if !t.is_finite() || !v.is_finite() {
            return Err(TraceError::Parse {
                line,
                msg: "non-finite value".into(),
            });
        }
        if v < 0.0 {
            return Err(TraceError::Parse {
                line,
                msg: format!("negative value {v}"),
            });
        }
    }
    let samples = match format {
        TraceFormat::CsvRate => {
            if rows[0].1 != 0.0 {
                return Err(TraceError::Parse {
                    line: rows[0].0,
                    msg: "first timestamp must be 0".into(),
                });
            }
            rows.iter().map(|&(_, t, rate)| Sample { t, rate }).collect()
        }
        TraceFormat::CsvBytes => {
            if rows.len() < 2 {
                return Err(TraceError::Empty);
            }
            let origin = rows[0].1;
            let mut samples: Vec<Sample> = rows
                .windows(2)
                .map(|w| Sample {
                    t: w[0].1 - origin,
                    rate: w[1].2 * 8.0 / (w[1].1 - w[0].1),
                })
                .collect();
            let last = samples[samples.len() - 1].rate;
            samples.push(Sample {
                t: rows[rows.len() - 1].1 - origin,
                rate: last,
            });
            samples
        }
    };
    ThroughputTrace::new(samples, label)
}

/// Encodes a trace as `csv-rate`. Values use the shortest round-trip
/// representation, so parsing the output reproduces the samples bit for bit.
pub fn write_trace(trace: &ThroughputTrace) -> String {
    let mut out = String::from("t_seconds,throughput_bps\n");
    for s in trace.samples() {
        out.push_str(&format!("{},{}\n", s.t, s.rate));
    }
    out
}

/// One trace file referenced by a profile manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    pub path: PathBuf,
    #[serde(default)]
    pub format: TraceFormat,
    /// Defaults to the file stem.
    #[serde(default)]
    pub id: Option<String>,
}

impl ManifestEntry {
    pub fn trace_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.path.display().to_string())
        })
    }
}

/// TOML file listing `[[trace]]` entries; relative paths resolve against the
/// manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileManifest {
    #[serde(rename = "trace", default)]
    pub traces: Vec<ManifestEntry>,
}

impl ProfileManifest {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, TraceError> {
        let mut manifest: ProfileManifest =
            toml::from_str(text).map_err(|e| TraceError::Parse {
                line: 0,
                msg: e.to_string(),
            })?;
        for entry in &mut manifest.traces {
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = fs::read_to_string(path)
            .map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Reads every referenced trace.
    pub fn load_traces(&self) -> Result<Vec<(String, ThroughputTrace)>, TraceError> {
        self.traces
            .iter()
            .map(|entry| {
                let bytes = fs::read(&entry.path)
                    .map_err(|e| TraceError::Io(format!("{}: {e}", entry.path.display())))?;
                let label: TraceLabel = entry.label.parse().unwrap();
                let trace = parse_trace(&bytes, entry.format, label)?;
                Ok((entry.trace_id(), trace))
            })
            .collect()
    }
}
