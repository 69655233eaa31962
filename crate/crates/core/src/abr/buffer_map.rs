//! Precomputed stall-probability table for the time-based controller.
//!
//! Download times are modelled as `tau * m * Y` with `Y` log-normal of unit
//! mean and coefficient of variation `cv`. For each `(m, cv)` cell the map
//! simulates `trials` sequences of `horizon` downloads played out from a
//! capped buffer, and records the probability that the buffer runs dry for
//! every starting buffer level on the grid.
//!
//! Each trial is reduced to the smallest starting buffer that survives it,
//! using the backward recursion
//! `need_j = max(D_j, D_j - tau + need_{j+1})`, infeasible once
//! `need_j > b_max - tau`. The probability at buffer `b` is then the fraction
//! of trials with `need > b`. All cells share the same normal draws, which
//! makes the map monotone in `m`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::video::RepresentationLadder;

const MAGIC: &str = "abrsim-buffer-map";
const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum BufferMapError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("buffer map cache {path}: {msg}")]
    Cache { path: String, msg: String },
}

/// Axes and sampling effort of a buffer map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spacing of the buffer axis, seconds.
    pub buffer_step: f64,
    /// Normalised mean download times (download time / segment duration).
    pub means: Vec<f64>,
    /// Coefficients of variation of the download time.
    pub cvs: Vec<f64>,
    pub trials: usize,
    /// Downloads simulated per trial.
    pub horizon: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        let mut means: Vec<f64> = (0..=80).map(|i| i as f64 * 0.05).collect();
        means.extend((1..=16).map(|i| 4.0 + i as f64 * 0.25));
        Self {
            buffer_step: 0.5,
            means,
            cvs: (0..=15).map(|i| i as f64 * 0.1).collect(),
            trials: 600,
            horizon: 10,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<(), BufferMapError> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !(self.buffer_step > 0.0) {
            return Err(BufferMapError::Grid("buffer_step must be positive".into()));
        }
        if self.means.is_empty() || !increasing(&self.means) || self.means[0] < 0.0 {
            return Err(BufferMapError::Grid(
                "means must be nonempty, nonnegative and increasing".into(),
            ));
        }
        if self.cvs.is_empty() || !increasing(&self.cvs) || self.cvs[0] < 0.0 {
            return Err(BufferMapError::Grid(
                "cvs must be nonempty, nonnegative and increasing".into(),
            ));
        }
        if self.trials == 0 || self.horizon == 0 {
            return Err(BufferMapError::Grid("trials and horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Stall probability by `(mean, cv, buffer)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferMap {
    segment_duration: f64,
    b_max: f64,
    grid: GridSpec,
    buffer_points: usize,
    /// `probs[(mean * cvs + cv) * buffer_points + b]`
    probs: Vec<f64>,
}

impl BufferMap {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_duration
    }

    pub fn b_max(&self) -> f64 {
        self.b_max
    }

    pub fn buffer_points(&self) -> usize {
        self.buffer_points
    }

    /// Stored probability at grid indices.
    pub fn cell(&self, mean_idx: usize, cv_idx: usize, buffer_idx: usize) -> f64 {
        let row = mean_idx * self.grid.cvs.len() + cv_idx;
        self.probs[row * self.buffer_points + buffer_idx]
    }

    /// Conservative lookup: buffer rounds down, mean and cv round up.
    /// Means past the grid are treated as certain stalls.
    pub fn lookup(&self, buffer: f64, mean: f64, cv: f64) -> f64 {
        let g = &self.grid;
        if !(mean <= g.means[g.means.len() - 1]) {
            return 1.0;
        }
        let mi = g.means.partition_point(|&m| m < mean);
        let ci = g.cvs.partition_point(|&c| c < cv).min(g.cvs.len() - 1);
        let bi = ((buffer.max(0.0) / g.buffer_step).floor() as usize).min(self.buffer_points - 1);
        self.cell(mi, ci, bi)
    }

    pub fn to_text(&self, key: &str) -> String {
        let g = &self.grid;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = format!("{MAGIC} {VERSION}\n");
        out.push_str(&format!("key {key}\n"));
        out.push_str(&format!("segment_duration {}\n", self.segment_duration));
        out.push_str(&format!("b_max {}\n", self.b_max));
        out.push_str(&format!("buffer_step {}\n", g.buffer_step));
        out.push_str(&format!("means {}\n", join(&g.means)));
        out.push_str(&format!("cvs {}\n", join(&g.cvs)));
        out.push_str(&format!("trials {}\n", g.trials));
        out.push_str(&format!("horizon {}\n", g.horizon));
        out.push_str(&format!("buffer_points {}\n", self.buffer_points));
        out.push_str("probs\n");
        for row in self.probs.chunks(self.buffer_points) {
            out.push_str(&join(row));
            out.push('\n');
        }
        out
    }

    /// Parses [`BufferMap::to_text`] output, returning the map and its key.
    pub fn from_text(text: &str) -> Result<(Self, String), String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty file")?;
        if header != format!("{MAGIC} {VERSION}") {
            return Err(format!("unsupported header `{header}`"));
        }
        let mut field = |name: &str| -> Result<String, String> {
            let line = lines.next().ok_or(format!("missing `{name}`"))?;
            line.strip_prefix(name)
                .and_then(|rest| rest.strip_prefix(' ').or(Some(rest)))
                .map(str::to_string)
                .ok_or(format!("expected `{name}`, got `{line}`"))
        };
        let num = |s: String| s.trim().parse::<f64>().map_err(|e| e.to_string());
        let list = |s: String| -> Result<Vec<f64>, String> {
            s.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
                .collect()
        };
        let key = field("key")?;
        let segment_duration = num(field("segment_duration")?)?;
        let b_max = num(field("b_max")?)?;
        let buffer_step = num(field("buffer_step")?)?;
        let means = list(field("means")?)?;
        let cvs = list(field("cvs")?)?;
        let trials = num(field("trials")?)? as usize;
        let horizon = num(field("horizon")?)? as usize;
        let buffer_points = num(field("buffer_points")?)? as usize;
        field("probs")?;
        let mut probs = Vec::with_capacity(means.len() * cvs.len() * buffer_points);
        for line in lines {
            let row = list(line.to_string())?;
            if row.len() != buffer_points {
                return Err("probability row has the wrong width".into());
            }
            probs.extend(row);
        }
        if probs.len() != means.len() * cvs.len() * buffer_points {
            return Err("probability table is incomplete".into());
        }
        let grid = GridSpec {
            buffer_step,
            means,
            cvs,
            trials,
            horizon,
        };
        Ok((
            Self {
                segment_duration,
                b_max,
                grid,
                buffer_points,
                probs,
            },
            key,
        ))
    }
}

/// Smallest starting buffer that survives the given download times, or
/// infinity when even a capped-full buffer runs dry.
fn required_buffer(downloads: impl DoubleEndedIterator<Item = f64>, tau: f64, cap: f64) -> f64 {
    let mut need = 0.0_f64;
    for d in downloads.rev() {
        need = d.max(d - tau + need);
        if need > cap {
            return f64::INFINITY;
        }
    }
    need
}

/// Builds the stall-probability table by seeded Monte Carlo.
///
/// The ladder and `omega` only enter the cache key: download times are
/// normalised per level, and playback is assumed to be running.
pub fn precompute_buffer_map(
    ladder: &RepresentationLadder,
    b_max: f64,
    omega: u32,
    grid: &GridSpec,
    seed: u64,
) -> Result<BufferMap, BufferMapError> {
    let _ = (ladder, omega);
    grid.validate()?;
    let tau = ladder.segment_duration();
    if !(b_max >= tau) {
        return Err(BufferMapError::Grid(format!(
            "b_max {b_max} smaller than one segment"
        )));
    }
    let cap = b_max - tau;
    let buffer_points = (b_max / grid.buffer_step).floor() as usize + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normals: Vec<f64> = (0..grid.trials * grid.horizon)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut probs = Vec::with_capacity(grid.means.len() * grid.cvs.len() * buffer_points);
    let mut factors = vec![0.0; normals.len()];
    let mut needs = vec![0.0; grid.trials];
    // cv-major scratch so the exp() work is shared across means
    let mut by_cv: Vec<Vec<f64>> = Vec::with_capacity(grid.cvs.len());
    for &cv in &grid.cvs {
        let s2 = (1.0 + cv * cv).ln();
        let s = s2.sqrt();
        for (f, z) in factors.iter_mut().zip(&normals) {
            *f = (s * z - 0.5 * s2).exp();
        }
        by_cv.push(factors.clone());
    }
    for &mean in &grid.means {
        for factors in &by_cv {
            for (t, need) in needs.iter_mut().enumerate() {
                let row = &factors[t * grid.horizon..(t + 1) * grid.horizon];
                *need = required_buffer(row.iter().map(|f| tau * mean * f), tau, cap);
            }
            needs.sort_by(f64::total_cmp);
            let n = needs.len() as f64;
            for b in 0..buffer_points {
                let level = b as f64 * grid.buffer_step;
                let survivors = needs.partition_point(|&x| x <= level);
                probs.push((needs.len() - survivors) as f64 / n);
            }
        }
    }
    Ok(BufferMap {
        segment_duration: tau,
        b_max,
        grid: grid.clone(),
        buffer_points,
        probs,
    })
}

/// Content hash of everything a buffer map depends on.
pub fn map_key(
    ladder: &RepresentationLadder,
    b_max: f64,
    omega: u32,
    grid: &GridSpec,
    seed: u64,
) -> String {
    let text = format!(
        "v{VERSION}|rates={:?}|tau={}|b_max={}|omega={}|grid={}|seed={}",
        ladder.rates(),
        ladder.segment_duration(),
        b_max,
        omega,
        serde_json::to_string(grid).expect("grid serialises"),
        seed
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Shares computed maps between sessions, optionally persisting them.
#[derive(Debug, Default)]
pub struct BufferMapCache {
    dir: Option<PathBuf>,
    maps: Mutex<HashMap<String, Arc<BufferMap>>>,
}

impl BufferMapCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            maps: Mutex::default(),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get_or_compute(
        &self,
        ladder: &RepresentationLadder,
        b_max: f64,
        omega: u32,
        grid: &GridSpec,
        seed: u64,
    ) -> Result<Arc<BufferMap>, BufferMapError> {
        let key = map_key(ladder, b_max, omega, grid, seed);
        let mut maps = self.maps.lock().expect("buffer map cache poisoned");
        if let Some(map) = maps.get(&key) {
            return Ok(map.clone());
        }
        let map = match self.load(&key)? {
            Some(map) => map,
            None => {
                let map = precompute_buffer_map(ladder, b_max, omega, grid, seed)?;
                self.store(&key, &map)?;
                map
            }
        };
        let map = Arc::new(map);
        maps.insert(key, map.clone());
        Ok(map)
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("buffer-map-{}.txt", &key[..16])))
    }

    fn load(&self, key: &str) -> Result<Option<BufferMap>, BufferMapError> {
        let Some(path) = self.path_for(key) else {
            return Ok(None);
        };
        let Ok(text) = fs::read_to_string(&path) else {
            return Ok(None);
        };
        match BufferMap::from_text(&text) {
            Ok((map, stored)) if stored == key => Ok(Some(map)),
            Ok(_) => Ok(None),
            Err(msg) => {
                log::warn!("ignoring unreadable buffer map {}: {msg}", path.display());
                Ok(None)
            }
        }
    }

    fn store(&self, key: &str, map: &BufferMap) -> Result<(), BufferMapError> {
        let Some(path) = self.path_for(key) else {
            return Ok(());
        };
        let err = |e: std::io::Error| BufferMapError::Cache {
            path: path.display().to_string(),
            msg: e.to_string(),
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(err)?;
        }
        fs::write(&path, map.to_text(key)).map_err(err)
    }
}
