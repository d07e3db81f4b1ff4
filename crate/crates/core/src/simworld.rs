//! Synthetic magnetic worlds and constant-speed walkers.
//!
//! The field is a constant background plus Gaussian bumps. Walks follow a
//! waypoint polyline and record the exact position with a noisy field reading.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::magdata::{MagneticSample, Trace, DEFAULT_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    /// Meters.
    pub center: [f64; 2],
    /// Peak field offset in microtesla.
    pub amplitude: [f64; 3],
    /// Width in meters, `> 0`.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub background: [f64; 3],
    #[serde(default)]
    pub anomalies: Vec<Anomaly>,
    #[serde(default)]
    pub seed: u64,
}

impl FieldModel {
    pub fn validate(&self) -> Result<()> {
        if self.background.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("background field must be finite".into()));
        }
        for (i, a) in self.anomalies.iter().enumerate() {
            let finite = a.center.iter().chain(&a.amplitude).all(|v| v.is_finite());
            if !finite || !(a.sigma.is_finite() && a.sigma > 0.0) {
                return Err(Error::Config(format!(
                    "anomaly {i} needs finite center/amplitude and sigma > 0"
                )));
            }
        }
        Ok(())
    }

    /// A seeded world with `count` anomalies scattered over the box `[lo, hi]`.
    pub fn random(seed: u64, count: usize, lo: [f64; 2], hi: [f64; 2]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let anomalies = (0..count)
            .map(|_| Anomaly {
                center: [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])],
                amplitude: [
                    rng.gen_range(-12.0..=12.0),
                    rng.gen_range(-12.0..=12.0),
                    rng.gen_range(-15.0..=15.0),
                ],
                sigma: rng.gen_range(0.8..=2.0),
            })
            .collect();
        Self {
            background: [18.0, 6.0, -42.0],
            anomalies,
            seed,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let w: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// `background + Σ amplitude·exp(−‖pos − center‖² / (2σ²))`.
pub fn sample_field(world: &FieldModel, pos: [f64; 2]) -> [f64; 3] {
    let mut m = world.background;
    for a in &world.anomalies {
        let d2 = (pos[0] - a.center[0]).powi(2) + (pos[1] - a.center[1]).powi(2);
        let w = (-d2 / (2.0 * a.sigma * a.sigma)).exp();
        for (mi, ai) in m.iter_mut().zip(&a.amplitude) {
            *mi += ai * w;
        }
    }
    m
}

fn default_rate() -> f64 {
    DEFAULT_RATE_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub waypoints: Vec<[f64; 2]>,
    /// m/s.
    pub speed: f64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    /// Per-axis field noise, µT.
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    /// Trace id; defaults to `walk-<seed>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl WalkConfig {
    pub fn new(waypoints: Vec<[f64; 2]>, speed: f64, noise_sd: f64, seed: u64) -> Self {
        Self {
            waypoints,
            speed,
            rate_hz: DEFAULT_RATE_HZ,
            noise_sd,
            seed,
            name: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config("a walk needs at least 2 waypoints".into()));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("waypoints must be finite".into()));
        }
        if let Some(i) = self.waypoints.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("waypoints {i} and {} coincide", i + 1)));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(Error::Config(format!("speed must be positive, got {}", self.speed)));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::Config(format!("rate_hz must be positive, got {}", self.rate_hz)));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::Config(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| seg_len(w[0], w[1])).sum()
    }

    pub fn trace_id(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("walk-{}", self.seed))
    }
}

fn seg_len(a: [f64; 2], b: [f64; 2]) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

/// Walk the polyline at constant speed, one sample every `1/rate_hz` seconds.
pub fn walk(world: &FieldModel, cfg: &WalkConfig) -> Result<Trace> {
    world.validate()?;
    cfg.validate()?;
    let step = cfg.speed / cfg.rate_hz;
    let total = cfg.path_length();
    let n = (total / step + 1e-9).floor() as usize + 1;
    if n < 2 {
        return Err(Error::TraceTooShort {
            trace: cfg.trace_id(),
            len: n,
            need: 2,
        });
    }
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seg = 0;
    let mut seg_start = 0.0;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let s = (i as f64 * cfg.speed / cfg.rate_hz).min(total);
        while seg + 2 < cfg.waypoints.len() && s > seg_start + seg_len(cfg.waypoints[seg], cfg.waypoints[seg + 1]) {
            seg_start += seg_len(cfg.waypoints[seg], cfg.waypoints[seg + 1]);
            seg += 1;
        }
        let (a, b) = (cfg.waypoints[seg], cfg.waypoints[seg + 1]);
        let u = ((s - seg_start) / seg_len(a, b)).clamp(0.0, 1.0);
        let pos = [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
        let mut m = sample_field(world, pos);
        if cfg.noise_sd > 0.0 {
            for v in &mut m {
                *v += noise.sample(&mut rng);
            }
        }
        samples.push(MagneticSample::new(i as f64 / cfg.rate_hz, m, pos));
    }
    Trace::new(cfg.trace_id(), cfg.rate_hz, samples)
}

/// Walks listed in a JSON array file.
pub fn load_walks(path: impl AsRef<Path>) -> Result<Vec<WalkConfig>> {
    let walks: Vec<WalkConfig> = serde_json::from_str(&fs::read_to_string(path)?)?;
    for w in &walks {
        w.validate()?;
    }
    Ok(walks)
}
