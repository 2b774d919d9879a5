//! Radial point density, angular coverage and the rotor-speed sweep.

use std::f64::consts::{FRAC_2_PI, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::PrismSpec;
use crate::pattern::{RotorConfig, Sample, SamplingConfig, Scanner};
use crate::rng::{derive_seed, domain};
use crate::se3::UnitVec3;

/// Unnormalized areal density of a two-prism pattern at radial angle `r`.
///
/// `rho ~ 1 / (r sqrt(1 - r^2 / 4R^2))`, singular at both ends of `(0, 2R)`.
pub fn analytic_density(r: f64, deflection: f64) -> Result<f64> {
    let rim = 2.0 * deflection;
    if !(r > 0.0 && r < rim) {
        return Err(Error::Domain(format!(
            "density is defined on (0, {rim}), got r = {r}"
        )));
    }
    let u = r / rim;
    Ok(1.0 / (r * (1.0 - u * u).sqrt()))
}

/// Fraction of samples with normalized radius `r / 2R` below `u`.
///
/// The rotor phase difference is uniform, so `u = |cos(delta / 2)|` and the
/// cumulative distribution is `(2 / pi) asin(u)`.
pub fn analytic_radial_cdf(u: f64) -> f64 {
    FRAC_2_PI * u.clamp(0.0, 1.0).asin()
}

/// Histogram of polar angles normalized by the solid angle of each annulus.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialDensityProfile {
    /// Bin edges in normalized radius `r / 2R`; `len = bins + 1`.
    pub edges: Vec<f64>,
    /// Samples per steradian in each bin.
    pub density: Vec<f64>,
    pub counts: Vec<u64>,
    /// Radius `2R` the edges are normalized by, radians.
    pub rim: f64,
}

impl RadialDensityProfile {
    pub fn bins(&self) -> usize {
        self.density.len()
    }

    /// Solid angle of annulus `i`.
    pub fn solid_angle(&self, i: usize) -> f64 {
        let a = self.edges[i] * self.rim;
        let b = self.edges[i + 1] * self.rim;
        TAU * (a.cos() - b.cos())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Analytic density per steradian for the same bins, normalized so that
    /// integrating it over all bins gives unit mass.
    pub fn analytic(&self) -> Vec<f64> {
        (0..self.bins())
            .map(|i| {
                let mass = analytic_radial_cdf(self.edges[i + 1]) - analytic_radial_cdf(self.edges[i]);
                mass / self.solid_angle(i)
            })
            .collect()
    }

    /// Relative RMS deviation from the analytic profile over the bins that
    /// remain after dropping `exclude` bins at each end. Both profiles are
    /// normalized to unit integral over those bins.
    pub fn rms_deviation(&self, exclude: usize) -> Result<f64> {
        if 2 * exclude >= self.bins() {
            return Err(Error::config(format!(
                "cannot exclude {exclude} bins per end from {} bins",
                self.bins()
            )));
        }
        let range = exclude..self.bins() - exclude;
        let analytic = self.analytic();
        let mass = |d: &[f64]| -> f64 { range.clone().map(|i| d[i] * self.solid_angle(i)).sum() };
        let (me, ma) = (mass(&self.density), mass(&analytic));
        if me <= 0.0 {
            return Err(Error::Domain("no samples in the compared bins".into()));
        }
        let sq: f64 = range
            .clone()
            .map(|i| {
                let rel = (self.density[i] / me - analytic[i] / ma) / (analytic[i] / ma);
                rel * rel
            })
            .sum();
        Ok((sq / range.len() as f64).sqrt())
    }
}

/// Radial density of `samples` over `nbins` equal bins of `r / 2R`.
///
/// Polar angles beyond the rim fall into the last bin.
pub fn empirical_density(samples: &[Sample], deflection: f64, nbins: usize) -> Result<RadialDensityProfile> {
    if samples.is_empty() {
        return Err(Error::config("empirical density needs at least one sample"));
    }
    if nbins == 0 || !(deflection > 0.0) {
        return Err(Error::config("density needs nbins >= 1 and a positive deflection"));
    }
    let rim = 2.0 * deflection;
    let mut counts = vec![0u64; nbins];
    for s in samples {
        let u = s.dir.polar_angle() / rim;
        let i = ((u * nbins as f64) as usize).min(nbins - 1);
        counts[i] += 1;
    }
    let edges: Vec<f64> = (0..=nbins).map(|i| i as f64 / nbins as f64).collect();
    let mut profile = RadialDensityProfile {
        edges,
        density: vec![0.0; nbins],
        counts,
        rim,
    };
    for i in 0..nbins {
        profile.density[i] = profile.counts[i] as f64 / profile.solid_angle(i);
    }
    Ok(profile)
}

/// Default grid resolution per axis.
pub const DEFAULT_GRID_RESOLUTION: usize = 100;

/// Square angular grid over the FoV, masked to the circular FoV.
///
/// Cell coordinates are `(atan2(x, z), atan2(y, z))` over `[-2R, 2R]^2`; a cell
/// is effective when the polar angle of its center direction is at most `2R`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageGrid {
    half_extent: f64,
    resolution: usize,
    /// Dense index of each effective cell, or `u32::MAX`.
    index: Vec<u32>,
    effective: usize,
    denominator: usize,
}

impl CoverageGrid {
    pub fn new(half_extent: f64, resolution: usize) -> Result<Self> {
        if !(half_extent > 0.0 && half_extent < PI / 2.0) {
            return Err(Error::config(format!(
                "grid half-extent {half_extent} rad outside (0, pi/2)"
            )));
        }
        if resolution == 0 {
            return Err(Error::config("grid resolution must be at least 1"));
        }
        let cell = 2.0 * half_extent / resolution as f64;
        let center = |k: usize| -half_extent + (k as f64 + 0.5) * cell;
        let mut index = vec![u32::MAX; resolution * resolution];
        let mut effective = 0usize;
        for j in 0..resolution {
            for i in 0..resolution {
                let (th, tv) = (center(i).tan(), center(j).tan());
                if (th * th + tv * tv).sqrt().atan() <= half_extent {
                    index[j * resolution + i] = effective as u32;
                    effective += 1;
                }
            }
        }
        Ok(CoverageGrid {
            half_extent,
            resolution,
            index,
            effective,
            denominator: effective,
        })
    }

    /// The 100 x 100 grid over a scanner's paraxial FoV.
    pub fn for_scanner(scanner: &Scanner) -> Result<Self> {
        Self::new(scanner.paraxial_half_fov(), DEFAULT_GRID_RESOLUTION)
    }

    /// Replaces the coverage denominator (defaults to the effective count).
    pub fn with_denominator(mut self, denominator: usize) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::config("coverage denominator must be positive"));
        }
        self.denominator = denominator;
        Ok(self)
    }

    pub fn effective_voxel_count(&self) -> usize {
        self.effective
    }

    pub fn denominator(&self) -> usize {
        self.denominator
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    /// Dense index of the effective cell containing `dir`, if any.
    pub fn cell_of(&self, dir: &UnitVec3) -> Option<usize> {
        if dir.z() <= 0.0 {
            return None;
        }
        let h = dir.x().atan2(dir.z());
        let v = dir.y().atan2(dir.z());
        let scale = self.resolution as f64 / (2.0 * self.half_extent);
        let i = ((h + self.half_extent) * scale).floor();
        let j = ((v + self.half_extent) * scale).floor();
        let n = self.resolution as f64;
        if !(0.0..n).contains(&i) || !(0.0..n).contains(&j) {
            return None;
        }
        let k = self.index[j as usize * self.resolution + i as usize];
        (k != u32::MAX).then_some(k as usize)
    }

    /// Center direction of every effective cell, in dense index order.
    pub fn effective_centers(&self) -> Vec<UnitVec3> {
        let cell = 2.0 * self.half_extent / self.resolution as f64;
        let mut out = Vec::with_capacity(self.effective);
        for j in 0..self.resolution {
            for i in 0..self.resolution {
                if self.index[j * self.resolution + i] != u32::MAX {
                    let h = -self.half_extent + (i as f64 + 0.5) * cell;
                    let v = -self.half_extent + (j as f64 + 0.5) * cell;
                    out.push(
                        UnitVec3::new(h.tan(), v.tan(), 1.0).expect("finite cell center"),
                    );
                }
            }
        }
        out
    }
}

/// Running count of filled cells.
#[derive(Clone, Debug)]
pub struct CoverageTracker<'g> {
    grid: &'g CoverageGrid,
    filled: Vec<bool>,
    count: usize,
}

impl<'g> CoverageTracker<'g> {
    pub fn new(grid: &'g CoverageGrid) -> Self {
        CoverageTracker {
            grid,
            filled: vec![false; grid.effective],
            count: 0,
        }
    }

    /// Marks the cell hit by `dir`; returns whether it was newly filled.
    pub fn add(&mut self, dir: &UnitVec3) -> bool {
        match self.grid.cell_of(dir) {
            Some(k) if !self.filled[k] => {
                self.filled[k] = true;
                self.count += 1;
                true
            }
            _ => false,
        }
    }

    pub fn filled_count(&self) -> usize {
        self.count
    }

    pub fn filled(&self) -> &[bool] {
        &self.filled
    }

    /// Filled cells over the grid denominator, percent.
    pub fn percent(&self) -> f64 {
        100.0 * self.count as f64 / self.grid.denominator as f64
    }
}

/// Percentage of effective cells containing at least one sample.
pub fn coverage(samples: &[Sample], grid: &CoverageGrid) -> f64 {
    let mut tracker = CoverageTracker::new(grid);
    for s in samples {
        tracker.add(&s.dir);
    }
    tracker.percent()
}

/// Coverage percentage at each of the ascending `times` (samples with `t < time`).
pub fn coverage_curve(samples: &[Sample], grid: &CoverageGrid, times: &[f64]) -> Vec<f64> {
    let mut tracker = CoverageTracker::new(grid);
    let mut next = 0;
    times
        .iter()
        .map(|&t| {
            while next < samples.len() && samples[next].t < t {
                tracker.add(&samples[next].dir);
                next += 1;
            }
            tracker.percent()
        })
        .collect()
}

/// Measurement rate at which coverage after `t` seconds equals `target_pct`.
///
/// Bisects log-rate over the accepted 1 kHz to 1 MHz range. Coverage grows
/// with rate only on average, so the result is the best bracketed rate, not
/// an exact root; the achieved coverage is returned alongside.
pub fn rate_for_coverage(
    scanner: &Scanner,
    grid: &CoverageGrid,
    t: f64,
    target_pct: f64,
    control_tick_s: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(target_pct > 0.0 && target_pct < 100.0) {
        return Err(Error::config(format!("target coverage {target_pct}% outside (0, 100)")));
    }
    let at = |rate: f64| -> Result<f64> {
        let sampling = SamplingConfig::new(rate.clamp(1_000.0, 1_000_000.0), t, control_tick_s, seed)?;
        let samples: Vec<Sample> = scanner.samples(&sampling).collect::<Result<_>>()?;
        Ok(coverage(&samples, grid))
    };
    let (mut lo, mut hi) = (1_000f64.ln(), 1_000_000f64.ln());
    let (c_lo, c_hi) = (at(lo.exp())?, at(hi.exp())?);
    if !(c_lo <= target_pct && target_pct <= c_hi) {
        return Err(Error::Domain(format!(
            "coverage at {t} s spans {c_lo:.2}% to {c_hi:.2}% over the rate range, target {target_pct}% is outside"
        )));
    }
    let clamp = |x: f64| x.exp().clamp(1_000.0, 1_000_000.0);
    let mut best = if target_pct - c_lo < c_hi - target_pct { (clamp(lo), c_lo) } else { (clamp(hi), c_hi) };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let c = at(mid.exp())?;
        if (c - target_pct).abs() < (best.1 - target_pct).abs() {
            best = (clamp(mid), c);
        }
        if (c - target_pct).abs() < 0.05 || hi - lo < 1e-9 {
            break;
        }
        if c < target_pct {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Outcome of a time-to-coverage run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "seconds")]
pub enum CoverageTime {
    /// Time of the sample that first pushed coverage to the threshold.
    Reached(f64),
    /// The threshold was not reached before the cap.
    Capped(f64),
}

impl CoverageTime {
    pub fn is_capped(&self) -> bool {
        matches!(self, CoverageTime::Capped(_))
    }

    pub fn seconds(&self) -> f64 {
        match *self {
            CoverageTime::Reached(t) | CoverageTime::Capped(t) => t,
        }
    }
}

/// Runs the scanner until coverage reaches `threshold` (a fraction in
/// `(0, 1]`) or `sampling.duration_s` elapses.
pub fn time_to_coverage(
    scanner: &Scanner,
    sampling: &SamplingConfig,
    grid: &CoverageGrid,
    threshold: f64,
) -> Result<CoverageTime> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::config(format!(
            "coverage threshold {threshold} outside (0, 1]"
        )));
    }
    let needed = (threshold * grid.denominator as f64 - 1e-9).ceil().max(1.0) as usize;
    if needed > grid.effective {
        return Ok(CoverageTime::Capped(sampling.duration_s));
    }
    let mut tracker = CoverageTracker::new(grid);
    for s in scanner.samples(sampling) {
        let s = s?;
        if tracker.add(&s.dir) && tracker.filled_count() >= needed {
            return Ok(CoverageTime::Reached(s.t));
        }
    }
    Ok(CoverageTime::Capped(sampling.duration_s))
}

/// Inclusive evenly spaced values; a single step yields `lo`.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// A grid of rotor-speed pairs to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub prism: PrismSpec,
    /// Rotor 1 speeds, rad/s.
    pub omega1: Vec<f64>,
    /// Rotor 2 speeds, rad/s.
    pub omega2: Vec<f64>,
    pub noise_fraction: f64,
    pub threshold: f64,
    pub cap_s: f64,
    pub rate_hz: f64,
    pub control_tick_s: f64,
    pub seed: u64,
}

impl SweepConfig {
    /// Scanner and clock of cell `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> Result<(Scanner, SamplingConfig)> {
        let r1 = RotorConfig::new(self.omega1[i], 0.0, self.noise_fraction)?;
        let r2 = RotorConfig::new(self.omega2[j], 0.0, self.noise_fraction)?;
        let scanner = Scanner::two_prism(self.prism, r1, r2);
        let seed = derive_seed(self.seed, domain::SWEEP_CELL, (i * self.omega2.len() + j) as u64);
        let sampling = SamplingConfig::new(self.rate_hz, self.cap_s, self.control_tick_s, seed)?;
        Ok((scanner, sampling))
    }
}

/// Time-to-coverage for every speed pair; `times[i][j]` pairs `omega1[i]`
/// with `omega2[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub times: Vec<Vec<CoverageTime>>,
}

impl SweepResult {
    pub fn uncapped_fraction(&self) -> f64 {
        let all: Vec<&CoverageTime> = self.times.iter().flatten().collect();
        all.iter().filter(|c| !c.is_capped()).count() as f64 / all.len().max(1) as f64
    }
}

/// Evaluates every cell independently, in parallel; results do not depend on
/// the schedule.
pub fn sweep_speed_grid(config: &SweepConfig) -> Result<SweepResult> {
    if config.omega1.is_empty() || config.omega2.is_empty() {
        return Err(Error::config("sweep needs at least one speed per axis"));
    }
    let grid = CoverageGrid::new(2.0 * config.prism.paraxial_deflection(), DEFAULT_GRID_RESOLUTION)?;
    let n2 = config.omega2.len();
    let flat = (0..config.omega1.len() * n2)
        .into_par_iter()
        .map(|k| {
            let (scanner, sampling) = config.cell(k / n2, k % n2)?;
            time_to_coverage(&scanner, &sampling, &grid, config.threshold)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        omega1: config.omega1.clone(),
        omega2: config.omega2.clone(),
        times: flat.chunks(n2).map(<[CoverageTime]>::to_vec).collect(),
    })
}
