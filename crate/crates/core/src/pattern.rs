//! Rotor kinematics and the measurement clock: time-stamped pointing
//! directions for spiral, rosette and triple-prism patterns.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{angular_vector, steer, PrismSpec, SteeringModel};
use crate::rng::{domain, stream_rng};
use crate::se3::UnitVec3;

/// Radians per second in one revolution per minute.
pub const RAD_PER_S_PER_RPM: f64 = TAU / 60.0;

/// Rotor speeds of the reference device, rpm.
pub const REFERENCE_RPM: (f64, f64) = (7294.0, -4664.0);

/// Default measurement rate, Hz.
pub const DEFAULT_RATE_HZ: f64 = 100_000.0;

/// Default interval at which a noisy rotor speed is resampled, seconds.
pub const DEFAULT_CONTROL_TICK_S: f64 = 0.1;

/// Largest array-channel offset, radians.
pub const MAX_ARRAY_OFFSET: f64 = 2.0 * std::f64::consts::PI / 180.0;

pub fn rpm_to_rad_s(rpm: f64) -> f64 {
    rpm * RAD_PER_S_PER_RPM
}

/// Speed, phase and speed noise of one rotor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotorConfig {
    /// Signed angular speed, rad/s.
    pub speed: f64,
    /// Rotor angle at t = 0, rad.
    pub initial_phase: f64,
    /// Standard deviation of the speed noise as a fraction of `|speed|`.
    pub noise_fraction: f64,
}

impl RotorConfig {
    pub fn new(speed: f64, initial_phase: f64, noise_fraction: f64) -> Result<Self> {
        if !speed.is_finite() || !initial_phase.is_finite() {
            return Err(Error::config("rotor speed and phase must be finite"));
        }
        if !(0.0..=0.2).contains(&noise_fraction) {
            return Err(Error::config(format!(
                "rotor noise fraction {noise_fraction} outside [0, 0.2]"
            )));
        }
        Ok(RotorConfig {
            speed,
            initial_phase,
            noise_fraction,
        })
    }

    pub fn from_rpm(rpm: f64) -> Self {
        RotorConfig {
            speed: rpm_to_rad_s(rpm),
            initial_phase: 0.0,
            noise_fraction: 0.0,
        }
    }

    pub fn with_noise(mut self, noise_fraction: f64) -> Self {
        self.noise_fraction = noise_fraction;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.initial_phase = phase;
        self
    }
}

/// Measurement clock and randomness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    pub rate_hz: f64,
    pub duration_s: f64,
    pub control_tick_s: f64,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn new(rate_hz: f64, duration_s: f64, control_tick_s: f64, seed: u64) -> Result<Self> {
        if !(1_000.0..=1_000_000.0).contains(&rate_hz) {
            return Err(Error::config(format!(
                "measurement rate {rate_hz} Hz outside [1 kHz, 1 MHz]"
            )));
        }
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(Error::config(format!("duration {duration_s} s must be positive")));
        }
        if !(control_tick_s > 0.0 && control_tick_s.is_finite()) {
            return Err(Error::config(format!(
                "control tick {control_tick_s} s must be positive"
            )));
        }
        Ok(SamplingConfig {
            rate_hz,
            duration_s,
            control_tick_s,
            seed,
        })
    }

    /// 100 kHz, default control tick.
    pub fn with_duration(duration_s: f64, seed: u64) -> Result<Self> {
        Self::new(DEFAULT_RATE_HZ, duration_s, DEFAULT_CONTROL_TICK_S, seed)
    }

    /// Number of measurement ticks in `[0, duration)`.
    pub fn tick_count(&self) -> u64 {
        (self.duration_s * self.rate_hz - 1e-9).ceil().max(0.0) as u64
    }
}

/// Orientation of a linear transceiver array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayOrientation {
    Horizontal,
    Vertical,
}

/// Per-channel angular offsets of the transceiver boresight, radians.
///
/// Each offset is `(azimuthal, polar)`: the azimuthal component lies along +x
/// and the polar component along +y of the transverse plane.
#[derive(Clone, Debug, PartialEq)]
pub struct ArraySpec {
    offsets: Vec<Vector2<f64>>,
}

impl ArraySpec {
    pub fn single() -> Self {
        ArraySpec {
            offsets: vec![Vector2::zeros()],
        }
    }

    pub fn new(offsets: Vec<Vector2<f64>>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::config("array needs at least one channel"));
        }
        if let Some(o) = offsets.iter().find(|o| o.amax() > MAX_ARRAY_OFFSET + 1e-15) {
            return Err(Error::config(format!(
                "array offset ({:.4}, {:.4}) deg exceeds 2 deg",
                o.x.to_degrees(),
                o.y.to_degrees()
            )));
        }
        Ok(ArraySpec { offsets })
    }

    pub fn offsets(&self) -> &[Vector2<f64>] {
        &self.offsets
    }

    pub fn channel_count(&self) -> usize {
        self.offsets.len()
    }
}

/// Evenly spaced array centered on boresight.
pub fn array_offsets(count: usize, pitch: f64, orientation: ArrayOrientation) -> Result<ArraySpec> {
    if count == 0 {
        return Err(Error::config("array count must be at least 1"));
    }
    let center = (count as f64 - 1.0) / 2.0;
    let offsets = (0..count)
        .map(|i| {
            let o = (i as f64 - center) * pitch;
            match orientation {
                ArrayOrientation::Horizontal => Vector2::new(o, 0.0),
                ArrayOrientation::Vertical => Vector2::new(0.0, o),
            }
        })
        .collect();
    ArraySpec::new(offsets)
}

/// A prism stack with its rotors, transceiver array and steering model.
///
/// With three prisms the first two are phase-locked: prism 2 turns at
/// `-angle(prism 1)`, so the second rotor must mirror the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Scanner {
    prisms: Vec<PrismSpec>,
    rotors: Vec<RotorConfig>,
    array: ArraySpec,
    model: SteeringModel,
}

impl Scanner {
    pub fn new(
        prisms: Vec<PrismSpec>,
        rotors: Vec<RotorConfig>,
        array: ArraySpec,
        model: SteeringModel,
    ) -> Result<Self> {
        if !(2..=3).contains(&prisms.len()) {
            return Err(Error::config(format!(
                "scanner needs 2 or 3 prisms, got {}",
                prisms.len()
            )));
        }
        if rotors.len() != prisms.len() {
            return Err(Error::config(format!(
                "{} prisms but {} rotors",
                prisms.len(),
                rotors.len()
            )));
        }
        if prisms.len() == 3 {
            if prisms[0] != prisms[1] {
                return Err(Error::config("phase-locked prisms 1 and 2 must be identical"));
            }
            let (a, b) = (rotors[0], rotors[1]);
            if (a.speed + b.speed).abs() > 1e-9 * a.speed.abs().max(1.0)
                || (a.initial_phase + b.initial_phase).abs() > 1e-12
            {
                return Err(Error::config(
                    "rotor 2 must mirror rotor 1 (opposite speed and phase) in a triple-prism scanner",
                ));
            }
        }
        Ok(Scanner {
            prisms,
            rotors,
            array,
            model,
        })
    }

    /// The reference device: two n = 1.51, 18 degree prisms at 7294 / -4664 rpm.
    pub fn reference() -> Self {
        let p = PrismSpec::reference();
        Scanner {
            prisms: vec![p, p],
            rotors: vec![
                RotorConfig::from_rpm(REFERENCE_RPM.0),
                RotorConfig::from_rpm(REFERENCE_RPM.1),
            ],
            array: ArraySpec::single(),
            model: SteeringModel::Paraxial,
        }
    }

    pub fn two_prism(prism: PrismSpec, rotor1: RotorConfig, rotor2: RotorConfig) -> Self {
        Scanner {
            prisms: vec![prism, prism],
            rotors: vec![rotor1, rotor2],
            array: ArraySpec::single(),
            model: SteeringModel::Paraxial,
        }
    }

    pub fn with_array(mut self, array: ArraySpec) -> Self {
        self.array = array;
        self
    }

    pub fn with_model(mut self, model: SteeringModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_rotors(mut self, rotors: Vec<RotorConfig>) -> Result<Self> {
        Scanner::new(self.prisms.clone(), rotors, std::mem::replace(&mut self.array, ArraySpec::single()), self.model)
    }

    pub fn prisms(&self) -> &[PrismSpec] {
        &self.prisms
    }

    pub fn rotors(&self) -> &[RotorConfig] {
        &self.rotors
    }

    pub fn array(&self) -> &ArraySpec {
        &self.array
    }

    pub fn model(&self) -> SteeringModel {
        self.model
    }

    pub fn channel_count(&self) -> usize {
        self.array.channel_count()
    }

    /// Sum of paraxial deflections: the FoV half-angle of a boresight channel.
    pub fn paraxial_half_fov(&self) -> f64 {
        self.prisms.iter().map(PrismSpec::paraxial_deflection).sum()
    }

    /// Prism angles for the given rotor phases (applies the phase lock).
    fn prism_angles(&self, phases: &[f64; 3]) -> [f64; 3] {
        if self.prisms.len() == 3 {
            [phases[0], -phases[0], phases[2]]
        } else {
            [phases[0], phases[1], 0.0]
        }
    }

    /// Steered direction of `channel` for the given rotor phases.
    pub fn direction(&self, phases: &[f64], channel: usize) -> Result<UnitVec3> {
        let mut p = [0.0; 3];
        p[..phases.len()].copy_from_slice(phases);
        let angles = self.prism_angles(&p);
        let n = self.prisms.len();
        steer(&self.prisms, &angles[..n], &self.array.offsets[channel], self.model)
    }

    /// Lazily generates the pattern for `sampling`.
    pub fn samples(&self, sampling: &SamplingConfig) -> PatternGenerator<'_> {
        PatternGenerator::new(self, sampling)
    }
}

/// Rotor phase as a function of time, with sampled-and-held speed noise.
///
/// At every control tick the instantaneous speed is drawn from
/// `N(speed, (noise_fraction * speed)^2)` and held until the next tick; the
/// phase integrates it piecewise linearly. Noise-free rotors use
/// `phase0 + speed * t` directly so that exact periodicity is preserved.
#[derive(Clone, Debug)]
pub struct RotorClock {
    speed: f64,
    sigma: f64,
    tick: f64,
    rng: Option<ChaCha8Rng>,
    phase0: f64,
    segment: u64,
    segment_phase: f64,
    segment_speed: f64,
}

impl RotorClock {
    pub fn new(rotor: &RotorConfig, control_tick_s: f64, seed: u64, rotor_index: u64) -> Self {
        let sigma = rotor.noise_fraction * rotor.speed.abs();
        let mut clock = RotorClock {
            speed: rotor.speed,
            sigma,
            tick: control_tick_s,
            rng: (sigma > 0.0).then(|| stream_rng(seed, domain::ROTOR, rotor_index)),
            phase0: rotor.initial_phase,
            segment: 0,
            segment_phase: rotor.initial_phase,
            segment_speed: rotor.speed,
        };
        clock.segment_speed = clock.draw_speed();
        clock
    }

    fn draw_speed(&mut self) -> f64 {
        match self.rng.as_mut() {
            Some(rng) => {
                let z: f64 = StandardNormal.sample(rng);
                self.speed + self.sigma * z
            }
            None => self.speed,
        }
    }

    /// Phase at time `t`; successive calls must not go back in time.
    pub fn phase_at(&mut self, t: f64) -> f64 {
        if self.rng.is_none() {
            return self.phase0 + self.speed * t;
        }
        let target = (t / self.tick).floor().max(0.0) as u64;
        while self.segment < target {
            self.segment_phase += self.segment_speed * self.tick;
            self.segment += 1;
            self.segment_speed = self.draw_speed();
        }
        self.segment_phase + self.segment_speed * (t - self.segment as f64 * self.tick)
    }
}

/// One measurement: time, channel and pointing direction (sensor frame).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub channel: u32,
    pub dir: UnitVec3,
}

/// Iterator over the samples of a pattern, ordered by time then channel.
pub struct PatternGenerator<'a> {
    scanner: &'a Scanner,
    clocks: Vec<RotorClock>,
    rate: f64,
    ticks: u64,
    tick: u64,
    channel: usize,
    phases: [f64; 3],
}

impl<'a> PatternGenerator<'a> {
    fn new(scanner: &'a Scanner, sampling: &SamplingConfig) -> Self {
        let clocks = scanner
            .rotors
            .iter()
            .enumerate()
            .map(|(i, r)| RotorClock::new(r, sampling.control_tick_s, sampling.seed, i as u64))
            .collect();
        PatternGenerator {
            scanner,
            clocks,
            rate: sampling.rate_hz,
            ticks: sampling.tick_count(),
            tick: 0,
            channel: 0,
            phases: [0.0; 3],
        }
    }

    fn time(&self) -> f64 {
        self.tick as f64 / self.rate
    }
}

impl Iterator for PatternGenerator<'_> {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.tick >= self.ticks {
            return None;
        }
        let t = self.time();
        if self.channel == 0 {
            for (i, c) in self.clocks.iter_mut().enumerate() {
                self.phases[i] = c.phase_at(t);
            }
        }
        let ch = self.channel;
        let n = self.clocks.len();
        let dir = self.scanner.direction(&self.phases[..n], ch);
        self.channel += 1;
        if self.channel == self.scanner.channel_count() {
            self.channel = 0;
            self.tick += 1;
        }
        Some(dir.map(|dir| Sample {
            t,
            channel: ch as u32,
            dir,
        }))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let per = self.scanner.channel_count() as u64;
        let left = ((self.ticks - self.tick) * per).saturating_sub(self.channel as u64) as usize;
        (left, Some(left))
    }
}

/// A materialized scan pattern.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanPattern {
    pub samples: Vec<Sample>,
    pub channels: usize,
}

impl ScanPattern {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    /// Samples with `t < t_end`.
    pub fn prefix(&self, t_end: f64) -> &[Sample] {
        let n = self.samples.partition_point(|s| s.t < t_end);
        &self.samples[..n]
    }

    pub fn channel(&self, channel: u32) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.channel == channel)
    }
}

/// Generates the full pattern for a scanner and clock.
pub fn generate_pattern(scanner: &Scanner, sampling: &SamplingConfig) -> Result<ScanPattern> {
    let samples = scanner.samples(sampling).collect::<Result<Vec<_>>>()?;
    Ok(ScanPattern {
        samples,
        channels: scanner.channel_count(),
    })
}

/// Bounding box `(min, max)` of the paraxial angular vectors of `samples`,
/// radians; `None` for no samples.
pub fn angular_envelope(samples: &[Sample]) -> Option<(Vector2<f64>, Vector2<f64>)> {
    samples.iter().map(|s| angular_vector(&s.dir)).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.inf(&v), hi.sup(&v))),
    })
}

/// A rational speed ratio `omega1 / omega2 = numerator / denominator`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Commensurability {
    pub numerator: i64,
    pub denominator: u64,
    /// Smallest common period `2 pi * denominator / |omega2|`, seconds.
    pub period: f64,
}

/// Default largest denominator considered by [`check_commensurable`].
pub const DEFAULT_MAX_DENOMINATOR: u64 = 10_000;

/// Tests whether `omega1 / omega2` is within `tolerance` of a fraction whose
/// denominator is at most `max_denominator`; returns the one with the
/// smallest denominator and the resulting repetition period.
pub fn check_commensurable(
    omega1: f64,
    omega2: f64,
    tolerance: f64,
    max_denominator: u64,
) -> Option<Commensurability> {
    if omega1 == 0.0 || omega2 == 0.0 || !omega1.is_finite() || !omega2.is_finite() {
        return None;
    }
    let ratio = omega1 / omega2;
    let (p, q) = smallest_denominator_fraction(ratio.abs(), tolerance, max_denominator)?;
    let numerator = if ratio < 0.0 { -(p as i64) } else { p as i64 };
    Some(Commensurability {
        numerator,
        denominator: q,
        period: TAU * q as f64 / omega2.abs(),
    })
}

/// Walks the Stern-Brocot tree toward `x >= 0`. The mediants visited are the
/// convergents and semiconvergents of `x` in increasing denominator order, so
/// the first one within `tol` has the smallest denominator.
fn smallest_denominator_fraction(x: f64, tol: f64, max_q: u64) -> Option<(u64, u64)> {
    if max_q == 0 {
        return None;
    }
    let whole = x.floor();
    if whole >= u64::MAX as f64 / 2.0 {
        return None;
    }
    let whole = whole as u64;
    let close = |p: u64, q: u64| (x - p as f64 / q as f64).abs() < tol;
    // Denominator 1: nearer integer first.
    let (first, second) = if x - whole as f64 <= 0.5 {
        (whole, whole + 1)
    } else {
        (whole + 1, whole)
    };
    for p in [first, second] {
        if close(p, 1) {
            return Some((p, 1));
        }
    }
    let (mut a, mut b, mut c, mut d) = (whole, 1u64, whole + 1, 1u64);
    loop {
        let (p, q) = (a + c, b + d);
        if q > max_q {
            return None;
        }
        if close(p, q) {
            return Some((p, q));
        }
        if (p as f64) < x * q as f64 {
            a = p;
            b = q;
        } else {
            c = p;
            d = q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Brute-force oracle: scan every denominator up to the bound.
    fn brute_force(x: f64, tol: f64, max_q: u64) -> Option<(i64, u64)> {
        (1..=max_q).find_map(|q| {
            let p = (x * q as f64).round();
            ((x - p / q as f64).abs() < tol).then_some((p as i64, q))
        })
    }

    #[test]
    fn exact_two_to_one() {
        let c = check_commensurable(2.0, 1.0, 1e-12, 100).unwrap();
        assert_eq!((c.numerator, c.denominator), (2, 1));
        assert_abs_diff_eq!(c.period, TAU, epsilon = 1e-12);
    }

    #[test]
    fn reference_speeds_repeat_after_thirty_seconds() {
        let w1 = rpm_to_rad_s(7294.0);
        let w2 = rpm_to_rad_s(-4664.0);
        let c = check_commensurable(w1, w2, 1e-12, 10_000).unwrap();
        assert_eq!((c.numerator, c.denominator), (-3647, 2332));
        assert_abs_diff_eq!(c.period, 30.0, epsilon = 1e-9);
        assert_eq!(brute_force(w1 / w2, 1e-12, 10_000), Some((-3647, 2332)));
        assert!(check_commensurable(w1, w2, 1e-12, 100).is_none());
    }

    #[test]
    fn golden_ratio_is_not_commensurable_at_small_bound() {
        assert!(check_commensurable(1.6180339887, 1.0, 1e-9, 100).is_none());
        // 144/89 is the best approximation with denominator <= 100.
        assert!((1.6180339887f64 - 144.0 / 89.0).abs() > 1e-9);
        assert_eq!(brute_force(1.6180339887, 1e-9, 100), None);
    }

    #[test]
    fn agrees_with_brute_force_on_random_ratios() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let x: f64 = rng.random_range(0.01..20.0);
            let tol = 10f64.powf(rng.random_range(-9.0..-2.0));
            let got = smallest_denominator_fraction(x, tol, 500).map(|(p, q)| (p as i64, q));
            let want = brute_force(x, tol, 500);
            assert_eq!(got.map(|g| g.1), want.map(|w| w.1), "x = {x}, tol = {tol}");
        }
    }

    #[test]
    fn array_offsets_are_centered() {
        let a = array_offsets(1, 0.01, ArrayOrientation::Vertical).unwrap();
        assert_eq!(a.offsets(), &[Vector2::zeros()]);
        let a = array_offsets(6, 0.3f64.to_radians(), ArrayOrientation::Vertical).unwrap();
        let polar: Vec<f64> = a.offsets().iter().map(|o| o.y.to_degrees()).collect();
        let want = [-0.75, -0.45, -0.15, 0.15, 0.45, 0.75];
        for (p, w) in polar.iter().zip(want) {
            assert_abs_diff_eq!(*p, w, epsilon = 1e-12);
        }
        assert!(a.offsets().iter().all(|o| o.x == 0.0));
        assert!(array_offsets(30, 0.3f64.to_radians(), ArrayOrientation::Horizontal).is_err());
        assert!(array_offsets(0, 0.1, ArrayOrientation::Horizontal).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RotorConfig::new(1.0, 0.0, 0.25).is_err());
        assert!(SamplingConfig::new(500.0, 1.0, 1e-3, 0).is_err());
        assert!(SamplingConfig::new(2e6, 1.0, 1e-3, 0).is_err());
        assert!(SamplingConfig::new(1e5, 0.0, 1e-3, 0).is_err());
        assert!(SamplingConfig::new(1e5, 1.0, 0.0, 0).is_err());
        let p = PrismSpec::reference();
        let r = RotorConfig::from_rpm(1000.0);
        assert!(Scanner::new(vec![p], vec![r], ArraySpec::single(), SteeringModel::Paraxial).is_err());
        assert!(Scanner::new(vec![p, p], vec![r], ArraySpec::single(), SteeringModel::Paraxial).is_err());
        let q = PrismSpec::new(1.51, 0.1).unwrap();
        let r3 = vec![r, RotorConfig::from_rpm(-1000.0), RotorConfig::from_rpm(200.0)];
        assert!(Scanner::new(vec![p, p, q], r3.clone(), ArraySpec::single(), SteeringModel::Paraxial).is_ok());
        assert!(Scanner::new(vec![p, q, q], r3, ArraySpec::single(), SteeringModel::Paraxial).is_err());
        let bad = vec![r, RotorConfig::from_rpm(900.0), RotorConfig::from_rpm(200.0)];
        assert!(Scanner::new(vec![p, p, q], bad, ArraySpec::single(), SteeringModel::Paraxial).is_err());
    }

    #[test]
    fn tick_count_covers_half_open_duration() {
        let s = SamplingConfig::new(100_000.0, 0.1, 1e-3, 0).unwrap();
        assert_eq!(s.tick_count(), 10_000);
    }

    #[test]
    fn samples_are_time_ordered_with_uniform_spacing() {
        let scanner = Scanner::reference();
        let s = SamplingConfig::new(50_000.0, 0.01, 1e-3, 1).unwrap();
        let pat = generate_pattern(&scanner, &s).unwrap();
        assert_eq!(pat.len(), 500);
        for w in pat.samples.windows(2) {
            assert_abs_diff_eq!(w[1].t - w[0].t, 1.0 / 50_000.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn noisy_clock_integrates_piecewise_linearly() {
        let r = RotorConfig::from_rpm(6000.0).with_noise(0.01);
        let mut a = RotorClock::new(&r, 1e-3, 42, 0);
        let mut b = RotorClock::new(&r, 1e-3, 42, 0);
        let pa: Vec<f64> = (0..5000).map(|k| a.phase_at(k as f64 * 1e-5)).collect();
        let pb: Vec<f64> = (0..5000).map(|k| b.phase_at(k as f64 * 1e-5)).collect();
        assert_eq!(pa, pb);
        // Increments inside one tick are equal (held speed).
        let d1 = pa[1] - pa[0];
        let d2 = pa[2] - pa[1];
        assert_abs_diff_eq!(d1, d2, epsilon = 1e-12);
        // Speeds differ between ticks.
        let s0 = (pa[99] - pa[0]) / (99.0 * 1e-5);
        let s1 = (pa[199] - pa[100]) / (99.0 * 1e-5);
        assert!((s0 - s1).abs() > 1e-6);
    }

    #[test]
    fn envelope_of_the_reference_pattern_is_the_fov_square() {
        let p = generate_pattern(&Scanner::reference(), &SamplingConfig::with_duration(1.0, 0).unwrap()).unwrap();
        let samples: Vec<Sample> = p.iter().copied().collect();
        let (lo, hi) = angular_envelope(&samples).unwrap();
        let fov = Scanner::reference().paraxial_half_fov();
        for v in [-lo.x, -lo.y, hi.x, hi.y] {
            assert!(v <= fov + 1e-12 && v > fov - 2e-3, "{v} vs {fov}");
        }
        assert_eq!(angular_envelope(&[]), None);
    }
}
