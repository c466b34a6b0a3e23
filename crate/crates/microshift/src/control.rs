//! Drive-signal generation and steering-mirror dynamics.
//!
//! A shift cycle is compiled into sampled hardware waveforms (default
//! 100 kHz): the steering-mirror tilt command for the moving array and the
//! power scale of each array. Intensity actuators are fast enough to treat as
//! ideal; the mirror is not, so its commanded tilt is passed through a
//! second-order servo model before the atoms see it.

use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;

/// Default hardware waveform sample rate (Hz).
pub const WAVEFORM_SAMPLE_RATE: f64 = 1000e3;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Shape of a point-to-point motion ramp, parameterized on normalized time
/// `s in [0, 1]` and returning normalized progress in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    /// Constant velocity. Steps in acceleration at both ends.
    Linear,
    /// `3 s^2 - 2 s^3`: continuous velocity, steps in acceleration.
    Smoothstep,
    /// `10 s^3 - 15 s^4 + 6 s^5`: continuous velocity *and* acceleration —
    /// the gentlest of the three for a resonant payload.
    MinimumJerk,
}

impl RampShape {
    pub fn value(self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match self {
            RampShape::Linear => s,
            RampShape::Smoothstep => s * s * (3.0 - 2.0 * s),
            RampShape::MinimumJerk => s * s * s * (10.0 + s * (-15.0 + 6.0 * s)),
        }
    }
}

/// What a stretch of the drive is doing; used for bookkeeping, reporting, and
/// attaching per-settling-event pointing noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Atoms arrive in the moving array; everything static.
    Load,
    /// Mirror sweeps the moving array by one pitch.
    Transport,
    /// Power crossfade, moving array -> static array.
    HandoverToStatic,
    /// Mirror returns with the moving array dark.
    Return,
    /// Power crossfade, static array -> moving array.
    HandoverToMoving,
    /// Constant drive (used by coherence protocols).
    Hold,
}

/// One labeled stretch of the compiled drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Start time (s).
    pub start: f64,
    pub duration: f64,
    /// Index of the first sample at/after `start`.
    pub first_sample: usize,
    /// One past the last sample strictly before `start + duration`.
    pub end_sample: usize,
}

/// Sampled drive waveforms: mirror tilt command plus both array power scales,
/// all on the same uniform time grid (`samples[k]` at `t = k * dt`).
#[derive(Debug, Clone, PartialEq)]
pub struct DriveWaveforms {
    pub dt: f64,
    pub tilt_command: Vec<f64>,
    pub moving_power: Vec<f64>,
    pub static_power: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl DriveWaveforms {
    pub fn total_duration(&self) -> f64 {
        (self.tilt_command.len() - 1) as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.tilt_command.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tilt_command.is_empty()
    }

    /// Linear interpolation of one channel at time `t` (clamped to the ends).
    fn sample(channel: &[f64], dt: f64, t: f64) -> f64 {
        let u = t / dt;
        if u <= 0.0 {
            return channel[0];
        }
        let last = channel.len() - 1;
        if u >= last as f64 {
            return channel[last];
        }
        let k = u.floor() as usize;
        let frac = u - k as f64;
        channel[k] * (1.0 - frac) + channel[k + 1] * frac
    }

    pub fn tilt_at(&self, t: f64) -> f64 {
        Self::sample(&self.tilt_command, self.dt, t)
    }

    pub fn moving_power_at(&self, t: f64) -> f64 {
        Self::sample(&self.moving_power, self.dt, t)
    }

    pub fn static_power_at(&self, t: f64) -> f64 {
        Self::sample(&self.static_power, self.dt, t)
    }

    /// Add a constant pointing offset to the tilt command of each segment —
    /// the mirror settles somewhere within its repeatability band once per
    /// move, rather than jittering sample to sample.
    /// Imprint per-settle pointing repeatability on the tilt channel: every
    /// segment that moves the tilt settles to its target plus a fresh
    /// `N(0, sigma)` error, which then persists through subsequent
    /// non-moving segments until the next motion replaces it. The error
    /// blends in linearly over the motion itself so the resulting command
    /// stays continuous - a discontinuity here would ring the servo and
    /// masquerade as transport heating.
    pub fn apply_pointing_noise(&mut self, sigma: f64, rng: &mut ChaCha8Rng) {
        if sigma == 0.0 {
            return;
        }
        let clean = self.tilt_command.clone();
        let last = self.tilt_command.len() - 1;
        let mut offset = 0.0;
        // Segments own samples (first_sample, end_sample]; first_sample is
        // the boundary sample shared with the previous segment.
        for seg in &self.segments {
            let first = seg.first_sample;
            let end = seg.end_sample.min(last);
            if end <= first {
                continue;
            }
            let moved = clean[end] != clean[first];
            if moved {
                let target = sigma * crate::rng::standard_normal(rng);
                let span = (end - first) as f64;
                for k in first + 1..=end {
                    let s = (k - first) as f64 / span;
                    self.tilt_command[k] += offset + (target - offset) * s;
                }
                offset = target;
            } else {
                for k in first + 1..=end {
                    self.tilt_command[k] += offset;
                }
            }
        }
    }
}

/// Incremental builder for [`DriveWaveforms`].
pub struct WaveformBuilder {
    dt: f64,
    tilt: Vec<f64>,
    moving_power: Vec<f64>,
    static_power: Vec<f64>,
    segments: Vec<Segment>,
}

impl WaveformBuilder {
    /// Start a drive at the given initial tilt and power scales; the first
    /// sample (t = 0) holds these values.
    pub fn new(sample_rate: f64, tilt: f64, moving_power: f64, static_power: f64) -> Self {
        WaveformBuilder {
            dt: 1.0 / sample_rate,
            tilt: vec![tilt],
            moving_power: vec![moving_power],
            static_power: vec![static_power],
            segments: Vec::new(),
        }
    }

    fn current_time(&self) -> f64 {
        (self.tilt.len() - 1) as f64 * self.dt
    }

    /// Append a segment `duration` long whose channels move from their
    /// current values to the given targets, each along the given ramp.
    /// `None` holds a channel constant.
    fn segment(
        &mut self,
        kind: SegmentKind,
        duration: f64,
        tilt_to: Option<(f64, RampShape)>,
        moving_to: Option<(f64, RampShape)>,
        static_to: Option<(f64, RampShape)>,
    ) {
        let start = self.current_time();
        let first_sample = self.tilt.len() - 1;
        let steps = (duration / self.dt).round() as usize;
        let tilt0 = *self.tilt.last().unwrap();
        let mov0 = *self.moving_power.last().unwrap();
        let sta0 = *self.static_power.last().unwrap();
        for k in 1..=steps {
            let s = k as f64 / steps as f64;
            let ramped = |from: f64, to: Option<(f64, RampShape)>| match to {
                Some((target, ramp)) => from + (target - from) * ramp.value(s),
                None => from,
            };
            self.tilt.push(ramped(tilt0, tilt_to));
            self.moving_power.push(ramped(mov0, moving_to));
            self.static_power.push(ramped(sta0, static_to));
        }
        self.segments.push(Segment {
            kind,
            start,
            duration: steps as f64 * self.dt,
            first_sample,
            end_sample: self.tilt.len() - 1,
        });
    }

    pub fn hold(&mut self, kind: SegmentKind, duration: f64) -> &mut Self {
        self.segment(kind, duration, None, None, None);
        self
    }

    pub fn move_tilt(
        &mut self,
        kind: SegmentKind,
        duration: f64,
        to: f64,
        ramp: RampShape,
    ) -> &mut Self {
        self.segment(kind, duration, Some((to, ramp)), None, None);
        self
    }

    /// Linear power crossfade to the given scales, tilt held.
    pub fn crossfade(
        &mut self,
        kind: SegmentKind,
        duration: f64,
        moving_to: f64,
        static_to: f64,
    ) -> &mut Self {
        self.segment(
            kind,
            duration,
            None,
            Some((moving_to, RampShape::Linear)),
            Some((static_to, RampShape::Linear)),
        );
        self
    }

    pub fn finish(self) -> DriveWaveforms {
        DriveWaveforms {
            dt: self.dt,
            tilt_command: self.tilt,
            moving_power: self.moving_power,
            static_power: self.static_power,
            segments: self.segments,
        }
    }
}

/// Timing and shaping of one shift cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftSequenceSpec {
    /// Number of one-pitch shift cycles.
    pub cycles: usize,
    /// Pause after loading before the first move (s).
    pub load_duration: f64,
    /// Mirror sweep duration, one pitch (s).
    pub transport_duration: f64,
    /// Power crossfade duration for each handover (s).
    pub handover_duration: f64,
    /// Dark return sweep duration (s).
    pub return_duration: f64,
    pub ramp: RampShape,
    pub sample_rate: f64,
}

impl Default for ShiftSequenceSpec {
    fn default() -> Self {
        ShiftSequenceSpec {
            cycles: 1,
            load_duration: 0.0,
            transport_duration: 2e-3,
            handover_duration: 5e-3,
            return_duration: 5e-3,
            ramp: RampShape::MinimumJerk,
            sample_rate: WAVEFORM_SAMPLE_RATE,
        }
    }
}

impl ShiftSequenceSpec {
    pub fn cycle_duration(&self) -> f64 {
        self.load_duration
            + self.transport_duration
            + 2.0 * self.handover_duration
            + self.return_duration
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("load_duration", self.load_duration),
            ("transport_duration", self.transport_duration),
            ("handover_duration", self.handover_duration),
            ("return_duration", self.return_duration),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.transport_duration == 0.0 || self.handover_duration == 0.0 {
            return Err(Error::Config(
                "transport and handover durations must be positive".into(),
            ));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(())
    }
}

/// Compile a multi-cycle shift drive.
///
/// The register is loaded into the moving array at tilt `-half_pitch_tilt`.
/// Each cycle: sweep to `+half_pitch_tilt` (one pitch of motion), crossfade
/// the atoms into the static array, sweep back dark, and crossfade them back
/// into the moving array — which now holds them one site further along.
///
/// `capacity` is how many sites of headroom the load pattern leaves at the
/// trailing edge of the grid; requesting more cycles than that would push
/// atoms off the array.
pub fn compile_cycle(
    spec: &ShiftSequenceSpec,
    capacity: usize,
    half_pitch_tilt: f64,
) -> Result<DriveWaveforms> {
    spec.validate()?;
    if spec.cycles > capacity {
        return Err(Error::Capacity {
            cycles: spec.cycles,
            capacity,
        });
    }
    let mut b = WaveformBuilder::new(spec.sample_rate, -half_pitch_tilt, 1.0, 0.0);
    for cycle in 0..spec.cycles {
        if cycle == 0 {
            b.hold(SegmentKind::Load, spec.load_duration);
        }
        b.move_tilt(
            SegmentKind::Transport,
            spec.transport_duration,
            half_pitch_tilt,
            spec.ramp,
        );
        b.crossfade(SegmentKind::HandoverToStatic, spec.handover_duration, 0.0, 1.0);
        b.move_tilt(
            SegmentKind::Return,
            spec.return_duration,
            -half_pitch_tilt,
            spec.ramp,
        );
        b.crossfade(SegmentKind::HandoverToMoving, spec.handover_duration, 1.0, 0.0);
    }
    Ok(b.finish())
}

/// Second-order model of the steering-mirror servo.
///
/// Commanded angle `c(t)` drives the damped low-pass
///
/// ```text
/// theta'' = w0^2 (c - theta) - 2 zeta w0 theta'
/// ```
///
/// i.e. transfer function `H(s) = w0^2 / (s^2 + 2 zeta w0 s + w0^2)`, whose
/// unit-step overshoot is `exp(-pi zeta / sqrt(1 - zeta^2))` for `zeta < 1`.
/// Sweeps much slower than the servo period track with a velocity-lag error
/// `|c - theta| ~ 2 zeta |c'| / w0`; fast sweeps leave the mirror ringing at
/// `w0 sqrt(1 - zeta^2)` around the target, and when that ringing overlaps a
/// trap vibrational frequency it pumps the atoms resonantly. The defaults are
/// calibrated against the transport scan: a stiff, lightly damped scanner
/// whose ringing sits at the radial frequency of the deep-array traps, so
/// sub-millisecond sweeps heat and spill atoms while sweeps of 1 ms and
/// longer are quiet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorModel {
    /// Servo natural frequency w0 (rad/s).
    pub natural_frequency: f64,
    /// Damping ratio zeta, in (0, 2).
    pub damping_ratio: f64,
    /// Per-settle pointing repeatability, 1 sigma (rad).
    pub angle_noise_sigma: f64,
}

impl Default for MirrorModel {
    fn default() -> Self {
        MirrorModel {
            natural_frequency: TWO_PI * 15.0e3,
            damping_ratio: 0.03,
            angle_noise_sigma: 22e-6,
        }
    }
}

impl MirrorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.natural_frequency > 0.0) {
            return Err(Error::Config("mirror natural frequency must be positive".into()));
        }
        if !(self.damping_ratio > 0.0 && self.damping_ratio < 2.0) {
            return Err(Error::Config(format!(
                "mirror damping ratio must be in (0, 2), got {}",
                self.damping_ratio
            )));
        }
        if !(self.angle_noise_sigma >= 0.0) {
            return Err(Error::Config("angle noise sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// An ideal mirror: tracks any command exactly, no noise. Modeled as a
    /// pass-through (used to isolate atom physics from actuator physics).
    pub fn ideal() -> Self {
        MirrorModel {
            natural_frequency: f64::INFINITY,
            damping_ratio: 0.5,
            angle_noise_sigma: 0.0,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.natural_frequency.is_infinite()
    }

    /// Actual mirror angle at the command sample times. The mirror starts
    /// settled at the first commanded angle. Commands are treated as linear
    /// between samples; integration uses RK4 substeps sized well below the
    /// servo period.
    pub fn track(&self, dt: f64, commands: &[f64]) -> Vec<f64> {
        if self.is_ideal() || commands.len() < 2 {
            return commands.to_vec();
        }
        let w0 = self.natural_frequency;
        let zw = 2.0 * self.damping_ratio * w0;
        // Substep so RK4 local error stays ~1e-9 of scale.
        let substeps = (w0 * dt / 0.05).ceil().max(1.0) as usize;
        let h = dt / substeps as f64;

        let mut theta = commands[0];
        let mut vel = 0.0;
        let mut out = Vec::with_capacity(commands.len());
        out.push(theta);
        for k in 0..commands.len() - 1 {
            let c0 = commands[k];
            let cdot = (commands[k + 1] - c0) / dt;
            for j in 0..substeps {
                let t0 = j as f64 * h;
                let accel = |tau: f64, th: f64, v: f64| {
                    let c = c0 + cdot * (t0 + tau);
                    w0 * w0 * (c - th) - zw * v
                };
                let (k1t, k1v) = (vel, accel(0.0, theta, vel));
                let (k2t, k2v) = (
                    vel + 0.5 * h * k1v,
                    accel(0.5 * h, theta + 0.5 * h * k1t, vel + 0.5 * h * k1v),
                );
                let (k3t, k3v) = (
                    vel + 0.5 * h * k2v,
                    accel(0.5 * h, theta + 0.5 * h * k2t, vel + 0.5 * h * k2v),
                );
                let (k4t, k4v) = (
                    vel + h * k3v,
                    accel(h, theta + h * k3t, vel + h * k3v),
                );
                theta += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
                vel += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            }
            out.push(theta);
        }
        out
    }
}
