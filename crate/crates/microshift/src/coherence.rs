//! Clock-state coherence: Ramsey and spin-echo sequences over trapped
//! ensembles, and the Gaussian contrast fits that extract `T2'`.
//!
//! Each trapped atom sees a differential light shift between the two clock
//! states proportional to the local trap intensity. The shift that matters on
//! millisecond sequences is the secular (orbit-averaged) one: an atom with
//! total mechanical energy `E` in a well of depth `D` averages
//! `delta = eta * (D - E/2) / hbar` over its oscillation (equipartition puts
//! half the excess energy into potential energy). The thermal spread of `E`
//! across the ensemble dephases a Ramsey fringe in milliseconds; a spin echo
//! refocuses it completely because each atom's energy is conserved while the
//! traps stand still.
//!
//! What the echo cannot refocus is the energy an atom *gains between the two
//! halves* of the sequence. Photon scattering heats every atom slowly; the
//! model draws the heating increment of each free-evolution interval at
//! random per atom, which turns the drift into an irreversible frequency walk
//! and yields the Gaussian echo envelope
//! `C(2 t_pi) = C(0) * exp(-(2 t_pi)^2 / T2'^2)` with `T2' = 2 / sigma_nu`.
//!
//! Motional windows (transport sweeps, handover crossfades) embedded in a
//! sequence contribute their honest trajectory-integrated phase from the
//! dynamics engine, and update each atom's energy bookkeeping afterwards.

use crate::constants::{BOLTZMANN, REDUCED_PLANCK};
use crate::control::{RampShape, SegmentKind, WaveformBuilder, WAVEFORM_SAMPLE_RATE};
use crate::dynamics::{
    ensemble_energies, load_ensemble, propagate, ArrayChoice, PropagationRequest,
    SimulationSetup,
};
use crate::error::{Error, Result};
use crate::rng::{standard_normal, stream, StreamPurpose};

/// Default duration of a pi pulse (s); pi/2 pulses take half of it.
pub const PI_PULSE_DURATION: f64 = 210e-6;

/// Normalization time of the homogeneous channel (s): the randomized part of
/// one free-evolution interval's energy gain has the spread of this much
/// heating, independent of the interval length. This choice makes the echo
/// envelope exactly Gaussian in the sequence length, which is the measured
/// shape; diffusive alternatives (spread growing with the interval) would
/// produce cubic-exponent envelopes instead.
pub const HOMOGENEOUS_NORMALIZATION_TIME: f64 = 1.0;

// ---------------------------------------------------------------------------
// Dephasing model
// ---------------------------------------------------------------------------

/// Parameters of the two dephasing channels.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DephasingModel {
    /// Differential-shift fraction: the clock-state splitting shifts by
    /// `eta * |U|` in a trap of local depth `|U|` (hyperfine splitting over
    /// effective detuning).
    pub eta: f64,
    /// Homogeneous channel strength (K/s): slow energy growth from photon
    /// scattering, randomized between free-evolution intervals.
    pub heating_rate: f64,
    /// Shot-to-shot detuning jitter of the drive (rad/s, 1 sigma). Common to
    /// all atoms within a shot; moves the fringe phase, not the contrast.
    pub detuning_jitter: f64,
}

impl DephasingModel {
    /// Model with the differential-shift fraction of the given trap
    /// wavelength and no homogeneous channel.
    pub fn for_trap_wavelength(
        wavelength: f64,
        species: &crate::species::AtomSpecies,
    ) -> Result<Self> {
        Ok(DephasingModel {
            eta: crate::potential::differential_shift_ratio(wavelength, species)?,
            heating_rate: 0.0,
            detuning_jitter: 0.0,
        })
    }

    /// Same, with the heating rate calibrated so that an ensemble at rest
    /// dephases with `T2' = 74 ms` in the shallow-array configuration (the
    /// rate is a single scalar shared by every protocol; see
    /// [`calibrate_heating_rate`]). The value sits at the same order as the
    /// photon-scattering heating bound (recoil temperature times scattering
    /// rate, a few uK/s), as it should.
    pub fn calibrated(wavelength: f64, species: &crate::species::AtomSpecies) -> Result<Self> {
        let mut model = Self::for_trap_wavelength(wavelength, species)?;
        model.heating_rate = CALIBRATED_HEATING_RATE;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!(
                "differential-shift fraction must be positive, got {}",
                self.eta
            )));
        }
        if !(self.heating_rate >= 0.0) {
            return Err(Error::Config(format!(
                "heating rate must be >= 0, got {}",
                self.heating_rate
            )));
        }
        if !(self.detuning_jitter >= 0.0) {
            return Err(Error::Config(format!(
                "detuning jitter must be >= 0, got {}",
                self.detuning_jitter
            )));
        }
        Ok(())
    }

    /// Differential shift (rad/s) of the clock splitting at a point where the
    /// trap potential is `local_potential` (J, <= 0).
    pub fn differential_shift(&self, local_potential: f64) -> Result<f64> {
        self.validate()?;
        if local_potential > 0.0 {
            return Err(Error::Config(format!(
                "local potential must be <= 0 (attractive), got {local_potential:.3e} J"
            )));
        }
        Ok(self.eta * local_potential.abs() / REDUCED_PLANCK)
    }

    /// 1-sigma spread of the per-interval homogeneous frequency offset
    /// (rad/s): the shift response to one normalization time of heating.
    pub fn homogeneous_sigma(&self) -> f64 {
        0.5 * self.eta * BOLTZMANN * self.heating_rate * HOMOGENEOUS_NORMALIZATION_TIME
            / REDUCED_PLANCK
    }
}

/// Heating rate (K/s) frozen after matching the at-rest echo decay to
/// `T2' = 74 ms` in the shallow-array trap; see [`calibrate_heating_rate`].
pub const CALIBRATED_HEATING_RATE: f64 = 1.7740e-6;

// ---------------------------------------------------------------------------
// Pulse sequences
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Ramsey,
    Echo,
}

/// One resonant Rabi pulse.
#[derive(Debug, Clone, Copy)]
pub struct Pulse {
    /// Center time (s). Rotations are booked at the center; the duration
    /// occupies the timeline for ordering and overlap checks.
    pub center: f64,
    pub duration: f64,
    /// Rotation angle (rad): pi/2, pi, ...
    pub angle: f64,
    /// Drive phase (rad): the equatorial axis the rotation is about.
    pub axis_phase: f64,
}

/// An ordered train of resonant pulses. Free evolution accumulates phase
/// between consecutive pulse centers; booking rotations at pulse centers
/// keeps the two halves of an echo exactly equal, which is what the resonant
/// (drive-dominated) limit implies.
#[derive(Debug, Clone)]
pub struct PulseSequence {
    pub kind: SequenceKind,
    pub pulses: Vec<Pulse>,
    /// Refocusing time for echo sequences (s).
    pub t_pi: Option<f64>,
}

impl PulseSequence {
    /// pi/2 -- free evolution over `window` -- pi/2.
    pub fn ramsey(window: f64) -> Self {
        PulseSequence {
            kind: SequenceKind::Ramsey,
            pulses: vec![
                Pulse {
                    center: 0.0,
                    duration: 0.5 * PI_PULSE_DURATION,
                    angle: std::f64::consts::FRAC_PI_2,
                    axis_phase: 0.0,
                },
                Pulse {
                    center: window,
                    duration: 0.5 * PI_PULSE_DURATION,
                    angle: std::f64::consts::FRAC_PI_2,
                    axis_phase: 0.0,
                },
            ],
            t_pi: None,
        }
    }

    /// pi/2 at 0, pi at `t_pi`, final pi/2 at `2 t_pi`.
    pub fn echo(t_pi: f64) -> Self {
        Self::echo_with_final(t_pi, 2.0 * t_pi)
    }

    /// Echo with the final pi/2 moved to `final_center` (for scanning the
    /// echo signal around its maximum).
    pub fn echo_with_final(t_pi: f64, final_center: f64) -> Self {
        PulseSequence {
            kind: SequenceKind::Echo,
            pulses: vec![
                Pulse {
                    center: 0.0,
                    duration: 0.5 * PI_PULSE_DURATION,
                    angle: std::f64::consts::FRAC_PI_2,
                    axis_phase: 0.0,
                },
                Pulse {
                    center: t_pi,
                    duration: PI_PULSE_DURATION,
                    angle: std::f64::consts::PI,
                    axis_phase: 0.0,
                },
                Pulse {
                    center: final_center,
                    duration: 0.5 * PI_PULSE_DURATION,
                    angle: std::f64::consts::FRAC_PI_2,
                    axis_phase: 0.0,
                },
            ],
            t_pi: Some(t_pi),
        }
    }

    /// A single pi pulse (population transfer).
    pub fn pi_pulse() -> Self {
        PulseSequence {
            kind: SequenceKind::Ramsey,
            pulses: vec![Pulse {
                center: 0.0,
                duration: PI_PULSE_DURATION,
                angle: std::f64::consts::PI,
                axis_phase: 0.0,
            }],
            t_pi: None,
        }
    }

    /// Add a constant offset to every pulse's drive phase.
    pub fn with_drive_phase(mut self, phase: f64) -> Self {
        for p in &mut self.pulses {
            p.axis_phase += phase;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses.is_empty() {
            return Err(Error::Config("pulse sequence has no pulses".into()));
        }
        for p in &self.pulses {
            if !(p.duration > 0.0) || !(p.angle > 0.0) || !p.center.is_finite() {
                return Err(Error::Config(format!(
                    "invalid pulse: center {:.3e} s, duration {:.3e} s, angle {:.3} rad",
                    p.center, p.duration, p.angle
                )));
            }
        }
        for w in self.pulses.windows(2) {
            let gap = w[1].center - w[0].center;
            let needed = 0.5 * (w[0].duration + w[1].duration);
            if gap <= 0.0 {
                return Err(Error::Config("pulses must be in increasing time order".into()));
            }
            if gap < needed {
                return Err(Error::Config(format!(
                    "pulses at {:.3e} s and {:.3e} s overlap ({:.3e} s apart, need {:.3e} s)",
                    w[0].center, w[1].center, gap, needed
                )));
            }
        }
        Ok(())
    }

    /// Time of the last pulse center (s).
    pub fn end(&self) -> f64 {
        self.pulses.last().map_or(0.0, |p| p.center)
    }
}

// ---------------------------------------------------------------------------
// Phase tracks (what the dynamics hands the qubit engine)
// ---------------------------------------------------------------------------

/// Piecewise-constant secular shift history of one atom.
#[derive(Debug, Clone)]
pub struct PhaseTrack {
    pub alive: bool,
    /// Pieces in time order; piece `k` applies up to `pieces[k].end`, and the
    /// last piece extends to infinity.
    pub pieces: Vec<TrackPiece>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackPiece {
    /// End of this piece (s from sequence start).
    pub end: f64,
    /// Secular differential-shift rate over the piece (rad/s).
    pub rate: f64,
}

impl PhaseTrack {
    fn constant(alive: bool, rate: f64) -> Self {
        PhaseTrack {
            alive,
            pieces: vec![TrackPiece { end: f64::INFINITY, rate }],
        }
    }

    /// Integrated phase over `[t0, t1]`.
    fn phase_between(&self, t0: f64, t1: f64) -> f64 {
        let mut phase = 0.0;
        let mut cursor = t0;
        for (k, piece) in self.pieces.iter().enumerate() {
            let end = if k + 1 == self.pieces.len() { f64::INFINITY } else { piece.end };
            if cursor >= end {
                continue;
            }
            let upto = t1.min(end);
            if upto > cursor {
                phase += piece.rate * (upto - cursor);
                cursor = upto;
            }
            if cursor >= t1 {
                break;
            }
        }
        phase
    }
}

/// Which motional protocol occupies the start of the first free-evolution
/// period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceProtocol {
    /// Atoms parked in their wells for the whole sequence.
    Rest,
    /// One-pitch sweep of the steered array during the first 2 ms.
    #[serde(rename = "transport_2ms")]
    Transport2Ms,
    /// Crossfade to the partner array and back (5 ms each way), no sweep.
    HandoverRoundtrip,
    /// Half-pitch sweep (2 ms), handover to the partner array (5 ms), and
    /// reload (5 ms).
    FullCycle,
}

impl CoherenceProtocol {
    pub fn name(self) -> &'static str {
        match self {
            CoherenceProtocol::Rest => "rest",
            CoherenceProtocol::Transport2Ms => "transport_2ms",
            CoherenceProtocol::HandoverRoundtrip => "handover_roundtrip",
            CoherenceProtocol::FullCycle => "full_cycle",
        }
    }

    pub fn window_duration(self) -> f64 {
        match self {
            CoherenceProtocol::Rest => 0.0,
            CoherenceProtocol::Transport2Ms => 2e-3,
            CoherenceProtocol::HandoverRoundtrip => 10e-3,
            CoherenceProtocol::FullCycle => 12e-3,
        }
    }
}

/// Per-atom phase histories for one protocol, ready for pulse sequences of
/// any length.
#[derive(Debug, Clone)]
pub struct CoherenceScenario {
    pub protocol: CoherenceProtocol,
    /// End of the motional window (s); free evolution is secular beyond it.
    pub window_end: f64,
    pub tracks: Vec<PhaseTrack>,
    pub seed: u64,
}

/// Secular shift of an atom with total mechanical energy `total` (J, signed)
/// in a well of depth magnitude `depth` (J): the orbit average of
/// `eta |U| / hbar` under equipartition.
fn secular_rate(eta: f64, depth: f64, total: f64) -> f64 {
    (0.5 * eta * (depth - total) / REDUCED_PLANCK).max(0.0)
}

/// Build the per-atom phase tracks for a protocol by running its motional
/// window through the dynamics engine once (protocols other than rest).
///
/// The sequence's inhomogeneous physics all lives here: each atom's secular
/// rate is set by its sampled energy, the motional window contributes its
/// trajectory-integrated phase, and atoms lost in the window are flagged so
/// they drop out of the detected ensemble.
pub fn protocol_scenario(
    setup: &SimulationSetup,
    protocol: CoherenceProtocol,
    site: (usize, usize),
    atoms: usize,
    temperature: f64,
) -> Result<CoherenceScenario> {
    let eta = setup.differential_shift_ratio;
    let half = setup.geometry.half_pitch_tilt();
    let depth_at = |tilt: f64| -> Result<f64> {
        let (depth_factor, _) = setup.aberration.degradation(tilt)?;
        Ok(setup.moving_array.depth_at(site.0, site.1)?.abs() * depth_factor)
    };

    let window = protocol.window_duration();
    let scenario = match protocol {
        CoherenceProtocol::Rest => {
            let ensemble =
                load_ensemble(setup, ArrayChoice::Moving, &[site], atoms, temperature, 0.0)?;
            let energies = ensemble_energies(setup, &ensemble, 0.0, 1.0, 0.0)?;
            let depth = depth_at(0.0)?;
            let tracks = energies
                .iter()
                .map(|&e| PhaseTrack::constant(true, secular_rate(eta, depth, e)))
                .collect();
            CoherenceScenario { protocol, window_end: 0.0, tracks, seed: setup.seed }
        }
        CoherenceProtocol::Transport2Ms => {
            let mut ensemble =
                load_ensemble(setup, ArrayChoice::Moving, &[site], atoms, temperature, -half)?;
            let mut b = WaveformBuilder::new(WAVEFORM_SAMPLE_RATE, -half, 1.0, 0.0);
            b.move_tilt(SegmentKind::Transport, window, half, RampShape::MinimumJerk);
            let mut drive = b.finish();
            drive.apply_pointing_noise(
                setup.mirror.angle_noise_sigma,
                &mut stream(setup.seed, StreamPurpose::MirrorNoise, 0),
            );
            let output = propagate(
                setup,
                &mut ensemble,
                &PropagationRequest {
                    drive: &drive,
                    checkpoint_times: &[window],
                    record_positions: false,
                },
            )?;
            let depth = depth_at(half)?;
            let tracks = (0..ensemble.len())
                .map(|i| PhaseTrack {
                    alive: ensemble.is_alive(i),
                    pieces: vec![
                        TrackPiece { end: window, rate: output.phase(i, 0) / window },
                        TrackPiece {
                            end: f64::INFINITY,
                            rate: secular_rate(eta, depth, output.energy(i, 0)),
                        },
                    ],
                })
                .collect();
            CoherenceScenario { protocol, window_end: window, tracks, seed: setup.seed }
        }
        CoherenceProtocol::HandoverRoundtrip | CoherenceProtocol::FullCycle => {
            if setup.static_array.is_none() {
                return Err(Error::Config(format!(
                    "{protocol:?} needs a setup with a partner array"
                )));
            }
            // Both protocols end with the atoms back in the steered array at
            // the half-pitch tilt where its foci coincide with the partner's;
            // the full cycle starts centered and sweeps there first.
            let load_tilt = match protocol {
                CoherenceProtocol::HandoverRoundtrip => half,
                _ => 0.0,
            };
            let mut ensemble = load_ensemble(
                setup,
                ArrayChoice::Moving,
                &[site],
                atoms,
                temperature,
                load_tilt,
            )?;
            let mut b = WaveformBuilder::new(WAVEFORM_SAMPLE_RATE, load_tilt, 1.0, 0.0);
            if protocol == CoherenceProtocol::FullCycle {
                b.move_tilt(SegmentKind::Transport, 2e-3, half, RampShape::MinimumJerk);
            }
            b.crossfade(SegmentKind::HandoverToStatic, 5e-3, 0.0, 1.0);
            b.crossfade(SegmentKind::HandoverToMoving, 5e-3, 1.0, 0.0);
            let mut drive = b.finish();
            drive.apply_pointing_noise(
                setup.mirror.angle_noise_sigma,
                &mut stream(setup.seed, StreamPurpose::MirrorNoise, 0),
            );
            let output = propagate(
                setup,
                &mut ensemble,
                &PropagationRequest {
                    drive: &drive,
                    checkpoint_times: &[window],
                    record_positions: false,
                },
            )?;
            let depth = depth_at(half)?;
            let tracks = (0..ensemble.len())
                .map(|i| PhaseTrack {
                    alive: ensemble.is_alive(i),
                    pieces: vec![
                        TrackPiece { end: window, rate: output.phase(i, 0) / window },
                        TrackPiece {
                            end: f64::INFINITY,
                            rate: secular_rate(eta, depth, output.energy(i, 0)),
                        },
                    ],
                })
                .collect();
            CoherenceScenario { protocol, window_end: window, tracks, seed: setup.seed }
        }
    };
    Ok(scenario)
}

// ---------------------------------------------------------------------------
// Qubit evolution
// ---------------------------------------------------------------------------

/// One atom's two-level state after a sequence.
#[derive(Debug, Clone, Copy)]
pub struct QubitRecord {
    /// F = 2 amplitude (re, im).
    pub f2: (f64, f64),
    /// F = 3 amplitude (re, im).
    pub f3: (f64, f64),
    /// Total accumulated differential phase (rad).
    pub phase: f64,
    pub pulses_applied: usize,
}

impl QubitRecord {
    pub fn norm(&self) -> f64 {
        (self.f2.0 * self.f2.0
            + self.f2.1 * self.f2.1
            + self.f3.0 * self.f3.0
            + self.f3.1 * self.f3.1)
            .sqrt()
    }

    pub fn f2_population(&self) -> f64 {
        self.f2.0 * self.f2.0 + self.f2.1 * self.f2.1
    }
}

/// Ensemble result of one pulse sequence.
#[derive(Debug, Clone)]
pub struct QubitEvolution {
    pub records: Vec<QubitRecord>,
    /// Mean F = 2 population over detected (surviving) atoms after the final
    /// pulse.
    pub f2_population: f64,
    /// Fringe amplitude right before the final pulse: twice the magnitude of
    /// the mean clock coherence over detected atoms. Equals the amplitude the
    /// final-pulse-phase fringe would show.
    pub contrast: f64,
    /// Standard error of `contrast` (delta method along the mean phasor).
    pub contrast_sigma: f64,
    pub detected: usize,
}

/// Evolve every atom's clock superposition through a pulse sequence.
///
/// Atoms start in F = 2. Between consecutive pulse centers each atom
/// accumulates its track phase, the deterministic secular slowdown from
/// heating, and one randomized homogeneous increment; pulses are exact
/// resonant rotations. Atoms lost during the protocol window are excluded
/// from the detected averages.
pub fn evolve_qubits(
    scenario: &CoherenceScenario,
    model: &DephasingModel,
    sequence: &PulseSequence,
) -> Result<QubitEvolution> {
    model.validate()?;
    sequence.validate()?;
    for pulse in &sequence.pulses[1..] {
        if pulse.center < scenario.window_end {
            return Err(Error::SequenceTooShort {
                needed: scenario.window_end,
                available: pulse.center,
            });
        }
    }

    let sigma_nu = model.homogeneous_sigma();
    // d(rate)/dt from deterministic heating: energy grows at heating_rate, so
    // the secular shift of every atom slides down together.
    let chirp = -0.5 * model.eta * BOLTZMANN * model.heating_rate / REDUCED_PLANCK;
    let jitter = if model.detuning_jitter > 0.0 {
        let mut rng = stream(scenario.seed, StreamPurpose::Measurement, 0x6a6974);
        model.detuning_jitter * standard_normal(&mut rng)
    } else {
        0.0
    };

    let mut records = Vec::with_capacity(scenario.tracks.len());
    let mut sum = (0.0f64, 0.0f64);
    let mut phasors = Vec::with_capacity(scenario.tracks.len());
    let mut f2_sum = 0.0;
    let mut detected = 0usize;

    for (atom, track) in scenario.tracks.iter().enumerate() {
        let mut noise = stream(scenario.seed, StreamPurpose::DephasingNoise, atom as u64);
        // F=2 amplitude a, F=3 amplitude b.
        let mut a = (1.0f64, 0.0f64);
        let mut b = (0.0f64, 0.0f64);
        let mut total_phase = 0.0f64;
        let mut coherence_before_final = (0.0f64, 0.0f64);

        for (k, pulse) in sequence.pulses.iter().enumerate() {
            if k > 0 {
                let (t0, t1) = (sequence.pulses[k - 1].center, pulse.center);
                let mut phi = track.phase_between(t0, t1);
                phi += 0.5 * chirp * (t1 * t1 - t0 * t0);
                phi += (sigma_nu * standard_normal(&mut noise) + jitter) * (t1 - t0);
                total_phase += phi;
                // Free evolution about z: split the phase between the states.
                let (ca, sa) = ((0.5 * phi).cos(), -(0.5 * phi).sin());
                a = (a.0 * ca - a.1 * sa, a.0 * sa + a.1 * ca);
                let (cb, sb) = (ca, -sa);
                b = (b.0 * cb - b.1 * sb, b.0 * sb + b.1 * cb);
            }
            if k + 1 == sequence.pulses.len() {
                // Clock coherence a * conj(b), doubled to a fringe amplitude.
                coherence_before_final =
                    (2.0 * (a.0 * b.0 + a.1 * b.1), 2.0 * (a.1 * b.0 - a.0 * b.1));
            }
            // Exact resonant rotation by `angle` about the equatorial axis at
            // `axis_phase`.
            let (c, s) = ((0.5 * pulse.angle).cos(), (0.5 * pulse.angle).sin());
            let (pc, ps) = (pulse.axis_phase.cos(), pulse.axis_phase.sin());
            // a' = c a - i e^{-i alpha} s b ; b' = -i e^{+i alpha} s a + c b
            let new_a = (
                c * a.0 + s * (pc * b.1 - ps * b.0),
                c * a.1 - s * (pc * b.0 + ps * b.1),
            );
            let new_b = (
                c * b.0 + s * (ps * a.0 + pc * a.1),
                c * b.1 + s * (ps * a.1 - pc * a.0),
            );
            a = new_a;
            b = new_b;
        }

        if track.alive {
            detected += 1;
            f2_sum += a.0 * a.0 + a.1 * a.1;
            sum.0 += coherence_before_final.0;
            sum.1 += coherence_before_final.1;
            phasors.push(coherence_before_final);
        }
        records.push(QubitRecord {
            f2: a,
            f3: b,
            phase: total_phase,
            pulses_applied: sequence.pulses.len(),
        });
    }

    if detected == 0 {
        return Err(Error::InsufficientAtoms(0));
    }
    let n = detected as f64;
    let mean = (sum.0 / n, sum.1 / n);
    let contrast = (mean.0 * mean.0 + mean.1 * mean.1).sqrt();
    // Delta method: spread of the phasor component along the mean direction.
    let contrast_sigma = if detected > 1 && contrast > 0.0 {
        let (ux, uy) = (mean.0 / contrast, mean.1 / contrast);
        let mut var = 0.0;
        for p in &phasors {
            let proj = p.0 * ux + p.1 * uy;
            var += (proj - contrast) * (proj - contrast);
        }
        (var / (n * (n - 1.0))).sqrt()
    } else {
        0.0
    };

    Ok(QubitEvolution {
        records,
        f2_population: f2_sum / n,
        contrast,
        contrast_sigma,
        detected,
    })
}

// ---------------------------------------------------------------------------
// Contrast curves
// ---------------------------------------------------------------------------

/// Contrast versus sequence length, with an optional Gaussian fit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ContrastCurve {
    /// Abscissa: full sequence length (2 t_pi for echoes, the window for
    /// Ramsey) in seconds.
    pub times: Vec<f64>,
    pub contrast: Vec<f64>,
    pub sigma: Vec<f64>,
    pub fit: Option<GaussianFit>,
}

/// Result of fitting `C(x) = amplitude * exp(-x^2 / t2^2)`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub t2: f64,
    pub amplitude_sigma: f64,
    pub t2_sigma: f64,
    /// Coefficient of determination of the fit on the raw contrasts.
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

impl ContrastCurve {
    /// 1/e decay time by linear interpolation of the first crossing.
    pub fn one_over_e_time(&self) -> Result<f64> {
        let target = std::f64::consts::E.recip();
        for k in 1..self.times.len() {
            let (c0, c1) = (self.contrast[k - 1], self.contrast[k]);
            if c0 >= target && c1 < target {
                let f = (c0 - target) / (c0 - c1);
                return Ok(self.times[k - 1] + f * (self.times[k] - self.times[k - 1]));
            }
        }
        Err(Error::FitDegenerate(
            "contrast never decays below 1/e inside the scanned window".into(),
        ))
    }
}

/// Echo contrast at `2 t_pi` for each refocusing time, using one shared
/// motional-window simulation (common random numbers across the curve and
/// across protocols: the same atom keeps the same thermal sample and the same
/// homogeneous draws everywhere, so ratios of fitted time constants carry far
/// less Monte Carlo error than the individual fits).
pub fn echo_contrast_scan(
    setup: &SimulationSetup,
    protocol: CoherenceProtocol,
    site: (usize, usize),
    atoms: usize,
    temperature: f64,
    t_pi_values: &[f64],
    model: &DephasingModel,
) -> Result<ContrastCurve> {
    check_eta_consistency(setup, model)?;
    if t_pi_values.is_empty() {
        return Err(Error::Config("echo scan needs at least one refocusing time".into()));
    }
    let scenario = protocol_scenario(setup, protocol, site, atoms, temperature)?;
    let mut curve = ContrastCurve {
        times: Vec::with_capacity(t_pi_values.len()),
        contrast: Vec::with_capacity(t_pi_values.len()),
        sigma: Vec::with_capacity(t_pi_values.len()),
        fit: None,
    };
    for &t_pi in t_pi_values {
        let evolution = evolve_qubits(&scenario, model, &PulseSequence::echo(t_pi))?;
        curve.times.push(2.0 * t_pi);
        curve.contrast.push(evolution.contrast);
        curve.sigma.push(evolution.contrast_sigma);
    }
    Ok(curve)
}

/// Ramsey contrast versus free-evolution window at rest.
pub fn ramsey_contrast_curve(
    setup: &SimulationSetup,
    site: (usize, usize),
    atoms: usize,
    temperature: f64,
    windows: &[f64],
    model: &DephasingModel,
) -> Result<ContrastCurve> {
    check_eta_consistency(setup, model)?;
    let scenario = protocol_scenario(setup, CoherenceProtocol::Rest, site, atoms, temperature)?;
    let mut curve = ContrastCurve {
        times: Vec::with_capacity(windows.len()),
        contrast: Vec::with_capacity(windows.len()),
        sigma: Vec::with_capacity(windows.len()),
        fit: None,
    };
    for &w in windows {
        let evolution = evolve_qubits(&scenario, model, &PulseSequence::ramsey(w))?;
        curve.times.push(w);
        curve.contrast.push(evolution.contrast);
        curve.sigma.push(evolution.contrast_sigma);
    }
    Ok(curve)
}

/// Echo signal versus final-pulse time around the expected maximum at
/// `2 t_pi`.
pub fn echo_signal_scan(
    scenario: &CoherenceScenario,
    model: &DephasingModel,
    t_pi: f64,
    final_times: &[f64],
) -> Result<Vec<f64>> {
    let mut signal = Vec::with_capacity(final_times.len());
    for &t in final_times {
        let evolution =
            evolve_qubits(scenario, model, &PulseSequence::echo_with_final(t_pi, t))?;
        signal.push(evolution.contrast);
    }
    Ok(signal)
}

fn check_eta_consistency(setup: &SimulationSetup, model: &DephasingModel) -> Result<()> {
    let rel = (setup.differential_shift_ratio - model.eta).abs() / model.eta.max(f64::MIN_POSITIVE);
    if rel > 1e-9 {
        return Err(Error::Config(format!(
            "dephasing model eta {:.6e} disagrees with the setup's differential shift ratio {:.6e}",
            model.eta, setup.differential_shift_ratio
        )));
    }
    Ok(())
}

/// Tune the homogeneous heating rate until the at-rest echo fit returns the
/// target `T2'`. The decay time is exactly inversely proportional to the
/// rate, so this converges in one or two steps; the remaining iterations
/// guard against Monte Carlo wobble in the fit.
pub fn calibrate_heating_rate(
    setup: &SimulationSetup,
    site: (usize, usize),
    atoms: usize,
    temperature: f64,
    t_pi_values: &[f64],
    target_t2: f64,
    initial_rate: f64,
    model: &DephasingModel,
) -> Result<(f64, GaussianFit)> {
    if !(target_t2 > 0.0) || !(initial_rate > 0.0) {
        return Err(Error::Config("calibration needs positive target and initial rate".into()));
    }
    let mut rate = initial_rate;
    let mut last_fit = None;
    for _ in 0..8 {
        let mut trial = *model;
        trial.heating_rate = rate;
        let curve =
            echo_contrast_scan(setup, CoherenceProtocol::Rest, site, atoms, temperature, t_pi_values, &trial)?;
        let fit = fit_gaussian_contrast(&curve.times, &curve.contrast, &curve.sigma)?;
        if (fit.t2 - target_t2).abs() <= 1e-4 * target_t2 {
            return Ok((rate, fit));
        }
        rate *= fit.t2 / target_t2;
        last_fit = Some(fit);
    }
    match last_fit {
        Some(fit) => Err(Error::FitDiverged {
            iterations: 8,
            residual: (fit.t2 - target_t2).abs(),
        }),
        None => Err(Error::Config("calibration ran zero iterations".into())),
    }
}

// ---------------------------------------------------------------------------
// Gaussian contrast fit
// ---------------------------------------------------------------------------

/// Weighted nonlinear least squares of `C(x) = A exp(-x^2 / T^2)` by
/// Levenberg-Marquardt with the analytic Jacobian. `sigma` entries of zero
/// fall back to unit weights.
pub fn fit_gaussian_contrast(
    times: &[f64],
    contrast: &[f64],
    sigma: &[f64],
) -> Result<GaussianFit> {
    let n = times.len();
    if n < 4 || contrast.len() != n || sigma.len() != n {
        return Err(Error::Config(format!(
            "gaussian fit needs at least 4 equally sized points, got {n}"
        )));
    }
    if contrast.iter().all(|&c| c <= 0.0) {
        return Err(Error::FitDegenerate("all contrasts are zero or negative".into()));
    }
    let weights: Vec<f64> = sigma
        .iter()
        .map(|&s| if s > 0.0 { 1.0 / s } else { 1.0 })
        .collect();

    // Starting point: amplitude from the largest contrast, T from the
    // log-slope of the positive points.
    let mut amp = contrast.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    let mut t2 = {
        let mut acc = 0.0;
        let mut count = 0usize;
        for k in 0..n {
            if contrast[k] > 0.0 && contrast[k] < amp && times[k] > 0.0 {
                let l = -(contrast[k] / amp).ln();
                if l > 1e-12 {
                    acc += times[k] * times[k] / l;
                    count += 1;
                }
            }
        }
        if count > 0 {
            (acc / count as f64).sqrt()
        } else {
            times[n - 1].max(1e-6)
        }
    };

    let sse = |a: f64, t: f64| -> f64 {
        let mut s = 0.0;
        for k in 0..n {
            let m = a * (-times[k] * times[k] / (t * t)).exp();
            let r = (contrast[k] - m) * weights[k];
            s += r * r;
        }
        s
    };

    // Normal equations of the weighted Jacobian at (a, t).
    let normal = |a: f64, t: f64| -> (f64, f64, f64, f64, f64) {
        let (mut j11, mut j12, mut j22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..n {
            let e = (-times[k] * times[k] / (t * t)).exp();
            let m = a * e;
            let da = e * weights[k];
            let dt = m * 2.0 * times[k] * times[k] / (t * t * t) * weights[k];
            let r = (contrast[k] - m) * weights[k];
            j11 += da * da;
            j12 += da * dt;
            j22 += dt * dt;
            g1 += da * r;
            g2 += dt * r;
        }
        (j11, j12, j22, g1, g2)
    };
    // The undamped step: how far the quadratic model wants to move. Tiny
    // means we are sitting at a minimum.
    let gauss_newton_step = |a: f64, t: f64| -> Result<(f64, f64)> {
        let (j11, j12, j22, g1, g2) = normal(a, t);
        let det = j11 * j22 - j12 * j12;
        if det.abs() < 1e-300 {
            return Err(Error::FitDegenerate("singular normal equations".into()));
        }
        Ok(((g1 * j22 - g2 * j12) / det, (g2 * j11 - g1 * j12) / det))
    };
    let at_minimum = |a: f64, t: f64| -> Result<bool> {
        let (da, dt) = gauss_newton_step(a, t)?;
        Ok(da.abs() < 1e-6 * (1.0 + a.abs()) && dt.abs() < 1e-6 * (1.0 + t.abs()))
    };

    let mut lambda = 1e-3;
    let mut current = sse(amp, t2);
    let mut converged = false;
    let max_iterations = 200usize;
    let mut iterations = 0usize;
    while iterations < max_iterations {
        iterations += 1;
        let (j11, j12, j22, g1, g2) = normal(amp, t2);
        let (a11, a22) = (j11 * (1.0 + lambda), j22 * (1.0 + lambda));
        let det = a11 * a22 - j12 * j12;
        if det.abs() < 1e-300 {
            return Err(Error::FitDegenerate("singular normal equations".into()));
        }
        let step_a = (g1 * a22 - g2 * j12) / det;
        let step_t = (g2 * a11 - g1 * j12) / det;
        let (next_a, next_t) = (amp + step_a, t2 + step_t);
        let next_sse = if next_a > 0.0 && next_t > 0.0 { sse(next_a, next_t) } else { f64::INFINITY };
        if next_sse < current {
            let improvement = current - next_sse;
            amp = next_a;
            t2 = next_t;
            current = next_sse;
            lambda = (lambda * 0.25).max(1e-12);
            if improvement < 1e-13 * (1.0 + current)
                || (step_a.abs() < 1e-10 * (1.0 + amp.abs())
                    && step_t.abs() < 1e-10 * (1.0 + t2.abs()))
            {
                converged = true;
                break;
            }
        } else {
            lambda *= 8.0;
            if lambda > 1e12 {
                // No downhill step at any damping: either a numerical minimum
                // or a genuine stall.
                converged = at_minimum(amp, t2)?;
                if !converged {
                    return Err(Error::FitDiverged { iterations, residual: current });
                }
                break;
            }
        }
    }
    if !converged && !at_minimum(amp, t2)? {
        return Err(Error::FitDiverged { iterations, residual: current });
    }

    // Parameter covariance from the unscaled normal matrix, scaled by the
    // residual variance (keeps the estimate honest whether or not the input
    // sigmas were absolute).
    let (mut j11, mut j12, mut j22) = (0.0, 0.0, 0.0);
    let mut residuals = Vec::with_capacity(n);
    let mut ss_res = 0.0;
    let mut mean_c = 0.0;
    for k in 0..n {
        let e = (-times[k] * times[k] / (t2 * t2)).exp();
        let m = amp * e;
        let da = e * weights[k];
        let dt = m * 2.0 * times[k] * times[k] / (t2 * t2 * t2) * weights[k];
        j11 += da * da;
        j12 += da * dt;
        j22 += dt * dt;
        residuals.push(contrast[k] - m);
        ss_res += (contrast[k] - m) * (contrast[k] - m);
        mean_c += contrast[k] / n as f64;
    }
    let dof = (n - 2).max(1) as f64;
    let s2 = current / dof;
    let det = j11 * j22 - j12 * j12;
    if det.abs() < 1e-300 {
        return Err(Error::FitDegenerate("singular covariance".into()));
    }
    let var_a = s2 * j22 / det;
    let var_t = s2 * j11 / det;
    let ss_tot: f64 = contrast.iter().map(|&c| (c - mean_c) * (c - mean_c)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    Ok(GaussianFit {
        amplitude: amp,
        t2,
        amplitude_sigma: var_a.max(0.0).sqrt(),
        t2_sigma: var_t.max(0.0).sqrt(),
        r_squared,
        residuals,
    })
}
