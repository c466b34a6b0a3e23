//! Classical Monte Carlo dynamics of trapped atoms under a compiled drive.
//!
//! Atoms are non-interacting, so each atom's trajectory is integrated
//! independently (velocity Verlet, one force evaluation per step) through a
//! per-step table of array parameters precomputed from the drive waveforms
//! and the mirror response. That makes the ensemble embarrassingly parallel
//! and bit-reproducible regardless of thread count: every atom owns
//! dedicated RNG streams keyed by its index.
//!
//! Losses are tracked per atom with a cause:
//!
//! * **Background** — vacuum-limited lifetime, realized as a per-atom
//!   exponential deadline drawn at load time (identical in law to a per-step
//!   survival coin, but independent of step size).
//! * **Unbound** — total energy above zero *and* further than the capture
//!   radius from every site: the atom has actually left.
//! * **HandoverHalo** — at the end of a power crossfade, an atom handed from
//!   a more aberrated focus to a cleaner one leaves part of its wavefunction
//!   in the halo of the donor focus; modeled as a Bernoulli loss with
//!   probability proportional to the *excess* deformation of the donor.

use crate::constants::BOLTZMANN;
use crate::control::{DriveWaveforms, MirrorModel, SegmentKind, ShiftSequenceSpec};
use crate::error::{Error, Result};
use crate::optics::{ArrayState, MicrolensGeometry, TiltAberrationModel, TrapArraySnapshot};
use crate::potential::trap_frequencies;
use crate::rng::{standard_normal, stream, StreamPurpose};
use crate::species::AtomSpecies;
use rand::Rng;
use rayon::prelude::*;

/// Maximum stable step: `dt * radial_frequency` must stay below this.
pub const MAX_FREQUENCY_STEP: f64 = 0.15;

/// Why an atom left the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossCause {
    Background,
    Unbound,
    HandoverHalo,
}

/// Everything fixed about one simulated machine configuration.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub species: AtomSpecies,
    pub geometry: MicrolensGeometry,
    pub aberration: TiltAberrationModel,
    /// The steered array (holds the atoms at load time).
    pub moving_array: TrapArraySnapshot,
    /// The static partner array, if this machine has one.
    pub static_array: Option<TrapArraySnapshot>,
    /// Constant tilt applied to the static array's own illumination.
    pub static_tilt: f64,
    pub mirror: MirrorModel,
    /// Vacuum-limited 1/e lifetime (s); `f64::INFINITY` disables it.
    pub background_lifetime: f64,
    /// Bernoulli coefficient for handover halo loss:
    /// `p = coefficient * max(0, donor_deformation - receiver_deformation)`.
    pub halo_loss_coefficient: f64,
    /// Loss-classification radius around site centers (m).
    pub capture_radius: f64,
    /// Integrator step (s).
    pub dt: f64,
    /// Differential light shift of the qubit as a fraction of the local trap
    /// potential; drives phase accumulation.
    pub differential_shift_ratio: f64,
    pub seed: u64,
}

impl SimulationSetup {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.species.validate()?;
        self.mirror.validate()?;
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.capture_radius > 0.0) {
            return Err(Error::Config("capture radius must be positive".into()));
        }
        if !(self.halo_loss_coefficient >= 0.0) {
            return Err(Error::Config("halo loss coefficient must be >= 0".into()));
        }
        if !(self.background_lifetime > 0.0) {
            return Err(Error::Config("background lifetime must be positive".into()));
        }
        // Stability: resolve the fastest oscillation in the deepest trap.
        let deepest = self
            .moving_array
            .max_depth()
            .min(self.static_array.as_ref().map_or(0.0, |a| a.max_depth()));
        let (radial, _) = trap_frequencies(
            deepest,
            self.moving_array.waist,
            self.moving_array.wavelength,
            &self.species,
        )?;
        if self.dt * radial > MAX_FREQUENCY_STEP {
            return Err(Error::UnstableTimeStep(self.dt * radial));
        }
        Ok(())
    }

    fn array(&self, which: ArrayChoice) -> Result<&TrapArraySnapshot> {
        match which {
            ArrayChoice::Moving => Ok(&self.moving_array),
            ArrayChoice::Static => self
                .static_array
                .as_ref()
                .ok_or_else(|| Error::Config("this setup has no static array".into())),
        }
    }
}

/// Which of the two arrays an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayChoice {
    Moving,
    Static,
}

/// Structure-of-arrays atom ensemble.
#[derive(Debug, Clone)]
pub struct AtomEnsemble {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub vz: Vec<f64>,
    /// Loading site of each atom.
    pub home: Vec<(usize, usize)>,
    /// Loss cause, `None` while the atom is alive.
    pub cause: Vec<Option<LossCause>>,
    /// Time of loss (absolute, s); infinity while alive.
    pub loss_time: Vec<f64>,
    /// Pre-drawn background-loss deadline (absolute, s).
    deadline: Vec<f64>,
    /// Ensemble clock (s since load).
    pub time: f64,
}

impl AtomEnsemble {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_alive(&self, atom: usize) -> bool {
        self.cause[atom].is_none()
    }

    pub fn alive_count(&self) -> usize {
        self.cause.iter().filter(|c| c.is_none()).count()
    }

    pub fn loss_count(&self, cause: LossCause) -> usize {
        self.cause.iter().filter(|c| **c == Some(cause)).count()
    }

    /// Centroid x position over a chosen set of atoms (m).
    pub fn centroid_x<F: Fn(usize) -> bool>(&self, include: F) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..self.len() {
            if include(i) {
                sum += self.x[i];
                n += 1;
            }
        }
        sum / n.max(1) as f64
    }
}

/// Kinetic temperature from the velocity spread of alive atoms (K):
/// `m * var(v) / k_B`, averaged over the three axes, with per-axis mean
/// subtraction so coherent sloshing does not read as temperature.
pub fn estimate_temperature(species: &AtomSpecies, ensemble: &AtomEnsemble) -> Result<f64> {
    let alive: Vec<usize> = (0..ensemble.len()).filter(|&i| ensemble.is_alive(i)).collect();
    if alive.len() < 2 {
        return Err(Error::InsufficientAtoms(alive.len()));
    }
    let n = alive.len() as f64;
    let mut total = 0.0;
    for axis in [&ensemble.vx, &ensemble.vy, &ensemble.vz] {
        let mean: f64 = alive.iter().map(|&i| axis[i]).sum::<f64>() / n;
        let var: f64 = alive.iter().map(|&i| (axis[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        total += var;
    }
    Ok(species.mass * total / (3.0 * BOLTZMANN))
}

/// Sample a thermal ensemble into trap sites of one array.
///
/// Positions are Gaussian with the harmonic widths of each (tilt-degraded)
/// site, velocities Maxwell-Boltzmann, and draws whose total energy is not
/// bound (`E >= 0` in the loaded array's potential) are rejected — a
/// truncated-Boltzmann loading model. Fails with `UnboundSampling` when the
/// requested temperature is not small compared to the trap depth.
pub fn load_ensemble(
    setup: &SimulationSetup,
    array: ArrayChoice,
    sites: &[(usize, usize)],
    atoms_per_site: usize,
    temperature: f64,
    load_tilt: f64,
) -> Result<AtomEnsemble> {
    setup.validate()?;
    if sites.is_empty() || atoms_per_site == 0 {
        return Err(Error::Config("need at least one site and one atom per site".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::Config(format!(
            "load temperature must be positive, got {temperature}"
        )));
    }
    let snapshot = setup.array(array)?;
    let state = ArrayState::new(snapshot, load_tilt, 1.0, &setup.geometry, &setup.aberration)?;
    let (depth_factor, waist_factor) = setup.aberration.degradation(load_tilt)?;
    let shift_x = load_tilt * setup.geometry.displacement_per_tilt();
    let kt = BOLTZMANN * temperature;
    let sigma_v = (kt / setup.species.mass).sqrt();

    let n = sites.len() * atoms_per_site;
    let mut ensemble = AtomEnsemble {
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        vx: Vec::with_capacity(n),
        vy: Vec::with_capacity(n),
        vz: Vec::with_capacity(n),
        home: Vec::with_capacity(n),
        cause: vec![None; n],
        loss_time: vec![f64::INFINITY; n],
        deadline: Vec::with_capacity(n),
        time: 0.0,
    };

    let mut atom = 0u64;
    for &(row, col) in sites {
        let (sx, sy) = snapshot.site_position(row, col)?;
        let depth = snapshot.depth_at(row, col)? * depth_factor;
        if kt >= depth.abs() {
            return Err(Error::UnboundSampling {
                temperature,
                depth,
            });
        }
        let (radial, axial) = trap_frequencies(
            depth,
            snapshot.waist * waist_factor,
            snapshot.wavelength,
            &setup.species,
        )?;
        let sigma_x = sigma_v / radial;
        let sigma_z = sigma_v / axial;
        let center_x = sx + shift_x;

        for _ in 0..atoms_per_site {
            let mut rng = stream(setup.seed, StreamPurpose::ThermalSampling, atom);
            let mut accepted = false;
            for _ in 0..10_000 {
                let x = center_x + sigma_x * standard_normal(&mut rng);
                let y = sy + sigma_x * standard_normal(&mut rng);
                let z = sigma_z * standard_normal(&mut rng);
                let vx = sigma_v * standard_normal(&mut rng);
                let vy = sigma_v * standard_normal(&mut rng);
                let vz = sigma_v * standard_normal(&mut rng);
                let kinetic = 0.5 * setup.species.mass * (vx * vx + vy * vy + vz * vz);
                if kinetic + state.potential(x, y, z) < 0.0 {
                    ensemble.x.push(x);
                    ensemble.y.push(y);
                    ensemble.z.push(z);
                    ensemble.vx.push(vx);
                    ensemble.vy.push(vy);
                    ensemble.vz.push(vz);
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                return Err(Error::UnboundSampling {
                    temperature,
                    depth,
                });
            }
            ensemble.home.push((row, col));
            let deadline = if setup.background_lifetime.is_finite() {
                let mut loss_rng = stream(setup.seed, StreamPurpose::BackgroundLoss, atom);
                let u: f64 = loss_rng.gen();
                -setup.background_lifetime * (-u).ln_1p()
            } else {
                f64::INFINITY
            };
            ensemble.deadline.push(deadline);
            atom += 1;
        }
    }
    Ok(ensemble)
}

/// What to record while propagating.
#[derive(Debug, Clone, Copy)]
pub struct PropagationRequest<'a> {
    pub drive: &'a DriveWaveforms,
    /// Times (relative to the start of this call) at which to record phase,
    /// energy, and optionally position, snapped to the integrator grid.
    pub checkpoint_times: &'a [f64],
    pub record_positions: bool,
}

/// Per-checkpoint ensemble snapshot (recorded when requested).
#[derive(Debug, Clone)]
pub struct PositionFrame {
    /// Time relative to the propagation start (s).
    pub time: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub alive: Vec<bool>,
}

/// Results of one propagation call.
#[derive(Debug, Clone)]
pub struct PropagationOutput {
    /// Snapped checkpoint times, relative to the propagation start (s).
    pub checkpoint_times: Vec<f64>,
    /// Accumulated differential phase per atom at each checkpoint (rad),
    /// laid out `[atom * n_checkpoints + j]`. Frozen at loss.
    phases: Vec<f64>,
    /// Total mechanical energy per atom at each checkpoint (J), same layout.
    energies: Vec<f64>,
    pub frames: Vec<PositionFrame>,
    n_checkpoints: usize,
}

impl PropagationOutput {
    pub fn phase(&self, atom: usize, checkpoint: usize) -> f64 {
        self.phases[atom * self.n_checkpoints + checkpoint]
    }

    pub fn energy(&self, atom: usize, checkpoint: usize) -> f64 {
        self.energies[atom * self.n_checkpoints + checkpoint]
    }

    /// Ensemble mean energy at a checkpoint over atoms alive at the end.
    pub fn mean_energy(&self, ensemble: &AtomEnsemble, checkpoint: usize) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for atom in 0..ensemble.len() {
            if ensemble.is_alive(atom) {
                sum += self.energy(atom, checkpoint);
                n += 1;
            }
        }
        sum / n.max(1) as f64
    }
}

/// Per-step potential parameters of one array, precomputed from the drive.
#[derive(Debug, Clone, Copy)]
struct StepParams {
    shift_x: f64,
    depth_scale: f64,
    waist_sq: f64,
    inv_zr_sq: f64,
}

impl StepParams {
    fn from_state(state: &ArrayState<'_>) -> Self {
        let (shift_x, depth_scale, waist_sq, inv_zr_sq) = state.raw();
        StepParams {
            shift_x,
            depth_scale,
            waist_sq,
            inv_zr_sq,
        }
    }
}

/// One handover completion event.
#[derive(Debug, Clone, Copy)]
struct HaloEvent {
    step: usize,
    probability: f64,
}

/// Propagate the ensemble through the drive. The ensemble clock advances by
/// the drive duration; checkpoint times are relative to this call.
pub fn propagate(
    setup: &SimulationSetup,
    ensemble: &mut AtomEnsemble,
    request: &PropagationRequest<'_>,
) -> Result<PropagationOutput> {
    setup.validate()?;
    let drive = request.drive;
    let dt = setup.dt;
    let duration = drive.total_duration();
    let n_steps = (duration / dt).round() as usize;

    // Snap checkpoints to the step grid.
    let mut checkpoint_steps = Vec::with_capacity(request.checkpoint_times.len());
    for &t in request.checkpoint_times {
        let step = (t / dt).round() as i64;
        if step < 0 || step as usize > n_steps {
            return Err(Error::SequenceTooShort {
                needed: t,
                available: duration,
            });
        }
        checkpoint_steps.push(step as usize);
    }
    let snapped: Vec<f64> = checkpoint_steps.iter().map(|&s| s as f64 * dt).collect();
    if checkpoint_steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("checkpoint times must be sorted".into()));
    }

    // Mirror response to the commanded tilt, then per-integrator-step
    // parameter tables for both arrays.
    let tilt_actual = setup.mirror.track(drive.dt, &drive.tilt_command);
    let interp = |channel: &[f64], t: f64| -> f64 {
        let u = (t / drive.dt).clamp(0.0, (channel.len() - 1) as f64);
        let k = (u.floor() as usize).min(channel.len() - 2).max(0);
        let frac = u - k as f64;
        if channel.len() == 1 {
            channel[0]
        } else {
            channel[k] * (1.0 - frac) + channel[k + 1] * frac
        }
    };

    let mut moving_params = Vec::with_capacity(n_steps + 1);
    let mut static_params = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let tilt = interp(&tilt_actual, t);
        let p_mov = drive.moving_power_at(t);
        let p_sta = drive.static_power_at(t);
        let state = ArrayState::new(
            &setup.moving_array,
            tilt,
            p_mov,
            &setup.geometry,
            &setup.aberration,
        )?;
        moving_params.push(StepParams::from_state(&state));
        if let Some(static_array) = &setup.static_array {
            let state = ArrayState::new(
                static_array,
                setup.static_tilt,
                p_sta,
                &setup.geometry,
                &setup.aberration,
            )?;
            static_params.push(StepParams::from_state(&state));
        }
    }

    // Handover completion events.
    let mut halo_events = Vec::new();
    for seg in &drive.segments {
        let donor_receiver = match seg.kind {
            SegmentKind::HandoverToStatic => Some(true),
            SegmentKind::HandoverToMoving => Some(false),
            _ => None,
        };
        let Some(moving_is_donor) = donor_receiver else {
            continue;
        };
        if setup.static_array.is_none() {
            continue;
        }
        let t_end = seg.start + seg.duration;
        let step = (t_end / dt).round() as usize;
        let tilt = interp(&tilt_actual, t_end);
        let (moving_df, _) = setup.aberration.degradation(tilt)?;
        let (static_df, _) = setup.aberration.degradation(setup.static_tilt)?;
        let (donor_def, receiver_def) = if moving_is_donor {
            (1.0 - moving_df, 1.0 - static_df)
        } else {
            (1.0 - static_df, 1.0 - moving_df)
        };
        let probability =
            (setup.halo_loss_coefficient * (donor_def - receiver_def).max(0.0)).clamp(0.0, 1.0);
        halo_events.push(HaloEvent { step: step.min(n_steps), probability });
    }

    // Integrate all atoms independently.
    let n_cp = checkpoint_steps.len();
    let start_time = ensemble.time;
    let worker_input = WorkerInput {
        setup,
        ensemble: &*ensemble,
        moving: &setup.moving_array,
        static_array: setup.static_array.as_ref(),
        moving_params: &moving_params,
        static_params: &static_params,
        checkpoint_steps: &checkpoint_steps,
        halo_events: &halo_events,
        n_steps,
        start_time,
        record_positions: request.record_positions,
    };
    let results: Result<Vec<AtomResult>> = (0..ensemble.len())
        .into_par_iter()
        .map(|atom| integrate_atom(atom, &worker_input))
        .collect();
    let results = results?;

    // Scatter results back (serial, index-ordered: deterministic).
    let mut output = PropagationOutput {
        checkpoint_times: snapped.clone(),
        phases: vec![0.0; n_cp * ensemble.len()],
        energies: vec![0.0; n_cp * ensemble.len()],
        frames: Vec::new(),
        n_checkpoints: n_cp,
    };
    if request.record_positions {
        for (j, &t) in snapped.iter().enumerate() {
            output.frames.push(PositionFrame {
                time: t,
                x: results.iter().map(|r| r.frames[j].0).collect(),
                y: results.iter().map(|r| r.frames[j].1).collect(),
                alive: results.iter().map(|r| r.frames[j].2).collect(),
            });
        }
    }
    for (atom, r) in results.iter().enumerate() {
        ensemble.x[atom] = r.x;
        ensemble.y[atom] = r.y;
        ensemble.z[atom] = r.z;
        ensemble.vx[atom] = r.vx;
        ensemble.vy[atom] = r.vy;
        ensemble.vz[atom] = r.vz;
        if let Some((cause, time)) = r.lost {
            if ensemble.cause[atom].is_none() {
                ensemble.cause[atom] = Some(cause);
                ensemble.loss_time[atom] = time;
            }
        }
        output.phases[atom * n_cp..(atom + 1) * n_cp].copy_from_slice(&r.phases);
        output.energies[atom * n_cp..(atom + 1) * n_cp].copy_from_slice(&r.energies);
    }
    ensemble.time += n_steps as f64 * dt;
    Ok(output)
}

struct WorkerInput<'a> {
    setup: &'a SimulationSetup,
    ensemble: &'a AtomEnsemble,
    moving: &'a TrapArraySnapshot,
    static_array: Option<&'a TrapArraySnapshot>,
    moving_params: &'a [StepParams],
    static_params: &'a [StepParams],
    checkpoint_steps: &'a [usize],
    halo_events: &'a [HaloEvent],
    n_steps: usize,
    start_time: f64,
    record_positions: bool,
}

struct AtomResult {
    x: f64,
    y: f64,
    z: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    lost: Option<(LossCause, f64)>,
    phases: Vec<f64>,
    energies: Vec<f64>,
    frames: Vec<(f64, f64, bool)>,
}

/// Potential and gradient of one array evaluated with explicit per-step
/// parameters (the hot-path twin of [`ArrayState::potential_and_gradient`]).
#[inline]
fn eval_array(
    snapshot: &TrapArraySnapshot,
    p: &StepParams,
    x: f64,
    y: f64,
    z: f64,
    grad: &mut [f64; 3],
) -> f64 {
    if p.depth_scale == 0.0 {
        return 0.0;
    }
    let state = ArrayState::from_raw(snapshot, p.shift_x, p.depth_scale, p.waist_sq, p.inv_zr_sq);
    let (u, du) = state.potential_and_gradient(x, y, z);
    grad[0] += du[0];
    grad[1] += du[1];
    grad[2] += du[2];
    u
}

fn integrate_atom(atom: usize, input: &WorkerInput<'_>) -> Result<AtomResult> {
    let setup = input.setup;
    let ens = input.ensemble;
    let dt = setup.dt;
    let mass = setup.species.mass;
    let eta = setup.differential_shift_ratio;
    let hbar = crate::constants::REDUCED_PLANCK;
    let capture_sq = setup.capture_radius * setup.capture_radius;

    let mut x = ens.x[atom];
    let mut y = ens.y[atom];
    let mut z = ens.z[atom];
    let mut vx = ens.vx[atom];
    let mut vy = ens.vy[atom];
    let mut vz = ens.vz[atom];
    let mut lost: Option<(LossCause, f64)> = ens.cause[atom].map(|c| (c, ens.loss_time[atom]));
    let deadline = ens.deadline[atom];

    let mut phases = Vec::with_capacity(input.checkpoint_steps.len());
    let mut energies = Vec::with_capacity(input.checkpoint_steps.len());
    let mut frames = Vec::new();

    let eval = |k: usize, x: f64, y: f64, z: f64, grad: &mut [f64; 3]| -> f64 {
        *grad = [0.0; 3];
        let mut u = eval_array(input.moving, &input.moving_params[k], x, y, z, grad);
        if let Some(sa) = input.static_array {
            u += eval_array(sa, &input.static_params[k], x, y, z, grad);
        }
        u
    };

    let mut grad = [0.0f64; 3];
    let mut u = eval(0, x, y, z, &mut grad);
    let mut ax = -grad[0] / mass;
    let mut ay = -grad[1] / mass;
    let mut az = -grad[2] / mass;
    let mut phase = 0.0f64;
    let mut cp_idx = 0usize;
    let mut halo_idx = 0usize;

    for k in 0..=input.n_steps {
        let t_abs = input.start_time + k as f64 * dt;

        // Background deadline.
        if lost.is_none() && t_abs >= deadline {
            lost = Some((LossCause::Background, deadline));
        }
        // Handover completion events at this boundary.
        while halo_idx < input.halo_events.len() && input.halo_events[halo_idx].step == k {
            let ev = input.halo_events[halo_idx];
            halo_idx += 1;
            if lost.is_none() && ev.probability > 0.0 {
                let mut rng = stream(
                    setup.seed,
                    StreamPurpose::HandoverCapture,
                    (atom as u64) * 1024 + halo_idx as u64,
                );
                if rng.gen::<f64>() < ev.probability {
                    lost = Some((LossCause::HandoverHalo, t_abs));
                }
            }
        }
        // Checkpoints at this boundary.
        while cp_idx < input.checkpoint_steps.len() && input.checkpoint_steps[cp_idx] == k {
            cp_idx += 1;
            phases.push(phase);
            let kinetic = 0.5 * mass * (vx * vx + vy * vy + vz * vz);
            energies.push(kinetic + u);
            if input.record_positions {
                frames.push((x, y, lost.is_none()));
            }
        }
        if k == input.n_steps {
            break;
        }

        if lost.is_some() {
            continue; // frozen
        }

        // Velocity Verlet with one new force evaluation per step.
        let half = 0.5 * dt * dt;
        x += vx * dt + ax * half;
        y += vy * dt + ay * half;
        z += vz * dt + az * half;
        let u_prev = u;
        u = eval(k + 1, x, y, z, &mut grad);
        let ax1 = -grad[0] / mass;
        let ay1 = -grad[1] / mass;
        let az1 = -grad[2] / mass;
        if !(ax1.is_finite() && ay1.is_finite() && az1.is_finite()) {
            return Err(Error::NonFiniteForce {
                atom,
                time: t_abs + dt,
            });
        }
        vx += 0.5 * (ax + ax1) * dt;
        vy += 0.5 * (ay + ay1) * dt;
        vz += 0.5 * (az + az1) * dt;
        ax = ax1;
        ay = ay1;
        az = az1;

        // Differential phase, trapezoid in |U|.
        phase += eta * 0.5 * (u_prev.abs() + u.abs()) * dt / hbar;

        // Unbound test: positive energy and outside every capture region.
        let kinetic = 0.5 * mass * (vx * vx + vy * vy + vz * vz);
        if kinetic + u > 0.0 {
            let state = ArrayState::from_raw(
                input.moving,
                input.moving_params[k + 1].shift_x,
                1.0,
                input.moving_params[k + 1].waist_sq,
                input.moving_params[k + 1].inv_zr_sq,
            );
            let mut dist_sq = state.nearest_site_distance_sq(x, y, z);
            if let Some(sa) = input.static_array {
                let state = ArrayState::from_raw(
                    sa,
                    input.static_params[k + 1].shift_x,
                    1.0,
                    input.static_params[k + 1].waist_sq,
                    input.static_params[k + 1].inv_zr_sq,
                );
                dist_sq = dist_sq.min(state.nearest_site_distance_sq(x, y, z));
            }
            if dist_sq > capture_sq {
                lost = Some((LossCause::Unbound, t_abs + dt));
            }
        }
    }

    Ok(AtomResult {
        x,
        y,
        z,
        vx,
        vy,
        vz,
        lost,
        phases,
        energies,
        frames,
    })
}

// ---------------------------------------------------------------------------
// Orchestrated runs
// ---------------------------------------------------------------------------

/// How the two arrays are arranged relative to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegisterArrangement {
    /// Static array interleaved at +pitch/2, illuminated on axis: its foci
    /// are pristine, so handing atoms *to* it from the tilted moving array
    /// spills the donor's aberration halo (asymmetric loss).
    Asymmetric,
    /// Static array offset by a full pitch but illuminated at the constant
    /// load tilt, so both arrays are equally aberrated at their handover
    /// points and neither direction spills.
    Symmetric,
}

impl RegisterArrangement {
    /// (static-array rest x-offset in pitches, static illumination tilt in
    /// half-pitch tilts).
    pub fn static_layout(self) -> (f64, f64) {
        match self {
            RegisterArrangement::Asymmetric => (0.5, 0.0),
            RegisterArrangement::Symmetric => (1.0, -1.0),
        }
    }
}

/// One row of a transport-duration scan.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TransportScanRow {
    /// Sweep duration (s).
    pub duration: f64,
    /// Temperature after load and equilibration, before the sweep (K).
    pub temperature_before: f64,
    /// Temperature after the sweep and settling (K).
    pub temperature_after: f64,
    /// `temperature_after - temperature_before` (K).
    pub heating: f64,
    /// Alive fraction at the end.
    pub survival: f64,
    pub unbound_losses: usize,
    pub background_losses: usize,
}

/// Sweep the moving array by one pitch over each duration and measure
/// heating and survival. All durations reuse the same initial ensemble
/// (common random numbers), so differences between rows are not sampling
/// noise.
pub fn run_transport_scan(
    setup: &SimulationSetup,
    site: (usize, usize),
    atoms: usize,
    temperature: f64,
    durations: &[f64],
    ramp: crate::control::RampShape,
) -> Result<Vec<TransportScanRow>> {
    let half = setup.geometry.half_pitch_tilt();
    // The harmonically sampled ensemble relaxes in the true anharmonic
    // potential over the first few ms, drifting the kinetic-temperature
    // estimate by a few tenths of a uK. Equilibrate past that transient so
    // the before/after comparison isolates transport heating.
    let equilibration = 10e-3;
    // Long enough for servo ringing to die out and for trap anharmonicity to
    // mix any coherent post-sweep sloshing into the velocity spread that
    // estimate_temperature sees.
    let settle = 3e-3;
    let mut rows = Vec::with_capacity(durations.len());
    for &duration in durations {
        if !(duration > 0.0) {
            return Err(Error::Config(format!(
                "transport duration must be positive, got {duration}"
            )));
        }
        let mut ensemble =
            load_ensemble(setup, ArrayChoice::Moving, &[site], atoms, temperature, -half)?;

        let mut b = crate::control::WaveformBuilder::new(
            crate::control::WAVEFORM_SAMPLE_RATE,
            -half,
            1.0,
            0.0,
        );
        b.hold(SegmentKind::Load, equilibration);
        let pre = b.finish();
        propagate(
            setup,
            &mut ensemble,
            &PropagationRequest {
                drive: &pre,
                checkpoint_times: &[],
                record_positions: false,
            },
        )?;
        let temperature_before = estimate_temperature(&setup.species, &ensemble)?;

        let mut b = crate::control::WaveformBuilder::new(
            crate::control::WAVEFORM_SAMPLE_RATE,
            -half,
            1.0,
            0.0,
        );
        b.move_tilt(SegmentKind::Transport, duration, half, ramp);
        b.hold(SegmentKind::Hold, settle);
        let mut drive = b.finish();
        drive.apply_pointing_noise(
            setup.mirror.angle_noise_sigma,
            &mut stream(setup.seed, StreamPurpose::MirrorNoise, 0),
        );
        propagate(
            setup,
            &mut ensemble,
            &PropagationRequest {
                drive: &drive,
                checkpoint_times: &[],
                record_positions: false,
            },
        )?;
        let temperature_after = estimate_temperature(&setup.species, &ensemble)?;
        rows.push(TransportScanRow {
            duration,
            temperature_before,
            temperature_after,
            heating: temperature_after - temperature_before,
            survival: ensemble.alive_count() as f64 / ensemble.len() as f64,
            unbound_losses: ensemble.loss_count(LossCause::Unbound),
            background_losses: ensemble.loss_count(LossCause::Background),
        });
    }
    Ok(rows)
}

/// Direction of a single handover measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverDirection {
    MovingToStatic,
    StaticToMoving,
}

/// Outcome of a single-handover run.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct HandoverOutcome {
    pub direction: HandoverDirection,
    /// Atoms alive just before the crossfade completed.
    pub exposed: usize,
    pub halo_losses: usize,
    pub background_losses: usize,
    pub unbound_losses: usize,
    /// Halo loss fraction among exposed atoms.
    pub halo_fraction: f64,
    /// Bernoulli probability the aberration model predicts for this tilt.
    pub expected_probability: f64,
}

/// Crossfade the atoms from one array to the other at a fixed tilt and count
/// what survives.
pub fn run_handover(
    setup: &SimulationSetup,
    direction: HandoverDirection,
    tilt: f64,
    site: (usize, usize),
    atoms: usize,
    temperature: f64,
    crossfade_duration: f64,
) -> Result<HandoverOutcome> {
    let (donor, powers_before, powers_after) = match direction {
        HandoverDirection::MovingToStatic => (ArrayChoice::Moving, (1.0, 0.0), (0.0, 1.0)),
        HandoverDirection::StaticToMoving => (ArrayChoice::Static, (0.0, 1.0), (1.0, 0.0)),
    };
    let load_tilt = match donor {
        ArrayChoice::Moving => tilt,
        ArrayChoice::Static => setup.static_tilt,
    };
    let mut ensemble =
        load_ensemble(setup, donor, &[site], atoms, temperature, load_tilt)?;

    let mut b = crate::control::WaveformBuilder::new(
        crate::control::WAVEFORM_SAMPLE_RATE,
        tilt,
        powers_before.0,
        powers_before.1,
    );
    b.hold(SegmentKind::Hold, 1e-3);
    let kind = match direction {
        HandoverDirection::MovingToStatic => SegmentKind::HandoverToStatic,
        HandoverDirection::StaticToMoving => SegmentKind::HandoverToMoving,
    };
    b.crossfade(kind, crossfade_duration, powers_after.0, powers_after.1);
    b.hold(SegmentKind::Hold, 1e-3);
    let drive = b.finish();

    let before = ensemble.alive_count();
    propagate(
        setup,
        &mut ensemble,
        &PropagationRequest {
            drive: &drive,
            checkpoint_times: &[],
            record_positions: false,
        },
    )?;

    let (moving_df, _) = setup.aberration.degradation(tilt)?;
    let (static_df, _) = setup.aberration.degradation(setup.static_tilt)?;
    let (donor_def, receiver_def) = match direction {
        HandoverDirection::MovingToStatic => (1.0 - moving_df, 1.0 - static_df),
        HandoverDirection::StaticToMoving => (1.0 - static_df, 1.0 - moving_df),
    };
    let expected =
        (setup.halo_loss_coefficient * (donor_def - receiver_def).max(0.0)).clamp(0.0, 1.0);
    let halo = ensemble.loss_count(LossCause::HandoverHalo);
    Ok(HandoverOutcome {
        direction,
        exposed: before,
        halo_losses: halo,
        background_losses: ensemble.loss_count(LossCause::Background),
        unbound_losses: ensemble.loss_count(LossCause::Unbound),
        halo_fraction: halo as f64 / before.max(1) as f64,
        expected_probability: expected,
    })
}

/// Outcome of a multi-cycle register shift.
#[derive(Debug, Clone)]
pub struct RegisterOutcome {
    pub cycles: usize,
    /// Centroid x of the finally-alive atoms at load (m).
    pub centroid_initial: f64,
    /// Centroid x of the same atoms at the end (m).
    pub centroid_final: f64,
    /// `centroid_final - centroid_initial` (m).
    pub centroid_shift: f64,
    /// `cycles * trap_pitch` (m).
    pub expected_shift: f64,
    pub loaded: usize,
    pub alive: usize,
    pub background_losses: usize,
    pub unbound_losses: usize,
    pub halo_losses: usize,
    pub temperature_initial: f64,
    pub temperature_final: f64,
    /// Position frames at load and after each cycle.
    pub frames: Vec<PositionFrame>,
}

/// Run a full shift-register sequence: load a block of sites, then shift the
/// whole pattern by one pitch per cycle.
pub fn run_register(
    setup: &SimulationSetup,
    spec: &ShiftSequenceSpec,
    sites: &[(usize, usize)],
    atoms_per_site: usize,
    temperature: f64,
) -> Result<RegisterOutcome> {
    let half = setup.geometry.half_pitch_tilt();
    let max_col = sites.iter().map(|&(_, c)| c).max().unwrap_or(0);
    let capacity = setup.moving_array.cols.saturating_sub(1).saturating_sub(max_col);
    let mut drive = crate::control::compile_cycle(spec, capacity, half)?;
    drive.apply_pointing_noise(
        setup.mirror.angle_noise_sigma,
        &mut stream(setup.seed, StreamPurpose::MirrorNoise, 0),
    );

    let mut ensemble =
        load_ensemble(setup, ArrayChoice::Moving, sites, atoms_per_site, temperature, -half)?;
    let temperature_initial = estimate_temperature(&setup.species, &ensemble)?;

    let cycle = spec.cycle_duration();
    let checkpoints: Vec<f64> = (0..=spec.cycles)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                spec.load_duration + k as f64 * (cycle - spec.load_duration)
            }
        })
        .collect();
    let initial_x = ensemble.x.clone();
    let output = propagate(
        setup,
        &mut ensemble,
        &PropagationRequest {
            drive: &drive,
            checkpoint_times: &checkpoints,
            record_positions: true,
        },
    )?;

    let alive = |i: usize| ensemble.is_alive(i);
    let centroid_final = ensemble.centroid_x(alive);
    let centroid_initial = {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..ensemble.len() {
            if ensemble.is_alive(i) {
                sum += initial_x[i];
                n += 1;
            }
        }
        sum / n.max(1) as f64
    };
    Ok(RegisterOutcome {
        cycles: spec.cycles,
        centroid_initial,
        centroid_final,
        centroid_shift: centroid_final - centroid_initial,
        expected_shift: spec.cycles as f64 * setup.geometry.trap_pitch(),
        loaded: ensemble.len(),
        alive: ensemble.alive_count(),
        background_losses: ensemble.loss_count(LossCause::Background),
        unbound_losses: ensemble.loss_count(LossCause::Unbound),
        halo_losses: ensemble.loss_count(LossCause::HandoverHalo),
        temperature_initial,
        temperature_final: estimate_temperature(&setup.species, &ensemble)?,
        frames: output.frames,
    })
}

/// Hold the loaded array still for `duration` and return the propagation
/// output (used for lifetime and integrator-quality measurements).
pub fn run_hold(
    setup: &SimulationSetup,
    site: (usize, usize),
    atoms: usize,
    temperature: f64,
    tilt: f64,
    duration: f64,
    checkpoint_times: &[f64],
) -> Result<(AtomEnsemble, PropagationOutput)> {
    let mut ensemble =
        load_ensemble(setup, ArrayChoice::Moving, &[site], atoms, temperature, tilt)?;
    let mut b =
        crate::control::WaveformBuilder::new(crate::control::WAVEFORM_SAMPLE_RATE, tilt, 1.0, 0.0);
    b.hold(SegmentKind::Hold, duration);
    let drive = b.finish();
    let output = propagate(
        setup,
        &mut ensemble,
        &PropagationRequest {
            drive: &drive,
            checkpoint_times,
            record_positions: true,
        },
    )?;
    Ok((ensemble, output))
}

/// Total mechanical energy (J) of every atom in a frozen drive state:
/// kinetic plus the summed potential of both arrays at the given tilt and
/// beam powers. Negative for bound atoms.
pub fn ensemble_energies(
    setup: &SimulationSetup,
    ensemble: &AtomEnsemble,
    tilt: f64,
    moving_power: f64,
    static_power: f64,
) -> Result<Vec<f64>> {
    let moving = ArrayState::new(
        &setup.moving_array,
        tilt,
        moving_power,
        &setup.geometry,
        &setup.aberration,
    )?;
    let static_state = match &setup.static_array {
        Some(array) if static_power > 0.0 => Some(ArrayState::new(
            array,
            setup.static_tilt,
            static_power,
            &setup.geometry,
            &setup.aberration,
        )?),
        _ => None,
    };
    let mut energies = Vec::with_capacity(ensemble.len());
    for i in 0..ensemble.len() {
        let (x, y, z) = (ensemble.x[i], ensemble.y[i], ensemble.z[i]);
        let kinetic = 0.5
            * setup.species.mass
            * (ensemble.vx[i] * ensemble.vx[i]
                + ensemble.vy[i] * ensemble.vy[i]
                + ensemble.vz[i] * ensemble.vz[i]);
        let mut u = moving.potential(x, y, z);
        if let Some(s) = &static_state {
            u += s.potential(x, y, z);
        }
        energies.push(kinetic + u);
    }
    Ok(energies)
}
