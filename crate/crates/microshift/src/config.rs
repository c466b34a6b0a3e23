//! Experiment configuration: versioned, hand-editable TOML.
//!
//! A config file fully describes one experiment: the atom species, the trap
//! optics, the steering-control parameters, the Monte Carlo ensemble, and the
//! experiment-specific block matching its `experiment` kind. Field names
//! carry their units as suffixes (`_nm`, `_um`, `_ms`, `_uk`, ...); values
//! convert to SI at the boundary into the library types. Unknown keys are
//! rejected so typos fail loudly instead of silently running defaults.

use crate::coherence::{CoherenceProtocol, DephasingModel, CALIBRATED_HEATING_RATE};
use crate::control::{MirrorModel, RampShape, ShiftSequenceSpec, WAVEFORM_SAMPLE_RATE};
use crate::dynamics::{RegisterArrangement, SimulationSetup};
use crate::error::{Error, Result};
use crate::optics::{IlluminationSpec, MicrolensGeometry, TiltAberrationModel, TrapArraySnapshot};
use crate::species::AtomSpecies;
use serde::Deserialize;

/// Schema version this build reads and writes.
pub const CONFIG_VERSION: u32 = 1;

fn deserialize_config(text: &str) -> Result<ExperimentConfig> {
    Ok(toml::from_str(text)?)
}

/// Top-level experiment description.
#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema version; must equal [`CONFIG_VERSION`].
    pub version: u32,
    /// Short name used for the output bundle.
    pub label: String,
    pub experiment: ExperimentKind,
    pub species: SpeciesConfig,
    pub optics: OpticsConfig,
    #[serde(default)]
    pub control: ControlConfig,
    pub dynamics: DynamicsConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence: Option<CoherenceConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport_scan: Option<TransportScanConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub register_shift: Option<RegisterShiftConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub handover: Option<HandoverConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<LifetimeConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Heating and survival versus sweep duration.
    TransportScan,
    /// Multi-cycle shift sequence with occupancy images.
    RegisterShift,
    /// Single-handover retention, both directions.
    Handover,
    /// Spin-echo contrast curves per protocol, with Gaussian fits.
    EchoScan,
    /// Ramsey contrast versus free-evolution window.
    Ramsey,
    /// Survival versus hold duration in a static trap.
    Lifetime,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TransportScan => "transport_scan",
            ExperimentKind::RegisterShift => "register_shift",
            ExperimentKind::Handover => "handover",
            ExperimentKind::EchoScan => "echo_scan",
            ExperimentKind::Ramsey => "ramsey",
            ExperimentKind::Lifetime => "lifetime",
        }
    }
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    /// Only `"rb85"` is bundled.
    pub name: String,
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsConfig {
    pub rows: usize,
    pub cols: usize,
    pub wavelength_nm: f64,
    /// Focal spot radius of each trap (m, 1/e^2).
    pub trap_waist_um: f64,
    /// Total illumination power before the lens array (mW).
    pub illumination_power_mw: f64,
    /// Illumination beam radius at the lens array (um, 1/e^2).
    pub illumination_waist_um: f64,
    /// Optical-path transmission applied to every trap.
    pub transmission: f64,
    pub arrangement: ArrangementConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrangementConfig {
    /// Steered array only.
    Single,
    /// Partner array offset by half a trap pitch.
    Asymmetric,
    /// Partner array offset by a full pitch, steered array swinging
    /// symmetrically about its rest position.
    Symmetric,
}

impl ArrangementConfig {
    pub fn register(self) -> Option<RegisterArrangement> {
        match self {
            ArrangementConfig::Single => None,
            ArrangementConfig::Asymmetric => Some(RegisterArrangement::Asymmetric),
            ArrangementConfig::Symmetric => Some(RegisterArrangement::Symmetric),
        }
    }
}

#[derive(Debug, Clone, Deserialize, serde::Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub mirror: MirrorConfig,
    #[serde(default)]
    pub sequence: SequenceConfig,
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorConfig {
    /// An ideal mirror tracks commands exactly and adds no pointing noise.
    #[serde(default)]
    pub ideal: bool,
    #[serde(default = "default_mirror_frequency_khz")]
    pub natural_frequency_khz: f64,
    #[serde(default = "default_mirror_damping")]
    pub damping_ratio: f64,
    #[serde(default = "default_mirror_noise_urad")]
    pub angle_noise_urad: f64,
}

fn default_mirror_frequency_khz() -> f64 {
    15.0
}
fn default_mirror_damping() -> f64 {
    0.03
}
fn default_mirror_noise_urad() -> f64 {
    22.0
}

impl Default for MirrorConfig {
    fn default() -> Self {
        MirrorConfig {
            ideal: false,
            natural_frequency_khz: default_mirror_frequency_khz(),
            damping_ratio: default_mirror_damping(),
            angle_noise_urad: default_mirror_noise_urad(),
        }
    }
}

impl MirrorConfig {
    pub fn model(&self) -> MirrorModel {
        if self.ideal {
            MirrorModel::ideal()
        } else {
            MirrorModel {
                natural_frequency: 2.0 * std::f64::consts::PI * self.natural_frequency_khz * 1e3,
                damping_ratio: self.damping_ratio,
                angle_noise_sigma: self.angle_noise_urad * 1e-6,
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default)]
    pub load_hold_ms: f64,
    #[serde(default = "default_transport_ms")]
    pub transport_ms: f64,
    #[serde(default = "default_handover_ms")]
    pub handover_ms: f64,
    #[serde(default = "default_return_ms")]
    pub return_ms: f64,
    #[serde(default = "default_ramp")]
    pub ramp: RampShape,
}

fn default_cycles() -> usize {
    1
}
fn default_transport_ms() -> f64 {
    2.0
}
fn default_handover_ms() -> f64 {
    5.0
}
fn default_return_ms() -> f64 {
    5.0
}
fn default_ramp() -> RampShape {
    RampShape::MinimumJerk
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            cycles: default_cycles(),
            load_hold_ms: 0.0,
            transport_ms: default_transport_ms(),
            handover_ms: default_handover_ms(),
            return_ms: default_return_ms(),
            ramp: default_ramp(),
        }
    }
}

impl SequenceConfig {
    pub fn spec(&self) -> ShiftSequenceSpec {
        ShiftSequenceSpec {
            cycles: self.cycles,
            load_duration: self.load_hold_ms * 1e-3,
            transport_duration: self.transport_ms * 1e-3,
            handover_duration: self.handover_ms * 1e-3,
            return_duration: self.return_ms * 1e-3,
            ramp: self.ramp,
            sample_rate: WAVEFORM_SAMPLE_RATE,
        }
    }
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub atoms_per_site: usize,
    pub temperature_uk: f64,
    pub seed: u64,
    #[serde(default = "default_dt_us")]
    pub dt_us: f64,
    /// Vacuum-limited 1/e lifetime (s); infinite when omitted.
    #[serde(default = "default_background_lifetime")]
    pub background_lifetime_s: f64,
    #[serde(default = "default_halo_coefficient")]
    pub halo_loss_coefficient: f64,
    #[serde(default)]
    pub sites: SiteSelection,
}

fn default_dt_us() -> f64 {
    1.0
}
fn default_background_lifetime() -> f64 {
    f64::INFINITY
}
fn default_halo_coefficient() -> f64 {
    2.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteSelection {
    /// The single central site.
    #[default]
    Center,
    /// Every row of the central column.
    CentralColumn,
}

impl SiteSelection {
    pub fn sites(self, rows: usize, cols: usize) -> Vec<(usize, usize)> {
        match self {
            SiteSelection::Center => vec![(rows / 2, cols / 2)],
            SiteSelection::CentralColumn => (0..rows).map(|r| (r, cols / 2)).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceConfig {
    pub protocols: Vec<CoherenceProtocol>,
    #[serde(default = "default_heating_rate_uk")]
    pub heating_rate_uk_per_s: f64,
    #[serde(default)]
    pub detuning_jitter_hz: f64,
    /// Echo refocusing times (ms); required by `echo_scan`.
    #[serde(default)]
    pub t_pi_ms: Vec<f64>,
    /// Ramsey free-evolution windows (ms); required by `ramsey`.
    #[serde(default)]
    pub windows_ms: Vec<f64>,
}

fn default_heating_rate_uk() -> f64 {
    CALIBRATED_HEATING_RATE * 1e6
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct TransportScanConfig {
    pub durations_ms: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterShiftConfig {
    /// Rendered image pixel pitch (um).
    #[serde(default = "default_pixel_um")]
    pub image_pixel_um: f64,
    /// Gaussian point-spread 1/e^2 radius (um); 0 disables blurring.
    #[serde(default = "default_blur_um")]
    pub image_blur_um: f64,
}

fn default_pixel_um() -> f64 {
    2.0
}
fn default_blur_um() -> f64 {
    4.0
}

impl Default for RegisterShiftConfig {
    fn default() -> Self {
        RegisterShiftConfig {
            image_pixel_um: default_pixel_um(),
            image_blur_um: default_blur_um(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HandoverDirections {
    #[default]
    Both,
    ToStatic,
    ToMoving,
}

#[derive(Debug, Clone, Deserialize, serde::Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HandoverConfig {
    #[serde(default)]
    pub directions: HandoverDirections,
}

#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct LifetimeConfig {
    pub duration_ms: f64,
    pub checkpoints: usize,
}

impl ExperimentConfig {
    /// Parse and validate a config document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config = deserialize_config(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} not supported; this build reads version {CONFIG_VERSION}",
                self.version
            )));
        }
        if self.label.is_empty()
            || !self
                .label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Config(format!(
                "label {:?} must be non-empty and filesystem-safe (alphanumeric, '-', '_')",
                self.label
            )));
        }
        if self.species.name != "rb85" {
            return Err(Error::Config(format!(
                "unknown species {:?}; bundled species: rb85",
                self.species.name
            )));
        }
        let o = &self.optics;
        if o.rows == 0 || o.cols == 0 {
            return Err(Error::Config("optics.rows and optics.cols must be positive".into()));
        }
        for (name, v) in [
            ("optics.wavelength_nm", o.wavelength_nm),
            ("optics.trap_waist_um", o.trap_waist_um),
            ("optics.illumination_power_mw", o.illumination_power_mw),
            ("optics.illumination_waist_um", o.illumination_waist_um),
            ("dynamics.temperature_uk", self.dynamics.temperature_uk),
            ("dynamics.dt_us", self.dynamics.dt_us),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(o.transmission > 0.0 && o.transmission <= 1.0) {
            return Err(Error::Config(format!(
                "optics.transmission must lie in (0, 1], got {}",
                o.transmission
            )));
        }
        if self.dynamics.atoms_per_site == 0 {
            return Err(Error::Config("dynamics.atoms_per_site must be positive".into()));
        }
        if !(self.dynamics.background_lifetime_s > 0.0) {
            return Err(Error::Config(format!(
                "dynamics.background_lifetime_s must be positive, got {}",
                self.dynamics.background_lifetime_s
            )));
        }
        if self.dynamics.halo_loss_coefficient < 0.0 {
            return Err(Error::Config(format!(
                "dynamics.halo_loss_coefficient must be >= 0, got {}",
                self.dynamics.halo_loss_coefficient
            )));
        }
        match self.experiment {
            ExperimentKind::TransportScan => {
                let block = self.transport_scan.as_ref().ok_or_else(|| {
                    Error::Config("experiment \"transport_scan\" needs a [transport_scan] block".into())
                })?;
                if block.durations_ms.is_empty() {
                    return Err(Error::Config("transport_scan.durations_ms is empty".into()));
                }
                if block.durations_ms.iter().any(|&d| !(d > 0.0)) {
                    return Err(Error::Config("transport_scan.durations_ms must be positive".into()));
                }
            }
            ExperimentKind::RegisterShift => {
                if self.optics.arrangement == ArrangementConfig::Single {
                    return Err(Error::Config(
                        "register_shift needs a partner array (arrangement asymmetric or symmetric)".into(),
                    ));
                }
            }
            ExperimentKind::Handover => {
                if self.optics.arrangement == ArrangementConfig::Single {
                    return Err(Error::Config(
                        "handover needs a partner array (arrangement asymmetric or symmetric)".into(),
                    ));
                }
            }
            ExperimentKind::EchoScan => {
                let block = self.coherence.as_ref().ok_or_else(|| {
                    Error::Config("experiment \"echo_scan\" needs a [coherence] block".into())
                })?;
                if block.protocols.is_empty() {
                    return Err(Error::Config("coherence.protocols is empty".into()));
                }
                if block.t_pi_ms.len() < 4 {
                    return Err(Error::Config(
                        "coherence.t_pi_ms needs at least 4 refocusing times for the fit".into(),
                    ));
                }
            }
            ExperimentKind::Ramsey => {
                let block = self.coherence.as_ref().ok_or_else(|| {
                    Error::Config("experiment \"ramsey\" needs a [coherence] block".into())
                })?;
                if block.windows_ms.is_empty() {
                    return Err(Error::Config("coherence.windows_ms is empty".into()));
                }
            }
            ExperimentKind::Lifetime => {
                let block = self.lifetime.as_ref().ok_or_else(|| {
                    Error::Config("experiment \"lifetime\" needs a [lifetime] block".into())
                })?;
                if !(block.duration_ms > 0.0) || block.checkpoints == 0 {
                    return Err(Error::Config(
                        "lifetime.duration_ms and lifetime.checkpoints must be positive".into(),
                    ));
                }
            }
        }
        if let Some(c) = &self.coherence {
            if c.heating_rate_uk_per_s < 0.0 || c.detuning_jitter_hz < 0.0 {
                return Err(Error::Config(
                    "coherence rates and jitter must be >= 0".into(),
                ));
            }
            if c.t_pi_ms.iter().chain(&c.windows_ms).any(|&t| !(t > 0.0)) {
                return Err(Error::Config(
                    "coherence times must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn species(&self) -> AtomSpecies {
        AtomSpecies::rb85()
    }

    /// Build the simulation state this config describes. `seed_override`
    /// replaces `dynamics.seed` when given (the CLI's `--seed`).
    pub fn setup(&self, seed_override: Option<u64>) -> Result<SimulationSetup> {
        let species = self.species();
        let geometry = MicrolensGeometry::default();
        let aberration = TiltAberrationModel::for_geometry(&geometry);
        let illumination = IlluminationSpec {
            power: self.optics.illumination_power_mw * 1e-3,
            beam_waist: self.optics.illumination_waist_um * 1e-6,
            transmission: self.optics.transmission,
        };
        let moving = TrapArraySnapshot::from_illumination(
            self.optics.rows,
            self.optics.cols,
            &geometry,
            &illumination,
            self.optics.trap_waist_um * 1e-6,
            self.optics.wavelength_nm * 1e-9,
            &species,
        )?;
        let (static_array, static_tilt) = match self.optics.arrangement.register() {
            None => (None, 0.0),
            Some(arrangement) => {
                let (offset_pitches, tilt_halves) = arrangement.static_layout();
                let array = moving
                    .clone()
                    .shifted(offset_pitches * geometry.trap_pitch(), 0.0);
                (Some(array), tilt_halves * geometry.half_pitch_tilt())
            }
        };
        let eta = crate::potential::differential_shift_ratio(
            self.optics.wavelength_nm * 1e-9,
            &species,
        )?;
        Ok(SimulationSetup {
            species,
            geometry,
            aberration,
            moving_array: moving,
            static_array,
            static_tilt,
            mirror: self.control.mirror.model(),
            background_lifetime: self.dynamics.background_lifetime_s,
            halo_loss_coefficient: self.dynamics.halo_loss_coefficient,
            capture_radius: 0.5 * geometry.trap_pitch(),
            dt: self.dynamics.dt_us * 1e-6,
            differential_shift_ratio: eta,
            seed: seed_override.unwrap_or(self.dynamics.seed),
        })
    }

    /// The dephasing model for the coherence block (defaults when absent).
    pub fn dephasing_model(&self, setup: &SimulationSetup) -> DephasingModel {
        let (rate_uk, jitter_hz) = match &self.coherence {
            Some(c) => (c.heating_rate_uk_per_s, c.detuning_jitter_hz),
            None => (default_heating_rate_uk(), 0.0),
        };
        DephasingModel {
            eta: setup.differential_shift_ratio,
            heating_rate: rate_uk * 1e-6,
            detuning_jitter: 2.0 * std::f64::consts::PI * jitter_hz,
        }
    }

    pub fn sites(&self) -> Vec<(usize, usize)> {
        self.dynamics.sites.sites(self.optics.rows, self.optics.cols)
    }

    pub fn temperature(&self) -> f64 {
        self.dynamics.temperature_uk * 1e-6
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(experiment: &str, extra: &str) -> String {
        format!(
            r#"
version = 1
label = "unit"
experiment = "{experiment}"

[species]
name = "rb85"

[optics]
rows = 5
cols = 5
wavelength_nm = 805.0
trap_waist_um = 3.8
illumination_power_mw = 275.0
illumination_waist_um = 450.0
transmission = 0.85
arrangement = "asymmetric"

[dynamics]
atoms_per_site = 100
temperature_uk = 15.0
seed = 7
{extra}
"#
        )
    }

    #[test]
    fn parses_and_builds_setup() {
        let text = minimal(
            "transport_scan",
            "[transport_scan]\ndurations_ms = [0.5, 2.0]\n",
        );
        let config = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(config.experiment, ExperimentKind::TransportScan);
        let setup = config.setup(None).unwrap();
        assert_eq!(setup.seed, 7);
        assert!(setup.static_array.is_some());
        assert_eq!(setup.static_tilt, 0.0);
        // Central depth from the bundled illumination values: 5.7 mW in the
        // central trap, about 424 uK of depth.
        let depth = setup.moving_array.depth_at(2, 2).unwrap().abs()
            / crate::constants::BOLTZMANN;
        assert!(depth > 400e-6 && depth < 450e-6, "depth {depth}");
        let setup_override = config.setup(Some(99)).unwrap();
        assert_eq!(setup_override.seed, 99);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_version() {
        let text = minimal("transport_scan", "[transport_scan]\ndurations_ms = [1.0]\n")
            .replace("[species]", "typo_key = 3\n[species]");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = minimal("transport_scan", "[transport_scan]\ndurations_ms = [1.0]\n")
            .replace("version = 1", "version = 2");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn rejects_missing_experiment_block() {
        let text = minimal("echo_scan", "");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("coherence"), "{err}");
        let text = minimal("lifetime", "");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn rejects_unphysical_values() {
        let base = minimal("transport_scan", "[transport_scan]\ndurations_ms = [1.0]\n");
        for (from, to) in [
            ("transmission = 0.85", "transmission = 1.5"),
            ("temperature_uk = 15.0", "temperature_uk = -1.0"),
            ("atoms_per_site = 100", "atoms_per_site = 0"),
            ("name = \"rb85\"", "name = \"cs133\""),
            ("label = \"unit\"", "label = \"bad/label\""),
        ] {
            let text = base.replace(from, to);
            assert!(
                ExperimentConfig::from_toml(&text).is_err(),
                "accepted {to:?}"
            );
        }
    }

    #[test]
    fn arrangement_guards_partner_experiments() {
        let text = minimal("handover", "").replace("\"asymmetric\"", "\"single\"");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("partner array"), "{err}");
    }

    #[test]
    fn defaults_fill_control_and_rates() {
        let text = minimal(
            "echo_scan",
            "[coherence]\nprotocols = [\"rest\"]\nt_pi_ms = [10.0, 20.0, 30.0, 40.0]\n",
        );
        let config = ExperimentConfig::from_toml(&text).unwrap();
        let setup = config.setup(None).unwrap();
        // Calibrated steering mirror by default.
        assert!((setup.mirror.natural_frequency - 2.0 * std::f64::consts::PI * 15e3).abs() < 1.0);
        assert_eq!(setup.mirror.angle_noise_sigma, 22e-6);
        let model = config.dephasing_model(&setup);
        assert!((model.heating_rate - CALIBRATED_HEATING_RATE).abs() < 1e-12);
        assert_eq!(model.detuning_jitter, 0.0);
        // Sequence defaults mirror the paper timings.
        let spec = config.control.sequence.spec();
        assert_eq!(spec.transport_duration, 2e-3);
        assert_eq!(spec.handover_duration, 5e-3);
    }

    #[test]
    fn site_selection_expands() {
        assert_eq!(SiteSelection::Center.sites(5, 8), vec![(2, 4)]);
        let column = SiteSelection::CentralColumn.sites(3, 5);
        assert_eq!(column, vec![(0, 2), (1, 2), (2, 2)]);
    }
}
