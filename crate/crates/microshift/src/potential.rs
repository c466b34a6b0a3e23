//! Optical dipole trap relations for a far-red-detuned Gaussian beam focus.
//!
//! All quantities here treat one focus in isolation; beam arrays, tilts, and
//! time dependence are layered on top in [`crate::optics`]. Sign convention:
//! a trapping (red-detuned) potential depth is **negative** energy in joules.

use crate::constants::{BOLTZMANN, REDUCED_PLANCK, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::species::AtomSpecies;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const PI: f64 = std::f64::consts::PI;

/// Angular frequency (rad/s) of light at vacuum wavelength `wavelength` (m).
pub fn angular_frequency(wavelength: f64) -> f64 {
    TWO_PI * SPEED_OF_LIGHT / wavelength
}

/// Detunings (rad/s) of the trap light from the D2 and D1 lines: `(delta_2, delta_1)`.
///
/// Both are negative for light red of both lines.
pub fn detunings(trap_wavelength: f64, species: &AtomSpecies) -> (f64, f64) {
    let omega = angular_frequency(trap_wavelength);
    (
        omega - angular_frequency(species.d2_wavelength),
        omega - angular_frequency(species.d1_wavelength),
    )
}

/// Line-strength-weighted effective detuning (rad/s):
/// `3 / (2/delta_2 + 1/delta_1)`.
///
/// Collapses the two-line structure to a single number so that scattering and
/// differential-shift estimates can be written as if for a two-level atom.
pub fn effective_detuning(trap_wavelength: f64, species: &AtomSpecies) -> Result<f64> {
    let (d2, d1) = detunings(trap_wavelength, species);
    check_red_detuned(trap_wavelength, d2, d1, species)?;
    Ok(3.0 / (2.0 / d2 + 1.0 / d1))
}

fn check_red_detuned(trap_wavelength: f64, d2: f64, d1: f64, species: &AtomSpecies) -> Result<()> {
    if d2 == 0.0 || d1 == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    if d2 > 0.0 || d1 > 0.0 {
        // Shorter than D2, or between the lines: either way not a plain
        // red-detuned dipole trap.
        let _ = species;
        return Err(Error::BlueDetuned(trap_wavelength));
    }
    Ok(())
}

/// Trap depth (J, negative) at the focus of a Gaussian beam.
///
/// * `power` — optical power through the focus (W)
/// * `waist` — 1/e^2 intensity radius at the focus (m)
/// * `trap_wavelength` — vacuum wavelength of the trap light (m)
///
/// Uses the rotating-wave two-line form with line strengths 2 (D2) and 1 (D1):
/// `U0 = (pi c^2 Gamma / 2 omega_0^3) * (2/delta_2 + 1/delta_1) * I_peak`,
/// with `I_peak = 2 P / (pi w^2)` and `omega_0` the D2 frequency.
pub fn dipole_potential_depth(
    power: f64,
    waist: f64,
    trap_wavelength: f64,
    species: &AtomSpecies,
) -> Result<f64> {
    if !(power >= 0.0 && waist > 0.0) {
        return Err(Error::Config(format!(
            "power ({power} W) must be >= 0 and waist ({waist} m) > 0"
        )));
    }
    let (d2, d1) = detunings(trap_wavelength, species);
    check_red_detuned(trap_wavelength, d2, d1, species)?;
    let omega0 = angular_frequency(species.d2_wavelength);
    let peak_intensity = 2.0 * power / (PI * waist * waist);
    let prefactor = PI * SPEED_OF_LIGHT * SPEED_OF_LIGHT * species.natural_linewidth
        / (2.0 * omega0.powi(3));
    Ok(prefactor * (2.0 / d2 + 1.0 / d1) * peak_intensity)
}

/// Rayleigh range `pi w^2 / lambda` (m).
pub fn rayleigh_range(waist: f64, wavelength: f64) -> f64 {
    PI * waist * waist / wavelength
}

/// Harmonic trap frequencies `(radial, axial)` in rad/s for a focus of the
/// given depth (J, negative) and waist (m).
///
/// `omega_r = sqrt(4 |U| / (m w^2))`, `omega_a = sqrt(2 |U| / (m z_R^2))`.
pub fn trap_frequencies(
    depth: f64,
    waist: f64,
    trap_wavelength: f64,
    species: &AtomSpecies,
) -> Result<(f64, f64)> {
    if depth >= 0.0 {
        return Err(Error::NotTrapping(depth));
    }
    let u = depth.abs();
    let zr = rayleigh_range(waist, trap_wavelength);
    let radial = (4.0 * u / (species.mass * waist * waist)).sqrt();
    let axial = (2.0 * u / (species.mass * zr * zr)).sqrt();
    Ok((radial, axial))
}

/// Photon scattering rate (1/s) at the bottom of a trap of the given depth.
///
/// Two-level relation evaluated at the effective detuning:
/// `Gamma_sc = Gamma |U| / (hbar |Delta_eff|)`.
pub fn photon_scattering_rate(
    depth: f64,
    trap_wavelength: f64,
    species: &AtomSpecies,
) -> Result<f64> {
    if depth >= 0.0 {
        return Err(Error::NotTrapping(depth));
    }
    let delta = effective_detuning(trap_wavelength, species)?;
    Ok(species.natural_linewidth * depth.abs() / (REDUCED_PLANCK * delta.abs()))
}

/// Differential-shift sensitivity of the ground-state qubit: the ratio of the
/// hyperfine splitting to the effective detuning magnitude.
///
/// The two qubit states see trap depths differing by a fraction `eta`, so the
/// local differential shift is `eta * |U(r)| / hbar` (rad/s).
pub fn differential_shift_ratio(trap_wavelength: f64, species: &AtomSpecies) -> Result<f64> {
    Ok(species.hyperfine_splitting / effective_detuning(trap_wavelength, species)?.abs())
}

/// Photon-recoil temperature `(hbar k)^2 / (m k_B)` (K) at the given wavelength.
pub fn recoil_temperature(wavelength: f64, species: &AtomSpecies) -> f64 {
    let k = TWO_PI / wavelength;
    (REDUCED_PLANCK * k).powi(2) / (species.mass * BOLTZMANN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rb() -> AtomSpecies {
        AtomSpecies::rb85()
    }

    const UK: f64 = 1e-6 * BOLTZMANN; // microkelvin of energy

    #[test]
    fn depth_at_shift_register_operating_point() {
        // 5.7 mW per focus, 3.8 um waist, 805 nm light.
        let u = dipole_potential_depth(5.7e-3, 3.8e-6, 805e-9, &rb()).unwrap();
        assert!(u < 0.0);
        assert_relative_eq!(u / UK, -423.504, max_relative = 1e-4);
        // Design target is 430 uK +/- 5%.
        assert!((408.5..=451.5).contains(&(-u / UK)));
    }

    #[test]
    fn depth_at_conveyor_operating_point() {
        // 2.336 mW per focus, 3.8 um waist, 815 nm light: 110 uK +/- 10%.
        let u = dipole_potential_depth(2.336e-3, 3.8e-6, 815e-9, &rb()).unwrap();
        assert_relative_eq!(u / UK, -104.425, max_relative = 1e-4);
        assert!((99.0..=121.0).contains(&(-u / UK)));
    }

    #[test]
    fn depth_scales_linearly_with_power() {
        let u1 = dipole_potential_depth(1.0e-3, 3.8e-6, 805e-9, &rb()).unwrap();
        let u2 = dipole_potential_depth(2.0e-3, 3.8e-6, 805e-9, &rb()).unwrap();
        assert_relative_eq!(u2, 2.0 * u1, max_relative = 1e-12);
    }

    #[test]
    fn rayleigh_range_value() {
        assert_relative_eq!(rayleigh_range(3.8e-6, 805e-9) * 1e6, 56.3535, max_relative = 1e-4);
    }

    #[test]
    fn trap_frequencies_at_design_depth() {
        // Flat 430 uK depth, 3.8 um waist, 805 nm.
        let (wr, wa) = trap_frequencies(-430.0 * UK, 3.8e-6, 805e-9, &rb()).unwrap();
        assert_relative_eq!(wr / TWO_PI / 1e3, 17.18834, max_relative = 1e-4);
        assert_relative_eq!(wa / TWO_PI, 819.561, max_relative = 1e-4);
    }

    #[test]
    fn trap_frequencies_chained_from_computed_depth() {
        // Depth from the actual power budget, then frequencies; both must sit
        // within 5% of the design values 17.1 kHz and 820 Hz.
        let u = dipole_potential_depth(5.700933409842266e-3, 3.8e-6, 805e-9, &rb()).unwrap();
        let (wr, wa) = trap_frequencies(u, 3.8e-6, 805e-9, &rb()).unwrap();
        assert_relative_eq!(wr / TWO_PI / 1e3, 17.0594, max_relative = 1e-4);
        assert_relative_eq!(wa / TWO_PI, 813.413, max_relative = 1e-4);
        assert!((16.15e3..=17.85e3).contains(&(wr / TWO_PI)));
        assert!((779.0..=861.0).contains(&(wa / TWO_PI)));
    }

    #[test]
    fn scattering_rate_values() {
        let rb = rb();
        // Conveyor: 110 uK deep at 815 nm.
        let rate = photon_scattering_rate(-110.0 * UK, 815e-9, &rb).unwrap();
        assert_relative_eq!(rate, 6.69795, max_relative = 1e-4);
        // Register: 430 uK deep at 805 nm.
        let rate = photon_scattering_rate(-430.0 * UK, 805e-9, &rb).unwrap();
        assert_relative_eq!(rate, 43.517, max_relative = 1e-4);
    }

    #[test]
    fn effective_detuning_values() {
        let rb = rb();
        assert_relative_eq!(
            effective_detuning(815e-9, &rb).unwrap(),
            -8.1956424175867e13,
            max_relative = 1e-6
        );
        assert_relative_eq!(
            effective_detuning(805e-9, &rb).unwrap(),
            -4.931059625e13,
            max_relative = 1e-4
        );
    }

    #[test]
    fn differential_shift_ratio_values() {
        let rb = rb();
        assert_relative_eq!(
            differential_shift_ratio(815e-9, &rb).unwrap(),
            2.3273428104089727e-4,
            max_relative = 1e-6
        );
        assert_relative_eq!(
            differential_shift_ratio(805e-9, &rb).unwrap(),
            3.8681482090568e-4,
            max_relative = 1e-4
        );
    }

    #[test]
    fn recoil_temperature_near_d2() {
        assert_relative_eq!(recoil_temperature(780e-9, &rb()) * 1e6, 0.37047, max_relative = 1e-3);
    }

    #[test]
    fn blue_and_zero_detuning_rejected() {
        let rb = rb();
        assert!(matches!(
            dipole_potential_depth(1e-3, 3.8e-6, 770e-9, &rb),
            Err(Error::BlueDetuned(_))
        ));
        // Between the lines counts as not-red-detuned too.
        assert!(matches!(
            dipole_potential_depth(1e-3, 3.8e-6, 790e-9, &rb),
            Err(Error::BlueDetuned(_))
        ));
        assert!(matches!(
            dipole_potential_depth(1e-3, 3.8e-6, rb.d2_wavelength, &rb),
            Err(Error::ZeroDetuning)
        ));
    }

    #[test]
    fn not_trapping_rejected() {
        let rb = rb();
        assert!(matches!(trap_frequencies(0.0, 3.8e-6, 805e-9, &rb), Err(Error::NotTrapping(_))));
        assert!(matches!(
            photon_scattering_rate(1e-27, 805e-9, &rb),
            Err(Error::NotTrapping(_))
        ));
    }
}
