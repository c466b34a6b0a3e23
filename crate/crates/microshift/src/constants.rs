//! Physical constants (CODATA 2018), SI units.

/// Boltzmann constant (J/K), exact by SI definition.
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Reduced Planck constant (J s), exact by SI definition of h.
pub const REDUCED_PLANCK: f64 = 1.054571817e-34;

/// Speed of light in vacuum (m/s), exact.
pub const SPEED_OF_LIGHT: f64 = 299792458.0;

/// Unified atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.66053906660e-27;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_are_codata() {
        // Exact SI definitions and the CODATA 2018 atomic mass unit.
        assert_eq!(BOLTZMANN, 1.380649e-23);
        assert_eq!(SPEED_OF_LIGHT, 299792458.0);
        assert_eq!(ATOMIC_MASS_UNIT, 1.66053906660e-27);
        // h = 6.62607015e-34 exactly; hbar rounded to CODATA's quoted 10 digits.
        let hbar = 6.62607015e-34 / (2.0 * std::f64::consts::PI);
        assert!((REDUCED_PLANCK - hbar).abs() / hbar < 1e-9);
    }
}
