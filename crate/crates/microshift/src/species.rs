//! Atomic species data and thermal ensemble descriptors.
//!
//! Species are loadable from a plain `key = value` text file (`#` starts a
//! comment). Recognized keys, all required:
//!
//! ```text
//! name                    = rubidium-85
//! mass_amu                = 84.911789738    # atomic mass units
//! d1_wavelength_nm        = 794.979014933   # vacuum
//! d2_wavelength_nm        = 780.241368271   # vacuum
//! natural_linewidth_mhz   = 6.0666          # D2 linewidth, Gamma / 2pi
//! hyperfine_splitting_ghz = 3.035732439     # ground-state splitting / 2pi
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::constants::ATOMIC_MASS_UNIT;
use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Alkali atom described by its mass and the two-line (D1/D2) optical data.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSpecies {
    pub name: String,
    /// Atomic mass (kg).
    pub mass: f64,
    /// D1 transition vacuum wavelength (m).
    pub d1_wavelength: f64,
    /// D2 transition vacuum wavelength (m).
    pub d2_wavelength: f64,
    /// D2 natural linewidth Gamma (rad/s).
    pub natural_linewidth: f64,
    /// Ground-state hyperfine splitting (rad/s).
    pub hyperfine_splitting: f64,
}

impl AtomSpecies {
    /// Built-in default: rubidium-85.
    pub fn rb85() -> Self {
        AtomSpecies {
            name: "rubidium-85".to_string(),
            mass: 84.911789738 * ATOMIC_MASS_UNIT,
            d1_wavelength: 794.979014933e-9,
            d2_wavelength: 780.241368271e-9,
            natural_linewidth: TWO_PI * 6.0666e6,
            hyperfine_splitting: TWO_PI * 3.035732439e9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidSpecies(format!("mass {} kg", self.mass)));
        }
        if !(self.d2_wavelength > 0.0 && self.d1_wavelength > self.d2_wavelength) {
            return Err(Error::InvalidSpecies(format!(
                "require 0 < d2 ({:.4e} m) < d1 ({:.4e} m)",
                self.d2_wavelength, self.d1_wavelength
            )));
        }
        if !(self.natural_linewidth > 0.0) {
            return Err(Error::InvalidSpecies("natural linewidth must be positive".into()));
        }
        if !(self.hyperfine_splitting > 0.0) {
            return Err(Error::InvalidSpecies("hyperfine splitting must be positive".into()));
        }
        Ok(())
    }

    /// Parse the key-value text format documented on this module.
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut fields: HashMap<&str, (usize, String)> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::SpeciesParse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            fields.insert_unique(key.trim(), idx + 1, value.trim().to_string())?;
        }

        let get = |key: &str| -> Result<(usize, String)> {
            fields.get(key).cloned().ok_or(Error::SpeciesParse {
                line: 0,
                message: format!("missing key `{key}`"),
            })
        };
        let num = |key: &str| -> Result<f64> {
            let (line, value) = get(key)?;
            value.parse::<f64>().map_err(|_| Error::SpeciesParse {
                line,
                message: format!("`{key}` is not a number: `{value}`"),
            })
        };

        let species = AtomSpecies {
            name: get("name")?.1,
            mass: num("mass_amu")? * ATOMIC_MASS_UNIT,
            d1_wavelength: num("d1_wavelength_nm")? * 1e-9,
            d2_wavelength: num("d2_wavelength_nm")? * 1e-9,
            natural_linewidth: TWO_PI * num("natural_linewidth_mhz")? * 1e6,
            hyperfine_splitting: TWO_PI * num("hyperfine_splitting_ghz")? * 1e9,
        };
        species.validate()?;
        Ok(species)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_value(&std::fs::read_to_string(path)?)
    }

    /// Serialize back to the key-value format (round-trips through `from_key_value`).
    pub fn to_key_value(&self) -> String {
        format!(
            "name = {}\nmass_amu = {}\nd1_wavelength_nm = {}\nd2_wavelength_nm = {}\n\
             natural_linewidth_mhz = {}\nhyperfine_splitting_ghz = {}\n",
            self.name,
            self.mass / ATOMIC_MASS_UNIT,
            self.d1_wavelength * 1e9,
            self.d2_wavelength * 1e9,
            self.natural_linewidth / TWO_PI / 1e6,
            self.hyperfine_splitting / TWO_PI / 1e9,
        )
    }
}

trait InsertUnique {
    fn insert_unique(&mut self, key: &str, line: usize, value: String) -> Result<()>;
}

impl InsertUnique for HashMap<&str, (usize, String)> {
    fn insert_unique(&mut self, key: &str, line: usize, value: String) -> Result<()> {
        // HashMap key must outlive borrow; species keys are a fixed small set.
        const KEYS: &[&str] = &[
            "name",
            "mass_amu",
            "d1_wavelength_nm",
            "d2_wavelength_nm",
            "natural_linewidth_mhz",
            "hyperfine_splitting_ghz",
        ];
        let canonical = KEYS.iter().find(|k| **k == key).ok_or(Error::SpeciesParse {
            line,
            message: format!("unknown key `{key}`"),
        })?;
        if self.insert(canonical, (line, value)).is_some() {
            return Err(Error::SpeciesParse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        Ok(())
    }
}

/// Target thermal ensemble: temperature and atom count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalState {
    /// Kinetic temperature (K).
    pub temperature: f64,
    pub atom_count: usize,
}

impl ThermalState {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        if self.atom_count == 0 {
            return Err(Error::Config("atom count must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rb85_is_valid_and_round_trips() {
        // Unit conversion (m <-> nm) may cost one ulp, so compare to 1e-12
        // relative rather than bit-exact.
        let rb = AtomSpecies::rb85();
        rb.validate().unwrap();
        let rt = AtomSpecies::from_key_value(&rb.to_key_value()).unwrap();
        assert_eq!(rb.name, rt.name);
        for (a, b) in [
            (rb.mass, rt.mass),
            (rb.d1_wavelength, rt.d1_wavelength),
            (rb.d2_wavelength, rt.d2_wavelength),
            (rb.natural_linewidth, rt.natural_linewidth),
            (rb.hyperfine_splitting, rt.hyperfine_splitting),
        ] {
            assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn rb85_mass() {
        // 84.911789738 u
        let rb = AtomSpecies::rb85();
        assert!((rb.mass - 1.4099934407e-25).abs() / rb.mass < 1e-9);
    }

    #[test]
    fn parser_reports_line_numbers() {
        let text = "name = x\nbogus_key = 3\n";
        match AtomSpecies::from_key_value(text) {
            Err(Error::SpeciesParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parser_rejects_swapped_lines() {
        // D1 must be the longer wavelength.
        let rb = AtomSpecies::rb85();
        let text = rb
            .to_key_value()
            .replace("794.979014933", "700.0");
        assert!(matches!(AtomSpecies::from_key_value(&text), Err(Error::InvalidSpecies(_))));
    }

    #[test]
    fn parser_allows_comments_and_blank_lines() {
        let text = format!("# leading comment\n\n{}", AtomSpecies::rb85().to_key_value());
        AtomSpecies::from_key_value(&text).unwrap();
    }

    #[test]
    fn thermal_state_bounds() {
        assert!(ThermalState { temperature: -1.0, atom_count: 5 }.validate().is_err());
        assert!(ThermalState { temperature: 1e-5, atom_count: 0 }.validate().is_err());
        ThermalState { temperature: 0.0, atom_count: 1 }.validate().unwrap();
    }
}
