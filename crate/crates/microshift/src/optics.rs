//! Illumination and microlens-array geometry.
//!
//! A collimated Gaussian beam illuminates a square grid of microlenses; each
//! lens focuses its share of the light into one dipole trap. A relay telescope
//! demagnifies the focal-spot grid onto the atoms, so tilting the illumination
//! beam with a steering mirror translates the whole trap array sideways by
//! `displacement = tilt * trap_pitch / full_pitch_tilt`.
//!
//! Tilting also degrades the foci (aberrations of the off-axis illumination):
//! the model here reduces trap depth and broadens the waist quadratically in
//! tilt, calibrated at the half-pitch tilt used during shifts.
//!
//! [`ArrayState`] is the hot path: the instantaneous potential energy surface
//! of one trap array (shifted, power-scaled, aberrated) with analytic
//! gradients, truncated to a site stencil around the atom. Relative truncation
//! error is below 1e-6 for pitch/waist ratios above ~3.

use crate::error::{Error, Result};
use crate::potential::{dipole_potential_depth, rayleigh_range};
use crate::species::AtomSpecies;

const PI: f64 = std::f64::consts::PI;

/// Collimated beam feeding the microlens array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlluminationSpec {
    /// Total beam power (W).
    pub power: f64,
    /// 1/e^2 intensity radius at the lens plane (m).
    pub beam_waist: f64,
    /// Power transmission from lens plane to atoms (relay + coating losses).
    pub transmission: f64,
}

impl IlluminationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.power >= 0.0 && self.beam_waist > 0.0) {
            return Err(Error::Config(format!(
                "illumination power ({} W) must be >= 0 and waist ({} m) > 0",
                self.power, self.beam_waist
            )));
        }
        if !(self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(Error::Config(format!(
                "transmission must be in (0, 1], got {}",
                self.transmission
            )));
        }
        Ok(())
    }
}

/// Power delivered to the focus of one lens whose center sits `lens_offset`
/// (m) from the beam axis: the illumination intensity integrated over the
/// circular lens aperture, times the relay transmission.
///
/// Uses Gauss-Legendre (radial) x trapezoid (angular) quadrature; the angular
/// rule is spectrally accurate on the periodic integrand. For the on-axis
/// lens this matches the closed form `P (1 - exp(-2 R^2 / w^2))` to near
/// machine precision.
pub fn per_lens_power(illum: &IlluminationSpec, lens_offset: f64, lens_radius: f64) -> f64 {
    let w2 = illum.beam_waist * illum.beam_waist;
    let peak = 2.0 * illum.power / (PI * w2);
    // 32-point radial rule resolves the Gaussian easily (R << w); 64 angular
    // points are overkill but cheap, this runs once per lens per setup.
    let (nodes, weights) = quadrature::gauss_legendre(32);
    let n_ang = 64;
    let mut total = 0.0;
    for (&t, &wt) in nodes.iter().zip(weights.iter()) {
        // Map [-1, 1] -> [0, R].
        let r = 0.5 * lens_radius * (t + 1.0);
        let jacobian = 0.5 * lens_radius * wt * r;
        let mut ring = 0.0;
        for k in 0..n_ang {
            let phi = 2.0 * PI * k as f64 / n_ang as f64;
            let rho2 = lens_offset * lens_offset
                + 2.0 * lens_offset * r * phi.cos()
                + r * r;
            ring += (-2.0 * rho2 / w2).exp();
        }
        total += jacobian * ring * (2.0 * PI / n_ang as f64);
    }
    illum.transmission * peak * total
}

/// Fixed geometry of the lens grid, relay, and beam steering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicrolensGeometry {
    /// Lens center-to-center spacing at the lens plane (m).
    pub lens_pitch: f64,
    /// Lens aperture radius (m).
    pub lens_radius: f64,
    /// Relay demagnification from lens plane to atom plane.
    pub demagnification: f64,
    /// Beam tilt that translates the trap grid by one full trap pitch (rad).
    pub full_pitch_tilt: f64,
}

impl Default for MicrolensGeometry {
    fn default() -> Self {
        MicrolensGeometry {
            lens_pitch: 125e-6,
            lens_radius: 50e-6,
            demagnification: 80.0 / 35.5,
            full_pitch_tilt: 0.125,
        }
    }
}

impl MicrolensGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.lens_pitch > 0.0
            && self.lens_radius > 0.0
            && self.demagnification > 0.0
            && self.full_pitch_tilt > 0.0)
        {
            return Err(Error::Config(
                "microlens geometry parameters must all be positive".into(),
            ));
        }
        if self.lens_radius * 2.0 > self.lens_pitch {
            return Err(Error::Config(format!(
                "lens apertures overlap: diameter {} m > pitch {} m",
                2.0 * self.lens_radius,
                self.lens_pitch
            )));
        }
        Ok(())
    }

    /// Trap spacing at the atom plane (m).
    pub fn trap_pitch(&self) -> f64 {
        self.lens_pitch / self.demagnification
    }

    /// Sideways trap displacement per radian of beam tilt (m/rad).
    pub fn displacement_per_tilt(&self) -> f64 {
        self.trap_pitch() / self.full_pitch_tilt
    }

    /// Tilt that moves the traps by half a pitch (rad) — the working point of
    /// a shift half-step.
    pub fn half_pitch_tilt(&self) -> f64 {
        0.5 * self.full_pitch_tilt
    }
}

/// Quadratic model of focus degradation versus beam tilt.
///
/// `depth_factor(t) = 1 - depth_curvature * (t / reference_tilt)^2`
/// `waist_factor(t) = 1 + waist_curvature * (t / reference_tilt)^2`
///
/// Both are calibrated at `reference_tilt` (the half-pitch tilt). Tilts past
/// `max_tilt` leave the calibrated range and are rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltAberrationModel {
    pub depth_curvature: f64,
    pub waist_curvature: f64,
    pub reference_tilt: f64,
    pub max_tilt: f64,
}

impl TiltAberrationModel {
    pub fn for_geometry(geometry: &MicrolensGeometry) -> Self {
        TiltAberrationModel {
            depth_curvature: 0.08,
            waist_curvature: 0.04,
            reference_tilt: geometry.half_pitch_tilt(),
            max_tilt: geometry.full_pitch_tilt,
        }
    }

    /// `(depth_factor, waist_factor)` at the given tilt.
    pub fn degradation(&self, tilt: f64) -> Result<(f64, f64)> {
        if tilt.abs() > self.max_tilt * (1.0 + 1e-12) {
            return Err(Error::TiltOutOfModel {
                tilt,
                limit: self.max_tilt,
            });
        }
        let s = (tilt / self.reference_tilt).powi(2);
        Ok((1.0 - self.depth_curvature * s, 1.0 + self.waist_curvature * s))
    }

    /// An ideal optic: no degradation at any tilt.
    pub fn ideal() -> Self {
        TiltAberrationModel {
            depth_curvature: 0.0,
            waist_curvature: 0.0,
            reference_tilt: 1.0,
            max_tilt: f64::INFINITY,
        }
    }
}

/// One trap array at rest: a rows x cols grid of Gaussian-beam foci in the
/// z = 0 plane, centered on `(origin_x, origin_y)` plus the grid itself.
///
/// Site `(row, col)` sits at
/// `x = origin_x + (col - (cols-1)/2) * pitch`,
/// `y = origin_y + (row - (rows-1)/2) * pitch`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapArraySnapshot {
    pub rows: usize,
    pub cols: usize,
    /// Site spacing (m).
    pub pitch: f64,
    /// Focus 1/e^2 radius (m), before any tilt broadening.
    pub waist: f64,
    /// Trap light vacuum wavelength (m).
    pub wavelength: f64,
    /// Grid center offset (m).
    pub origin_x: f64,
    pub origin_y: f64,
    /// Per-site depth (J, negative), row-major.
    site_depths: Vec<f64>,
}

impl TrapArraySnapshot {
    pub fn uniform(
        rows: usize,
        cols: usize,
        pitch: f64,
        waist: f64,
        wavelength: f64,
        depth: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config("trap array needs at least one site".into()));
        }
        if depth >= 0.0 {
            return Err(Error::NotTrapping(depth));
        }
        Ok(TrapArraySnapshot {
            rows,
            cols,
            pitch,
            waist,
            wavelength,
            origin_x: 0.0,
            origin_y: 0.0,
            site_depths: vec![depth; rows * cols],
        })
    }

    /// Build an array whose per-site depths follow the illumination profile:
    /// each lens gets the power actually falling on its aperture.
    pub fn from_illumination(
        rows: usize,
        cols: usize,
        geometry: &MicrolensGeometry,
        illum: &IlluminationSpec,
        waist: f64,
        wavelength: f64,
        species: &AtomSpecies,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config("trap array needs at least one site".into()));
        }
        geometry.validate()?;
        illum.validate()?;
        let mut site_depths = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for col in 0..cols {
                let lx = (col as f64 - (cols as f64 - 1.0) / 2.0) * geometry.lens_pitch;
                let ly = (row as f64 - (rows as f64 - 1.0) / 2.0) * geometry.lens_pitch;
                let power = per_lens_power(illum, lx.hypot(ly), geometry.lens_radius);
                site_depths.push(dipole_potential_depth(power, waist, wavelength, species)?);
            }
        }
        Ok(TrapArraySnapshot {
            rows,
            cols,
            pitch: geometry.trap_pitch(),
            waist,
            wavelength,
            origin_x: 0.0,
            origin_y: 0.0,
            site_depths,
        })
    }

    pub fn shifted(mut self, dx: f64, dy: f64) -> Self {
        self.origin_x += dx;
        self.origin_y += dy;
        self
    }

    fn check_site(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::SiteOutOfGrid {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }

    /// Rest position of a site center (m).
    pub fn site_position(&self, row: usize, col: usize) -> Result<(f64, f64)> {
        self.check_site(row, col)?;
        Ok((
            self.origin_x + (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch,
            self.origin_y + (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch,
        ))
    }

    pub fn depth_at(&self, row: usize, col: usize) -> Result<f64> {
        self.check_site(row, col)?;
        Ok(self.site_depths[row * self.cols + col])
    }

    /// Deepest (most negative) site depth (J).
    pub fn max_depth(&self) -> f64 {
        self.site_depths.iter().cloned().fold(0.0, f64::min)
    }

    pub fn rayleigh_range(&self) -> f64 {
        rayleigh_range(self.waist, self.wavelength)
    }

    /// Materialize a tilted copy: origin shifted by the tilt displacement,
    /// depths and waist rescaled by the aberration factors. Equivalent to
    /// evaluating [`ArrayState::new`] at the same tilt (see tests), useful for
    /// inspecting the array an instant of the drive produces.
    pub fn with_tilt(
        &self,
        tilt: f64,
        geometry: &MicrolensGeometry,
        aberration: &TiltAberrationModel,
    ) -> Result<Self> {
        let (depth_factor, waist_factor) = aberration.degradation(tilt)?;
        let mut out = self.clone();
        out.origin_x += tilt * geometry.displacement_per_tilt();
        out.waist *= waist_factor;
        for d in &mut out.site_depths {
            *d *= depth_factor;
        }
        Ok(out)
    }
}

/// Sites beyond this squared-exponent bound contribute < 1e-26 of their depth
/// and are skipped.
const EXP_SKIP: f64 = 60.0;

/// Stencil half-width: sites within this many rows/cols of the nearest site
/// are summed. With pitch/waist >~ 3 the truncation error is below 1e-6.
const STENCIL: i64 = 1;

/// Instantaneous potential-energy surface of one array: the rest snapshot
/// under a tilt (displacement + aberration) and a power scale factor.
#[derive(Debug, Clone)]
pub struct ArrayState<'a> {
    snapshot: &'a TrapArraySnapshot,
    /// Instantaneous grid displacement along x (m).
    pub shift_x: f64,
    /// Power ramp x depth aberration, multiplies every site depth.
    pub depth_scale: f64,
    /// Effective waist^2 after tilt broadening (m^2).
    waist_sq: f64,
    /// Effective inverse squared Rayleigh range (1/m^2).
    inv_zr_sq: f64,
}

impl<'a> ArrayState<'a> {
    /// State at a given `tilt` (rad) and `power_scale` in [0, 1].
    pub fn new(
        snapshot: &'a TrapArraySnapshot,
        tilt: f64,
        power_scale: f64,
        geometry: &MicrolensGeometry,
        aberration: &TiltAberrationModel,
    ) -> Result<Self> {
        let (depth_factor, waist_factor) = aberration.degradation(tilt)?;
        let waist = snapshot.waist * waist_factor;
        let zr = rayleigh_range(waist, snapshot.wavelength);
        Ok(ArrayState {
            snapshot,
            shift_x: tilt * geometry.displacement_per_tilt(),
            depth_scale: power_scale * depth_factor,
            waist_sq: waist * waist,
            inv_zr_sq: 1.0 / (zr * zr),
        })
    }

    /// Reassemble a state from precomputed raw parameters (the dynamics hot
    /// path tabulates these once per step instead of re-deriving them per
    /// atom).
    pub fn from_raw(
        snapshot: &'a TrapArraySnapshot,
        shift_x: f64,
        depth_scale: f64,
        waist_sq: f64,
        inv_zr_sq: f64,
    ) -> Self {
        ArrayState {
            snapshot,
            shift_x,
            depth_scale,
            waist_sq,
            inv_zr_sq,
        }
    }

    /// State of the snapshot exactly as stored (no tilt, full power).
    pub fn at_rest(snapshot: &'a TrapArraySnapshot) -> Self {
        let zr = snapshot.rayleigh_range();
        ArrayState {
            snapshot,
            shift_x: 0.0,
            depth_scale: 1.0,
            waist_sq: snapshot.waist * snapshot.waist,
            inv_zr_sq: 1.0 / (zr * zr),
        }
    }

    /// The raw parameters `(shift_x, depth_scale, waist_sq, inv_zr_sq)`
    /// [`Self::from_raw`] would need to rebuild this state.
    pub fn raw(&self) -> (f64, f64, f64, f64) {
        (self.shift_x, self.depth_scale, self.waist_sq, self.inv_zr_sq)
    }

    /// Grid indices of the site nearest to `(x, y)`, clamped to the grid.
    pub fn nearest_site(&self, x: f64, y: f64) -> (usize, usize) {
        let snap = self.snapshot;
        let fx = (x - snap.origin_x - self.shift_x) / snap.pitch + (snap.cols as f64 - 1.0) / 2.0;
        let fy = (y - snap.origin_y) / snap.pitch + (snap.rows as f64 - 1.0) / 2.0;
        let col = (fx.round().max(0.0) as usize).min(snap.cols - 1);
        let row = (fy.round().max(0.0) as usize).min(snap.rows - 1);
        (row, col)
    }

    /// Squared distance from `(x, y, z)` to the nearest site center (m^2).
    pub fn nearest_site_distance_sq(&self, x: f64, y: f64, z: f64) -> f64 {
        let (row, col) = self.nearest_site(x, y);
        let snap = self.snapshot;
        let sx = snap.origin_x
            + self.shift_x
            + (col as f64 - (snap.cols as f64 - 1.0) / 2.0) * snap.pitch;
        let sy = snap.origin_y + (row as f64 - (snap.rows as f64 - 1.0) / 2.0) * snap.pitch;
        (x - sx).powi(2) + (y - sy).powi(2) + z * z
    }

    /// Potential (J) and gradient (J/m) at a point, summed over the site
    /// stencil around the nearest site.
    ///
    /// Each site contributes `D g exp(-2 rho^2 g / w^2)` with
    /// `g = 1 / (1 + z^2/zR^2)` and `rho` the transverse distance to the site.
    pub fn potential_and_gradient(&self, x: f64, y: f64, z: f64) -> (f64, [f64; 3]) {
        let snap = self.snapshot;
        if self.depth_scale == 0.0 {
            return (0.0, [0.0; 3]);
        }
        let g = 1.0 / (1.0 + z * z * self.inv_zr_sq);
        let (row0, col0) = self.nearest_site(x, y);
        let mut u = 0.0;
        let mut du = [0.0f64; 3];
        for row in stencil_range(row0, snap.rows) {
            for col in stencil_range(col0, snap.cols) {
                let sx = snap.origin_x
                    + self.shift_x
                    + (col as f64 - (snap.cols as f64 - 1.0) / 2.0) * snap.pitch;
                let sy = snap.origin_y + (row as f64 - (snap.rows as f64 - 1.0) / 2.0) * snap.pitch;
                let dx = x - sx;
                let dy = y - sy;
                let rho_sq = dx * dx + dy * dy;
                let expo = 2.0 * rho_sq * g / self.waist_sq;
                if expo > EXP_SKIP {
                    continue;
                }
                let depth = self.depth_scale * snap.site_depths[row * snap.cols + col];
                let us = depth * g * (-expo).exp();
                let transverse = -4.0 * g / self.waist_sq;
                u += us;
                du[0] += us * transverse * dx;
                du[1] += us * transverse * dy;
                du[2] += us * g * (2.0 * z * self.inv_zr_sq) * (expo - 1.0);
            }
        }
        (u, du)
    }

    /// Potential only (J); same truncation as [`Self::potential_and_gradient`].
    pub fn potential(&self, x: f64, y: f64, z: f64) -> f64 {
        self.potential_and_gradient(x, y, z).0
    }

    /// Brute-force sum over every site, no stencil or skip — the reference
    /// the truncated path is tested against.
    #[doc(hidden)]
    pub fn potential_all_sites(&self, x: f64, y: f64, z: f64) -> f64 {
        let snap = self.snapshot;
        let g = 1.0 / (1.0 + z * z * self.inv_zr_sq);
        let mut u = 0.0;
        for row in 0..snap.rows {
            for col in 0..snap.cols {
                let sx = snap.origin_x
                    + self.shift_x
                    + (col as f64 - (snap.cols as f64 - 1.0) / 2.0) * snap.pitch;
                let sy = snap.origin_y + (row as f64 - (snap.rows as f64 - 1.0) / 2.0) * snap.pitch;
                let rho_sq = (x - sx).powi(2) + (y - sy).powi(2);
                let depth = self.depth_scale * snap.site_depths[row * snap.cols + col];
                u += depth * g * (-2.0 * rho_sq * g / self.waist_sq).exp();
            }
        }
        u
    }
}

fn stencil_range(center: usize, len: usize) -> std::ops::RangeInclusive<usize> {
    let lo = center.saturating_sub(STENCIL as usize);
    let hi = (center + STENCIL as usize).min(len - 1);
    lo..=hi
}

/// Total potential and gradient over several arrays (J, J/m).
pub fn total_potential_and_gradient(
    states: &[ArrayState<'_>],
    x: f64,
    y: f64,
    z: f64,
) -> (f64, [f64; 3]) {
    let mut u = 0.0;
    let mut du = [0.0f64; 3];
    for s in states {
        let (us, dus) = s.potential_and_gradient(x, y, z);
        u += us;
        du[0] += dus[0];
        du[1] += dus[1];
        du[2] += dus[2];
    }
    (u, du)
}

mod quadrature {
    //! Gauss-Legendre nodes/weights on [-1, 1] via Newton iteration on the
    //! Legendre recurrence.

    pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    }

    /// Legendre polynomial P_n(x) and derivative.
    fn legendre(n: usize, x: f64) -> (f64, f64) {
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let k = k as f64;
            let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, d)
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        #[test]
        fn integrates_polynomials_exactly() {
            // n-point rule is exact for degree <= 2n-1.
            let (nodes, weights) = gauss_legendre(8);
            for degree in 0..=15u32 {
                let num: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| w * x.powi(degree as i32))
                    .sum();
                let exact = if degree % 2 == 1 {
                    0.0
                } else {
                    2.0 / (degree as f64 + 1.0)
                };
                assert!((num - exact).abs() < 1e-13, "degree {degree}: {num} vs {exact}");
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::BOLTZMANN;
    use approx::assert_relative_eq;
    use rand::Rng;

    const UK: f64 = 1e-6 * BOLTZMANN;

    fn register_illumination() -> IlluminationSpec {
        IlluminationSpec {
            power: 275e-3,
            beam_waist: 450e-6,
            transmission: 0.85,
        }
    }

    fn conveyor_illumination() -> IlluminationSpec {
        IlluminationSpec {
            power: 150e-3,
            beam_waist: 520e-6,
            transmission: 0.85,
        }
    }

    #[test]
    fn central_lens_power_matches_closed_form() {
        let mut illum = register_illumination();
        illum.transmission = 1.0;
        let numeric = per_lens_power(&illum, 0.0, 50e-6);
        let closed = illum.power * (1.0 - (-2.0 * (50e-6f64 / 450e-6).powi(2)).exp());
        assert_relative_eq!(numeric, closed, max_relative = 1e-10);
        assert_relative_eq!(numeric, 6.7069804821673715e-3, max_relative = 1e-10);
    }

    #[test]
    fn delivered_powers_at_both_operating_points() {
        assert_relative_eq!(
            per_lens_power(&register_illumination(), 0.0, 50e-6),
            5.700933409842266e-3,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            per_lens_power(&conveyor_illumination(), 0.0, 50e-6),
            2.33595e-3,
            max_relative = 1e-4
        );
    }

    #[test]
    fn off_center_lens_gets_less_power_symmetrically() {
        let illum = register_illumination();
        let center = per_lens_power(&illum, 0.0, 50e-6);
        let off = per_lens_power(&illum, 125e-6, 50e-6);
        assert!(off < center);
        assert!(off > 0.5 * center, "one pitch out should still be bright");
        // Pure offset symmetry.
        assert_relative_eq!(
            per_lens_power(&illum, 125e-6, 50e-6),
            per_lens_power(&illum, 125e-6, 50e-6),
            max_relative = 1e-14
        );
        // Rough analytic check: intensity ratio at the lens center.
        let ratio = off / center;
        let intensity_ratio = (-2.0 * (125e-6f64 / 450e-6).powi(2)).exp();
        assert!((ratio - intensity_ratio).abs() < 0.01);
    }

    #[test]
    fn geometry_derived_quantities() {
        let g = MicrolensGeometry::default();
        g.validate().unwrap();
        assert_relative_eq!(g.trap_pitch(), 55.46875e-6, max_relative = 1e-12);
        assert_relative_eq!(g.half_pitch_tilt(), 0.0625, max_relative = 1e-12);
        // 22 urad of residual tilt jitter moves the traps under 10 nm.
        let jitter = 22e-6 * g.displacement_per_tilt();
        assert_relative_eq!(jitter, 9.7625e-9, max_relative = 1e-9);
        assert!(jitter <= 10e-9);
    }

    #[test]
    fn tilt_degradation_calibration_points() {
        let g = MicrolensGeometry::default();
        let ab = TiltAberrationModel::for_geometry(&g);
        let (d0, w0) = ab.degradation(0.0).unwrap();
        assert_eq!((d0, w0), (1.0, 1.0));
        let (d, w) = ab.degradation(g.half_pitch_tilt()).unwrap();
        assert_relative_eq!(d, 0.92, max_relative = 1e-12);
        assert_relative_eq!(w, 1.04, max_relative = 1e-12);
        // Even in tilt.
        let (dm, wm) = ab.degradation(-g.half_pitch_tilt()).unwrap();
        assert_eq!((d, w), (dm, wm));
        assert!(matches!(
            ab.degradation(0.13),
            Err(Error::TiltOutOfModel { .. })
        ));
    }

    fn register_snapshot() -> TrapArraySnapshot {
        TrapArraySnapshot::from_illumination(
            5,
            5,
            &MicrolensGeometry::default(),
            &register_illumination(),
            3.8e-6,
            805e-9,
            &AtomSpecies::rb85(),
        )
        .unwrap()
    }

    #[test]
    fn illuminated_array_center_depth_in_band() {
        let snap = register_snapshot();
        let center = snap.depth_at(2, 2).unwrap();
        assert!((408.5..=451.5).contains(&(-center / UK)), "{}", -center / UK);
        // Corner lens sees a weaker beam.
        let corner = snap.depth_at(0, 0).unwrap();
        assert!(corner > center, "corner {corner} should be shallower than {center}");
        assert!(corner < 0.0);
    }

    #[test]
    fn site_positions_and_grid_errors() {
        let snap = register_snapshot();
        let (x, y) = snap.site_position(2, 2).unwrap();
        assert_eq!((x, y), (0.0, 0.0));
        let (x, y) = snap.site_position(2, 3).unwrap();
        assert_relative_eq!(x, 55.46875e-6, max_relative = 1e-12);
        assert_eq!(y, 0.0);
        assert!(matches!(
            snap.site_position(5, 0),
            Err(Error::SiteOutOfGrid { .. })
        ));
        assert!(matches!(
            snap.depth_at(0, 9),
            Err(Error::SiteOutOfGrid { .. })
        ));
    }

    #[test]
    fn potential_at_site_center_equals_depth() {
        let snap = register_snapshot();
        let state = ArrayState::at_rest(&snap);
        let (u, du) = state.potential_and_gradient(0.0, 0.0, 0.0);
        assert_relative_eq!(u, snap.depth_at(2, 2).unwrap(), max_relative = 1e-10);
        // Center of a symmetric array: zero force.
        assert!(du[0].abs() < 1e-25 && du[1].abs() < 1e-25 && du[2].abs() < 1e-25);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let snap = register_snapshot();
        let g = MicrolensGeometry::default();
        let ab = TiltAberrationModel::for_geometry(&g);
        let state = ArrayState::new(&snap, 0.03, 0.8, &g, &ab).unwrap();
        let mut rng = crate::rng::stream(11, crate::rng::StreamPurpose::Measurement, 0);
        let h = 1e-10;
        for _ in 0..200 {
            let x = rng.gen_range(-1.5e-4..1.5e-4);
            let y = rng.gen_range(-1.5e-4..1.5e-4);
            let z = rng.gen_range(-1.0e-4..1.0e-4);
            let (_, du) = state.potential_and_gradient(x, y, z);
            let fd = [
                (state.potential(x + h, y, z) - state.potential(x - h, y, z)) / (2.0 * h),
                (state.potential(x, y + h, z) - state.potential(x, y - h, z)) / (2.0 * h),
                (state.potential(x, y, z + h) - state.potential(x, y, z - h)) / (2.0 * h),
            ];
            for axis in 0..3 {
                let scale = du[axis].abs().max(1e-3 * UK / 1e-6);
                assert!(
                    (du[axis] - fd[axis]).abs() / scale < 1e-3,
                    "axis {axis} at ({x:.2e},{y:.2e},{z:.2e}): {} vs {}",
                    du[axis],
                    fd[axis]
                );
            }
        }
    }

    #[test]
    fn stencil_matches_full_sum() {
        let snap = register_snapshot();
        let state = ArrayState::at_rest(&snap);
        let mut rng = crate::rng::stream(12, crate::rng::StreamPurpose::Measurement, 0);
        for _ in 0..500 {
            let x = rng.gen_range(-1.6e-4..1.6e-4);
            let y = rng.gen_range(-1.6e-4..1.6e-4);
            let z = rng.gen_range(-1.5e-4..1.5e-4);
            let fast = state.potential(x, y, z);
            let full = state.potential_all_sites(x, y, z);
            let scale = full.abs().max(1e-6 * snap.max_depth().abs());
            assert!(
                (fast - full).abs() / scale < 1e-6,
                "at ({x:.2e},{y:.2e},{z:.2e}): {fast} vs {full}"
            );
        }
    }

    #[test]
    fn materialized_tilt_equals_parametric_state() {
        let snap = register_snapshot();
        let g = MicrolensGeometry::default();
        let ab = TiltAberrationModel::for_geometry(&g);
        let tilt = 0.04;
        let parametric = ArrayState::new(&snap, tilt, 1.0, &g, &ab).unwrap();
        let materialized_snap = snap.with_tilt(tilt, &g, &ab).unwrap();
        let materialized = ArrayState::at_rest(&materialized_snap);
        let mut rng = crate::rng::stream(13, crate::rng::StreamPurpose::Measurement, 0);
        for _ in 0..200 {
            let x = rng.gen_range(-1.5e-4..1.5e-4);
            let y = rng.gen_range(-1.5e-4..1.5e-4);
            let z = rng.gen_range(-1.0e-4..1.0e-4);
            let (u1, d1) = parametric.potential_and_gradient(x, y, z);
            let (u2, d2) = materialized.potential_and_gradient(x, y, z);
            assert_relative_eq!(u1, u2, max_relative = 1e-12, epsilon = 1e-40);
            for axis in 0..3 {
                assert_relative_eq!(d1[axis], d2[axis], max_relative = 1e-12, epsilon = 1e-34);
            }
        }
    }

    #[test]
    fn tilted_state_shifts_by_half_pitch() {
        let snap = register_snapshot();
        let g = MicrolensGeometry::default();
        let ab = TiltAberrationModel::for_geometry(&g);
        let state = ArrayState::new(&snap, g.half_pitch_tilt(), 1.0, &g, &ab).unwrap();
        assert_relative_eq!(state.shift_x, 0.5 * g.trap_pitch(), max_relative = 1e-12);
        // Minimum now sits at the shifted center, and is 8% shallower.
        let u = state.potential(state.shift_x, 0.0, 0.0);
        assert_relative_eq!(
            u,
            0.92 * snap.depth_at(2, 2).unwrap(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn nearest_site_distance() {
        let snap = register_snapshot();
        let state = ArrayState::at_rest(&snap);
        let d2 = state.nearest_site_distance_sq(1e-6, -2e-6, 3e-6);
        assert_relative_eq!(d2, 14e-12, max_relative = 1e-12);
        // Past the grid edge, distance is to the outermost site.
        let far = state.nearest_site_distance_sq(5.0 * 55.46875e-6, 0.0, 0.0);
        assert_relative_eq!(far, (3.0 * 55.46875e-6f64).powi(2), max_relative = 1e-12);
    }
}
