//! Experiment execution: turn a validated config into a deterministic set of
//! text artifacts and write them to disk as an atomic bundle.
//!
//! Every artifact except `provenance.txt` is a pure function of the config,
//! so re-running a config reproduces the bundle byte for byte. A bundle
//! directory holds:
//!
//! - `manifest.txt` — one artifact name per line (sorted)
//! - `config.toml` — the resolved config (defaults materialized, effective
//!   seed recorded)
//! - `provenance.txt` — tool version, seed, wall-clock timestamp
//! - experiment-specific tables (`.tsv`), reports (`.txt`), and grayscale
//!   occupancy images (`.pgm`)

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coherence::{
    echo_contrast_scan, fit_gaussian_contrast, ramsey_contrast_curve, CoherenceProtocol,
    GaussianFit,
};
use crate::config::{
    ArrangementConfig, ExperimentConfig, ExperimentKind, HandoverDirections, CONFIG_VERSION,
};
use crate::dynamics::{
    run_handover, run_hold, run_register, run_transport_scan, HandoverDirection, PositionFrame,
    RegisterOutcome, SimulationSetup,
};
use crate::error::{Error, Result};
use crate::table::{Report, Table};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// An in-memory artifact set: ordered `(name, content)` text files.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    files: Vec<(String, String)>,
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, content: String) {
        let name = name.into();
        debug_assert!(self.file(&name).is_none(), "duplicate artifact {name}");
        self.files.push((name, content));
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Append the provenance stamp. This is the only artifact carrying
    /// wall-clock state; comparisons between bundles should skip it.
    pub fn stamp(&mut self, seed: u64) {
        let unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut report = Report::default();
        report.push("tool", format_args!("{TOOL_NAME} {TOOL_VERSION}"));
        report.push("config_version", CONFIG_VERSION);
        report.push("seed", seed);
        report.push("timestamp_unix", unix);
        self.push("provenance.txt", report.to_text());
    }

    /// Write every artifact plus a manifest into `parent/label`. The files
    /// land in a staging directory first and the directory is renamed into
    /// place at the end, so a failed run leaves no partial bundle behind.
    pub fn write_atomic(&self, parent: &Path, label: &str) -> Result<PathBuf> {
        let target = parent.join(label);
        if target.exists() {
            return Err(Error::Config(format!(
                "output bundle {} already exists; remove it or pick another --out",
                target.display()
            )));
        }
        std::fs::create_dir_all(parent)?;
        let staging = parent.join(format!("{label}.partial"));
        if staging.exists() {
            std::fs::remove_dir_all(&staging)?;
        }
        std::fs::create_dir(&staging)?;
        let written = (|| -> Result<()> {
            let mut names: Vec<&str> = self.names().collect();
            names.sort_unstable();
            let mut manifest = String::new();
            for name in names {
                manifest.push_str(name);
                manifest.push('\n');
            }
            std::fs::write(staging.join("manifest.txt"), manifest)?;
            for (name, content) in &self.files {
                std::fs::write(staging.join(name), content)?;
            }
            Ok(())
        })();
        match written {
            Ok(()) => {
                std::fs::rename(&staging, &target)?;
                Ok(target)
            }
            Err(e) => {
                let _ = std::fs::remove_dir_all(&staging);
                Err(e)
            }
        }
    }
}

/// Run the experiment a config describes and collect its artifacts.
/// `seed_override` replaces the config's seed (the CLI's `--seed`).
pub fn run_experiment(config: &ExperimentConfig, seed_override: Option<u64>) -> Result<Bundle> {
    config.validate()?;
    let setup = config.setup(seed_override)?;
    let mut bundle = Bundle::new();
    let mut resolved = config.clone();
    resolved.dynamics.seed = setup.seed;
    let text = toml::to_string_pretty(&resolved)
        .map_err(|e| Error::Config(format!("cannot serialize resolved config: {e}")))?;
    bundle.push("config.toml", text);
    match config.experiment {
        ExperimentKind::TransportScan => transport_scan(config, &setup, &mut bundle)?,
        ExperimentKind::RegisterShift => register_shift(config, &setup, &mut bundle)?,
        ExperimentKind::Handover => handover(config, &setup, &mut bundle)?,
        ExperimentKind::EchoScan => echo_scan(config, &setup, &mut bundle)?,
        ExperimentKind::Ramsey => ramsey(config, &setup, &mut bundle)?,
        ExperimentKind::Lifetime => lifetime(config, &setup, &mut bundle)?,
    }
    Ok(bundle)
}

/// Single-site experiments run on the first selected site (the central site
/// under the default `sites = "center"` selection).
fn lead_site(config: &ExperimentConfig) -> (usize, usize) {
    config.sites()[0]
}

fn transport_scan(
    config: &ExperimentConfig,
    setup: &SimulationSetup,
    bundle: &mut Bundle,
) -> Result<()> {
    let block = config.transport_scan.as_ref().expect("validated");
    let durations: Vec<f64> = block.durations_ms.iter().map(|d| d * 1e-3).collect();
    let site = lead_site(config);
    let rows = run_transport_scan(
        setup,
        site,
        config.dynamics.atoms_per_site,
        config.temperature(),
        &durations,
        config.control.sequence.ramp,
    )?;
    let mut table = Table::new(vec![
        "duration_ms",
        "temperature_before_uk",
        "temperature_after_uk",
        "heating_uk",
        "survival",
    ]);
    for row in &rows {
        table.push_row(vec![
            row.duration * 1e3,
            row.temperature_before * 1e6,
            row.temperature_after * 1e6,
            row.heating * 1e6,
            row.survival,
        ]);
    }
    bundle.push("transport_scan.tsv", table.to_tsv());
    let mut summary = base_summary(config, site);
    summary.push("sweep_distance_um", setup.geometry.trap_pitch() * 1e6);
    bundle.push("summary.txt", summary.to_text());
    Ok(())
}

fn frame_centroid(frame: &PositionFrame) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..frame.x.len() {
        if frame.alive[i] {
            sum += frame.x[i];
            n += 1;
        }
    }
    (if n > 0 { sum / n as f64 } else { f64::NAN }, n)
}

fn register_shift(
    config: &ExperimentConfig,
    setup: &SimulationSetup,
    bundle: &mut Bundle,
) -> Result<()> {
    let block = config.register_shift.clone().unwrap_or_default();
    let sites = config.sites();
    let spec = config.control.sequence.spec();
    let outcome = run_register(
        setup,
        &spec,
        &sites,
        config.dynamics.atoms_per_site,
        config.temperature(),
    )?;
    let mut table = Table::new(vec!["checkpoint", "time_ms", "centroid_x_um", "alive"]);
    for (i, frame) in outcome.frames.iter().enumerate() {
        let (centroid, alive) = frame_centroid(frame);
        table.push_row(vec![i as f64, frame.time * 1e3, centroid * 1e6, alive as f64]);
    }
    bundle.push("centroids.tsv", table.to_tsv());

    let mut summary = base_summary(config, sites[0]);
    summary.push("sites", sites.len());
    summary.push("cycles", outcome.cycles);
    summary.push("loaded", outcome.loaded);
    summary.push("alive", outcome.alive);
    summary.push("retention", outcome.alive as f64 / outcome.loaded as f64);
    summary.push("background_losses", outcome.background_losses);
    summary.push("unbound_losses", outcome.unbound_losses);
    summary.push("halo_losses", outcome.halo_losses);
    summary.push("centroid_shift_um", outcome.centroid_shift * 1e6);
    summary.push("expected_shift_um", outcome.expected_shift * 1e6);
    summary.push("temperature_initial_uk", outcome.temperature_initial * 1e6);
    summary.push("temperature_final_uk", outcome.temperature_final * 1e6);
    summary.push(
        "heating_uk",
        (outcome.temperature_final - outcome.temperature_initial) * 1e6,
    );
    bundle.push("summary.txt", summary.to_text());

    let images = render_register_images(
        setup,
        &sites,
        &outcome,
        block.image_pixel_um * 1e-6,
        block.image_blur_um * 1e-6,
    )?;
    for (i, image) in images.iter().enumerate() {
        bundle.push(format!("occupancy_{i:02}.pgm"), image.to_pgm());
    }
    Ok(())
}

fn handover(
    config: &ExperimentConfig,
    setup: &SimulationSetup,
    bundle: &mut Bundle,
) -> Result<()> {
    let block = config.handover.clone().unwrap_or_default();
    let site = lead_site(config);
    let tilt = setup.geometry.half_pitch_tilt();
    let duration = config.control.sequence.handover_ms * 1e-3;
    let directions: &[HandoverDirection] = match block.directions {
        HandoverDirections::Both => &[
            HandoverDirection::MovingToStatic,
            HandoverDirection::StaticToMoving,
        ],
        HandoverDirections::ToStatic => &[HandoverDirection::MovingToStatic],
        HandoverDirections::ToMoving => &[HandoverDirection::StaticToMoving],
    };
    let mut report = base_summary(config, site);
    report.push("crossfade_ms", duration * 1e3);
    for &direction in directions {
        let outcome = run_handover(
            setup,
            direction,
            tilt,
            site,
            config.dynamics.atoms_per_site,
            config.temperature(),
            duration,
        )?;
        let prefix = match direction {
            HandoverDirection::MovingToStatic => "to_static",
            HandoverDirection::StaticToMoving => "to_moving",
        };
        let lost = outcome.halo_losses + outcome.background_losses + outcome.unbound_losses;
        let retention = 1.0 - lost as f64 / outcome.exposed as f64;
        let sigma = (retention * (1.0 - retention) / outcome.exposed as f64)
            .max(0.0)
            .sqrt();
        report.push(&format!("{prefix}_exposed"), outcome.exposed);
        report.push(&format!("{prefix}_retention"), retention);
        report.push(&format!("{prefix}_retention_sigma"), sigma);
        report.push(&format!("{prefix}_halo_fraction"), outcome.halo_fraction);
        report.push(
            &format!("{prefix}_expected_probability"),
            outcome.expected_probability,
        );
    }
    bundle.push("handover.txt", report.to_text());
    Ok(())
}

fn echo_scan(
    config: &ExperimentConfig,
    setup: &SimulationSetup,
    bundle: &mut Bundle,
) -> Result<()> {
    let block = config.coherence.as_ref().expect("validated");
    let model = config.dephasing_model(setup);
    let site = lead_site(config);
    let t_pis: Vec<f64> = block.t_pi_ms.iter().map(|t| t * 1e-3).collect();
    let mut fits: Vec<(CoherenceProtocol, GaussianFit)> = Vec::new();
    for &protocol in &block.protocols {
        let curve = echo_contrast_scan(
            setup,
            protocol,
            site,
            config.dynamics.atoms_per_site,
            config.temperature(),
            &t_pis,
            &model,
        )?;
        let mut table = Table::new(vec!["total_time_ms", "contrast", "sigma"]);
        for i in 0..curve.times.len() {
            table.push_row(vec![curve.times[i] * 1e3, curve.contrast[i], curve.sigma[i]]);
        }
        bundle.push(format!("echo_{}.tsv", protocol.name()), table.to_tsv());
        let fit = fit_gaussian_contrast(&curve.times, &curve.contrast, &curve.sigma)?;
        let mut fit_report = Report::default();
        fit_report.push("protocol", protocol.name());
        fit_report.push("amplitude", fit.amplitude);
        fit_report.push("amplitude_sigma", fit.amplitude_sigma);
        fit_report.push("t2_ms", fit.t2 * 1e3);
        fit_report.push("t2_sigma_ms", fit.t2_sigma * 1e3);
        fit_report.push("r_squared", fit.r_squared);
        bundle.push(format!("fit_{}.txt", protocol.name()), fit_report.to_text());
        fits.push((protocol, fit));
    }
    let mut summary = base_summary(config, site);
    summary.push("heating_rate_uk_per_s", block.heating_rate_uk_per_s);
    if let Some((_, rest)) = fits
        .iter()
        .find(|(p, _)| *p == CoherenceProtocol::Rest)
    {
        for (protocol, fit) in &fits {
            if *protocol == CoherenceProtocol::Rest {
                continue;
            }
            let ratio = fit.t2 / rest.t2;
            let sigma = ratio
                * ((fit.t2_sigma / fit.t2).powi(2) + (rest.t2_sigma / rest.t2).powi(2)).sqrt();
            summary.push(&format!("{}_ratio_to_rest", protocol.name()), ratio);
            summary.push(&format!("{}_ratio_sigma", protocol.name()), sigma);
        }
    }
    bundle.push("summary.txt", summary.to_text());
    Ok(())
}

fn ramsey(config: &ExperimentConfig, setup: &SimulationSetup, bundle: &mut Bundle) -> Result<()> {
    let block = config.coherence.as_ref().expect("validated");
    let model = config.dephasing_model(setup);
    let site = lead_site(config);
    let windows: Vec<f64> = block.windows_ms.iter().map(|w| w * 1e-3).collect();
    let curve = ramsey_contrast_curve(
        setup,
        site,
        config.dynamics.atoms_per_site,
        config.temperature(),
        &windows,
        &model,
    )?;
    let mut table = Table::new(vec!["window_ms", "contrast", "sigma"]);
    for i in 0..curve.times.len() {
        table.push_row(vec![curve.times[i] * 1e3, curve.contrast[i], curve.sigma[i]]);
    }
    bundle.push("ramsey.tsv", table.to_tsv());
    let mut summary = base_summary(config, site);
    // The curve can stay above 1/e over short window grids; record NaN so the
    // report flags it instead of failing the whole run.
    let one_over_e = curve.one_over_e_time().map(|t| t * 1e3).unwrap_or(f64::NAN);
    summary.push("one_over_e_ms", one_over_e);
    bundle.push("summary.txt", summary.to_text());
    Ok(())
}

fn lifetime(config: &ExperimentConfig, setup: &SimulationSetup, bundle: &mut Bundle) -> Result<()> {
    let block = config.lifetime.as_ref().expect("validated");
    let duration = block.duration_ms * 1e-3;
    let site = lead_site(config);
    let atoms = config.dynamics.atoms_per_site;
    let times: Vec<f64> = (1..=block.checkpoints)
        .map(|i| duration * i as f64 / block.checkpoints as f64)
        .collect();
    let (ensemble, output) = run_hold(
        setup,
        site,
        atoms,
        config.temperature(),
        0.0,
        duration,
        &times,
    )?;
    let mut table = Table::new(vec!["time_ms", "alive", "survival"]);
    let mut points: Vec<(f64, f64)> = Vec::new();
    for frame in &output.frames {
        let alive = frame.alive.iter().filter(|&&a| a).count();
        let survival = alive as f64 / atoms as f64;
        table.push_row(vec![frame.time * 1e3, alive as f64, survival]);
        if survival > 0.0 {
            points.push((frame.time, survival.ln()));
        } else {
            break;
        }
    }
    bundle.push("lifetime.tsv", table.to_tsv());
    let mut summary = base_summary(config, site);
    summary.push("final_alive", ensemble.alive_count());
    summary.push(
        "configured_lifetime_s",
        config.dynamics.background_lifetime_s,
    );
    summary.push("fitted_lifetime_s", fitted_lifetime(&points));
    bundle.push("summary.txt", summary.to_text());
    Ok(())
}

/// 1/e time from a least-squares line through `(t, ln survival)` points;
/// infinite when nothing decays.
fn fitted_lifetime(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::INFINITY;
    }
    let n = points.len() as f64;
    let (st, sl) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(t, l)| (a + t, b + l));
    let (mt, ml) = (st / n, sl / n);
    let mut stt = 0.0;
    let mut stl = 0.0;
    for &(t, l) in points {
        stt += (t - mt) * (t - mt);
        stl += (t - mt) * (l - ml);
    }
    if stt == 0.0 {
        return f64::INFINITY;
    }
    let slope = stl / stt;
    if slope >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / slope
    }
}

fn base_summary(config: &ExperimentConfig, site: (usize, usize)) -> Report {
    let mut report = Report::default();
    report.push("experiment", config.experiment.name());
    report.push("label", &config.label);
    report.push("site_row", site.0);
    report.push("site_col", site.1);
    report.push("atoms_per_site", config.dynamics.atoms_per_site);
    report.push("temperature_uk", config.dynamics.temperature_uk);
    report
}

/// A grayscale occupancy map: atom counts binned onto a square pixel grid and
/// optionally convolved with a Gaussian point-spread function. Pixel (0, 0)
/// covers the lower-left corner `(min_x, min_y)`; counts are stored row-major
/// with x along the columns.
#[derive(Debug, Clone)]
pub struct OccupancyImage {
    pub cols: usize,
    pub rows: usize,
    /// Pixel side length (m).
    pub pixel_pitch: f64,
    /// Left edge of the first pixel column (m).
    pub min_x: f64,
    /// Bottom edge of the first pixel row (m).
    pub min_y: f64,
    pub counts: Vec<f64>,
}

impl OccupancyImage {
    /// Bin the alive atoms of one frame. Atoms outside the window are
    /// dropped, so the total never exceeds the ensemble size; blurring uses a
    /// normalized kernel and cannot raise it either.
    pub fn from_frame(
        frame: &PositionFrame,
        min: (f64, f64),
        max: (f64, f64),
        pixel_pitch: f64,
        blur_radius: f64,
    ) -> Result<Self> {
        if !(pixel_pitch > 0.0) {
            return Err(Error::Config(format!(
                "image pixel pitch must be positive, got {pixel_pitch}"
            )));
        }
        if blur_radius < 0.0 {
            return Err(Error::Config(format!(
                "image blur radius must be >= 0, got {blur_radius}"
            )));
        }
        if !(max.0 > min.0 && max.1 > min.1) {
            return Err(Error::Config("image window is empty".into()));
        }
        // Tolerate roundoff in the span/pitch quotient so a window that is
        // meant to be an integer number of pixels wide stays that wide.
        let cols = ((max.0 - min.0) / pixel_pitch - 1e-9).ceil().max(1.0) as usize;
        let rows = ((max.1 - min.1) / pixel_pitch - 1e-9).ceil().max(1.0) as usize;
        let mut image = OccupancyImage {
            cols,
            rows,
            pixel_pitch,
            min_x: min.0,
            min_y: min.1,
            counts: vec![0.0; rows * cols],
        };
        for i in 0..frame.x.len() {
            if !frame.alive[i] {
                continue;
            }
            let fx = (frame.x[i] - min.0) / pixel_pitch;
            let fy = (frame.y[i] - min.1) / pixel_pitch;
            if fx < 0.0 || fy < 0.0 {
                continue;
            }
            let (ix, iy) = (fx as usize, fy as usize);
            if ix >= cols || iy >= rows {
                continue;
            }
            image.counts[iy * cols + ix] += 1.0;
        }
        if blur_radius > 0.0 {
            image.blur(blur_radius);
        }
        Ok(image)
    }

    /// Separable Gaussian blur; `radius` is the 1/e^2 intensity radius of the
    /// point-spread function. The kernel is normalized and truncated at the
    /// image edge, so total counts never grow.
    fn blur(&mut self, radius: f64) {
        let sigma = 0.5 * radius / self.pixel_pitch;
        let half = (3.0 * sigma).ceil() as i64;
        if half == 0 {
            return;
        }
        let kernel: Vec<f64> = (-half..=half)
            .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|w| w / norm).collect();
        let (rows, cols) = (self.rows, self.cols);
        let mut pass = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = 0.0;
                for (j, w) in kernel.iter().enumerate() {
                    let cc = c as i64 + j as i64 - half;
                    if cc >= 0 && (cc as usize) < cols {
                        acc += w * self.counts[r * cols + cc as usize];
                    }
                }
                pass[r * cols + c] = acc;
            }
        }
        for c in 0..cols {
            for r in 0..rows {
                let mut acc = 0.0;
                for (j, w) in kernel.iter().enumerate() {
                    let rr = r as i64 + j as i64 - half;
                    if rr >= 0 && (rr as usize) < rows {
                        acc += w * pass[rr as usize * cols + c];
                    }
                }
                self.counts[r * cols + c] = acc;
            }
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Intensity-weighted mean x position (m); NaN for an empty image.
    pub fn centroid_x(&self) -> f64 {
        let total = self.total();
        let mut acc = 0.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                acc += self.counts[r * self.cols + c]
                    * (self.min_x + (c as f64 + 0.5) * self.pixel_pitch);
            }
        }
        acc / total
    }

    /// Plain-text grayscale PGM (P2), top row = largest y, normalized to the
    /// brightest pixel. An empty image renders as all zeros.
    pub fn to_pgm(&self) -> String {
        let max = self.counts.iter().cloned().fold(0.0, f64::max);
        let mut out = format!("P2\n{} {}\n255\n", self.cols, self.rows);
        for r in (0..self.rows).rev() {
            for c in 0..self.cols {
                let value = if max > 0.0 {
                    (self.counts[r * self.cols + c] / max * 255.0).round() as u32
                } else {
                    0
                };
                if c > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{value}");
            }
            out.push('\n');
        }
        out
    }
}

/// One occupancy image per recorded frame (load plus each cycle end), all on
/// a common window so the pattern's motion is visible across the series.
pub fn render_register_images(
    setup: &SimulationSetup,
    sites: &[(usize, usize)],
    outcome: &RegisterOutcome,
    pixel_pitch: f64,
    blur_radius: f64,
) -> Result<Vec<OccupancyImage>> {
    let pitch = setup.geometry.trap_pitch();
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(row, col) in sites {
        let (x, y) = setup.moving_array.site_position(row, col)?;
        min = (min.0.min(x), min.1.min(y));
        max = (max.0.max(x), max.1.max(y));
    }
    let min = (min.0 - pitch, min.1 - pitch);
    let max = (max.0 + outcome.expected_shift + pitch, max.1 + pitch);
    outcome
        .frames
        .iter()
        .map(|frame| OccupancyImage::from_frame(frame, min, max, pixel_pitch, blur_radius))
        .collect()
}

fn read_artifact(dir: &Path, name: &str) -> Result<String> {
    std::fs::read_to_string(dir.join(name))
        .map_err(|_| Error::MissingArtifact(format!("{} in {}", name, dir.display())))
}

fn push_check(out: &mut String, ok: bool, what: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "[{verdict}] {what}");
}

/// Summarize a bundle directory: tabulate its key numbers and flag the
/// checks its artifacts support. The output is a pure function of the
/// artifacts (the provenance stamp is ignored), so re-running the report is
/// byte-identical.
pub fn report_bundle(dir: &Path) -> Result<String> {
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).map_err(|_| {
        Error::MissingArtifact(format!(
            "manifest.txt in {} (not a bundle directory?)",
            dir.display()
        ))
    })?;
    let names: Vec<&str> = manifest.lines().filter(|l| !l.is_empty()).collect();
    let missing: Vec<&str> = names
        .iter()
        .copied()
        .filter(|name| !dir.join(name).exists())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifact(missing.join(", ")));
    }
    let config = ExperimentConfig::from_toml(&read_artifact(dir, "config.toml")?)?;
    let mut out = String::new();
    let _ = writeln!(out, "bundle      {}", config.label);
    let _ = writeln!(out, "experiment  {}", config.experiment.name());
    match config.experiment {
        ExperimentKind::TransportScan => report_transport_scan(dir, &mut out)?,
        ExperimentKind::RegisterShift => report_register_shift(dir, &mut out)?,
        ExperimentKind::Handover => report_handover(dir, &config, &mut out)?,
        ExperimentKind::EchoScan => report_echo_scan(dir, &config, &mut out)?,
        ExperimentKind::Ramsey => report_ramsey(dir, &mut out)?,
        ExperimentKind::Lifetime => report_lifetime(dir, &mut out)?,
    }
    Ok(out)
}

fn report_transport_scan(dir: &Path, out: &mut String) -> Result<()> {
    let table = Table::from_tsv(&read_artifact(dir, "transport_scan.tsv")?)?;
    let d = table.column("duration_ms")?;
    let h = table.column("heating_uk")?;
    let s = table.column("survival")?;
    let _ = writeln!(out, "\n{:>12} {:>12} {:>10}", "duration_ms", "heating_uk", "survival");
    for row in &table.rows {
        let _ = writeln!(out, "{:>12.3} {:>12.3} {:>10.4}", row[d], row[h], row[s]);
    }
    let sorted = table.rows.windows(2).all(|w| w[1][d] >= w[0][d]);
    let heating_down = table.rows.windows(2).all(|w| w[1][h] <= w[0][h]);
    let loss_down = table.rows.windows(2).all(|w| w[1][s] >= w[0][s]);
    push_check(
        out,
        sorted && heating_down,
        "heating decreases monotonically with sweep duration",
    );
    push_check(
        out,
        sorted && loss_down,
        "loss decreases monotonically with sweep duration",
    );
    Ok(())
}

fn report_register_shift(dir: &Path, out: &mut String) -> Result<()> {
    let summary = Report::from_text(&read_artifact(dir, "summary.txt")?)?;
    for key in [
        "cycles",
        "loaded",
        "alive",
        "retention",
        "halo_losses",
        "centroid_shift_um",
        "expected_shift_um",
        "heating_uk",
    ] {
        let _ = writeln!(out, "{:<20} {}", key, summary.get(key).unwrap_or("-"));
    }
    let shift = summary.get_f64("centroid_shift_um")?;
    let expected = summary.get_f64("expected_shift_um")?;
    let heating = summary.get_f64("heating_uk")?;
    push_check(
        out,
        (shift - expected).abs() <= 0.5,
        "centroid shift within 0.5 um of cycles * trap pitch",
    );
    push_check(out, heating < 2.0, "total heating below 2 uK");
    Ok(())
}

fn report_handover(dir: &Path, config: &ExperimentConfig, out: &mut String) -> Result<()> {
    let report = Report::from_text(&read_artifact(dir, "handover.txt")?)?;
    for (key, value) in &report.entries {
        if key.starts_with("to_") || key == "crossfade_ms" {
            let _ = writeln!(out, "{key:<28} {value}");
        }
    }
    if let Ok(retention) = report.get_f64("to_moving_retention") {
        push_check(out, retention > 0.99, "handover to the steered array keeps > 99%");
    }
    if let Ok(retention) = report.get_f64("to_static_retention") {
        match config.optics.arrangement {
            ArrangementConfig::Asymmetric => push_check(
                out,
                (0.77..=0.83).contains(&retention),
                "tilted handover to the deep array lands at 80 +- 3%",
            ),
            _ => push_check(out, retention > 0.99, "handover to the deep array keeps > 99%"),
        }
    }
    Ok(())
}

fn report_echo_scan(dir: &Path, config: &ExperimentConfig, out: &mut String) -> Result<()> {
    let block = config.coherence.as_ref().ok_or_else(|| {
        Error::Config("bundle config lost its [coherence] block".into())
    })?;
    let summary = Report::from_text(&read_artifact(dir, "summary.txt")?)?;
    let _ = writeln!(
        out,
        "\n{:<20} {:>10} {:>10} {:>12} {:>10}",
        "protocol", "amplitude", "t2_ms", "t2_sigma_ms", "r_squared"
    );
    let mut all_fits_good = true;
    for &protocol in &block.protocols {
        let fit = Report::from_text(&read_artifact(dir, &format!("fit_{}.txt", protocol.name()))?)?;
        let r_squared = fit.get_f64("r_squared")?;
        all_fits_good &= r_squared > 0.98;
        let _ = writeln!(
            out,
            "{:<20} {:>10.4} {:>10.3} {:>12.3} {:>10.4}",
            protocol.name(),
            fit.get_f64("amplitude")?,
            fit.get_f64("t2_ms")?,
            fit.get_f64("t2_sigma_ms")?,
            r_squared,
        );
    }
    push_check(out, all_fits_good, "every envelope fit has R^2 > 0.98");
    let has_rest = block.protocols.contains(&CoherenceProtocol::Rest);
    if has_rest {
        for &protocol in &block.protocols {
            if protocol == CoherenceProtocol::Rest {
                continue;
            }
            let key = format!("{}_ratio_to_rest", protocol.name());
            let ratio = summary.get_f64(&key)?;
            let _ = writeln!(out, "{key:<34} {ratio:.4}");
            push_check(
                out,
                (ratio - 1.0).abs() <= 0.05,
                &format!("{} coherence time matches rest within 5%", protocol.name()),
            );
        }
    }
    Ok(())
}

fn report_ramsey(dir: &Path, out: &mut String) -> Result<()> {
    let summary = Report::from_text(&read_artifact(dir, "summary.txt")?)?;
    let one_over_e = summary.get_f64("one_over_e_ms")?;
    let _ = writeln!(out, "one_over_e_ms  {one_over_e}");
    push_check(
        out,
        (2.5..=10.0).contains(&one_over_e),
        "Ramsey 1/e time falls in the 2.5-10 ms band",
    );
    Ok(())
}

fn report_lifetime(dir: &Path, out: &mut String) -> Result<()> {
    let summary = Report::from_text(&read_artifact(dir, "summary.txt")?)?;
    let configured = summary.get_f64("configured_lifetime_s")?;
    let fitted = summary.get_f64("fitted_lifetime_s")?;
    let _ = writeln!(out, "configured_lifetime_s  {configured}");
    let _ = writeln!(out, "fitted_lifetime_s      {fitted}");
    if configured.is_finite() {
        push_check(
            out,
            (fitted / configured - 1.0).abs() <= 0.15,
            "fitted lifetime within 15% of the configured vacuum lifetime",
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn image_from(points: &[(f64, f64)], pixel: f64, blur: f64) -> OccupancyImage {
        let frame = PositionFrame {
            time: 0.0,
            x: points.iter().map(|p| p.0).collect(),
            y: points.iter().map(|p| p.1).collect(),
            alive: vec![true; points.len()],
        };
        OccupancyImage::from_frame(&frame, (0.0, 0.0), (100e-6, 60e-6), pixel, blur).unwrap()
    }

    #[test]
    fn image_bins_counts_and_conserves_totals() {
        let points = [(10e-6, 30e-6), (10.5e-6, 30.2e-6), (80e-6, 10e-6)];
        let sharp = image_from(&points, 2e-6, 0.0);
        assert_eq!(sharp.total(), 3.0);
        assert_eq!(sharp.counts.iter().cloned().fold(0.0, f64::max), 2.0);
        // Blur spreads but never creates counts.
        let soft = image_from(&points, 2e-6, 6e-6);
        assert!(soft.total() <= 3.0 + 1e-9, "total {}", soft.total());
        assert!(soft.total() > 2.8);
        assert!(soft.counts.iter().all(|&c| c >= 0.0));
        assert!(soft.counts.iter().cloned().fold(0.0, f64::max) < 1.0);
        // The centroid is blur-invariant away from the edges.
        let shift = (soft.centroid_x() - sharp.centroid_x()).abs();
        assert!(shift < 0.5e-6, "centroid moved {shift} m under blur");
    }

    #[test]
    fn empty_frame_renders_as_zeros() {
        let frame = PositionFrame {
            time: 0.0,
            x: vec![5e-6],
            y: vec![5e-6],
            alive: vec![false],
        };
        let image =
            OccupancyImage::from_frame(&frame, (0.0, 0.0), (20e-6, 20e-6), 2e-6, 4e-6).unwrap();
        assert_eq!(image.total(), 0.0);
        let pgm = image.to_pgm();
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("10 10"));
        assert_eq!(lines.next(), Some("255"));
        assert!(lines.all(|l| l.split(' ').all(|v| v == "0")));
    }

    #[test]
    fn pgm_normalizes_to_brightest_pixel() {
        let image = image_from(&[(10e-6, 30e-6), (10.5e-6, 30.2e-6), (80e-6, 10e-6)], 2e-6, 0.0);
        let pgm = image.to_pgm();
        let values: Vec<u32> = pgm
            .lines()
            .skip(3)
            .flat_map(|l| l.split(' '))
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(values.iter().max(), Some(&255));
        assert_eq!(values.iter().filter(|&&v| v == 128).count(), 1);
        assert_eq!(values.len(), image.rows * image.cols);
    }

    #[test]
    fn lifetime_fit_recovers_slope() {
        let tau = 0.4;
        let points: Vec<(f64, f64)> = (1..=10)
            .map(|i| {
                let t = 0.05 * i as f64;
                (t, (-t / tau) as f64)
            })
            .collect();
        assert!((fitted_lifetime(&points) - tau).abs() < 1e-12);
        assert_eq!(fitted_lifetime(&[(0.1, 0.0), (0.2, 0.0)]), f64::INFINITY);
        assert_eq!(fitted_lifetime(&[(0.1, -0.5)]), f64::INFINITY);
    }

    #[test]
    fn bundle_round_trips_through_disk_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let mut bundle = Bundle::new();
        bundle.push("a.txt", "alpha\n".into());
        bundle.push("b.tsv", "x\n1\n".into());
        bundle.stamp(7);
        let path = bundle.write_atomic(dir.path(), "demo").unwrap();
        assert_eq!(path, dir.path().join("demo"));
        let manifest = std::fs::read_to_string(path.join("manifest.txt")).unwrap();
        assert_eq!(manifest, "a.txt\nb.tsv\nprovenance.txt\n");
        assert_eq!(std::fs::read_to_string(path.join("a.txt")).unwrap(), "alpha\n");
        assert!(!dir.path().join("demo.partial").exists());
        // A second write to the same label refuses to clobber.
        let err = bundle.write_atomic(dir.path(), "demo").unwrap_err();
        assert!(err.to_string().contains("already exists"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn lifetime_experiment_writes_consistent_bundle() {
        let text = r#"
version = 1
label = "life"
experiment = "lifetime"

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
arrangement = "single"

[dynamics]
atoms_per_site = 60
temperature_uk = 15.0
seed = 11
background_lifetime_s = 0.004

[lifetime]
duration_ms = 4.0
checkpoints = 4
"#;
        let config = ExperimentConfig::from_toml(text).unwrap();
        let bundle = run_experiment(&config, None).unwrap();
        let table = Table::from_tsv(bundle.file("lifetime.tsv").unwrap()).unwrap();
        assert_eq!(table.rows.len(), 4);
        let s = table.column("survival").unwrap();
        // Aggressive 4 ms vacuum lifetime: clear decay across 4 ms of hold.
        assert!(table.rows[3][s] < table.rows[0][s]);
        let summary = Report::from_text(bundle.file("summary.txt").unwrap()).unwrap();
        let fitted = summary.get_f64("fitted_lifetime_s").unwrap();
        assert!(
            (fitted / 0.004 - 1.0).abs() < 0.5,
            "fitted lifetime {fitted} s far from configured 0.004 s"
        );
        // The resolved config re-parses and matches the input.
        let resolved = ExperimentConfig::from_toml(bundle.file("config.toml").unwrap()).unwrap();
        assert_eq!(resolved.dynamics.seed, 11);
        assert_eq!(resolved.dynamics.background_lifetime_s, 0.004);

        // Identical run -> identical bytes, artifact by artifact.
        let again = run_experiment(&config, None).unwrap();
        for (name, content) in &bundle.files {
            assert_eq!(Some(content.as_str()), again.file(name), "artifact {name}");
        }
    }

    #[test]
    fn report_flags_missing_artifacts_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let mut bundle = Bundle::new();
        bundle.push("summary.txt", "experiment\tramsey\n".into());
        bundle.stamp(1);
        let path = bundle.write_atomic(dir.path(), "broken").unwrap();
        std::fs::remove_file(path.join("summary.txt")).unwrap();
        let err = report_bundle(&path).unwrap_err();
        assert!(
            err.to_string().contains("summary.txt"),
            "error should name the missing file: {err}"
        );
        assert_eq!(err.exit_code(), 2);
    }
}
