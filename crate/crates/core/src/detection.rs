//! Detector response rules.
//!
//! A detector behind a polarizer at angle `φ` sees the projected field
//! `P = cos φ · F_e + sin φ · F_o` of its beam. Over a window of length
//! `T_w` it integrates the excess `W = ∫ (|P|² − I₀) dt`, with `I₀` the mean
//! vacuum intensity. Three rules turn `W` into a rate:
//!
//! - standard: `⟨W⟩ / T_w`, and `⟨W₁W₂⟩ / T_w²` for coincidences;
//! - Gaussian: the coincidence rate factorized by Wick's theorem to leading
//!   order, `Σ_λλ' |⟨F_λ F_λ'⟩|²` integrated over both windows;
//! - clipped: negative window integrals are replaced by zero, so each
//!   detector response is a non-negative local function of the amplitudes.
//!
//! Integrals are Riemann sums over the probe's time grid. Rates carry unit
//! proportionality constants and scale linearly with detector efficiency.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::correlation::{anomalous, normal_excess, FieldFunctional, Oracle};
use crate::crystal::CrystalParams;
use crate::error::{Error, Result};
use crate::field::{FieldProbe, FieldSynthesizer, TimeSeries};
use crate::lattice::{Beam, ModeGrid};
use crate::stats::jackknife_mean_real;
use crate::zeropoint::{Ensemble, VACUUM_VARIANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectionModel {
    #[default]
    Standard,
    Clipped,
}

impl DetectionModel {
    /// Window response for an excess integral `w`.
    pub fn respond(self, w: f64) -> f64 {
        match self {
            DetectionModel::Standard => w,
            DetectionModel::Clipped => w.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Beam, position, window grid and polarizer.
    pub probe: FieldProbe,
    /// Vacuum intensity `I₀` subtracted from the detected intensity.
    pub vacuum_intensity: f64,
    pub model: DetectionModel,
    /// Quantum efficiency `η ∈ (0, 1]`; multiplies each detector's rate.
    pub efficiency: f64,
}

impl DetectorConfig {
    /// Detector with `I₀` taken from the grid's vacuum mode sum and `η = 1`.
    pub fn new(grid: &ModeGrid, probe: FieldProbe, model: DetectionModel) -> Self {
        DetectorConfig {
            vacuum_intensity: vacuum_reference(grid, probe.beam, probe.polarizer),
            probe,
            model,
            efficiency: 1.0,
        }
    }

    pub fn with_vacuum_intensity(self, vacuum_intensity: f64) -> Result<Self> {
        if !(vacuum_intensity.is_finite() && vacuum_intensity >= 0.0) {
            return Err(Error::invalid(
                "vacuum_intensity",
                format!("must be non-negative, got {vacuum_intensity}"),
            ));
        }
        Ok(DetectorConfig {
            vacuum_intensity,
            ..self
        })
    }

    pub fn with_efficiency(self, efficiency: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::invalid(
                "efficiency",
                format!("must lie in (0, 1], got {efficiency}"),
            ));
        }
        Ok(DetectorConfig { efficiency, ..self })
    }

    pub fn with_model(self, model: DetectionModel) -> Self {
        DetectorConfig { model, ..self }
    }

    /// Same detector with its polarizer changed and `I₀` recomputed.
    pub fn with_polarizer(self, grid: &ModeGrid, polarizer: Option<f64>) -> Self {
        DetectorConfig {
            probe: self.probe.with_polarizer(polarizer),
            vacuum_intensity: vacuum_reference(grid, self.probe.beam, polarizer),
            ..self
        }
    }

    /// Same detector with its window opened `tau` later.
    pub fn delayed(self, tau: f64) -> Self {
        DetectorConfig {
            probe: self.probe.with_times(self.probe.times.shifted(tau)),
            ..self
        }
    }

    /// Window length `T_w`.
    pub fn window(&self) -> f64 {
        self.probe.times.duration()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub rate: f64,
    pub stderr: f64,
    /// Fraction of detector windows with a negative excess integral.
    pub negative_window_fraction: f64,
    /// Clipped rate minus standard rate on the same realizations.
    pub dark_excess: f64,
    pub n_samples: usize,
}

/// Pointwise `|F|²`.
pub fn intensity(field: &TimeSeries) -> Vec<f64> {
    field.values.iter().map(|v| v.norm_sqr()).collect()
}

/// Vacuum intensity of one polarization component of a beam.
fn component_vacuum(grid: &ModeGrid, beam: Beam) -> (f64, f64) {
    let (e, o) = beam.components();
    let sum = |s| {
        grid.sector_modes(s)
            .iter()
            .map(|m| m.weight * m.weight * VACUUM_VARIANCE)
            .sum::<f64>()
    };
    (sum(e), sum(o))
}

/// `I₀` behind a polarizer at `φ` (or with the polarizer removed).
pub fn vacuum_reference(grid: &ModeGrid, beam: Beam, polarizer: Option<f64>) -> f64 {
    let (e, o) = component_vacuum(grid, beam);
    match polarizer {
        None => e + o,
        Some(phi) => {
            let (s, c) = phi.sin_cos();
            c * c * e + s * s * o
        }
    }
}

/// Window integrals of the two polarization components of one realization:
/// `xx = ∫|F_e|²`, `yy = ∫|F_o|²`, `xy = ∫F_e F_o*`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowStats {
    pub xx: f64,
    pub yy: f64,
    pub xy: Complex64,
}

impl WindowStats {
    /// `∫|P|² dt` behind the polarizer.
    pub fn integral(&self, polarizer: Option<f64>) -> f64 {
        match polarizer {
            None => self.xx + self.yy,
            Some(phi) => {
                let (s, c) = phi.sin_cos();
                c * c * self.xx + s * s * self.yy + 2.0 * s * c * self.xy.re
            }
        }
    }
}

/// Per-realization window statistics of one beam, reusable for any
/// polarizer setting.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEnsemble {
    beam: Beam,
    window: f64,
    vacuum: (f64, f64),
    stats: Vec<WindowStats>,
}

impl WindowEnsemble {
    pub fn measure<E: Ensemble>(ensemble: &E, grid: &ModeGrid, probe: &FieldProbe) -> Result<Self> {
        ensemble.check_grid(grid)?;
        let (e, o) = probe.beam.components();
        let se = FieldSynthesizer::new(grid, e, probe.distance, probe.times);
        let so = FieldSynthesizer::new(grid, o, probe.distance, probe.times);
        let dt = probe.times.step();
        let n = probe.times.len();
        let stats = ensemble
            .amplitudes()
            .par_rows()
            .map_init(
                || (vec![Complex64::default(); n], vec![Complex64::default(); n]),
                |(x, y), row| {
                    se.fill(row, x);
                    so.fill(row, y);
                    let mut s = WindowStats::default();
                    for (a, b) in x.iter().zip(y.iter()) {
                        s.xx += a.norm_sqr();
                        s.yy += b.norm_sqr();
                        s.xy += a * b.conj();
                    }
                    WindowStats {
                        xx: s.xx * dt,
                        yy: s.yy * dt,
                        xy: s.xy * dt,
                    }
                },
            )
            .collect();
        Ok(WindowEnsemble {
            beam: probe.beam,
            window: probe.times.duration(),
            vacuum: component_vacuum(grid, probe.beam),
            stats,
        })
    }

    pub fn beam(&self) -> Beam {
        self.beam
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn stats(&self) -> &[WindowStats] {
        &self.stats
    }

    pub fn vacuum_intensity(&self, polarizer: Option<f64>) -> f64 {
        let (e, o) = self.vacuum;
        match polarizer {
            None => e + o,
            Some(phi) => {
                let (s, c) = phi.sin_cos();
                c * c * e + s * s * o
            }
        }
    }

    /// Excess window integrals `W = ∫(I − I₀)` for every realization.
    pub fn excess(&self, polarizer: Option<f64>, vacuum_intensity: f64) -> Vec<f64> {
        let offset = vacuum_intensity * self.window;
        self.stats.iter().map(|s| s.integral(polarizer) - offset).collect()
    }

    /// Local response `η·{W}/T_w` of every realization under `model`, with
    /// the grid's own `I₀`.
    pub fn responses(&self, polarizer: Option<f64>, model: DetectionModel, efficiency: f64) -> Vec<f64> {
        let i0 = self.vacuum_intensity(polarizer);
        self.excess(polarizer, i0)
            .into_iter()
            .map(|w| efficiency * model.respond(w) / self.window)
            .collect()
    }

    /// Realizations reordered by `order` (a permutation of `0..len`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if order.len() != self.len()
            || order
                .iter()
                .any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true))
        {
            return Err(Error::invalid("order", "must be a permutation of the realizations"));
        }
        Ok(WindowEnsemble {
            stats: order.iter().map(|&i| self.stats[i]).collect(),
            ..self.clone()
        })
    }
}

fn negative_fraction(ws: &[f64]) -> f64 {
    if ws.is_empty() {
        return 0.0;
    }
    ws.iter().filter(|&&w| w < 0.0).count() as f64 / ws.len() as f64
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `P₁ = η⟨{W}⟩ / T_w`.
pub fn singles_rate<E: Ensemble>(ensemble: &E, grid: &ModeGrid, det: &DetectorConfig) -> Result<RateReport> {
    let windows = WindowEnsemble::measure(ensemble, grid, &det.probe)?;
    let ws = windows.excess(det.probe.polarizer, det.vacuum_intensity);
    let scale = det.efficiency / windows.window();
    let standard: Vec<f64> = ws.iter().map(|w| scale * w).collect();
    let clipped: Vec<f64> = ws.iter().map(|w| scale * w.max(0.0)).collect();
    let (rate, stderr) = jackknife_mean_real(match det.model {
        DetectionModel::Standard => &standard,
        DetectionModel::Clipped => &clipped,
    });
    Ok(RateReport {
        rate,
        stderr,
        negative_window_fraction: negative_fraction(&ws),
        dark_excess: mean(&clipped) - mean(&standard),
        n_samples: ws.len(),
    })
}

/// `P₁₂ = η₁η₂⟨{W₁}{W₂}⟩ / T₁T₂`, the second window opened `tau` later.
pub fn joint_rate_direct<E: Ensemble>(
    ensemble: &E,
    grid: &ModeGrid,
    det1: &DetectorConfig,
    det2: &DetectorConfig,
    tau: f64,
) -> Result<RateReport> {
    if det1.model != det2.model {
        return Err(Error::invalid(
            "model",
            "both detectors must use the same detection model",
        ));
    }
    let det2 = det2.delayed(tau);
    let w1 = WindowEnsemble::measure(ensemble, grid, &det1.probe)?;
    let w2 = WindowEnsemble::measure(ensemble, grid, &det2.probe)?;
    let x1 = w1.excess(det1.probe.polarizer, det1.vacuum_intensity);
    let x2 = w2.excess(det2.probe.polarizer, det2.vacuum_intensity);
    let scale = det1.efficiency * det2.efficiency / (w1.window() * w2.window());
    let standard: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| scale * a * b).collect();
    let clipped: Vec<f64> = x1
        .iter()
        .zip(&x2)
        .map(|(a, b)| scale * a.max(0.0) * b.max(0.0))
        .collect();
    let (rate, stderr) = jackknife_mean_real(match det1.model {
        DetectionModel::Standard => &standard,
        DetectionModel::Clipped => &clipped,
    });
    let both: Vec<f64> = x1.iter().chain(&x2).copied().collect();
    Ok(RateReport {
        rate,
        stderr,
        negative_window_fraction: negative_fraction(&both),
        dark_excess: mean(&clipped) - mean(&standard),
        n_samples: x1.len(),
    })
}

/// Leading-order Gaussian rates for a pair of detector windows.
///
/// Stores the window-integrated Gram matrix of the component
/// cross-correlators `C_λλ'(t, t') = ⟨F_λ(r₁, t) F_λ'(r₂, t')⟩`, so the
/// coincidence rate for any polarizer pair costs O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRates {
    /// `Σ_nm Δt₁Δt₂ C_i conj(C_j) / (T₁T₂)` over `i, j ∈ {ee, eo, oe, oo}`.
    gram: [[Complex64; 4]; 4],
    /// Per-beam single excess `(xx, yy, xy)` averaged over the window.
    singles: [WindowStats; 2],
}

impl GaussianRates {
    /// `probe2`'s window is taken as given; delay it beforehand if needed.
    pub fn new(oracle: &Oracle<'_>, probe1: &FieldProbe, probe2: &FieldProbe) -> Self {
        let functionals = |p: &FieldProbe| -> Vec<(FieldFunctional, FieldFunctional)> {
            let (e, o) = p.beam.components();
            p.times
                .times()
                .map(|t| (oracle.functional(e, p.distance, t), oracle.functional(o, p.distance, t)))
                .collect()
        };
        let f1 = functionals(probe1);
        let f2 = functionals(probe2);
        let order = oracle.order();

        let rows: Vec<[[Complex64; 4]; 4]> = f1
            .par_iter()
            .map(|(e1, o1)| {
                let mut acc = [[Complex64::default(); 4]; 4];
                for (e2, o2) in &f2 {
                    let c = [
                        anomalous(e1, e2, order),
                        anomalous(e1, o2, order),
                        anomalous(o1, e2, order),
                        anomalous(o1, o2, order),
                    ];
                    for i in 0..4 {
                        for j in 0..4 {
                            acc[i][j] += c[i] * c[j].conj();
                        }
                    }
                }
                acc
            })
            .collect();
        let norm = probe1.times.step() * probe2.times.step() / (probe1.times.duration() * probe2.times.duration());
        let mut gram = [[Complex64::default(); 4]; 4];
        for row in &rows {
            for i in 0..4 {
                for j in 0..4 {
                    gram[i][j] += row[i][j];
                }
            }
        }
        for row in gram.iter_mut() {
            for v in row.iter_mut() {
                *v *= norm;
            }
        }

        let single = |fs: &[(FieldFunctional, FieldFunctional)]| {
            let n = fs.len() as f64;
            let mut s = WindowStats::default();
            for (e, o) in fs {
                s.xx += normal_excess(e, e, order).re;
                s.yy += normal_excess(o, o, order).re;
                s.xy += normal_excess(e, o, order);
            }
            WindowStats {
                xx: s.xx / n,
                yy: s.yy / n,
                xy: s.xy / n,
            }
        };
        GaussianRates {
            gram,
            singles: [single(&f1), single(&f2)],
        }
    }

    /// Coincidence rate `Σ |⟨P₁ P₂⟩|²` averaged over both windows.
    pub fn joint(&self, pol1: Option<f64>, pol2: Option<f64>) -> f64 {
        let settings = |p: Option<f64>| -> Vec<(f64, f64)> {
            match p {
                // removed polarizer: both components detected
                None => vec![(1.0, 0.0), (0.0, 1.0)],
                Some(phi) => {
                    let (s, c) = phi.sin_cos();
                    vec![(c, s)]
                }
            }
        };
        let mut total = 0.0;
        for (c1, s1) in settings(pol1) {
            for &(c2, s2) in &settings(pol2) {
                let a = [c1 * c2, c1 * s2, s1 * c2, s1 * s2];
                for i in 0..4 {
                    for j in 0..4 {
                        total += a[i] * a[j] * self.gram[i][j].re;
                    }
                }
            }
        }
        total
    }

    /// Single excess rate `⟨|P|²⟩ − I₀` of detector 1 or 2.
    pub fn single(&self, detector: usize, polarizer: Option<f64>) -> f64 {
        self.singles[detector].integral(polarizer)
    }
}

/// Leading-order Gaussian coincidence rate, scaled by both efficiencies.
pub fn joint_rate_gaussian(
    grid: &ModeGrid,
    params: &CrystalParams,
    det1: &DetectorConfig,
    det2: &DetectorConfig,
    tau: f64,
) -> Result<f64> {
    let oracle = Oracle::new(grid, params)?;
    let det2 = det2.delayed(tau);
    let rates = GaussianRates::new(&oracle, &det1.probe, &det2.probe);
    Ok(det1.efficiency * det2.efficiency * rates.joint(det1.probe.polarizer, det2.probe.polarizer))
}

/// Default probe step `1 / bandwidth`.
pub fn default_step(grid: &ModeGrid) -> Result<f64> {
    let bw = grid.spec().bandwidth;
    if bw > 0.0 {
        Ok(1.0 / bw)
    } else {
        Err(Error::invalid(
            "bandwidth",
            "a zero-bandwidth grid has no natural time step",
        ))
    }
}

/// Window of `multiple` coherence times starting at `start`, rounded to a
/// whole number of steps.
pub fn window_in_coherence_times(
    grid: &ModeGrid,
    params: &CrystalParams,
    multiple: f64,
    start: f64,
    step: f64,
) -> Result<crate::field::TimeGrid> {
    if !(multiple.is_finite() && multiple > 0.0) {
        return Err(Error::invalid(
            "window",
            format!("multiple must be positive, got {multiple}"),
        ));
    }
    let tau_e = crate::correlation::coherence_time(grid, params)?;
    let n = ((multiple * tau_e / step).round() as usize).max(1);
    crate::field::TimeGrid::new(start, step, n)
}

/// Time average of `|P|² − I₀` along one long realization, with a
/// batch-means standard error over `n_batches` consecutive batches.
pub fn time_average_excess<E: Ensemble>(
    ensemble: &E,
    grid: &ModeGrid,
    probe: &FieldProbe,
    realization: usize,
    n_batches: usize,
) -> Result<(f64, f64)> {
    if n_batches < 2 || n_batches > probe.times.len() {
        return Err(Error::invalid(
            "n_batches",
            format!("need 2..={} batches, got {n_batches}", probe.times.len()),
        ));
    }
    let field = crate::field::beam_field(ensemble, grid, probe, realization)?;
    let projected = match probe.polarizer {
        Some(phi) => intensity(&crate::field::polarize(&field, phi)),
        None => intensity(&field.e_axis)
            .into_iter()
            .zip(intensity(&field.o_axis))
            .map(|(a, b)| a + b)
            .collect(),
    };
    let i0 = vacuum_reference(grid, probe.beam, probe.polarizer);
    let per_batch = projected.len() / n_batches;
    let batches: Vec<f64> = projected
        .chunks_exact(per_batch)
        .take(n_batches)
        .map(|c| c.iter().map(|i| i - i0).sum::<f64>() / c.len() as f64)
        .collect();
    let m = mean(&batches);
    let var = batches.iter().map(|b| (b - m) * (b - m)).sum::<f64>() / (n_batches - 1) as f64;
    Ok((m, (var / n_batches as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::Order;
    use crate::crystal::transform;
    use crate::field::TimeGrid;
    use crate::lattice::{build_mode_grid, GridSpec, Sector};
    use crate::zeropoint::sample_vacuum;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn probe(beam: Beam, len: usize, polarizer: Option<f64>) -> FieldProbe {
        FieldProbe::new(beam, 0.0, TimeGrid::new(0.0, 1.0, len).unwrap(), polarizer).unwrap()
    }

    #[test]
    fn intensity_examples() {
        let g = TimeGrid::new(0.0, 0.5, 4).unwrap();
        let zero = TimeSeries::new(g, vec![Complex64::default(); 4]).unwrap();
        assert_eq!(intensity(&zero), vec![0.0; 4]);
        let unit = TimeSeries::new(g, (0..4).map(|n| Complex64::from_polar(1.0, 0.9 * n as f64)).collect()).unwrap();
        for i in intensity(&unit) {
            assert_relative_eq!(i, 1.0, epsilon = 1e-15);
        }
        let f = TimeSeries::new(g, vec![Complex64::new(0.3, -1.1); 4]).unwrap();
        let doubled = TimeSeries::new(g, vec![Complex64::new(0.6, -2.2); 4]).unwrap();
        for (a, b) in intensity(&f).iter().zip(intensity(&doubled)) {
            assert_relative_eq!(4.0 * a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn vacuum_reference_examples() {
        // one mode per sector with w = 1 needs ω = 2
        let grid = build_mode_grid(GridSpec::degenerate(1, 4.0, 0.0)).unwrap();
        assert_eq!(grid.mode(0).weight, 1.0);
        assert_relative_eq!(vacuum_reference(&grid, Beam::One, Some(0.0)), 0.5);

        let grid = build_mode_grid(GridSpec::default()).unwrap();
        for phi in [0.0, 0.4, 1.3] {
            let sum = vacuum_reference(&grid, Beam::Two, Some(phi))
                + vacuum_reference(&grid, Beam::Two, Some(phi + PI / 2.0));
            assert_relative_eq!(sum, vacuum_reference(&grid, Beam::Two, None), max_relative = 1e-14);
        }
    }

    #[test]
    fn vacuum_singles() {
        let grid = build_mode_grid(GridSpec::degenerate(4, 20.0, 1.0)).unwrap();
        let vac = sample_vacuum(&grid, 20_000, 3).unwrap();
        let det = DetectorConfig::new(&grid, probe(Beam::One, 12, Some(0.3)), DetectionModel::Standard);
        let std = singles_rate(&vac, &grid, &det).unwrap();
        assert!(std.rate.abs() < 3.0 * std.stderr, "{std:?}");

        let clipped = singles_rate(&vac, &grid, &det.with_model(DetectionModel::Clipped)).unwrap();
        assert!(clipped.rate > 0.0);
        // {x}₊ = (x + |x|)/2
        let ws = WindowEnsemble::measure(&vac, &grid, &det.probe)
            .unwrap()
            .excess(det.probe.polarizer, det.vacuum_intensity);
        let half_abs = 0.5 * mean(&ws.iter().map(|w| w.abs()).collect::<Vec<_>>()) / det.window();
        let half_x = 0.5 * mean(&ws) / det.window();
        assert_relative_eq!(clipped.rate, half_abs + half_x, max_relative = 1e-10);
        assert!((clipped.rate - half_abs).abs() < 3.0 * std.stderr);
        assert!(clipped.dark_excess >= 0.0);
    }

    #[test]
    fn clipping_bounds_hold_pointwise() {
        let grid = build_mode_grid(GridSpec::degenerate(4, 20.0, 1.0)).unwrap();
        let vac = sample_vacuum(&grid, 2000, 5).unwrap();
        let out = transform(&vac, &CrystalParams::default().with_coupling(0.2), &grid).unwrap();
        let w = WindowEnsemble::measure(&out, &grid, &probe(Beam::Two, 8, Some(1.0))).unwrap();
        let std = w.responses(Some(1.0), DetectionModel::Standard, 1.0);
        let clip = w.responses(Some(1.0), DetectionModel::Clipped, 1.0);
        for (x, y) in std.iter().zip(&clip) {
            assert!(y >= x);
            assert!(*y >= 0.0 && *y <= x.abs());
            assert_eq!(y - x, (-x).max(0.0));
        }
    }

    #[test]
    fn gaussian_rates_follow_sum_law() {
        let grid = build_mode_grid(GridSpec::degenerate(8, 20.0, 1.0)).unwrap();
        let oracle = Oracle::new(&grid, &CrystalParams::default()).unwrap();
        let rates = GaussianRates::new(&oracle, &probe(Beam::One, 10, None), &probe(Beam::Two, 10, None));
        let k = rates.joint(Some(0.0), Some(PI / 2.0));
        assert!(k > 0.0);
        for (a, b) in [(0.0f64, 0.0f64), (0.2, 0.3), (1.0, -0.4), (2.1, 0.7)] {
            let want = k * (a + b).sin().powi(2);
            assert_relative_eq!(
                rates.joint(Some(a), Some(b)),
                want,
                epsilon = 1e-14 * k,
                max_relative = 1e-12
            );
        }
        assert_eq!(rates.joint(Some(0.0), Some(0.0)), 0.0);
        // polarizer removed = both orthogonal settings
        let sum = rates.joint(Some(0.3), Some(0.5)) + rates.joint(Some(0.3), Some(0.5 + PI / 2.0));
        assert_relative_eq!(rates.joint(Some(0.3), None), sum, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_rate_scaling() {
        let grid = build_mode_grid(GridSpec::degenerate(4, 20.0, 1.0)).unwrap();
        let d1 = DetectorConfig::new(&grid, probe(Beam::One, 6, Some(0.1)), DetectionModel::Standard);
        let d2 = DetectorConfig::new(&grid, probe(Beam::Two, 6, Some(1.2)), DetectionModel::Standard);
        let p = CrystalParams::default();
        let r = |g: f64| joint_rate_gaussian(&grid, &p.with_coupling(g), &d1, &d2, 0.5).unwrap();
        assert_eq!(r(0.0), 0.0);
        assert_relative_eq!(r(0.06), 4.0 * r(0.03), max_relative = 1e-12);
    }

    /// Full Wick factorization of the exact map: `⟨W₁W₂⟩ = ⟨W₁⟩⟨W₂⟩ +
    /// ΣΣ|⟨P₁P₂*⟩|² + ΣΣ|⟨P₁P₂⟩|²`, the middle term vanishing between beams.
    #[test]
    fn direct_joint_matches_exact_wick() {
        let grid = build_mode_grid(GridSpec::degenerate(2, 20.0, 1.0)).unwrap();
        let params = CrystalParams {
            ceiling: 0.3,
            ..CrystalParams::default().with_coupling(0.3)
        };
        let vac = sample_vacuum(&grid, 100_000, 21).unwrap();
        let out = transform(&vac, &params, &grid).unwrap();
        let oracle = Oracle::new(&grid, &params).unwrap().with_order(Order::Exact);
        for (pol1, pol2, tau) in [(0.0, PI / 2.0, 0.0), (0.4, 0.9, 1.0), (0.2, -0.2, 2.0)] {
            let d1 = DetectorConfig::new(&grid, probe(Beam::One, 4, Some(pol1)), DetectionModel::Standard);
            let d2 = DetectorConfig::new(&grid, probe(Beam::Two, 4, Some(pol2)), DetectionModel::Standard);
            let mc = joint_rate_direct(&out, &grid, &d1, &d2, tau).unwrap();

            let p2 = d2.delayed(tau).probe;
            let rates = GaussianRates::new(&oracle, &d1.probe, &p2);
            let wick = rates.joint(Some(pol1), Some(pol2)) + rates.single(0, Some(pol1)) * rates.single(1, Some(pol2));
            assert!((mc.rate - wick).abs() < 4.0 * mc.stderr, "{mc:?} vs {wick}");
        }
        // the between-beam normal correlator is identically zero
        let a = oracle.functional(Sector::E, 0.0, 0.0);
        let b = oracle.functional(Sector::EPrime, 0.0, 0.3);
        assert_eq!(normal_excess(&a, &b, Order::Exact), Complex64::default());
    }

    #[test]
    fn time_average_of_vacuum_is_near_zero() {
        let grid = build_mode_grid(GridSpec::degenerate(256, 20.0, 1.0)).unwrap();
        let vac = sample_vacuum(&grid, 1, 8).unwrap();
        let p = FieldProbe::new(Beam::One, 0.0, TimeGrid::new(0.0, 0.5, 400).unwrap(), Some(0.6)).unwrap();
        let (m, se) = time_average_excess(&vac, &grid, &p, 0, 20).unwrap();
        assert!(se > 0.0);
        assert!(m.abs() < 5.0 * se, "{m} ± {se}");
        assert!(time_average_excess(&vac, &grid, &p, 0, 1).is_err());
    }

    #[test]
    fn permutation_is_validated() {
        let grid = build_mode_grid(GridSpec::degenerate(1, 20.0, 0.0)).unwrap();
        let vac = sample_vacuum(&grid, 3, 1).unwrap();
        let w = WindowEnsemble::measure(&vac, &grid, &probe(Beam::One, 2, None)).unwrap();
        assert!(w.permuted(&[2, 0, 1]).is_ok());
        assert!(w.permuted(&[0, 0, 1]).is_err());
        assert!(w.permuted(&[0, 1]).is_err());
        assert_eq!(w.permuted(&[2, 0, 1]).unwrap().stats()[0], w.stats()[2]);
    }

    #[test]
    fn config_validation() {
        let grid = build_mode_grid(GridSpec::degenerate(1, 20.0, 0.0)).unwrap();
        let d = DetectorConfig::new(&grid, probe(Beam::One, 2, None), DetectionModel::Standard);
        assert!(d.with_efficiency(0.0).is_err());
        assert!(d.with_efficiency(1.5).is_err());
        assert!(d.with_vacuum_intensity(-1.0).is_err());
        assert_eq!(d.with_efficiency(0.6).unwrap().efficiency, 0.6);
        let vac = sample_vacuum(&grid, 2, 1).unwrap();
        let clipped = d.with_model(DetectionModel::Clipped);
        assert!(joint_rate_direct(&vac, &grid, &d, &clipped, 0.0).is_err());
    }
}
