//! Slowly varying fields, free propagation and polarizers.
//!
//! The slowly varying field of a sector at distance `r` along its beam axis is
//!
//! ```text
//! F⁺(r, t) = i Σ_k w_k α_k e^{iω_k r} e^{i(ω_s − ω_k) t}
//! ```
//!
//! with `ω_s` the sector center frequency and `c = 1`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Beam, ModeDescriptor, ModeGrid, Sector};
use crate::zeropoint::Ensemble;

/// Tolerance, in time steps, for treating a delay as grid-aligned.
const ALIGN_TOLERANCE: f64 = 1e-9;

/// Uniform time grid `start + n·step`, `n = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    start: f64,
    step: f64,
    len: usize,
}

impl TimeGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !start.is_finite() {
            return Err(Error::invalid("start", "must be finite"));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("step", format!("must be positive, got {step}")));
        }
        if len == 0 {
            return Err(Error::invalid("len", "time grid needs at least one point"));
        }
        Ok(TimeGrid { start, step, len })
    }

    /// Grid of `window / step` points starting at `start`; the window must be
    /// a whole number of steps.
    pub fn spanning(start: f64, step: f64, window: f64) -> Result<Self> {
        let n = whole_steps(window, step).ok_or(Error::WindowMisaligned { window, step })?;
        if n == 0 {
            return Err(Error::WindowMisaligned { window, step });
        }
        TimeGrid::new(start, step, n)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn time(&self, n: usize) -> f64 {
        self.start + n as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|n| self.time(n))
    }

    /// Total span `len · step`, the detection window when used as one.
    pub fn duration(&self) -> f64 {
        self.len as f64 * self.step
    }

    pub fn shifted(&self, by: f64) -> TimeGrid {
        TimeGrid {
            start: self.start + by,
            ..*self
        }
    }
}

fn whole_steps(span: f64, step: f64) -> Option<usize> {
    if !(span.is_finite() && span >= 0.0) {
        return None;
    }
    let k = span / step;
    let r = k.round();
    ((k - r).abs() <= ALIGN_TOLERANCE * r.max(1.0)).then_some(r as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub grid: TimeGrid,
    pub values: Vec<Complex64>,
}

impl TimeSeries {
    pub fn new(grid: TimeGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                what: "time series",
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(TimeSeries { grid, values })
    }
}

/// Where and when a detector looks at a beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldProbe {
    pub beam: Beam,
    /// Distance from the crystal center along the beam axis.
    pub distance: f64,
    pub times: TimeGrid,
    /// Polarizer angle from the extraordinary axis; `None` when removed.
    pub polarizer: Option<f64>,
}

impl FieldProbe {
    pub fn new(beam: Beam, distance: f64, times: TimeGrid, polarizer: Option<f64>) -> Result<Self> {
        if !(distance.is_finite() && distance >= 0.0) {
            return Err(Error::invalid(
                "distance",
                format!("must be non-negative, got {distance}"),
            ));
        }
        if let Some(phi) = polarizer {
            if !phi.is_finite() {
                return Err(Error::invalid("polarizer", "angle must be finite"));
            }
        }
        Ok(FieldProbe {
            beam,
            distance,
            times,
            polarizer,
        })
    }

    pub fn with_polarizer(self, polarizer: Option<f64>) -> Self {
        FieldProbe { polarizer, ..self }
    }

    pub fn with_times(self, times: TimeGrid) -> Self {
        FieldProbe { times, ..self }
    }
}

/// Two-component field of one beam: the extraordinary-axis and
/// ordinary-axis projections.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamField {
    pub beam: Beam,
    pub e_axis: TimeSeries,
    pub o_axis: TimeSeries,
}

/// Coefficient of `α_k` in `F⁺(r, t)` for the mode's own sector.
pub fn mode_coefficient(mode: &ModeDescriptor, r: f64, t: f64) -> Complex64 {
    // i · w · e^{i(ω r − δ t)}
    let z = Complex64::from_polar(mode.weight, mode.frequency * r - mode.detuning * t);
    Complex64::new(-z.im, z.re)
}

/// `F⁺_sector(r, t)` for every realization of an ensemble.
pub fn assemble_field<E: Ensemble>(
    ensemble: &E,
    grid: &ModeGrid,
    sector: Sector,
    r: f64,
    t: f64,
) -> Result<Vec<Complex64>> {
    ensemble.check_grid(grid)?;
    let range = grid.sector_range(sector);
    let coeffs: Vec<Complex64> = grid
        .sector_modes(sector)
        .iter()
        .map(|m| mode_coefficient(m, r, t))
        .collect();
    Ok(ensemble
        .amplitudes()
        .rows()
        .map(|row| coeffs.iter().zip(&row[range.clone()]).map(|(c, a)| c * a).sum())
        .collect())
}

/// Precomputed mode coefficients of one sector's field on a time grid.
#[derive(Debug, Clone)]
pub struct FieldSynthesizer {
    offset: usize,
    n_modes: usize,
    times: TimeGrid,
    coeffs: Vec<Complex64>,
}

impl FieldSynthesizer {
    pub fn new(grid: &ModeGrid, sector: Sector, r: f64, times: TimeGrid) -> Self {
        let modes = grid.sector_modes(sector);
        let coeffs = times
            .times()
            .flat_map(|t| modes.iter().map(move |m| mode_coefficient(m, r, t)))
            .collect();
        FieldSynthesizer {
            offset: grid.sector_range(sector).start,
            n_modes: modes.len(),
            times,
            coeffs,
        }
    }

    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    /// Evaluates the field for one realization's amplitudes (a full grid row).
    pub fn fill(&self, row: &[Complex64], out: &mut [Complex64]) {
        let amps = &row[self.offset..self.offset + self.n_modes];
        for (value, cs) in out.iter_mut().zip(self.coeffs.chunks_exact(self.n_modes)) {
            *value = cs.iter().zip(amps).map(|(c, a)| c * a).sum();
        }
    }

    pub fn series(&self, row: &[Complex64]) -> TimeSeries {
        let mut values = vec![Complex64::default(); self.times.len()];
        self.fill(row, &mut values);
        TimeSeries {
            grid: self.times,
            values,
        }
    }
}

/// Both polarization components of a beam at the probe, for one realization.
pub fn beam_field<E: Ensemble>(
    ensemble: &E,
    grid: &ModeGrid,
    probe: &FieldProbe,
    realization: usize,
) -> Result<BeamField> {
    ensemble.check_grid(grid)?;
    if realization >= ensemble.n_realizations() {
        return Err(Error::invalid(
            "realization",
            format!(
                "{realization} out of range for {} realizations",
                ensemble.n_realizations()
            ),
        ));
    }
    let row = ensemble.amplitudes().row(realization);
    let (e, o) = probe.beam.components();
    Ok(BeamField {
        beam: probe.beam,
        e_axis: FieldSynthesizer::new(grid, e, probe.distance, probe.times).series(row),
        o_axis: FieldSynthesizer::new(grid, o, probe.distance, probe.times).series(row),
    })
}

/// Moves a field a distance `r_ab` downstream:
/// `F(r_B, t) = F(r_A, t − r_ab) e^{iω r_ab}` with `ω` the beam carrier.
///
/// The output carries the same samples on a grid shifted by `r_ab`, which
/// must be a whole number of time steps.
pub fn propagate(field: &TimeSeries, r_ab: f64, carrier: f64) -> Result<TimeSeries> {
    let step = field.grid.step();
    if !(r_ab.is_finite() && r_ab >= 0.0) {
        return Err(Error::invalid("r_ab", format!("must be non-negative, got {r_ab}")));
    }
    let k = whole_steps(r_ab, step).ok_or(Error::DelayNotRepresentable { delay: r_ab, step })?;
    let phase = Complex64::from_polar(1.0, carrier * r_ab);
    Ok(TimeSeries {
        grid: field.grid.shifted(k as f64 * step),
        values: field.values.iter().map(|v| v * phase).collect(),
    })
}

/// Scalar field behind a polarizer at angle `phi` from the extraordinary
/// axis: `cos φ · F_e + sin φ · F_o`.
pub fn polarize(field: &BeamField, phi: f64) -> TimeSeries {
    let (c, s) = (phi.cos(), phi.sin());
    TimeSeries {
        grid: field.e_axis.grid,
        values: field
            .e_axis
            .values
            .iter()
            .zip(&field.o_axis.values)
            .map(|(e, o)| e * c + o * s)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{transform, CrystalParams};
    use crate::lattice::{build_mode_grid, GridSpec};
    use crate::zeropoint::{sample_vacuum, ModeAmplitudes, VacuumEnsemble};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn ens_with(grid: &ModeGrid, row: Vec<Complex64>) -> VacuumEnsemble {
        let m = row.len();
        VacuumEnsemble::from_amplitudes(grid, ModeAmplitudes::new(row, 1, m).unwrap(), 0).unwrap()
    }

    #[test]
    fn single_center_mode_is_static() {
        let grid = build_mode_grid(GridSpec::degenerate(1, 20.0, 0.0)).unwrap();
        let a = Complex64::new(0.3, -0.7);
        let mut row = vec![Complex64::default(); 4];
        row[0] = a;
        let ens = ens_with(&grid, row);
        let w = grid.mode(0).weight;
        for t in [0.0, 1.7, 123.0] {
            let f = assemble_field(&ens, &grid, Sector::E, 0.0, t).unwrap()[0];
            let want = Complex64::i() * a * w;
            assert!((f - want).norm() < 1e-15);
        }
    }

    #[test]
    fn two_mode_beat_period() {
        // detunings ±δ with equal amplitudes: |F|² = 4 w²|a|² cos²(δ t) up to
        // the weight asymmetry, period π/δ
        let grid = build_mode_grid(GridSpec::degenerate(2, 20.0, 0.8)).unwrap();
        let delta = 0.4;
        let a = Complex64::new(0.5, 0.2);
        let mut row = vec![Complex64::default(); grid.len()];
        row[0] = a;
        row[1] = a;
        let ens = ens_with(&grid, row);
        let modes = grid.sector_modes(Sector::E);
        let (w0, w1) = (modes[0].weight, modes[1].weight);
        for t in [0.0, 0.9, 2.2, 5.0] {
            let f = assemble_field(&ens, &grid, Sector::E, 0.0, t).unwrap()[0];
            let g = assemble_field(&ens, &grid, Sector::E, 0.0, t + PI / delta).unwrap()[0];
            // hand oracle: |w0 e^{iδt} + w1 e^{-iδt}|² |a|²
            let oracle = (w0 * w0 + w1 * w1 + 2.0 * w0 * w1 * (2.0 * delta * t).cos()) * a.norm_sqr();
            assert_relative_eq!(f.norm_sqr(), oracle, epsilon = 1e-13);
            assert_relative_eq!(g.norm_sqr(), f.norm_sqr(), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_amplitudes_give_zero_field() {
        let grid = build_mode_grid(GridSpec::degenerate(3, 20.0, 1.0)).unwrap();
        let ens = ens_with(&grid, vec![Complex64::default(); grid.len()]);
        for s in Sector::ALL {
            assert_eq!(
                assemble_field(&ens, &grid, s, 2.0, 3.0).unwrap()[0],
                Complex64::default()
            );
        }
    }

    #[test]
    fn synthesizer_matches_pointwise_assembly() {
        let grid = build_mode_grid(GridSpec::degenerate(4, 20.0, 1.0)).unwrap();
        let ens = sample_vacuum(&grid, 3, 9).unwrap();
        let times = TimeGrid::new(-2.0, 0.5, 7).unwrap();
        let synth = FieldSynthesizer::new(&grid, Sector::O, 1.5, times);
        for r in 0..3 {
            let s = synth.series(ens.amplitudes().row(r));
            for (n, t) in times.times().enumerate() {
                let f = assemble_field(&ens, &grid, Sector::O, 1.5, t).unwrap()[r];
                assert!((s.values[n] - f).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn propagation_rule_matches_spatial_phase() {
        // F(d, t) assembled with e^{iω_k d} equals propagate(F(0, ·), d)
        let grid = build_mode_grid(GridSpec::degenerate(5, 20.0, 1.0)).unwrap();
        let ens = sample_vacuum(&grid, 1, 4).unwrap();
        let row = ens.amplitudes().row(0);
        let times = TimeGrid::new(0.0, 0.25, 40).unwrap();
        let d = 1.75;
        let at_crystal = FieldSynthesizer::new(&grid, Sector::E, 0.0, times).series(row);
        let moved = propagate(&at_crystal, d, grid.center_frequency(Sector::E)).unwrap();
        let direct = FieldSynthesizer::new(&grid, Sector::E, d, moved.grid).series(row);
        for (a, b) in moved.values.iter().zip(&direct.values) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn propagate_identities() {
        let times = TimeGrid::new(0.0, 0.5, 6).unwrap();
        let vals: Vec<Complex64> = (0..6)
            .map(|n| Complex64::from_polar(1.0 + n as f64, 0.3 * n as f64))
            .collect();
        let f = TimeSeries::new(times, vals).unwrap();

        assert_eq!(propagate(&f, 0.0, 10.0).unwrap(), f);

        let shifted = propagate(&f, 1.5, 10.0).unwrap();
        assert_eq!(shifted.grid.start(), 1.5);
        for (a, b) in shifted.values.iter().zip(&f.values) {
            assert_relative_eq!(a.norm(), b.norm(), epsilon = 1e-15);
        }

        // ω·r = 2π: pure shift
        let omega = 2.0 * PI / 2.0;
        let loop_back = propagate(&f, 2.0, omega).unwrap();
        for (a, b) in loop_back.values.iter().zip(&f.values) {
            assert!((a - b).norm() < 1e-14);
        }

        let ab = propagate(&propagate(&f, 0.5, 7.3).unwrap(), 1.0, 7.3).unwrap();
        let direct = propagate(&f, 1.5, 7.3).unwrap();
        assert_eq!(ab.grid.start(), direct.grid.start());
        for (a, b) in ab.values.iter().zip(&direct.values) {
            assert!((a - b).norm() < 1e-13);
        }

        assert!(matches!(
            propagate(&f, 0.3, 1.0),
            Err(Error::DelayNotRepresentable { .. })
        ));
        assert!(propagate(&f, -0.5, 1.0).is_err());
    }

    #[test]
    fn polarizer_projections() {
        let times = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let e: Vec<Complex64> = vec![Complex64::new(1.0, 0.5); 3];
        let o: Vec<Complex64> = vec![Complex64::new(-0.2, 2.0); 3];
        let bf = BeamField {
            beam: Beam::One,
            e_axis: TimeSeries::new(times, e.clone()).unwrap(),
            o_axis: TimeSeries::new(times, o.clone()).unwrap(),
        };
        assert_eq!(polarize(&bf, 0.0).values, e);
        for (a, b) in polarize(&bf, PI / 2.0).values.iter().zip(&o) {
            assert!((a - b).norm() < 1e-15);
        }

        let unit = BeamField {
            beam: Beam::Two,
            e_axis: TimeSeries::new(times, vec![Complex64::from_polar(1.0, 0.7); 3]).unwrap(),
            o_axis: TimeSeries::new(times, vec![Complex64::default(); 3]).unwrap(),
        };
        for phi in [0.1, 1.0, 2.5, -0.8] {
            for v in polarize(&unit, phi).values {
                assert_relative_eq!(v.norm(), phi.cos().abs(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn stationarity_of_transformed_field() {
        let grid = build_mode_grid(GridSpec::degenerate(6, 20.0, 1.0)).unwrap();
        let vac = sample_vacuum(&grid, 100_000, 12).unwrap();
        let out = transform(&vac, &CrystalParams::default(), &grid).unwrap();
        let lag = 1.3;
        let mut estimates = Vec::new();
        for t0 in [0.0, 7.0] {
            let a = assemble_field(&out, &grid, Sector::E, 0.0, t0).unwrap();
            let b = assemble_field(&out, &grid, Sector::E, 0.0, t0 + lag).unwrap();
            let prods: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y.conj()).collect();
            estimates.push(crate::stats::jackknife_mean(&prods));
        }
        let (m0, s0) = estimates[0];
        let (m1, s1) = estimates[1];
        let se = (s0 * s0 + s1 * s1).sqrt();
        assert!((m0 - m1).norm() < 3.0 * se, "{m0} vs {m1} ± {se}");
    }

    #[test]
    fn unaligned_window_rejected() {
        assert!(matches!(
            TimeGrid::spanning(0.0, 0.3, 1.0),
            Err(Error::WindowMisaligned { .. })
        ));
        assert_eq!(TimeGrid::spanning(0.0, 0.25, 1.0).unwrap().len(), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn polarizer_splits_energy(
                phi in -6.3f64..6.3,
                er in -3.0f64..3.0, ei in -3.0f64..3.0,
                or in -3.0f64..3.0, oi in -3.0f64..3.0,
            ) {
                let times = TimeGrid::new(0.0, 1.0, 1).unwrap();
                let bf = BeamField {
                    beam: Beam::One,
                    e_axis: TimeSeries::new(times, vec![Complex64::new(er, ei)]).unwrap(),
                    o_axis: TimeSeries::new(times, vec![Complex64::new(or, oi)]).unwrap(),
                };
                let a = polarize(&bf, phi).values[0].norm_sqr();
                let b = polarize(&bf, phi + PI / 2.0).values[0].norm_sqr();
                let total = er * er + ei * ei + or * or + oi * oi;
                prop_assert!((a + b - total).abs() <= 1e-13 * total.max(1.0));
            }
        }
    }
}
