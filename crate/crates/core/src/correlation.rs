//! Field correlation functions: exact mode sums and Monte Carlo estimates.
//!
//! After the crystal every slowly varying field is a real-linear functional
//! of the vacuum amplitudes,
//!
//! ```text
//! F = Σ_l (c_l + u_l) α_l + Σ_l v_l α*_l
//! ```
//!
//! where `c` is the free-field part, `u` comes from the order-g² block and
//! `v` from the order-g conjugate block. With `⟨α_l α*_m⟩ = ½δ_lm` and
//! `⟨α α⟩ = 0`, any second moment is a finite sum over modes. The oracle
//! evaluates those sums either exactly for the implemented map or truncated
//! at the leading order in `g`.

use std::f64::consts::E;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::crystal::{CrystalParams, TransformMap};
use crate::error::{Error, Result};
use crate::field::{mode_coefficient, FieldSynthesizer, TimeGrid};
use crate::lattice::{ModeGrid, Sector};
use crate::stats::jackknife_mean;
use crate::zeropoint::{Ensemble, VACUUM_VARIANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    MonteCarlo,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub value: Complex64,
    /// Zero for analytic values.
    pub stderr: f64,
    pub n_samples: usize,
    pub kind: EstimateKind,
}

impl CorrelationEstimate {
    pub fn analytic(value: Complex64) -> Self {
        CorrelationEstimate {
            value,
            stderr: 0.0,
            n_samples: 0,
            kind: EstimateKind::Analytic,
        }
    }

    /// Distance to `target` in units of the standard error.
    pub fn sigmas_from(&self, target: Complex64) -> f64 {
        (self.value - target).norm() / self.stderr
    }
}

/// Truncation used by the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Order {
    /// Lowest non-vanishing order in `g`: `g` for anomalous correlators,
    /// `g²` for the excess of normal ones.
    #[default]
    Leading,
    /// Every term produced by the implemented map.
    Exact,
}

/// `F_s(r, t)` after the crystal, as coefficients over the vacuum amplitudes.
#[derive(Debug, Clone)]
pub struct FieldFunctional {
    base: Vec<Complex64>,
    second: Vec<Complex64>,
    conj: Vec<Complex64>,
}

impl FieldFunctional {
    pub fn new(grid: &ModeGrid, map: &TransformMap, sector: Sector, r: f64, t: f64) -> Self {
        let m = grid.len();
        let mut base = vec![Complex64::default(); m];
        let mut second = vec![Complex64::default(); m];
        let mut conj = vec![Complex64::default(); m];
        for k in grid.sector_range(sector) {
            let c = mode_coefficient(grid.mode(k), r, t);
            base[k] = c;
            for &(l, a) in map.second_order_row(k) {
                second[l] += c * a;
            }
            for &(l, b) in map.conjugate_row(k) {
                conj[l] += c * b;
            }
        }
        FieldFunctional { base, second, conj }
    }

    /// Evaluates the functional on one realization of vacuum amplitudes.
    pub fn evaluate(&self, vacuum: &[Complex64]) -> Complex64 {
        vacuum
            .iter()
            .enumerate()
            .map(|(l, a)| (self.base[l] + self.second[l]) * a + self.conj[l] * a.conj())
            .sum()
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// `⟨F_a F*_b⟩` minus its vacuum value.
pub fn normal_excess(a: &FieldFunctional, b: &FieldFunctional, order: Order) -> Complex64 {
    let mut s = dot_conj(&a.base, &b.second) + dot_conj(&a.second, &b.base) + dot_conj(&a.conj, &b.conj);
    if order == Order::Exact {
        s += dot_conj(&a.second, &b.second);
    }
    s * VACUUM_VARIANCE
}

/// `⟨F_a F*_b⟩` of the free vacuum field.
pub fn vacuum_normal(a: &FieldFunctional, b: &FieldFunctional) -> Complex64 {
    dot_conj(&a.base, &b.base) * VACUUM_VARIANCE
}

/// `⟨F_a F_b⟩`; vanishes in the vacuum.
pub fn anomalous(a: &FieldFunctional, b: &FieldFunctional, order: Order) -> Complex64 {
    let mut s = dot(&a.base, &b.conj) + dot(&a.conj, &b.base);
    if order == Order::Exact {
        s += dot(&a.second, &b.conj) + dot(&a.conj, &b.second);
    }
    s * VACUUM_VARIANCE
}

/// Exact mode-sum oracle for one grid and crystal.
#[derive(Debug, Clone)]
pub struct Oracle<'g> {
    grid: &'g ModeGrid,
    map: TransformMap,
    order: Order,
}

impl<'g> Oracle<'g> {
    pub fn new(grid: &'g ModeGrid, params: &CrystalParams) -> Result<Self> {
        Ok(Oracle {
            grid,
            map: TransformMap::new(grid, params)?,
            order: Order::Leading,
        })
    }

    pub fn with_order(self, order: Order) -> Self {
        Oracle { order, ..self }
    }

    pub fn grid(&self) -> &ModeGrid {
        self.grid
    }

    pub fn map(&self) -> &TransformMap {
        &self.map
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn functional(&self, sector: Sector, r: f64, t: f64) -> FieldFunctional {
        FieldFunctional::new(self.grid, &self.map, sector, r, t)
    }

    /// `⟨F_e(0, 0) F_o(0, τ)⟩ = gV·ν(τ)`.
    pub fn cross(&self, tau: f64) -> Complex64 {
        self.cross_between(Sector::E, Sector::O, tau)
    }

    /// `⟨F_a(0, 0) F_b(0, τ)⟩` for any two sectors.
    pub fn cross_between(&self, a: Sector, b: Sector, tau: f64) -> Complex64 {
        anomalous(&self.functional(a, 0.0, 0.0), &self.functional(b, 0.0, tau), self.order)
    }

    /// `⟨F_a(r_a, 0) F_b(r_b, τ)⟩`, obtained from the crystal-center value
    /// through `F(r, t) = F(0, t − r) e^{iω_s r}`.
    pub fn cross_at(&self, a: Sector, r_a: f64, b: Sector, r_b: f64, tau: f64) -> Complex64 {
        let phase = self.grid.center_frequency(a) * r_a + self.grid.center_frequency(b) * r_b;
        let fa = self.functional(a, 0.0, -r_a);
        let fb = self.functional(b, 0.0, tau - r_b);
        anomalous(&fa, &fb, self.order) * Complex64::from_polar(1.0, phase)
    }

    /// `⟨F_s(0, 0) F*_s(0, τ)⟩` minus the vacuum term, `g²|V|²·μ_s(τ)`.
    pub fn auto(&self, sector: Sector, tau: f64) -> Complex64 {
        normal_excess(
            &self.functional(sector, 0.0, 0.0),
            &self.functional(sector, 0.0, tau),
            self.order,
        )
    }

    /// Vacuum intensity `Σ_k w_k²/2` of one sector.
    pub fn vacuum_intensity(&self, sector: Sector) -> f64 {
        vacuum_intensity(self.grid, sector)
    }
}

/// `Σ_{k∈s} w_k² ⟨|α_k|²⟩`.
pub fn vacuum_intensity(grid: &ModeGrid, sector: Sector) -> f64 {
    grid.sector_modes(sector)
        .iter()
        .map(|m| m.weight * m.weight * VACUUM_VARIANCE)
        .sum()
}

/// `gV·ν(τ)` at the crystal center, to leading order.
pub fn analytic_cross(grid: &ModeGrid, params: &CrystalParams, tau: f64) -> Result<Complex64> {
    Ok(Oracle::new(grid, params)?.cross(tau))
}

/// `g²|V|²·μ_s(τ)` at the crystal center, to leading order.
pub fn analytic_auto(grid: &ModeGrid, params: &CrystalParams, sector: Sector, tau: f64) -> Result<Complex64> {
    Ok(Oracle::new(grid, params)?.auto(sector, tau))
}

/// Cross-correlation between two detector positions, via propagation.
pub fn analytic_cross_at(grid: &ModeGrid, params: &CrystalParams, r1: f64, r2: f64, tau: f64) -> Result<Complex64> {
    Ok(Oracle::new(grid, params)?.cross_at(Sector::E, r1, Sector::O, r2, tau))
}

/// Mean over realizations of `a·b` (or `a·b*`) with a jackknife error.
pub fn mc_correlation(a: &[Complex64], b: &[Complex64], conjugate_b: bool) -> Result<CorrelationEstimate> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            what: "realizations",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::invalid("realizations", "need at least one sample"));
    }
    let products: Vec<Complex64> = a
        .par_iter()
        .zip(b)
        .map(|(x, y)| if conjugate_b { x * y.conj() } else { x * y })
        .collect();
    let (value, stderr) = jackknife_mean(&products);
    Ok(CorrelationEstimate {
        value,
        stderr,
        n_samples: products.len(),
        kind: EstimateKind::MonteCarlo,
    })
}

/// Field values of one sector on a time grid for every realization,
/// stored time-major: `samples[n]` holds all realizations at time `n`.
pub fn sample_field<E: Ensemble>(
    ensemble: &E,
    grid: &ModeGrid,
    sector: Sector,
    r: f64,
    times: TimeGrid,
) -> Result<Vec<Vec<Complex64>>> {
    ensemble.check_grid(grid)?;
    let synth = FieldSynthesizer::new(grid, sector, r, times);
    let per_realization: Vec<Vec<Complex64>> = ensemble
        .amplitudes()
        .par_rows()
        .map(|row| synth.series(row).values)
        .collect();
    Ok((0..times.len())
        .map(|n| per_realization.iter().map(|s| s[n]).collect())
        .collect())
}

/// First `τ > 0` at which `|μ_e(τ)| / |μ_e(0)|` drops below `1/e`.
///
/// The leading-order shape does not depend on `g|V|`, so it is evaluated
/// at unit strength; the result is defined even for an uncoupled crystal.
pub fn coherence_time(grid: &ModeGrid, params: &CrystalParams) -> Result<f64> {
    let unit = CrystalParams {
        coupling: 1.0,
        pump: Complex64::new(1.0, 0.0),
        ceiling: crate::crystal::MAX_CEILING,
        ..*params
    };
    let oracle = Oracle::new(grid, &unit)?;
    let mu0 = oracle.auto(Sector::E, 0.0).norm();
    if mu0 == 0.0 {
        return Err(Error::invalid("kernel", "no pair coupling on this grid"));
    }
    let threshold = mu0 / E;
    let below = |tau: f64| oracle.auto(Sector::E, tau).norm() < threshold;

    let bw = grid.spec().bandwidth;
    if bw == 0.0 {
        return Err(Error::invalid(
            "bandwidth",
            "a single-frequency grid has no coherence time",
        ));
    }
    // coarse scan in steps well below the spectral width, then bisection
    let step = 0.05 / bw;
    let limit = 2.0 * std::f64::consts::PI * grid.n_pairs().max(2) as f64 / bw;
    let mut lo = 0.0;
    let mut hi = step;
    while !below(hi) {
        lo = hi;
        hi += step;
        if hi > limit {
            return Err(Error::invalid("bandwidth", "autocorrelation never decays below 1/e"));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::transform;
    use crate::field::assemble_field;
    use crate::lattice::{build_mode_grid, GridSpec};
    use crate::zeropoint::sample_vacuum;
    use approx::assert_relative_eq;

    fn single_pair() -> ModeGrid {
        build_mode_grid(GridSpec::degenerate(1, 20.0, 0.0)).unwrap()
    }

    #[test]
    fn single_pair_cross_by_hand() {
        let grid = single_pair();
        let params = CrystalParams::default();
        let w = grid.mode(0).weight;
        // F_e = i w (α_e + gV α_o*), F_o = i w (α_o + gV α_e*):
        // ⟨F_e F_o⟩ = (i w)² gV (½ + ½)
        let want = -params.first_order() * w * w;
        let got = analytic_cross(&grid, &params, 0.0).unwrap();
        assert!((got - want).norm() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn single_pair_auto_by_hand() {
        let grid = single_pair();
        let params = CrystalParams::default();
        let w = grid.mode(0).weight;
        // out_e = α_e(1 + g²|V|²) + gV α_o*:
        // excess = w²(½·2g²|V|² + ½ g²|V|²) at leading order
        let g2 = params.second_order();
        let want = 1.5 * g2 * w * w;
        let got = analytic_auto(&grid, &params, Sector::E, 0.0).unwrap();
        assert_relative_eq!(got.re, want, max_relative = 1e-14);
        assert_eq!(got.im, 0.0);

        let exact = Oracle::new(&grid, &params)
            .unwrap()
            .with_order(Order::Exact)
            .auto(Sector::E, 0.0);
        assert_relative_eq!(exact.re, (1.5 * g2 + 0.5 * g2 * g2) * w * w, max_relative = 1e-14);
    }

    #[test]
    fn uncoupled_crystal_gives_zero() {
        let grid = build_mode_grid(GridSpec::default()).unwrap();
        let params = CrystalParams::default().with_coupling(0.0);
        for tau in [0.0, 1.0, 7.5] {
            assert_eq!(analytic_cross(&grid, &params, tau).unwrap(), Complex64::default());
            assert_eq!(
                analytic_auto(&grid, &params, Sector::O, tau).unwrap(),
                Complex64::default()
            );
        }
    }

    #[test]
    fn auto_at_zero_is_positive_real() {
        let grid = build_mode_grid(GridSpec::default()).unwrap();
        let params = CrystalParams::default();
        for s in Sector::ALL {
            let v = analytic_auto(&grid, &params, s, 0.0).unwrap();
            assert!(v.re > 0.0);
            assert!(v.im.abs() < 1e-15 * v.re);
        }
    }

    #[test]
    fn hermitian_symmetry() {
        let grid = build_mode_grid(GridSpec::default()).unwrap();
        let oracle = Oracle::new(&grid, &CrystalParams::default()).unwrap();
        for tau in [0.3, 1.7, 4.0, 11.0] {
            let a = oracle.auto(Sector::E, tau);
            let b = oracle.auto(Sector::E, -tau);
            assert!((a - b.conj()).norm() <= 1e-14 * a.norm().max(1e-3), "{a} {b}");
        }
    }

    #[test]
    fn coupling_scaling() {
        let grid = build_mode_grid(GridSpec::default()).unwrap();
        let p1 = CrystalParams::default().with_coupling(0.02);
        let p2 = CrystalParams::default().with_coupling(0.06);
        for tau in [0.0, 0.9, 3.3] {
            let c1 = analytic_cross(&grid, &p1, tau).unwrap();
            let c2 = analytic_cross(&grid, &p2, tau).unwrap();
            assert!((c2 - c1 * 3.0).norm() <= 1e-14 * c2.norm());
            let a1 = analytic_auto(&grid, &p1, Sector::E, tau).unwrap();
            let a2 = analytic_auto(&grid, &p2, Sector::E, tau).unwrap();
            assert!((a2 - a1 * 9.0).norm() <= 1e-13 * a2.norm());
        }
    }

    #[test]
    fn cross_decays_at_spectral_zero() {
        // With a flat comb of n lines spaced bw/(n−1) the envelope of ν has
        // exact zeros at τ = 2πk(n−1)/(n·bw); take one several coherence
        // times out.
        let grid = build_mode_grid(GridSpec::default()).unwrap();
        let params = CrystalParams::default();
        let n = grid.n_pairs() as f64;
        let tau = 2.0 * std::f64::consts::PI * 4.0 * (n - 1.0) / n;
        let ratio =
            analytic_cross(&grid, &params, tau).unwrap().norm() / analytic_cross(&grid, &params, 0.0).unwrap().norm();
        assert!(ratio < 0.01, "{ratio}");
    }

    #[test]
    fn cross_at_matches_direct_functional() {
        let grid = build_mode_grid(GridSpec::degenerate(8, 20.0, 1.0)).unwrap();
        let oracle = Oracle::new(&grid, &CrystalParams::default()).unwrap();
        let (r1, r2, tau) = (0.75, 2.5, 1.25);
        let via_rule = oracle.cross_at(Sector::E, r1, Sector::O, r2, tau);
        let direct = anomalous(
            &oracle.functional(Sector::E, r1, 0.0),
            &oracle.functional(Sector::O, r2, tau),
            Order::Leading,
        );
        assert!((via_rule - direct).norm() < 1e-14 * direct.norm());
    }

    #[test]
    fn functional_reproduces_transformed_field() {
        let grid = build_mode_grid(GridSpec::degenerate(4, 20.0, 1.0)).unwrap();
        let params = CrystalParams::default().with_coupling(0.2);
        let vac = sample_vacuum(&grid, 5, 1).unwrap();
        let out = transform(&vac, &params, &grid).unwrap();
        let oracle = Oracle::new(&grid, &params).unwrap();
        let f = oracle.functional(Sector::OPrime, 1.5, -0.7);
        let direct = assemble_field(&out, &grid, Sector::OPrime, 1.5, -0.7).unwrap();
        for (r, d) in direct.iter().enumerate() {
            let v = f.evaluate(vac.amplitudes().row(r));
            assert!((v - d).norm() < 1e-13);
        }
    }

    #[test]
    fn coherence_time_of_default_grid() {
        let grid = build_mode_grid(GridSpec::default()).unwrap();
        let params = CrystalParams::default();
        let tau_e = coherence_time(&grid, &params).unwrap();
        let oracle = Oracle::new(&grid, &params).unwrap();
        let ratio = oracle.auto(Sector::E, tau_e).norm() / oracle.auto(Sector::E, 0.0).norm();
        assert_relative_eq!(ratio, 1.0 / E, max_relative = 1e-6);
        // a flat band of width bw decorrelates on the scale of a few 1/bw
        assert!(tau_e > 1.0 && tau_e < 10.0, "{tau_e}");
        assert_eq!(coherence_time(&grid, &params.with_coupling(0.0)).unwrap(), tau_e);
    }

    #[test]
    fn mc_rejects_mismatched_lengths() {
        let a = vec![Complex64::default(); 3];
        let b = vec![Complex64::default(); 4];
        assert!(matches!(mc_correlation(&a, &b, true), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn mc_vacuum_intensity() {
        let grid = build_mode_grid(GridSpec::degenerate(4, 20.0, 1.0)).unwrap();
        let vac = sample_vacuum(&grid, 50_000, 77).unwrap();
        let f = assemble_field(&vac, &grid, Sector::E, 0.0, 0.0).unwrap();
        let est = mc_correlation(&f, &f, true).unwrap();
        assert!(est.sigmas_from(vacuum_intensity(&grid, Sector::E).into()) < 3.0);
        let same = mc_correlation(&f, &f, false).unwrap();
        assert!(same.sigmas_from(Complex64::default()) < 3.0);
    }
}
