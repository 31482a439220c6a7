//! Second-order crystal input-output map.
//!
//! For a mode `k` of sector `s` with conjugate sector `s̄`:
//!
//! ```text
//! out(k) = α(k) + gV·β(k) + g²|V|²·γ(k)
//! β(k) = Σ_{k'∈s̄} f(k,k') u[(Δt/2)(ω_p − ω_k − ω_k')] α*(k')
//! γ(k) = Σ_{k'∈s̄} Σ_{k''∈s} f(k,k') f*(k',k'')
//!          u[(Δt/2)(ω_k' + ω_k'' − ω_p)] u[(Δt/2)(ω_k'' − ω_k)] α(k'')
//! ```
//!
//! The map is real-linear in `(α, α*)` and independent of the realization,
//! so it is precomputed once and applied row by row.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{sinc_kernel, ModeGrid, PhaseMatchKernel, Sector};
use crate::zeropoint::{Ensemble, ModeAmplitudes, VacuumEnsemble};

/// Default perturbative ceiling on `g|V|`.
pub const DEFAULT_CEILING: f64 = 0.1;
/// Largest ceiling that may be configured.
pub const MAX_CEILING: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrystalParams {
    /// Dimensionless coupling `g = g'Δt`.
    pub coupling: f64,
    /// Complex pump amplitude `V`.
    pub pump: Complex64,
    /// Crystal transit time `Δt`.
    pub transit_time: f64,
    pub kernel: PhaseMatchKernel,
    /// `g|V|` above this draws a warning.
    pub ceiling: f64,
}

impl Default for CrystalParams {
    fn default() -> Self {
        CrystalParams {
            coupling: 0.05,
            pump: Complex64::new(1.0, 0.0),
            transit_time: 1.0,
            kernel: PhaseMatchKernel::Pairing,
            ceiling: DEFAULT_CEILING,
        }
    }
}

impl CrystalParams {
    pub fn with_coupling(self, coupling: f64) -> Self {
        CrystalParams { coupling, ..self }
    }

    /// `g|V|`.
    pub fn strength(&self) -> f64 {
        self.coupling * self.pump.norm()
    }

    /// `gV`.
    pub fn first_order(&self) -> Complex64 {
        self.pump * self.coupling
    }

    /// `g²|V|²`.
    pub fn second_order(&self) -> f64 {
        self.coupling * self.coupling * self.pump.norm_sqr()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling.is_finite() && self.coupling >= 0.0) {
            return Err(Error::invalid(
                "coupling",
                format!("must be finite and non-negative, got {}", self.coupling),
            ));
        }
        if !(self.pump.re.is_finite() && self.pump.im.is_finite()) {
            return Err(Error::invalid("pump", "must be finite"));
        }
        if !(self.transit_time.is_finite() && self.transit_time > 0.0) {
            return Err(Error::invalid(
                "transit_time",
                format!("must be positive, got {}", self.transit_time),
            ));
        }
        if !(self.ceiling > 0.0 && self.ceiling <= MAX_CEILING) {
            return Err(Error::invalid(
                "ceiling",
                format!("must lie in (0, {MAX_CEILING}], got {}", self.ceiling),
            ));
        }
        self.kernel.validate()
    }

    /// Warning text when `g|V|` is above the configured perturbative ceiling.
    pub fn perturbative_warning(&self) -> Option<String> {
        let s = self.strength();
        (s > self.ceiling).then(|| {
            format!(
                "g|V| = {s} exceeds the perturbative ceiling {}; neglected higher-order terms may not be small",
                self.ceiling
            )
        })
    }
}

type SparseRow = Vec<(usize, Complex64)>;

/// Non-zero phase-matching weights from each mode of `from` into `to`,
/// in local (within-sector) indices.
fn kernel_rows(grid: &ModeGrid, kernel: &PhaseMatchKernel, from: Sector, to: Sector) -> Vec<Vec<(usize, f64)>> {
    let from_start = grid.sector_range(from).start;
    let to_start = grid.sector_range(to).start;
    (0..grid.n_pairs())
        .map(|k| {
            (0..grid.n_pairs())
                .filter_map(|kp| {
                    let f = grid
                        .coupling(from_start + k, to_start + kp, kernel)
                        .expect("conjugate sectors are distinct");
                    (f != 0.0).then_some((kp, f))
                })
                .collect()
        })
        .collect()
}

/// Coefficients of the `G` operator for target sector `s`: row `k` lists
/// `(k', f(k,k') u[(Δt/2)(ω_p − ω_k − ω_k')])` over the conjugate sector.
fn g_coefficients(grid: &ModeGrid, params: &CrystalParams, target: Sector) -> Vec<SparseRow> {
    let conj = target.conjugate();
    let half_dt = 0.5 * params.transit_time;
    let wp = grid.pump_frequency();
    let own = grid.sector_modes(target);
    let other = grid.sector_modes(conj);
    kernel_rows(grid, &params.kernel, target, conj)
        .into_iter()
        .enumerate()
        .map(|(k, row)| {
            row.into_iter()
                .map(|(kp, f)| {
                    let x = half_dt * (wp - own[k].frequency - other[kp].frequency);
                    (kp, sinc_kernel(x) * f)
                })
                .collect()
        })
        .collect()
}

/// Coefficients of the `J` operator for target sector `s`: row `k` lists
/// `(k'', Σ_{k'} f(k,k') f*(k',k'') u[..] u[..])` within the same sector.
fn j_coefficients(grid: &ModeGrid, params: &CrystalParams, target: Sector) -> Vec<SparseRow> {
    let conj = target.conjugate();
    let half_dt = 0.5 * params.transit_time;
    let wp = grid.pump_frequency();
    let own = grid.sector_modes(target);
    let other = grid.sector_modes(conj);
    let forward = kernel_rows(grid, &params.kernel, target, conj);
    let backward = kernel_rows(grid, &params.kernel, conj, target);
    let n = grid.n_pairs();
    let mut dense = vec![Complex64::default(); n];
    forward
        .iter()
        .enumerate()
        .map(|(k, row)| {
            dense.iter_mut().for_each(|z| *z = Complex64::default());
            let mut touched = vec![false; n];
            for &(kp, f1) in row {
                for &(kpp, f2) in &backward[kp] {
                    // f is real, so f* = f
                    let u1 = sinc_kernel(half_dt * (other[kp].frequency + own[kpp].frequency - wp));
                    let u2 = sinc_kernel(half_dt * (own[kpp].frequency - own[k].frequency));
                    dense[kpp] += u1 * u2 * (f1 * f2);
                    touched[kpp] = true;
                }
            }
            (0..n)
                .filter(|&kpp| touched[kpp])
                .map(|kpp| (kpp, dense[kpp]))
                .collect()
        })
        .collect()
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { what, expected, found });
    }
    Ok(())
}

/// `β_k` for every mode of `target`, given the amplitudes `α` of the
/// conjugate sector (conjugated internally).
pub fn apply_g(
    grid: &ModeGrid,
    params: &CrystalParams,
    target: Sector,
    conjugate_amplitudes: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_len(
        "conjugate-sector amplitudes",
        grid.n_pairs(),
        conjugate_amplitudes.len(),
    )?;
    Ok(g_coefficients(grid, params, target)
        .iter()
        .map(|row| row.iter().map(|&(kp, c)| c * conjugate_amplitudes[kp].conj()).sum())
        .collect())
}

/// `γ_k` for every mode of `target`, given that sector's own amplitudes.
pub fn apply_j(
    grid: &ModeGrid,
    params: &CrystalParams,
    target: Sector,
    amplitudes: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_len("sector amplitudes", grid.n_pairs(), amplitudes.len())?;
    Ok(j_coefficients(grid, params, target)
        .iter()
        .map(|row| row.iter().map(|&(kpp, c)| c * amplitudes[kpp]).sum())
        .collect())
}

/// Precomputed crystal map `out = α + A₂α + Bα*` over all grid modes.
///
/// `A₂ = g²|V|²J` couples modes within a sector, `B = gV·G` couples a sector
/// to its conjugate. Zero coefficients are not stored.
#[derive(Debug, Clone)]
pub struct TransformMap {
    n_modes: usize,
    second: Vec<SparseRow>,
    conj: Vec<SparseRow>,
    grid_fingerprint: u64,
    params: CrystalParams,
}

impl TransformMap {
    pub fn new(grid: &ModeGrid, params: &CrystalParams) -> Result<Self> {
        params.validate()?;
        let n_modes = grid.len();
        let mut second = vec![SparseRow::new(); n_modes];
        let mut conj = vec![SparseRow::new(); n_modes];
        let g1 = params.first_order();
        let g2 = params.second_order();
        for sector in Sector::ALL {
            let own = grid.sector_range(sector).start;
            let other = grid.sector_range(sector.conjugate()).start;
            for (k, row) in g_coefficients(grid, params, sector).into_iter().enumerate() {
                conj[own + k] = row
                    .into_iter()
                    .map(|(kp, c)| (other + kp, g1 * c))
                    .filter(|(_, c)| *c != Complex64::default())
                    .collect();
            }
            for (k, row) in j_coefficients(grid, params, sector).into_iter().enumerate() {
                second[own + k] = row
                    .into_iter()
                    .map(|(kpp, c)| (own + kpp, c * g2))
                    .filter(|(_, c)| *c != Complex64::default())
                    .collect();
            }
        }
        Ok(TransformMap {
            n_modes,
            second,
            conj,
            grid_fingerprint: grid.fingerprint(),
            params: *params,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn params(&self) -> &CrystalParams {
        &self.params
    }

    pub fn grid_fingerprint(&self) -> u64 {
        self.grid_fingerprint
    }

    /// Non-zero entries of row `k` of `A₂` (order g²).
    pub fn second_order_row(&self, k: usize) -> &[(usize, Complex64)] {
        &self.second[k]
    }

    /// Non-zero entries of row `k` of `B` (order g, acting on `α*`).
    pub fn conjugate_row(&self, k: usize) -> &[(usize, Complex64)] {
        &self.conj[k]
    }

    /// Full coefficient of `α_l` in `out_k`, identity included.
    pub fn direct(&self, k: usize, l: usize) -> Complex64 {
        let id = if k == l {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        };
        id + lookup(&self.second[k], l)
    }

    /// Coefficient of `α*_l` in `out_k`.
    pub fn conjugate(&self, k: usize, l: usize) -> Complex64 {
        lookup(&self.conj[k], l)
    }

    /// All non-zero entries as `(row, column, value, acts_on_conjugate)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64, bool)> + '_ {
        (0..self.n_modes).flat_map(move |k| {
            let mut direct: Vec<(usize, Complex64)> = self.second[k].clone();
            match direct.iter_mut().find(|(l, _)| *l == k) {
                Some((_, c)) => *c += 1.0,
                None => direct.push((k, Complex64::new(1.0, 0.0))),
            }
            direct.sort_by_key(|&(l, _)| l);
            direct
                .into_iter()
                .map(move |(l, c)| (k, l, c, false))
                .chain(self.conj[k].iter().map(move |&(l, c)| (k, l, c, true)))
        })
    }

    /// Applies the map to one realization.
    pub fn apply(&self, input: &[Complex64], output: &mut [Complex64]) {
        debug_assert_eq!(input.len(), self.n_modes);
        for (k, out) in output.iter_mut().enumerate() {
            let mut acc = input[k];
            for &(l, c) in &self.second[k] {
                acc += c * input[l];
            }
            for &(l, c) in &self.conj[k] {
                acc += c * input[l].conj();
            }
            *out = acc;
        }
    }
}

fn lookup(row: &[(usize, Complex64)], l: usize) -> Complex64 {
    row.iter().find(|(j, _)| *j == l).map(|&(_, c)| c).unwrap_or_default()
}

/// Transformed ensemble: amplitudes just after the crystal, at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputEnsemble {
    amplitudes: ModeAmplitudes,
    seed: u64,
    grid_fingerprint: u64,
    params: CrystalParams,
}

impl OutputEnsemble {
    pub fn params(&self) -> &CrystalParams {
        &self.params
    }
}

impl Ensemble for OutputEnsemble {
    fn amplitudes(&self) -> &ModeAmplitudes {
        &self.amplitudes
    }
    fn grid_fingerprint(&self) -> u64 {
        self.grid_fingerprint
    }
    fn seed(&self) -> u64 {
        self.seed
    }
}

pub fn transform(vac: &VacuumEnsemble, params: &CrystalParams, grid: &ModeGrid) -> Result<OutputEnsemble> {
    vac.check_grid(grid)?;
    let map = TransformMap::new(grid, params)?;
    transform_with_map(vac, &map)
}

/// Applies a prebuilt map; rows are independent and processed in parallel.
pub fn transform_with_map(vac: &VacuumEnsemble, map: &TransformMap) -> Result<OutputEnsemble> {
    if vac.grid_fingerprint() != map.grid_fingerprint {
        return Err(Error::GridMismatch {
            expected: map.grid_fingerprint,
            found: vac.grid_fingerprint(),
        });
    }
    let input = vac.amplitudes();
    let n_modes = input.n_modes();
    check_len("modes per realization", map.n_modes, n_modes)?;
    let mut data = vec![Complex64::default(); input.as_slice().len()];
    data.par_chunks_exact_mut(n_modes)
        .zip(input.par_rows())
        .for_each(|(out, row)| map.apply(row, out));
    Ok(OutputEnsemble {
        amplitudes: ModeAmplitudes::new(data, input.n_realizations(), n_modes)?,
        seed: vac.seed(),
        grid_fingerprint: vac.grid_fingerprint(),
        params: map.params,
    })
}
