//! Seeded zeropoint (vacuum) ensembles.
//!
//! Every amplitude is complex Gaussian with mean 0 and `⟨|α|²⟩ = 1/2`, the
//! symmetric-ordering vacuum. Realization `r` is drawn from its own
//! ChaCha8 stream (`seed`, stream `r`), so any subset of rows can be
//! regenerated independently and in any order. Real and imaginary parts are
//! each `0.5 · z` with `z` from `rand_distr::StandardNormal` (ziggurat),
//! real part first, modes in grid order.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::ModeGrid;

/// `⟨|α|²⟩` of a vacuum mode.
pub const VACUUM_VARIANCE: f64 = 0.5;

/// Standard deviation of each quadrature, `√(1/4)`.
const QUADRATURE_SD: f64 = 0.5;

const DUMP_MAGIC: [u8; 8] = *b"WPDCVAC1";

/// Row-major `realizations × modes` block of complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAmplitudes {
    data: Vec<Complex64>,
    n_realizations: usize,
    n_modes: usize,
}

impl ModeAmplitudes {
    pub fn new(data: Vec<Complex64>, n_realizations: usize, n_modes: usize) -> Result<Self> {
        if data.len() != n_realizations * n_modes {
            return Err(Error::ShapeMismatch {
                what: "amplitude block",
                expected: n_realizations * n_modes,
                found: data.len(),
            });
        }
        Ok(ModeAmplitudes {
            data,
            n_realizations,
            n_modes,
        })
    }

    pub fn n_realizations(&self) -> usize {
        self.n_realizations
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn row(&self, realization: usize) -> &[Complex64] {
        &self.data[realization * self.n_modes..(realization + 1) * self.n_modes]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, Complex64> {
        self.data.chunks_exact(self.n_modes)
    }

    pub fn par_rows(&self) -> rayon::slice::ChunksExact<'_, Complex64> {
        self.data.par_chunks_exact(self.n_modes)
    }

    pub fn column(&self, mode: usize) -> impl Iterator<Item = Complex64> + '_ {
        self.rows().map(move |r| r[mode])
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// Anything that carries per-realization mode amplitudes for a known grid.
pub trait Ensemble: Sync {
    fn amplitudes(&self) -> &ModeAmplitudes;
    fn grid_fingerprint(&self) -> u64;
    fn seed(&self) -> u64;

    fn n_realizations(&self) -> usize {
        self.amplitudes().n_realizations()
    }

    fn check_grid(&self, grid: &ModeGrid) -> Result<()> {
        if self.grid_fingerprint() != grid.fingerprint() {
            return Err(Error::GridMismatch {
                expected: grid.fingerprint(),
                found: self.grid_fingerprint(),
            });
        }
        if self.amplitudes().n_modes() != grid.len() {
            return Err(Error::ShapeMismatch {
                what: "modes per realization",
                expected: grid.len(),
                found: self.amplitudes().n_modes(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VacuumEnsemble {
    amplitudes: ModeAmplitudes,
    seed: u64,
    grid_fingerprint: u64,
}

impl VacuumEnsemble {
    /// Wraps externally built amplitudes, e.g. linear combinations of other
    /// ensembles.
    pub fn from_amplitudes(grid: &ModeGrid, amplitudes: ModeAmplitudes, seed: u64) -> Result<Self> {
        let ens = VacuumEnsemble {
            amplitudes,
            seed,
            grid_fingerprint: grid.fingerprint(),
        };
        ens.check_grid(grid)?;
        Ok(ens)
    }
}

impl Ensemble for VacuumEnsemble {
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

fn fill_realization(seed: u64, index: u64, out: &mut [Complex64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    for a in out.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *a = Complex64::new(QUADRATURE_SD * re, QUADRATURE_SD * im);
    }
}

/// Draws one realization on its own; identical to row `index` of
/// [`sample_vacuum`] with the same seed.
pub fn sample_realization(n_modes: usize, seed: u64, index: u64) -> Vec<Complex64> {
    let mut row = vec![Complex64::default(); n_modes];
    fill_realization(seed, index, &mut row);
    row
}

pub fn sample_vacuum(grid: &ModeGrid, n_realizations: usize, seed: u64) -> Result<VacuumEnsemble> {
    if n_realizations == 0 {
        return Err(Error::invalid("n_realizations", "must be at least 1"));
    }
    let n_modes = grid.len();
    let mut data = vec![Complex64::default(); n_realizations * n_modes];
    data.par_chunks_exact_mut(n_modes)
        .enumerate()
        .for_each(|(r, row)| fill_realization(seed, r as u64, row));
    Ok(VacuumEnsemble {
        amplitudes: ModeAmplitudes::new(data, n_realizations, n_modes)?,
        seed,
        grid_fingerprint: grid.fingerprint(),
    })
}

/// Multiplies mode column `m` by `e^{-iθ_m}`.
pub fn phase_shift_vacuum(ensemble: &VacuumEnsemble, phases: &[f64]) -> Result<VacuumEnsemble> {
    let n_modes = ensemble.amplitudes.n_modes();
    if phases.len() != n_modes {
        return Err(Error::ShapeMismatch {
            what: "mode phases",
            expected: n_modes,
            found: phases.len(),
        });
    }
    if let Some(bad) = phases.iter().find(|p| !p.is_finite()) {
        return Err(Error::invalid("mode_phases", format!("non-finite phase {bad}")));
    }
    let rotors: Vec<Complex64> = phases
        .iter()
        .map(|&p| {
            if p == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(1.0, -p)
            }
        })
        .collect();
    let mut data = ensemble.amplitudes.as_slice().to_vec();
    data.par_chunks_exact_mut(n_modes).for_each(|row| {
        for (a, r) in row.iter_mut().zip(&rotors) {
            *a *= r;
        }
    });
    Ok(VacuumEnsemble {
        amplitudes: ModeAmplitudes::new(data, ensemble.amplitudes.n_realizations(), n_modes)?,
        seed: ensemble.seed,
        grid_fingerprint: ensemble.grid_fingerprint,
    })
}

/// Writes the ensemble as a 32-byte header (magic, R, M, seed; little-endian
/// u64s after an 8-byte magic) followed by interleaved `re, im` f64 values.
///
/// The header carries no grid fingerprint, so [`read_ensemble`] needs the
/// grid to re-attach it.
pub fn write_ensemble<W: Write>(ensemble: &VacuumEnsemble, mut w: W) -> Result<()> {
    let a = &ensemble.amplitudes;
    w.write_all(&DUMP_MAGIC)?;
    w.write_all(&(a.n_realizations() as u64).to_le_bytes())?;
    w.write_all(&(a.n_modes() as u64).to_le_bytes())?;
    w.write_all(&ensemble.seed.to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * a.as_slice().len());
    for z in a.as_slice() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_ensemble<R: Read>(grid: &ModeGrid, mut r: R) -> Result<VacuumEnsemble> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)
        .map_err(|e| Error::BadDump(format!("short header: {e}")))?;
    if header[..8] != DUMP_MAGIC {
        return Err(Error::BadDump("bad magic".into()));
    }
    let word = |i: usize| u64::from_le_bytes(header[i..i + 8].try_into().unwrap());
    let (n_real, n_modes, seed) = (word(8) as usize, word(16) as usize, word(24));
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != 16 * n_real * n_modes {
        return Err(Error::BadDump(format!(
            "expected {} payload bytes, found {}",
            16 * n_real * n_modes,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    VacuumEnsemble::from_amplitudes(grid, ModeAmplitudes::new(data, n_real, n_modes)?, seed)
}
