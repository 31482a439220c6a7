//! Discrete mode lattice for the two cone-intersection directions.
//!
//! Each direction carries one extraordinary and one ordinary sector. The
//! pair `(e, o)` is conjugate (beam 1 gets `e`, beam 2 gets `o`), and so is
//! `(e', o')` (beam 2 gets `e'`, beam 1 gets `o'`). Geometry is collapsed to
//! frequency detuning along each beam axis, so a mode is fully described by
//! its sector, its position in the sector and its frequency.
//!
//! Units are natural: ħ = c = 1 and the normalization volume is 1, so the
//! per-mode field weight is `√(ω/2)`.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance for `ω_e0 + ω_o0 = ω_p`.
pub const MATCHING_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sector {
    E,
    O,
    EPrime,
    OPrime,
}

impl Sector {
    pub const ALL: [Sector; 4] = [Sector::E, Sector::O, Sector::EPrime, Sector::OPrime];

    /// Position of the sector block in a [`ModeGrid`].
    pub fn index(self) -> usize {
        match self {
            Sector::E => 0,
            Sector::O => 1,
            Sector::EPrime => 2,
            Sector::OPrime => 3,
        }
    }

    /// The sector whose modes are pumped together with this one.
    pub fn conjugate(self) -> Sector {
        match self {
            Sector::E => Sector::O,
            Sector::O => Sector::E,
            Sector::EPrime => Sector::OPrime,
            Sector::OPrime => Sector::EPrime,
        }
    }

    pub fn is_extraordinary(self) -> bool {
        matches!(self, Sector::E | Sector::EPrime)
    }

    /// Beam that carries this sector out of the crystal.
    pub fn beam(self) -> Beam {
        match self {
            Sector::E | Sector::OPrime => Beam::One,
            Sector::EPrime | Sector::O => Beam::Two,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sector::E => "e",
            Sector::O => "o",
            Sector::EPrime => "e'",
            Sector::OPrime => "o'",
        }
    }

    pub fn from_label(label: &str) -> Option<Sector> {
        Sector::ALL.into_iter().find(|s| s.label() == label)
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One of the two beams selected along the cone intersections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Beam {
    One,
    Two,
}

impl Beam {
    /// `(extraordinary-axis, ordinary-axis)` sectors of the beam.
    ///
    /// Beam 1 carries `e` along `i` and `o'` along `j`; beam 2 carries `e'`
    /// along `i'` and `o` along `j'`.
    pub fn components(self) -> (Sector, Sector) {
        match self {
            Beam::One => (Sector::E, Sector::OPrime),
            Beam::Two => (Sector::EPrime, Sector::O),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Beam::One => 1,
            Beam::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeDescriptor {
    pub sector: Sector,
    /// Index of the mode within its sector; conjugate modes share it.
    pub pair: usize,
    pub frequency: f64,
    /// `frequency` minus the sector center frequency.
    pub detuning: f64,
    /// Field weight `√(ω/2)`.
    pub weight: f64,
}

/// Construction parameters for [`ModeGrid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_pairs: usize,
    pub pump_frequency: f64,
    pub bandwidth: f64,
    pub center_e: f64,
    pub center_o: f64,
}

impl GridSpec {
    /// Degenerate grid centered on `ω_p / 2` in both sectors.
    pub fn degenerate(n_pairs: usize, pump_frequency: f64, bandwidth: f64) -> Self {
        GridSpec {
            n_pairs,
            pump_frequency,
            bandwidth,
            center_e: 0.5 * pump_frequency,
            center_o: 0.5 * pump_frequency,
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::degenerate(32, 20.0, 1.0)
    }
}

/// Paired mode lattice for the sectors `e`, `o`, `e'`, `o'`.
///
/// Modes are stored sector by sector in [`Sector::ALL`] order, `n_pairs`
/// modes per sector. Mode `m` of `e` is conjugate to mode `m` of `o`, and
/// likewise for `e'`/`o'`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    spec: GridSpec,
    modes: Vec<ModeDescriptor>,
    pairing: Vec<(usize, usize)>,
}

impl ModeGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn modes(&self) -> &[ModeDescriptor] {
        &self.modes
    }

    pub fn mode(&self, index: usize) -> &ModeDescriptor {
        &self.modes[index]
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn n_pairs(&self) -> usize {
        self.spec.n_pairs
    }

    pub fn pump_frequency(&self) -> f64 {
        self.spec.pump_frequency
    }

    /// Conjugate `(extraordinary, ordinary)` global index pairs, `(e, o)`
    /// sector first, then `(e', o')`.
    pub fn pairing(&self) -> &[(usize, usize)] {
        &self.pairing
    }

    pub fn sector_range(&self, sector: Sector) -> std::ops::Range<usize> {
        let n = self.spec.n_pairs;
        sector.index() * n..(sector.index() + 1) * n
    }

    pub fn sector_modes(&self, sector: Sector) -> &[ModeDescriptor] {
        &self.modes[self.sector_range(sector)]
    }

    /// Average (center) frequency of a sector, the carrier removed from the
    /// slowly varying field.
    pub fn center_frequency(&self, sector: Sector) -> f64 {
        if sector.is_extraordinary() {
            self.spec.center_e
        } else {
            self.spec.center_o
        }
    }

    /// Global index of the mode conjugate to `index`.
    pub fn conjugate_index(&self, index: usize) -> usize {
        let mode = &self.modes[index];
        self.sector_range(mode.sector.conjugate()).start + mode.pair
    }

    /// Stable 64-bit fingerprint of the grid, used to tie ensembles to the
    /// grid that generated them.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a; stable across toolchains, unlike `DefaultHasher`.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.spec.n_pairs as u64);
        feed(self.spec.pump_frequency.to_bits());
        feed(self.spec.center_e.to_bits());
        feed(self.spec.center_o.to_bits());
        for m in &self.modes {
            feed(m.frequency.to_bits());
        }
        h
    }

    /// Phase-matching weight between two modes of this grid.
    pub fn coupling(&self, a: usize, b: usize, kernel: &PhaseMatchKernel) -> Result<f64> {
        phase_match_weight(&self.modes[a], &self.modes[b], kernel, self.spec.pump_frequency)
    }
}

/// Uniform detunings in `[-bandwidth/2, bandwidth/2]`, exactly antisymmetric
/// about the center and containing 0 when `n` is odd.
fn detunings(n: usize, bandwidth: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let denom = 2.0 * (n - 1) as f64;
    (0..n)
        .map(|m| bandwidth * (2.0 * m as f64 - (n - 1) as f64) / denom)
        .collect()
}

pub fn build_mode_grid(spec: GridSpec) -> Result<ModeGrid> {
    let GridSpec {
        n_pairs,
        pump_frequency,
        bandwidth,
        center_e,
        center_o,
    } = spec;

    if n_pairs == 0 {
        return Err(Error::invalid("n_pairs", "must be at least 1"));
    }
    for (name, value) in [
        ("pump_frequency", pump_frequency),
        ("center_e", center_e),
        ("center_o", center_o),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::invalid(name, format!("must be positive, got {value}")));
        }
    }
    if !(bandwidth.is_finite() && bandwidth >= 0.0) {
        return Err(Error::invalid(
            "bandwidth",
            format!("must be non-negative, got {bandwidth}"),
        ));
    }
    let sum = center_e + center_o;
    if (sum - pump_frequency).abs() > MATCHING_TOLERANCE * pump_frequency {
        return Err(Error::FrequencyMismatch {
            sum,
            pump: pump_frequency,
        });
    }
    if bandwidth >= center_e.min(center_o) {
        return Err(Error::invalid(
            "bandwidth",
            format!(
                "{bandwidth} must be below the smaller center frequency {}",
                center_e.min(center_o)
            ),
        ));
    }

    let deltas = detunings(n_pairs, bandwidth);
    let mut modes = Vec::with_capacity(4 * n_pairs);
    for sector in Sector::ALL {
        for (pair, &delta) in deltas.iter().enumerate() {
            // e-side modes sit at center + δ, their o-side partners at center - δ.
            let (center, detuning) = if sector.is_extraordinary() {
                (center_e, delta)
            } else {
                (center_o, -delta)
            };
            let frequency = center + detuning;
            modes.push(ModeDescriptor {
                sector,
                pair,
                frequency,
                detuning,
                weight: (0.5 * frequency).sqrt(),
            });
        }
    }

    let pairing = [(Sector::E, Sector::O), (Sector::EPrime, Sector::OPrime)]
        .into_iter()
        .flat_map(|(e, o)| (0..n_pairs).map(move |m| (e.index() * n_pairs + m, o.index() * n_pairs + m)))
        .collect();

    Ok(ModeGrid { spec, modes, pairing })
}

/// Finite-interaction-time envelope `u(x) = (sin x / x) e^{ix}`, with
/// `u(0) = 1`.
pub fn sinc_kernel(x: f64) -> Complex64 {
    if x == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    Complex64::from_polar(x.sin() / x, x)
}

/// Shape of the phase-matching function `f(k, k')`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PhaseMatchKernel {
    /// 1 on designated conjugate pairs, 0 elsewhere.
    #[default]
    Pairing,
    /// `exp(-Δ²/2σ²)` over the mismatch `Δ = ω_e + ω_o - ω_p` between any
    /// two modes of conjugate sectors.
    Gaussian { sigma: f64 },
}

impl PhaseMatchKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PhaseMatchKernel::Pairing => Ok(()),
            PhaseMatchKernel::Gaussian { sigma } if sigma.is_finite() && sigma > 0.0 => Ok(()),
            PhaseMatchKernel::Gaussian { sigma } => {
                Err(Error::invalid("kernel_sigma", format!("must be positive, got {sigma}")))
            }
        }
    }
}

/// Phase-matching weight `f(a, b)`, symmetric in its arguments.
///
/// Modes from non-conjugate sectors (for instance `e` with `o'`) are
/// uncoupled and get 0. Two modes of the same sector are rejected.
pub fn phase_match_weight(
    a: &ModeDescriptor,
    b: &ModeDescriptor,
    kernel: &PhaseMatchKernel,
    pump_frequency: f64,
) -> Result<f64> {
    if a.sector == b.sector {
        return Err(Error::SameSector(a.sector));
    }
    if a.sector.conjugate() != b.sector {
        return Ok(0.0);
    }
    Ok(match *kernel {
        PhaseMatchKernel::Pairing => {
            if a.pair == b.pair {
                1.0
            } else {
                0.0
            }
        }
        PhaseMatchKernel::Gaussian { sigma } => {
            let mismatch = a.frequency + b.frequency - pump_frequency;
            (-mismatch * mismatch / (2.0 * sigma * sigma)).exp()
        }
    })
}
