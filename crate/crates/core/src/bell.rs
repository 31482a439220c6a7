//! Polarizer scans and Bell-type inequalities.
//!
//! Rates come from a [`RateSource`]: either the analytic Gaussian engine or
//! per-realization Monte Carlo responses (standard or clipped). Every derived
//! quantity is a smooth function of a handful of mean rates, so Monte Carlo
//! errors are propagated with the jackknife over realizations.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};

use crate::correlation::Oracle;
use crate::detection::{DetectionModel, GaussianRates, WindowEnsemble};
use crate::error::{Error, Result};
use crate::field::FieldProbe;
use crate::stats::jackknife_stat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Gaussian,
    Direct,
    Clipped,
}

impl Engine {
    pub fn label(self) -> &'static str {
        match self {
            Engine::Gaussian => "gaussian",
            Engine::Direct => "direct",
            Engine::Clipped => "clipped",
        }
    }

    pub fn from_label(label: &str) -> Option<Engine> {
        [Engine::Gaussian, Engine::Direct, Engine::Clipped]
            .into_iter()
            .find(|e| e.label() == label)
    }
}

/// A rate to evaluate; `None` means the polarizer is removed. Detectors
/// are numbered 0 (beam 1) and 1 (beam 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Request {
    Joint(Option<f64>, Option<f64>),
    Single(usize, Option<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub value: f64,
    pub stderr: f64,
}

impl Measurement {
    pub fn exact(value: f64) -> Self {
        Measurement { value, stderr: 0.0 }
    }
}

pub trait RateSource: Sync {
    fn engine(&self) -> Engine;

    /// Evaluates `stat` on the mean rates of `requests`, in order.
    fn evaluate(&self, requests: &[Request], stat: &dyn Fn(&[f64]) -> f64) -> Measurement;

    /// Largest factor that turns this detector's responses at `settings`
    /// into probabilities per window.
    fn probability_scale(&self, detector: usize, settings: &[Option<f64>]) -> f64;

    /// Clipped minus standard singles rate; zero for analytic sources.
    fn dark_excess(&self, _detector: usize, _polarizer: Option<f64>) -> f64 {
        0.0
    }

    fn rate(&self, request: Request) -> Measurement {
        self.evaluate(&[request], &|m| m[0])
    }
}

/// Analytic leading-order rates.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rates: GaussianRates,
    vacuum_windows: [f64; 2],
}

impl GaussianSource {
    /// The second probe's window should already carry any coincidence delay.
    pub fn new(oracle: &Oracle<'_>, probe1: &FieldProbe, probe2: &FieldProbe) -> Self {
        let grid = oracle.grid();
        let vac = |p: &FieldProbe| crate::detection::vacuum_reference(grid, p.beam, None) * p.times.duration();
        GaussianSource {
            rates: GaussianRates::new(oracle, probe1, probe2),
            vacuum_windows: [vac(probe1), vac(probe2)],
        }
    }

    pub fn rates(&self) -> &GaussianRates {
        &self.rates
    }

    fn value(&self, r: Request) -> f64 {
        match r {
            Request::Joint(p1, p2) => self.rates.joint(p1, p2),
            Request::Single(d, p) => self.rates.single(d, p),
        }
    }
}

impl RateSource for GaussianSource {
    fn engine(&self) -> Engine {
        Engine::Gaussian
    }

    fn evaluate(&self, requests: &[Request], stat: &dyn Fn(&[f64]) -> f64) -> Measurement {
        let values: Vec<f64> = requests.iter().map(|&r| self.value(r)).collect();
        Measurement::exact(stat(&values))
    }

    /// Without a response distribution the natural unit is the unpolarized
    /// vacuum count of a window, `1 / (I₀ T_w)`.
    fn probability_scale(&self, detector: usize, _settings: &[Option<f64>]) -> f64 {
        1.0 / self.vacuum_windows[detector]
    }
}

/// Monte Carlo rates from per-realization window statistics of both beams.
#[derive(Debug, Clone)]
pub struct EnsembleSource {
    windows: [WindowEnsemble; 2],
    model: DetectionModel,
}

impl EnsembleSource {
    pub fn new(w1: WindowEnsemble, w2: WindowEnsemble, model: DetectionModel) -> Result<Self> {
        if w1.len() != w2.len() {
            return Err(Error::ShapeMismatch {
                what: "realizations",
                expected: w1.len(),
                found: w2.len(),
            });
        }
        if w1.is_empty() {
            return Err(Error::invalid("realizations", "need at least one"));
        }
        Ok(EnsembleSource {
            windows: [w1, w2],
            model,
        })
    }

    pub fn windows(&self) -> &[WindowEnsemble; 2] {
        &self.windows
    }

    pub fn model(&self) -> DetectionModel {
        self.model
    }

    /// Local responses `{W}/T_w` of one detector for every realization.
    pub fn responses(&self, detector: usize, polarizer: Option<f64>) -> Vec<f64> {
        self.windows[detector].responses(polarizer, self.model, 1.0)
    }

    fn column(&self, r: Request) -> Vec<f64> {
        match r {
            Request::Single(d, p) => self.responses(d, p),
            Request::Joint(p1, p2) => self
                .responses(0, p1)
                .into_iter()
                .zip(self.responses(1, p2))
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

impl RateSource for EnsembleSource {
    fn engine(&self) -> Engine {
        match self.model {
            DetectionModel::Standard => Engine::Direct,
            DetectionModel::Clipped => Engine::Clipped,
        }
    }

    fn evaluate(&self, requests: &[Request], stat: &dyn Fn(&[f64]) -> f64) -> Measurement {
        let width = requests.len();
        let n = self.windows[0].len();
        let mut samples = vec![0.0; n * width];
        for (j, &r) in requests.iter().enumerate() {
            for (i, v) in self.column(r).into_iter().enumerate() {
                samples[i * width + j] = v;
            }
        }
        let (value, stderr) = jackknife_stat(&samples, width, stat);
        Measurement { value, stderr }
    }

    fn probability_scale(&self, detector: usize, settings: &[Option<f64>]) -> f64 {
        let peak = settings
            .iter()
            .flat_map(|&p| self.responses(detector, p))
            .fold(0.0_f64, |m, r| m.max(r.abs()));
        if peak > 0.0 {
            1.0 / peak
        } else {
            1.0
        }
    }

    fn dark_excess(&self, detector: usize, polarizer: Option<f64>) -> f64 {
        let w = &self.windows[detector];
        let n = w.len() as f64;
        let clipped: f64 = w.responses(polarizer, DetectionModel::Clipped, 1.0).iter().sum();
        let standard: f64 = w.responses(polarizer, DetectionModel::Standard, 1.0).iter().sum();
        (clipped - standard) / n
    }
}

/// Least-squares fit of `rate = offset + K sin²(φ₁ + φ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinSquaredFit {
    pub amplitude: f64,
    pub offset: f64,
    /// `(max − min) / (max + min)` of the fitted curve.
    pub visibility: f64,
    /// `‖rate − fit‖ / ‖rate‖`.
    pub relative_residual: f64,
}

impl SinSquaredFit {
    pub fn predict(&self, phi1: f64, phi2: f64) -> f64 {
        self.offset + self.amplitude * (phi1 + phi2).sin().powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub phi1: f64,
    pub phi2: f64,
    pub rate: f64,
    pub stderr: f64,
    pub fitted: f64,
}

impl ScanPoint {
    pub fn residual(&self) -> f64 {
        self.rate - self.fitted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleScan {
    pub engine: Engine,
    pub points: Vec<ScanPoint>,
    pub fit: SinSquaredFit,
}

/// The default 6 × 6 grid of settings in steps of π/6.
pub fn default_angle_grid() -> Vec<(f64, f64)> {
    let step = std::f64::consts::PI / 6.0;
    (0..6)
        .flat_map(|i| (0..6).map(move |j| (i as f64 * step, j as f64 * step)))
        .collect()
}

pub fn fit_sin_squared(pairs: &[(f64, f64)], rates: &[f64]) -> Result<SinSquaredFit> {
    if pairs.is_empty() || pairs.len() != rates.len() {
        return Err(Error::ShapeMismatch {
            what: "scan rates",
            expected: pairs.len(),
            found: rates.len(),
        });
    }
    let n = pairs.len() as f64;
    let x: Vec<f64> = pairs.iter().map(|(a, b)| (a + b).sin().powi(2)).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = rates.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 1e-12 * n {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = x.iter().zip(rates).map(|(u, y)| (u - mx) * (y - my)).sum();
    let amplitude = sxy / sxx;
    let offset = my - amplitude * mx;
    let residual: f64 = x
        .iter()
        .zip(rates)
        .map(|(u, y)| (y - offset - amplitude * u).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = rates.iter().map(|y| y * y).sum::<f64>().sqrt();
    let (lo, hi) = if amplitude >= 0.0 {
        (offset, offset + amplitude)
    } else {
        (offset + amplitude, offset)
    };
    Ok(SinSquaredFit {
        amplitude,
        offset,
        visibility: (hi - lo) / (hi + lo),
        relative_residual: if norm > 0.0 { residual / norm } else { 0.0 },
    })
}

/// Coincidence rates over a list of settings, with the sin² fit.
pub fn coincidence_scan<S: RateSource + ?Sized>(angles: &[(f64, f64)], source: &S) -> Result<AngleScan> {
    if angles.is_empty() {
        return Err(Error::invalid("angles", "scan needs at least one setting pair"));
    }
    let measured: Vec<Measurement> = angles
        .iter()
        .map(|&(a, b)| source.rate(Request::Joint(Some(a), Some(b))))
        .collect();
    let rates: Vec<f64> = measured.iter().map(|m| m.value).collect();
    let fit = fit_sin_squared(angles, &rates)?;
    Ok(AngleScan {
        engine: source.engine(),
        points: angles
            .iter()
            .zip(&measured)
            .map(|(&(phi1, phi2), m)| ScanPoint {
                phi1,
                phi2,
                rate: m.value,
                stderr: m.stderr,
                fitted: fit.predict(phi1, phi2),
            })
            .collect(),
        fit,
    })
}

/// Analyzer settings `a, a'` (beam 1) and `b, b'` (beam 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl Default for BellAngles {
    /// Settings maximizing both `S` and the homogeneous CH expression for a
    /// coincidence law `sin²(φ₁ + φ₂)`.
    fn default() -> Self {
        BellAngles {
            a: 0.0,
            a_prime: FRAC_PI_4,
            b: 3.0 * FRAC_PI_8,
            b_prime: FRAC_PI_8,
        }
    }
}

/// The four coincidence requests of a correlator `E(x, y)`, in the order
/// `(x,y), (x⊥,y⊥), (x,y⊥), (x⊥,y)`.
fn correlator_requests(x: f64, y: f64) -> [Request; 4] {
    let (xp, yp) = (x + FRAC_PI_2, y + FRAC_PI_2);
    [
        Request::Joint(Some(x), Some(y)),
        Request::Joint(Some(xp), Some(yp)),
        Request::Joint(Some(x), Some(yp)),
        Request::Joint(Some(xp), Some(y)),
    ]
}

fn correlator(p: &[f64]) -> f64 {
    (p[0] + p[1] - p[2] - p[3]) / (p[0] + p[1] + p[2] + p[3])
}

/// `E(x, y)` with the homogeneous normalization.
pub fn correlation_coefficient<S: RateSource + ?Sized>(x: f64, y: f64, source: &S) -> Measurement {
    source.evaluate(&correlator_requests(x, y), &correlator)
}

/// `S = |E(a,b) − E(a,b') + E(a',b) + E(a',b')|`.
pub fn chsh<S: RateSource + ?Sized>(angles: &BellAngles, source: &S) -> Measurement {
    let BellAngles { a, a_prime, b, b_prime } = *angles;
    let requests: Vec<Request> = [(a, b), (a, b_prime), (a_prime, b), (a_prime, b_prime)]
        .into_iter()
        .flat_map(|(x, y)| correlator_requests(x, y))
        .collect();
    source.evaluate(&requests, &|p| {
        let e: Vec<f64> = p.chunks_exact(4).map(correlator).collect();
        (e[0] - e[1] + e[2] + e[3]).abs()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClauserHorne {
    /// Ratio form normalized by the rate with both polarizers removed.
    pub homogeneous: Measurement,
    /// Absolute form on probabilities per window.
    pub genuine: Measurement,
    /// Per-detector factors turning responses into probabilities.
    pub probability_scale: [f64; 2],
}

/// Both Clauser-Horne expressions; positive values violate local realism
/// (genuine) or the homogeneous auxiliary assumptions (homogeneous).
pub fn clauser_horne<S: RateSource + ?Sized>(angles: &BellAngles, source: &S, efficiency: f64) -> Result<ClauserHorne> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::invalid(
            "efficiency",
            format!("must lie in (0, 1], got {efficiency}"),
        ));
    }
    let BellAngles { a, a_prime, b, b_prime } = *angles;
    let joints = [
        Request::Joint(Some(a), Some(b)),
        Request::Joint(Some(a), Some(b_prime)),
        Request::Joint(Some(a_prime), Some(b)),
        Request::Joint(Some(a_prime), Some(b_prime)),
    ];
    let combo = |p: &[f64]| p[0] - p[1] + p[2] + p[3];

    let mut homogeneous_requests = joints.to_vec();
    homogeneous_requests.extend([
        Request::Joint(Some(a_prime), None),
        Request::Joint(None, Some(b)),
        Request::Joint(None, None),
    ]);
    let homogeneous = source.evaluate(&homogeneous_requests, &|p| (combo(p) - p[4] - p[5]) / p[6]);

    let k1 = source.probability_scale(0, &[Some(a), Some(a_prime)]);
    let k2 = source.probability_scale(1, &[Some(b), Some(b_prime)]);
    let mut genuine_requests = joints.to_vec();
    genuine_requests.extend([Request::Single(0, Some(a_prime)), Request::Single(1, Some(b))]);
    let eta = efficiency;
    let genuine = source.evaluate(&genuine_requests, &|p| {
        eta * eta * k1 * k2 * combo(p) - eta * k1 * p[4] - eta * k2 * p[5]
    });
    Ok(ClauserHorne {
        homogeneous,
        genuine,
        probability_scale: [k1, k2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellReport {
    pub engine: Engine,
    pub angles: BellAngles,
    pub efficiency: f64,
    pub s_chsh: Measurement,
    pub homogeneous_ch: Measurement,
    pub genuine_ch: Measurement,
    pub violated_chsh: bool,
    pub violated_homogeneous: bool,
    pub violated_genuine: bool,
    pub probability_scale: [f64; 2],
    /// Clipped minus standard singles rate at `a'` and `b`.
    pub dark_excess: [f64; 2],
}

pub fn bell_report<S: RateSource + ?Sized>(angles: &BellAngles, source: &S, efficiency: f64) -> Result<BellReport> {
    let s = chsh(angles, source);
    let ch = clauser_horne(angles, source, efficiency)?;
    Ok(BellReport {
        engine: source.engine(),
        angles: *angles,
        efficiency,
        s_chsh: s,
        homogeneous_ch: ch.homogeneous,
        genuine_ch: ch.genuine,
        violated_chsh: s.value > 2.0,
        violated_homogeneous: ch.homogeneous.value > 0.0,
        violated_genuine: ch.genuine.value > 0.0,
        probability_scale: ch.probability_scale,
        dark_excess: [
            source.dark_excess(0, Some(angles.a_prime)),
            source.dark_excess(1, Some(angles.b)),
        ],
    })
}

/// Largest absolute difference between the clipped coincidence rate and the
/// ensemble mean of products of separately computed local responses.
pub fn lhv_decomposition_check(source: &EnsembleSource, settings: &[(Option<f64>, Option<f64>)]) -> f64 {
    settings
        .iter()
        .map(|&(p1, p2)| {
            let joint = source.rate(Request::Joint(p1, p2)).value;
            let local1 = source.windows()[0].responses(p1, source.model(), 1.0);
            let local2 = source.windows()[1].responses(p2, source.model(), 1.0);
            let product: f64 = local1.iter().zip(&local2).map(|(x, y)| x * y).sum::<f64>() / local1.len() as f64;
            (joint - product).abs()
        })
        .fold(0.0, f64::max)
}

/// Coincidence rate minus the product of the singles, with its error.
pub fn independence_gap<S: RateSource + ?Sized>(source: &S, p1: Option<f64>, p2: Option<f64>) -> Measurement {
    source.evaluate(
        &[Request::Joint(p1, p2), Request::Single(0, p1), Request::Single(1, p2)],
        &|m| m[0] - m[1] * m[2],
    )
}
