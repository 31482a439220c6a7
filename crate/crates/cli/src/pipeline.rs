//! The named pipelines. Each returns its report files in memory; nothing
//! touches the disk until the whole computation has succeeded.

use wigner_pdc::bell::{
    bell_report, coincidence_scan, default_angle_grid, AngleScan, BellAngles, EnsembleSource, GaussianSource,
    RateSource, Request,
};
use wigner_pdc::correlation::{mc_correlation, sample_field, Oracle};
use wigner_pdc::crystal::{transform, CrystalParams, OutputEnsemble};
use wigner_pdc::detection::{window_in_coherence_times, DetectionModel, WindowEnsemble};
use wigner_pdc::field::{assemble_field, FieldProbe, TimeGrid};
use wigner_pdc::lattice::{Beam, ModeGrid, Sector};
use wigner_pdc::stats::jackknife_mean;
use wigner_pdc::zeropoint::{sample_vacuum, VacuumEnsemble};
use wigner_pdc::Complex64;

use crate::config::{build_grid, EngineKind, RunConfig};
use crate::output::{KeyValues, Outputs, Table};
use crate::CliError;

fn runtime(e: wigner_pdc::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

struct Setup {
    grid: ModeGrid,
    params: CrystalParams,
    step: f64,
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(Setup {
            grid: build_grid(cfg)?,
            params: cfg.crystal_params(),
            step: cfg.step(),
        })
    }

    fn window(&self, coherence_times: f64) -> Result<TimeGrid, CliError> {
        window_in_coherence_times(&self.grid, &self.params, coherence_times, 0.0, self.step).map_err(runtime)
    }

    /// Unpolarized probes for both beams; detector 2 opens `delay` later.
    fn probes(&self, cfg: &RunConfig, window: TimeGrid, delay: f64) -> Result<(FieldProbe, FieldProbe), CliError> {
        let d = &cfg.detector;
        Ok((
            FieldProbe::new(Beam::One, d.distance1, window, None).map_err(runtime)?,
            FieldProbe::new(Beam::Two, d.distance2, window.shifted(delay), None).map_err(runtime)?,
        ))
    }

    fn vacuum(&self, cfg: &RunConfig) -> Result<VacuumEnsemble, CliError> {
        sample_vacuum(&self.grid, cfg.ensemble.realizations, cfg.ensemble.seed).map_err(runtime)
    }

    fn output(&self, vac: &VacuumEnsemble) -> Result<OutputEnsemble, CliError> {
        transform(vac, &self.params, &self.grid).map_err(runtime)
    }
}

fn rate_source(cfg: &RunConfig, setup: &Setup, engine: EngineKind) -> Result<Box<dyn RateSource>, CliError> {
    let window = setup.window(cfg.detector.window)?;
    let (p1, p2) = setup.probes(cfg, window, cfg.detector.delay)?;
    let model = match engine {
        EngineKind::Gaussian => {
            let oracle = Oracle::new(&setup.grid, &setup.params).map_err(runtime)?;
            return Ok(Box::new(GaussianSource::new(&oracle, &p1, &p2)));
        }
        EngineKind::Direct => DetectionModel::Standard,
        EngineKind::Clipped => DetectionModel::Clipped,
    };
    let out = setup.output(&setup.vacuum(cfg)?)?;
    let w1 = WindowEnsemble::measure(&out, &setup.grid, &p1).map_err(runtime)?;
    let w2 = WindowEnsemble::measure(&out, &setup.grid, &p2).map_err(runtime)?;
    Ok(Box::new(EnsembleSource::new(w1, w2, model).map_err(runtime)?))
}

/// Cross- and autocorrelation scans at the crystal center.
pub fn correlate(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let setup = Setup::new(cfg)?;
    let vac = setup.vacuum(cfg)?;
    let out = setup.output(&vac)?;
    let oracle = Oracle::new(&setup.grid, &setup.params).map_err(runtime)?;
    let times = TimeGrid::new(0.0, cfg.correlate.tau_step, cfg.correlate.points).map_err(runtime)?;
    let header = ["tau", "re_mc", "im_mc", "stderr", "re_analytic", "im_analytic"];

    let e0 = assemble_field(&out, &setup.grid, Sector::E, 0.0, 0.0).map_err(runtime)?;
    let o_t = sample_field(&out, &setup.grid, Sector::O, 0.0, times).map_err(runtime)?;
    let mut cross = Table::new(&header);
    for (n, tau) in times.times().enumerate() {
        let mc = mc_correlation(&e0, &o_t[n], false).map_err(runtime)?;
        let exact = oracle.cross(tau);
        cross.row(&[tau, mc.value.re, mc.value.im, mc.stderr, exact.re, exact.im]);
    }

    // excess over the vacuum, estimated against the same vacuum realizations
    let v0 = assemble_field(&vac, &setup.grid, Sector::E, 0.0, 0.0).map_err(runtime)?;
    let e_t = sample_field(&out, &setup.grid, Sector::E, 0.0, times).map_err(runtime)?;
    let v_t = sample_field(&vac, &setup.grid, Sector::E, 0.0, times).map_err(runtime)?;
    let mut auto = Table::new(&header);
    for (n, tau) in times.times().enumerate() {
        let diffs: Vec<Complex64> = (0..e0.len())
            .map(|i| e0[i] * e_t[n][i].conj() - v0[i] * v_t[n][i].conj())
            .collect();
        let (value, stderr) = jackknife_mean(&diffs);
        let exact = oracle.auto(Sector::E, tau);
        auto.row(&[tau, value.re, value.im, stderr, exact.re, exact.im]);
    }

    let mut files = Outputs::default();
    files.add("cross.csv", cross.into_bytes());
    files.add("auto.csv", auto.into_bytes());
    Ok(files)
}

/// Singles over a window sweep and coincidences over a delay sweep, both
/// models side by side.
pub fn detect(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let setup = Setup::new(cfg)?;
    let out = setup.output(&setup.vacuum(cfg)?)?;
    let (pol1, pol2) = (Some(cfg.detect.polarizer1), Some(cfg.detect.polarizer2));
    let n = cfg.ensemble.realizations as f64;

    let mut singles = Table::new(&[
        "window",
        "standard_rate",
        "standard_stderr",
        "clipped_rate",
        "clipped_stderr",
        "negative_fraction",
    ]);
    for &multiple in &cfg.detect.window_sweep {
        let window = setup.window(multiple)?;
        let (p1, _) = setup.probes(cfg, window, 0.0)?;
        let w = WindowEnsemble::measure(&out, &setup.grid, &p1).map_err(runtime)?;
        let negative = w
            .excess(pol1, w.vacuum_intensity(pol1))
            .iter()
            .filter(|x| **x < 0.0)
            .count() as f64
            / n;
        let eta = cfg.detector.efficiency;
        let rate = |model| {
            let r = w.responses(pol1, model, eta);
            wigner_pdc::stats::jackknife_mean_real(&r)
        };
        let (s, s_err) = rate(DetectionModel::Standard);
        let (c, c_err) = rate(DetectionModel::Clipped);
        singles.row(&[window.duration(), s, s_err, c, c_err, negative]);
    }

    let window = setup.window(cfg.detector.window)?;
    let oracle = Oracle::new(&setup.grid, &setup.params).map_err(runtime)?;
    let eta2 = cfg.detector.efficiency * cfg.detector.efficiency;
    let mut joint = Table::new(&[
        "delay",
        "standard_rate",
        "standard_stderr",
        "clipped_rate",
        "clipped_stderr",
        "negative_fraction",
        "gaussian_rate",
    ]);
    for &delay in &cfg.detect.delays {
        let (p1, p2) = setup.probes(cfg, window, delay)?;
        let w1 = WindowEnsemble::measure(&out, &setup.grid, &p1).map_err(runtime)?;
        let w2 = WindowEnsemble::measure(&out, &setup.grid, &p2).map_err(runtime)?;
        let negative = [(&w1, pol1), (&w2, pol2)]
            .iter()
            .map(|(w, p)| {
                w.excess(*p, w.vacuum_intensity(*p))
                    .iter()
                    .filter(|x| **x < 0.0)
                    .count()
            })
            .sum::<usize>() as f64
            / (2.0 * n);
        let standard = EnsembleSource::new(w1.clone(), w2.clone(), DetectionModel::Standard).map_err(runtime)?;
        let clipped = EnsembleSource::new(w1, w2, DetectionModel::Clipped).map_err(runtime)?;
        let s = standard.rate(Request::Joint(pol1, pol2));
        let c = clipped.rate(Request::Joint(pol1, pol2));
        let g = GaussianSource::new(&oracle, &p1, &p2).rate(Request::Joint(pol1, pol2));
        joint.row(&[
            delay,
            eta2 * s.value,
            eta2 * s.stderr,
            eta2 * c.value,
            eta2 * c.stderr,
            negative,
            eta2 * g.value,
        ]);
    }

    let mut files = Outputs::default();
    files.add("singles.csv", singles.into_bytes());
    files.add("joint.csv", joint.into_bytes());
    Ok(files)
}

fn scan_table(scan: &AngleScan) -> Vec<u8> {
    let mut t = Table::new(&["phi1", "phi2", "rate", "stderr", "fit", "residual"]);
    for p in &scan.points {
        t.row(&[p.phi1, p.phi2, p.rate, p.stderr, p.fitted, p.residual()]);
    }
    t.into_bytes()
}

fn run_scan(source: &dyn RateSource) -> Result<AngleScan, CliError> {
    coincidence_scan(&default_angle_grid(), source).map_err(runtime)
}

/// Coincidence scan over the default 6 × 6 angle grid.
pub fn scan(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let setup = Setup::new(cfg)?;
    let source = rate_source(cfg, &setup, cfg.scan.engine)?;
    let scan = run_scan(source.as_ref())?;
    let mut files = Outputs::default();
    files.add("scan.csv", scan_table(&scan));
    Ok(files)
}

/// Scan plus CHSH and Clauser-Horne report.
pub fn bell(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let setup = Setup::new(cfg)?;
    let source = rate_source(cfg, &setup, cfg.bell.engine)?;
    let scan = run_scan(source.as_ref())?;
    let [a, a_prime, b, b_prime] = <[f64; 4]>::try_from(cfg.bell.angles.as_slice())
        .map_err(|_| CliError::Config("key `bell.angles`: expected four angles".into()))?;
    let angles = BellAngles { a, a_prime, b, b_prime };

    let mut kv = KeyValues::default();
    kv.put("engine", source.engine().label());
    kv.put("realizations", cfg.ensemble.realizations);
    kv.put("seed", cfg.ensemble.seed);
    kv.put("angle.a", a);
    kv.put("angle.a_prime", a_prime);
    kv.put("angle.b", b);
    kv.put("angle.b_prime", b_prime);
    kv.put("fit.amplitude", scan.fit.amplitude);
    kv.put("fit.offset", scan.fit.offset);
    kv.put("fit.visibility", scan.fit.visibility);
    kv.put("fit.relative_residual", scan.fit.relative_residual);
    for (i, &eta) in cfg.bell.efficiencies.iter().enumerate() {
        let r = bell_report(&angles, source.as_ref(), eta).map_err(runtime)?;
        if i == 0 {
            kv.put("chsh.s", r.s_chsh.value);
            kv.put("chsh.stderr", r.s_chsh.stderr);
            kv.put("chsh.violated", r.violated_chsh);
            kv.put("ch_homogeneous.value", r.homogeneous_ch.value);
            kv.put("ch_homogeneous.stderr", r.homogeneous_ch.stderr);
            kv.put("ch_homogeneous.violated", r.violated_homogeneous);
            kv.put("dark_excess.detector1", r.dark_excess[0]);
            kv.put("dark_excess.detector2", r.dark_excess[1]);
            kv.put("probability_scale.detector1", r.probability_scale[0]);
            kv.put("probability_scale.detector2", r.probability_scale[1]);
        }
        let key = |k: &str| format!("ch_genuine.{}.{k}", i + 1);
        kv.put(&key("efficiency"), eta);
        kv.put(&key("value"), r.genuine_ch.value);
        kv.put(&key("stderr"), r.genuine_ch.stderr);
        kv.put(&key("violated"), r.violated_genuine);
    }

    let mut files = Outputs::default();
    files.add("scan.csv", scan_table(&scan));
    files.add("bell_report.txt", kv.into_bytes());
    Ok(files)
}

/// The mode lattice as a table.
pub fn dump_grid(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let grid = build_grid(cfg)?;
    let mut t = Table::new(&["index", "sector", "pair", "frequency", "detuning", "weight"]);
    for (i, m) in grid.modes().iter().enumerate() {
        t.text_row(&[
            i.to_string(),
            m.sector.label().to_string(),
            m.pair.to_string(),
            m.frequency.to_string(),
            m.detuning.to_string(),
            m.weight.to_string(),
        ]);
    }
    let mut files = Outputs::default();
    files.add("grid.csv", t.into_bytes());
    Ok(files)
}
