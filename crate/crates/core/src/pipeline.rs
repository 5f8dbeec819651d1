//! End-to-end stages shared by the command-line front end and the tests.
//!
//! Every stage reads and writes plain files in one output directory:
//!
//! | file | written by |
//! |---|---|
//! | `cube.bin`, `cube.hdr` | simulate |
//! | `truth_targets.csv`, `truth_waveforms.csv` | simulate |
//! | `support.csv`, `map.csv`, `map.pgm`, `localize.txt` | localize |
//! | `fft_map.csv`, `fft_map.pgm`, `fft_support.csv` | localize with baseline |
//! | `rates_subject<z>.csv`, `vibration_subject<z>.csv` | monitor |
//! | `baseline_subject<z>.csv` | monitor with baseline |
//! | `aecdf.csv`, `rmse.csv`, `summary.txt` (and `baseline_*`) | evaluate |
//! | `effective_config.toml` | every stage |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{reference_rates, rmse_report, MetricReport, RateSeries};
use crate::io::{read_text, write_atomic, CsvTable};
use crate::localization::{
    angle_fft_map, detect_support, ralu_jsr, range_angle_map, vital_band_filter, DetectionSettings,
    JointSparseSolution, RangeAngleMap, SolverSettings, SpectralWindow, Support,
};
use crate::model::{AngleDictionary, Band, RadarConfig, RadarParams, RangeDictionary};
use crate::par::Execution;
use crate::simulator::{render_cube_with, FrameCube, NoiseMode, RenderOptions, Scene, VibrationRole};
use crate::vitals::{monitor, AtomBasis, MonitorSettings, RateTrack, RefinementParams, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandSettings {
    pub respiration: Band,
    pub heart: Band,
}

impl Default for BandSettings {
    fn default() -> Self {
        Self {
            respiration: Band::RESPIRATION,
            heart: Band::HEARTBEAT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessingSettings {
    pub basis: AtomBasis,
    pub noise: NoiseMode,
    /// Raised-cosine roll-off of the localization band filter, Hz. Zero gives a hard mask.
    pub taper_hz: f64,
    /// Also produce the Angle-FFT map and the FFT vitals baseline.
    pub baseline: bool,
}

impl Default for ProcessingSettings {
    fn default() -> Self {
        Self {
            basis: AtomBasis::default(),
            noise: NoiseMode::default(),
            taper_hz: 0.0,
            baseline: false,
        }
    }
}

/// The single nested config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct PipelineConfig {
    /// Scene file, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Overrides the scene's noise seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub radar: RadarParams,
    pub solver: SolverSettings,
    pub bands: BandSettings,
    pub schedule: Schedule,
    pub detection: DetectionSettings,
    pub refinement: RefinementParams,
    pub processing: ProcessingSettings,
}


impl PipelineConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("{}: {}", origin.display(), e.message())))
    }

    /// Reads a config file; relative `scene` and `out` paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&read_text(path)?, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.scene, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    /// Checks every section; returns the validated radar configuration.
    pub fn validate(&self) -> Result<RadarConfig> {
        let radar = RadarConfig::new(&self.radar)?;
        let fs = radar.frame_rate();
        self.solver.validate()?;
        self.detection.validate()?;
        self.refinement.validate()?;
        self.schedule.validate(fs)?;
        self.bands.respiration.validate(fs)?;
        self.bands.heart.validate(fs)?;
        if self.bands.respiration.overlaps(&self.bands.heart) {
            return Err(Error::config("bands.respiration and bands.heart must be disjoint"));
        }
        if !(self.processing.taper_hz.is_finite() && self.processing.taper_hz >= 0.0) {
            return Err(Error::config(format!(
                "processing.taper_hz must be non-negative, got {}",
                self.processing.taper_hz
            )));
        }
        Ok(radar)
    }

    pub fn monitor_settings(&self, execution: Execution) -> MonitorSettings {
        MonitorSettings {
            schedule: self.schedule,
            refinement: self.refinement,
            respiration: self.bands.respiration,
            heart: self.bands.heart,
            basis: self.processing.basis,
            baseline: self.processing.baseline,
            execution,
        }
    }

    /// Writes the configuration as actually used.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("effective_config.toml"), self.to_toml()?.as_bytes())
    }
}

/// Standard artifact locations inside an output directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn cube(&self) -> PathBuf {
        self.root.join("cube.bin")
    }

    pub fn support(&self) -> PathBuf {
        self.root.join("support.csv")
    }

    pub fn truth_targets(&self) -> PathBuf {
        self.root.join("truth_targets.csv")
    }

    pub fn truth_waveforms(&self) -> PathBuf {
        self.root.join("truth_waveforms.csv")
    }

    pub fn rates(&self, subject: usize) -> PathBuf {
        self.root.join(format!("rates_subject{subject}.csv"))
    }

    pub fn baseline_rates(&self, subject: usize) -> PathBuf {
        self.root.join(format!("baseline_subject{subject}.csv"))
    }

    pub fn vibration(&self, subject: usize) -> PathBuf {
        self.root.join(format!("vibration_subject{subject}.csv"))
    }
}

/// Renders the scene and writes the cube plus ground-truth sidecars.
pub fn simulate(cfg: &PipelineConfig, scene: &Scene, dir: &RunDir, execution: Execution) -> Result<FrameCube> {
    let radar = cfg.validate()?;
    let mut scene = scene.clone();
    if let Some(seed) = cfg.seed {
        scene.seed = seed;
    }
    let cube = render_cube_with(
        &scene,
        &radar,
        RenderOptions {
            noise: cfg.processing.noise,
            execution,
        },
    )?;
    cube.write(&dir.cube())?;
    write_atomic(&dir.truth_targets(), truth_targets_csv(&scene, &radar).as_bytes())?;
    write_atomic(&dir.truth_waveforms(), truth_waveforms_csv(&scene, &radar, cube.frames())?.as_bytes())?;
    Ok(cube)
}

fn truth_targets_csv(scene: &Scene, radar: &RadarConfig) -> String {
    let a = RangeDictionary::new(radar);
    let b = AngleDictionary::new(radar);
    let mut out = String::from("subject_id,kind,distance_m,angle_deg,range_bin,angle_bin\n");
    let mut subject = 0;
    for t in &scene.targets {
        let (id, kind) = match t.kind {
            crate::simulator::TargetKind::Human => {
                subject += 1;
                ((subject - 1).to_string(), "human")
            }
            crate::simulator::TargetKind::StaticClutter => ("-".into(), "static-clutter"),
            crate::simulator::TargetKind::OscillatingClutter => ("-".into(), "oscillating-clutter"),
        };
        writeln!(
            out,
            "{id},{kind},{},{},{},{}",
            t.distance,
            t.angle,
            a.nearest_bin(t.distance),
            b.nearest_bin(t.angle)
        )
        .unwrap();
    }
    out
}

/// Per-human respiration and heartbeat displacement, one row per frame.
fn truth_waveforms_csv(scene: &Scene, radar: &RadarConfig, frames: usize) -> Result<String> {
    let mut columns = Vec::new();
    let mut header = String::from("time_s");
    for (z, h) in scene.humans().enumerate() {
        for (name, role) in [("resp", VibrationRole::Respiration), ("heart", VibrationRole::Heartbeat)] {
            write!(header, ",{name}{z}_m").unwrap();
            columns.push(h.vibration.role_waveform(role, frames, radar.frame_period));
        }
    }
    let mut out = header;
    out.push('\n');
    for l in 0..frames {
        write!(out, "{}", l as f64 * radar.frame_period).unwrap();
        for c in &columns {
            write!(out, ",{}", c[l]).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// Localization result and the solver's bookkeeping.
#[derive(Debug, Clone)]
pub struct Localization {
    pub support: Support,
    pub map: RangeAngleMap,
    pub solution: JointSparseSolution,
    pub fft_map: Option<RangeAngleMap>,
    pub fft_support: Option<Support>,
}

/// Localizes on the first `t_loc` seconds of the cube.
pub fn localize_cube(cfg: &PipelineConfig, cube: &FrameCube, execution: Execution) -> Result<Localization> {
    let radar = cfg.validate()?;
    check_cube(&radar, cube)?;
    let frames = cfg.schedule.localization_frames(cube.frame_rate())?;
    if cube.frames() < frames {
        return Err(Error::data(format!(
            "cube holds {} frames but localization needs {frames} ({} s)",
            cube.frames(),
            cfg.schedule.t_loc
        )));
    }
    let head = cube.slice_frames(0, frames);
    let bands = [cfg.bands.respiration, cfg.bands.heart];
    let window = if cfg.processing.taper_hz > 0.0 {
        SpectralWindow::tapered(frames, cube.frame_rate(), &bands, cfg.processing.taper_hz)?
    } else {
        SpectralWindow::new(frames, cube.frame_rate(), &bands)?
    };
    let filtered = vital_band_filter(&head, &window, execution)?;
    let a = RangeDictionary::new(&radar);
    let b = AngleDictionary::new(&radar);
    let solution = ralu_jsr(&filtered, &a, &b, &cfg.solver, execution)?;
    let map = range_angle_map(&solution.x, &a, &b);
    let support = detect_support(&map, &cfg.detection)?;
    let (fft_map, fft_support) = if cfg.processing.baseline {
        let m = angle_fft_map(&filtered, &a, &b, execution)?;
        let s = detect_support(&m, &cfg.detection)?;
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    Ok(Localization {
        support,
        map,
        solution,
        fft_map,
        fft_support,
    })
}

fn check_cube(radar: &RadarConfig, cube: &FrameCube) -> Result<()> {
    if cube.samples() != radar.fast_time_samples || cube.receivers() != radar.receivers {
        return Err(Error::data(format!(
            "cube is {} samples x {} receivers but the radar config expects {} x {}",
            cube.samples(),
            cube.receivers(),
            radar.fast_time_samples,
            radar.receivers
        )));
    }
    if (cube.frame_rate() - radar.frame_rate()).abs() > 1e-9 * radar.frame_rate() {
        return Err(Error::data(format!(
            "cube frame rate {} Hz differs from the configured {} Hz",
            cube.frame_rate(),
            radar.frame_rate()
        )));
    }
    Ok(())
}

pub fn localize(cfg: &PipelineConfig, cube_path: &Path, dir: &RunDir, execution: Execution) -> Result<Localization> {
    let cube = FrameCube::read(cube_path)?;
    let loc = localize_cube(cfg, &cube, execution)?;
    loc.support.write(&dir.support())?;
    loc.map.write_csv(&dir.root.join("map.csv"))?;
    loc.map.write_pgm(&dir.root.join("map.pgm"))?;
    if let (Some(m), Some(s)) = (&loc.fft_map, &loc.fft_support) {
        m.write_csv(&dir.root.join("fft_map.csv"))?;
        m.write_pgm(&dir.root.join("fft_map.pgm"))?;
        s.write(&dir.root.join("fft_support.csv"))?;
    }
    let sol = &loc.solution;
    let report = format!(
        "subjects={}\niterations={}\nconverged={}\nlipschitz={}\ninitial_objective={}\nfinal_objective={}\nnonzero_fibers={}\n",
        loc.support.len(),
        sol.iterations,
        sol.converged,
        sol.lipschitz,
        sol.initial_objective,
        sol.objective.last().copied().unwrap_or(sol.initial_objective),
        sol.support_size()
    );
    write_atomic(&dir.root.join("localize.txt"), report.as_bytes())?;
    Ok(loc)
}

/// Runs the monitor and writes one rate track and one vibration track per subject.
///
/// Returns the refined tracks; an empty support writes nothing.
pub fn monitor_files(
    cfg: &PipelineConfig,
    cube_path: &Path,
    support_path: &Path,
    dir: &RunDir,
    execution: Execution,
) -> Result<Vec<RateTrack>> {
    let radar = cfg.validate()?;
    let support = Support::read(support_path)?;
    if support.is_empty() {
        return Ok(Vec::new());
    }
    let cube = FrameCube::read(cube_path)?;
    check_cube(&radar, &cube)?;
    let a = RangeDictionary::new(&radar);
    let b = AngleDictionary::new(&radar);
    let outputs = monitor(&cube, &support, &a, &b, &cfg.monitor_settings(execution))?;
    let mut tracks = Vec::with_capacity(outputs.len());
    for out in outputs {
        let z = out.track.subject;
        out.track.write(&dir.rates(z))?;
        out.vibration.write_csv(&dir.vibration(z))?;
        if let Some(base) = &out.baseline {
            base.write(&dir.baseline_rates(z))?;
        }
        tracks.push(out.track);
    }
    Ok(tracks)
}

/// Position of one truth subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSubject {
    pub distance: f64,
    pub angle: f64,
    pub range_bin: usize,
}

pub fn read_truth_subjects(path: &Path) -> Result<Vec<TruthSubject>> {
    let table = CsvTable::read(path)?;
    let kind = table.column("kind")?;
    let (d, ang, m) = (
        table.column("distance_m")?,
        table.column("angle_deg")?,
        table.column("range_bin")?,
    );
    let mut out = Vec::new();
    for row in 0..table.rows.len() {
        if table.rows[row][kind] == "human" {
            out.push(TruthSubject {
                distance: table.f64_at(row, d)?,
                angle: table.f64_at(row, ang)?,
                range_bin: table.usize_at(row, m)?,
            });
        }
    }
    Ok(out)
}

/// Pairs each detected subject with the nearest unclaimed truth subject, strongest detection first.
///
/// Distance counts range bins plus angle in units of 3 degrees.
pub fn match_subjects(support: &Support, truth: &[TruthSubject]) -> Vec<Option<usize>> {
    let mut taken = vec![false; truth.len()];
    support
        .entries
        .iter()
        .map(|e| {
            let mut best: Option<(usize, f64)> = None;
            for (i, t) in truth.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let cost = (e.range_bin as f64 - t.range_bin as f64).abs() + (e.angle - t.angle).abs() / 3.0;
                if best.is_none_or(|(_, c)| cost < c) {
                    best = Some((i, cost));
                }
            }
            best.map(|(i, _)| {
                taken[i] = true;
                i
            })
        })
        .collect()
}

/// Reference tracks for truth subject `z` on the estimator's window grid.
pub fn truth_references(cfg: &PipelineConfig, waveforms: &CsvTable, frame_rate: f64, z: usize) -> Result<(RateSeries, RateSeries)> {
    let column = |name: String| -> Result<Vec<f64>> {
        let c = waveforms.column(&name)?;
        (0..waveforms.rows.len()).map(|r| waveforms.f64_at(r, c)).collect()
    };
    let heart = reference_rates(&column(format!("heart{z}_m"))?, frame_rate, &cfg.bands.heart, &cfg.schedule)?;
    let resp = reference_rates(&column(format!("resp{z}_m"))?, frame_rate, &cfg.bands.respiration, &cfg.schedule)?;
    Ok((heart, resp))
}

/// Scores the monitor output in `dir` against the simulator's sidecars.
pub fn evaluate(cfg: &PipelineConfig, dir: &RunDir) -> Result<Evaluation> {
    let radar = cfg.validate()?;
    let support = Support::read(&dir.support())?;
    let truth = read_truth_subjects(&dir.truth_targets())?;
    let waveforms = CsvTable::read(&dir.truth_waveforms())?;
    let pairs = match_subjects(&support, &truth);
    let matched: Vec<(usize, usize)> = pairs.iter().enumerate().filter_map(|(z, t)| t.map(|t| (z, t))).collect();
    if matched.is_empty() {
        return Err(Error::data("no detected subject could be matched to a truth subject"));
    }
    let mut heart_refs = Vec::new();
    let mut resp_refs = Vec::new();
    for &(_, t) in &matched {
        let (h, r) = truth_references(cfg, &waveforms, radar.frame_rate(), t)?;
        heart_refs.push(h);
        resp_refs.push(r);
    }
    let score = |path: &dyn Fn(usize) -> PathBuf| -> Result<MetricReport> {
        let tracks: Vec<RateTrack> = matched.iter().map(|&(z, _)| RateTrack::read(&path(z))).collect::<Result<_>>()?;
        rmse_report(&tracks, &heart_refs, &resp_refs)
    };
    let report = score(&|z| dir.rates(z))?;
    report.write(&dir.root)?;
    let baseline = if dir.baseline_rates(matched[0].0).exists() {
        let b = score(&|z| dir.baseline_rates(z))?;
        write_atomic(&dir.root.join("baseline_aecdf.csv"), b.aecdf_csv().as_bytes())?;
        write_atomic(&dir.root.join("baseline_rmse.csv"), b.rmse_csv().as_bytes())?;
        write_atomic(&dir.root.join("baseline_summary.txt"), b.summary().as_bytes())?;
        Some(b)
    } else {
        None
    };
    Ok(Evaluation {
        report,
        baseline,
        matched,
        detected: support.len(),
        truth: truth.len(),
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    pub baseline: Option<MetricReport>,
    /// `(detected subject, truth subject)` pairs that were scored.
    pub matched: Vec<(usize, usize)>,
    pub detected: usize,
    pub truth: usize,
}

/// Chains all four stages; each stage reads its inputs back from disk.
pub fn run_pipeline(cfg: &PipelineConfig, scene: &Scene, dir: &RunDir, execution: Execution) -> Result<Option<Evaluation>> {
    cfg.validate()?;
    cfg.echo(&dir.root)?;
    simulate(cfg, scene, dir, execution)?;
    let loc = localize(cfg, &dir.cube(), dir, execution)?;
    if loc.support.is_empty() {
        return Ok(None);
    }
    monitor_files(cfg, &dir.cube(), &dir.support(), dir, execution)?;
    evaluate(cfg, dir).map(Some)
}
