use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fmcw_vitals::pipeline::{self, PipelineConfig, RunDir};
use fmcw_vitals::simulator::Scene;
use fmcw_vitals::{Error, Execution, Result};

#[derive(Parser)]
#[command(name = "fmcw-vitals", version, about = "Multi-person FMCW radar localization and vital-sign monitoring")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline config file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Noise seed, overrides the scene and config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also run the Angle-FFT and FFT vitals baselines
    #[arg(long, global = true)]
    baseline: bool,
    /// Worker threads for the data-parallel stages
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene into a frame cube with ground-truth sidecars
    Simulate {
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Detect subjects on the first t_loc seconds of a cube
    Localize {
        #[arg(long)]
        cube: Option<PathBuf>,
    },
    /// Estimate rate tracks for every detected subject
    Monitor {
        #[arg(long)]
        cube: Option<PathBuf>,
        #[arg(long)]
        support: Option<PathBuf>,
    },
    /// Score rate tracks against the simulator's ground truth
    Evaluate,
    /// simulate, localize, monitor and evaluate in one go
    Pipeline {
        #[arg(long)]
        scene: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    if g.baseline {
        cfg.processing.baseline = true;
    }
    if let Some(out) = &g.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    let execution = configure_threads(g.threads)?;
    let dir = RunDir::new(cfg.out.clone().unwrap_or_else(|| PathBuf::from("out")));

    match cli.command {
        Command::Simulate { scene } => {
            let scene = load_scene(&cfg, scene)?;
            cfg.echo(&dir.root)?;
            let cube = pipeline::simulate(&cfg, &scene, &dir, execution)?;
            println!(
                "simulated {} frames x {} receivers x {} samples -> {}",
                cube.frames(),
                cube.receivers(),
                cube.samples(),
                dir.cube().display()
            );
        }
        Command::Localize { cube } => {
            cfg.echo(&dir.root)?;
            let loc = pipeline::localize(&cfg, &cube.unwrap_or_else(|| dir.cube()), &dir, execution)?;
            println!(
                "{} subject(s) after {} iterations -> {}",
                loc.support.len(),
                loc.solution.iterations,
                dir.support().display()
            );
            for e in &loc.support.entries {
                println!("  {:.3} m  {:+.0} deg  power {:.3}", e.distance, e.angle, e.power);
            }
        }
        Command::Monitor { cube, support } => {
            cfg.echo(&dir.root)?;
            let support = support.unwrap_or_else(|| dir.support());
            let tracks = pipeline::monitor_files(&cfg, &cube.unwrap_or_else(|| dir.cube()), &support, &dir, execution)?;
            if tracks.is_empty() {
                eprintln!("warning: {} lists no subjects; nothing to monitor", support.display());
            }
            for t in &tracks {
                println!("subject {}: {} estimates -> {}", t.subject, t.samples.len(), dir.rates(t.subject).display());
            }
        }
        Command::Evaluate => {
            cfg.echo(&dir.root)?;
            report(&pipeline::evaluate(&cfg, &dir)?);
        }
        Command::Pipeline { scene } => {
            let scene = load_scene(&cfg, scene)?;
            match pipeline::run_pipeline(&cfg, &scene, &dir, execution)? {
                Some(eval) => report(&eval),
                None => eprintln!("warning: no subject detected; monitoring and evaluation skipped"),
            }
        }
    }
    Ok(())
}

fn report(eval: &pipeline::Evaluation) {
    println!("scored {} of {} detected subject(s) against {} truth subject(s)", eval.matched.len(), eval.detected, eval.truth);
    print!("{}", eval.report.summary());
    if let Some(b) = &eval.baseline {
        print!("baseline {}", b.summary().replace('\n', "\nbaseline ").trim_end_matches("baseline "));
    }
}

fn load_scene(cfg: &PipelineConfig, flag: Option<PathBuf>) -> Result<Scene> {
    let path = flag
        .or_else(|| cfg.scene.clone())
        .ok_or_else(|| Error::Config("no scene file: pass --scene or set `scene` in the config".into()))?;
    Scene::load(Path::new(&path))
}

fn configure_threads(threads: Option<usize>) -> Result<Execution> {
    let Some(n) = threads else {
        return Ok(Execution::default());
    };
    if n == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
    Ok(Execution::default())
}
