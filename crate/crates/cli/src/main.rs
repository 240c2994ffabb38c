use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use antago_core::control::FeedbackSource;
use antago_core::estimator::PolyModel;
use antago_core::harness::{
    evaluate, run_closed_loop, run_openloop, train_pipeline, ConfigEntries, EpisodeLog, Mode, SimConfig, Summary,
};
use antago_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Openloop,
    Benchmark,
    Train,
    Selfsense,
    Evaluate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PresetArg {
    LemniSs,
    LemniBm,
    StarSs,
    StarBm,
}

/// Simulate the antagonistic ball joint.
#[derive(Debug, Parser)]
#[command(name = "antago-sim", version)]
struct Args {
    mode: ModeArg,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Trained estimator (selfsense, evaluate).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
}

fn value_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn load_config(args: &Args) -> Result<SimConfig, Error> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config { line: 0, message: format!("{}: {e}", args.config.display()) })?;
    let mut entries = ConfigEntries::parse(&text)?;
    entries.set("mode", value_name(&args.mode))?;
    if let Some(seed) = args.seed {
        entries.set("seed", seed.to_string())?;
    }
    if let Some(p) = &args.preset {
        entries.set("control.preset", value_name(p))?;
    }
    SimConfig::from_entries(&entries)
}

fn load_model(path: &Path) -> Result<PolyModel, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
    PolyModel::from_json(&text)
}

fn write_csv(out: &Path, name: &str, log: &EpisodeLog) -> Result<(), Error> {
    let f = fs::File::create(out.join(name))?;
    log.write_csv(std::io::BufWriter::new(f))
}

fn run(args: &Args) -> Result<(), Error> {
    let cfg = load_config(args)?;
    let model = args.model.as_deref().map(load_model).transpose()?;
    fs::create_dir_all(&args.out)?;
    let out = args.out.as_path();

    let summary = match cfg.mode {
        Mode::Openloop => {
            let log = run_openloop(&cfg)?;
            write_csv(out, "episode.csv", &log)?;
            Summary::for_episode(&cfg, &log)?
        }
        Mode::Benchmark | Mode::Selfsense => {
            let feedback = if cfg.mode == Mode::Benchmark {
                FeedbackSource::GroundTruth
            } else {
                FeedbackSource::SelfSensing
            };
            let log = run_closed_loop(&cfg, feedback, model.as_ref())?;
            write_csv(out, "episode.csv", &log)?;
            let mut s = Summary::for_episode(&cfg, &log)?;
            s.estimator = model.map(|m| m.metrics);
            s
        }
        Mode::Train => {
            let trained = train_pipeline(&cfg)?;
            fs::write(out.join("model.json"), trained.model.to_json()?)?;
            let first = trained.logs.first().expect("at least one training trajectory");
            write_csv(out, "episode.csv", first)?;
            let mut s = Summary::for_episode(&cfg, first)?;
            s.estimator = Some(trained.model.metrics.clone());
            s
        }
        Mode::Evaluate => {
            let model = match model {
                Some(m) => m,
                None => {
                    let m = train_pipeline(&cfg)?.model;
                    fs::write(out.join("model.json"), m.to_json()?)?;
                    m
                }
            };
            let mut comparisons = Vec::new();
            let mut first_ss = None;
            for &kind in &cfg.estimator.trajectories {
                let run_cfg = cfg.for_run(kind);
                let (bm, ss) = std::thread::scope(|s| {
                    let bm = s.spawn(|| run_closed_loop(&run_cfg, FeedbackSource::GroundTruth, None));
                    let ss = s.spawn(|| run_closed_loop(&run_cfg, FeedbackSource::SelfSensing, Some(&model)));
                    (bm.join().expect("episode thread panicked"), ss.join().expect("episode thread panicked"))
                });
                let (bm, ss) = (bm?, ss?);
                write_csv(out, &format!("episode_{}.csv", bm.label), &bm)?;
                write_csv(out, &format!("episode_{}.csv", ss.label), &ss)?;
                comparisons.push(evaluate(&bm, &ss)?);
                first_ss.get_or_insert(ss);
            }
            let ss = first_ss.expect("at least one evaluation trajectory");
            write_csv(out, "episode.csv", &ss)?;
            let mut s = Summary::for_episode(&cfg, &ss)?;
            s.estimator = Some(model.metrics);
            s.comparisons = comparisons;
            s
        }
    };
    fs::write(out.join("summary.json"), summary.to_json()?)?;
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("antago-sim: {e}");
            if let Error::Aborted { partial, .. } = &e {
                if write_csv(&args.out, "episode.csv", partial).is_ok() {
                    eprintln!("partial log written to {}", args.out.join("episode.csv").display());
                }
            }
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
