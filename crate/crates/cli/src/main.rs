use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use neuroloop::config::ExperimentConfig;
use neuroloop::experiments::{run_study, StudyName, StudyReport, StudySpec};
use neuroloop::io::{self, IterationCsv, Manifest};

mod bench;

#[derive(Parser, Debug)]
#[command(name = "neuroloop", version, about = "Closed-loop R-STDP Pong agent on an emulated noisy spiking substrate")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run(RunArgs),
    /// Run a seed-swept study.
    Study(StudyArgs),
    /// Time the phases of the loop.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON object or `key = value` file over the parameter-set preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed_fp: Option<u64>,
    #[arg(long)]
    seed_temporal: Option<u64>,
    #[arg(long)]
    seed_env: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    /// ideal, calibrated or uncalibrated
    #[arg(long)]
    profile: Option<String>,
    /// all or active-row
    #[arg(long)]
    update_mode: Option<String>,
}

impl ConfigArgs {
    fn is_empty(&self) -> bool {
        self.config.is_none()
            && self.set.is_empty()
            && self.seed_fp.is_none()
            && self.seed_temporal.is_none()
            && self.seed_env.is_none()
            && self.iterations.is_none()
            && self.profile.is_none()
            && self.update_mode.is_none()
    }

    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        if let Some(p) = &self.profile {
            out.push(("profile".into(), p.clone()));
        }
        if let Some(m) = &self.update_mode {
            out.push(("update_mode".into(), m.clone()));
        }
        for (k, v) in [("seed_fp", self.seed_fp), ("seed_temporal", self.seed_temporal), ("seed_env", self.seed_env)] {
            if let Some(v) = v {
                out.push((k.into(), v.to_string()));
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set {kv:?}: expected KEY=VALUE")))?;
            out.push((k.trim().into(), v.trim().into()));
        }
        Ok(out)
    }

    /// Config file (or set-1 preset) with flags applied on top.
    fn load(&self, base: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                ExperimentConfig::from_text(&text)?
            }
            None => base,
        };
        for (k, v) in self.overrides()? {
            cfg = cfg.with_override(&k, &v)?;
        }
        if let Some(n) = self.iterations {
            cfg.iterations = n;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Replay the run recorded in a manifest (other config flags not allowed).
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    /// Output directory [env: NEUROLOOP_OUT]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record the weight checksum every N iterations (0 = never).
    #[arg(long, default_value_t = 1000)]
    checksum_every: u64,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// learning-curve, no-noise-control, shuffle, calibration-compare,
    /// threshold-correlation or chip-transfer
    name: String,
    /// StudySpec JSON; flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the SVG figure.
    #[arg(long)]
    no_svg: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<neuroloop::Error> for CliError {
    fn from(e: neuroloop::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.into())
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn out_dir(flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| std::env::var_os("NEUROLOOP_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("neuroloop-out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let (cfg, checksum_every) = match &args.manifest {
        Some(path) => {
            if !args.cfg.is_empty() {
                return Err(CliError::Config("--manifest cannot be combined with config flags".into()));
            }
            let m = Manifest::load(path).map_err(|e| CliError::Config(e.to_string()))?;
            (m.config, m.checksum_every)
        }
        None => (args.cfg.load(ExperimentConfig::default())?.resolve()?, args.checksum_every),
    };
    let dir = out_dir(args.out)?;
    let mut manifest = Manifest::new(cfg.clone(), checksum_every);
    manifest.started = now();

    let csv_path = dir.join("iterations.csv");
    let file = std::fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    let mut csv = IterationCsv::new(std::io::BufWriter::new(file))?;
    let start = std::time::Instant::now();
    let mut exp = neuroloop::agent::Experiment::new(&cfg)?;
    exp.set_checksum_every(checksum_every);
    let mut write_err = None;
    exp.run(cfg.iterations, |log| {
        if write_err.is_none() {
            write_err = csv.write(log).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    csv.finish()?;
    let summary = neuroloop::agent::summarize(&exp, start.elapsed());

    io::write_json(&dir.join("summary.json"), &summary)?;
    std::fs::write(dir.join("weights.csv"), exp.weights().to_csv()).context("writing weights.csv")?;
    for name in ["iterations.csv", "weights.csv"] {
        manifest.outputs.insert(name.into(), io::sha256_file(&dir.join(name))?);
    }
    manifest.finished = now();
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    println!(
        "{} iterations: mean expected reward {:.3}, performance {:.3}, {:.1} s -> {}",
        summary.iterations,
        summary.mean_expected_reward,
        summary.performance,
        summary.runtime_s,
        dir.display()
    );
    Ok(())
}

fn study_spec(args: &StudyArgs, name: StudyName) -> Result<StudySpec, CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read spec {}: {e}", path.display())))?;
            let spec: StudySpec =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if spec.study != name {
                return Err(CliError::Config(format!("spec is for study {}, not {name}", spec.study)));
            }
            spec
        }
        None => StudySpec::new(name),
    };
    // Seeds, profile and update mode go into the base so that derived trial
    // seeds and the chip-transfer grid follow them; --set goes to overrides.
    let flags = ConfigArgs {
        set: vec![],
        iterations: None,
        config: args.cfg.config.clone(),
        profile: args.cfg.profile.clone(),
        update_mode: args.cfg.update_mode.clone(),
        ..args.cfg
    };
    spec.base = flags.load(spec.base.clone())?;
    for kv in &args.cfg.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set {kv:?}: expected KEY=VALUE")))?;
        spec.overrides.insert(k.trim().into(), v.trim().into());
    }
    if let Some(n) = args.trials {
        spec.n_trials = n;
    }
    if let Some(n) = args.cfg.iterations {
        spec.n_iterations = n;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_study(args: StudyArgs) -> Result<(), CliError> {
    let name: StudyName = args.name.parse().map_err(|e: neuroloop::Error| {
        CliError::Config(format!("{e}\n\nusage: neuroloop study <NAME> [--trials N] [--iterations N] [--out DIR]"))
    })?;
    let spec = study_spec(&args, name)?;
    let dir = out_dir(args.out.clone())?;
    io::write_json(&dir.join("study.json"), &spec)?;
    let report = run_study(&spec)?;
    io::write_json(&dir.join("report.json"), &report)?;
    let svg = |file: &str, body: String| -> Result<(), CliError> {
        if !args.no_svg {
            std::fs::write(dir.join(file), body).with_context(|| format!("writing {file}"))?;
        }
        Ok(())
    };
    match &report {
        StudyReport::Curve(r) => {
            std::fs::write(dir.join("curve.csv"), io::curve_csv(&r.curve)).context("writing curve.csv")?;
            svg("curve.svg", io::curve_svg(&r.curve, name.as_str()))?;
            svg("weights.svg", io::matrix_svg(&r.weight_matrix.mean, "mean learned weights"))?;
            println!(
                "{name}: final mean expected reward {:.3} +- {:.3}, performance {:.3}, dominance {:.1}",
                r.final_reward.mean, r.final_reward.std, r.final_performance.mean, r.weight_matrix.dominance
            );
        }
        StudyReport::Shuffle(r) => {
            let d = [&r.baseline, &r.shuffled, &r.relearned];
            let labels = ["baseline", "shuffled", "relearned"].map(String::from);
            svg("shuffle.svg", io::bar_svg(&labels, &d.map(|x| x.mean), &d.map(|x| x.std), name.as_str()))?;
            println!(
                "{name}: baseline {:.3}, shuffled {:.3}, relearned {:.3}",
                r.baseline.mean, r.shuffled.mean, r.relearned.mean
            );
        }
        StudyReport::Calibration(r) => {
            let labels: Vec<String> = r.arms.iter().map(|a| a.profile.to_string()).collect();
            let means: Vec<f64> = r.arms.iter().map(|a| a.reward.mean).collect();
            let stds: Vec<f64> = r.arms.iter().map(|a| a.reward.std).collect();
            svg("calibration.svg", io::bar_svg(&labels, &means, &stds, name.as_str()))?;
            for a in &r.arms {
                println!("{name}: {} {:.3} +- {:.3}", a.profile, a.reward.mean, a.reward.std);
            }
            println!("{name}: gap {:.3}", r.gap);
        }
        StudyReport::Threshold(r) => {
            println!(
                "{name}: r = {:.3}, p = {:.2e}, n = {}",
                r.correlation.r, r.correlation.p, r.correlation.n
            );
        }
        StudyReport::Transfer(r) => {
            let mut labels = Vec::new();
            let (mut means, mut stds) = (Vec::new(), Vec::new());
            for row in &r.cells {
                for cell in row {
                    labels.push(format!("c{} s{}", cell.chip + 1, cell.param_set));
                    means.push(cell.reward.mean);
                    stds.push(cell.reward.std);
                }
            }
            svg("transfer.svg", io::bar_svg(&labels, &means, &stds, name.as_str()))?;
            for row in &r.cells {
                let line: Vec<String> = row.iter().map(|c| format!("{:.3}", c.reward.mean)).collect();
                println!("{name}: chip {} | {}", row[0].chip + 1, line.join(" "));
            }
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let cfg = args.cfg.load(ExperimentConfig::default())?;
    let n = args.cfg.iterations.unwrap_or(1000);
    let report = bench::run(&cfg, n)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).context("serializing report")?);
    } else {
        print!("{}", report.render());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.cmd {
        Command::Run(a) => cmd_run(a),
        Command::Study(a) => cmd_study(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
