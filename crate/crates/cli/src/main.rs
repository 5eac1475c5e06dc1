use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use funnynodules::dataset::{self, read_manifest, CONFIG_FILE, STATS_FILE};
use funnynodules::eval::{self, curves_csv, sensitivity_curves};
use funnynodules::rng::sample_seed;
use funnynodules::{parse_config, serialize_config, DatasetConfig, GenerateOptions, GridSpec, Jobs, Manifest};

#[derive(Parser)]
#[command(name = "funnynodules", version, about = "Synthetic nodule images with full attribute ground truth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the default configuration.
    ConfigInit {
        /// Destination file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Random dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(short = 'n', long)]
        count: usize,
    },
    /// One base vector (or several) swept over every value of one attribute.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        attr: String,
        /// Number of independent bases; a single base when omitted.
        #[arg(long)]
        per_value: Option<usize>,
    },
    /// Every value pair of two attributes, others held fixed.
    Grid {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        grid: Vec<String>,
        #[arg(long, default_value_t = 3)]
        fixed: i32,
    },
    /// Value histograms of a manifest.
    Stats {
        #[arg(short, long)]
        manifest: PathBuf,
        /// Config supplying schema and rule; defaults to the manifest's config.resolved.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Directory for stats.json; defaults to the manifest's directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Validate a rule and list reachable target classes.
    RuleCheck {
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// Score predictions against a manifest.
    Eval {
        #[arg(short, long)]
        manifest: PathBuf,
        #[arg(short, long)]
        predictions: PathBuf,
        #[arg(long)]
        attention_index: Option<PathBuf>,
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Directory for report.json and curves.csv; defaults to the manifest's directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long, env = "FUNNYNODULES_JOBS", default_value_t = 0)]
    jobs: usize,
    /// Also write binary PGM copies of the images.
    #[arg(long)]
    pgm: bool,
}

impl Common {
    fn load(&self) -> Result<DatasetConfig> {
        let mut config = load_config(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }

    fn options(&self) -> GenerateOptions {
        GenerateOptions {
            jobs: Jobs(self.jobs),
            pgm: self.pgm,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<DatasetConfig> {
    match path {
        None => Ok(DatasetConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| funnynodules::Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            parse_config(&text).with_context(|| format!("reading {}", p.display()))
        }
    }
}

/// Explicit config, else the `config.resolved` beside the manifest, else defaults.
fn config_for_manifest(explicit: Option<&Path>, manifest: &Path) -> Result<DatasetConfig> {
    if explicit.is_some() {
        return load_config(explicit);
    }
    let resolved = parent(manifest).join(CONFIG_FILE);
    if resolved.exists() {
        load_config(Some(&resolved))
    } else {
        Ok(DatasetConfig::default())
    }
}

fn parent(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| funnynodules::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_curves(dir: &Path, manifest: &Manifest, preds: Option<&eval::PredictionSet>) -> Result<()> {
    let points = sensitivity_curves(manifest, preds)?;
    write_file(&dir.join("curves.csv"), &curves_csv(&points))
}

fn summary(kind: &str, out: &Path, manifest: &Manifest) {
    let c = manifest.split_counts();
    eprintln!(
        "{kind}: {} samples in {} (train {}, val {}, test {})",
        manifest.records.len(),
        out.display(),
        c.train,
        c.val,
        c.test
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ConfigInit { out } => {
            let text = serialize_config(&DatasetConfig::default());
            match out {
                Some(path) => write_file(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Generate { common, count } => {
            let config = common.load()?;
            if count == 0 {
                bail!(funnynodules::Error::InvalidArgument("count must be positive".into()));
            }
            let m = dataset::generate(&config, count, &common.out, common.options())?;
            summary("generate", &common.out, &m);
        }
        Command::Sweep { common, attr, per_value } => {
            let config = common.load()?;
            let m = match per_value {
                Some(n) => dataset::generate_sweep_population(&config, &attr, n, &common.out, common.options())?,
                None => dataset::generate_sweep(&config, sample_seed(config.seed, 0), &attr, &common.out, common.options())?,
            };
            write_curves(&common.out, &m, None)?;
            summary("sweep", &common.out, &m);
        }
        Command::Grid { common, grid, fixed } => {
            let config = common.load()?;
            let spec = GridSpec::new(&grid[0], &grid[1], fixed);
            let m = dataset::generate_grid(&config, &spec, &common.out, common.options())?;
            write_curves(&common.out, &m, None)?;
            summary("grid", &common.out, &m);
        }
        Command::Stats { manifest, config, out } => {
            let m = read_manifest(&manifest)?;
            let config = config_for_manifest(config.as_deref(), &manifest)?;
            let h = dataset::histogram(&m, &config.schema, &config.rule);
            let dir = out.unwrap_or_else(|| parent(&manifest));
            std::fs::create_dir_all(&dir).map_err(|e| funnynodules::Error::Io { path: dir.clone(), source: e })?;
            h.write_json(&dir.join(STATS_FILE))?;
            print!("{}", h.to_table());
        }
        Command::RuleCheck { config } => {
            let config = load_config(config.as_deref())?;
            let rule = &config.rule;
            println!("{} clauses, target classes {:?}", rule.clauses().len(), rule.target_classes());
            let reachable = rule.reachable_targets()?;
            let mut missing = Vec::new();
            for class in rule.target_classes() {
                match reachable.get(&class) {
                    Some(w) => println!("target {class}: reachable, e.g. {w}"),
                    None => {
                        println!("target {class}: unreachable");
                        missing.push(class);
                    }
                }
            }
            if !missing.is_empty() {
                bail!(funnynodules::Error::Rule(format!("unreachable target classes {missing:?}")));
            }
        }
        Command::Eval { manifest, predictions, attention_index, config, out } => {
            let m = read_manifest(&manifest)?;
            let config = config_for_manifest(config.as_deref(), &manifest)?;
            let preds = eval::read_predictions(&predictions)?;
            let mut report = eval::evaluate_predictions(&m, &preds, &config.schema, &config.rule)?;
            if let Some(index) = attention_index {
                let entries = eval::read_attention_index(&index)?;
                report.attention = Some(eval::attention_overlap(&m, &parent(&manifest), &entries, &parent(&index))?);
            }
            let dir = out.unwrap_or_else(|| parent(&manifest));
            std::fs::create_dir_all(&dir).map_err(|e| funnynodules::Error::Io { path: dir.clone(), source: e })?;
            if m.is_sweep() {
                let points = sensitivity_curves(&m, Some(&preds))?;
                write_file(&dir.join("curves.csv"), &curves_csv(&points))?;
                report.curves = Some(points);
            }
            write_file(&dir.join("report.json"), &(report.to_json() + "\n"))?;
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.downcast_ref::<funnynodules::Error>().is_some_and(|e| e.is_io()) || e.downcast_ref::<std::io::Error>().is_some()
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
