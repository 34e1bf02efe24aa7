use std::fs;
use std::path::{Path, PathBuf};

use alice_core::data::{
    build_pairing_toy, interpolation_path, sample_gmm, write_csv, GmmSpec, INTERPOLATION_ENDS, TEST_SIZE, TRAIN_SIZE,
};
use alice_core::harness::{
    aggregate_csv, grid_search, histogram_csv, lambda_sweep, pairing_experiment, summarize, train_isolated,
    train_model, GridSpec, Method, PairingVariant, RunConfig, RunRecord, TEST_SALT,
};
use alice_core::infotheory::oracle::{check_cycle_bound, check_information_identities, check_pointwise_optimum};
use alice_core::infotheory::{delta_csv, delta_sweep};
use alice_core::metrics::{icp_score, IcpForm, ToyClassifier};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "alice", version, about = "ALI/ALICE toy experiments and information-theory checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and print its record as JSON.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Write the record here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write data and interpolation CSVs into this directory.
        #[arg(long)]
        emit_data: Option<PathBuf>,
    },
    /// Grid search over architectures and update frequencies.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        /// Use the full 576-configuration grid instead of the 32-configuration desk grid.
        #[arg(long)]
        full: bool,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',', default_value = "alice,ali,dae")]
        methods: Vec<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Explicit-cycle runs over a list of cycle weights.
    SweepLambda {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,1e-6,1e-2,1,10")]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Semi-supervised pairing between the 5-GMM and 2-GMM domains.
    Pairing {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Variant::ExplicitMapExplicitCycle)]
        variant: Variant,
        #[arg(long, default_value_t = 5)]
        anchors: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Entropies of the two-by-two delta family as CSV.
    AnalyzeDelta {
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
    /// Randomized checks of the information identities, the cycle bound
    /// and the optimal discriminator.
    VerifyBounds {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 8)]
        max_side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train, validate and save the mixture classifier; report the ICP of
    /// true mixture samples.
    ClassifierTrain {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summaries and CSVs from saved run records.
    Report {
        /// JSON array or JSON-lines file of run records.
        records: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write the training, test and pairing data sets as CSV.
    EmitData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// List every config field accepted by `--set`.
    Fields,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base schedule before the config file and overrides apply.
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
    /// `field=value` override, dotted for nested fields; repeatable.
    #[arg(long = "set", value_name = "FIELD=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    ExplicitMapExplicitCycle,
    ExplicitMapAdversarialCycle,
    AdversarialMapExplicitCycle,
    AdversarialMapAdversarialCycle,
}

impl From<Variant> for PairingVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::ExplicitMapExplicitCycle => PairingVariant::ExplicitMapExplicitCycle,
            Variant::ExplicitMapAdversarialCycle => PairingVariant::ExplicitMapAdversarialCycle,
            Variant::AdversarialMapExplicitCycle => PairingVariant::AdversarialMapExplicitCycle,
            Variant::AdversarialMapAdversarialCycle => PairingVariant::AdversarialMapAdversarialCycle,
        }
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match self.preset {
            Preset::Default => RunConfig::default(),
            Preset::Desk => RunConfig::desk(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            // file fields land on top of the preset
            let patch: serde_json::Value = serde_json::from_str(&text)?;
            let mut base = serde_json::to_value(&cfg)?;
            merge(&mut base, patch);
            cfg = RunConfig::from_json(&base.to_string())?;
        }
        let cfg = cfg.with_overrides(&self.set)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn records_jsonl(records: &[RunRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn write_run_outputs(dir: &Path, records: &[RunRecord]) -> Result<()> {
    write(dir, "records.jsonl", &records_jsonl(records)?)?;
    write(dir, "aggregate.csv", &aggregate_csv(records)?)?;
    write(dir, "hist_icp.csv", &histogram_csv(records, "icp", 0.0, 5.0, 25)?)?;
    write(dir, "hist_mse.csv", &histogram_csv(records, "mse", 0.0, 10.0, 25)?)?;
    Ok(())
}

fn csv_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf)?)
}

fn emit_data(dir: &Path, seed: u64) -> Result<()> {
    let train = sample_gmm(&GmmSpec::five_component(seed), TRAIN_SIZE)?;
    let test = sample_gmm(&GmmSpec::five_component(seed ^ TEST_SALT), TEST_SIZE)?;
    let toy = build_pairing_toy(seed)?;
    write(dir, "train.csv", &csv_string(|b| Ok(write_csv(b, &train)?))?)?;
    write(dir, "test.csv", &csv_string(|b| Ok(write_csv(b, &test)?))?)?;
    write(dir, "pairing_x.csv", &csv_string(|b| Ok(write_csv(b, &toy.x)?))?)?;
    write(dir, "pairing_z.csv", &csv_string(|b| Ok(write_csv(b, &toy.z)?))?)?;
    Ok(())
}

fn train_command(cfg: &RunConfig, out: Option<&Path>, data_dir: Option<&Path>) -> Result<()> {
    let record = match data_dir {
        None => train_isolated(cfg),
        Some(dir) => {
            let (model, record) = train_model(cfg)?;
            emit_data(dir, cfg.data_seed)?;
            if model.is_finite() {
                let nets = &model.nets;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let mut failure = None;
                let path = interpolation_path(
                    |x| {
                        nets.encoder.sample_values(x, &mut rng).unwrap_or_else(|e| {
                            failure = Some(e);
                            x.clone()
                        })
                    },
                    INTERPOLATION_ENDS.0,
                    INTERPOLATION_ENDS.1,
                    9,
                )?;
                if let Some(e) = failure {
                    return Err(e.into());
                }
                let decoded = nets.decoder.sample_values(&path, &mut rng)?;
                let mut text = String::from("step,z1,z2,x1,x2\n");
                for i in 0..path.rows() {
                    let (z, x) = (path.row(i), decoded.row(i));
                    text.push_str(&format!("{i},{},{},{},{}\n", z[0], z[1], x[0], x[1]));
                }
                write(dir, "interpolation.csv", &text)?;
            }
            record
        }
    };
    let json = serde_json::to_string_pretty(&record)?;
    match out {
        Some(path) => fs::write(path, json).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return Ok(serde_json::from_str(trimmed)?);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Serialize)]
struct BoundsReport {
    identities: alice_core::infotheory::oracle::IdentityCheck,
    cycle_bound: alice_core::infotheory::oracle::BoundCheck,
    discriminator_max_error: f64,
}

#[derive(Serialize)]
struct ClassifierReport {
    steps: usize,
    train_loss: Option<f64>,
    accuracy: Option<f64>,
    oracle_icp: f64,
    oracle_icp_std: f64,
    checkpoint: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { run, out, emit_data } => train_command(&run.resolve()?, out.as_deref(), emit_data.as_deref())?,
        Command::Grid {
            run,
            full,
            methods,
            out_dir,
        } => {
            let base = run.resolve()?;
            let methods = methods.iter().map(|m| Method::parse(m)).collect::<Result<Vec<_>, _>>()?;
            let grid = if full { GridSpec::full(base) } else { GridSpec::desk(base) };
            let records = grid_search(&grid, &methods)?;
            if let Some(dir) = out_dir {
                write_run_outputs(&dir, &records)?;
            }
            print_json(&summarize(&records))?;
        }
        Command::SweepLambda {
            run,
            lambdas,
            seeds,
            out_dir,
        } => {
            let (records, summary) = lambda_sweep(&run.resolve()?, &lambdas, &seeds)?;
            if let Some(dir) = out_dir {
                write_run_outputs(&dir, &records)?;
            }
            print_json(&summary)?;
        }
        Command::Pairing {
            run,
            variant,
            anchors,
            seeds,
            out_dir,
        } => {
            let (records, summary) = pairing_experiment(&run.resolve()?, variant.into(), anchors, &seeds)?;
            if let Some(dir) = out_dir {
                write(&dir, "records.jsonl", &records_jsonl(&records)?)?;
            }
            print_json(&summary)?;
        }
        Command::AnalyzeDelta { lo, hi, steps } => {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                bail!("need 0 <= lo <= hi <= 1");
            }
            print!("{}", delta_csv(&delta_sweep(lo, hi, steps)?));
        }
        Command::VerifyBounds {
            instances,
            max_side,
            seed,
        } => {
            if max_side == 0 {
                bail!("max-side must be at least 1");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = BoundsReport {
                identities: check_information_identities(&mut rng, instances, max_side),
                cycle_bound: check_cycle_bound(&mut rng, instances, max_side)?,
                discriminator_max_error: check_pointwise_optimum(&mut rng, instances)?,
            };
            print_json(&report)?;
        }
        Command::ClassifierTrain { seed, out } => {
            let clf = ToyClassifier::for_mixture(seed)?;
            if let Some(path) = &out {
                clf.save(path)?;
            }
            let oracle = sample_gmm(&GmmSpec::five_component(seed.wrapping_add(2)), TEST_SIZE)?;
            let icp = icp_score(&oracle.points, &clf, IcpForm::Standard, 20, seed)?;
            print_json(&ClassifierReport {
                steps: clf.steps,
                train_loss: clf.train_loss,
                accuracy: clf.accuracy,
                oracle_icp: icp.value,
                oracle_icp_std: icp.std,
                checkpoint: out,
            })?;
        }
        Command::Report { records, out_dir } => {
            let records = read_records(&records)?;
            if let Some(dir) = out_dir {
                write_run_outputs(&dir, &records)?;
            }
            print_json(&summarize(&records))?;
        }
        Command::EmitData { seed, out_dir } => emit_data(&out_dir, seed)?,
        Command::Fields => {
            for f in RunConfig::field_paths() {
                println!("{f}");
            }
        }
    }
    Ok(())
}
