use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use attest::embedder::train;
use attest::eval::{evaluate, summary_table, EmbeddingIndex, HashIndex};
use attest::io::{load_checkpoint, load_dataset, save_checkpoint, save_dataset, DATASET_FILES};
use attest::kv::KeyValues;
use attest::presets::{initial_model, train_size};
use attest::theory::suites::{
    blue_uniform_checks, figure1_checks, partition_checks, pmi_checks, run_blue_experiment,
    trigram_mean_checks, variance_checks, BlueExperiment, PmiSetup,
};
use attest::theory::{figure1_csvs, Check};
use attest::genmodel::generate_dataset_with_threads;

use crate::error::{io_err, CliError, Result};
use crate::manifest::{load_verified, RunManifest};
use crate::settings;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CHECKS_FILE: &str = "checks.txt";

/// Budget for generating the default desk dataset.
pub const GENERATE_BUDGET_SECS: f64 = 60.0;

pub const SUITES: [&str; 6] = ["mean", "variance", "partition", "pmi", "blue", "figure1"];

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: usize,
}

impl Common {
    fn load_config(&self) -> Result<KeyValues> {
        match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                Ok(KeyValues::parse(&text)?)
            }
            None => Ok(KeyValues::new()),
        }
    }

    fn require_config(&self, command: &str) -> Result<KeyValues> {
        if self.config.is_none() {
            return Err(CliError::Usage(format!("{command} needs --config")));
        }
        self.load_config()
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        if self.threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()?)
    }

    fn record_config_input(&self, manifest: &mut RunManifest) {
        if let Some(p) = &self.config {
            manifest.inputs.push(("config".into(), p.clone()));
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(path))
}

pub fn cmd_generate(common: &Common) -> Result<RunManifest> {
    let start = Instant::now();
    let config = common.require_config("generate")?;
    settings::check_top_level(&config)?;
    let seed = settings::resolve_seed(&config, common.seed)?;
    let gen = settings::generator(&config, seed)?;
    common.prepare_out()?;
    let pool = common.pool()?;
    let dataset = pool.install(|| generate_dataset_with_threads(&gen, common.threads))?;
    save_dataset(&dataset, &common.out)?;

    let mut manifest = RunManifest::new("generate", seed, common.threads, settings::generator_kv(&gen));
    common.record_config_input(&mut manifest);
    for name in DATASET_FILES {
        manifest.add_output(&common.out, name)?;
    }
    manifest.budget_secs = Some(GENERATE_BUDGET_SECS);
    manifest.duration_secs = start.elapsed().as_secs_f64();
    manifest.write(&common.out)?;
    Ok(manifest)
}

pub fn cmd_train(common: &Common, dataset_dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let config = common.require_config("train")?;
    settings::check_top_level(&config)?;
    let seed = settings::resolve_seed(&config, common.seed)?;
    let tc = settings::train(&config, seed)?;
    let test_fraction = settings::test_fraction(&config)?;

    load_verified(dataset_dir)?;
    let dataset = load_dataset(dataset_dir)?;
    let n_train = train_size(dataset.queries.len(), test_fraction)?;
    let graph = dataset.graph.truncated(n_train);
    let init = initial_model(&dataset.config, seed);
    let pool = common.pool()?;
    let outcome = pool.install(|| train(init, &dataset.queries, &graph, &tc))?;

    common.prepare_out()?;
    save_checkpoint(&outcome.model, &common.out.join(CHECKPOINT_FILE))?;
    let mut csv = String::from("epoch,batch,loss\n");
    for row in &outcome.trace {
        let _ = writeln!(csv, "{},{},{}", row.epoch, row.batch, row.loss);
    }
    write_file(&common.out, LOSS_FILE, csv)?;

    let mut manifest =
        RunManifest::new("train", seed, common.threads, settings::train_kv(&tc, test_fraction));
    common.record_config_input(&mut manifest);
    manifest.inputs.push(("dataset".into(), dataset_dir.to_path_buf()));
    manifest.add_output(&common.out, CHECKPOINT_FILE)?;
    manifest.add_output(&common.out, LOSS_FILE)?;
    manifest.duration_secs = start.elapsed().as_secs_f64();
    manifest.write(&common.out)?;
    Ok(manifest)
}

/// What `eval` scores: a trained model directory, or the hash baseline alone.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalTarget {
    Baseline,
    Model(PathBuf),
}

impl EvalTarget {
    pub fn parse(s: &str) -> Self {
        if s == "baseline" {
            EvalTarget::Baseline
        } else {
            EvalTarget::Model(PathBuf::from(s))
        }
    }
}

pub fn cmd_eval(common: &Common, dataset_dir: &Path, target: &EvalTarget) -> Result<RunManifest> {
    let start = Instant::now();
    let config = common.require_config("eval")?;
    settings::check_top_level(&config)?;
    let es = settings::eval(&config)?;
    let test_fraction = settings::test_fraction(&config)?;
    let seed = settings::resolve_seed(&config, common.seed)?;

    load_verified(dataset_dir)?;
    let dataset = load_dataset(dataset_dir)?;
    let n_train = train_size(dataset.queries.len(), test_fraction)?;
    let train_ids: Vec<usize> = (0..n_train).collect();
    let test_ids: Vec<usize> = (n_train..dataset.queries.len()).collect();
    let purchases = dataset.graph.purchase_map();

    let model = match target {
        EvalTarget::Baseline => None,
        EvalTarget::Model(dir) => {
            let trained = load_verified(dir)?;
            let trained_fraction: Option<f64> = trained
                .config
                .get("split.test_fraction")
                .and_then(|v| v.parse().ok());
            if trained_fraction != Some(test_fraction) {
                return Err(CliError::Usage(format!(
                    "model in {} was trained with split.test_fraction {:?}, eval config has {test_fraction}",
                    dir.display(),
                    trained_fraction
                )));
            }
            let model = load_checkpoint(&dir.join(CHECKPOINT_FILE))?;
            if model.vocab_size() != dataset.config.vocab_size || model.dim() != dataset.config.dim {
                return Err(CliError::Usage(format!(
                    "checkpoint shape {}x{} does not match dataset {}x{}",
                    model.vocab_size(),
                    model.dim(),
                    dataset.config.vocab_size,
                    dataset.config.dim
                )));
            }
            Some(model)
        }
    };

    let pool = common.pool()?;
    let reports = pool.install(|| -> Result<_> {
        let mut reports = Vec::new();
        if let Some(model) = &model {
            let index = EmbeddingIndex::new(model, &dataset.queries, train_ids.clone())?;
            reports.push(evaluate(
                "attention",
                &index,
                &dataset.queries,
                &test_ids,
                purchases,
                &es.eval,
            )?);
        }
        let index = HashIndex::new(&dataset.queries, train_ids.clone(), es.hash_buckets)?;
        reports.push(evaluate(
            "trigram_hash",
            &index,
            &dataset.queries,
            &test_ids,
            purchases,
            &es.eval,
        )?);
        Ok(reports)
    })?;

    common.prepare_out()?;
    let mut manifest = RunManifest::new("eval", seed, common.threads, settings::eval_kv(&es, test_fraction));
    common.record_config_input(&mut manifest);
    manifest.inputs.push(("dataset".into(), dataset_dir.to_path_buf()));
    if let EvalTarget::Model(dir) = target {
        manifest.inputs.push(("model".into(), dir.clone()));
    }
    for r in &reports {
        let name = format!("{}.csv", r.model);
        write_file(&common.out, &name, r.to_csv())?;
        manifest.add_output(&common.out, &name)?;
    }
    let refs: Vec<_> = reports.iter().collect();
    write_file(&common.out, SUMMARY_FILE, summary_table(&refs))?;
    manifest.add_output(&common.out, SUMMARY_FILE)?;
    manifest.duration_secs = start.elapsed().as_secs_f64();
    manifest.write(&common.out)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct ValidateOutcome {
    pub checks: Vec<Check>,
    pub manifest: RunManifest,
}

impl ValidateOutcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs one theory suite. Suite failures are report entries, not errors.
pub fn cmd_validate(common: &Common, suite: &str) -> Result<ValidateOutcome> {
    let start = Instant::now();
    if !SUITES.contains(&suite) {
        return Err(CliError::Usage(format!(
            "unknown suite `{suite}`; expected one of {}",
            SUITES.join(", ")
        )));
    }
    let config = common.load_config()?;
    settings::check_top_level(&config)?;
    let seed = settings::resolve_seed(&config, common.seed)?;
    let pool = common.pool()?;
    common.prepare_out()?;

    let mut files: Vec<(String, String)> = Vec::new();
    let checks = pool.install(|| -> Result<Vec<Check>> {
        Ok(match suite {
            "mean" => trigram_mean_checks(seed)?,
            "variance" => variance_checks(seed)?,
            "partition" => partition_checks(seed)?,
            "pmi" => pmi_checks(&PmiSetup::tiny(seed))?,
            "blue" => blue_uniform_checks(&run_blue_experiment(&BlueExperiment::constant(seed))?),
            "figure1" => {
                let outcome = run_blue_experiment(&BlueExperiment::linear(seed))?;
                let (checks, fit) = figure1_checks(&outcome)?;
                let (a, b, c) = figure1_csvs(&outcome.report, &fit);
                files.push(("figure1a.csv".into(), a));
                files.push(("figure1b.csv".into(), b));
                files.push(("figure1c.csv".into(), c));
                checks
            }
            _ => unreachable!("suite checked above"),
        })
    })?;

    let mut report = String::new();
    for c in &checks {
        let _ = writeln!(report, "{c}");
    }
    files.push((CHECKS_FILE.into(), report));

    let mut resolved = KeyValues::new();
    resolved.set("suite", suite);
    let mut manifest = RunManifest::new("validate", seed, common.threads, resolved);
    common.record_config_input(&mut manifest);
    for (name, contents) in &files {
        write_file(&common.out, name, contents)?;
        manifest.add_output(&common.out, name)?;
    }
    manifest.duration_secs = start.elapsed().as_secs_f64();
    manifest.write(&common.out)?;
    Ok(ValidateOutcome { checks, manifest })
}
