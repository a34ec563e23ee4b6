use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use attest::io::{load_checkpoint, load_dataset};
use attest::presets::initial_model;
use attest_cli::commands::{CHECKPOINT_FILE, SUMMARY_FILE};
use attest_cli::manifest::{RunManifest, MANIFEST_FILE};
use attest_cli::{cmd_eval, cmd_generate, cmd_train, cmd_validate, CliError, Common, EvalTarget};

const SMALL: &str = "seed = 5
generate.dim = 6
generate.vocab_size = 120
generate.max_len = 8
generate.lambda = 3
generate.alphas = 0.9
generate.betas = 2
generate.epsilon_p = 0.8
generate.n_products = 15
generate.n_queries = 200
split.test_fraction = 0.1
train.learning_rate = 0.02
train.epochs = 2
train.negatives_per_positive = 3
train.positive_mode = walks
train.walk_length = 3
train.walks_per_node = 4
train.batch_size = 8
train.optimizer = adam
eval.k = 10
eval.reformulations = 3
eval.oracle_candidates = 12
eval.hash_buckets = 64
";

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.conf");
    fs::write(&p, text).unwrap();
    p
}

fn common(config: &Path, out: PathBuf) -> Common {
    Common {
        config: Some(config.to_path_buf()),
        out,
        seed: None,
        threads: 1,
    }
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != MANIFEST_FILE)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn manifest_without_timing(dir: &Path) -> String {
    fs::read_to_string(dir.join(MANIFEST_FILE))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("duration_secs"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn generate_and_train_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for run in ["a", "b"] {
        let data = tmp.path().join(run).join("data");
        cmd_generate(&common(&cfg, data.clone())).unwrap();
        cmd_train(&common(&cfg, tmp.path().join(run).join("model")), &data).unwrap();
    }
    for sub in ["data", "model"] {
        let a = tmp.path().join("a").join(sub);
        let b = tmp.path().join("b").join(sub);
        assert_eq!(artifact_bytes(&a), artifact_bytes(&b), "{sub}");
        // manifests differ only in timing and the recorded input paths
        let strip = |s: String| {
            s.lines()
                .filter(|l| !l.starts_with("input."))
                .map(str::to_string)
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(manifest_without_timing(&a)), strip(manifest_without_timing(&b)));
    }
}

#[test]
fn generation_is_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let one = tmp.path().join("one");
    cmd_generate(&common(&cfg, one.clone())).unwrap();
    let mut c = common(&cfg, tmp.path().join("three"));
    c.threads = 3;
    cmd_generate(&c).unwrap();
    assert_eq!(artifact_bytes(&one), artifact_bytes(&tmp.path().join("three")));
}

#[test]
fn zero_queries_give_an_empty_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &SMALL.replace("generate.n_queries = 200", "generate.n_queries = 0"),
    );
    let data = tmp.path().join("data");
    cmd_generate(&common(&cfg, data.clone())).unwrap();
    assert_eq!(fs::read(data.join("edges.tsv")).unwrap(), b"");
    assert_eq!(fs::read(data.join("queries.tsv")).unwrap(), b"");
    let ds = load_dataset(&data).unwrap();
    assert!(ds.queries.is_empty());
    assert_eq!(ds.graph.n_edges(), 0);
    RunManifest::load(&data).unwrap().verify(&data).unwrap();
}

#[test]
fn zero_epochs_save_the_initialisation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &SMALL.replace("train.epochs = 2", "train.epochs = 0"),
    );
    let data = tmp.path().join("data");
    cmd_generate(&common(&cfg, data.clone())).unwrap();
    let model_dir = tmp.path().join("model");
    cmd_train(&common(&cfg, model_dir.clone()), &data).unwrap();
    let saved = load_checkpoint(&model_dir.join(CHECKPOINT_FILE)).unwrap();
    let ds = load_dataset(&data).unwrap();
    assert_eq!(saved, initial_model(&ds.config, 5));
    assert_eq!(fs::read_to_string(model_dir.join("loss.csv")).unwrap(), "epoch,batch,loss\n");
}

#[test]
fn corrupted_dataset_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let data = tmp.path().join("data");
    cmd_generate(&common(&cfg, data.clone())).unwrap();
    let mut bytes = fs::read(data.join("vocab.bin")).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(data.join("vocab.bin"), bytes).unwrap();
    let err = cmd_train(&common(&cfg, tmp.path().join("model")), &data).unwrap_err();
    assert!(matches!(err, CliError::ChecksumMismatch { ref file, .. } if file == "vocab.bin"));
}

#[test]
fn missing_manifest_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let data = tmp.path().join("data");
    cmd_generate(&common(&cfg, data.clone())).unwrap();
    fs::remove_file(data.join(MANIFEST_FILE)).unwrap();
    let err = cmd_train(&common(&cfg, tmp.path().join("model")), &data).unwrap_err();
    assert!(matches!(err, CliError::MissingManifest(_)));
}

#[test]
fn eval_writes_two_comparable_blocks() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    cmd_generate(&common(&cfg, data.clone())).unwrap();
    cmd_train(&common(&cfg, model.clone()), &data).unwrap();
    let out = tmp.path().join("eval");
    cmd_eval(&common(&cfg, out.clone()), &data, &EvalTarget::Model(model)).unwrap();
    let summary = fs::read_to_string(out.join(SUMMARY_FILE)).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("precision@10"));
    assert!(lines[1].starts_with("attention"));
    assert!(lines[2].starts_with("trigram_hash"));

    // both models are scored on the same held-out queries
    let ids = |name: &str| -> Vec<String> {
        fs::read_to_string(out.join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect()
    };
    let att = ids("attention.csv");
    assert_eq!(att, ids("trigram_hash.csv"));
    assert_eq!(att.len(), 20);
    assert_eq!(att[0], "180");

    let base_out = tmp.path().join("base");
    cmd_eval(&common(&cfg, base_out.clone()), &data, &EvalTarget::Baseline).unwrap();
    assert_eq!(
        fs::read(base_out.join("trigram_hash.csv")).unwrap(),
        fs::read(out.join("trigram_hash.csv")).unwrap()
    );
    assert!(!base_out.join("attention.csv").exists());
}

#[test]
fn eval_rejects_a_model_trained_on_another_split() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    cmd_generate(&common(&cfg, data.clone())).unwrap();
    cmd_train(&common(&cfg, model.clone()), &data).unwrap();
    let other = tmp.path().join("other.conf");
    fs::write(
        &other,
        SMALL.replace("split.test_fraction = 0.1", "split.test_fraction = 0.2"),
    )
    .unwrap();
    let err = cmd_eval(&common(&other, tmp.path().join("e")), &data, &EvalTarget::Model(model))
        .unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}generate.temperature = 1\n"));
    assert!(cmd_generate(&common(&cfg, tmp.path().join("d"))).is_err());
    let cfg = write_config(tmp.path(), &format!("{SMALL}model.size = 1\n"));
    assert!(cmd_generate(&common(&cfg, tmp.path().join("d"))).is_err());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let mut c = common(&cfg, tmp.path().join("d"));
    c.seed = Some(77);
    let m = cmd_generate(&c).unwrap();
    assert_eq!(m.seed, 77);
    assert_eq!(load_dataset(&tmp.path().join("d")).unwrap().config.seed, 77);
}

#[test]
fn validate_partition_passes_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let c = Common {
        config: None,
        out: out.clone(),
        seed: Some(0),
        threads: 1,
    };
    let outcome = cmd_validate(&c, "partition").unwrap();
    assert!(outcome.all_passed());
    let text = fs::read_to_string(out.join("checks.txt")).unwrap();
    assert!(text.starts_with("PASS partition."));
    RunManifest::load(&out).unwrap().verify(&out).unwrap();
}

#[test]
fn validate_rejects_unknown_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let c = Common {
        config: None,
        out: tmp.path().join("v"),
        seed: Some(0),
        threads: 1,
    };
    assert!(matches!(cmd_validate(&c, "everything"), Err(CliError::Usage(_))));
}

fn attest_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_attest"))
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| attest_bin().args(args).output().unwrap().status.code();
    let out = tmp.path().join("v");
    let out = out.to_str().unwrap();

    assert_eq!(status(&["validate", "--suite", "partition", "--seed", "0", "--out", out]), Some(0));
    // no seed anywhere
    assert_eq!(status(&["validate", "--suite", "partition", "--out", out]), Some(2));
    // generate without a config
    assert_eq!(status(&["generate", "--seed", "0", "--out", out]), Some(2));
}

#[test]
fn failed_checks_exit_with_one() {
    // the α < 1 variance check fails: the exact variance grows with β there
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = attest_bin()
        .args(["validate", "--suite", "variance", "--seed", "0", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("FAIL ")), "{stdout}");
    assert_eq!(o.status.code(), Some(1));
}
