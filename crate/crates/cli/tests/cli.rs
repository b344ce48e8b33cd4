use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grhd::dataset::Split;
use grhd::metrics::auc;
use grhd_cli::checkpoint::{AnyModel, Checkpoint, CheckpointError, FORMAT_VERSION};
use grhd_cli::commands::{self, EmbedArgs, EvalArgs, SynthArgs, TrainArgs};
use grhd_cli::config::{RunConfig, Scorer};
use grhd_cli::corpus::load_split;
use grhd_cli::CliError;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const SYNTH: &str = "\
machines = fan:180
sections = 2
groups_per_section = 2
source_count = 12
target_count = 2
test_normal = 4
test_anomaly = 4
sample_rate = 8000
duration_secs = 0.5
";

const RUN: &str = "\
preset = desk
frame_size = 256
hop = 128
num_mels = 16
temporal_channels = 3
block_channels = 4,4,6
reversal_hidden = 6
batch_size = 16
";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_grhd"));
    c.env("GRHD_THREADS", "0");
    c
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("synth.cfg"), SYNTH).unwrap();
        std::fs::write(dir.path().join("run.cfg"), RUN).unwrap();
        let f = Self { dir };
        commands::synth(
            &SynthArgs {
                config: Some(f.path("synth.cfg")),
                out: f.data(),
                seed: Some(3),
            },
            &mut Vec::new(),
        )
        .unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn data(&self) -> PathBuf {
        self.path("data")
    }

    fn train_args(&self, ckpt: &str, extra: &[(&str, &str)]) -> TrainArgs {
        let mut overrides = vec![("seed".to_string(), "7".to_string()), ("epochs".into(), "2".into())];
        overrides.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        TrainArgs {
            data: self.data(),
            machine: "fan".into(),
            out: self.path(ckpt),
            config: Some(self.path("run.cfg")),
            overrides,
            log: None,
        }
    }

    fn train(&self, ckpt: &str, extra: &[(&str, &str)]) -> Checkpoint {
        commands::train_cmd(&self.train_args(ckpt, extra), &mut Vec::new()).unwrap()
    }

    fn eval_args(&self, ckpts: &[&str], extra: &[(&str, &str)], out: Option<&str>) -> EvalArgs {
        EvalArgs {
            checkpoints: ckpts.iter().map(|c| self.path(c)).collect(),
            data: self.data(),
            config: None,
            overrides: extra.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            out: out.map(|o| self.path(o)),
        }
    }
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

// ---- configuration ------------------------------------------------------

#[test]
fn defaults_echo_published_values() {
    let echo = RunConfig::default().echo();
    for line in ["frame_size=1024", "hop=512", "num_mels=128", "lr=0.001", "epochs=150"] {
        assert!(echo.lines().any(|l| l == line), "missing {line} in\n{echo}");
    }
}

#[test]
fn train_prints_echo_with_overrides() {
    let f = Fixture::new();
    let out = ok(&bin()
        .args(["train", "--data"])
        .arg(f.data())
        .args(["--machine", "fan", "--out"])
        .arg(f.path("m.ckpt"))
        .arg("--config")
        .arg(f.path("run.cfg"))
        .args(["--seed", "7", "--epochs", "5"])
        .output()
        .unwrap());
    assert!(out.contains("epochs=5\n") && out.contains("seed=7\n") && out.contains("lr=0.001\n"));
    let log = std::fs::read_to_string(f.path("m.ckpt.loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 6);
    assert!(log.starts_with("epoch,lr,lambda,l_rev,l_sec,l_att,l_total\n"));
}

#[test]
fn all_zero_loss_weights_rejected() {
    let f = Fixture::new();
    let out = bin()
        .args(["train", "--data"])
        .arg(f.data())
        .args(["--machine", "fan", "--out"])
        .arg(f.path("m.ckpt"))
        .args(["--seed", "1", "--alpha", "0", "--beta", "0", "--gamma", "0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("all zero"));
    assert!(!f.path("m.ckpt").exists());
}

#[test]
fn train_requires_seed() {
    let f = Fixture::new();
    let mut args = f.train_args("m.ckpt", &[]);
    args.overrides.retain(|(k, _)| k != "seed");
    assert!(matches!(commands::train_cmd(&args, &mut Vec::new()), Err(CliError::Usage(_))));
}

#[test]
fn unknown_keys_and_flags_are_fatal() {
    let f = Fixture::new();
    std::fs::write(f.path("typo.cfg"), "preset = desk\nnum_mel = 8\n").unwrap();
    let out = bin()
        .args(["train", "--seed", "1", "--machine", "fan", "--data"])
        .arg(f.data())
        .arg("--out")
        .arg(f.path("m.ckpt"))
        .arg("--config")
        .arg(f.path("typo.cfg"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_mel"));
    let out = bin().args(["gradcheck", "--sed", "3"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn missing_machine_is_no_training_data() {
    let f = Fixture::new();
    let mut args = f.train_args("m.ckpt", &[]);
    args.machine = "pump".into();
    assert!(matches!(commands::train_cmd(&args, &mut Vec::new()), Err(CliError::NoTrainingData(_))));
}

#[test]
fn bad_thread_count_rejected() {
    let f = Fixture::new();
    let out = bin()
        .env("GRHD_THREADS", "many")
        .args(["train", "--seed", "1", "--machine", "fan", "--data"])
        .arg(f.data())
        .arg("--out")
        .arg(f.path("m.ckpt"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("GRHD_THREADS"));
}

// ---- synth --------------------------------------------------------------

#[test]
fn synth_is_reproducible() {
    let f = Fixture::new();
    ok(&bin()
        .args(["synth", "--seed", "3", "--config"])
        .arg(f.path("synth.cfg"))
        .arg("--out")
        .arg(f.path("again"))
        .output()
        .unwrap());
    assert_eq!(sha(&f.data().join("manifest.csv")), sha(&f.path("again/manifest.csv")));
    let manifest = std::fs::read_to_string(f.data().join("manifest.csv")).unwrap();
    let name = manifest.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(sha(&f.data().join(name)), sha(&f.path("again").join(name)));
    // Both corpora hold the same file set.
    let count = |p: &Path| std::fs::read_dir(p.join("fan/test")).unwrap().count();
    assert_eq!(count(&f.data()), count(&f.path("again")));
}

#[test]
fn synth_counts_match_config() {
    let f = Fixture::new();
    let count = |split: &str| std::fs::read_dir(f.data().join("fan").join(split)).unwrap().count();
    assert_eq!(count("train"), 2 * (12 + 2));
    assert_eq!(count("test"), 2 * 2 * (4 + 4));
    assert!(f.data().join("synth.cfg").exists());
}

#[test]
fn synth_error_names_the_path() {
    let f = Fixture::new();
    std::fs::write(f.path("blocker"), "").unwrap();
    let out = bin()
        .args(["synth", "--config"])
        .arg(f.path("synth.cfg"))
        .arg("--out")
        .arg(f.path("blocker/corpus"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("blocker"));
}

#[test]
fn directory_scan_matches_manifest() {
    let f = Fixture::new();
    let listed = load_split(&f.data(), "fan", Split::Test).unwrap();
    std::fs::remove_file(f.data().join("manifest.csv")).unwrap();
    let scanned = load_split(&f.data(), "fan", Split::Test).unwrap();
    let mut a: Vec<_> = listed.iter().map(|c| (&c.id, &c.metadata, &c.samples)).collect();
    a.sort_by(|x, y| x.0.cmp(y.0));
    let mut b: Vec<_> = scanned.iter().map(|c| (&c.id, &c.metadata, &c.samples)).collect();
    b.sort_by(|x, y| x.0.cmp(y.0));
    assert_eq!(a, b);
}

// ---- checkpoint ---------------------------------------------------------

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let f = Fixture::new();
    for precision in ["f32", "f64"] {
        let name = format!("{precision}.ckpt");
        let trained = f.train(&name, &[("precision", precision)]);
        let bytes = std::fs::read(f.path(&name)).unwrap();
        let loaded = Checkpoint::load(&f.path(&name)).unwrap();
        assert_eq!(loaded.to_bytes(), bytes);
        assert_eq!(loaded.meta, trained.meta);
        assert_eq!(loaded.model.dtype().to_string(), precision);
        match (&loaded.model, &trained.model) {
            (AnyModel::F32(a), AnyModel::F32(b)) => assert!(a.store().named_tensors().eq(b.store().named_tensors())),
            (AnyModel::F64(a), AnyModel::F64(b)) => assert!(a.store().named_tensors().eq(b.store().named_tensors())),
            _ => panic!("precision changed"),
        }
        let test = load_split(&f.data(), "fan", Split::Test).unwrap();
        for scorer in [Scorer::Nls, Scorer::Knn] {
            let a = commands::score_clips(&trained, &f.data(), &test, scorer, 2).unwrap();
            let b = commands::score_clips(&loaded, &f.data(), &test, scorer, 2).unwrap();
            let bits = |v: &[grhd::metrics::ScoredClip]| v.iter().map(|c| c.score.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }
}

#[test]
fn corrupted_checkpoint_fails_eval() {
    let f = Fixture::new();
    f.train("m.ckpt", &[]);
    let mut bytes = std::fs::read(f.path("m.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(f.path("bad.ckpt"), &bytes).unwrap();
    let out = bin()
        .arg("eval")
        .arg("--checkpoint")
        .arg(f.path("bad.ckpt"))
        .arg("--data")
        .arg(f.data())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn version_mismatch_is_reported_before_checksum() {
    let f = Fixture::new();
    let ckpt = f.train("m.ckpt", &[]);
    let mut bytes = ckpt.to_bytes();
    bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let err = Checkpoint::from_bytes(&bytes).unwrap_err();
    assert!(
        matches!(
            err,
            CliError::Checkpoint(CheckpointError::VersionMismatch { found, expected })
                if found == FORMAT_VERSION + 1 && expected == FORMAT_VERSION
        ),
        "{err}"
    );
}

#[test]
fn malformed_checkpoints_rejected() {
    let f = Fixture::new();
    let bytes = f.train("m.ckpt", &[]).to_bytes();
    let check = |b: &[u8], want: CheckpointError| match Checkpoint::from_bytes(b) {
        Err(CliError::Checkpoint(e)) => assert_eq!(e, want),
        other => panic!("{:?}", other.map(|_| ())),
    };
    check(&bytes[..5], CheckpointError::BadMagic);
    check(b"NOTACKPT\x01\0\0\0", CheckpointError::BadMagic);
    check(&bytes[..20], CheckpointError::Truncated);
    check(&bytes[..bytes.len() - 1], CheckpointError::ChecksumMismatch);
}

// ---- eval / embed -------------------------------------------------------

#[test]
fn eval_report_has_every_cell() {
    let f = Fixture::new();
    f.train("m.ckpt", &[]);
    let mut out = Vec::new();
    let report = commands::eval_cmd(&f.eval_args(&["m.ckpt"], &[], Some("report.csv")), &mut out).unwrap();
    assert_eq!(report.cells.len(), 2 * 3);
    assert_eq!(report.degenerate_cells().count(), 0);
    let t = report.totals;
    assert!(t.auc_s.is_some() && t.auc_t.is_some() && t.pauc.is_some() && t.hauc.is_some());
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains(&report.totals_line()));
    assert!(text.contains("totals auc_s="));
    assert_eq!(std::fs::read_to_string(f.path("report.csv")).unwrap(), report.to_csv());
}

#[test]
fn full_range_pauc_is_pooled_auc() {
    let f = Fixture::new();
    let ckpt = f.train("m.ckpt", &[]);
    let report = commands::eval_cmd(&f.eval_args(&["m.ckpt"], &[("p", "1.0")], None), &mut Vec::new()).unwrap();
    let test = load_split(&f.data(), "fan", Split::Test).unwrap();
    let scored = commands::score_clips(&ckpt, &f.data(), &test, Scorer::Nls, 1).unwrap();
    for section in [0u32, 1] {
        let pick = |cond: grhd::dataset::Condition| -> Vec<f64> {
            scored
                .iter()
                .filter(|c| c.metadata.section_id == section && c.metadata.condition == cond)
                .map(|c| c.score)
                .collect()
        };
        let pooled = auc(&pick(grhd::dataset::Condition::Normal), &pick(grhd::dataset::Condition::Anomaly)).unwrap();
        let cell = report
            .cells
            .iter()
            .find(|c| c.section == section && c.metric == "pAUC")
            .unwrap();
        assert_eq!(cell.value.as_ref().unwrap(), &pooled);
    }
}

#[test]
fn eval_rejects_two_checkpoints_for_one_machine() {
    let f = Fixture::new();
    f.train("m.ckpt", &[]);
    let err = commands::eval_cmd(&f.eval_args(&["m.ckpt", "m.ckpt"], &[], None), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
}

#[test]
fn embed_rows_and_bytes_are_stable() {
    let f = Fixture::new();
    let ckpt = f.train("m.ckpt", &[]);
    let args = |out: &str| EmbedArgs {
        checkpoint: f.path("m.ckpt"),
        data: f.data(),
        out: f.path(out),
        split: Split::Test,
    };
    assert_eq!(commands::embed_cmd(&args("a.csv"), &mut Vec::new()).unwrap(), 32);
    commands::embed_cmd(&args("b.csv"), &mut Vec::new()).unwrap();
    let a = std::fs::read_to_string(f.path("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(f.path("b.csv")).unwrap());
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 33);
    let width = ckpt.meta.model.block_channels[2];
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(&header[..5], ["clip", "section", "domain", "condition", "z_rev_0"]);
    assert_eq!(header.len(), 4 + 3 * width);
    assert!(header.contains(&"z_att_0") && header.contains(&"z_sec_0"));
    assert!(lines[1..].iter().all(|l| l.split(',').count() == header.len()));
    let train_rows = commands::embed_cmd(
        &EmbedArgs {
            split: Split::Train,
            ..args("t.csv")
        },
        &mut Vec::new(),
    )
    .unwrap();
    assert_eq!(train_rows, 28);
}

// ---- determinism --------------------------------------------------------

#[test]
fn thread_count_does_not_change_outputs() {
    let f = Fixture::new();
    let run = |threads: &str, tag: &str| {
        ok(&bin()
            .env("GRHD_THREADS", threads)
            .args(["train", "--seed", "5", "--epochs", "2", "--machine", "fan", "--data"])
            .arg(f.data())
            .arg("--config")
            .arg(f.path("run.cfg"))
            .arg("--out")
            .arg(f.path(&format!("{tag}.ckpt")))
            .output()
            .unwrap());
        ok(&bin()
            .env("GRHD_THREADS", threads)
            .args(["eval", "--checkpoint"])
            .arg(f.path(&format!("{tag}.ckpt")))
            .arg("--data")
            .arg(f.data())
            .arg("--out")
            .arg(f.path(&format!("{tag}.csv")))
            .output()
            .unwrap())
    };
    let a = run("0", "a");
    let b = run("3", "b");
    assert_eq!(a, b);
    for ext in ["ckpt", "ckpt.loss.csv", "csv"] {
        assert_eq!(sha(&f.path(&format!("a.{ext}"))), sha(&f.path(&format!("b.{ext}"))), "{ext}");
    }
}

// ---- gradcheck ----------------------------------------------------------

#[test]
fn gradcheck_passes_and_detects_sign_flip() {
    let out = bin().args(["gradcheck", "--seed", "4"]).output().unwrap();
    let text = ok(&out);
    assert!(text.lines().last().unwrap().ends_with("PASS"));
    assert!(text.contains("op conv2d ") && text.contains("reversal twin") && text.contains("net block.0.conv.weight"));
    let out = bin().args(["gradcheck", "--inject-sign-flip"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let twin = text.lines().find(|l| l.starts_with("reversal twin")).unwrap();
    assert!(twin.ends_with("FAIL"), "{twin}");
    assert_eq!(text.lines().filter(|l| l.ends_with("FAIL")).count(), 2, "{text}");
}
