use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use thermotwin::plant::bench;
use thermotwin::records::{self, ModelRecord};
use thermotwin::CHANNELS;

fn thermotwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermotwin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = thermotwin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn models_in(dir: &Path) -> Vec<ModelRecord> {
    records::read_models(fs::File::open(dir.join("models.csv")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("session.toml");
    fs::write(&p, text).unwrap();
    path(&p).to_string()
}

#[test]
fn identify_default_config() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("id");
    ok(&["identify", "--out", path(&out)]);
    let models = models_in(&out);
    assert_eq!(models.len(), CHANNELS);
    for m in &models {
        assert_eq!(m.channel, m.input);
        assert!(m.fit >= 70.0, "channel {} fit {}", m.channel + 1, m.fit);
    }
    let text = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert!(text.starts_with("# seed=7\n"));
    let sets = records::read_dataset(text.as_bytes()).unwrap();
    assert_eq!(sets.len(), CHANNELS + 1);
}

#[test]
fn identify_round_trip_without_coupling() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "[coupling]\nkappa = 0.0\n[experiment]\ncamera = false\n");
    let out = root.path().join("id");
    ok(&["identify", "--config", &cfg, "--out", path(&out)]);
    for (m, g) in models_in(&out).iter().zip(bench::diagonal()) {
        assert!((m.model.gain / g.gain - 1.0).abs() < 0.02, "{m:?}");
        assert!((m.model.time_const / g.time_const - 1.0).abs() < 0.02, "{m:?}");
        assert!((m.model.order - g.order).abs() < 0.05, "{m:?}");
    }
}

#[test]
fn bad_output_path_leaves_nothing() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("no/such/dir");
    let out = thermotwin(&["gap", "--out", path(&missing)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);

    // a failure after the directory was created removes it again
    let family = root.path().join("family.csv");
    fs::write(&family, "channel,input,K,T,alpha,L,fit\n1,1,1.3,-5,0.5,0,80\n").unwrap();
    let out_dir = root.path().join("gap");
    let out = thermotwin(&["gap", "--family", path(&family), "--out", path(&out_dir)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("time constant"), "{err}");
    assert!(!out_dir.exists());
}

#[test]
fn gap_on_family_file() {
    let root = tempfile::tempdir().unwrap();
    let family = root.path().join("family.csv");
    let recs: Vec<ModelRecord> = bench::family()
        .into_iter()
        .map(|model| ModelRecord {
            channel: 0,
            input: 0,
            model,
            fit: f64::NAN,
        })
        .collect();
    records::write_models(fs::File::create(&family).unwrap(), &recs, None).unwrap();
    let out = root.path().join("gap");
    ok(&["gap", "--family", path(&family), "--out", path(&out)]);
    let m = records::read_gap_matrix(fs::File::open(out.join("gap.csv")).unwrap()).unwrap();
    assert_eq!(m.len(), 3);
    for i in 0..3 {
        assert_eq!(m.get(i, i), 0.0);
        for j in 0..3 {
            assert_eq!(m.get(i, j), m.get(j, i));
            assert!((0.0..=1.0).contains(&m.get(i, j)));
        }
    }
    let nominal = records::read_models(fs::File::open(out.join("nominal.csv")).unwrap()).unwrap();
    assert_eq!(nominal.len(), 1);

    ok(&["export", "--kind", "gap", "--input", path(&out.join("gap.csv")), "--out", path(&out)]);
    let tri = fs::read_to_string(out.join("gap_triplets.csv")).unwrap();
    assert_eq!(tri.lines().filter(|l| !l.starts_with('#')).count(), 10);
}

#[test]
fn unknown_config_keys_rejected() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "[scenario]\nduraton = 5\n");
    let out = thermotwin(&["simulate", "--config", &cfg, "--out", path(&root.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("duraton"));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "[scenario]\nduration = 120.0\nffc_events = [50.0]\n");
    let run = |name: &str, seed: &str| {
        let out = root.path().join(name);
        ok(&["simulate", "--config", &cfg, "--seed", seed, "--out", path(&out)]);
        (
            fs::read(out.join("runlog.csv")).unwrap(),
            fs::read(out.join("events.jsonl")).unwrap(),
        )
    };
    let a = run("a", "3");
    let b = run("b", "3");
    let c = run("c", "4");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    assert!(String::from_utf8_lossy(&a.0).starts_with("# seed=3\n"));
    assert!(String::from_utf8_lossy(&a.1).starts_with("# seed=3\n"));

    let out = root.path().join("plots");
    ok(&["export", "--kind", "runlog", "--input", path(&root.path().join("a/runlog.csv")), "--out", path(&out)]);
    let temps = fs::read_to_string(out.join("temperatures.csv")).unwrap();
    assert_eq!(temps.lines().count(), 2 + 240 * CHANNELS);
    assert!(out.join("uniformity.csv").exists());
}

#[test]
fn tune_then_simulate_meets_scenario_bands() {
    let root = tempfile::tempdir().unwrap();
    let tuned = root.path().join("tuned");
    ok(&["tune", "--out", path(&tuned)]);
    let gains = records::read_gains(fs::File::open(tuned.join("gains.csv")).unwrap()).unwrap();
    assert!(gains.iter().all(|g| g.feasible));

    let cfg = write_config(root.path(), "[scenario]\nduration = 1200.0\nffc_events = [1061.0]\n");
    let run = root.path().join("run");
    let gains_path = tuned.join("gains.csv");
    ok(&["simulate", "--config", &cfg, "--gains", path(&gains_path), "--out", path(&run)]);
    let log = records::read_runlog(fs::File::open(run.join("runlog.csv")).unwrap()).unwrap();
    let window = 20;
    for ch in 0..CHANNELS {
        let y = log.measured(ch);
        for k in window..log.rows.len() {
            if (600.0..1000.0).contains(&log.rows[k].t) {
                let mean = y[k - window..k].iter().sum::<f64>() / window as f64;
                assert!((mean - 33.0).abs() <= 0.5, "channel {} mean {mean} at {}", ch + 1, log.rows[k].t);
            }
        }
    }

    let bode = root.path().join("bode");
    ok(&["export", "--kind", "bode", "--gains", path(&gains_path), "--out", path(&bode)]);
    let text = fs::read_to_string(bode.join("bode.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + CHANNELS * 101);
}

#[test]
fn serve_writes_the_headless_log() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(
        root.path(),
        "seed = 5\n[scenario]\nduration = 30.0\n[session]\nlisten = \"127.0.0.1:0\"\n",
    );
    let served = root.path().join("served");
    let batch = root.path().join("batch");
    ok(&["serve", "--config", &cfg, "--time-scale", "inf", "--out", path(&served)]);
    ok(&["simulate", "--config", &cfg, "--out", path(&batch)]);
    for f in ["runlog.csv", "events.jsonl"] {
        assert_eq!(fs::read(served.join(f)).unwrap(), fs::read(batch.join(f)).unwrap(), "{f}");
    }
}
