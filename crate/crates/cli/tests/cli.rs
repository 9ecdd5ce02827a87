use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ircgan");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(BIN).args(args).env(key, val).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const TRAIN_CFG: &str = "depth=4\ninput_size=16\nbase_channels=4\nepochs=3\ncheckpoint_every=2\nlr=0.002\nseed=5\n";

fn synth_data(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let cfg = write(dir, &format!("synth{seed}.txt"), &format!("count={count}\nsize=16\nseed={seed}\nprefix=s{seed}_\n"));
    let out = dir.join(format!("data{seed}"));
    let o = run(&["augment", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("manifest.csv")
}

#[test]
fn missing_manifest_exits_3_and_names_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.txt", TRAIN_CFG);
    let missing = tmp.path().join("nowhere/manifest.csv");
    let o = run(&["train", "--config", s(&cfg), "--data", s(&missing), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let data = synth_data(tmp.path(), 4, 1);
    for bad in ["depth=4\nbogus=1\n", "depth=4\ndepth=5\n", "epochs=ten\n", "depth=9\ninput_size=16\n"] {
        let cfg = write(tmp.path(), "bad.txt", bad);
        let o = run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&tmp.path().join("o"))]);
        assert_eq!(code(&o), 2, "{bad:?}: {}", stderr(&o));
    }
    let o = run_env(&["gradcheck"], "IRCGAN_THREADS", "zero");
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exits_4() {
    let tmp = TempDir::new().unwrap();
    let data = synth_data(tmp.path(), 4, 2);
    let cfg = write(tmp.path(), "c.txt", "depth=4\ninput_size=16\nbase_channels=4\nepochs=20\nlr=1e36\n");
    let o = run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn train_layout_and_byte_identical_reruns() {
    let tmp = TempDir::new().unwrap();
    let data = synth_data(tmp.path(), 6, 3);
    let cfg = write(tmp.path(), "c.txt", TRAIN_CFG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let c = tmp.path().join("c");
    let o = run_env(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&c)], "IRCGAN_THREADS", "1");
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    for rel in [
        "config.txt",
        "metrics.csv",
        "reports/summary.txt",
        "checkpoints/epoch_00000.ckpt",
        "checkpoints/epoch_00002.ckpt",
        "checkpoints/epoch_00003.ckpt",
        "checkpoints/best.ckpt",
    ] {
        let x = fs::read(a.join(rel)).unwrap_or_else(|_| panic!("missing {rel}"));
        assert_eq!(x, fs::read(b.join(rel)).unwrap(), "{rel} differs between reruns");
        assert_eq!(x, fs::read(c.join(rel)).unwrap(), "{rel} differs with one thread");
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,d_loss,g_loss,val_l1\n"));
    assert_eq!(metrics.lines().count(), 4);

    // the echoed config is itself a valid config producing the same run
    let d = tmp.path().join("d");
    let o = run(&["train", "--config", s(&a.join("config.txt")), "--data", s(&data), "--out", s(&d)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(d.join("metrics.csv")).unwrap());

    // inference and evaluation on the trained checkpoint are deterministic
    let inputs: Vec<String> = (0..2).map(|k| s(&tmp.path().join(format!("data3/inputs/s3_{k:04}.pgm"))).to_string()).collect();
    let ckpt = a.join("checkpoints/best.ckpt");
    for out in ["i1", "i2"] {
        let mut args = vec!["infer", "--checkpoint", s(&ckpt), "--mask", "--out"];
        let dir = tmp.path().join(out);
        args.push(s(&dir));
        args.extend(inputs.iter().map(String::as_str));
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["s3_0000.pgm", "s3_0000_mask.pgm", "s3_0001.pgm"] {
        assert_eq!(fs::read(tmp.path().join("i1").join(f)).unwrap(), fs::read(tmp.path().join("i2").join(f)).unwrap());
    }
    let o = run(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&tmp.path().join("e"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("e/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn eval_identical_masks_is_zero() {
    let tmp = TempDir::new().unwrap();
    let data = synth_data(tmp.path(), 5, 4);
    let targets = data.parent().unwrap().join("targets");
    let o = run(&["eval", "--pred", s(&targets), "--gt", s(&targets), "--out", s(&tmp.path().join("e"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("e/metrics.csv")).unwrap();
    assert_eq!(csv.lines().last().unwrap(), "mean,xor_error[gt_foreground],0");
    assert_eq!(csv.lines().count(), 7);

    let o = run(&["eval", "--isodata", "--metric", "accuracy", "--data", s(&data), "--out", s(&tmp.path().join("i"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = run(&["eval", "--pred", s(tmp.path()), "--gt", s(&targets), "--out", s(&tmp.path().join("m"))]);
    assert_eq!(code(&o), 3);
}

fn pgm(path: &Path, w: usize, h: usize, f: impl Fn(usize, usize) -> u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            bytes.push(f(x, y));
        }
    }
    fs::write(path, bytes).unwrap();
}

#[test]
fn augment_pairs_each_transform_with_a_background() {
    let tmp = TempDir::new().unwrap();
    let t = tmp.path();
    pgm(&t.join("tpl.pgm"), 6, 6, |x, y| if (1..5).contains(&x) && (2..4).contains(&y) { 200 } else { 0 });
    let n = 4;
    let mut bgs = Vec::new();
    for k in 0..n {
        let p = t.join(format!("bg{k}.pgm"));
        pgm(&p, 20, 20, |x, y| ((x + y + 10 * k) % 50) as u8);
        bgs.push(s(&p).to_string());
    }
    let tf = write(t, "tf.csv", "angle_deg,scale,cx,cy\n0,1,10,10\n90,1,8,12\n45,1.1,12,9\n-30,0.9,10,10\n");
    let tpl = t.join("tpl.pgm");
    let mut args = vec!["augment", "--template", s(&tpl), "--transforms", s(&tf), "--label", "rotor", "--out"];
    let out = t.join("aug");
    args.push(s(&out));
    args.push("--backgrounds");
    args.extend(bgs.iter().map(String::as_str));
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), n + 1);
    assert_eq!(fs::read_dir(out.join("inputs")).unwrap().count(), n);
    assert_eq!(fs::read_dir(out.join("targets")).unwrap().count(), n);
    assert!(manifest.contains("rotor_0003"));

    // one background short
    let o = run(&args[..args.len() - 1]);
    assert_ne!(code(&o), 0);
}

#[test]
fn augment_synthetic_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.txt", "count=5\nsize=16\nseed=9\nbackground=gradient:20:140:8\ntarget_mode=additive\n");
    for out in ["a", "b"] {
        let o = run(&["augment", "--config", s(&cfg), "--out", s(&tmp.path().join(out))]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for rel in ["manifest.csv", "config.txt", "inputs/synth_0004.pgm", "targets/synth_0004.pgm"] {
        assert_eq!(fs::read(tmp.path().join("a").join(rel)).unwrap(), fs::read(tmp.path().join("b").join(rel)).unwrap());
    }
}

#[test]
fn incremental_with_scratch_arm() {
    let tmp = TempDir::new().unwrap();
    let t = tmp.path();
    let train = synth_data(t, 8, 11);
    let test = synth_data(t, 3, 12);
    let cfg = write(t, "c.txt", "depth=4\ninput_size=16\nbase_channels=4\nlr=0.002\n");
    let plan = write(t, "plan.txt", "sizes=2,4\nepochs=2\nseed=1\nmanifest=data11/manifest.csv\nscratch_epochs=5\n");
    for out in ["a", "b"] {
        let o = run(&["incremental", "--plan", s(&plan), "--config", s(&cfg), "--test", s(&test), "--out", s(&t.join(out))]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for rel in [
        "config.txt",
        "plan.txt",
        "metrics.csv",
        "reports/stages.csv",
        "reports/scratch.csv",
        "reports/comparison.csv",
        "checkpoints/stage1_best.ckpt",
        "checkpoints/stage2_best.ckpt",
        "checkpoints/scratch_best.ckpt",
    ] {
        assert_eq!(fs::read(t.join("a").join(rel)).unwrap(), fs::read(t.join("b").join(rel)).unwrap(), "{rel}");
    }
    assert!(t.join("a/reports/timing.csv").exists());
    let stages = fs::read_to_string(t.join("a/reports/stages.csv")).unwrap();
    let rows: Vec<Vec<&str>> = stages.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][4], rows[0][5], "stage 2 must start from stage 1's best");
    let cmp = fs::read_to_string(t.join("a/reports/comparison.csv")).unwrap();
    assert!(cmp.contains("total_epochs,4,5,0.8"), "{cmp}");
    let _ = train;

    let bad = write(t, "bad.txt", "sizes=4,2\nepochs=2\nmanifest=data11/manifest.csv\n");
    let o = run(&["incremental", "--plan", s(&bad), "--config", s(&cfg), "--test", s(&test), "--out", s(&t.join("c"))]);
    assert_eq!(code(&o), 2);
}

fn ppm(path: &Path, hot: usize) {
    let mut bytes = b"P6\n8 8\n255\n".to_vec();
    for i in 0..64 {
        bytes.extend_from_slice(if i < hot { &[250, 200, 10] } else { &[10, 10, 200] });
    }
    fs::write(path, bytes).unwrap();
}

#[test]
fn thermal_series_and_alarm() {
    let tmp = TempDir::new().unwrap();
    let t = tmp.path();
    let mut frames = Vec::new();
    for (k, hot) in [1usize, 1, 2, 2, 6, 14, 26, 40].into_iter().enumerate() {
        let p = t.join(format!("f{k}.ppm"));
        ppm(&p, hot);
        frames.push(s(&p).to_string());
    }
    let cfg = write(t, "th.txt", "interval=1\nwindow=3\nrate_threshold=8\n");
    let mut args = vec!["thermal", "--config", s(&cfg), "--out"];
    let out = t.join("o");
    args.push(s(&out));
    args.extend(frames.iter().map(String::as_str));
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let series = fs::read_to_string(out.join("reports/series.csv")).unwrap();
    assert_eq!(series.lines().next().unwrap(), "t,red,yellow,green,blue");
    assert_eq!(series.lines().nth(5).unwrap(), "4,6,6,6,58");
    let alarm = fs::read_to_string(out.join("reports/alarm.txt")).unwrap();
    assert!(alarm.starts_with("alarm: yes\ntrigger_frame: 5\n"), "{alarm}");

    let cfg = write(t, "bad.txt", "window=3\nspeed=2\n");
    let mut bad = vec!["thermal", "--config", s(&cfg), "--out", s(&out)];
    bad.extend(frames.iter().map(String::as_str));
    assert_eq!(code(&run(&bad)), 2);
}

#[test]
fn gradcheck_suite_passes() {
    let o = run(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 20);
    assert!(!out.contains("FAIL"));
}
