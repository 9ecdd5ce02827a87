use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ircgan::augment::{
    read_manifest, superimpose_sequence, synthesize_dataset, write_dataset, AffineTransform, PairedSample, SyntheticTarget,
};
use ircgan::baselines::{apply_threshold, isodata_threshold};
use ircgan::config::ExperimentConfig;
use ircgan::gradsuite::{gradient_suite, SUITE_TOLERANCE};
use ircgan::metrics::{EvalReport, MetricKind, XorDenominator};
use ircgan::nn::{
    dump_latent_activations, infer as run_infer, segment_batch, split_validation, train as run_train, Checkpoint, NoiseSource, TrainOutcome,
};
use ircgan::protocols::{compare, run_incremental, run_scratch, stages_csv, timing_csv, StagePlan};
use ircgan::thermal::{alarm_report, build_series_from_files, predict_flashover};
use ircgan::{pnm, Error, ImageBuffer, Mask};

use crate::settings::{read_text, SynthSettings, ThermalSettings};
use crate::{AugmentArgs, EvalArgs};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn ext(img: &ImageBuffer) -> &'static str {
    if img.channels() == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

fn target_mask(s: &PairedSample) -> Mask {
    Mask::from_image(&s.y.to_gray(), 127)
}

fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let text = read_text(path)?;
    ExperimentConfig::parse(&text).with_context(|| format!("{}", path.display()))
}

fn write_outcome(out: &Path, prefix: &str, outcome: &TrainOutcome) -> Result<()> {
    let dir = out.join("checkpoints");
    for c in &outcome.checkpoints {
        write(&dir.join(format!("{prefix}epoch_{:05}.ckpt", c.epoch)), c.to_bytes())?;
    }
    write(&dir.join(format!("{prefix}best.ckpt")), outcome.best.to_bytes())
}

pub fn train(config: &Path, data: &Path, out: &Path) -> Result<u8> {
    let cfg = load_experiment(config)?;
    let dataset = read_manifest(data)?;
    write(&out.join("config.txt"), cfg.to_text())?;
    let (_, outcome) = run_train(&cfg.spec, &dataset, &cfg.train)?;
    let (tr, val) = split_validation(&dataset, cfg.train.validation_fraction);
    write_outcome(out, "", &outcome)?;
    write(&out.join("metrics.csv"), outcome.metrics_csv())?;
    let summary = format!(
        "train_samples: {}\nvalidation_samples: {}\nepochs: {}\ninitial_val_l1: {}\nbest_epoch: {}\nbest_val_l1: {}\n",
        tr.len(),
        val.len(),
        cfg.train.epochs,
        outcome.initial_val_l1,
        outcome.best.epoch,
        outcome.best.val_l1
    );
    write(&out.join("reports").join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(0)
}

pub fn infer(checkpoint: &Path, out: &Path, mask: bool, latent: bool, inputs: &[PathBuf]) -> Result<u8> {
    let gen = Checkpoint::load(checkpoint)?.generator()?;
    let noise = gen.spec().noise;
    for (i, path) in inputs.iter().enumerate() {
        let img = pnm::read(path)?;
        let name = stem(path);
        let generated = run_infer(&gen, &img, &mut NoiseSource::new(i as u64, noise))?;
        write(&out.join(format!("{name}.{}", ext(&generated))), pnm::encode(&generated))?;
        if mask {
            let m = Mask::from_image(&generated, 127);
            write(&out.join(format!("{name}_mask.pgm")), pnm::encode(&m.to_image()))?;
        }
        if latent {
            dump_latent_activations(&gen, &img, out.join("latent").join(&name))?;
        }
    }
    Ok(0)
}

fn masks_from_dirs(pred: &Path, gt: &Path) -> Result<Vec<(String, Mask, Mask)>> {
    let mut names: Vec<PathBuf> = fs::read_dir(gt)
        .map_err(|e| Error::io(gt, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Data(format!("{}: no .pgm ground-truth masks", gt.display())).into());
    }
    names
        .iter()
        .map(|g| {
            let p = pred.join(g.file_name().expect("listed file"));
            if !p.exists() {
                return Err(Error::Data(format!("{}: missing prediction for {}", p.display(), g.display())).into());
            }
            Ok((stem(g), pnm::read_mask(&p)?, pnm::read_mask(g)?))
        })
        .collect()
}

pub fn eval(args: &EvalArgs) -> Result<u8> {
    let metric = match args.metric.as_str() {
        "xor" => MetricKind::XorError(args.denominator.parse::<XorDenominator>()?),
        "accuracy" => MetricKind::Accuracy,
        other => return Err(Error::Config(format!("unknown metric {other:?}")).into()),
    };
    let items = match (&args.pred, &args.gt, &args.data) {
        (Some(pred), Some(gt), _) => masks_from_dirs(pred, gt)?,
        (_, _, Some(data)) => {
            let samples = read_manifest(data)?;
            let preds = if let Some(ckpt) = &args.checkpoint {
                let gen = Checkpoint::load(ckpt)?.generator()?;
                let inputs: Vec<ImageBuffer> = samples.iter().map(|s| s.x.clone()).collect();
                segment_batch(&gen, &inputs)?
            } else if args.isodata {
                samples
                    .iter()
                    .map(|s| {
                        let g = s.x.to_gray();
                        apply_threshold(&g, isodata_threshold(&g)?)
                    })
                    .collect::<ircgan::Result<_>>()?
            } else {
                return Err(Error::Config("--data needs --checkpoint or --isodata".into()).into());
            };
            samples.iter().zip(preds).map(|(s, p)| (s.id.clone(), p, target_mask(s))).collect()
        }
        _ => return Err(Error::Config("eval needs --pred/--gt or --data".into()).into()),
    };
    let report = EvalReport::evaluate(metric, &items)?;
    write(&args.out.join("metrics.csv"), report.to_csv())?;
    println!("{} mean over {} images: {}", report.metric, report.values.len(), report.mean());
    Ok(0)
}

fn read_transforms(path: &Path, template: &ImageBuffer) -> Result<Vec<AffineTransform>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "angle_deg,scale,cx,cy" => {}
        _ => return Err(Error::Data(format!("{}: expected header angle_deg,scale,cx,cy", path.display())).into()),
    }
    let tcx = (template.width() - 1) as f64 / 2.0;
    let tcy = (template.height() - 1) as f64 / 2.0;
    lines
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| Error::Data(format!("{}:{}: malformed transform row", path.display(), i + 1)))?;
            let [angle, scale, cx, cy] = v[..] else {
                return Err(Error::Data(format!("{}:{}: expected four fields", path.display(), i + 1)).into());
            };
            Ok(AffineTransform::about_center(tcx, tcy, angle, scale, cx - tcx, cy - tcy)?)
        })
        .collect()
}

pub fn augment(args: &AugmentArgs) -> Result<u8> {
    let samples = if let Some(config) = &args.config {
        let settings = SynthSettings::parse(&read_text(config)?).with_context(|| format!("{}", config.display()))?;
        write(&args.out.join("config.txt"), settings.to_text())?;
        synthesize_dataset(&settings.synth, settings.count)?
    } else if let (Some(template), Some(transforms)) = (&args.template, &args.transforms) {
        let tpl = pnm::read(template)?.to_gray();
        let ts = read_transforms(transforms, &tpl)?;
        let bgs = args.backgrounds.iter().map(|p| Ok(pnm::read(p)?.to_gray())).collect::<Result<Vec<_>>>()?;
        let target = SyntheticTarget::binarized(tpl, args.threshold, args.label.as_str())?;
        superimpose_sequence(&target, &ts, &bgs)?
    } else {
        return Err(Error::Config("augment needs --config or --template with --transforms and --backgrounds".into()).into());
    };
    let manifest = write_dataset(&samples, &args.out)?;
    println!("{} pairs, manifest {}", samples.len(), manifest.display());
    Ok(0)
}

pub fn incremental(plan_path: &Path, config: &Path, test: &Path, out: &Path) -> Result<u8> {
    let plan = StagePlan::parse(&read_text(plan_path)?).with_context(|| format!("{}", plan_path.display()))?;
    let cfg = load_experiment(config)?;
    let manifest = plan.manifest.as_ref().ok_or_else(|| Error::Config(format!("{}: plan needs a manifest", plan_path.display())))?;
    let manifest = plan_path.parent().map(|d| d.join(manifest)).unwrap_or_else(|| manifest.clone());
    let dataset = read_manifest(&manifest)?;
    let test = read_manifest(test)?;
    write(&out.join("config.txt"), cfg.to_text())?;
    write(&out.join("plan.txt"), plan.to_text())?;

    let denom = XorDenominator::GtForeground;
    let inc = run_incremental(&plan, &cfg.spec, &cfg.train, &dataset, &test, denom)?;
    let mut metrics = String::from("arm,stage,epoch,d_loss,g_loss,val_l1\n");
    for (k, o) in inc.outcomes.iter().enumerate() {
        write_outcome(out, &format!("stage{}_", k + 1), o)?;
        for m in &o.metrics {
            metrics.push_str(&format!("incremental,{},{},{},{},{}\n", k + 1, m.epoch, m.d_loss, m.g_loss, m.val_l1));
        }
    }
    write(&out.join("reports").join("stages.csv"), stages_csv(&inc.reports))?;
    let mut timing = timing_csv("incremental", &inc.reports);

    if let Some(epochs) = plan.scratch_epochs {
        let scratch = run_scratch(&cfg.spec, &cfg.train, epochs, plan.seed, plan.final_size(), &dataset, &test, denom)?;
        write_outcome(out, "scratch_", &scratch.outcomes[0])?;
        for m in &scratch.outcomes[0].metrics {
            metrics.push_str(&format!("scratch,1,{},{},{},{}\n", m.epoch, m.d_loss, m.g_loss, m.val_l1));
        }
        write(&out.join("reports").join("scratch.csv"), stages_csv(&scratch.reports))?;
        let cmp = compare(&inc.reports, &scratch.reports[0])?;
        write(&out.join("reports").join("comparison.csv"), cmp.to_csv())?;
        timing = cmp.timing_csv();
        print!("{}", cmp.to_csv());
    } else {
        print!("{}", stages_csv(&inc.reports));
    }
    write(&out.join("metrics.csv"), metrics)?;
    write(&out.join("reports").join("timing.csv"), timing)?;
    Ok(0)
}

pub fn thermal(config: Option<&Path>, out: &Path, frames: &[PathBuf]) -> Result<u8> {
    let settings = match config {
        Some(p) => ThermalSettings::parse(&read_text(p)?).with_context(|| format!("{}", p.display()))?,
        None => ThermalSettings::default(),
    };
    let series = build_series_from_files(frames, settings.interval, settings.tau, settings.rule)?;
    let alarm = predict_flashover(&series, &settings.alarm)?;
    let report = alarm_report(alarm.as_ref(), &settings.alarm, &series);
    write(&out.join("config.txt"), settings.to_text())?;
    write(&out.join("reports").join("series.csv"), series.to_csv())?;
    write(&out.join("reports").join("alarm.txt"), &report)?;
    print!("{report}");
    Ok(0)
}

pub fn gradcheck() -> Result<u8> {
    let cases = gradient_suite()?;
    let mut failed = 0;
    for c in &cases {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {:<24} max_rel_error={:.3e} checked={} skipped={}",
            c.name, c.check.max_rel_error, c.check.checked, c.check.skipped
        );
        failed += usize::from(!c.passed());
    }
    println!("{} of {} cases within {SUITE_TOLERANCE:e}", cases.len() - failed, cases.len());
    Ok(u8::from(failed > 0))
}
