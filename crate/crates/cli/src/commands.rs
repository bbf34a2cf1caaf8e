use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ipot::bench::{bench_inducing_points, bench_scaling, BenchOptions};
use ipot::data::{generate, load_bundle, mask_region, regrid, save_bundle, subsample, DatasetBundle, Mask, Problem};
use ipot::model::{load_checkpoint, save_checkpoint, Ipot, IpotConfig};
use ipot::parallel::{configure_threads, ExecPolicy};
use ipot::training::{append_records_csv, evaluate_with, train_with, TrainRecord, TrainState};
use serde_json::json;

use crate::config::{self, RunConfig};
use crate::{BenchArgs, Cli, Command, EvalArgs, GenerateArgs, TrainArgs, UsageError};

pub const DATASET_FILE: &str = "dataset.ipds";
pub const PROVENANCE_FILE: &str = "dataset.provenance.json";
pub const CONFIG_FILE: &str = "config.conf";
pub const CHECKPOINT_FILE: &str = "checkpoint.ipot";
pub const RECORDS_FILE: &str = "records.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_JSON: &str = "bench.json";
pub const ABLATION_CSV: &str = "ablation.csv";

pub fn run(cli: &Cli) -> Result<()> {
    let policy = match cli.threads {
        Some(0) => return Err(UsageError("--threads must be at least 1".into()).into()),
        Some(n) => {
            if let Err(e) = configure_threads(n) {
                log::warn!("could not size the worker pool: {e}");
            }
            if n == 1 {
                ExecPolicy::Sequential
            } else {
                ExecPolicy::Parallel
            }
        }
        None => ExecPolicy::Parallel,
    };
    match &cli.command {
        Command::Generate(a) => cmd_generate(cli, a, policy),
        Command::Train(a) => cmd_train(cli, a, policy),
        Command::Eval(a) => cmd_eval(cli, a, policy),
        Command::Bench(a) => cmd_bench(cli, a, policy),
    }
}

/// Config from preset, file, `--set` and the given extra assignments.
fn resolve(cli: &Cli, extra: &[String]) -> Result<RunConfig> {
    let mut overrides = cli.overrides.clone();
    overrides.extend_from_slice(extra);
    let mut cfg = config::load(cli.preset.as_deref(), cli.config.as_deref(), &overrides)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let cfg = cfg.synced();
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating run directory {}", dir.display()))
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("{what} {} does not exist", path.display())).into());
    }
    Ok(())
}

fn cmd_generate(cli: &Cli, a: &GenerateArgs, policy: ExecPolicy) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(p) = &a.problem {
        p.parse::<Problem>().map_err(|e| UsageError(e.to_string()))?;
        extra.push(format!("problem={p}"));
    }
    if let Some(n) = a.n {
        extra.push(format!("n_samples={n}"));
        if a.n_test.is_none() {
            extra.push(format!("n_test={}", (n / 6).max(usize::from(n > 1))));
        }
    }
    for (k, v) in [("resolution", a.res), ("n_test", a.n_test), ("frames", a.frames)] {
        if let Some(v) = v {
            extra.push(format!("{k}={v}"));
        }
    }
    let cfg = resolve(cli, &extra)?;
    prepare_out(&cli.out)?;
    write(cli.out.join(CONFIG_FILE), &cfg.render())?;
    log::info!(
        "generating {} {} samples at resolution {}",
        cfg.data.n_samples,
        cfg.data.problem,
        cfg.data.resolution
    );
    let bundle = generate(&cfg.data, policy)?;
    save_bundle(&bundle, &cli.out.join(DATASET_FILE))?;
    let provenance = serde_json::to_string_pretty(&cfg.data.provenance())?;
    write(cli.out.join(PROVENANCE_FILE), &provenance)?;
    println!(
        "wrote {} samples ({} test) to {}",
        bundle.len(),
        bundle.test.len(),
        cli.out.join(DATASET_FILE).display()
    );
    Ok(())
}

fn check_data(model: &IpotConfig, data: &DatasetBundle) -> Result<()> {
    if data.d_coord != model.d_coord() || data.d_in != model.d_in || data.d_out != model.d_out {
        return Err(UsageError(format!(
            "dataset has d_coord {}, d_in {}, d_out {}; model expects {}, {}, {}",
            data.d_coord,
            data.d_in,
            data.d_out,
            model.d_coord(),
            model.d_in,
            model.d_out
        ))
        .into());
    }
    Ok(())
}

fn config_mismatch(stored: &IpotConfig, requested: &IpotConfig) -> Result<()> {
    let fields = stored.diff(requested);
    if fields.is_empty() {
        return Ok(());
    }
    Err(UsageError(format!(
        "checkpoint and configuration disagree on: {}",
        fields.join(", ")
    ))
    .into())
}

fn cmd_train(cli: &Cli, a: &TrainArgs, policy: ExecPolicy) -> Result<()> {
    let extra: Vec<String> = a.epochs.iter().map(|e| format!("epochs={e}")).collect();
    let cfg = resolve(cli, &extra)?;
    require_file(&a.data, "dataset")?;
    if let Some(r) = &a.resume {
        require_file(r, "checkpoint")?;
    }
    let data = load_bundle(&a.data)?;
    check_data(&cfg.model, &data)?;
    let (model, state) = match &a.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            config_mismatch(&ckpt.model.config, &cfg.model)?;
            let state = TrainState::from_extras(&ckpt.extras, &ckpt.model, &cfg.train)?;
            log::info!("resuming at epoch {}", state.epoch);
            (ckpt.model, Some(state))
        }
        None => (Ipot::init(cfg.model.clone(), cfg.seed)?, None),
    };
    prepare_out(&cli.out)?;
    write(cli.out.join(CONFIG_FILE), &cfg.render())?;
    let records_path = cli.out.join(RECORDS_FILE);
    if state.is_none() && records_path.exists() {
        fs::remove_file(&records_path).with_context(|| format!("replacing {}", records_path.display()))?;
    }
    let ckpt_path = cli.out.join(CHECKPOINT_FILE);
    let mut on_epoch = |r: &TrainRecord, m: &Ipot, s: &TrainState| -> ipot::Result<()> {
        log::info!(
            "epoch {} train {:.5} test {:.5} lr {:.2e} ({:.1}s)",
            r.epoch,
            r.train_loss,
            r.test_rel_l2,
            r.lr,
            r.wall_seconds
        );
        append_records_csv(&records_path, std::slice::from_ref(r))?;
        save_checkpoint(&ckpt_path, m, &s.to_extras(m))
    };
    let outcome = train_with(model, &data, &cfg.train, state, policy, &mut on_epoch)?;
    save_checkpoint(&ckpt_path, &outcome.model, &outcome.state.to_extras(&outcome.model))?;
    if let Some(reason) = outcome.diverged {
        return Err(ipot::Error::Numeric(format!(
            "training diverged at epoch {}: {reason}; last good parameters saved",
            outcome.state.epoch
        ))
        .into());
    }
    match outcome.records.last() {
        Some(r) => println!("epoch {} train {:.6} test {:.6}", r.epoch, r.train_loss, r.test_rel_l2),
        None => println!("nothing to do: checkpoint already at epoch {}", outcome.state.epoch),
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs, policy: ExecPolicy) -> Result<()> {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.data, "dataset")?;
    if let Some(r) = a.subsample {
        if !(r > 0.0 && r <= 1.0) {
            return Err(UsageError(format!("--subsample must lie in (0, 1], got {r}")).into());
        }
    }
    let mask = match a.mask.as_deref() {
        None => None,
        Some("half") => Some(Mask::half()),
        Some("other-half") => Some(Mask::half().complement()),
        Some(other) => return Err(UsageError(format!("unknown mask '{other}'; choose half or other-half")).into()),
    };
    if a.regrid == Some(0) || a.regrid == Some(1) {
        return Err(UsageError("--regrid needs at least 2 points per dimension".into()).into());
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let model = ckpt.model;
    if cli.preset.is_some() || cli.config.is_some() || !cli.overrides.is_empty() {
        let cfg = resolve(cli, &[])?;
        config_mismatch(&model.config, &cfg.model)?;
    }
    let data = load_bundle(&a.data)?;
    check_data(&model.config, &data)?;
    let indices = match a.split.as_str() {
        "test" => data.test_indices(),
        "train" => data.train_indices(),
        "all" => (0..data.len()).collect(),
        other => return Err(UsageError(format!("unknown split '{other}'; choose test, train or all")).into()),
    };
    let seed = cli.seed.unwrap_or(0);
    let transform = |i: usize, f: &ipot::data::DiscretizedFunction| -> ipot::Result<ipot::data::DiscretizedFunction> {
        let mut f = f.clone();
        if let Some(r) = a.subsample {
            f = subsample(&f, r, seed.wrapping_add(i as u64))?;
        }
        if let Some(m) = mask {
            f = mask_region(&f, |x| m.contains(x))?;
        }
        if let Some(r) = a.regrid {
            f = regrid(&f, r)?;
        }
        Ok(f)
    };
    let report = evaluate_with(&model, &data, &indices, policy, &transform)?;
    let metrics = json!({
        "split": a.split,
        "rel_l2": report.mean,
        "per_sample": report.per_sample,
        "per_frame": report.per_frame,
        "transforms": {
            "subsample": a.subsample,
            "mask": a.mask,
            "regrid": a.regrid,
        },
    });
    prepare_out(&cli.out)?;
    write(cli.out.join(METRICS_FILE), &serde_json::to_string_pretty(&metrics)?)?;
    println!("rel_l2 {:.6} over {} samples", report.mean, indices.len());
    Ok(())
}

fn cmd_bench(cli: &Cli, a: &BenchArgs, policy: ExecPolicy) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(nz) = a.nz {
        extra.push(format!("n_z={nz}"));
    }
    let cfg = resolve(cli, &extra)?;
    if a.sizes.is_empty() || a.sizes.windows(2).any(|w| w[0] > w[1]) || a.sizes.contains(&0) {
        return Err(UsageError("--sizes must be positive and ascending".into()).into());
    }
    if a.repeats == 0 {
        return Err(UsageError("--repeats must be at least 1".into()).into());
    }
    if let Some(p) = &a.ablation_data {
        require_file(p, "dataset")?;
    }
    prepare_out(&cli.out)?;
    write(cli.out.join(CONFIG_FILE), &cfg.render())?;
    let opts = BenchOptions {
        repeats: a.repeats,
        warmups: a.warmups,
        policy,
        seed: cfg.seed,
        quadratic_baseline: a.quadratic_baseline,
        quadratic_cap: a.quadratic_cap,
        ..Default::default()
    };
    let model = Ipot::init(cfg.model.clone(), cfg.seed)?;
    let report = bench_scaling(&model, &a.sizes, &opts)?;
    write(cli.out.join(BENCH_CSV), &report.csv())?;
    write(cli.out.join(BENCH_JSON), &serde_json::to_string_pretty(&report.summary_json())?)?;
    println!(
        "linear fit: slope {:.3e} s/point, R² {:.4}",
        report.fit.slope, report.fit.r2
    );
    for (n, s) in &report.speedups {
        println!("n = {n}: quadratic baseline is {s:.1}x slower");
    }
    if let Some(path) = &a.ablation_data {
        let data = load_bundle(path)?;
        check_data(&cfg.model, &data)?;
        let train_cfg = cfg.train.clone();
        let mut train = |m: Ipot| -> ipot::Result<Ipot> {
            log::info!("training n_z = {}", m.config.n_z);
            let out = train_with(m, &data, &train_cfg, None, policy, &mut |_, _, _| Ok(()))?;
            match out.diverged {
                Some(reason) => Err(ipot::Error::Numeric(reason)),
                None => Ok(out.model),
            }
        };
        let rows = bench_inducing_points(&cfg.model, &a.nz_list, &data, &opts, &mut train)?;
        let mut csv = String::from("nz,test_rel_l2,time_s,params\n");
        for r in &rows {
            csv.push_str(&format!("{},{},{},{}\n", r.nz, r.test_rel_l2, r.time_s, r.params));
        }
        write(cli.out.join(ABLATION_CSV), &csv)?;
        for r in &rows {
            println!("n_z = {}: rel_l2 {:.5}, {:.4}s", r.nz, r.test_rel_l2, r.time_s);
        }
    }
    Ok(())
}
