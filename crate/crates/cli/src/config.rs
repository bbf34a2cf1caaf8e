//! Flat `key = value` run configuration.
//!
//! Blank lines, `#` comments and `[section]` headers are ignored; sections
//! only group keys for the reader. Later assignments win.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use ipot::data::{Problem, ProblemSpec};
use ipot::encoding::FourierSpec;
use ipot::model::IpotConfig;
use ipot::training::TrainConfig;

use crate::UsageError;

pub const PRESETS: &[(&str, &str)] = &[
    ("burgers", include_str!("../presets/burgers.conf")),
    ("darcy", include_str!("../presets/darcy.conf")),
    ("heat-rollout", include_str!("../presets/heat-rollout.conf")),
    ("smoke", include_str!("../presets/smoke.conf")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            UsageError(format!("unknown preset '{name}'; choose one of {}", names.join(", "))).into()
        })
}

/// One assignment and where it came from, for error messages.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub key: String,
    pub value: String,
    pub origin: String,
}

pub fn parse_assignments(text: &str, source: &str) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(UsageError(format!("{source}:{}: expected `key = value`, got `{line}`", i + 1)).into());
        };
        out.push(Assignment {
            key: k.trim().to_string(),
            value: v.trim().to_string(),
            origin: format!("{source}:{}", i + 1),
        });
    }
    Ok(out)
}

/// Parses a command-line `KEY=VALUE` override.
pub fn parse_override(s: &str) -> Result<Assignment> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got `{s}`")))?;
    Ok(Assignment {
        key: k.trim().to_string(),
        value: v.trim().to_string(),
        origin: "--set".into(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: ProblemSpec,
    pub model: IpotConfig,
    pub train: TrainConfig,
}

fn coord_dims(problem: Problem) -> usize {
    match problem {
        Problem::Burgers => 1,
        Problem::Darcy | Problem::Heat => 2,
    }
}

fn parse<T: FromStr>(a: &Assignment) -> Result<T> {
    a.value.parse().map_err(|_| {
        UsageError(format!(
            "{}: cannot parse `{}` as a value for {}",
            a.origin, a.value, a.key
        ))
        .into()
    })
}

fn parse_list<T: FromStr>(a: &Assignment) -> Result<Vec<T>> {
    a.value
        .split(',')
        .map(|p| {
            p.trim().parse().map_err(|_| {
                UsageError(format!("{}: cannot parse `{}` in the list for {}", a.origin, p.trim(), a.key)).into()
            })
        })
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn defaults(problem: Problem) -> Self {
        let model = match problem {
            Problem::Burgers => IpotConfig::burgers(),
            Problem::Darcy => IpotConfig::darcy(),
            Problem::Heat => IpotConfig::heat(),
        };
        let resolution = match problem {
            Problem::Burgers => 1024,
            Problem::Darcy | Problem::Heat => 32,
        };
        Self {
            seed: 0,
            data: ProblemSpec::new(problem, 240, resolution, 0),
            model,
            train: TrainConfig::default(),
        }
    }

    /// Defaults for the last `problem` assigned (Darcy if none), then every
    /// other assignment in order.
    pub fn from_assignments(assignments: &[Assignment]) -> Result<Self> {
        let problem = match assignments.iter().rev().find(|a| a.key == "problem") {
            Some(a) => Problem::from_str(&a.value).map_err(|e| UsageError(format!("{}: {e}", a.origin)))?,
            None => Problem::Darcy,
        };
        let mut cfg = Self::defaults(problem);
        for a in assignments.iter().filter(|a| a.key != "problem") {
            cfg.set(a)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, a: &Assignment) -> Result<()> {
        let (d, m, t) = (&mut self.data, &mut self.model, &mut self.train);
        match a.key.as_str() {
            "seed" => self.seed = parse(a)?,
            "problem" => {
                let p: Problem = Problem::from_str(&a.value).map_err(|e| UsageError(e.to_string()))?;
                if p != d.problem {
                    return Err(UsageError(format!("{}: problem cannot change after defaults are chosen", a.origin)).into());
                }
            }
            "n_samples" => d.n_samples = parse(a)?,
            "n_test" => d.n_test = parse(a)?,
            "resolution" => d.resolution = parse(a)?,
            "nu" => d.nu = parse(a)?,
            "t_end" => d.t_end = parse(a)?,
            "dt" => d.dt = parse(a)?,
            "frames" => d.frames = parse(a)?,
            "modes" => d.modes = parse(a)?,
            "darcy_lo" => d.darcy_lo = parse(a)?,
            "darcy_hi" => d.darcy_hi = parse(a)?,
            "n_z" => m.n_z = parse(a)?,
            "d_z" => m.d_z = parse(a)?,
            "layers" => m.layers = parse(a)?,
            "heads_enc" => m.heads_enc = parse(a)?,
            "heads_proc" => m.heads_proc = parse(a)?,
            "heads_dec" => m.heads_dec = parse(a)?,
            "bands" => m.encoding.bands = parse_list(a)?,
            "max_freq" => m.encoding.max_freq = parse_list(a)?,
            "include_raw" => m.encoding.include_raw = parse(a)?,
            "batch_size" => t.batch_size = parse(a)?,
            "epochs" => t.epochs = parse(a)?,
            "lr0" => t.lr0 = parse(a)?,
            "decay_factor" => t.decay_factor = parse(a)?,
            "decay_every" => t.decay_every = parse(a)?,
            "weight_decay" => t.weight_decay = parse(a)?,
            "standardize_inputs" => t.standardize_inputs = parse(a)?,
            "standardize_outputs" => t.standardize_outputs = parse(a)?,
            other => return Err(UsageError(format!("{}: unknown key `{other}`", a.origin)).into()),
        }
        Ok(())
    }

    /// Seeds used by each stage; all follow the single `seed` key.
    pub fn synced(&self) -> Self {
        let mut c = self.clone();
        c.data.seed = self.seed;
        c.train.seed = self.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: ipot::Error| UsageError(e.to_string());
        self.data.validate().map_err(wrap)?;
        self.model.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        let dims = coord_dims(self.data.problem);
        if self.model.encoding.d_coord() != dims {
            return Err(UsageError(format!(
                "{} has {dims} coordinate dimension(s) but the encoding lists {} bands",
                self.data.problem,
                self.model.encoding.d_coord()
            ))
            .into());
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let (d, m, t) = (&self.data, &self.model, &self.train);
        let FourierSpec { bands, max_freq, include_raw } = &m.encoding;
        let mut s = String::from("# Effective configuration of this run.\n\n");
        let _ = writeln!(s, "seed = {}\n", self.seed);
        let _ = writeln!(s, "[data]");
        let _ = writeln!(s, "problem = {}", d.problem);
        for (k, v) in [
            ("n_samples", d.n_samples.to_string()),
            ("n_test", d.n_test.to_string()),
            ("resolution", d.resolution.to_string()),
            ("nu", d.nu.to_string()),
            ("t_end", d.t_end.to_string()),
            ("dt", d.dt.to_string()),
            ("frames", d.frames.to_string()),
            ("modes", d.modes.to_string()),
            ("darcy_lo", d.darcy_lo.to_string()),
            ("darcy_hi", d.darcy_hi.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[model]");
        for (k, v) in [
            ("n_z", m.n_z.to_string()),
            ("d_z", m.d_z.to_string()),
            ("layers", m.layers.to_string()),
            ("heads_enc", m.heads_enc.to_string()),
            ("heads_proc", m.heads_proc.to_string()),
            ("heads_dec", m.heads_dec.to_string()),
            ("bands", join(bands)),
            ("max_freq", join(max_freq)),
            ("include_raw", include_raw.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[train]");
        for (k, v) in [
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("lr0", t.lr0.to_string()),
            ("decay_factor", t.decay_factor.to_string()),
            ("decay_every", t.decay_every.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("standardize_inputs", t.standardize_inputs.to_string()),
            ("standardize_outputs", t.standardize_outputs.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Collects assignments from a preset, a file and overrides, in that order.
pub fn load(preset: Option<&str>, file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut all = Vec::new();
    if let Some(name) = preset {
        all.extend(parse_assignments(preset_text(name)?, &format!("preset {name}"))?);
    }
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        all.extend(parse_assignments(&text, &path.display().to_string())?);
    }
    for o in overrides {
        all.push(parse_override(o)?);
    }
    RunConfig::from_assignments(&all)
}
