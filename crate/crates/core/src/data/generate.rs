//! Seeded synthetic datasets. Sample `i` is drawn from seed `base + i`, so
//! a bundle is identical however many workers produce it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::burgers::{burgers_solve, BurgersOptions};
use super::darcy::{darcy_coefficient, darcy_solve};
use super::grf::{grf_sample_raw, GrfSpec};
use super::heat::{heat_rollout, random_band_limited};
use super::{closed_grid_2d, periodic_grid_1d, periodic_grid_2d, stack_frames};
use super::{DatasetBundle, DiscretizedFunction, Provenance, Sample};
use crate::error::{Error, Result};
use crate::parallel::ExecPolicy;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Burgers,
    Darcy,
    Heat,
}

impl Problem {
    pub const CHOICES: &'static [&'static str] = &["burgers", "darcy", "heat"];
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Burgers => "burgers",
            Problem::Darcy => "darcy",
            Problem::Heat => "heat",
        })
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "burgers" => Ok(Problem::Burgers),
            "darcy" => Ok(Problem::Darcy),
            "heat" => Ok(Problem::Heat),
            other => Err(Error::Usage(format!(
                "unknown problem '{other}'; choose one of {}",
                Problem::CHOICES.join(", ")
            ))),
        }
    }
}

/// Everything needed to regenerate a bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub problem: Problem,
    pub n_samples: usize,
    pub n_test: usize,
    pub resolution: usize,
    pub seed: u64,
    /// Viscosity (Burgers) or diffusivity (heat).
    pub nu: f64,
    /// Burgers final time.
    pub t_end: f64,
    /// Heat frame spacing.
    pub dt: f64,
    /// Heat frames per trajectory.
    pub frames: usize,
    /// Heat initial-condition band limit.
    pub modes: usize,
    pub darcy_lo: f64,
    pub darcy_hi: f64,
}

impl ProblemSpec {
    /// Defaults per problem; one sample in six goes to the test split.
    pub fn new(problem: Problem, n_samples: usize, resolution: usize, seed: u64) -> Self {
        let nu = match problem {
            Problem::Burgers => 0.1,
            _ => 0.01,
        };
        Self {
            problem,
            n_samples,
            n_test: (n_samples / 6).max(usize::from(n_samples > 1)),
            resolution,
            seed,
            nu,
            t_end: 1.0,
            dt: 0.1,
            frames: 10,
            modes: 2,
            darcy_lo: 3.0,
            darcy_hi: 12.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Usage("n_samples must be positive".into()));
        }
        if self.n_test >= self.n_samples && self.n_samples > 1 {
            return Err(Error::Usage(format!(
                "test split of {} leaves no training samples out of {}",
                self.n_test, self.n_samples
            )));
        }
        let min_res = match self.problem {
            Problem::Burgers => 8,
            Problem::Darcy => 4,
            Problem::Heat => 2 * self.modes + 1,
        };
        if self.resolution < min_res {
            return Err(Error::Usage(format!(
                "resolution {} is below the minimum {min_res} for {}",
                self.resolution, self.problem
            )));
        }
        if self.problem == Problem::Heat && self.frames == 0 {
            return Err(Error::Usage("heat trajectories need at least one frame".into()));
        }
        Ok(())
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            generator: format!("ipot::data::generate/{}", self.problem),
            version: env!("CARGO_PKG_VERSION").to_string(),
            base_seed: self.seed,
            spec: serde_json::to_value(self).expect("serialisable"),
        }
    }
}

fn column(v: Vec<f64>) -> Result<Tensor> {
    let n = v.len();
    Tensor::matrix(n, 1, v)
}

fn one_sample(spec: &ProblemSpec, seed: u64) -> Result<Sample> {
    let n = spec.resolution;
    match spec.problem {
        Problem::Burgers => {
            let (u0, _) = grf_sample_raw(&GrfSpec::burgers(n), seed)?;
            let report = burgers_solve(&u0, spec.nu, spec.t_end, &BurgersOptions::default())?;
            let x = periodic_grid_1d(n);
            Ok(Sample {
                input: DiscretizedFunction::new(x.clone(), column(u0)?)?,
                target: DiscretizedFunction::new(x, column(report.u)?)?,
            })
        }
        Problem::Darcy => {
            let a = darcy_coefficient(&GrfSpec::darcy(n), seed, spec.darcy_lo, spec.darcy_hi)?;
            let sol = darcy_solve(&a, &vec![1.0; n * n], n)?;
            let x = closed_grid_2d(n);
            Ok(Sample {
                input: DiscretizedFunction::new(x.clone(), column(a)?)?,
                target: DiscretizedFunction::new(x, column(sol.u)?)?,
            })
        }
        Problem::Heat => {
            let u0 = random_band_limited(n, spec.modes, seed)?;
            let frames = heat_rollout(&u0, n, spec.nu, spec.dt, spec.frames)?;
            let frames = frames.into_iter().map(column).collect::<Result<Vec<_>>>()?;
            let x = periodic_grid_2d(n);
            Ok(Sample {
                input: DiscretizedFunction::new(x.clone(), column(u0)?)?,
                target: DiscretizedFunction::new(x, stack_frames(&frames)?)?,
            })
        }
    }
}

/// Generates a bundle; the last `n_test` samples form the test split.
pub fn generate(spec: &ProblemSpec, policy: ExecPolicy) -> Result<DatasetBundle> {
    spec.validate()?;
    let samples = policy
        .map_range(spec.n_samples, |i| one_sample(spec, spec.seed.wrapping_add(i as u64)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (d_coord, frames) = match spec.problem {
        Problem::Burgers => (1, 0),
        Problem::Darcy => (2, 0),
        Problem::Heat => (2, spec.frames),
    };
    Ok(DatasetBundle {
        samples,
        d_coord,
        d_in: 1,
        d_out: 1,
        frames,
        test: (spec.n_samples - spec.n_test..spec.n_samples).collect(),
    })
}
