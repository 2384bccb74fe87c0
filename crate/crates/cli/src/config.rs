//! JSON experiment configuration.
//!
//! A config file is one JSON object. Top-level keys it sets replace the
//! subcommand's defaults; keys it omits keep them. Sections fill missing
//! fields from their own defaults.

use std::sync::Arc;

use maxreg_core::cauchy::VecJson;
use maxreg_core::maxreg::SweepTarget;
use maxreg_core::operator::OperatorJson;
use maxreg_core::rng::cell_seed;
use maxreg_core::timegrid::{Spacing, TimeGridSpec};
use maxreg_core::{random_accretive, GridFunction, Operator, TimeGrid};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{CliError, Command};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorSpec {
    Inline(OperatorJson),
    RandomAccretive {
        dim: usize,
        margin: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// `count` matrices cycling through `dims`, matrix `i` drawn from
    /// `cell_seed(seed, i, 0)`.
    RandomBattery {
        dims: Vec<usize>,
        count: usize,
        margin: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    List(Vec<OperatorSpec>),
}

impl OperatorSpec {
    pub fn inline(rows: &[&[f64]]) -> Self {
        let op = Operator::from_real(rows).expect("static matrix");
        OperatorSpec::Inline(OperatorJson::from(&op))
    }

    pub fn build(&self) -> Result<Vec<Operator>, CliError> {
        let missing = || CliError::Config("randomized operator spec needs a seed".into());
        match self {
            OperatorSpec::Inline(js) => Ok(vec![Operator::try_from(js.clone())?]),
            OperatorSpec::RandomAccretive { dim, margin, seed } => Ok(vec![random_accretive(
                *dim,
                *margin,
                seed.ok_or_else(missing)?,
            )?]),
            OperatorSpec::RandomBattery {
                dims,
                count,
                margin,
                seed,
            } => {
                let seed = seed.ok_or_else(missing)?;
                if dims.is_empty() {
                    return Err(CliError::Config(
                        "random_battery needs at least one dim".into(),
                    ));
                }
                (0..*count)
                    .map(|i| {
                        let d = dims[i % dims.len()];
                        Ok(random_accretive(d, *margin, cell_seed(seed, i as u64, 0))?)
                    })
                    .collect()
            }
            OperatorSpec::List(items) => {
                let mut out = Vec::new();
                for s in items {
                    out.extend(s.build()?);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingSpec {
    Zero,
    Constant {
        w: VecJson,
    },
    /// `w` on panels whose node lies in `[lo, hi]`.
    Indicator {
        lo: f64,
        hi: f64,
        w: VecJson,
    },
}

impl ForcingSpec {
    pub fn build(&self, grid: &Arc<TimeGrid>, dim: usize) -> Result<GridFunction, CliError> {
        let vec = |w: &VecJson| -> Result<_, CliError> {
            let v = w.to_cvec()?;
            if v.len() != dim {
                return Err(CliError::Config(format!(
                    "forcing vector has length {}, operator dimension is {dim}",
                    v.len()
                )));
            }
            Ok(v)
        };
        Ok(match self {
            ForcingSpec::Zero => GridFunction::zeros(grid.clone(), dim),
            ForcingSpec::Constant { w } => GridFunction::constant(grid.clone(), &vec(w)?),
            ForcingSpec::Indicator { lo, hi, w } => {
                GridFunction::indicator(grid.clone(), *lo, *hi, &vec(w)?)
            }
        })
    }
}

fn real_vec(xs: &[f64]) -> VecJson {
    VecJson {
        re: xs.to_vec(),
        im: vec![0.0; xs.len()],
    }
}

fn log_grid(t_min: f64, t_max: f64, n: usize) -> TimeGridSpec {
    TimeGridSpec {
        t_min,
        t_max,
        n,
        spacing: Spacing::LogUniform,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub semigroup_law: f64,
    pub kato_relative: f64,
    pub hermitian_ratio: f64,
    pub stabilization_ratio: f64,
    pub growth_match: f64,
    pub decay_slack: f64,
    pub reconstruction_scalar: f64,
    pub reconstruction_matrix: f64,
    pub trace_error: f64,
    pub weak_residual: f64,
    pub trace_round_trip: f64,
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            semigroup_law: 1e-9,
            kato_relative: 1e-8,
            hermitian_ratio: 1e-9,
            stabilization_ratio: 1.05,
            growth_match: 0.05,
            decay_slack: 0.05,
            reconstruction_scalar: 1e-3,
            reconstruction_matrix: 1e-2,
            trace_error: 1e-5,
            weak_residual: 1e-2,
            trace_round_trip: 1e-5,
            identity: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemigroupSection {
    /// Random `(z1, z2)` pairs per operator for the semigroup law.
    pub law_pairs: usize,
    /// Random `h` per operator for the quadratic estimate.
    pub qe_vectors: usize,
}

impl Default for SemigroupSection {
    fn default() -> Self {
        Self {
            law_pairs: 100,
            qe_vectors: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub target: SweepTarget,
    /// Grids ordered by decreasing `t_min` and increasing `N`.
    pub lattice: Vec<TimeGridSpec>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            target: SweepTarget::Mplus,
            lattice: vec![
                log_grid(1e-3, 1e4, 256),
                log_grid(1e-4, 1e4, 512),
                log_grid(1e-5, 1e4, 1024),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleSection {
    pub u: VecJson,
    pub decades: u32,
    /// `t_min` at and below which increments are compared with the claim.
    pub compare_below: f64,
}

impl Default for CounterexampleSection {
    fn default() -> Self {
        Self {
            u: real_vec(&[1.0]),
            decades: 8,
            compare_below: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CotlarSection {
    /// `u = 2^k / spectral radius` for `|k| <= half_width`.
    pub half_width: i32,
    /// Audit grid, in units of `1 / spectral radius`.
    pub grid: TimeGridSpec,
    /// Reconstruction grid, absolute.
    pub reconstruction_grid: TimeGridSpec,
    pub reconstruction_per_decade: usize,
}

impl Default for CotlarSection {
    fn default() -> Self {
        Self {
            half_width: 12,
            grid: log_grid(1e-6, 1e6, 384),
            reconstruction_grid: log_grid(1e-3, 1e3, 192),
            reconstruction_per_decade: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CauchySection {
    pub u0: VecJson,
    pub f: ForcingSpec,
    /// Trace for the recovery round trip.
    pub h: VecJson,
    pub beta: f64,
}

impl Default for CauchySection {
    fn default() -> Self {
        Self {
            u0: real_vec(&[1.0]),
            f: ForcingSpec::Constant {
                w: real_vec(&[1.0]),
            },
            h: real_vec(&[0.5]),
            beta: -0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub operator: OperatorSpec,
    pub grid: TimeGridSpec,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Seed for sampled vectors and pairs.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Samples per operator for the Kato audit.
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub semigroup: SemigroupSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub counterexample: CounterexampleSection,
    #[serde(default)]
    pub cotlar: CotlarSection,
    #[serde(default)]
    pub cauchy: CauchySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn defaults(cmd: Command) -> Self {
        let base = Self {
            operator: OperatorSpec::inline(&[&[1.0]]),
            grid: log_grid(1e-4, 1e4, 512),
            betas: vec![],
            alphas: vec![],
            seed: Some(20240601),
            samples: 32,
            tolerances: Tolerances::default(),
            semigroup: SemigroupSection::default(),
            sweep: SweepSection::default(),
            counterexample: CounterexampleSection::default(),
            cotlar: CotlarSection::default(),
            cauchy: CauchySection::default(),
            output_dir: None,
        };
        let family = OperatorSpec::List(
            (0..5)
                .map(|k| OperatorSpec::RandomAccretive {
                    dim: 1 + k % 3,
                    margin: 0.1,
                    seed: Some(1000 + k as u64),
                })
                .collect(),
        );
        match cmd {
            Command::Semigroup => Self {
                operator: OperatorSpec::RandomAccretive {
                    dim: 3,
                    margin: 0.1,
                    seed: Some(1),
                },
                ..base
            },
            Command::Kato => Self {
                operator: OperatorSpec::RandomBattery {
                    dims: vec![2, 3, 4],
                    count: 1000,
                    margin: 0.1,
                    seed: Some(7),
                },
                alphas: vec![0.1, 0.2, 0.3, 0.4],
                ..base
            },
            Command::Sweep => Self {
                operator: family,
                betas: vec![-1.0, -0.5, 0.5, 0.9],
                ..base
            },
            Command::Counterexample => Self {
                betas: vec![1.0, 0.9],
                ..base
            },
            Command::Cotlar => Self {
                operator: OperatorSpec::List(vec![
                    OperatorSpec::inline(&[&[1.0]]),
                    OperatorSpec::RandomAccretive {
                        dim: 2,
                        margin: 0.1,
                        seed: Some(1001),
                    },
                    OperatorSpec::RandomAccretive {
                        dim: 3,
                        margin: 0.1,
                        seed: Some(1002),
                    },
                ]),
                alphas: vec![0.1, 0.25, 0.4],
                ..base
            },
            Command::Cauchy => Self {
                grid: log_grid(1e-6, 20.0, 400),
                ..base
            },
        }
    }

    /// Parses `text` over the defaults of `cmd` and validates it.
    pub fn parse(cmd: Command, text: &str) -> Result<Self, CliError> {
        let user: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        let Value::Object(user) = user else {
            return Err(CliError::Config("config must be a JSON object".into()));
        };
        let mut merged = serde_json::to_value(Self::defaults(cmd)).expect("plain data");
        let obj = merged
            .as_object_mut()
            .expect("struct serializes to an object");
        for (k, v) in user {
            obj.insert(k, v);
        }
        let cfg: Self =
            serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate(cmd)?;
        Ok(cfg)
    }

    pub fn validate(&self, cmd: Command) -> Result<(), CliError> {
        if self.seed.is_none() && matches!(cmd, Command::Semigroup | Command::Kato) {
            return Err(CliError::Config(
                "seed is required for sampled vectors".into(),
            ));
        }
        if matches!(cmd, Command::Kato | Command::Cotlar) {
            if self.alphas.is_empty() {
                return Err(CliError::Config("alphas must not be empty".into()));
            }
            if let Some(a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a < 0.5)) {
                return Err(CliError::Config(format!("alpha = {a} is outside (0, 1/2)")));
            }
        }
        if matches!(cmd, Command::Sweep | Command::Counterexample) && self.betas.is_empty() {
            return Err(CliError::Config("betas must not be empty".into()));
        }
        if cmd == Command::Sweep {
            if let Some(b) = self.betas.iter().find(|&&b| !(b < 1.0)) {
                return Err(CliError::Config(format!("sweep needs beta < 1, got {b}")));
            }
            if self.sweep.lattice.len() < 2 {
                return Err(CliError::Config(
                    "sweep lattice needs at least two grids".into(),
                ));
            }
        }
        if cmd == Command::Cauchy && !(self.cauchy.beta < 1.0) {
            return Err(CliError::Config("cauchy beta must be below 1".into()));
        }
        // operators and grids must build; seeds are checked here
        self.operator.build()?;
        self.grid.build()?;
        Ok(())
    }
}

pub fn build_grid(spec: &TimeGridSpec) -> Result<Arc<TimeGrid>, CliError> {
    Ok(Arc::new(spec.build()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_level_keys_replace_defaults() {
        let cfg =
            ExperimentConfig::parse(Command::Kato, r#"{"alphas": [0.2], "samples": 4}"#).unwrap();
        assert_eq!(cfg.alphas, vec![0.2]);
        assert_eq!(cfg.samples, 4);
        assert_eq!(
            cfg.operator,
            ExperimentConfig::defaults(Command::Kato).operator
        );
    }

    #[test]
    fn section_fields_default_individually() {
        let cfg = ExperimentConfig::parse(
            Command::Counterexample,
            r#"{"counterexample": {"decades": 5}}"#,
        )
        .unwrap();
        assert_eq!(cfg.counterexample.decades, 5);
        assert_eq!(cfg.counterexample.compare_below, 1e-4);
    }

    #[test]
    fn battery_is_seeded_per_cell() {
        let spec = OperatorSpec::RandomBattery {
            dims: vec![2, 3],
            count: 4,
            margin: 0.1,
            seed: Some(9),
        };
        let a = spec.build().unwrap();
        assert_eq!(
            a.iter().map(|o| o.dim()).collect::<Vec<_>>(),
            vec![2, 3, 2, 3]
        );
        assert_eq!(a, spec.build().unwrap());
        let unseeded = OperatorSpec::RandomBattery {
            dims: vec![2],
            count: 1,
            margin: 0.1,
            seed: None,
        };
        assert!(matches!(unseeded.build(), Err(CliError::Config(_))));
    }

    #[test]
    fn sweep_rejects_beta_one() {
        let e = ExperimentConfig::parse(Command::Sweep, r#"{"betas": [1.0]}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
