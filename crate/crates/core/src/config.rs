//! TOML configuration documents.
//!
//! A document has a `[process]` table describing a [`ProcessSpec`] and an
//! optional `[run]` table of command parameters:
//!
//! ```toml
//! [process]
//! horizon = 1.0
//! delta = 0.0
//! truncate_states = 51          # optional: restrict a lattice process to 0..n
//! space = { kind = "lattice", dimension = 1, step = 1.0 }
//! drift = { kind = "zero", dimension = 1 }
//! kernel = { kind = "atomic", atoms = [{ jump = [1.0], rate = "2" }] }
//! initial = { kind = "point", state = [0.0] }
//!
//! [run]
//! n_paths = 200000
//! seed = 7
//! ```
//!
//! Space kinds: `finite` (`n_states`, optional `points`), `lattice`
//! (`dimension`, `step`), `continuous` (`lower`, `upper`).
//! Drift kinds: `zero` (`dimension`), `constant` (`value`), `expression`
//! (`components`), `compensator`.
//! Kernel kinds: `rate_matrix` (`rates`), `rate_expressions` (`rates` as
//! strings in `t`, `""` for zero), `atomic` (`atoms`), `density` (`density`,
//! `lower`, `upper`), `levy` (`atoms` of `jump`/`weight`, optional `density`),
//! `tilted` (`base`, `tilt`).
//! Initial kinds: `point` (`state`), `atoms` (`state`/`weight` list),
//! `probabilities` (`p`, finite spaces), `density` (`density`, `lower`, `upper`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::{
    Atom, DriftField, Embedding, InitialLaw, JumpDensity, JumpKernel, LevyAtom, LevyDensity, LevyMeasure,
    ProcessSpec, RateMatrix, RateSource, StateSpace, TruncationDelta,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceDoc {
    Finite {
        n_states: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<Vec<f64>>>,
    },
    Lattice { dimension: usize, step: f64 },
    Continuous { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftDoc {
    Zero { dimension: usize },
    Constant { value: Vec<f64> },
    Expression { components: Vec<Expr> },
    /// `∫⌊ξ⌋^δ K(dξ)` of the process kernel.
    Compensator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDoc {
    pub jump: Vec<f64>,
    pub rate: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyAtomDoc {
    pub jump: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyDensityDoc {
    pub density: Expr,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub reflected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelDoc {
    RateMatrix {
        rates: Vec<Vec<f64>>,
    },
    RateExpressions {
        rates: Vec<Vec<String>>,
    },
    Atomic {
        atoms: Vec<AtomDoc>,
    },
    Density {
        density: Expr,
        lower: f64,
        upper: f64,
    },
    Levy {
        #[serde(default)]
        atoms: Vec<LevyAtomDoc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        density: Option<LevyDensityDoc>,
    },
    Tilted {
        base: Box<KernelDoc>,
        tilt: Expr,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedState {
    pub state: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDoc {
    Point { state: Vec<f64> },
    Atoms { atoms: Vec<WeightedState> },
    Probabilities { p: Vec<f64> },
    Density { density: Expr, lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessDocument {
    pub horizon: f64,
    pub delta: f64,
    pub space: SpaceDoc,
    pub drift: DriftDoc,
    pub kernel: KernelDoc,
    pub initial: InitialDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate_states: Option<usize>,
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("rate matrix must be square, got {n} rows of unequal length")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl KernelDoc {
    fn to_kernel(&self, space: &StateSpace) -> Result<JumpKernel> {
        let finite = || match space {
            StateSpace::Finite { embedding } => Ok(embedding.clone()),
            _ => Err(Error::Config("rate matrices need a finite space".into())),
        };
        Ok(match self {
            KernelDoc::RateMatrix { rates } => {
                let m = matrix(rates)?;
                JumpKernel::FiniteRateMatrix(RateMatrix::constant(finite()?, m))
            }
            KernelDoc::RateExpressions { rates } => {
                let n = rates.len();
                let rows = rates
                    .iter()
                    .map(|row| {
                        if row.len() != n {
                            return Err(Error::Config("rate expression matrix must be square".into()));
                        }
                        row.iter()
                            .map(|s| if s.trim().is_empty() { Ok(None) } else { Expr::parse(s).map(Some) })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                JumpKernel::FiniteRateMatrix(RateMatrix { embedding: finite()?, source: RateSource::Expressions(rows) })
            }
            KernelDoc::Atomic { atoms } => JumpKernel::Atomic(
                atoms.iter().map(|a| Atom { jump: a.jump.clone(), rate: a.rate.clone() }).collect(),
            ),
            KernelDoc::Density { density, lower, upper } => {
                JumpKernel::Density(JumpDensity { density: density.clone(), lower: *lower, upper: *upper })
            }
            KernelDoc::Levy { atoms, density } => JumpKernel::Levy(LevyMeasure {
                atoms: atoms.iter().map(|a| LevyAtom { jump: a.jump.clone(), weight: a.weight }).collect(),
                density: density.as_ref().map(|d| LevyDensity {
                    density: d.density.clone(),
                    lower: d.lower,
                    upper: d.upper,
                    reflected: d.reflected,
                }),
            }),
            KernelDoc::Tilted { base, tilt } => JumpKernel::tilted(base.to_kernel(space)?, tilt.clone()),
        })
    }

    pub fn from_kernel(kernel: &JumpKernel) -> Result<Self> {
        Ok(match kernel {
            JumpKernel::FiniteRateMatrix(m) => match &m.source {
                RateSource::Constant(r) => KernelDoc::RateMatrix {
                    rates: (0..r.nrows()).map(|i| r.row(i).iter().copied().collect()).collect(),
                },
                RateSource::Expressions(rows) => KernelDoc::RateExpressions {
                    rates: rows
                        .iter()
                        .map(|row| row.iter().map(|e| e.as_ref().map_or(String::new(), |e| e.source().into())).collect())
                        .collect(),
                },
                RateSource::Projected(base) => KernelDoc::from_kernel(base)?,
                RateSource::Slices { .. } => {
                    return Err(Error::Config("time-sliced rate matrices have no configuration form".into()))
                }
            },
            JumpKernel::Atomic(atoms) => KernelDoc::Atomic {
                atoms: atoms.iter().map(|a| AtomDoc { jump: a.jump.clone(), rate: a.rate.clone() }).collect(),
            },
            JumpKernel::Density(d) => KernelDoc::Density { density: d.density.clone(), lower: d.lower, upper: d.upper },
            JumpKernel::Levy(l) => KernelDoc::Levy {
                atoms: l.atoms.iter().map(|a| LevyAtomDoc { jump: a.jump.clone(), weight: a.weight }).collect(),
                density: l.density.as_ref().map(|d| LevyDensityDoc {
                    density: d.density.clone(),
                    lower: d.lower,
                    upper: d.upper,
                    reflected: d.reflected,
                }),
            },
            JumpKernel::Tilted { base, tilt } => {
                KernelDoc::Tilted { base: Box::new(KernelDoc::from_kernel(base)?), tilt: tilt.clone() }
            }
        })
    }
}

impl ProcessDocument {
    /// Builds the process. Validation is left to [`ProcessSpec::validate`].
    pub fn to_spec(&self) -> Result<ProcessSpec> {
        let space = match &self.space {
            SpaceDoc::Finite { n_states, points: None } => StateSpace::finite(*n_states)?,
            SpaceDoc::Finite { n_states, points: Some(points) } => {
                if points.len() != *n_states {
                    return Err(Error::Config(format!("{} embedding points for {n_states} states", points.len())));
                }
                StateSpace::Finite { embedding: Embedding::from_points(points.clone())? }
            }
            SpaceDoc::Lattice { dimension, step } => StateSpace::Lattice { dimension: *dimension, step: *step },
            SpaceDoc::Continuous { lower, upper } => StateSpace::Continuous { lower: lower.clone(), upper: upper.clone() },
        };
        if self.truncate_states.is_some() && !matches!(space, StateSpace::Lattice { dimension: 1, .. }) {
            return Err(Error::Config("truncate_states applies to one-dimensional lattices".into()));
        }
        let delta = TruncationDelta::new(self.delta)?;
        let kernel = self.kernel.to_kernel(&space)?;
        let drift = match &self.drift {
            DriftDoc::Zero { dimension } => DriftField::Zero(*dimension),
            DriftDoc::Constant { value } => DriftField::Constant(value.clone()),
            DriftDoc::Expression { components } => DriftField::Expression(components.clone()),
            DriftDoc::Compensator => DriftField::Compensator { kernel: Box::new(kernel.clone()), delta },
        };
        let initial = match &self.initial {
            InitialDoc::Point { state } => InitialLaw::Point(state.clone()),
            InitialDoc::Atoms { atoms } => InitialLaw::Atoms(atoms.iter().map(|a| (a.state.clone(), a.weight)).collect()),
            InitialDoc::Probabilities { p } => match &space {
                StateSpace::Finite { embedding } => InitialLaw::finite(embedding, p)?,
                _ => return Err(Error::Config("probability vectors need a finite space".into())),
            },
            InitialDoc::Density { density, lower, upper } => {
                InitialLaw::Density { density: density.clone(), lower: lower.clone(), upper: upper.clone() }
            }
        };
        let spec = ProcessSpec { space, drift, kernel, delta, initial, horizon: self.horizon };
        match self.truncate_states {
            Some(n) => {
                if n == 0 {
                    return Err(Error::Config("truncate_states must be positive".into()));
                }
                spec.restrict_to(Embedding::integers(n))
            }
            None => Ok(spec),
        }
    }

    pub fn from_spec(spec: &ProcessSpec) -> Result<Self> {
        let projected = match &spec.kernel {
            JumpKernel::FiniteRateMatrix(RateMatrix { embedding, source: RateSource::Projected(_) }) => {
                if *embedding != Embedding::integers(embedding.len()) {
                    return Err(Error::Config("only restrictions to 0..n have a configuration form".into()));
                }
                Some(embedding.len())
            }
            _ => None,
        };
        let space = match (&spec.space, projected) {
            (_, Some(_)) => SpaceDoc::Lattice { dimension: 1, step: 1.0 },
            (StateSpace::Finite { embedding }, None) => SpaceDoc::Finite {
                n_states: embedding.len(),
                points: (*embedding != Embedding::integers(embedding.len())).then(|| embedding.points().to_vec()),
            },
            (StateSpace::Lattice { dimension, step }, None) => SpaceDoc::Lattice { dimension: *dimension, step: *step },
            (StateSpace::Continuous { lower, upper }, None) => {
                SpaceDoc::Continuous { lower: lower.clone(), upper: upper.clone() }
            }
        };
        let drift = match &spec.drift {
            DriftField::Zero(d) => DriftDoc::Zero { dimension: *d },
            DriftField::Constant(v) => DriftDoc::Constant { value: v.clone() },
            DriftField::Expression(e) => DriftDoc::Expression { components: e.clone() },
            DriftField::Compensator { kernel, .. } if **kernel == spec.kernel => DriftDoc::Compensator,
            _ => return Err(Error::Config("this drift has no configuration form".into())),
        };
        let initial = match (&spec.initial, &spec.space) {
            (InitialLaw::Point(x), _) => InitialDoc::Point { state: x.clone() },
            (InitialLaw::Atoms(atoms), StateSpace::Finite { embedding })
                if projected.is_none()
                    && atoms.len() == embedding.len()
                    && atoms.iter().zip(embedding.points()).all(|((x, _), p)| x == p) =>
            {
                InitialDoc::Probabilities { p: atoms.iter().map(|(_, w)| *w).collect() }
            }
            (InitialLaw::Atoms(atoms), _) => InitialDoc::Atoms {
                atoms: atoms
                    .iter()
                    .filter(|(_, w)| projected.is_none() || *w > 0.0)
                    .map(|(x, w)| WeightedState { state: x.clone(), weight: *w })
                    .collect(),
            },
            (InitialLaw::Density { density, lower, upper }, _) => {
                InitialDoc::Density { density: density.clone(), lower: lower.clone(), upper: upper.clone() }
            }
        };
        Ok(ProcessDocument {
            horizon: spec.horizon,
            delta: spec.delta.value(),
            space,
            drift,
            kernel: KernelDoc::from_kernel(&spec.kernel)?,
            initial,
            truncate_states: projected,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsDoc {
    pub lower: Vec<f64>,
    pub width: Vec<f64>,
    pub counts: Vec<usize>,
}

impl BinsDoc {
    pub fn embedding(&self) -> Result<Embedding> {
        Embedding::grid(self.lower.clone(), self.width.clone(), self.counts.clone())
    }
}

/// Command parameters. Every field has a default except the seed, which
/// commands that draw random numbers insist on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub n_paths: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Points of the marginal time grid, including both ends.
    pub time_points: usize,
    /// Time bins of the intensity estimator.
    pub time_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<BinsDoc>,
    pub epsilon: f64,
    pub max_jumps: usize,
    pub ode_steps: usize,
    /// Flux tolerance into zero-mass states.
    pub tolerance: f64,
    pub include_initial_time: bool,
    pub exclude_time_below: f64,
    pub min_count: f64,
    pub theory_scale: f64,
    pub smooth: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt: Option<Expr>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            n_paths: 10_000,
            seed: None,
            time_points: 51,
            time_bins: 10,
            bins: None,
            epsilon: 0.0,
            max_jumps: 1_000_000,
            ode_steps: 1000,
            tolerance: 1e-12,
            include_initial_time: false,
            exclude_time_below: 0.0,
            min_count: 10.0,
            theory_scale: 1.0,
            smooth: false,
            tilt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub process: ProcessDocument,
    #[serde(default)]
    pub run: RunSettings,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn spec(&self) -> Result<ProcessSpec> {
        self.process.to_spec()
    }
}
