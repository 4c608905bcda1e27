use std::path::PathBuf;

use clap::ValueEnum;
use jdisc::gluing::ModelSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Pullback,
    Solve,
    Sweep,
    Attach,
    Vekua,
    Phasefit,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Pullback => "pullback",
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Attach => "attach",
            Command::Vekua => "vekua",
            Command::Phasefit => "phasefit",
            Command::Verify => "verify",
        }
    }
}

/// Either a built-in name or a full model declaration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Name(String),
    Spec(ModelSpec),
}

impl ModelRef {
    pub fn name(&self) -> &str {
        match self {
            ModelRef::Name(n) => n,
            ModelRef::Spec(s) => &s.name,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            ModelRef::Name(name) => ModelSpec {
                name: name.clone(),
                w_radius: None,
                epsilon: None,
                terms: None,
            },
            ModelRef::Spec(s) => s.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub radial_count: usize,
    pub angular_count: usize,
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    /// `RxT`, e.g. `64x128`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (r, t) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("grid '{s}' is not of the form RxT"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("grid '{s}': {e}"));
        Ok(Self {
            radial_count: parse(r)?,
            angular_count: parse(t)?,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_slices: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Torus-fill phases for `attach`; no fill when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_samples: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

pub const DEFAULT_GRID: GridSpec = GridSpec {
    radial_count: 64,
    angular_count: 128,
};

impl RunManifest {
    /// Fills every field the command reads, so the embedded copy in a summary
    /// fully determines the run.
    pub fn resolve(mut self, command: Command) -> Self {
        self.command = Some(command);
        let p = &mut self.params;
        p.seed.get_or_insert(0);
        match command {
            Command::Solve | Command::Sweep | Command::Attach => {
                let default_model = if command == Command::Attach {
                    "blowup"
                } else {
                    "half-w"
                };
                self.model
                    .get_or_insert_with(|| ModelRef::Name(default_model.into()));
                p.n.get_or_insert(2);
                let r = *p.r.get_or_insert(0.5);
                p.t.get_or_insert(0.0);
                if command == Command::Sweep {
                    p.radii.get_or_insert_with(|| default_radii(r));
                }
                self.solver.max_iterations.get_or_insert(500);
                self.solver.contraction_tol.get_or_insert(1e-10);
                self.solver.damping.get_or_insert(0.7);
            }
            Command::Pullback | Command::Verify => {
                self.model.get_or_insert_with(|| ModelRef::Name("blowup".into()));
                p.z_slices.get_or_insert_with(default_slices);
            }
            Command::Vekua | Command::Phasefit => {
                p.n.get_or_insert(2);
            }
        }
        if command != Command::Phasefit {
            self.grid.get_or_insert(DEFAULT_GRID);
        }
        self
    }
}

/// `0.1, 0.2, ...` up to `r`, ending exactly at `r`.
pub fn default_radii(r: f64) -> Vec<f64> {
    let steps = (r / 0.1).ceil().max(1.0) as usize;
    (1..=steps).map(|k| r * k as f64 / steps as f64).collect()
}

/// Eight slices on a spiral through the disc.
pub fn default_slices() -> Vec<[f64; 2]> {
    (0..8)
        .map(|k| {
            let (s, c) = (2.4 * k as f64).sin_cos();
            let rho = 0.1 * (k + 1) as f64;
            [rho * c, rho * s]
        })
        .collect()
}
