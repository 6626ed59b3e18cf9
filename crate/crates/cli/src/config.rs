//! Run configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fraclap::{
    build_interval_mesh, build_rect_mesh, FractionalParams, Mesh, SolverOptions, SweepConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Largest interval mesh, in nodes.
pub const MAX_NODES_1D: usize = 2048;
/// Largest rectangle mesh, in nodes.
pub const MAX_NODES_2D: usize = 441;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Interval,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: DomainKind,
    /// Side lengths: `[L]` for `(0, L)`, `[lx, ly]` for `(0, lx) × (0, ly)`.
    pub sizes: Vec<f64>,
    /// Elements per side.
    pub elements: Vec<usize>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            kind: DomainKind::Interval,
            sizes: vec![1.0],
            elements: vec![128],
        }
    }
}

impl DomainConfig {
    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::Interval => 1,
            DomainKind::Rectangle => 2,
        }
    }

    pub fn build(&self) -> Result<Mesh, CliError> {
        let want = self.dim();
        if self.sizes.len() != want || self.elements.len() != want {
            return Err(CliError::invalid(format!(
                "a {:?} domain needs {want} size(s) and {want} element count(s), got {} and {}",
                self.kind,
                self.sizes.len(),
                self.elements.len()
            )));
        }
        let nodes: usize = self.elements.iter().map(|e| e + 1).product();
        let cap = if want == 1 {
            MAX_NODES_1D
        } else {
            MAX_NODES_2D
        };
        if nodes > cap {
            return Err(CliError::invalid(format!(
                "mesh has {nodes} nodes; dense assembly is limited to {cap} in dimension {want}"
            )));
        }
        let mesh = match self.kind {
            DomainKind::Interval => build_interval_mesh(0.0, self.sizes[0], self.elements[0]),
            DomainKind::Rectangle => build_rect_mesh(
                self.sizes[0],
                self.sizes[1],
                self.elements[0],
                self.elements[1],
            ),
        }?;
        Ok(mesh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub s: f64,
    pub q: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self { s: 0.5, q: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            min: d.eps_min,
            max: d.eps_max,
            points: d.points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub params: ParamsConfig,
    /// Contraction factor for `extremal`.
    pub eps: f64,
    pub eps_grid: GridConfig,
    pub solver: SolverOptions,
    pub seed: u64,
    /// Bisect the detected bracket in `sweep`.
    pub refine: bool,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainConfig::default(),
            params: ParamsConfig::default(),
            eps: 1e-3,
            eps_grid: GridConfig::default(),
            solver: SolverOptions::default(),
            seed: 0,
            refine: true,
            out: None,
        }
    }
}

/// Flag values that replace their config counterparts when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub s: Option<f64>,
    pub q: Option<f64>,
    pub eps: Option<f64>,
    pub elements: Option<usize>,
    pub max_iter: Option<usize>,
}

/// A configuration that passed every check, with its mesh and parameters.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub mesh: Arc<Mesh>,
    pub params: FractionalParams,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::invalid(format!("bad config {}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(s) = o.s {
            self.params.s = s;
        }
        if let Some(q) = o.q {
            self.params.q = q;
        }
        if let Some(eps) = o.eps {
            self.eps = eps;
        }
        if let Some(n) = o.elements {
            self.domain.elements = vec![n; self.domain.dim()];
        }
        if let Some(m) = o.max_iter {
            self.solver.max_iter = m;
        }
    }

    /// Validates the parameters, solver options and grid, then builds the mesh.
    pub fn resolve(self) -> Result<Resolved, CliError> {
        let params = FractionalParams::new(self.params.s, self.params.q, self.domain.dim())?;
        let o = &self.solver;
        if !(o.tol > 0.0 && o.cluster_tol > 0.0 && o.tol_inv > 0.0 && o.energy_match >= 0.0) {
            return Err(CliError::invalid(
                "solver tolerances must be positive".to_string(),
            ));
        }
        if !(o.armijo > 0.0 && o.armijo < 1.0) {
            return Err(CliError::invalid(format!(
                "armijo constant must lie in (0, 1), got {}",
                o.armijo
            )));
        }
        if o.max_iter == 0 || o.n_starts < 2 {
            return Err(CliError::invalid(
                "solver needs max_iter >= 1 and n_starts >= 2".to_string(),
            ));
        }
        self.sweep().grid()?;
        let mesh = Arc::new(self.domain.build()?);
        Ok(Resolved {
            config: self,
            mesh,
            params,
        })
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            eps_min: self.eps_grid.min,
            eps_max: self.eps_grid.max,
            points: self.eps_grid.points,
            seed: self.seed,
            solver: self.solver,
        }
    }
}
