//! Run configuration files (JSON), one per experiment.

use serde::{Deserialize, Serialize};

use gradix_core::cases::{
    case_1d_gaussian, case_2d_gaussian, case_diag_gaussian, case_slab_discontinuous,
    case_square_diagonal, catalog, make_inverse, CaseSpec,
};
use gradix_core::network::Architecture;
use gradix_core::sampling::Counts;
use gradix_core::training::{EnsembleConfig, TrainConfig};
use gradix_core::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArchSpec {
    pub hidden_layers: usize,
    pub width: usize,
}

/// One experiment: a case with physics overrides, point counts, network
/// architecture, loss/optimizer settings, and an optional ensemble grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: String,
    pub ke: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    /// Measurement region for inverse cases (defaults to the full domain).
    #[serde(default)]
    pub d_region: Option<Vec<[f64; 2]>>,
    pub counts: Counts,
    pub arch: ArchSpec,
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Reduce paper-scale counts to desk scale: N_int = 2048, N_sb <= 512,
    /// N_tb and N_d shrink by the same factor as N_int, optimizer iteration
    /// caps halve.
    pub fn desk_scale(&mut self) {
        let c = &mut self.counts;
        if c.n_int > 2048 {
            c.n_d = c.n_d * 2048 / c.n_int;
            c.n_tb = c.n_tb * 2048 / c.n_int;
            c.n_int = 2048;
        }
        c.n_sb = c.n_sb.min(512);
        let o = &mut self.train.optimizer;
        o.adam.max_iters = (o.adam.max_iters / 2).max(1);
        o.lbfgs.max_iters = (o.lbfgs.max_iters / 2).max(1);
    }

    /// Instantiate the physics for this configuration.
    pub fn build_case(&self) -> Result<CaseSpec> {
        let root2_inv = std::f64::consts::FRAC_1_SQRT_2;
        match self.case.as_str() {
            "1d-gaussian" => case_1d_gaussian(
                self.ke,
                self.alpha.unwrap_or(0.02),
                self.c.unwrap_or(0.5),
                self.mu.unwrap_or(0.5),
            ),
            "slab-discontinuous" => {
                case_slab_discontinuous(self.ke, self.l.unwrap_or(10.0), self.mu.unwrap_or(1.0))
            }
            "square-diagonal" => case_square_diagonal(self.ke, self.l.unwrap_or(1.0)),
            "2d-gaussian" => case_2d_gaussian(
                self.ke,
                self.alpha.unwrap_or(0.02),
                self.c.unwrap_or(root2_inv),
            ),
            "diag-gaussian" => case_diag_gaussian(self.ke),
            "2d-gaussian-inverse" => {
                let base = case_2d_gaussian(
                    self.ke,
                    self.alpha.unwrap_or(0.02),
                    self.c.unwrap_or(root2_inv),
                )?;
                let region = self.d_region.clone().unwrap_or_else(|| base.bounds.clone());
                let mut case = make_inverse(base, region)?;
                case.name = "2d-gaussian-inverse".into();
                Ok(case)
            }
            other => catalog(other, self.ke),
        }
    }

    pub fn build_arch(&self, case: &CaseSpec) -> Result<Architecture> {
        Architecture::uniform(case.input_dim(), self.arch.hidden_layers, self.arch.width)
    }

    pub fn validate(&self, case: &CaseSpec) -> Result<()> {
        if case.is_inverse() {
            if self.counts.n_d == 0 {
                return Err(Error::Config("inverse case needs n_d > 0".into()));
            }
        } else if self.counts.n_d > 0 {
            return Err(Error::Config("forward case cannot take data points".into()));
        }
        if case.steady && self.counts.n_tb > 0 {
            return Err(Error::Config(
                "steady case cannot take temporal points".into(),
            ));
        }
        Ok(())
    }
}
