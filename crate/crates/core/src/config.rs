//! Run configuration: a TOML file with `[scenario]`, `[model]`, `[solver]` and `[run]` sections.
//!
//! Every key is optional; missing keys take the defaults of the reference scenario.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market_model::ModelParams;
use crate::mortality::MortalityTable;
use crate::pide::{SolverConfig, SolverGrid};
use crate::scenario::{Kappa, Scenario};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub w0: f64,
    pub horizon: f64,
    pub m: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub alpha: f64,
    pub kappa: Kappa,
    pub epsilon: f64,
    /// Annual fee in basis points.
    pub fee_bps: f64,
    pub start_age: u32,
    pub tontine: bool,
    /// `age,q` file replacing the bundled table.
    pub mortality_file: Option<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            w0: s.w0,
            horizon: s.horizon,
            m: s.m,
            q_min: s.q_min,
            q_max: s.q_max,
            alpha: s.alpha,
            kappa: s.kappa,
            epsilon: s.epsilon,
            fee_bps: s.fee * 1e4,
            start_age: s.start_age,
            tontine: s.tontine_enabled,
            mortality_file: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Nodes per dimension; powers of two.
    pub grid: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub n_q: usize,
    pub n_p: usize,
    pub wealth_refine: f64,
    pub ladder: usize,
    pub scan_grid: usize,
    pub wstar_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            grid: c.grid.n_s,
            s_min: c.grid.s_min,
            s_max: c.grid.s_max,
            d_min: c.grid.d_min,
            d_max: c.grid.d_max,
            n_q: c.n_q,
            n_p: c.n_p,
            wealth_refine: c.wealth_refine,
            ladder: c.ladder,
            scan_grid: c.scan_grid,
            wstar_tol: c.wstar_tol,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub paths: usize,
    pub seed: u64,
    /// Expected bootstrap block length in years.
    pub blocksize: f64,
    /// Monthly `date,stock_index,bond_index,cpi` file; the bundled synthetic fixture if absent.
    pub data_file: Option<PathBuf>,
    pub out: PathBuf,
    pub kappas: Vec<Kappa>,
    /// Stock fractions for the constant-weight baseline.
    pub p_list: Vec<f64>,
    /// Constant withdrawal for the baseline.
    pub q_const: f64,
    /// Standard deviation of a random group gain; 0 keeps it at one.
    pub random_g: f64,
    /// Grid ladder for the convergence report.
    pub grids: Vec<usize>,
    /// Evaluate frontiers on bootstrap resamples instead of the parametric model.
    pub bootstrap: bool,
    pub policy: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            paths: 256_000,
            seed: 2021,
            blocksize: 2.0,
            data_file: None,
            out: PathBuf::from("out"),
            kappas: vec![Kappa::Finite(0.185)],
            p_list: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            q_const: 40.0,
            random_g: 0.0,
            grids: vec![512, 1024, 2048],
            bootstrap: false,
            policy: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub model: ModelParams,
    pub solver: SolverSection,
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario()?.validate()?;
        self.model.validate()?;
        self.solver_config().validate()?;
        let r = &self.run;
        if !(r.blocksize * 12.0 >= 1.0) {
            return Err(Error::Config(format!("blocksize {} years is shorter than a month", r.blocksize)));
        }
        if !(r.random_g >= 0.0) {
            return Err(Error::Config(format!("random_g {}", r.random_g)));
        }
        if r.kappas.is_empty() || r.grids.is_empty() {
            return Err(Error::Config("kappas and grids need at least one entry".into()));
        }
        for k in &r.kappas {
            k.validate()?;
        }
        if let Some(p) = r.p_list.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("stock fraction {p} outside [0, 1]")));
        }
        for f in [&self.scenario.mortality_file, &r.data_file, &r.policy].into_iter().flatten() {
            if !f.exists() {
                return Err(Error::Config(format!("{} does not exist", f.display())));
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let s = &self.scenario;
        let mortality = match &s.mortality_file {
            Some(p) => MortalityTable::load(p)?,
            None => MortalityTable::default_male(),
        };
        Ok(Scenario {
            w0: s.w0,
            horizon: s.horizon,
            m: s.m,
            q_min: s.q_min,
            q_max: s.q_max,
            alpha: s.alpha,
            kappa: s.kappa,
            epsilon: s.epsilon,
            fee: if s.tontine { s.fee_bps * 1e-4 } else { 0.0 },
            start_age: s.start_age,
            tontine_enabled: s.tontine,
            mortality,
        })
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        let grid = SolverGrid {
            s_min: s.s_min,
            s_max: s.s_max,
            b_min: s.s_min,
            b_max: s.s_max,
            d_min: s.d_min,
            d_max: s.d_max,
            ..SolverGrid::square(s.grid)
        };
        SolverConfig {
            grid,
            n_q: s.n_q,
            n_p: s.n_p,
            wealth_refine: s.wealth_refine,
            ladder: s.ladder,
            scan_grid: s.scan_grid,
            wstar_tol: s.wstar_tol,
        }
    }

    /// Digest of the effective configuration, embedded in every output file.
    /// The output directory does not count.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.run.out = PathBuf::new();
        let digest = Sha256::digest(format!("{c:?}").as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_reference_scenario() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.scenario().unwrap(), Scenario::default());
        assert_eq!(c.model, ModelParams::default());
        assert_eq!(c.solver_config(), SolverConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::parse(
            "[scenario]\nkappa = \"inf\"\ntontine = false\n[model]\nmu_s = 0.07\n[solver]\ngrid = 256\n[run]\nkappas = [0.5, \"inf\"]\n",
        )
        .unwrap();
        let s = c.scenario().unwrap();
        assert_eq!(s.kappa, Kappa::Infinite);
        assert_eq!(s.fee, 0.0);
        assert_eq!(c.model.mu_s, 0.07);
        assert_eq!(c.solver_config().grid.n_b, 256);
        assert_eq!(c.run.kappas, vec![Kappa::Finite(0.5), Kappa::Infinite]);
    }

    #[test]
    fn errors_point_at_the_line() {
        let e = RunConfig::parse("[scenario]\nw0 = 1000\n\nbogus = 3\n").unwrap_err().to_string();
        assert!(e.contains("line 4"), "{e}");
        assert!(RunConfig::parse("[solver]\ngrid = 1000\n").is_err());
        assert!(RunConfig::parse("[run]\np_list = [1.5]\n").is_err());
        assert!(RunConfig::parse("[run]\nkappas = []\n").is_err());
    }
}
