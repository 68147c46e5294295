use std::fs;
use std::path::{Path, PathBuf};

use riskvex::control::ControlRiskModel;
use riskvex::synthesis::LinearSystem;
use riskvex::table::Table;
use riskvex::{Error, Matrix};

use crate::config::Config;
use crate::error::CliError;

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Global {
    pub seed: u64,
    pub samples: Option<usize>,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Global {
    /// Progress line on stdout unless `--quiet`.
    pub fn say(&self, line: impl std::fmt::Display) {
        if !self.quiet {
            println!("{line}");
        }
    }

    pub fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    /// Creates the output directory and returns `out/name`.
    pub fn output(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        let path = self.output(name)?;
        table.save(&path)?;
        self.say(format!("wrote {}", path.display()));
        Ok(path)
    }
}

pub fn single_row(header: &[&str], values: Vec<f64>) -> Table {
    let mut t = Table::new(header.iter().copied());
    t.push(values);
    t
}

/// A `rows x cols` matrix from a row-major list. One entry means that value
/// times the identity (square) or everywhere (rectangular).
fn matrix_key(cfg: &mut Config, key: &str, rows: usize, cols: usize, default: f64) -> Result<Matrix, CliError> {
    let v: Vec<f64> = cfg.get_list(key, vec![default])?;
    match v.len() {
        1 if rows == cols => Ok(Matrix::identity(rows, cols) * v[0]),
        1 => Ok(Matrix::from_element(rows, cols, v[0])),
        n if n == rows * cols => Ok(Matrix::from_row_slice(rows, cols, &v)),
        n => Err(CliError::Core(Error::DimensionMismatch { context: format!("`{key}` entries"), expected: rows * cols, got: n })),
    }
}

/// Time-invariant linear system and isotropic control noise.
#[derive(Debug, Clone)]
pub struct LinearSetup {
    pub system: LinearSystem,
    pub model: ControlRiskModel,
}

/// Keys: `horizon`, `state_dim`, `control_dim`, `a`, `b`, `q`, `r`, `sigma`, `alpha`.
pub fn linear_setup(cfg: &mut Config) -> Result<LinearSetup, CliError> {
    let horizon: usize = cfg.get("horizon", 5)?;
    let n: usize = cfg.get("state_dim", 1)?;
    let m: usize = cfg.get("control_dim", 1)?;
    if horizon < 2 || n == 0 || m == 0 {
        return Err(CliError::Input("horizon must be at least 2 and dimensions positive".into()));
    }
    let a = matrix_key(cfg, "a", n, n, 1.0)?;
    let b = matrix_key(cfg, "b", n, m, 1.0)?;
    let q = matrix_key(cfg, "q", n, n, 0.1)?;
    let r = matrix_key(cfg, "r", m, m, 1.0)?;
    let sigma: f64 = cfg.get("sigma", 1.0)?;
    let alpha: f64 = cfg.get("alpha", 1.0)?;
    let k = horizon - 1;
    let system = LinearSystem::new(vec![a; k], vec![b; k], vec![q; horizon], vec![r; k])?;
    let model = ControlRiskModel::isotropic(alpha, sigma, &vec![m; k])?;
    Ok(LinearSetup { system, model })
}

pub fn gains_dir(global: &Global) -> Result<PathBuf, CliError> {
    let dir = global.output("gains")?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{}: no such file or directory", path.display())))
    }
}
