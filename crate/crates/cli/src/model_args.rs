//! Model selection flags and CSV matrix files.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cmrt::gen::{Model, TwoTypeInit};
use cmrt::params::{CmpaParams, CwrtParams, KTypeParams, SquareMatrix, TwoTypeParams};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Urt,
    Cmrt2,
    CmrtK,
    Cwrt,
    Cmpa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Canonical,
    PermutedUrt,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model family.
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Probability that a newcomer is type A (cmrt2).
    #[arg(long)]
    pub p: Option<f64>,
    /// Probability of attaching within the newcomer's own type (cmrt2).
    #[arg(long)]
    pub q: Option<f64>,
    /// Comma-separated type probabilities (cmrt-k, cwrt, cmpa).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub p_vector: Option<Vec<f64>>,
    /// CSV file with the K x K attachment matrix (cmrt-k, cmpa).
    #[arg(long)]
    pub q_matrix: Option<PathBuf>,
    /// CSV file with the K x K weight matrix (cwrt).
    #[arg(long)]
    pub omega: Option<PathBuf>,
    /// CSV file with the K x K offset matrix (cmpa).
    #[arg(long)]
    pub alpha: Option<PathBuf>,
    /// Starting configuration of the two-type model.
    #[arg(long, value_enum, default_value = "canonical")]
    pub init: InitKind,
}

/// Parses a CSV matrix. Blank lines and `#` comments are skipped; fields may
/// be separated by commas or whitespace.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>, String> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>().map_err(|_| format!("line {}: bad number {f:?}", idx + 1)))
            .collect::<Result<Vec<f64>, String>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("matrix file is empty".into());
    }
    Ok(rows)
}

fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, UsageError> {
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

impl ModelArgs {
    pub fn build(&self) -> Result<Model, UsageError> {
        let name = self.model.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        let reject = |set: bool, flag: &str| -> Result<(), UsageError> {
            if set {
                Err(UsageError(format!("--{flag} does not apply to --model {name}")))
            } else {
                Ok(())
            }
        };
        let need = |flag: &str| UsageError(format!("--model {name} needs --{flag}"));
        let bad = |e: cmrt::params::ParamError| UsageError(format!("invalid parameters: {e}"));
        let scalar = self.p.is_some() || self.q.is_some();
        let vector = self.p_vector.is_some();
        reject(self.init != InitKind::Canonical && self.model != ModelKind::Cmrt2, "init")?;
        match self.model {
            ModelKind::Urt => {
                reject(scalar || vector, "p/--q/--p-vector")?;
                reject(self.q_matrix.is_some() || self.omega.is_some() || self.alpha.is_some(), "q-matrix/--omega/--alpha")?;
                Ok(Model::Urt)
            }
            ModelKind::Cmrt2 => {
                reject(vector || self.q_matrix.is_some() || self.omega.is_some() || self.alpha.is_some(), "p-vector/--q-matrix/--omega/--alpha")?;
                let params = TwoTypeParams::new(self.p.ok_or_else(|| need("p"))?, self.q.ok_or_else(|| need("q"))?).map_err(bad)?;
                let init = match self.init {
                    InitKind::Canonical => TwoTypeInit::Canonical,
                    InitKind::PermutedUrt => TwoTypeInit::PermutedUrt,
                };
                Ok(Model::Cmrt2 { params, init })
            }
            ModelKind::CmrtK | ModelKind::Cmpa => {
                reject(scalar, "p/--q")?;
                reject(self.omega.is_some(), "omega")?;
                let p = self.p_vector.clone().ok_or_else(|| need("p-vector"))?;
                let q = read_matrix(self.q_matrix.as_deref().ok_or_else(|| need("q-matrix"))?)?;
                let base = KTypeParams::from_rows(p, q).map_err(bad)?;
                if self.model == ModelKind::CmrtK {
                    reject(self.alpha.is_some(), "alpha")?;
                    return Ok(Model::CmrtK(base));
                }
                let alpha = read_matrix(self.alpha.as_deref().ok_or_else(|| need("alpha"))?)?;
                let alpha = SquareMatrix::from_rows(alpha).map_err(bad)?;
                Ok(Model::Cmpa(CmpaParams::new(base, alpha).map_err(bad)?))
            }
            ModelKind::Cwrt => {
                reject(scalar, "p/--q")?;
                reject(self.q_matrix.is_some() || self.alpha.is_some(), "q-matrix/--alpha")?;
                let p = self.p_vector.clone().ok_or_else(|| need("p-vector"))?;
                let omega = read_matrix(self.omega.as_deref().ok_or_else(|| need("omega"))?)?;
                Ok(Model::Cwrt(CwrtParams::from_rows(p, omega).map_err(bad)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_parse_with_comments_and_spaces() {
        let m = parse_matrix("# q\n0.5, 0.5\n\n0.3 0.7 # row 2\n").unwrap();
        assert_eq!(m, vec![vec![0.5, 0.5], vec![0.3, 0.7]]);
        assert_eq!(parse_matrix("1,2\n3,x\n").unwrap_err(), "line 2: bad number \"x\"");
        assert!(parse_matrix("# nothing\n").is_err());
    }
}
