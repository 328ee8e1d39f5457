//! Run configuration: a JSON document merged with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSettings {
    /// `gaussian` or `smooth_bump`.
    pub family: Option<String>,
    pub knn: Option<usize>,
    /// Explicit global bandwidth; overrides `knn`.
    pub t: Option<f64>,
    pub truncation: Option<f64>,
    /// Per-point bandwidth from the `knn`-th neighbor radius.
    pub adaptive: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySettings {
    /// `neumann`, `dirichlet` or `robin`.
    #[serde(rename = "type")]
    pub kind: Option<String>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub rel_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub gmres_restart: Option<usize>,
    pub alm_beta: Option<f64>,
    pub alm_tol: Option<f64>,
    pub alm_max_outer: Option<usize>,
    pub eig_count: Option<usize>,
    pub eig_shift: Option<f64>,
    pub eig_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TvSettings {
    pub epsilon: Option<f64>,
    pub max_outer: Option<usize>,
    pub knn: Option<usize>,
    pub patch: Option<usize>,
    pub subsample: Option<f64>,
    pub constraint_beta: Option<f64>,
}

/// Everything a command may read; unset entries take command defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub geometry: Option<String>,
    pub n: Option<usize>,
    pub levels: Option<Vec<usize>>,
    /// Uniform random sampling instead of the structured grid (disk only).
    pub random: Option<bool>,
    pub cloud: Option<PathBuf>,
    pub fields: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub vectors: Option<usize>,
    pub allow_unconverged: Option<bool>,
    pub kernel: KernelSettings,
    pub boundary: BoundarySettings,
    pub solver: SolverSettings,
    pub tv: TvSettings,
}

/// Applies `Some` entries of `over` on top of `base`.
macro_rules! overlay {
    ($base:expr, $over:expr; $($field:ident),* $(,)?) => {
        $( if $over.$field.is_some() { $base.$field = $over.$field.clone(); } )*
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn merge(mut self, over: &Settings) -> Self {
        overlay!(self, over; geometry, n, levels, random, cloud, fields, image, mask, truth, vectors, allow_unconverged);
        overlay!(self.kernel, over.kernel; family, knn, t, truncation, adaptive);
        overlay!(self.boundary, over.boundary; kind, beta);
        overlay!(
            self.solver, over.solver;
            rel_tol, max_iter, gmres_restart, alm_beta, alm_tol, alm_max_outer, eig_count, eig_shift, eig_tol
        );
        overlay!(self.tv, over.tv; epsilon, max_outer, knn, patch, subsample, constraint_beta);
        self
    }

    /// Makes every input path absolute and checks that it exists.
    pub fn resolve_paths(&mut self) -> Result<(), CliError> {
        for path in [
            &mut self.cloud,
            &mut self.fields,
            &mut self.image,
            &mut self.mask,
            &mut self.truth,
        ]
        .into_iter()
        .flatten()
        {
            *path = std::fs::canonicalize(&*path).map_err(|e| CliError::io(&*path, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub settings: Settings,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form (the output directory is excluded).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Comment lines that open every output file.
    pub fn header(&self) -> Vec<String> {
        vec![
            format!("pim {}", env!("CARGO_PKG_VERSION")),
            format!("command={}", self.command),
            format!("config_sha256={}", self.hash()),
            format!("rng_seed={}", self.seed),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file: Settings = serde_json::from_str(r#"{"n": 100, "kernel": {"knn": 8, "family": "gaussian"}}"#).unwrap();
        let mut flags = Settings::default();
        flags.kernel.knn = Some(12);
        let merged = file.merge(&flags);
        assert_eq!(merged.n, Some(100));
        assert_eq!(merged.kernel.knn, Some(12));
        assert_eq!(merged.kernel.family.as_deref(), Some("gaussian"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<Settings>(r#"{"kernal": {}}"#).is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig {
            command: "solve".into(),
            seed: 1,
            settings: Settings::default(),
            out: "a".into(),
        };
        let b = RunConfig {
            out: "b".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), RunConfig { seed: 2, ..a.clone() }.hash());
    }
}
