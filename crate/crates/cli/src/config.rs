use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use striplearn::evaluation::Variant;
use striplearn::perceptron::KernelSpec;

use crate::error::CliError;

/// Every tunable of a run. Fields left unset fall back to the config file,
/// then to the built-in defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Domain PDDL file.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    /// Training problem file; repeat to cycle through several.
    #[arg(long = "problem")]
    pub problems: Option<Vec<PathBuf>>,
    /// Problem file for test traces; defaults to the training problems.
    #[arg(long = "test-problem")]
    pub test_problems: Option<Vec<PathBuf>>,
    /// Training trace length.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Test trace length.
    #[arg(long)]
    pub test_steps: Option<usize>,
    /// Steps between resets to a problem's initial state.
    #[arg(long)]
    pub episode_len: Option<usize>,
    /// Fraction of steps that attempt an applicable action.
    #[arg(long)]
    pub success_ratio: Option<f64>,
    /// Probability that an atom is observed.
    #[arg(long)]
    pub observability: Option<f64>,
    /// Probability that an observed atom is flipped.
    #[arg(long)]
    pub noise: Option<f64>,
    /// linear, dnf or <k>-dnf.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Training passes over the trace.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Shuffle each classifier's examples between epochs.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub shuffle: Option<bool>,
    /// Check every child before stopping rule generalization.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,
    /// Precondition F-score tolerance.
    #[arg(long)]
    pub eps_p: Option<f64>,
    /// Effect F-score tolerance.
    #[arg(long)]
    pub eps_e: Option<f64>,
    /// Root of every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (also STRIPLEARN_WORKERS).
    #[arg(long, env = "STRIPLEARN_WORKERS")]
    pub workers: Option<usize>,
    /// Noise levels of the kernel comparison grid.
    #[arg(long, value_delimiter = ',')]
    pub grid_noise: Option<Vec<f64>>,
    /// Observability levels of the kernel comparison grid.
    #[arg(long, value_delimiter = ',')]
    pub grid_observability: Option<Vec<f64>>,
    /// Number of seeds per grid cell.
    #[arg(long)]
    pub grid_seeds: Option<usize>,
    /// Variants to compare: standard, linear, dnf, <k>-dnf.
    #[arg(long, value_delimiter = ',')]
    pub grid_variants: Option<Vec<String>>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Settings {
    pub fn defaults() -> Self {
        Settings {
            domain: None,
            problems: None,
            test_problems: None,
            steps: Some(20_000),
            test_steps: Some(2000),
            episode_len: Some(400),
            success_ratio: Some(0.5),
            observability: Some(1.0),
            noise: Some(0.0),
            kernel: Some("3-dnf".into()),
            epochs: Some(2),
            shuffle: Some(false),
            strict: Some(false),
            eps_p: Some(0.95),
            eps_e: Some(0.5),
            seed: Some(0),
            out: Some(PathBuf::from("out")),
            workers: None,
            grid_noise: Some(vec![0.0, 0.01, 0.05]),
            grid_observability: Some(vec![0.1, 0.25, 0.5, 1.0]),
            grid_seeds: Some(5),
            grid_variants: Some(
                Variant::all()
                    .into_iter()
                    .map(|v| match v {
                        Variant::Standard => "standard".to_string(),
                        Variant::Voted(k) => k.to_string(),
                    })
                    .collect(),
            ),
        }
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &Settings) -> Self {
        overlay!(
            self,
            top,
            domain,
            problems,
            test_problems,
            steps,
            test_steps,
            episode_len,
            success_ratio,
            observability,
            noise,
            kernel,
            epochs,
            shuffle,
            strict,
            eps_p,
            eps_e,
            seed,
            out,
            workers,
            grid_noise,
            grid_observability,
            grid_seeds,
            grid_variants
        );
        self
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    /// Defaults, then the config file if any, then flags.
    pub fn resolve(file: Option<&Path>, flags: &Settings) -> Result<Self, CliError> {
        let mut s = Settings::defaults();
        if let Some(f) = file {
            s = s.overlay(&Settings::load(f)?);
        }
        let s = s.overlay(flags);
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        for (name, v) in [
            ("success-ratio", self.success_ratio),
            ("observability", self.observability),
            ("noise", self.noise),
        ] {
            let v = v.unwrap();
            if !(0.0..=1.0).contains(&v) {
                return Err(CliError::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        for (name, v) in [("eps-p", self.eps_p), ("eps-e", self.eps_e)] {
            let v = v.unwrap();
            if !(v > 0.0 && v <= 1.0) {
                return Err(CliError::Config(format!("{name} {v} outside (0, 1]")));
            }
        }
        for v in self.grid_noise.iter().flatten().chain(self.grid_observability.iter().flatten()) {
            if !(0.0..=1.0).contains(v) {
                return Err(CliError::Config(format!("grid level {v} outside [0, 1]")));
            }
        }
        if self.episode_len == Some(0) {
            return Err(CliError::Config("episode-len must be at least 1".into()));
        }
        if self.epochs == Some(0) {
            return Err(CliError::Config("epochs must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        self.kernel()?;
        self.variants()?;
        Ok(())
    }

    pub fn kernel(&self) -> Result<KernelSpec, CliError> {
        self.kernel.as_deref().unwrap().parse().map_err(CliError::Config)
    }

    pub fn variants(&self) -> Result<Vec<Variant>, CliError> {
        self.grid_variants
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|s| {
                let s = s.trim();
                if s.eq_ignore_ascii_case("standard") {
                    Ok(Variant::Standard)
                } else {
                    s.parse().map(Variant::Voted).map_err(CliError::Config)
                }
            })
            .collect()
    }

    pub fn require_domain(&self) -> Result<&Path, CliError> {
        self.domain
            .as_deref()
            .ok_or_else(|| CliError::Config("no domain given (--domain or `domain` in the config file)".into()))
    }

    pub fn require_problems(&self) -> Result<&[PathBuf], CliError> {
        match self.problems.as_deref() {
            Some(p) if !p.is_empty() => Ok(p),
            _ => Err(CliError::Config(
                "no problem given (--problem or `problems` in the config file)".into(),
            )),
        }
    }

    pub fn test_problem_paths(&self) -> Result<&[PathBuf], CliError> {
        match self.test_problems.as_deref() {
            Some(p) if !p.is_empty() => Ok(p),
            _ => self.require_problems(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let file: Settings = toml::from_str("steps = 50\nnoise = 0.05\nkernel = \"dnf\"").unwrap();
        let flags = Settings {
            steps: Some(70),
            ..Default::default()
        };
        let s = Settings::defaults().overlay(&file).overlay(&flags);
        assert_eq!(s.steps, Some(70));
        assert_eq!(s.noise, Some(0.05));
        assert_eq!(s.kernel().unwrap(), KernelSpec::Dnf);
        assert_eq!(s.epochs, Some(2));
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            Settings { noise: Some(1.5), ..Default::default() },
            Settings { eps_p: Some(0.0), ..Default::default() },
            Settings { kernel: Some("rbf".into()), ..Default::default() },
            Settings { grid_variants: Some(vec!["voted".into()]), ..Default::default() },
            Settings { episode_len: Some(0), ..Default::default() },
        ] {
            assert!(matches!(
                Settings::defaults().overlay(&bad).validate(),
                Err(CliError::Config(_))
            ));
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("stepz = 3").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let s = Settings::defaults();
        let back: Settings = toml::from_str(&s.to_toml()).unwrap();
        assert_eq!(back.to_toml(), s.to_toml());
    }
}
