//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::covmodel::{CovSpec, SolverSettings};
use crate::error::{Error, Result};
use crate::markov::MarkovPairSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Covariance,
    Markov,
    Denoise,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Covariance => "cov",
            ExperimentKind::Markov => "markov",
            ExperimentKind::Denoise => "denoise",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Covariance => &[
                "p1",
                "r1",
                "n1",
                "p2",
                "delta_r",
                "n2_grid",
                "trials",
                "master_seed",
                "spike_scale",
                "noise_scale",
                "delta_s",
                "s1",
                "source_sparsity",
                "max_coherence",
            ],
            ExperimentKind::Markov => &[
                "p1",
                "p2",
                "rank",
                "rank_increment",
                "sparse_edits",
                "n1",
                "n2",
                "seed",
                "trials",
                "dump_trajectories",
            ],
            ExperimentKind::Denoise => &[
                "y2",
                "l1",
                "s1",
                "y1",
                "rank",
                "sparsity",
                "rank_increment",
                "edit_budget",
                "incoherence_mu",
            ],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cov" | "covariance" => Ok(ExperimentKind::Covariance),
            "markov" => Ok(ExperimentKind::Markov),
            "denoise" | "denoise-file" => Ok(ExperimentKind::Denoise),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

const COMMON_KEYS: &[&str] = &["experiment", "out", "jobs", "verbosity", "tolerance", "max_iterations", "timing"];

/// Inputs for denoising matrices read from files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenoiseSpec {
    pub y2: Option<PathBuf>,
    /// Source low-rank part; used together with `s1`.
    pub l1: Option<PathBuf>,
    pub s1: Option<PathBuf>,
    /// Raw source observation, decomposed with `rank` and `sparsity`.
    pub y1: Option<PathBuf>,
    pub rank: Option<usize>,
    pub sparsity: usize,
    pub rank_increment: usize,
    pub edit_budget: usize,
    pub incoherence_mu: Option<f64>,
}

impl DenoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let y2 = self.y2.as_ref().ok_or_else(|| Error::Config("denoise needs `y2`".into()))?;
        let mut inputs = vec![y2];
        match (&self.l1, &self.s1, &self.y1) {
            (Some(l), Some(s), None) => inputs.extend([l, s]),
            (None, None, Some(y)) => {
                if self.rank.is_none() {
                    return Err(Error::Config("estimating the source from `y1` needs `rank`".into()));
                }
                inputs.push(y);
            }
            _ => {
                return Err(Error::Config(
                    "give either both `l1` and `s1`, or `y1` with `rank` and `sparsity`".into(),
                ))
            }
        }
        for p in inputs {
            if !p.is_file() {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        if let Some(mu) = self.incoherence_mu {
            if !(mu > 0.0) {
                return Err(Error::Config(format!("incoherence_mu must be positive, got {mu}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub cov: CovSpec,
    pub markov: MarkovPairSpec,
    pub markov_trials: usize,
    /// Write every simulated trajectory to the output directory.
    pub dump_trajectories: bool,
    pub denoise: DenoiseSpec,
    pub solver: SolverSettings,
    pub out: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    pub verbosity: u8,
    /// Record wall-clock times. Off by default so result files are
    /// reproducible byte for byte.
    pub timing: bool,
}

impl RunConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            cov: CovSpec::default(),
            markov: MarkovPairSpec::default(),
            markov_trials: 20,
            dump_trajectories: false,
            denoise: DenoiseSpec::default(),
            solver: SolverSettings::default(),
            out: PathBuf::from("out"),
            jobs: 1,
            verbosity: 0,
            timing: false,
        }
    }

    /// Parses `text` for an experiment of kind `kind`. Relative input paths
    /// are resolved against `base_dir`.
    pub fn parse(kind: ExperimentKind, text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::new(kind);
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ln = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {ln}: expected `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), ln).is_some() {
                return Err(Error::Config(format!("line {ln}: key `{key}` given twice")));
            }
            cfg.set(key, value, base_dir)
                .map_err(|e| Error::Config(format!("line {ln}: {}", strip_prefix(e))))?;
        }
        Ok(cfg)
    }

    pub fn from_file(kind: ExperimentKind, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(kind, &text, base)
    }

    fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<()> {
        if !COMMON_KEYS.contains(&key) && !self.kind.keys().contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}` for experiment `{}`", self.kind)));
        }
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        match (self.kind, key) {
            (_, "experiment") => {
                let k: ExperimentKind = value.parse()?;
                if k != self.kind {
                    return Err(Error::Config(format!(
                        "config is for `{k}` but the `{}` command was run",
                        self.kind
                    )));
                }
            }
            (_, "out") => self.out = path(value),
            (_, "jobs") => self.jobs = num(key, value)?,
            (_, "verbosity") => self.verbosity = num(key, value)?,
            (_, "tolerance") => self.solver.tolerance = num(key, value)?,
            (_, "max_iterations") => self.solver.max_iterations = num(key, value)?,
            (_, "timing") => self.timing = num(key, value)?,

            (ExperimentKind::Covariance, _) => {
                let c = &mut self.cov;
                match key {
                    "p1" => c.p1 = num(key, value)?,
                    "r1" => c.r1 = num(key, value)?,
                    "n1" => c.n1 = num(key, value)?,
                    "p2" => c.p2 = num(key, value)?,
                    "delta_r" => c.delta_r = num(key, value)?,
                    "n2_grid" => c.n2_grid = list(key, value)?,
                    "trials" => c.trials = num(key, value)?,
                    "master_seed" => c.master_seed = num(key, value)?,
                    "spike_scale" => c.spike_scale = num(key, value)?,
                    "noise_scale" => c.noise_scale = num(key, value)?,
                    "delta_s" => c.delta_s = num(key, value)?,
                    "s1" => c.s1 = num(key, value)?,
                    "source_sparsity" => c.source_sparsity = num(key, value)?,
                    "max_coherence" => c.max_coherence = num(key, value)?,
                    _ => unreachable!("key list and match arms agree"),
                }
            }
            (ExperimentKind::Markov, _) => {
                let m = &mut self.markov;
                match key {
                    "p1" => m.p1 = num(key, value)?,
                    "p2" => m.p2 = num(key, value)?,
                    "rank" => m.rank = num(key, value)?,
                    "rank_increment" => m.rank_increment = num(key, value)?,
                    "sparse_edits" => m.sparse_edits = num(key, value)?,
                    "n1" => m.n1 = num(key, value)?,
                    "n2" => m.n2 = list(key, value)?,
                    "seed" => m.seed = num(key, value)?,
                    "trials" => self.markov_trials = num(key, value)?,
                    "dump_trajectories" => self.dump_trajectories = num(key, value)?,
                    _ => unreachable!("key list and match arms agree"),
                }
            }
            (ExperimentKind::Denoise, _) => {
                let d = &mut self.denoise;
                match key {
                    "y2" => d.y2 = Some(path(value)),
                    "l1" => d.l1 = Some(path(value)),
                    "s1" => d.s1 = Some(path(value)),
                    "y1" => d.y1 = Some(path(value)),
                    "rank" => d.rank = Some(num(key, value)?),
                    "sparsity" => d.sparsity = num(key, value)?,
                    "rank_increment" => d.rank_increment = num(key, value)?,
                    "edit_budget" => d.edit_budget = num(key, value)?,
                    "incoherence_mu" => d.incoherence_mu = Some(num(key, value)?),
                    _ => unreachable!("key list and match arms agree"),
                }
            }
        }
        Ok(())
    }

    /// Applies `--seed`; returns false for experiments without a seed.
    pub fn set_seed(&mut self, seed: u64) -> bool {
        match self.kind {
            ExperimentKind::Covariance => self.cov.master_seed = seed,
            ExperimentKind::Markov => self.markov.seed = seed,
            ExperimentKind::Denoise => return false,
        }
        true
    }

    /// Applies `--trials`; returns false for experiments without trials.
    pub fn set_trials(&mut self, trials: usize) -> bool {
        match self.kind {
            ExperimentKind::Covariance => self.cov.trials = trials,
            ExperimentKind::Markov => self.markov_trials = trials,
            ExperimentKind::Denoise => return false,
        }
        true
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 {
            return Err(Error::Config("tolerance must be positive and max_iterations at least 1".into()));
        }
        match self.kind {
            ExperimentKind::Covariance => self.cov.validate(),
            ExperimentKind::Markov => {
                if self.markov_trials == 0 {
                    return Err(Error::Config("trials must be at least 1".into()));
                }
                self.markov.validate()
            }
            ExperimentKind::Denoise => self.denoise.validate(),
        }
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| num(key, v.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_cov_keys_and_comments() {
        let text = "# study\nexperiment = cov\ntrials=3\nn2_grid = 30, 50\nmaster_seed = 7 # inline\nout = res\n";
        let cfg = RunConfig::parse(ExperimentKind::Covariance, text, Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.cov.trials, 3);
        assert_eq!(cfg.cov.n2_grid, vec![30, 50]);
        assert_eq!(cfg.cov.master_seed, 7);
        assert_eq!(cfg.out, PathBuf::from("/tmp/x/res"));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_repeated_and_mismatched_keys() {
        let k = ExperimentKind::Covariance;
        let base = Path::new(".");
        let e = RunConfig::parse(k, "trails = 3\n", base).unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("trails"), "{e}");
        assert!(RunConfig::parse(k, "trials = 3\ntrials = 4\n", base).is_err());
        assert!(RunConfig::parse(k, "experiment = markov\n", base).is_err());
        assert!(RunConfig::parse(k, "trials = many\n", base).is_err());
        assert!(RunConfig::parse(k, "trials\n", base).is_err());
        // Keys of other experiments are unknown here.
        assert!(RunConfig::parse(k, "sparse_edits = 2\n", base).is_err());
        assert!(RunConfig::parse(ExperimentKind::Markov, "n2_grid = 5\n", base).is_err());
    }

    #[test]
    fn markov_keys_and_overrides() {
        let mut cfg =
            RunConfig::parse(ExperimentKind::Markov, "n2 = 100,200\ntrials = 2\nseed = 5\n", Path::new(".")).unwrap();
        assert_eq!(cfg.markov.n2, vec![100, 200]);
        assert!(cfg.set_seed(9) && cfg.set_trials(4));
        assert_eq!((cfg.markov.seed, cfg.markov_trials), (9, 4));
        cfg.validate().unwrap();
    }

    #[test]
    fn denoise_requires_existing_inputs() {
        let cfg = RunConfig::parse(
            ExperimentKind::Denoise,
            "y2 = nope.txt\ny1 = nope1.txt\nrank = 2\n",
            Path::new("/nonexistent"),
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Io { .. })));
        let cfg = RunConfig::parse(ExperimentKind::Denoise, "y2 = a.txt\n", Path::new(".")).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
