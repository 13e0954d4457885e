//! Grid execution and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use securecyclon::{run, ScenarioConfig};

use crate::presets;
use crate::report::Target;
use crate::scenario::{GridPoint, ScenarioFile, SeedRange};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SECURECYCLON_OUT";
pub const DEFAULT_OUT: &str = "results";

pub fn version() -> &'static str {
    env!("SECURECYCLON_VERSION")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub group: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ScenarioConfig,
}

/// Everything needed to reproduce a results directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub name: String,
    #[serde(default)]
    pub targets: Vec<Target>,
    pub runs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn points(&self) -> Vec<GridPoint> {
        self.runs
            .iter()
            .map(|r| GridPoint {
                group: r.group.clone(),
                config: r.config.clone(),
            })
            .collect()
    }
}

/// A loaded `run` argument: a preset, a scenario file or a manifest.
#[derive(Clone, Debug)]
pub enum Source {
    Scenario(ScenarioFile),
    Manifest(Manifest),
}

impl Source {
    pub fn load(arg: &str) -> Result<Self, CliError> {
        if let Some(text) = presets::get(arg) {
            return ScenarioFile::parse(text).map(Source::Scenario);
        }
        let path = Path::new(arg);
        if !path.exists() {
            return Err(CliError::Config(format!(
                "`{arg}` is neither a file nor a preset ({})",
                presets::NAMES.join(", ")
            )));
        }
        if path.extension().is_some_and(|x| x == "json") {
            return Manifest::load(path).map(Source::Manifest);
        }
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        ScenarioFile::parse(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            .map(Source::Scenario)
    }

    pub fn name(&self) -> &str {
        match self {
            Source::Scenario(s) => &s.name,
            Source::Manifest(m) => &m.name,
        }
    }

    pub fn targets(&self) -> &[Target] {
        match self {
            Source::Scenario(s) => &s.targets,
            Source::Manifest(m) => &m.targets,
        }
    }

    /// Output directory the scenario asks for, if any.
    pub fn out(&self) -> Option<&str> {
        match self {
            Source::Scenario(s) => s.out.as_deref(),
            Source::Manifest(_) => None,
        }
    }

    /// A seed range replaces the seeds of scenarios and manifests alike.
    pub fn points(&self, seeds: Option<SeedRange>) -> Result<Vec<GridPoint>, CliError> {
        match self {
            Source::Scenario(s) => s.grid(seeds),
            Source::Manifest(m) => {
                let points = m.points();
                let Some(seeds) = seeds else {
                    return Ok(points);
                };
                let mut out = Vec::new();
                let mut seen = std::collections::HashSet::new();
                for p in points.into_iter().filter(|p| seen.insert(p.group.clone())) {
                    out.extend(seeds.iter().map(|seed| GridPoint {
                        group: p.group.clone(),
                        config: ScenarioConfig { seed, ..p.config.clone() },
                    }));
                }
                Ok(out)
            }
        }
    }
}

/// Output directory: flag, then environment, then the scenario, then
/// [`DEFAULT_OUT`].
pub fn resolve_out(flag: Option<PathBuf>, env: Option<String>, scenario: Option<&str>) -> PathBuf {
    flag.or_else(|| env.filter(|e| !e.is_empty()).map(PathBuf::from))
        .or_else(|| scenario.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Runs every point on at most `workers` threads and writes one CSV per
/// point plus the manifest.
pub fn execute(
    name: &str,
    targets: &[Target],
    points: &[GridPoint],
    workers: usize,
    out: &Path,
) -> Result<Manifest, CliError> {
    for p in points {
        p.config.validate()?;
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let runs = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let series = run(&p.config)?;
                let file = format!("{}.csv", p.file_stem());
                let path = out.join(&file);
                fs::write(&path, series.to_csv()).map_err(|e| CliError::io(&path, e))?;
                Ok(ManifestEntry {
                    file,
                    group: p.group.clone(),
                    seed: p.config.seed,
                    config_hash: series.config_hash,
                    config: p.config.clone(),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let manifest = Manifest {
        version: version().to_owned(),
        name: name.to_owned(),
        targets: targets.to_vec(),
        runs,
    };
    let path = out.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest is always serialisable");
    fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_directory_precedence() {
        let f = Some(PathBuf::from("flag"));
        assert_eq!(resolve_out(f.clone(), Some("env".into()), Some("file")), PathBuf::from("flag"));
        assert_eq!(resolve_out(None, Some("env".into()), Some("file")), PathBuf::from("env"));
        assert_eq!(resolve_out(None, Some(String::new()), Some("file")), PathBuf::from("file"));
        assert_eq!(resolve_out(None, None, None), PathBuf::from(DEFAULT_OUT));
    }

    #[test]
    fn unknown_source_is_a_config_error() {
        assert!(matches!(Source::load("no-such-preset"), Err(CliError::Config(_))));
        assert!(matches!(Source::load("fig3"), Ok(Source::Scenario(_))));
    }
}
