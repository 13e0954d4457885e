//! Declarative scenario files and the sweep grid they expand to.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use securecyclon::{ScenarioConfig, Strategy};

use crate::report::Target;
use crate::CliError;

/// Inclusive seed range written `A..B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn single(seed: u64) -> Self {
        SeedRange { first: seed, last: seed }
    }

    pub fn iter(self) -> impl Iterator<Item = u64> {
        self.first..=self.last
    }

    pub fn len(self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

impl FromStr for SeedRange {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("seed range `{s}` is not of the form A..B"));
        let (a, b) = match s.split_once("..") {
            Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
            None => (s, s),
        };
        let first: u64 = a.trim().parse().map_err(|_| bad())?;
        let last: u64 = b.trim().parse().map_err(|_| bad())?;
        if last < first {
            return Err(CliError::Config(format!("seed range `{s}` is empty")));
        }
        Ok(SeedRange { first, last })
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

impl Serialize for SeedRange {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SeedRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSize {
    pub n: usize,
    pub view_len: usize,
}

/// Axes of the sweep grid. An empty axis keeps the base scenario's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub seeds: Option<SeedRange>,
    /// Network sizes; a claimed planted age follows the view length.
    pub sizes: Vec<NetworkSize>,
    pub swap_len: Vec<usize>,
    pub malicious_fraction: Vec<f64>,
    pub redemption_cache: Vec<usize>,
    pub titfortat: Vec<bool>,
    /// Ages for the cloning strategy.
    pub clone_age: Vec<u32>,
}

/// A scenario as written by hand: a base configuration, the sweep
/// grid around it and optional acceptance targets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub description: String,
    /// Output directory; the command line and environment take precedence.
    pub out: Option<String>,
    pub scenario: ScenarioConfig,
    pub sweep: Sweep,
    #[serde(rename = "target")]
    pub targets: Vec<Target>,
}

/// One fully resolved run of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    /// Label shared by every seed of this point.
    pub group: String,
    pub config: ScenarioConfig,
}

impl GridPoint {
    pub fn file_stem(&self) -> String {
        format!("{}.seed{}", self.group, self.config.seed)
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        file.scenario.validate()?;
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files are always serialisable")
    }

    /// Expands the sweep into grid points, seeds innermost.
    pub fn grid(&self, seeds: Option<SeedRange>) -> Result<Vec<GridPoint>, CliError> {
        let sw = &self.sweep;
        let seeds = seeds.or(sw.seeds).unwrap_or(SeedRange::single(self.scenario.seed));
        if !sw.clone_age.is_empty()
            && !matches!(self.scenario.attack.as_ref().map(|a| a.strategy), Some(Strategy::CloneAtAge { .. }))
        {
            return Err(CliError::Config("clone_age sweep needs a clone-at-age attack".into()));
        }
        if !sw.malicious_fraction.is_empty() && self.scenario.attack.is_none() {
            return Err(CliError::Config("malicious_fraction sweep needs an attack".into()));
        }

        let mut points = vec![(Vec::<String>::new(), self.scenario.clone())];
        expand(&mut points, &sw.sizes, |c, s| {
            c.params.n = s.n;
            c.params.view_len = s.view_len;
            c.params.swap_len = c.params.swap_len.min(s.view_len);
            if let Some(age) = c.attack.as_mut().and_then(|a| a.claimed_age.as_mut()) {
                *age = s.view_len as u32;
            }
            format!("n{}-l{}", s.n, s.view_len)
        });
        expand(&mut points, &sw.swap_len, |c, &s| {
            c.params.swap_len = s;
            format!("s{s}")
        });
        expand(&mut points, &sw.malicious_fraction, |c, &f| {
            if let Some(a) = c.attack.as_mut() {
                a.malicious_fraction = f;
                a.malicious_count = None;
            }
            format!("m{f}")
        });
        expand(&mut points, &sw.redemption_cache, |c, &r| {
            c.params.redemption_cache = r;
            format!("r{r}")
        });
        expand(&mut points, &sw.titfortat, |c, &t| {
            c.titfortat = t;
            if t { "tft".into() } else { "notft".into() }
        });
        expand(&mut points, &sw.clone_age, |c, &age| {
            if let Some(a) = c.attack.as_mut() {
                a.strategy = Strategy::CloneAtAge { age };
            }
            format!("age{age}")
        });

        let base = if self.name.is_empty() { "run" } else { &self.name };
        let mut out = Vec::with_capacity(points.len() * seeds.len());
        for (labels, config) in points {
            config.validate()?;
            let group = std::iter::once(base.to_owned()).chain(labels).collect::<Vec<_>>().join("-");
            for seed in seeds.iter() {
                out.push(GridPoint {
                    group: group.clone(),
                    config: ScenarioConfig { seed, ..config.clone() },
                });
            }
        }
        Ok(out)
    }
}

fn expand<T>(
    points: &mut Vec<(Vec<String>, ScenarioConfig)>,
    axis: &[T],
    apply: impl Fn(&mut ScenarioConfig, &T) -> String,
) {
    if axis.is_empty() {
        return;
    }
    let mut next = Vec::with_capacity(points.len() * axis.len());
    for (labels, config) in points.drain(..) {
        for value in axis {
            let mut c = config.clone();
            let mut l = labels.clone();
            l.push(apply(&mut c, value));
            next.push((l, c));
        }
    }
    *points = next;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!("1..10".parse::<SeedRange>().unwrap().len(), 10);
        assert_eq!("3..=4".parse::<SeedRange>().unwrap(), SeedRange { first: 3, last: 4 });
        assert_eq!("7".parse::<SeedRange>().unwrap(), SeedRange::single(7));
        assert!("5..2".parse::<SeedRange>().is_err());
        assert!("a..b".parse::<SeedRange>().is_err());
    }

    #[test]
    fn grid_is_a_product_with_seeds_innermost() {
        let file = ScenarioFile::parse(
            r#"
            name = "g"
            [scenario]
            cycles = 5
            [scenario.params]
            n = 50
            view_len = 10
            [sweep]
            swap_len = [2, 3]
            titfortat = [false, true]
            seeds = "1..3"
            "#,
        )
        .unwrap();
        let grid = file.grid(None).unwrap();
        assert_eq!(grid.len(), 12);
        assert_eq!(grid[0].file_stem(), "g-s2-notft.seed1");
        assert_eq!(grid[2].file_stem(), "g-s2-notft.seed3");
        assert_eq!(grid[11].group, "g-s3-tft");
        assert_eq!(grid[11].config.params.swap_len, 3);
        assert!(grid[11].config.titfortat);
        assert_eq!(file.grid(Some(SeedRange::single(9))).unwrap().len(), 4);
    }

    #[test]
    fn sweeps_needing_an_attack_are_rejected() {
        let file = ScenarioFile::parse("[sweep]\nclone_age = [1]\n").unwrap();
        assert!(matches!(file.grid(None), Err(CliError::Config(_))));
    }
}
