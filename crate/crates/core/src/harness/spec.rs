use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sphere::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    MleSpeed,
    Type1Power,
    RegressionFit,
    Discrim,
    MixtureRecovery,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::MleSpeed,
        Preset::Type1Power,
        Preset::RegressionFit,
        Preset::Discrim,
        Preset::MixtureRecovery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::MleSpeed => "mle-speed",
            Preset::Type1Power => "type1-power",
            Preset::RegressionFit => "regression-fit",
            Preset::Discrim => "discrim",
            Preset::MixtureRecovery => "mixture-recovery",
        }
    }

    pub fn default_replicates(self) -> usize {
        match self {
            Preset::MleSpeed => 10,
            Preset::MixtureRecovery => 200,
            _ => 1000,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}'")))
    }
}

/// Which data-generating families a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilySelection {
    One(Family),
    Both,
}

impl FamilySelection {
    pub fn families(self) -> Vec<Family> {
        match self {
            FamilySelection::One(f) => vec![f],
            FamilySelection::Both => Family::ALL.to_vec(),
        }
    }
}

impl FromStr for FamilySelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "both" => Ok(FamilySelection::Both),
            other => other.parse().map(FamilySelection::One).map_err(|_| Error::Config(format!("unknown family '{s}'"))),
        }
    }
}

/// One grid point. `family` is the data-generating law.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub family: Family,
    pub n: usize,
    /// Second sample size for two-sample designs.
    pub n2: Option<usize>,
    pub d: usize,
    /// Angle between locations, degrees.
    pub theta: Option<f64>,
    pub k: Option<usize>,
}

impl Cell {
    /// Stable text key; also the source of the cell's stream index.
    pub fn key(&self) -> String {
        let mut s = format!("data={}", self.family.as_str());
        match self.n2 {
            Some(n2) => s.push_str(&format!(" n={},{}", self.n, n2)),
            None => s.push_str(&format!(" n={}", self.n)),
        }
        s.push_str(&format!(" d={}", self.d));
        if let Some(t) = self.theta {
            s.push_str(&format!(" theta={t}"));
        }
        if let Some(k) = self.k {
            s.push_str(&format!(" K={k}"));
        }
        s
    }
}

/// Grid lists; `None` means the preset's table grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub ns: Option<Vec<usize>>,
    pub sizes: Option<Vec<(usize, usize)>>,
    pub ds: Option<Vec<usize>>,
    pub thetas: Option<Vec<f64>>,
    pub ks: Option<Vec<usize>>,
}

/// Protocol constants shared by the presets.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    /// Concentration of timing data and of both discriminant groups.
    pub rho: Option<f64>,
    /// Concentrations of the two samples in the testing design.
    pub rho_pair: (f64, f64),
    /// Component concentrations in the mixture design are uniform on this range.
    pub rho_range: (f64, f64),
    /// Concentration of the von Mises-Fisher law that scatters mixture locations.
    pub kappa: f64,
    /// `K_max = K + k_max_extra`.
    pub k_max_extra: usize,
    pub n_starts: usize,
    pub folds: usize,
    pub timing_reps: usize,
    pub alpha: f64,
    /// Draw the regression coefficient matrix once per cell instead of per replicate.
    pub fixed_coefficients: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            rho: None,
            rho_pair: (0.3, 0.8),
            rho_range: (0.7, 0.9),
            kappa: 1.0,
            k_max_extra: 3,
            n_starts: 10,
            folds: 10,
            timing_reps: 7,
            alpha: 0.05,
            fixed_coefficients: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub family: FamilySelection,
    pub replicates: usize,
    pub base_seed: u64,
    pub grid: Grid,
    pub protocol: Protocol,
}

impl ExperimentSpec {
    pub fn new(preset: Preset) -> Self {
        Self {
            preset,
            family: FamilySelection::Both,
            replicates: preset.default_replicates(),
            base_seed: 1,
            grid: Grid::default(),
            protocol: Protocol::default(),
        }
    }

    fn ns(&self) -> Vec<usize> {
        self.grid.ns.clone().unwrap_or_else(|| match self.preset {
            Preset::MleSpeed => vec![100, 500, 1000, 2000, 5000, 10000, 20000],
            Preset::RegressionFit | Preset::Discrim => vec![50, 100, 200],
            Preset::MixtureRecovery => vec![500, 1000],
            Preset::Type1Power => vec![],
        })
    }

    fn ds(&self, theta: Option<f64>) -> Vec<usize> {
        if let Some(ds) = &self.grid.ds {
            return ds.clone();
        }
        match self.preset {
            Preset::MleSpeed => vec![2, 4, 6, 9, 19],
            // The testing table lists different dimensions for its null and
            // alternative blocks.
            Preset::Type1Power if theta.unwrap_or(0.0) != 0.0 => vec![3, 5, 7, 10],
            _ => vec![2, 4, 6, 9],
        }
    }

    fn thetas(&self) -> Vec<f64> {
        self.grid.thetas.clone().unwrap_or_else(|| match self.preset {
            Preset::Type1Power => vec![0.0, 15.0, 30.0],
            _ => vec![15.0, 30.0],
        })
    }

    /// Grid cells in report order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for family in self.family.families() {
            let base = Cell {
                family,
                n: 0,
                n2: None,
                d: 0,
                theta: None,
                k: None,
            };
            match self.preset {
                Preset::MleSpeed | Preset::RegressionFit => {
                    for n in self.ns() {
                        for d in self.ds(None) {
                            cells.push(Cell { n, d, ..base.clone() });
                        }
                    }
                }
                Preset::Type1Power => {
                    let sizes = self.grid.sizes.clone().unwrap_or_else(|| vec![(50, 30), (70, 50), (100, 70)]);
                    for theta in self.thetas() {
                        for &(n, n2) in &sizes {
                            for d in self.ds(Some(theta)) {
                                cells.push(Cell {
                                    n,
                                    n2: Some(n2),
                                    d,
                                    theta: Some(theta),
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
                Preset::Discrim => {
                    for theta in self.thetas() {
                        for n in self.ns() {
                            for d in self.ds(None) {
                                cells.push(Cell {
                                    n,
                                    d,
                                    theta: Some(theta),
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
                Preset::MixtureRecovery => {
                    let ks = self.grid.ks.clone().unwrap_or_else(|| vec![2, 3, 4, 5]);
                    for n in self.ns() {
                        for &k in &ks {
                            for d in self.ds(None) {
                                cells.push(Cell {
                                    n,
                                    d,
                                    k: Some(k),
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        let p = &self.protocol;
        let in_unit = |r: f64| (0.0..1.0).contains(&r);
        if !(in_unit(p.rho_pair.0) && in_unit(p.rho_pair.1) && p.rho.is_none_or(in_unit)) {
            return Err(Error::Config("concentrations must lie in [0, 1)".into()));
        }
        if !(in_unit(p.rho_range.0) && in_unit(p.rho_range.1) && p.rho_range.0 <= p.rho_range.1) {
            return Err(Error::Config("rho_min and rho_max must satisfy 0 <= rho_min <= rho_max < 1".into()));
        }
        if p.kappa.is_nan() || p.kappa < 0.0 {
            return Err(Error::Config("kappa must be non-negative".into()));
        }
        if p.folds < 2 || p.n_starts == 0 || p.timing_reps == 0 {
            return Err(Error::Config("folds >= 2, n_starts >= 1 and timing_reps >= 1 are required".into()));
        }
        if !(p.alpha > 0.0 && p.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        for c in self.cells() {
            if c.d == 0 || c.n < 2 || c.n2 == Some(0) || c.k == Some(0) {
                return Err(Error::Config(format!("invalid cell {}", c.key())));
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment; lists are
    /// comma-separated and sample-size pairs are written `n1:n2`.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip_prefix(e))))?;
        }
        Ok(())
    }

    /// Reads a config file. A `preset` key, when present, must come first
    /// or match the spec's preset.
    pub fn from_config_file(path: impl AsRef<Path>, preset: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text, preset)
    }

    pub fn from_config_str(text: &str, preset: Option<Preset>) -> Result<Self> {
        let in_file = text.lines().find_map(|l| {
            let l = l.split('#').next()?.trim();
            let (k, v) = l.split_once('=')?;
            (k.trim() == "preset").then(|| v.trim().to_string())
        });
        let preset = match (in_file, preset) {
            (Some(p), _) => p.parse()?,
            (None, Some(p)) => p,
            (None, None) => return Err(Error::Config("no preset given".into())),
        };
        let mut spec = Self::new(preset);
        spec.apply_config(text)?;
        Ok(spec)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.protocol;
        match key {
            "preset" => {
                let preset: Preset = value.parse()?;
                if preset != self.preset {
                    return Err(Error::Config(format!("preset '{preset}' conflicts with '{}'", self.preset)));
                }
            }
            "family" => self.family = value.parse()?,
            "replicates" => self.replicates = parse_one(value)?,
            "seed" => self.base_seed = parse_one(value)?,
            "n" => self.grid.ns = Some(parse_list(value)?),
            "sizes" => {
                let pairs = value
                    .split(',')
                    .map(|pair| {
                        let (a, b) = pair
                            .split_once(':')
                            .ok_or_else(|| Error::Config(format!("size pair '{pair}' must look like n1:n2")))?;
                        Ok((parse_one(a)?, parse_one(b)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.grid.sizes = Some(pairs);
            }
            "d" => self.grid.ds = Some(parse_list(value)?),
            "theta" => self.grid.thetas = Some(parse_list(value)?),
            "k" => self.grid.ks = Some(parse_list(value)?),
            "rho" => p.rho = Some(parse_one(value)?),
            "rho1" => p.rho_pair.0 = parse_one(value)?,
            "rho2" => p.rho_pair.1 = parse_one(value)?,
            "rho_min" => p.rho_range.0 = parse_one(value)?,
            "rho_max" => p.rho_range.1 = parse_one(value)?,
            "kappa" => p.kappa = parse_one(value)?,
            "k_max_extra" => p.k_max_extra = parse_one(value)?,
            "n_starts" => p.n_starts = parse_one(value)?,
            "folds" => p.folds = parse_one(value)?,
            "timing_reps" => p.timing_reps = parse_one(value)?,
            "alpha" => p.alpha = parse_one(value)?,
            "fixed_coefficients" => p.fixed_coefficients = parse_one(value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn parse_one<T: FromStr>(v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("cannot parse '{}'", v.trim())))
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v.split(',').map(parse_one).collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config("empty list".into()));
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_grids_match_table_sizes() {
        let count = |p| ExperimentSpec::new(p).cells().len();
        assert_eq!(count(Preset::MleSpeed), 7 * 5 * 2);
        assert_eq!(count(Preset::Type1Power), 3 * 3 * 4 * 2);
        assert_eq!(count(Preset::RegressionFit), 3 * 4 * 2);
        assert_eq!(count(Preset::Discrim), 2 * 3 * 4 * 2);
        assert_eq!(count(Preset::MixtureRecovery), 2 * 4 * 4 * 2);
    }

    #[test]
    fn testing_grid_uses_block_dimensions() {
        let cells = ExperimentSpec::new(Preset::Type1Power).cells();
        assert!(cells.iter().filter(|c| c.theta == Some(0.0)).all(|c| [2, 4, 6, 9].contains(&c.d)));
        assert!(cells.iter().filter(|c| c.theta == Some(30.0)).all(|c| [3, 5, 7, 10].contains(&c.d)));
    }

    #[test]
    fn config_overrides_defaults() {
        let text = "# reduced run\npreset = type1-power\nfamily = sc\nreplicates = 300\nseed = 9\nsizes = 100:70\nd = 2\ntheta = 0\n";
        let spec = ExperimentSpec::from_config_str(text, None).unwrap();
        assert_eq!(spec.replicates, 300);
        assert_eq!(spec.base_seed, 9);
        let cells = spec.cells();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].key(), "data=sc n=100,70 d=2 theta=0");
    }

    #[test]
    fn config_errors_name_the_line() {
        let err = ExperimentSpec::from_config_str("preset = discrim\nbogus = 1\n", None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = ExperimentSpec::from_config_str("preset = discrim\nd = 2,x\n", None).unwrap_err();
        assert!(err.to_string().contains("'x'"), "{err}");
        assert!(ExperimentSpec::from_config_str("d = 2\n", None).is_err());
        assert!(ExperimentSpec::from_config_str("preset = discrim\n", Some(Preset::MleSpeed)).is_ok());
    }

    #[test]
    fn validation_rejects_bad_protocols() {
        let mut spec = ExperimentSpec::new(Preset::Discrim);
        spec.protocol.rho = Some(1.0);
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::new(Preset::MixtureRecovery);
        spec.protocol.rho_range = (0.9, 0.7);
        assert!(spec.validate().is_err());
        assert!(ExperimentSpec::new(Preset::RegressionFit).validate().is_ok());
    }
}
