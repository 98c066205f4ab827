//! Run configuration: line-based `key = value` text with dotted prefixes.
//!
//! ```text
//! # Cu at its equilibrium lattice constant, stretched along x
//! potential = cu
//! lattice.kind = fcc
//! lattice.a0 = equilibrium
//! deformation = A1
//! temperatures = 0, 100, 200, 300, 400, 500
//! grid.size = 16
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lattice::{BravaisLattice, DeformationGradient, LatticeKind, Mat3};
use crate::md::MdConfig;
use crate::potential::{EamCu, PairForm, PairPotential, Potential};
use crate::stress::equilibrium_lattice_constant;

/// Raw key/value pairs, later entries overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            map.set_pair(line).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(map)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected `key = value`, got `{pair}`")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("empty key in `{pair}`")));
        }
        self.values.insert(key.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("cannot parse `{key} = {v}`")))
            })
            .transpose()
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|_| Error::Config(format!("cannot parse `{s}` in `{key}`")))
                    })
                    .collect::<Result<Vec<T>>>()
            })
            .transpose()
    }

    fn keys(&self) -> impl Iterator<Item = &String> {
        self.values.keys()
    }
}

const KNOWN_KEYS: &[&str] = &[
    "potential",
    "lattice.kind",
    "lattice.a0",
    "deformation",
    "temperatures",
    "grid.kind",
    "grid.size",
    "grid.sizes",
    "shell_radius",
    "oracle.cells",
    "md.cells",
    "md.temperature",
    "md.dt",
    "md.equilibrate",
    "md.sample",
    "md.stride",
    "md.thermostat_period",
    "md.seed",
    "md.trajectory",
    "laplace.field",
    "laplace.lambdas",
    "study.temperature",
    "output",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialChoice {
    Cu,
    MorseSmooth,
    MorseC2,
}

impl PotentialChoice {
    pub fn build(self) -> Box<dyn Potential> {
        match self {
            PotentialChoice::Cu => Box::new(EamCu::default()),
            PotentialChoice::MorseSmooth => Box::new(PairPotential::copper_like(PairForm::MorseSmooth)),
            PotentialChoice::MorseC2 => Box::new(PairPotential::copper_like(PairForm::MorseC2)),
        }
    }
}

/// Lattice constant: explicit, or solved for zero stress at `A = I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatticeConstant {
    Equilibrium,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridChoice {
    MonkhorstPack,
    GammaCentered,
}

/// Validated run configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub potential: PotentialChoice,
    pub lattice_kind: LatticeKind,
    pub a0: LatticeConstant,
    pub deformation: DeformationGradient,
    pub temperatures: Vec<f64>,
    pub grid: GridChoice,
    pub grid_size: [usize; 3],
    pub grid_sizes: Vec<usize>,
    pub shell_radius: Option<f64>,
    pub oracle_cells: usize,
    pub md_cells: usize,
    pub md: MdConfig,
    pub seed: u64,
    pub trajectory: Option<PathBuf>,
    pub laplace_field: String,
    pub laplace_lambdas: Vec<f64>,
    pub study_temperature: f64,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            potential: PotentialChoice::Cu,
            lattice_kind: LatticeKind::Fcc,
            a0: LatticeConstant::Equilibrium,
            deformation: DeformationGradient::a0(),
            temperatures: vec![0.0, 100.0, 200.0, 300.0, 400.0, 500.0],
            grid: GridChoice::MonkhorstPack,
            grid_size: [16; 3],
            grid_sizes: vec![4, 8, 16, 32],
            shell_radius: None,
            oracle_cells: 4,
            md_cells: 6,
            md: MdConfig::default(),
            seed: 1,
            trajectory: None,
            laplace_field: "cos".into(),
            laplace_lambdas: vec![10.0, 20.0, 50.0, 100.0],
            study_temperature: 300.0,
            output: None,
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("`{key}` must be positive, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("`{key}` must be non-negative, got {v}")))
    }
}

fn grid_triple(key: &str, v: Vec<usize>) -> Result<[usize; 3]> {
    let t = match v.as_slice() {
        [n] => [*n; 3],
        [a, b, c] => [*a, *b, *c],
        _ => return Err(Error::Config(format!("`{key}` takes one or three sizes"))),
    };
    if t.contains(&0) {
        return Err(Error::Config(format!("`{key}` sizes must be positive")));
    }
    Ok(t)
}

/// Parses `A0`/`A1`/`A2`/`I` or nine row-major numbers.
pub fn parse_deformation(v: &str) -> Result<DeformationGradient> {
    if let Some(a) = DeformationGradient::preset(v.trim()) {
        return Ok(a);
    }
    let nums: Vec<f64> = v
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse deformation `{v}`")))?;
    if nums.len() != 9 {
        return Err(Error::Config(format!("deformation needs a preset or 9 numbers, got `{v}`")));
    }
    DeformationGradient::new(Mat3::from_row_slice(&nums)).map_err(|e| Error::Config(e.to_string()))
}

impl RunConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let mut c = RunConfig::default();
        if let Some(p) = map.get("potential") {
            c.potential = match p {
                "cu" => PotentialChoice::Cu,
                "morse-smooth" => PotentialChoice::MorseSmooth,
                "morse-c2" => PotentialChoice::MorseC2,
                other => return Err(Error::Config(format!("unknown potential `{other}`"))),
            };
        }
        if let Some(k) = map.get("lattice.kind") {
            c.lattice_kind = k.parse().map_err(|_| Error::Config(format!("unknown lattice kind `{k}`")))?;
        }
        if let Some(v) = map.get("lattice.a0") {
            c.a0 = if v == "equilibrium" {
                LatticeConstant::Equilibrium
            } else {
                let a0 = v.parse().map_err(|_| Error::Config(format!("cannot parse `lattice.a0 = {v}`")))?;
                LatticeConstant::Value(positive("lattice.a0", a0)?)
            };
        }
        if let Some(v) = map.get("deformation") {
            c.deformation = parse_deformation(v)?;
        }
        if let Some(ts) = map.list::<f64>("temperatures")? {
            c.temperatures = ts.into_iter().map(|t| non_negative("temperatures", t)).collect::<Result<_>>()?;
        }
        if let Some(g) = map.get("grid.kind") {
            c.grid = match g {
                "mp" | "monkhorst-pack" => GridChoice::MonkhorstPack,
                "gamma" => GridChoice::GammaCentered,
                other => return Err(Error::Config(format!("unknown grid kind `{other}`"))),
            };
        }
        if let Some(v) = map.list::<usize>("grid.size")? {
            c.grid_size = grid_triple("grid.size", v)?;
        }
        if let Some(v) = map.list::<usize>("grid.sizes")? {
            if v.is_empty() || v.contains(&0) {
                return Err(Error::Config("`grid.sizes` must list positive sizes".into()));
            }
            c.grid_sizes = v;
        }
        if let Some(v) = map.get("shell_radius") {
            c.shell_radius = if v == "auto" {
                None
            } else {
                let r = v.parse().map_err(|_| Error::Config(format!("cannot parse `shell_radius = {v}`")))?;
                Some(positive("shell_radius", r)?)
            };
        }
        if let Some(n) = map.parsed::<usize>("oracle.cells")? {
            c.oracle_cells = n;
        }
        if let Some(n) = map.parsed::<usize>("md.cells")? {
            c.md_cells = n;
        }
        if let Some(t) = map.parsed::<f64>("md.temperature")? {
            c.md.temperature = non_negative("md.temperature", t)?;
        }
        if let Some(dt) = map.parsed::<f64>("md.dt")? {
            c.md.dt = positive("md.dt", dt)?;
        }
        if let Some(n) = map.parsed::<usize>("md.equilibrate")? {
            c.md.n_equilibrate = n;
        }
        if let Some(n) = map.parsed::<usize>("md.sample")? {
            c.md.n_sample = n;
        }
        if let Some(n) = map.parsed::<usize>("md.stride")? {
            c.md.sample_stride = n;
        }
        if let Some(v) = map.get("md.thermostat_period") {
            c.md.thermostat_period = if v == "none" {
                None
            } else {
                let p = v.parse().map_err(|_| Error::Config(format!("cannot parse `md.thermostat_period = {v}`")))?;
                Some(positive("md.thermostat_period", p)?)
            };
        }
        if let Some(s) = map.parsed::<u64>("md.seed")? {
            c.seed = s;
        }
        if let Some(p) = map.get("md.trajectory") {
            c.trajectory = Some(PathBuf::from(p));
        }
        if let Some(f) = map.get("laplace.field") {
            c.laplace_field = f.to_string();
        }
        if let Some(ls) = map.list::<f64>("laplace.lambdas")? {
            c.laplace_lambdas = ls.into_iter().map(|l| positive("laplace.lambdas", l)).collect::<Result<_>>()?;
        }
        if let Some(t) = map.parsed::<f64>("study.temperature")? {
            c.study_temperature = non_negative("study.temperature", t)?;
        }
        if let Some(p) = map.get("output") {
            c.output = Some(PathBuf::from(p));
        }
        if c.oracle_cells == 0 || c.md_cells == 0 {
            return Err(Error::Config("cell counts must be positive".into()));
        }
        c.md.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    /// Lattice for the configured potential, solving for the equilibrium
    /// lattice constant when requested.
    pub fn lattice(&self, pot: &dyn Potential) -> Result<BravaisLattice> {
        let a0 = match self.a0 {
            LatticeConstant::Value(v) => v,
            LatticeConstant::Equilibrium => {
                let guess = match self.potential {
                    PotentialChoice::Cu => 3.6,
                    PotentialChoice::MorseSmooth | PotentialChoice::MorseC2 => 4.0,
                };
                equilibrium_lattice_constant(pot, self.lattice_kind, guess)?
            }
        };
        BravaisLattice::new(self.lattice_kind, a0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut m = ConfigMap::parse("# comment\npotential = cu\ndeformation = A1 # inline\ntemperatures = 0, 300\n").unwrap();
        m.set_pair("grid.size=8").unwrap();
        let c = RunConfig::from_map(&m).unwrap();
        assert_eq!(c.deformation, DeformationGradient::a1());
        assert_eq!(c.temperatures, vec![0.0, 300.0]);
        assert_eq!(c.grid_size, [8, 8, 8]);
    }

    #[test]
    fn explicit_deformation() {
        let a = parse_deformation("1 0 0, 0 1.01 0, 0 0 1").unwrap();
        assert_eq!(a.matrix()[(1, 1)], 1.01);
        assert!(parse_deformation("1 2 3").is_err());
        assert!(parse_deformation("-1 0 0 0 1 0 0 0 1").is_err());
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["nonsense", "bogus.key = 1", "temperatures = -5", "grid.size = 4 4", "md.stride = 0", "potential = al"] {
            let r = ConfigMap::parse(text).and_then(|m| RunConfig::from_map(&m));
            assert!(matches!(r, Err(Error::Config(_))), "{text}");
        }
    }
}
