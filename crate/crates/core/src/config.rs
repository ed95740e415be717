//! `key = value` run configuration.
//!
//! ```text
//! # reference run
//! mesh_n = 64
//! grid_m = 4
//! coefficient = checkerboard 10000 8
//! coarse = fixed 8
//! sweep_nj = 1..12
//! ```

use std::collections::HashMap;
use std::path::PathBuf;

use crate::coefficient::CoefficientKind;
use crate::error::{Error, Result};
use crate::forms::Source;
use crate::local::CoarseRule;

pub const KEYS: [&str; 13] = [
    "mesh_n",
    "grid_m",
    "overlap",
    "oversampling",
    "gamma0_sq",
    "coefficient",
    "seed",
    "source",
    "coarse",
    "sweep_nj",
    "output_dir",
    "checks",
    "samples",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh_n: usize,
    pub grid_m: usize,
    pub overlap: usize,
    pub oversampling: usize,
    pub gamma0_sq: f64,
    /// A log-uniform field draws from `seed`.
    pub coefficient: CoefficientKind,
    pub seed: u64,
    pub source: Source,
    pub coarse: CoarseRule,
    /// Fixed per-subdomain mode counts; empty runs `coarse` once.
    pub sweep_nj: Vec<usize>,
    pub output_dir: PathBuf,
    pub checks: bool,
    /// Random vectors per subdomain in the property suite.
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh_n: 64,
            grid_m: 4,
            overlap: 2,
            oversampling: 4,
            gamma0_sq: 10.0,
            coefficient: CoefficientKind::Constant(1.0),
            seed: 0,
            source: Source::Constant(1.0),
            coarse: CoarseRule::Fixed(8),
            sweep_nj: Vec::new(),
            output_dir: PathBuf::from("out"),
            checks: true,
            samples: 8,
        }
    }
}

fn bad(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Config { line, key: key.into(), message: message.into() }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, text: &str) -> Result<T> {
    text.trim().parse().map_err(|_| bad(line, key, format!("cannot parse {text:?}")))
}

fn words(value: &str) -> Vec<&str> {
    value.split_whitespace().collect()
}

fn parse_coefficient(line: usize, value: &str) -> Result<CoefficientKind> {
    let key = "coefficient";
    let w = words(value);
    let usage =
        "expected `constant C`, `checkerboard CONTRAST BLOCK`, `channels CONTRAST COUNT` or `log_uniform MIN MAX`";
    match w.as_slice() {
        ["constant", c] => Ok(CoefficientKind::Constant(number(line, key, c)?)),
        ["checkerboard", c, b] => {
            Ok(CoefficientKind::Checkerboard { contrast: number(line, key, c)?, block: number(line, key, b)? })
        }
        ["channels", c, k] => {
            Ok(CoefficientKind::Channels { contrast: number(line, key, c)?, count: number(line, key, k)? })
        }
        ["log_uniform", a, b] => {
            Ok(CoefficientKind::LogUniform { min: number(line, key, a)?, max: number(line, key, b)?, seed: 0 })
        }
        _ => Err(bad(line, key, usage)),
    }
}

fn parse_source(line: usize, value: &str) -> Result<Source> {
    match words(value).as_slice() {
        ["constant", c] => Ok(Source::Constant(number(line, "source", c)?)),
        ["sine"] => Ok(Source::Sine),
        _ => Err(bad(line, "source", "expected `constant C` or `sine`")),
    }
}

fn parse_coarse(line: usize, value: &str) -> Result<CoarseRule> {
    match words(value).as_slice() {
        ["fixed", n] => Ok(CoarseRule::Fixed(number(line, "coarse", n)?)),
        ["threshold", t] => Ok(CoarseRule::Threshold(number(line, "coarse", t)?)),
        _ => Err(bad(line, "coarse", "expected `fixed N` or `threshold TAU`")),
    }
}

/// Comma-separated counts; `a..b` expands to the inclusive range.
fn parse_sweep(line: usize, value: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let (a, b): (usize, usize) = (number(line, "sweep_nj", a)?, number(line, "sweep_nj", b)?);
            if a > b {
                return Err(bad(line, "sweep_nj", format!("empty range {item}")));
            }
            out.extend(a..=b);
        } else {
            out.push(number(line, "sweep_nj", item)?);
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut lines: HashMap<&str, usize> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(line, content, "expected `key = value`"))?;
            let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
                return Err(bad(line, key, "unknown key"));
            };
            if lines.insert(known, line).is_some() {
                return Err(bad(line, key, "duplicate key"));
            }
            match known {
                "mesh_n" => cfg.mesh_n = number(line, key, value)?,
                "grid_m" => cfg.grid_m = number(line, key, value)?,
                "overlap" => cfg.overlap = number(line, key, value)?,
                "oversampling" => cfg.oversampling = number(line, key, value)?,
                "gamma0_sq" => cfg.gamma0_sq = number(line, key, value)?,
                "coefficient" => cfg.coefficient = parse_coefficient(line, value)?,
                "seed" => cfg.seed = number(line, key, value)?,
                "source" => cfg.source = parse_source(line, value)?,
                "coarse" => cfg.coarse = parse_coarse(line, value)?,
                "sweep_nj" => cfg.sweep_nj = parse_sweep(line, value)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "checks" => {
                    cfg.checks = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad(line, key, "expected true or false")),
                    }
                }
                "samples" => cfg.samples = number(line, key, value)?,
                _ => unreachable!(),
            }
        }
        let seed = cfg.seed;
        cfg = cfg.with_seed(seed);
        cfg.validate(|key| lines.get(key).copied().unwrap_or(0))?;
        Ok(cfg)
    }

    /// Replaces the seed, including the one driving a random coefficient field.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let CoefficientKind::LogUniform { seed: s, .. } = &mut self.coefficient {
            *s = seed;
        }
        self
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self, line_of: impl Fn(&str) -> usize) -> Result<()> {
        let fail = |key: &str, message: String| Err(bad(line_of(key), key, message));
        if self.mesh_n == 0 {
            return fail("mesh_n", "the mesh needs at least one subdivision per side".into());
        }
        if self.grid_m == 0 || self.grid_m > self.mesh_n {
            return fail("grid_m", format!("grid size must lie in 1..={}", self.mesh_n));
        }
        if self.overlap < 2 {
            return fail("overlap", "overlap must be at least 2 layers".into());
        }
        if self.oversampling < 1 {
            return fail("oversampling", "oversampling must be at least 1 layer".into());
        }
        if !(self.gamma0_sq > 0.0 && self.gamma0_sq.is_finite()) {
            return fail("gamma0_sq", "penalty parameter must be positive".into());
        }
        match self.coefficient {
            CoefficientKind::Constant(c) if !(c > 0.0) => fail("coefficient", "constant must be positive".into()),
            CoefficientKind::Checkerboard { contrast, block }
                if !(contrast >= 1.0) || block == 0 || !self.mesh_n.is_multiple_of(block) =>
            {
                fail("coefficient", format!("need contrast >= 1 and a block size dividing {}", self.mesh_n))
            }
            CoefficientKind::Channels { contrast, count }
                if !(contrast >= 1.0) || count == 0 || 2 * count + 1 > self.mesh_n =>
            {
                fail("coefficient", "need contrast >= 1 and room for the channels".into())
            }
            CoefficientKind::LogUniform { min, max, .. } if !(min > 0.0 && max >= min) => {
                fail("coefficient", "need 0 < min <= max".into())
            }
            _ => Ok(()),
        }?;
        if let CoarseRule::Threshold(t) = self.coarse {
            if !(t >= 0.0) {
                return fail("coarse", "threshold must be nonnegative".into());
            }
        }
        Ok(())
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0_sq.sqrt()
    }

    /// Every key with its value; `parse` of the result gives back `self`.
    pub fn to_text(&self) -> String {
        let coefficient = match self.coefficient {
            CoefficientKind::Constant(c) => format!("constant {c:?}"),
            CoefficientKind::Checkerboard { contrast, block } => format!("checkerboard {contrast:?} {block}"),
            CoefficientKind::Channels { contrast, count } => format!("channels {contrast:?} {count}"),
            CoefficientKind::LogUniform { min, max, .. } => format!("log_uniform {min:?} {max:?}"),
        };
        let source = match self.source {
            Source::Constant(c) => format!("constant {c:?}"),
            Source::Sine => "sine".into(),
        };
        let coarse = match self.coarse {
            CoarseRule::Fixed(n) => format!("fixed {n}"),
            CoarseRule::Threshold(t) => format!("threshold {t:?}"),
        };
        let sweep: Vec<String> = self.sweep_nj.iter().map(|n| n.to_string()).collect();
        [
            format!("mesh_n = {}", self.mesh_n),
            format!("grid_m = {}", self.grid_m),
            format!("overlap = {}", self.overlap),
            format!("oversampling = {}", self.oversampling),
            format!("gamma0_sq = {:?}", self.gamma0_sq),
            format!("coefficient = {coefficient}"),
            format!("seed = {}", self.seed),
            format!("source = {source}"),
            format!("coarse = {coarse}"),
            format!("sweep_nj = {}", sweep.join(", ")),
            format!("output_dir = {}", self.output_dir.display()),
            format!("checks = {}", self.checks),
            format!("samples = {}", self.samples),
        ]
        .join("\n")
            + "\n"
    }
}
