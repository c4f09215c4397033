//! Run configuration: flat `key = value` text or the equivalent JSON.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{JoyceError, Result};
use crate::grid::Grid2;
use crate::potential::{derive_joyce_data, JoyceData, JoyceMode, Potential};

/// Output file kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Obj,
    Svg,
}

impl FromStr for Format {
    type Err = JoyceError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "obj" => Ok(Self::Obj),
            "svg" => Ok(Self::Svg),
            other => Err(JoyceError::Config(format!(
                "unknown format `{other}` (json, csv, obj, svg)"
            ))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Obj => "obj",
            Self::Svg => "svg",
        })
    }
}

/// Named tolerances, settable with `tol.<name> = <value>` or `--tol <name>=<value>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative closedness of the integrated 1-forms.
    pub closedness: f64,
    /// Finest-level `L-inf` of fourth-order residuals.
    pub residual: f64,
    /// Smallest accepted convergence order.
    pub order: f64,
    /// Newton step size at convergence.
    pub newton: f64,
    /// Relative defect of the algebraic chart identities.
    pub identity: f64,
    /// Relative linear residual of seeds.
    pub linear: f64,
    /// Relative Laplacian of harmonic input.
    pub harmonic: f64,
    /// Gauge-aligned `L-inf` of recovered seeds.
    pub roundtrip: f64,
    /// Aligned `L-inf` between the two surface routes.
    pub equivalence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            closedness: 1e-6,
            residual: 1e-4,
            order: 1.9,
            newton: 1e-12,
            identity: 1e-10,
            linear: 1e-6,
            harmonic: 1e-6,
            roundtrip: 1e-3,
            equivalence: 1e-4,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 9] = [
        "closedness",
        "residual",
        "order",
        "newton",
        "identity",
        "linear",
        "harmonic",
        "roundtrip",
        "equivalence",
    ];

    fn slot(&mut self, name: &str) -> Result<&mut f64> {
        Ok(match name {
            "closedness" => &mut self.closedness,
            "residual" => &mut self.residual,
            "order" => &mut self.order,
            "newton" => &mut self.newton,
            "identity" => &mut self.identity,
            "linear" => &mut self.linear,
            "harmonic" => &mut self.harmonic,
            "roundtrip" => &mut self.roundtrip,
            "equivalence" => &mut self.equivalence,
            _ => {
                return Err(JoyceError::Config(format!(
                    "unknown tolerance `{name}` (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        let mut t = *self;
        t.slot(name).map(|v| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        *self.slot(name)? = value;
        Ok(())
    }

    /// Apply `name=value`.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (name, value) = assignment
            .split_once('=')
            .ok_or_else(|| JoyceError::Config(format!("tolerance `{assignment}` is not name=value")))?;
        self.set(name.trim(), parse_f64(value, "tolerance")?)
    }
}

/// Everything that determines the numbers a run produces, plus where to
/// write them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: String,
    pub joyce_mode: JoyceMode,
    /// `(H, r)` ranges.
    pub domain: [(f64, f64); 2],
    /// Nodes along `H` and `r`.
    pub grid: [usize; 2],
    pub seed1: String,
    pub seed2: String,
    /// Base node; `None` is the centre node.
    pub base: Option<[usize; 2]>,
    /// Nodes per side of the coarsest `x` grid in convergence studies.
    pub x_grid: usize,
    /// Number of refinement levels.
    pub refine: usize,
    /// Harmonic functions of the surface pipeline.
    pub harmonic1: String,
    pub harmonic2: String,
    pub tol: Tolerances,
    pub out: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            potential: "logdet".into(),
            joyce_mode: JoyceMode::ClosedForm,
            domain: [(0.0, 1.0), (2.0, 3.0)],
            grid: [65, 65],
            seed1: "H".into(),
            seed2: "logr".into(),
            base: None,
            x_grid: 33,
            refine: 3,
            harmonic1: "l1".into(),
            harmonic2: "l1*l2".into(),
            tol: Tolerances::default(),
            out: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Csv, Format::Obj, Format::Svg],
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| JoyceError::Config(format!("bad {what} `{}`", s.trim())))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| JoyceError::Config(format!("bad {what} `{}`", s.trim())))
}

/// `NxM`.
pub fn parse_grid(s: &str) -> Result<[usize; 2]> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| JoyceError::Config(format!("grid `{s}` is not NxM")))?;
    Ok([parse_usize(a, "grid size")?, parse_usize(b, "grid size")?])
}

/// `H0:H1,r0:r1`.
pub fn parse_domain(s: &str) -> Result<[(f64, f64); 2]> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| JoyceError::Config(format!("domain `{s}` is not H0:H1,r0:r1")))?;
    let range = |t: &str| -> Result<(f64, f64)> {
        let (lo, hi) = t
            .split_once(':')
            .ok_or_else(|| JoyceError::Config(format!("range `{t}` is not lo:hi")))?;
        Ok((parse_f64(lo, "range bound")?, parse_f64(hi, "range bound")?))
    };
    Ok([range(a)?, range(b)?])
}

/// `i,j` or `center`.
pub fn parse_base(s: &str) -> Result<Option<[usize; 2]>> {
    let s = s.trim();
    if s == "center" {
        return Ok(None);
    }
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| JoyceError::Config(format!("base `{s}` is not i,j or center")))?;
    Ok(Some([parse_usize(a, "base index")?, parse_usize(b, "base index")?]))
}

pub fn parse_formats(s: &str) -> Result<Vec<Format>> {
    let mut out = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(Format::from_str)
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// Help text describing the configuration file.
pub const CONFIG_HELP: &str = "\
Configuration file: flat `key = value` lines (`#` starts a comment) or the
equivalent JSON object. Command-line flags override file values.

  potential   = logdet | power:<alpha> | affine | file:<path.csv>
  joyce_mode  = closed-form | quadrature
  domain      = H0:H1,r0:r1
  grid        = NxM                       (nodes along H and r)
  seed1       = H | logr | pointsource:<Hc> | mode:<k>:<phase>:<R0>:<R0'>
                | expr:<name> | csv:<path>
  seed2       = (as seed1)
  base        = center | i,j
  x_grid      = <n>                       (coarsest x-grid nodes per side)
  refine      = <levels>
  harmonic1   = l1 | l2 | l1*l2 | l1^2-l2^2 | exp(l1)cos(l2) | const:<c>
                | csv:<path>
  harmonic2   = (as harmonic1)
  tol.<name>  = <value>   names: closedness residual order newton identity
                                 linear harmonic roundtrip equivalence
  out         = <directory>
  formats     = json,csv,obj,svg

Grid CSV files carry a header and three columns (H, r, value for seeds and
harmonic functions; x1, x2, u for solutions) on a complete rectangular grid
in any row order.";

impl RunConfig {
    /// Parse `key = value` text on top of the defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| JoyceError::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k.trim(), v.trim())
                .map_err(|e| JoyceError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(c)
    }

    /// Set one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "potential" => self.potential = v.to_string(),
            "joyce_mode" => self.joyce_mode = v.parse().map_err(|e: JoyceError| JoyceError::Config(e.to_string()))?,
            "domain" => self.domain = parse_domain(v)?,
            "grid" => self.grid = parse_grid(v)?,
            "seed1" => self.seed1 = v.to_string(),
            "seed2" => self.seed2 = v.to_string(),
            "base" => self.base = parse_base(v)?,
            "x_grid" => self.x_grid = parse_usize(v, "x_grid")?,
            "refine" => self.refine = parse_usize(v, "refine")?,
            "harmonic1" => self.harmonic1 = v.to_string(),
            "harmonic2" => self.harmonic2 = v.to_string(),
            "out" => self.out = PathBuf::from(v),
            "formats" => self.formats = parse_formats(v)?,
            _ => match key.strip_prefix("tol.") {
                Some(name) => self.tol.set(name, parse_f64(v, "tolerance")?)?,
                None => return Err(JoyceError::Config(format!("unknown key `{key}`"))),
            },
        }
        Ok(())
    }

    /// `key = value` text that [`RunConfig::from_kv`] reads back unchanged.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("potential", self.potential.clone());
        put("joyce_mode", self.joyce_mode.to_string());
        let [(h0, h1), (r0, r1)] = self.domain;
        put("domain", format!("{h0:?}:{h1:?},{r0:?}:{r1:?}"));
        put("grid", format!("{}x{}", self.grid[0], self.grid[1]));
        put("seed1", self.seed1.clone());
        put("seed2", self.seed2.clone());
        put(
            "base",
            match self.base {
                Some([i, j]) => format!("{i},{j}"),
                None => "center".into(),
            },
        );
        put("x_grid", self.x_grid.to_string());
        put("refine", self.refine.to_string());
        put("harmonic1", self.harmonic1.clone());
        put("harmonic2", self.harmonic2.clone());
        for name in Tolerances::NAMES {
            put(
                &format!("tol.{name}"),
                format!("{:?}", self.tol.get(name).expect("known name")),
            );
        }
        put("out", self.out.display().to_string());
        put(
            "formats",
            self.formats.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(","),
        );
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| JoyceError::Config(format!("JSON config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Read a file as JSON when it starts with `{`, else as `key = value`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| JoyceError::Config(format!("cannot read {}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            Self::from_kv(&text)
        }
    }

    /// SHA-256 of the canonical JSON of every field that affects the
    /// numbers; the output location and formats are left out.
    /// The settings that determine the numbers, without output choices.
    pub fn numerical(&self) -> Self {
        Self {
            out: PathBuf::new(),
            formats: Vec::new(),
            ..self.clone()
        }
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.numerical()).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn seed_grid(&self) -> Result<Grid2> {
        Grid2::new(self.domain[0], self.domain[1], self.grid[0], self.grid[1])
    }

    pub fn base_node(&self) -> (usize, usize) {
        match self.base {
            Some([i, j]) => (i, j),
            None => (self.grid[0] / 2, self.grid[1] / 2),
        }
    }

    pub fn potential(&self) -> Result<Potential> {
        Potential::parse(&self.potential)
    }

    pub fn joyce_data(&self) -> Result<JoyceData> {
        derive_joyce_data(&self.potential()?, self.joyce_mode)
    }

    /// Sizes of the `x` grids of a convergence study.
    pub fn levels(&self) -> Vec<usize> {
        (0..self.refine).map(|k| (self.x_grid - 1) * (1 << k) + 1).collect()
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Positive finite tolerances, a usable grid, a base inside it and
    /// known potential spelling.
    pub fn validate(&self) -> Result<()> {
        for name in Tolerances::NAMES {
            let v = self.tol.get(name)?;
            if !(v.is_finite() && v > 0.0) {
                return Err(JoyceError::Config(format!("tolerance {name} = {v} must be positive")));
            }
        }
        if self.grid.iter().any(|&n| n < 5) {
            return Err(JoyceError::Config(format!(
                "grid {:?} needs at least 5 nodes per side",
                self.grid
            )));
        }
        if self.x_grid < 9 || self.refine == 0 || self.refine > 6 {
            return Err(JoyceError::Config(format!(
                "x_grid = {} and refine = {} need x_grid >= 9 and 1 <= refine <= 6",
                self.x_grid, self.refine
            )));
        }
        let (i, j) = self.base_node();
        if i >= self.grid[0] || j >= self.grid[1] {
            return Err(JoyceError::Config(format!(
                "base ({i},{j}) outside grid {:?}",
                self.grid
            )));
        }
        self.seed_grid()?;
        self.potential()?;
        Ok(())
    }
}
