//! File formats: schema-versioned JSON, convergence CSV, OBJ meshes and grid
//! CSV input. Every write goes through a temporary file and a rename.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affine::Surface;
use crate::construct::{Chart, Gauge};
use crate::error::{JoyceError, Result};
use crate::grid::{Grid2, RectGrid};
use crate::potential::Potential;
use crate::seeds::{JetSource, ScalarField};
use crate::verify::{ResidualReport, SolutionProvenance, XGridSolution};

/// JSON formatter writing every float with 17 significant digits.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
}

/// Serialize with 17 significant digits per float and a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| JoyceError::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

/// SHA-256 of a potential's spec string, used to pair charts with potentials.
pub fn potential_hash(pot: &Potential) -> String {
    hex::encode(Sha256::digest(pot.spec_string().as_bytes()))
}

pub const CHART_SCHEMA: &str = "chart/1";
pub const FIELD_SCHEMA: &str = "field/1";
pub const REPORT_SCHEMA: &str = "report/1";
pub const SURFACE_REPORT_SCHEMA: &str = "surface-report/1";
pub const NODE_ORDER: &str = "row-major-r-fastest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    #[serde(rename = "H")]
    pub h: (f64, f64),
    pub r: (f64, f64),
}

impl Domain {
    fn of(g: &RectGrid) -> Self {
        Self {
            h: (g.axes[0].lo, g.axes[0].hi),
            r: (g.axes[1].lo, g.axes[1].hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartNode {
    #[serde(rename = "H")]
    pub h: f64,
    pub r: f64,
    pub x1: f64,
    pub x2: f64,
    pub u: f64,
    pub xi1: f64,
    pub xi2: f64,
    #[serde(rename = "J")]
    pub j: f64,
}

fn chart_nodes(chart: &Chart) -> Vec<ChartNode> {
    chart
        .grid()
        .points()
        .enumerate()
        .map(|(k, (_, _, p))| ChartNode {
            h: p[0],
            r: p[1],
            x1: chart.x1()[k],
            x2: chart.x2()[k],
            u: chart.u()[k],
            xi1: chart.xi1()[k],
            xi2: chart.xi2()[k],
            j: chart.j()[k],
        })
        .collect()
}

/// The chart JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartFile {
    pub schema: String,
    pub config_hash: String,
    pub potential: String,
    pub potential_hash: String,
    pub p_kind: String,
    /// The configuration that produced the chart, so it can be rebuilt.
    pub config: super::config::RunConfig,
    pub domain: Domain,
    pub grid: [usize; 2],
    pub order: String,
    pub gauge: Gauge,
    pub nodes: Vec<ChartNode>,
}

impl ChartFile {
    pub fn new(chart: &Chart, pot: &Potential, config: &super::config::RunConfig) -> Self {
        let g = chart.grid();
        let nodes = chart_nodes(chart);
        let (n0, n1) = g.shape();
        Self {
            schema: CHART_SCHEMA.into(),
            config_hash: config.hash(),
            potential: pot.spec_string(),
            potential_hash: potential_hash(pot),
            p_kind: chart.joyce().describe(),
            config: config.numerical(),
            domain: Domain::of(g),
            grid: [n0, n1],
            order: NODE_ORDER.into(),
            gauge: chart.gauge().clone(),
            nodes,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let f: Self = serde_json::from_str(&text)?;
        if f.schema != CHART_SCHEMA {
            return Err(JoyceError::InvalidInput(format!(
                "{}: schema `{}` is not {CHART_SCHEMA}",
                path.display(),
                f.schema
            )));
        }
        if f.nodes.len() != f.grid[0] * f.grid[1] {
            return Err(JoyceError::InvalidInput(format!(
                "{}: {} nodes for a {}x{} grid",
                path.display(),
                f.nodes.len(),
                f.grid[0],
                f.grid[1]
            )));
        }
        Ok(f)
    }

    /// Largest relative difference of the node data against a chart.
    pub fn max_deviation(&self, chart: &Chart) -> Result<f64> {
        let other = chart_nodes(chart);
        if other.len() != self.nodes.len() {
            return Err(JoyceError::GridMismatch(format!(
                "{} chart nodes against {} in the file",
                other.len(),
                self.nodes.len()
            )));
        }
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        Ok(self.nodes.iter().zip(&other).fold(0.0f64, |m, (a, b)| {
            [
                rel(a.h, b.h),
                rel(a.r, b.r),
                rel(a.x1, b.x1),
                rel(a.x2, b.x2),
                rel(a.u, b.u),
                rel(a.xi1, b.xi1),
                rel(a.xi2, b.xi2),
                rel(a.j, b.j),
            ]
            .into_iter()
            .fold(m, f64::max)
        }))
    }
}

/// A scalar field on a rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub schema: String,
    pub config_hash: String,
    pub name: String,
    pub domain: Domain,
    pub grid: [usize; 2],
    pub order: String,
    pub jet_source: String,
    pub values: Vec<f64>,
}

impl FieldFile {
    pub fn new(name: &str, field: &ScalarField, config_hash: &str) -> Self {
        let g = field.grid();
        let (n0, n1) = g.shape();
        Self {
            schema: FIELD_SCHEMA.into(),
            config_hash: config_hash.into(),
            name: name.into(),
            domain: Domain::of(g),
            grid: [n0, n1],
            order: NODE_ORDER.into(),
            jet_source: match field.jet_source() {
                JetSource::Analytic => "analytic".into(),
                JetSource::FiniteDifference => "finite-difference".into(),
            },
            values: field.values().to_vec(),
        }
    }
}

/// One named check with its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Smallest accepted value, if bounded below.
    pub min: Option<f64>,
    /// Largest accepted value, if bounded above.
    pub max: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn within(name: &str, value: f64, min: Option<f64>, max: Option<f64>) -> Self {
        Self {
            name: name.into(),
            value,
            min,
            max,
            pass: min.is_none_or(|m| value >= m) && max.is_none_or(|m| value <= m),
        }
    }

    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self::within(name, value, None, Some(limit))
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self::within(name, value, Some(limit), None)
    }

    /// A verdict reached elsewhere; `value` is 1 for pass and 0 for fail.
    pub fn flag(name: &str, pass: bool) -> Self {
        Self {
            pass,
            ..Self::within(name, if pass { 1.0 } else { 0.0 }, None, None)
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", if self.pass { "PASS" } else { "FAIL" }, self.name)?;
        match (self.min, self.max) {
            (None, None) => Ok(()),
            (Some(lo), None) => write!(f, ": {:.6e} (>= {lo:.3e})", self.value),
            (None, Some(hi)) => write!(f, ": {:.6e} (<= {hi:.3e})", self.value),
            (Some(lo), Some(hi)) => write!(f, ": {:.6e} (in [{lo:.3e}, {hi:.3e}])", self.value),
        }
    }
}

/// Report of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub config_hash: String,
    pub command: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Free-form details keyed by name.
    pub details: BTreeMap<String, serde_json::Value>,
}

impl RunReport {
    pub fn new(command: &str, config_hash: &str) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            config_hash: config_hash.into(),
            command: command.into(),
            pass: true,
            checks: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    pub fn check(&mut self, c: Check) {
        self.pass &= c.pass;
        self.checks.push(c);
    }

    pub fn detail<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.details.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }
}

/// Convergence table of a residual study.
pub fn convergence_csv(report: &ResidualReport, config_hash: &str) -> String {
    let mut s = format!(
        "# schema: convergence/1\n# config_hash: {config_hash}\n# study: {}\n# order: {}\n# pass: {}\n",
        report.name,
        report.order.map_or("none".to_string(), |o| format!("{o:.16e}")),
        report.pass
    );
    s.push_str("level,nodes_1,nodes_2,h,linf,l2,floor,resolved\n");
    for (k, l) in report.levels.iter().enumerate() {
        s.push_str(&format!(
            "{k},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            l.nodes.0,
            l.nodes.1,
            l.h,
            l.linf,
            l.l2,
            l.floor,
            l.resolved()
        ));
    }
    s
}

/// ASCII OBJ with one vertex per node in grid order and quad faces.
pub fn surface_obj(s: &Surface, config_hash: &str) -> String {
    let faces = s.faces();
    let mut out = format!(
        "# schema: surface/1\n# config_hash: {config_hash}\n# vertices {} faces {}\n",
        s.z.len(),
        faces.len()
    );
    for z in &s.z {
        out.push_str(&format!("v {:.16e} {:.16e} {:.16e}\n", z[0], z[1], z[2]));
    }
    for f in faces {
        out.push_str(&format!("f {} {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1, f[3] + 1));
    }
    out
}

/// Sidecar of an exported surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceReport {
    pub schema: String,
    pub config_hash: String,
    pub vertices: usize,
    pub faces: usize,
    pub degenerate_nodes: usize,
    pub zero_area: bool,
    pub consistency: [f64; 3],
    pub path_discrepancy: [f64; 3],
    pub rule: String,
    pub warning: Option<String>,
}

impl SurfaceReport {
    pub fn new(s: &Surface, config_hash: &str) -> Self {
        let zero_area = s.zero_area();
        Self {
            schema: SURFACE_REPORT_SCHEMA.into(),
            config_hash: config_hash.into(),
            vertices: s.z.len(),
            faces: s.faces().len(),
            degenerate_nodes: s.degenerate_nodes,
            zero_area,
            consistency: s.consistency,
            path_discrepancy: s.path_discrepancy,
            rule: s.rule.to_string(),
            warning: zero_area.then(|| "zero-area surface: every tangent plane is degenerate".to_string()),
        }
    }
}

/// Write `<path>` as OBJ and `<path stem>.report.json` beside it.
pub fn export_surface(s: &Surface, path: &Path, config_hash: &str) -> Result<SurfaceReport> {
    write_atomic(path, surface_obj(s, config_hash).as_bytes())?;
    let report = SurfaceReport::new(s, config_hash);
    write_json(&path.with_extension("report.json"), &report)?;
    Ok(report)
}

/// Rectangular grid and values from `(a, b, value)` rows in any order.
pub fn grid_from_triples(rows: &[[f64; 3]]) -> Result<(RectGrid, Vec<f64>)> {
    let axis = |c: usize| -> Result<Vec<f64>> {
        let mut v: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        if v.len() < 2 {
            return Err(JoyceError::InvalidInput(format!(
                "column {} has fewer than 2 distinct values",
                c + 1
            )));
        }
        let step = (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64;
        if let Some(k) = (0..v.len()).find(|&k| (v[k] - (v[0] + step * k as f64)).abs() > 1e-9 * step.abs().max(1.0)) {
            return Err(JoyceError::InvalidInput(format!(
                "column {} is not uniformly spaced near {}",
                c + 1,
                v[k]
            )));
        }
        Ok(v)
    };
    let (a, b) = (axis(0)?, axis(1)?);
    if rows.len() != a.len() * b.len() {
        return Err(JoyceError::InvalidInput(format!(
            "{} rows do not fill a {}x{} grid",
            rows.len(),
            a.len(),
            b.len()
        )));
    }
    let grid = RectGrid::new((a[0], a[a.len() - 1]), (b[0], b[b.len() - 1]), a.len(), b.len())?;
    let mut values = vec![f64::NAN; grid.len()];
    for r in rows {
        let (i, j) = grid.nearest([r[0], r[1]]);
        let k = grid.idx(i, j);
        if !values[k].is_nan() {
            return Err(JoyceError::InvalidInput(format!("duplicate node ({}, {})", r[0], r[1])));
        }
        values[k] = r[2];
    }
    Ok((grid, values))
}

/// Three-column numeric CSV with one header line.
pub fn read_triples(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(JoyceError::InvalidInput(format!(
                "{} line {}: expected 3 columns, got {}",
                path.display(),
                n + 1,
                cols.len()
            )));
        }
        let mut row = [0.0; 3];
        for (c, t) in cols.iter().enumerate() {
            row[c] = t.parse().map_err(|_| {
                JoyceError::InvalidInput(format!("{} line {}: bad number `{t}`", path.display(), n + 1))
            })?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `(H, r, value)` CSV as a field with finite-difference jets.
pub fn read_field_csv(path: &Path) -> Result<ScalarField> {
    let (grid, values) = grid_from_triples(&read_triples(path)?)?;
    ScalarField::from_values(grid, values)
}

/// `(x1, x2, u)` CSV as a solution.
pub fn read_solution_csv(path: &Path) -> Result<XGridSolution> {
    let (grid, values) = grid_from_triples(&read_triples(path)?)?;
    XGridSolution::from_values(grid, values, SolutionProvenance::ExternalFile)
}

/// Header plus one `(a, b, value)` row per node.
pub fn grid_csv(grid: &Grid2, values: &[f64], header: [&str; 3]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for (k, (_, _, p)) in grid.points().enumerate() {
        s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p[0], p[1], values[k]));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{chern_terng_integrate, AffineOptions, HarmonicExpr, HarmonicTriple};
    use crate::cli_io::config::RunConfig;
    use crate::construct::assemble_chart;
    use crate::potential::{derive_joyce_data, JoyceMode};
    use crate::seeds::{make_seed, SeedSpec};

    fn worked_chart(n: usize) -> (Chart, RunConfig) {
        let cfg = RunConfig {
            grid: [n, n],
            ..RunConfig::default()
        };
        let jd = derive_joyce_data(&Potential::logdet(), JoyceMode::ClosedForm).unwrap();
        let g = cfg.seed_grid().unwrap();
        let s1 = make_seed(&SeedSpec::CoordinateH, &jd, &g).unwrap();
        let s2 = make_seed(&SeedSpec::LogR, &jd, &g).unwrap();
        (
            assemble_chart(&s1, &s2, &jd, cfg.base_node(), &Default::default()).unwrap(),
            cfg,
        )
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        let text = String::from_utf8(to_json_bytes(&vec![0.1, -2.5e-300, 1.0 / 3.0]).unwrap()).unwrap();
        assert_eq!(
            text,
            "[1.0000000000000001e-1,-2.5000000000000000e-300,3.3333333333333331e-1]\n"
        );
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, vec![0.1, -2.5e-300, 1.0 / 3.0]);
    }

    #[test]
    fn chart_file_round_trips() {
        let (chart, cfg) = worked_chart(33);
        let file = ChartFile::new(&chart, &Potential::logdet(), &cfg);
        assert_eq!(file.nodes.len(), 1089);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chart.json");
        write_json(&path, &file).unwrap();
        let back = ChartFile::read(&path).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.max_deviation(&chart).unwrap(), 0.0);
        let again = dir.path().join("again.json");
        write_json(&again, &ChartFile::new(&chart, &Potential::logdet(), &cfg)).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn chart_file_rejects_wrong_schema() {
        let dir = tempfile::tempdir().unwrap();
        let (chart, cfg) = worked_chart(9);
        let mut file = ChartFile::new(&chart, &Potential::logdet(), &cfg);
        file.schema = "chart/0".into();
        let path = dir.path().join("c.json");
        write_json(&path, &file).unwrap();
        assert!(matches!(ChartFile::read(&path), Err(JoyceError::InvalidInput(_))));
    }

    #[test]
    fn paraboloid_obj_counts() {
        use HarmonicExpr::*;
        let g = Grid2::new((-1.0, 1.0), (-1.0, 1.0), 17, 17).unwrap();
        let t = HarmonicTriple::new([First.field(g), Second.field(g), Constant(1.0).field(g)], 1e-6).unwrap();
        let s = chern_terng_integrate(&t, (8, 8), &AffineOptions::default()).unwrap();
        let obj = surface_obj(&s, "h");
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 289);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 256);
        let dir = tempfile::tempdir().unwrap();
        let rep = export_surface(&s, &dir.path().join("s.obj"), "h").unwrap();
        assert!(rep.warning.is_none());
        assert!(dir.path().join("s.report.json").exists());
    }

    #[test]
    fn constant_surface_warns_in_sidecar() {
        let g = Grid2::new((0.0, 1.0), (0.0, 1.0), 5, 5).unwrap();
        let c = HarmonicExpr::Constant(1.0).field(g);
        let t = HarmonicTriple::new([c.clone(), c.clone(), c], 1e-6).unwrap();
        let s = chern_terng_integrate(&t, (0, 0), &AffineOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let rep = export_surface(&s, &dir.path().join("flat.obj"), "h").unwrap();
        assert!(rep.zero_area && rep.warning.is_some());
        let text = std::fs::read_to_string(dir.path().join("flat.report.json")).unwrap();
        assert!(text.contains("zero-area"));
    }

    #[test]
    fn grid_csv_round_trips_in_any_order() {
        let g = Grid2::new((0.0, 1.0), (1.0, 2.0), 5, 4).unwrap();
        let values: Vec<f64> = g.points().map(|(_, _, p)| p[0] * 3.0 - p[1]).collect();
        let text = grid_csv(&g, &values, ["H", "r", "xi"]);
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, lines.join("\n")).unwrap();
        let f = read_field_csv(&path).unwrap();
        assert_eq!(f.grid().shape(), (5, 4));
        assert_eq!(f.values(), &values[..]);
    }

    #[test]
    fn grid_csv_refuses_holes() {
        let rows = [[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        assert!(grid_from_triples(&rows).is_err());
        let uneven = [[0.0, 0.0, 1.0], [0.1, 0.0, 1.0], [1.0, 0.0, 1.0]];
        assert!(grid_from_triples(&uneven).is_err());
    }
}
