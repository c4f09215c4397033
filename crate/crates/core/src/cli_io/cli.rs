//! Command-line front end. Each subcommand builds its inputs from the
//! configuration, runs one pipeline, writes its files and returns a report
//! whose verdict sets the exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::{parse_base, parse_domain, parse_formats, parse_grid, Format, RunConfig, CONFIG_HELP};
use super::contour::contour_svg;
use super::export::{
    convergence_csv, export_surface, potential_hash, read_field_csv, read_solution_csv, write_atomic, write_json,
    ChartFile, Check, FieldFile, RunReport,
};
use crate::affine::{chern_terng_integrate, equivalence_check, AffineOptions, HarmonicExpr, HarmonicTriple};
use crate::construct::{assemble_chart, nondegeneracy_mask, AssembleOptions, Chart, IntegrationOptions};
use crate::error::{ErrorClass, JoyceError, Result};
use crate::grid::{Grid2, XGrid};
use crate::inverse::{legendre_transform_grid, recover_seeds, InverseOptions};
use crate::potential::{derive_joyce_data, dual_potential, JoyceData, JoyceMode, Potential};
use crate::seeds::{linear_residual, make_seed, require_solution, residual_tolerance, ScalarField, SeedSpec};
use crate::verify::{
    convergence_study, euler_lagrange_residual, harmonicity_residual, inscribed_x_rect, resample_to_xgrid,
    residual_level, residual_ratio, LevelNorms, ResampleOptions, ResidualReport, XGridSolution, WINDOW_INSET,
};

/// Accepted band of the normalized flux-to-divergence residual ratio.
const RATIO_BAND: (f64, f64) = (0.5, 2.0);
/// Sample points per side when inscribing the `x` rectangle in a chart image.
const INSCRIBE_SAMPLES: usize = 32;
/// Largest relative difference tolerated between a chart file and its rebuild.
const REBUILD_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "joyce",
    version,
    about = "Solutions of fourth-order Monge-Ampere type equations from pairs of linear seeds, with residual verification",
    after_long_help = CONFIG_HELP
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Configuration file (key = value or JSON; see --help)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed grid nodes, NxM
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Seed domain, H0:H1,r0:r1
    #[arg(long, global = true, allow_hyphen_values = true)]
    domain: Option<String>,
    /// logdet | power:<alpha> | affine | file:<path.csv>
    #[arg(long, global = true)]
    potential: Option<String>,
    /// closed-form | quadrature
    #[arg(long, global = true)]
    joyce_mode: Option<String>,
    /// First seed spec
    #[arg(long, global = true, allow_hyphen_values = true)]
    seed1: Option<String>,
    /// Second seed spec
    #[arg(long, global = true, allow_hyphen_values = true)]
    seed2: Option<String>,
    /// Base node i,j or center
    #[arg(long, global = true)]
    base: Option<String>,
    /// Coarsest x-grid nodes per side
    #[arg(long, global = true)]
    x_grid: Option<usize>,
    /// Number of refinement levels
    #[arg(long, global = true)]
    refine: Option<usize>,
    /// Tolerance override name=value (repeatable)
    #[arg(long, global = true)]
    tol: Vec<String>,
    /// Output formats, e.g. json,csv,obj,svg
    #[arg(long, global = true)]
    format: Option<String>,
    /// Accept a chart file built for a different potential
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build both seeds and check that they solve the linear equation
    Seeds,
    /// Assemble a chart from the seeds and check its identities
    Construct,
    /// Residual convergence of a chart, a chart file or an (x1, x2, u) CSV
    Verify {
        /// chart.json written by `construct`, or an x1,x2,u CSV
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Recover the seeds from a solution
    Invert {
        /// x1,x2,u CSV; the configured chart is used when absent
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Surfaces from harmonic functions: both routes, or one triple with --f3
    Affine {
        #[arg(long, allow_hyphen_values = true)]
        f1: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        f2: Option<String>,
        /// Third component; integrates the triple alone
        #[arg(long, allow_hyphen_values = true)]
        f3: Option<String>,
    },
    /// Legendre transform of the chart against the dual potential
    Dual,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Seeds => "seeds",
            Self::Construct => "construct",
            Self::Verify { .. } => "verify",
            Self::Invert { .. } => "invert",
            Self::Affine { .. } => "affine",
            Self::Dual => "dual",
        }
    }
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::CheckFailed => 1,
        ErrorClass::Invalid => 2,
        ErrorClass::Numerical => 3,
    }
}

/// Run the command line and return the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cfg = match effective_config(&cli.global) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(e.class());
        }
    };
    match run(&cli, &cfg) {
        Ok(report) => {
            for c in &report.checks {
                println!("{c}");
            }
            println!(
                "{}: {}",
                report.command,
                if report.pass {
                    "all checks passed"
                } else {
                    "checks failed"
                }
            );
            if report.pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.class())
        }
    }
}

fn effective_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut c = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &g.out {
        c.out = v.clone();
    }
    if let Some(v) = &g.grid {
        c.grid = parse_grid(v)?;
    }
    if let Some(v) = &g.domain {
        c.domain = parse_domain(v)?;
    }
    if let Some(v) = &g.potential {
        c.potential = v.clone();
    }
    if let Some(v) = &g.joyce_mode {
        c.joyce_mode = v.parse::<JoyceMode>().map_err(|e| JoyceError::Config(e.to_string()))?;
    }
    if let Some(v) = &g.seed1 {
        c.seed1 = v.clone();
    }
    if let Some(v) = &g.seed2 {
        c.seed2 = v.clone();
    }
    if let Some(v) = &g.base {
        c.base = parse_base(v)?;
    }
    if let Some(v) = g.x_grid {
        c.x_grid = v;
    }
    if let Some(v) = g.refine {
        c.refine = v;
    }
    for t in &g.tol {
        c.tol.apply(t)?;
    }
    if let Some(v) = &g.format {
        c.formats = parse_formats(v)?;
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<RunReport> {
    let mut report = RunReport::new(cli.command.name(), &cfg.hash());
    match &cli.command {
        Command::Seeds => seeds_cmd(cfg, &mut report)?,
        Command::Construct => construct_cmd(cfg, &mut report)?,
        Command::Verify { input } => verify_cmd(cfg, &cli.global, input.as_deref(), &mut report)?,
        Command::Invert { input } => invert_cmd(cfg, input.as_deref(), &mut report)?,
        Command::Affine { f1, f2, f3 } => affine_cmd(cfg, [f1, f2, f3], &mut report)?,
        Command::Dual => dual_cmd(cfg, &mut report)?,
    }
    if cfg.wants(Format::Json) {
        write_json(&cfg.out.join(format!("{}-report.json", report.command)), &report)?;
        write_atomic(&cfg.out.join("config.json"), cfg.to_json().as_bytes())?;
    }
    Ok(report)
}

/// A seed from its spec, or from `csv:<path>` on the configured grid.
fn load_seed(spec: &str, jd: &JoyceData, grid: &Grid2) -> Result<ScalarField> {
    if let Some(path) = spec.strip_prefix("csv:") {
        let f = read_field_csv(Path::new(path))?;
        f.grid().check_same(grid)?;
        return Ok(f);
    }
    make_seed(&SeedSpec::parse(spec)?, jd, grid)
}

/// A harmonic function from its name, or from `csv:<path>`.
fn load_harmonic(spec: &str, grid: &Grid2) -> Result<ScalarField> {
    if let Some(path) = spec.strip_prefix("csv:") {
        let f = read_field_csv(Path::new(path))?;
        f.grid().check_same(grid)?;
        return Ok(f);
    }
    Ok(HarmonicExpr::parse(spec)?.field(*grid))
}

fn write_svg(cfg: &RunConfig, name: &str, grid: &Grid2, values: &[f64], title: &str, axes: [&str; 2]) -> Result<()> {
    if cfg.wants(Format::Svg) {
        write_atomic(&cfg.out.join(name), contour_svg(grid, values, title, axes).as_bytes())?;
    }
    Ok(())
}

fn write_field(cfg: &RunConfig, file: &str, name: &str, f: &ScalarField) -> Result<()> {
    if cfg.wants(Format::Json) {
        write_json(&cfg.out.join(file), &FieldFile::new(name, f, &cfg.hash()))?;
    }
    Ok(())
}

fn build_seeds(cfg: &RunConfig, jd: &JoyceData) -> Result<[ScalarField; 2]> {
    let grid = cfg.seed_grid()?;
    Ok([load_seed(&cfg.seed1, jd, &grid)?, load_seed(&cfg.seed2, jd, &grid)?])
}

fn build_chart(cfg: &RunConfig) -> Result<(Chart, Potential, JoyceData)> {
    let pot = cfg.potential()?;
    let jd = derive_joyce_data(&pot, cfg.joyce_mode)?;
    let [s1, s2] = build_seeds(cfg, &jd)?;
    require_solution("xi1", &s1, &jd, cfg.tol.linear)?;
    require_solution("xi2", &s2, &jd, cfg.tol.linear)?;
    let opts = AssembleOptions {
        integration: IntegrationOptions {
            rule: None,
            closedness_rel_tol: cfg.tol.closedness,
        },
    };
    let chart = assemble_chart(&s1, &s2, &jd, cfg.base_node(), &opts)?;
    Ok((chart, pot, jd))
}

fn resample_options(cfg: &RunConfig) -> ResampleOptions {
    ResampleOptions {
        newton_tol: cfg.tol.newton,
        ..ResampleOptions::default()
    }
}

fn inverse_options(cfg: &RunConfig) -> InverseOptions {
    InverseOptions {
        newton_tol: cfg.tol.newton,
        ..InverseOptions::default()
    }
}

fn x_grid_for(chart: &Chart, cfg: &RunConfig, n: usize) -> Result<XGrid> {
    let rect = inscribed_x_rect(chart, INSCRIBE_SAMPLES, &resample_options(cfg))?;
    XGrid::new(rect[0], rect[1], n, n)
}

fn seeds_cmd(cfg: &RunConfig, report: &mut RunReport) -> Result<()> {
    let jd = cfg.joyce_data()?;
    let seeds = build_seeds(cfg, &jd)?;
    for (k, s) in seeds.iter().enumerate() {
        let name = format!("xi{}", k + 1);
        let res = linear_residual(s, &jd)?;
        report.check(Check::at_most(
            &format!("{name}_linear_residual"),
            res.interior.linf,
            residual_tolerance(s, cfg.tol.linear),
        ));
        write_field(cfg, &format!("{name}.json"), &name, s)?;
        write_svg(cfg, &format!("{name}.svg"), s.grid(), s.values(), &name, ["H", "r"])?;
    }
    let nd = nondegeneracy_mask(&seeds[0], &seeds[1], cfg.base_node())?;
    let positive = nd.mask.iter().filter(|m| **m).count();
    report.check(Check::at_least("det_b_positive_nodes", positive as f64, 1.0));
    report.detail("joyce", &jd.describe())?;
    report.detail("nondegenerate_rect", &nd.rect)?;
    Ok(())
}

fn construct_cmd(cfg: &RunConfig, report: &mut RunReport) -> Result<()> {
    let (chart, pot, jd) = build_chart(cfg)?;
    let (det_defect, j_defect) = chart.identity_defects();
    report.check(Check::at_most("det_a_equals_p2_det_b", det_defect, cfg.tol.identity));
    report.check(Check::at_most("j_p2_equals_one", j_defect, cfg.tol.identity));
    report.detail("joyce", &jd.describe())?;
    report.detail("assembly", chart.report())?;
    report.detail("gauge", chart.gauge())?;
    if cfg.wants(Format::Json) {
        write_json(&cfg.out.join("chart.json"), &ChartFile::new(&chart, &pot, cfg))?;
    }
    write_svg(cfg, "chart-u.svg", chart.grid(), chart.u(), "u", ["H", "r"])?;
    Ok(())
}

/// Record the verdict of a convergence study and write its table.
fn record_study(cfg: &RunConfig, report: &mut RunReport, study: &ResidualReport, csv: &str) -> Result<()> {
    let finest = study.levels.last().expect("at least three levels");
    report.check(Check::flag(&format!("{}_convergence", study.name), study.pass));
    if let Some(order) = study.order {
        report.check(Check::at_least(
            &format!("{}_order", study.name),
            order,
            study.min_order,
        ));
    }
    if finest.resolved() {
        report.check(Check::at_most(
            &format!("{}_finest_linf", study.name),
            finest.linf,
            study.tolerance,
        ));
    }
    report.detail(&study.name, study)?;
    report.detail(&format!("{}_at_rounding", study.name), &study.at_rounding())?;
    if cfg.wants(Format::Csv) {
        write_atomic(
            &cfg.out.join(csv),
            convergence_csv(study, &report.config_hash).as_bytes(),
        )?;
    }
    Ok(())
}

fn verify_cmd(cfg: &RunConfig, g: &GlobalArgs, input: Option<&Path>, report: &mut RunReport) -> Result<()> {
    if let Some(path) = input.filter(|p| p.extension().is_some_and(|e| e == "csv")) {
        return verify_csv(cfg, path, report);
    }
    let (chart, pot, jd) = match input {
        None => build_chart(cfg)?,
        Some(path) => {
            let file = ChartFile::read(path)?;
            let mut pot = Potential::parse(&file.potential)?;
            if let Some(asked) = &g.potential {
                let asked = Potential::parse(asked)?;
                if potential_hash(&asked) != file.potential_hash {
                    if !g.force {
                        return Err(JoyceError::InvalidInput(format!(
                            "{} was built for potential `{}`, not `{}`; pass --force to verify anyway",
                            path.display(),
                            file.potential,
                            asked.spec_string()
                        )));
                    }
                    pot = asked;
                }
            }
            let (chart, _, jd) = build_chart(&file.config)?;
            let dev = file.max_deviation(&chart)?;
            if !(dev <= REBUILD_TOL) {
                return Err(JoyceError::CheckFailed(format!(
                    "{} differs from the chart rebuilt from its configuration by {dev:.3e}",
                    path.display()
                )));
            }
            report.detail("source_config_hash", &file.config_hash)?;
            (chart, pot, jd)
        }
    };
    let levels = cfg.levels();
    let grids = levels
        .iter()
        .map(|&n| x_grid_for(&chart, cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let mut ratios = Vec::new();
    let study = convergence_study("euler_lagrange", &levels, cfg.tol.order, cfg.tol.residual, |n| {
        let k = levels.iter().position(|&m| m == n).expect("known level");
        let sol = resample_to_xgrid(&chart, grids[k], &resample_options(cfg))?;
        let el = euler_lagrange_residual(&sol, &pot)?;
        let harmonicity = harmonicity_residual(&sol, &jd, &pot)?;
        ratios.push(residual_ratio(&el, &harmonicity, WINDOW_INSET)?);
        residual_level(&sol, WINDOW_INSET, |s| euler_lagrange_residual(s, &pot))
    })?;
    record_study(cfg, report, &study, "convergence.csv")?;
    for (k, r) in ratios.iter().enumerate() {
        report.check(Check::within(
            &format!("flux_ratio_level{k}"),
            r.normalized,
            Some(RATIO_BAND.0),
            Some(RATIO_BAND.1),
        ));
    }
    report.detail("flux_ratios", &ratios)?;
    Ok(())
}

/// Residual convergence of an external solution, coarsened by taking every
/// second and fourth node.
fn verify_csv(cfg: &RunConfig, path: &Path, report: &mut RunReport) -> Result<()> {
    let sol = read_solution_csv(path)?;
    let pot = cfg.potential()?;
    let (n0, n1) = sol.grid.shape();
    let strides: Vec<usize> = (0..cfg.refine).rev().map(|k| 1 << k).collect();
    for &s in &strides {
        if (n0 - 1) % s != 0 || (n1 - 1) % s != 0 || (n0 - 1) / s < 8 || (n1 - 1) / s < 8 {
            return Err(JoyceError::InvalidInput(format!(
                "a {n0}x{n1} grid cannot be coarsened by {s} for {} levels",
                cfg.refine
            )));
        }
    }
    let coarsen = |s: usize| -> Result<XGridSolution> {
        let g = XGrid::new(
            (sol.grid.axes[0].lo, sol.grid.axes[0].hi),
            (sol.grid.axes[1].lo, sol.grid.axes[1].hi),
            (n0 - 1) / s + 1,
            (n1 - 1) / s + 1,
        )?;
        let u = g.points().map(|(i, j, _)| sol.u[sol.grid.idx(i * s, j * s)]).collect();
        XGridSolution::from_values(g, u, sol.provenance)
    };
    let study = convergence_study("euler_lagrange", &strides, cfg.tol.order, cfg.tol.residual, |s| {
        residual_level(&coarsen(s)?, WINDOW_INSET, |x| euler_lagrange_residual(x, &pot))
    })?;
    record_study(cfg, report, &study, "convergence.csv")
}

fn invert_cmd(cfg: &RunConfig, input: Option<&Path>, report: &mut RunReport) -> Result<()> {
    let opts = inverse_options(cfg);
    let (sol, jd, reference) = match input {
        Some(path) => (read_solution_csv(path)?, cfg.joyce_data()?, None),
        None => {
            let (chart, _, jd) = build_chart(cfg)?;
            let n = *cfg.levels().last().expect("refine >= 1");
            let sol = resample_to_xgrid(&chart, x_grid_for(&chart, cfg, n)?, &resample_options(cfg))?;
            (sol, jd, Some(chart.seeds().clone()))
        }
    };
    let (n0, n1) = sol.grid.shape();
    let mut rec = recover_seeds(&sol, &jd, (n0 / 2, n1 / 2), &opts)?;
    if let Some([r1, r2]) = &reference {
        rec = rec.with_reference(r1, r2)?;
    }
    report.detail("flux_divergence", &rec.divergence)?;
    if let Some(gauge) = &rec.gauge {
        report.check(Check::at_most(
            "xi1_gauge_aligned_linf",
            gauge.linf[0],
            cfg.tol.roundtrip,
        ));
        report.check(Check::at_most(
            "xi2_gauge_aligned_linf",
            gauge.linf[1],
            cfg.tol.roundtrip,
        ));
        report.detail("gauge", gauge)?;
    }
    report.detail("path_discrepancy", &rec.path_discrepancy)?;
    write_field(cfg, "recovered-xi1.json", "xi1", &rec.xi1)?;
    write_field(cfg, "recovered-xi2.json", "xi2", &rec.xi2)?;
    write_svg(
        cfg,
        "recovered-xi1.svg",
        rec.grid(),
        rec.xi1.values(),
        "recovered xi1",
        ["H", "r"],
    )?;
    write_svg(
        cfg,
        "recovered-xi2.svg",
        rec.grid(),
        rec.xi2.values(),
        "recovered xi2",
        ["H", "r"],
    )?;
    Ok(())
}

fn affine_cmd(cfg: &RunConfig, f: [&Option<String>; 3], report: &mut RunReport) -> Result<()> {
    let grid = cfg.seed_grid()?;
    let base = cfg.base_node();
    let opts = AffineOptions {
        harmonic_rel_tol: cfg.tol.harmonic,
        linear_rel_tol: cfg.tol.linear,
        ..AffineOptions::default()
    };
    let f1 = load_harmonic(f[0].as_deref().unwrap_or(&cfg.harmonic1), &grid)?;
    let f2 = load_harmonic(f[1].as_deref().unwrap_or(&cfg.harmonic2), &grid)?;
    let hash = cfg.hash();
    if let Some(f3) = f[2] {
        let triple = HarmonicTriple::new([f1, f2, load_harmonic(f3, &grid)?], opts.harmonic_rel_tol)?;
        let s = chern_terng_integrate(&triple, base, &opts)?;
        report.detail("laplacian", &triple.laplacian)?;
        report.detail("path_discrepancy", &s.path_discrepancy)?;
        report.detail("zero_area", &s.zero_area())?;
        if cfg.wants(Format::Obj) {
            export_surface(&s, &cfg.out.join("chern-terng.obj"), &hash)?;
        }
        return Ok(());
    }
    let jd = derive_joyce_data(&Potential::affine_quarter(), JoyceMode::ClosedForm)?;
    let rep = equivalence_check(&f1, &f2, &jd, base, &opts)?;
    report.check(Check::at_most(
        "route_agreement_linf",
        rep.comparison.max(),
        cfg.tol.equivalence,
    ));
    report.detail("comparison", &rep.comparison)?;
    report.detail("route_a_zero_area", &rep.route_a.zero_area())?;
    if cfg.wants(Format::Obj) {
        export_surface(&rep.route_a, &cfg.out.join("route-a.obj"), &hash)?;
        export_surface(&rep.route_b, &cfg.out.join("route-b.obj"), &hash)?;
    }
    Ok(())
}

fn dual_cmd(cfg: &RunConfig, report: &mut RunReport) -> Result<()> {
    let (chart, pot, _) = build_chart(cfg)?;
    let dual = dual_potential(&pot);
    let levels = cfg.levels();
    let opts = inverse_options(cfg);
    let study = convergence_study("dual_euler_lagrange", &levels, cfg.tol.order, cfg.tol.residual, |n| {
        let sol = resample_to_xgrid(&chart, x_grid_for(&chart, cfg, n)?, &resample_options(cfg))?;
        let d = legendre_transform_grid(&sol, None, &opts)?;
        let level: LevelNorms = residual_level(&d, WINDOW_INSET, |s| euler_lagrange_residual(s, &dual))?;
        Ok(level)
    })?;
    report.detail("dual_potential", &dual.spec_string())?;
    record_study(cfg, report, &study, "dual-convergence.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_in(dir: &Path, args: &[&str]) -> i32 {
        let out = dir.to_str().unwrap();
        let mut argv = vec!["joyce"];
        argv.extend_from_slice(args);
        argv.extend_from_slice(&["--out", out]);
        run_cli(argv)
    }

    #[test]
    fn help_and_bad_flags() {
        assert_eq!(run_cli(["joyce", "--help"]), 0);
        assert_eq!(run_cli(["joyce", "construct", "--grid", "banana"]), 2);
        assert_eq!(run_cli(["joyce", "frobnicate"]), 2);
        assert_eq!(run_cli(["joyce", "seeds", "--tol", "nope=1"]), 2);
    }

    #[test]
    fn seeds_and_construct_write_files() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_in(dir.path(), &["seeds", "--grid", "17x17"]), 0);
        assert!(dir.path().join("xi1.json").exists() && dir.path().join("xi2.svg").exists());
        assert_eq!(run_in(dir.path(), &["construct", "--grid", "17x17"]), 0);
        let chart = ChartFile::read(&dir.path().join("chart.json")).unwrap();
        assert_eq!(chart.nodes.len(), 289);
        assert!(dir.path().join("construct-report.json").exists());
    }

    #[test]
    fn degenerate_pair_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_in(dir.path(), &["construct", "--grid", "17x17", "--seed2", "H"]), 1);
    }

    #[test]
    fn non_solution_seed_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            run_in(dir.path(), &["seeds", "--grid", "17x17", "--seed2", "expr:H2"]),
            1
        );
    }

    #[test]
    fn affine_negative_control() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_in(dir.path(), &["affine", "--grid", "17x17", "--f2", "l1^2"]), 1);
        assert_eq!(run_in(dir.path(), &["affine", "--grid", "33x33"]), 0);
        assert!(dir.path().join("route-a.obj").exists());
        assert!(dir.path().join("route-b.report.json").exists());
    }
}
