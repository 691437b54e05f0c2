//! Experiment grids over mesh size, time step, preconditioner and coefficient
//! scenario, with CSV / Markdown result tables.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{CoefficientField, JumpRegion};
use crate::krylov::SolverConfig;
use crate::mesh::{generate, Aabb, DomainSpec, Point, TetMesh};
use crate::precond::{PrecondConfig, PrecondKind};
use crate::timestepper::{run, Discretization, InitialCondition, ProblemSetup};
use crate::{Error, Result};

/// Cavity removed from the unit cube for [`MeshKind::Cavity`].
pub const CAVITY: (f64, f64) = (0.25, 0.75);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeshKind {
    Box,
    Cavity,
}

impl MeshKind {
    pub fn domain(self, n: usize) -> DomainSpec {
        match self {
            MeshKind::Box => DomainSpec::unit_box(n),
            MeshKind::Cavity => DomainSpec::box_with_cavity(n, Aabb::cube(CAVITY.0, CAVITY.1)),
        }
    }

    /// Decaying exterior data around the cavity; trigonometric data in the plain box.
    pub fn initial_condition(self) -> InitialCondition {
        match self {
            MeshKind::Box => InitialCondition::Smooth,
            MeshKind::Cavity => InitialCondition::PaperDecay { center: Point::new(0.5, 0.5, 0.5) },
        }
    }
}

impl fmt::Display for MeshKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeshKind::Box => "box",
            MeshKind::Cavity => "cavity",
        })
    }
}

impl FromStr for MeshKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "box" => Ok(MeshKind::Box),
            "cavity" => Ok(MeshKind::Cavity),
            _ => Err(Error::InvalidConfig(format!("unknown mesh kind `{s}`"))),
        }
    }
}

/// Mesh of one grid cell, written `box-8` / `cavity-8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeshLabel {
    pub kind: MeshKind,
    pub n: usize,
}

impl fmt::Display for MeshLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind, self.n)
    }
}

impl FromStr for MeshLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, n) = s
            .rsplit_once('-')
            .ok_or_else(|| Error::InvalidConfig(format!("mesh label `{s}` is not `<kind>-<n>`")))?;
        let n = n.parse().map_err(|_| Error::InvalidConfig(format!("bad mesh size in `{s}`")))?;
        Ok(Self { kind: kind.parse()?, n })
    }
}

/// Coefficient configuration: unit coefficients or a jump of ε or μ⁻¹ on the
/// default shell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    Constant,
    EpsJump(f64),
    MuJump(f64),
}

impl Scenario {
    pub fn coefficients(&self, mesh: &TetMesh) -> Result<CoefficientField> {
        let shell = JumpRegion::default_shell();
        match *self {
            Scenario::Constant => CoefficientField::constant(mesh, 1.0, 1.0),
            Scenario::EpsJump(v) => CoefficientField::eps_jump(mesh, &shell, v),
            Scenario::MuJump(v) => CoefficientField::mu_inv_jump(mesh, &shell, v),
        }
    }

    fn order_key(&self) -> (u8, f64) {
        match *self {
            Scenario::Constant => (0, 0.0),
            Scenario::EpsJump(v) => (1, v),
            Scenario::MuJump(v) => (2, v),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Constant => f.write_str("const"),
            Scenario::EpsJump(v) => write!(f, "eps-jump:{v:e}"),
            Scenario::MuJump(v) => write!(f, "mu-jump:{v:e}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "const" || s == "constant" {
            return Ok(Scenario::Constant);
        }
        let bad = || Error::InvalidConfig(format!("unknown scenario `{s}`"));
        let (name, value) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = value.parse().map_err(|_| bad())?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidConfig(format!("jump value {v} must be positive")));
        }
        match name {
            "eps-jump" => Ok(Scenario::EpsJump(v)),
            "mu-jump" => Ok(Scenario::MuJump(v)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub mesh_kind: MeshKind,
    pub sizes: Vec<usize>,
    pub taus: Vec<f64>,
    pub kinds: Vec<PrecondKind>,
    pub scenarios: Vec<Scenario>,
    pub steps: usize,
    /// 1-based step whose outer iteration count is reported.
    pub report_step: usize,
    pub gamma: f64,
    pub solver: SolverConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            mesh_kind: MeshKind::Box,
            sizes: vec![2, 4, 8],
            taus: vec![0.2, 0.1, 0.05, 0.025],
            kinds: PrecondKind::ALL.to_vec(),
            scenarios: vec![Scenario::Constant],
            steps: 20,
            report_step: 2,
            gamma: 0.05,
            solver: SolverConfig::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.taus.is_empty() || self.kinds.is_empty() || self.scenarios.is_empty() {
            return Err(Error::InvalidConfig("every plan list must be nonempty".into()));
        }
        if let Some(n) = self.sizes.iter().find(|n| **n == 0) {
            return Err(Error::InvalidConfig(format!("mesh size {n} must be positive")));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidConfig(format!("time step {t} must be positive")));
        }
        if self.report_step == 0 || self.report_step > self.steps {
            return Err(Error::InvalidConfig(format!(
                "report step {} outside 1..={}",
                self.report_step, self.steps
            )));
        }
        self.solver.validate()
    }

    pub fn num_cells(&self) -> usize {
        self.sizes.len() * self.taus.len() * self.kinds.len() * self.scenarios.len()
    }
}

/// One grid cell's outcome. `iters` is `None` when the reported step was
/// never reached.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub mesh: MeshLabel,
    pub tau: f64,
    pub kind: PrecondKind,
    pub scenario: Scenario,
    pub iters: Option<usize>,
    /// Wall time of all steps, in milliseconds.
    pub time_ms: f64,
    /// Largest `‖D·B‖∞ / max(1, ‖B‖∞)` over all FGMRES iterates.
    pub div_b_max: f64,
    pub energy_drift: f64,
    /// `ok`, or the failure message.
    pub status: String,
}

impl ResultRow {
    pub fn succeeded(&self) -> bool {
        self.status == "ok"
    }

    fn sort_key(&self) -> impl Ord {
        let (s, v) = self.scenario.order_key();
        // τ descending, as in the experiment tables
        (self.mesh, std::cmp::Reverse(OrdF64(self.tau)), self.kind, s, OrdF64(v))
    }
}

#[derive(PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn sort(&mut self) {
        self.rows.sort_by_key(|r| r.sort_key());
    }

    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(ResultRow::succeeded)
    }

    pub fn find(&self, mesh: MeshLabel, tau: f64, kind: PrecondKind, scenario: Scenario) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.mesh == mesh && r.tau == tau && r.kind == kind && r.scenario == scenario)
    }

    /// Reported counts of one preconditioner.
    pub fn iterations(&self, kind: PrecondKind) -> Vec<usize> {
        self.rows.iter().filter(|r| r.kind == kind).filter_map(|r| r.iters).collect()
    }

    /// `max/min` of the reported counts of one preconditioner.
    pub fn spread(&self, kind: PrecondKind) -> Option<f64> {
        let it = self.iterations(kind);
        let (lo, hi) = (it.iter().min()?, it.iter().max()?);
        Some(*hi as f64 / (*lo).max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRecord {
    mesh: String,
    tau: f64,
    kind: String,
    scenario: String,
    iters: Option<usize>,
    time_ms: f64,
    #[serde(rename = "divB_max")]
    div_b_max: f64,
    energy_drift: f64,
    status: String,
}

impl From<&ResultRow> for CsvRecord {
    fn from(r: &ResultRow) -> Self {
        Self {
            mesh: r.mesh.to_string(),
            tau: r.tau,
            kind: r.kind.to_string(),
            scenario: r.scenario.to_string(),
            iters: r.iters,
            time_ms: r.time_ms,
            div_b_max: r.div_b_max,
            energy_drift: r.energy_drift,
            status: r.status.clone(),
        }
    }
}

impl TryFrom<CsvRecord> for ResultRow {
    type Error = Error;

    fn try_from(r: CsvRecord) -> Result<Self> {
        Ok(Self {
            mesh: r.mesh.parse()?,
            tau: r.tau,
            kind: r.kind.parse()?,
            scenario: r.scenario.parse()?,
            iters: r.iters,
            time_ms: r.time_ms,
            div_b_max: r.div_b_max,
            energy_drift: r.energy_drift,
            status: r.status,
        })
    }
}

pub const CSV_COLUMNS: [&str; 9] =
    ["mesh", "tau", "kind", "scenario", "iters", "time_ms", "divB_max", "energy_drift", "status"];

/// Writes the table sorted by key; an empty table yields the header only.
pub fn write_csv<W: Write>(table: &ResultTable, w: W) -> Result<()> {
    let mut sorted = table.clone();
    sorted.sort();
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in &sorted.rows {
        out.serialize(CsvRecord::from(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<ResultTable> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr
        .deserialize::<CsvRecord>()
        .map(|rec| ResultRow::try_from(rec?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResultTable { rows })
}

pub fn emit_csv(table: &ResultTable, path: impl AsRef<Path>) -> Result<()> {
    write_csv(table, std::fs::File::create(path)?)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<ResultTable> {
    read_csv(std::fs::File::open(path)?)
}

pub fn write_markdown<W: Write>(table: &ResultTable, mut w: W) -> Result<()> {
    let mut sorted = table.clone();
    sorted.sort();
    writeln!(w, "| {} |", CSV_COLUMNS.join(" | "))?;
    writeln!(w, "|{}", "---|".repeat(CSV_COLUMNS.len()))?;
    for r in &sorted.rows {
        let iters = r.iters.map_or_else(|| "-".to_string(), |i| i.to_string());
        writeln!(
            w,
            "| {} | {} | {} | {} | {} | {:.1} | {:.2e} | {:.2e} | {} |",
            r.mesh,
            r.tau,
            r.kind,
            r.scenario,
            iters,
            r.time_ms,
            r.div_b_max,
            r.energy_drift,
            r.status.replace('|', "/")
        )?;
    }
    Ok(())
}

pub fn emit_markdown(table: &ResultTable, path: impl AsRef<Path>) -> Result<()> {
    write_markdown(table, std::fs::File::create(path)?)
}

/// Runs one grid cell; failures land in the row's `status`.
pub fn run_cell(plan: &ExperimentPlan, n: usize, tau: f64, kind: PrecondKind, scenario: Scenario) -> ResultRow {
    let mesh = MeshLabel { kind: plan.mesh_kind, n };
    let mut row = ResultRow {
        mesh,
        tau,
        kind,
        scenario,
        iters: None,
        time_ms: 0.0,
        div_b_max: 0.0,
        energy_drift: 0.0,
        status: "ok".into(),
    };
    let mut attempt = || -> Result<()> {
        let m = generate(&plan.mesh_kind.domain(n))?;
        let setup = ProblemSetup::new(&m, plan.gamma, tau, plan.steps)?
            .with_coefficients(scenario.coefficients(&m)?)
            .with_initial(plan.mesh_kind.initial_condition());
        let disc = Discretization::new(m, &setup)?;
        let start = Instant::now();
        let out = run(&disc, &setup, &plan.solver, &PrecondConfig::new(kind, &plan.solver))?;
        row.time_ms = start.elapsed().as_secs_f64() * 1e3;
        row.iters = out.stats.get(plan.report_step - 1).map(|s| s.iterations);
        row.div_b_max = out.stats.iter().map(|s| s.max_relative_divergence()).fold(0.0, f64::max);
        row.energy_drift = out.energy_drift();
        if let Some(msg) = out.rejected {
            row.status = msg;
        }
        Ok(())
    };
    if let Err(e) = attempt() {
        row.status = e.to_string();
    }
    row
}

/// Runs every cell of the plan in a fixed order, calling `progress` after each.
pub fn run_plan_with(plan: &ExperimentPlan, mut progress: impl FnMut(&ResultRow)) -> Result<ResultTable> {
    plan.validate()?;
    let mut rows = Vec::with_capacity(plan.num_cells());
    for &n in &plan.sizes {
        for &scenario in &plan.scenarios {
            for &tau in &plan.taus {
                for &kind in &plan.kinds {
                    let row = run_cell(plan, n, tau, kind, scenario);
                    progress(&row);
                    rows.push(row);
                }
            }
        }
    }
    let mut table = ResultTable { rows };
    table.sort();
    Ok(table)
}

pub fn run_plan(plan: &ExperimentPlan) -> Result<ResultTable> {
    run_plan_with(plan, |_| {})
}

/// Parses a comma-separated list with `T::from_str`.
pub fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, T::Err> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| x.trim().parse()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kinds: Vec<PrecondKind>) -> ExperimentPlan {
        ExperimentPlan {
            sizes: vec![1],
            taus: vec![0.2],
            kinds,
            steps: 2,
            ..ExperimentPlan::default()
        }
    }

    #[test]
    fn single_cell_plan() {
        let t = run_plan(&tiny(vec![PrecondKind::WD])).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].succeeded(), "{}", t.rows[0].status);
        assert!(t.rows[0].iters.unwrap() >= 1);
    }

    #[test]
    fn reruns_are_deterministic() {
        let plan = ExperimentPlan { sizes: vec![2], steps: 3, taus: vec![0.1], ..tiny(PrecondKind::ALL.to_vec()) };
        let a = run_plan(&plan).unwrap();
        let b = run_plan(&plan).unwrap();
        let counts = |t: &ResultTable| t.rows.iter().map(|r| (r.kind, r.iters)).collect::<Vec<_>>();
        assert_eq!(counts(&a), counts(&b));
        assert!(a.all_succeeded());
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&ResultTable::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_COLUMNS.join(",")));
    }

    fn sample() -> ResultTable {
        let row = |n, tau, kind, scenario, iters: Option<usize>, status: &str| ResultRow {
            mesh: MeshLabel { kind: MeshKind::Cavity, n },
            tau,
            kind,
            scenario,
            iters,
            time_ms: 12.5,
            div_b_max: 3.0e-15,
            energy_drift: 0.125,
            status: status.into(),
        };
        ResultTable {
            rows: vec![
                row(8, 0.1, PrecondKind::XLDU, Scenario::MuJump(1e-6), Some(4), "ok"),
                row(2, 0.025, PrecondKind::WD, Scenario::Constant, None, "step 2 rejected: MaxIterations, x"),
                row(2, 0.2, PrecondKind::WL, Scenario::EpsJump(1e6), Some(7), "ok"),
            ],
        }
    }

    #[test]
    fn csv_roundtrip() {
        let t = sample();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        let mut sorted = t.clone();
        sorted.sort();
        assert_eq!(back, sorted);
        let header = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "mesh,tau,kind,scenario,iters,time_ms,divB_max,energy_drift,status");
    }

    #[test]
    fn csv_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_csv(&sample(), &path).unwrap();
        assert_eq!(load_csv(&path).unwrap().rows.len(), 3);
    }

    #[test]
    fn rows_sort_by_mesh_then_descending_tau() {
        let mut t = sample();
        t.sort();
        let order: Vec<_> = t.rows.iter().map(|r| (r.mesh.n, r.tau)).collect();
        assert_eq!(order, vec![(2, 0.2), (2, 0.025), (8, 0.1)]);
    }

    #[test]
    fn markdown_row_count_matches_csv() {
        let t = sample();
        let (mut md, mut csv) = (Vec::new(), Vec::new());
        write_markdown(&t, &mut md).unwrap();
        write_csv(&t, &mut csv).unwrap();
        let md_rows = String::from_utf8(md).unwrap().lines().count() - 2;
        let csv_rows = String::from_utf8(csv).unwrap().lines().count() - 1;
        assert_eq!(md_rows, csv_rows);
    }

    #[test]
    fn parse_labels_and_scenarios() {
        assert_eq!("cavity-16".parse::<MeshLabel>().unwrap(), MeshLabel { kind: MeshKind::Cavity, n: 16 });
        assert_eq!("eps-jump:1e6".parse::<Scenario>().unwrap(), Scenario::EpsJump(1e6));
        assert_eq!("mu-jump:1e-6".parse::<Scenario>().unwrap(), Scenario::MuJump(1e-6));
        assert_eq!("const".parse::<Scenario>().unwrap(), Scenario::Constant);
        assert!("eps-jump:-1".parse::<Scenario>().is_err());
        assert!("bogus".parse::<Scenario>().is_err());
        for s in [Scenario::Constant, Scenario::EpsJump(0.01), Scenario::MuJump(1e6)] {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!(parse_list::<f64>("0.2, 0.1").unwrap(), vec![0.2, 0.1]);
        assert_eq!(parse_list::<PrecondKind>("WD,X_LDU").unwrap(), vec![PrecondKind::WD, PrecondKind::XLDU]);
    }

    #[test]
    fn invalid_plans_are_rejected() {
        assert!(ExperimentPlan { sizes: vec![], ..ExperimentPlan::default() }.validate().is_err());
        assert!(ExperimentPlan { report_step: 21, ..ExperimentPlan::default() }.validate().is_err());
        assert!(ExperimentPlan { taus: vec![0.0], ..ExperimentPlan::default() }.validate().is_err());
        assert!(ExperimentPlan::default().validate().is_ok());
    }

    #[test]
    fn cell_failure_is_recorded_not_raised() {
        let mut plan = tiny(vec![PrecondKind::WD]);
        plan.solver = SolverConfig { outer_maxit: 1, restart: 1, outer_tol: 1e-12, ..SolverConfig::default() };
        let t = run_plan(&plan).unwrap();
        assert!(!t.all_succeeded());
        assert_eq!(t.rows[0].iters, None);
        assert!(t.rows[0].status.contains("rejected"));
    }
}
