//! Experiment-grid runner.
//!
//! ```text
//! bench --mesh-kind cavity --n 2,4,8 --tau 0.2,0.1 --precond WD,XLDU \
//!       --scenario const,eps-jump:1e6 --steps 20 --report-step 2 --out results.csv
//! ```
//!
//! `SOLVER_THREADS` caps the kernel thread pool. Exits 0 iff every cell succeeded.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use maxwell_blocks::bench::{emit_csv, emit_markdown, run_plan_with, ExperimentPlan, MeshKind, Scenario};
use maxwell_blocks::krylov::SolverConfig;
use maxwell_blocks::precond::PrecondKind;

#[derive(Debug, Parser)]
#[command(name = "bench", about = "Run Crank–Nicolson block-preconditioner experiment grids")]
struct Args {
    #[arg(long, default_value = "box", value_parser = parse::<MeshKind>)]
    mesh_kind: MeshKind,
    /// Subdivisions per axis.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
    tau: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "WD,WL,WU,XLD,XDU,XLDU", value_parser = parse::<PrecondKind>)]
    precond: Vec<PrecondKind>,
    /// `const`, `eps-jump:<v>` or `mu-jump:<v>`.
    #[arg(long, value_delimiter = ',', default_value = "const", value_parser = parse::<Scenario>)]
    scenario: Vec<Scenario>,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Step whose outer iteration count is reported (1-based).
    #[arg(long, default_value_t = 2)]
    report_step: usize,
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-8)]
    outer_tol: f64,
    #[arg(long, default_value_t = 1e-2)]
    inner_tol: f64,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Optional Markdown copy of the table.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

fn parse<T: std::str::FromStr<Err = maxwell_blocks::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: maxwell_blocks::Error| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(t) = std::env::var("SOLVER_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    let plan = ExperimentPlan {
        mesh_kind: args.mesh_kind,
        sizes: args.n,
        taus: args.tau,
        kinds: args.precond,
        scenarios: args.scenario,
        steps: args.steps,
        report_step: args.report_step,
        gamma: args.gamma,
        solver: SolverConfig { outer_tol: args.outer_tol, inner_tol: args.inner_tol, ..SolverConfig::default() },
    };
    let total = plan.num_cells();
    let mut done = 0;
    let table = match run_plan_with(&plan, |r| {
        done += 1;
        let iters = r.iters.map_or_else(|| "-".into(), |i| i.to_string());
        eprintln!(
            "[{done}/{total}] {} tau={} {} {}: iters={iters} time={:.0}ms {}",
            r.mesh, r.tau, r.kind, r.scenario, r.time_ms, r.status
        );
    }) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = emit_csv(&table, &args.out) {
        eprintln!("error: writing {}: {e}", args.out.display());
        return ExitCode::from(2);
    }
    if let Some(md) = &args.markdown {
        if let Err(e) = emit_markdown(&table, md) {
            eprintln!("error: writing {}: {e}", md.display());
            return ExitCode::from(2);
        }
    }
    let failed = table.rows.iter().filter(|r| !r.succeeded()).count();
    if failed > 0 {
        eprintln!("{failed} of {total} cells failed");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
