//! Crank–Nicolson time loop: initial interpolation, right-hand sides, the
//! per-step block solve and energy/divergence tracking.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_load_e, AssembledForms, CoefficientField};
use crate::complex::{build_dof_maps, build_incidence, interp_curl, interp_div, DofMaps, IncidenceMatrices};
use crate::krylov::{fgmres_tracking_divergence, pcg, Smoother, SmootherOp, SolveStats, SolverConfig};
use crate::linalg::{build_system, norm_inf, BlockVector, SystemOperator};
use crate::mesh::{Point, TetMesh};
use crate::precond::{build_schur, BlockPreconditioner, PrecondConfig, SchurComplements};
use crate::{Error, Result};

pub type VectorField = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
/// Time-dependent source `j(x, t)`.
pub type SourceField = Arc<dyn Fn(&Point, f64) -> Point + Send + Sync>;

/// Decay exponent `r(γ) = (1 − √(1 + 4/γ))/2` of the exponentially decaying
/// exterior solution; defined for `γ > 0`.
pub fn decay_rate(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("decay rate needs γ > 0, got {gamma}")));
    }
    Ok(0.5 * (1.0 - (1.0 + 4.0 / gamma).sqrt()))
}

/// Electric field of the decaying solution at `t = 0`, centred at `c`.
pub fn decay_e(r: f64, c: Point, x: &Point) -> Point {
    let y = x - c;
    let rho = y.norm();
    (r * rho).exp() / (rho * rho) * (r * r - r / rho) * Point::new(0.0, y.z, -y.y)
}

/// Magnetic field of the decaying solution at `t = 0`; equals `−curl E / r`.
pub fn decay_b(r: f64, c: Point, x: &Point) -> Point {
    let y = x - c;
    let rho = y.norm();
    let radial = (r * r - 3.0 * r / rho + 3.0 / (rho * rho)) / rho.powi(3);
    let v = Point::new(y.z * y.z + y.y * y.y, -y.x * y.y, -y.x * y.z) * radial
        + Point::new(2.0 * r / (rho * rho) - 2.0 / rho.powi(3), 0.0, 0.0);
    v * (r * rho).exp()
}

#[derive(Clone)]
pub enum InitialCondition {
    /// B = E = p = 0.
    Zero,
    /// `B⁰ = K·Π_curl(a)`, exactly solenoidal; `E⁰ = Π_curl(e)`.
    Potential { a: VectorField, e: VectorField },
    /// `B⁰ = Π_div(b)`; solenoidal only up to quadrature if `div b = 0`.
    Fields { b: VectorField, e: VectorField },
    /// The decaying exterior solution with `r = r(γ)`, centred at `center`.
    /// The centre must lie outside the mesh (e.g. inside a cavity).
    PaperDecay { center: Point },
    /// Trigonometric data vanishing tangentially on the unit-cube boundary:
    /// `A₀ = (0, 0, sin πx sin πy)`, `E₀ = (0, sin πx sin πz, 0)`.
    Smooth,
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Zero => f.write_str("Zero"),
            InitialCondition::Potential { .. } => f.write_str("Potential"),
            InitialCondition::Fields { .. } => f.write_str("Fields"),
            InitialCondition::PaperDecay { center } => write!(f, "PaperDecay({center:?})"),
            InitialCondition::Smooth => f.write_str("Smooth"),
        }
    }
}

#[derive(Clone)]
pub struct ProblemSetup {
    /// Impedance parameter, `γ > −1`.
    pub gamma: f64,
    pub tau: f64,
    pub t_final: f64,
    pub coefficients: CoefficientField,
    pub source: Option<SourceField>,
    pub initial: InitialCondition,
}

impl fmt::Debug for ProblemSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSetup")
            .field("gamma", &self.gamma)
            .field("tau", &self.tau)
            .field("t_final", &self.t_final)
            .field("source", &self.source.is_some())
            .field("initial", &self.initial)
            .finish()
    }
}

impl ProblemSetup {
    /// Unit coefficients, no source, `steps` steps of size `tau`.
    pub fn new(mesh: &TetMesh, gamma: f64, tau: f64, steps: usize) -> Result<Self> {
        let setup = Self {
            gamma,
            tau,
            t_final: tau * steps as f64,
            coefficients: CoefficientField::constant(mesh, 1.0, 1.0)?,
            source: None,
            initial: InitialCondition::Smooth,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn with_coefficients(mut self, c: CoefficientField) -> Self {
        self.coefficients = c;
        self
    }

    pub fn with_initial(mut self, initial: InitialCondition) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_source(mut self, j: SourceField) -> Self {
        self.source = Some(j);
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("time step {} must be positive", self.tau)));
        }
        if !(self.gamma > -1.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("impedance parameter {} must exceed −1", self.gamma)));
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::InvalidConfig(format!("final time {} is negative", self.t_final)));
        }
        self.coefficients.validate()
    }
}

/// Everything fixed over a run: mesh, DOFs, incidence matrices, forms, the
/// step operator and its Schur complements.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: TetMesh,
    pub dofs: DofMaps,
    pub inc: IncidenceMatrices,
    pub forms: AssembledForms,
    pub op: SystemOperator,
    pub schur: SchurComplements,
}

impl Discretization {
    pub fn new(mesh: TetMesh, setup: &ProblemSetup) -> Result<Self> {
        setup.validate()?;
        let dofs = build_dof_maps(&mesh);
        let inc = build_incidence(&mesh, &dofs);
        let forms = AssembledForms::assemble(&mesh, &dofs, &setup.coefficients, setup.gamma)?;
        let op = build_system(setup.tau, &forms, &inc, false)?;
        let schur = build_schur(&forms, &inc, setup.tau)?;
        Ok(Self { mesh, dofs, inc, forms, op, schur })
    }

    /// `𝔈 = ‖B‖²_{μ⁻¹} + ‖E‖²_ε + ‖p‖²`.
    pub fn energy(&self, s: &TimeState) -> f64 {
        self.forms.mb.quad_form(&s.b) + self.forms.me.quad_form(&s.e) + self.forms.mp.quad_form(&s.p)
    }

    /// `‖D·B‖∞`.
    pub fn divergence(&self, b: &[f64]) -> f64 {
        norm_inf(&self.op.d.spmv(b).expect("D matches the B space"))
    }

    /// `∫ j(·, t)·φ_e` on free edges.
    fn source_load(&self, j: &SourceField, t: f64) -> Vec<f64> {
        assemble_load_e(&self.mesh, &self.dofs, &|x| j(x, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeState {
    pub step: usize,
    pub time: f64,
    pub b: Vec<f64>,
    pub e: Vec<f64>,
    pub p: Vec<f64>,
    /// `(B, E, p)` of the previous accepted step.
    pub prev: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    /// Set when `B⁰` is not discretely solenoidal.
    pub warning: Option<String>,
}

impl TimeState {
    pub fn to_block(&self) -> BlockVector {
        BlockVector { b: self.b.clone(), e: self.e.clone(), p: self.p.clone() }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.to_block().to_flat()
    }
}

/// `B⁰`, `E⁰` (gradient part removed) and `p⁰ = 0`.
pub fn initialize(disc: &Discretization, setup: &ProblemSetup) -> Result<TimeState> {
    let (mesh, dofs) = (&disc.mesh, &disc.dofs);
    let from_potential = |a: &dyn Fn(&Point) -> Point| -> Result<Vec<f64>> {
        disc.op.k.spmv(&interp_curl(mesh, dofs, a))
    };
    let (b, e) = match &setup.initial {
        InitialCondition::Zero => (vec![0.0; dofs.b.len()], vec![0.0; dofs.e.len()]),
        InitialCondition::Potential { a, e } => (from_potential(a.as_ref())?, interp_curl(mesh, dofs, e.as_ref())),
        InitialCondition::Fields { b, e } => (interp_div(mesh, dofs, b.as_ref()), interp_curl(mesh, dofs, e.as_ref())),
        InitialCondition::PaperDecay { center } => {
            let r = decay_rate(setup.gamma)?;
            let c = *center;
            let closest = mesh.vertices().iter().map(|v| (v - c).norm()).fold(f64::INFINITY, f64::min);
            if closest < 1e-8 {
                return Err(Error::InvalidConfig(format!("decay centre {c:?} lies on the mesh")));
            }
            // B = −curl E / r, so −E/r is a vector potential
            (from_potential(&|x| -decay_e(r, c, x) / r)?, interp_curl(mesh, dofs, |x| decay_e(r, c, x)))
        }
        InitialCondition::Smooth => (
            from_potential(&|x| Point::new(0.0, 0.0, (PI * x.x).sin() * (PI * x.y).sin()))?,
            interp_curl(mesh, dofs, |x| Point::new(0.0, (PI * x.x).sin() * (PI * x.z).sin(), 0.0)),
        ),
    };
    let e = remove_gradient(disc, e)?;
    let div = disc.divergence(&b);
    let warning = (div > 1e-9 * norm_inf(&b).max(1.0))
        .then(|| format!("initial B is not discretely solenoidal: ‖D·B⁰‖∞ = {div:.3e}"));
    Ok(TimeState {
        step: 0,
        time: 0.0,
        b,
        e,
        p: vec![0.0; dofs.p.len()],
        prev: None,
        warning,
    })
}

/// `E ← E − G q` with `GᵀMeG q = GᵀMe E`.
fn remove_gradient(disc: &Discretization, mut e: Vec<f64>) -> Result<Vec<f64>> {
    if disc.dofs.p.is_empty() {
        return Ok(e);
    }
    let rhs = disc.op.gt_me.spmv(&e)?;
    if norm_inf(&rhs) == 0.0 {
        return Ok(e);
    }
    let s = disc.op.g.transpose().spgemm(&disc.op.me_g)?;
    let m = SmootherOp::new(&s, Smoother::SymmetricGaussSeidel)?;
    let (q, stats) = pcg(&s, &m, &rhs, 1e-13, 10 * s.rows() + 100)?;
    if !stats.converged {
        return Err(Error::Solver { block: "gradient projection", msg: format!("residual {:.3e}", stats.rel_residual) });
    }
    disc.op.g.mul_add_into(-1.0, &q, &mut e);
    Ok(e)
}

/// Right-hand side `(g_B, g_E, g_p)` of the step from `state` to `state.step + 1`.
pub fn assemble_rhs(disc: &Discretization, state: &TimeState, setup: &ProblemSetup) -> Result<BlockVector> {
    let op = &disc.op;
    let s = 2.0 / op.tau;
    let (b, e, p) = (&state.b, &state.e, &state.p);
    let mut gb = op.mb.spmv(b)?.into_iter().map(|x| s * x).collect::<Vec<_>>();
    op.mb_k.mul_add_into(-1.0, e, &mut gb);
    let mut ge = op.me.spmv(e)?.into_iter().map(|x| s * x).collect::<Vec<_>>();
    op.me_g.mul_add_into(-1.0, p, &mut ge);
    op.kt_mb.mul_add_into(1.0, b, &mut ge);
    op.z.mul_add_into(-1.0, e, &mut ge);
    if let Some(j) = &setup.source {
        let t0 = state.time;
        for load in [disc.source_load(j, t0 + op.tau), disc.source_load(j, t0)] {
            ge.iter_mut().zip(load).for_each(|(g, l)| *g -= l);
        }
    }
    let mut gp = op.mp.spmv(p)?.into_iter().map(|x| s * x).collect::<Vec<_>>();
    op.gt_me.mul_add_into(1.0, e, &mut gp);
    Ok(BlockVector { b: gb, e: ge, p: gp })
}

/// One Crank–Nicolson step, warm-started from the current state. Solver
/// failure rejects the step and leaves `state` untouched.
pub fn step(
    disc: &Discretization,
    state: &TimeState,
    setup: &ProblemSetup,
    solver: &SolverConfig,
    precond: &PrecondConfig,
) -> Result<(TimeState, SolveStats)> {
    let next = state.step + 1;
    let reject = |msg: String| Error::StepRejected { step: next, msg };
    let rhs = assemble_rhs(disc, state, setup)?.to_flat();
    let pre = BlockPreconditioner::new(&disc.op, &disc.schur, *precond)?;
    let layout = disc.op.layout;
    let (x, stats) = fgmres_tracking_divergence(&disc.op, &pre, &rhs, &state.to_flat(), solver, &disc.op.d, layout)
        .map_err(|e| reject(e.to_string()))?;
    if !stats.converged() {
        return Err(reject(format!(
            "{:?} after {} iterations, relative residual {:.3e}",
            stats.status, stats.iterations, stats.rel_residual
        )));
    }
    let x = BlockVector::from_flat(layout, &x)?;
    let new = TimeState {
        step: next,
        time: state.time + setup.tau,
        b: x.b,
        e: x.e,
        p: x.p,
        prev: Some((state.b.clone(), state.e.clone(), state.p.clone())),
        warning: state.warning.clone(),
    };
    Ok((new, stats))
}

/// One row of the per-step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub iterations: usize,
    pub rel_residual: f64,
    pub energy: f64,
    pub div_b: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Step 0 (the initial state) followed by every accepted step.
    pub records: Vec<StepRecord>,
    /// Solver statistics of every accepted step.
    pub stats: Vec<SolveStats>,
    pub state: TimeState,
    /// Message of the rejected step, if the run stopped early.
    pub rejected: Option<String>,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.rejected.is_none()
    }

    /// `max_n |𝔈ⁿ − 𝔈⁰| / 𝔈⁰` (absolute if `𝔈⁰ = 0`).
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.records.first().map_or(0.0, |r| r.energy);
        let scale = if e0 > 0.0 { e0 } else { 1.0 };
        self.records.iter().map(|r| (r.energy - e0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn max_divergence(&self) -> f64 {
        self.records.iter().map(|r| r.div_b).fold(0.0, f64::max)
    }
}

/// Initializes and runs `setup.steps()` steps. A rejected step ends the run
/// and is reported in the outcome rather than as an error.
pub fn run(
    disc: &Discretization,
    setup: &ProblemSetup,
    solver: &SolverConfig,
    precond: &PrecondConfig,
) -> Result<RunOutcome> {
    solver.validate()?;
    let mut state = initialize(disc, setup)?;
    let record = |s: &TimeState, stats: Option<&SolveStats>| StepRecord {
        step: s.step,
        time: s.time,
        iterations: stats.map_or(0, |st| st.iterations),
        rel_residual: stats.map_or(0.0, |st| st.rel_residual),
        energy: disc.energy(s),
        div_b: disc.divergence(&s.b),
    };
    let mut records = vec![record(&state, None)];
    let mut all_stats = Vec::new();
    let mut rejected = None;
    for _ in 0..setup.steps() {
        match step(disc, &state, setup, solver, precond) {
            Ok((next, stats)) => {
                records.push(record(&next, Some(&stats)));
                all_stats.push(stats);
                state = next;
            }
            Err(e @ Error::StepRejected { .. }) => {
                rejected = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunOutcome { records, stats: all_stats, state, rejected })
}

/// Per-step CSV log: `step,time,iterations,rel_residual,energy,div_b`.
pub fn write_log<W: Write>(records: &[StepRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LinearOperator;
    use crate::mesh::{generate, Aabb, DomainSpec, ImpedanceAssignment};
    use crate::precond::PrecondKind;
    use rand::{Rng, SeedableRng};

    fn disc(spec: DomainSpec, gamma: f64, tau: f64, steps: usize, init: InitialCondition) -> (Discretization, ProblemSetup) {
        let mesh = generate(&spec).unwrap();
        let setup = ProblemSetup::new(&mesh, gamma, tau, steps).unwrap().with_initial(init);
        (Discretization::new(mesh, &setup).unwrap(), setup)
    }

    fn random(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn cavity(n: usize) -> DomainSpec {
        DomainSpec::box_with_cavity(n, Aabb::cube(0.25, 0.75))
    }

    #[test]
    fn decay_rate_at_reference_gamma() {
        assert_eq!(decay_rate(0.05).unwrap(), -4.0);
        assert!(decay_rate(0.0).is_err());
        assert!(decay_rate(-0.5).is_err());
    }

    #[test]
    fn decay_fields_satisfy_faraday_at_t0() {
        // B_t = r B and B_t + curl E = 0, so curl E = −r B; central differences
        let r = decay_rate(0.05).unwrap();
        let c = Point::new(0.5, 0.5, 0.5);
        let h = 1e-5;
        for x in [Point::new(1.1, 0.2, 0.9), Point::new(0.0, 0.9, 0.1), Point::new(0.8, 0.85, 0.05)] {
            let d = |i: usize| {
                let mut dx = Point::zeros();
                dx[i] = h;
                (decay_e(r, c, &(x + dx)) - decay_e(r, c, &(x - dx))) / (2.0 * h)
            };
            let (dx, dy, dz) = (d(0), d(1), d(2));
            let curl = Point::new(dy.z - dz.y, dz.x - dx.z, dx.y - dy.x);
            let b = decay_b(r, c, &x);
            assert!((curl + b * r).norm() <= 1e-6 * (1.0 + b.norm()), "{curl:?} {b:?}");
        }
    }

    #[test]
    fn zero_state_gives_zero_rhs() {
        let (d, s) = disc(DomainSpec::unit_box(2), 0.05, 0.1, 1, InitialCondition::Zero);
        let st = initialize(&d, &s).unwrap();
        assert!(assemble_rhs(&d, &st, &s).unwrap().to_flat().iter().all(|x| *x == 0.0));
        assert!(st.p.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn potential_initial_data_is_solenoidal() {
        for init in [InitialCondition::Smooth, InitialCondition::PaperDecay { center: Point::new(0.5, 0.5, 0.5) }] {
            let (d, s) = disc(cavity(4), 0.05, 0.1, 1, init);
            let st = initialize(&d, &s).unwrap();
            assert!(st.warning.is_none());
            assert!(d.divergence(&st.b) <= 1e-12 * norm_inf(&st.b).max(1.0));
            assert!(norm_inf(&st.b) > 0.0);
        }
    }

    #[test]
    fn interpolated_divergence_free_field_is_solenoidal() {
        // b = curl(y², zx, xy) = (0, −y, z − 2y); fluxes through closed tet boundaries cancel
        let b: VectorField = Arc::new(|x: &Point| Point::new(0.0, -x.y, x.z - 2.0 * x.y));
        let e: VectorField = Arc::new(|_: &Point| Point::zeros());
        // every outer side impedance, so no face flux is dropped from D
        let spec = DomainSpec::unit_box(3).with_assignment(ImpedanceAssignment::Sides(crate::mesh::BoxSide::ALL.to_vec()));
        let (d, s) = disc(spec, 0.05, 0.1, 1, InitialCondition::Fields { b, e });
        let st = initialize(&d, &s).unwrap();
        assert!(d.divergence(&st.b) <= 1e-12);
        assert!(st.warning.is_none());
    }

    #[test]
    fn non_solenoidal_initial_field_warns() {
        let b: VectorField = Arc::new(|x: &Point| Point::new(x.x, 0.0, 0.0));
        let e: VectorField = Arc::new(|_: &Point| Point::zeros());
        let (d, s) = disc(DomainSpec::unit_box(2), 0.05, 0.1, 1, InitialCondition::Fields { b, e });
        assert!(initialize(&d, &s).unwrap().warning.is_some());
    }

    #[test]
    fn discrete_gradients_are_projected_away() {
        let (d, _) = disc(DomainSpec::unit_box(3), 0.05, 0.1, 1, InitialCondition::Zero);
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let q = random(d.dofs.p.len(), &mut rng);
        let e = d.op.g.spmv(&q).unwrap();
        let out = remove_gradient(&d, e.clone()).unwrap();
        assert!(norm_inf(&out) <= 1e-10 * norm_inf(&e), "{}", norm_inf(&out));
    }

    #[test]
    fn initial_e_is_weakly_divergence_free() {
        let (d, s) = disc(DomainSpec::unit_box(3), 0.05, 0.1, 1, InitialCondition::Smooth);
        let st = initialize(&d, &s).unwrap();
        let raw = interp_curl(&d.mesh, &d.dofs, |x| Point::new(0.0, (PI * x.x).sin() * (PI * x.z).sin(), 0.0));
        let scale = norm_inf(&d.op.gt_me.spmv(&raw).unwrap()).max(norm_inf(&raw));
        assert!(norm_inf(&d.op.gt_me.spmv(&st.e).unwrap()) <= 1e-11 * scale);
    }

    #[test]
    fn paper_decay_rejects_centre_on_mesh() {
        let (d, s) = disc(DomainSpec::unit_box(2), 0.05, 0.1, 1, InitialCondition::PaperDecay { center: Point::new(0.5, 0.5, 0.5) });
        assert!(initialize(&d, &s).is_err());
    }

    #[test]
    fn rhs_is_consistent_with_the_scheme() {
        // 𝒜xⁿ − g(xⁿ⁻¹) is the residual of the three CN equations written out directly
        let (d, mut s) = disc(DomainSpec::unit_box(2), 0.3, 0.1, 1, InitialCondition::Zero);
        s.source = Some(Arc::new(|x: &Point, t: f64| Point::new(x.y * t, 1.0 + t, x.x)));
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let l = d.op.layout;
        let old = TimeState {
            step: 0,
            time: 0.4,
            b: random(l.nb, &mut rng),
            e: random(l.ne, &mut rng),
            p: random(l.np, &mut rng),
            prev: None,
            warning: None,
        };
        let new = BlockVector { b: random(l.nb, &mut rng), e: random(l.ne, &mut rng), p: random(l.np, &mut rng) };
        let x = new.to_flat();
        let mut ax = vec![0.0; l.total()];
        d.op.apply(&x, &mut ax);
        let g = assemble_rhs(&d, &old, &s).unwrap().to_flat();
        let res: Vec<f64> = ax.iter().zip(&g).map(|(a, b)| a - b).collect();

        let op = &d.op;
        let (tau, h) = (op.tau, 0.5);
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) / tau).collect::<Vec<_>>();
        let avg = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| h * (x + y)).collect::<Vec<_>>();
        let (db, de, dp) = (diff(&new.b, &old.b), diff(&new.e, &old.e), diff(&new.p, &old.p));
        let (ab, ae, ap) = (avg(&new.b, &old.b), avg(&new.e, &old.e), avg(&new.p, &old.p));
        // equation 1: Mb ΔB/τ + Mb K Ē
        let mut r1 = op.mb.spmv(&db).unwrap();
        op.mb_k.mul_add_into(1.0, &ae, &mut r1);
        // equation 2: Me ΔE/τ + Me G p̄ − KᵀMb B̄ + Z Ē + (jⁿ + jⁿ⁻¹)/2
        let mut r2 = op.me.spmv(&de).unwrap();
        op.me_g.mul_add_into(1.0, &ap, &mut r2);
        op.kt_mb.mul_add_into(-1.0, &ab, &mut r2);
        op.z.mul_add_into(1.0, &ae, &mut r2);
        let j = s.source.as_ref().unwrap();
        for t in [0.4, 0.5] {
            let load = d.source_load(j, t);
            r2.iter_mut().zip(load).for_each(|(r, l)| *r += h * l);
        }
        // equation 3: Mp Δp/τ − GᵀMe Ē
        let mut r3 = op.mp.spmv(&dp).unwrap();
        op.gt_me.mul_add_into(-1.0, &ae, &mut r3);
        let expect: Vec<f64> = [r1, r2, r3].concat().into_iter().map(|v| 2.0 * v).collect();
        let scale = norm_inf(&ax);
        for (a, b) in res.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-12 * scale, "{a} {b}");
        }
    }

    #[test]
    fn rhs_b_component_stays_solenoidal() {
        let (d, s) = disc(cavity(4), 0.05, 0.1, 1, InitialCondition::PaperDecay { center: Point::new(0.5, 0.5, 0.5) });
        let st = initialize(&d, &s).unwrap();
        let g = assemble_rhs(&d, &st, &s).unwrap();
        let m = SmootherOp::new(&d.forms.mb, Smoother::Jacobi).unwrap();
        let (y, stats) = pcg(&d.forms.mb, &m, &g.b, 1e-14, 10_000).unwrap();
        assert!(stats.converged);
        assert!(d.divergence(&y) <= 1e-10 * norm_inf(&y).max(1.0), "{}", d.divergence(&y));
    }

    fn tight() -> SolverConfig {
        SolverConfig { outer_tol: 1e-12, ..SolverConfig::default() }
    }

    #[test]
    fn energy_is_nonincreasing_with_impedance_boundary() {
        let (d, s) = disc(cavity(4), 0.05, 0.1, 20, InitialCondition::PaperDecay { center: Point::new(0.5, 0.5, 0.5) });
        let out = run(&d, &s, &SolverConfig::default(), &PrecondConfig::new(PrecondKind::XLDU, &SolverConfig::default())).unwrap();
        assert!(out.completed(), "{:?}", out.rejected);
        assert_eq!(out.records.len(), 21);
        let e0 = out.records[0].energy;
        for w in out.records.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-10 * e0, "{} -> {}", w[0].energy, w[1].energy);
        }
        assert!(out.records.last().unwrap().energy < e0);
    }

    #[test]
    fn energy_balance_matches_boundary_dissipation() {
        // 𝔈ⁿ − 𝔈ⁿ⁻¹ = −(τ/2)(Eⁿ + Eⁿ⁻¹)ᵀ Z (Eⁿ + Eⁿ⁻¹)
        let (d, s) = disc(DomainSpec::unit_box(3), 0.05, 0.1, 4, InitialCondition::Smooth);
        let cfg = tight();
        let out = run(&d, &s, &cfg, &PrecondConfig::exact(PrecondKind::XLDU, 1e-12)).unwrap();
        let mut st = initialize(&d, &s).unwrap();
        for _ in 0..4 {
            let (next, _) = step(&d, &st, &s, &cfg, &PrecondConfig::exact(PrecondKind::XLDU, 1e-12)).unwrap();
            let sum: Vec<f64> = next.e.iter().zip(&st.e).map(|(a, b)| a + b).collect();
            let loss = 0.5 * s.tau * d.forms.z.quad_form(&sum);
            let change = d.energy(&next) - d.energy(&st);
            assert!((change + loss).abs() <= 1e-9 * d.energy(&st), "{change} {loss}");
            assert!(loss > 0.0);
            st = next;
        }
        assert_eq!(out.state.step, 4);
    }

    #[test]
    fn energy_is_conserved_without_impedance_boundary() {
        let spec = DomainSpec::unit_box(3).with_assignment(ImpedanceAssignment::AllGammaO);
        let (d, s) = disc(spec, 0.05, 0.1, 20, InitialCondition::Smooth);
        let out = run(&d, &s, &tight(), &PrecondConfig::exact(PrecondKind::XLDU, 1e-12)).unwrap();
        assert!(out.completed());
        assert!(out.energy_drift() <= 1e-10, "{}", out.energy_drift());
        assert!(out.records[0].energy > 0.0);
    }

    #[test]
    fn divergence_stays_zero_over_twenty_steps() {
        let (d, s) = disc(cavity(4), 0.05, 0.1, 20, InitialCondition::PaperDecay { center: Point::new(0.5, 0.5, 0.5) });
        let cfg = SolverConfig::default();
        let out = run(&d, &s, &cfg, &PrecondConfig::new(PrecondKind::WD, &cfg)).unwrap();
        assert!(out.completed());
        for r in &out.records {
            assert!(r.div_b <= 1e-9, "step {}: {}", r.step, r.div_b);
        }
        for st in &out.stats {
            assert!(st.max_relative_divergence() <= 1e-9);
        }
    }

    #[test]
    fn weak_divergence_of_e_follows_the_p_equation() {
        let (d, s) = disc(DomainSpec::unit_box(3), 0.05, 0.1, 3, InitialCondition::Smooth);
        let cfg = tight();
        let pc = PrecondConfig::exact(PrecondKind::XLDU, 1e-12);
        let mut st = initialize(&d, &s).unwrap();
        for _ in 0..3 {
            let (next, _) = step(&d, &st, &s, &cfg, &pc).unwrap();
            // (2/τ) Mp (pⁿ − pⁿ⁻¹) = GᵀMe (Eⁿ + Eⁿ⁻¹)
            let dp: Vec<f64> = next.p.iter().zip(&st.p).map(|(a, b)| 2.0 / s.tau * (a - b)).collect();
            let lhs = d.forms.mp.spmv(&dp).unwrap();
            let sum: Vec<f64> = next.e.iter().zip(&st.e).map(|(a, b)| a + b).collect();
            let rhs = d.op.gt_me.spmv(&sum).unwrap();
            let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-8 * norm_inf(&rhs).max(1e-3), "{err}");
            st = next;
        }
    }

    #[test]
    fn solver_failure_rejects_the_step() {
        let (d, s) = disc(DomainSpec::unit_box(2), 0.05, 0.1, 3, InitialCondition::Smooth);
        let cfg = SolverConfig { outer_tol: 1e-12, outer_maxit: 1, restart: 1, ..SolverConfig::default() };
        let pc = PrecondConfig::new(PrecondKind::WD, &cfg);
        let st = initialize(&d, &s).unwrap();
        assert!(matches!(step(&d, &st, &s, &cfg, &pc), Err(Error::StepRejected { step: 1, .. })));
        let out = run(&d, &s, &cfg, &pc).unwrap();
        assert!(!out.completed());
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn zero_data_stays_zero() {
        let (d, s) = disc(DomainSpec::unit_box(2), 0.05, 0.1, 2, InitialCondition::Zero);
        let out = run(&d, &s, &SolverConfig::default(), &PrecondConfig::new(PrecondKind::WL, &SolverConfig::default())).unwrap();
        assert!(out.completed());
        assert!(out.state.to_flat().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn log_has_one_row_per_step() {
        let (d, s) = disc(DomainSpec::unit_box(2), 0.05, 0.1, 3, InitialCondition::Smooth);
        let cfg = SolverConfig::default();
        let out = run(&d, &s, &cfg, &PrecondConfig::new(PrecondKind::XLDU, &cfg)).unwrap();
        let mut buf = Vec::new();
        write_log(&out.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,time,iterations,rel_residual,energy,div_b"));
        assert_eq!(lines.count(), 4);
        let back: Vec<StepRecord> =
            csv::Reader::from_reader(text.as_bytes()).deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(back, out.records);
    }

    #[test]
    fn setup_validation() {
        let m = generate(&DomainSpec::unit_box(1)).unwrap();
        assert!(ProblemSetup::new(&m, -1.0, 0.1, 1).is_err());
        assert!(ProblemSetup::new(&m, 0.05, 0.0, 1).is_err());
        assert_eq!(ProblemSetup::new(&m, 0.05, 0.1, 20).unwrap().steps(), 20);
    }
}
