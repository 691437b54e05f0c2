use std::time::Instant;

use super::{Preconditioner, SolveStats, SolveStatus, SolverConfig};
use crate::linalg::{axpy, dot, norm2, norm_inf, BlockLayout, LinearOperator, SparseMatrix};
use crate::{Error, Result};

/// Right-preconditioned flexible GMRES(m) with modified Gram–Schmidt and
/// Givens rotations. Convergence is measured as `‖b − A x‖ / ‖b − A x0‖`.
pub fn fgmres<A, M>(a: &A, m: &M, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolveStats)>
where
    A: LinearOperator + ?Sized,
    M: Preconditioner + ?Sized,
{
    run(a, m, b, x0, cfg, None)
}

/// As [`fgmres`], additionally calling `monitor` with the initial guess and
/// with every subsequent iterate `x_l = x0 + Z_l y_l`.
pub fn fgmres_monitored<A, M>(
    a: &A,
    m: &M,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    monitor: &mut dyn FnMut(&[f64]),
) -> Result<(Vec<f64>, SolveStats)>
where
    A: LinearOperator + ?Sized,
    M: Preconditioner + ?Sized,
{
    run(a, m, b, x0, cfg, Some(monitor))
}

/// Records `‖D·B^l‖∞` and `‖B^l‖∞` of every iterate in the returned stats.
pub fn fgmres_tracking_divergence<A, M>(
    a: &A,
    m: &M,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    d: &SparseMatrix,
    layout: BlockLayout,
) -> Result<(Vec<f64>, SolveStats)>
where
    A: LinearOperator + ?Sized,
    M: Preconditioner + ?Sized,
{
    let mut div = Vec::new();
    let mut bn = Vec::new();
    let mut probe = |x: &[f64]| {
        let xb = &x[layout.b()];
        div.push(norm_inf(&d.spmv(xb).expect("D matches the B block")));
        bn.push(norm_inf(xb));
    };
    let (x, mut stats) = run(a, m, b, x0, cfg, Some(&mut probe))?;
    stats.div_history = div;
    stats.b_norm_history = bn;
    Ok((x, stats))
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Back substitution on the leading `k×k` block of the rotated Hessenberg matrix.
fn solve_upper(h: &[Vec<f64>], g: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| h[j][i] * y[j]).sum();
        y[i] = (g[i] - s) / h[i][i];
    }
    y
}

type Monitor<'a> = Option<&'a mut dyn FnMut(&[f64])>;

fn run<A, M>(
    a: &A,
    m: &M,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
    mut monitor: Monitor<'_>,
) -> Result<(Vec<f64>, SolveStats)>
where
    A: LinearOperator + ?Sized,
    M: Preconditioner + ?Sized,
{
    cfg.validate()?;
    let n = a.dim();
    if b.len() != n || x0.len() != n {
        return Err(Error::Shape(format!("fgmres: operator {n}, rhs {}, guess {}", b.len(), x0.len())));
    }
    let start = Instant::now();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64]| {
        a.apply(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    };
    residual(&x, &mut r);
    let r0 = norm2(&r);
    if let Some(mon) = monitor.as_mut() {
        mon(&x);
    }
    let mut history = vec![1.0];
    let finish = |x: Vec<f64>, history: Vec<f64>, status, rel| {
        let stats = SolveStats {
            iterations: history.len() - 1,
            rel_residual: rel,
            history,
            div_history: Vec::new(),
            b_norm_history: Vec::new(),
            wall_time: start.elapsed(),
            status,
        };
        Ok((x, stats))
    };
    if r0 == 0.0 {
        return finish(x, history, SolveStatus::Converged, 0.0);
    }

    let restart = cfg.restart.min(n.max(1));
    let mut status = SolveStatus::MaxIterations;
    let mut beta = r0;
    'outer: loop {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(restart);
        // column-major Hessenberg: h[j] is column j, length j + 2
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(restart);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        let mut stop = false;
        while k < restart {
            let mut zk = vec![0.0; n];
            m.apply(&v[k], &mut zk)?;
            let mut w = vec![0.0; n];
            a.apply(&zk, &mut w);
            z.push(zk);
            let mut col = vec![0.0; k + 2];
            for (i, vi) in v.iter().enumerate() {
                col[i] = dot(&w, vi);
                axpy(-col[i], vi, &mut w);
            }
            let wn = norm2(&w);
            col[k + 1] = wn;
            for (i, (c, s)) in cs.iter().enumerate() {
                let (p, q) = (col[i], col[i + 1]);
                col[i] = c * p + s * q;
                col[i + 1] = -s * p + c * q;
            }
            let (c, s) = givens(col[k], col[k + 1]);
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            cs.push((c, s));
            h.push(col);
            k += 1;

            let rel = g[k].abs() / r0;
            history.push(rel);
            if let Some(mon) = monitor.as_mut() {
                let y = solve_upper(&h, &g, k);
                let mut xl = x.clone();
                for (zi, yi) in z.iter().zip(&y) {
                    axpy(*yi, zi, &mut xl);
                }
                mon(&xl);
            }
            if rel <= cfg.outer_tol {
                status = SolveStatus::Converged;
                stop = true;
            } else if wn <= 1e-14 * h[k - 1][k - 1].abs().max(f64::MIN_POSITIVE) || !rel.is_finite() {
                status = SolveStatus::Breakdown;
                stop = true;
            } else if history.len() > cfg.outer_maxit {
                stop = true;
            }
            if stop {
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        let y = solve_upper(&h, &g, k);
        for (zi, yi) in z.iter().zip(&y) {
            axpy(*yi, zi, &mut x);
        }
        if stop {
            break 'outer;
        }
        residual(&x, &mut r);
        beta = norm2(&r);
        if beta == 0.0 {
            status = SolveStatus::Converged;
            break;
        }
    }
    residual(&x, &mut r);
    let rel = norm2(&r) / r0;
    finish(x, history, status, rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::Identity;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rand_matrix(n: usize, seed: u64, shift: f64) -> SparseMatrix {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, shift + rng.gen_range(0.0..1.0)));
            for _ in 0..3 {
                trip.push((i, rng.gen_range(0..n), rng.gen_range(-1.0..1.0)));
            }
        }
        SparseMatrix::from_triplets(n, n, trip).unwrap()
    }

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn cfg(tol: f64) -> SolverConfig {
        SolverConfig { outer_tol: tol, ..Default::default() }
    }

    #[test]
    fn zero_rhs_zero_guess_returns_immediately() {
        let a = rand_matrix(10, 1, 3.0);
        let (x, s) = fgmres(&a, &Identity, &[0.0; 10], &[0.0; 10], &cfg(1e-8)).unwrap();
        assert_eq!(s.iterations, 0);
        assert_eq!(s.history, vec![1.0]);
        assert!(s.converged());
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let a = rand_matrix(4, 1, 3.0);
        assert!(matches!(fgmres(&a, &Identity, &[0.0; 3], &[0.0; 4], &cfg(1e-8)), Err(Error::Shape(_))));
        let bad = SolverConfig { outer_tol: 0.0, ..Default::default() };
        assert!(fgmres(&a, &Identity, &[0.0; 4], &[0.0; 4], &bad).is_err());
    }

    /// Each GMRES iterate minimizes the residual over the Krylov space;
    /// reproduce that with an independent dense least-squares solve.
    #[test]
    fn matches_reference_gmres_iterates() {
        // SPD two-block diagonal system
        let n = 24;
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for blk in [0..12usize, 12..24] {
            let q = DMatrix::from_fn(12, 12, |_, _| rng.gen_range(-1.0..1.0));
            let spd = &q * q.transpose() + DMatrix::identity(12, 12) * 2.0;
            dense.view_mut((blk.start, blk.start), (12, 12)).copy_from(&spd);
        }
        let trip = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, dense[(i, j)])).collect();
        let a = SparseMatrix::from_triplets(n, n, trip).unwrap();
        let b = rand_vec(n, 6);
        let mut iterates = Vec::new();
        let mut mon = |x: &[f64]| iterates.push(x.to_vec());
        let (_, stats) = fgmres_monitored(&a, &Identity, &b, &vec![0.0; n], &cfg(1e-10), &mut mon).unwrap();
        assert!(stats.converged());
        let bv = DVector::from_vec(b.clone());
        let mut basis = DMatrix::<f64>::zeros(n, 0);
        let mut kv = bv.clone();
        for (k, xk) in iterates.iter().enumerate().skip(1).take(8) {
            basis = basis.insert_column(k - 1, 0.0);
            basis.set_column(k - 1, &kv);
            kv = &dense * &kv;
            let q = basis.clone().qr().q();
            let aq = &dense * &q;
            let y = aq.svd(true, true).solve(&bv, 1e-14).unwrap();
            let x_ref = &q * y;
            let err = (DVector::from_vec(xk.clone()) - &x_ref).amax();
            assert!(err <= 1e-12 * (1.0 + x_ref.amax()), "iterate {k}: {err}");
        }
    }

    #[test]
    fn converges_and_reports_true_residual() {
        let a = rand_matrix(200, 3, 4.0);
        let b = rand_vec(200, 4);
        let (x, s) = fgmres(&a, &Identity, &b, &vec![0.0; 200], &cfg(1e-10)).unwrap();
        assert!(s.converged());
        assert_eq!(s.history.len(), s.iterations + 1);
        let r: Vec<f64> = a.spmv(&x).unwrap().iter().zip(&b).map(|(u, v)| v - u).collect();
        assert!(norm2(&r) / norm2(&b) <= 1e-9);
        assert!((s.rel_residual - norm2(&r) / norm2(&b)).abs() < 1e-12);
    }

    #[test]
    fn restarts_still_converge() {
        let a = rand_matrix(100, 9, 3.0);
        let b = rand_vec(100, 10);
        let c = SolverConfig { outer_tol: 1e-9, restart: 5, outer_maxit: 2000, ..Default::default() };
        let (_, s) = fgmres(&a, &Identity, &b, &vec![0.0; 100], &c).unwrap();
        assert!(s.converged());
        assert!(s.iterations > 5);
    }

    #[test]
    fn max_iterations_is_reported() {
        let a = rand_matrix(100, 11, 0.0);
        let b = rand_vec(100, 12);
        let c = SolverConfig { outer_tol: 1e-12, outer_maxit: 3, ..Default::default() };
        let (_, s) = fgmres(&a, &Identity, &b, &vec![0.0; 100], &c).unwrap();
        assert_eq!(s.status, SolveStatus::MaxIterations);
        assert_eq!(s.iterations, 3);
    }

    struct Diag(Vec<f64>);
    impl Preconditioner for Diag {
        fn apply(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
            for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.0) {
                *zi = ri / di;
            }
            Ok(())
        }
    }

    /// Scaling `A → S A S`, `b → S b`, `P → S P S` with `S` a signed diagonal
    /// (orthogonal) leaves the residual history unchanged, and `A → cA`,
    /// `P → P/c` likewise.
    #[test]
    fn invariant_under_commuting_scalings() {
        let n = 60;
        let a = rand_matrix(n, 21, 3.0);
        let b = rand_vec(n, 22);
        let p = Diag(a.diagonal());
        let (x, s) = fgmres(&a, &p, &b, &vec![0.0; n], &cfg(1e-10)).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(23);
        for _ in 0..3 {
            let sign: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let c = rng.gen_range(0.1..10.0);
            let sa = SparseMatrix::from_triplets(
                n,
                n,
                a.triplets().map(|(i, j, v)| (i, j, c * sign[i] * v * sign[j])).collect(),
            )
            .unwrap();
            let sb: Vec<f64> = b.iter().zip(&sign).map(|(u, s)| u * s).collect();
            let sp = Diag(a.diagonal().iter().map(|d| c * d).collect());
            let (sx, ss) = fgmres(&sa, &sp, &sb, &vec![0.0; n], &cfg(1e-10)).unwrap();
            assert_eq!(ss.iterations, s.iterations);
            for (h1, h2) in s.history.iter().zip(&ss.history) {
                assert!((h1 - h2).abs() <= 1e-10 * h1.max(1e-3));
            }
            for i in 0..n {
                assert!((sx[i] - sign[i] * x[i] / c).abs() <= 1e-8 * (1.0 + x[i].abs() / c));
            }
        }
    }

    #[test]
    fn divergence_tracking_records_every_iterate() {
        let n = 30;
        let a = rand_matrix(n, 31, 3.0);
        let b = rand_vec(n, 32);
        let d = SparseMatrix::from_triplets(2, 10, vec![(0, 0, 1.0), (1, 5, -1.0)]).unwrap();
        let layout = BlockLayout::new(10, 15, 5);
        let (_, s) =
            fgmres_tracking_divergence(&a, &Identity, &b, &vec![0.0; n], &cfg(1e-8), &d, layout).unwrap();
        assert_eq!(s.div_history.len(), s.iterations + 1);
        assert_eq!(s.b_norm_history.len(), s.iterations + 1);
        assert_eq!(s.div_history[0], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn residuals_nonincreasing_within_cycle(seed in 0u64..10_000, shift in 0.0f64..3.0) {
            let a = rand_matrix(40, seed, shift);
            let b = rand_vec(40, seed + 1);
            let c = SolverConfig { outer_tol: 1e-12, outer_maxit: 40, ..Default::default() };
            let (_, s) = fgmres(&a, &Identity, &b, &vec![0.0; 40], &c).unwrap();
            for w in s.history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-13);
            }
        }
    }
}
