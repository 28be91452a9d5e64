//! Invariant checks: contraction identities, projection optimality,
//! solver descent and sparsity guarantees, stationarity consistency, and
//! serialization round-trips.

mod common;

use common::*;
use itertools::Itertools;
use proptest::prelude::*;

use nhtp::bench::{emit_rows, OutputFormat, SolverKind, SummaryRow};
use nhtp::generator::{analytic_example, generate_with_stream, GeneratorKind, GeneratorSpec};
use nhtp::objective::verify_assumption1;
use nhtp::solver::{
    armijo_search, hard_threshold, newton_direction, select_support, solve, EtaRule, NhtpConfig,
    SolveStatus,
};
use nhtp::tensor::CpTensor;

fn cp_with_point() -> impl Strategy<Value = (CpTensor, Vec<f64>)> {
    (2usize..=5, 2usize..=6, 1usize..=4).prop_flat_map(|(m, n, r)| {
        (
            proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, n), r),
            proptest::collection::vec(-1.0f64..1.0, n),
        )
            .prop_map(move |(factors, x)| (CpTensor::new(m, n, factors).unwrap(), x))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contraction_homogeneity((cp, x) in cp_with_point(), c in -2.0f64..2.0) {
        let m = cp.order();
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let base = cp.contract_to_vector(&x).unwrap();
        let got = cp.contract_to_vector(&scaled).unwrap();
        let factor = c.powi(m as i32 - 1);
        for (g, b) in got.iter().zip(&base) {
            let want = factor * b;
            prop_assert!((g - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
    }

    #[test]
    fn contraction_outputs_are_symmetric((cp, x) in cp_with_point()) {
        let mat = cp.contract_to_matrix(&x).unwrap();
        let dev = (&mat - mat.transpose()).amax();
        prop_assert!(dev <= 1e-12 * mat.amax().max(1e-300));
        if cp.order() >= 3 {
            let r: Vec<f64> = x.iter().rev().cloned().collect();
            let w = cp.contract_order3_with(&x, &r).unwrap();
            let dev = (&w - w.transpose()).amax();
            prop_assert!(dev <= 1e-12 * w.amax().max(1e-300));
        }
    }

    #[test]
    fn contraction_orders_are_consistent((cp, x) in cp_with_point()) {
        // (A x^{m-2}) x = A x^{m-1}, and (A x^{m-3}) x x = A x^{m-1}
        let vec = cp.contract_to_vector(&x).unwrap();
        let mat = cp.contract_to_matrix(&x).unwrap();
        let via_mat = &mat * nalgebra::DVector::from_column_slice(&x);
        let scale = vec.iter().fold(1e-30f64, |a, v| a.max(v.abs())).max(1.0);
        for (a, b) in via_mat.iter().zip(&vec) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
        if cp.order() >= 3 {
            let w = cp.contract_order3_with(&x, &x).unwrap();
            let via_w = &w * nalgebra::DVector::from_column_slice(&x);
            for (a, b) in via_w.iter().zip(&vec) {
                prop_assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn hard_threshold_is_sparse_projection(
        x in proptest::collection::vec(-10.0f64..10.0, 1..10),
        s_raw in 1usize..10,
    ) {
        let n = x.len();
        let s = 1 + s_raw % n;
        let out = hard_threshold(&x, s).unwrap();
        let nnz = out.iter().filter(|v| **v != 0.0).count();
        prop_assert!(nnz <= s);
        // kept coordinates are untouched
        for i in 0..n {
            prop_assert!(out[i] == 0.0 || out[i] == x[i]);
        }
        // distance optimality against exhaustive support enumeration
        let dist = |keep: &[usize]| -> f64 {
            let mut d = 0.0;
            for i in 0..n {
                if !keep.contains(&i) {
                    d += x[i] * x[i];
                }
            }
            d
        };
        let got: f64 = x.iter().zip(&out).map(|(a, b)| (a - b) * (a - b)).sum();
        let best = (0..n)
            .combinations(s.min(n))
            .map(|keep| dist(&keep))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(got <= best + 1e-12 * best.max(1.0));
    }

    #[test]
    fn select_support_maximizes_mass(
        x in proptest::collection::vec(-5.0f64..5.0, 2..9),
        g in proptest::collection::vec(-5.0f64..5.0, 2..9),
        eta in 0.01f64..1.0,
        s_raw in 1usize..8,
    ) {
        let n = x.len().min(g.len());
        let x = &x[..n];
        let g = &g[..n];
        let s = 1 + s_raw % n;
        let t = select_support(x, g, eta, s);
        prop_assert_eq!(t.len(), s);
        let u: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| (xi - eta * gi).abs()).collect();
        let got: f64 = t.iter().map(|&i| u[i]).sum();
        let best = (0..n)
            .combinations(s)
            .map(|c| c.iter().map(|&i| u[i]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(got >= best - 1e-12 * best.abs().max(1.0));
    }

    #[test]
    fn summary_rows_roundtrip(
        m in 2usize..6, n in 2usize..80, s in 1usize..5,
        trials in 1usize..100,
        mean_nnz in 0.0f64..10.0, mean_re in 0.0f64..1.0,
        mean_time_s in 0.0f64..10.0, mean_iter in 0.0f64..2000.0,
        success_rate in 0.0f64..1.0,
    ) {
        let rows = vec![SummaryRow {
            m, n, s,
            solver: if m % 2 == 0 { SolverKind::Nhtp } else { SolverKind::Iht },
            trials, mean_nnz, mean_re, mean_time_s, mean_iter, success_rate,
        }];
        let mut json = Vec::new();
        emit_rows(&rows, OutputFormat::Json, &mut json).unwrap();
        let back: Vec<SummaryRow> = serde_json::from_slice(&json).unwrap();
        prop_assert_eq!(&back, &rows);

        let mut csv_buf = Vec::new();
        emit_rows(&rows, OutputFormat::Csv, &mut csv_buf).unwrap();
        let mut reader = csv::Reader::from_reader(csv_buf.as_slice());
        let parsed: Vec<SummaryRow> = reader.deserialize().map(|r| r.unwrap()).collect();
        prop_assert_eq!(&parsed, &rows);
    }
}

/// CP-path and dense-path contractions agree on a seeded grid covering
/// m <= 5, n <= 8, r <= 6.
#[test]
fn representation_equivalence_grid() {
    let mut case = 0u64;
    for m in 2..=5usize {
        for n in [2, 4, 8usize] {
            for r in [1, 3, 6usize] {
                case += 1;
                let cp = seeded_cp_tensor(1000 + case, m, n, r);
                let dense = cp.to_dense().unwrap();
                let mut rg = rng(2000 + case);
                let x = uniform_vec(&mut rg, n, -1.0, 1.0);
                let rvec = uniform_vec(&mut rg, n, -1.0, 1.0);

                let v_cp = cp.contract_to_vector(&x).unwrap();
                let v_dense = dense.contract_to_vector(&x).unwrap();
                let scale = v_dense.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                assert!(max_abs_diff(&v_cp, &v_dense) <= 1e-10 * scale);

                let m_cp = cp.contract_to_matrix(&x).unwrap();
                let m_dense = dense.contract_to_matrix(&x).unwrap();
                assert!((&m_cp - &m_dense).amax() <= 1e-10 * m_dense.amax().max(1.0));

                if m >= 3 {
                    let w_cp = cp.contract_order3_with(&x, &rvec).unwrap();
                    let w_dense = dense.contract_order3_with(&x, &rvec).unwrap();
                    assert!((&w_cp - &w_dense).amax() <= 1e-10 * w_dense.amax().max(1.0));
                }

                let f_cp = cp.frobenius_norm();
                let f_gram = cp.frobenius_norm_gram();
                let f_dense = dense.frobenius_norm();
                assert!((f_cp - f_dense).abs() <= 1e-10 * f_dense.max(1.0));
                assert!((f_gram - f_dense).abs() <= 1e-9 * f_dense.max(1.0));
            }
        }
    }
}

/// Replays the NHTP pieces step by step and asserts the Armijo inequality,
/// the monotone decrease it implies for descent directions, and the sparsity
/// of every iterate.
#[test]
fn solver_descent_and_sparsity_invariants() {
    for seed in 0..6u64 {
        let spec = GeneratorSpec::new(GeneratorKind::CpRandom, 3, 8, 2, 77);
        let p = generate_with_stream(&spec, seed).unwrap();
        let x0 = p.start().unwrap().to_vec();
        let eta = nhtp::solver::default_eta(&p, &x0).unwrap();
        let config = NhtpConfig {
            eta: EtaRule::Fixed(eta),
            ..NhtpConfig::default()
        };
        let mut x = hard_threshold(&x0, p.sparsity()).unwrap();
        for _ in 0..30 {
            let g = p.gradient(&x).unwrap();
            let t = select_support(&x, &g, eta, p.sparsity());
            if p.tolerance_measure(&x, &t, eta).unwrap() <= config.tol {
                break;
            }
            let f0 = p.objective_value(&x).unwrap();
            let (d, _) = newton_direction(&p, &x, &t, &config).unwrap();
            let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let (alpha, x_next) = armijo_search(&p, &x, &d, &t, &config).unwrap();
            let f1 = p.objective_value(&x_next).unwrap();
            assert!(
                f1 <= f0 + config.sigma * alpha * slope + 1e-12 * f0.abs().max(1.0),
                "armijo inequality violated: f0={f0} f1={f1} slope={slope} alpha={alpha}"
            );
            if slope <= 0.0 {
                assert!(f1 <= f0 + 1e-12 * f0.abs().max(1.0), "ascent on descent direction");
            }
            let nnz = x_next.iter().filter(|v| **v != 0.0).count();
            assert!(nnz <= p.sparsity());
            x = x_next;
        }
    }
}

/// The stationarity check agrees with the tolerance measure: a point is
/// eta-stationary exactly when the support-selection map keeps its support
/// and the measure vanishes there.
#[test]
fn stationarity_and_tolerance_agree() {
    let eta = 0.05;
    let mut points: Vec<(nhtp::ProblemInstance, Vec<f64>)> = Vec::new();

    // converged solutions are stationary
    let spec = GeneratorSpec::new(GeneratorKind::CpRandom, 3, 8, 2, 5);
    for t in 0..4u64 {
        let p = generate_with_stream(&spec, t).unwrap();
        let mut config = NhtpConfig::default();
        config.tol = 1e-12;
        let report = solve(&p, p.start().unwrap(), &config).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        points.push((p, report.x_final));
    }
    // random sparse points are generically not stationary
    for t in 0..4u64 {
        let p = generate_with_stream(&spec, t).unwrap();
        let mut x = vec![0.0; 8];
        x[(t as usize) % 8] = 0.4 + 0.1 * t as f64;
        x[(t as usize + 3) % 8] = -0.7;
        points.push((p, x));
    }

    for (p, x) in &points {
        let rep = p.eta_stationarity_check(x, eta).unwrap();
        let g = p.gradient(x).unwrap();
        let t = select_support(x, &g, eta, p.sparsity());
        let supp: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        let t_covers = supp.iter().all(|i| t.contains(i));
        let tol = p.tolerance_measure(x, &t, eta).unwrap();
        let fixed_point = t_covers && tol <= 1e-10;
        assert_eq!(
            rep.is_stationary, fixed_point,
            "stationarity {} vs tol measure {tol:.3e} (covers: {t_covers})",
            rep.is_stationary
        );
    }
}

/// Near the solution the error contraction stays bounded by the
/// theory-derived constant 10 L_f / (2 lambda_min).
#[test]
fn quadratic_ratio_stays_bounded() {
    let spec = GeneratorSpec::new(GeneratorKind::CpRandom, 3, 10, 1, 0);
    for t in 0..3u64 {
        let p = generate_with_stream(&spec, t).unwrap();
        let x_star = p.ground_truth().unwrap().to_vec();
        let config = NhtpConfig {
            tol: 1e-13,
            trace_iterates: true,
            ..NhtpConfig::default()
        };
        let report = solve(&p, p.start().unwrap(), &config).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);

        let delta0 = euclidean_diff(p.start().unwrap(), &x_star);
        let l_f = nhtp::objective::lipschitz_constant(&p, &x_star, delta0);
        let lambda_min = verify_assumption1(&p, &x_star, p.sparsity())
            .unwrap()
            .min_eigenvalue;
        assert!(lambda_min > 0.0);
        let bound = 10.0 * l_f / (2.0 * lambda_min);

        let errors: Vec<f64> = report
            .iterates
            .unwrap()
            .iter()
            .map(|x| euclidean_diff(x, &x_star))
            .collect();
        for w in errors.windows(2) {
            let (e0, e1) = (w[0], w[1]);
            if e0 <= 1e-2 && e0 >= 1e-9 && e1 >= 1e-15 {
                assert!(
                    e1 <= bound * e0 * e0,
                    "ratio {} exceeds bound {bound}",
                    e1 / (e0 * e0)
                );
            }
        }
    }
}

/// Assumption-1 minimum eigenvalues agree with an independent Jacobi
/// eigensolver over explicit support enumeration.
#[test]
fn assumption1_matches_independent_eigensolver() {
    let spec = GeneratorSpec::new(GeneratorKind::CpRandom, 3, 6, 2, 8);
    let p = generate_with_stream(&spec, 0).unwrap();
    let x_star = p.ground_truth().unwrap();
    let rep = verify_assumption1(&p, x_star, 2).unwrap();

    let n = p.dim();
    let supp: Vec<usize> = (0..n).filter(|&i| x_star[i] != 0.0).collect();
    let others: Vec<usize> = (0..n).filter(|&i| x_star[i] == 0.0).collect();
    let mut best = f64::INFINITY;
    for extra_size in 0..=(2 * 2 - supp.len()) {
        for extra in others.iter().copied().combinations(extra_size) {
            let mut t = supp.clone();
            t.extend(extra);
            t.sort_unstable();
            let block = p.hessian_block(x_star, &t, &t).unwrap();
            let lmin = jacobi_eigenvalues(&block)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            best = best.min(lmin);
        }
    }
    assert!(
        (rep.min_eigenvalue - best).abs() <= 1e-9 * best.abs().max(1.0),
        "{} vs jacobi {best}",
        rep.min_eigenvalue
    );
}

/// Generated instances serialize to the documented flat JSON schema and
/// reload identically.
#[test]
fn instance_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, name) in [
        (GeneratorKind::CpRandom, "cp.json"),
        (GeneratorKind::MTensorRandom, "mt.json"),
        (GeneratorKind::Analytic, "an.json"),
    ] {
        let spec = GeneratorSpec::new(kind, 3, 6, 1, 13);
        let p = generate_with_stream(&spec, 2).unwrap();
        let path = dir.path().join(name);
        p.save(&path).unwrap();
        let back = nhtp::ProblemInstance::load(&path).unwrap();
        assert_eq!(back, p);

        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert!(json.get("kind").is_some());
        assert!(json.get("order").is_some());
        assert!(json.get("dim").is_some());
        assert!(json.get("b").is_some());
        assert!(json.get("s").is_some());
        assert!(json.get("x_star").is_some());
        assert!(json.get("x0").is_some());
        match kind {
            GeneratorKind::MTensorRandom => assert!(json.get("values").is_some()),
            _ => assert!(json.get("factors").is_some()),
        }
    }
}

/// Order 2 degenerates to sparse least squares over a symmetric matrix and
/// the whole pipeline still runs: generation, solve, fixed point.
#[test]
fn order_two_matrix_case_end_to_end() {
    let spec = GeneratorSpec::new(GeneratorKind::CpRandom, 2, 8, 2, 21);
    for t in 0..3u64 {
        let p = generate_with_stream(&spec, t).unwrap();
        assert_eq!(p.order(), 2);
        let mut config = NhtpConfig::default();
        config.tol = 1e-10;
        let report = solve(&p, p.start().unwrap(), &config).unwrap();
        assert_eq!(report.status, SolveStatus::Converged, "stream {t}");
        let re = nhtp::bench::relative_error(&report.x_final, p.ground_truth().unwrap()).unwrap();
        assert!(re <= 1e-8, "stream {t}: re = {re}");
    }
}

/// Full Hessian blocks are symmetric.
#[test]
fn hessian_blocks_are_symmetric() {
    for seed in 0..8u64 {
        let m = 2 + (seed % 3) as usize;
        let n = 3 + (seed % 4) as usize;
        let p = seeded_problem(seed, m, n, 1, seed % 2 == 0);
        let mut rg = rng(600 + seed);
        let x = uniform_vec(&mut rg, n, -1.0, 1.0);
        let full: Vec<usize> = (0..n).collect();
        let h = p.hessian_block(&x, &full, &full).unwrap();
        let dev = (&h - h.transpose()).amax();
        assert!(dev <= 1e-10 * h.amax().max(1e-300), "asymmetry {dev}");
    }
}

/// Near the solution the accepted steps are full Newton steps.
#[test]
fn newton_steps_are_exact_near_optimum() {
    let p = analytic_example(4, 3).unwrap();
    let config = NhtpConfig {
        tol: 1e-13,
        ..NhtpConfig::default()
    };
    let report = solve(&p, p.start().unwrap(), &config).unwrap();
    assert_eq!(report.status, SolveStatus::Converged);
    assert!(!report.history.is_empty());
    for rec in &report.history {
        assert_eq!(rec.kind, nhtp::solver::DirectionKind::Newton);
        assert_eq!(rec.step, 1.0);
    }
}

/// The 99.9%-mass nonzero count of a converged solution never exceeds the
/// sparsity budget.
#[test]
fn nnz_measure_within_budget_on_converged_runs() {
    for (kind, seed) in [
        (GeneratorKind::CpRandom, 0u64),
        (GeneratorKind::MTensorRandom, 7),
    ] {
        let spec = GeneratorSpec::new(kind, 3, 10, 2, seed);
        for t in 0..5u64 {
            let p = generate_with_stream(&spec, t).unwrap();
            let mut config = NhtpConfig::default();
            config.tol = 1e-10;
            let report = solve(&p, p.start().unwrap(), &config).unwrap();
            if report.status == SolveStatus::Converged {
                assert!(nhtp::bench::nnz_measure(&report.x_final) <= p.sparsity());
            }
        }
    }
}

/// The dense contraction path agrees with the brute-force multi-index oracle
/// on symmetrized random tensors.
#[test]
fn dense_contractions_match_naive_oracle() {
    for (case, (m, n)) in [(3usize, 4usize), (4, 3), (5, 2), (2, 6)].iter().enumerate() {
        let t = seeded_dense_tensor(3000 + case as u64, *m, *n);
        let mut rg = rng(4000 + case as u64);
        let x = uniform_vec(&mut rg, *n, -1.0, 1.0);
        let r = uniform_vec(&mut rg, *n, -1.0, 1.0);

        let v = t.contract_to_vector(&x).unwrap();
        let v_naive = naive_contract_vector(&t, &x);
        assert!(max_abs_diff(&v, &v_naive) <= 1e-12 * v_naive.iter().fold(1.0f64, |a, z| a.max(z.abs())));

        let mt = t.contract_to_matrix(&x).unwrap();
        let mt_naive = naive_contract_matrix(&t, &x);
        assert!((&mt - &mt_naive).amax() <= 1e-12 * mt_naive.amax().max(1.0));

        if *m >= 3 {
            let w = t.contract_order3_with(&x, &r).unwrap();
            let w_naive = naive_contract_order3(&t, &x, &r);
            assert!((&w - &w_naive).amax() <= 1e-12 * w_naive.amax().max(1.0));
        }
    }
}
