use nalgebra::DMatrix;
use proptest::prelude::*;
use psd_bounds::elimination::{eps_transform, eps_transform_stochastic, EpsTransformPlan, RowFunctional};
use psd_bounds::factorization::{verify_psd_factorization, NonnegFactorization, PSDFactorization};
use psd_bounds::functionals::{fidelity, fidelity_gram, mean_statistical_distance, mutual_information, b3_detail, bound_b3};
use psd_bounds::matrix::DEFAULT_RANK_TOL;
use psd_bounds::polytope::{make_polytope, slack_matrix, Family};
use psd_bounds::qp::{solve_simplex, solve_weighted_slice, QpOptions};
use psd_bounds::{
    bound_report, column_normalize, global_normalize, numerical_rank, random_rank_r_stochastic, scale, JointDistribution,
    NonnegMatrix, ReportOptions, StochasticMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dims(max: usize) -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1..=max, 1..=max, any::<u64>()).prop_flat_map(|(n, m, seed)| (Just(n), Just(m), 1..=n.min(m), Just(seed)))
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.0..1.0f64], 1..20).prop_filter_map("zero", |v| {
        let s: f64 = v.iter().sum();
        (s > 0.0).then(|| v.iter().map(|x| x / s).collect())
    })
}

fn distribution_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..20usize).prop_flat_map(|m| {
        let d = move || {
            prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.0..1.0f64], m).prop_filter_map("zero", |v| {
                let s: f64 = v.iter().sum();
                (s > 0.0).then(|| v.iter().map(|x| x / s).collect::<Vec<f64>>())
            })
        };
        (d(), d())
    })
}

/// A stochastic matrix with `n >= 3` rows and rank below `n`, so an
/// eps-transformation exists on its first `rank + 1` nonzero rows.
fn reducible(seed: u64) -> (StochasticMatrix, EpsTransformPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=10);
    let m = rng.gen_range(2..=8);
    let r = rng.gen_range(1..=(n - 1).min(m));
    let s = random_rank_r_stochastic(n, m, r, rng.gen()).unwrap();
    let rows: Vec<usize> = s.nonzero_rows().into_iter().take(r + 1).collect();
    let plan = EpsTransformPlan::build(&s, &rows).unwrap();
    (s, plan)
}

fn permute(j: &JointDistribution, rows: &[usize], cols: &[usize]) -> JointDistribution {
    let data = DMatrix::from_fn(j.nrows(), j.ncols(), |i, k| j.get(rows[i], cols[k]));
    JointDistribution::new(NonnegMatrix::new(data).unwrap()).unwrap()
}

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn construction_clamps_dust(entries in prop::collection::vec(prop_oneof![-1e-12..=0.0f64, 0.0..5.0f64], 1..30)) {
        let m = NonnegMatrix::new(DMatrix::from_row_slice(1, entries.len(), &entries)).unwrap();
        prop_assert!(m.as_matrix().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn column_normalize_is_idempotent((n, m, r, seed) in dims(12)) {
        let base = random_rank_r_stochastic(n, m, r, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let cols: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..10.0)).collect();
        let once = column_normalize(&scale(&base, &vec![1.0; n], &cols).unwrap()).unwrap();
        let twice = column_normalize(&once).unwrap();
        let diff = (once.as_matrix() - twice.as_matrix()).amax();
        prop_assert!(diff <= 1e-12);
        prop_assert_eq!(numerical_rank(&once, DEFAULT_RANK_TOL), r);
    }

    #[test]
    fn rank_invariant_under_positive_scaling((n, m, r, seed) in dims(15)) {
        let base = random_rank_r_stochastic(n, m, r, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let rows: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..20.0)).collect();
        let cols: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..20.0)).collect();
        let scaled = scale(&base, &rows, &cols).unwrap();
        prop_assert_eq!(numerical_rank(&scaled, DEFAULT_RANK_TOL), numerical_rank(&base, DEFAULT_RANK_TOL));
    }

    #[test]
    fn fidelity_lower_bound_and_range((p, q) in distribution_pair()) {
        let f = fidelity(&p, &q).unwrap();
        let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(f >= 1.0 - l1 / 2.0 - 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        prop_assert_eq!(f, fidelity(&q, &p).unwrap());
    }

    #[test]
    fn self_fidelity_is_one(p in distribution()) {
        prop_assert!((fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_permutation_invariant((n, m, r, seed) in dims(12)) {
        let j = global_normalize(&random_rank_r_stochastic(n, m, r, seed).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let (pr, pc) = (shuffled(&mut rng, n), shuffled(&mut rng, m));
        let a = mutual_information(&j);
        let b = mutual_information(&permute(&j, &pr, &pc));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn quadratic_floor_holds((n, m, r, seed) in dims(20)) {
        let s = random_rank_r_stochastic(n, m, r, seed).unwrap();
        let (_, sol) = b3_detail(&s, &QpOptions::default()).unwrap();
        prop_assert!(sol.value >= 1.0 / bound_b3(r, m) - 1e-8);
    }

    #[test]
    fn eps_transform_conserves_columns_and_stochasticity(seed in any::<u64>(), t in 0.0..=1.0f64) {
        let (s, plan) = reducible(seed);
        let eps = plan.delta_lo + t * (plan.delta_hi - plan.delta_lo);
        let out = eps_transform_stochastic(&s, &plan, eps).unwrap();
        for (a, b) in out.column_sums().iter().zip(s.column_sums()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for eps in [plan.delta_lo, plan.delta_hi] {
            let end = eps_transform(&s, &plan, eps).unwrap();
            prop_assert!(plan.row_indices.iter().any(|&i| end.is_zero_row(i) && end.row(i).iter().all(|&x| x == 0.0)));
        }
    }

    #[test]
    fn functionals_are_affine_in_eps(seed in any::<u64>()) {
        let (s, plan) = reducible(seed);
        let joint = global_normalize(&s).unwrap();
        for f in [RowFunctional::B4, RowFunctional::MeanStatisticalDistance, RowFunctional::MutualInformation] {
            let input: &NonnegMatrix = if f.wants_joint() { &joint } else { &s };
            let xs: Vec<f64> = (1..=5).map(|k| plan.delta_lo + (plan.delta_hi - plan.delta_lo) * k as f64 / 6.0).collect();
            let ys: Vec<f64> = xs.iter().map(|&e| f.evaluate(&eps_transform(input, &plan, e).unwrap()).unwrap()).collect();
            let (mx, my) = (xs.iter().sum::<f64>() / 5.0, ys.iter().sum::<f64>() / 5.0);
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let slope = sxy / sxx;
            let scale = ys.iter().fold(1.0f64, |a, y| a.max(y.abs()));
            for (x, y) in xs.iter().zip(&ys) {
                let resid = (my + slope * (x - mx) - y).abs();
                prop_assert!(resid <= 1e-8 * scale, "{}: residual {resid}", f.name());
            }
        }
    }

    #[test]
    fn weighted_slice_roundtrip((n, m, r, seed) in dims(10), row in any::<prop::sample::Index>()) {
        let s = random_rank_r_stochastic(n, m, r, seed).unwrap();
        let g = fidelity_gram(&s);
        let c = s.row(row.index(n));
        let sol = solve_weighted_slice(g.as_matrix(), &c, &QpOptions::default()).unwrap();
        let cq: f64 = c.iter().zip(&sol.q).map(|(a, b)| a * b).sum();
        prop_assert!((cq - 1.0).abs() <= 1e-9);
        let gm = g.as_matrix();
        let form: f64 = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| sol.q[i] * gm[(i, j)] * sol.q[j]).sum();
        prop_assert!((form - sol.value).abs() <= 1e-12 * (1.0 + form.abs()));
    }

    #[test]
    fn solver_objective_never_increases((n, m, r, seed) in dims(20)) {
        let s = random_rank_r_stochastic(n, m, r, seed).unwrap();
        let g = fidelity_gram(&s);
        let opts = QpOptions { record_history: true, ..QpOptions::default() };
        let sol = solve_simplex(g.as_matrix(), &opts).unwrap();
        for w in sol.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn verification_is_scale_equivariant(seed in any::<u64>(), alpha in 0.01..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m, k) = (rng.gen_range(1..=5), rng.gen_range(1..=5), rng.gen_range(1..=3));
        let left = NonnegMatrix::new(DMatrix::from_fn(n, k, |_, _| rng.gen::<f64>())).unwrap();
        let right = NonnegMatrix::new(DMatrix::from_fn(k, m, |_, _| rng.gen::<f64>())).unwrap();
        let target = NonnegMatrix::new(left.as_matrix() * right.as_matrix()).unwrap();
        let psd = NonnegFactorization::new(left, right).unwrap().diagonal_embedding();
        let i = rng.gen_range(0..n);

        let mut rows = psd.row_factors().to_vec();
        rows[i] *= alpha;
        let scaled_psd = PSDFactorization::new(psd.size(), rows, psd.col_factors().to_vec()).unwrap();
        let mut scaled_target = target.as_matrix().clone();
        scaled_target.row_mut(i).scale_mut(alpha);
        let scaled_target = NonnegMatrix::new(scaled_target).unwrap();

        let tol = 1e-8 * (1.0 + alpha);
        let before = verify_psd_factorization(&target, &psd, tol).unwrap();
        let after = verify_psd_factorization(&scaled_target, &scaled_psd, tol).unwrap();
        prop_assert!(before.ok && after.ok);

        // a wrong factorization stays wrong after the same scaling
        let mut off = target.as_matrix().clone();
        off[(i, 0)] += 1.0;
        let off_before = verify_psd_factorization(&NonnegMatrix::new(off.clone()).unwrap(), &psd, tol).unwrap();
        off.row_mut(i).scale_mut(alpha);
        let off_after = verify_psd_factorization(&NonnegMatrix::new(off).unwrap(), &scaled_psd, tol).unwrap();
        prop_assert!(!off_before.ok && !off_after.ok);
        prop_assert!((off_after.residual - alpha * off_before.residual).abs() <= 1e-9 * (1.0 + alpha));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_hits_requested_rank((n, m, r, seed) in dims(50)) {
        let s = random_rank_r_stochastic(n, m, r, seed).unwrap();
        prop_assert_eq!(numerical_rank(&s, DEFAULT_RANK_TOL), r);
        for j in 0..m {
            prop_assert!((s.column(j).iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn sub_rank_matrices_respect_statistical_distance_bound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=12);
        let data = DMatrix::from_fn(r, m, |_, _| rng.gen::<f64>() + 1e-3);
        let s = column_normalize(&NonnegMatrix::new(data).unwrap()).unwrap();
        prop_assert!(mean_statistical_distance(&s) <= 1.0 - 1.0 / r as f64 + 1e-12);
    }
}

#[test]
fn slack_columns_have_a_zero_and_b2_flags_survive_column_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let opts = ReportOptions::default();
    for fam in Family::ALL {
        let params: Vec<usize> = if fam == Family::RegularNgon { (3..=9).collect() } else { (1..=5).collect() };
        for p in params {
            let s = slack_matrix(&make_polytope(fam, p).unwrap()).unwrap();
            for j in 0..s.base.ncols() {
                assert!(s.base.column(j).contains(&0.0), "{fam} {p} column {j}");
            }
            let plain = bound_report(&column_normalize(&s.base).unwrap(), &opts).unwrap();
            let cols: Vec<f64> = (0..s.base.ncols()).map(|_| rng.gen_range(0.1..10.0)).collect();
            let scaled = scale(&s.base, &vec![1.0; s.base.nrows()], &cols).unwrap();
            let other = bound_report(&column_normalize(&scaled).unwrap(), &opts).unwrap();
            assert_eq!(plain.satisfied, other.satisfied);
            assert_eq!(plain.rank, other.rank);
        }
    }
}
