use modelcg::harness::regression::{generate_regression_data, RegressionParams, RegressionProblem};
use modelcg::linalg::{DenseMatrix, DenseVector};
use modelcg::models::{
    AdditiveCompositeOracle, GaussNewtonOracle, HybridOracle, LinearOracle, ModelOracle, NewtonOracle, OuterLoss,
    Quadratic, SmoothMap,
};
use modelcg::sets::ConstraintSet;
use modelcg::{GrowthFunction, ModelFamily, Regularizer};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 1000;

#[derive(Debug, Default)]
struct Tally {
    anchor: usize,
    convexity: usize,
    growth: usize,
}

/// Samples anchors and points of `set` and counts failures of the anchor
/// identity, midpoint convexity and the growth bound.
fn audit(oracle: &dyn ModelOracle, set: &ConstraintSet, omega: &GrowthFunction, seed: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    for a in 0..SAMPLES / 10 {
        let anchor = set.sample(&mut rng);
        let m = oracle.model_at(&anchor).unwrap();
        let f_anchor = oracle.objective(&anchor);
        if (m.eval(&anchor) - f_anchor).abs() > 1e-12 {
            tally.anchor += 1;
        }
        for s in 0..10 {
            let far = set.sample(&mut rng);
            // every other point close to the anchor, distances down to 1e-6
            let x = if (a + s) % 2 == 0 {
                far
            } else {
                let scale = 10f64.powf(-6.0 * rng.random::<f64>());
                &anchor + (far - &anchor) * scale
            };
            let z = set.sample(&mut rng);
            let mid = (&x + &z) * 0.5;
            if m.eval(&mid) > 0.5 * (m.eval(&x) + m.eval(&z)) + 1e-10 {
                tally.convexity += 1;
            }
            let fx = oracle.objective(&x);
            let bound = omega.eval((&x - &anchor).norm()).unwrap();
            if (fx - m.eval(&x)).abs() > bound + 1e-12 * (1.0 + fx.abs()) {
                tally.growth += 1;
            }
        }
    }
    tally
}

fn assert_clean(name: &str, t: Tally) {
    assert_eq!((t.anchor, t.convexity, t.growth), (0, 0, 0), "{name}: {t:?}");
}

fn spectral_norm(h: &DenseMatrix) -> f64 {
    SymmetricEigen::new(h.clone()).eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Indefinite `H = Q diag(3, 1, -0.5, -2) Q^T` with a random rotation `Q`.
fn indefinite_quadratic() -> Quadratic {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g = DenseMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let h = &q * DenseMatrix::from_diagonal(&DenseVector::from_vec(vec![3.0, 1.0, -0.5, -2.0])) * q.transpose();
    let h = (&h + h.transpose()) * 0.5;
    let b = DenseVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
    Quadratic::new(h, b, 0.7).unwrap()
}

#[derive(Clone)]
struct Affine {
    a: DenseMatrix,
}

impl SmoothMap for Affine {
    fn dim_in(&self) -> usize {
        self.a.ncols()
    }
    fn dim_out(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, x: &DenseVector) -> DenseVector {
        &self.a * x
    }
    fn jacobian(&self, _x: &DenseVector) -> DenseMatrix {
        self.a.clone()
    }
}

#[test]
fn every_family_is_valid_on_a_quadratic_problem() {
    let q = indefinite_quadratic();
    let set = ConstraintSet::uniform_box(4, -1.0, 1.0).unwrap();
    let g = Regularizer::l1(0.3, 0..4).unwrap();
    let norm_h = spectral_norm(&q.hessian);
    let lambda_min = SymmetricEigen::new(q.hessian.clone()).eigenvalues.min();
    assert!((norm_h - 3.0).abs() < 1e-12 && (lambda_min + 2.0).abs() < 1e-12);

    let linear = LinearOracle { f: q.clone() };
    assert_clean("linear", audit(&linear, &set, &GrowthFunction::lipschitz(norm_h).unwrap(), 1));

    let additive = AdditiveCompositeOracle { h: q.clone(), g: g.clone() };
    assert_clean("additive", audit(&additive, &set, &GrowthFunction::lipschitz(norm_h).unwrap(), 2));

    let tau = 0.5;
    let hybrid = HybridOracle { h: q.clone(), g: g.clone(), tau, prox_block: 2..4 };
    let omega = GrowthFunction::lipschitz(norm_h + 1.0 / tau).unwrap();
    assert_clean("hybrid", audit(&hybrid, &set, &omega, 3));

    // only the negative curvature is dropped from the model
    let newton = NewtonOracle { h: q.clone(), g: g.clone() };
    assert_clean("newton", audit(&newton, &set, &GrowthFunction::lipschitz(-lambda_min).unwrap(), 4));

    // affine inner map: the model is exact
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let map = Affine { a: DenseMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0)) };
    let targets = DenseVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
    let tiny = GrowthFunction::lipschitz(1e-300).unwrap();
    for outer in [OuterLoss::HalfSquared { targets: targets.clone() }, OuterLoss::L1 { targets: targets.clone() }] {
        let gn = GaussNewtonOracle::new(map.clone(), outer, g.clone()).unwrap();
        assert_eq!(gn.family(), ModelFamily::GaussNewton);
        assert_clean("gauss-newton", audit(&gn, &set, &tiny, 6));
    }
}

/// Curvature bound of one exponential term `a e^{-b x}` over `a in [0, a_max]`,
/// `b >= 0`: the Hessian in `(a, b)` is `e^{-bx} [[0, -x], [-x, a x^2]]`,
/// whose spectral norm is largest at `b = 0`, `a = a_max`.
fn term_curvature(x: f64, a_max: f64) -> f64 {
    spectral_norm(&DenseMatrix::from_row_slice(2, 2, &[0.0, -x, -x, a_max * x * x]))
}

#[test]
fn gauss_newton_model_is_valid_on_desk_regression() {
    for seed in [1, 2] {
        let data = generate_regression_data(&RegressionParams::desk(seed)).unwrap();
        let problem = RegressionProblem::new(&data).unwrap();
        // |F_i(u) - lin_i(u)| <= L_i/2 |u - ū|^2 and |·| is 1-Lipschitz
        let c: f64 = data.x.iter().map(|&xi| term_curvature(xi, data.params.a_max)).sum();
        let omega = GrowthFunction::lipschitz(c).unwrap();
        assert_clean("regression", audit(&problem.oracle, &problem.set, &omega, 10 + seed));
    }
}

#[test]
fn analytic_constant_is_not_grossly_loose() {
    // the bound is attained in the limit by a single active term; check the
    // sampled worst ratio is within a few orders of magnitude
    let data = generate_regression_data(&RegressionParams::desk(3)).unwrap();
    let problem = RegressionProblem::new(&data).unwrap();
    let c: f64 = data.x.iter().map(|&xi| term_curvature(xi, data.params.a_max)).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let anchor = problem.set.sample(&mut rng);
        let m = problem.oracle.model_at(&anchor).unwrap();
        let x = problem.set.sample(&mut rng);
        let t = (&x - &anchor).norm();
        worst = worst.max((problem.oracle.objective(&x) - m.eval(&x)).abs() / (0.5 * c * t * t));
    }
    assert!(worst > 1e-4 && worst <= 1.0, "ratio {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn improvement_vanishes_at_anchor_and_prox_keeps_anchor_value(
        seed in any::<u64>(),
        tau in 0.01f64..10.0,
    ) {
        let q = indefinite_quadratic();
        let set = ConstraintSet::uniform_box(4, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let anchor = set.sample(&mut rng);
        let oracles: Vec<Box<dyn ModelOracle>> = vec![
            Box::new(LinearOracle { f: q.clone() }),
            Box::new(NewtonOracle { h: q.clone(), g: Regularizer::l1(0.2, 1..3).unwrap() }),
        ];
        for o in &oracles {
            let m = o.model_at(&anchor).unwrap();
            prop_assert_eq!(m.improvement(&anchor), 0.0);
            let mp = m.with_prox(tau).unwrap();
            prop_assert!((mp.eval(&anchor) - m.eval(&anchor)).abs() <= 1e-12);
            let y = set.sample(&mut rng);
            prop_assert!(mp.eval(&y) >= m.eval(&y));
        }
    }
}
