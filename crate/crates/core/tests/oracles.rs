use modelcg::linalg::{DenseMatrix, DenseVector};
use modelcg::sets::ConstraintSet;
use nalgebra::SVD;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
    DenseVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0))
}

/// All `2^n` corners of `[lo, hi]`.
fn box_vertices(lo: &[f64], hi: &[f64]) -> Vec<DenseVector> {
    let n = lo.len();
    (0..1usize << n)
        .map(|mask| DenseVector::from_fn(n, |j, _| if mask >> j & 1 == 1 { hi[j] } else { lo[j] }))
        .collect()
}

fn signed_unit_vertices(n: usize, r: f64) -> Vec<DenseVector> {
    let mut out = Vec::new();
    for j in 0..n {
        for s in [-r, r] {
            let mut v = DenseVector::zeros(n);
            v[j] = s;
            out.push(v);
        }
    }
    out
}

fn min_over(points: &[DenseVector], c: &DenseVector) -> f64 {
    points.iter().map(|p| c.dot(p)).fold(f64::INFINITY, f64::min)
}

fn sphere_point(angles: &[f64]) -> DenseVector {
    let d = angles.len() + 1;
    let mut x = DenseVector::zeros(d);
    let mut s = 1.0;
    for (i, a) in angles.iter().enumerate() {
        x[i] = s * a.cos();
        s *= a.sin();
    }
    x[d - 1] = s;
    x
}

/// Minimum of `<c, x>` over the unit sphere in `R^d`, by a grid over
/// hyperspherical angles that is repeatedly zoomed around the best point.
fn sphere_grid_min(c: &DenseVector) -> f64 {
    let d = c.len();
    if d == 1 {
        return -c[0].abs();
    }
    let k = d - 1;
    let per_axis: usize = if k <= 2 { 41 } else { 7 };
    let mut center: Vec<f64> = (0..k).map(|i| if i + 1 == k { std::f64::consts::PI } else { std::f64::consts::FRAC_PI_2 }).collect();
    let mut half: Vec<f64> = (0..k).map(|i| if i + 1 == k { std::f64::consts::PI } else { std::f64::consts::FRAC_PI_2 }).collect();
    let mut best = f64::INFINITY;
    for _ in 0..80 {
        let mut best_angles = center.clone();
        let total = per_axis.pow(k as u32);
        let mut angles = vec![0.0; k];
        for idx in 0..total {
            let mut rem = idx;
            for i in 0..k {
                let t = (rem % per_axis) as f64 / (per_axis - 1) as f64;
                rem /= per_axis;
                angles[i] = center[i] - half[i] + 2.0 * half[i] * t;
            }
            let v = c.dot(&sphere_point(&angles));
            if v < best {
                best = v;
                best_angles.copy_from_slice(&angles);
            }
        }
        center = best_angles;
        for h in &mut half {
            *h *= 0.6;
        }
    }
    best
}

#[test]
fn box_lmo_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=6 {
        for _ in 0..50 {
            let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.5)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.0..3.0)).collect();
            let set = ConstraintSet::boxed(lo.clone(), hi.clone()).unwrap();
            let c = random_vec(&mut rng, n);
            let got = c.dot(&set.lmo(&c).unwrap());
            assert!((got - min_over(&box_vertices(&lo, &hi), &c)).abs() <= 1e-9);
        }
    }
}

#[test]
fn simplex_and_l1_lmos_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 1..=6 {
        let eye: Vec<DenseVector> = (0..n)
            .map(|j| DenseVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        for _ in 0..50 {
            let c = random_vec(&mut rng, n);
            let simplex = ConstraintSet::simplex(n).unwrap();
            assert!((c.dot(&simplex.lmo(&c).unwrap()) - min_over(&eye, &c)).abs() <= 1e-9);
            let r = rng.random_range(0.1..4.0);
            let ball = ConstraintSet::l1_ball(n, r).unwrap();
            let got = c.dot(&ball.lmo(&c).unwrap());
            assert!((got - min_over(&signed_unit_vertices(n, r), &c)).abs() <= 1e-9);
        }
    }
}

#[test]
fn columnwise_simplex_lmo_matches_vertex_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (rows, cols) in [(2, 3), (3, 2), (6, 1), (1, 4)] {
        let set = ConstraintSet::columnwise_simplex(rows, cols).unwrap();
        for _ in 0..30 {
            let c = random_vec(&mut rng, rows * cols);
            let mut best = f64::INFINITY;
            for choice in 0..rows.pow(cols as u32) {
                let mut v = DenseVector::zeros(rows * cols);
                let mut rem = choice;
                for j in 0..cols {
                    v[j * rows + rem % rows] = 1.0;
                    rem /= rows;
                }
                best = best.min(c.dot(&v));
            }
            assert!((c.dot(&set.lmo(&c).unwrap()) - best).abs() <= 1e-9);
        }
    }
}

#[test]
fn l2_lmo_matches_sphere_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for n in 1..=6 {
        for _ in 0..4 {
            let c = random_vec(&mut rng, n);
            let r = rng.random_range(0.5..2.0);
            let set = ConstraintSet::l2_ball(n, r, false).unwrap();
            let got = c.dot(&set.lmo(&c).unwrap());
            let want = r * sphere_grid_min(&c);
            assert!((got - want).abs() <= 1e-9, "n={n}: {got} vs {want}");
        }
    }
}

#[test]
fn mean_zero_l2_lmo_matches_subspace_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for n in 2..=6 {
        // orthonormal basis of {x : sum x = 0}
        let centering = DenseMatrix::from_fn(n, n - 1, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
        let basis = centering.qr().q();
        for _ in 0..4 {
            let c = random_vec(&mut rng, n);
            let set = ConstraintSet::l2_ball(n, 1.0, true).unwrap();
            let x = set.lmo(&c).unwrap();
            assert!(x.sum().abs() < 1e-12);
            let want = sphere_grid_min(&basis.tr_mul(&c));
            assert!((c.dot(&x) - want).abs() <= 1e-9, "n={n}");
        }
    }
}

#[test]
fn product_lmo_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let set = ConstraintSet::product(vec![
        ConstraintSet::boxed(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap(),
        ConstraintSet::simplex(2).unwrap(),
        ConstraintSet::l1_ball(2, 1.5).unwrap(),
    ])
    .unwrap();
    let boxes = box_vertices(&[-1.0, 0.0], &[1.0, 2.0]);
    let simplex = [DenseVector::from_vec(vec![1.0, 0.0]), DenseVector::from_vec(vec![0.0, 1.0])];
    let l1 = signed_unit_vertices(2, 1.5);
    for _ in 0..100 {
        let c = random_vec(&mut rng, 6);
        let mut best = f64::INFINITY;
        for b in &boxes {
            for s in &simplex {
                for l in &l1 {
                    let v = DenseVector::from_iterator(6, b.iter().chain(s.iter()).chain(l.iter()).copied());
                    best = best.min(c.dot(&v));
                }
            }
        }
        assert!((c.dot(&set.lmo(&c).unwrap()) - best).abs() <= 1e-9);
    }
}

#[test]
fn nuclear_lmo_matches_full_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let rows = rng.random_range(1..=10);
        let cols = rng.random_range(1..=8);
        let r = rng.random_range(0.5..3.0);
        let g = DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let set = ConstraintSet::nuclear_ball(rows, cols, r).unwrap();
        let c = DenseVector::from_column_slice(g.as_slice());
        let x = set.lmo(&c).unwrap();
        let sigma_max = SVD::new(g.clone(), false, false).singular_values.max();
        assert!((c.dot(&x) + r * sigma_max).abs() <= 1e-8);
    }
}

fn arb_set() -> impl Strategy<Value = ConstraintSet> {
    prop_oneof![
        (1usize..6).prop_map(|n| ConstraintSet::uniform_box(n, -1.0, 2.0).unwrap()),
        (1usize..6).prop_map(|n| ConstraintSet::simplex(n).unwrap()),
        (1usize..6, 0.1f64..3.0).prop_map(|(n, r)| ConstraintSet::l1_ball(n, r).unwrap()),
        (2usize..6, 0.1f64..3.0, any::<bool>()).prop_map(|(n, r, z)| ConstraintSet::l2_ball(n, r, z).unwrap()),
        (1usize..4, 1usize..4, 0.5f64..2.0).prop_map(|(a, b, r)| ConstraintSet::nuclear_ball(a, b, r).unwrap()),
        (1usize..4).prop_map(|n| ConstraintSet::product(vec![
            ConstraintSet::simplex(n).unwrap(),
            ConstraintSet::uniform_box(2, 0.0, 1.0).unwrap(),
        ])
        .unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lmo_is_feasible_and_beats_samples(set in arb_set(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_vec(&mut rng, set.dim());
        let x = set.lmo(&c).unwrap();
        prop_assert!(set.contains(&x, 1e-9));
        let vx = c.dot(&x);
        for _ in 0..50 {
            let z = set.sample(&mut rng);
            prop_assert!(vx <= c.dot(&z) + 1e-9 * (1.0 + c.norm()));
        }
    }

    #[test]
    fn projection_is_feasible_idempotent_and_obtuse(set in arb_set(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, set.dim()) * 2.0;
        let p = set.project(&x).unwrap();
        prop_assert!(set.contains(&p, 1e-9));
        let pp = set.project(&p).unwrap();
        prop_assert!((&pp - &p).norm() <= 1e-9 * (1.0 + p.norm()));
        // <x - P x, z - P x> <= 0 for every z in the set
        for _ in 0..20 {
            let z = set.sample(&mut rng);
            prop_assert!((&x - &p).dot(&(&z - &p)) <= 1e-8 * (1.0 + x.norm() * z.norm()));
        }
    }

    #[test]
    fn samples_are_feasible(set in arb_set(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            prop_assert!(set.contains(&set.sample(&mut rng), 1e-9));
        }
    }
}
