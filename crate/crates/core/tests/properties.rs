use foeim_core::foeim::{eim_select, nearest_parameters, NonlinearSnapshotSet};
use foeim_core::nonlinear::Nonlinearity;
use foeim_core::pod::{pod_basis, PodTarget};
use foeim_core::snapshots::InnerProduct;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vectors(dim: usize, count: std::ops::Range<usize>) -> impl Strategy<Value = Vec<DVector<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), count)
        .prop_map(|vs| vs.into_iter().map(DVector::from_vec).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pod_modes_are_orthonormal_with_sorted_spectrum(
        snaps in vectors(12, 2..9),
        weights in prop::collection::vec(0.2f64..3.0, 12),
    ) {
        let ip = InnerProduct::Weights(DVector::from_vec(weights));
        let basis = pod_basis(&snaps, &ip, PodTarget::Rank).unwrap();
        prop_assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(basis.eigenvalues.iter().all(|&l| l >= 0.0));
        let n = basis.len();
        let gram = DMatrix::from_fn(n, n, |i, j| ip.dot(&basis.vectors.column(i).into_owned(), &basis.vectors.column(j).into_owned()));
        prop_assert!((gram - DMatrix::identity(n, n)).amax() < 1e-9);
        // snapshots lie in the span of the full basis
        for z in &snaps {
            let back = basis.lift(&basis.project(z).unwrap()).unwrap();
            prop_assert!((&back - z).amax() < 1e-8 * z.amax().max(1.0));
        }
    }

    #[test]
    fn neighbor_sets_start_at_the_point_and_nest(
        mus in prop::collection::vec(0.0f64..10.0, 2..12),
        l in 1usize..6,
    ) {
        let sample: Vec<Vec<f64>> = mus.iter().map(|&m| vec![m]).collect();
        let l = l.min(sample.len());
        let small = nearest_parameters(&sample, l).unwrap();
        let large = nearest_parameters(&sample, sample.len()).unwrap();
        for j in 0..sample.len() {
            let s = small.neighbors(j);
            prop_assert_eq!(s.len(), l);
            prop_assert_eq!(s[0], j);
            prop_assert_eq!(s, &large.neighbors(j)[..l]);
            let mut sorted = s.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), l);
        }
    }

    #[test]
    fn interpolant_matches_field_at_points(
        snaps in vectors(40, 8..16),
        field in prop::collection::vec(-2.0f64..2.0, 40),
        m in 1usize..6,
    ) {
        let set = NonlinearSnapshotSet {
            name: "g".into(),
            pairs: (0..snaps.len()).map(|k| (k, k)).collect(),
            values: snaps,
        };
        let sys = eim_select(&set, &DVector::from_element(40, 0.025), m, 1).unwrap();
        let field = DVector::from_vec(field);
        let b = sys.sample(&field);
        let gm = sys.interpolate(&b).unwrap();
        for (&q, &bq) in sys.points().iter().zip(b.iter()) {
            prop_assert!((gm[q] - bq).abs() < 1e-8 * (1.0 + b.amax()));
        }
        // unit lower-triangular interpolation matrix
        let bm = sys.b_matrix();
        for i in 0..m {
            prop_assert!((bm[(i, i)] - 1.0).abs() < 1e-12);
            for j in i + 1..m {
                prop_assert!(bm[(i, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn taylor_expansion_is_exact_at_its_center(v in -2.0f64..2.0, w in -2.0f64..2.0) {
        for g in [Nonlinearity::power(3), Nonlinearity::exp(), Nonlinearity::fractional_flow()] {
            prop_assert_eq!(g.taylor(v, v), g.value(v));
            // remainder ½ g'' h², with |g''| < 100 on [-2, 2]
            let h = (w - v) * 1e-3;
            let err = (g.taylor(v + h, v) - g.value(v + h)).abs();
            prop_assert!(err <= 50.0 * h * h + 1e-13, "{err}");
        }
    }
}
