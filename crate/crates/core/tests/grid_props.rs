use proptest::prelude::*;
use ulamot::grid::{Measure, Partition};

fn partition() -> impl Strategy<Value = Partition> {
    (1usize..4)
        .prop_flat_map(|d| {
            (
                prop::collection::vec(-5.0f64..5.0, d),
                prop::collection::vec(0.1f64..4.0, d),
                prop::collection::vec(1usize..9, d),
            )
        })
        .prop_map(|(lo, w, r)| {
            let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
            Partition::new(&lo, &hi, &r).unwrap()
        })
}

proptest! {
    #[test]
    fn centers_locate_to_their_cell(p in partition()) {
        for i in 0..p.n_cells() {
            prop_assert_eq!(p.locate(&p.cell_center(i).unwrap()).unwrap(), i);
        }
    }

    #[test]
    fn flat_and_multi_index_invert(p in partition()) {
        for i in 0..p.n_cells() {
            let m = p.multi_index(i);
            prop_assert!(m.iter().zip(p.resolution()).all(|(a, r)| a < r));
            prop_assert_eq!(p.flat_index(&m), i);
        }
    }

    #[test]
    fn quadrature_points_stay_in_their_cell(p in partition(), q in 1usize..5) {
        for i in 0..p.n_cells() {
            let pts = p.quadrature_points(i, q).unwrap();
            prop_assert_eq!(pts.len(), q.pow(p.dim() as u32));
            for x in pts {
                prop_assert_eq!(p.locate(&x).unwrap(), i);
            }
        }
    }

    #[test]
    fn box_corners_fold_into_boundary_cells(p in partition()) {
        prop_assert_eq!(p.locate(p.lower()).unwrap(), 0);
        prop_assert_eq!(p.locate(p.upper()).unwrap(), p.n_cells() - 1);
        let mut outside = p.upper().to_vec();
        outside[0] += 1e-9 * (1.0 + outside[0].abs());
        prop_assert!(p.try_locate(&outside).is_none());
    }

    #[test]
    fn cell_volumes_tile_the_box(p in partition()) {
        let total = p.cell_volume() * p.n_cells() as f64;
        let boxed: f64 = (0..p.dim()).map(|d| p.upper()[d] - p.lower()[d]).product();
        prop_assert!((total - boxed).abs() <= 1e-12 * boxed);
    }

    #[test]
    fn normalized_measures_are_probabilities(w in prop::collection::vec(0.0f64..10.0, 1..50)) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let m = Measure::normalized(w).unwrap();
        prop_assert!((m.total() - 1.0).abs() <= 1e-12);
        prop_assert!(m.total_variation(&m) == 0.0);
    }
}
