use std::path::Path;

use nalgebra::{Matrix2xX, Matrix3xX};
use proptest::prelude::*;
use shapefit::{LandmarkSet2D, Shape3D};
use shapefit_harness::formats::{landmarks_to_csv, parse_landmarks_csv, parse_shape_csv, shape_to_csv};
use shapefit_harness::phase::{parse_rows_csv, rows_to_csv, PhaseRow};

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0)]
}

proptest! {
    #[test]
    fn landmarks_round_trip(p in 3usize..20, seed in prop::collection::vec(coord(), 40), vis in prop::collection::vec(any::<bool>(), 20)) {
        let pts = Matrix2xX::from_fn(p, |d, j| seed[2 * j + d]);
        let w = LandmarkSet2D::new(pts, vis[..p].to_vec()).unwrap();
        let back = parse_landmarks_csv(&landmarks_to_csv(&w), Path::new("mem.csv")).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn shapes_round_trip(p in 3usize..20, seed in prop::collection::vec(coord(), 60)) {
        let s = Shape3D::new(Matrix3xX::from_fn(p, |d, j| seed[3 * j + d])).unwrap();
        let back = parse_shape_csv(&shape_to_csv(&s), Path::new("mem.csv")).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn phase_rows_round_trip(cells in prop::collection::vec((1usize..300, 1usize..20, 1usize..20, 0.0..1.0f64), 0..10)) {
        let rows: Vec<PhaseRow> = cells
            .into_iter()
            .map(|(p, z, trials, err)| {
                let successes = trials / 2;
                PhaseRow { p, z, trials, successes, frequency: successes as f64 / trials as f64, mean_rel_error: err }
            })
            .collect();
        prop_assert_eq!(parse_rows_csv(&rows_to_csv(&rows)).unwrap(), rows);
    }
}
