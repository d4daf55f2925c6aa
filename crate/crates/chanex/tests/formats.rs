use chanex::{checkpoint, grid, scene_io, Error};
use chanex_core::channel::CMatrix;
use chanex_core::nn::{LayerSpec, NetworkSpec, ParamStore};
use chanex_core::scene::{generate_scene, SceneParams};
use num_complex::Complex64;
use proptest::prelude::*;

proptest! {
    #[test]
    fn grid_round_trip_is_exact_for_f32_values(rows in 1usize..6, cols in 1usize..9, seed in any::<u64>()) {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from_bits((state >> 2) | 0x3ff0_0000_0000_0000) - 1.5
        };
        let mut m = CMatrix::from_fn(rows, cols, |_, _| Complex64::new(next(), next()));
        let once = grid::decode(&grid::encode(&m)).unwrap();
        m.quantize_f32();
        prop_assert_eq!(once, m);
    }

    #[test]
    fn truncated_grids_are_rejected(cut in 0usize..40) {
        let m = CMatrix::from_fn(2, 2, |i, j| Complex64::new(i as f64, j as f64));
        let bytes = grid::encode(&m);
        prop_assume!(cut < bytes.len());
        let is_format_error = matches!(grid::decode(&bytes[..cut]), Err(Error::Format { .. }));
        prop_assert!(is_format_error);
    }

    #[test]
    fn checkpoint_round_trip_is_exact(hidden in 1usize..8, seed in any::<u64>()) {
        let spec = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, hidden), LayerSpec::Relu, LayerSpec::dense(hidden, 2)]);
        let params = ParamStore::init(&spec, seed).unwrap();
        let back = checkpoint::decode(&checkpoint::encode(&params)).unwrap();
        prop_assert_eq!(back.names(), params.names());
        prop_assert_eq!(back.tensors(), params.tensors());
        prop_assert_eq!(back.generation(), params.generation());
        prop_assert!(back.matches(&spec));
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let m = CMatrix::from_fn(3, 4, |i, j| Complex64::new(i as f64 - 0.25, j as f64 * 0.125));
    let path = dir.path().join("nested/g.chgr");
    grid::write(&path, &m).unwrap();
    assert_eq!(grid::read(&path).unwrap(), m);

    let scene = generate_scene(11, &SceneParams { num_terminals: 7, ..SceneParams::default() }).unwrap();
    let path = dir.path().join("scene.json");
    scene_io::write(&path, &scene).unwrap();
    assert_eq!(scene_io::read(&path).unwrap(), scene);
}

#[test]
fn missing_file_is_an_io_error_with_exit_code_1() {
    let e = grid::read(std::path::Path::new("/nonexistent/x.chgr")).unwrap_err();
    assert!(matches!(e, Error::Io { .. }));
    assert_eq!(e.exit_code(), 1);
}
