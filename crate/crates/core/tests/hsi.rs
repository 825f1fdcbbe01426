use methanemapper_core::hsi::{CubeMeta, DataType, HyperCube};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn cube(seed: u64, rows: usize, cols: usize, bands: usize, dt: DataType) -> (HyperCube<Vec<u8>>, Vec<f64>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let samples: Vec<f64> = (0..rows * cols * bands)
        .map(|_| if rng.random_bool(0.05) { -9999.0 } else { rng.random_range(-100i32..100) as f64 })
        .collect();
    let wl = (0..bands).map(|b| 400.0 + 5.0 * b as f64).collect();
    (HyperCube::from_samples(CubeMeta::new(rows, cols, wl, dt).unwrap(), &samples).unwrap(), samples)
}

proptest! {
    #[test]
    fn repeated_reads_are_identical(
        seed in 0u64..1000,
        rows in 1usize..20,
        cols in 1usize..20,
        bands in 1usize..6,
        dt in prop_oneof![Just(DataType::Int16), Just(DataType::Int32), Just(DataType::Float32), Just(DataType::Float64)],
        r in (0usize..20, 0usize..20),
        c in (0usize..20, 0usize..20),
    ) {
        let (cube, samples) = cube(seed, rows, cols, bands, dt);
        let (r0, c0) = (r.0 % rows, c.0 % cols);
        let (r1, c1) = (r0 + 1 + r.1 % (rows - r0), c0 + 1 + c.1 % (cols - c0));
        let a = cube.read_block(r0..r1, c0..c1, 0..bands).unwrap();
        let b = cube.read_block(r0..r1, c0..c1, 0..bands).unwrap();
        prop_assert_eq!(a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(&a.valid, &b.valid);
        for rr in r0..r1 {
            for cc in c0..c1 {
                for band in 0..bands {
                    let v = samples[(rr * cols + cc) * bands + band];
                    prop_assert_eq!(a.get(rr - r0, cc - c0, band), v);
                    prop_assert_eq!(cube.read_sample(rr, cc, band).unwrap(), v);
                }
                prop_assert_eq!(a.pixel_valid(rr - r0, cc - c0), (0..bands).all(|b| samples[(rr * cols + cc) * bands + b] != -9999.0));
            }
        }
    }
}

#[test]
fn out_of_range_window_rejected() {
    let (cube, _) = cube(1, 4, 5, 2, DataType::Float32);
    assert!(cube.read_block(0..5, 0..5, 0..2).is_err());
    assert!(cube.read_block(0..4, 0..5, 1..3).is_err());
}
