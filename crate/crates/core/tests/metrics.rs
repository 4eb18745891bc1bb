use proptest::prelude::*;
use rand::Rng;
use scribble_core::metrics::{dice3d, hd95, ClassVolume, Hd95, VolumeMeta};
use scribble_testkit::{oracles, rng};

fn random_volume(d: usize, h: usize, w: usize, seed: u64, density: f64) -> ClassVolume {
    let mut r = rng(seed);
    let labels = (0..d * h * w).map(|_| if r.random_bool(density) { 1 } else { 0 }).collect();
    ClassVolume::new(d, h, w, labels).unwrap()
}

fn bits(v: &ClassVolume) -> Vec<bool> {
    v.labels().iter().map(|&l| l == 1).collect()
}

#[test]
fn hd95_matches_brute_force_oracle() {
    let meta = VolumeMeta::new(0.8, 1.25, 5.0).unwrap();
    for seed in 0..10 {
        let a = random_volume(4, 12, 12, seed, 0.3);
        let b = random_volume(4, 12, 12, seed + 100, 0.4);
        let got = hd95(&a, &b, 1, &meta).unwrap().value().unwrap();
        let want = oracles::hd95(&bits(&a), &bits(&b), 4, 12, 12, (5.0, 1.25, 0.8)).unwrap();
        assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
        let dice = dice3d(&a, &b, 1).unwrap();
        assert!((dice - oracles::dice(&bits(&a), &bits(&b))).abs() < 1e-15);
    }
}

#[test]
fn empty_surface_is_undefined_not_zero() {
    let a = random_volume(2, 5, 5, 1, 0.5);
    let empty = ClassVolume::new(2, 5, 5, vec![0; 50]).unwrap();
    assert_eq!(hd95(&a, &empty, 1, &VolumeMeta::default()).unwrap(), Hd95::Undefined);
    assert_eq!(hd95(&empty, &empty, 1, &VolumeMeta::default()).unwrap(), Hd95::Undefined);
}

#[test]
fn non_positive_spacing_is_rejected() {
    assert!(VolumeMeta::new(0.0, 1.0, 1.0).is_err());
    assert!(VolumeMeta::new(1.0, -1.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hd95_is_symmetric_and_scales_with_spacing(
        seed in any::<u64>(),
        sx in 0.2f64..3.0,
        sy in 0.2f64..3.0,
        sz in 0.5f64..8.0,
    ) {
        let a = random_volume(3, 8, 8, seed, 0.3);
        let b = random_volume(3, 8, 8, seed ^ 0xabc, 0.3);
        let m = VolumeMeta::new(sx, sy, sz).unwrap();
        let m2 = VolumeMeta::new(2.0 * sx, 2.0 * sy, 2.0 * sz).unwrap();
        let ab = hd95(&a, &b, 1, &m).unwrap();
        prop_assert_eq!(ab, hd95(&b, &a, 1, &m).unwrap());
        if let Hd95::Mm(v) = ab {
            prop_assert_eq!(hd95(&a, &b, 1, &m2).unwrap(), Hd95::Mm(2.0 * v));
        }
    }

    #[test]
    fn dice_is_bounded_and_symmetric(seed in any::<u64>(), da in 0.0f64..1.0, db in 0.0f64..1.0) {
        let a = random_volume(2, 6, 6, seed, da);
        let b = random_volume(2, 6, 6, seed ^ 5, db);
        let d = dice3d(&a, &b, 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice3d(&b, &a, 1).unwrap());
    }
}
