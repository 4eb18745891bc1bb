use proptest::prelude::*;
use rand::Rng;
use scribble_core::masks::{BinaryMask, ClassMap, UNKNOWN};
use scribble_core::scribblesim::{
    count_components, erode_until_disconnect, filled_hull, simulate_scribbles, skeletonize, ScribbleSimConfig,
};
use scribble_testkit::rng;

fn disc(h: usize, w: usize, cy: f64, cx: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(h, w, |y, x| (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r)
}

fn ellipse(h: usize, w: usize, cy: f64, cx: f64, ry: f64, rx: f64) -> BinaryMask {
    BinaryMask::from_fn(h, w, |y, x| ((y as f64 - cy) / ry).powi(2) + ((x as f64 - cx) / rx).powi(2) <= 1.0)
}

/// Union of a chain of overlapping discs along a random walk.
fn random_blob(seed: u64) -> BinaryMask {
    let mut r = rng(seed);
    let (mut cy, mut cx) = (16.0, 16.0);
    let mut m = BinaryMask::new(32, 32);
    for _ in 0..r.random_range(1..6) {
        let rad = r.random_range(1.0..5.0);
        m = m.union(&disc(32, 32, cy, cx, rad));
        cy = (cy + r.random_range(-rad..rad)).clamp(4.0, 27.0);
        cx = (cx + r.random_range(-rad..rad)).clamp(4.0, 27.0);
    }
    m
}

fn two_organs(seed: u64) -> ClassMap {
    let mut r = rng(seed);
    let (h, w) = (64, 64);
    let a = ellipse(h, w, r.random_range(18.0..24.0), r.random_range(16.0..24.0), r.random_range(5.0..9.0), r.random_range(5.0..9.0));
    let b = ellipse(h, w, r.random_range(38.0..46.0), r.random_range(36.0..46.0), r.random_range(4.0..8.0), r.random_range(6.0..10.0));
    let mut m = ClassMap::filled(h, w, 0);
    for (y, x) in a.points() {
        m.set(y, x, 1);
    }
    for (y, x) in b.points() {
        m.set(y, x, 2);
    }
    m
}

#[test]
fn disc_skeleton_is_thin_connected_and_contained() {
    let d = disc(20, 20, 9.5, 9.5, 8.0);
    let s = skeletonize(&d);
    assert!(!s.is_empty());
    assert!(s.is_subset_of(&d));
    assert_eq!(count_components(&s), 1);
    assert!((s.count() as f64) < 0.15 * d.count() as f64, "{} of {}", s.count(), d.count());
}

#[test]
fn bars_keep_a_connected_core() {
    for k in 2..9 {
        let bar = BinaryMask::from_fn(6, 12, |y, x| (2..4).contains(&y) && (1..1 + k).contains(&x));
        let e = erode_until_disconnect(&bar);
        assert!(!e.is_empty() && e.is_subset_of(&bar));
        assert_eq!(count_components(&e), 1);
    }
}

#[test]
fn random_blobs_erode_to_connected_subsets() {
    for seed in 0..100 {
        let blob = random_blob(seed);
        assert_eq!(count_components(&blob), 1);
        let e = erode_until_disconnect(&blob);
        assert!(!e.is_empty(), "seed {seed}");
        assert!(e.is_subset_of(&blob), "seed {seed}");
        assert_eq!(count_components(&e), 1, "seed {seed}");
    }
}

#[test]
fn single_pixel_organ_with_background_ring() {
    let mut m = ClassMap::filled(32, 32, 0);
    m.set(15, 12, 1);
    let s = simulate_scribbles(&m, 2, &ScribbleSimConfig::default()).unwrap();
    assert_eq!(s.labels().iter().filter(|&&l| l == 1).count(), 1);
    assert_eq!(s.label(15 * 32 + 12), Some(1));
    let ring: Vec<usize> = (0..1024).filter(|&p| s.label(p) == Some(0)).collect();
    assert!(!ring.is_empty());
    for p in ring {
        let (y, x) = ((p / 32) as f64, (p % 32) as f64);
        let d = ((y - 15.0).powi(2) + (x - 12.0).powi(2)).sqrt();
        assert!((4.0..=5.0).contains(&d), "ring pixel at distance {d}");
    }
}

fn check_fixture(m: &ClassMap, cfg: &ScribbleSimConfig) {
    let s = simulate_scribbles(m, 3, cfg).unwrap();
    let foreground = BinaryMask::from_fn(m.height(), m.width(), |y, x| m.get(y, x) != 0);
    // class fidelity
    for (p, &l) in s.labels().iter().enumerate() {
        if l != UNKNOWN {
            assert_eq!(l, m.labels()[p]);
        }
    }
    assert!(s.labeled_fraction() < 0.10, "{}", s.labeled_fraction());
    for class in 1..3u8 {
        let sc = s.map().class_mask(class);
        assert!(!sc.is_empty());
        assert!(sc.is_subset_of(&m.class_mask(class)));
        if count_components(&m.class_mask(class)) == 1 {
            assert_eq!(count_components(&sc), 1, "class {class}");
        }
    }
    let bg = s.map().class_mask(0);
    assert!(!bg.is_empty());
    assert!(bg.intersection(&foreground).is_empty());
    // near the hull boundary
    let hull = filled_hull(&foreground);
    let limit = (cfg.hull_expand_px + 1) as f64;
    for (y, x) in bg.points() {
        assert!(cfg.hull_expand_px == 0 || !hull.get(y, x));
        let d = hull
            .points()
            .map(|(hy, hx)| ((hy as f64 - y as f64).powi(2) + (hx as f64 - x as f64).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(d <= limit, "background pixel {d} from the hull");
    }
}

#[test]
fn two_organ_fixtures() {
    for seed in 0..6 {
        check_fixture(&two_organs(seed), &ScribbleSimConfig::default());
    }
}

#[test]
fn simulation_is_deterministic() {
    let m = two_organs(42);
    let cfg = ScribbleSimConfig { hull_expand_px: 3, seed: 9 };
    assert_eq!(simulate_scribbles(&m, 3, &cfg).unwrap(), simulate_scribbles(&m, 3, &cfg).unwrap());
}

#[test]
fn labels_beyond_num_classes_are_rejected() {
    let m = two_organs(1);
    assert!(simulate_scribbles(&m, 2, &ScribbleSimConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn skeleton_preserves_components(seed in any::<u64>()) {
        let blob = random_blob(seed);
        let s = skeletonize(&blob);
        prop_assert!(s.is_subset_of(&blob));
        prop_assert_eq!(count_components(&s), 1);
    }

    #[test]
    fn random_organs_satisfy_containment(seed in any::<u64>(), expand in 0usize..8) {
        check_fixture(&two_organs(seed), &ScribbleSimConfig { hull_expand_px: expand, seed });
    }
}
