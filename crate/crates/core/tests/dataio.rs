use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use segdec::dataio::*;

mod common;
use common::brute_dilate;

fn sparse_mask() -> impl Strategy<Value = Mask> {
    (1usize..=24, 1usize..=24, proptest::collection::vec(0u8..20, 24 * 24))
        .prop_map(|(h, w, v)| Mask::from_fn(h, w, |y, x| v[y * 24 + x] == 0))
}

fn nonempty_mask() -> impl Strategy<Value = Mask> {
    sparse_mask().prop_filter("non-empty", |m| m.any())
}

proptest! {
    #[test]
    fn dilation_matches_max_filter(m in sparse_mask(), k in prop::sample::select(vec![1usize, 3, 5, 9, 13, 17])) {
        prop_assert_eq!(dilate_mask(&m, k).unwrap(), brute_dilate(&m, k));
    }

    #[test]
    fn dilation_is_monotone_in_kernel(m in sparse_mask()) {
        let ks = [5, 9, 13, 17];
        let d: Vec<Mask> = ks.iter().map(|k| dilate_mask(&m, *k).unwrap()).collect();
        prop_assert!(m.is_subset_of(&d[0]));
        for w in d.windows(2) {
            prop_assert!(w[0].is_subset_of(&w[1]));
        }
    }

    #[test]
    fn every_variant_covers_original(m in nonempty_mask()) {
        for kind in AnnotationKind::ALL {
            prop_assert!(m.is_subset_of(&kind.apply(&m).unwrap()), "{}", kind);
        }
    }

    #[test]
    fn rotated_box_no_larger_than_axis_box(m in nonempty_mask()) {
        let rect = min_area_rect(&m).unwrap();
        let axis = make_box_annotation(&m, false).unwrap();
        prop_assert!(rect.area() <= axis.count() as f64 + 1e-9);
    }

    #[test]
    fn dilate_then_downscale_keeps_label(m in nonempty_mask(), k in prop::sample::select(vec![5usize, 9])) {
        let (h, w) = (m.height - m.height % 2, m.width - m.width % 2);
        prop_assume!(h > 0 && w > 0);
        let cropped = Mask::from_fn(h, w, |y, x| m.get(y, x));
        prop_assume!(cropped.any());
        let s = Sample::new(Image::filled(h, w, 0.5), dilate_mask(&cropped, k).unwrap(), "p", "i").unwrap();
        prop_assert!(downscale(&s, 2).unwrap().is_defective());
    }
}

fn toy_corpus(products: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::new();
    for p in 0..products {
        let n = rand::Rng::gen_range(&mut rng, 1..=8);
        for i in 0..n {
            let mut m = Mask::empty(2, 2);
            if rand::Rng::gen_bool(&mut rng, 0.15) {
                m.set(1, 1, true);
            }
            v.push(Sample::new(Image::filled(2, 2, 0.0), m, format!("prod{p}"), format!("prod{p}/{i}")).unwrap());
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_by_product(products in 3usize..60, seed in any::<u64>()) {
        let c = toy_corpus(products, seed);
        let plan = make_folds(&c, seed).unwrap();
        let mut seen = BTreeSet::new();
        for f in 0..FOLD_COUNT {
            let (_, test) = plan.split(&c, f).unwrap();
            for s in test {
                prop_assert!(seen.insert(s.image_id.clone()), "image in two folds");
            }
        }
        prop_assert_eq!(seen.len(), c.len());
        let defective: BTreeSet<&str> = c.iter().filter(|s| s.is_defective()).map(|s| s.product_id.as_str()).collect();
        let mut per = [0usize; FOLD_COUNT];
        for p in &defective {
            per[plan.fold_of(p).unwrap()] += 1;
        }
        prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        prop_assert_eq!(plan, make_folds(&c, seed).unwrap());
    }
}

#[test]
fn rotation_frequency_near_one_half() {
    let s = Sample::new(Image::filled(2, 4, 0.0), Mask::empty(2, 4), "p", "i").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let hits = (0..10_000).filter(|_| rotate90_augment(&s, 0.5, &mut rng).1).count();
    let f = hits as f64 / 10_000.0;
    assert!((0.48..=0.52).contains(&f), "{f}");
}

#[test]
fn synthetic_corpus_round_trips_through_loader() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_pos: 30,
        n_neg: 60,
        size: 64,
        seed: 7,
    };
    let summary = synth_generate(&cfg, dir.path()).unwrap();
    assert_eq!((summary.samples, summary.defective, summary.products), (90, 30, 30));
    let loaded = load_dataset(dir.path(), &Layout::default()).unwrap();
    assert_eq!(loaded.len(), 90);
    assert_eq!(loaded.iter().filter(|s| s.is_defective()).count(), 30);
    let from_manifest = load_manifest(&summary.manifest).unwrap();
    assert_eq!(from_manifest, loaded);
    for s in &loaded {
        assert_eq!(s.label.is_defective(), s.mask.any());
    }
}

#[test]
fn synthetic_corpus_is_byte_identical_under_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_pos: 4,
        n_neg: 5,
        size: 64,
        seed: 99,
    };
    synth_generate(&cfg, a.path()).unwrap();
    synth_generate(&cfg, b.path()).unwrap();
    let files = |root: &std::path::Path| {
        let mut v: Vec<_> = walk(root)
            .into_iter()
            .map(|p| (p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()))
            .collect();
        v.sort();
        v
    };
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 2 * 9 + 1);
    assert_eq!(fa, fb);
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn synthetic_masks_pass_through_png_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_pos: 3,
        n_neg: 0,
        size: 64,
        seed: 1,
    };
    synth_generate(&cfg, dir.path()).unwrap();
    let loaded = load_dataset(dir.path(), &Layout::default()).unwrap();
    for (i, s) in loaded.iter().enumerate() {
        let (_, m) = synth_sample(1, i as u64, 64, true);
        assert_eq!(s.mask, m);
    }
}
