use octseg_core::augment::{apply, Sample, Transform};
use octseg_core::cv::{partition_folds, split};
use octseg_core::data::{class, labelmap_to_surfaces, ClassScheme, LabelMap, LayerSurfaces};
use octseg_core::distmap::{compute_distance_map, extract_surfaces, RelativeDistanceMap};
use octseg_core::fluid::{fluid_components, FluidFilter};
use octseg_core::forest::ForestConfig;
use octseg_core::losses::{dice_loss, logistic_loss, pixel_weight_map, ClassWeights, LossConfig};
use octseg_core::metrics::dice;
use octseg_core::phantom::rasterize_surfaces;
use octseg_core::Tensor;
use proptest::prelude::*;

fn label_map(scheme: ClassScheme) -> impl Strategy<Value = LabelMap> {
    let c = scheme.num_classes() as u8;
    (2usize..10, 2usize..10).prop_flat_map(move |(h, w)| {
        proptest::collection::vec(0..c, h * w).prop_map(move |l| LabelMap::new(h, w, scheme, l).unwrap())
    })
}

/// Monotone surface rows for `w` columns in an image of height `h`.
fn surfaces(h: usize, w: usize) -> impl Strategy<Value = LayerSurfaces> {
    debug_assert!(h > 2 + 6 * 3);
    proptest::collection::vec(proptest::collection::vec(1usize..4, 6), w).prop_map(move |gaps| {
        let mut rows = vec![vec![0; w]; 6];
        for (x, g) in gaps.iter().enumerate() {
            let mut y = 2;
            for k in 0..6 {
                y += g[k];
                rows[k][x] = y;
            }
        }
        LayerSurfaces { rows }
    })
}

fn one_hot(labels: &LabelMap) -> Tensor<f64> {
    let c = labels.scheme().num_classes();
    let mut t = Tensor::zeros(c, labels.height(), labels.width());
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            t.set(labels.at(y, x) as usize, y, x, 1.0);
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perfect_prediction_has_zero_loss(labels in label_map(ClassScheme::Stage2)) {
        let p = one_hot(&labels);
        let cfg = LossConfig::default();
        let cw = ClassWeights(vec![1.0; 8]);
        prop_assert!(dice_loss(&p, &labels, &cw, cfg.epsilon).unwrap().abs() < 1e-5);
        prop_assert!(logistic_loss(&p, &labels, &pixel_weight_map(&labels, &cfg), cfg.epsilon).unwrap().abs() < 1e-5);
    }

    #[test]
    fn unit_weight_dice_is_nonnegative(labels in label_map(ClassScheme::Stage1), seed in 0u64..1000) {
        let mut p = Tensor::<f64>::zeros(3, labels.height(), labels.width());
        let mut s = seed;
        for v in p.data_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (s >> 11) as f64 / (1u64 << 53) as f64;
        }
        prop_assert!(dice_loss(&p, &labels, &ClassWeights(vec![1.0; 3]), 1e-6).unwrap() >= 0.0);
    }

    #[test]
    fn weight_values_are_from_the_fixed_set(labels in label_map(ClassScheme::Stage2)) {
        let w = pixel_weight_map(&labels, &LossConfig::default());
        prop_assert!(w.values().iter().all(|v| [1.0, 6.0, 11.0, 16.0].contains(v)));
    }

    #[test]
    fn dice_is_symmetric_and_permutation_invariant(
        pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..64),
        rot in 0usize..64,
    ) {
        let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let d = dice(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        let k = rot % a.len();
        let (mut ra, mut rb) = (a.clone(), b.clone());
        ra.rotate_left(k);
        rb.rotate_left(k);
        prop_assert_eq!(d, dice(&ra, &rb).unwrap());
    }

    #[test]
    fn augmentation_keeps_dims_and_scheme(
        labels in label_map(ClassScheme::Stage2),
        flip in any::<bool>(),
        rot in -25.0f64..25.0,
        scale in 0.5f64..1.5,
    ) {
        let (h, w) = (labels.height(), labels.width());
        let input = Tensor::filled(3, h, w, 0.5f32);
        let weights = pixel_weight_map(&labels, &LossConfig::default());
        let s = Sample { input, labels: labels.clone(), weights };
        let out = apply(&s, &Transform { flip, rotation_deg: rot, scale }).unwrap();
        prop_assert_eq!((out.input.channels(), out.input.height(), out.input.width()), (3, h, w));
        prop_assert_eq!((out.labels.height(), out.labels.width()), (h, w));
        for c in 1..8u8 {
            prop_assert!(!out.labels.contains(c) || labels.contains(c));
        }
        prop_assert!(out.input.data().iter().all(|&v| (0.0..=0.5 + 1e-6).contains(&v)));
    }

    #[test]
    fn rasterized_surfaces_round_trip(s in (22usize..32, 1usize..8).prop_flat_map(|(h, w)| (Just(h), surfaces(h, w)))) {
        let (h, surf) = s;
        let labels = rasterize_surfaces(&surf, h).unwrap();
        prop_assert!(labels.column_order_violations().is_empty());
        prop_assert_eq!(labelmap_to_surfaces(&labels).unwrap(), surf);
    }

    #[test]
    fn distance_map_is_monotone_down_columns(s in (22usize..32, 1usize..8).prop_flat_map(|(h, w)| (Just(h), surfaces(h, w)))) {
        let (h, surf) = s;
        let stage1 = rasterize_surfaces(&surf, h).unwrap().to_stage1().unwrap();
        let pair = extract_surfaces(&stage1).unwrap();
        let w = stage1.width();
        let map = compute_distance_map(&pair, h, w).unwrap();
        for x in 0..w {
            prop_assert_eq!(map.at(surf.rows[0][x], x), 0.0);
            for y in 1..h {
                prop_assert!(map.at(y, x) >= map.at(y - 1, x));
            }
        }
    }

    #[test]
    fn filter_only_removes_fluid(labels in label_map(ClassScheme::Stage2), keep in any::<bool>()) {
        let n = labels.height() * labels.width();
        let intensity = vec![0.3f32; n];
        let dist = RelativeDistanceMap::constant(labels.height(), labels.width(), 0.5);
        let comps = fluid_components(&labels);
        let examples: Vec<_> = comps.iter().enumerate()
            .map(|(i, c)| (c.features(&labels, &intensity, &dist), keep ^ (i % 2 == 0)))
            .collect();
        let filter = FluidFilter::train(&examples, ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        let out = filter.filter(&labels, &intensity, &dist).unwrap();
        for (a, b) in labels.labels().iter().zip(out.labels()) {
            prop_assert!(*b != class::FLUID || *a == class::FLUID);
            prop_assert!(*a == class::FLUID || a == b);
        }
    }

    #[test]
    fn folds_partition_volumes(n in 1usize..40, k in 1usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = partition_folds(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for f in 0..k {
            let (train, test) = split(&folds, f);
            prop_assert!(train.iter().all(|v| !test.contains(v)));
        }
    }
}
