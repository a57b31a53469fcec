//! Property tests spanning the data, metrics and augmentation modules.

use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;

use cadnn::metrics::macro_metrics;
use cadnn::vision::{merge_classes, split_indices, AugmentFlags, Image, LabelMap, LabeledDataset, Sample, ValSplit, DROP};
use cadnn::{ConfusionMatrix, RngState};

fn dataset(counts: &[usize]) -> LabeledDataset {
    let labels = LabelMap::new((0..counts.len()).map(|i| format!("c{i}")).collect()).unwrap();
    let px = Image::filled(1, 1, 0).unwrap();
    let samples = counts
        .iter()
        .enumerate()
        .flat_map(|(label, &n)| {
            let px = px.clone();
            (0..n).map(move |i| Sample {
                image: px.clone(),
                label,
                source: PathBuf::from(format!("c{label}/{i}")),
            })
        })
        .collect();
    LabeledDataset::new(samples, labels).unwrap()
}

fn image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = RngState::new(seed);
    Image::from_fn(h, w, |_, _| rng.below(256) as u8).unwrap()
}

proptest! {
    #[test]
    fn split_is_an_exact_stratified_partition(
        counts in prop::collection::vec(0usize..60, 1..6),
        tenths in 1u32..10,
        seed: u64,
    ) {
        let ds = dataset(&counts);
        let labels = ds.label_indices();
        let fraction = f64::from(tenths) / 10.0;
        let (train, val) = split_indices(&labels, counts.len(), ValSplit::Fraction(fraction), &mut RngState::new(seed)).unwrap();
        let mut seen = vec![0u8; labels.len()];
        for &i in train.iter().chain(&val) {
            seen[i] += 1;
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        for (class, &n) in counts.iter().enumerate() {
            let got = val.iter().filter(|&&i| labels[i] == class).count();
            // integer floor of n * tenths / 10
            prop_assert_eq!(got, n * tenths as usize / 10);
        }
    }

    #[test]
    fn merge_keeps_everything_but_dropped_classes(
        counts in prop::collection::vec(0usize..30, 2..6),
        targets in prop::collection::vec(0usize..3, 6),
    ) {
        let ds = dataset(&counts);
        // each class goes to group g0, g1 or is dropped
        let mapping: BTreeMap<String, String> = (0..counts.len())
            .map(|i| (format!("c{i}"), match targets[i] { 0 => "g0".into(), 1 => "g1".into(), _ => DROP.to_string() }))
            .collect();
        let merged = merge_classes(&ds, &mapping).unwrap();
        let dropped: usize = counts.iter().zip(&targets).filter(|(_, &t)| t == 2).map(|(n, _)| n).sum();
        prop_assert_eq!(merged.len(), ds.len() - dropped);
        for group in ["g0", "g1"] {
            let want: usize = counts
                .iter()
                .zip(&targets)
                .filter(|(_, &t)| mapping_name(t) == group)
                .map(|(n, _)| n)
                .sum();
            let got = merged.labels().index_of(group).map_or(0, |g| merged.class_counts()[g]);
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn augmentation_is_a_pure_function_of_its_seed(
        h in 2usize..16,
        w in 2usize..16,
        flags in any::<[bool; 5]>(),
        seed: u64,
    ) {
        let img = image(h, w, seed ^ 0x5eed);
        let aug = AugmentFlags { crop: flags[0], flip_h: flags[1], flip_v: flags[2], grayscale: flags[3], rotate: flags[4] };
        let a = aug.apply(&img, &mut RngState::new(seed)).unwrap();
        let b = aug.apply(&img, &mut RngState::new(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!((a.height(), a.width()), (h, w));
    }

    #[test]
    fn confusion_matrix_laws(
        k in 2usize..5,
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200),
        seed: u64,
    ) {
        let pairs: Vec<(usize, usize)> = pairs.into_iter().map(|(p, a)| (p % k, a % k)).collect();
        let (predicted, actual): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let cm = ConfusionMatrix::from_predictions(&predicted, &actual, k).unwrap();
        prop_assert_eq!(cm.total(), pairs.len() as u64);

        let mut shuffled = pairs.clone();
        RngState::new(seed).shuffle(&mut shuffled);
        let (p2, a2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        prop_assert_eq!(&ConfusionMatrix::from_predictions(&p2, &a2, k).unwrap(), &cm);

        let acc = macro_metrics(&cm, &[]).unwrap().accuracy.unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
        prop_assert_eq!(acc == 1.0, cm.is_diagonal());
    }
}

fn mapping_name(t: usize) -> &'static str {
    match t {
        0 => "g0",
        1 => "g1",
        _ => DROP,
    }
}
