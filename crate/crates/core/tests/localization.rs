use hrtf_core::dataset::{default_grid, synth_bundle, Direction, HrtfBundle};
use hrtf_core::dsp::Hrir;
use hrtf_core::localization::{evaluate, render_corpus, train_localizer, LocalizerConfig, Sample};

fn horizontal(bundle: &HrtfBundle, subject: usize) -> Vec<(Direction, Hrir)> {
    (0..bundle.grid.len())
        .filter(|&d| bundle.grid[d].elevation == 0.0)
        .map(|d| (bundle.grid[d], bundle.hrir(subject, d)))
        .collect()
}

fn corpus(bundle: &HrtfBundle, subjects: &[usize], per_direction: usize, seed: u64) -> Vec<Sample> {
    subjects
        .iter()
        .flat_map(|&s| render_corpus(&horizontal(bundle, s), per_direction, seed + s as u64).unwrap())
        .collect()
}

#[test]
fn own_hrtfs_beat_other_subjects() {
    let (bundle, _) = synth_bundle(4, &default_grid(), 44_100.0, 31).unwrap();
    let cfg = LocalizerConfig { seed: 2, ..LocalizerConfig::default() };
    let test = corpus(&bundle, &[3], 4, 500);
    assert_eq!(test.len(), 72 * 4);

    let dependent = train_localizer(&corpus(&bundle, &[3], 4, 0), &cfg).unwrap();
    let independent = train_localizer(&corpus(&bundle, &[0, 1, 2], 4, 0), &cfg).unwrap();
    let sd = evaluate(&dependent, &test).unwrap();
    let si = evaluate(&independent, &test).unwrap();
    assert!(sd.accuracy >= 0.9, "{sd:?}");
    assert!(sd.mean_error < si.mean_error, "{sd:?} {si:?}");
    assert!(sd.accuracy > si.accuracy, "{sd:?} {si:?}");
}
