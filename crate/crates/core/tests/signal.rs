mod oracle;

use agripretext::signal::{construct_frequency_map, dominant_frequencies, savgol_smooth, RegularSeries};
use agripretext::synth::{gen_sits, SynthSpec};
use agripretext::Timestamp;
use ndarray::Array2;
use proptest::prelude::*;

fn column(v: &[f64]) -> RegularSeries {
    RegularSeries::new(
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap(),
        Timestamp::new(2018, 1).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ranking_matches_direct_dft(
        x in (3usize..=64).prop_flat_map(|n| proptest::collection::vec(-1.0f64..1.0, n)),
        k in 1usize..=4,
    ) {
        let got = dominant_frequencies(&column(&x), k).unwrap();
        prop_assert_eq!(got.freqs.column(0).to_vec(), oracle::dft_top_k(&x, k));
    }
}

proptest! {
    #[test]
    fn smoothing_matches_per_window_fits(
        x in (7usize..48).prop_flat_map(|n| proptest::collection::vec(-1.0f64..1.0, n)),
    ) {
        let got = savgol_smooth(&column(&x), 7, 4).unwrap();
        let want = oracle::savgol_by_windows(&x, 7, 4);
        for (a, b) in got.values.column(0).iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn ranking_ignores_scale(
        x in proptest::collection::vec(-1.0f64..1.0, 12..40),
        scale in 0.1f64..10.0,
    ) {
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let a = dominant_frequencies(&column(&x), 3).unwrap();
        let b = dominant_frequencies(&column(&scaled), 3).unwrap();
        prop_assert_eq!(a.freqs, b.freqs);
    }
}

#[test]
fn oracle_agrees_on_exact_ties() {
    for x in [vec![0.3; 20], vec![0.0; 9], (0..24).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect()] {
        let got = dominant_frequencies(&column(&x), 3).unwrap();
        assert_eq!(got.freqs.column(0).to_vec(), oracle::dft_top_k(&x, 3));
    }
}

fn recovery(noise_sigma: f64) -> f64 {
    let spec = SynthSpec { noise_sigma, seed: 4, ..Default::default() };
    let out = gen_sits(&spec).unwrap();
    let (fmap, _) = construct_frequency_map(&out.cube, 3).unwrap();
    let data = fmap.data();
    let hits = out
        .parcels
        .indexed_iter()
        .filter(|&((y, x), &p)| data[[0, y, x]] as f64 == (1.0 / out.periods[p as usize] as f64) as f32 as f64)
        .count();
    hits as f64 / out.parcels.len() as f64
}

#[test]
fn two_parcel_periods_are_recovered() {
    assert_eq!(recovery(0.0), 1.0);
    let noisy = recovery(0.05);
    assert!(noisy >= 0.99, "{noisy}");
}
