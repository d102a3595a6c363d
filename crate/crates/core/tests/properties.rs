use proptest::prelude::*;
use rptrellis::codec::{
    exhaustive_encode, read_bits, snr_db, viterbi_encode, write_bits, SlidingBlockDecoder,
    IDENTITY_PERMUTATION_SEED,
};
use rptrellis::diagnostics::{
    autocovariance, marginal_t2, marton_bound, moment_conditions, plug_in_entropy_rate,
};
use rptrellis::ratedist::{gaussian_distortion_rate, ReproductionDistribution};
use rptrellis::sources::SourceModel;

fn family() -> impl Strategy<Value = SourceModel> {
    prop_oneof![
        Just(SourceModel::standard_gaussian()),
        Just(SourceModel::uniform01()),
        Just(SourceModel::unit_laplacian()),
    ]
}

fn reproduction() -> ReproductionDistribution {
    gaussian_distortion_rate(1.0, 1.0).unwrap().reproduction
}

fn shape() -> impl Strategy<Value = (u32, u32)> {
    (1u32..=8).prop_flat_map(|l| (Just(l), 1u32..=l.min(3)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_cdf_inverts_cdf(model in family(), u in 1e-6f64..(1.0 - 1e-6)) {
        let x = model.inverse_cdf(u).unwrap();
        prop_assert!((model.cdf(x) - u).abs() < 1e-9);
    }

    #[test]
    fn inverse_cdf_is_monotone(model in family(), a in 1e-6f64..0.999, d in 1e-6f64..1e-3) {
        let b = (a + d).min(1.0 - 1e-9);
        prop_assert!(model.inverse_cdf(a).unwrap() <= model.inverse_cdf(b).unwrap());
    }

    #[test]
    fn sorted_labels_do_not_depend_on_the_permutation(
        (length, rate) in shape(),
        seed in 0u64..1000,
    ) {
        let q = reproduction();
        let shuffled = SlidingBlockDecoder::build(&q, length, rate, seed).unwrap();
        let identity =
            SlidingBlockDecoder::build(&q, length, rate, IDENTITY_PERMUTATION_SEED).unwrap();
        let mut sorted = shuffled.labels().to_vec();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(&sorted, identity.labels());
        let size = 1u64 << length;
        for (j, &label) in identity.labels().iter().enumerate() {
            let expected = q.inverse_cdf((j as f64 + 0.5) / size as f64).unwrap();
            prop_assert_eq!(label, expected);
        }
    }

    #[test]
    fn initial_register_is_forgotten_after_a_window(
        (length, rate) in shape(),
        seed in 0u64..1000,
        start in 0u64..256,
        symbols in prop::collection::vec(0u32..8, 16..40),
    ) {
        let decoder = SlidingBlockDecoder::build(&reproduction(), length, rate, seed).unwrap();
        let symbols: Vec<u32> = symbols.iter().map(|s| s % (1 << rate)).collect();
        let start = start % (1 << length);
        let a = decoder.decode(&symbols).unwrap();
        let b = decoder.decode_from(&symbols, start).unwrap();
        let flushed = length.div_ceil(rate) as usize - 1;
        prop_assert_eq!(&a[flushed..], &b[flushed..]);
    }

    #[test]
    fn viterbi_matches_exhaustive_search(
        (length, rate) in (1u32..=4).prop_flat_map(|l| (Just(l), 1u32..=l.min(2))),
        perm_seed in 0u64..1000,
        source_seed in 0u64..1000,
        n in 1usize..=6,
    ) {
        let decoder =
            SlidingBlockDecoder::build(&reproduction(), length, rate, perm_seed).unwrap();
        let x = SourceModel::standard_gaussian().sample(n, source_seed).unwrap();
        let fast = viterbi_encode(&decoder, &x).unwrap();
        let slow = exhaustive_encode(&decoder, &x).unwrap();
        prop_assert!((fast.mse - slow.mse).abs() <= 1e-12 * (1.0 + slow.mse));
        prop_assert_eq!(decoder.decode(&fast.bits).unwrap(), fast.reproduction);
    }

    #[test]
    fn snr_and_mse_agree(variance in 0.01f64..10.0, mse in 1e-4f64..10.0) {
        let snr = snr_db(variance, mse);
        prop_assert!((variance * 10f64.powf(-snr / 10.0) - mse).abs() < 1e-9 * mse.max(1.0));
    }

    #[test]
    fn bit_files_round_trip(
        rate in 1u32..=4,
        symbols in prop::collection::vec(0u32..16, 0..200),
    ) {
        let symbols: Vec<u32> = symbols.iter().map(|s| s % (1 << rate)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bits.rptb");
        write_bits(&path, &symbols, rate).unwrap();
        let (back, r) = read_bits(&path).unwrap();
        prop_assert_eq!(r, rate);
        prop_assert_eq!(back, symbols);
    }

    #[test]
    fn marton_bound_shrinks_with_entropy(rate in 0.5f64..4.0, h1 in 0.0f64..4.0, h2 in 0.0f64..4.0) {
        let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
        prop_assert!(marton_bound(rate, hi) <= marton_bound(rate, lo));
        prop_assert!(marton_bound(rate, rate) == 0.0);
    }

    #[test]
    fn transport_cost_ignores_sample_order(seed in 0u64..1000, rotate in 0usize..500) {
        let q = reproduction();
        let mut x = SourceModel::standard_gaussian().sample(500, seed).unwrap();
        let t = marginal_t2(&x, &q).unwrap();
        x.rotate_left(rotate);
        x.reverse();
        let u = marginal_t2(&x, &q).unwrap();
        prop_assert!(t >= 0.0);
        prop_assert!((t - u).abs() <= 1e-12 * (1.0 + t));
    }

    #[test]
    fn entropy_rate_is_a_fraction_of_a_bit(
        bits in prop::collection::vec(0u8..2, 400..2000),
        k in 1usize..=4,
    ) {
        if let Ok(h) = plug_in_entropy_rate(&bits, k) {
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }

    #[test]
    fn lag_zero_is_the_variance(x in prop::collection::vec(-10.0f64..10.0, 2..300)) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        prop_assert!((autocovariance(&x, 0).unwrap() - var).abs() <= 1e-9 * (1.0 + var));
    }

    #[test]
    fn error_moments_add_up(seed in 0u64..1000, shift in -1.0f64..1.0) {
        let x = SourceModel::standard_gaussian().sample(300, seed).unwrap();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v + shift).collect();
        let m = moment_conditions(&x, &y, 0.25).unwrap();
        prop_assert!((m.error_mean - (m.mean_hat - m.mean_x)).abs() < 1e-9);
        prop_assert!(m.var_hat <= m.var_x);
    }
}
