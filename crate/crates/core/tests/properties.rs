use haaqi::audiogram::{apply_prescription, nal_r_from_thresholds, Category, GainVector, NalRConfig, Audiogram, classify_audiogram};
use haaqi::distill::{difficulty_weight, sigmoid_cosine_of};
use haaqi::dsp::synth::{music_clip, Genre};
use haaqi::dsp::{add_noise, adjust_spl, clip_abs, measure_spl, peak_clip, quantize, NoiseKind, Waveform};
use haaqi::eval::{anchor_curve, evaluate_scored, lcc, mse, srcc, ScoredClip};
use proptest::prelude::*;

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn wave(samples: Vec<f64>) -> Waveform<f64> {
    Waveform::new(samples, 16_000).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snr_is_hit_within_a_tenth_of_a_db(snr in -10.0f64..30.0, seed in 0u64..10_000, babble in any::<bool>()) {
        let w = music_clip::<f64>(Genre::Rock, 0.25, 16_000, seed);
        let kind = if babble { NoiseKind::Babble } else { NoiseKind::Ltass };
        let mix = add_noise(&w, kind, snr, seed ^ 0x55).unwrap();
        let noise: Vec<f64> = mix.samples().iter().zip(w.samples()).map(|(m, c)| m - c).collect();
        let got = 10.0 * (power(w.samples()) / power(&noise)).log10();
        prop_assert!((got - snr).abs() < 0.1, "{got} vs {snr}");
        prop_assert_eq!(mix.len(), w.len());
    }

    #[test]
    fn spl_round_trip(target in -20.0f64..140.0, gain in 1e-3f64..10.0, seed in 0u64..1000) {
        let w = music_clip::<f64>(Genre::Pop, 0.1, 16_000, seed).scaled(gain);
        let adjusted = adjust_spl(&w, target).unwrap();
        prop_assert!((measure_spl(&adjusted).unwrap().spl_db - target).abs() < 0.01);
    }

    #[test]
    fn clipping_is_idempotent_at_a_fixed_clamp(xs in prop::collection::vec(-2.0f64..2.0, 1..200), t in 0.05f64..1.0) {
        let w = wave(xs);
        let once = peak_clip(&w, t).unwrap();
        let level = t * w.peak();
        let again = clip_abs(&once, level);
        prop_assert_eq!(again.samples(), once.samples());
        prop_assert!(once.samples().iter().all(|v| v.abs() <= level));
    }

    #[test]
    fn requantizing_is_identity(xs in prop::collection::vec(-1.0f64..1.0, 1..200), bits in 2u32..24) {
        let q = quantize(&wave(xs), bits).unwrap();
        let again = quantize(&q, bits).unwrap();
        prop_assert_eq!(again.samples(), q.samples());
        let steps = f64::from((1u32 << (bits - 1)) - 1);
        prop_assert!(q.samples().iter().all(|v| ((v * steps).round() - v * steps).abs() < 1e-9));
    }

    #[test]
    fn raising_a_threshold_never_lowers_a_gain(h in prop::array::uniform8(0.0f64..100.0), i in 0usize..8, dh in 0.0f64..20.0) {
        let cfg = NalRConfig::default();
        let before = nal_r_from_thresholds(&h, &cfg);
        let mut h2 = h;
        h2[i] = (h2[i] + dh).min(120.0);
        let after = nal_r_from_thresholds(&h2, &cfg);
        for (a, b) in after.gains_db.iter().zip(&before.gains_db) {
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn prescription_is_linear_in_amplitude(g in prop::array::uniform8(0.0f64..40.0), k in -4.0f64..4.0, seed in 0u64..100) {
        let w = music_clip::<f64>(Genre::Classical, 0.1, 16_000, seed);
        let gv = GainVector::new(g).unwrap();
        let a = apply_prescription(&w.scaled(k), &gv).unwrap();
        let b = apply_prescription(&w, &gv).unwrap();
        let scale = b.peak().max(1e-12);
        for (x, y) in a.samples().iter().zip(b.samples()) {
            prop_assert!((x - k * y).abs() <= 1e-9 * scale * k.abs().max(1.0));
        }
    }

    #[test]
    fn generated_audiograms_classify_back(seed in any::<u64>(), c in 0usize..6) {
        let cat = Category::ALL[c];
        let a = Audiogram::generate(cat, seed);
        prop_assert_eq!(classify_audiogram(&a).unwrap(), cat);
        prop_assert!(a.thresholds().iter().all(|t| (0.0..=120.0).contains(t)));
        prop_assert!(a.thresholds().iter().any(|&t| t > 20.0));
    }

    #[test]
    fn metric_ranges_and_order_independence(
        t in prop::collection::vec(0.0f64..1.0, 4..40),
        noise in prop::collection::vec(-0.2f64..0.2, 40),
        rot in 0usize..40,
    ) {
        let p: Vec<f64> = t.iter().zip(&noise).map(|(a, b)| a + b).collect();
        if let (Ok(r), Ok(s)) = (lcc(&p, &t), srcc(&p, &t)) {
            prop_assert!((-1.0..=1.0).contains(&r) && (-1.0..=1.0).contains(&s));
        }
        prop_assert!(mse(&p, &t).unwrap() >= 0.0);
        let clips: Vec<ScoredClip> = t.iter().zip(&p).enumerate().map(|(i, (&truth, &pred))| ScoredClip {
            id: format!("c{i:02}"), truth, pred, genre: ["pop", "rock"][i % 2].into(), category: "flat".into(),
            condition_id: format!("k{}", i % 3), seen: i % 4 != 0,
        }).collect();
        let mut rotated = clips.clone();
        rotated.rotate_left(rot % clips.len());
        let a = evaluate_scored(&clips).unwrap();
        let b = evaluate_scored(&rotated).unwrap();
        prop_assert_eq!(&a, &b);
        for dim in ["genre=", "set=", "condition="] {
            let n: usize = a.slices.iter().filter(|s| s.slice.starts_with(dim)).map(|s| s.count).sum();
            prop_assert_eq!(n, clips.len());
        }
    }

    #[test]
    fn anchors_increase_and_shift_with_predictions(t in prop::collection::vec(0.0f64..1.0, 20..80), q in 2usize..12, c in -0.3f64..0.3) {
        let shifted: Vec<f64> = t.iter().map(|v| v + c).collect();
        let curve = anchor_curve(&shifted, &t, q, 0.05).unwrap();
        for w in curve.points.windows(2) {
            prop_assert!(w[1].anchor > w[0].anchor);
        }
        for p in &curve.points {
            if let Some(m) = p.mean_pred {
                prop_assert!((m - (p.anchor + c)).abs() <= 0.05 + 1e-12);
            }
        }
    }

    #[test]
    fn difficulty_weight_is_affine_in_mean_similarity(s in prop::collection::vec(-1.0f64..1.0, 1..6)) {
        let d = difficulty_weight(&s).unwrap();
        prop_assert!((1.0..=3.0).contains(&d));
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        prop_assert!((d - (2.0 - mean)).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_cosine_is_finite_on_the_cosine_range(s in -1.0f64..=1.0) {
        prop_assert!(sigmoid_cosine_of(s).is_finite());
    }
}
