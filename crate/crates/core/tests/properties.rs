use intraverbal::align::{dtw_align, spans_to_durations, Alignment, PosteriorMatrix, Span, HOP_MS};
use intraverbal::assembly::{build_fusion_input, pool_to_phonemes};
use intraverbal::duration::{fit_durations, gopd, DurationModel, DurationStats};
use intraverbal::functionals::compute_functionals;
use intraverbal::inventory;
use intraverbal::lld::FrameFeatures;
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Contour on a 1/8-semitone grid so shifts by whole semitones are exact.
fn contour() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0i32..480, prop::bool::weighted(0.7)), 1..60)
        .prop_map(|v| v.into_iter().map(|(q, b)| (20.0 + q as f64 / 8.0, b)).unzip())
}

fn features(f0: &[f64], voiced: &[bool]) -> FrameFeatures {
    FrameFeatures::from_contour(f0.to_vec(), voiced.to_vec()).unwrap()
}

/// Random tiling of `frames` frames into spans over `phones`.
fn tiling(phones: &[&str], frames: usize, rng: &mut ChaCha8Rng) -> Alignment {
    let mut cuts: Vec<usize> = (1..frames).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts[..phones.len() - 1].to_vec();
    cuts.sort();
    let mut starts = vec![0];
    starts.extend(cuts);
    let spans = phones
        .iter()
        .enumerate()
        .map(|(k, p)| Span {
            phone: p.to_string(),
            start: starts[k],
            end: starts.get(k + 1).map_or(frames - 1, |s| s - 1),
        })
        .collect();
    Alignment::new(spans).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn functionals_are_finite_and_ordered((f0, voiced) in contour()) {
        let u = compute_functionals(&features(&f0, &voiced));
        prop_assert!(u.to_array().iter().all(|v| v.is_finite()));
        prop_assert!(u.pitch_p20_st <= u.pitch_p50_st && u.pitch_p50_st <= u.pitch_p80_st);
        prop_assert!(u.rise_slope_mean >= 0.0 && u.fall_slope_mean <= 0.0);
        prop_assert!(u.voiced_seg_mean_s >= 0.0 && u.unvoiced_seg_mean_s >= 0.0);
    }

    #[test]
    fn pitch_shift_moves_only_location((f0, voiced) in contour(), k in -12i32..12) {
        let a = compute_functionals(&features(&f0, &voiced));
        let shifted: Vec<f64> = f0.iter().map(|v| v + k as f64).collect();
        let b = compute_functionals(&features(&shifted, &voiced));
        if voiced.iter().any(|&v| v) {
            for (x, y) in [
                (a.pitch_mean_st, b.pitch_mean_st),
                (a.pitch_p20_st, b.pitch_p20_st),
                (a.pitch_p50_st, b.pitch_p50_st),
                (a.pitch_p80_st, b.pitch_p80_st),
            ] {
                prop_assert!(close(x + k as f64, y, 1e-12), "{x} + {k} vs {y}");
            }
        }
        let (av, bv) = (a.to_array(), b.to_array());
        for i in [1, 5, 6, 7, 8, 9, 10, 11, 12] {
            prop_assert!(close(av[i], bv[i], 1e-9), "field {i}: {} vs {}", av[i], bv[i]);
        }
    }

    #[test]
    fn reversal_swaps_slopes((f0, voiced) in contour()) {
        let a = compute_functionals(&features(&f0, &voiced));
        let (rf, rv): (Vec<f64>, Vec<bool>) = f0.iter().rev().copied().zip(voiced.iter().rev().copied()).unzip();
        let b = compute_functionals(&features(&rf, &rv));
        prop_assert!(close(a.rise_slope_mean, -b.fall_slope_mean, 1e-9));
        prop_assert!(close(a.fall_slope_mean, -b.rise_slope_mean, 1e-9));
        prop_assert!(close(a.rise_slope_std, b.fall_slope_std, 1e-9));
        prop_assert!(close(a.fall_slope_std, b.rise_slope_std, 1e-9));
        for (x, y) in a.to_array()[9..].iter().zip(&b.to_array()[9..]) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn alignment_tiles_and_shifts(seed in any::<u64>(), frames in 1usize..40, n in 1usize..6, c in -8i32..8) {
        prop_assume!(n <= frames);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phones: Vec<&str> = (0..n).map(|_| *inventory::SYMBOLS.choose(&mut rng).unwrap()).collect();
        // dyadic entries keep every sum exact, so tie structure survives the shift
        let lp = Array2::from_shape_fn((frames, inventory::SIZE), |_| -(rand::Rng::random_range(&mut rng, 0..64) as f64) / 8.0);
        let (a, score) = dtw_align(&PosteriorMatrix::new(lp.clone()).unwrap(), &phones).unwrap();
        prop_assert_eq!(a.spans()[0].start, 0);
        prop_assert_eq!(a.spans().last().unwrap().end, frames - 1);
        for w in a.spans().windows(2) {
            prop_assert_eq!(w[1].start, w[0].end + 1);
        }
        let total: f64 = spans_to_durations(&a, HOP_MS).iter().map(|(_, d)| d).sum();
        prop_assert!(close(total, frames as f64 * HOP_MS, 1e-12));

        let (b, shifted) = dtw_align(&PosteriorMatrix::new(lp.mapv(|v| v + c as f64)).unwrap(), &phones).unwrap();
        prop_assert_eq!(shifted, score + frames as f64 * c as f64);
        prop_assert_eq!(a.spans(), b.spans());
        let (again, _) = dtw_align(&PosteriorMatrix::new(lp).unwrap(), &phones).unwrap();
        prop_assert_eq!(a, again);
    }

    #[test]
    fn gopd_peaks_at_the_mean(mean in 20.0f64..300.0, std in 5.0f64..80.0, offsets in prop::collection::vec(0.5f64..150.0, 2..10)) {
        let model = DurationModel {
            phones: [("AA".to_string(), DurationStats { mean_ms: mean, std_ms: std, count: 50 })].into(),
            global: None,
        };
        let peak = gopd(mean, "AA", &model).unwrap();
        let mut offsets = offsets;
        offsets.sort_by(f64::total_cmp);
        offsets.dedup();
        let mut last = peak;
        for o in offsets.iter().filter(|&&o| o < mean) {
            let below = gopd(mean - o, "AA", &model).unwrap();
            let above = gopd(mean + o, "AA", &model).unwrap();
            prop_assert!(below < last && close(below, above, 1e-12));
            last = below;
        }
    }

    #[test]
    fn fitted_model_scores_every_phone(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(100.0, 20.0).unwrap();
        let samples: Vec<(&str, f64)> = (0..40)
            .map(|_| (*inventory::SYMBOLS[..5].choose(&mut rng).unwrap(), f64::max(d.sample(&mut rng), 10.0)))
            .collect();
        let model = fit_durations(samples).unwrap();
        for p in inventory::SYMBOLS {
            prop_assert!(gopd(80.0, p, &model).unwrap().is_finite());
        }
    }

    #[test]
    fn pooling_is_order_free_and_bounded(seed in any::<u64>(), frames in 1usize..30, n in 1usize..5) {
        prop_assume!(n <= frames);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rand::Rng::random_range(rng, lo..hi);
        let voiced: Vec<bool> = (0..frames).map(|_| u(&mut rng, 0.0, 1.0) < 0.6).collect();
        let col = |rng: &mut ChaCha8Rng, lo, hi, gate: bool| -> Vec<f64> {
            voiced.iter().map(|&v| if gate && !v { 0.0 } else { u(rng, lo, hi) }).collect()
        };
        let f = FrameFeatures::new(
            col(&mut rng, 0.0, 50.0, false),
            col(&mut rng, -30.0, 30.0, false),
            col(&mut rng, 20.0, 60.0, true),
            col(&mut rng, 0.0, 0.2, true),
            voiced.clone(),
        ).unwrap();
        let phones: Vec<&str> = (0..n).map(|_| *inventory::SYMBOLS.choose(&mut rng).unwrap()).collect();
        let align = tiling(&phones, frames, &mut rng);
        let pooled = pool_to_phonemes(&f, &align).unwrap();

        let mut order: Vec<usize> = Vec::new();
        for s in align.spans() {
            let mut idx: Vec<usize> = (s.start..=s.end).collect();
            idx.shuffle(&mut rng);
            order.extend(idx);
        }
        let pick = |c: &[f64]| order.iter().map(|&t| c[t]).collect::<Vec<f64>>();
        let g = FrameFeatures::new(
            pick(&f.loudness), pick(&f.alpha_ratio_db), pick(&f.f0_semitones), pick(&f.jitter_local),
            order.iter().map(|&t| voiced[t]).collect(),
        ).unwrap();
        let permuted = pool_to_phonemes(&g, &align).unwrap();

        for ((p, q), s) in pooled.iter().zip(&permuted).zip(align.spans()) {
            for (x, y) in [(p.loudness, q.loudness), (p.alpha_ratio_db, q.alpha_ratio_db), (p.f0_semitones, q.f0_semitones), (p.jitter_local, q.jitter_local)] {
                prop_assert!(close(x, y, 1e-12));
            }
            let span = s.start..=s.end;
            let bounds = |c: &[f64]| c[span.clone()].iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let (lo, hi) = bounds(&f.loudness);
            prop_assert!(p.loudness >= lo - 1e-12 && p.loudness <= hi + 1e-12);
            let (lo, hi) = bounds(&f.alpha_ratio_db);
            prop_assert!(p.alpha_ratio_db >= lo - 1e-12 && p.alpha_ratio_db <= hi + 1e-12);
        }

        let fusion = build_fusion_input(&pooled, &vec![0.0; n], &phones).unwrap();
        prop_assert_eq!(fusion.len(), phones.len());
    }
}

#[test]
fn long_vowel_keeps_its_duration_profile() {
    // OY ~ N(180, 45), V ~ N(70, 12): the fit keeps both orderings.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (oy, v) = (Normal::new(180.0, 45.0).unwrap(), Normal::new(70.0, 12.0).unwrap());
    let mut samples = Vec::new();
    for _ in 0..400 {
        samples.push(("OY", oy.sample(&mut rng)));
        samples.push(("V", v.sample(&mut rng)));
    }
    let m = fit_durations(samples).unwrap();
    let (a, b) = (m.entry("OY").unwrap(), m.entry("V").unwrap());
    assert!(a.mean_ms > b.mean_ms);
    assert!(a.std_ms > b.std_ms);
}
