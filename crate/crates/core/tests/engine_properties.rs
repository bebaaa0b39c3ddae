use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use saccadic_core::engine::{
    sample_plausibility, select_fixation, PlausibilityReference, TransitionModel, SALIENCY_FLOOR,
    SELECTION_DISTANCE_FLOOR,
};
use saccadic_core::synthetic::{spatial_prior, two_component_mixture, MixtureComponent, SaccadeMixture};
use saccadic_core::{
    generate_scanpath, transition_map, BinGrid, FixationPoint, JointSaccadeDistribution, MemoryState, Prior,
    SaccadeSample, SaliencyGrid, ViewerProfile,
};

const W: usize = 36;
const H: usize = 27;
const PPD: f64 = 4.0;

fn single_prior() -> &'static JointSaccadeDistribution {
    static D: OnceLock<JointSaccadeDistribution> = OnceLock::new();
    D.get_or_init(|| two_component_mixture().to_distribution(BinGrid::default()).unwrap())
}

fn profile(kind: u8, nc: usize) -> ViewerProfile {
    let prior = match kind % 3 {
        0 => Prior::Uniform,
        1 => Prior::Single(single_prior().clone()),
        _ => Prior::Spatial(spatial_prior(W, H, BinGrid::default()).unwrap()),
    };
    let mut p = ViewerProfile::new(prior).with_candidates(nc);
    p.ppd = PPD;
    p.inhibition_radius = 1.0;
    p
}

fn saliency() -> impl Strategy<Value = SaliencyGrid> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0f64..1.0], W * H)
        .prop_filter("some mass", |v| v.iter().any(|x| *x > 0.0))
        .prop_map(|v| SaliencyGrid::new(W, H, v).unwrap())
}

fn pixel() -> impl Strategy<Value = (usize, usize)> {
    (0..W, 0..H)
}

fn memory(points: &[(usize, usize)], span: usize) -> MemoryState {
    let mut m = MemoryState::new(span);
    for (i, &(x, y)) in points.iter().enumerate() {
        m.push(FixationPoint::new(x as f64, y as f64, i as u32));
    }
    m
}

/// Selection score computed from the public prior density.
fn brute_score(s: &SaliencyGrid, prior: &Prior, prev: &FixationPoint, x: usize, y: usize) -> f64 {
    let floor = SALIENCY_FLOOR * s.max();
    let sample = SaccadeSample::from_displacement(x as f64 - prev.x, y as f64 - prev.y, PPD);
    s.get(x, y).max(floor) * prior.density((prev.x, prev.y), sample.amplitude, sample.orientation)
        / sample.amplitude.max(SELECTION_DISTANCE_FLOOR)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transition_map_is_a_distribution(
        s in saliency(), kind in 0u8..3, prev in pixel(), history in prop::collection::vec(pixel(), 0..6)
    ) {
        let p = profile(kind, 5);
        let prev = FixationPoint::new(prev.0 as f64, prev.1 as f64, 3);
        let mut mem = memory(&history, p.memory_span);
        mem.push(prev);
        if let Ok(map) = transition_map(&prev, &s, &mem, &p) {
            prop_assert!(map.values().iter().all(|v| *v >= 0.0));
            prop_assert!((map.sum() - 1.0).abs() < 1e-9);
            // The just-attended pixel cannot be selected again.
            prop_assert_eq!(map.get(prev.x as usize, prev.y as usize), 0.0);
        }
    }

    #[test]
    fn uniform_prior_keeps_saliency_argmax(s in saliency(), prev in pixel()) {
        let p = profile(0, 5);
        let prev = FixationPoint::new(prev.0 as f64, prev.1 as f64, 0);
        let map = transition_map(&prev, &s, &MemoryState::new(p.memory_span), &p).unwrap();
        prop_assert_eq!(map.argmax(), s.argmax());
    }

    #[test]
    fn generation_is_deterministic_and_stays_inside(kind in 0u8..3, nc in 1usize..8, seed in any::<u64>()) {
        let s = SaliencyGrid::from_fn(W, H, |x, y| 1.0 + ((x * 7 + y * 3) % 11) as f64).unwrap();
        let p = profile(kind, nc);
        let a = generate_scanpath(&s, &p, 8, seed).unwrap();
        let b = generate_scanpath(&s, &p, 8, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for w in a.fixations.windows(2) {
            prop_assert!(w[1].x >= 0.0 && w[1].y >= 0.0 && w[1].x < W as f64 && w[1].y < H as f64);
            prop_assert!((w[0].x, w[0].y) != (w[1].x, w[1].y));
        }
    }

    #[test]
    fn more_candidates_never_lower_the_selected_score(
        s in saliency(), kind in 0u8..3, prev in pixel(), n in 1usize..6, extra in 1usize..6, seed in any::<u64>()
    ) {
        let p = profile(kind, n);
        let model = TransitionModel::new(&s, &p).unwrap();
        let prev = FixationPoint::new(prev.0 as f64, prev.1 as f64, 0);
        let mem = memory(&[], p.memory_span);
        let Ok(few) = model.draw_candidates(&prev, &mem, n, &mut ChaCha8Rng::seed_from_u64(seed)) else {
            return Ok(());
        };
        let many = model.draw_candidates(&prev, &mem, n + extra, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&many[..n], &few[..]);
        let a = model.select(&few, &prev).unwrap();
        let b = model.select(&many, &prev).unwrap();
        prop_assert!(model.score(b.0, b.1, &prev) >= model.score(a.0, a.1, &prev));
    }

    #[test]
    fn selection_matches_exhaustive_argmax(
        s in saliency(), kind in 0u8..3, prev in pixel(), candidates in prop::collection::vec(pixel(), 1..12)
    ) {
        let p = profile(kind, candidates.len());
        let prev = FixationPoint::new(prev.0 as f64, prev.1 as f64, 4);
        let chosen = select_fixation(&candidates, &s, &prev, &p).unwrap();
        let best = candidates
            .iter()
            .map(|&(x, y)| brute_score(&s, &p.prior, &prev, x, y))
            .fold(f64::NEG_INFINITY, f64::max);
        let got = brute_score(&s, &p.prior, &prev, chosen.x as usize, chosen.y as usize);
        prop_assert!((got - best).abs() <= 1e-12 * best.abs().max(1e-300));
        prop_assert_eq!(chosen.index, 5);
    }
}

#[test]
fn map_direction_follows_prior_orientation() {
    let mix = SaccadeMixture::new(vec![MixtureComponent::new(1.0, 3.0, 0.3, 60.0, 30.0)]);
    let dist = mix.to_distribution(BinGrid::default()).unwrap();
    let p = ViewerProfile::new(Prior::Single(dist.clone()));
    let s = SaliencyGrid::uniform(1024, 768).unwrap();
    let prev = FixationPoint::new(512.0, 384.0, 0);
    let map = transition_map(&prev, &s, &MemoryState::new(p.memory_span), &p).unwrap();
    let (mut sn, mut cs) = (0.0, 0.0);
    for y in 0..768 {
        for x in 0..1024 {
            let v = map.get(x, y);
            if v > 0.0 && (x as f64, y as f64) != (prev.x, prev.y) {
                let t = (-(y as f64 - prev.y)).atan2(x as f64 - prev.x);
                sn += v * t.sin();
                cs += v * t.cos();
            }
        }
    }
    let got = sn.atan2(cs).to_degrees().rem_euclid(360.0);
    let want = dist.mean_orientation();
    let gap = (got - want).rem_euclid(360.0).min((want - got).rem_euclid(360.0));
    assert!(gap < 2.0, "map direction {got}° vs prior {want}°");
}

#[test]
fn direct_samples_are_plausible() {
    let grid = BinGrid::default();
    let reference = two_component_mixture().to_distribution(grid).unwrap();
    let samples = reference.sample(10_000, &mut ChaCha8Rng::seed_from_u64(4));
    let p = sample_plausibility(&samples, PlausibilityReference::Distribution(&reference)).unwrap();
    assert!(p.kl_joint < 0.05, "kl_joint = {}", p.kl_joint);
    assert!(p.kl_amplitude < p.kl_joint);
}
