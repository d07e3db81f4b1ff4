use mstl_core::evalsuite::dtw_distance;
use mstl_core::magdata::{fit_normalizer, resample_speed, FeatureTrace, SpeedFactor};
use mstl_core::simworld::{sample_field, walk, FieldModel, WalkConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn double_speed_is_every_second_position(seed in 0u64..500, v in prop::sample::select(vec![0.5, 1.0, 2.0])) {
        let world = FieldModel::random(seed, 8, [0.0, 0.0], [10.0, 10.0]);
        let path = vec![[0.0, 0.0], [10.0, 0.0], [10.0, 5.0], [4.0, 5.0]];
        let slow = walk(&world, &WalkConfig::new(path.clone(), v, 0.0, seed)).unwrap();
        let fast = walk(&world, &WalkConfig::new(path, 2.0 * v, 0.0, seed)).unwrap();
        let every_second: Vec<[f64; 2]> = slow.samples().iter().step_by(2).map(|s| s.pos).collect();
        let fast_pos: Vec<[f64; 2]> = fast.samples().iter().map(|s| s.pos).collect();
        prop_assert_eq!(&fast_pos, &every_second);
        // and the data-side analogue agrees with the ground truth
        let decimated = resample_speed(&slow, SpeedFactor::faster(2).unwrap()).unwrap();
        prop_assert_eq!(decimated.samples(), fast.samples());
    }
}

#[test]
fn field_is_continuous() {
    let world = FieldModel::random(5, 30, [0.0, 0.0], [30.0, 30.0]);
    assert!(world.anomalies.iter().all(|a| a.sigma >= 0.5 && a.amplitude.iter().all(|x| x.abs() <= 100.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let p = [rng.gen_range(-5.0..35.0), rng.gen_range(-5.0..35.0)];
        let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = rng.gen_range(0.0..1e-6);
        let q = [p[0] + r * ang.cos(), p[1] + r * ang.sin()];
        let (a, b) = (sample_field(&world, p), sample_field(&world, q));
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 1e-3);
        }
    }
}

#[test]
fn corridors_are_discernible() {
    let world = FieldModel::random(21, 24, [0.0, 0.0], [24.0, 24.0]);
    let corridors: Vec<Vec<[f64; 2]>> = [3.0, 9.0, 15.0, 21.0].iter().map(|&y| vec![[0.0, y], [24.0, y]]).collect();
    let walks: Vec<[_; 2]> = corridors
        .iter()
        .enumerate()
        .map(|(i, c)| {
            [1, 2].map(|rep| walk(&world, &WalkConfig::new(c.clone(), 1.5, 0.3, (i * 10 + rep) as u64)).unwrap())
        })
        .collect();
    let all: Vec<_> = walks.iter().flatten().cloned().collect();
    let stats = fit_normalizer(&all).unwrap();
    let feats: Vec<[Vec<[f64; 3]>; 2]> = walks
        .iter()
        .map(|pair| pair.each_ref().map(|t| FeatureTrace::from_trace(t, &stats).features))
        .collect();
    let within = feats.iter().map(|[a, b]| dtw_distance(a, b).unwrap()).fold(0.0, f64::max);
    let mut between = f64::INFINITY;
    for i in 0..feats.len() {
        for j in i + 1..feats.len() {
            between = between.min(dtw_distance(&feats[i][0], &feats[j][0]).unwrap());
        }
    }
    eprintln!("max within-corridor {within:.2}, min between-corridor {between:.2}");
    assert!(between > within);
}
