use proptest::prelude::*;

use pipeforge::dataset::{stratified_split, Dataset, Split};
use pipeforge::evolve::{crossover_one_point, mutate};
use pipeforge::pipeline::{check_root, evaluate_pipeline, parse_pipeline, Fitness, OperatorSet, PipelineTree};
use pipeforge::seed::rng_from_seed;
use pipeforge::simdata::{simulate, SimulationParams};

fn small_sim(seed: u64) -> Dataset {
    let mut p = SimulationParams::new(0.4, 0.2, 120, seed);
    p.n_snps = 12;
    stratified_split(&simulate(&p).unwrap().data.dataset, 0.75, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evaluation_is_pure_and_deterministic(pseed in any::<u64>(), dseed in 0u64..4, eseed in any::<u64>()) {
        let ds = small_sim(dseed);
        let before = ds.clone();
        let p = PipelineTree::random(pseed, 3);
        let a = evaluate_pipeline(&p, &ds, eseed);
        let b = evaluate_pipeline(&p, &ds, eseed);
        prop_assert_eq!(a, b);
        prop_assert_eq!(&ds, &before);
        if let Fitness::Score(s) = a {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn variation_preserves_validity(a in any::<u64>(), b in any::<u64>(), seed in any::<u64>()) {
        let pa = PipelineTree::random(a, 5);
        let pb = PipelineTree::random(b, 5);
        let mut rng = rng_from_seed(seed);
        let (x, y) = crossover_one_point(&pa, &pb, &mut rng);
        let m = mutate(&x, OperatorSet::Full, 3, &mut rng);
        for t in [&x, &y, &m] {
            prop_assert!(check_root(t.root()).is_ok());
            prop_assert_eq!(&parse_pipeline(&t.to_string()).unwrap(), t);
        }
    }

    #[test]
    fn split_keeps_class_proportions(n0 in 2usize..60, n1 in 2usize..60, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let labels: Vec<u8> = (0..n0 + n1).map(|i| u8::from(i >= n0)).collect();
        let rows: Vec<Vec<i32>> = (0..n0 + n1).map(|i| vec![i as i32]).collect();
        let ds = Dataset::from_rows(vec!["x".into()], &rows, labels.clone()).unwrap();
        let split = stratified_split(&ds, frac, seed).unwrap();
        for (class, n) in [(0u8, n0), (1u8, n1)] {
            let train = (0..n0 + n1)
                .filter(|&i| labels[i] == class && split.partition()[i] == Split::Train)
                .count();
            let expected = ((frac * n as f64) + 0.5).floor().clamp(1.0, (n - 1) as f64) as usize;
            prop_assert_eq!(train, expected);
        }
    }
}
