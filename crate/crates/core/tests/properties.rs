mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{independent, random_dag, seeded, SmallDag};
use confounding::causal::{backdoor_adjust, balancing_coarsen, class_adjusted_ctr, CovModel, Dag};
use confounding::environment::{make_default_ground_truth, CategoricalSpec, GroundTruth};
use confounding::features::{Cell, CovariateSet, FeatureSpec};
use confounding::glm::{fit, population_fit, CellCounts, Target};
use confounding::policy::{epsilon_greedy_on, FactoredPolicyParams, Policy};
use confounding::scenarios::{simulate_day, DayOptions, Routing};

fn env_strategy() -> impl Strategy<Value = GroundTruth> {
    (2usize..5, 2usize..5, 2usize..6, any::<u64>())
        .prop_map(|(k1, k2, na, seed)| make_default_ground_truth(CategoricalSpec::new(k1, k2, na).unwrap(), seed, 0.0).unwrap())
}

/// Random full-support policy seeing both covariates.
fn random_policy(gt: &GroundTruth, seed: u64) -> Policy {
    let mut rng = seeded(seed);
    let s = gt.spec;
    let n = s.n_joint_actions();
    let mut probs = Vec::new();
    for _ in 0..s.k1 * s.k2 {
        let raw: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0.05..1.0)).collect();
        let z: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|r| r / z));
    }
    Policy::from_parts(s, probs, CovariateSet::BOTH, None, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn epsilon_greedy_rows_are_distributions(gt in env_strategy(), eps in 0.0f64..=1.0) {
        let p = epsilon_greedy_on(gt.spec, eps, CovariateSet::BOTH, |x1, x2, a| gt.click_prob_joint(x1, x2, a)).unwrap();
        let n = gt.spec.n_joint_actions() as f64;
        for x1 in 0..gt.spec.k1 {
            for x2 in 0..gt.spec.k2 {
                let row = p.row(x1, x2);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&q| q >= eps / n - 1e-15));
            }
        }
    }

    #[test]
    fn no_policy_beats_the_oracle(gt in env_strategy(), seed in any::<u64>()) {
        let oracle = gt.expected_policy_ctr(&gt.oracle_policy(CovariateSet::BOTH)).unwrap();
        let other = gt.expected_policy_ctr(&random_policy(&gt, seed)).unwrap();
        prop_assert!(other <= oracle + 1e-12);
        let blind = gt.expected_policy_ctr(&gt.oracle_policy(CovariateSet::X1)).unwrap();
        prop_assert!(blind <= oracle + 1e-12);
    }

    #[test]
    fn full_population_fit_recovers_the_truth(gt in env_strategy(), seed in any::<u64>()) {
        let logging = random_policy(&gt, seed);
        let fs = FeatureSpec::over_actions(CovariateSet::BOTH, gt.spec);
        let m = population_fit(&gt, &logging, &fs, Target::Click).unwrap();
        for x1 in 0..gt.spec.k1 {
            for x2 in 0..gt.spec.k2 {
                for a in 0..gt.spec.n_actions {
                    let p = m.predict(&Cell::new(x1, x2, a)).unwrap();
                    prop_assert!((p - gt.click_prob_joint(x1, x2, a)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn adjustment_with_true_inputs_is_interventional(gt in env_strategy(), seed in any::<u64>()) {
        let logging = random_policy(&gt, seed);
        let fs = FeatureSpec::over_actions(CovariateSet::BOTH, gt.spec);
        let m = population_fit(&gt, &logging, &fs, Target::Click).unwrap();
        let cov = CovModel::from_ground_truth(&gt);
        for x1 in 0..gt.spec.k1 {
            for a in 0..gt.spec.n_actions {
                let adj = backdoor_adjust(&m, &cov, x1, a).unwrap();
                prop_assert!((adj - gt.interventional_ctr(x1, a)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn saturated_fit_reproduces_cell_rates(gt in env_strategy(), seed in any::<u64>(), n in 50usize..3000) {
        let logging = random_policy(&gt, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = simulate_day(&gt, Routing::Single(&logging), n, 0, &mut rng, DayOptions { with_sale: false, threads: 1 }).unwrap();
        for set in [CovariateSet::NONE, CovariateSet::X1, CovariateSet::X2, CovariateSet::BOTH] {
            let fs = FeatureSpec::over_actions(set, gt.spec);
            let m = fit(&log, &fs, Target::Click).unwrap();
            let counts = CellCounts::from_records(&fs, Target::Click, &log).unwrap();
            for i in (0..fs.dim()).filter(|&i| counts.is_interior(i)) {
                let rate = counts.successes[i] as f64 / counts.impressions[i] as f64;
                let p = 1.0 / (1.0 + (-m.beta[i]).exp());
                prop_assert!((p - rate).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn logged_propensities_match_the_policy(gt in env_strategy(), seed in any::<u64>()) {
        let logging = random_policy(&gt, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = simulate_day(&gt, Routing::Single(&logging), 500, 3, &mut rng, DayOptions::default()).unwrap();
        for r in &log {
            prop_assert_eq!(r.day, 3);
            prop_assert_eq!(r.propensity, logging.row(r.x1, r.x2)[r.a]);
            prop_assert!(r.s.is_none());
        }
    }

    #[test]
    fn balancing_classes_adjust_exactly(gt in env_strategy(), eps in 0.0f64..0.5, shift in 0usize..3) {
        // policy that depends on x2 only through x2 % 2
        let s = gt.spec;
        let p = epsilon_greedy_on(s, eps, CovariateSet::BOTH, |_, x2, a| f64::from(u8::from(a == (x2 % 2 + shift) % s.n_actions))).unwrap();
        for x1 in 0..s.k1 {
            let part = balancing_coarsen(&p, x1);
            prop_assert!(part.n_classes() <= 2);
            for a in 0..s.n_actions {
                if let Ok(v) = class_adjusted_ctr(&gt, &p, &part, a) {
                    prop_assert!((v - gt.interventional_ctr(x1, a)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn factored_policies_are_distributions(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let spec = CategoricalSpec::new(3, 3, 4).unwrap().with_decisions(2).unwrap();
        let mut fp = FactoredPolicyParams::zeros(spec, CovariateSet::X1, CovariateSet::X2).unwrap();
        let mut rng = seeded(seed);
        for v in fp.xi.iter_mut().chain(fp.gamma.iter_mut()) {
            *v = rand::Rng::random_range(&mut rng, -scale..scale);
        }
        let joint = fp.to_joint().unwrap();
        for x1 in 0..3 {
            for x2 in 0..3 {
                prop_assert!((joint.row(x1, x2).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                // a depends on x1 only
                prop_assert_eq!(fp.a_probs(x1, x2), fp.a_probs(x1, 0));
                prop_assert_eq!(fp.d_probs(x1, x2), fp.d_probs(0, x2));
            }
        }
    }

    #[test]
    fn json_round_trips(gt in env_strategy()) {
        prop_assert_eq!(GroundTruth::from_json(&gt.to_json().unwrap()).unwrap(), gt);
    }

    #[test]
    fn d_separation_is_symmetric_and_matches_the_oracle(seed in any::<u64>(), p in 0.2f64..0.8) {
        let mut rng = seeded(seed);
        let g: SmallDag = random_dag(5, p, &mut rng);
        let dag = Dag::parse(&g.to_text()).unwrap();
        let ids: Vec<usize> = (0..5).map(|v| dag.id(&format!("v{v}")).unwrap()).collect();
        let joint = g.joint(&mut rng);
        let z: BTreeSet<usize> = (2..5).filter(|v| (seed >> v) & 1 == 1).collect();
        let map = |s: &BTreeSet<usize>| s.iter().map(|&v| ids[v]).collect::<BTreeSet<_>>();
        let (xs, ys) = (BTreeSet::from([0]), BTreeSet::from([1]));
        let fwd = dag.d_separated(&map(&xs), &map(&ys), &map(&z)).unwrap();
        let back = dag.d_separated(&map(&ys), &map(&xs), &map(&z)).unwrap();
        prop_assert_eq!(fwd, back);
        prop_assert_eq!(fwd, independent(&joint, &xs, &ys, &z, 1e-12));
    }

    #[test]
    fn backdoor_methods_agree(seed in any::<u64>(), p in 0.2f64..0.8) {
        let mut rng = seeded(seed);
        let g = random_dag(6, p, &mut rng);
        let dag = Dag::parse(&g.to_text()).unwrap();
        let (t, y) = (dag.id("v0").unwrap(), dag.id("v1").unwrap());
        for mask in 0..16u32 {
            let zs: BTreeSet<usize> = (0..4).filter(|b| mask >> b & 1 == 1).map(|b| dag.id(&format!("v{}", b + 2)).unwrap()).collect();
            let slow = dag.backdoor_check(t, y, &zs).unwrap();
            prop_assert_eq!(dag.backdoor_admissible(t, y, &zs).unwrap(), slow.admissible);
        }
    }
}
