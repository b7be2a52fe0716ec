//! Independent-oracle checks for the exact MDP layer: brute-force policy
//! enumeration against value iteration, and Monte-Carlo estimates against
//! the direct linear solves.

mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use waker_core::mdp::{occupancy, policy_value, regret, value_iteration};
use waker_core::Policy;

#[test]
fn value_iteration_matches_policy_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    for instance in 0..50 {
        let n = 2 + (instance % 3); // 2..=4 states
        let mdp = random_small_mdp(&mut rng, n, 2, 0.9);
        let reward = random_reward(&mut rng, n, 2);
        let (oracle_best, _) = enumerate_optimal_value(&mdp, &reward);
        let sol = value_iteration(&mdp, &reward, 1e-10).unwrap();
        let vi_best = policy_value(&sol.policy, &mdp, &reward).unwrap();
        assert!(
            (vi_best - oracle_best).abs() < 1e-6,
            "instance {instance}: vi {vi_best} vs enumeration {oracle_best}"
        );
        // Optimality against every enumerated policy, not just the best.
        let m = 2usize;
        for code in 0..m.pow(n as u32) {
            let mut c = code;
            let actions: Vec<usize> = (0..n)
                .map(|_| {
                    let a = c % m;
                    c /= m;
                    a
                })
                .collect();
            let v = oracle_policy_value(&mdp, &reward, &actions);
            assert!(vi_best >= v - 1e-6);
        }
    }
}

#[test]
fn anti_optimal_regret_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEE);
    for _ in 0..20 {
        let n = 3;
        let mdp = random_small_mdp(&mut rng, n, 2, 0.9);
        let reward = random_reward(&mut rng, n, 2);
        let (best, _) = enumerate_optimal_value(&mdp, &reward);
        // Worst deterministic policy by enumeration.
        let mut worst = f64::INFINITY;
        let mut worst_actions = vec![0; n];
        for code in 0..2usize.pow(n as u32) {
            let mut c = code;
            let actions: Vec<usize> = (0..n)
                .map(|_| {
                    let a = c % 2;
                    c /= 2;
                    a
                })
                .collect();
            let v = oracle_policy_value(&mdp, &reward, &actions);
            if v < worst {
                worst = v;
                worst_actions = actions;
            }
        }
        let anti = Policy::deterministic(2, &worst_actions);
        let r = regret(&anti, &mdp, &reward).unwrap();
        assert!((r - (best - worst)).abs() < 1e-6, "regret {r} vs {}", best - worst);
        assert!(r >= -1e-6);
    }
}

#[test]
fn policy_value_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCAFE);
    let mdp = random_small_mdp(&mut rng, 4, 2, 0.9);
    let reward = random_reward(&mut rng, 4, 2);
    let policy = random_stochastic_policy(&mut rng, 4, 2);
    let exact = policy_value(&policy, &mdp, &reward).unwrap();
    let mc = mc_policy_value(&policy, &mdp, &reward, 1_000_000, 200, &mut rng);
    assert!(
        (exact - mc.mean).abs() <= 3.0 * mc.std_error + 1e-7,
        "exact {exact}, mc {} +- {}",
        mc.mean,
        mc.std_error
    );
}

#[test]
fn occupancy_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1CE);
    let mdp = random_small_mdp(&mut rng, 3, 2, 0.9);
    let policy = random_stochastic_policy(&mut rng, 3, 2);
    let occ = occupancy(&policy, &mdp).unwrap();
    let (means, ses) = mc_occupancy(&policy, &mdp, 1_000_000, 200, &mut rng);
    for s in 0..3 {
        for a in 0..2 {
            let exact = occ.weight(s, a);
            let mc = means[s * 2 + a];
            let se = ses[s * 2 + a];
            assert!(
                (exact - mc).abs() <= 3.0 * se + 1e-7,
                "({s},{a}): exact {exact}, mc {mc} +- {se}"
            );
        }
    }
    let total: f64 = occ.weights().iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
}
