use num_complex::Complex;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedmimo::channel::{standard_complex_gaussian, ChannelRealization};
use fedmimo::phy::{mmse_beamformers, sinr_with_receiver, PowerAllocation, SinrTargets};
use fedmimo::power_control::{feasibility_test, required_powers, FeasibilitySettings};
use fedmimo::scheduler::{schedule_round, RoundInputs};

fn channels(k: usize, n: usize, seed: u64) -> ChannelRealization<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelRealization::new((0..k).map(|_| standard_complex_gaussian(n, &mut rng)).collect(), 0).unwrap()
}

fn targets(g: &[f64]) -> SinrTargets<f64> {
    SinrTargets::from_linear(g.iter().map(|&v| Some(v)).collect()).unwrap()
}

fn instance() -> impl Strategy<Value = (usize, u64, Vec<f64>, Vec<f64>)> {
    (2usize..=5, any::<u64>()).prop_flat_map(|(k, seed)| {
        (
            Just(k),
            Just(seed),
            prop::collection::vec(0.05f64..3.0, k),
            prop::collection::vec(0.01f64..2.0, k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // The power update is a standard interference function: positive,
    // monotone and scalable.
    #[test]
    fn interference_function_axioms((k, seed, gammas, p) in instance(), bump in 0.0f64..1.0, scale in 1.01f64..10.0) {
        let ch = channels(k, 3, seed);
        let set: Vec<usize> = (0..k).collect();
        let sigma2 = 0.5;
        let base = required_powers(&set, &ch, &gammas, &PowerAllocation { powers: p.clone() }, sigma2).unwrap();
        prop_assert!(base.iter().all(|&v| v > 0.0));

        let bigger: Vec<f64> = p.iter().enumerate().map(|(i, &v)| if i == 0 { v + bump } else { v }).collect();
        let up = required_powers(&set, &ch, &gammas, &PowerAllocation { powers: bigger }, sigma2).unwrap();
        for (a, b) in base.iter().zip(&up) {
            prop_assert!(*b >= *a * (1.0 - 1e-12));
        }

        let scaled: Vec<f64> = p.iter().map(|v| v * scale).collect();
        let s = required_powers(&set, &ch, &gammas, &PowerAllocation { powers: scaled }, sigma2).unwrap();
        for (a, b) in base.iter().zip(&s) {
            prop_assert!(scale * a > *b);
        }
    }

    #[test]
    fn subsets_of_feasible_sets_are_feasible((k, seed, gammas, _p) in instance(), budget in 0.5f64..20.0) {
        let ch = channels(k, 3, seed);
        let t = targets(&gammas);
        let settings = FeasibilitySettings::default();
        let all: Vec<usize> = (0..k).collect();
        if feasibility_test(&all, &ch, &t, budget, 1.0, &settings).unwrap().feasible {
            for drop in 0..k {
                let sub: Vec<usize> = all.iter().copied().filter(|&i| i != drop).collect();
                prop_assert!(feasibility_test(&sub, &ch, &t, budget, 1.0, &settings).unwrap().feasible);
            }
        }
        // and supersets of infeasible sets stay infeasible
        let head = vec![0usize, 1];
        if !feasibility_test(&head, &ch, &t, budget, 1.0, &settings).unwrap().feasible {
            prop_assert!(!feasibility_test(&all, &ch, &t, budget, 1.0, &settings).unwrap().feasible);
        }
    }

    // Relabelling devices relabels the schedule and nothing else.
    #[test]
    fn scheduling_is_permutation_equivariant((k, seed, gammas, w) in instance(), shift in 1usize..5) {
        let ch = channels(k, 3, seed);
        let total: f64 = w.iter().sum();
        let alpha: Vec<f64> = w.iter().map(|v| v / total).collect();
        let perm: Vec<usize> = (0..k).map(|i| (i + shift) % k).collect(); // new index of old device i
        let mut inv = vec![0; k];
        for (old, &new) in perm.iter().enumerate() {
            inv[new] = old;
        }
        let ch2 = ChannelRealization::new(inv.iter().map(|&old| ch.channel(old).to_vec()).collect(), 0).unwrap();
        let g2: Vec<f64> = inv.iter().map(|&old| gammas[old]).collect();
        let a2: Vec<f64> = inv.iter().map(|&old| alpha[old]).collect();
        let (t1, t2) = (targets(&gammas), targets(&g2));
        let run = |ch: &ChannelRealization<f64>, t: &SinrTargets<f64>, a: &[f64]| {
            let inputs = RoundInputs { channels: ch, targets: t, weights: a, sum_power: 4.0, sigma2: 1.0 };
            schedule_round(&inputs, &Default::default()).unwrap()
        };
        let r1 = run(&ch, &t1, &alpha);
        let r2 = run(&ch2, &t2, &a2);
        let mut mapped: Vec<usize> = r1.scheduled.iter().map(|&i| perm[i]).collect();
        mapped.sort_unstable();
        let mut got = r2.scheduled.clone();
        got.sort_unstable();
        prop_assert_eq!(mapped, got);
        prop_assert!((r1.weighted_mass - r2.weighted_mass).abs() < 1e-12);
        for &i in &r1.scheduled {
            let (p1, p2) = (r1.powers.powers[i], r2.powers.powers[perm[i]]);
            prop_assert!((p1 - p2).abs() <= 1e-9 * p1.max(1e-12));
        }
    }

    #[test]
    fn mmse_beats_random_receivers((k, seed, _g, p) in instance(), probe in any::<u64>()) {
        let ch = channels(k, 4, seed);
        let set: Vec<usize> = (0..k).collect();
        let alloc = PowerAllocation { powers: p };
        let m = mmse_beamformers(&set, &ch, &alloc, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(probe);
        for &dev in &set {
            let best = sinr_with_receiver(dev, m.get(dev).unwrap(), &ch, &alloc, &set, 0.3);
            for _ in 0..20 {
                let v: Vec<Complex<f64>> = standard_complex_gaussian(4, &mut rng);
                let s = sinr_with_receiver(dev, &v, &ch, &alloc, &set, 0.3);
                prop_assert!(s <= best * (1.0 + 1e-12));
                // the SINR of a receiver does not depend on its scale
                let v3: Vec<Complex<f64>> = v.iter().map(|z| z * Complex::new(0.0, 3.0)).collect();
                let s3 = sinr_with_receiver(dev, &v3, &ch, &alloc, &set, 0.3);
                prop_assert!((s - s3).abs() <= 1e-12 * s.max(1e-300));
            }
        }
    }

    // Feasible power vectors meet every target with the MMSE receivers.
    #[test]
    fn feasible_powers_meet_targets((k, seed, gammas, _p) in instance()) {
        let ch = channels(k, 4, seed);
        let t = targets(&gammas);
        let set: Vec<usize> = (0..k).collect();
        let r = feasibility_test(&set, &ch, &t, 50.0, 1.0, &FeasibilitySettings::default()).unwrap();
        if r.feasible {
            prop_assert!(r.powers.total(&set) <= 50.0 * (1.0 + 1e-8));
            let m = mmse_beamformers(&set, &ch, &r.powers, 1.0).unwrap();
            for &i in &set {
                let s = sinr_with_receiver(i, m.get(i).unwrap(), &ch, &r.powers, &set, 1.0);
                prop_assert!(s >= gammas[i] * (1.0 - 1e-7), "device {} sinr {} < {}", i, s, gammas[i]);
            }
        }
    }
}
