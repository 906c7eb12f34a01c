//! Generalized advantage estimation and lifetime returns.

use crate::error::{Result, UleeError};

/// GAE over one environment's step stream.
///
/// `cut_after[t]` marks positions after which the credit-assignment
/// stream is severed (lifetime boundaries under the default scheme):
/// bootstrapping and the advantage recursion stop there. Intra-lifetime
/// episode boundaries are *not* cuts unless the caller opts into that
/// scheme by passing episode flags instead. `bootstrap_value` is the
/// value estimate for the state after the last step; it is ignored when
/// the stream is cut at the end.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    cut_after: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || cut_after.len() != n {
        return Err(UleeError::Contract(format!(
            "compute_gae: lengths differ (rewards {n}, values {}, cuts {})",
            values.len(),
            cut_after.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let mask = if cut_after[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * mask * next_value - values[t];
        acc = delta + gamma * lambda * mask * acc;
        advantages[t] = acc;
        returns[t] = acc + values[t];
    }
    Ok((advantages, returns))
}

/// Discounted lifetime return over episodes of nominal length `t_nominal`:
/// sum over episode j (1-based) and in-episode step t of
/// gamma^((j-1)*t_nominal + t) * r. Early-terminated episodes still
/// advance the exponent by a full `t_nominal`.
pub fn lifetime_return(episode_rewards: &[Vec<f64>], t_nominal: usize, gamma: f64) -> f64 {
    let mut total = 0.0;
    for (j, ep) in episode_rewards.iter().enumerate() {
        debug_assert!(ep.len() <= t_nominal);
        let base = gamma.powi((j * t_nominal) as i32);
        let mut d = base;
        for &r in ep {
            total += d * r;
            d *= gamma;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    /// Brute-force double loop: A_t = sum_k (gamma*lambda)^k delta_{t+k},
    /// stopping at the first cut.
    fn gae_bruteforce(
        rewards: &[f64],
        values: &[f64],
        cut_after: &[bool],
        bootstrap: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let delta = |t: usize| {
            let mask = if cut_after[t] { 0.0 } else { 1.0 };
            let nv = if t + 1 < n { values[t + 1] } else { bootstrap };
            rewards[t] + gamma * mask * nv - values[t]
        };
        (0..n)
            .map(|t| {
                let mut a = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    a += w * delta(k);
                    if cut_after[k] {
                        break;
                    }
                    w *= gamma * lambda;
                }
                a
            })
            .collect()
    }

    #[test]
    fn single_step_unit_reward() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[false], 0.0, 0.99, 0.95).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn gamma_zero_collapses_to_td() {
        let rewards = [0.5, -0.3, 1.0];
        let values = [0.2, 0.7, -0.1];
        let (a, _) = compute_gae(&rewards, &values, &[false; 3], 0.4, 0.0, 0.95).unwrap();
        for t in 0..3 {
            assert!((a[t] - (rewards[t] - values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_bruteforce_on_random_instances() {
        let mut rng = stream(31, "gae", 0);
        for case in 0..50 {
            let n = rng.gen_range(1..=64);
            let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cuts: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.15)).collect();
            let bootstrap = rng.gen_range(-1.0..1.0);
            let (a, ret) =
                compute_gae(&rewards, &values, &cuts, bootstrap, 0.99, 0.95).unwrap();
            let oracle = gae_bruteforce(&rewards, &values, &cuts, bootstrap, 0.99, 0.95);
            for t in 0..n {
                assert!(
                    (a[t] - oracle[t]).abs() < 1e-10,
                    "case {case} t {t}: {} vs {}",
                    a[t],
                    oracle[t]
                );
                assert!((ret[t] - (a[t] + values[t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.99, 0.95).is_err());
    }

    #[test]
    fn lifetime_return_single_episode_is_discounted_return() {
        let rewards = vec![vec![1.0, 0.5, 0.25]];
        let g = 0.9;
        let expect = 1.0 + g * 0.5 + g * g * 0.25;
        assert!((lifetime_return(&rewards, 8, g) - expect).abs() < 1e-15);
    }

    #[test]
    fn lifetime_return_uses_nominal_episode_offsets() {
        // Reward 1 at episode 2, step 0; nominal length 4, gamma 0.5.
        let rewards = vec![vec![0.0, 0.0], vec![1.0]];
        assert!((lifetime_return(&rewards, 4, 0.5) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn lifetime_return_matches_bruteforce_and_is_monotone() {
        let mut rng = stream(32, "ret", 0);
        for _ in 0..30 {
            let t_nom = rng.gen_range(1..=8);
            let h = rng.gen_range(1..=5);
            let eps: Vec<Vec<f64>> = (0..h)
                .map(|_| {
                    let len = rng.gen_range(1..=t_nom);
                    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
                })
                .collect();
            let gamma: f64 = rng.gen_range(0.5..1.0);
            let mut oracle = 0.0;
            for (j, ep) in eps.iter().enumerate() {
                for (t, &r) in ep.iter().enumerate() {
                    oracle += gamma.powi((j * t_nom + t) as i32) * r;
                }
            }
            let got = lifetime_return(&eps, t_nom, gamma);
            assert!((got - oracle).abs() < 1e-12);
            // Monotone nondecreasing in any single reward.
            let mut bumped = eps.clone();
            let j = rng.gen_range(0..h);
            let t = rng.gen_range(0..bumped[j].len());
            bumped[j][t] += 0.5;
            assert!(lifetime_return(&bumped, t_nom, gamma) >= got);
        }
    }
}
