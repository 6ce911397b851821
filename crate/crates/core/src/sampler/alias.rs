//! Offspring-rule samplers built once per type.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// Walker/Vose alias table over rule indices.
#[derive(Debug, Clone)]
pub struct AliasTable {
    threshold: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        assert!(n > 0 && n < u32::MAX as usize);
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "alias table needs positive mass");
        let mut threshold: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| threshold[i] < 1.0);
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s] = l as u32;
            threshold[l] = (threshold[l] + threshold[s]) - 1.0;
            if threshold[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            threshold[i] = 1.0;
        }
        Self { threshold, alias }
    }

    pub fn len(&self) -> usize {
        self.threshold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threshold.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.threshold.len());
        if rng.gen::<f64>() < self.threshold[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

/// Splits a whole generation of same-type particles over the rules.
///
/// Small generations draw one rule per particle from the alias table; large
/// ones draw the multinomial rule counts directly as a chain of conditional
/// binomials. Both give the law of independent per-particle draws.
#[derive(Debug, Clone)]
pub struct RuleSampler {
    alias: AliasTable,
    /// `p_r / sum_{r' >= r} p_r'`, clamped to [0, 1].
    conditional: Vec<f64>,
}

/// Generations at or below this size are sampled particle by particle.
pub const PER_PARTICLE_CUTOFF: u64 = 24;

impl RuleSampler {
    pub fn new(probs: &[f64]) -> Self {
        let mut tail = 0.0;
        let mut conditional = vec![0.0; probs.len()];
        for (r, &p) in probs.iter().enumerate().rev() {
            tail += p;
            conditional[r] = if tail > 0.0 {
                (p / tail).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        Self {
            alias: AliasTable::new(probs),
            conditional,
        }
    }

    /// Adds the rule counts of `particles` independent draws to `counts`.
    pub fn assign<R: Rng + ?Sized>(&self, particles: u64, counts: &mut [u64], rng: &mut R) {
        if particles <= PER_PARTICLE_CUTOFF {
            for _ in 0..particles {
                counts[self.alias.sample(rng)] += 1;
            }
            return;
        }
        let last = self.conditional.len() - 1;
        let mut left = particles;
        for (r, &c) in self.conditional.iter().enumerate() {
            if left == 0 {
                break;
            }
            let k = if r == last || c >= 1.0 {
                left
            } else if c <= 0.0 {
                0
            } else {
                Binomial::new(left, c).expect("valid binomial").sample(rng)
            };
            counts[r] += k;
            left -= k;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::rng::stream_rng;

    fn chi_square(observed: &[u64], probs: &[f64]) -> f64 {
        let n: u64 = observed.iter().sum();
        observed
            .iter()
            .zip(probs)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&o, &p)| {
                let e = n as f64 * p;
                (o as f64 - e).powi(2) / e
            })
            .sum()
    }

    #[test]
    fn alias_frequencies() {
        let probs = [0.1, 0.0, 0.45, 0.2, 0.25];
        let table = AliasTable::new(&probs);
        let mut rng = stream_rng(1, 0);
        let mut counts = [0u64; 5];
        for _ in 0..200_000 {
            counts[table.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        // 3 degrees of freedom; 99.9% quantile is 16.27
        assert!(chi_square(&counts, &probs) < 16.27, "{counts:?}");
    }

    #[test]
    fn multinomial_counts_match_probabilities() {
        let probs = [0.25, 0.5, 0.25];
        let sampler = RuleSampler::new(&probs);
        let mut rng = stream_rng(2, 0);
        let mut counts = [0u64; 3];
        for _ in 0..2_000 {
            let mut c = [0u64; 3];
            sampler.assign(1_000, &mut c, &mut rng);
            assert_eq!(c.iter().sum::<u64>(), 1_000);
            for (a, b) in counts.iter_mut().zip(c) {
                *a += b;
            }
        }
        assert!(chi_square(&counts, &probs) < 13.82, "{counts:?}");
    }

    #[test]
    fn multinomial_per_rule_variance() {
        // Var of a binomial(n, p) count across generations
        let probs = [0.3, 0.7];
        let sampler = RuleSampler::new(&probs);
        let mut rng = stream_rng(3, 0);
        let n = 400u64;
        let reps = 20_000;
        let draws: Vec<f64> = (0..reps)
            .map(|_| {
                let mut c = [0u64; 2];
                sampler.assign(n, &mut c, &mut rng);
                c[0] as f64
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!((mean - 120.0).abs() < 0.3);
        assert!((var / 84.0 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn point_mass_and_zero_rules() {
        let sampler = RuleSampler::new(&[0.0, 1.0, 0.0]);
        let mut rng = stream_rng(4, 0);
        let mut c = [0u64; 3];
        sampler.assign(5, &mut c, &mut rng);
        sampler.assign(500, &mut c, &mut rng);
        assert_eq!(c, [0, 505, 0]);
    }
}
