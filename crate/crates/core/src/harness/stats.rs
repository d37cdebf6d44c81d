use rand::distributions::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::mdp::SimRng;

/// Per-episode seed: the splitmix64 finalizer applied to `base ^ index`.
///
/// The finalizer is a bijection on `u64`, so distinct indices under one base
/// always give distinct seeds.
pub fn derive_seed(base: u64, episode_index: u64) -> u64 {
    let mut z = (base ^ episode_index).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Percentile bootstrap interval for the mean at confidence `level`.
pub fn bootstrap_ci(samples: &[f64], level: f64, resamples: usize, rng: &mut SimRng) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Contract("bootstrap of an empty sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} must lie in (0, 1)")));
    }
    if resamples < 1000 {
        return Err(Error::Config(format!("{resamples} bootstrap resamples; at least 1000 are required")));
    }
    if samples.len() == 1 {
        return Ok((samples[0], samples[0]));
    }
    let n = samples.len();
    let pick = Uniform::new(0, n);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut sum = 0.0;
            for _ in 0..n {
                sum += samples[pick.sample(rng)];
            }
            sum / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let lo = ((alpha * resamples as f64).floor() as usize).min(resamples - 1);
    let hi = (((1.0 - alpha) * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    Ok((means[lo], means[hi]))
}
