//! Gumbel-Softmax sampling and the softmax helpers shared by the agents.

use rand::Rng;

use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One standard Gumbel draw, `−ln(−ln u)` with `u` uniform on (0, 1).
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let mut u: f64 = rng.random();
    while u <= 0.0 {
        u = rng.random();
    }
    -(-u.ln()).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelSample {
    pub logits: Vec<f64>,
    pub temperature: f64,
    pub relaxed_probabilities: Vec<f64>,
    pub hard_index: usize,
}

/// Relaxed sample for a given noise vector: `softmax((logits + noise) / temperature)`.
pub fn gumbel_softmax_with_noise(logits: &[f64], noise: &[f64], temperature: f64) -> Result<GumbelSample> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if logits.len() != noise.len() {
        return Err(Error::Shape {
            context: "gumbel noise",
            expected: logits.len(),
            actual: noise.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let scaled: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| (l + g) / temperature)
        .collect();
    let relaxed_probabilities = softmax(&scaled);
    let hard_index = argmax(&relaxed_probabilities);
    Ok(GumbelSample {
        logits: logits.to_vec(),
        temperature,
        relaxed_probabilities,
        hard_index,
    })
}

pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<GumbelSample> {
    let noise: Vec<f64> = (0..logits.len()).map(|_| gumbel_noise(rng)).collect();
    gumbel_softmax_with_noise(logits, &noise, temperature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 5];
        let draws = 50_000;
        for _ in 0..draws {
            let s = gumbel_softmax_sample(&[0.3; 5], 1.0, &mut rng).unwrap();
            counts[s.hard_index] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.2).abs() < 0.015, "frequency {freq}");
        }
    }

    #[test]
    fn dominant_logit_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let logits = [-20.0, -20.0, 20.0, -20.0];
        let draws = 20_000;
        let hits = (0..draws)
            .filter(|_| gumbel_softmax_sample(&logits, 1.0, &mut rng).unwrap().hard_index == 2)
            .count();
        assert!(hits as f64 / draws as f64 > 0.999);
    }

    #[test]
    fn low_temperature_is_nearly_one_hot() {
        let logits = [0.2, 1.0, -0.5, 0.9];
        let noise = [0.1, -0.3, 0.8, 0.4];
        let s = gumbel_softmax_with_noise(&logits, &noise, 0.01).unwrap();
        let max = s.relaxed_probabilities.iter().copied().fold(0.0, f64::max);
        assert!(max > 0.99);
        // perturbed scores: 0.3, 0.7, 0.3, 1.3
        assert_eq!(s.hard_index, 3);
        let total: f64 = s.relaxed_probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            gumbel_softmax_sample(&[0.0, f64::NAN], 1.0, &mut rng),
            Err(Error::NonFinite(_))
        ));
        assert!(gumbel_softmax_sample(&[0.0, 1.0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn hard_index_follows_softmax_chi_square() {
        let logits = [1.0, 0.0, -0.5, 2.0, 0.3];
        let p = softmax(&logits);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 50_000;
        let mut counts = [0f64; 5];
        for _ in 0..n {
            counts[gumbel_softmax_sample(&logits, 1.0, &mut rng).unwrap().hard_index] += 1.0;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&p)
            .map(|(o, q)| {
                let e = q * n as f64;
                (o - e) * (o - e) / e
            })
            .sum();
        // chi-square critical value, 4 degrees of freedom, significance 0.01
        assert!(chi2 < 13.277, "chi2 = {chi2}");
    }

    #[test]
    fn log_sum_exp_of_constant() {
        let v = [2.5; 7];
        assert!((log_sum_exp(&v) - (2.5 + 7f64.ln())).abs() < 1e-12);
    }
}
