use rand::Rng;

/// Inverse-gap-weighted distribution over arms.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionKernel {
    probs: Vec<f64>,
    best: usize,
}

/// Every arm other than the predicted best `â` gets `1/(K + γ·(ŷ_â − ŷ_a))`;
/// `â` takes the remaining mass. Ties for `â` go to the lowest index.
pub fn action_kernel(predictions: &[f64], gamma: f64) -> ActionKernel {
    assert!(gamma > 0.0, "gamma must be positive");
    let k = predictions.len();
    let mut best = 0;
    for (a, &v) in predictions.iter().enumerate().skip(1) {
        if v > predictions[best] {
            best = a;
        }
    }
    let top = predictions[best];
    let mut probs: Vec<f64> = predictions.iter().map(|&v| 1.0 / (k as f64 + gamma * (top - v))).collect();
    probs[best] = 0.0;
    probs[best] = 1.0 - probs.iter().sum::<f64>();
    ActionKernel { probs, best }
}

impl ActionKernel {
    pub fn uniform(num_arms: usize) -> Self {
        action_kernel(&vec![0.0; num_arms], 1.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, arm: usize) -> f64 {
        self.probs[arm]
    }

    pub fn best(&self) -> usize {
        self.best
    }

    pub fn num_arms(&self) -> usize {
        self.probs.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // u landed in the rounding gap above the cumulative sum
        self.best
    }

    /// `Σ_a p(a)·(ŷ_â − ŷ_a)` for the predictions the kernel was built from.
    pub fn estimated_regret(&self, predictions: &[f64]) -> f64 {
        let top = predictions[self.best];
        self.probs.iter().zip(predictions).map(|(p, v)| p * (top - v)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    #[test]
    fn equal_predictions_give_uniform() {
        let k = action_kernel(&[0.3, 0.3, 0.3], 5.0);
        for p in k.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(k.best(), 0);
    }

    #[test]
    fn two_arm_closed_form() {
        let k = action_kernel(&[0.1, 0.4], 10.0);
        assert_eq!(k.best(), 1);
        assert!((k.prob(0) - 0.2).abs() < 1e-15);
        assert!((k.prob(1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn large_gamma_concentrates() {
        let k = action_kernel(&[0.9, 0.6], 1e12);
        assert!(k.prob(1) < 1e-11);
        assert!((k.prob(0) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn sampling_frequencies_match_probabilities() {
        let k = action_kernel(&[0.2, 0.5, 0.45], 8.0);
        let mut rng = stream(1, Stream::Agent);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[k.sample(&mut rng)] += 1;
        }
        for a in 0..3 {
            let p = k.prob(a);
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((counts[a] as f64 / n as f64 - p).abs() <= 3.0 * sigma, "arm {a}");
        }
    }

    proptest! {
        #[test]
        fn kernel_invariants(preds in prop::collection::vec(0.0f64..1.0, 2..8), gamma in 0.01f64..1e4) {
            let k = action_kernel(&preds, gamma);
            let n = preds.len() as f64;
            let sum: f64 = k.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for (a, &p) in k.probs().iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&p));
                prop_assert!(p >= 1.0 / (n + gamma) - 1e-15);
                prop_assert!(p <= k.prob(k.best()));
                if a != k.best() {
                    prop_assert!(p <= 1.0 / n);
                }
            }
            // per-context form of the estimated-regret bound
            prop_assert!(k.estimated_regret(&preds) <= n / gamma + 1e-12);
        }
    }
}
