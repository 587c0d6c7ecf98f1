use alloc::format;
use alloc::vec::Vec;

use crate::Result;

/// L_κ(u) = ½u² for |u| ≤ κ, κ(|u| − ½κ) otherwise.
pub fn huber_loss(u: f64, kappa: f64) -> f64 {
    debug_assert!(kappa > 0.0);
    let a = libm::fabs(u);
    if a <= kappa {
        0.5 * u * u
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

/// dL_κ/du.
pub fn huber_grad(u: f64, kappa: f64) -> f64 {
    if libm::fabs(u) <= kappa {
        u
    } else {
        kappa * u.signum()
    }
}

/// Asymmetric quantile-Huber ρ^κ_τ(u) = |τ − 1{u<0}| · L_κ(u) / κ and its
/// derivative with respect to `u`.
pub fn quantile_huber(u: f64, tau: f64, kappa: f64) -> (f64, f64) {
    let weight = libm::fabs(tau - if u < 0.0 { 1.0 } else { 0.0 });
    (weight * huber_loss(u, kappa) / kappa, weight * huber_grad(u, kappa) / kappa)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
    logits.iter().map(|&z| z - max - log_sum).collect()
}

/// Tolerance on Σ target − 1 accepted by [`softmax_cross_entropy`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// −Σ target · log softmax(logits), with its gradient softmax(logits) − target.
pub fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != target.len() {
        return Err(crate::error::contract(format!(
            "logits ({}) and target ({}) differ in length",
            logits.len(),
            target.len()
        )));
    }
    let mass: f64 = target.iter().sum();
    if libm::fabs(mass - 1.0) > NORMALIZATION_TOLERANCE || target.iter().any(|&p| p < 0.0) {
        return Err(crate::error::contract(format!("target is not a probability vector (sums to {mass})")));
    }
    let log_p = log_softmax(logits);
    let loss = -target.iter().zip(&log_p).map(|(t, l)| if *t == 0.0 { 0.0 } else { t * l }).sum::<f64>();
    let grad = log_p.iter().zip(target).map(|(l, t)| libm::exp(*l) - t).collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_values() {
        assert_eq!(huber_loss(0.0, 1.0), 0.0);
        assert_eq!(huber_loss(0.5, 1.0), 0.125);
        assert_eq!(huber_loss(3.0, 1.0), 2.5);
        assert_eq!(huber_loss(-3.0, 1.0), 2.5);
        assert_eq!(huber_grad(0.0, 1.0), 0.0);
    }

    #[test]
    fn huber_grad_matches_finite_differences() {
        for &u in &[-2.5, -0.7, 0.3, 0.99, 1.7] {
            let numeric = (huber_loss(u + 1e-6, 1.0) - huber_loss(u - 1e-6, 1.0)) / 2e-6;
            assert!((numeric - huber_grad(u, 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn quantile_huber_median_limit_is_half_abs() {
        for &u in &[-3.0, -0.2, 0.4, 5.0] {
            for &kappa in &[1e-3, 1e-6, 1e-9] {
                let (v, _) = quantile_huber(u, 0.5, kappa);
                let limit = 0.5 * libm::fabs(u);
                // Exact value is ½(|u| − κ/2) outside the quadratic zone.
                assert!((v - limit).abs() <= 0.25 * kappa + 1e-12, "u={u} κ={kappa}: {v}");
            }
        }
        assert_eq!(quantile_huber(0.0, 0.3, 1.0).0, 0.0);
    }

    #[test]
    fn quantile_huber_is_asymmetric() {
        let (pos, _) = quantile_huber(2.0, 0.9, 1.0);
        let (neg, _) = quantile_huber(-2.0, 0.9, 1.0);
        assert!((pos - 0.9 * 1.5).abs() < 1e-15);
        assert!((neg - 0.1 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_cross_entropy_is_log_atoms() {
        let logits = [0.3; 51];
        let target = [1.0 / 51.0; 51];
        let (loss, _) = softmax_cross_entropy(&logits, &target).unwrap();
        assert!((loss - libm::log(51.0)).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_shift_invariant_and_bounded_by_entropy() {
        let logits = [0.1, -2.0, 3.5, 0.0];
        let target = [0.1, 0.2, 0.3, 0.4];
        let (a, _) = softmax_cross_entropy(&logits, &target).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|z| z + 123.0).collect();
        let (b, _) = softmax_cross_entropy(&shifted, &target).unwrap();
        assert!((a - b).abs() < 1e-12);
        let entropy: f64 = -target.iter().map(|p| p * libm::log(*p)).sum::<f64>();
        assert!(a >= entropy);
        let self_logits: Vec<f64> = target.iter().map(|p| libm::log(*p)).collect();
        let (c, grad) = softmax_cross_entropy(&self_logits, &target).unwrap();
        assert!((c - entropy).abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[500.0, -500.0, 499.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_target_rejected() {
        assert!(softmax_cross_entropy(&[0.0, 0.0], &[0.5, 0.6]).is_err());
        assert!(softmax_cross_entropy(&[0.0], &[0.5, 0.5]).is_err());
    }
}
