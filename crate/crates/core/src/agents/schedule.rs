/// Exploration rate: 1 through the warmup, then linear decay from 1 to
/// `epsilon_final` over `decay_period` steps, then `epsilon_final`.
pub fn linearly_decaying_epsilon(decay_period: u64, step: u64, warmup: u64, epsilon_final: f64) -> f64 {
    let steps_left = decay_period as f64 + warmup as f64 - step as f64;
    let bonus = (1.0 - epsilon_final) * steps_left / decay_period as f64;
    epsilon_final + bonus.clamp(0.0, 1.0 - epsilon_final)
}

/// Which exploration schedule an agent follows while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpsilonSchedule {
    #[default]
    LinearDecay,
    /// Always `epsilon_train`.
    Constant,
}

impl EpsilonSchedule {
    pub fn as_str(self) -> &'static str {
        match self {
            EpsilonSchedule::LinearDecay => "linearly_decaying_epsilon",
            EpsilonSchedule::Constant => "constant_epsilon",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "linearly_decaying_epsilon" => Some(EpsilonSchedule::LinearDecay),
            "constant_epsilon" => Some(EpsilonSchedule::Constant),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_random_during_warmup() {
        assert_eq!(linearly_decaying_epsilon(1_000_000, 0, 80_000, 0.01), 1.0);
        assert_eq!(linearly_decaying_epsilon(1_000_000, 80_000, 80_000, 0.01), 1.0);
    }

    #[test]
    fn reaches_final_value_at_end_of_decay() {
        assert_eq!(linearly_decaying_epsilon(1_000_000, 1_080_000, 80_000, 0.01), 0.01);
        assert_eq!(linearly_decaying_epsilon(1_000_000, 5_000_000, 80_000, 0.01), 0.01);
    }

    #[test]
    fn halfway_is_linear_interpolation() {
        let eps = linearly_decaying_epsilon(1_000_000, 580_000, 80_000, 0.01);
        assert!((eps - 0.505).abs() < 1e-12, "{eps}");
    }

    #[test]
    fn monotone_and_clipped() {
        let mut prev = 1.0;
        for step in (0..3000).step_by(7) {
            let eps = linearly_decaying_epsilon(1000, step, 500, 0.1);
            assert!(eps <= prev && (0.1..=1.0).contains(&eps));
            prev = eps;
        }
    }
}
