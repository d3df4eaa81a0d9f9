//! Game parameters: dimension, exponent, step size and the toss probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Probabilities `(alpha, beta)` attached to the exponent `p` in dimension `n`.
///
/// `alpha = (p - 2) / (p + n)`, `beta = 1 - alpha`; `p = inf` maps to `(1, 0)`.
/// Exponents in `(1, 2)` give a negative `alpha`, which only the mean value
/// lab accepts.
pub fn probabilities(p: f64, n: usize) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(invalid("dimension n must be at least 1"));
    }
    if p.is_nan() || p <= 1.0 {
        return Err(invalid(format!("exponent p = {p} must exceed 1")));
    }
    if p.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let alpha = (p - 2.0) / (p + n as f64);
    Ok((alpha, 1.0 - alpha))
}

/// Parameters of a tug-of-war with noise, or of a mean value expansion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub n: usize,
    pub p: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GameParams {
    /// Parameters for games and DPP solvers: `2 <= p < inf`, so that
    /// `0 <= alpha < 1` and the noise keeps the game terminating.
    pub fn new(n: usize, p: f64, epsilon: f64) -> Result<Self> {
        if !(p >= 2.0) || p.is_infinite() {
            return Err(invalid(format!(
                "games and DPP solvers need 2 <= p < inf, got p = {p}"
            )));
        }
        Self::for_mean_value(n, p, epsilon)
    }

    /// Parameters for the mean value lab, which admits `1 < p <= inf`.
    pub fn for_mean_value(n: usize, p: f64, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let (alpha, beta) = probabilities(p, n)?;
        Ok(Self { n, p, epsilon, alpha, beta })
    }

    /// Parameters given directly by the tug-of-war probability `alpha` in `[0, 1)`.
    /// The exponent is recovered as `p = (2 + n alpha) / (1 - alpha)`.
    pub fn from_alpha(n: usize, alpha: f64, epsilon: f64) -> Result<Self> {
        if n < 1 {
            return Err(invalid("dimension n must be at least 1"));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(invalid(format!("alpha = {alpha} must lie in [0, 1)")));
        }
        check_epsilon(epsilon)?;
        let p = (2.0 + n as f64 * alpha) / (1.0 - alpha);
        Ok(Self { n, p, epsilon, alpha, beta: 1.0 - alpha })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self { epsilon, ..*self })
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("epsilon = {epsilon} must be positive and finite")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_reference_values() {
        assert_eq!(probabilities(2.0, 1).unwrap(), (0.0, 1.0));
        let (a, b) = probabilities(4.0, 2).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
        assert!((b - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(probabilities(f64::INFINITY, 2).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn probabilities_reject_bad_input() {
        assert!(probabilities(1.0, 2).is_err());
        assert!(probabilities(0.5, 2).is_err());
        assert!(probabilities(3.0, 0).is_err());
        assert!(probabilities(f64::NAN, 2).is_err());
    }

    #[test]
    fn probabilities_sum_to_one_and_increase_in_p() {
        for n in 1..6 {
            let mut last = -1.0;
            for i in 0..200 {
                let p = 2.0 + 0.37 * i as f64;
                let (a, b) = probabilities(p, n).unwrap();
                assert_eq!(a + b, 1.0);
                assert!(a > last);
                last = a;
            }
        }
    }

    #[test]
    fn game_constructor_rejects_infinity_and_small_p() {
        assert!(GameParams::new(2, f64::INFINITY, 0.1).is_err());
        assert!(GameParams::new(2, 1.5, 0.1).is_err());
        assert!(GameParams::new(2, 3.0, 0.0).is_err());
        assert!(GameParams::for_mean_value(2, f64::INFINITY, 0.1).is_ok());
        let mv = GameParams::for_mean_value(2, 1.5, 0.1).unwrap();
        assert!(mv.alpha < 0.0);
    }

    #[test]
    fn from_alpha_recovers_p() {
        let g = GameParams::from_alpha(1, 0.25, 0.1).unwrap();
        assert!((g.p - 3.0).abs() < 1e-12);
        assert_eq!(g.beta, 0.75);
        assert!(GameParams::from_alpha(1, 1.0, 0.1).is_err());
    }
}
