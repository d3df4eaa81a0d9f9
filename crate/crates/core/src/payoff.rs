//! Payoff functions read on the boundary strip.

/// Boundary payoff `F(x)`, evaluated outside the domain.
pub trait Payoff: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F> Payoff for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Space-time payoff `F(x, t)` on the parabolic strip: lateral collar for
/// `t > 0`, every point at `t = 0`.
pub trait TimedPayoff: Send + Sync {
    fn eval(&self, x: &[f64], t: f64) -> f64;
}

impl<F> TimedPayoff for F
where
    F: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        self(x, t)
    }
}
