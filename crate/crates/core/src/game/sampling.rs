use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type TrialRng = ChaCha8Rng;

/// Generator for trial `index` under `master_seed`: one ChaCha stream per
/// trial, so results do not depend on which thread runs the trial.
pub fn trial_rng(master_seed: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform point of the open ball `B_eps(center)`: Gaussian direction,
/// radius `eps U^{1/n}`.
pub fn sample_uniform_ball<R: Rng + ?Sized>(rng: &mut R, center: &[f64], epsilon: f64) -> Vec<f64> {
    let mut out = center.to_vec();
    sample_step_into(rng, epsilon, &mut out);
    for (o, c) in out.iter_mut().zip(center) {
        *o += c;
    }
    out
}

/// Writes a uniform vector of the open ball `B_eps(0)` into `out`.
pub(crate) fn sample_step_into<R: Rng + ?Sized>(rng: &mut R, epsilon: f64, out: &mut [f64]) {
    let n = out.len();
    loop {
        let mut r2 = 0.0;
        for o in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *o = g;
            r2 += g * g;
        }
        if r2 == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let radius = epsilon * u.powf(1.0 / n as f64);
        let scale = radius / r2.sqrt();
        let mut s2 = 0.0;
        for o in out.iter_mut() {
            *o *= scale;
            s2 += *o * *o;
        }
        if s2.sqrt() < epsilon {
            return;
        }
    }
}
