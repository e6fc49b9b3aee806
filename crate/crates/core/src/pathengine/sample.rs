use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::transfer::solve;
use super::{PathMeasureSpec, Trajectory};
use crate::error::{Error, Result};

/// Draw `n` paths by forward filtering, backward sampling.
///
/// The output is a pure function of `(spec, n, seed)`.
pub fn sample_paths(spec: &PathMeasureSpec, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Parameter("sample count must be >= 1".into()));
    }
    let g = solve(spec)?;
    let m = spec.m();
    let len = spec.horizon + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logits = vec![0.0; m];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut states = vec![0usize; len];
        for (k, l) in logits.iter_mut().enumerate() {
            *l = g.log_alpha[(len - 1, k)];
        }
        states[len - 1] = draw(&logits, &mut rng);
        for t in (0..len - 1).rev() {
            let next = states[t + 1];
            for (j, l) in logits.iter_mut().enumerate() {
                *l = g.log_alpha[(t, j)] + g.log_transfer[(j, next)];
            }
            states[t] = draw(&logits, &mut rng);
        }
        out.push(Trajectory::new(states));
    }
    Ok(out)
}

fn draw<R: Rng>(logits: &[f64], rng: &mut R) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let spec = PathMeasureSpec::uniform(5, vec![0.0, 1.0, 0.4], 0.3, 0.6);
        let a = sample_paths(&spec, 1, 42).unwrap();
        let b = sample_paths(&spec, 1, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].states.len(), 6);
    }

    #[test]
    fn heavy_switch_cost_gives_constant_paths() {
        let spec = PathMeasureSpec::uniform(8, vec![0.0, 1.0], 1e3, 0.5);
        for p in sample_paths(&spec, 500, 7).unwrap() {
            assert_eq!(p.switch_count(), 0);
        }
    }

    #[test]
    fn never_samples_zero_probability_transitions() {
        let spec = PathMeasureSpec {
            horizon: 4,
            pi0: vec![1.0, 0.0],
            q: vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            info: vec![1.0, 0.0],
            lambda_c: 0.0,
            lambda_g: 2.0,
        };
        for p in sample_paths(&spec, 1000, 3).unwrap() {
            assert_eq!(p.states[0], 0);
            assert!(p.states.windows(2).all(|w| !(w[0] == 1 && w[1] == 0)));
        }
    }

    #[test]
    fn zero_samples_rejected() {
        let spec = PathMeasureSpec::uniform(2, vec![0.0, 1.0], 0.0, 0.0);
        assert!(sample_paths(&spec, 0, 1).is_err());
    }
}
