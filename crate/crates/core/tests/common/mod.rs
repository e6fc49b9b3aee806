//! Independent oracles shared by the integration tests. Nothing here calls
//! the solvers it is used to check.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use kernelcal_core::PathMeasureSpec;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex(r: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| r.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|v| v / s).collect();
    // make the row sum exactly 1
    let head: f64 = p[..m - 1].iter().sum();
    p[m - 1] = 1.0 - head;
    p
}

/// Random path-measure problem with strictly positive reference chain.
pub fn random_spec(r: &mut ChaCha8Rng, m: usize, horizon: usize) -> PathMeasureSpec {
    PathMeasureSpec {
        horizon,
        pi0: simplex(r, m),
        q: (0..m).map(|_| simplex(r, m)).collect(),
        info: (0..m).map(|_| r.random_range(0.0..2.0)).collect(),
        lambda_c: r.random_range(0.0..3.0),
        lambda_g: r.random_range(-1.0..2.0),
    }
}

/// `B Bᵀ` with Gaussian-ish entries; rank `rank`.
pub fn random_psd(r: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, rank, |_, _| r.random_range(-1.0..1.0));
    let m = &b * b.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn se(x: &[f64], y: &[f64], ell: f64, amp: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    amp * (-0.5 * d2 / (ell * ell)).exp()
}

/// GP conditioning by explicit matrix inverse.
pub fn dense_gp(
    train: &[Vec<f64>],
    y: &[f64],
    noise: &[f64],
    query: &[Vec<f64>],
    ell: f64,
    amp: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = train.len();
    let k = DMatrix::from_fn(n, n, |i, j| se(&train[i], &train[j], ell, amp) + if i == j { noise[i] } else { 0.0 });
    let kinv = k.try_inverse().expect("invertible");
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for q in query {
        let ks = DMatrix::from_fn(1, n, |_, j| se(q, &train[j], ell, amp));
        let w = &ks * &kinv;
        means.push((0..n).map(|j| w[(0, j)] * y[j]).sum());
        vars.push(se(q, q, ell, amp) - (&w * ks.transpose())[(0, 0)]);
    }
    (means, vars)
}

fn logdet(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    lu.determinant().ln()
}

/// Frozen-kernel objective written out directly:
/// `λ₂·½ln det(I + K/σ²) − λ₃·KL(N(0, K_env+σ²I) ‖ N(0, K+σ²I))`
/// on `n` equispaced points of [0, 1], squared-exponential with unit
/// amplitude.
pub struct SStar {
    pts: Vec<f64>,
    s0: DMatrix<f64>,
    logdet0: f64,
    noise: f64,
}

impl SStar {
    pub fn new(n: usize, env_ell: f64, noise: f64) -> Self {
        let pts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let s0 = DMatrix::from_fn(n, n, |i, j| se(&[pts[i]], &[pts[j]], env_ell, 1.0) + if i == j { noise } else { 0.0 });
        let logdet0 = logdet(&s0);
        Self { pts, s0, logdet0, noise }
    }

    fn gram(&self, ell: f64) -> DMatrix<f64> {
        let n = self.pts.len();
        DMatrix::from_fn(n, n, |i, j| se(&[self.pts[i]], &[self.pts[j]], ell, 1.0))
    }

    pub fn value(&self, ell: f64, l2: f64, l3: f64) -> f64 {
        let (ig, kl) = self.parts(ell);
        l2 * ig - l3 * kl
    }

    /// `(information gain, KL)` at lengthscale `ell`.
    pub fn parts(&self, ell: f64) -> (f64, f64) {
        let n = self.pts.len();
        let k = self.gram(ell);
        let ig = 0.5 * logdet(&(DMatrix::identity(n, n) + &k / self.noise));
        let s1 = &k + DMatrix::identity(n, n) * self.noise;
        let s1inv = s1.clone().try_inverse().expect("invertible");
        let kl = 0.5 * ((&s1inv * &self.s0).trace() - n as f64 + logdet(&s1) - self.logdet0);
        (ig, kl)
    }
}

/// Interior local extrema of `S*` on a uniform lengthscale grid:
/// `(location, is_max)`.
pub fn grid_extrema(s: &SStar, l2: f64, l3: f64, lo: f64, hi: f64, step: f64) -> Vec<(f64, bool)> {
    let n = ((hi - lo) / step).floor() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    let v: Vec<f64> = xs.iter().map(|x| s.value(*x, l2, l3)).collect();
    let mut out = Vec::new();
    for i in 1..xs.len() - 1 {
        if v[i] > v[i - 1] && v[i] >= v[i + 1] {
            out.push((xs[i], true));
        } else if v[i] < v[i - 1] && v[i] <= v[i + 1] {
            out.push((xs[i], false));
        }
    }
    out
}

/// `P(X ≥ w)` for `X ~ Bin(n, ½)` by direct summation.
pub fn binomial_tail(w: usize, n: usize) -> f64 {
    let mut c = 1.0f64;
    let mut p = 0.0;
    for k in 0..=n {
        if k >= w {
            p += c;
        }
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    p / 2f64.powi(n as i32)
}
