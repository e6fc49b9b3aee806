use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernelspace::DiscreteDomain;

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub(crate) fn mat_vec(m: &Mat2, x: &Vec2) -> Vec2 {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn inverse(m: &Mat2) -> Option<Mat2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

pub(crate) fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// Uniform translation plus linear shear: `x ← x + v + S·x` per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub velocity: Vec2,
    #[serde(default)]
    pub shear: Mat2,
}

impl Flow {
    pub fn still() -> Self {
        Self {
            velocity: [0.0, 0.0],
            shear: [[0.0; 2]; 2],
        }
    }

    pub fn speed(&self) -> f64 {
        norm(self.velocity)
    }

    pub fn step(&self, x: Vec2) -> Vec2 {
        let s = mat_vec(&self.shear, &x);
        [x[0] + self.velocity[0] + s[0], x[1] + self.velocity[1] + s[1]]
    }

    /// Affine map `x₀ ↦ A x₀ + b` taking a position at time 0 to time `t`.
    pub fn affine(&self, t: usize) -> (Mat2, Vec2) {
        let step_m = [
            [1.0 + self.shear[0][0], self.shear[0][1]],
            [self.shear[1][0], 1.0 + self.shear[1][1]],
        ];
        let mut a = [[1.0, 0.0], [0.0, 1.0]];
        let mut b = [0.0, 0.0];
        for _ in 0..t {
            a = mat_mul(&step_m, &a);
            let bb = mat_vec(&step_m, &b);
            b = [bb[0] + self.velocity[0], bb[1] + self.velocity[1]];
        }
        (a, b)
    }

    /// Pull-back of positions at time `t` to the time-0 frame.
    pub fn to_reference(&self, t: usize) -> Result<impl Fn(Vec2) -> Vec2> {
        let (a, b) = self.affine(t);
        let inv = inverse(&a).ok_or_else(|| Error::Numeric("flow map is singular".into()))?;
        Ok(move |x: Vec2| mat_vec(&inv, &sub(x, b)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: Vec2,
    pub amplitude: f64,
    pub covariance: Mat2,
}

impl Blob {
    pub fn new(center: Vec2, amplitude: f64, covariance: Mat2) -> Result<Self> {
        let c = covariance;
        let sym = (c[0][1] - c[1][0]).abs() <= 1e-12 * c[0][0].abs().max(c[1][1].abs());
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        if !(sym && c[0][0] > 0.0 && det > 0.0) {
            return Err(Error::Parameter("blob covariance must be symmetric positive definite".into()));
        }
        if !(amplitude.is_finite() && center.iter().all(|v| v.is_finite())) {
            return Err(Error::Parameter("blob amplitude and center must be finite".into()));
        }
        Ok(Self {
            center,
            amplitude,
            covariance,
        })
    }

    pub fn value(&self, x: Vec2) -> f64 {
        let d = sub(x, self.center);
        let c = &self.covariance;
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let q = (c[1][1] * d[0] * d[0] - 2.0 * c[0][1] * d[0] * d[1] + c[0][0] * d[1] * d[1]) / det;
        self.amplitude * (-0.5 * q).exp()
    }
}

/// Random-world recipe. Blobs are scattered over every point that the flow
/// carries through Ω during `span` steps, so the lake never empties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub flow: Flow,
    pub subsurface_offset: Vec2,
    /// Blobs per unit area of the sampled region.
    pub blob_density: f64,
    pub amplitude_range: (f64, f64),
    /// Range of the standard deviations along each blob's principal axes.
    pub width_range: (f64, f64),
    pub grid_n: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            flow: Flow {
                velocity: [0.06, 0.0],
                shear: [[0.0; 2]; 2],
            },
            subsurface_offset: [0.15, 0.1],
            blob_density: 8.0,
            amplitude_range: (0.5, 1.5),
            width_range: (0.06, 0.15),
            grid_n: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BloomWorld {
    #[serde(skip)]
    pub grid: Arc<DiscreteDomain>,
    pub blobs: Vec<Blob>,
    pub flow: Flow,
    pub subsurface_offset: Vec2,
    pub t: usize,
    pub rng_seed: u64,
}

impl BloomWorld {
    pub fn new(
        grid: Arc<DiscreteDomain>,
        blobs: Vec<Blob>,
        flow: Flow,
        subsurface_offset: Vec2,
        rng_seed: u64,
    ) -> Self {
        Self {
            grid,
            blobs,
            flow,
            subsurface_offset,
            t: 0,
            rng_seed,
        }
    }

    /// Blobs scattered over the region that will pass through Ω within
    /// `span` steps.
    pub fn generate(params: &WorldParams, span: usize, seed: u64) -> Result<Self> {
        let (a0, a1) = params.amplitude_range;
        let (w0, w1) = params.width_range;
        if !(a0 > 0.0 && a1 >= a0 && w0 > 0.0 && w1 >= w0 && params.blob_density >= 0.0) {
            return Err(Error::Parameter("invalid blob ranges or density".into()));
        }
        let grid = Arc::new(DiscreteDomain::unit_square(params.grid_n, params.grid_n)?);
        let (mut lo, mut hi) = ([0.0f64, 0.0f64], [1.0f64, 1.0f64]);
        for t in 0..=span {
            let back = params.flow.to_reference(t)?;
            for c in [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] {
                let p = back(c);
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
        }
        let margin = 2.0 * w1;
        for d in 0..2 {
            lo[d] -= margin;
            hi[d] += margin;
        }
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        let count = (params.blob_density * area).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blobs = Vec::with_capacity(count);
        for _ in 0..count {
            let center = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
            let amp = if a1 > a0 { rng.random_range(a0..a1) } else { a0 };
            let mut width = || if w1 > w0 { rng.random_range(w0..w1) } else { w0 };
            let (s1, s2) = (width(), width());
            let th = rng.random_range(0.0..std::f64::consts::PI);
            let (c, s) = (th.cos(), th.sin());
            let (v1, v2) = (s1 * s1, s2 * s2);
            let cov = [
                [c * c * v1 + s * s * v2, c * s * (v1 - v2)],
                [c * s * (v1 - v2), s * s * v1 + c * c * v2],
            ];
            blobs.push(Blob::new(center, amp, cov)?);
        }
        Ok(Self::new(grid, blobs, params.flow, params.subsurface_offset, seed))
    }

    pub fn surface(&self, x: Vec2) -> f64 {
        self.blobs.iter().map(|b| b.value(x)).sum()
    }

    pub fn subsurface(&self, x: Vec2) -> f64 {
        self.surface(sub(x, self.subsurface_offset))
    }

    pub fn surface_on_grid(&self) -> Vec<f64> {
        self.grid.points().iter().map(|p| self.surface([p[0], p[1]])).collect()
    }

    pub fn subsurface_on_grid(&self) -> Vec<f64> {
        self.grid.points().iter().map(|p| self.subsurface([p[0], p[1]])).collect()
    }
}

/// Advance every blob center one step along the flow.
pub fn step_environment(world: &BloomWorld) -> BloomWorld {
    let mut next = world.clone();
    for b in &mut next.blobs {
        b.center = world.flow.step(b.center);
    }
    next.t += 1;
    next
}
