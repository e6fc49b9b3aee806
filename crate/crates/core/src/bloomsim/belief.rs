use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::world::{sub, Flow, Vec2};
use crate::error::{Error, Result};
use crate::kernelspace::KernelSpec;

pub const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Surface,
    Subsurface,
}

/// A place and time where a channel can be read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub pos: Vec2,
    pub channel: Channel,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub site: Site,
    pub value: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    latents: Vec<Vec<f64>>,
}

/// GP belief over one latent surface field in the time-0 frame.
///
/// Each channel reading is mapped to the latent point it measures: the
/// subsurface at `x` reads the surface at `x − offset`, and positions at time
/// `t` are pulled back along the (known) flow.
#[derive(Debug, Clone)]
pub struct Belief {
    kernels: Vec<KernelSpec>,
    kernel_id: usize,
    observations: Vec<Observation>,
    flow: Flow,
    offset: Vec2,
    cache: Option<Factor>,
    jitter_events: usize,
}

impl Belief {
    pub fn new(kernels: Vec<KernelSpec>, kernel_id: usize, flow: Flow, offset: Vec2) -> Result<Self> {
        if kernels.is_empty() || kernel_id >= kernels.len() {
            return Err(Error::Parameter("kernel id outside the family".into()));
        }
        for k in &kernels {
            k.validate()?;
            if matches!(k, KernelSpec::ExplicitMatrix { .. }) {
                return Err(Error::Parameter("belief kernels must be parametric".into()));
            }
        }
        Ok(Self {
            kernels,
            kernel_id,
            observations: Vec::new(),
            flow,
            offset,
            cache: None,
            jitter_events: 0,
        })
    }

    pub fn kernel_id(&self) -> usize {
        self.kernel_id
    }

    pub fn kernels(&self) -> &[KernelSpec] {
        &self.kernels
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn jitter_events(&self) -> usize {
        self.jitter_events
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn set_kernel(&mut self, id: usize) -> Result<()> {
        if id >= self.kernels.len() {
            return Err(Error::Parameter(format!("kernel id {id} outside the family")));
        }
        if id != self.kernel_id {
            self.kernel_id = id;
            self.cache = None;
        }
        Ok(())
    }

    pub fn observe(&mut self, obs: Observation) -> Result<()> {
        if !(obs.noise_var.is_finite() && obs.noise_var > 0.0 && obs.value.is_finite()) {
            return Err(Error::Data("observation needs a finite value and noise > 0".into()));
        }
        self.observations.push(obs);
        self.cache = None;
        Ok(())
    }

    /// Latent coordinates read by each site.
    pub fn latents(&self, sites: &[Site]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(sites.len());
        let mut cached: Option<(usize, Box<dyn Fn(Vec2) -> Vec2>)> = None;
        for s in sites {
            if cached.as_ref().map(|c| c.0) != Some(s.t) {
                cached = Some((s.t, Box::new(self.flow.to_reference(s.t)?)));
            }
            let back = &cached.as_ref().expect("set above").1;
            let p = match s.channel {
                Channel::Surface => s.pos,
                Channel::Subsurface => sub(s.pos, self.offset),
            };
            let r = back(p);
            out.push(vec![r[0], r[1]]);
        }
        Ok(out)
    }

    fn ensure_factor(&mut self) -> Result<()> {
        if self.cache.is_none() {
            let (f, jittered) = self.build_factor(self.kernel_id)?;
            if jittered {
                self.jitter_events += 1;
            }
            self.cache = Some(f);
        }
        Ok(())
    }

    fn build_factor(&self, kernel_id: usize) -> Result<(Factor, bool)> {
        let spec = &self.kernels[kernel_id];
        let sites: Vec<Site> = self.observations.iter().map(|o| o.site).collect();
        let latents = self.latents(&sites)?;
        let mut k = spec.gram_points(&latents)?;
        for (i, o) in self.observations.iter().enumerate() {
            k[(i, i)] += o.noise_var;
        }
        let y = DVector::from_iterator(self.observations.len(), self.observations.iter().map(|o| o.value));
        let (chol, jittered) = match Cholesky::new(k.clone()) {
            Some(c) => (c, false),
            None => {
                log::warn!(
                    "observation covariance not positive definite ({} points); adding jitter {JITTER:e}",
                    latents.len()
                );
                let n = k.nrows();
                let c = Cholesky::new(k + DMatrix::identity(n, n) * JITTER)
                    .ok_or_else(|| Error::Numeric("observation covariance singular after jitter".into()))?;
                (c, true)
            }
        };
        let alpha = chol.solve(&y);
        Ok((Factor { chol, alpha, latents }, jittered))
    }

    fn posterior_with(
        &self,
        f: &Factor,
        spec: &KernelSpec,
        sites: &[Site],
        full: bool,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let q = self.latents(sites)?;
        let prior = spec.gram_points(&q)?;
        if f.latents.is_empty() {
            return Ok((DVector::zeros(sites.len()), prior));
        }
        let kx = spec.cross(&f.latents, &q)?;
        let mean = kx.transpose() * &f.alpha;
        let v = f
            .chol
            .l_dirty()
            .solve_lower_triangular(&kx)
            .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
        let cov = if full {
            prior - v.transpose() * &v
        } else {
            let mut c = DMatrix::zeros(sites.len(), sites.len());
            for j in 0..sites.len() {
                c[(j, j)] = prior[(j, j)] - v.column(j).norm_squared();
            }
            c
        };
        Ok((mean, cov))
    }

    /// Posterior mean and variance of the channel readings at `sites`.
    /// Variances are clipped at 0 against rounding.
    pub fn posterior(&mut self, sites: &[Site]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.ensure_factor()?;
        let f = self.cache.as_ref().expect("ensured");
        let (mean, cov) = self.posterior_with(f, &self.kernels[self.kernel_id], sites, false)?;
        Ok((
            mean.iter().copied().collect(),
            (0..sites.len()).map(|i| cov[(i, i)].max(0.0)).collect(),
        ))
    }

    /// Joint posterior covariance at `sites` under the current kernel, or
    /// under `kernel_id` when given.
    pub fn posterior_cov(&mut self, sites: &[Site], kernel_id: Option<usize>) -> Result<DMatrix<f64>> {
        let id = kernel_id.unwrap_or(self.kernel_id);
        if id >= self.kernels.len() {
            return Err(Error::Parameter(format!("kernel id {id} outside the family")));
        }
        let (_, cov) = if id == self.kernel_id {
            self.ensure_factor()?;
            let f = self.cache.as_ref().expect("ensured");
            self.posterior_with(f, &self.kernels[id], sites, true)?
        } else {
            let (f, _) = self.build_factor(id)?;
            self.posterior_with(&f, &self.kernels[id], sites, true)?
        };
        Ok(crate::linalg::symmetrize(&cov))
    }
}

/// `½ ln det(I + D^{-½} C D^{-½})` for a posterior covariance `C` and
/// per-site noise variances `D`.
pub fn design_info(cov: &DMatrix<f64>, noise: &[f64]) -> Result<f64> {
    let n = cov.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let s: Vec<f64> = noise.iter().map(|v| 1.0 / v.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| cov[(i, j)] * s[i] * s[j]);
    crate::infogeom::info_gain_unchecked(&scaled, 1.0).map(|v| v.max(0.0))
}
