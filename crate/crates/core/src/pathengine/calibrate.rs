use serde::Serialize;

use super::transfer::solve;
use super::PathMeasureSpec;
use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const FD_STEP: f64 = 1e-5;
const RESIDUAL_TOL: f64 = 1e-10;

/// Multipliers reproducing target expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub lambda_c: f64,
    pub lambda_g: f64,
    pub iterations: usize,
    /// `(E[C] − target_c, E[G] − target_g)` at the returned multipliers.
    pub residual: (f64, f64),
}

/// Closed ranges `([min C, max C], [min G, max G])` over paths the reference
/// chain can produce.
pub fn achievable_ranges(spec: &PathMeasureSpec) -> Result<((f64, f64), (f64, f64))> {
    spec.validate()?;
    let m = spec.m();
    let inf = f64::INFINITY;
    let mut c_lo: Vec<f64> = (0..m).map(|k| if spec.pi0[k] > 0.0 { 0.0 } else { inf }).collect();
    let mut c_hi: Vec<f64> = c_lo.iter().map(|v| if v.is_finite() { 0.0 } else { -inf }).collect();
    let mut g_lo: Vec<f64> = (0..m)
        .map(|k| if spec.pi0[k] > 0.0 { spec.info[k] } else { inf })
        .collect();
    let mut g_hi: Vec<f64> = (0..m)
        .map(|k| if spec.pi0[k] > 0.0 { spec.info[k] } else { -inf })
        .collect();
    for _ in 0..spec.horizon {
        let mut nc_lo = vec![inf; m];
        let mut nc_hi = vec![-inf; m];
        let mut ng_lo = vec![inf; m];
        let mut ng_hi = vec![-inf; m];
        for j in 0..m {
            if !c_lo[j].is_finite() {
                continue;
            }
            for k in 0..m {
                if spec.q[j][k] <= 0.0 {
                    continue;
                }
                let s = if j != k { 1.0 } else { 0.0 };
                nc_lo[k] = nc_lo[k].min(c_lo[j] + s);
                nc_hi[k] = nc_hi[k].max(c_hi[j] + s);
                ng_lo[k] = ng_lo[k].min(g_lo[j] + spec.info[k]);
                ng_hi[k] = ng_hi[k].max(g_hi[j] + spec.info[k]);
            }
        }
        c_lo = nc_lo;
        c_hi = nc_hi;
        g_lo = ng_lo;
        g_hi = ng_hi;
    }
    let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
    Ok((
        (fold(&c_lo, f64::min, inf), fold(&c_hi, f64::max, -inf)),
        (fold(&g_lo, f64::min, inf), fold(&g_hi, f64::max, -inf)),
    ))
}

/// Find `(λ_C, λ_G)` whose Gibbs measure has `E[C] = target_c` and
/// `E[G] = target_g`.
///
/// Damped Newton on the convex dual `ln Z(λ) + λ_C·t_C − λ_G·t_G`, started at
/// `(0, 0)`, with a finite-difference Jacobian of the expectations and step
/// halving whenever a full step fails to decrease the dual. Targets outside
/// the achievable ranges are rejected up front. The multipliers of
/// `base` are ignored. `λ_C` may come back negative for targets above the
/// reference switching rate.
pub fn calibrate_multipliers(base: &PathMeasureSpec, target_c: f64, target_g: f64) -> Result<Calibration> {
    base.validate()?;
    let (c_range, g_range) = achievable_ranges(base)?;
    let infeasible = || Error::Infeasible {
        target_c,
        target_g,
        c_range,
        g_range,
    };
    if !(target_c.is_finite() && target_g.is_finite()) {
        return Err(infeasible());
    }
    // A constant statistic pins its multiplier to 0 and must match exactly.
    let mut free = [true, true];
    for (i, (range, target)) in [(c_range, target_c), (g_range, target_g)].into_iter().enumerate() {
        let width = range.1 - range.0;
        if width <= 1e-12 * range.0.abs().max(1.0) {
            if (target - range.0).abs() > 1e-9 * range.0.abs().max(1.0) {
                return Err(infeasible());
            }
            free[i] = false;
        } else if !(target > range.0 && target < range.1) {
            return Err(infeasible());
        }
    }

    let targets = [target_c, target_g];
    let eval = |lam: [f64; 2]| -> Result<([f64; 2], f64)> {
        let g = solve(&base.with_multipliers(lam[0], lam[1]))?;
        let grad = [target_c - g.expected_switch_cost, g.expected_info - target_g];
        let dual = g.ln_z + lam[0] * target_c - lam[1] * target_g;
        Ok((grad, dual))
    };
    let converged = |grad: &[f64; 2]| {
        (0..2).all(|i| !free[i] || grad[i].abs() <= RESIDUAL_TOL * targets[i].abs().max(1.0))
    };
    let finish = |lam: [f64; 2], grad: [f64; 2], it: usize| Calibration {
        lambda_c: lam[0],
        lambda_g: lam[1],
        iterations: it,
        residual: (-grad[0], grad[1]),
    };

    let mut lam = [0.0, 0.0];
    let (mut grad, mut dual) = eval(lam)?;
    for it in 0..MAX_ITER {
        if converged(&grad) {
            return Ok(finish(lam, grad, it));
        }
        // Hessian of the dual = Jacobian of its gradient.
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            if !free[i] {
                h[i][i] = 1.0;
                continue;
            }
            let mut up = lam;
            let mut dn = lam;
            up[i] += FD_STEP;
            dn[i] -= FD_STEP;
            let (gu, _) = eval(up)?;
            let (gd, _) = eval(dn)?;
            for r in 0..2 {
                if free[r] {
                    h[r][i] = (gu[r] - gd[r]) / (2.0 * FD_STEP);
                }
            }
        }
        let off = 0.5 * (h[0][1] + h[1][0]);
        h[0][1] = off;
        h[1][0] = off;
        let g = [
            if free[0] { grad[0] } else { 0.0 },
            if free[1] { grad[1] } else { 0.0 },
        ];
        let det = h[0][0] * h[1][1] - h[0][1] * h[0][1];
        let pd = h[0][0] > 0.0 && det > 1e-14 * (h[0][0] * h[1][1]).abs().max(1e-300);
        let dir = if pd {
            [
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            ]
        } else {
            [-g[0], -g[1]]
        };
        let slope = g[0] * dir[0] + g[1] * dir[1];
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = [lam[0] + step * dir[0], lam[1] + step * dir[1]];
            if let Ok((tg, td)) = eval(trial) {
                // Close to the optimum the dual stops resolving its own
                // decrease; a smaller gradient is then the better signal.
                let sufficient = td <= dual + 1e-4 * step * slope;
                let flatter = norm(&tg) < norm(&grad) && td <= dual + 1e-12 * dual.abs().max(1.0);
                if td.is_finite() && (sufficient || flatter) {
                    lam = trial;
                    grad = tg;
                    dual = td;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if converged(&grad) {
        return Ok(finish(lam, grad, MAX_ITER));
    }
    Err(Error::Numeric(format!(
        "calibration stalled at (λ_C, λ_G) = ({}, {}) with residual ({:e}, {:e})",
        lam[0], lam[1], -grad[0], grad[1]
    )))
}

fn norm(g: &[f64; 2]) -> f64 {
    g[0].hypot(g[1])
}
