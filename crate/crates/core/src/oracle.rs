//! Monte Carlo reference: horizontal Brownian motion on H^n generated by
//! Δ_{H^n}, with Feynman–Kac weights `exp(−∫V)`, and kernel density estimates
//! of the endpoint law (the heat kernel `H_s(0, ·)` or `K_s(0, ·)`).
//!
//! The central increment `2Σ(ξ_{n+j}dξ_j − ξ_j dξ_{n+j})` has integrands
//! independent of their own drivers, so the Itô and Stratonovich integrals
//! coincide and plain Euler–Maruyama is consistent.

use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::hgroup::HPoint;
use crate::potential::PotentialModel;

/// Upper limit on `paths·steps`.
pub const MAX_BUDGET: f64 = 1e11;
const CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McPlan {
    pub n: usize,
    pub paths: usize,
    pub steps: usize,
    pub s: f64,
    pub seed: u64,
    /// KDE smoothing lengths (horizontal, central).
    pub bandwidth: [f64; 2],
}

impl McPlan {
    /// 10⁶ paths × 10³ steps.
    pub fn new(n: usize, s: f64, seed: u64) -> Self {
        McPlan { n, paths: 1_000_000, steps: 1000, s, seed, bandwidth: [0.25, 0.3] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.paths == 0 || self.steps == 0 {
            return domain("n, paths and steps must be positive");
        }
        if (self.paths as f64) * (self.steps as f64) > MAX_BUDGET {
            return domain(format!("paths·steps exceeds the budget {MAX_BUDGET:e}"));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return domain("terminal time must be positive");
        }
        if !self.bandwidth.iter().all(|b| *b > 0.0 && b.is_finite()) {
            return domain("bandwidths must be positive");
        }
        Ok(())
    }
}

/// Weighted endpoints `(x, t)` of the simulated paths started at the identity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McSample {
    pub plan: McPlan,
    /// Horizontal endpoints, `2n` per path.
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub weights: Vec<f64>,
}

impl McSample {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Euler–Maruyama paths; each chunk of paths draws from its own ChaCha8
/// stream, so the sample is independent of the thread count.
pub fn simulate_paths(plan: &McPlan, v: Option<&PotentialModel>) -> Result<McSample> {
    plan.validate()?;
    if let Some(v) = v {
        v.validate()?;
    }
    let d = 2 * plan.n;
    let n = plan.n;
    let dt = plan.s / plan.steps as f64;
    let sd = (2.0 * dt).sqrt();
    let constant = v.and_then(|v| v.as_constant());
    let chunks = plan.paths.div_ceil(CHUNK);
    let parts = crate::exec::map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(c as u64);
        let count = CHUNK.min(plan.paths - c * CHUNK);
        let mut xs = Vec::with_capacity(count * d);
        let mut ts = Vec::with_capacity(count);
        let mut ws = Vec::with_capacity(count);
        let mut xi = vec![0.0; d];
        let mut dxi = vec![0.0; d];
        for _ in 0..count {
            xi.iter_mut().for_each(|v| *v = 0.0);
            let mut t = 0.0;
            let mut action = 0.0;
            for _ in 0..plan.steps {
                if let (Some(v), None) = (v, constant) {
                    action += v.value(&xi, t) * dt;
                }
                for q in dxi.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *q = sd * z;
                }
                let mut area = 0.0;
                for j in 0..n {
                    area += xi[n + j] * dxi[j] - xi[j] * dxi[n + j];
                }
                t += 2.0 * area;
                for (a, b) in xi.iter_mut().zip(&dxi) {
                    *a += b;
                }
            }
            xs.extend_from_slice(&xi);
            ts.push(t);
            ws.push(match (v, constant) {
                (None, _) => 1.0,
                (Some(_), Some(c)) => (-c * plan.s).exp(),
                (Some(_), None) => (-action).exp(),
            });
        }
        (xs, ts, ws)
    });
    let mut sample = McSample {
        plan: plan.clone(),
        x: Vec::with_capacity(plan.paths * d),
        t: Vec::with_capacity(plan.paths),
        weights: Vec::with_capacity(plan.paths),
    };
    for (xs, ts, ws) in parts {
        sample.x.extend(xs);
        sample.t.extend(ts);
        sample.weights.extend(ws);
    }
    Ok(sample)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KdeEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// `(Σk)²/Σk²` over the kernel contributions.
    pub effective_samples: f64,
    pub warning: Option<String>,
}

/// Below this many effective samples the estimate carries a variance warning.
pub const MIN_EFFECTIVE: f64 = 100.0;

/// Weighted density estimate of the endpoint law at `at`, with the
/// fourth-order product kernel `Π (3 − u²)/2 · φ(u)` (bias O(b⁴)).
pub fn kde_density(sample: &McSample, at: &HPoint) -> Result<KdeEstimate> {
    let d = 2 * sample.plan.n;
    if at.x.len() != d {
        return Err(crate::Error::Dimension(at.n(), sample.plan.n));
    }
    let m = sample.len();
    if m < 2 {
        return domain("a density estimate needs at least two paths");
    }
    let [bx, bt] = sample.plan.bandwidth;
    let norm = (2.0 * PI).powf(-(d as f64 + 1.0) / 2.0) / (bx.powi(d as i32) * bt);
    let contrib = crate::exec::map_range(m, |i| {
        let u2 = (sample.t[i] - at.t).powi(2) / (bt * bt);
        let (mut e, mut poly) = (u2, 0.5 * (3.0 - u2));
        for q in 0..d {
            let u2 = (sample.x[i * d + q] - at.x[q]).powi(2) / (bx * bx);
            e += u2;
            poly *= 0.5 * (3.0 - u2);
        }
        sample.weights[i] * norm * poly * (-0.5 * e).exp()
    });
    let sum = crate::exec::pairwise_sum(&contrib);
    let sq: Vec<f64> = contrib.iter().map(|k| k * k).collect();
    let sum_sq = crate::exec::pairwise_sum(&sq);
    let mf = m as f64;
    let mean = sum / mf;
    let var = ((sum_sq / mf - mean * mean) * mf / (mf - 1.0)).max(0.0);
    let effective = if sum_sq > 0.0 { sum * sum / sum_sq } else { 0.0 };
    let warning = (effective < MIN_EFFECTIVE).then(|| {
        let msg = format!("only {effective:.0} effective samples near the evaluation point");
        warn!("{msg}");
        msg
    });
    Ok(KdeEstimate { estimate: mean, stderr: (var / mf).sqrt(), effective_samples: effective, warning })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> McPlan {
        McPlan { n: 1, paths: 5000, steps: 50, s: 1.0, seed, bandwidth: [0.3, 0.4] }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let a = simulate_paths(&small(7), None).unwrap();
        let b = simulate_paths(&small(7), None).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.t, b.t);
        let c = simulate_paths(&small(8), None).unwrap();
        assert_ne!(a.t, c.t);
    }

    #[test]
    fn constant_potential_weight_is_exact() {
        let v = PotentialModel::Constant { c: 1.5 };
        let s = simulate_paths(&small(1), Some(&v)).unwrap();
        assert!(s.weights.iter().all(|&w| w == (-1.5f64).exp()));
    }

    #[test]
    fn plan_validation() {
        let mut p = small(0);
        p.bandwidth = [0.0, 1.0];
        assert!(p.validate().is_err());
        let mut p = small(0);
        p.paths = usize::MAX / 2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sparse_sample_warns() {
        let s = simulate_paths(&McPlan { paths: 50, ..small(3) }, None).unwrap();
        let k = kde_density(&s, &HPoint::new(vec![5.0, 5.0], 0.0).unwrap()).unwrap();
        assert!(k.warning.is_some());
    }
}
