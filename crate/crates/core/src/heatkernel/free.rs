//! The free heat kernel through its Fourier transform in the central variable:
//!
//! `H_s(x, t) = (1/π) ∫_0^∞ cos(λt) (λ / (π sinh 4λs))ⁿ exp(−λ coth(4λs) |x|²) dλ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::hgroup::{dilate, homogeneous_dim, koranyi_norm, HPoint};
use crate::quad::{gauss_legendre_on, integrate};

/// `(λ / (π sinh 4λs))ⁿ` with the λ → 0 limit `(4πs)^{−n}`.
#[inline]
pub fn central_amplitude(n: usize, s: f64, lambda: f64) -> f64 {
    let u = 4.0 * lambda.abs() * s;
    let ratio = if u < 1e-4 { 1.0 / (1.0 + u * u / 6.0) } else { u / u.sinh() };
    (ratio / (4.0 * PI * s)).powi(n as i32)
}

/// `λ coth(4λs)` with the limit `1/(4s)`.
#[inline]
pub fn central_beta(s: f64, lambda: f64) -> f64 {
    let u = 4.0 * lambda.abs() * s;
    if u < 1e-4 {
        (1.0 + u * u / 3.0) / (4.0 * s)
    } else {
        lambda.abs() / u.tanh()
    }
}

/// `Ĥ_s(x, λ) = ∫ H_s(x, t) e^{−iλt} dt`, real and even in λ.
#[inline]
pub fn central_transform(n: usize, s: f64, x2: f64, lambda: f64) -> f64 {
    central_amplitude(n, s, lambda) * (-central_beta(s, lambda) * x2).exp()
}

/// `∫ Ĥ_s(x, λ) dx = sechⁿ(4λs)`.
#[inline]
pub fn central_mass(n: usize, s: f64, lambda: f64) -> f64 {
    (1.0 / (4.0 * lambda * s).cosh()).powi(n as i32)
}

/// Frequency beyond which `Ĥ_s(0, λ)` has dropped below `eps` of its peak.
pub fn lambda_cutoff(n: usize, s: f64, eps: f64) -> f64 {
    // solve n (u − ln 2u) = ln(1/eps) for u = 4λs
    let target = (1.0 / eps).ln() / n as f64;
    let mut u = target + 2.0;
    for _ in 0..50 {
        u = target + (2.0 * u).ln();
    }
    u / (4.0 * s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMethod {
    OscillatoryQuadrature,
    Tabulated,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HeatKernelEval {
    pub s: f64,
    pub method: KernelMethod,
    pub tolerance: f64,
}

impl HeatKernelEval {
    pub fn new(s: f64) -> Result<Self> {
        let e = HeatKernelEval { s, method: KernelMethod::OscillatoryQuadrature, tolerance: 1e-10 };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return domain(format!("heat kernel time must be positive, got {}", self.s));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-2) {
            return domain("kernel tolerance must lie in (0, 1e-2]");
        }
        Ok(())
    }

    pub fn eval(&self, g: &HPoint) -> Result<f64> {
        self.validate()?;
        let x2: f64 = g.x.iter().map(|v| v * v).sum();
        match self.method {
            KernelMethod::OscillatoryQuadrature => heat_kernel_raw(g.n(), self.s, x2, g.t, self.tolerance),
            KernelMethod::Tabulated => Ok(KernelTable::new(g.n(), self.s, g.t.abs())?.eval(x2, g.t)),
        }
    }
}

/// Adaptive Gauss–Kronrod evaluation of `H_s` at `(|x|², t)`. The relative
/// tolerance refers to `∫|integrand|`, so far out in `t` the result carries an
/// absolute error of order `tol · H_s(x, 0)`.
pub fn heat_kernel_raw(n: usize, s: f64, x2: f64, t: f64, tol: f64) -> Result<f64> {
    if !(s > 0.0) {
        return domain(format!("heat kernel time must be positive, got {s}"));
    }
    let cut = lambda_cutoff(n, s, 1e-17);
    let panels = 8 + (cut * t.abs() / PI).ceil() as usize;
    let r = integrate(|l| (l * t).cos() * central_transform(n, s, x2, l), 0.0, cut, panels, 0.0, tol, 1 << 16)?;
    Ok((r.value / PI).max(0.0))
}

/// `H_s(g)` to relative accuracy about 1e-10 of the kernel scale.
pub fn heat_kernel_free(s: f64, g: &HPoint) -> Result<f64> {
    HeatKernelEval::new(s)?.eval(g)
}

/// Fixed-node quadrature of the λ-integral for one `s`, valid for `|t| ≤ t_max`.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub n: usize,
    pub s: f64,
    pub t_max: f64,
    lambda: Vec<f64>,
    weight: Vec<f64>,
    beta: Vec<f64>,
}

impl KernelTable {
    pub fn new(n: usize, s: f64, t_max: f64) -> Result<Self> {
        if !(s > 0.0) {
            return domain(format!("heat kernel time must be positive, got {s}"));
        }
        let cut = lambda_cutoff(n, s, 1e-17);
        // 20 Gauss nodes per panel; panels of at most a quarter period in λt
        // and a fraction of the decay length 1/(4s)
        let width = (PI / (2.0 * t_max.max(1e-12))).min(1.0 / s);
        let panels = (cut / width).ceil().max(4.0) as usize;
        let (mut lambda, mut weight, mut beta) = (Vec::new(), Vec::new(), Vec::new());
        let h = cut / panels as f64;
        for p in 0..panels {
            let (x, w) = gauss_legendre_on(20, p as f64 * h, (p + 1) as f64 * h);
            for (l, wl) in x.into_iter().zip(w) {
                weight.push(wl * central_amplitude(n, s, l) / PI);
                beta.push(central_beta(s, l));
                lambda.push(l);
            }
        }
        Ok(KernelTable { n, s, t_max, lambda, weight, beta })
    }

    pub fn eval(&self, x2: f64, t: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.lambda.len() {
            let e = -self.beta[k] * x2;
            if e < -745.0 {
                break;
            }
            acc += self.weight[k] * (self.lambda[k] * t).cos() * e.exp();
        }
        acc.max(0.0)
    }
}

/// Max over the sample of `|H_s(g) − s^{−Q/2} H_1(δ_{1/√s} g)| / H_s(g)`.
pub fn heat_kernel_scaling_check(s: f64, sample: &[HPoint]) -> Result<f64> {
    let mut worst = 0.0f64;
    for g in sample {
        let q = homogeneous_dim(g.n());
        let hs = heat_kernel_free(s, g)?;
        let h1 = heat_kernel_free(1.0, &dilate(1.0 / s.sqrt(), g)?)?;
        let dev = (hs - s.powf(-q / 2.0) * h1).abs() / hs;
        worst = worst.max(dev);
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianBoundRow {
    pub a0: f64,
    /// C(A₀) per sampled s.
    pub c_per_s: Vec<f64>,
    /// C(A₀) on the inner half of the sample (‖g‖ ≤ R/2, in √s units).
    pub c_inner: f64,
    pub stable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianBoundFit {
    pub s_grid: Vec<f64>,
    pub rows: Vec<GaussianBoundRow>,
    pub min_value: f64,
    /// Largest ladder A₀ with a stable constant, and that constant.
    pub a0: f64,
    pub c: f64,
}

/// Fits `H_s(g) ≤ C s^{−Q/2} e^{−A₀‖g‖²/s}` over `s_grid × sample`, with the
/// sample given in units of `√s`. A row is stable when C agrees across `s`
/// within 1e-6 and the full sample raises C by at most 10% over its inner half.
pub fn gaussian_bound_fit(s_grid: &[f64], sample: &[HPoint], a0_ladder: &[f64]) -> Result<GaussianBoundFit> {
    if sample.is_empty() || s_grid.is_empty() {
        return domain("gaussian_bound_fit needs a non-empty sample");
    }
    let n = sample[0].n();
    let q = homogeneous_dim(n);
    let r_max = sample.iter().map(koranyi_norm).fold(0.0, f64::max);
    // (scaled norm², s^{Q/2} H_s) per (s, g)
    let mut table = Vec::with_capacity(s_grid.len());
    let mut min_value = f64::INFINITY;
    for &s in s_grid {
        let vals = crate::exec::map_range(sample.len(), |i| -> Result<(f64, f64)> {
            let g = dilate(s.sqrt(), &sample[i])?;
            let h = heat_kernel_free(s, &g)?;
            Ok((koranyi_norm(&sample[i]), h * s.powf(q / 2.0)))
        });
        let vals: Vec<(f64, f64)> = vals.into_iter().collect::<Result<_>>()?;
        for v in &vals {
            min_value = min_value.min(v.1);
        }
        table.push(vals);
    }
    let mut rows = Vec::new();
    for &a0 in a0_ladder {
        let c_of = |vals: &[(f64, f64)], r: f64| {
            vals.iter().filter(|v| v.0 <= r).map(|v| v.1 * (a0 * v.0 * v.0).exp()).fold(0.0, f64::max)
        };
        let c_per_s: Vec<f64> = table.iter().map(|v| c_of(v, f64::INFINITY)).collect();
        let c_inner = c_of(&table[0], 0.5 * r_max);
        let c0 = c_per_s[0];
        let s_indep = c_per_s.iter().all(|c| (c - c0).abs() <= 1e-6 * c0);
        let stable = c0.is_finite() && s_indep && c0 <= 1.1 * c_inner;
        rows.push(GaussianBoundRow { a0, c_per_s, c_inner, stable });
    }
    let best = rows.iter().filter(|r| r.stable).max_by(|a, b| a.a0.total_cmp(&b.a0));
    let (a0, c) = best.map_or((0.0, f64::INFINITY), |r| (r.a0, r.c_per_s[0]));
    Ok(GaussianBoundFit { s_grid: s_grid.to_vec(), rows, min_value, a0, c })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_value() {
        let h = heat_kernel_free(1.0, &HPoint::identity(1)).unwrap();
        assert!((h - 1.0 / 64.0).abs() < 1e-12, "{h}");
    }

    #[test]
    fn table_matches_adaptive() {
        let tab = KernelTable::new(1, 0.5, 6.0).unwrap();
        for &(x2, t) in &[(0.0, 0.0), (0.3, 1.1), (2.0, -3.5), (0.1, 6.0)] {
            let a = heat_kernel_raw(1, 0.5, x2, t, 1e-12).unwrap();
            assert!((tab.eval(x2, t) - a).abs() < 1e-12, "{x2} {t}");
        }
    }

    #[test]
    fn cutoff_is_where_amplitude_dies() {
        let l = lambda_cutoff(1, 1.0, 1e-17);
        assert!(central_amplitude(1, 1.0, l) / central_amplitude(1, 1.0, 0.0) < 1.01e-17);
    }
}
