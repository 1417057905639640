//! The fractional integral `I_α f = L^{−α/2} f = ∫_0^∞ s^{α/2−1} e^{−sL} f ds`
//! on `[s_min, s_max]` in the variable `ln s`, and the L^{Q/α} → BMO_L sweep.
//!
//! The integral is split at the spectral threshold `τ_r = hx²/2`: Gauss–Legendre
//! in `ln s` below it, a trapezoid ladder with Gregory end weights above it.
//! For nonconstant V the short times use the cubic in τ through single
//! splitting steps at `0, τ_r/3, 2τ_r/3, τ_r`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::heatkernel::free::heat_kernel_raw;
use crate::heatkernel::schrodinger::{evolve, march, rho_or_inf};
use crate::heatkernel::{HeatPropagator, SampledPotential, Scheme, SplittingPlan};
use crate::hgroup::{geometric_ladder, homogeneous_dim, GridFn, GridSpec, HPoint};
use crate::potential::PotentialModel;
use crate::quad::{gauss_legendre_on, integrate};
use crate::spaces::{ball_ranges, bmo_norm, lp_norm, sampled_balls, BmoBall, BmoSampler};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracPlan {
    pub alpha: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub nodes: usize,
    /// Split times; the output reports the contribution of each time band.
    #[serde(default)]
    pub r0_sq: Option<f64>,
    #[serde(default)]
    pub rho_sq: Option<f64>,
}

impl FracPlan {
    /// Ladder from 1e-4 to 1e4 with 81 nodes.
    pub fn new(alpha: f64) -> Self {
        FracPlan { alpha, s_min: 1e-4, s_max: 1e4, nodes: 81, r0_sq: None, rho_sq: None }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let q = homogeneous_dim(n);
        if !(self.alpha > 0.0 && self.alpha < q) {
            return domain(format!("alpha must lie in (0, {q}), got {}", self.alpha));
        }
        if !(self.s_min > 0.0 && self.s_min < self.s_max && self.s_max.is_finite()) {
            return domain("the ladder needs 0 < s_min < s_max < ∞");
        }
        if self.nodes < 3 {
            return domain("the ladder needs at least 3 nodes");
        }
        Ok(())
    }

    /// Nodes `s_i` and weights `h·c_i·s_i^{α/2}` in `ln s`, with fourth-order
    /// Gregory end weights `c = 3/8, 7/6, 23/24, 1, …` (plain trapezoid below 6 nodes).
    pub fn ladder(&self) -> Vec<(f64, f64)> {
        let m = self.nodes;
        let s = geometric_ladder(self.s_min, self.s_max, m);
        let h = (self.s_max / self.s_min).ln() / (m - 1) as f64;
        s.iter()
            .enumerate()
            .map(|(i, &si)| {
                let e = i.min(m - 1 - i);
                let c = if m < 6 {
                    if e == 0 {
                        0.5
                    } else {
                        1.0
                    }
                } else {
                    [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0].get(e).copied().unwrap_or(1.0)
                };
                (si, c * h * si.powf(self.alpha / 2.0))
            })
            .collect()
    }

    /// Quadrature for `∫ s^{α/2} u(s) d(ln s)` split at `split`: Gauss–Legendre
    /// in `ln s` on `[s_min, split]` and a trapezoid ladder of the plan's
    /// density on `[split, s_max]`.
    pub fn split_rule(&self, split: f64) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let split = split.clamp(self.s_min, self.s_max);
        let a = self.alpha / 2.0;
        let mut short = Vec::new();
        if split > self.s_min {
            let (x, w) = gauss_legendre_on(SHORT_NODES, self.s_min.ln(), split.ln());
            short = x.iter().zip(&w).map(|(&l, &w)| (l.exp(), w * (a * l).exp())).collect();
        }
        let mut long = Vec::new();
        if split < self.s_max {
            let frac = (self.s_max / split).ln() / (self.s_max / self.s_min).ln();
            let m = (((self.nodes - 1) as f64 * frac).ceil() as usize + 1).max(6);
            long = FracPlan { s_min: split, nodes: m, ..self.clone() }.ladder();
        }
        (short, long)
    }

    /// Band edges from the split times, ascending.
    fn edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> =
            [self.r0_sq, self.rho_sq].into_iter().flatten().filter(|v| v.is_finite() && *v > 0.0).collect();
        e.sort_by(f64::total_cmp);
        e.dedup();
        e
    }

    /// Doubles the ladder density on the same interval.
    pub fn refined(&self) -> Self {
        FracPlan { nodes: 2 * self.nodes - 1, ..self.clone() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FracBand {
    pub lo: f64,
    pub hi: f64,
    pub sup: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FracResult {
    pub value: GridFn,
    /// Sup of the `∫_0^{s_min}` term, taken as `(2/α) s_min^{α/2} f` and
    /// included in `value`.
    pub tail_small: f64,
    /// Estimate of the omitted `∫_{s_max}^∞`.
    pub tail_large: f64,
    /// Sup difference between cubic and linear interpolation of the short
    /// times (nonconstant V only).
    pub interp_estimate: f64,
    pub bands: Vec<FracBand>,
}

const SHORT_NODES: usize = 24;

fn lagrange(nodes: &[f64], s: f64, k: usize) -> f64 {
    nodes.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &x)| (s - x) / (nodes[k] - x)).product()
}

fn band_of(edges: &[f64], s: f64) -> usize {
    edges.iter().filter(|&&e| s >= e).count()
}

/// `Σ_i w_i e^{−s_i L} f` over the ladder.
pub fn frac_apply(f: &GridFn, v: &PotentialModel, plan: &FracPlan, splitting: &SplittingPlan) -> Result<FracResult> {
    let spec = f.spec;
    plan.validate(spec.n)?;
    splitting.validate()?;
    let sv = SampledPotential::new(v, spec, None)?;
    if sv.is_zero() {
        let mass: f64 = f.values.iter().sum();
        let abs: f64 = f.values.iter().map(|v| v.abs()).sum();
        if f.exterior != 0.0 || mass.abs() > 1e-9 * abs {
            return Err(Error::Divergence("V = 0 and f has nonzero mean: the integral diverges at s = ∞".into()));
        }
    }
    let prop = HeatPropagator::new(spec);
    let res = prop.resolved_time();
    let (short, long) = plan.split_rule(res);
    let edges = plan.edges();
    let nb = edges.len() + 1;
    let mut bands: Vec<GridFn> = (0..nb).map(|_| GridFn::zeros(spec)).collect();

    let mut interp_estimate = 0.0;
    if let Some(c) = sv.constant {
        // one combined pass per band; short times are handled by the propagator
        for k in 0..nb {
            let terms: Vec<(f64, f64)> = short
                .iter()
                .chain(&long)
                .filter(|t| band_of(&edges, t.0) == k)
                .map(|&(s, w)| (w * (-c * s).exp(), s))
                .collect();
            if !terms.is_empty() {
                let part = prop.apply_combination(f, &terms)?;
                bands[k].axpy(1.0, &part);
            }
        }
    } else {
        // short times: cubic in τ through single splitting steps at 0, res/3, 2res/3, res
        if !short.is_empty() {
            let nodes = [0.0, res / 3.0, 2.0 * res / 3.0, res];
            let step = |tau: f64| -> Result<GridFn> {
                if tau == 0.0 {
                    return Ok(f.clone());
                }
                evolve(f, &sv, &SplittingPlan::new(tau, 1, Scheme::Strang)?)
            };
            let us = nodes.iter().map(|&t| step(t)).collect::<Result<Vec<_>>>()?;
            let mut gap = [0.0; 4];
            for &(s, w) in &short {
                let k = band_of(&edges, s);
                for (q, u) in us.iter().enumerate() {
                    let c = w * lagrange(&nodes, s, q);
                    bands[k].axpy(c, u);
                    gap[q] += c;
                }
                gap[0] -= w * (1.0 - s / res);
                gap[3] -= w * s / res;
            }
            let mut g = GridFn::zeros(spec);
            for (c, u) in gap.iter().zip(&us) {
                g.axpy(*c, u);
            }
            interp_estimate = g.max_abs();
        }
        if !long.is_empty() {
            let tau = splitting.tau();
            let start = |t: f64| {
                let steps = ((t / tau).ceil() as usize).max(1);
                evolve(f, &sv, &SplittingPlan::new(t, steps, splitting.scheme)?)
            };
            let times: Vec<f64> = long.iter().map(|t| t.0).collect();
            let values = march(&times, &prop, tau, start, &sv, None)?;
            for (&(s, w), u) in long.iter().zip(&values) {
                bands[band_of(&edges, s)].axpy(w, u);
            }
        }
    }

    let mut value = GridFn::zeros(spec);
    let mut out_bands = Vec::with_capacity(nb);
    for (k, b) in bands.iter().enumerate() {
        value.axpy(1.0, b);
        let lo = if k == 0 { 0.0 } else { edges[k - 1] };
        let hi = edges.get(k).copied().unwrap_or(f64::INFINITY);
        out_bands.push(FracBand { lo, hi, sup: b.max_abs() });
    }

    // ∫_0^{s_min} s^{α/2−1} e^{−sL}f ds ≈ (2/α) s_min^{α/2} f
    let alpha = plan.alpha;
    let head = 2.0 / alpha * plan.s_min.powf(alpha / 2.0);
    value.axpy(head, f);
    let tail_small = head * f.max_abs().max(f.exterior.abs());
    let tail_large = large_tail(f, v, &sv, plan)?;
    Ok(FracResult { value, tail_small, tail_large, interp_estimate, bands: out_bands })
}

/// `∫_{s_max}^∞ s^{α/2−1} |e^{−sL}f| ds`: exact damping for constant V, otherwise
/// the on-diagonal decay `H_1(0) s^{−Q/2} (1 + √s/ρ)^{−1} ‖f‖_1` with unit
/// constant and ρ taken at the identity.
fn large_tail(f: &GridFn, v: &PotentialModel, sv: &SampledPotential, plan: &FracPlan) -> Result<f64> {
    let a = plan.alpha / 2.0;
    let smax = plan.s_max;
    if let Some(c) = sv.constant.filter(|&c| c > 0.0) {
        let sup = f.max_abs().max(f.exterior.abs());
        let upper = smax + 60.0 / c;
        let r = integrate(|s: f64| s.powf(a - 1.0) * (-c * s).exp(), smax, upper, 8, 0.0, 1e-10, 4000)?;
        return Ok(sup * r.value);
    }
    let n = f.spec.n;
    let q = homogeneous_dim(n);
    let h1 = heat_kernel_raw(n, 1.0, 0.0, 0.0, 1e-12)?;
    let l1 = f.values.iter().map(|v| v.abs()).sum::<f64>() * f.spec.cell_volume();
    let rho = rho_or_inf(v, &HPoint::identity(n))?;
    let p = q / 2.0 - a;
    let tail = if rho.is_finite() {
        // (1 + √s/ρ)^{−1} ≤ ρ/√s
        rho * smax.powf(-(p + 0.5)) / (p + 0.5)
    } else {
        smax.powf(-p) / p
    };
    Ok(h1 * l1 * tail)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FracSweepRow {
    pub lp_norm: f64,
    pub bmo_norm: f64,
    pub ratio: f64,
    pub witness: Option<BmoBall>,
    /// Max over sampled balls with `r ≥ ρ(center)` of `(1/|B|)∫_B |I_α f|`, over `‖f‖_{Q/α}`.
    pub large_ball_mean_ratio: f64,
    pub large_balls: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FracSweepReport {
    pub alpha: f64,
    pub exponent: f64,
    pub rows: Vec<FracSweepRow>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `max_ratio / min_ratio` over the nonzero members.
    pub spread: f64,
}

/// Dilates of the C^∞ bump `exp(1 − 1/(1 − |x|² − t²))` about the identity:
/// `f_r(x, t) = b(x/r, t/r²)`, one per scale.
pub fn bump_family(spec: GridSpec, scales: &[f64]) -> Result<Vec<GridFn>> {
    if scales.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return domain("bump scales must be positive");
    }
    Ok(scales
        .iter()
        .map(|&r| {
            GridFn::from_fn(spec, |x, t| {
                let u = x.iter().map(|v| v * v).sum::<f64>() / (r * r) + (t / (r * r)).powi(2);
                if u < 1.0 {
                    (1.0 - 1.0 / (1.0 - u)).exp()
                } else {
                    0.0
                }
            })
        })
        .collect())
}

/// `‖I_α f‖_{BMO_L} / ‖f‖_{L^{Q/α}}` for each member of the family.
pub fn theorem14_sweep(
    v: &PotentialModel,
    family: &[GridFn],
    sampler: &BmoSampler,
    plan: &FracPlan,
    splitting: &SplittingPlan,
) -> Result<FracSweepReport> {
    let Some(first) = family.first() else {
        return domain("empty test family");
    };
    let spec = first.spec;
    plan.validate(spec.n)?;
    let exponent = homogeneous_dim(spec.n) / plan.alpha;
    let balls = sampled_balls(&spec, v, sampler)?;
    let large: Vec<_> = balls.into_iter().filter(|b| b.1 >= b.2).collect();
    let mut rows = Vec::with_capacity(family.len());
    for f in family {
        f.check_same(first)?;
        let lp = lp_norm(f, exponent)?;
        if lp == 0.0 {
            rows.push(FracSweepRow {
                lp_norm: 0.0,
                bmo_norm: 0.0,
                ratio: 0.0,
                witness: None,
                large_ball_mean_ratio: 0.0,
                large_balls: large.len(),
            });
            continue;
        }
        let i_f = frac_apply(f, v, plan, splitting)?.value;
        let bmo = bmo_norm(&i_f, v, sampler)?;
        let mut large_mean: f64 = 0.0;
        for &(c, r, _) in &large {
            let (mut sum, mut count) = (0.0, 0usize);
            for (row, lo, hi) in ball_ranges(&spec, c, r) {
                sum += i_f.values[row * spec.mt + lo..=row * spec.mt + hi].iter().map(|v| v.abs()).sum::<f64>();
                count += hi + 1 - lo;
            }
            if count > 0 {
                large_mean = large_mean.max(sum / count as f64);
            }
        }
        rows.push(FracSweepRow {
            lp_norm: lp,
            bmo_norm: bmo.norm,
            ratio: bmo.norm / lp,
            witness: bmo.worst,
            large_ball_mean_ratio: large_mean / lp,
            large_balls: large.len(),
        });
    }
    let nonzero: Vec<f64> = rows.iter().filter(|r| r.lp_norm > 0.0).map(|r| r.ratio).collect();
    let max_ratio = nonzero.iter().copied().fold(0.0, f64::max);
    let min_ratio = nonzero.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if nonzero.is_empty() { 1.0 } else { max_ratio / min_ratio };
    Ok(FracSweepReport {
        alpha: plan.alpha,
        exponent,
        rows,
        max_ratio,
        min_ratio: if nonzero.is_empty() { 0.0 } else { min_ratio },
        spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hgroup::GridSpec;

    #[test]
    fn ladder_integrates_gamma() {
        // ∫ s^{α/2−1} e^{−s} ds = Γ(α/2)
        for (alpha, gamma) in [(2.0, 1.0), (1.0, std::f64::consts::PI.sqrt()), (3.0, 0.886_226_925_452_758)] {
            let plan = FracPlan::new(alpha);
            let sum: f64 = plan.ladder().iter().map(|(s, w)| w * (-s).exp()).sum();
            let head = 2.0 / alpha * plan.s_min.powf(alpha / 2.0);
            assert!((sum + head - gamma).abs() < 1e-5, "alpha={alpha} {sum}");
        }
    }

    #[test]
    fn plan_validation() {
        assert!(FracPlan::new(0.0).validate(1).is_err());
        assert!(FracPlan::new(4.0).validate(1).is_err());
        assert!(FracPlan::new(3.9).validate(1).is_ok());
        let mut p = FracPlan::new(2.0);
        p.s_max = p.s_min;
        assert!(p.validate(1).is_err());
    }

    #[test]
    fn zero_potential_with_mass_diverges() {
        let spec = GridSpec::new(1, 2.0, 4.0, 7, 13).unwrap();
        let f = GridFn::from_fn(spec, |x, t| (-(x[0] * x[0] + x[1] * x[1] + t * t)).exp());
        let plan = FracPlan::new(2.0);
        let sp = SplittingPlan::strang(1.0, 0.125).unwrap();
        let r = frac_apply(&f, &PotentialModel::Constant { c: 0.0 }, &plan, &sp);
        assert!(matches!(r, Err(Error::Divergence(_))));
    }
}
