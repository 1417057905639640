//! The Poisson semigroup `e^{−s√L}` by subordination,
//! `e^{−s√L} = π^{−1/2} ∫_0^∞ u^{−1/2} e^{−u} e^{−(s²/4u)L} du`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::heatkernel::propagator::free_column;
use crate::heatkernel::schrodinger::{column_with, evolve, march, rho_or_inf, BoundRow, KernelBoundFit, KernelSample};
use crate::heatkernel::{HeatPropagator, SampledPotential, SplittingPlan};
use crate::hgroup::{dist, homogeneous_dim, GridFn, GridSpec, HPoint};
use crate::potential::PotentialModel;
use crate::quad::gauss_laguerre_half;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    /// Trapezoid rule in `v = ln u`; the mass below the first node is lumped
    /// into it, so the weights sum to √π exactly.
    LogTrapezoid,
    /// Generalized Gauss–Laguerre with exponent −1/2.
    GaussLaguerre,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubordinationRule {
    pub kind: RuleKind,
    /// Increasing nodes `u_k`.
    pub nodes: Vec<f64>,
    /// Weights for `u^{−1/2} e^{−u} du`.
    pub weights: Vec<f64>,
}

/// Smallest `a = s²c/4` for which the default rule is designed.
pub const DEFAULT_A_MIN: f64 = 1e-2;

impl SubordinationRule {
    /// Trapezoid rule in `ln u` on `[ln(a_min/ln(1/ε)), ln ln(1/ε)]`, with
    /// `ε = exp(−π²/h)` the discretization error for step `h`; the interval
    /// and `h` are solved for jointly.
    pub fn log_trapezoid(m: usize, a_min: f64) -> Result<Self> {
        if m < 4 {
            return domain(format!("subordination needs at least 4 nodes, got {m}"));
        }
        if !(a_min > 0.0) {
            return domain("a_min must be positive");
        }
        let mut eps: f64 = 1e-8;
        let mut hv = 0.0;
        for _ in 0..100 {
            let ll = (1.0 / eps).ln();
            let len = ll.ln() + (ll / a_min).ln();
            hv = len / (m - 1) as f64;
            eps = (-PI * PI / hv).exp();
        }
        let ll = (1.0 / eps).ln();
        let v_min = (a_min / ll).ln();
        let nodes: Vec<f64> = (0..m).map(|k| (v_min + k as f64 * hv).exp()).collect();
        let mut weights: Vec<f64> = nodes.iter().map(|&u| hv * u.sqrt() * (-u).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights[0] += PI.sqrt() - total;
        Ok(SubordinationRule { kind: RuleKind::LogTrapezoid, nodes, weights })
    }

    pub fn gauss_laguerre(m: usize) -> Result<Self> {
        if m < 4 {
            return domain(format!("subordination needs at least 4 nodes, got {m}"));
        }
        let (nodes, weights) = gauss_laguerre_half(m);
        let rule = SubordinationRule { kind: RuleKind::GaussLaguerre, nodes, weights };
        if rule.self_test() > 1e-10 {
            return Err(Error::Tolerance("Gauss–Laguerre rule failed its weight test".into()));
        }
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `|Σ w_k / √π − 1|`.
    pub fn self_test(&self) -> f64 {
        (self.weights.iter().sum::<f64>() / PI.sqrt() - 1.0).abs()
    }

    /// Heat times `t_k = s²/(4u_k)`.
    pub fn times(&self, s: f64) -> Vec<f64> {
        self.nodes.iter().map(|u| s * s / (4.0 * u)).collect()
    }

    /// `(π^{−1/2} w_k, t_k)` pairs.
    pub fn terms(&self, s: f64) -> Vec<(f64, f64)> {
        self.weights.iter().zip(self.times(s)).map(|(w, t)| (w / PI.sqrt(), t)).collect()
    }

    /// The rule applied to the scalar semigroup `e^{−tc}`; approximates `e^{−s√c}`.
    pub fn scalar(&self, s: f64, c: f64) -> f64 {
        self.terms(s).iter().map(|(w, t)| w * (-t * c).exp()).sum()
    }
}

/// Default rule: log-trapezoid with `M` nodes.
pub fn subordination_rule(m: usize) -> Result<SubordinationRule> {
    SubordinationRule::log_trapezoid(m, DEFAULT_A_MIN)
}

/// `π^{−1/2} Σ_k w_k e^{−t_k L} f` with `t_k = s²/(4u_k)`.
pub fn poisson_apply(
    f: &GridFn,
    v: &PotentialModel,
    s: f64,
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<GridFn> {
    if !(s >= 0.0 && s.is_finite()) {
        return domain(format!("Poisson height must be nonnegative, got {s}"));
    }
    if s == 0.0 {
        return Ok(f.clone());
    }
    let sv = SampledPotential::new(v, f.spec, None)?;
    poisson_with(f, &sv, s, rule, plan)
}

pub(crate) fn poisson_with(
    f: &GridFn,
    sv: &SampledPotential,
    s: f64,
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<GridFn> {
    let prop = HeatPropagator::new(f.spec);
    let terms = rule.terms(s);
    if let Some(c) = sv.constant {
        let damped: Vec<(f64, f64)> = terms.iter().map(|&(w, t)| (w * (-c * t).exp(), t)).collect();
        return prop.apply_combination(f, &damped);
    }
    if f.exterior != 0.0 {
        return Err(Error::Boundary("a nonconstant potential needs zero exterior data".into()));
    }
    let times: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let tau = plan.tau();
    let start = |t: f64| {
        let steps = ((t / tau).ceil() as usize).max(1);
        evolve(f, sv, &SplittingPlan::new(t, steps, plan.scheme)?)
    };
    let ladder = march(&times, &prop, tau, start, sv, Some(f))?;
    let mut out = GridFn::zeros(f.spec);
    for ((w, _), u) in terms.iter().zip(&ladder) {
        out.axpy(*w, u);
    }
    Ok(out)
}

/// Column `g ↦ P_s(g, h₀)` as the subordinated combination of heat columns.
pub fn poisson_kernel_column(
    v: &PotentialModel,
    s: f64,
    h0: &HPoint,
    spec: GridSpec,
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<GridFn> {
    let idx = spec.nearest(h0).ok_or(Error::OutOfDomain)?;
    let h0 = spec.point(idx);
    let sv = SampledPotential::new(v, spec, None)?;
    column_from(&sv, sv.values[idx], s, &h0, spec, rule, plan)
}

pub(crate) fn column_from(
    sv: &SampledPotential,
    vh0: f64,
    s: f64,
    h0: &HPoint,
    spec: GridSpec,
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<GridFn> {
    if !(s > 0.0) {
        return domain(format!("Poisson height must be positive, got {s}"));
    }
    let terms = rule.terms(s);
    let mut out = GridFn::zeros(spec);
    if let Some(c) = sv.constant {
        let cols = crate::exec::map_range(terms.len(), |k| free_column(spec, terms[k].1, &h0.x, h0.t));
        for ((w, t), col) in terms.iter().zip(cols) {
            out.axpy(w * (-c * t).exp(), &col?);
        }
        return Ok(out);
    }
    let prop = HeatPropagator::new(spec);
    let tau = plan.tau();
    let start = |t: f64| {
        let steps = ((t / tau).ceil() as usize).max(1);
        column_with(sv, vh0, t, h0, spec, &SplittingPlan::new(t, steps, plan.scheme)?)
    };
    let times: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let cols = march(&times, &prop, tau, start, sv, None)?;
    for ((w, _), col) in terms.iter().zip(&cols) {
        out.axpy(*w, col);
    }
    Ok(out)
}

fn value_at(f: &GridFn, p: &HPoint) -> f64 {
    match f.spec.nearest(p) {
        Some(i) if f.spec.point(i) == *p => f.values[i],
        _ => f.interp_cubic(&p.x, p.t),
    }
}

/// Columns for each distinct `(h, s)` of a sample, in first-seen order.
fn sample_columns(
    sv: &SampledPotential,
    keys: &[(HPoint, f64)],
    spec: GridSpec,
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<Vec<GridFn>> {
    let cols = crate::exec::map_range(keys.len(), |k| {
        let (h, s) = &keys[k];
        let idx = spec.nearest(h).ok_or(Error::OutOfDomain)?;
        column_from(sv, sv.values[idx], *s, h, spec, rule, plan)
    });
    cols.into_iter().collect()
}

fn unique_keys(
    spec: &GridSpec,
    pairs: impl Iterator<Item = (HPoint, f64)>,
) -> Result<(Vec<(HPoint, f64)>, Vec<usize>)> {
    let mut keys: Vec<(HPoint, f64)> = Vec::new();
    let mut map = Vec::new();
    for (h, s) in pairs {
        let idx = spec.nearest(&h).ok_or(Error::OutOfDomain)?;
        let h = spec.point(idx);
        let pos = keys.iter().position(|(k, t)| *k == h && *t == s);
        map.push(pos.unwrap_or_else(|| {
            keys.push((h, s));
            keys.len() - 1
        }));
    }
    Ok((keys, map))
}

/// `|s^m ∂_s^m P_s(g,h)| ≤ C s/(s+d)^{Q+1} (1 + (s+d)/ρ(g) + (s+d)/ρ(h))^{−N}`
/// for `m ∈ {0, 1}`; `∂_s` by centered difference with relative step 1e-2.
pub fn poisson_bound_fit(
    v: &PotentialModel,
    order: f64,
    m: usize,
    sample: &[KernelSample],
    spec: GridSpec,
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<KernelBoundFit> {
    if m > 1 {
        return domain("only derivative orders 0 and 1 are supported");
    }
    let q = homogeneous_dim(spec.n);
    let sv = SampledPotential::new(v, spec, None)?;
    let shifts: &[f64] = if m == 0 { &[1.0] } else { &[1.01, 0.99] };
    let (keys, map) =
        unique_keys(&spec, sample.iter().flat_map(|k| shifts.iter().map(move |f| (k.h.clone(), k.s * f))))?;
    let cols = sample_columns(&sv, &keys, spec, rule, plan)?;
    let mut rows = Vec::with_capacity(sample.len());
    for (i, KernelSample { g, s, .. }) in sample.iter().enumerate() {
        let value = if m == 0 {
            value_at(&cols[map[i]], g)
        } else {
            let up = value_at(&cols[map[2 * i]], g);
            let down = value_at(&cols[map[2 * i + 1]], g);
            (s * (up - down) / (0.02 * s)).abs()
        };
        let h0 = keys[map[i * shifts.len()]].0.clone();
        let d = dist(g, &h0)?;
        let (rg, rh) = (rho_or_inf(v, g)?, rho_or_inf(v, &h0)?);
        let sd = s + d;
        let envelope = s / sd.powf(q + 1.0) * (1.0 + sd / rg + sd / rh).powf(-order);
        rows.push(BoundRow { g: g.clone(), h: h0, s: *s, value, envelope, ratio: value / envelope });
    }
    Ok(KernelBoundFit::from_rows(order, m, 0.0, rows))
}

/// A Hölder-estimate sample: `(g, g₀, h, s)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderSample {
    pub g: HPoint,
    pub g0: HPoint,
    pub h: HPoint,
    pub s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderFit {
    pub q0: f64,
    pub exponent: f64,
    pub constant: f64,
    pub used: usize,
    /// Samples violating `d(g,g₀) ≤ min{d(g₀,h)/4, ρ(g₀)}`, which are skipped.
    pub skipped: usize,
}

/// `|P_s(g,h) − P_s(g₀,h)| ≤ C (d(g,g₀)/(s+d(g₀,h)))^{2−Q/q₀} s/(s+d(g₀,h))^{Q+1}`.
pub fn poisson_holder_fit(
    v: &PotentialModel,
    q0: f64,
    sample: &[HolderSample],
    spec: GridSpec,
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<HolderFit> {
    let q = homogeneous_dim(spec.n);
    if !(q0 > q / 2.0 && q0 < q) {
        return domain(format!("q0 must lie in (Q/2, Q), got {q0}"));
    }
    let exponent = 2.0 - q / q0;
    let mut used = Vec::new();
    for hs in sample {
        let d_gg0 = dist(&hs.g, &hs.g0)?;
        let d0 = dist(&hs.g0, &hs.h)?;
        if d_gg0 <= (d0 / 4.0).min(rho_or_inf(v, &hs.g0)?) {
            used.push(hs);
        }
    }
    let sv = SampledPotential::new(v, spec, None)?;
    let (keys, map) = unique_keys(&spec, used.iter().map(|hs| (hs.h.clone(), hs.s)))?;
    let cols = sample_columns(&sv, &keys, spec, rule, plan)?;
    let mut constant = 0.0f64;
    for (i, hs) in used.iter().enumerate() {
        let col = &cols[map[i]];
        let h0 = &keys[map[i]].0;
        let diff = (value_at(col, &hs.g) - value_at(col, &hs.g0)).abs();
        let d0 = dist(&hs.g0, h0)?;
        let sd = hs.s + d0;
        let envelope = (dist(&hs.g, &hs.g0)? / sd).powf(exponent) * hs.s / sd.powf(q + 1.0);
        if envelope > 0.0 {
            constant = constant.max(diff / envelope);
        }
    }
    Ok(HolderFit { q0, exponent, constant, used: used.len(), skipped: sample.len() - used.len() })
}

/// Default `q₀ = 3Q/4`.
pub fn default_q0(n: usize) -> f64 {
    0.75 * homogeneous_dim(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_weights_and_scalar() {
        let r = subordination_rule(24).unwrap();
        assert!(r.self_test() < 1e-14);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!((r.scalar(1.0, 1.0) - (-1f64).exp()).abs() < 1e-8);
        assert!((r.scalar(0.0, 3.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_laguerre_has_exact_weight() {
        let r = SubordinationRule::gauss_laguerre(24).unwrap();
        assert!(r.self_test() < 1e-12);
    }
}
