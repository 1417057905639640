//! `e^{−sL}` for `L = −Δ + V` by operator splitting, kernel columns, the
//! Kato–Trotter identity and kernel bound fits.

use log::warn;
use serde::{Deserialize, Serialize};

use super::free::heat_kernel_free;
use super::propagator::{free_column, lagrange, HeatPropagator, SHORT_NODES};
use crate::error::{domain, Error, Result};
use crate::hgroup::{dist, group_inv, group_mul, homogeneous_dim, GridFn, GridSpec, HPoint};
use crate::potential::{aux_rho, PotentialModel};
use crate::quad::gauss_legendre_on;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Lie,
    Strang,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SplittingPlan {
    pub s: f64,
    pub steps: usize,
    pub scheme: Scheme,
    /// Tail mass dropped by the per-step kernel truncation.
    pub eps_tail: f64,
}

/// Default longest splitting step.
pub const DEFAULT_TAU_MAX: f64 = 0.125;

impl SplittingPlan {
    pub fn new(s: f64, steps: usize, scheme: Scheme) -> Result<Self> {
        let p = SplittingPlan { s, steps, scheme, eps_tail: 1e-8 };
        p.validate()?;
        Ok(p)
    }

    /// Strang with the fewest steps of length ≤ `tau_max`.
    pub fn strang(s: f64, tau_max: f64) -> Result<Self> {
        SplittingPlan::new(s, ((s / tau_max).ceil() as usize).max(1), Scheme::Strang)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return domain(format!("splitting time must be positive, got {}", self.s));
        }
        if self.steps == 0 {
            return domain("splitting needs at least one step");
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.s / self.steps as f64
    }

    /// The same step length applied over a different total time.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        let steps = ((s / self.tau()).round() as usize).max(1);
        SplittingPlan::new(s, steps, self.scheme)
    }
}

/// Potential samples at the grid nodes, optionally in the frame translated
/// by `frame` (sample `V(frame∘w)` at node `w`).
#[derive(Clone, Debug)]
pub struct SampledPotential {
    pub constant: Option<f64>,
    pub values: Vec<f64>,
}

impl SampledPotential {
    pub fn new(v: &PotentialModel, spec: GridSpec, frame: Option<&HPoint>) -> Result<Self> {
        v.validate()?;
        if let Some(c) = v.as_constant() {
            return Ok(SampledPotential { constant: Some(c), values: vec![c; spec.len()] });
        }
        let values = match frame {
            None => v.sample(spec)?.values,
            Some(h) if h.is_identity() => v.sample(spec)?.values,
            Some(h) => {
                let regular = match v {
                    PotentialModel::KoranyiPower { beta, amplitude, epsilon } if *epsilon == 0.0 => {
                        // same regularization as PotentialModel::sample
                        let diag = crate::hgroup::koranyi_norm_raw(&vec![spec.hx(); spec.dims()], spec.ht());
                        PotentialModel::KoranyiPower { beta: *beta, amplitude: *amplitude, epsilon: diag }
                    }
                    other => other.clone(),
                };
                GridFn::from_fn(spec, |x, t| {
                    let w = HPoint { x: x.to_vec(), t };
                    let g = group_mul(h, &w).expect("matching dimensions");
                    regular.value(&g.x, g.t)
                })
                .values
            }
        };
        Ok(SampledPotential { constant: None, values })
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Some(0.0) || self.values.iter().all(|&v| v == 0.0)
    }

    fn damp(&self, f: &mut GridFn, tau: f64) {
        for (v, p) in f.values.iter_mut().zip(&self.values) {
            *v *= (-tau * p).exp();
        }
    }
}

/// Strang or Lie splitting with a prepared potential.
pub fn evolve(f: &GridFn, v: &SampledPotential, plan: &SplittingPlan) -> Result<GridFn> {
    plan.validate()?;
    let prop = HeatPropagator::new(f.spec);
    if let Some(c) = v.constant {
        let mut out = prop.apply(f, plan.s)?;
        out.scale((-c * plan.s).exp());
        return Ok(out);
    }
    if f.exterior != 0.0 {
        return Err(Error::Boundary("a nonconstant potential needs zero exterior data".into()));
    }
    let tau = plan.tau();
    let mut u = f.clone();
    match plan.scheme {
        Scheme::Strang => {
            v.damp(&mut u, tau / 2.0);
            for step in 0..plan.steps {
                u = prop.apply(&u, tau)?;
                v.damp(&mut u, if step + 1 == plan.steps { tau / 2.0 } else { tau });
            }
        }
        Scheme::Lie => {
            for _ in 0..plan.steps {
                v.damp(&mut u, tau);
                u = prop.apply(&u, tau)?;
            }
        }
    }
    Ok(u)
}

/// `e^{−sL} f` with `L = −Δ + V`. Constant potentials are applied exactly as
/// `e^{−cs} e^{sΔ}`.
pub fn apply_heat_schrodinger(f: &GridFn, v: &PotentialModel, s: f64, plan: &SplittingPlan) -> Result<GridFn> {
    let plan = if (plan.s - s).abs() > 1e-12 * s { plan.rescaled(s)? } else { *plan };
    evolve(f, &SampledPotential::new(v, f.spec, None)?, &plan)
}

/// The free evolution with the same steps as `plan` (for domination checks).
pub fn free_with_plan(f: &GridFn, plan: &SplittingPlan) -> Result<GridFn> {
    let zero = SampledPotential { constant: None, values: vec![0.0; f.spec.len()] };
    let mut g = f.clone();
    g.exterior = 0.0;
    let mut out = evolve(&g, &zero, plan)?;
    if f.exterior != 0.0 {
        out.values.iter_mut().for_each(|v| *v += f.exterior);
        out.exterior = f.exterior;
    }
    Ok(out)
}

fn snap(spec: &GridSpec, h0: &HPoint) -> Result<HPoint> {
    let idx = spec.nearest(h0).ok_or(Error::OutOfDomain)?;
    let p = spec.point(idx);
    if dist(&p, h0)? > 1e-9 {
        warn!("column point snapped to the nearest grid node");
    }
    Ok(p)
}

/// `e^{−t_k L} f` for every requested time, returned in input order.
/// Times at least the spectral threshold are reached by marching upward
/// from the previous time with splitting steps of length ≤ `tau_max·max(1, t/2)`;
/// shorter times take a single splitting step (`start`). When the value at
/// τ = 0 is given, times below the threshold τ_r instead come from the quintic
/// in τ through it and `start` at `τ_r·{1, 1.5, 2, 2.5, 3}`.
pub fn march<S>(
    times: &[f64],
    prop: &HeatPropagator,
    tau_max: f64,
    start: S,
    v: &SampledPotential,
    at_zero: Option<&GridFn>,
) -> Result<Vec<GridFn>>
where
    S: Fn(f64) -> Result<GridFn> + Sync,
{
    let res = prop.resolved_time();
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out: Vec<Option<GridFn>> = vec![None; times.len()];
    let mut short: Vec<usize> = order.iter().copied().filter(|&i| times[i] < res.max(tau_max)).collect();
    if let Some(f0) = at_zero {
        let tiny: Vec<usize> = short.iter().copied().filter(|&i| times[i] < res).collect();
        if tiny.len() > SHORT_NODES.len() {
            short.retain(|&i| times[i] >= res);
            let nodes: Vec<f64> = std::iter::once(0.0).chain(SHORT_NODES.iter().map(|m| m * res)).collect();
            let vals = crate::exec::map_range(SHORT_NODES.len(), |k| start(nodes[k + 1]));
            let mut us = vec![f0.clone()];
            for r in vals {
                us.push(r?);
            }
            for &i in &tiny {
                let mut u = GridFn::zeros(f0.spec);
                for (k, uk) in us.iter().enumerate() {
                    u.axpy(lagrange(&nodes, times[i], k), uk);
                }
                out[i] = Some(u);
            }
        }
    }
    let direct = crate::exec::map_range(short.len(), |k| start(times[short[k]]));
    for (k, r) in direct.into_iter().enumerate() {
        out[short[k]] = Some(r?);
    }
    let mut current: Option<(f64, GridFn)> = None;
    for &i in order.iter().filter(|&&i| times[i] >= res.max(tau_max)) {
        let t = times[i];
        let next = match current.take() {
            None => start(t)?,
            Some((t0, u)) => {
                let dt = t - t0;
                if dt <= 0.0 {
                    u
                } else {
                    let step = tau_max * (t0 / 2.0).max(1.0);
                    let plan = SplittingPlan::new(dt, ((dt / step).ceil() as usize).max(1), Scheme::Strang)?;
                    evolve(&u, v, &plan)?
                }
            }
        };
        out[i] = Some(next.clone());
        current = Some((t, next));
    }
    Ok(out.into_iter().map(|o| o.expect("every time visited")).collect())
}

/// Column `g ↦ K_s(g, h₀)`. The first splitting step is taken analytically,
/// `e^{−τV/2} H_τ(h₀⁻¹∘·) e^{−τV(h₀)/2}`; the remaining steps march on the grid.
pub fn column_with(
    v: &SampledPotential,
    vh0: f64,
    s: f64,
    h0: &HPoint,
    spec: GridSpec,
    plan: &SplittingPlan,
) -> Result<GridFn> {
    let plan = plan.rescaled(s)?;
    if let Some(c) = v.constant {
        let mut col = free_column(spec, s, &h0.x, h0.t)?;
        col.scale((-c * s).exp());
        return Ok(col);
    }
    let tau = plan.tau();
    let mut col = free_column(spec, tau, &h0.x, h0.t)?;
    let prop = HeatPropagator::new(spec);
    match plan.scheme {
        Scheme::Strang => {
            col.scale((-tau * vh0 / 2.0).exp());
            for _ in 1..plan.steps {
                v.damp(&mut col, tau);
                col = prop.apply(&col, tau)?;
            }
            v.damp(&mut col, tau / 2.0);
        }
        Scheme::Lie => {
            col.scale((-tau * vh0).exp());
            for _ in 1..plan.steps {
                v.damp(&mut col, tau);
                col = prop.apply(&col, tau)?;
            }
        }
    }
    Ok(col)
}

pub fn schrodinger_kernel_column(
    v: &PotentialModel,
    s: f64,
    h0: &HPoint,
    spec: GridSpec,
    plan: &SplittingPlan,
) -> Result<GridFn> {
    let h0 = snap(&spec, h0)?;
    let sv = SampledPotential::new(v, spec, None)?;
    let vh0 = sv.values[spec.nearest(&h0).expect("snapped")];
    column_with(&sv, vh0, s, &h0, spec, plan)
}

/// The free column computed with the same plan (`V = 0`).
pub fn free_kernel_column(s: f64, h0: &HPoint, spec: GridSpec, plan: &SplittingPlan) -> Result<GridFn> {
    let h0 = snap(&spec, h0)?;
    let zero = SampledPotential { constant: None, values: vec![0.0; spec.len()] };
    column_with(&zero, 0.0, s, &h0, spec, plan)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KatoTrotterReport {
    pub g: HPoint,
    pub h: HPoint,
    pub s: f64,
    /// Discrete `H_s(h⁻¹g) − K_s(g, h)`.
    pub lhs: f64,
    /// Duhamel integral by tensor quadrature.
    pub rhs: f64,
    pub residual: f64,
    pub free_value: f64,
    pub relative: f64,
}

fn value_at(f: &GridFn, p: &HPoint) -> f64 {
    match f.value_at_node(p) {
        Some(v) if f.spec.point(f.spec.nearest(p).unwrap()) == *p => v,
        _ => f.interp_cubic(&p.x, p.t),
    }
}

/// `H_s(h⁻¹∘g) − K_s(g, h)` against `∫_0^s ∫ H_{s−t}(w⁻¹∘g) V(w) K_t(w, h) dw dt`,
/// evaluated in the frame where `h` is the identity. The time integral uses
/// `nodes` Gauss–Legendre points on each half of [0, s]: on [0, s/2] the inner
/// integral is `e^{−tL}[V · H_{s−t}(·⁻¹∘g')](0)`, on [s/2, s] it is
/// `e^{(s−t)Δ}[V · K_t(·, 0)](g')`.
pub fn kato_trotter_residual(
    v: &PotentialModel,
    s: f64,
    g: &HPoint,
    h: &HPoint,
    nodes: usize,
    spec: GridSpec,
    plan: &SplittingPlan,
) -> Result<KatoTrotterReport> {
    let gp = snap(&spec, &group_mul(&group_inv(h), g)?)?;
    let origin = HPoint::identity(spec.n);
    if v.is_zero() {
        return Ok(KatoTrotterReport {
            g: g.clone(),
            h: h.clone(),
            s,
            lhs: 0.0,
            rhs: 0.0,
            residual: 0.0,
            free_value: heat_kernel_free(s, &gp)?,
            relative: 0.0,
        });
    }
    let sv = SampledPotential::new(v, spec, Some(h))?;
    let v0 = sv.values[spec.origin()];
    let prop = HeatPropagator::new(spec);
    let kcol = column_with(&sv, v0, s, &origin, spec, plan)?;
    let zero = SampledPotential { constant: None, values: vec![0.0; spec.len()] };
    let hcol = if sv.constant.is_some() {
        free_column(spec, s, &origin.x, origin.t)?
    } else {
        column_with(&zero, 0.0, s, &origin, spec, plan)?
    };
    let lhs = value_at(&hcol, &gp) - value_at(&kcol, &gp);

    let step = |t: f64| plan.rescaled(t.max(plan.tau()));
    let (t1, w1) = gauss_legendre_on(nodes, 0.0, s / 2.0);
    let early = crate::exec::map_range(nodes, |i| -> Result<f64> {
        let t = t1[i];
        // φ(w) = V(w) H_{s−t}(w⁻¹∘g') = V(w) H_{s−t}(g'⁻¹∘w) by symmetry of H
        let mut phi = free_column(spec, s - t, &gp.x, gp.t)?;
        for (p, vv) in phi.values.iter_mut().zip(&sv.values) {
            *p *= vv;
        }
        let mut pl = step(t)?;
        pl.steps = ((t / plan.tau()).ceil() as usize).max(1);
        pl.s = t;
        let out = evolve(&phi, &sv, &pl)?;
        Ok(value_at(&out, &origin) * w1[i])
    });
    let (t2, w2) = gauss_legendre_on(nodes, s / 2.0, s);
    let late = crate::exec::map_range(nodes, |i| -> Result<f64> {
        let t = t2[i];
        let mut k = column_with(&sv, v0, t, &origin, spec, plan)?;
        for (p, vv) in k.values.iter_mut().zip(&sv.values) {
            *p *= vv;
        }
        let out = prop.apply(&k, s - t)?;
        Ok(value_at(&out, &gp) * w2[i])
    });
    let mut rhs = 0.0;
    for r in early.into_iter().chain(late) {
        rhs += r?;
    }
    let free_value = value_at(&hcol, &gp);
    let residual = (lhs - rhs).abs();
    Ok(KatoTrotterReport {
        g: g.clone(),
        h: h.clone(),
        s,
        lhs,
        rhs,
        residual,
        free_value,
        relative: residual / lhs.abs().max(f64::MIN_POSITIVE),
    })
}

/// One `(g, h, s)` triple of a kernel bound sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelSample {
    pub g: HPoint,
    pub h: HPoint,
    pub s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundRow {
    pub g: HPoint,
    pub h: HPoint,
    pub s: f64,
    pub value: f64,
    pub envelope: f64,
    pub ratio: f64,
}

/// Empirical constant of a kernel estimate: `constant = max value/envelope`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelBoundFit {
    pub order: f64,
    pub derivative: usize,
    pub c_trial: f64,
    pub constant: f64,
    pub rows: Vec<BoundRow>,
}

impl KernelBoundFit {
    pub fn from_rows(order: f64, derivative: usize, c_trial: f64, rows: Vec<BoundRow>) -> Self {
        let constant = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        KernelBoundFit { order, derivative, c_trial, constant, rows }
    }
}

/// ρ at a point, with `∞` for potentials that vanish identically.
pub fn rho_or_inf(v: &PotentialModel, g: &HPoint) -> Result<f64> {
    if v.is_zero() {
        return Ok(f64::INFINITY);
    }
    match aux_rho(v, g) {
        Err(Error::UnboundedRho { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Heat kernel bounds `K_s ≤ C_N s^{−Q/2} e^{−c d²/s} (1 + √s/ρ(g) + √s/ρ(h))^{−N}`
/// (`derivative = 0`) and the same for `|∂_s K_s|` with `s^{−(Q+2)/2}`
/// (`derivative = 1`, centered difference with step s/100).
pub fn lemma21_bound_fit(
    v: &PotentialModel,
    order: f64,
    derivative: usize,
    c_trial: f64,
    sample: &[KernelSample],
    spec: GridSpec,
    plan: &SplittingPlan,
) -> Result<KernelBoundFit> {
    if derivative > 1 {
        return domain("only derivative orders 0 and 1 are supported");
    }
    let q = homogeneous_dim(spec.n);
    let sv = SampledPotential::new(v, spec, None)?;
    let shifts: &[f64] = if derivative == 0 { &[1.0] } else { &[1.01, 0.99] };
    // one column per distinct (h₀, time)
    let mut keys: Vec<(HPoint, f64)> = Vec::new();
    let mut map = Vec::with_capacity(sample.len() * shifts.len());
    for k in sample {
        let h0 = snap(&spec, &k.h)?;
        for f in shifts {
            let key = (h0.clone(), k.s * f);
            map.push(keys.iter().position(|x| *x == key).unwrap_or_else(|| {
                keys.push(key);
                keys.len() - 1
            }));
        }
    }
    let cols = crate::exec::map_range(keys.len(), |k| {
        let (h0, t) = &keys[k];
        column_with(&sv, sv.values[spec.nearest(h0).expect("snapped")], *t, h0, spec, plan)
    });
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(sample.len());
    for (i, KernelSample { g, s, .. }) in sample.iter().enumerate() {
        let h0 = keys[map[i * shifts.len()]].0.clone();
        let value = if derivative == 0 {
            value_at(&cols[map[i]], g)
        } else {
            let up = value_at(&cols[map[2 * i]], g);
            let down = value_at(&cols[map[2 * i + 1]], g);
            ((up - down) / (0.02 * s)).abs()
        };
        let d = dist(g, &h0)?;
        let (rg, rh) = (rho_or_inf(v, g)?, rho_or_inf(v, &h0)?);
        let damp = (1.0 + s.sqrt() / rg + s.sqrt() / rh).powf(-order);
        let power = (q + 2.0 * derivative as f64) / 2.0;
        let envelope = s.powf(-power) * (-c_trial * d * d / s).exp() * damp;
        rows.push(BoundRow { g: g.clone(), h: h0, s: *s, value, envelope, ratio: value / envelope });
    }
    Ok(KernelBoundFit::from_rows(order, derivative, c_trial, rows))
}

/// `|H_s − K_s| ≤ C s^{−Q/2} e^{−A d²/s} min{(√s/ρ(g))^e, (√s/ρ(h))^e}` with
/// `e = 2 − Q/q₀`, over the sample.
pub fn lemma22_bound_fit(
    v: &PotentialModel,
    a_trial: f64,
    q0: f64,
    sample: &[KernelSample],
    spec: GridSpec,
    plan: &SplittingPlan,
) -> Result<KernelBoundFit> {
    let q = homogeneous_dim(spec.n);
    let sv = SampledPotential::new(v, spec, None)?;
    let zero = SampledPotential { constant: None, values: vec![0.0; spec.len()] };
    let rows = crate::exec::map_range(sample.len(), |i| -> Result<BoundRow> {
        let KernelSample { g, h, s } = &sample[i];
        let h0 = snap(&spec, h)?;
        let vh0 = sv.values[spec.nearest(&h0).expect("snapped")];
        let k = value_at(&column_with(&sv, vh0, *s, &h0, spec, plan)?, g);
        let hf = if sv.constant.is_some() {
            value_at(&free_column(spec, *s, &h0.x, h0.t)?, g)
        } else {
            value_at(&column_with(&zero, 0.0, *s, &h0, spec, plan)?, g)
        };
        let d = dist(g, &h0)?;
        let e = 2.0 - q / q0;
        let (rg, rh) = (rho_or_inf(v, g)?, rho_or_inf(v, &h0)?);
        let factor = (s.sqrt() / rg).powf(e).min((s.sqrt() / rh).powf(e));
        let envelope = s.powf(-q / 2.0) * (-a_trial * d * d / s).exp() * factor;
        let value = (hf - k).abs();
        Ok(BoundRow { g: g.clone(), h: h0, s: *s, value, envelope, ratio: value / envelope })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(KernelBoundFit::from_rows(2.0 - q / q0, 0, a_trial, rows))
}
