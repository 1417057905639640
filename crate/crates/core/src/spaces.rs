//! Grid L^p norms, maximal functions, and the H^p_L and BMO_L norms.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::heatkernel::SampledPotential;
use crate::heatkernel::SplittingPlan;
use crate::hgroup::{geometric_ladder, GridFn, GridSpec, HPoint, CONE_INSET};
use crate::poisson::{poisson_with, SubordinationRule};
use crate::potential::PotentialModel;

pub fn lp_norm(f: &GridFn, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return domain(format!("L^p norms need p ≥ 1, got {p}"));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let cell = f.spec.cell_volume();
    let terms: Vec<f64> = f.values.iter().map(|v| v.abs().powf(p)).collect();
    Ok((crate::exec::pairwise_sum(&terms) * cell).powf(1.0 / p))
}

/// Grid nodes of the Korányi ball `B(g, r)` around node `idx`, as
/// `(row, j_lo, j_hi)` ranges of central indices (inclusive).
pub fn ball_ranges(spec: &GridSpec, idx: usize, r: f64) -> Vec<(usize, usize, usize)> {
    let d = spec.dims();
    let n = spec.n;
    let (hx, ht) = (spec.hx(), spec.ht());
    let mt = spec.mt;
    let (ix, j) = (idx / mt, idx % mt);
    let half = (spec.mx as isize - 1) / 2;
    let mut k = [0isize; 4];
    let mut rem = ix;
    for q in (0..d).rev() {
        k[q] = (rem % spec.mx) as isize - half;
        rem /= spec.mx;
    }
    let amax = (r / hx).ceil() as isize;
    let side = (2 * amax + 1) as usize;
    let t0 = spec.t_coord(j);
    let mut out = Vec::new();
    for mut code in 0..side.pow(d as u32) {
        let mut a = [0isize; 4];
        let mut row = 0usize;
        let mut inside = true;
        for q in (0..d).rev() {
            a[q] = (code % side) as isize - amax;
            code /= side;
        }
        for q in 0..d {
            let i = k[q] + a[q] + half;
            if i < 0 || i >= spec.mx as isize {
                inside = false;
                break;
            }
            row = row * spec.mx + i as usize;
        }
        if !inside {
            continue;
        }
        let a2: f64 = a[..d].iter().map(|&v| (v as f64 * hx).powi(2)).sum();
        let r4 = r.powi(4) - a2 * a2;
        if r4 <= 0.0 {
            continue;
        }
        let half_t = r4.sqrt() / 4.0;
        // h = g∘w: central coordinate t + w_t + 2Σ(x_{n+j} a_j − x_j a_{n+j})
        let tw: f64 = 2.0 * hx * hx * (0..n).map(|q| (k[n + q] * a[q] - k[q] * a[n + q]) as f64).sum::<f64>();
        let c = (t0 + tw + spec.rt) / ht;
        let w = half_t / ht;
        let lo = (c - w).floor() as isize + 1;
        let hi = (c + w).ceil() as isize - 1;
        let (lo, hi) = (lo.max(0), hi.min(mt as isize - 1));
        if lo <= hi {
            out.push((row, lo as usize, hi as usize));
        }
    }
    out
}

fn prefix_rows(values: &[f64], mt: usize) -> Vec<f64> {
    let rows = values.len() / mt;
    let mut p = vec![0.0; rows * (mt + 1)];
    for r in 0..rows {
        for j in 0..mt {
            p[r * (mt + 1) + j + 1] = p[r * (mt + 1) + j] + values[r * mt + j];
        }
    }
    p
}

/// Pointwise max over the ladder of averages of |f| over `B(g, r) ∩ box`,
/// using the grid nodes of each ball.
pub fn hl_maximal(f: &GridFn, radii: &[f64]) -> Result<GridFn> {
    let spec = f.spec;
    if radii.iter().any(|r| !(*r > 0.0)) {
        return domain("radii must be positive");
    }
    let mt = spec.mt;
    let pre = prefix_rows(&f.values.iter().map(|v| v.abs()).collect::<Vec<_>>(), mt);
    let values = crate::exec::map_range(spec.len(), |idx| {
        let mut best = 0.0f64;
        for &r in radii {
            let (mut sum, mut count) = (0.0, 0usize);
            for (row, lo, hi) in ball_ranges(&spec, idx, r) {
                let base = row * (mt + 1);
                sum += pre[base + hi + 1] - pre[base + lo];
                count += hi + 1 - lo;
            }
            if count > 0 {
                best = best.max(sum / count as f64);
            }
        }
        best
    });
    Ok(GridFn { spec, values, exterior: 0.0 })
}

/// Cone sampling for the nontangential maximal function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub s_min: f64,
    pub s_max: f64,
    pub levels: usize,
    pub per_level: usize,
}

impl ConeParams {
    pub fn heights(&self) -> Vec<f64> {
        geometric_ladder(self.s_min, self.s_max, self.levels)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeMax {
    pub params: ConeParams,
    /// Per-node `sup |e^{−s√L} f(h)|` over the sampled cone.
    pub field: GridFn,
}

/// Poisson extensions `u(·, s)` at the cone heights.
pub fn poisson_slabs(
    f: &GridFn,
    v: &PotentialModel,
    heights: &[f64],
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<Vec<GridFn>> {
    let sv = SampledPotential::new(v, f.spec, None)?;
    heights.iter().map(|&s| poisson_with(f, &sv, s, rule, plan)).collect()
}

/// Cone supremum from precomputed slabs: `h = g∘δ_{0.999 s}(z)` over the
/// cone's unit-ball sample, values by multilinear interpolation.
pub fn cone_max_from_slabs(slabs: &[GridFn], params: &ConeParams) -> Result<ConeMax> {
    let spec = slabs[0].spec;
    let heights = params.heights();
    if heights.len() != slabs.len() {
        return domain("one slab per cone height is required");
    }
    let z = crate::hgroup::unit_ball_points(spec.n, params.per_level)?;
    let values = crate::exec::map_range(spec.len(), |idx| {
        let g = spec.point(idx);
        let mut best = slabs[0].values[idx].abs();
        let n = spec.n;
        let mut y = [0.0; 4];
        for (slab, &s) in slabs.iter().zip(&heights) {
            let r = CONE_INSET * s;
            for p in &z {
                // g∘δ_r(p)
                let mut tw = 0.0;
                for q in 0..n {
                    tw += g.x[n + q] * p.x[q] - g.x[q] * p.x[n + q];
                }
                for q in 0..2 * n {
                    y[q] = g.x[q] + r * p.x[q];
                }
                let t = g.t + r * r * p.t + 2.0 * r * tw;
                best = best.max(slab.interp_linear(&y[..2 * n], t).abs());
            }
        }
        best
    });
    Ok(ConeMax { params: params.clone(), field: GridFn { spec, values, exterior: 0.0 } })
}

pub fn nontangential_max(
    f: &GridFn,
    v: &PotentialModel,
    params: &ConeParams,
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<ConeMax> {
    let slabs = poisson_slabs(f, v, &params.heights(), rule, plan)?;
    cone_max_from_slabs(&slabs, params)
}

/// `u*(g) = sup{|u(h, s)| : d(g, h) < s}` over the grid nodes of each cone
/// section, at the slab heights.
pub fn cone_max_grid(slabs: &[GridFn], heights: &[f64]) -> GridFn {
    let spec = slabs[0].spec;
    let mt = spec.mt;
    let values = crate::exec::map_range(spec.len(), |idx| {
        let mut best = 0.0f64;
        for (slab, &s) in slabs.iter().zip(heights) {
            for (row, lo, hi) in ball_ranges(&spec, idx, s) {
                for j in lo..=hi {
                    best = best.max(slab.values[row * mt + j].abs());
                }
            }
        }
        best
    });
    GridFn { spec, values, exterior: 0.0 }
}

/// `‖f‖_{H^p_L} = ‖𝒫̃_* f‖_{L^p}` for `1 ≤ p < ∞`.
pub fn hardy_norm(
    f: &GridFn,
    v: &PotentialModel,
    p: f64,
    params: &ConeParams,
    rule: &SubordinationRule,
    plan: &SplittingPlan,
) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return domain(format!("hardy_norm needs 1 ≤ p < ∞, got {p}"));
    }
    lp_norm(&nontangential_max(f, v, params, rule, plan)?.field, p)
}

/// Ball sampler for the BMO norm: centers on a sub-grid with the given
/// stride, radii geometric from `r_min` to `r_max`, balls inside the box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BmoSampler {
    pub stride_x: usize,
    pub stride_t: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
}

impl BmoSampler {
    /// Radii from `2hx` to the box half-width.
    pub fn default_for(spec: &GridSpec) -> Self {
        BmoSampler {
            stride_x: (spec.mx / 6).max(1),
            stride_t: (spec.mt / 12).max(1),
            r_min: 2.0 * spec.hx(),
            r_max: spec.rx,
            radii: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BmoBall {
    pub center: HPoint,
    pub radius: f64,
    pub rho: f64,
    pub mean_or_zero: f64,
    pub oscillation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BmoReport {
    pub norm: f64,
    pub balls: usize,
    pub worst: Option<BmoBall>,
}

fn ball_in_box(spec: &GridSpec, g: &HPoint, r: f64) -> bool {
    let gx = g.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let reach_t = r * r / 4.0 + 2.0 * gx * r;
    g.x.iter().all(|c| c.abs() + r <= spec.rx) && g.t.abs() + reach_t <= spec.rt
}

/// Sampler centers (node indices) with ρ at each center.
pub(crate) fn sampled_centers(
    spec: &GridSpec,
    v: &PotentialModel,
    sampler: &BmoSampler,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut centers = Vec::new();
    let sx = sampler.stride_x.max(1);
    let st = sampler.stride_t.max(1);
    let half = (spec.mx - 1) / 2;
    let halft = (spec.mt - 1) / 2;
    for idx in 0..spec.len() {
        let (ix, j) = (idx / spec.mt, idx % spec.mt);
        let mut rem = ix;
        let mut on = (j as isize - halft as isize).unsigned_abs() % st == 0;
        for _ in 0..spec.dims() {
            on &= ((rem % spec.mx) as isize - half as isize).unsigned_abs() % sx == 0;
            rem /= spec.mx;
        }
        if on {
            centers.push(idx);
        }
    }
    let rhos = crate::exec::map_range(centers.len(), |c| crate::heatkernel::rho_or_inf(v, &spec.point(centers[c])));
    let rhos: Vec<f64> = rhos.into_iter().collect::<Result<_>>()?;
    Ok((centers, rhos))
}

/// Sampled balls `(center index, radius, ρ(center))` lying inside the box.
pub(crate) fn sampled_balls(
    spec: &GridSpec,
    v: &PotentialModel,
    sampler: &BmoSampler,
) -> Result<Vec<(usize, f64, f64)>> {
    let (centers, rhos) = sampled_centers(spec, v, sampler)?;
    let radii = geometric_ladder(sampler.r_min, sampler.r_max, sampler.radii);
    let mut out = Vec::new();
    for (c, rho) in centers.iter().zip(&rhos) {
        let g = spec.point(*c);
        for &r in &radii {
            if ball_in_box(spec, &g, r) {
                out.push((*c, r, *rho));
            }
        }
    }
    Ok(out)
}

/// Sup over sampled balls of `(1/|B|) ∫_B |f − f_{B,V}|` where `f_{B,V}` is
/// the mean for `r < ρ(g_B)` and 0 otherwise.
pub fn bmo_norm(f: &GridFn, v: &PotentialModel, sampler: &BmoSampler) -> Result<BmoReport> {
    let spec = f.spec;
    let (centers, rhos) = sampled_centers(&spec, v, sampler)?;
    let radii = geometric_ladder(sampler.r_min, sampler.r_max, sampler.radii);
    let mt = spec.mt;
    let results = crate::exec::map_range(centers.len(), |c| {
        let g = spec.point(centers[c]);
        let mut best: Option<BmoBall> = None;
        let mut count_balls = 0usize;
        for &r in &radii {
            if !ball_in_box(&spec, &g, r) {
                continue;
            }
            let ranges = ball_ranges(&spec, centers[c], r);
            let (mut sum, mut count) = (0.0, 0usize);
            for &(row, lo, hi) in &ranges {
                sum += f.values[row * mt + lo..=row * mt + hi].iter().sum::<f64>();
                count += hi + 1 - lo;
            }
            if count == 0 {
                continue;
            }
            count_balls += 1;
            let mean_or_zero = if r < rhos[c] { sum / count as f64 } else { 0.0 };
            let mut osc = 0.0;
            for &(row, lo, hi) in &ranges {
                osc += f.values[row * mt + lo..=row * mt + hi].iter().map(|v| (v - mean_or_zero).abs()).sum::<f64>();
            }
            osc /= count as f64;
            if best.as_ref().is_none_or(|b| osc > b.oscillation) {
                best = Some(BmoBall { center: g.clone(), radius: r, rho: rhos[c], mean_or_zero, oscillation: osc });
            }
        }
        (best, count_balls)
    });
    let mut report = BmoReport { norm: 0.0, balls: 0, worst: None };
    for (b, k) in results {
        report.balls += k;
        if let Some(b) = b {
            if b.oscillation > report.norm || report.worst.is_none() {
                report.norm = report.norm.max(b.oscillation);
                if b.oscillation >= report.norm {
                    report.worst = Some(b);
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_ranges_count_approximates_volume() {
        let spec = GridSpec::with_spacing(1, 2.0, 2.0, 0.1).unwrap();
        let idx = spec.origin();
        let count: usize = ball_ranges(&spec, idx, 1.0).iter().map(|r| r.2 + 1 - r.1).sum();
        let vol = count as f64 * spec.cell_volume();
        assert!((vol / crate::hgroup::nu(1) - 1.0).abs() < 0.02, "{vol}");
    }

    #[test]
    fn ball_ranges_are_korányi_balls() {
        let spec = GridSpec::new(1, 1.0, 1.0, 9, 17).unwrap();
        let idx = spec.len() / 3 + 5;
        let g = spec.point(idx);
        let mut members = 0;
        for (row, lo, hi) in ball_ranges(&spec, idx, 0.7) {
            for j in lo..=hi {
                let h = spec.point(row * spec.mt + j);
                assert!(crate::hgroup::dist(&g, &h).unwrap() < 0.7);
                members += 1;
            }
        }
        let brute = (0..spec.len()).filter(|&i| crate::hgroup::dist(&g, &spec.point(i)).unwrap() < 0.7).count();
        assert_eq!(members, brute);
    }
}
