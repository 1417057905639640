//! Potentials V ≥ 0, reverse Hölder ratios and the critical radius
//! `ρ(g) = sup{r : r^{2−Q} ∫_{B(g,r)} V ≤ 1}`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hgroup::{
    ball_volume, dilate, dist, dist_raw, geometric_ladder, homogeneous_dim, koranyi_norm_raw, polar_integral, BallQuad,
    GridFn, GridSpec, HPoint,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PotentialModel {
    Constant {
        c: f64,
    },
    /// `a · max(‖g‖, ε)^{−β}`.
    KoranyiPower {
        beta: f64,
        amplitude: f64,
        #[serde(default)]
        epsilon: f64,
    },
    /// `height · exp(1 − 1/(1 − (d/R)²))` for `d = d(center, g) < R`, else 0.
    Bump {
        center: HPoint,
        radius: f64,
        height: f64,
    },
    /// Multilinear interpolation of grid values; 0 outside the box in integrals.
    Tabulated {
        grid: GridFn,
    },
}

impl PotentialModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialModel::Constant { c } if !(*c >= 0.0 && c.is_finite()) => {
                domain(format!("constant potential must be ≥ 0, got {c}"))
            }
            PotentialModel::KoranyiPower { beta, amplitude, epsilon }
                if !(*beta > 0.0 && *beta < 2.0 && *amplitude > 0.0 && *epsilon >= 0.0) =>
            {
                domain("KoranyiPower needs β ∈ (0,2), a > 0, ε ≥ 0")
            }
            PotentialModel::Bump { radius, height, .. } if !(*radius > 0.0 && *height >= 0.0) => {
                domain("Bump needs radius > 0 and height ≥ 0")
            }
            PotentialModel::Tabulated { grid } => {
                grid.spec.validate()?;
                if grid.values.iter().any(|v| !(*v >= 0.0)) {
                    return domain("tabulated potential has negative or NaN values");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            PotentialModel::Constant { c } => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PotentialModel::Constant { c } => *c == 0.0,
            PotentialModel::Bump { height, .. } => *height == 0.0,
            PotentialModel::Tabulated { grid } => grid.values.iter().all(|&v| v == 0.0),
            PotentialModel::KoranyiPower { .. } => false,
        }
    }

    /// Value at raw coordinates; tabulated models give 0 outside their box.
    #[inline]
    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        match self {
            PotentialModel::Constant { c } => *c,
            PotentialModel::KoranyiPower { beta, amplitude, epsilon } => {
                amplitude * koranyi_norm_raw(x, t).max(*epsilon).powf(-beta)
            }
            PotentialModel::Bump { center, radius, height } => {
                let d = dist_raw(&center.x, center.t, x, t) / radius;
                if d >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - 1.0 / (1.0 - d * d)).exp()
                }
            }
            PotentialModel::Tabulated { grid } => grid.interp_linear(x, t).max(0.0),
        }
    }

    pub fn eval(&self, g: &HPoint) -> Result<f64> {
        match self {
            PotentialModel::Bump { center, .. } if center.n() != g.n() => Err(Error::Dimension(center.n(), g.n())),
            PotentialModel::Tabulated { grid } => {
                if grid.spec.n != g.n() {
                    return Err(Error::Dimension(grid.spec.n, g.n()));
                }
                if !grid.spec.contains(&g.x, g.t) {
                    return Err(Error::OutOfDomain);
                }
                Ok(self.value(&g.x, g.t))
            }
            _ => Ok(self.value(&g.x, g.t)),
        }
    }

    /// `V_r(g) = r^{−2} V(δ_{1/r} g)`, the dilation under which ρ scales by r.
    pub fn dilated(&self, r: f64) -> Result<PotentialModel> {
        if !(r > 0.0) {
            return domain("dilation factor must be positive");
        }
        Ok(match self {
            PotentialModel::Constant { c } => PotentialModel::Constant { c: c / (r * r) },
            PotentialModel::KoranyiPower { beta, amplitude, epsilon } => PotentialModel::KoranyiPower {
                beta: *beta,
                amplitude: amplitude * r.powf(beta - 2.0),
                epsilon: epsilon * r,
            },
            PotentialModel::Bump { center, radius, height } => {
                PotentialModel::Bump { center: dilate(r, center)?, radius: radius * r, height: height / (r * r) }
            }
            PotentialModel::Tabulated { grid } => {
                let mut spec = grid.spec;
                spec.rx *= r;
                spec.rt *= r * r;
                let values = grid.values.iter().map(|v| v / (r * r)).collect();
                PotentialModel::Tabulated { grid: GridFn::new(spec, values)? }
            }
        })
    }

    /// Samples V at the grid nodes. A KoranyiPower with ε = 0 is regularized
    /// at the Korányi size of one grid cell.
    pub fn sample(&self, spec: GridSpec) -> Result<GridFn> {
        self.validate()?;
        let model = match self {
            PotentialModel::KoranyiPower { beta, amplitude, epsilon } if *epsilon == 0.0 => {
                let diag = koranyi_norm_raw(&vec![spec.hx(); spec.dims()], spec.ht());
                PotentialModel::KoranyiPower { beta: *beta, amplitude: *amplitude, epsilon: diag }
            }
            other => other.clone(),
        };
        Ok(GridFn::from_fn(spec, |x, t| model.value(x, t)))
    }

    /// ∫_{B(g,r)} φ(V(h)) dh with the polar center chosen to put kinks and
    /// singularities of V at ρ = 0 or on a break radius.
    pub fn ball_integral<F: Fn(f64) -> f64>(&self, g: &HPoint, r: f64, phi: F, q: &BallQuad) -> f64 {
        let f = |x: &[f64], t: f64| phi(self.value(x, t));
        match self {
            PotentialModel::KoranyiPower { epsilon, .. } => {
                let origin = HPoint::identity(g.n());
                let d = koranyi_norm_raw(&g.x, g.t);
                let breaks: Vec<f64> = if *epsilon > 0.0 { vec![*epsilon] } else { vec![] };
                if d == 0.0 {
                    polar_integral(g, r, None, &breaks, f, q)
                } else if d < r + epsilon {
                    polar_integral(&origin, 4.0 * (d + r), Some((g, r)), &breaks, f, q)
                } else {
                    polar_integral(g, r, None, &[], f, q)
                }
            }
            PotentialModel::Bump { center, radius, .. } if r >= *radius => {
                polar_integral(center, *radius, Some((g, r)), &[], f, q)
            }
            _ => polar_integral(g, r, None, &[], f, q),
        }
    }
}

/// Reverse Hölder quotient `(avg_B V^q)^{1/q} / avg_B V` on `B(g, r)`.
/// All three integrals share one node set, so the discrete quotient is ≥ 1.
pub fn rh_ratio(v: &PotentialModel, q: f64, g: &HPoint, r: f64, quad: &BallQuad) -> Result<f64> {
    if !(q > 1.0) {
        return domain(format!("reverse Hölder exponent must exceed 1, got {q}"));
    }
    let vol = v.ball_integral(g, r, |_| 1.0, quad);
    let i1 = v.ball_integral(g, r, |x| x, quad);
    if !(i1 > 0.0) {
        return Err(Error::DegenerateBall);
    }
    let iq = v.ball_integral(g, r, |x| x.powf(q), quad);
    Ok((iq / vol).powf(1.0 / q) / (i1 / vol))
}

/// Balls with centers on a regular grid of a box and radii on a geometric ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallSampler {
    pub n: usize,
    pub center_half_x: f64,
    pub center_half_t: f64,
    pub centers_per_axis: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
}

impl BallSampler {
    pub fn centers(&self) -> Vec<HPoint> {
        let k = self.centers_per_axis.max(1);
        let coord = |i: usize, half: f64| if k == 1 { 0.0 } else { -half + 2.0 * half * i as f64 / (k - 1) as f64 };
        let d = 2 * self.n + 1;
        let total = k.pow(d as u32);
        (0..total)
            .map(|mut code| {
                let mut c = vec![0.0; d];
                for slot in c.iter_mut().rev() {
                    *slot = code as f64;
                    code /= k;
                }
                let x = c[..d - 1].iter().map(|&i| coord(i as usize, self.center_half_x)).collect();
                HPoint { x, t: coord(c[d - 1] as usize, self.center_half_t) }
            })
            .collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        geometric_ladder(self.r_min, self.r_max, self.radii)
    }

    /// Nested refinement: centers and radii both roughly doubled.
    pub fn refined(&self) -> BallSampler {
        BallSampler {
            centers_per_axis: 2 * self.centers_per_axis.max(1) - 1,
            radii: 2 * self.radii - 1,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhReport {
    pub q: f64,
    pub ratio_sup: f64,
    pub ball_count: usize,
    pub skipped: usize,
    pub worst_center: HPoint,
    pub worst_radius: f64,
    pub refined_ratio_sup: f64,
    pub stable: bool,
    pub plausibly_bq: bool,
}

/// Default cap on the sampled reverse Hölder constant.
pub const RH_CAP: f64 = 100.0;

fn rh_sup(v: &PotentialModel, q: f64, s: &BallSampler, quad: &BallQuad) -> Result<(f64, usize, usize, HPoint, f64)> {
    let centers = s.centers();
    let radii = s.radii();
    let jobs: Vec<(usize, usize)> = (0..centers.len()).flat_map(|c| (0..radii.len()).map(move |r| (c, r))).collect();
    let out = crate::exec::map_range(jobs.len(), |k| {
        let (c, r) = jobs[k];
        rh_ratio(v, q, &centers[c], radii[r], quad)
    });
    let (mut sup, mut count, mut skipped) = (0.0f64, 0usize, 0usize);
    let mut worst = (HPoint::identity(s.n), 0.0);
    for (k, res) in out.into_iter().enumerate() {
        match res {
            Ok(x) => {
                count += 1;
                if x > sup {
                    sup = x;
                    worst = (centers[jobs[k].0].clone(), radii[jobs[k].1]);
                }
            }
            Err(Error::DegenerateBall) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((sup, count, skipped, worst.0, worst.1))
}

/// Sampled reverse Hölder constant with a refinement-stability check.
pub fn rh_verify(v: &PotentialModel, q: f64, sampler: &BallSampler, cap: f64) -> Result<RhReport> {
    v.validate()?;
    let quad = BallQuad::new(sampler.n, 20, 20, 24);
    let (sup, count, skipped, wc, wr) = rh_sup(v, q, sampler, &quad)?;
    let fine = BallQuad::new(sampler.n, 28, 28, 32);
    let (rsup, ..) = rh_sup(v, q, &sampler.refined(), &fine)?;
    let stable = rsup.is_finite() && (rsup - sup).abs() <= 0.1 * sup;
    Ok(RhReport {
        q,
        ratio_sup: sup,
        ball_count: count,
        skipped,
        worst_center: wc,
        worst_radius: wr,
        refined_ratio_sup: rsup,
        stable,
        plausibly_bq: stable && sup < cap && rsup < cap,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Rho {
    pub rho: f64,
    /// F(r) > 1 already at the smallest probed radius; `rho` is extrapolated.
    pub below_min: bool,
}

pub const RHO_LADDER_EXP: i32 = 20;

/// Critical radius by a geometric scan of `F(r) = r^{2−Q} ∫_{B(g,r)} V`
/// (r = 2^{-20} … 2^{20}) bracketing the last crossing of F = 1, followed by
/// 50 bisection steps in log r.
pub fn aux_rho_with(v: &PotentialModel, g: &HPoint, quad: &BallQuad) -> Result<Rho> {
    let qd = homogeneous_dim(g.n());
    let f = |r: f64| r.powf(2.0 - qd) * v.ball_integral(g, r, |x| x, quad);
    let ladder: Vec<f64> = (-RHO_LADDER_EXP..=RHO_LADDER_EXP).map(|k| 2f64.powi(k)).collect();
    let vals: Vec<f64> = ladder.iter().map(|&r| f(r)).collect();
    let last = vals.len() - 1;
    if vals.iter().all(|&x| x <= 1.0) {
        return Err(Error::UnboundedRho { r_max: ladder[last] });
    }
    // largest k with F(r_k) ≤ 1 and F(r_{k+1}) > 1
    let mut k = None;
    for i in (0..last).rev() {
        if vals[i] <= 1.0 && vals[i + 1] > 1.0 {
            k = Some(i);
            break;
        }
    }
    if vals[last] <= 1.0 {
        return Err(Error::UnboundedRho { r_max: ladder[last] });
    }
    let Some(k) = k else {
        warn!("F(r) > 1 at r = {:e}; extrapolating rho below the ladder", ladder[0]);
        return Ok(Rho { rho: ladder[0] / vals[0].sqrt(), below_min: true });
    };
    let (mut lo, mut hi) = (ladder[k].ln(), ladder[k + 1].ln());
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Rho { rho: lo.exp(), below_min: false })
}

pub fn aux_rho(v: &PotentialModel, g: &HPoint) -> Result<f64> {
    v.validate()?;
    Ok(aux_rho_with(v, g, &BallQuad::standard(g.n()))?.rho)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoPair {
    pub g: HPoint,
    pub h: HPoint,
    pub rho_g: f64,
    pub rho_h: f64,
    pub ratio: f64,
    pub scaled_distance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoComparison {
    pub pairs: Vec<RhoPair>,
    /// Smallest l₀ with (1 + d/ρ(g))^{−l₀} ≤ ρ(h)/ρ(g) on the sample.
    pub l0: f64,
    /// Smallest C with ρ(h)/ρ(g) ≤ C (1 + d/ρ(g))^{l₀/(l₀+1)}.
    pub c_upper: f64,
    /// Every pair with d(g,h) < ρ(g) has a ratio in [1/4, 4].
    pub near_pairs_comparable: bool,
}

pub fn rho_comparison_probe(v: &PotentialModel, pairs: &[(HPoint, HPoint)]) -> Result<RhoComparison> {
    v.validate()?;
    let quad = BallQuad::new(pairs.first().map_or(1, |p| p.0.n()), 16, 16, 24);
    let rows = crate::exec::map_range(pairs.len(), |i| -> Result<RhoPair> {
        let (g, h) = &pairs[i];
        let rho_g = aux_rho_with(v, g, &quad)?.rho;
        let rho_h = if g == h { rho_g } else { aux_rho_with(v, h, &quad)?.rho };
        let d = dist(g, h)?;
        Ok(RhoPair { g: g.clone(), h: h.clone(), rho_g, rho_h, ratio: rho_h / rho_g, scaled_distance: d / rho_g })
    });
    let pairs: Vec<RhoPair> = rows.into_iter().collect::<Result<_>>()?;
    let mut l0 = 0.0f64;
    for p in &pairs {
        if p.ratio < 1.0 && p.scaled_distance > 0.0 {
            l0 = l0.max(-p.ratio.ln() / p.scaled_distance.ln_1p());
        }
    }
    let e = l0 / (l0 + 1.0);
    let c_upper = pairs.iter().map(|p| p.ratio / (1.0 + p.scaled_distance).powf(e)).fold(0.0, f64::max);
    let near_pairs_comparable =
        pairs.iter().filter(|p| p.scaled_distance < 1.0).all(|p| p.ratio >= 0.25 && p.ratio <= 4.0);
    Ok(RhoComparison { pairs, l0, c_upper, near_pairs_comparable })
}

/// Closed form ρ = (c ν_n)^{−1/2} for a constant potential.
pub fn rho_constant(c: f64, n: usize) -> f64 {
    1.0 / (c * ball_volume(1.0, n)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn kp() -> PotentialModel {
        PotentialModel::KoranyiPower { beta: 1.0, amplitude: 1.0, epsilon: 0.0 }
    }

    #[test]
    fn eval_examples() {
        let g = HPoint::new(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(PotentialModel::Constant { c: 3.0 }.eval(&g).unwrap(), 3.0);
        assert_eq!(kp().eval(&g).unwrap(), 0.5);
        let b = PotentialModel::Bump { center: HPoint::identity(1), radius: 0.5, height: 2.0 };
        assert_eq!(b.eval(&g).unwrap(), 0.0);
        assert_eq!(b.eval(&HPoint::identity(1)).unwrap(), 2.0);
        let json = serde_json::to_string(&kp()).unwrap();
        assert_eq!(serde_json::from_str::<PotentialModel>(&json).unwrap(), kp());
    }

    #[test]
    fn rho_closed_forms() {
        let g = HPoint::identity(1);
        let r = aux_rho(&PotentialModel::Constant { c: 1.0 }, &g).unwrap();
        assert!((r / (8.0 / (PI * PI)).sqrt() - 1.0).abs() < 1e-9, "{r}");
        let r = aux_rho(&kp(), &g).unwrap();
        assert!((r - 6.0 / (PI * PI)).abs() < 1e-6, "{r}");
    }

    #[test]
    fn rho_unbounded_for_zero() {
        let r = aux_rho(&PotentialModel::Constant { c: 0.0 }, &HPoint::identity(1));
        assert!(matches!(r, Err(Error::UnboundedRho { .. })));
    }

    #[test]
    fn rh_constant_is_one() {
        let q = BallQuad::standard(1);
        let g = HPoint::new(vec![0.3, 0.1], -0.4).unwrap();
        let r = rh_ratio(&PotentialModel::Constant { c: 2.5 }, 2.0, &g, 0.7, &q).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let z = rh_ratio(&PotentialModel::Constant { c: 0.0 }, 2.0, &g, 0.7, &q);
        assert!(matches!(z, Err(Error::DegenerateBall)));
    }
}
