//! Korányi balls: volume constant and polar quadrature.
//!
//! Every w ≠ 0 is `δ_ρ σ` with ρ = ‖w‖ and σ on the unit sphere Σ, written
//! `σ = (√cos φ · ω, sin φ / 4)` with φ ∈ [−π/2, π/2] and ω ∈ S^{2n−1}. In
//! these coordinates dw = ρ^{2n+1} (cos φ)^{n−1} / 4 · dρ dφ dω.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::{dist_raw, homogeneous_dim, twist, HPoint};
use crate::quad::gauss_legendre_on;

fn sphere_directions(d: usize, n_theta: usize) -> Vec<(Vec<f64>, f64)> {
    if d == 2 {
        return (0..n_theta)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n_theta as f64;
                (vec![th.cos(), th.sin()], 2.0 * PI / n_theta as f64)
            })
            .collect();
    }
    let inner = sphere_directions(d - 1, n_theta);
    let (alpha, wa) = gauss_legendre_on((n_theta / 2).max(2), 0.0, PI);
    let mut out = Vec::with_capacity(inner.len() * alpha.len());
    for (a, w) in alpha.iter().zip(&wa) {
        let (s, c) = a.sin_cos();
        let wt = w * s.powi(d as i32 - 2);
        for (om, wo) in &inner {
            let mut v: Vec<f64> = om.iter().map(|x| x * s).collect();
            v.push(c);
            out.push((v, wt * wo));
        }
    }
    out
}

/// Quadrature on the unit Korányi sphere Σ for the measure with
/// `∫_{B(0,r)} F = ∫_0^r ρ^{Q−1} ∫_Σ F(δ_ρ σ) dμ(σ) dρ`.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub n: usize,
    /// (horizontal part, central part, weight)
    pub nodes: Vec<(Vec<f64>, f64, f64)>,
}

impl SphereRule {
    pub fn new(n: usize, n_phi: usize, n_theta: usize) -> Self {
        // φ = (π/2) sin θ makes √cos φ analytic in θ at the poles
        let (theta, wtheta) = gauss_legendre_on(n_phi, -PI / 2.0, PI / 2.0);
        let dirs = sphere_directions(2 * n, n_theta);
        let mut nodes = Vec::with_capacity(theta.len() * dirs.len());
        for (th, wth) in theta.iter().zip(&wtheta) {
            let f = PI / 2.0 * th.sin();
            let wf = wth * PI / 2.0 * th.cos();
            let (s, c) = f.sin_cos();
            let c = c.max(0.0);
            let scale = c.sqrt();
            let wt = wf * c.powi(n as i32 - 1) / 4.0;
            for (om, wo) in &dirs {
                nodes.push((om.iter().map(|v| v * scale).collect(), s / 4.0, wt * wo));
            }
        }
        SphereRule { n, nodes }
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.2).sum()
    }
}

/// Node counts for polar ball quadrature.
#[derive(Clone, Debug)]
pub struct BallQuad {
    pub sphere: SphereRule,
    pub n_rho: usize,
    /// Samples per ray when locating where a ray leaves a clipping ball.
    pub n_scan: usize,
}

impl BallQuad {
    pub fn new(n: usize, n_rho: usize, n_phi: usize, n_theta: usize) -> Self {
        BallQuad { sphere: SphereRule::new(n, n_phi, n_theta), n_rho, n_scan: 64 }
    }

    /// Default resolution, about 2·10⁴ nodes for n = 1.
    pub fn standard(n: usize) -> Self {
        if n == 1 {
            BallQuad::new(1, 24, 24, 32)
        } else {
            BallQuad::new(n, 12, 12, 12)
        }
    }
}

fn nu_quadrature(n: usize) -> f64 {
    // |S^{2n-1}| = 2π^n/(n-1)!; the φ-integral of cos^{n-1} by Gauss–Legendre
    let sphere = 2.0 * PI.powi(n as i32) / (1..n).map(|k| k as f64).product::<f64>();
    let (phi, w) = gauss_legendre_on(64, -PI / 2.0, PI / 2.0);
    let iphi: f64 = phi.iter().zip(&w).map(|(f, w)| w * f.cos().powi(n as i32 - 1)).sum();
    sphere * iphi / (4.0 * homogeneous_dim(n))
}

/// ν_n = |B(0,1)|, computed once per n.
pub fn nu(n: usize) -> f64 {
    static CACHE: [OnceLock<f64>; 8] = [const { OnceLock::new() }; 8];
    match CACHE.get(n) {
        Some(c) => *c.get_or_init(|| nu_quadrature(n)),
        None => nu_quadrature(n),
    }
}

pub fn ball_volume(r: f64, n: usize) -> f64 {
    nu(n) * r.powf(homogeneous_dim(n))
}

/// Integral of `f` over `{p∘δ_ρσ : ρ < rho_max}`, optionally intersected
/// with the ball `B(g, r)` (`clip`). Rays are scanned for crossings of the
/// clipping ball and integrated piecewise; radii in `breaks` (kinks of the
/// integrand about `p`) split the pieces further.
pub fn polar_integral<F>(
    p: &HPoint,
    rho_max: f64,
    clip: Option<(&HPoint, f64)>,
    breaks: &[f64],
    f: F,
    q: &BallQuad,
) -> f64
where
    F: Fn(&[f64], f64) -> f64,
{
    let qd = homogeneous_dim(p.n());
    let (gl, gw) = gauss_legendre_on(q.n_rho, 0.0, 1.0);
    let mut x = vec![0.0; p.x.len()];
    let point = |rho: f64, sx: &[f64], st: f64, x: &mut Vec<f64>| -> f64 {
        for k in 0..x.len() {
            x[k] = rho * sx[k];
        }
        let t = p.t + rho * rho * st + twist(&p.x, x);
        for k in 0..x.len() {
            x[k] += p.x[k];
        }
        t
    };
    let mut total = 0.0;
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for (sx, st, sw) in &q.sphere.nodes {
        intervals.clear();
        match clip {
            None => intervals.push((0.0, rho_max)),
            Some((g, r)) => {
                let inside = |rho: f64, x: &mut Vec<f64>| {
                    let t = point(rho, sx, *st, x);
                    dist_raw(&g.x, g.t, x, t) < r
                };
                let h = rho_max / q.n_scan as f64;
                let mut prev = inside(0.0, &mut x);
                let mut start = if prev { Some(0.0) } else { None };
                for i in 1..=q.n_scan {
                    let rho = h * i as f64;
                    let cur = inside(rho, &mut x);
                    if cur != prev {
                        let (mut lo, mut hi) = (rho - h, rho);
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if inside(mid, &mut x) == prev {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        let edge = 0.5 * (lo + hi);
                        if cur {
                            start = Some(edge);
                        } else if let Some(a) = start.take() {
                            intervals.push((a, edge));
                        }
                    }
                    prev = cur;
                }
                if let Some(a) = start {
                    intervals.push((a, rho_max));
                }
            }
        }
        if !breaks.is_empty() {
            let mut split = Vec::with_capacity(intervals.len() + breaks.len());
            for &(a, b) in &intervals {
                let mut lo = a;
                for &c in breaks {
                    if c > lo && c < b {
                        split.push((lo, c));
                        lo = c;
                    }
                }
                split.push((lo, b));
            }
            intervals = split;
        }
        let mut ray = 0.0;
        for &(a, b) in &intervals {
            let len = b - a;
            for (u, w) in gl.iter().zip(&gw) {
                let rho = a + len * u;
                let t = point(rho, sx, *st, &mut x);
                ray += w * len * rho.powf(qd - 1.0) * f(&x, t);
            }
        }
        total += sw * ray;
    }
    total
}

/// ∫_{B(g,r)} f by polar quadrature about the center g.
pub fn ball_integral<F>(g: &HPoint, r: f64, f: F, q: &BallQuad) -> f64
where
    F: Fn(&[f64], f64) -> f64,
{
    polar_integral(g, r, None, &[], f, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_closed_forms() {
        assert!((nu(1) - PI * PI / 8.0).abs() < 1e-14);
        // n = 2: |S^3| = 2π², ∫cos φ = 2 → 2π²·2/(4·6)
        assert!((nu(2) - PI * PI / 6.0).abs() < 1e-14);
        assert!((ball_volume(2.0, 1) - 16.0 * nu(1)).abs() < 1e-12);
    }

    #[test]
    fn sphere_weight_matches_q_nu() {
        for n in [1, 2] {
            let s = SphereRule::new(n, 16, 24);
            let err = s.total_weight() - homogeneous_dim(n) * nu(n);
            assert!(err.abs() < 1e-10, "n={n} {err}");
            for (x, t, _) in &s.nodes {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                assert!((r2 * r2 + 16.0 * t * t - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clipped_polar_recovers_volume() {
        let q = BallQuad::standard(1);
        let g = HPoint::new(vec![0.4, -0.2], 0.1).unwrap();
        let p = HPoint::new(vec![0.1, 0.2], -0.05).unwrap();
        let v = polar_integral(&p, 6.0, Some((&g, 1.0)), &[], |_, _| 1.0, &q);
        assert!((v / nu(1) - 1.0).abs() < 2e-3, "{v}");
        let w = ball_integral(&g, 1.5, |_, _| 1.0, &q);
        assert!((w - ball_volume(1.5, 1)).abs() < 1e-12);
    }
}
