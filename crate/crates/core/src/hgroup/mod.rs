//! Heisenberg group H^n: group law, dilations, Korányi norm and balls.
//!
//! Points are `(x, t)` with `x ∈ ℝ^{2n}` and `t ∈ ℝ`. The group law is
//! `(x,t)∘(y,s) = (x+y, t+s+2Σ_j (x_{n+j} y_j − x_j y_{n+j}))`, the
//! dilations are `δ_r(x,t) = (rx, r²t)` and the Korányi norm is
//! `‖(x,t)‖ = (|x|⁴ + 16t²)^{1/4}`. Haar measure is Lebesgue measure.

mod ball;
mod grid;

pub use ball::{ball_integral, ball_volume, nu, polar_integral, BallQuad, SphereRule};
pub use grid::{GridFn, GridSpec};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl HPoint {
    pub fn new(x: Vec<f64>, t: f64) -> Result<Self> {
        if x.is_empty() || x.len() % 2 != 0 {
            return domain(format!("horizontal part must have even positive length, got {}", x.len()));
        }
        if !x.iter().all(|v| v.is_finite()) || !t.is_finite() {
            return domain("non-finite coordinate");
        }
        Ok(HPoint { x, t })
    }

    pub fn identity(n: usize) -> Self {
        HPoint { x: vec![0.0; 2 * n], t: 0.0 }
    }

    /// Parses `x_1,…,x_{2n},t`.
    pub fn from_slice(c: &[f64]) -> Result<Self> {
        if c.len() < 3 {
            return domain("a point needs 2n+1 ≥ 3 coordinates");
        }
        HPoint::new(c[..c.len() - 1].to_vec(), c[c.len() - 1])
    }

    pub fn n(&self) -> usize {
        self.x.len() / 2
    }

    pub fn is_identity(&self) -> bool {
        self.t == 0.0 && self.x.iter().all(|&v| v == 0.0)
    }
}

/// Homogeneous dimension Q = 2n + 2.
pub fn homogeneous_dim(n: usize) -> f64 {
    (2 * n + 2) as f64
}

fn same_n(g: &HPoint, h: &HPoint) -> Result<()> {
    if g.x.len() != h.x.len() {
        return Err(Error::Dimension(g.n(), h.n()));
    }
    Ok(())
}

/// The symplectic term 2Σ_j (x_{n+j} y_j − x_j y_{n+j}).
#[inline]
pub fn twist(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() / 2;
    let mut s = 0.0;
    for j in 0..n {
        s += x[n + j] * y[j] - x[j] * y[n + j];
    }
    2.0 * s
}

pub fn group_mul(g: &HPoint, h: &HPoint) -> Result<HPoint> {
    same_n(g, h)?;
    let x = g.x.iter().zip(&h.x).map(|(a, b)| a + b).collect();
    Ok(HPoint { x, t: g.t + h.t + twist(&g.x, &h.x) })
}

pub fn group_inv(g: &HPoint) -> HPoint {
    HPoint { x: g.x.iter().map(|v| -v).collect(), t: -g.t }
}

pub fn dilate(r: f64, g: &HPoint) -> Result<HPoint> {
    if !(r > 0.0) || !r.is_finite() {
        return domain(format!("dilation factor must be positive, got {r}"));
    }
    Ok(HPoint { x: g.x.iter().map(|v| r * v).collect(), t: r * r * g.t })
}

#[inline]
pub fn koranyi_norm_raw(x: &[f64], t: f64) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (r2 * r2 + 16.0 * t * t).sqrt().sqrt()
}

pub fn koranyi_norm(g: &HPoint) -> f64 {
    koranyi_norm_raw(&g.x, g.t)
}

/// d(g,h) = ‖g⁻¹∘h‖ on raw coordinates.
#[inline]
pub fn dist_raw(gx: &[f64], gt: f64, hx: &[f64], ht: f64) -> f64 {
    let n = gx.len() / 2;
    let mut r2 = 0.0;
    let mut tw = 0.0;
    for j in 0..n {
        // g⁻¹ = (−gx, −gt); twist(−gx, hx)
        tw += -gx[n + j] * hx[j] + gx[j] * hx[n + j];
    }
    for k in 0..2 * n {
        let d = hx[k] - gx[k];
        r2 += d * d;
    }
    let t = ht - gt + 2.0 * tw;
    (r2 * r2 + 16.0 * t * t).sqrt().sqrt()
}

pub fn dist(g: &HPoint, h: &HPoint) -> Result<f64> {
    same_n(g, h)?;
    Ok(dist_raw(&g.x, g.t, &h.x, h.t))
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 9] = [2, 3, 5, 7, 11, 13, 17, 19, 23];

/// Deterministic quasi-uniform points of the open unit Korányi ball, the
/// identity first, from a Halton sequence on the bounding box with rejection.
pub fn unit_ball_points(n: usize, count: usize) -> Result<Vec<HPoint>> {
    let d = 2 * n + 1;
    if d > PRIMES.len() {
        return domain(format!("unit_ball_points supports n ≤ {}", (PRIMES.len() - 1) / 2));
    }
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    out.push(HPoint::identity(n));
    let mut i = 1u64;
    while out.len() < count {
        let x: Vec<f64> = (0..2 * n).map(|k| 2.0 * radical_inverse(i, PRIMES[k]) - 1.0).collect();
        let t = 0.5 * radical_inverse(i, PRIMES[2 * n]) - 0.25;
        i += 1;
        if koranyi_norm_raw(&x, t) < 1.0 {
            out.push(HPoint { x, t });
        }
    }
    Ok(out)
}

/// Uniform random point of the open unit Korányi ball, by rejection from
/// the bounding box `[−1, 1]^{2n} × [−1/4, 1/4]`.
pub fn random_ball_point<R: rand::Rng>(n: usize, rng: &mut R) -> HPoint {
    loop {
        let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = rng.random_range(-0.25..0.25);
        if koranyi_norm_raw(&x, t) < 1.0 {
            return HPoint { x, t };
        }
    }
}

/// Largest observed `‖g∘h‖ / (‖g‖ + ‖h‖)` over `pairs` seeded random pairs of
/// the unit ball, the second point dilated by a log-uniform factor in
/// `[1e-2, 1e2]`.
pub fn pseudo_triangle_ratio(n: usize, pairs: usize, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    if n == 0 {
        return domain("n must be positive");
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let g = random_ball_point(n, &mut rng);
        let r = 10f64.powf(rng.random_range(-2.0..2.0));
        let h = dilate(r, &random_ball_point(n, &mut rng))?;
        let den = koranyi_norm(&g) + koranyi_norm(&h);
        if den > 0.0 {
            worst = worst.max(koranyi_norm(&group_mul(&g, &h)?) / den);
        }
    }
    Ok(worst)
}

/// Discretized cone {(h, s) : d(apex, h) < s} on a geometric ladder of heights.
pub fn cone_samples(
    apex: &HPoint,
    s_min: f64,
    s_max: f64,
    levels: usize,
    per_level: usize,
) -> Result<Vec<(HPoint, f64)>> {
    if levels == 0 || per_level == 0 {
        return domain("cone_samples needs levels ≥ 1 and per_level ≥ 1");
    }
    if !(s_min > 0.0 && s_min < s_max) && !(levels == 1 && s_max > 0.0) {
        return domain(format!("cone heights must satisfy 0 < s_min < s_max, got {s_min}, {s_max}"));
    }
    let z = unit_ball_points(apex.n(), per_level)?;
    let mut out = Vec::with_capacity(levels * per_level);
    for s in geometric_ladder(s_min, s_max, levels) {
        for p in &z {
            let h = group_mul(apex, &dilate(CONE_INSET * s, p)?)?;
            out.push((h, s));
        }
    }
    Ok(out)
}

/// Inset keeping cone points strictly inside d(apex, h) < s.
pub const CONE_INSET: f64 = 0.999;

/// `levels` points from `lo` to `hi` in geometric progression (`hi` alone if levels = 1).
pub fn geometric_ladder(lo: f64, hi: f64, levels: usize) -> Vec<f64> {
    if levels == 1 {
        return vec![hi];
    }
    let q = (hi / lo).ln() / (levels - 1) as f64;
    (0..levels).map(|j| if j + 1 == levels { hi } else { lo * (q * j as f64).exp() }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: &[f64], t: f64) -> HPoint {
        HPoint::new(x.to_vec(), t).unwrap()
    }

    #[test]
    fn group_law_examples() {
        let g = group_mul(&p(&[1.0, 0.0], 0.0), &p(&[0.0, 1.0], 0.0)).unwrap();
        assert_eq!(g, p(&[1.0, 1.0], -2.0));
        let h = p(&[0.3, -1.2], 0.7);
        assert_eq!(group_mul(&h, &HPoint::identity(1)).unwrap(), h);
        assert!(group_mul(&h, &group_inv(&h)).unwrap().is_identity());
        assert_eq!(group_inv(&p(&[1.0, 2.0], 3.0)), p(&[-1.0, -2.0], -3.0));
        assert!(matches!(group_mul(&h, &HPoint::identity(2)), Err(Error::Dimension(1, 2))));
    }

    #[test]
    fn norms_and_dilations() {
        assert_eq!(dilate(2.0, &p(&[1.0, 0.0], 1.0)).unwrap(), p(&[2.0, 0.0], 4.0));
        assert!(dilate(0.0, &p(&[1.0, 0.0], 1.0)).is_err());
        assert_eq!(koranyi_norm(&p(&[1.0, 0.0], 0.0)), 1.0);
        assert_eq!(koranyi_norm(&p(&[0.0, 0.0], 1.0)), 2.0);
        assert_eq!(dist(&HPoint::identity(1), &p(&[0.0, 0.0], 1.0)).unwrap(), 2.0);
    }

    #[test]
    fn cone_single_point() {
        let a = p(&[0.5, 0.1], -0.2);
        let c = cone_samples(&a, 0.1, 1.0, 1, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].0, a);
        assert_eq!(c[0].1, 1.0);
        assert!(cone_samples(&a, 0.1, 1.0, 0, 3).is_err());
    }
}
