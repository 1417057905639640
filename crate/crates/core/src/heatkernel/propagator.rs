//! Discrete free heat semigroup `e^{τΔ}` on a box grid with a constant
//! exterior value.
//!
//! The scheme is spectral for τ ≥ τ_r = hx²/2: FFT in `t`, and for each
//! frequency λ a twisted lattice sum in `x` against the exact transform
//! `Ĥ_τ(a, λ)`. Below τ_r the kernel is not resolved by the lattice. There
//! `e^{τΔ}f` is taken from the quintic in τ through `τ = 0` and spectral
//! values at `τ_r·{1, 1.5, 2, 2.5, 3}` (default), or from a semi-Lagrangian
//! step: `f(g∘w⁻¹)` averaged over a moment-matched node set for `w ~ H_τ`
//! with tricubic interpolation.
//!
//! Several times can be combined into one pass, `Σ_i w_i e^{τ_iΔ} f`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::convolve::Lattice;
use super::free::{central_amplitude, central_beta, central_mass};
use crate::error::{domain, Result};
use crate::hgroup::{GridFn, GridSpec};

/// Default pruning threshold for frequencies and lattice offsets.
pub const DEFAULT_EPS: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ShortTime {
    #[default]
    Interpolate,
    SemiLagrangian,
}

/// Multiples of τ_r used by [`ShortTime::Interpolate`], besides τ = 0.
pub(crate) const SHORT_NODES: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];

#[derive(Clone, Debug)]
pub struct HeatPropagator {
    pub spec: GridSpec,
    pub eps: f64,
    pub short: ShortTime,
}

impl HeatPropagator {
    pub fn new(spec: GridSpec) -> Self {
        HeatPropagator { spec, eps: DEFAULT_EPS, short: ShortTime::default() }
    }

    /// Smallest τ handled by the spectral scheme.
    pub fn resolved_time(&self) -> f64 {
        0.5 * self.spec.hx().powi(2)
    }

    pub fn apply(&self, f: &GridFn, tau: f64) -> Result<GridFn> {
        self.apply_combination(f, &[(1.0, tau)])
    }

    /// `Σ_i w_i e^{τ_iΔ} f`; τ = 0 is the identity.
    pub fn apply_combination(&self, f: &GridFn, terms: &[(f64, f64)]) -> Result<GridFn> {
        if f.spec != self.spec {
            return domain("grid function does not match the propagator grid");
        }
        if terms.iter().any(|t| !(t.1 >= 0.0 && t.1.is_finite())) {
            return domain("heat times must be finite and nonnegative");
        }
        let res = self.resolved_time();
        let mut out = GridFn::zeros(self.spec);
        let mut spectral: Vec<(f64, f64)> = terms.iter().copied().filter(|t| t.1 >= res).collect();
        let mut identity = 0.0;
        let nodes: Vec<f64> = std::iter::once(0.0).chain(SHORT_NODES.iter().map(|m| m * res)).collect();
        let mut node_w = vec![0.0; nodes.len()];
        for &(w, tau) in terms.iter().filter(|t| t.1 < res) {
            if tau == 0.0 {
                identity += w;
                continue;
            }
            match self.short {
                ShortTime::SemiLagrangian => out.axpy(w, &semi_lagrangian(f, tau)),
                ShortTime::Interpolate => {
                    for (k, nw) in node_w.iter_mut().enumerate() {
                        *nw += w * lagrange(&nodes, tau, k);
                    }
                }
            }
        }
        identity += node_w[0];
        spectral.extend(nodes.iter().zip(&node_w).skip(1).filter(|p| *p.1 != 0.0).map(|(&t, &w)| (w, t)));
        if !spectral.is_empty() {
            out.axpy(1.0, &self.spectral(f, &spectral));
        }
        if identity != 0.0 {
            out.axpy(identity, f);
        }
        Ok(out)
    }

    fn spectral(&self, f: &GridFn, terms: &[(f64, f64)]) -> GridFn {
        let spec = self.spec;
        let lat = Lattice::new(&spec);
        let (d, mt, nx) = (lat.d, lat.mt, spec.nx());
        let (hx, ht) = (spec.hx(), spec.ht());
        let log_eps = (1.0 / self.eps).ln();
        let tau_max = terms.iter().map(|t| t.1).fold(0.0, f64::max);
        // no wrap-around: period ≥ data span + twist + kernel reach in t
        let reach_x = (4.0 * tau_max * log_eps).sqrt().min(2.0 * spec.rx);
        let sigma_max = 2.0 * reach_x * spec.rx * (d as f64).sqrt();
        let reach_t = (4.0 * tau_max / PI * log_eps).min(12.0 * spec.rt);
        let p = smooth_length(((2.0 * spec.rt + sigma_max + reach_t) / ht).ceil() as usize + 1);
        let nk = p / 2 + 1;
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(p);
        let inv = planner.plan_fft_inverse(p);
        let ext = f.exterior;

        // forward transforms, frequency-major
        let rows = crate::exec::map_range(nx, |ix| {
            let mut buf = vec![Complex64::new(0.0, 0.0); p];
            for (b, v) in buf.iter_mut().zip(&f.values[ix * mt..(ix + 1) * mt]) {
                b.re = v - ext;
            }
            fwd.process(&mut buf);
            buf.truncate(nk);
            buf
        });
        let mut fhat = vec![Complex64::new(0.0, 0.0); nk * nx];
        for (ix, row) in rows.iter().enumerate() {
            for k in 0..nk {
                fhat[k * nx + ix] = row[k];
            }
        }
        drop(rows);

        let total_w: f64 = terms.iter().map(|t| t.0.abs()).sum();
        let cellx = hx.powi(d as i32);
        let half = lat.half;
        let ghat = crate::exec::map_range(nk, |k| {
            let lambda = 2.0 * PI * k as f64 / (p as f64 * ht);
            let mass: f64 = terms.iter().map(|&(w, tau)| w.abs() * central_mass(spec.n, tau, lambda)).sum();
            let mut out = vec![Complex64::new(0.0, 0.0); nx];
            if mass < self.eps * total_w {
                return out;
            }
            let amp_beta: Vec<(f64, f64)> = terms
                .iter()
                .map(|&(w, tau)| (w * cellx * central_amplitude(spec.n, tau, lambda), central_beta(tau, lambda)))
                .collect();
            let beta_min = amp_beta.iter().map(|ab| ab.1).fold(f64::INFINITY, f64::min);
            let r2 = log_eps / (beta_min * hx * hx);
            let amax = (r2.sqrt().floor() as isize).min(2 * half);
            // offsets inside the pruning ball with merged weights
            let mut offs: Vec<([isize; 4], f64)> = Vec::new();
            let side = (2 * amax + 1) as usize;
            for mut code in 0..side.pow(d as u32) {
                let mut a = [0isize; 4];
                let mut norm2 = 0isize;
                for q in (0..d).rev() {
                    a[q] = (code % side) as isize - amax;
                    code /= side;
                    norm2 += a[q] * a[q];
                }
                if norm2 as f64 > r2 {
                    continue;
                }
                let x2 = norm2 as f64 * hx * hx;
                let c: f64 = amp_beta.iter().map(|&(am, be)| am * (-be * x2).exp()).sum();
                offs.push((a, c));
            }
            let mmax = (2 * amax * half * lat.n as isize) as usize;
            let phase: Vec<Complex64> = (0..=2 * mmax)
                .map(|i| Complex64::from_polar(1.0, lambda * 2.0 * hx * hx * (i as f64 - mmax as f64)))
                .collect();
            let fk = &fhat[k * nx..(k + 1) * nx];
            if d == 2 {
                twisted_sum_2d(fk, &offs, amax, half, &phase, mmax as isize, &mut out);
                return out;
            }
            let mut kc = [0isize; 4];
            for (ix, o) in out.iter_mut().enumerate() {
                lat.coords(ix, &mut kc[..d]);
                let mut acc = Complex64::new(0.0, 0.0);
                'offs: for (a, c) in &offs {
                    let mut src = 0usize;
                    for q in 0..d {
                        let i = kc[q] - a[q] + half;
                        if i < 0 || i >= lat.mx as isize {
                            continue 'offs;
                        }
                        src = src * lat.mx + i as usize;
                    }
                    let m = lat.twist_index(&a[..d], &kc[..d]);
                    acc += fk[src] * phase[(m + mmax as isize) as usize] * *c;
                }
                *o = acc;
            }
            out
        });
        drop(fhat);

        let wsum: f64 = terms.iter().map(|t| t.0).sum();
        let values = crate::exec::map_range(nx, |ix| {
            let mut buf = vec![Complex64::new(0.0, 0.0); p];
            for k in 0..nk {
                buf[k] = ghat[k][ix];
            }
            for k in nk..p {
                buf[k] = buf[p - k].conj();
            }
            inv.process(&mut buf);
            (0..mt).map(|j| buf[j].re / p as f64 + ext * wsum).collect::<Vec<f64>>()
        });
        GridFn { spec, values: values.concat(), exterior: ext * wsum }
    }
}

pub(crate) fn lagrange(nodes: &[f64], s: f64, k: usize) -> f64 {
    nodes.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &x)| (s - x) / (nodes[k] - x)).product()
}

/// Smallest length ≥ `m` whose only prime factors are 2, 3 and 5.
pub fn smooth_length(m: usize) -> usize {
    let mut k = m.max(2);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}

/// `out[x] = Σ_a c_a z[m(a, x)] f[x − a]` for n = 1.
fn twisted_sum_2d(
    fk: &[Complex64],
    offs: &[([isize; 4], f64)],
    amax: isize,
    half: isize,
    phase: &[Complex64],
    mmax: isize,
    out: &mut [Complex64],
) {
    let w = (2 * amax + 1) as usize;
    let mut dense = vec![0.0; w * w];
    for (a, c) in offs {
        dense[(a[0] + amax) as usize * w + (a[1] + amax) as usize] = *c;
    }
    let mx = (2 * half + 1) as usize;
    for k1 in -half..=half {
        for k2 in -half..=half {
            let mut acc = Complex64::new(0.0, 0.0);
            let a1_lo = (k1 - half).max(-amax);
            let a1_hi = (k1 + half).min(amax);
            let a2_lo = (k2 - half).max(-amax);
            let a2_hi = (k2 + half).min(amax);
            for a1 in a1_lo..=a1_hi {
                let row = (k1 - a1 + half) as usize * mx;
                let crow = &dense[(a1 + amax) as usize * w..];
                let mut m = a2_lo * k1 - a1 * k2 + mmax;
                for a2 in a2_lo..=a2_hi {
                    let c = crow[(a2 + amax) as usize];
                    if c != 0.0 {
                        acc += fk[row + (k2 - a2 + half) as usize] * phase[m as usize] * c;
                    }
                    m += k1;
                }
            }
            out[(k1 + half) as usize * mx + (k2 + half) as usize] = acc;
        }
    }
}

/// Grid samples of `g ↦ H_τ(h₀⁻¹∘g)`, band-limited to the grid's central
/// frequencies.
pub fn free_column(spec: GridSpec, tau: f64, h0x: &[f64], h0t: f64) -> Result<GridFn> {
    if !(tau > 0.0) {
        return domain(format!("heat time must be positive, got {tau}"));
    }
    let (d, n, mt) = (spec.dims(), spec.n, spec.mt);
    let ht = spec.ht();
    let reach_t = 4.0 * tau / PI * (1.0 / DEFAULT_EPS).ln();
    let x0max = h0x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sigma_max = 2.0 * d as f64 * spec.rx * (spec.rx + x0max);
    let p = smooth_length(((2.0 * spec.rt + h0t.abs() + sigma_max + reach_t) / ht).ceil() as usize + mt);
    let mut planner = FftPlanner::<f64>::new();
    let inv = planner.plan_fft_inverse(p);
    let lambdas: Vec<f64> = (0..p)
        .map(|k| {
            let kk = if k < p / 2 { k as f64 } else { k as f64 - p as f64 };
            2.0 * PI * kk / (p as f64 * ht)
        })
        .collect();
    let amp: Vec<(f64, f64)> = lambdas.iter().map(|&l| (central_amplitude(n, tau, l), central_beta(tau, l))).collect();
    let cut = (1.0 / DEFAULT_EPS).ln() * 4.0 * tau;
    let rows = crate::exec::map_range(spec.nx(), |ix| {
        let mut x = [0.0; 4];
        spec.x_coords(ix, &mut x[..d]);
        let a2: f64 = (0..d).map(|q| (x[q] - h0x[q]).powi(2)).sum();
        if a2 > 2.0 * cut {
            return vec![0.0; mt];
        }
        let sigma: f64 = 2.0 * (0..n).map(|q| h0x[q] * x[n + q] - h0x[n + q] * x[q]).sum::<f64>();
        let shift = sigma - h0t - spec.rt;
        let mut buf: Vec<Complex64> = lambdas
            .iter()
            .zip(&amp)
            .map(|(&l, &(am, be))| Complex64::from_polar(am * (-be * a2).exp(), l * shift))
            .collect();
        inv.process(&mut buf);
        (0..mt).map(|j| (buf[j].re / (p as f64 * ht)).max(0.0)).collect::<Vec<f64>>()
    });
    Ok(GridFn { spec, values: rows.concat(), exterior: 0.0 })
}

/// Node set `(w_x, w_t, weight)` for `w ~ H_1`, exact for the moments used by
/// a second-order weak scheme.
pub fn moment_nodes(n: usize) -> Vec<(Vec<f64>, f64, f64)> {
    let d = 2 * n;
    // 3-point Gauss–Hermite for N(0, 2): 0, ±√6 with weights 2/3, 1/6, 1/6
    let xs = [(0.0, 2.0 / 3.0), (6f64.sqrt(), 1.0 / 6.0), (-(6f64.sqrt()), 1.0 / 6.0)];
    let mut nodes = Vec::new();
    for mut code in 0..3usize.pow(d as u32) {
        let mut x = vec![0.0; d];
        let mut wx = 1.0;
        for slot in x.iter_mut() {
            let (v, w) = xs[code % 3];
            *slot = v;
            wx *= w;
            code /= 3;
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        // conditional cumulants of t given x
        let k2 = 16.0 * n as f64 / 3.0 + 8.0 * r2 / 3.0;
        let k4 = 512.0 / 15.0 * (n as f64 + r2);
        let (m2, m4) = (k2, k4 + 3.0 * k2 * k2);
        let a = (m4 / m2).sqrt();
        let ps = m2 * m2 / (2.0 * m4);
        nodes.push((x.clone(), 0.0, wx * (1.0 - 2.0 * ps)));
        nodes.push((x.clone(), a, wx * ps));
        nodes.push((x, -a, wx * ps));
    }
    nodes
}

/// One semi-Lagrangian step `Σ_w W f(g∘w⁻¹)` with `w` from [`moment_nodes`]
/// scaled to time τ.
pub fn semi_lagrangian(f: &GridFn, tau: f64) -> GridFn {
    let spec = f.spec;
    let d = spec.dims();
    let n = spec.n;
    let nodes: Vec<(Vec<f64>, f64, f64)> =
        moment_nodes(n).into_iter().map(|(x, t, w)| (x.iter().map(|v| v * tau.sqrt()).collect(), t * tau, w)).collect();
    let mt = spec.mt;
    let rows = crate::exec::map_range(spec.nx(), |ix| {
        let mut x = [0.0; 4];
        spec.x_coords(ix, &mut x[..d]);
        let mut y = [0.0; 4];
        (0..mt)
            .map(|j| {
                let t = spec.t_coord(j);
                let mut acc = 0.0;
                for (wx, wt, w) in &nodes {
                    let mut tw = 0.0;
                    for q in 0..n {
                        tw += x[n + q] * wx[q] - x[q] * wx[n + q];
                    }
                    for q in 0..d {
                        y[q] = x[q] - wx[q];
                    }
                    acc += w * f.interp_cubic(&y[..d], t - wt - 2.0 * tw);
                }
                acc
            })
            .collect::<Vec<f64>>()
    });
    GridFn { spec, values: rows.concat(), exterior: f.exterior }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_nodes_match_sech_expansion() {
        // E e^{iλt} = sechⁿ(4λ): E t² = 16n, E t⁴ = 256·(3n² + 2n)
        for n in [1usize, 2] {
            let nodes = moment_nodes(n);
            let m = |k: i32| nodes.iter().map(|(_, t, w)| w * t.powi(k)).sum::<f64>();
            let nf = n as f64;
            assert!((m(0) - 1.0).abs() < 1e-14);
            assert!((m(2) - 16.0 * nf).abs() < 1e-10);
            assert!((m(4) - 256.0 * (3.0 * nf * nf + 2.0 * nf)).abs() < 1e-8, "{}", m(4));
            let x2: f64 = nodes.iter().map(|(x, _, w)| w * x.iter().map(|v| v * v).sum::<f64>()).sum();
            assert!((x2 - 4.0 * nf).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_are_fixed() {
        let spec = GridSpec::new(1, 2.0, 2.0, 9, 17).unwrap();
        let one = GridFn::constant(spec, 1.0).with_exterior(1.0);
        let p = HeatPropagator::new(spec);
        for tau in [0.01, 0.3] {
            let out = p.apply(&one, tau).unwrap();
            assert!(out.values.iter().all(|v| (v - 1.0).abs() < 1e-12), "{tau}");
        }
    }
}
