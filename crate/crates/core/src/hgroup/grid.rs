//! Node-centered anisotropic box grids on H^n.
//!
//! Nodes sit at `x_k = −Rx + i·hx` (i < Mx) on each of the 2n horizontal axes
//! and `t = −Rt + j·ht` (j < Mt); Mx and Mt are odd so the origin is a node.
//! Values are stored axis-major: `x_1` varies slowest, `t` fastest, i.e. the
//! flat index is `((i_1·Mx + i_2)·Mx + … + i_{2n})·Mt + j`.

use serde::{Deserialize, Serialize};

use super::HPoint;
use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "Rx")]
    pub rx: f64,
    #[serde(rename = "Rt")]
    pub rt: f64,
    #[serde(rename = "Mx")]
    pub mx: usize,
    #[serde(rename = "Mt")]
    pub mt: usize,
}

impl GridSpec {
    pub fn new(n: usize, rx: f64, rt: f64, mx: usize, mt: usize) -> Result<Self> {
        let g = GridSpec { n, rx, rt, mx, mt };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > 2 {
            return domain(format!("grids support n ∈ {{1, 2}}, got n = {}", self.n));
        }
        if self.mx < 3 || self.mt < 3 || self.mx % 2 == 0 || self.mt % 2 == 0 {
            return domain(format!("Mx and Mt must be odd and ≥ 3, got {} and {}", self.mx, self.mt));
        }
        if !(self.rx > 0.0 && self.rt > 0.0 && self.rx.is_finite() && self.rt.is_finite()) {
            return domain("box half-widths must be positive");
        }
        Ok(())
    }

    /// Grid with spacing `h` horizontally and `h²` centrally.
    pub fn with_spacing(n: usize, rx: f64, rt: f64, h: f64) -> Result<Self> {
        let half_x = (rx / h).round() as usize;
        let half_t = (rt / (h * h)).round() as usize;
        GridSpec::new(n, half_x as f64 * h, half_t as f64 * h * h, 2 * half_x + 1, 2 * half_t + 1)
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.rx / (self.mx - 1) as f64
    }

    pub fn ht(&self) -> f64 {
        2.0 * self.rt / (self.mt - 1) as f64
    }

    pub fn dims(&self) -> usize {
        2 * self.n
    }

    /// Number of horizontal nodes Mx^{2n}.
    pub fn nx(&self) -> usize {
        self.mx.pow(self.dims() as u32)
    }

    pub fn len(&self) -> usize {
        self.nx() * self.mt
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx().powi(self.dims() as i32) * self.ht()
    }

    pub fn box_volume(&self) -> f64 {
        (2.0 * self.rx).powi(self.dims() as i32) * 2.0 * self.rt
    }

    pub fn x_coord(&self, i: usize) -> f64 {
        -self.rx + i as f64 * self.hx()
    }

    pub fn t_coord(&self, j: usize) -> f64 {
        -self.rt + j as f64 * self.ht()
    }

    /// Horizontal multi-index of horizontal node `ix`.
    pub fn x_index(&self, mut ix: usize, out: &mut [usize]) {
        for k in (0..self.dims()).rev() {
            out[k] = ix % self.mx;
            ix /= self.mx;
        }
    }

    pub fn x_coords(&self, ix: usize, out: &mut [f64]) {
        let mut idx = [0usize; 4];
        self.x_index(ix, &mut idx[..self.dims()]);
        for k in 0..self.dims() {
            out[k] = self.x_coord(idx[k]);
        }
    }

    pub fn point(&self, idx: usize) -> HPoint {
        let mut x = vec![0.0; self.dims()];
        self.x_coords(idx / self.mt, &mut x);
        HPoint { x, t: self.t_coord(idx % self.mt) }
    }

    /// Nearest node to `p`, if `p` lies in the box.
    pub fn nearest(&self, p: &HPoint) -> Option<usize> {
        if p.n() != self.n {
            return None;
        }
        let (hx, ht) = (self.hx(), self.ht());
        let mut ix = 0usize;
        for &x in &p.x {
            let i = ((x + self.rx) / hx).round();
            if i < 0.0 || i > (self.mx - 1) as f64 {
                return None;
            }
            ix = ix * self.mx + i as usize;
        }
        let j = ((p.t + self.rt) / ht).round();
        if j < 0.0 || j > (self.mt - 1) as f64 {
            return None;
        }
        Some(ix * self.mt + j as usize)
    }

    pub fn origin(&self) -> usize {
        self.nearest(&HPoint::identity(self.n)).expect("origin is a node")
    }

    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        x.iter().all(|v| v.abs() <= self.rx) && t.abs() <= self.rt
    }

    /// Distance in each axis to the box boundary, in units where the central
    /// axis is measured by √|t| (the homogeneous scaling).
    pub fn margin(&self, x: &[f64], t: f64) -> f64 {
        let mx = x.iter().map(|v| self.rx - v.abs()).fold(f64::INFINITY, f64::min);
        let mt = (self.rt - t.abs()).max(0.0).sqrt();
        mx.min(mt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    /// Value assumed outside the box (0 is zero-padding).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub exterior: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[inline]
fn cubic_weights(u: f64) -> [f64; 4] {
    [
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    ]
}

impl GridFn {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return domain(format!("expected {} values, got {}", spec.len(), values.len()));
        }
        Ok(GridFn { spec, values, exterior: 0.0 })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        GridFn { spec, values: vec![0.0; spec.len()], exterior: 0.0 }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        GridFn { spec, values: vec![c; spec.len()], exterior: 0.0 }
    }

    /// Samples `f(x, t)` at every node.
    pub fn from_fn<F: Fn(&[f64], f64) -> f64 + Sync + Send>(spec: GridSpec, f: F) -> Self {
        let mt = spec.mt;
        let rows = crate::exec::map_range(spec.nx(), |ix| {
            let mut x = [0.0; 4];
            spec.x_coords(ix, &mut x[..spec.dims()]);
            (0..mt).map(|j| f(&x[..spec.dims()], spec.t_coord(j))).collect::<Vec<_>>()
        });
        GridFn { spec, values: rows.concat(), exterior: 0.0 }
    }

    /// Discrete delta of unit mass at node `idx`.
    pub fn delta(spec: GridSpec, idx: usize) -> Self {
        let mut f = GridFn::zeros(spec);
        f.values[idx] = 1.0 / spec.cell_volume();
        f
    }

    pub fn with_exterior(mut self, v: f64) -> Self {
        self.exterior = v;
        self
    }

    pub fn check_same(&self, other: &GridFn) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Domain("grid functions live on different grids".into()));
        }
        Ok(())
    }

    pub fn integral(&self) -> f64 {
        crate::exec::pairwise_sum(&self.values) * self.spec.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
        self.exterior *= c;
    }

    pub fn axpy(&mut self, a: f64, other: &GridFn) {
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
        self.exterior += a * other.exterior;
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> GridFn {
        GridFn { spec: self.spec, values: self.values.iter().map(|&v| f(v)).collect(), exterior: f(self.exterior) }
    }

    pub fn value_at_node(&self, p: &HPoint) -> Option<f64> {
        self.spec.nearest(p).map(|i| self.values[i])
    }

    fn locate(&self, c: f64, lo: f64, h: f64, m: usize) -> (isize, f64) {
        let s = (c - lo) / h;
        let i = s.floor();
        let i = i.clamp(0.0, (m - 1) as f64);
        (i as isize, s - i)
    }

    /// Multilinear interpolation; `exterior` outside the box.
    pub fn interp_linear(&self, x: &[f64], t: f64) -> f64 {
        let sp = &self.spec;
        if !sp.contains(x, t) {
            return self.exterior;
        }
        let d = sp.dims();
        let mut base = [0isize; 5];
        let mut frac = [0.0; 5];
        let mut extent = [sp.mx; 5];
        for k in 0..d {
            let (i, u) = self.locate(x[k], -sp.rx, sp.hx(), sp.mx);
            base[k] = i;
            frac[k] = u;
        }
        let (j, u) = self.locate(t, -sp.rt, sp.ht(), sp.mt);
        base[d] = j;
        frac[d] = u;
        extent[d] = sp.mt;
        let mut acc = 0.0;
        for corner in 0..(1usize << (d + 1)) {
            let mut w = 1.0;
            let mut idx = 0usize;
            let mut outside = false;
            for k in 0..=d {
                let bit = (corner >> k) & 1;
                let i = base[k] + bit as isize;
                if i >= extent[k] as isize {
                    outside = true;
                }
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                idx = idx * extent[k] + (i.max(0) as usize).min(extent[k] - 1);
            }
            if w != 0.0 {
                acc += w * if outside { self.exterior } else { self.values[idx] };
            }
        }
        acc
    }

    /// Tensor cubic Lagrange interpolation; stencil nodes outside the box
    /// take the `exterior` value.
    pub fn interp_cubic(&self, x: &[f64], t: f64) -> f64 {
        let sp = &self.spec;
        let d = sp.dims();
        let (hx, ht) = (sp.hx(), sp.ht());
        let mut base = [0isize; 5];
        let mut w = [[0.0; 4]; 5];
        let mut extent = [sp.mx; 5];
        for k in 0..d {
            let s = (x[k] + sp.rx) / hx;
            if !(s > -1.0 && s < sp.mx as f64) {
                return self.exterior;
            }
            let i = s.floor();
            base[k] = i as isize - 1;
            w[k] = cubic_weights(s - i);
        }
        let s = (t + sp.rt) / ht;
        if !(s > -1.0 && s < sp.mt as f64) {
            return self.exterior;
        }
        let i = s.floor();
        base[d] = i as isize - 1;
        w[d] = cubic_weights(s - i);
        extent[d] = sp.mt;
        if d == 2 {
            return self.cubic3(&base, &w);
        }
        let dims = d + 1;
        let mut acc = 0.0;
        for code in 0..(1usize << (2 * dims)) {
            let mut wt = 1.0;
            let mut idx = 0usize;
            let mut outside = false;
            for k in 0..dims {
                let o = (code >> (2 * (dims - 1 - k))) & 3;
                let i = base[k] + o as isize;
                if i < 0 || i >= extent[k] as isize {
                    outside = true;
                    idx = 0;
                } else if !outside {
                    idx = idx * extent[k] + i as usize;
                }
                wt *= w[k][o];
            }
            acc += wt * if outside { self.exterior } else { self.values[idx] };
        }
        acc
    }

    fn cubic3(&self, base: &[isize; 5], w: &[[f64; 4]; 5]) -> f64 {
        let (mx, mt) = (self.spec.mx as isize, self.spec.mt as isize);
        let ext = self.exterior;
        let mut acc = 0.0;
        for a in 0..4 {
            let i0 = base[0] + a as isize;
            for b in 0..4 {
                let i1 = base[1] + b as isize;
                let wab = w[0][a] * w[1][b];
                if wab == 0.0 {
                    continue;
                }
                if i0 < 0 || i0 >= mx || i1 < 0 || i1 >= mx {
                    acc += wab * ext * (w[2][0] + w[2][1] + w[2][2] + w[2][3]);
                    continue;
                }
                let row = ((i0 * mx + i1) * mt) as usize;
                let mut s = 0.0;
                for c in 0..4 {
                    let j = base[2] + c as isize;
                    s += w[2][c] * if j < 0 || j >= mt { ext } else { self.values[row + j as usize] };
                }
                acc += wab * s;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_roundtrip() {
        let g = GridSpec::new(1, 2.0, 4.0, 9, 17).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"n":1,"Rx":2.0,"Rt":4.0,"Mx":9,"Mt":17}"#);
        let f = GridFn::from_fn(g, |x, t| x[0] + 2.0 * x[1] + t);
        let back: GridFn = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
        assert!(GridSpec::new(1, 2.0, 4.0, 8, 17).is_err());
    }

    #[test]
    fn indexing_is_axis_major() {
        let g = GridSpec::new(1, 1.0, 1.0, 3, 5).unwrap();
        let p = g.point(1 * 3 * 5 + 2 * 5 + 4);
        assert_eq!(p.x, vec![0.0, 1.0]);
        assert_eq!(p.t, 1.0);
        assert_eq!(g.point(g.origin()), HPoint::identity(1));
        assert_eq!(g.nearest(&p), Some(1 * 3 * 5 + 2 * 5 + 4));
    }

    #[test]
    fn interpolation_exact_on_polynomials() {
        let g = GridSpec::new(1, 2.0, 3.0, 9, 13).unwrap();
        let cubic = |x: &[f64], t: f64| x[0].powi(3) - x[0] * x[1] * t + t * t * t - 2.0;
        let f = GridFn::from_fn(g, cubic);
        let lin = GridFn::from_fn(g, |x, t| 1.0 + x[0] - 3.0 * x[1] + 0.5 * t);
        for &(a, b, t) in &[(0.13, -0.77, 0.4), (-1.2, 0.9, -1.1), (0.5, 0.5, 0.0)] {
            let x = [a, b];
            assert!((f.interp_cubic(&x, t) - cubic(&x, t)).abs() < 1e-12);
            assert!((lin.interp_linear(&x, t) - (1.0 + a - 3.0 * b + 0.5 * t)).abs() < 1e-12);
        }
        assert_eq!(f.interp_cubic(&[5.0, 0.0], 0.0), 0.0);
    }
}
