//! Riemann-sum group convolution `(f ∗ K)(g) = Σ_h f(h) K(h⁻¹∘g) · cell`.
//!
//! On the lattice, `h⁻¹∘g = (a·hx, (j − j')·ht + 2hx²·m)` where `a` is the
//! integer horizontal offset, and `m = Σ_j (a_{n+j} k_j − a_j k_{n+j})` with `k`
//! the integer coordinates of `g`. Kernel values therefore depend only on
//! `(a, m, j − j')`; each needed `(a, m)` column is evaluated once.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::free::KernelTable;
use crate::error::{domain, Result};
use crate::hgroup::{koranyi_norm_raw, GridFn, GridSpec};

/// Convolution kernel on H^n.
#[derive(Clone, Debug)]
pub enum ConvKernel {
    /// The free heat kernel `H_s`.
    Free { s: f64 },
    /// Kernel values on a grid centered at the identity, linearly interpolated
    /// and 0 outside that grid.
    Tabulated(GridFn),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Convolved {
    pub f: GridFn,
    /// Truncation radius used (∞ for the full sum).
    pub radius: f64,
    /// Width of the band near the box boundary where zero-padding pollutes
    /// the result.
    pub contaminated_margin: f64,
    /// The truncation radius exceeds the box margin of some node.
    pub boundary_flag: bool,
}

/// Lattice geometry shared by the direct and Fourier paths.
pub(crate) struct Lattice {
    pub d: usize,
    pub n: usize,
    pub mx: usize,
    pub mt: usize,
    pub half: isize,
}

impl Lattice {
    pub fn new(spec: &GridSpec) -> Self {
        Lattice { d: spec.dims(), n: spec.n, mx: spec.mx, mt: spec.mt, half: (spec.mx as isize - 1) / 2 }
    }

    /// Centered integer coordinates of horizontal row `ix`.
    pub fn coords(&self, mut ix: usize, out: &mut [isize]) {
        for k in (0..self.d).rev() {
            out[k] = (ix % self.mx) as isize - self.half;
            ix /= self.mx;
        }
    }

    pub fn row_of(&self, c: &[isize]) -> Option<usize> {
        let mut ix = 0usize;
        for &v in c {
            let i = v + self.half;
            if i < 0 || i >= self.mx as isize {
                return None;
            }
            ix = ix * self.mx + i as usize;
        }
        Some(ix)
    }

    /// Twist index `m(a, k)`.
    #[inline]
    pub fn twist_index(&self, a: &[isize], k: &[isize]) -> isize {
        let n = self.n;
        (0..n).map(|j| a[n + j] * k[j] - a[j] * k[n + j]).sum()
    }

    /// All offsets `a = k − k'` with both ends in the box, as (offset, code).
    pub fn offsets(&self) -> Vec<Vec<isize>> {
        let side = 2 * self.mx - 1;
        let total = side.pow(self.d as u32);
        (0..total)
            .map(|mut c| {
                let mut a = vec![0isize; self.d];
                for k in (0..self.d).rev() {
                    a[k] = (c % side) as isize - (self.mx as isize - 1);
                    c /= side;
                }
                a
            })
            .collect()
    }
}

struct Columns {
    /// (offset index, m) → column of kernel values for Δj = −(Mt−1) … Mt−1
    index: HashMap<(usize, isize), usize>,
    data: Vec<Vec<f64>>,
}

fn kernel_columns(f_spec: &GridSpec, kernel: &ConvKernel, radius: f64) -> Result<(Vec<Vec<isize>>, Columns)> {
    let lat = Lattice::new(f_spec);
    let (hx, ht) = (f_spec.hx(), f_spec.ht());
    let offsets = lat.offsets();
    let mut needed: Vec<(usize, isize)> = Vec::new();
    let mut index = HashMap::new();
    let mut k = vec![0isize; lat.d];
    let mut src = vec![0isize; lat.d];
    for ix in 0..f_spec.nx() {
        lat.coords(ix, &mut k);
        for (ai, a) in offsets.iter().enumerate() {
            for q in 0..lat.d {
                src[q] = k[q] - a[q];
            }
            if lat.row_of(&src).is_none() {
                continue;
            }
            let m = lat.twist_index(a, &k);
            index.entry((ai, m)).or_insert_with(|| {
                needed.push((ai, m));
                needed.len() - 1
            });
        }
    }
    let span = 2 * lat.mt - 1;
    let max_sigma = needed.iter().map(|&(_, m)| m.unsigned_abs()).max().unwrap_or(0) as f64 * 2.0 * hx * hx;
    let t_max = (lat.mt - 1) as f64 * ht + max_sigma;
    let table = match kernel {
        ConvKernel::Free { s } => Some(KernelTable::new(f_spec.n, *s, t_max)?),
        ConvKernel::Tabulated(g) => {
            if g.spec.n != f_spec.n {
                return domain("tabulated kernel dimension mismatch");
            }
            None
        }
    };
    let data = crate::exec::map_range(needed.len(), |c| {
        let (ai, m) = needed[c];
        let a: Vec<f64> = offsets[ai].iter().map(|&v| v as f64 * hx).collect();
        let x2: f64 = a.iter().map(|v| v * v).sum();
        let sigma = 2.0 * hx * hx * m as f64;
        (0..span)
            .map(|p| {
                let u = (p as isize - (lat.mt as isize - 1)) as f64 * ht + sigma;
                if koranyi_norm_raw(&a, u) >= radius {
                    return 0.0;
                }
                match (&table, kernel) {
                    (Some(tab), _) => tab.eval(x2, u),
                    (None, ConvKernel::Tabulated(g)) => g.interp_linear(&a, u),
                    _ => unreachable!(),
                }
            })
            .collect::<Vec<f64>>()
    });
    Ok((offsets, Columns { index, data }))
}

fn finish(spec: GridSpec, values: Vec<f64>, radius: f64) -> Convolved {
    let margin = spec.rx.min(spec.rt.sqrt());
    Convolved {
        f: GridFn { spec, values, exterior: 0.0 },
        radius,
        contaminated_margin: radius,
        boundary_flag: radius > margin,
    }
}

/// Direct sum over lattice pairs with `d(h, g) < radius` (`∞` gives the full
/// O(N²) sum).
pub fn convolve_direct(f: &GridFn, kernel: &ConvKernel, radius: f64) -> Result<Convolved> {
    let spec = f.spec;
    let (offsets, cols) = kernel_columns(&spec, kernel, radius)?;
    let lat = Lattice::new(&spec);
    let (mt, cell) = (lat.mt, spec.cell_volume());
    let rows = crate::exec::map_range(spec.nx(), |ix| {
        let mut k = vec![0isize; lat.d];
        let mut src = vec![0isize; lat.d];
        lat.coords(ix, &mut k);
        let mut out = vec![0.0; mt];
        for (ai, a) in offsets.iter().enumerate() {
            for q in 0..lat.d {
                src[q] = k[q] - a[q];
            }
            let Some(sx) = lat.row_of(&src) else { continue };
            let col = &cols.data[cols.index[&(ai, lat.twist_index(a, &k))]];
            let frow = &f.values[sx * mt..(sx + 1) * mt];
            for (j, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (jp, fv) in frow.iter().enumerate() {
                    acc += fv * col[j + mt - 1 - jp];
                }
                *o += acc;
            }
        }
        out.iter_mut().for_each(|v| *v *= cell);
        out
    });
    Ok(finish(spec, rows.concat(), radius))
}

/// The same sum with the central variable handled by zero-padded FFTs.
pub fn convolve_fourier(f: &GridFn, kernel: &ConvKernel, radius: f64) -> Result<Convolved> {
    let spec = f.spec;
    let (offsets, cols) = kernel_columns(&spec, kernel, radius)?;
    let lat = Lattice::new(&spec);
    let mt = lat.mt;
    let p = (3 * mt - 2).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(p);
    let inv: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_inverse(p);
    let spectrum = |data: &[f64], fft: &Arc<dyn rustfft::Fft<f64>>| {
        let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); p];
        for (b, v) in buf.iter_mut().zip(data) {
            b.re = *v;
        }
        fft.process(&mut buf);
        buf
    };
    let fhat = crate::exec::map_range(spec.nx(), |ix| spectrum(&f.values[ix * mt..(ix + 1) * mt], &fwd));
    let khat = crate::exec::map_range(cols.data.len(), |c| spectrum(&cols.data[c], &fwd));
    let cell = spec.cell_volume();
    let rows = crate::exec::map_range(spec.nx(), |ix| {
        let mut k = vec![0isize; lat.d];
        let mut src = vec![0isize; lat.d];
        lat.coords(ix, &mut k);
        let mut acc = vec![Complex64::new(0.0, 0.0); p];
        for (ai, a) in offsets.iter().enumerate() {
            for q in 0..lat.d {
                src[q] = k[q] - a[q];
            }
            let Some(sx) = lat.row_of(&src) else { continue };
            let kh = &khat[cols.index[&(ai, lat.twist_index(a, &k))]];
            for ((o, x), y) in acc.iter_mut().zip(&fhat[sx]).zip(kh) {
                *o += x * y;
            }
        }
        inv.process(&mut acc);
        // the kernel column starts at Δj = −(Mt−1)
        (0..mt).map(|j| acc[j + mt - 1].re * cell / p as f64).collect::<Vec<f64>>()
    });
    Ok(finish(spec, rows.concat(), radius))
}

/// Truncation radius `κ√s` with `κ = √(ln(1/ε_tail)/A₀)`.
pub fn truncation_radius(s: f64, eps_tail: f64, a0: f64) -> f64 {
    ((1.0 / eps_tail).ln() / a0).sqrt() * s.sqrt()
}
