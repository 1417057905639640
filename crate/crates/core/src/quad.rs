//! One-dimensional quadrature: Gauss rules and adaptive Gauss–Kronrod.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    (x.iter().map(|v| c + h * v).collect(), w.iter().map(|v| v * h).collect())
}

/// Gauss–Hermite nodes and weights for the weight e^{-x²}, nodes ascending.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / (pp * pp);
    }
    // the recurrence above fills the positive half in descending order
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..m {
        nodes.push(-x[i]);
        weights.push(w[i]);
    }
    for i in (0..n / 2).rev() {
        nodes.push(x[i]);
        weights.push(w[i]);
    }
    if n % 2 == 1 {
        nodes[m - 1] = 0.0;
    }
    (nodes, weights)
}

/// Gauss rule for the weight u^{-1/2} e^{-u} on (0, ∞), via the positive
/// half of the 2n-point Gauss–Hermite rule (u = x²). Nodes ascending.
pub fn gauss_laguerre_half(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_hermite(2 * n);
    let mut u = Vec::with_capacity(n);
    let mut wu = Vec::with_capacity(n);
    for i in n..2 * n {
        u.push(x[i] * x[i]);
        wu.push(2.0 * w[i]);
    }
    (u, wu)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    /// Integral of |f|, the scale for relative tolerances on oscillatory integrands.
    pub abs_integral: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    abs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kr = WGK[7] * fc;
    let mut ga = WG[3] * fc;
    let mut ab = WGK[7] * fc.abs();
    for j in 0..7 {
        let f1 = f(c - h * XGK[j]);
        let f2 = f(c + h * XGK[j]);
        kr += WGK[j] * (f1 + f2);
        ab += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            ga += WG[j / 2] * (f1 + f2);
        }
    }
    Panel { a, b, value: kr * h, err: ((kr - ga) * h).abs(), abs: ab * h.abs() }
}

/// Adaptive Gauss–Kronrod (7/15) on [a, b] over an initial partition into
/// `initial` equal panels. Stops when the estimated error is below
/// max(abs_tol, rel_tol · ∫|f|).
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    initial: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<QuadResult> {
    let initial = initial.max(1);
    let mut heap = BinaryHeap::with_capacity(2 * initial);
    let width = (b - a) / initial as f64;
    let (mut value, mut err, mut abs) = (0.0, 0.0, 0.0);
    for i in 0..initial {
        let lo = a + width * i as f64;
        let hi = if i + 1 == initial { b } else { lo + width };
        let p = gk15(&f, lo, hi);
        value += p.value;
        err += p.err;
        abs += p.abs;
        heap.push(p);
    }
    let mut evals = 15 * initial;
    while err > abs_tol.max(rel_tol * abs) {
        if heap.len() >= max_panels {
            return Err(Error::Tolerance(format!(
                "Gauss–Kronrod did not converge: estimate {value:e}, error {err:e}, {} panels",
                heap.len()
            )));
        }
        let p = heap.pop().expect("non-empty heap");
        let m = 0.5 * (p.a + p.b);
        let l = gk15(&f, p.a, m);
        let r = gk15(&f, m, p.b);
        evals += 30;
        value += l.value + r.value - p.value;
        err += l.err + r.err - p.err;
        abs += l.abs + r.abs - p.abs;
        heap.push(l);
        heap.push(r);
        if err < 0.0 {
            // accumulated cancellation; recompute from the panels
            err = heap.iter().map(|q| q.err).sum();
        }
    }
    let value = heap.iter().map(|q| q.value).sum();
    Ok(QuadResult { value, abs_error: err, abs_integral: abs, evaluations: evals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        for k in 0..20 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((s - exact).abs() < 1e-14, "k={k} {s} {exact}");
        }
        let (x1, w1) = gauss_legendre(1);
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn hermite_moments() {
        for n in [1, 2, 3, 4, 7, 20, 48] {
            let (x, w) = gauss_hermite(n);
            for k in 0..(2 * n).min(30) {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let scale: f64 = x.iter().zip(&w).map(|(x, w)| (w * x.powi(k as i32)).abs()).sum();
                // ∫ x^k e^{-x²} = Γ((k+1)/2) for even k
                let exact = if k % 2 == 1 { 0.0 } else { (1..=k / 2).fold(PI.sqrt(), |acc, j| acc * (j as f64 - 0.5)) };
                assert!((s - exact).abs() < 1e-12 * scale.max(1.0), "n={n} k={k} {s} {exact}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn half_laguerre_total_weight() {
        let (u, w) = gauss_laguerre_half(24);
        assert!((w.iter().sum::<f64>() - PI.sqrt()).abs() < 1e-13);
        assert!(u.windows(2).all(|p| p[0] < p[1]) && u[0] > 0.0);
    }

    #[test]
    fn kronrod_oscillatory() {
        let r = integrate(|x: f64| (30.0 * x).cos() * (-x).exp(), 0.0, 40.0, 8, 0.0, 1e-12, 4000).unwrap();
        let exact = 1.0 / (1.0 + 900.0);
        assert!((r.value - exact).abs() < 1e-12, "{} {}", r.value, exact);
    }
}
