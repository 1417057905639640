//! Verification experiments and their reports.
//!
//! Each experiment returns pass/fail criteria decided only by the configured
//! tolerances, plus plot-ready tables. [`run_experiment`] writes
//! `report.json` and `tables/<name>.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatkernel::{SampledPotential, SplittingPlan};
use crate::hgroup::{koranyi_norm_raw, twist, unit_ball_points, GridFn, GridSpec, HPoint, CONE_INSET};
use crate::poisson::{poisson_with, SubordinationRule};
use crate::potential::PotentialModel;
use crate::spaces::{cone_max_from_slabs, cone_max_grid, lp_norm, ConeParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Dirichlet,
    SemigroupIdentity,
    MaxPrinciple,
    Vanishing,
}

/// Boundary datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Datum {
    /// `A·exp(1 − 1/(1 − u))` for `u = |x − c_x|²/a² + (t − c_t)²/b² < 1`.
    Bump {
        amplitude: f64,
        radius_x: f64,
        radius_t: f64,
        #[serde(default)]
        center: Option<HPoint>,
    },
    Zero,
}

impl Default for Datum {
    fn default() -> Self {
        Datum::Bump { amplitude: 1.0, radius_x: 2.0, radius_t: 2.0, center: None }
    }
}

impl Datum {
    pub fn sample(&self, spec: GridSpec) -> Result<GridFn> {
        match self {
            Datum::Zero => Ok(GridFn::zeros(spec)),
            Datum::Bump { amplitude, radius_x, radius_t, center } => {
                if !(*radius_x > 0.0 && *radius_t > 0.0) {
                    return Err(Error::Config("bump radii must be positive".into()));
                }
                let c = center.clone().unwrap_or_else(|| HPoint::identity(spec.n));
                if c.x.len() != spec.dims() {
                    return Err(Error::Dimension(c.n(), spec.n));
                }
                Ok(GridFn::from_fn(spec, |x, t| {
                    let mut u = (t - c.t).powi(2) / radius_t.powi(2);
                    for (a, b) in x.iter().zip(&c.x) {
                        u += (a - b).powi(2) / radius_x.powi(2);
                    }
                    if u < 1.0 {
                        amplitude * (1.0 - 1.0 / (1.0 - u)).exp()
                    } else {
                        0.0
                    }
                }))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub nodes: usize,
    pub a_min: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig { nodes: 48, a_min: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub kernel: f64,
    pub semigroup: f64,
    pub theorem: f64,
    /// Cone and L^p convergence of the Dirichlet problem.
    pub dirichlet: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { kernel: 1e-6, semigroup: 2e-3, theorem: 1e-2, dirichlet: 5e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirichletParams {
    pub p: Vec<f64>,
    pub cone: ConeParams,
    /// Heights for `‖u(·, s) − f‖_p`, decreasing.
    pub lp_heights: Vec<f64>,
    /// Apexes for the cone convergence table (snapped to nodes).
    pub apexes: Vec<HPoint>,
}

impl Default for DirichletParams {
    fn default() -> Self {
        let p = |x: f64, y: f64, t: f64| HPoint { x: vec![x, y], t };
        DirichletParams {
            p: vec![1.0, 2.0],
            cone: ConeParams { s_min: 1e-3, s_max: 0.5, levels: 8, per_level: 32 },
            lp_heights: vec![0.3, 0.1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
            apexes: vec![
                p(0.0, 0.0, 0.0),
                p(0.667, 0.0, 0.0),
                p(1.0, -0.667, 0.222),
                p(0.0, 1.333, -0.444),
                p(-1.0, 0.333, 1.0),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemigroupParams {
    pub s: f64,
    /// The `s_k` ladder (geometric, decreasing, may end with 0).
    pub s_k: Vec<f64>,
    /// Bulk: nodes with `|x_i| ≤ f·Rx` and `|t| ≤ f·Rt`.
    pub bulk_fraction: f64,
}

impl Default for SemigroupParams {
    fn default() -> Self {
        SemigroupParams { s: 0.25, s_k: vec![0.5, 0.25, 0.125, 0.0625, 0.03125, 0.0], bulk_fraction: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxPrincipleParams {
    /// Half-width of Ω in grid cells along each horizontal axis.
    pub x_half: usize,
    /// Half-width of Ω in grid cells along t.
    pub t_half: usize,
    pub s0: f64,
    pub s1: f64,
    /// Number of height intervals between `s0` and `s1`.
    pub s_steps: usize,
    /// Tent half-width in cells along every axis.
    pub tent_half_width: usize,
    /// Perturb u by `ε·(interior bump)`; the criteria are then expected to fail.
    pub perturbation: Option<f64>,
}

impl Default for MaxPrincipleParams {
    fn default() -> Self {
        MaxPrincipleParams {
            x_half: 4,
            t_half: 16,
            s0: 0.5,
            s1: 1.0,
            s_steps: 10,
            tent_half_width: 2,
            perturbation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VanishingParams {
    pub eps: f64,
    /// Poisson heights, increasing from 0.
    pub heights: Vec<f64>,
}

impl Default for VanishingParams {
    fn default() -> Self {
        VanishingParams { eps: 1e-2, heights: (0..=16).map(|k| 0.25 * k as f64).collect() }
    }
}

fn default_grid() -> GridSpec {
    GridSpec { n: 1, rx: 4.0, rt: 12.0, mx: 25, mt: 217 }
}

fn default_tau() -> f64 {
    0.125
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "zero_potential")]
    pub potential: PotentialModel,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default)]
    pub datum: Datum,
    #[serde(default)]
    pub rule: RuleConfig,
    #[serde(default = "default_tau")]
    pub tau_max: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub dirichlet: DirichletParams,
    #[serde(default)]
    pub semigroup: SemigroupParams,
    #[serde(default)]
    pub max_principle: MaxPrincipleParams,
    #[serde(default)]
    pub vanishing: VanishingParams,
}

fn zero_potential() -> PotentialModel {
    PotentialModel::Constant { c: 0.0 }
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            potential: zero_potential(),
            grid: default_grid(),
            datum: Datum::default(),
            rule: RuleConfig::default(),
            tau_max: default_tau(),
            tolerances: Tolerances::default(),
            dirichlet: DirichletParams::default(),
            semigroup: SemigroupParams::default(),
            max_principle: MaxPrincipleParams::default(),
            vanishing: VanishingParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.grid.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.potential.validate().map_err(|e| Error::Config(e.to_string()))?;
        let t = &self.tolerances;
        if ![t.kernel, t.semigroup, t.theorem, t.dirichlet].iter().all(|v| *v > 0.0 && v.is_finite()) {
            return cfg("tolerances must be positive".into());
        }
        if !(self.tau_max > 0.0) {
            return cfg("tau_max must be positive".into());
        }
        if self.rule.nodes < 4 || !(self.rule.a_min > 0.0) {
            return cfg("the subordination rule needs ≥ 4 nodes and a_min > 0".into());
        }
        match self.experiment {
            Experiment::Dirichlet => {
                let d = &self.dirichlet;
                if d.p.iter().any(|p| !(*p >= 1.0 && p.is_finite())) {
                    return cfg("Dirichlet exponents must lie in [1, ∞)".into());
                }
                if !(d.cone.s_min > 0.0 && d.cone.s_min < d.cone.s_max) || d.cone.levels < 2 || d.cone.per_level == 0 {
                    return cfg("cone parameters need 0 < s_min < s_max, levels ≥ 2".into());
                }
                if d.lp_heights.is_empty() || d.lp_heights.iter().any(|s| !(*s > 0.0)) {
                    return cfg("lp_heights must be positive".into());
                }
            }
            Experiment::SemigroupIdentity => {
                let s = &self.semigroup;
                if !(s.s > 0.0) || s.s_k.is_empty() || s.s_k.iter().any(|v| !(*v >= 0.0)) {
                    return cfg("semigroup needs s > 0 and s_k ≥ 0".into());
                }
                if !(s.bulk_fraction > 0.0 && s.bulk_fraction <= 1.0) {
                    return cfg("bulk_fraction must lie in (0, 1]".into());
                }
            }
            Experiment::MaxPrinciple => {
                let m = &self.max_principle;
                if !(m.s0 > 0.0 && m.s0 < m.s1) || m.s_steps < 2 * m.tent_half_width + 2 {
                    return cfg("max-principle needs 0 < s0 < s1 and enough height steps for a tent".into());
                }
                if m.tent_half_width == 0 || m.x_half < m.tent_half_width + 2 || m.t_half < m.tent_half_width + 2 {
                    return cfg("Ω must hold a tent plus one cell".into());
                }
                if 2 * m.x_half + 1 > self.grid.mx || 2 * m.t_half + 1 > self.grid.mt {
                    return cfg("Ω exceeds the grid".into());
                }
            }
            Experiment::Vanishing => {
                let v = &self.vanishing;
                if !(v.eps > 0.0) || v.heights.first() != Some(&0.0) || v.heights.windows(2).any(|w| w[1] <= w[0]) {
                    return cfg("vanishing needs eps > 0 and increasing heights starting at 0".into());
                }
            }
        }
        Ok(())
    }

    fn solver(&self) -> Result<Solver> {
        Ok(Solver {
            rule: SubordinationRule::log_trapezoid(self.rule.nodes, self.rule.a_min)?,
            plan: SplittingPlan::strang(1.0, self.tau_max)?,
        })
    }
}

/// Subordination rule and splitting plan shared by an experiment.
#[derive(Clone, Debug)]
pub struct Solver {
    pub rule: SubordinationRule,
    pub plan: SplittingPlan,
}

impl Solver {
    pub fn new(rule: SubordinationRule, plan: SplittingPlan) -> Self {
        Solver { rule, plan }
    }

    /// `u(·, s)` for every height (`s = 0` gives `f`).
    pub fn poisson_many(&self, f: &GridFn, v: &PotentialModel, heights: &[f64]) -> Result<Vec<GridFn>> {
        let sv = SampledPotential::new(v, f.spec, None)?;
        heights
            .iter()
            .map(|&s| if s == 0.0 { Ok(f.clone()) } else { poisson_with(f, &sv, s, &self.rule, &self.plan) })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Criterion {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Criterion { name: name.into(), value, threshold, pass: value <= threshold }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}

/// Every entry at most the previous one plus `slack`.
fn non_increasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + slack)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirichletReport {
    /// Per apex: `sup{|u(h, s) − f(g₀)| : h in the cone, s ≤ σ}` at the smallest σ.
    pub cone_sup_at_min: Vec<f64>,
    /// Per p: `(s, ‖u(·, s) − f‖_p)` with s decreasing.
    pub lp_curves: Vec<(f64, Vec<(f64, f64)>)>,
    /// Per p: `(‖u*‖_p, ‖f‖_{H^p_L})`.
    pub maximal_norms: Vec<(f64, f64, f64)>,
    /// `(s, ‖(e^{−s√L} − e^{−s√(−Δ)}) f‖_∞)`, when V ≠ 0.
    pub perturbation_curve: Vec<(f64, f64)>,
    pub criteria: Vec<Criterion>,
    pub tables: BTreeMap<String, Table>,
}

/// Nontangential convergence, L^p convergence and `‖u*‖_p ≤ ‖f‖_{H^p_L}` for
/// the Poisson extension `u` of `f`.
pub fn verify_dirichlet(
    f: &GridFn,
    v: &PotentialModel,
    params: &DirichletParams,
    solver: &Solver,
    tol: &Tolerances,
) -> Result<DirichletReport> {
    let spec = f.spec;
    let n = spec.n;
    let heights = params.cone.heights();
    let slabs = solver.poisson_many(f, v, &heights)?;
    let scale = f.max_abs().max(f64::MIN_POSITIVE);
    let mut criteria = Vec::new();
    let mut tables = BTreeMap::new();

    // (a) cone convergence at each apex
    let z = unit_ball_points(n, params.cone.per_level)?;
    let mut cone_table = Table::new(&["apex", "x1", "x2", "t", "sigma", "cone_sup"]);
    let mut cone_sup_at_min = Vec::new();
    let mut monotone = true;
    for (a, apex) in params.apexes.iter().enumerate() {
        if apex.x.len() != spec.dims() {
            return Err(Error::Dimension(apex.n(), n));
        }
        let idx = spec.nearest(apex).ok_or(Error::OutOfDomain)?;
        let g0 = spec.point(idx);
        let f0 = f.values[idx];
        let per_level: Vec<f64> = slabs
            .iter()
            .zip(&heights)
            .map(|(slab, &s)| {
                let r = CONE_INSET * s;
                let mut y = vec![0.0; 2 * n];
                z.iter().fold(0.0f64, |m, p| {
                    for q in 0..2 * n {
                        y[q] = g0.x[q] + r * p.x[q];
                    }
                    let t = g0.t + r * r * p.t + r * twist(&g0.x, &p.x);
                    m.max((slab.interp_cubic(&y, t) - f0).abs())
                })
            })
            .collect();
        // sup over s ≤ σ, σ increasing along the ladder
        let mut cum = per_level.clone();
        for k in 1..cum.len() {
            cum[k] = cum[k].max(cum[k - 1]);
        }
        monotone &= cum.windows(2).all(|w| w[0] <= w[1]);
        for (k, &s) in heights.iter().enumerate() {
            cone_table.rows.push(vec![a as f64, g0.x[0], g0.x.get(1).copied().unwrap_or(0.0), g0.t, s, cum[k]]);
        }
        cone_sup_at_min.push(cum[0]);
    }
    let worst = cone_sup_at_min.iter().copied().fold(0.0, f64::max);
    criteria.push(Criterion::at_most("cone sup at smallest height", worst, tol.dirichlet * scale));
    criteria.push(Criterion::at_most("cone sup monotone in height", if monotone { 0.0 } else { 1.0 }, 0.0));
    tables.insert("cone_convergence".into(), cone_table);

    // (b) L^p convergence
    let mut lp_heights = params.lp_heights.clone();
    lp_heights.sort_by(|a, b| b.total_cmp(a));
    let us = solver.poisson_many(f, v, &lp_heights)?;
    let mut lp_table = Table::new(&["p", "s", "distance"]);
    let mut lp_curves = Vec::new();
    for &p in &params.p {
        let fp = lp_norm(f, p)?.max(f64::MIN_POSITIVE);
        let mut curve = Vec::new();
        for (u, &s) in us.iter().zip(&lp_heights) {
            let mut d = u.clone();
            d.axpy(-1.0, f);
            let dist = lp_norm(&d, p)?;
            lp_table.rows.push(vec![p, s, dist]);
            curve.push((s, dist));
        }
        let dists: Vec<f64> = curve.iter().map(|c| c.1).collect();
        criteria.push(Criterion::at_most(
            format!("L^{p} distance decreasing"),
            if non_increasing(&dists, 1e-9 * fp) { 0.0 } else { 1.0 },
            0.0,
        ));
        criteria.push(Criterion::at_most(
            format!("L^{p} distance at smallest height"),
            *dists.last().unwrap(),
            tol.dirichlet * scale,
        ));
        lp_curves.push((p, curve));
    }
    tables.insert("lp_convergence".into(), lp_table);

    // (c) ‖u*‖_p against ‖f‖_{H^p_L}
    let ustar = cone_max_grid(&slabs, &heights);
    let ptilde = cone_max_from_slabs(&slabs, &params.cone)?.field;
    let mut mt = Table::new(&["p", "u_star", "hardy"]);
    let mut maximal_norms = Vec::new();
    for &p in &params.p {
        let a = lp_norm(&ustar, p)?;
        let b = lp_norm(&ptilde, p)?;
        mt.rows.push(vec![p, a, b]);
        maximal_norms.push((p, a, b));
        criteria.push(Criterion::at_most(
            format!("‖u*‖_{p} / ‖f‖_H^{p}"),
            if b > 0.0 { a / b } else { 0.0 },
            1.0 + tol.theorem,
        ));
    }
    tables.insert("maximal_norms".into(), mt);

    // perturbation of the free extension
    let mut perturbation_curve = Vec::new();
    if !SampledPotential::new(v, spec, None)?.is_zero() {
        let free = solver.poisson_many(f, &zero_potential(), &heights)?;
        let mut t = Table::new(&["s", "sup_difference"]);
        for ((a, b), &s) in slabs.iter().zip(&free).zip(&heights) {
            let d = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            t.rows.push(vec![s, d]);
            perturbation_curve.push((s, d));
        }
        // increasing in s, i.e. decreasing as s ↓ 0
        let ds: Vec<f64> = perturbation_curve.iter().rev().map(|c| c.1).collect();
        criteria.push(Criterion::at_most(
            "perturbation decreasing as s ↓ 0",
            if non_increasing(&ds, 1e-9 * scale) { 0.0 } else { 1.0 },
            0.0,
        ));
        tables.insert("perturbation".into(), t);
    }
    Ok(DirichletReport { cone_sup_at_min, lp_curves, maximal_norms, perturbation_curve, criteria, tables })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemigroupReport {
    /// `(s_k, max bulk |u(·, s + s_k) − e^{−s√L} u(·, s_k)|)`.
    pub deviations: Vec<(f64, f64)>,
    pub max_deviation: f64,
    /// Max deviation over the even and odd entries of the ladder, i.e. the
    /// two ladders of squared base.
    pub sub_ladder_deviation: [f64; 2],
    /// `(s_k, ‖u(·, s_k) − f‖_2)`.
    pub reconstruction: Vec<(f64, f64)>,
    pub criteria: Vec<Criterion>,
    pub tables: BTreeMap<String, Table>,
}

fn bulk_mask(spec: &GridSpec, fraction: f64) -> Vec<bool> {
    (0..spec.len())
        .map(|idx| {
            let p = spec.point(idx);
            p.x.iter().all(|v| v.abs() <= fraction * spec.rx + 1e-12) && p.t.abs() <= fraction * spec.rt + 1e-12
        })
        .collect()
}

/// `u(·, s + s_k) = e^{−s√L}(u(·, s_k))` along the ladder, for `u` the Poisson extension of `f`.
pub fn verify_semigroup_identity(
    f: &GridFn,
    v: &PotentialModel,
    params: &SemigroupParams,
    solver: &Solver,
    tol: &Tolerances,
) -> Result<SemigroupReport> {
    let spec = f.spec;
    let mask = bulk_mask(&spec, params.bulk_fraction);
    let scale = f.max_abs().max(f64::MIN_POSITIVE);
    let u_k = solver.poisson_many(f, v, &params.s_k)?;
    let shifted: Vec<f64> = params.s_k.iter().map(|sk| params.s + sk).collect();
    let u_shift = solver.poisson_many(f, v, &shifted)?;
    let mut deviations = Vec::new();
    let mut reconstruction = Vec::new();
    let mut t = Table::new(&["s_k", "deviation", "reconstruction_l2"]);
    for ((uk, us), &sk) in u_k.iter().zip(&u_shift).zip(&params.s_k) {
        let composed = &solver.poisson_many(uk, v, &[params.s])?[0];
        let dev = us
            .values
            .iter()
            .zip(&composed.values)
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|((a, b), _)| (a - b).abs())
            .fold(0.0, f64::max);
        let mut d = uk.clone();
        d.axpy(-1.0, f);
        let rec = lp_norm(&d, 2.0)?;
        t.rows.push(vec![sk, dev, rec]);
        deviations.push((sk, dev));
        reconstruction.push((sk, rec));
    }
    let max_deviation = deviations.iter().map(|d| d.1).fold(0.0, f64::max);
    let mut sub_ladder_deviation = [0.0f64; 2];
    for (k, d) in deviations.iter().enumerate() {
        sub_ladder_deviation[k % 2] = sub_ladder_deviation[k % 2].max(d.1);
    }
    let mut criteria = vec![Criterion::at_most("semigroup identity deviation", max_deviation, tol.semigroup * scale)];
    let mut by_sk = reconstruction.clone();
    by_sk.sort_by(|a, b| b.0.total_cmp(&a.0));
    let recs: Vec<f64> = by_sk.iter().map(|r| r.1).collect();
    criteria.push(Criterion::at_most(
        "reconstruction distance decreasing as s_k ↓",
        if non_increasing(&recs, 1e-9 * scale) { 0.0 } else { 1.0 },
        0.0,
    ));
    let mut tables = BTreeMap::new();
    tables.insert("semigroup".into(), t);
    Ok(SemigroupReport { deviations, max_deviation, sub_ladder_deviation, reconstruction, criteria, tables })
}

/// Samples of `u` on `Ω = (sub-box) × [s0, s1]`: one slab per height.
#[derive(Clone, Debug)]
pub struct HarmonicBox {
    pub spec: GridSpec,
    pub heights: Vec<f64>,
    pub slabs: Vec<GridFn>,
    pub x_half: usize,
    pub t_half: usize,
}

impl HarmonicBox {
    /// Poisson extension of `f` at `s_steps + 1` equally spaced heights.
    pub fn poisson(f: &GridFn, v: &PotentialModel, params: &MaxPrincipleParams, solver: &Solver) -> Result<Self> {
        let hs = (params.s1 - params.s0) / params.s_steps as f64;
        let heights: Vec<f64> = (0..=params.s_steps).map(|k| params.s0 + k as f64 * hs).collect();
        let slabs = solver.poisson_many(f, v, &heights)?;
        Ok(HarmonicBox { spec: f.spec, heights, slabs, x_half: params.x_half, t_half: params.t_half })
    }

    fn hs(&self) -> f64 {
        self.heights[1] - self.heights[0]
    }

    /// Offsets from the grid center of the Ω nodes along one axis.
    fn axis_range(&self, axis: usize) -> std::ops::RangeInclusive<isize> {
        let h = if axis < self.spec.dims() { self.x_half } else { self.t_half } as isize;
        -h..=h
    }

    fn index(&self, off: &[isize]) -> usize {
        let sp = &self.spec;
        let d = sp.dims();
        let cx = (sp.mx / 2) as isize;
        let ct = (sp.mt / 2) as isize;
        let mut ix = 0usize;
        for &o in &off[..d] {
            ix = ix * sp.mx + (cx + o) as usize;
        }
        ix * sp.mt + (ct + off[d]) as usize
    }

    fn value(&self, off: &[isize], k: usize) -> f64 {
        self.slabs[k].values[self.index(off)]
    }

    /// Adds `ε·b` with `b` a smooth bump centered in Ω, vanishing on ∂Ω.
    pub fn perturbed(&self, eps: f64) -> HarmonicBox {
        let mut out = self.clone();
        let d = self.spec.dims();
        let kc = self.heights.len() / 2;
        let radii: Vec<f64> = (0..=d).map(|a| *self.axis_range(a).end() as f64).collect();
        let rs = kc as f64;
        for (k, slab) in out.slabs.iter_mut().enumerate() {
            let mut off = vec![0isize; d + 1];
            for_each_offset(self, &mut off, 0, &mut |off| {
                let mut u = ((k as f64 - kc as f64) / rs).powi(2);
                for a in 0..=d {
                    u += (off[a] as f64 / radii[a]).powi(2);
                }
                if u < 1.0 {
                    let idx = self.index(off);
                    slab.values[idx] += eps * (1.0 - 1.0 / (1.0 - u)).exp();
                }
            });
        }
        out
    }
}

fn for_each_offset(b: &HarmonicBox, off: &mut Vec<isize>, axis: usize, f: &mut dyn FnMut(&[isize])) {
    if axis == off.len() {
        f(off);
        return;
    }
    for o in b.axis_range(axis) {
        off[axis] = o;
        for_each_offset(b, off, axis + 1, f);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub interior_sup: f64,
    pub boundary_sup: f64,
    /// `interior_sup − boundary_sup`.
    pub excess: f64,
    /// Largest `|B(u, ψ)| / (‖∇̃u‖_{L²(supp ψ)} ‖∇̃ψ‖_{L²})` over the tents.
    pub weak_residual: f64,
    pub tents: usize,
    pub criteria: Vec<Criterion>,
    pub tables: BTreeMap<String, Table>,
}

/// Weak maximum principle on Ω and the discrete weak form of
/// `−∂_s²u − Δ_{H^n}u + Vu = 0` tested against tents.
pub fn verify_max_principle(
    b: &HarmonicBox,
    v: &PotentialModel,
    tent_half_width: usize,
    tol: &Tolerances,
) -> Result<MaxPrincipleReport> {
    let spec = b.spec;
    let d = spec.dims();
    let n = spec.n;
    let (hx, ht, hs) = (spec.hx(), spec.ht(), b.hs());
    let xmax = (b.x_half as f64 * hx) * (d as f64).sqrt();
    if ht > 2.0 * hx * hx / xmax {
        return Err(Error::Resolution(format!(
            "ht = {ht} exceeds 2hx²/max|x| = {} on Ω; the 2x∂_t terms are under-resolved",
            2.0 * hx * hx / xmax
        )));
    }
    let ks = b.heights.len();
    // (a) interior against boundary
    let (mut inner, mut bound) = (0.0f64, 0.0f64);
    let mut off = vec![0isize; d + 1];
    for k in 0..ks {
        for_each_offset(b, &mut off, 0, &mut |o| {
            let on_face = k == 0
                || k + 1 == ks
                || (0..=d).any(|a| {
                    let r = b.axis_range(a);
                    o[a] == *r.start() || o[a] == *r.end()
                });
            let val = b.value(o, k).abs();
            if on_face {
                bound = bound.max(val);
            } else {
                inner = inner.max(val);
            }
        });
    }
    // (b) weak form against tents centered at interior nodes, on a stride
    let sv = SampledPotential::new(v, spec, None)?;
    let w = tent_half_width as isize;
    let tent = |o: &[isize], c: &[isize], k: isize, kc: isize| -> f64 {
        let mut p = (1.0 - ((k - kc).abs() as f64) / w as f64).max(0.0);
        for a in 0..=d {
            p *= (1.0 - ((o[a] - c[a]).abs() as f64) / w as f64).max(0.0);
        }
        p
    };
    let x_of = |o: &[isize], a: usize| o[a] as f64 * hx;
    let mut centers = Vec::new();
    let stride = w.max(1);
    let lim = |a: usize| -> isize { *b.axis_range(a).end() - w - 1 };
    let klim = ks as isize - 1 - w - 1;
    let mut kc = w + 1;
    while kc <= klim {
        let mut c = vec![-lim(0); d + 1];
        'outer: loop {
            centers.push((c.clone(), kc));
            for a in (0..=d).rev() {
                c[a] += stride;
                if c[a] <= lim(a) {
                    continue 'outer;
                }
                c[a] = -lim(a);
            }
            break;
        }
        kc += stride;
    }
    let results = crate::exec::map_range(centers.len(), |ci| {
        let (c, kc) = &centers[ci];
        let (mut form, mut nu, mut npsi) = (0.0, 0.0, 0.0);
        let mut o = vec![0isize; d + 1];
        let rec = |o: &[isize], k: isize| {
            let ku = k as usize;
            let psi = tent(o, c, k, *kc);
            // centered differences of u and ψ
            let mut du = vec![0.0; d + 2];
            let mut dp = vec![0.0; d + 2];
            let mut plus = o.to_vec();
            let mut minus = o.to_vec();
            for a in 0..=d {
                plus[a] += 1;
                minus[a] -= 1;
                let h = if a < d { hx } else { ht };
                du[a] = (b.value(&plus, ku) - b.value(&minus, ku)) / (2.0 * h);
                dp[a] = (tent(&plus, c, k, *kc) - tent(&minus, c, k, *kc)) / (2.0 * h);
                plus[a] -= 1;
                minus[a] += 1;
            }
            du[d + 1] = (b.value(o, ku + 1) - b.value(o, ku - 1)) / (2.0 * hs);
            dp[d + 1] = (tent(o, c, k + 1, *kc) - tent(o, c, k - 1, *kc)) / (2.0 * hs);
            let vv = sv.values[b.index(o)];
            let uval = b.value(o, ku);
            let (mut f, mut a2, mut b2) = (
                du[d + 1] * dp[d + 1] + vv * uval * psi,
                du[d + 1].powi(2) + vv * uval * uval,
                dp[d + 1].powi(2) + vv * psi * psi,
            );
            for j in 0..n {
                // X_j = ∂_{x_j} + 2x_{n+j}∂_t, X_{n+j} = ∂_{x_{n+j}} − 2x_j∂_t
                let xu = du[j] + 2.0 * x_of(o, n + j) * du[d];
                let xp = dp[j] + 2.0 * x_of(o, n + j) * dp[d];
                let yu = du[n + j] - 2.0 * x_of(o, j) * du[d];
                let yp = dp[n + j] - 2.0 * x_of(o, j) * dp[d];
                f += xu * xp + yu * yp;
                a2 += xu * xu + yu * yu;
                b2 += xp * xp + yp * yp;
            }
            (f, a2, b2)
        };
        // every node where ψ or its centered differences can be nonzero
        let span = w;
        let mut idx = vec![-span; d + 2];
        loop {
            for a in 0..=d {
                o[a] = c[a] + idx[a];
            }
            let k = kc + idx[d + 1];
            let (f, a2, b2) = rec(&o, k);
            form += f;
            nu += a2;
            npsi += b2;
            let mut a = d + 1;
            loop {
                idx[a] += 1;
                if idx[a] <= span {
                    break;
                }
                idx[a] = -span;
                if a == 0 {
                    let scale = (nu * npsi).sqrt();
                    return if scale > 0.0 { form.abs() / scale } else { 0.0 };
                }
                a -= 1;
            }
        }
    });
    let weak_residual = results.iter().copied().fold(0.0, f64::max);
    let slack = tol.theorem * bound.max(f64::MIN_POSITIVE);
    let criteria = vec![
        Criterion::at_most("interior sup − boundary sup", inner - bound, slack),
        Criterion::at_most("weak-form residual", weak_residual, tol.theorem),
    ];
    let mut t = Table::new(&["tent", "relative_residual"]);
    for (i, r) in results.iter().enumerate() {
        t.rows.push(vec![i as f64, *r]);
    }
    let mut tables = BTreeMap::new();
    tables.insert("weak_residual".into(), t);
    Ok(MaxPrincipleReport {
        interior_sup: inner,
        boundary_sup: bound,
        excess: inner - bound,
        weak_residual,
        tents: results.len(),
        criteria,
        tables,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VanishingReport {
    pub eps: f64,
    /// Smallest ladder height after which `sup|u(·, t)| < ε`.
    pub t_vanish: Option<f64>,
    /// Smallest Korányi radius outside which `|u(·, t)| < ε` for all `t ≤ T`.
    pub r_vanish: Option<f64>,
    /// The box cannot show the decay (no `T` on the ladder, or `R` beyond the inscribed ball).
    pub inconclusive: bool,
    /// `(t, sup|u(·, t)|, max ‖g‖ over |u(g, t)| ≥ ε)`.
    pub profile: Vec<(f64, f64, f64)>,
    pub criteria: Vec<Criterion>,
    pub tables: BTreeMap<String, Table>,
}

/// Empirical `(T, R)` with `|e^{−t√L} f(g)| < ε` when `t ≥ T`, or `t ≤ T` and `‖g‖ ≥ R`.
pub fn verify_vanishing(
    f: &GridFn,
    v: &PotentialModel,
    params: &VanishingParams,
    solver: &Solver,
) -> Result<VanishingReport> {
    let spec = f.spec;
    let us = solver.poisson_many(f, v, &params.heights)?;
    let eps = params.eps;
    let mut profile = Vec::new();
    let mut t = Table::new(&["t", "sup", "radius_above_eps"]);
    for (u, &s) in us.iter().zip(&params.heights) {
        let mut sup = 0.0f64;
        let mut radius = 0.0f64;
        for (idx, &val) in u.values.iter().enumerate() {
            sup = sup.max(val.abs());
            if val.abs() >= eps {
                let p = spec.point(idx);
                radius = radius.max(koranyi_norm_raw(&p.x, p.t));
            }
        }
        t.rows.push(vec![s, sup, radius]);
        profile.push((s, sup, radius));
    }
    let mut t_vanish = None;
    for k in (0..profile.len()).rev() {
        if profile[k].1 < eps {
            t_vanish = Some(profile[k].0);
        } else {
            break;
        }
    }
    let inscribed = spec.rx.min(2.0 * spec.rt.sqrt());
    let (r_vanish, inconclusive) = match t_vanish {
        None => (None, true),
        Some(tv) => {
            let r = profile.iter().filter(|p| p.0 <= tv).map(|p| p.2).fold(0.0, f64::max);
            let r = if r > 0.0 { r + spec.hx().max(spec.ht().sqrt()) } else { 0.0 };
            (Some(r), r >= inscribed)
        }
    };
    let criteria = vec![Criterion::at_most("vanishing pair found", if inconclusive { 1.0 } else { 0.0 }, 0.0)];
    let mut tables = BTreeMap::new();
    tables.insert("vanishing".into(), t);
    Ok(VanishingReport { eps, t_vanish, r_vanish, inconclusive, profile, criteria, tables })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub criteria: Vec<Criterion>,
    /// Experiment-specific summary.
    pub summary: serde_json::Value,
    #[serde(skip)]
    pub tables: BTreeMap<String, Table>,
}

impl Report {
    fn new(
        config: &ExperimentConfig,
        criteria: Vec<Criterion>,
        tables: BTreeMap<String, Table>,
        summary: serde_json::Value,
    ) -> Self {
        Report {
            experiment: config.experiment,
            config: config.clone(),
            pass: criteria.iter().all(|c| c.pass),
            criteria,
            summary,
            tables,
        }
    }

    /// `report.json` and `tables/<name>.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("tables"))?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        for (name, t) in &self.tables {
            fs::write(dir.join("tables").join(format!("{name}.csv")), t.to_csv())?;
        }
        Ok(())
    }
}

/// Runs the configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let solver = config.solver()?;
    let f = config.datum.sample(config.grid)?;
    let v = &config.potential;
    let tol = &config.tolerances;
    let report = match config.experiment {
        Experiment::Dirichlet => {
            let r = verify_dirichlet(&f, v, &config.dirichlet, &solver, tol)?;
            let summary = serde_json::json!({
                "cone_sup_at_min": r.cone_sup_at_min,
                "lp_curves": r.lp_curves,
                "maximal_norms": r.maximal_norms,
                "perturbation_curve": r.perturbation_curve,
            });
            Report::new(config, r.criteria, r.tables, summary)
        }
        Experiment::SemigroupIdentity => {
            let r = verify_semigroup_identity(&f, v, &config.semigroup, &solver, tol)?;
            let summary = serde_json::json!({
                "max_deviation": r.max_deviation,
                "deviations": r.deviations,
                "sub_ladder_deviation": r.sub_ladder_deviation,
                "reconstruction": r.reconstruction,
            });
            Report::new(config, r.criteria, r.tables, summary)
        }
        Experiment::MaxPrinciple => {
            let m = &config.max_principle;
            let hb = HarmonicBox::poisson(&f, v, m, &solver)?;
            let (hb, eps) = match m.perturbation {
                Some(eps) => (hb.perturbed(eps), Some(eps)),
                None => (hb, None),
            };
            let r = verify_max_principle(&hb, v, m.tent_half_width, tol)?;
            let mut criteria = r.criteria.clone();
            let mut control = serde_json::Value::Null;
            if eps.is_none() {
                // the perturbed field must be flagged
                let nc = negative_control(&hb, v, m.tent_half_width, tol)?;
                criteria.push(Criterion::at_most("negative control detected", if nc.1 { 0.0 } else { 1.0 }, 0.0));
                control =
                    serde_json::json!({ "eps": nc.0, "excess": nc.2.excess, "weak_residual": nc.2.weak_residual });
            }
            let summary = serde_json::json!({
                "interior_sup": r.interior_sup,
                "boundary_sup": r.boundary_sup,
                "excess": r.excess,
                "weak_residual": r.weak_residual,
                "tents": r.tents,
                "perturbation": eps,
                "negative_control": control,
            });
            Report::new(config, criteria, r.tables, summary)
        }
        Experiment::Vanishing => {
            let r = verify_vanishing(&f, v, &config.vanishing, &solver)?;
            let summary = serde_json::json!({
                "eps": r.eps,
                "t_vanish": r.t_vanish,
                "r_vanish": r.r_vanish,
                "inconclusive": r.inconclusive,
            });
            Report::new(config, r.criteria, r.tables, summary)
        }
    };
    Ok(report)
}

/// Perturbs `b` by `ε·(interior bump)` with `ε = 2·(boundary sup − |u(center)|) + boundary sup/10`,
/// so that the interior sup exceeds the boundary sup by at least ε/2. Returns
/// `(ε, detected, report)`; detected means criterion (a) fails by ≥ ε/2.
pub fn negative_control(
    b: &HarmonicBox,
    v: &PotentialModel,
    tent_half_width: usize,
    tol: &Tolerances,
) -> Result<(f64, bool, MaxPrincipleReport)> {
    let clean = verify_max_principle(b, v, tent_half_width, tol)?;
    let center = vec![0isize; b.spec.dims() + 1];
    let uc = b.value(&center, b.heights.len() / 2).abs();
    let eps = 2.0 * (clean.boundary_sup - uc).max(0.0) + 0.1 * clean.boundary_sup.max(f64::MIN_POSITIVE);
    let r = verify_max_principle(&b.perturbed(eps), v, tent_half_width, tol)?;
    let detected = !r.criteria[0].pass && r.excess >= eps / 2.0;
    Ok((eps, detected, r))
}

/// Named configurations accepted by `heisen verify`.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    use Experiment::*;
    let with = |e: Experiment, v: PotentialModel| ExperimentConfig { potential: v, ..ExperimentConfig::new(e) };
    let c = |c: f64| PotentialModel::Constant { c };
    let bump = PotentialModel::Bump { center: HPoint::identity(1), radius: 2.0, height: 1.0 };
    let power = PotentialModel::KoranyiPower { beta: 1.0, amplitude: 1.0, epsilon: 0.0 };
    let mp_grid = GridSpec { n: 1, rx: 3.0, rt: 4.0, mx: 19, mt: 145 };
    let mp = |v: PotentialModel, perturbation: Option<f64>| ExperimentConfig {
        grid: mp_grid,
        datum: Datum::Bump { amplitude: 1.0, radius_x: 2.0, radius_t: 1.5, center: None },
        max_principle: MaxPrincipleParams { perturbation, ..MaxPrincipleParams::default() },
        ..with(MaxPrinciple, v)
    };
    let vanishing = |v: PotentialModel| ExperimentConfig {
        datum: Datum::Bump { amplitude: 1.0, radius_x: 1.0, radius_t: 1.0, center: None },
        ..with(Vanishing, v)
    };
    Some(match name {
        "dirichlet" | "dirichlet-free-bump" => with(Dirichlet, c(0.0)),
        "dirichlet-const-bump" => with(Dirichlet, c(1.0)),
        "dirichlet-bump-potential" => with(Dirichlet, bump),
        "dirichlet-koranyi-power" => with(Dirichlet, power),
        "semigroup-identity" | "semigroup-free" => with(SemigroupIdentity, c(0.0)),
        "semigroup-const" => with(SemigroupIdentity, c(4.0)),
        "semigroup-bump-potential" => with(SemigroupIdentity, bump),
        "max-principle" => mp(c(1.0), None),
        "max-principle-negative" => mp(c(1.0), Some(0.5)),
        "vanishing" | "vanishing-free" => vanishing(c(0.0)),
        "vanishing-const" => vanishing(c(1.0)),
        _ => return None,
    })
}

pub const PRESETS: [&str; 11] = [
    "dirichlet-free-bump",
    "dirichlet-const-bump",
    "dirichlet-bump-potential",
    "dirichlet-koranyi-power",
    "semigroup-free",
    "semigroup-const",
    "semigroup-bump-potential",
    "max-principle",
    "max-principle-negative",
    "vanishing-free",
    "vanishing-const",
];

/// Merges the top-level keys of `overrides` (a JSON object) into the preset.
pub fn config_from(name: &str, overrides: Option<&str>) -> Result<ExperimentConfig> {
    let base = preset(name).ok_or_else(|| Error::Config(format!("unknown experiment '{name}'")))?;
    let Some(text) = overrides else {
        return Ok(base);
    };
    let patch: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
    let serde_json::Value::Object(patch) = patch else {
        return Err(Error::Config("config must be a JSON object".into()));
    };
    let mut value = serde_json::to_value(&base)?;
    let obj = value.as_object_mut().expect("config serializes to an object");
    for (k, v) in patch {
        obj.insert(k, v);
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_with_slack() {
        assert!(non_increasing(&[3.0, 2.0, 2.0], 0.0));
        assert!(!non_increasing(&[1.0, 2.0], 0.5));
    }

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn malformed_config_is_a_config_error() {
        let e = config_from("dirichlet-free-bump", Some("{not json")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = config_from("dirichlet-free-bump", Some(r#"{"tolerances": {"theorem": -1}}"#)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let c = config_from("semigroup-free", Some(r#"{"tau_max": 0.25}"#)).unwrap();
        assert_eq!(c.tau_max, 0.25);
    }

    #[test]
    fn zero_datum_passes_trivially() {
        let mut cfg = preset("semigroup-free").unwrap();
        cfg.datum = Datum::Zero;
        cfg.grid = GridSpec::new(1, 2.0, 4.0, 9, 37).unwrap();
        let r = run_experiment(&cfg).unwrap();
        assert!(r.pass);
        assert_eq!(r.summary["max_deviation"], 0.0);
    }
}
