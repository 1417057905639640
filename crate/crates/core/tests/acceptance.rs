//! End-to-end acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always reach the
//! test log. `HEISEN_ACCEPT=3,4` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use heisen::fracint::{bump_family, frac_apply, theorem14_sweep, FracPlan};
use heisen::harness::{preset, run_experiment, Report};
use heisen::heatkernel::{
    free_kernel_column, heat_kernel_free, kato_trotter_residual, lemma21_bound_fit, schrodinger_kernel_column,
    KernelSample, SplittingPlan,
};
use heisen::hgroup::{nu, GridFn, GridSpec, HPoint};
use heisen::oracle::{kde_density, simulate_paths, McPlan};
use heisen::poisson::{poisson_apply, poisson_bound_fit, subordination_rule, SubordinationRule};
use heisen::potential::{aux_rho, rh_verify, BallSampler, PotentialModel, RH_CAP};
use heisen::quad::gauss_legendre_on;
use heisen::spaces::BmoSampler;
use heisen::{Error, Result};

// criterion 1
const KERNEL_ANCHOR_REL: f64 = 1e-6;
const MASS_TOL: f64 = 1e-6;
const MARGINAL_TOL: f64 = 1e-5;
// criterion 2
const MC_SIGMAS: f64 = 3.0;
// criterion 3
const DOMINATION_SLACK: f64 = 1e-10;
const CONSTANT_EXACTNESS: f64 = 1e-8;
// criterion 4
const KT_CONSTANT_REL: f64 = 1e-3;
const KT_BULK_REL: f64 = 2e-3;
// criterion 5
const SCALAR_SUBORDINATION: f64 = 1e-8;
const OPERATOR_SUBORDINATION: f64 = 1e-3;
// criterion 6
const ENVELOPE_DRIFT: f64 = 0.10;
// criterion 10
const RHO_CONSTANT_TOL: f64 = 1e-6;
const NU_TOL: f64 = 1e-8;
const RHO_POWER_TOL: f64 = 1e-4;
const RHO_SCALING_TOL: f64 = 1e-6;
// criterion 11
const FRAC_ANCHOR_REL: f64 = 2e-3;
const BMO_SPREAD: f64 = 4.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: &[(String, bool)]) -> Outcome {
    Outcome {
        pass: checks.iter().all(|c| c.1),
        detail: checks.iter().map(|c| format!("{}{}", if c.1 { "" } else { "!" }, c.0)).collect::<Vec<_>>().join("; "),
    }
}

fn at_most(label: &str, value: f64, threshold: f64) -> (String, bool) {
    (format!("{label} {value:.3e} ≤ {threshold:.1e}"), value <= threshold)
}

fn flag(label: &str, ok: bool) -> (String, bool) {
    (label.to_string(), ok)
}

fn p(c: &[f64]) -> HPoint {
    HPoint::from_slice(c).unwrap()
}

/// `∫ H_s(x, t) dt` by composite Gauss–Legendre on `|t| ≤ 40s`.
fn central_integral(s: f64, x: &[f64]) -> Result<f64> {
    let (t, w) = gauss_legendre_on(20, 0.0, 1.0);
    let (half, panels) = (40.0 * s, 80);
    let h = half / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        for (u, wu) in t.iter().zip(&w) {
            let g = HPoint::new(x.to_vec(), (k as f64 + u) * h)?;
            acc += 2.0 * wu * h * heat_kernel_free(s, &g)?;
        }
    }
    Ok(acc)
}

fn kernel_anchors() -> Result<Outcome> {
    let mut checks = Vec::new();
    let h = heat_kernel_free(1.0, &HPoint::identity(1))?;
    checks.push(at_most("H_1(0) vs 1/64 (rel)", (h * 64.0 - 1.0).abs(), KERNEL_ANCHOR_REL));
    for s in [0.25f64, 1.0, 4.0] {
        // radial integral of the central marginal, r ≤ 12√s
        let (r, w) = gauss_legendre_on(48, 0.0, 12.0 * s.sqrt());
        let mut mass = 0.0;
        for (ri, wi) in r.iter().zip(&w) {
            mass += wi * 2.0 * PI * ri * central_integral(s, &[*ri, 0.0])?;
        }
        checks.push(at_most(&format!("|∫H_{s} − 1|"), (mass - 1.0).abs(), MASS_TOL));
    }
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let s: f64 = [0.25, 1.0, 4.0][k % 3];
        let a = 0.37 * k as f64;
        let rad = 0.15 * k as f64 * s.sqrt();
        let x = [rad * a.cos(), rad * a.sin()];
        let exact = (-(rad * rad) / (4.0 * s)).exp() / (4.0 * PI * s);
        worst = worst.max((central_integral(s, &x)? - exact).abs());
    }
    checks.push(at_most("marginal vs (4πs)^{-1}e^{-|x|²/4s}", worst, MARGINAL_TOL));
    Ok(outcome(&checks))
}

fn monte_carlo() -> Result<Outcome> {
    let plan = McPlan::new(1, 1.0, 2024);
    let sample = simulate_paths(&plan, None)?;
    let k = kde_density(&sample, &HPoint::identity(1))?;
    let z = (k.estimate - 1.0 / 64.0) / k.stderr;
    Ok(outcome(&[
        at_most(&format!("|z| (estimate {:.6} ± {:.6})", k.estimate, k.stderr), z.abs(), MC_SIGMAS),
        flag("no variance warning", k.warning.is_none()),
    ]))
}

fn kernel_grid() -> GridSpec {
    GridSpec::new(1, 4.0, 8.0, 25, 145).unwrap()
}

fn potentials() -> Vec<(&'static str, PotentialModel)> {
    vec![
        ("bump", PotentialModel::Bump { center: p(&[0.3, 0.0, 0.1]), radius: 1.5, height: 2.0 }),
        ("koranyi", PotentialModel::KoranyiPower { beta: 1.0, amplitude: 1.0, epsilon: 0.0 }),
    ]
}

fn domination() -> Result<Outcome> {
    let spec = kernel_grid();
    let mut checks = Vec::new();
    for (name, v) in potentials() {
        let mut worst: f64 = 0.0;
        for s in [0.25, 1.0] {
            let plan = SplittingPlan::strang(s, 0.125)?;
            for h0 in [p(&[0.0, 0.0, 0.0]), p(&[0.667, -0.333, 0.333])] {
                let k = schrodinger_kernel_column(&v, s, &h0, spec, &plan)?;
                let h = free_kernel_column(s, &h0, spec, &plan)?;
                let scale = h.max_abs();
                for (a, b) in k.values.iter().zip(&h.values) {
                    worst = worst.max((a - b) / scale);
                }
            }
        }
        checks.push(at_most(&format!("{name}: max (K − H)/max H"), worst, DOMINATION_SLACK));
    }
    let c = 1.5;
    let v = PotentialModel::Constant { c };
    let mut worst: f64 = 0.0;
    for s in [0.25, 1.0] {
        let plan = SplittingPlan::strang(s, 0.125)?;
        let k = schrodinger_kernel_column(&v, s, &HPoint::identity(1), spec, &plan)?;
        let peak = heat_kernel_free(s, &HPoint::identity(1))?;
        for g in [p(&[0.0, 0.0, 0.0]), p(&[1.0, 0.0, 0.0]), p(&[0.333, 0.667, 0.444]), p(&[-1.0, 1.0, -1.0])] {
            let idx = spec.nearest(&g).unwrap();
            let exact = (-c * s).exp() * heat_kernel_free(s, &spec.point(idx))?;
            worst = worst.max((k.values[idx] - exact).abs() / peak);
        }
    }
    checks.push(at_most("constant: |K − e^{-cs}H|/H(0)", worst, CONSTANT_EXACTNESS));
    Ok(outcome(&checks))
}

fn kato_trotter() -> Result<Outcome> {
    let spec = kernel_grid();
    let mut checks = Vec::new();
    let s = 0.5;
    let plan = SplittingPlan::strang(s, 0.0625)?;
    let h = HPoint::identity(1);
    let pairs = [p(&[0.333, 0.0, 0.0]), p(&[0.667, 0.333, 0.222]), p(&[0.0, -0.333, -0.333])];
    let mut worst: f64 = 0.0;
    for g in &pairs {
        let r = kato_trotter_residual(&PotentialModel::Constant { c: 1.0 }, s, g, &h, 8, spec, &plan)?;
        let closed = (1.0 - (-s).exp()) * r.free_value;
        worst = worst.max(r.relative).max((r.rhs - closed).abs() / closed);
    }
    checks.push(at_most("constant: relative residual", worst, KT_CONSTANT_REL));
    // splitting error needs τ ≈ τ_r = hx²/2, so the nonconstant runs use hx = 1/4
    let fine = GridSpec::new(1, 4.0, 8.0, 33, 145)?;
    let fine_plan = SplittingPlan::strang(s, 1.0 / 32.0)?;
    let peak = heat_kernel_free(s, &h)?;
    for (name, v) in potentials() {
        let mut worst: f64 = 0.0;
        for g in &pairs {
            let r = kato_trotter_residual(&v, s, g, &h, 8, fine, &fine_plan)?;
            worst = worst.max(r.residual / peak);
        }
        checks.push(at_most(&format!("{name}: residual / H_s(0)"), worst, KT_BULK_REL));
    }
    Ok(outcome(&checks))
}

fn subordination() -> Result<Outcome> {
    let rule = subordination_rule(24)?;
    let scalar = (rule.scalar(1.0, 1.0) - (-1f64).exp()).abs();
    let spec = GridSpec::new(1, 2.0, 4.0, 13, 37)?;
    let one = GridFn::constant(spec, 1.0).with_exterior(1.0);
    let mut worst: f64 = 0.0;
    for c in [0.5, 1.0, 4.0] {
        for s in [0.25, 1.0] {
            let u =
                poisson_apply(&one, &PotentialModel::Constant { c }, s, &rule, &SplittingPlan::strang(1.0, 0.125)?)?;
            let exact = (-s * c.sqrt()).exp();
            worst = worst.max(u.values.iter().map(|v| (v - exact).abs()).fold(0.0, f64::max));
        }
    }
    Ok(outcome(&[
        at_most("|scalar − e^{-1}|", scalar, SCALAR_SUBORDINATION),
        at_most("max |P_s 1 − e^{-s√c}|", worst, OPERATOR_SUBORDINATION),
    ]))
}

/// Points `g` on a curve from the identity out to radius ~1; the `fine` sample
/// doubles the density and contains the coarse one.
fn envelope_sample(fine: bool) -> Vec<HPoint> {
    let k = if fine { 12 } else { 6 };
    (0..=k)
        .map(|i| {
            let r = i as f64 / k as f64;
            let a = 2.0 * PI * r;
            p(&[r * a.cos(), r * a.sin(), 0.25 * r * r * (2.0 * a).sin()])
        })
        .collect()
}

fn envelopes() -> Result<Outcome> {
    let coarse = GridSpec::new(1, 2.0, 2.0, 13, 37)?;
    let fine = GridSpec::new(1, 2.0, 2.0, 25, 145)?;
    // ε fixed above the coarse cell diagonal (≈ 0.70), so both grids sample one potential
    let v = PotentialModel::KoranyiPower { beta: 1.0, amplitude: 1.0, epsilon: 1.0 };
    let rule = SubordinationRule::log_trapezoid(48, 1e-6)?;
    let sample = |fine_sample: bool, heights: &[f64]| -> Vec<KernelSample> {
        heights
            .iter()
            .flat_map(|&s| {
                envelope_sample(fine_sample).into_iter().map(move |g| KernelSample { g, h: HPoint::identity(1), s })
            })
            .collect()
    };
    let mut checks = Vec::new();
    let heat = |spec: GridSpec, fine_sample: bool| -> Result<f64> {
        let plan = SplittingPlan::strang(1.0, 0.0625)?;
        Ok(lemma21_bound_fit(&v, 2.0, 0, 0.05, &sample(fine_sample, &[0.25, 0.5]), spec, &plan)?.constant)
    };
    let pois = |spec: GridSpec, fine_sample: bool, m: usize| -> Result<f64> {
        let plan = SplittingPlan::strang(1.0, 0.0625)?;
        Ok(poisson_bound_fit(&v, 2.0, m, &sample(fine_sample, &[0.25, 0.5]), spec, &rule, &plan)?.constant)
    };
    let drift = |base: f64, other: f64| (other / base - 1.0).abs();
    let c0 = heat(coarse, false)?;
    checks.push(at_most(&format!("C_N = {c0:.3e}: sample doubling"), drift(c0, heat(coarse, true)?), ENVELOPE_DRIFT));
    checks.push(at_most("C_N: grid refinement", drift(c0, heat(fine, false)?), ENVELOPE_DRIFT));
    for m in [0, 1] {
        let c0 = pois(coarse, false, m)?;
        checks.push(flag(&format!("C_(N,{m}) = {c0:.3e} finite"), c0.is_finite() && c0 > 0.0));
        checks.push(at_most(&format!("C_(N,{m}): sample doubling"), drift(c0, pois(coarse, true, m)?), ENVELOPE_DRIFT));
        checks.push(at_most(&format!("C_(N,{m}): grid refinement"), drift(c0, pois(fine, false, m)?), ENVELOPE_DRIFT));
    }
    Ok(outcome(&checks))
}

fn report(name: &str) -> Result<Report> {
    run_experiment(&preset(name).ok_or_else(|| Error::Config(name.into()))?)
}

fn summarize(reports: &[(&str, Report)]) -> Outcome {
    let mut checks = Vec::new();
    for (name, r) in reports {
        for c in &r.criteria {
            checks.push((format!("{name}: {} {:.3e} ≤ {:.1e}", c.name, c.value, c.threshold), c.pass));
        }
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.1).cloned().collect();
    let pass = failed.is_empty();
    let detail = if pass {
        format!("{} checks over {} runs", checks.len(), reports.len())
    } else {
        failed.iter().map(|c| c.0.clone()).collect::<Vec<_>>().join("; ")
    };
    Outcome { pass, detail }
}

fn dirichlet_suite() -> Result<Outcome> {
    let names = ["dirichlet-free-bump", "dirichlet-const-bump", "dirichlet-bump-potential", "dirichlet-koranyi-power"];
    let reports = names.iter().map(|n| Ok((*n, report(n)?))).collect::<Result<Vec<_>>>()?;
    Ok(summarize(&reports))
}

fn max_principle() -> Result<Outcome> {
    let clean = report("max-principle")?;
    let negative = report("max-principle-negative")?;
    let mut out = summarize(&[("max-principle", clean)]);
    let violated = !negative.pass;
    out.pass &= violated;
    out.detail.push_str(&format!("; perturbed field flagged: {violated}"));
    Ok(out)
}

fn semigroup() -> Result<Outcome> {
    let names = ["semigroup-free", "semigroup-const", "semigroup-bump-potential"];
    let reports = names.iter().map(|n| Ok((*n, report(n)?))).collect::<Result<Vec<_>>>()?;
    Ok(summarize(&reports))
}

fn rho_anchors() -> Result<Outcome> {
    let id = HPoint::identity(1);
    let mut checks = vec![at_most("|ν_1 − π²/8|", (nu(1) - PI * PI / 8.0).abs(), NU_TOL)];
    let mut worst: f64 = 0.0;
    for c in [0.5, 1.0, 4.0] {
        let exact = 1.0 / (c * nu(1)).sqrt();
        worst = worst.max((aux_rho(&PotentialModel::Constant { c }, &id)? / exact - 1.0).abs());
    }
    checks.push(at_most("constant ρ vs (cν)^{-1/2} (rel)", worst, RHO_CONSTANT_TOL));
    let kp = PotentialModel::KoranyiPower { beta: 1.0, amplitude: 1.0, epsilon: 0.0 };
    checks.push(at_most("|ρ_KP(0) − 6/π²|", (aux_rho(&kp, &id)? - 6.0 / (PI * PI)).abs(), RHO_POWER_TOL));
    let mut worst: f64 = 0.0;
    let g = p(&[0.4, -0.2, 0.3]);
    let regularized = PotentialModel::KoranyiPower { beta: 0.5, amplitude: 2.0, epsilon: 0.2 };
    for v in [kp, regularized] {
        let base = aux_rho(&v, &g)?;
        for r in [0.5, 2.0] {
            let scaled = aux_rho(&v.dilated(r)?, &heisen::hgroup::dilate(r, &g)?)?;
            worst = worst.max((scaled / (r * base) - 1.0).abs());
        }
    }
    checks.push(at_most("dilation scaling of ρ (rel)", worst, RHO_SCALING_TOL));
    Ok(outcome(&checks))
}

fn fractional() -> Result<Outcome> {
    let spec = GridSpec::new(1, 2.0, 4.0, 13, 37)?;
    let one = GridFn::constant(spec, 1.0).with_exterior(1.0);
    let splitting = SplittingPlan::strang(1.0, 0.125)?;
    let mut worst: f64 = 0.0;
    for (alpha, c, gamma) in [(2.0, 1.0, 1.0), (2.0, 4.0, 1.0), (1.0, 1.0, PI.sqrt())] {
        let exact = gamma * f64::powf(c, -alpha / 2.0);
        let r = frac_apply(&one, &PotentialModel::Constant { c }, &FracPlan::new(alpha), &splitting)?;
        worst = worst.max(r.value.values.iter().map(|v| (v / exact - 1.0).abs()).fold(0.0, f64::max));
    }
    let grid = GridSpec::new(1, 4.0, 12.0, 25, 217)?;
    let family = bump_family(grid, &[0.5, 0.75, 1.0])?;
    let sweep = theorem14_sweep(
        &PotentialModel::Constant { c: 1.0 },
        &family,
        &BmoSampler::default_for(&grid),
        &FracPlan::new(1.0),
        &splitting,
    )?;
    let diverges = matches!(
        frac_apply(&family[0], &PotentialModel::Constant { c: 0.0 }, &FracPlan::new(1.0), &splitting),
        Err(Error::Divergence(_))
    );
    Ok(outcome(&[
        at_most("Γ(α/2)c^{-α/2} anchors (rel)", worst, FRAC_ANCHOR_REL),
        flag(
            &format!("ratios {:.3}..{:.3} finite", sweep.min_ratio, sweep.max_ratio),
            sweep.max_ratio.is_finite() && sweep.min_ratio > 0.0,
        ),
        at_most("BMO/L^{Q/α} spread", sweep.spread, BMO_SPREAD),
        flag("V = 0 with nonzero mean diverges", diverges),
    ]))
}

fn reverse_holder() -> Result<Outcome> {
    let sampler = BallSampler {
        n: 1,
        center_half_x: 1.0,
        center_half_t: 1.0,
        centers_per_axis: 3,
        r_min: 0.1,
        r_max: 2.0,
        radii: 6,
    };
    let constant = rh_verify(&PotentialModel::Constant { c: 2.0 }, 2.0, &sampler, RH_CAP)?;
    let spec = GridSpec::new(1, 2.0, 2.0, 21, 41)?;
    let indicator =
        GridFn::from_fn(spec, |x, t| if x[0].abs() < 0.05 && x[1].abs() < 0.05 && t.abs() < 0.05 { 1.0 } else { 0.0 });
    let ind = rh_verify(&PotentialModel::Tabulated { grid: indicator }, 2.0, &sampler, RH_CAP)?;
    let kp =
        rh_verify(&PotentialModel::KoranyiPower { beta: 1.0, amplitude: 1.0, epsilon: 0.0 }, 2.0, &sampler, RH_CAP)?;
    Ok(outcome(&[
        (format!("constant ratio_sup = {}", constant.ratio_sup), constant.ratio_sup == 1.0),
        flag(
            &format!("indicator not B_q (ratio_sup {:.3e}, refined {:.3e})", ind.ratio_sup, ind.refined_ratio_sup),
            !ind.plausibly_bq,
        ),
        flag(
            &format!("KoranyiPower plausibly B_2 (ratio_sup {:.4}, refined {:.4})", kp.ratio_sup, kp.refined_ratio_sup),
            kp.plausibly_bq && kp.stable,
        ),
    ]))
}

type Check = fn() -> Result<Outcome>;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 12] = [
        ("kernel anchors", kernel_anchors),
        ("Monte Carlo cross-validation", monte_carlo),
        ("Trotter domination", domination),
        ("Kato–Trotter identity", kato_trotter),
        ("subordination", subordination),
        ("kernel envelope stability", envelopes),
        ("Dirichlet problem suite", dirichlet_suite),
        ("weak maximum principle", max_principle),
        ("semigroup identity", semigroup),
        ("ρ anchors", rho_anchors),
        ("fractional integral", fractional),
        ("reverse Hölder", reverse_holder),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("HEISEN_ACCEPT").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} criterion {id:>2} {name} ({:.1}s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
