use heisen::exec::{set_execution, Execution};
use heisen::heatkernel::{
    apply_heat_schrodinger, free_with_plan, heat_kernel_free, HeatPropagator, Scheme, SplittingPlan,
};
use heisen::hgroup::{
    dilate, dist, group_inv, group_mul, koranyi_norm, pseudo_triangle_ratio, BallQuad, GridFn, GridSpec, HPoint,
};
use heisen::oracle::{simulate_paths, McPlan};
use heisen::poisson::{poisson_apply, subordination_rule, SubordinationRule};
use heisen::potential::{rh_ratio, PotentialModel};
use heisen::quad::gauss_legendre_on;
use heisen::spaces::{hl_maximal, lp_norm};
use proptest::prelude::*;

const ASSOC_TOL: f64 = 1e-12;
const PSEUDO_TRIANGLE: f64 = 4.0;
const HOMOGENEITY_REL: f64 = 1e-12;
const DOMINATION_SLACK: f64 = 1e-10;
const POSITIVITY_SLACK: f64 = 1e-10;
const CONTRACTION_SLACK: f64 = 1e-3;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn point(n: usize) -> impl Strategy<Value = HPoint> {
    (prop::collection::vec(-3.0..3.0f64, 2 * n), -5.0..5.0f64).prop_map(|(x, t)| HPoint::new(x, t).unwrap())
}

fn small() -> GridSpec {
    GridSpec::new(1, 2.0, 4.0, 9, 25).unwrap()
}

/// Fine enough in `t` that the discrete heat kernel is nonnegative; on
/// `small()` it has negative lobes of relative size ~3e-3.
fn resolved() -> GridSpec {
    GridSpec::new(1, 2.0, 4.0, 25, 145).unwrap()
}

/// Nonnegative bump of random center and amplitude, supported inside the box.
fn bump(spec: GridSpec) -> impl Strategy<Value = GridFn> {
    (-0.5..0.5f64, -0.5..0.5f64, -1.0..1.0f64, 0.1..3.0f64).prop_map(move |(a, b, c, amp)| {
        GridFn::from_fn(spec, |x, t| {
            let u = (x[0] - a).powi(2) + (x[1] - b).powi(2) + 0.25 * (t - c).powi(2);
            if u < 1.0 {
                amp * (1.0 - 1.0 / (1.0 - u)).exp()
            } else {
                0.0
            }
        })
    })
}

fn close(a: &HPoint, b: &HPoint, tol: f64) -> bool {
    a.x.iter().zip(&b.x).all(|(u, v)| (u - v).abs() <= tol) && (a.t - b.t).abs() <= tol
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn group_law_is_associative(g in point(1), h in point(1), k in point(1)) {
        let l = group_mul(&group_mul(&g, &h).unwrap(), &k).unwrap();
        let r = group_mul(&g, &group_mul(&h, &k).unwrap()).unwrap();
        prop_assert!(close(&l, &r, ASSOC_TOL * (1.0 + l.t.abs())));
    }

    #[test]
    fn inverse_cancels(g in point(2)) {
        let e = group_mul(&g, &group_inv(&g)).unwrap();
        prop_assert!(close(&e, &HPoint::identity(2), ASSOC_TOL));
    }

    #[test]
    fn norm_is_homogeneous_and_even(g in point(1), r in 0.01..100.0f64) {
        let a = koranyi_norm(&dilate(r, &g).unwrap());
        prop_assert!((a - r * koranyi_norm(&g)).abs() <= HOMOGENEITY_REL * a.max(1.0));
        prop_assert!((koranyi_norm(&group_inv(&g)) - koranyi_norm(&g)).abs() <= HOMOGENEITY_REL);
    }

    #[test]
    fn pseudo_triangle_inequality(g in point(1), h in point(1)) {
        let lhs = koranyi_norm(&group_mul(&g, &h).unwrap());
        prop_assert!(lhs <= PSEUDO_TRIANGLE * (koranyi_norm(&g) + koranyi_norm(&h)));
    }

    #[test]
    fn distance_is_left_invariant(g in point(1), h in point(1), k in point(1)) {
        let a = dist(&group_mul(&k, &g).unwrap(), &group_mul(&k, &h).unwrap()).unwrap();
        let b = dist(&g, &h).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials(deg in 0usize..15, a in -2.0..0.0f64, b in 0.1..3.0f64) {
        let (x, w) = gauss_legendre_on(8, a, b);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
        let exact = (b.powi(deg as i32 + 1) - a.powi(deg as i32 + 1)) / (deg as f64 + 1.0);
        prop_assert!((q - exact).abs() <= 1e-11 * exact.abs().max(1.0));
    }

    #[test]
    fn heat_kernel_is_positive_and_even(g in point(1), s in 0.2..2.0f64) {
        let a = heat_kernel_free(s, &g).unwrap();
        let b = heat_kernel_free(s, &group_inv(&g)).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn subordination_matches_scalar_closed_form(s in 0.05..4.0f64, c in 0.01..16.0f64) {
        let rule = SubordinationRule::log_trapezoid(48, 1e-6).unwrap();
        let exact = (-s * c.sqrt()).exp();
        prop_assert!((rule.scalar(s, c) - exact).abs() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn reverse_holder_ratio_is_at_least_one(
        cx in -1.0..1.0f64, ct in -1.0..1.0f64, r in 0.2..2.0f64, q in 1.5..3.0f64,
    ) {
        let v = PotentialModel::Bump { center: HPoint::identity(1), radius: 3.0, height: 1.0 };
        let g = HPoint::from_slice(&[cx, 0.0, ct]).unwrap();
        let quad = BallQuad::standard(1);
        let ratio = rh_ratio(&v, q, &g, r, &quad).unwrap();
        prop_assert!(ratio >= 1.0 - 1e-9, "ratio {ratio}");
        let flat = rh_ratio(&PotentialModel::Constant { c: 2.0 }, q, &g, r, &quad).unwrap();
        prop_assert!((flat - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn grid_norms_are_positively_homogeneous(f in bump(small()), c in -5.0..5.0f64, p in 1.0..4.0f64) {
        let mut g = f.clone();
        g.scale(c);
        let (a, b) = (lp_norm(&g, p).unwrap(), lp_norm(&f, p).unwrap());
        prop_assert!((a - c.abs() * b).abs() <= HOMOGENEITY_REL * a.max(1e-300).max(b));
        let (m, n) = (hl_maximal(&g, &[0.5, 1.0]).unwrap(), hl_maximal(&f, &[0.5, 1.0]).unwrap());
        for (u, v) in m.values.iter().zip(&n.values) {
            prop_assert!((u - c.abs() * v).abs() <= HOMOGENEITY_REL * u.abs().max(1e-300).max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(config(6))]

    // steps stay ≥ τ_r = hx²/2; the short-time interpolant is not positivity preserving
    #[test]
    fn schrodinger_is_dominated_by_free_heat(f in bump(resolved()), height in 0.1..4.0f64, s in 0.25..0.75f64) {
        let v = PotentialModel::Bump { center: HPoint::identity(1), radius: 1.0, height };
        let plan = SplittingPlan::new(s, 2, Scheme::Strang).unwrap();
        let k = apply_heat_schrodinger(&f, &v, s, &plan).unwrap();
        let h = free_with_plan(&f, &plan).unwrap();
        let scale = h.max_abs();
        for (a, b) in k.values.iter().zip(&h.values) {
            prop_assert!(a - b <= DOMINATION_SLACK * scale, "{a} > {b}");
        }
    }

    #[test]
    fn poisson_preserves_positivity_and_contracts(f in bump(resolved()), c in 0.0..4.0f64, s in 0.05..1.0f64) {
        let v = PotentialModel::Constant { c };
        let rule = subordination_rule(24).unwrap();
        let plan = SplittingPlan::strang(1.0, 0.125).unwrap();
        let u = poisson_apply(&f, &v, s, &rule, &plan).unwrap();
        let sup = f.max_abs();
        prop_assert!(u.values.iter().all(|x| *x >= -POSITIVITY_SLACK * sup));
        prop_assert!(u.max_abs() <= sup * (1.0 + CONTRACTION_SLACK));
    }
}

#[test]
fn pseudo_triangle_constant_is_bounded() {
    let ratio = pseudo_triangle_ratio(1, 1_000_000, 11).unwrap();
    println!("max ‖g∘h‖/(‖g‖+‖h‖) over 1e6 pairs: {ratio:.4}");
    assert!((1.0..=PSEUDO_TRIANGLE).contains(&ratio), "{ratio}");
}

#[test]
fn execution_modes_agree_bitwise() {
    let spec = small();
    let f = GridFn::from_fn(spec, |x, t| (-(x[0] * x[0] + x[1] * x[1]) - t * t).exp());
    let prop = HeatPropagator::new(spec);
    set_execution(Execution::Sequential);
    let a = prop.apply(&f, 0.3).unwrap();
    set_execution(Execution::Parallel);
    let b = prop.apply(&f, 0.3).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn monte_carlo_is_seed_deterministic() {
    let mut plan = McPlan::new(1, 0.5, 7);
    plan.paths = 5000;
    plan.steps = 20;
    let a = simulate_paths(&plan, None).unwrap();
    let b = simulate_paths(&plan, None).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.t, b.t);
    plan.seed = 8;
    assert_ne!(simulate_paths(&plan, None).unwrap().t, a.t);
}
