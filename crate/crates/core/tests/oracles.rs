//! Closed-form values every later check depends on.

use std::f64::consts::PI;

use heisen::heatkernel::{heat_kernel_free, HeatPropagator};
use heisen::hgroup::{nu, GridFn, GridSpec, HPoint};
use heisen::poisson::subordination_rule;
use heisen::potential::{aux_rho, rho_constant, PotentialModel};

#[test]
fn heat_kernel_at_identity() {
    // H_s(0) = (16 s²)^{-1} for n = 1, by the scaling H_s(0) = s^{-Q/2} H_1(0)
    for s in [0.25, 1.0, 4.0] {
        let v = heat_kernel_free(s, &HPoint::identity(1)).unwrap();
        assert!((v * 64.0 * s * s - 1.0).abs() < 1e-9, "s = {s}: {v}");
    }
}

#[test]
fn heat_kernel_dilation() {
    let g = HPoint::from_slice(&[0.4, -0.2, 0.3]).unwrap();
    let r = 1.7;
    let dg = HPoint::new(g.x.iter().map(|x| r * x).collect(), r * r * g.t).unwrap();
    let a = heat_kernel_free(r * r, &dg).unwrap();
    let b = r.powi(-4) * heat_kernel_free(1.0, &g).unwrap();
    assert!((a / b - 1.0).abs() < 1e-9);
}

#[test]
fn unit_ball_volume() {
    assert!((nu(1) - PI * PI / 8.0).abs() < 1e-8, "{}", nu(1));
}

#[test]
fn rho_anchors() {
    let c = 2.0;
    let g = HPoint::from_slice(&[0.3, 0.1, -0.2]).unwrap();
    let rho = aux_rho(&PotentialModel::Constant { c }, &g).unwrap();
    assert!((rho / rho_constant(c, 1) - 1.0).abs() < 1e-6);
    let kp = PotentialModel::KoranyiPower { beta: 1.0, amplitude: 1.0, epsilon: 0.0 };
    let rho0 = aux_rho(&kp, &HPoint::identity(1)).unwrap();
    assert!((rho0 - 6.0 / (PI * PI)).abs() < 1e-4, "{rho0}");
}

#[test]
fn scalar_subordination() {
    let rule = subordination_rule(24).unwrap();
    assert!((rule.scalar(1.0, 1.0) - (-1f64).exp()).abs() < 1e-8);
}

#[test]
fn heat_preserves_constants_with_exterior() {
    let spec = GridSpec::new(1, 2.0, 4.0, 9, 25).unwrap();
    let one = GridFn::constant(spec, 1.0).with_exterior(1.0);
    let u = HeatPropagator::new(spec).apply(&one, 0.5).unwrap();
    assert!(u.values.iter().all(|v| (v - 1.0).abs() < 1e-6));
}
