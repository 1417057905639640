//! Free heat kernel, group convolution and the Schrödinger heat semigroup.

pub mod convolve;
pub mod free;
pub mod propagator;
pub mod schrodinger;

pub use convolve::{convolve_direct, convolve_fourier, truncation_radius, ConvKernel, Convolved};
pub use free::{
    gaussian_bound_fit, heat_kernel_free, heat_kernel_raw, heat_kernel_scaling_check, GaussianBoundFit, HeatKernelEval,
    KernelMethod, KernelTable,
};
pub use propagator::{free_column, semi_lagrangian, HeatPropagator, ShortTime};
pub use schrodinger::{
    apply_heat_schrodinger, free_kernel_column, free_with_plan, kato_trotter_residual, lemma21_bound_fit,
    lemma22_bound_fit, rho_or_inf, schrodinger_kernel_column, KatoTrotterReport, KernelBoundFit, KernelSample,
    SampledPotential, Scheme, SplittingPlan, DEFAULT_TAU_MAX,
};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::hgroup::GridFn;

/// Execution path of [`group_convolve`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolvePath {
    /// Riemann sum truncated at `R(s)`.
    Direct,
    /// Riemann sum over all pairs.
    Full,
    /// Riemann sum with FFTs in the central variable.
    Fourier,
    /// The propagator used by the splitting schemes (free kernels only).
    Spectral,
}

/// Truncation settings: `R(s) = √(ln(1/eps_tail)/a0) · √s`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConvolvePlan {
    pub path: ConvolvePath,
    pub eps_tail: f64,
    pub a0: f64,
}

impl Default for ConvolvePlan {
    fn default() -> Self {
        ConvolvePlan { path: ConvolvePath::Direct, eps_tail: 1e-8, a0: 0.125 }
    }
}

pub fn group_convolve(f: &GridFn, kernel: &ConvKernel, plan: &ConvolvePlan) -> Result<Convolved> {
    match (plan.path, kernel) {
        (ConvolvePath::Spectral, ConvKernel::Free { s }) => {
            let out = HeatPropagator::new(f.spec).apply(f, *s)?;
            Ok(Convolved { f: out, radius: f64::INFINITY, contaminated_margin: 0.0, boundary_flag: false })
        }
        (ConvolvePath::Spectral, _) => domain("the spectral path needs the free kernel"),
        (path, kernel) => {
            let radius = match (path, kernel) {
                (ConvolvePath::Full, _) => f64::INFINITY,
                (_, ConvKernel::Free { s }) => truncation_radius(*s, plan.eps_tail, plan.a0),
                (_, ConvKernel::Tabulated(_)) => f64::INFINITY,
            };
            if path == ConvolvePath::Fourier {
                convolve_fourier(f, kernel, radius)
            } else {
                convolve_direct(f, kernel, radius)
            }
        }
    }
}
