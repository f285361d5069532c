//! Exact Markovian reference: optical Bloch matrices in the single-excitation
//! manifold, their propagators, the two-time cavity correlation from the
//! quantum regression theorem, and β and I computed without perturbation
//! theory.
//!
//! Vector ordering: A1 acts on (⟨a†⟩, ⟨σ₊⟩); A2 on (⟨a†a⟩, ⟨a†σ₋⟩,
//! ⟨σ₊a⟩, ⟨σ₊σ₋⟩). The emitter starts excited, so only ⟨σ₊σ₋⟩(0) = 1.

pub mod linalg;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::params::{CavityParams, EmitterParams};
use crate::quad::{self, Tolerance};
use crate::units::Rate;
use linalg::{EigenDecomposition, Propagator};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct BlochMatrices {
    pub a1: DMatrix<C64>,
    pub a2: DMatrix<C64>,
}

impl BlochMatrices {
    /// `gamma` is the total emitter decay.
    pub fn from_rates(g: f64, kappa: f64, gamma: f64, gamma_star: f64) -> Self {
        let re = |x: f64| C64::new(x, 0.0);
        let ig = I * g;
        let coh = -(kappa + gamma_star + gamma) / 2.0;
        let a1 = DMatrix::from_row_slice(
            2,
            2,
            &[re(-kappa / 2.0), ig, ig, re(-(gamma_star + gamma) / 2.0)],
        );
        let z = re(0.0);
        #[rustfmt::skip]
        let a2 = DMatrix::from_row_slice(4, 4, &[
            re(-kappa), -ig,      ig,       z,
            -ig,        re(coh),  z,        ig,
            ig,         z,        re(coh),  -ig,
            z,          ig,       -ig,      re(-gamma),
        ]);
        Self { a1, a2 }
    }

    /// Multiplies every rate by `s` (time measured in units of 1/s).
    fn scaled(&self, s: f64) -> Self {
        let s = C64::new(s, 0.0);
        Self {
            a1: &self.a1 * s,
            a2: &self.a2 * s,
        }
    }

    fn eigenvalues(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(6);
        for m in [&self.a1, &self.a2] {
            let schur = nalgebra::linalg::Schur::new(m.clone());
            let (_, t) = schur.unpack();
            out.extend((0..t.nrows()).map(|i| t[(i, i)]));
        }
        out
    }

    /// Largest real part over the spectra of A1 and A2.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// γ is assembled as γ_r + γ_nr + γ_q.
pub fn build_matrices(
    emitter: &EmitterParams,
    cavity: &CavityParams,
    gamma_q: Rate,
) -> BlochMatrices {
    BlochMatrices::from_rates(
        cavity.g.value(),
        cavity.kappa.value(),
        emitter.total_decay(gamma_q).value(),
        emitter.gamma_star.value(),
    )
}

fn describe(m: &BlochMatrices) -> String {
    let g = m.a1[(0, 1)].im;
    let kappa = -2.0 * m.a1[(0, 0)].re;
    let gamma = -m.a2[(3, 3)].re;
    let gamma_star = -2.0 * m.a1[(1, 1)].re - gamma;
    format!("g = {g:e}, kappa = {kappa:e}, gamma = {gamma:e}, gammaStar = {gamma_star:e}")
}

/// β = −κ(A2⁻¹)₁₄, from one linear solve against e₄.
pub fn beta_numeric(m: &BlochMatrices, kappa: Rate) -> Result<f64> {
    let mut e4 = DVector::<C64>::zeros(4);
    e4[3] = C64::new(1.0, 0.0);
    let x =
        m.a2.clone()
            .lu()
            .solve(&e4)
            .filter(|x| x.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
            .ok_or_else(|| Error::SingularMatrix(describe(m)))?;
    Ok(-kappa.value() * x[0].re)
}

/// Propagators U(τ) = exp(A1τ) and W(t) = exp(A2t).
#[derive(Debug, Clone)]
pub struct Propagators {
    pub u: Propagator,
    pub w: Propagator,
}

impl Propagators {
    pub fn new(m: &BlochMatrices) -> Self {
        Self {
            u: Propagator::new(&m.a1),
            w: Propagator::new(&m.a2),
        }
    }

    /// ⟨a†(t+τ)a(t)⟩ = U₁₁(τ)W₁₄(t) + U₁₂(τ)W₃₄(t).
    pub fn g1(&self, t: f64, tau: f64) -> C64 {
        let u = self.u.at(tau);
        let w = self.w.at(t);
        u[(0, 0)] * w[(0, 3)] + u[(0, 1)] * w[(2, 3)]
    }

    /// ⟨a†a⟩(t) = W₁₄(t).
    pub fn cavity_population(&self, t: f64) -> f64 {
        self.w.at(t)[(0, 3)].re
    }
}

pub fn g1_correlation(m: &BlochMatrices, t: f64, tau: f64) -> C64 {
    Propagators::new(m).g1(t, tau)
}

/// Samples of ⟨a†(t+τ)a(t)⟩ on a tensor grid, row-major in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGrid {
    pub t: Vec<f64>,
    pub tau: Vec<f64>,
    pub values: Vec<C64>,
}

impl CorrelationGrid {
    pub fn get(&self, it: usize, itau: usize) -> C64 {
        self.values[it * self.tau.len() + itau]
    }
}

pub fn correlation_grid(m: &BlochMatrices, t: &[f64], tau: &[f64]) -> CorrelationGrid {
    let p = Propagators::new(m);
    let us: Vec<DMatrix<C64>> = tau.iter().map(|&s| p.u.at(s)).collect();
    let mut values = Vec::with_capacity(t.len() * tau.len());
    for &ti in t {
        let w = p.w.at(ti);
        for u in &us {
            values.push(u[(0, 0)] * w[(0, 3)] + u[(0, 1)] * w[(2, 3)]);
        }
    }
    CorrelationGrid {
        t: t.to_vec(),
        tau: tau.to_vec(),
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndistMethod {
    /// Closed sums over eigenvalue pairs of the C₁, C₂, C₃ decomposition.
    #[default]
    EigenSum,
    /// Nested adaptive quadrature of the double integral of |g1|².
    AdaptiveQuadrature,
}

/// The three products C₁, C₂, C₃ with Iβ² = 2κ²[C₁ + 2Re C₂ + C₃].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSums {
    pub c1: f64,
    pub c2: C64,
    pub c3: f64,
}

impl CorrelationSums {
    pub fn total(&self) -> f64 {
        self.c1 + 2.0 * self.c2.re + self.c3
    }
}

fn cross_integral(
    a: &DMatrix<C64>,
    eig: Option<&EigenDecomposition>,
    p: (usize, usize),
    q: (usize, usize),
) -> Result<C64> {
    match eig {
        Some(e) => Ok(linalg::exp_sum_cross_integral(
            &e.entry_expansion(p.0, p.1),
            &e.entry_expansion(q.0, q.1),
        )),
        None => linalg::gramian_cross_integral(a, p, q).ok_or_else(|| {
            Error::SingularMatrix("Lyapunov operator for the propagator integrals".into())
        }),
    }
}

/// C₁, C₂, C₃ from eigen-expansions of U and W. Near exceptional points the
/// eigenvector basis is ill-conditioned and each integral is taken from the
/// Lyapunov equation instead.
pub fn correlation_sums(m: &BlochMatrices) -> Result<CorrelationSums> {
    let eig =
        |a: &DMatrix<C64>| EigenDecomposition::new(a).filter(EigenDecomposition::well_conditioned);
    let e1 = eig(&m.a1);
    let e2 = eig(&m.a2);
    let u = |p, q| cross_integral(&m.a1, e1.as_ref(), p, q);
    let w = |p, q| cross_integral(&m.a2, e2.as_ref(), p, q);
    let (u11, u12) = ((0, 0), (0, 1));
    let (w14, w34) = ((0, 3), (2, 3));
    Ok(CorrelationSums {
        c1: (u(u11, u11)? * w(w14, w14)?).re,
        c2: u(u11, u12)? * w(w14, w34)?,
        c3: (u(u12, u12)? * w(w34, w34)?).re,
    })
}

/// Rate scale for the quadrature path: the slowest decay rate.
fn slowest_rate(m: &BlochMatrices) -> Result<f64> {
    let a = -m.spectral_abscissa();
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!(
            "propagators are not strictly dissipative ({})",
            describe(m)
        )));
    }
    Ok(a)
}

const INNER_REL: f64 = 1e-10;
const OUTER_REL: f64 = 1e-9;

/// Fastest and slowest rates of `m`: the largest entry modulus of A1, A2
/// and the spectral abscissa magnitude.
fn rate_span(m: &BlochMatrices) -> (f64, f64) {
    let fast =
        m.a2.iter()
            .chain(m.a1.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max);
    (fast, -m.spectral_abscissa())
}

/// One breakpoint per decade from the fastest timescale of `m` up to the
/// slowest. Without them a stiff integrand's fast transient can sit inside
/// a single panel whose error estimate misses it.
fn decade_breaks(m: &BlochMatrices) -> Vec<f64> {
    let (fast, slow) = rate_span(m);
    let mut out = Vec::new();
    if fast > 0.0 && slow > 0.0 {
        let mut x = 1.0 / fast;
        while x < 10.0 / slow {
            out.push(x);
            x *= 10.0;
        }
    }
    out
}

/// Adaptive quadrature of ∫₀^∞dτ ∫₀^∞dt |g1(t,τ)|², in the units of `m`,
/// with propagators from the Padé exponential, not the eigenbasis.
/// |U₁₁W₁₄ + U₁₂W₃₄|² separates, so the three t-integrals of W products are
/// done once and the τ-integral carries U. `horizon` truncates both axes
/// (used to bound the tail); `None` maps [0,∞) onto [0,1).
fn double_integral(m: &BlochMatrices, horizon: Option<f64>) -> Result<f64> {
    let a1 = Matrix2::from_iterator(m.a1.iter().copied());
    let a2 = Matrix4::from_iterator(m.a2.iter().copied());
    let breaks = decade_breaks(m);
    // Oscillatory integrands need about one panel per period; the count of
    // periods before decay is of order fast/slow.
    let (fast, slow) = rate_span(m);
    let cap = 2000 + (20.0 * fast / slow).min(1e6) as usize;
    let tol = |rel: f64, abs: f64| Tolerance {
        max_subdivisions: cap,
        ..Tolerance::relative(rel).with_abs(abs)
    };
    let run = |f: &mut dyn FnMut(f64) -> f64, t: Tolerance| match horizon {
        Some(h) => quad::integrate_with_breaks(f, 0.0, h, &breaks, t),
        None => quad::integrate_to_infinity_with_breaks(f, 0.0, 1.0, &breaks, t),
    };

    let mut w_cache: HashMap<u64, (C64, C64)> = HashMap::new();
    let mut w_at = |t: f64| -> (C64, C64) {
        *w_cache.entry(t.to_bits()).or_insert_with(|| {
            let w = linalg::expm4(&(a2 * C64::new(t, 0.0)));
            (w[(0, 3)], w[(2, 3)])
        })
    };
    let aa = run(&mut |t| w_at(t).0.norm_sqr(), tol(INNER_REL, 1e-300))?.value;
    let bb = run(&mut |t| w_at(t).1.norm_sqr(), tol(INNER_REL, 1e-300))?.value;
    // The cross term can vanish; its tolerance is relative to |W₁₄||W₃₄|.
    let cross_abs = INNER_REL * (aa * bb).sqrt() + 1e-300;
    let cr = run(
        &mut |t| {
            let (x, y) = w_at(t);
            (x * y.conj()).re
        },
        tol(INNER_REL, cross_abs),
    )?
    .value;
    let ci = run(
        &mut |t| {
            let (x, y) = w_at(t);
            (x * y.conj()).im
        },
        tol(INNER_REL, cross_abs),
    )?
    .value;
    let c = C64::new(cr, ci);

    let mut outer = |tau: f64| -> f64 {
        let u = linalg::expm2(&(a1 * C64::new(tau, 0.0)));
        let (u11, u12) = (u[(0, 0)], u[(0, 1)]);
        u11.norm_sqr() * aa + u12.norm_sqr() * bb + 2.0 * (u11 * u12.conj() * c).re
    };
    Ok(run(&mut outer, tol(OUTER_REL, 1e-300))?.value)
}

/// Indistinguishability I = (2κ²/β²)∫∫|⟨a†(t+τ)a(t)⟩|² dt dτ.
pub fn indist_numeric(m: &BlochMatrices, kappa: Rate, method: IndistMethod) -> Result<f64> {
    let beta = beta_numeric(m, kappa)?;
    if !(beta > 0.0) {
        return Err(Error::Domain(format!(
            "indistinguishability undefined without cavity emission (beta = {beta:e})"
        )));
    }
    let k = kappa.value();
    match method {
        IndistMethod::EigenSum => {
            let sums = correlation_sums(m)?;
            Ok(2.0 * k * k * sums.total() / (beta * beta))
        }
        IndistMethod::AdaptiveQuadrature => {
            let s = slowest_rate(m)?;
            let scaled = m.scaled(1.0 / s);
            let ks = k / s;
            let dbl = double_integral(&scaled, None)?;
            Ok(2.0 * ks * ks * dbl / (beta * beta))
        }
    }
}

/// Quadrature estimate of the double integral truncated at `horizon`
/// multiples of 1/(slowest decay rate) on both axes, normalised like
/// [`indist_numeric`]. Used to bound the truncation tail.
pub fn indist_quadrature_truncated(m: &BlochMatrices, kappa: Rate, horizon: f64) -> Result<f64> {
    let beta = beta_numeric(m, kappa)?;
    let s = slowest_rate(m)?;
    let ks = kappa.value() / s;
    let dbl = double_integral(&m.scaled(1.0 / s), Some(horizon))?;
    Ok(2.0 * ks * ks * dbl / (beta * beta))
}

/// The literal two-photon normalisation ∫∫⟨a†a⟩(t+τ)⟨a†a⟩(t) dt dτ next to
/// β²/(2κ²), which it equals when ∫κ⟨a†a⟩dt = β. Diagnostic only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationCheck {
    pub literal: f64,
    pub from_beta: f64,
}

pub fn wavepacket_normalization(m: &BlochMatrices, kappa: Rate) -> Result<NormalizationCheck> {
    let beta = beta_numeric(m, kappa)?;
    let s = slowest_rate(m)?;
    let a2 = Matrix4::from_iterator(m.a2.iter().map(|z| z / s));
    let pop = |t: f64| linalg::expm4(&(a2 * C64::new(t, 0.0)))[(0, 3)].re;
    let tol = Tolerance::relative(1e-10).with_abs(1e-300);
    let mut inner_err = None;
    let outer =
        |tau: f64| match quad::integrate_to_infinity(|t| pop(t + tau) * pop(t), 0.0, 1.0, tol) {
            Ok(e) => e.value,
            Err(e) => {
                inner_err = Some(e);
                0.0
            }
        };
    let total = quad::integrate_to_infinity(outer, 0.0, 1.0, tol)?;
    if let Some(e) = inner_err {
        return Err(e);
    }
    // undo the time rescaling: two time integrals → 1/s²
    let k = kappa.value();
    Ok(NormalizationCheck {
        literal: total.value / (s * s),
        from_beta: beta * beta / (2.0 * k * k),
    })
}
