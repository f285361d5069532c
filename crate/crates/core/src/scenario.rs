//! A complete operating point (emitter, cavity, quench model, optional
//! sideband spectrum) and the two SiV⁻ hybrid-cavity presets.

use crate::error::{domain, Result};
use crate::fom::{self, FomResult, Method};
use crate::params::{CavityParams, EmitterParams, QuenchModel};
use crate::psb::{self, PsbCorrected, PsbCorrectionInput, PsbSpectrum, PsbValidity, Sample};
use crate::units::Rate;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub emitter: EmitterParams,
    pub cavity: CavityParams,
    pub quench: Option<QuenchModel>,
    pub spectrum: Option<PsbSpectrum>,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsbReport {
    pub dw: f64,
    pub q: f64,
    pub f: f64,
    pub corrected: PsbCorrected,
    pub validity: PsbValidity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub fom: FomResult,
    pub psb: Option<PsbReport>,
    pub eta_r: f64,
}

impl ScenarioReport {
    /// Sideband-corrected when a spectrum is attached, Markovian otherwise.
    pub fn indist(&self) -> f64 {
        self.psb.map_or(self.fom.indist, |p| p.corrected.indist)
    }

    pub fn beta(&self) -> f64 {
        self.psb.map_or(self.fom.beta, |p| p.corrected.beta)
    }

    pub fn product(&self) -> f64 {
        self.indist() * self.beta()
    }

    /// Iβη_r, the end-to-end figure including radiative cavity efficiency.
    pub fn product_eta(&self) -> f64 {
        self.product() * self.eta_r
    }
}

/// Applies the sideband corrections to a Markovian result at quality factor `q`.
pub fn correct(
    fom: &FomResult,
    emitter: &EmitterParams,
    cavity: &CavityParams,
    spectrum: &PsbSpectrum,
    f: f64,
    q: f64,
) -> Result<PsbReport> {
    let dw = spectrum.dw_factor();
    let corrected = psb::apply_psb_correction(&PsbCorrectionInput {
        b2: dw,
        f,
        i0: fom.indist.clamp(0.0, 1.0),
        beta0: fom.beta,
    })?;
    Ok(PsbReport {
        dw,
        q,
        f,
        corrected,
        validity: psb::validity_check(emitter, cavity, fom.quench_rate, spectrum),
    })
}

impl Scenario {
    pub fn evaluate(&self) -> Result<ScenarioReport> {
        let fom = fom::evaluate(
            &self.emitter,
            &self.cavity,
            self.quench.as_ref(),
            self.method,
        )?;
        let psb = match &self.spectrum {
            Some(sp) => {
                let q = self.cavity.quality_factor(self.emitter.omega0);
                let f = sp.filter_fraction(q)?;
                Some(correct(&fom, &self.emitter, &self.cavity, sp, f, q)?)
            }
            None => None,
        };
        Ok(ScenarioReport {
            fom,
            psb,
            eta_r: self.cavity.eta_r,
        })
    }
}

/// Solves η_r·β₀(η_r) = `target` for η_r. β₀ depends on η_r only through
/// the quench rate and grows with it, so the left side is monotone and
/// bisection on [target, 1] is safe. (Plain fixed-point iteration
/// η ← target/β₀(η) contracts by only ~0.8 per step at the hybrid preset.)
pub fn eta_r_for_beta_eta(
    emitter: &EmitterParams,
    purcell: f64,
    kappa: Rate,
    quench: &QuenchModel,
    target: f64,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(domain(format!(
            "target beta*etaR must lie in (0,1), got {target}"
        )));
    }
    let excess = |eta: f64| -> Result<f64> {
        let c = CavityParams::from_purcell(purcell, emitter.gamma_r, kappa, eta);
        let gq = fom::quench_rate(Some(quench), &c);
        Ok(eta * fom::beta_markovian(emitter, &c, gq)? - target)
    };
    let (mut lo, mut hi) = (target, 1.0);
    if excess(hi)? < 0.0 {
        return Err(domain(format!(
            "beta*etaR = {target} is unreachable (beta0 too small even without quenching)"
        )));
    }
    while hi - lo > f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if excess(lo)?.abs() < excess(hi)?.abs() {
        lo
    } else {
        hi
    })
}

/// SiV⁻ centre parameters: 405 THz, 8.3 ns radiative lifetime, no intrinsic
/// nonradiative decay.
pub fn siv_emitter(gamma_star: Rate) -> EmitterParams {
    EmitterParams::new(
        Rate::from_lifetime_ns(8.3),
        Rate::ZERO,
        gamma_star,
        Rate::from_thz(405.0),
    )
}

/// R/γ_r of the hybrid bowtie–Fabry-Pérot cavity.
pub const HYBRID_PURCELL: f64 = 2.7e5;
pub const HYBRID_BETA_ETA: f64 = 0.95;

/// Sample 5 at Q = 60, Δ_q = 2π×5 THz, with η_r set so β₀η_r = 0.95.
pub fn siv_hybrid() -> Scenario {
    let emitter = siv_emitter(Rate::from_ghz(500.0));
    let kappa = CavityParams::kappa_from_q(emitter.omega0, 60.0);
    let quench = QuenchModel::EffectiveDetuning(Rate::from_thz(5.0));
    let eta = eta_r_for_beta_eta(&emitter, HYBRID_PURCELL, kappa, &quench, HYBRID_BETA_ETA)
        .expect("preset parameters are feasible");
    Scenario {
        cavity: CavityParams::from_purcell(HYBRID_PURCELL, emitter.gamma_r, kappa, eta),
        emitter,
        quench: Some(quench),
        spectrum: Some(psb::builtin_spectrum(Sample::Sample5)),
        method: Method::FullPerturbative,
    }
}

/// Sample 3 (narrower ZPL, 2π×380 GHz) at Q = 100 with
/// Δ_q(1−η_r)^(−1/2) = 2π×30 THz.
pub fn siv_sample3() -> Scenario {
    let emitter = siv_emitter(Rate::from_ghz(380.0));
    let kappa = CavityParams::kappa_from_q(emitter.omega0, 100.0);
    // γ_q depends on Δ_q and η_r only through Δ_q²/(1−η_r), so β₀ is fixed
    // by the loss-scaled detuning and η_r follows in one step.
    let lossy = QuenchModel::EffectiveDetuning(Rate::from_thz(30.0));
    let bare = CavityParams::from_purcell(HYBRID_PURCELL, emitter.gamma_r, kappa, 0.0);
    let beta0 = fom::beta_markovian(&emitter, &bare, fom::quench_rate(Some(&lossy), &bare))
        .expect("preset parameters are valid");
    let eta = HYBRID_BETA_ETA / beta0;
    let quench = lossy_to_model(&lossy, eta);
    Scenario {
        cavity: CavityParams::from_purcell(HYBRID_PURCELL, emitter.gamma_r, kappa, eta),
        emitter,
        quench: Some(quench),
        spectrum: Some(psb::builtin_spectrum(Sample::Sample3)),
        method: Method::FullPerturbative,
    }
}

/// Converts a loss-scaled detuning Δ_q(1−η_r)^(−1/2) back to Δ_q.
fn lossy_to_model(lossy: &QuenchModel, eta_r: f64) -> QuenchModel {
    QuenchModel::EffectiveDetuning(lossy.effective_detuning() * (1.0 - eta_r).sqrt())
}
