//! Emitter, cavity and quenching parameter containers.

use std::f64::consts::PI;

use crate::error::{domain, Result};
use crate::units::Rate;

/// Two-level emitter. The total decay used in the figures of merit is
/// assembled at call sites as γ = γ_r + γ_nr + γ_q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterParams {
    pub gamma_r: Rate,
    pub gamma_nr: Rate,
    pub gamma_star: Rate,
    /// Optical resonance (angular).
    pub omega0: Rate,
}

impl EmitterParams {
    pub fn new(gamma_r: Rate, gamma_nr: Rate, gamma_star: Rate, omega0: Rate) -> Self {
        Self {
            gamma_r,
            gamma_nr,
            gamma_star,
            omega0,
        }
    }

    /// Intrinsic decay γ_r + γ_nr, without quenching.
    pub fn bare_decay(&self) -> Rate {
        self.gamma_r + self.gamma_nr
    }

    /// Total decay including a quenching contribution.
    pub fn total_decay(&self, gamma_q: Rate) -> Rate {
        self.gamma_r + self.gamma_nr + gamma_q
    }
}

/// Dominant cavity mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    pub g: Rate,
    pub kappa: Rate,
    /// Radiative fraction κ_r/κ.
    pub eta_r: f64,
    /// Purcell factor the cavity was built from, when it was.
    purcell: Option<f64>,
}

impl CavityParams {
    pub fn from_g_kappa(g: Rate, kappa: Rate, eta_r: f64) -> Self {
        Self {
            g,
            kappa,
            eta_r,
            purcell: None,
        }
    }

    /// Builds the cavity from a transfer rate R = 4g²/κ.
    pub fn from_transfer_rate(r: Rate, kappa: Rate, eta_r: f64) -> Self {
        let g = Rate::per_ps((r.value() * kappa.value()).max(0.0).sqrt() / 2.0);
        Self::from_g_kappa(g, kappa, eta_r)
    }

    /// Builds the cavity from a Purcell factor P, with R = γ_r·P.
    pub fn from_purcell(purcell: f64, gamma_r: Rate, kappa: Rate, eta_r: f64) -> Self {
        let mut c = Self::from_transfer_rate(gamma_r * purcell, kappa, eta_r);
        c.purcell = Some(purcell);
        c
    }

    /// κ from a quality factor at resonance ω₀.
    pub fn kappa_from_q(omega0: Rate, q: f64) -> Rate {
        omega0 / q
    }

    /// Emitter-to-cavity transfer rate R = 4g²/κ.
    pub fn transfer_rate(&self) -> Rate {
        Rate::per_ps(4.0 * self.g.value() * self.g.value() / self.kappa.value())
    }

    pub fn purcell(&self) -> Option<f64> {
        self.purcell
    }

    pub fn quality_factor(&self, omega0: Rate) -> f64 {
        omega0 / self.kappa
    }

    pub fn kappa_r(&self) -> Rate {
        self.kappa * self.eta_r
    }

    pub fn kappa_nr(&self) -> Rate {
        self.kappa * (1.0 - self.eta_r)
    }
}

/// One higher-order plasmon mode: relative coupling k_l = g_l/g and
/// detuning Δ_l from the emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuenchMode {
    pub k: f64,
    pub detuning: Rate,
}

/// Higher-order (dark) plasmon modes responsible for quenching.
#[derive(Debug, Clone, PartialEq)]
pub enum QuenchModel {
    Modes(Vec<QuenchMode>),
    EffectiveDetuning(Rate),
}

impl QuenchModel {
    pub fn single_mode(k: f64, detuning: Rate) -> Self {
        QuenchModel::Modes(vec![QuenchMode { k, detuning }])
    }

    /// Δ_q with 1/Δ_q² = Σ k_l²/Δ_l².
    pub fn effective_detuning(&self) -> Rate {
        match self {
            QuenchModel::EffectiveDetuning(d) => *d,
            QuenchModel::Modes(modes) => {
                let s: f64 = modes
                    .iter()
                    .map(|m| (m.k / m.detuning.value()).powi(2))
                    .sum();
                Rate::per_ps(1.0 / s.sqrt())
            }
        }
    }

    /// Detuned-limit equivalent of this model.
    pub fn to_effective(&self) -> QuenchModel {
        QuenchModel::EffectiveDetuning(self.effective_detuning())
    }

    /// Construction-level problems (negative k, nonpositive detuning).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            QuenchModel::EffectiveDetuning(d) => {
                if !(d.value() > 0.0) {
                    out.push("quench effective detuning must be positive".to_string());
                }
            }
            QuenchModel::Modes(modes) => {
                if modes.is_empty() {
                    out.push("quench mode list is empty".to_string());
                }
                for (i, m) in modes.iter().enumerate() {
                    if !(m.k >= 0.0) {
                        out.push(format!("quench mode {i}: k must be nonnegative"));
                    }
                    if !(m.detuning.value() > 0.0) {
                        out.push(format!("quench mode {i}: detuning must be positive"));
                    }
                }
            }
        }
        out
    }

    /// Whether every mode is weakly enough coupled for the Markovian
    /// treatment: g_l²/(Δ_l² + (κ_nr/2)²) < 1.
    pub fn markovian_valid(&self, g: Rate, kappa_nr: Rate) -> bool {
        let half = kappa_nr.value() / 2.0;
        let check = |k: f64, d: f64| {
            let gl = k * g.value();
            gl * gl / (d * d + half * half) < 1.0
        };
        match self {
            QuenchModel::EffectiveDetuning(d) => check(1.0, d.value()),
            QuenchModel::Modes(modes) => modes.iter().all(|m| check(m.k, m.detuning.value())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every violated parameter invariant; empty when valid.
pub fn validate_params(emitter: &EmitterParams, cavity: &CavityParams) -> ValidationReport {
    let mut v = Vec::new();
    let mut positive = |name: &str, x: f64| {
        if !(x > 0.0) {
            v.push(format!("{name} must be positive"));
        }
    };
    positive("gammaR", emitter.gamma_r.value());
    positive("omega0", emitter.omega0.value());
    positive("kappa", cavity.kappa.value());
    let mut nonneg = |name: &str, x: f64| {
        if !(x >= 0.0) {
            v.push(format!("{name} must be nonnegative"));
        }
    };
    nonneg("gammaNR", emitter.gamma_nr.value());
    nonneg("gammaStar", emitter.gamma_star.value());
    nonneg("g", cavity.g.value());
    if !(0.0..=1.0).contains(&cavity.eta_r) {
        v.push("etaR must lie in [0,1]".to_string());
    }
    if let Some(p) = cavity.purcell {
        let direct = cavity.transfer_rate().value();
        let via_p = p * emitter.gamma_r.value();
        if (direct - via_p).abs() > 1e-10 * direct.abs().max(via_p.abs()) {
            v.push(format!(
                "transfer rate from g,kappa ({direct:e}) disagrees with P*gammaR ({via_p:e})"
            ));
        }
    }
    ValidationReport { violations: v }
}

/// R = γ_r·P.
pub fn purcell_to_r(purcell: f64, gamma_r: Rate) -> Result<Rate> {
    if !(purcell >= 0.0) || !(gamma_r.value() > 0.0) {
        return Err(domain(
            "Purcell factor must be nonnegative and gammaR positive",
        ));
    }
    Ok(gamma_r * purcell)
}

/// Purcell factor P = (3/4π²)(λ/n)³(Q/V); λ and V in any consistent units.
pub fn purcell_from_mode(lambda: f64, n: f64, q: f64, volume: f64) -> Result<f64> {
    if !(lambda > 0.0 && n > 0.0 && q > 0.0 && volume > 0.0) {
        return Err(domain("mode parameters must all be positive"));
    }
    Ok(3.0 / (4.0 * PI * PI) * (lambda / n).powi(3) * q / volume)
}

/// R from mode parameters via the Purcell factor.
pub fn r_from_mode(lambda: f64, n: f64, q: f64, volume: f64, gamma_r: Rate) -> Result<Rate> {
    purcell_to_r(purcell_from_mode(lambda, n, q, volume)?, gamma_r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn siv_emitter() -> EmitterParams {
        EmitterParams::new(
            Rate::from_lifetime_ns(8.3),
            Rate::ZERO,
            Rate::from_ghz(500.0),
            Rate::from_thz(405.0),
        )
    }

    #[test]
    fn siv_parameters_are_valid() {
        let e = siv_emitter();
        let kappa = CavityParams::kappa_from_q(e.omega0, 60.0);
        let c = CavityParams::from_purcell(2.7e5, e.gamma_r, kappa, 0.97);
        assert!(validate_params(&e, &c).is_valid());
    }

    #[test]
    fn zero_gamma_r_is_reported() {
        let mut e = siv_emitter();
        e.gamma_r = Rate::ZERO;
        let c = CavityParams::from_g_kappa(Rate::per_ps(1.0), Rate::per_ps(1.0), 0.5);
        let r = validate_params(&e, &c);
        assert!(r.violations.iter().any(|s| s == "gammaR must be positive"));
    }

    #[test]
    fn eta_out_of_range_is_reported() {
        let e = siv_emitter();
        let c = CavityParams::from_g_kappa(Rate::per_ps(1.0), Rate::per_ps(1.0), 1.2);
        let r = validate_params(&e, &c);
        assert_eq!(r.violations, vec!["etaR must lie in [0,1]".to_string()]);
    }

    #[test]
    fn purcell_product() {
        let gr = Rate::from_lifetime_ns(8.3);
        let r = purcell_to_r(2.7e5, gr).unwrap();
        // 2.7e5 / 8.3 ns = 3.2530e4 ns^-1 = 32.530 ps^-1
        let expected_per_ns = 2.7e5 / 8.3;
        assert!((r.value() * 1e3 - expected_per_ns).abs() < 1e-9 * expected_per_ns);
        assert!((r.value() * 1e3 - 3.253e4).abs() < 1.0);
        assert_eq!(purcell_to_r(0.0, gr).unwrap(), Rate::ZERO);
        assert!(purcell_to_r(1.0, Rate::ZERO).is_err());
    }

    #[test]
    fn purcell_identity_normalization() {
        let p = purcell_from_mode(1.0, 1.0, 4.0 * PI * PI / 3.0, 1.0).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
        assert!(purcell_from_mode(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(r_from_mode(1.0, 1.0, 1.0, 0.0, Rate::per_ps(1.0)).is_err());
    }

    #[test]
    fn transfer_rate_two_ways() {
        let e = siv_emitter();
        let kappa = CavityParams::kappa_from_q(e.omega0, 60.0);
        let c = CavityParams::from_purcell(2.7e5, e.gamma_r, kappa, 0.9);
        let via_p = e.gamma_r * 2.7e5;
        assert!(((c.transfer_rate() - via_p) / via_p).abs() < 1e-10);
        assert!((c.quality_factor(e.omega0) - 60.0).abs() < 1e-12);
    }

    #[test]
    fn effective_detuning_of_modes() {
        let gs = Rate::per_ps(1.0);
        let m = QuenchModel::single_mode(0.5, gs * 30.0);
        assert!((m.effective_detuning().value() - 60.0).abs() < 1e-12);
        let two = QuenchModel::Modes(vec![
            QuenchMode {
                k: 1.0,
                detuning: Rate::per_ps(3.0),
            },
            QuenchMode {
                k: 1.0,
                detuning: Rate::per_ps(4.0),
            },
        ]);
        // 1/Δ² = 1/9 + 1/16 = 25/144
        assert!((two.effective_detuning().value() - 12.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn quench_model_violations() {
        assert!(
            QuenchModel::EffectiveDetuning(Rate::ZERO)
                .violations()
                .len()
                == 1
        );
        let bad = QuenchModel::Modes(vec![QuenchMode {
            k: -1.0,
            detuning: Rate::per_ps(1.0),
        }]);
        assert_eq!(bad.violations().len(), 1);
        assert!(QuenchModel::single_mode(0.5, Rate::per_ps(2.0))
            .violations()
            .is_empty());
    }

    #[test]
    fn markovian_validity_flag() {
        let m = QuenchModel::single_mode(1.0, Rate::per_ps(10.0));
        assert!(m.markovian_valid(Rate::per_ps(5.0), Rate::per_ps(1.0)));
        assert!(!m.markovian_valid(Rate::per_ps(20.0), Rate::per_ps(1.0)));
    }
}
