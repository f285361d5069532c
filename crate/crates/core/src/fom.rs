//! Closed-form Markovian figures of merit: cavity efficiency β,
//! indistinguishability I, quenching rate, regime labels and the
//! closed-form Iβ maximizer in the mode-detuned quenching case.

use std::fmt;

use crate::error::{domain, Result};
use crate::oracle;
use crate::params::{CavityParams, EmitterParams, QuenchModel};
use crate::units::Rate;

/// The four rates every closed form depends on, in a common unit.
///
/// `gamma` is the total emitter decay γ_r + γ_nr + γ_q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRates {
    pub r: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub gamma_star: f64,
}

impl DecayRates {
    pub fn new(r: f64, kappa: f64, gamma: f64, gamma_star: f64) -> Self {
        Self {
            r,
            kappa,
            gamma,
            gamma_star,
        }
    }

    pub fn assemble(emitter: &EmitterParams, cavity: &CavityParams, gamma_q: Rate) -> Self {
        Self {
            r: cavity.transfer_rate().value(),
            kappa: cavity.kappa.value(),
            gamma: emitter.total_decay(gamma_q).value(),
            gamma_star: emitter.gamma_star.value(),
        }
    }

    /// Coupling g = √(Rκ)/2.
    pub fn g(&self) -> f64 {
        (self.r * self.kappa).sqrt() / 2.0
    }

    /// Denominator of β written with R: R(γ+κ) + γ(γ+γ*+κ).
    fn beta_denominator(&self) -> f64 {
        let Self {
            r,
            kappa,
            gamma,
            gamma_star,
        } = *self;
        r * (gamma + kappa) + gamma * (gamma + gamma_star + kappa)
    }

    pub fn beta(&self) -> Result<f64> {
        if !(self.kappa > 0.0) {
            return Err(domain("cavity linewidth kappa must be positive"));
        }
        let den = self.beta_denominator();
        if den == 0.0 {
            // R = 0 and γ = 0: nothing ever leaves the emitter.
            return Err(domain("no decay channel: R = 0 and gamma = 0"));
        }
        Ok(self.r * self.kappa / den)
    }

    /// Γ₁² = (3γ+κ)(γ+3κ) + 4κR.
    fn gamma1_sq(&self) -> f64 {
        let Self {
            r, kappa, gamma, ..
        } = *self;
        (3.0 * gamma + kappa) * (gamma + 3.0 * kappa) + 4.0 * kappa * r
    }

    /// 3γ*(2γ+3κ+γ*) + Γ₁².
    fn zeroth_numerator(&self) -> f64 {
        let Self {
            kappa,
            gamma,
            gamma_star,
            ..
        } = *self;
        3.0 * gamma_star * (2.0 * gamma + 3.0 * kappa + gamma_star) + self.gamma1_sq()
    }

    /// (R+γ)(κ+γ)(R+γ+γ*)(κ+γ+γ*)
    fn lorentzian_product(&self) -> f64 {
        let Self {
            r,
            kappa,
            gamma,
            gamma_star,
        } = *self;
        (r + gamma) * (kappa + gamma) * (r + gamma + gamma_star) * (kappa + gamma + gamma_star)
    }

    /// R²κ²/β² = [R(γ+κ)+γ(γ+γ*+κ)]², which keeps the g → 0 limit finite.
    fn check_defined(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(domain("cavity linewidth kappa must be positive"));
        }
        if self.r + self.gamma <= 0.0 {
            return Err(domain(
                "indistinguishability undefined: R = 0 and gamma = 0",
            ));
        }
        Ok(())
    }

    /// Zeroth-order indistinguishability I⁽⁰⁾ (dephasing kept exactly in the
    /// cavity propagator, dropped from the population propagator).
    pub fn indist_zeroth(&self) -> Result<f64> {
        self.check_defined()?;
        let d = self.beta_denominator();
        Ok(d * d * self.zeroth_numerator() / (self.lorentzian_product() * self.gamma1_sq()))
    }

    /// I⁽¹⁾/(γ* I⁽⁰⁾).
    ///
    /// The two Γ₂²-denominated terms of the three-term grouping combine into
    /// a numerator that is an exact polynomial multiple of
    /// Γ₂² = 3γ*(γ−γ*) + 4γ(γ+R); the quotient is −N below, so no removable
    /// singularity is left.
    pub fn first_order_ratio(&self) -> Result<f64> {
        self.check_defined()?;
        let Self {
            r,
            kappa,
            gamma,
            gamma_star,
        } = *self;
        let gs = gamma + gamma_star;
        let n = 2.0 * r * r * kappa
            + r * gs * gs
            + 8.0 * r * gamma * kappa
            + 3.0 * r * gamma_star * kappa
            + r * kappa * kappa
            + 4.0 * gamma * gs * gs
            + 12.0 * gamma * kappa * gs
            + 4.0 * gamma * kappa * kappa;
        let grouped = -n / (2.0 * self.zeroth_numerator() * (gamma + kappa) * (gamma + r));
        let last =
            (gamma + kappa) * (8.0 * gamma + 5.0 * r) / (2.0 * (gamma + r) * self.gamma1_sq());
        Ok(grouped - last)
    }

    /// I⁽⁰⁾ + I⁽¹⁾, exact to first order in γ*/(κ+γ).
    pub fn indist_first_order(&self) -> Result<f64> {
        let i0 = self.indist_zeroth()?;
        Ok(i0 * (1.0 + self.gamma_star * self.first_order_ratio()?))
    }

    /// Reduced form for γ < γ* < κ, with I₁ = (γ*/κ)(6κ−R)/(3κ+4R).
    pub fn indist_simplified(&self) -> Result<f64> {
        self.check_defined()?;
        let Self {
            r,
            kappa,
            gamma_star,
            ..
        } = *self;
        let i1 = (gamma_star / kappa) * (6.0 * kappa - r) / (3.0 * kappa + 4.0 * r);
        let d = self.beta_denominator();
        Ok(d * d * (1.0 + i1) / self.lorentzian_product())
    }
}

/// β = 4g²κ / [4g²(γ+κ) + γκ(γ+κ+γ*)], γ = γ_r + γ_nr + γ_q.
pub fn beta_markovian(
    emitter: &EmitterParams,
    cavity: &CavityParams,
    gamma_q: Rate,
) -> Result<f64> {
    DecayRates::assemble(emitter, cavity, gamma_q).beta()
}

/// Quenching rate into higher-order modes, Σ g_l²κ_nr/(Δ_l² + (κ_nr/2)²)
/// with g_l = k_l g; the effective form is g²κ_nr/Δ_q².
pub fn gamma_q(model: &QuenchModel, g: Rate, kappa_nr: Rate) -> Rate {
    let g2 = g.value() * g.value();
    let knr = kappa_nr.value();
    let v = match model {
        QuenchModel::EffectiveDetuning(d) => g2 * knr / (d.value() * d.value()),
        QuenchModel::Modes(modes) => modes
            .iter()
            .map(|m| {
                let d = m.detuning.value();
                m.k * m.k * g2 * knr / (d * d + 0.25 * knr * knr)
            })
            .sum(),
    };
    Rate::per_ps(v)
}

/// Near-resonant upper bound (4g²/κ_nr)Σk_l². Diagnostic only.
pub fn near_resonant_quench_limit(model: &QuenchModel, g: Rate, kappa_nr: Rate) -> Rate {
    let sum_k2: f64 = match model {
        QuenchModel::EffectiveDetuning(_) => 1.0,
        QuenchModel::Modes(modes) => modes.iter().map(|m| m.k * m.k).sum(),
    };
    Rate::per_ps(4.0 * g.value() * g.value() / kappa_nr.value() * sum_k2)
}

/// Quenching rate for a cavity, zero without a quench model.
pub fn quench_rate(model: Option<&QuenchModel>, cavity: &CavityParams) -> Rate {
    model.map_or(Rate::ZERO, |m| gamma_q(m, cavity.g, cavity.kappa_nr()))
}

pub fn indist_zeroth(emitter: &EmitterParams, cavity: &CavityParams, gamma_q: Rate) -> Result<f64> {
    DecayRates::assemble(emitter, cavity, gamma_q).indist_zeroth()
}

pub fn indist_first_order(
    emitter: &EmitterParams,
    cavity: &CavityParams,
    gamma_q: Rate,
) -> Result<f64> {
    DecayRates::assemble(emitter, cavity, gamma_q).indist_first_order()
}

pub fn indist_simplified(
    emitter: &EmitterParams,
    cavity: &CavityParams,
    gamma_q: Rate,
) -> Result<f64> {
    DecayRates::assemble(emitter, cavity, gamma_q).indist_simplified()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RegimeLabel {
    /// R > γ* and κ > γ*.
    pub critical: bool,
    /// 2g > γ+κ+γ*.
    pub strong_coupling: bool,
    /// 2g ≤ γ+κ+γ* and κ > γ*.
    pub bad_cavity: bool,
    /// γ_q > κ or γ_q > R.
    pub quench_dominated: bool,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.critical, "critical"),
            (self.strong_coupling, "strong-coupling"),
            (self.bad_cavity, "bad-cavity"),
            (self.quench_dominated, "quench-dominated"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join("|"))
        }
    }
}

pub fn classify_rates(rates: &DecayRates, gamma_q: f64) -> RegimeLabel {
    let DecayRates {
        r,
        kappa,
        gamma,
        gamma_star,
    } = *rates;
    let two_g = 2.0 * rates.g();
    let total = gamma + kappa + gamma_star;
    RegimeLabel {
        critical: r > gamma_star && kappa > gamma_star,
        strong_coupling: two_g > total,
        bad_cavity: two_g <= total && kappa > gamma_star,
        quench_dominated: gamma_q > kappa || gamma_q > r,
    }
}

pub fn classify_regime(
    emitter: &EmitterParams,
    cavity: &CavityParams,
    gamma_q: Rate,
) -> RegimeLabel {
    classify_rates(
        &DecayRates::assemble(emitter, cavity, gamma_q),
        gamma_q.value(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalCavity {
    pub g: Rate,
    pub kappa: Rate,
    pub gamma_q: Rate,
    /// γ* > Δ_q/10: outside the small-γ*/Δ_q regime of the closed form.
    pub outside_small_ratio: bool,
}

/// κ_max = 2g_max = [Δ_q²γ*/(1−η_r)]^{1/3}, the mode-detuned Iβ optimum.
pub fn optimal_cavity(gamma_star: Rate, delta_q: Rate, eta_r: f64) -> Result<OptimalCavity> {
    if !(eta_r < 1.0) {
        return Err(domain(
            "etaR = 1 has no quenching and no finite Ibeta maximizer",
        ));
    }
    if !(gamma_star.value() > 0.0 && delta_q.value() > 0.0) {
        return Err(domain("gammaStar and DeltaQ must be positive"));
    }
    let loss = 1.0 - eta_r;
    let dq = delta_q.value();
    let kappa = (dq * dq * gamma_star.value() / loss).cbrt();
    let g = kappa / 2.0;
    let gq = g * g * kappa * loss / (dq * dq);
    Ok(OptimalCavity {
        g: Rate::per_ps(g),
        kappa: Rate::per_ps(kappa),
        gamma_q: Rate::per_ps(gq),
        outside_small_ratio: gamma_star.value() > dq / 10.0,
    })
}

/// How the indistinguishability is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Simplified,
    #[default]
    FullPerturbative,
    NumericOracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Simplified => "simplified",
            Method::FullPerturbative => "full",
            Method::NumericOracle => "oracle",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "simplified" => Ok(Method::Simplified),
            "full" => Ok(Method::FullPerturbative),
            "oracle" => Ok(Method::NumericOracle),
            other => Err(format!(
                "unknown method '{other}' (expected full|simplified|oracle)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Validity {
    /// γ*/(κ+γ) < 1, needed by the perturbative expansion.
    pub perturbative: bool,
    /// γ < γ* < κ, the stated domain of the simplified form.
    pub simplified: bool,
    /// Every quench mode weakly coupled enough to be treated as a bath.
    pub quench_markovian: bool,
    /// The returned I lies in [0,1].
    pub in_unit_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FomResult {
    pub beta: f64,
    pub indist: f64,
    /// beta · indist.
    pub product: f64,
    pub regime: RegimeLabel,
    pub quench_rate: Rate,
    pub method: Method,
    pub validity: Validity,
}

/// Figures of merit at one parameter point.
pub fn evaluate(
    emitter: &EmitterParams,
    cavity: &CavityParams,
    quench: Option<&QuenchModel>,
    method: Method,
) -> Result<FomResult> {
    let gq = quench_rate(quench, cavity);
    let rates = DecayRates::assemble(emitter, cavity, gq);
    let (beta, indist) = match method {
        Method::Simplified => (rates.beta()?, rates.indist_simplified()?),
        Method::FullPerturbative => (rates.beta()?, rates.indist_first_order()?),
        Method::NumericOracle => {
            let m = oracle::build_matrices(emitter, cavity, gq);
            let beta = oracle::beta_numeric(&m, cavity.kappa)?;
            let i = oracle::indist_numeric(&m, cavity.kappa, oracle::IndistMethod::EigenSum)?;
            (beta, i)
        }
    };
    let validity = Validity {
        perturbative: rates.gamma_star / (rates.kappa + rates.gamma) < 1.0,
        simplified: rates.gamma < rates.gamma_star && rates.gamma_star < rates.kappa,
        quench_markovian: quench.is_none_or(|m| m.markovian_valid(cavity.g, cavity.kappa_nr())),
        in_unit_range: (0.0..=1.0).contains(&indist),
    };
    Ok(FomResult {
        beta,
        indist,
        product: beta * indist,
        regime: classify_rates(&rates, gq.value()),
        quench_rate: gq,
        method,
        validity,
    })
}
