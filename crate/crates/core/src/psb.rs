//! Phonon-sideband model: a zero-phonon Lorentzian plus a sum of red-shifted
//! Lorentzians, the Debye–Waller factor, the fraction of sideband power a
//! cavity of quality factor Q lets through, and the resulting corrections
//! to I and β.
//!
//! Wavelengths are in nm. The ZPL has unit peak height and half-width δ.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{domain, Error, Result};
use crate::params::{CavityParams, EmitterParams};
use crate::quad::{self, Tolerance};
use crate::units::Rate;

/// a/(1 + ((λ − λ₀ − c)/b)²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorentzian {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Lorentzian {
    pub fn at_offset(&self, x: f64) -> f64 {
        let u = (x - self.c) / self.b;
        self.a / (1.0 + u * u)
    }

    /// ∫ over the whole line.
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.a * self.b
    }

    /// ∫ over offsets outside [lo, hi].
    fn area_outside(&self, lo: f64, hi: f64) -> f64 {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let right = half_pi - ((hi - self.c) / self.b).atan();
        let left = half_pi - ((self.c - lo) / self.b).atan();
        self.a * self.b * (right + left)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsbSpectrum {
    lambda0: f64,
    delta: f64,
    coeffs: Vec<Lorentzian>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sample {
    Sample3,
    Sample5,
}

impl FromStr for Sample {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sample3" => Ok(Sample::Sample3),
            "sample5" => Ok(Sample::Sample5),
            other => Err(format!(
                "unknown sample '{other}' (expected sample3|sample5)"
            )),
        }
    }
}

#[rustfmt::skip]
const SAMPLE3: [(f64, f64, f64); 6] = [
    (1.4e-3, 1.3, 4.0),
    (6.7e-3, 6.5, 10.5),
    (2.0e-3, 6.0, 20.5),
    (2.2e-3, 6.0, 32.0),
    (2.4e-3, 0.9, 39.0),
    (1.0e-3, 20.0, 47.0),
];

#[rustfmt::skip]
const SAMPLE5: [(f64, f64, f64); 9] = [
    (1.4e-3, 1.7, 7.5),
    (1.8e-3, 8.0, 11.0),
    (2.6e-3, 2.9, 17.5),
    (2.0e-3, 3.3, 22.5),
    (0.9e-3, 2.5, 27.0),
    (1.2e-3, 5.0, 33.0),
    (1.0e-3, 8.0, 39.0),
    (0.3e-3, 1.1, 41.5),
    (0.7e-3, 18.0, 49.0),
];

/// Measured Debye–Waller factors the built-in ZPL widths are set to reproduce.
pub const DW_SAMPLE3: f64 = 0.791;
pub const DW_SAMPLE5: f64 = 0.884;

/// ZPL centre for a 405 THz transition.
pub fn siv_zpl_nm() -> f64 {
    Rate::from_thz(405.0).to_wavelength_nm()
}

/// Integration window for the filter fraction, as offsets from λ₀ in nm.
pub const WINDOW: (f64, f64) = (-100.0, 150.0);

const REL_TOL: f64 = 1e-10;

impl PsbSpectrum {
    /// Coefficients are sorted by `c`.
    pub fn new(lambda0: f64, delta: f64, mut coeffs: Vec<Lorentzian>) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(domain(format!("lambda0 must be positive, got {lambda0}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(domain(format!(
                "ZPL half-width must be positive, got {delta}"
            )));
        }
        for (i, l) in coeffs.iter().enumerate() {
            if !(l.a > 0.0 && l.b > 0.0 && l.c > 0.0)
                || ![l.a, l.b, l.c].iter().all(|v| v.is_finite())
            {
                return Err(domain(format!(
                    "sideband term {} needs a, b, c > 0 (got {}, {}, {})",
                    i + 1,
                    l.a,
                    l.b,
                    l.c
                )));
            }
        }
        coeffs.sort_by(|x, y| x.c.total_cmp(&y.c));
        Ok(Self {
            lambda0,
            delta,
            coeffs,
        })
    }

    /// Sideband terms with the ZPL width chosen so that δ/(δ + Σab) = `dw`.
    pub fn with_debye_waller(lambda0: f64, dw: f64, coeffs: Vec<Lorentzian>) -> Result<Self> {
        if !(dw > 0.0 && dw < 1.0) {
            return Err(domain(format!(
                "Debye-Waller factor must lie in (0,1), got {dw}"
            )));
        }
        let sum_ab: f64 = coeffs.iter().map(|l| l.a * l.b).sum();
        Self::new(lambda0, dw * sum_ab / (1.0 - dw), coeffs)
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn coeffs(&self) -> &[Lorentzian] {
        &self.coeffs
    }

    pub fn zpl(&self, lambda: f64) -> f64 {
        let u = (lambda - self.lambda0) / self.delta;
        1.0 / (1.0 + u * u)
    }

    pub fn sideband(&self, lambda: f64) -> f64 {
        let x = lambda - self.lambda0;
        self.coeffs.iter().map(|l| l.at_offset(x)).sum()
    }

    pub fn total(&self, lambda: f64) -> f64 {
        self.zpl(lambda) + self.sideband(lambda)
    }

    /// Cavity transmission 1/(1 + 4Q²(λ−λ₀)²/λ₀²).
    pub fn cavity_filter(&self, lambda: f64, q: f64) -> f64 {
        let u = 2.0 * q * (lambda - self.lambda0) / self.lambda0;
        1.0 / (1.0 + u * u)
    }

    /// δ/(δ + Σaᵢbᵢ), the ZPL share of the full-line emission.
    pub fn dw_factor(&self) -> f64 {
        let sum_ab: f64 = self.coeffs.iter().map(|l| l.a * l.b).sum();
        self.delta / (self.delta + sum_ab)
    }

    /// Sideband height at the ZPL centre, Σaᵢ/(1 + (cᵢ/bᵢ)²).
    pub fn s0(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|l| l.a / (1.0 + (l.c / l.b).powi(2)))
            .sum()
    }

    fn breakpoints(&self) -> Vec<f64> {
        std::iter::once(self.lambda0)
            .chain(self.coeffs.iter().map(|l| self.lambda0 + l.c))
            .collect()
    }

    fn window(&self) -> (f64, f64) {
        (self.lambda0 + WINDOW.0, self.lambda0 + WINDOW.1)
    }

    /// ∫f over the whole line: the window with peak breakpoints plus two
    /// mapped tails.
    fn integrate_line<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let (lo, hi) = self.window();
        let tol = Tolerance::relative(REL_TOL);
        let scale = self.coeffs.iter().map(|l| l.b).fold(self.delta, f64::max);
        let mid = quad::integrate_with_breaks(&f, lo, hi, &self.breakpoints(), tol)?;
        let right = quad::integrate_to_infinity(&f, hi, scale, tol)?;
        let left = quad::integrate_from_neg_infinity(&f, lo, scale, tol)?;
        Ok(mid.value + right.value + left.value)
    }

    /// Debye–Waller factor by quadrature of the ZPL and the total spectrum.
    pub fn dw_numeric(&self) -> Result<f64> {
        let zpl = self.integrate_line(|x| self.zpl(x))?;
        let total = self.integrate_line(|x| self.total(x))?;
        Ok(zpl / total)
    }

    /// Share of ∫S_PSB falling outside the filter-fraction window.
    pub fn window_tail_fraction(&self) -> f64 {
        let total: f64 = self.coeffs.iter().map(Lorentzian::area).sum();
        if total == 0.0 {
            return 0.0;
        }
        let outside: f64 = self
            .coeffs
            .iter()
            .map(|l| l.area_outside(WINDOW.0, WINDOW.1))
            .sum();
        outside / total
    }

    /// F(Q) = ∫S_cav·S_PSB / ∫S_PSB over the window. Without sideband terms
    /// there is nothing to filter and F = 1.
    pub fn filter_fraction(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(domain(format!(
                "quality factor must be finite and >= 0, got {q}"
            )));
        }
        if self.coeffs.is_empty() {
            return Ok(1.0);
        }
        let (lo, hi) = self.window();
        let tol = Tolerance::relative(REL_TOL);
        let bp = self.breakpoints();
        let den = quad::integrate_with_breaks(|x| self.sideband(x), lo, hi, &bp, tol)?;
        if q == 0.0 {
            return Ok(1.0);
        }
        let num = quad::integrate_with_breaks(
            |x| self.cavity_filter(x, q) * self.sideband(x),
            lo,
            hi,
            &bp,
            tol,
        )?;
        Ok((num.value / den.value).clamp(0.0, 1.0))
    }

    /// CSV with `lambda0_nm=` and `delta_nm=` metadata lines, then
    /// `a,b_nm,c_nm` rows. Values use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "lambda0_nm={}\ndelta_nm={}\na,b_nm,c_nm\n",
            self.lambda0, self.delta
        );
        for l in &self.coeffs {
            let _ = writeln!(s, "{},{},{}", l.a, l.b, l.c);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::SpectrumParse { line, message };
        let mut lambda0 = None;
        let mut delta = None;
        let mut header = false;
        let mut coeffs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let number = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| err(n, format!("'{}': {e}", v.trim())))
            };
            if let Some(v) = line.strip_prefix("lambda0_nm=") {
                lambda0 = Some(number(v)?);
            } else if let Some(v) = line.strip_prefix("delta_nm=") {
                delta = Some(number(v)?);
            } else if !header {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols != ["a", "b_nm", "c_nm"] {
                    return Err(err(
                        n,
                        format!("expected header 'a,b_nm,c_nm', got '{line}'"),
                    ));
                }
                header = true;
            } else {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 3 {
                    return Err(err(n, format!("expected 3 columns, got {}", cols.len())));
                }
                coeffs.push(Lorentzian {
                    a: number(cols[0])?,
                    b: number(cols[1])?,
                    c: number(cols[2])?,
                });
            }
        }
        let lambda0 = lambda0.ok_or_else(|| err(0, "missing lambda0_nm=".into()))?;
        let delta = delta.ok_or_else(|| err(0, "missing delta_nm=".into()))?;
        if !header {
            return Err(err(0, "missing header 'a,b_nm,c_nm'".into()));
        }
        Self::new(lambda0, delta, coeffs)
    }
}

/// Tabulated sideband fits with the ZPL width reconstructed from the
/// measured Debye–Waller factor.
pub fn builtin_spectrum(sample: Sample) -> PsbSpectrum {
    let (table, dw): (&[(f64, f64, f64)], f64) = match sample {
        Sample::Sample3 => (&SAMPLE3, DW_SAMPLE3),
        Sample::Sample5 => (&SAMPLE5, DW_SAMPLE5),
    };
    let coeffs = table
        .iter()
        .map(|&(a, b, c)| Lorentzian { a, b, c })
        .collect();
    PsbSpectrum::with_debye_waller(siv_zpl_nm(), dw, coeffs).expect("built-in table is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsbCorrectionInput {
    /// Franck–Condon factor squared, B² = DW.
    pub b2: f64,
    pub f: f64,
    pub i0: f64,
    pub beta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsbCorrected {
    pub indist: f64,
    pub beta: f64,
}

impl PsbCorrected {
    pub fn product(&self) -> f64 {
        self.indist * self.beta
    }
}

impl PsbCorrectionInput {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.b2 > 0.0 && self.b2 <= 1.0) {
            bad.push(format!("B2 = {} not in (0,1]", self.b2));
        }
        for (name, v) in [("F", self.f), ("I0", self.i0), ("beta0", self.beta0)] {
            if !(0.0..=1.0).contains(&v) {
                bad.push(format!("{name} = {v} not in [0,1]"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(domain(bad.join("; ")))
        }
    }
}

/// Weak-coupling sideband corrections:
/// I = I₀[B²/(B²+F(1−B²))]², β = β₀(B²+F(1−B²))/(1−β₀(1−F)(1−B²)).
pub fn apply_psb_correction(input: &PsbCorrectionInput) -> Result<PsbCorrected> {
    input.validate()?;
    let PsbCorrectionInput { b2, f, i0, beta0 } = *input;
    let kept = b2 + f * (1.0 - b2);
    let ratio = b2 / kept;
    Ok(PsbCorrected {
        indist: i0 * ratio * ratio,
        beta: beta0 * kept / (1.0 - beta0 * (1.0 - f) * (1.0 - b2)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsbValidity {
    /// 2g < γ+κ+γ*.
    pub weak_coupling_ok: bool,
    /// R·S₀ < γ*: the sideband barely adds to the ZPL dephasing.
    pub dephasing_model_ok: bool,
    /// 2g/(γ+κ+γ*).
    pub coupling_ratio: f64,
    /// R·S₀/γ*.
    pub dephasing_ratio: f64,
}

/// Whether the weak-coupling sideband corrections can be trusted at this
/// operating point. `gamma_q` enters the total emitter decay.
pub fn validity_check(
    emitter: &EmitterParams,
    cavity: &CavityParams,
    gamma_q: Rate,
    spectrum: &PsbSpectrum,
) -> PsbValidity {
    let g = cavity.g.value();
    let width = (emitter.total_decay(gamma_q) + cavity.kappa + emitter.gamma_star).value();
    let coupling_ratio = 2.0 * g / width;
    let r = cavity.transfer_rate().value();
    let s = emitter.gamma_star.value();
    let rs0 = r * spectrum.s0();
    let dephasing_ratio = if rs0 == 0.0 { 0.0 } else { rs0 / s };
    PsbValidity {
        weak_coupling_ok: coupling_ratio < 1.0,
        dephasing_model_ok: rs0 == 0.0 || rs0 < s,
        coupling_ratio,
        dephasing_ratio,
    }
}
