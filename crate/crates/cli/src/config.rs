//! Flat `key = value` configuration. Lines starting with `#` are comments.
//! Every key must be one of [`KEYS`]; anything else is rejected so typos
//! cannot silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};
use spsfom::params::QuenchMode;
use spsfom::psb::{self, PsbSpectrum, Sample};
use spsfom::sweep::{Axis, SweepContext, SweepSpec};
use spsfom::{CavityParams, EmitterParams, Method, QuenchModel, Rate, Scenario};

pub const KEYS: &[(&str, &str)] = &[
    ("emitter.gammaR_ns", "radiative lifetime 1/gammaR in ns"),
    (
        "emitter.gammaNR_GHz",
        "intrinsic nonradiative decay, GHz (default 0)",
    ),
    ("emitter.gammaStar_GHz", "pure dephasing rate, GHz"),
    ("emitter.omega_THz", "transition frequency, THz"),
    ("cavity.Q", "quality factor; sets kappa = omega/Q"),
    ("cavity.purcell", "R/gammaR (needs cavity.Q)"),
    ("cavity.g_GHz", "coupling rate, GHz (with cavity.kappa_GHz)"),
    (
        "cavity.kappa_GHz",
        "cavity linewidth, GHz (with cavity.g_GHz)",
    ),
    (
        "cavity.etaR",
        "radiative fraction of kappa, in [0,1] (default 1)",
    ),
    (
        "quench.DeltaQ_THz",
        "effective higher-order-mode detuning, THz",
    ),
    ("quench.modes", "semicolon-separated k:DeltaGHz pairs"),
    ("psb.sample", "none | sample3 | sample5 | file:<path>"),
    ("method", "full | simplified | oracle"),
    ("sweep.x", "axis quantity:lin|log:min:max:points"),
    ("sweep.y", "axis quantity:lin|log:min:max:points"),
    (
        "sweep.bareDecayRatio",
        "(gammaR+gammaNR)/gammaStar override for sweeps and optimize",
    ),
    ("optimize.R", "search range min:max for R/gammaStar"),
    ("optimize.kappa", "search range min:max for kappa/gammaStar"),
    (
        "optimize.points",
        "grid points per axis per refinement stage (odd, default 41)",
    ),
    (
        "qmax.DeltaEff_THz",
        "loss-scaled detunings DeltaQ(1-etaR)^(-1/2) to scan, min:max:points",
    ),
    ("qmax.Q", "Q search range min:max (default 1:10000)"),
    (
        "validate.ratio",
        "gammaStar/(kappa+gamma) range min:max (default 0.01:0.3)",
    ),
    (
        "validate.C",
        "envelope constant C in |dI| <= C (gammaStar/(kappa+gamma))^2 (default 5)",
    ),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: {k}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "{k}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub Vec<Diagnostic>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "config error: {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn diag(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError(vec![Diagnostic {
        line: None,
        key: Some(key.to_string()),
        message: message.into(),
    }])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, (usize, String)>,
    /// SHA-256 of the raw text.
    pub hash: String,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                errors.push(Diagnostic {
                    line: Some(line),
                    key: None,
                    message: format!("expected key=value, got '{content}'"),
                });
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.iter().any(|(name, _)| *name == k) {
                errors.push(Diagnostic {
                    line: Some(line),
                    key: Some(k.into()),
                    message: "unknown key".into(),
                });
                continue;
            }
            if let Some((prev, _)) = values.insert(k.to_string(), (line, v.to_string())) {
                errors.push(Diagnostic {
                    line: Some(line),
                    key: Some(k.into()),
                    message: format!("duplicate key (first set on line {prev})"),
                });
            }
        }
        if !errors.is_empty() {
            return Err(ConfigError(errors));
        }
        let config = Config {
            values,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        };
        config.check_cavity_keys()?;
        Ok(config)
    }

    pub fn empty() -> Self {
        Self::parse("").expect("empty config is valid")
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError(vec![Diagnostic {
            line: self.values.get(key).map(|(l, _)| *l),
            key: Some(key.into()),
            message: message.into(),
        }])
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.err(key, format!("'{v}' is not a finite number")))
            })
            .transpose()
    }

    fn required(&self, key: &str) -> Result<f64, ConfigError> {
        self.number(key)?
            .ok_or_else(|| diag(key, "required key missing"))
    }

    /// `min:max` with 0 < min < max.
    pub fn range(&self, key: &str) -> Result<Option<(f64, f64)>, ConfigError> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let parts: Vec<Option<f64>> = v.split(':').map(|p| p.trim().parse::<f64>().ok()).collect();
        match parts[..] {
            [Some(a), Some(b)] if a > 0.0 && b > a && b.is_finite() => Ok(Some((a, b))),
            _ => Err(self.err(
                key,
                format!("'{v}' is not a range min:max with 0 < min < max"),
            )),
        }
    }

    /// Cavity keys may come from only one family.
    fn check_cavity_keys(&self) -> Result<(), ConfigError> {
        let purcell = self.has("cavity.purcell");
        let gk = self.has("cavity.g_GHz") || self.has("cavity.kappa_GHz");
        if purcell && gk {
            return Err(self.err(
                "cavity.purcell",
                "give either cavity.purcell or cavity.g_GHz + cavity.kappa_GHz, not both",
            ));
        }
        if self.has("cavity.kappa_GHz") && self.has("cavity.Q") {
            return Err(self.err(
                "cavity.Q",
                "cavity.Q and cavity.kappa_GHz both set the linewidth",
            ));
        }
        if self.has("quench.DeltaQ_THz") && self.has("quench.modes") {
            return Err(self.err(
                "quench.modes",
                "give either quench.DeltaQ_THz or quench.modes, not both",
            ));
        }
        Ok(())
    }

    pub fn method(&self, cli_override: Option<Method>) -> Result<Method, ConfigError> {
        if let Some(m) = cli_override {
            return Ok(m);
        }
        match self.get("method") {
            None => Ok(Method::default()),
            Some(v) => v.parse().map_err(|e: String| self.err("method", e)),
        }
    }

    pub fn emitter(&self) -> Result<EmitterParams, ConfigError> {
        let tau = self.required("emitter.gammaR_ns")?;
        if !(tau > 0.0) {
            return Err(self.err("emitter.gammaR_ns", "lifetime must be positive"));
        }
        let gnr = self.number("emitter.gammaNR_GHz")?.unwrap_or(0.0);
        let gs = self.required("emitter.gammaStar_GHz")?;
        let omega = self.required("emitter.omega_THz")?;
        for (k, v) in [("emitter.gammaNR_GHz", gnr), ("emitter.gammaStar_GHz", gs)] {
            if v < 0.0 {
                return Err(self.err(k, "must be >= 0"));
            }
        }
        if !(omega > 0.0) {
            return Err(self.err("emitter.omega_THz", "must be positive"));
        }
        Ok(EmitterParams::new(
            Rate::from_lifetime_ns(tau),
            Rate::from_ghz(gnr),
            Rate::from_ghz(gs),
            Rate::from_thz(omega),
        ))
    }

    fn eta_r(&self) -> Result<f64, ConfigError> {
        let eta = self.number("cavity.etaR")?;
        if eta.is_none() && (self.has("quench.DeltaQ_THz") || self.has("quench.modes")) {
            return Err(diag("cavity.etaR", "required when a quench model is given"));
        }
        let eta = eta.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&eta) {
            return Err(self.err("cavity.etaR", "must lie in [0,1]"));
        }
        Ok(eta)
    }

    /// The cavity when fully specified: exactly one of cavity.purcell (with
    /// cavity.Q) or cavity.g_GHz + cavity.kappa_GHz (cavity.Q may replace
    /// the latter).
    pub fn cavity(&self, emitter: &EmitterParams) -> Result<CavityParams, ConfigError> {
        let eta = self.eta_r()?;
        let q = self.number("cavity.Q")?;
        if let Some(q) = q {
            if !(q > 0.0) {
                return Err(self.err("cavity.Q", "must be positive"));
            }
        }
        let kappa_from_q = q.map(|q| CavityParams::kappa_from_q(emitter.omega0, q));
        if let Some(p) = self.number("cavity.purcell")? {
            if !(p >= 0.0) {
                return Err(self.err("cavity.purcell", "must be >= 0"));
            }
            let kappa =
                kappa_from_q.ok_or_else(|| diag("cavity.Q", "required with cavity.purcell"))?;
            return Ok(CavityParams::from_purcell(p, emitter.gamma_r, kappa, eta));
        }
        match (
            self.number("cavity.g_GHz")?,
            self.number("cavity.kappa_GHz")?
                .map(Rate::from_ghz)
                .or(kappa_from_q),
        ) {
            (Some(g), Some(kappa)) => {
                if !(kappa.value() > 0.0) {
                    return Err(self.err("cavity.kappa_GHz", "must be positive"));
                }
                Ok(CavityParams::from_g_kappa(Rate::from_ghz(g), kappa, eta))
            }
            (Some(_), None) => Err(diag(
                "cavity.kappa_GHz",
                "required with cavity.g_GHz (or give cavity.Q)",
            )),
            (None, Some(_)) if self.has("cavity.kappa_GHz") => {
                Err(diag("cavity.g_GHz", "required with cavity.kappa_GHz"))
            }
            _ => Err(diag(
                "cavity",
                "exactly one of cavity.purcell or cavity.g_GHz + cavity.kappa_GHz is required",
            )),
        }
    }

    pub fn quench(&self) -> Result<Option<QuenchModel>, ConfigError> {
        if let Some(d) = self.number("quench.DeltaQ_THz")? {
            if !(d > 0.0) {
                return Err(self.err("quench.DeltaQ_THz", "must be positive"));
            }
            return Ok(Some(QuenchModel::EffectiveDetuning(Rate::from_thz(d))));
        }
        let Some(spec) = self.get("quench.modes") else {
            return Ok(None);
        };
        let mut modes = Vec::new();
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let parsed = part.split_once(':').and_then(|(k, d)| {
                Some((k.trim().parse::<f64>().ok()?, d.trim().parse::<f64>().ok()?))
            });
            match parsed {
                Some((k, d)) if k > 0.0 && d.is_finite() && k.is_finite() => {
                    modes.push(QuenchMode {
                        k,
                        detuning: Rate::from_ghz(d),
                    })
                }
                _ => {
                    return Err(self.err(
                        "quench.modes",
                        format!("'{part}' is not k:DeltaGHz with k > 0"),
                    ))
                }
            }
        }
        if modes.is_empty() {
            return Err(self.err("quench.modes", "no modes given"));
        }
        let model = QuenchModel::Modes(modes);
        let problems = model.violations();
        if !problems.is_empty() {
            return Err(self.err("quench.modes", problems.join("; ")));
        }
        Ok(Some(model))
    }

    /// The attached spectrum. `file:` paths are relative to `base_dir`.
    pub fn spectrum(&self, base_dir: &Path) -> Result<Option<PsbSpectrum>, SpectrumSource> {
        match self.get("psb.sample") {
            None | Some("none") => Ok(None),
            Some(v) => {
                if let Some(path) = v.strip_prefix("file:") {
                    let full = base_dir.join(path.trim());
                    let text = std::fs::read_to_string(&full)
                        .map_err(|e| SpectrumSource::Io(format!("{}: {e}", full.display())))?;
                    PsbSpectrum::from_csv(&text).map(Some).map_err(|e| {
                        SpectrumSource::Config(
                            self.err("psb.sample", format!("{}: {e}", full.display())),
                        )
                    })
                } else {
                    v.parse::<Sample>()
                        .map(|s| Some(psb::builtin_spectrum(s)))
                        .map_err(|e| SpectrumSource::Config(self.err("psb.sample", e)))
                }
            }
        }
    }

    pub fn scenario(
        &self,
        base_dir: &Path,
        method: Option<Method>,
    ) -> Result<Scenario, SpectrumSource> {
        let emitter = self.emitter()?;
        Ok(Scenario {
            cavity: self.cavity(&emitter)?,
            emitter,
            quench: self.quench()?,
            spectrum: self.spectrum(base_dir)?,
            method: self.method(method)?,
        })
    }

    fn axis(&self, key: &str) -> Result<Axis, ConfigError> {
        let v = self
            .get(key)
            .ok_or_else(|| diag(key, "required for sweep"))?;
        v.parse()
            .map_err(|e: spsfom::Error| self.err(key, e.to_string()))
    }

    fn bare_decay_ratio(&self) -> Result<Option<f64>, ConfigError> {
        let r = self.number("sweep.bareDecayRatio")?;
        if matches!(r, Some(v) if v < 0.0) {
            return Err(self.err("sweep.bareDecayRatio", "must be >= 0"));
        }
        Ok(r)
    }

    /// Base scenario for sweeps and optimisation; cavity keys are optional
    /// here because axes or the search box supply R and κ.
    pub fn sweep_context(
        &self,
        base_dir: &Path,
        method: Option<Method>,
    ) -> Result<SweepContext, SpectrumSource> {
        let emitter = self.emitter()?;
        let has_cavity = ["cavity.purcell", "cavity.g_GHz", "cavity.kappa_GHz"]
            .iter()
            .any(|k| self.has(k));
        let cavity = if has_cavity {
            self.cavity(&emitter)?
        } else {
            let kappa = match self.number("cavity.Q")? {
                Some(q) if q > 0.0 => CavityParams::kappa_from_q(emitter.omega0, q),
                Some(_) => return Err(self.err("cavity.Q", "must be positive").into()),
                None => emitter.gamma_star,
            };
            CavityParams::from_transfer_rate(emitter.gamma_star, kappa, self.eta_r()?)
        };
        let base = Scenario {
            emitter,
            cavity,
            quench: self.quench()?,
            spectrum: self.spectrum(base_dir)?,
            method: self.method(method)?,
        };
        let mut ctx = SweepContext::new(base);
        ctx.bare_decay_ratio = self.bare_decay_ratio()?;
        Ok(ctx)
    }

    pub fn sweep_spec(
        &self,
        base_dir: &Path,
        method: Option<Method>,
    ) -> Result<SweepSpec, SpectrumSource> {
        let spec = SweepSpec {
            x: self.axis("sweep.x")?,
            y: self.axis("sweep.y")?,
            context: self.sweep_context(base_dir, method)?,
        };
        let sets = |slot: &[&str]| {
            [spec.x.quantity.name(), spec.y.quantity.name()]
                .iter()
                .any(|n| slot.contains(n))
        };
        let has_cavity = ["cavity.purcell", "cavity.g_GHz", "cavity.kappa_GHz"]
            .iter()
            .any(|k| self.has(k));
        if !has_cavity && !sets(&["R/gammaStar", "R/gammaR"]) {
            return Err(diag(
                "sweep",
                "no axis sets R and no cavity coupling is configured",
            )
            .into());
        }
        if !has_cavity && !self.has("cavity.Q") && !sets(&["kappa/gammaStar", "Q"]) {
            return Err(diag(
                "sweep",
                "no axis sets kappa and no cavity linewidth is configured",
            )
            .into());
        }
        spec.validate().map_err(|e| diag("sweep", e.to_string()))?;
        Ok(spec)
    }
}

/// Spectrum loading can fail on the file itself (I/O) or on its content.
#[derive(Debug)]
pub enum SpectrumSource {
    Config(ConfigError),
    Io(String),
}

impl From<ConfigError> for SpectrumSource {
    fn from(e: ConfigError) -> Self {
        SpectrumSource::Config(e)
    }
}
