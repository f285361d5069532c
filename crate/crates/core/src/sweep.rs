//! Two-axis parameter grids, Iβ maximisation over (R, κ), and the Q_max
//! scan against quench detuning.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec;
use crate::fom::{self, FomResult, Method};
use crate::params::{CavityParams, EmitterParams, QuenchModel};
use crate::psb::PsbSpectrum;
use crate::scenario::{self, PsbReport, Scenario, ScenarioReport};
use crate::units::Rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    /// R/γ*.
    TransferRate,
    /// κ/γ*.
    Linewidth,
    /// Q = ω₀/κ.
    QualityFactor,
    /// Δ_q/γ*.
    QuenchDetuning,
    /// R/γ_r.
    Purcell,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::TransferRate => "R/gammaStar",
            Quantity::Linewidth => "kappa/gammaStar",
            Quantity::QualityFactor => "Q",
            Quantity::QuenchDetuning => "DeltaQ/gammaStar",
            Quantity::Purcell => "R/gammaR",
        }
    }

    /// Which cavity/quench coordinate the quantity sets.
    fn slot(self) -> &'static str {
        match self {
            Quantity::TransferRate | Quantity::Purcell => "R",
            Quantity::Linewidth | Quantity::QualityFactor => "kappa",
            Quantity::QuenchDetuning => "DeltaQ",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Quantity::TransferRate,
            Quantity::Linewidth,
            Quantity::QualityFactor,
            Quantity::QuenchDetuning,
            Quantity::Purcell,
        ]
        .into_iter()
        .find(|q| q.name() == s)
        .ok_or_else(|| {
            Error::InvalidSweep(format!(
                "unknown axis quantity '{s}' (expected R/gammaStar, kappa/gammaStar, Q, DeltaQ/gammaStar or R/gammaR)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub quantity: Quantity,
    pub scale: Scale,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn log(quantity: Quantity, min: f64, max: f64, points: usize) -> Self {
        Self {
            quantity,
            scale: Scale::Log,
            min,
            max,
            points,
        }
    }

    pub fn linear(quantity: Quantity, min: f64, max: f64, points: usize) -> Self {
        Self {
            quantity,
            scale: Scale::Linear,
            min,
            max,
            points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSweep(format!("axis {}: {m}", self.quantity)));
        if !(self.min.is_finite() && self.max.is_finite()) || !(self.min < self.max) {
            return bad(format!(
                "need finite min < max, got [{}, {}]",
                self.min, self.max
            ));
        }
        if self.points < 2 {
            return bad(format!("need at least 2 points, got {}", self.points));
        }
        if self.scale == Scale::Log && !(self.min > 0.0) {
            return bad(format!("log axis needs min > 0, got {}", self.min));
        }
        if self.quantity == Quantity::QualityFactor && !(self.min > 0.0) {
            return bad("Q must be positive".into());
        }
        Ok(())
    }

    /// Grid values, ascending, endpoints exact.
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i == 0 {
                    return self.min;
                }
                if i == n - 1 {
                    return self.max;
                }
                let t = i as f64 / last;
                match self.scale {
                    Scale::Linear => self.min + t * (self.max - self.min),
                    Scale::Log => (self.min.ln() + t * (self.max.ln() - self.min.ln())).exp(),
                }
            })
            .collect()
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = match self.scale {
            Scale::Linear => "lin",
            Scale::Log => "log",
        };
        write!(
            f,
            "{}:{scale}:{}:{}:{}",
            self.quantity, self.min, self.max, self.points
        )
    }
}

/// `quantity:lin|log:min:max:points`.
impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [q, scale, min, max, points] = parts[..] else {
            return Err(Error::InvalidSweep(format!(
                "axis '{s}' must look like quantity:lin|log:min:max:points"
            )));
        };
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| Error::InvalidSweep(format!("axis '{s}': bad number '{v}': {e}")))
        };
        let axis = Axis {
            quantity: q.parse()?,
            scale: match scale {
                "lin" | "linear" => Scale::Linear,
                "log" => Scale::Log,
                other => {
                    return Err(Error::InvalidSweep(format!(
                        "axis '{s}': unknown scale '{other}'"
                    )))
                }
            },
            min: num(min)?,
            max: num(max)?,
            points: points.parse().map_err(|e| {
                Error::InvalidSweep(format!("axis '{s}': bad point count '{points}': {e}"))
            })?,
        };
        axis.validate()?;
        Ok(axis)
    }
}

/// Operating point with overrides applied per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepContext {
    /// Emitter, quench model, η_r, spectrum and method; its cavity supplies
    /// R and κ for coordinates no axis sets.
    pub base: Scenario,
    /// When set, γ_r + γ_nr is replaced by this multiple of γ* (all radiative).
    pub bare_decay_ratio: Option<f64>,
}

impl SweepContext {
    pub fn new(base: Scenario) -> Self {
        Self {
            base,
            bare_decay_ratio: None,
        }
    }

    pub fn with_bare_decay_ratio(mut self, ratio: f64) -> Self {
        self.bare_decay_ratio = Some(ratio);
        self
    }

    fn emitter(&self) -> EmitterParams {
        let e = self.base.emitter;
        match self.bare_decay_ratio {
            Some(k) => EmitterParams {
                gamma_r: e.gamma_star * k,
                gamma_nr: Rate::ZERO,
                ..e
            },
            None => e,
        }
    }

    /// Scenario at the given axis values, R held fixed when κ moves.
    fn point(&self, coords: &[(Quantity, f64)]) -> Scenario {
        let emitter = self.emitter();
        let gs = emitter.gamma_star;
        let mut r = self.base.cavity.transfer_rate();
        let mut kappa = self.base.cavity.kappa;
        let mut quench = self.base.quench.clone();
        for &(q, v) in coords {
            match q {
                Quantity::TransferRate => r = gs * v,
                Quantity::Purcell => r = emitter.gamma_r * v,
                Quantity::Linewidth => kappa = gs * v,
                Quantity::QualityFactor => kappa = CavityParams::kappa_from_q(emitter.omega0, v),
                Quantity::QuenchDetuning => quench = Some(QuenchModel::EffectiveDetuning(gs * v)),
            }
        }
        Scenario {
            emitter,
            cavity: CavityParams::from_transfer_rate(r, kappa, self.base.cavity.eta_r),
            quench,
            spectrum: self.base.spectrum.clone(),
            method: self.base.method,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub x: Axis,
    pub y: Axis,
    pub context: SweepContext,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.x.validate()?;
        self.y.validate()?;
        if self.x.quantity.slot() == self.y.quantity.slot() {
            return Err(Error::InvalidSweep(format!(
                "axes {} and {} both set {}",
                self.x.quantity,
                self.y.quantity,
                self.x.quantity.slot()
            )));
        }
        if let Some(k) = self.context.bare_decay_ratio {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidSweep(format!(
                    "bareDecayRatio must be >= 0, got {k}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointValues {
    pub fom: FomResult,
    pub psb: Option<PsbReport>,
    /// (γ*/(κ+γ))², the order of the terms the perturbative forms drop.
    pub err_order2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub ix: usize,
    pub iy: usize,
    pub x: f64,
    pub y: f64,
    pub r: Rate,
    pub kappa: Rate,
    pub g: Rate,
    /// Evaluation failures are kept in-grid as messages.
    pub outcome: std::result::Result<PointValues, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Row-major: x varies slowest.
    pub points: Vec<SweepPoint>,
}

/// F(Q) for every distinct Q the grid touches, keyed by bit pattern.
fn filter_table(
    spectrum: &PsbSpectrum,
    qs: &[f64],
) -> HashMap<u64, std::result::Result<f64, String>> {
    let mut distinct: Vec<f64> = qs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| a.to_bits() == b.to_bits());
    let fs = exec::map_ordered(&distinct, |&q| {
        spectrum.filter_fraction(q).map_err(|e| e.to_string())
    });
    distinct.iter().map(|q| q.to_bits()).zip(fs).collect()
}

fn evaluate_point(
    s: &Scenario,
    f_table: &HashMap<u64, std::result::Result<f64, String>>,
) -> std::result::Result<PointValues, String> {
    let fom = fom::evaluate(&s.emitter, &s.cavity, s.quench.as_ref(), s.method)
        .map_err(|e| e.to_string())?;
    let psb = match &s.spectrum {
        Some(sp) => {
            let q = s.cavity.quality_factor(s.emitter.omega0);
            let f = f_table
                .get(&q.to_bits())
                .cloned()
                .unwrap_or_else(|| sp.filter_fraction(q).map_err(|e| e.to_string()))?;
            Some(
                scenario::correct(&fom, &s.emitter, &s.cavity, sp, f, q)
                    .map_err(|e| e.to_string())?,
            )
        }
        None => None,
    };
    let gamma = s.emitter.total_decay(fom.quench_rate).value();
    let ratio = s.emitter.gamma_star.value() / (s.cavity.kappa.value() + gamma);
    Ok(PointValues {
        fom,
        psb,
        err_order2: ratio * ratio,
    })
}

fn grid_scenarios(spec: &SweepSpec) -> Vec<(usize, usize, f64, f64, Scenario)> {
    let xs = spec.x.values();
    let ys = spec.y.values();
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for (ix, &x) in xs.iter().enumerate() {
        for (iy, &y) in ys.iter().enumerate() {
            let s = spec
                .context
                .point(&[(spec.x.quantity, x), (spec.y.quantity, y)]);
            out.push((ix, iy, x, y, s));
        }
    }
    out
}

/// Evaluates every grid point. Points are independent and run through
/// [`exec::map_ordered`]; the output order is the grid order regardless.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    run_sweep_with(spec, |items, f| exec::map_ordered(items, f))
}

/// As [`run_sweep`] but always single-threaded.
pub fn run_sweep_sequential(spec: &SweepSpec) -> Result<SweepResult> {
    run_sweep_with(spec, |items, f| exec::map_sequential(items, f))
}

type Cell = (usize, usize, f64, f64, Scenario);

fn run_sweep_with<M>(spec: &SweepSpec, map: M) -> Result<SweepResult>
where
    M: Fn(&[Cell], &(dyn Fn(&Cell) -> SweepPoint + Sync + Send)) -> Vec<SweepPoint>,
{
    spec.validate()?;
    let cells = grid_scenarios(spec);
    let f_table = match &spec.context.base.spectrum {
        Some(sp) => {
            let qs: Vec<f64> = cells
                .iter()
                .map(|c| c.4.cavity.quality_factor(c.4.emitter.omega0))
                .collect();
            filter_table(sp, &qs)
        }
        None => HashMap::new(),
    };
    let eval = |c: &Cell| {
        let (ix, iy, x, y, s) = c;
        SweepPoint {
            ix: *ix,
            iy: *iy,
            x: *x,
            y: *y,
            r: s.cavity.transfer_rate(),
            kappa: s.cavity.kappa,
            g: s.cavity.g,
            outcome: evaluate_point(s, &f_table),
        }
    };
    let points = map(&cells, &eval);
    Ok(SweepResult {
        spec: spec.clone(),
        points,
    })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl SweepResult {
    pub fn max_product(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .filter_map(|p| p.outcome.as_ref().ok().map(|v| (p, product_of(v))))
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, _)| p)
    }

    /// `#` provenance lines (input echo plus `extra`), a header row, then one
    /// row per grid point. Numbers carry 17 significant digits.
    pub fn to_csv(&self, extra_provenance: &[String]) -> String {
        let spec = &self.spec;
        let base = &spec.context.base;
        let e = spec.context.emitter();
        let mut s = String::new();
        let _ = writeln!(s, "# spsfom {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# method={}", base.method.name());
        let _ = writeln!(s, "# x={}", spec.x);
        let _ = writeln!(s, "# y={}", spec.y);
        let _ = writeln!(
            s,
            "# emitter gammaR={} gammaNR={} gammaStar={} omega0={} (1/ps)",
            num(e.gamma_r.value()),
            num(e.gamma_nr.value()),
            num(e.gamma_star.value()),
            num(e.omega0.value())
        );
        let _ = writeln!(
            s,
            "# base R={} kappa={} etaR={}",
            num(base.cavity.transfer_rate().value()),
            num(base.cavity.kappa.value()),
            num(base.cavity.eta_r)
        );
        let quench = match &base.quench {
            None => "none".to_string(),
            Some(QuenchModel::EffectiveDetuning(d)) => format!("DeltaQ={}", num(d.value())),
            Some(QuenchModel::Modes(m)) => format!(
                "modes(k:Delta)={}",
                m.iter()
                    .map(|m| format!("{}:{}", num(m.k), num(m.detuning.value())))
                    .collect::<Vec<_>>()
                    .join(";")
            ),
        };
        let _ = writeln!(s, "# quench {quench}");
        if let Some(k) = spec.context.bare_decay_ratio {
            let _ = writeln!(s, "# bareDecayRatio={}", num(k));
        }
        if let Some(sp) = &base.spectrum {
            let _ = writeln!(
                s,
                "# psb lambda0_nm={} delta_nm={} terms={}",
                sp.lambda0(),
                sp.delta(),
                sp.coeffs().len()
            );
        }
        for line in extra_provenance {
            let _ = writeln!(s, "# {line}");
        }
        let psb = base.spectrum.is_some();
        s.push_str("ix,iy,x,y,R,kappa,g,gamma_q,beta,I,Ibeta");
        if psb {
            s.push_str(",F,beta_psb,I_psb,Ibeta_psb,psb_weak_coupling_ok,psb_dephasing_ok");
        }
        s.push_str(",critical,strong_coupling,bad_cavity,quench_dominated,perturbative_ok,simplified_ok,quench_markovian_ok,err_order2,status\n");
        for p in &self.points {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{}",
                p.ix,
                p.iy,
                num(p.x),
                num(p.y),
                num(p.r.value()),
                num(p.kappa.value()),
                num(p.g.value())
            );
            match &p.outcome {
                Ok(v) => {
                    let f = &v.fom;
                    let _ = write!(
                        s,
                        ",{},{},{},{}",
                        num(f.quench_rate.value()),
                        num(f.beta),
                        num(f.indist),
                        num(f.product)
                    );
                    if let Some(c) = &v.psb {
                        let _ = write!(
                            s,
                            ",{},{},{},{},{},{}",
                            num(c.f),
                            num(c.corrected.beta),
                            num(c.corrected.indist),
                            num(c.corrected.product()),
                            flag(c.validity.weak_coupling_ok),
                            flag(c.validity.dephasing_model_ok)
                        );
                    }
                    let _ = writeln!(
                        s,
                        ",{},{},{},{},{},{},{},{},ok",
                        flag(f.regime.critical),
                        flag(f.regime.strong_coupling),
                        flag(f.regime.bad_cavity),
                        flag(f.regime.quench_dominated),
                        flag(f.validity.perturbative),
                        flag(f.validity.simplified),
                        flag(f.validity.quench_markovian),
                        num(v.err_order2)
                    );
                }
                Err(msg) => {
                    let blanks = if psb { 14 } else { 8 };
                    for _ in 0..4 + blanks {
                        s.push_str(",NaN");
                    }
                    let _ = writeln!(s, ",error: {}", msg.replace([',', '\n'], ";"));
                }
            }
        }
        s
    }
}

fn product_of(v: &PointValues) -> f64 {
    v.psb.map_or(v.fom.product, |c| c.corrected.product())
}

fn report_product(r: &ScenarioReport) -> f64 {
    r.product()
}

/// Search box over absolute rates (ps⁻¹).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub r: (f64, f64),
    pub kappa: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximizeOptions {
    /// Points per axis of every stage's log grid (odd keeps the incumbent on-grid).
    pub grid_points: usize,
    pub shrink: f64,
    /// Stop once max(hi/lo) − 1 over both axes falls below this.
    pub rel_box_size: f64,
    pub max_stages: usize,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self {
            grid_points: 41,
            shrink: 4.0,
            rel_box_size: 1e-3,
            max_stages: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub r: Rate,
    pub kappa: Rate,
    pub g: Rate,
    pub value: f64,
    pub report: ScenarioReport,
    /// Incumbent value after each stage; nondecreasing.
    pub stages: Vec<f64>,
    pub converged: bool,
    /// The maximiser touches the search-box edge; the true optimum may lie outside.
    pub on_boundary: bool,
}

impl Maximum {
    pub fn gamma_q(&self) -> Rate {
        self.report.fom.quench_rate
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    Axis::log(Quantity::TransferRate, lo, hi, n).values()
}

/// Maximises Iβ (sideband-corrected when the base carries a spectrum) over
/// (R, κ): a coarse log grid, then grids over boxes shrunk around the
/// incumbent until the box is relatively small.
pub fn maximize_ibeta(
    context: &SweepContext,
    bx: SearchBox,
    opts: MaximizeOptions,
) -> Result<Maximum> {
    let ok = |(a, b): (f64, f64)| a > 0.0 && b > a && b.is_finite();
    if !ok(bx.r) || !ok(bx.kappa) {
        return Err(Error::InvalidSweep(format!(
            "search box needs 0 < lo < hi on both axes, got {bx:?}"
        )));
    }
    if opts.grid_points < 3 || !(opts.shrink > 1.0) {
        return Err(Error::InvalidSweep(
            "maximizer needs grid_points >= 3 and shrink > 1".into(),
        ));
    }
    let at = |r: f64, k: f64| {
        let mut s = context.point(&[]);
        s.cavity =
            CavityParams::from_transfer_rate(Rate::per_ps(r), Rate::per_ps(k), s.cavity.eta_r);
        s
    };
    let objective = |&(r, k): &(f64, f64)| {
        let rep = at(r, k).evaluate().ok();
        let v = rep.as_ref().map_or(f64::NEG_INFINITY, report_product);
        (if v.is_finite() { v } else { f64::NEG_INFINITY }, rep)
    };

    let (mut r_lo, mut r_hi) = bx.r;
    let (mut k_lo, mut k_hi) = bx.kappa;
    let mut best: Option<(f64, f64, f64, ScenarioReport)> = None;
    let mut stages = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_stages {
        let pts: Vec<(f64, f64)> = log_grid(r_lo, r_hi, opts.grid_points)
            .into_iter()
            .flat_map(|r| {
                log_grid(k_lo, k_hi, opts.grid_points)
                    .into_iter()
                    .map(move |k| (r, k))
            })
            .collect();
        let vals = exec::map_ordered(&pts, objective);
        for (&(r, k), (v, rep)) in pts.iter().zip(vals) {
            if let Some(rep) = rep {
                if best.as_ref().map_or(v > f64::NEG_INFINITY, |b| v > b.2) {
                    best = Some((r, k, v, rep));
                }
            }
        }
        let Some((r, k, v, _)) = best.as_ref() else {
            return Err(Error::InvalidSweep(
                "objective could not be evaluated anywhere in the search box".into(),
            ));
        };
        stages.push(*v);
        if r_hi / r_lo - 1.0 < opts.rel_box_size && k_hi / k_lo - 1.0 < opts.rel_box_size {
            converged = true;
            break;
        }
        let shrink = |lo: f64, hi: f64, c: f64, (blo, bhi): (f64, f64)| {
            let half = (hi / lo).ln() / opts.shrink / 2.0;
            let (mut nlo, mut nhi) = (c * (-half).exp(), c * half.exp());
            if nlo < blo {
                nhi *= blo / nlo;
                nlo = blo;
            }
            if nhi > bhi {
                nlo *= bhi / nhi;
                nhi = bhi;
            }
            (nlo.max(blo), nhi.min(bhi))
        };
        (r_lo, r_hi) = shrink(r_lo, r_hi, *r, bx.r);
        (k_lo, k_hi) = shrink(k_lo, k_hi, *k, bx.kappa);
    }
    let (r, k, value, report) = best.expect("checked above");
    let edge =
        |x: f64, (lo, hi): (f64, f64)| (x / lo - 1.0).abs() < 1e-9 || (x / hi - 1.0).abs() < 1e-9;
    Ok(Maximum {
        r: Rate::per_ps(r),
        kappa: Rate::per_ps(k),
        g: Rate::per_ps((r * k).sqrt() / 2.0),
        value,
        report,
        stages,
        converged,
        on_boundary: edge(r, bx.r) || edge(k, bx.kappa),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QmaxPoint {
    /// Δ_q(1−η_r)^(−1/2), the detuning scaled by cavity loss.
    pub loss_scaled_detuning: Rate,
    pub q_max: f64,
    pub ibeta: f64,
    pub indist: f64,
    pub beta: f64,
    pub on_boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QmaxScan {
    pub points: Vec<QmaxPoint>,
    /// Iβ at Q_max never decreases as the detuning grows.
    pub ibeta_nondecreasing: bool,
}

/// For each loss-scaled detuning, the Q maximising (sideband-corrected) Iβ
/// at fixed R = purcell·γ_r, searched over `q_range` by successive log-grid
/// refinement.
pub fn q_max_scan(
    base: &Scenario,
    purcell: f64,
    detunings: &[Rate],
    q_range: (f64, f64),
) -> Result<QmaxScan> {
    let (q_lo, q_hi) = q_range;
    if !(q_lo > 0.0 && q_hi > q_lo && q_hi.is_finite()) {
        return Err(Error::InvalidSweep(format!(
            "Q range needs 0 < lo < hi, got {q_range:?}"
        )));
    }
    if !(purcell > 0.0) {
        return Err(Error::InvalidSweep(format!(
            "R/gammaR must be positive, got {purcell}"
        )));
    }
    let eta = base.cavity.eta_r;
    let r = base.emitter.gamma_r * purcell;
    let scan_one = |d: &Rate| -> Result<QmaxPoint> {
        let quench = QuenchModel::EffectiveDetuning(*d * (1.0 - eta).sqrt());
        let eval = |q: f64| -> Result<ScenarioReport> {
            let kappa = CavityParams::kappa_from_q(base.emitter.omega0, q);
            Scenario {
                cavity: CavityParams::from_transfer_rate(r, kappa, eta),
                quench: Some(quench.clone()),
                ..base.clone()
            }
            .evaluate()
        };
        let (mut lo, mut hi) = (q_lo, q_hi);
        let mut best: Option<(f64, ScenarioReport)> = None;
        while hi / lo - 1.0 > 1e-6 {
            for q in log_grid(lo, hi, 21) {
                let rep = eval(q)?;
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| rep.product() > b.product())
                {
                    best = Some((q, rep));
                }
            }
            let c = best.as_ref().expect("grid evaluated").0;
            let half = (hi / lo).ln() / 8.0;
            lo = (c * (-half).exp()).max(q_lo);
            hi = (c * half.exp()).min(q_hi);
        }
        let (q, rep) = best.expect("grid evaluated");
        Ok(QmaxPoint {
            loss_scaled_detuning: *d,
            q_max: q,
            ibeta: rep.product(),
            indist: rep.indist(),
            beta: rep.beta(),
            on_boundary: (q / q_lo - 1.0).abs() < 1e-9 || (q / q_hi - 1.0).abs() < 1e-9,
        })
    };
    let points = exec::map_ordered(detunings, scan_one)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ibeta_nondecreasing = detunings.windows(2).all(|w| w[0].value() <= w[1].value())
        && points.windows(2).all(|w| w[1].ibeta >= w[0].ibeta);
    Ok(QmaxScan {
        points,
        ibeta_nondecreasing,
    })
}

/// Reference context in units of γ* = 1 ps⁻¹: one higher-order
/// mode with coupling ratio `k` at detuning `delta`, η_r, bare decay
/// `bare_ratio`·γ*.
pub fn single_mode_context(
    k: f64,
    delta_over_gs: f64,
    eta_r: f64,
    bare_ratio: f64,
) -> SweepContext {
    let gs = Rate::per_ps(1.0);
    let emitter = EmitterParams::new(gs * bare_ratio, Rate::ZERO, gs, Rate::from_thz(405.0));
    SweepContext::new(Scenario {
        emitter,
        cavity: CavityParams::from_transfer_rate(gs, gs, eta_r),
        quench: Some(QuenchModel::single_mode(k, gs * delta_over_gs)),
        spectrum: None,
        method: Method::FullPerturbative,
    })
    .with_bare_decay_ratio(bare_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psb::{builtin_spectrum, Sample};
    use crate::scenario::siv_hybrid;

    #[test]
    fn axis_values() {
        let a = Axis::log(Quantity::TransferRate, 0.1, 1000.0, 5);
        let v = a.values();
        assert_eq!(v.len(), 5);
        assert_eq!((v[0], v[4]), (0.1, 1000.0));
        assert!((v[2] - 10.0).abs() < 1e-12);
        let l = Axis::linear(Quantity::QualityFactor, 10.0, 20.0, 3).values();
        assert_eq!(l, [10.0, 15.0, 20.0]);
    }

    #[test]
    fn axis_validation() {
        assert!(Axis::log(Quantity::TransferRate, 0.0, 1.0, 3)
            .validate()
            .is_err());
        assert!(Axis::linear(Quantity::TransferRate, 2.0, 1.0, 3)
            .validate()
            .is_err());
        assert!(Axis::linear(Quantity::TransferRate, 1.0, 2.0, 1)
            .validate()
            .is_err());
        assert!(Axis::linear(Quantity::QualityFactor, 0.0, 2.0, 3)
            .validate()
            .is_err());
    }

    #[test]
    fn axis_parse_round_trip() {
        let a: Axis = "kappa/gammaStar:log:0.1:1000:200".parse().unwrap();
        assert_eq!(a, Axis::log(Quantity::Linewidth, 0.1, 1000.0, 200));
        assert_eq!(a.to_string().parse::<Axis>().unwrap(), a);
        assert!("R:log:1:2:3".parse::<Axis>().is_err());
        assert!("Q:cubic:1:2:3".parse::<Axis>().is_err());
        assert!("Q:log:1:2".parse::<Axis>().is_err());
    }

    #[test]
    fn conflicting_axes_rejected() {
        let spec = SweepSpec {
            x: Axis::log(Quantity::Linewidth, 1.0, 10.0, 2),
            y: Axis::log(Quantity::QualityFactor, 1.0, 10.0, 2),
            context: SweepContext::new(siv_hybrid()),
        };
        assert!(matches!(run_sweep(&spec), Err(Error::InvalidSweep(_))));
    }

    #[test]
    fn two_by_two_grid_order() {
        let spec = SweepSpec {
            x: Axis::log(Quantity::TransferRate, 1.0, 10.0, 2),
            y: Axis::log(Quantity::Linewidth, 2.0, 20.0, 2),
            context: single_mode_context(0.5, 30.0, 0.5, 1e-4),
        };
        let res = run_sweep(&spec).unwrap();
        let idx: Vec<(usize, usize)> = res.points.iter().map(|p| (p.ix, p.iy)).collect();
        assert_eq!(idx, [(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert!(res
            .points
            .windows(2)
            .all(|w| (w[0].x, w[0].y) < (w[1].x, w[1].y)));
        let csv = res.to_csv(&[]);
        let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 5);
        assert!(data[0].starts_with("ix,iy,x,y"));
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let mut ctx = SweepContext::new(siv_hybrid());
        ctx.base.method = Method::FullPerturbative;
        let spec = SweepSpec {
            x: Axis::log(Quantity::Purcell, 1e4, 1e6, 7),
            y: Axis::log(Quantity::QualityFactor, 10.0, 1000.0, 6),
            context: ctx,
        };
        let a = run_sweep(&spec).unwrap().to_csv(&[]);
        let b = run_sweep_sequential(&spec).unwrap().to_csv(&[]);
        assert_eq!(a, b);
        assert_eq!(a, run_sweep(&spec).unwrap().to_csv(&[]));
    }

    #[test]
    fn failures_stay_in_grid() {
        // R = 0 with no bare decay leaves the emitter population frozen: the
        // oracle's A2 is singular at that corner.
        let mut ctx = single_mode_context(0.5, 30.0, 0.5, 0.0);
        ctx.base.method = Method::NumericOracle;
        let spec = SweepSpec {
            x: Axis::linear(Quantity::TransferRate, 0.0, 1.0, 2),
            y: Axis::log(Quantity::Linewidth, 1.0, 2.0, 2),
            context: ctx,
        };
        let res = run_sweep(&spec).unwrap();
        assert!(res.points[0].outcome.is_err());
        assert!(res.points[3].outcome.is_ok());
        let csv = res.to_csv(&[]);
        let header_cols = csv
            .lines()
            .find(|l| l.starts_with("ix"))
            .unwrap()
            .split(',')
            .count();
        for row in csv.lines().filter(|l| !l.starts_with('#')) {
            assert_eq!(row.split(',').count(), header_cols, "{row}");
        }
        assert!(csv.contains("error: "));
    }

    #[test]
    fn critical_flags_are_exact() {
        let spec = SweepSpec {
            x: Axis::log(Quantity::TransferRate, 0.1, 10.0, 9),
            y: Axis::log(Quantity::Linewidth, 0.1, 10.0, 9),
            context: single_mode_context(0.5, 30.0, 0.5, 1e-4),
        };
        for p in run_sweep(&spec).unwrap().points {
            let v = p.outcome.unwrap();
            let gs = 1.0;
            assert_eq!(
                v.fom.regime.critical,
                p.r.value() > gs && p.kappa.value() > gs
            );
        }
    }

    #[test]
    fn psb_sweep_uses_filter_fraction() {
        let spec = SweepSpec {
            x: Axis::log(Quantity::Purcell, 2.7e5, 2.8e5, 2),
            y: Axis::linear(Quantity::QualityFactor, 60.0, 61.0, 2),
            context: SweepContext::new(siv_hybrid()),
        };
        let res = run_sweep(&spec).unwrap();
        let v = res.points[0].outcome.as_ref().unwrap();
        let f = builtin_spectrum(Sample::Sample5)
            .filter_fraction(60.0)
            .unwrap();
        assert_eq!(v.psb.unwrap().f, f);
        let direct = siv_hybrid().evaluate().unwrap();
        assert!((v.psb.unwrap().corrected.product() - direct.product()).abs() < 1e-9);
    }

    #[test]
    fn unquenched_maximum_hits_box() {
        let mut ctx = single_mode_context(0.5, 30.0, 0.5, 1e-4);
        ctx.base.quench = None;
        let m = maximize_ibeta(
            &ctx,
            SearchBox {
                r: (1.0, 100.0),
                kappa: (1.0, 100.0),
            },
            MaximizeOptions::default(),
        )
        .unwrap();
        assert!(m.on_boundary);
        assert!(m.stages.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn refinement_is_monotone_and_converges() {
        let ctx = single_mode_context(0.5, 30.0, 0.5, 1e-4);
        let m = maximize_ibeta(
            &ctx,
            SearchBox {
                r: (1.0, 1000.0),
                kappa: (1.0, 1000.0),
            },
            MaximizeOptions::default(),
        )
        .unwrap();
        assert!(m.converged && !m.on_boundary);
        assert!(m.stages.windows(2).all(|w| w[1] >= w[0]));
        assert!((m.value - 0.92).abs() < 0.01);
    }

    #[test]
    fn single_detuning_scan() {
        let s = q_max_scan(&siv_hybrid(), 2.7e5, &[Rate::from_thz(30.0)], (5.0, 2000.0)).unwrap();
        assert_eq!(s.points.len(), 1);
        assert!(s.ibeta_nondecreasing);
        assert!(!s.points[0].on_boundary);
    }

    #[test]
    fn bad_ranges_rejected() {
        let c = single_mode_context(0.5, 30.0, 0.5, 1e-4);
        assert!(maximize_ibeta(
            &c,
            SearchBox {
                r: (0.0, 1.0),
                kappa: (1.0, 2.0)
            },
            MaximizeOptions::default()
        )
        .is_err());
        assert!(q_max_scan(&siv_hybrid(), 2.7e5, &[], (10.0, 1.0)).is_err());
    }
}
