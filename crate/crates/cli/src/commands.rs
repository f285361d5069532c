use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spsfom::fom::{self, DecayRates};
use spsfom::oracle::{self, BlochMatrices, IndistMethod};
use spsfom::psb::WINDOW;
use spsfom::sweep::{self, MaximizeOptions, SearchBox};
use spsfom::{exec, Method, Rate};

use crate::config::{Config, ConfigError, SpectrumSource};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments: exit 2.
    Config(ConfigError),
    /// Unreadable input or unwritable output: exit 3.
    Io(String),
    /// Validation found a violation: exit 1.
    Validation(String),
    /// A computation failed at a requested point: exit 1.
    Compute(spsfom::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Config(ConfigError(vec![crate::config::Diagnostic {
            line: None,
            key: None,
            message: msg.into(),
        }]))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Compute(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Compute(e) => write!(f, "computation failed: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<SpectrumSource> for CliError {
    fn from(e: SpectrumSource) -> Self {
        match e {
            SpectrumSource::Config(c) => CliError::Config(c),
            SpectrumSource::Io(m) => CliError::Io(m),
        }
    }
}

impl From<spsfom::Error> for CliError {
    fn from(e: spsfom::Error) -> Self {
        CliError::Compute(e)
    }
}

pub struct Context {
    config: Option<Config>,
    base_dir: PathBuf,
    out: Option<PathBuf>,
    seed: u64,
    method: Option<Method>,
}

impl Context {
    pub fn load(
        path: Option<&Path>,
        out: Option<PathBuf>,
        seed: u64,
        method: Option<Method>,
    ) -> Result<Self, CliError> {
        let config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Some(Config::parse(&text)?)
            }
            None => None,
        };
        let base_dir = path
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Self {
            config,
            base_dir,
            out,
            seed,
            method,
        })
    }

    fn config(&self) -> Result<&Config, CliError> {
        self.config
            .as_ref()
            .ok_or_else(|| CliError::usage("this command needs --config <path>"))
    }

    fn provenance(&self) -> Vec<String> {
        let hash = self.config.as_ref().map_or("none", |c| c.hash.as_str());
        vec![
            format!("config_sha256={hash}"),
            format!("seed={}", self.seed),
        ]
    }

    fn write_out(&self, text: &str) -> Result<(), CliError> {
        if let Some(p) = &self.out {
            std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        }
        Ok(())
    }

    /// Prints a report and copies it to `--out` when given.
    fn emit(&self, report: &str) -> Result<(), CliError> {
        print!("{report}");
        self.write_out(report)
    }
}

struct Report(String);

impl Report {
    fn new(command: &str, ctx: &Context) -> Self {
        let mut r = Report(format!(
            "# spsfom {} {command}\n",
            env!("CARGO_PKG_VERSION")
        ));
        for line in ctx.provenance() {
            let _ = writeln!(r.0, "# {line}");
        }
        r
    }

    fn kv(&mut self, key: &str, value: impl fmt::Display) {
        let _ = writeln!(self.0, "{key} = {value}");
    }

    fn num(&mut self, key: &str, value: f64) {
        self.kv(key, format_args!("{value:.8}"));
    }
}

pub fn fom(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let scenario = cfg.scenario(&ctx.base_dir, ctx.method)?;
    let report = scenario.evaluate()?;
    let f = &report.fom;
    let eta = report.eta_r;
    let mut r = Report::new("fom", ctx);
    r.kv("method", f.method.name());
    r.kv(
        "gamma_q_per_ps",
        format_args!("{:.8e}", f.quench_rate.value()),
    );
    r.num("etaR", eta);
    r.num("beta0", f.beta);
    r.num("I0", f.indist);
    r.num("I0_beta0", f.product);
    r.num("I0_beta0_etaR", f.product * eta);
    if let Some(p) = &report.psb {
        r.num("DW", p.dw);
        r.num("Q", p.q);
        r.num("F", p.f);
    }
    r.num("beta", report.beta());
    r.num("I", report.indist());
    r.num("Ibeta", report.product());
    r.num("Ibeta_etaR", report.product_eta());
    r.kv("regime", f.regime);
    let v = f.validity;
    r.kv("valid.perturbative", v.perturbative);
    r.kv("valid.simplified", v.simplified);
    r.kv("valid.quench_markovian", v.quench_markovian);
    r.kv("valid.unit_range", v.in_unit_range);
    if let Some(p) = &report.psb {
        r.kv("psb.weak_coupling_ok", p.validity.weak_coupling_ok);
        r.num("psb.coupling_ratio", p.validity.coupling_ratio);
        r.kv("psb.dephasing_model_ok", p.validity.dephasing_model_ok);
        r.num("psb.dephasing_ratio", p.validity.dephasing_ratio);
    }
    ctx.emit(&r.0)
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let spec = cfg.sweep_spec(&ctx.base_dir, ctx.method)?;
    let result = sweep::run_sweep(&spec)?;
    let csv = result.to_csv(&ctx.provenance());
    match &ctx.out {
        Some(p) => {
            ctx.write_out(&csv)?;
            let failed = result.points.iter().filter(|p| p.outcome.is_err()).count();
            println!("rows = {}", result.points.len());
            println!("failed_points = {failed}");
            if let Some(best) = result.max_product() {
                println!(
                    "max_Ibeta_at = {} {}, {} {}",
                    spec.x.quantity, best.x, spec.y.quantity, best.y
                );
            }
            println!("written = {}", p.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn optimize(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    if cfg.has("qmax.DeltaEff_THz") {
        return qmax(ctx, cfg);
    }
    let sctx = cfg.sweep_context(&ctx.base_dir, ctx.method)?;
    let gs = sctx.base.emitter.gamma_star.value();
    if !(gs > 0.0) {
        return Err(bad_key(
            "emitter.gammaStar_GHz",
            "optimize works in units of gammaStar, which must be positive".into(),
        ));
    }
    let r_range = cfg.range("optimize.R")?.unwrap_or((0.1, 1000.0));
    let k_range = cfg.range("optimize.kappa")?.unwrap_or((0.1, 1000.0));
    let mut opts = MaximizeOptions::default();
    if let Some(n) = cfg.number("optimize.points")? {
        if !(n >= 3.0 && n.fract() == 0.0) {
            return Err(bad_key("optimize.points", "must be an integer >= 3".into()));
        }
        opts.grid_points = n as usize;
    }
    let bx = SearchBox {
        r: (r_range.0 * gs, r_range.1 * gs),
        kappa: (k_range.0 * gs, k_range.1 * gs),
    };
    let m = sweep::maximize_ibeta(&sctx, bx, opts)?;
    let mut r = Report::new("optimize", ctx);
    r.num("max_Ibeta", m.value);
    r.num("R_over_gammaStar", m.r.value() / gs);
    r.num("kappa_over_gammaStar", m.kappa.value() / gs);
    r.num("g_over_gammaStar", m.g.value() / gs);
    r.num("R_over_kappa", m.r / m.kappa);
    r.num("gamma_q_over_gammaStar", m.gamma_q().value() / gs);
    r.kv("stages", m.stages.len());
    r.kv("converged", m.converged);
    r.kv("on_boundary", m.on_boundary);
    if let Some(q) = &sctx.base.quench {
        let dq = q.effective_detuning();
        match fom::optimal_cavity(sctx.base.emitter.gamma_star, dq, sctx.base.cavity.eta_r) {
            Ok(c) => {
                r.num("closed_form.DeltaQ_over_gammaStar", dq.value() / gs);
                r.num("closed_form.kappa_over_gammaStar", c.kappa.value() / gs);
                r.num("closed_form.g_over_gammaStar", c.g.value() / gs);
                r.num("closed_form.gamma_q_over_gammaStar", c.gamma_q.value() / gs);
                r.num("closed_form.kappa_rel_dev", m.kappa / c.kappa - 1.0);
                r.num("closed_form.g_rel_dev", m.g / c.g - 1.0);
                r.kv("closed_form.outside_small_ratio", c.outside_small_ratio);
            }
            Err(e) => r.kv("closed_form", format_args!("unavailable ({e})")),
        }
    }
    ctx.emit(&r.0)
}

fn qmax(ctx: &Context, cfg: &Config) -> Result<(), CliError> {
    let key = "qmax.DeltaEff_THz";
    let raw = cfg.get(key).unwrap_or_default();
    let axis: Result<sweep::Axis, _> = format!("Q:log:{raw}").parse();
    let deltas: Vec<Rate> = match (raw.split(':').count(), axis) {
        (1, _) => match raw.trim().parse::<f64>() {
            Ok(v) if v > 0.0 => vec![Rate::from_thz(v)],
            _ => return Err(bad_key(key, format!("'{raw}' is not a positive detuning"))),
        },
        (3, Ok(a)) => a.values().into_iter().map(Rate::from_thz).collect(),
        _ => {
            return Err(bad_key(
                key,
                format!("'{raw}' must be a value or min:max:points"),
            ))
        }
    };
    let base = cfg.scenario(&ctx.base_dir, ctx.method)?;
    let purcell = cfg
        .number("cavity.purcell")?
        .ok_or_else(|| bad_key("cavity.purcell", "required for the Q_max scan".into()))?;
    let q_range = cfg.range("qmax.Q")?.unwrap_or((1.0, 1e4));
    let scan = sweep::q_max_scan(&base, purcell, &deltas, q_range)?;
    let mut csv = String::new();
    let _ = writeln!(csv, "# spsfom {} optimize qmax", env!("CARGO_PKG_VERSION"));
    for line in ctx.provenance() {
        let _ = writeln!(csv, "# {line}");
    }
    let _ = writeln!(csv, "# ibeta_nondecreasing={}", scan.ibeta_nondecreasing);
    csv.push_str("DeltaEff_THz,DeltaEff_over_gammaStar,Q_max,Ibeta,I,beta,on_boundary\n");
    let gs = base.emitter.gamma_star.value();
    for p in &scan.points {
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            p.loss_scaled_detuning.to_thz(),
            p.loss_scaled_detuning.value() / gs,
            p.q_max,
            p.ibeta,
            p.indist,
            p.beta,
            u8::from(p.on_boundary)
        );
    }
    print!("{csv}");
    ctx.write_out(&csv)
}

fn bad_key(key: &str, message: String) -> CliError {
    CliError::Config(ConfigError(vec![crate::config::Diagnostic {
        line: None,
        key: Some(key.into()),
        message,
    }]))
}

pub fn psb(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let spectrum = cfg.spectrum(&ctx.base_dir)?.ok_or_else(|| {
        bad_key(
            "psb.sample",
            "a spectrum is required (sample3, sample5 or file:<path>)".into(),
        )
    })?;
    let q = cfg
        .number("cavity.Q")?
        .ok_or_else(|| bad_key("cavity.Q", "required for F(Q)".into()))?;
    let f = spectrum
        .filter_fraction(q)
        .map_err(|e| bad_key("cavity.Q", e.to_string()))?;
    let mut r = Report::new("psb", ctx);
    r.num("lambda0_nm", spectrum.lambda0());
    r.num("delta_nm", spectrum.delta());
    r.num("DW", spectrum.dw_factor());
    r.num("DW_numeric", spectrum.dw_numeric()?);
    r.num("Q", q);
    r.num("F", f);
    r.kv("S0", format_args!("{:.6e}", spectrum.s0()));
    r.kv("window_nm", format_args!("{}:{}", WINDOW.0, WINDOW.1));
    r.kv(
        "window_tail_fraction",
        format_args!("{:.3e}", spectrum.window_tail_fraction()),
    );
    let has_point =
        cfg.has("emitter.gammaR_ns") && (cfg.has("cavity.purcell") || cfg.has("cavity.g_GHz"));
    if has_point {
        let s = cfg.scenario(&ctx.base_dir, ctx.method)?;
        let gq = fom::quench_rate(s.quench.as_ref(), &s.cavity);
        let v = spsfom::psb::validity_check(&s.emitter, &s.cavity, gq, &spectrum);
        r.kv("weak_coupling_ok", v.weak_coupling_ok);
        r.num("coupling_ratio", v.coupling_ratio);
        r.kv("dephasing_model_ok", v.dephasing_model_ok);
        r.num("dephasing_ratio", v.dephasing_ratio);
    }
    print!("{}", r.0);
    if ctx.out.is_some() {
        let mut csv = String::new();
        for line in ctx.provenance() {
            let _ = writeln!(csv, "# {line}");
        }
        csv.push_str(
            &spectrum
                .to_csv()
                .lines()
                .map(|l| format!("# {l}\n"))
                .collect::<String>(),
        );
        let _ = writeln!(csv, "# Q={q}");
        csv.push_str("lambda_nm,zpl,psb,total,cavity,cavity_psb\n");
        let l0 = spectrum.lambda0();
        let steps = ((WINDOW.1 - WINDOW.0) / 0.05).round() as usize;
        for i in 0..=steps {
            let l = l0 + WINDOW.0 + 0.05 * i as f64;
            let (z, p) = (spectrum.zpl(l), spectrum.sideband(l));
            let c = spectrum.cavity_filter(l, q);
            let _ = writeln!(
                csv,
                "{l:.16e},{z:.16e},{p:.16e},{:.16e},{c:.16e},{:.16e}",
                z + p,
                c * p
            );
        }
        ctx.write_out(&csv)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    r: f64,
    kappa: f64,
    gamma: f64,
    gamma_star: f64,
    ratio: f64,
}

#[derive(Debug, Clone, Copy)]
struct Comparison {
    beta_rel: f64,
    indist_abs: f64,
    c_fit: f64,
}

fn compare(d: &Draw) -> Result<Comparison, spsfom::Error> {
    let rates = DecayRates::new(d.r, d.kappa, d.gamma, d.gamma_star);
    let m = BlochMatrices::from_rates(rates.g(), d.kappa, d.gamma, d.gamma_star);
    let k = Rate::per_ps(d.kappa);
    let beta_o = oracle::beta_numeric(&m, k)?;
    let i_o = oracle::indist_numeric(&m, k, IndistMethod::EigenSum)?;
    let beta_a = rates.beta()?;
    let i_a = rates.indist_first_order()?;
    let indist_abs = (i_a - i_o).abs();
    Ok(Comparison {
        beta_rel: ((beta_a - beta_o) / beta_o).abs(),
        indist_abs,
        c_fit: indist_abs / (d.ratio * d.ratio),
    })
}

const BETA_REL_BOUND: f64 = 1e-9;

pub fn validate(ctx: &Context, samples: usize) -> Result<(), CliError> {
    let empty = Config::empty();
    let cfg = ctx.config.as_ref().unwrap_or(&empty);
    let (lo, hi) = cfg.range("validate.ratio")?.unwrap_or((0.01, 0.3));
    let c_bound = cfg.number("validate.C")?.unwrap_or(5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut log_uniform = |a: f64, b: f64| (rng.random_range(a.ln()..b.ln())).exp();
    let draws: Vec<Draw> = (0..samples)
        .map(|_| {
            let ratio = log_uniform(lo, hi);
            let r = log_uniform(0.1, 10.0);
            let gamma = log_uniform(1e-4, 1.0);
            Draw {
                r,
                kappa: 1.0,
                gamma,
                gamma_star: ratio * (1.0 + gamma),
                ratio,
            }
        })
        .collect();
    let results = exec::map_ordered(&draws, compare);

    let mut r = Report::new("validate", ctx);
    r.kv("samples", samples);
    r.kv("ratio_range", format_args!("{lo}:{hi}"));
    r.kv("beta_rel_bound", format_args!("{BETA_REL_BOUND:e}"));
    r.kv("envelope_C_bound", c_bound);
    let mut worst: Option<(f64, usize)> = None;
    let (mut beta_max, mut i_max, mut c_max) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for (i, res) in results.iter().enumerate() {
        match res {
            Ok(c) => {
                beta_max = beta_max.max(c.beta_rel);
                i_max = i_max.max(c.indist_abs);
                c_max = c_max.max(c.c_fit);
                let score = (c.beta_rel / BETA_REL_BOUND).max(c.c_fit / c_bound);
                if worst.is_none_or(|(s, _)| score > s) {
                    worst = Some((score, i));
                }
            }
            Err(e) => failures.push(format!("sample {i}: {e}")),
        }
    }
    r.kv("beta_max_rel_dev", format_args!("{beta_max:.3e}"));
    r.kv("indist_max_abs_dev", format_args!("{i_max:.3e}"));
    r.num("envelope_C_fit", c_max);
    let violated = worst.is_some_and(|(s, _)| s >= 1.0) || !failures.is_empty();
    if let Some((score, i)) = worst {
        let d = &draws[i];
        r.kv(
            "worst",
            format_args!(
                "sample={i} score={score:.4} R={:.6e} kappa={:.6e} gamma={:.6e} gammaStar={:.6e} ratio={:.6e}",
                d.r, d.kappa, d.gamma, d.gamma_star, d.ratio
            ),
        );
    }
    for f in &failures {
        r.kv("error", f);
    }
    r.kv("status", if violated { "violation" } else { "ok" });
    ctx.emit(&r.0)?;
    if violated {
        return Err(CliError::Validation(format!(
            "max beta deviation {beta_max:.3e} (bound {BETA_REL_BOUND:e}), envelope C {c_max:.4} (bound {c_bound}), {} evaluation errors",
            failures.len()
        )));
    }
    Ok(())
}
