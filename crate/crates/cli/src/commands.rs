use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use rayon::prelude::*;

use stickypair::duality::{
    covariance_scaling, density_field_variance_laplace, DensityFieldMode, MomentProfile, ScalingQuery, TestFunction,
};
use stickypair::model::{ModelParams, PresetKind, ProcessPreset};
use stickypair::numerics::{geometric_cutoff, laplace_invert, laplace_invert_complex, LaplaceInversionSpec, QuadratureSpec};
use stickypair::oracle::{numeric_g_table, TimeQuadrature, TruncatedGenerator};
use stickypair::simulator::{
    occupation_at_zero, occupation_laplace, simulate_field, simulate_pair, simulate_sticky_bm, stream_rng, InitialLaw,
    LatticeField, PairState, StickyEmbedding,
};
use stickypair::transforms::{
    g_kernel, g_kernel_assembled, local_time_laplace, local_time_laplace_complex, pi_leftright, psi_sticky,
    scaled_discrete_transform, sticky_p0, ContinuumQuery, ScalingRegime, TransformQuery,
};

use crate::output::{Cell, Table};
use crate::{Command, GlobalOpts, Outcome};

#[derive(Debug, Args)]
pub struct ModelOpts {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

impl ModelOpts {
    fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.alpha, self.p, self.theta)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Route {
    /// Closed-form image formula
    Closed,
    /// Assembly from hitting-time pieces
    Assembled,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub w: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub wp: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    pub kappa: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambda: Vec<f64>,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long, value_enum, default_value = "closed")]
    pub route: Route,
    /// Leftmost/rightmost transform from (x, y) to (x′, y′) instead of G
    #[arg(long, value_delimiter = ',', num_args = 1, value_names = ["X,Y,XP,YP"], allow_negative_numbers = true)]
    pub leftright: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InversionMethod {
    /// Gaver–Stehfest
    Gs,
    /// Fourier series with Euler summation
    Fourier,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub w: Vec<u64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub t: Vec<f64>,
    #[arg(long, value_enum, default_value = "gs")]
    pub method: InversionMethod,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// One trajectory of the (sum, distance) chain
    Pair(PairArgs),
    /// Monte Carlo occupation of the meeting state
    Occupation(OccupationArgs),
    /// The particle system on a ring
    Field(FieldArgs),
    /// Lattice-embedded sticky Brownian motion
    Sticky(StickyPathArgs),
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long, default_value_t = 0)]
    pub u: i64,
    #[arg(long, default_value_t = 1)]
    pub w: u64,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long)]
    pub t_end: f64,
}

#[derive(Debug, Args)]
pub struct OccupationArgs {
    #[arg(long, default_value_t = 0)]
    pub w: u64,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    /// Estimate P(w(t) = 0) at these times
    #[arg(long, value_delimiter = ',', conflicts_with = "lambdas", required_unless_present = "lambdas")]
    pub times: Option<Vec<f64>>,
    /// Estimate ∫e^{−λt}P(w(t) = 0)dt at these λ
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Stationary,
    Poisson,
    Deterministic,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    #[arg(long, default_value = "sip:1")]
    pub preset: PresetKind,
    /// Overrides the canonical rate of the preset
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub sites: usize,
    #[arg(long, value_enum, default_value = "stationary")]
    pub init: InitKind,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Particles per site for deterministic initial data
    #[arg(long, default_value_t = 1)]
    pub n: u32,
    #[arg(long)]
    pub t_end: f64,
    /// Snapshot times (default: t_end)
    #[arg(long, value_delimiter = ',')]
    pub record: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct StickyPathArgs {
    #[arg(long, default_value_t = 0.0)]
    pub z: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.02)]
    pub eps: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct StickyArgs {
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub z: Vec<f64>,
    /// Stickiness; 0 is reflected, inf is absorbed
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub m: f64,
    /// Laplace transform of the time spent at 0 instead of the full transform
    #[arg(long, conflicts_with = "eps")]
    pub p0: bool,
    /// Also evaluate the rescaled lattice transform at these ε
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_delimiter = ',', default_value = "-0.5,0,1,2", allow_negative_numbers = true)]
    pub theta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7")]
    pub p: Vec<f64>,
    /// Largest w and w′ compared
    #[arg(long, default_value_t = 4)]
    pub w_max: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.3,1.1", allow_negative_numbers = true)]
    pub kappas: Vec<f64>,
    /// Distance truncation of the oracle box
    #[arg(long, default_value_t = 60)]
    pub box_w: u64,
    /// Sum-coordinate truncation of the oracle box
    #[arg(long, default_value_t = 240)]
    pub box_u: i64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub mass_tol: f64,
}

#[derive(Debug, Args)]
pub struct CovarianceArgs {
    #[arg(long, value_delimiter = ',', default_value = "1.5,2,3")]
    pub a: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.02,0.01")]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.0)]
    pub chi: f64,
    /// Macroscopic distance |x − y|; 0 gives the variance
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldMode {
    Sticky,
    /// Labelled comparison with the independent-walker substitution
    Independent,
}

#[derive(Debug, Args)]
pub struct DensityFieldArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.02,0.01")]
    pub eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.0)]
    pub chi: f64,
    /// Centre of the Gaussian test function
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub center: f64,
    /// Width of the Gaussian test function
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    #[arg(long, value_enum, default_value = "sticky")]
    pub mode: FieldMode,
}

fn quad_spec(g: &GlobalOpts) -> Result<QuadratureSpec> {
    let spec = QuadratureSpec { grid_points: g.quad_points, ..QuadratureSpec::default() };
    spec.validate()?;
    Ok(spec)
}

fn base_table(columns: &[&'static str], name: &str, g: &GlobalOpts) -> Table {
    let spec = QuadratureSpec { grid_points: g.quad_points, ..QuadratureSpec::default() };
    let mut t = Table::new(columns);
    t.meta("command", name)
        .meta("version", env!("CARGO_PKG_VERSION"))
        .meta("seed", g.seed)
        .meta("quad_points", spec.grid_points)
        .meta("quad_abs_tol", spec.abs_tol)
        .meta("quad_rel_tol", spec.rel_tol)
        .meta("gs_terms", g.gs_terms);
    t
}

fn model_meta(t: &mut Table, p: &ModelParams) {
    t.meta("alpha", p.alpha).meta("p", p.p).meta("theta", p.theta);
}

pub fn dispatch(cmd: &Command, g: &GlobalOpts) -> Result<(Table, Outcome)> {
    let table = match cmd {
        Command::Transform(a) => transform(a, g)?,
        Command::Invert(a) => invert(a, g)?,
        Command::Simulate(s) => match s {
            SimulateCommand::Pair(a) => simulate_pair_cmd(a, g)?,
            SimulateCommand::Occupation(a) => occupation(a, g)?,
            SimulateCommand::Field(a) => field(a, g)?,
            SimulateCommand::Sticky(a) => sticky_path(a, g)?,
        },
        Command::Sticky(a) => sticky(a, g)?,
        Command::Validate(a) => return validate(a, g),
        Command::Covariance(a) => covariance(a, g)?,
        Command::Densityfield(a) => densityfield(a, g)?,
    };
    Ok((table, Outcome::Ok))
}

fn transform(a: &TransformArgs, g: &GlobalOpts) -> Result<Table> {
    let params = a.model.params()?;
    if let Some(v) = &a.leftright {
        ensure!(v.len() == 4, "--leftright needs four integers X,Y,XP,YP");
        let spec = quad_spec(g)?;
        let mut t = base_table(&["x", "y", "xp", "yp", "lambda", "theta", "p", "alpha", "value"], "transform", g);
        model_meta(&mut t, &params);
        let rows: Vec<Result<Vec<Cell>>> = a
            .lambda
            .par_iter()
            .map(|&l| {
                let value = pi_leftright(v[0], v[1], v[2], v[3], l, &params, &spec)?;
                Ok(vec![
                    v[0].into(),
                    v[1].into(),
                    v[2].into(),
                    v[3].into(),
                    l.into(),
                    params.theta.into(),
                    params.p.into(),
                    params.alpha.into(),
                    value.into(),
                ])
            })
            .collect();
        for r in rows {
            t.push(r?);
        }
        return Ok(t);
    }
    let mut t = base_table(&["w", "wp", "kappa", "lambda", "theta", "p", "alpha", "re", "im"], "transform", g);
    model_meta(&mut t, &params);
    t.meta("route", format!("{:?}", a.route).to_lowercase());
    for &w in &a.w {
        for &wp in &a.wp {
            for &k in &a.kappa {
                for &l in &a.lambda {
                    let q = TransformQuery::new(w, wp, k, l, params.theta).with_model(&params);
                    let v = match a.route {
                        Route::Closed => g_kernel(&q)?,
                        Route::Assembled => g_kernel_assembled(&q)?,
                    };
                    t.push(vec![
                        w.into(),
                        wp.into(),
                        k.into(),
                        l.into(),
                        params.theta.into(),
                        params.p.into(),
                        params.alpha.into(),
                        v.re.into(),
                        v.im.into(),
                    ]);
                }
            }
        }
    }
    Ok(t)
}

fn inversion_spec(method: InversionMethod, g: &GlobalOpts) -> LaplaceInversionSpec {
    match method {
        InversionMethod::Gs => LaplaceInversionSpec::gaver_stehfest(g.gs_terms),
        InversionMethod::Fourier => LaplaceInversionSpec::fourier_series(),
    }
}

/// P_w(w(t) = 0) for the α = 1 distance chain.
fn meeting_probability(w: u64, theta: f64, t: f64, spec: &LaplaceInversionSpec) -> Result<(f64, f64)> {
    let inv = match spec.method {
        stickypair::numerics::LaplaceMethod::GaverStehfest => {
            laplace_invert(|s| local_time_laplace(w, theta, s).unwrap_or(f64::NAN), t, spec)?
        }
        stickypair::numerics::LaplaceMethod::FourierSeries => {
            laplace_invert_complex(|s| local_time_laplace_complex(w, theta, s), t, spec)?
        }
    };
    Ok((inv.value, inv.diagnostic))
}

fn invert(a: &InvertArgs, g: &GlobalOpts) -> Result<Table> {
    ModelParams::symmetric(a.theta)?;
    let spec = inversion_spec(a.method, g);
    let mut t = base_table(&["w", "theta", "t", "value", "diagnostic"], "invert", g);
    t.meta("method", format!("{:?}", a.method).to_lowercase());
    for &w in &a.w {
        for &time in &a.t {
            let (v, d) = meeting_probability(w, a.theta, time, &spec)?;
            t.push(vec![w.into(), a.theta.into(), time.into(), v.into(), d.into()]);
        }
    }
    Ok(t)
}

fn simulate_pair_cmd(a: &PairArgs, g: &GlobalOpts) -> Result<Table> {
    let params = a.model.params()?;
    let tr = simulate_pair(&params, PairState { u: a.u, w: a.w }, a.t_end, g.seed)?;
    let mut t = base_table(&["time", "u", "w"], "simulate pair", g);
    model_meta(&mut t, &params);
    t.meta("t_end", a.t_end);
    for (time, s) in tr.times.iter().zip(&tr.states) {
        t.push(vec![(*time).into(), s.u.into(), s.w.into()]);
    }
    Ok(t)
}

fn occupation(a: &OccupationArgs, g: &GlobalOpts) -> Result<Table> {
    let params = a.model.params()?;
    let alpha = params.alpha;
    let mut t;
    if let Some(times) = &a.times {
        let est = occupation_at_zero(&params, a.w, times, a.paths, g.seed)?;
        let spec = LaplaceInversionSpec::gaver_stehfest(g.gs_terms);
        t = base_table(&["t", "estimate", "se", "exact"], "simulate occupation", g);
        for (&time, e) in times.iter().zip(est) {
            // the α-chain at time t is the α = 1 chain at time αt
            let exact = if time == 0.0 {
                if a.w == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                meeting_probability(a.w, params.theta, alpha * time, &spec)?.0
            };
            t.push(vec![time.into(), e.mean.into(), e.se.into(), exact.into()]);
        }
    } else {
        let lambdas = a.lambdas.as_ref().context("either --times or --lambdas is required")?;
        let est = occupation_laplace(&params, a.w, lambdas, a.paths, g.seed)?;
        t = base_table(&["lambda", "estimate", "se", "exact"], "simulate occupation", g);
        for (&l, e) in lambdas.iter().zip(est) {
            let exact = local_time_laplace(a.w, params.theta, l / alpha)? / alpha;
            t.push(vec![l.into(), e.mean.into(), e.se.into(), exact.into()]);
        }
    }
    model_meta(&mut t, &params);
    t.meta("w", a.w).meta("paths", a.paths);
    Ok(t)
}

fn field(a: &FieldArgs, g: &GlobalOpts) -> Result<Table> {
    let preset = ProcessPreset::new(a.preset, a.alpha)?;
    let law = match a.init {
        InitKind::Stationary => InitialLaw::Stationary { rho: a.rho },
        InitKind::Poisson => InitialLaw::Poisson { rho: a.rho },
        InitKind::Deterministic => InitialLaw::Deterministic { n: a.n },
    };
    // the initial configuration uses its own stream so that it does not
    // depend on the dynamics
    let mut rng = stream_rng(g.seed, u64::MAX);
    let lattice = LatticeField::product(preset, a.sites, |_| law, &mut rng)?;
    let record = a.record.clone().unwrap_or_else(|| vec![a.t_end]);
    let run = simulate_field(&lattice, a.t_end, g.seed, &record)?;
    let mut t = base_table(&["time", "site", "eta"], "simulate field", g);
    t.meta("preset", a.preset.to_string())
        .meta("alpha", preset.alpha)
        .meta("theta", preset.theta)
        .meta("sites", a.sites)
        .meta("init", format!("{:?}", a.init).to_lowercase())
        .meta("events", run.events as u64);
    for (time, snap) in &run.snapshots {
        for (x, &n) in snap.iter().enumerate() {
            t.push(vec![(*time).into(), (x as i64).into(), (n as i64).into()]);
        }
    }
    Ok(t)
}

fn sticky_path(a: &StickyPathArgs, g: &GlobalOpts) -> Result<Table> {
    let emb = StickyEmbedding::new(a.z, a.gamma, a.eps)?;
    let path = simulate_sticky_bm(&emb, &a.grid, g.seed)?;
    let mut t = base_table(&["t", "W"], "simulate sticky", g);
    t.meta("z", a.z).meta("gamma", a.gamma).meta("eps", a.eps).meta("theta_eps", emb.theta()).meta("w0", emb.w0());
    for (time, w) in path.times.iter().zip(&path.values) {
        t.push(vec![(*time).into(), (*w).into()]);
    }
    Ok(t)
}

fn regime_for(gamma: f64) -> ScalingRegime {
    if gamma == 0.0 {
        ScalingRegime::Reflected { theta: 0.0 }
    } else if gamma.is_infinite() {
        ScalingRegime::Absorbed
    } else {
        ScalingRegime::Sticky { gamma }
    }
}

fn sticky(a: &StickyArgs, g: &GlobalOpts) -> Result<Table> {
    if a.p0 {
        let mut t = base_table(&["z", "lambda", "gamma", "p0"], "sticky", g);
        for &z in &a.z {
            for &l in &a.lambda {
                t.push(vec![z.into(), l.into(), a.gamma.into(), sticky_p0(z, l, a.gamma)?.into()]);
            }
        }
        return Ok(t);
    }
    let Some(eps) = &a.eps else {
        let mut t = base_table(&["z", "kappa", "m", "lambda", "gamma", "re", "im"], "sticky", g);
        for &z in &a.z {
            for &l in &a.lambda {
                let v = psi_sticky(&ContinuumQuery::new(z, a.kappa, a.m, l, a.gamma))?;
                t.push(vec![z.into(), a.kappa.into(), a.m.into(), l.into(), a.gamma.into(), v.re.into(), v.im.into()]);
            }
        }
        return Ok(t);
    };
    let mut t = base_table(
        &["z", "kappa", "m", "lambda", "gamma", "eps", "discrete_re", "discrete_im", "limit_re", "limit_im", "abs_err"],
        "sticky",
        g,
    );
    let regime = regime_for(a.gamma);
    for &z in &a.z {
        for &l in &a.lambda {
            let limit = psi_sticky(&ContinuumQuery::new(z, a.kappa, a.m, l, a.gamma))?;
            let rows: Vec<Result<Vec<Cell>>> = eps
                .par_iter()
                .map(|&e| {
                    let d = scaled_discrete_transform(e, a.kappa, a.m, l, z, regime)?.value;
                    Ok(vec![
                        z.into(),
                        a.kappa.into(),
                        a.m.into(),
                        l.into(),
                        a.gamma.into(),
                        e.into(),
                        d.re.into(),
                        d.im.into(),
                        limit.re.into(),
                        limit.im.into(),
                        (d - limit).norm().into(),
                    ])
                })
                .collect();
            for r in rows {
                t.push(r?);
            }
        }
    }
    Ok(t)
}

struct ValidationRow {
    theta: f64,
    p: f64,
    max_err: f64,
    mass_err: f64,
    leak: f64,
}

/// Σ_{w′} G(w, w′, 0, λ) with the geometric tail cut where it drops below 1e-15.
fn kernel_mass(w: u64, lambda: f64, params: &ModelParams) -> Result<f64> {
    let q = TransformQuery::new(w, 0, 0.0, lambda, params.theta).with_model(params);
    let zeta = stickypair::transforms::ingredients(&q)?.zeta.norm();
    let n = geometric_cutoff(zeta, 1e-15).context("geometric tail does not decay")?;
    let mut total = 0.0;
    for wp in 0..=(w + n as u64) {
        total += g_kernel(&TransformQuery { wp, ..q })?.re;
    }
    Ok(total)
}

fn validate(a: &ValidateArgs, g: &GlobalOpts) -> Result<(Table, Outcome)> {
    let combos: Vec<(f64, f64)> = a.theta.iter().flat_map(|&th| a.p.iter().map(move |&p| (th, p))).collect();
    let tq = TimeQuadrature::default();
    let rows: Vec<Result<ValidationRow>> = combos
        .par_iter()
        .map(|&(theta, p)| {
            let params = ModelParams::new(1.0, p, theta)?;
            let gen = TruncatedGenerator::new(params, a.box_w, a.box_u)?;
            let mut max_err = 0.0f64;
            let mut mass_err = 0.0f64;
            let mut leak = 0.0f64;
            for w in 0..=a.w_max {
                let table = numeric_g_table(&gen, w, &a.lambdas, &a.kappas, &tq)?;
                leak = leak.max(table.leak.iter().cloned().fold(0.0, f64::max));
                for (li, &l) in a.lambdas.iter().enumerate() {
                    for (ki, &k) in a.kappas.iter().enumerate() {
                        for wp in 0..=a.w_max {
                            let exact = g_kernel(&TransformQuery::new(w, wp, k, l, theta).with_p(p))?;
                            max_err = max_err.max((exact - table.get(wp, li, ki)).norm());
                        }
                    }
                    mass_err = mass_err.max((kernel_mass(w, l, &params)? - 1.0 / l).abs());
                }
            }
            Ok(ValidationRow { theta, p, max_err, mass_err, leak })
        })
        .collect();
    let mut t = base_table(&["theta", "p", "max_abs_err", "max_mass_err", "leak", "passed"], "validate", g);
    t.meta("tol", a.tol)
        .meta("mass_tol", a.mass_tol)
        .meta("box_w", a.box_w)
        .meta("box_u", a.box_u)
        .meta("w_max", a.w_max)
        .meta("time_tail_tol", tq.tail_tol);
    let mut all = true;
    for r in rows {
        let r = r?;
        let ok = r.max_err <= a.tol && r.mass_err <= a.mass_tol;
        all &= ok;
        t.push(vec![r.theta.into(), r.p.into(), r.max_err.into(), r.mass_err.into(), r.leak.into(), ok.into()]);
    }
    Ok((t, if all { Outcome::Ok } else { Outcome::ValidationFailed }))
}

fn covariance(a: &CovarianceArgs, g: &GlobalOpts) -> Result<Table> {
    let queries: Vec<ScalingQuery> = a
        .a
        .iter()
        .flat_map(|&aa| {
            a.eps.iter().map(move |&eps| ScalingQuery {
                a: aa,
                lambda: a.lambda,
                gamma: a.gamma,
                rho: a.rho,
                chi: a.chi,
                eps,
                separation: a.separation,
            })
        })
        .collect();
    let results: Vec<_> = queries.par_iter().map(covariance_scaling).collect();
    let mut t = base_table(
        &["a", "eps", "lambda", "gamma", "asymptotic", "finite_eps", "ratio", "separation", "regime", "chi_sensitivity"],
        "covariance",
        g,
    );
    t.meta("rho", a.rho).meta("chi", a.chi);
    for (q, r) in queries.iter().zip(results) {
        let r = r?;
        t.push(vec![
            q.a.into(),
            q.eps.into(),
            q.lambda.into(),
            q.gamma.into(),
            r.asymptotic.into(),
            r.finite_eps.into(),
            r.ratio.into(),
            q.separation.into(),
            r.regime.label().into(),
            r.chi_sensitivity.into(),
        ]);
    }
    Ok(t)
}

fn densityfield(a: &DensityFieldArgs, g: &GlobalOpts) -> Result<Table> {
    let spec = QuadratureSpec::default();
    let phi = TestFunction::gaussian(a.center, a.width)?;
    let profile = MomentProfile::homogeneous(a.rho, a.chi)?;
    let mode = match a.mode {
        FieldMode::Sticky => DensityFieldMode::Sticky,
        FieldMode::Independent => DensityFieldMode::IndependentComparison,
    };
    let grid: Vec<(f64, f64)> = a.lambda.iter().flat_map(|&l| a.eps.iter().map(move |&e| (e, l))).collect();
    let results: Vec<_> = grid
        .par_iter()
        .map(|&(eps, l)| density_field_variance_laplace(&phi, l, a.gamma, &profile, eps, mode, &spec))
        .collect();
    let mut t = base_table(&["eps", "lambda", "gamma", "discrete", "limit", "ratio"], "densityfield", g);
    t.meta("rho", a.rho)
        .meta("chi", a.chi)
        .meta("phi", format!("gaussian(center={}, width={})", a.center, a.width))
        .meta("mode", format!("{:?}", a.mode).to_lowercase());
    for (&(eps, l), r) in grid.iter().zip(results) {
        let r = r?;
        if r.limit == 0.0 && r.discrete == 0.0 {
            bail!("test function vanishes; the ratio is undefined");
        }
        t.push(vec![eps.into(), l.into(), a.gamma.into(), r.discrete.into(), r.limit.into(), r.ratio().into()]);
    }
    Ok(t)
}
