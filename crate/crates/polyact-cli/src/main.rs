//! Command-line front end over the polynomial-process toolkit.
//!
//! Verbs: `classify`, `moment`, `simulate`, `validate`, `demo-spectral`.
//! Reports are single JSON documents on stdout (fixed key order, floats with
//! 17 significant digits); progress notes go to stderr. Exit codes: 0 on
//! pass, 1 when any validation report fails, 2 on input or schema errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use polyact::action::{act, eigen_act, ActionMethod};
use polyact::graded::{ComplexPolyVec, PolyVec, ScalarField, StatePoint};
use polyact::jsonout::Json;
use polyact::model::{load_model_path, LoadedModel};
use polyact::sim::{
    covariation_test, martingale_residual_test, moment_mc_test, simulate, StreamingEnsemble,
};
use polyact::Error;

#[derive(Parser)]
#[command(name = "polyact", version, about = "polynomial-process toolkit")]
struct Cli {
    /// Cap the number of worker threads (reports do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DumpFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TestKind {
    All,
    Moment,
    Martingale,
    Covariation,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the grading of a generator, classify it and print the
    /// eigenvalue ladder and affine drift data.
    Classify {
        #[arg(long)]
        model: PathBuf,
        /// Relative tolerance of the scalar-multiple-of-identity test.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Evaluate the conditional moment E[p(X_h) | X_0 = x].
    Moment {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated coefficients in basis order.
        #[arg(long)]
        p: String,
        #[arg(long)]
        h: f64,
        /// Comma-separated state coordinates.
        #[arg(long)]
        x: String,
    },
    /// Simulate an ensemble and print a summary (or dump paths as CSV).
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "T")]
        t_max: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DumpFormat::Json)]
        format: DumpFormat,
    },
    /// Run the Monte-Carlo validators against the model's generator.
    Validate {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated coefficients in basis order.
        #[arg(long)]
        p: String,
        /// Second polynomial for the covariation test (defaults to p).
        #[arg(long)]
        q: Option<String>,
        #[arg(long = "T", default_value_t = 1.0)]
        t_max: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = TestKind::All)]
        test: TestKind,
        /// Horizon of the moment test (defaults to T).
        #[arg(long)]
        h: Option<f64>,
        /// Martingale window start.
        #[arg(long, default_value_t = 0.25)]
        s: f64,
        /// Martingale window end.
        #[arg(long, default_value_t = 0.75)]
        t2: f64,
    },
    /// Truncated spectral rotation demo: divergent drift norm, convergent
    /// integral norm, Monte-Carlo moment checks.
    DemoSpectral {
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long = "N-list", default_value = "100,1000,10000")]
        n_list: String,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long)]
        seed: u64,
    },
}

fn parse_coeffs(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad coefficient '{t}': {e}")))
        })
        .collect()
}

fn parse_usizes(s: &str) -> Result<Vec<usize>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidInput(format!("bad integer '{t}': {e}")))
        })
        .collect()
}

fn poly_from_arg(model: &LoadedModel, arg: &str) -> Result<PolyVec, Error> {
    let coeffs = parse_coeffs(arg)?;
    PolyVec::new(model.basis.clone(), coeffs)
}

fn run_classify(model_path: &Path, tol: f64) -> Result<i32, Error> {
    let m = load_model_path(model_path)?;
    let g = m
        .generator
        .as_ref()
        .ok_or_else(|| Error::Schema("model has no generator".into()))?;
    let report = g.grading_report();
    let cls = g.classify(tol);
    let drift = if m.basis.max_degree() >= 1 && !matches!(m.basis.field(), ScalarField::Complex) {
        match polyact::product::drift_parts(g) {
            Ok(d) => {
                let rows: Vec<Json> = (0..d.a.rows())
                    .map(|i| Json::floats(&(0..d.a.cols()).map(|j| d.a.at(i, j)).collect::<Vec<_>>()))
                    .collect();
                Json::obj(vec![
                    ("labels", Json::Arr(d.labels.iter().map(|l| Json::Str(l.clone())).collect())),
                    ("b", Json::floats(&d.b)),
                    ("a", Json::Arr(rows)),
                ])
            }
            Err(_) => Json::Null,
        }
    } else {
        Json::Null
    };
    let witnesses: Vec<Json> = cls
        .witnesses
        .iter()
        .map(|w| {
            Json::obj(vec![
                ("degree", Json::Int(w.degree as i64)),
                ("block_dim", Json::Int(w.block_dim as i64)),
                ("lambda_hat", Json::Float(w.lambda_hat)),
                ("residual", Json::Float(w.residual)),
                ("scalar_multiple", Json::Bool(w.scalar_multiple)),
            ])
        })
        .collect();
    let out = Json::obj(vec![
        ("model", Json::Str(m.name.clone())),
        (
            "grading",
            Json::obj(vec![
                ("pass", Json::Bool(report.pass)),
                ("constant_column_norm", Json::Float(report.constant_column_norm)),
                ("violation_count", Json::Int(report.violations.len() as i64)),
            ]),
        ),
        ("kind", Json::Str(cls.kind.as_str().to_string())),
        (
            "lambda",
            cls.lambda.map(|l| Json::floats(&l)).unwrap_or(Json::Null),
        ),
        ("blocks", Json::Arr(witnesses)),
        ("drift", drift),
    ]);
    println!("{}", out.render());
    Ok(0)
}

fn run_moment(model_path: &Path, p_arg: &str, h: f64, x_arg: &str) -> Result<i32, Error> {
    let m = load_model_path(model_path)?;
    let x = StatePoint::new(parse_coeffs(x_arg)?)?;
    if m.basis.field() == ScalarField::Complex {
        let psi = m
            .psi
            .as_ref()
            .ok_or_else(|| Error::Schema("complex model has no Levy exponent".into()))?;
        let coeffs = parse_coeffs(p_arg)?;
        let p = ComplexPolyVec::from_real(&PolyVec::new(m.basis.clone(), coeffs)?);
        let r = eigen_act(psi, &p, h)?;
        let v = r.evaluate(&x)?;
        let out = Json::obj(vec![
            ("model", Json::Str(m.name.clone())),
            ("h", Json::Float(h)),
            ("value_re", Json::Float(v.re)),
            ("value_im", Json::Float(v.im)),
            ("method", Json::Str(ActionMethod::EigenDiagonal.as_str().to_string())),
        ]);
        println!("{}", out.render());
        return Ok(0);
    }
    let g = m
        .generator
        .as_ref()
        .ok_or_else(|| Error::Schema("model has no generator".into()))?;
    let p = poly_from_arg(&m, p_arg)?;
    let r = act(g, &p, h)?;
    let value = r.result.evaluate(&x)?;
    let out = Json::obj(vec![
        ("model", Json::Str(m.name.clone())),
        ("h", Json::Float(h)),
        ("value", Json::Float(value)),
        ("method", Json::Str(r.method.as_str().to_string())),
        ("terms_used", Json::Int(r.terms_used as i64)),
        ("error_estimate", Json::Float(r.error_estimate)),
    ]);
    println!("{}", out.render());
    Ok(0)
}

fn run_simulate(
    model_path: &Path,
    t_max: f64,
    dt: f64,
    paths: usize,
    seed: u64,
    format: DumpFormat,
) -> Result<i32, Error> {
    let m = load_model_path(model_path)?;
    let process = m.process.clone().ok_or(Error::NoSde)?;
    eprintln!("simulating {paths} paths of '{}' to T = {t_max} (dt = {dt})", m.name);
    let ens = simulate(process, t_max, dt, paths, seed)?;
    match format {
        DumpFormat::Csv => {
            let times = ens.times();
            let mut header = String::from("time");
            for i in 0..paths {
                header.push_str(&format!(",path_{i}"));
            }
            println!("{header}");
            for (k, t) in times.iter().enumerate() {
                let mut row = format!("{t:.17e}");
                for i in 0..paths {
                    row.push_str(&format!(",{:.17e}", ens.path(i)[k]));
                }
                println!("{row}");
            }
        }
        DumpFormat::Json => {
            let n_steps = (t_max / dt).round() as usize;
            let finals: Vec<f64> = (0..paths).map(|i| ens.path(i)[n_steps]).collect();
            let (mean, sd) = polyact::report::mean_sd(&finals);
            let out = Json::obj(vec![
                ("model", Json::Str(m.name.clone())),
                ("T", Json::Float(t_max)),
                ("dt", Json::Float(dt)),
                ("paths", Json::Int(paths as i64)),
                ("seed", Json::Int(seed as i64)),
                (
                    "clipped_fraction",
                    Json::Float(ens.total_clipped() as f64 / (paths as f64 * n_steps as f64)),
                ),
                ("terminal_mean", Json::Float(mean)),
                ("terminal_sd", Json::Float(sd)),
            ]);
            println!("{}", out.render());
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn run_validate(
    model_path: &Path,
    p_arg: &str,
    q_arg: Option<&str>,
    t_max: f64,
    dt: f64,
    paths: usize,
    seed: u64,
    test: TestKind,
    h: Option<f64>,
    s: f64,
    t2: f64,
) -> Result<i32, Error> {
    let m = load_model_path(model_path)?;
    let process = m.process.clone().ok_or(Error::NoSde)?;
    let g = m
        .generator
        .as_ref()
        .ok_or_else(|| Error::Schema("model has no generator".into()))?;
    let p = poly_from_arg(&m, p_arg)?;
    let q = match q_arg {
        Some(a) => poly_from_arg(&m, a)?,
        None => p.clone(),
    };
    let src = StreamingEnsemble::new(process, t_max, dt, paths, seed)?;
    let mut reports = Vec::new();
    if matches!(test, TestKind::All | TestKind::Moment) {
        eprintln!("running moment validator on '{}'", m.name);
        reports.push(moment_mc_test(&src, g, &p, h.unwrap_or(t_max))?);
    }
    if matches!(test, TestKind::All | TestKind::Martingale) {
        eprintln!("running martingale validator on '{}'", m.name);
        reports.push(martingale_residual_test(&src, g, &p, s, t2)?);
    }
    if matches!(test, TestKind::All | TestKind::Covariation) {
        eprintln!("running covariation validator on '{}'", m.name);
        reports.push(covariation_test(&src, g, &m.table, &p, &q)?);
    }
    let pass = reports.iter().all(|r| r.pass);
    let out = Json::obj(vec![
        ("model", Json::Str(m.name.clone())),
        ("seed", Json::Int(seed as i64)),
        ("reports", Json::Arr(reports.iter().map(|r| r.to_json()).collect())),
        ("pass", Json::Bool(pass)),
    ]);
    println!("{}", out.render());
    Ok(if pass { 0 } else { 1 })
}

fn run_demo_spectral(t: f64, n_list_arg: &str, paths: usize, seed: u64) -> Result<i32, Error> {
    let n_list = parse_usizes(n_list_arg)?;
    eprintln!("spectral demo at t = {t}, truncations {n_list:?}, {paths} paths");
    let (out, pass) = polyact::spectral::demo_report(t, &n_list, paths, seed)?;
    println!("{}", out.render());
    Ok(if pass { 0 } else { 1 })
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match &cli.cmd {
        Cmd::Classify { model, tol } => run_classify(model, *tol),
        Cmd::Moment { model, p, h, x } => run_moment(model, p, *h, x),
        Cmd::Simulate { model, t_max, dt, paths, seed, format } => {
            run_simulate(model, *t_max, *dt, *paths, *seed, *format)
        }
        Cmd::Validate { model, p, q, t_max, dt, paths, seed, test, h, s, t2 } => run_validate(
            model,
            p,
            q.as_deref(),
            *t_max,
            *dt,
            *paths,
            *seed,
            *test,
            *h,
            *s,
            *t2,
        ),
        Cmd::DemoSpectral { t, n_list, paths, seed } => {
            run_demo_spectral(*t, n_list, *paths, *seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        // Reports are deterministic regardless of worker count; this only
        // caps resource usage.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
