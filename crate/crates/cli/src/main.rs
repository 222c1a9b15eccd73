mod args;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{CommandFactory, FromArgMatches};
use serde::Serialize;
use serde_json::{json, Value};

use hardsphere::bounds::{bounds_report_with, lambda_star, MAX_SCAN_DIM};
use hardsphere::construction::{
    check_invariants, cluster_components, run_multilayer, verify_hard_sphere, write_sphere_dump, write_step_csv,
    ConstructionParams, Selection, INVARIANT_TOL, STEP_CSV_HEADER,
};
use hardsphere::geometry::search_cell_half_width;
use hardsphere::percolation2d::estimate_theta;
use hardsphere::verify::{geometry_suite, isolation_suite, sampler_suite, SuiteReport};
use hardsphere::{rng, Error, StarLattice};

use args::{Auto, Cli, Command, Format, PercArgs, ScanArgs, SelectionArg, SimArgs, Suite, VerifyArgs};

#[derive(Debug)]
enum Failure {
    Usage(String),
    Violation(String),
    Statistical(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Violation(_) => 3,
            Failure::Statistical(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::DimensionMismatch { .. } => Failure::Usage(e.to_string()),
            Error::Internal(_) => Failure::Violation(e.to_string()),
            Error::PointBudget { .. } => Failure::Other(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(format!("i/o error: {e}"))
    }
}

type Outcome = Result<Value, (Value, Failure)>;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    config: Value,
    seed: u64,
    seed_source: &'a str,
    rng_algorithm: &'static str,
    wall_time_seconds: f64,
    exit_code: u8,
    results: Value,
}

struct Ctx<'a> {
    seed: u64,
    out: Option<&'a Path>,
    format: Format,
}

impl Ctx<'_> {
    /// Writes `body` to `<out>/<name>`, or to stdout without an output directory.
    fn emit(&self, name: &str, body: &str) -> io::Result<()> {
        match self.out {
            Some(dir) => fs::write(dir.join(name), body),
            None => io::stdout().lock().write_all(body.as_bytes()),
        }
    }

    fn file(&self, name: &str) -> Result<BufWriter<fs::File>, Failure> {
        let dir = self.out.ok_or_else(|| Failure::Usage("simulate needs --out <DIR>".into()))?;
        Ok(BufWriter::new(fs::File::create(dir.join(name))?))
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn bounds_scan(ctx: &Ctx, a: &ScanArgs) -> Result<Value, Failure> {
    if a.d_min < 11 || a.d_min > a.d_max || a.d_max > MAX_SCAN_DIM {
        return Err(Failure::Usage(format!(
            "need 11 <= d-min <= d-max <= {MAX_SCAN_DIM}, got {}..{}",
            a.d_min, a.d_max
        )));
    }
    if !(0.0..1.0).contains(&a.threshold) {
        return Err(Failure::Usage(format!("threshold must lie in [0, 1), got {}", a.threshold)));
    }
    let rows = (a.d_min..=a.d_max).map(|d| bounds_report_with(d, a.threshold)).collect::<Result<Vec<_>, _>>()?;
    let min_dimension = rows.iter().find(|r| r.passes_threshold).map(|r| r.d);
    match min_dimension {
        Some(d) => eprintln!("min dimension for threshold {}: {d}", a.threshold),
        None => eprintln!("no dimension in {}..={} reaches threshold {}", a.d_min, a.d_max, a.threshold),
    }
    let body = match ctx.format {
        Format::Csv => {
            let mut s = String::from(hardsphere::bounds::BoundsReport::csv_header());
            s.push('\n');
            for r in &rows {
                s.push_str(&r.csv_row());
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let doc = json!({ "threshold": a.threshold, "min_dimension": min_dimension, "rows": rows });
            serde_json::to_string_pretty(&doc).expect("plain data serializes") + "\n"
        }
    };
    ctx.emit(&format!("bounds.{}", ext(ctx.format)), &body)?;
    Ok(json!({ "rows": rows.len(), "min_dimension": min_dimension }))
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

fn simulate(ctx: &Ctx, a: &SimArgs) -> Outcome {
    simulate_inner(ctx, a).map_err(|f| (Value::Null, f)).and_then(|(v, violation)| match violation {
        None => Ok(v),
        Some(msg) => Err((v, Failure::Violation(msg))),
    })
}

fn simulate_inner(ctx: &Ctx, a: &SimArgs) -> Result<(Value, Option<String>), Failure> {
    if ctx.out.is_none() {
        return Err(Failure::Usage("simulate needs --out <DIR>".into()));
    }
    if a.dim < 3 {
        return Err(Failure::Usage(format!("--dim must be at least 3, got {}", a.dim)));
    }
    if a.layers == 0 {
        return Err(Failure::Usage("--layers must be at least 1".into()));
    }
    let lambda = match a.lambda {
        Auto::Value(v) => v,
        Auto::Auto => lambda_star(a.dim)
            .ok()
            .flatten()
            .ok_or_else(|| Failure::Usage(format!("--lambda auto needs d >= 31 (A/B > 1), got d = {}", a.dim)))?,
    };
    let (c, search) = match a.cells_c {
        Auto::Value(v) => (v, None),
        Auto::Auto => {
            let s = search_cell_half_width(a.dim, a.search_samples, ctx.seed)?;
            (s.half_width, Some(s))
        }
    };
    let mut params = ConstructionParams::new(a.dim, c, lambda)?;
    params.eta = a.eta;
    params.lattice_radius = a.lattice_radius;
    params.max_steps = a.max_steps;
    params.point_budget = a.budget;
    params.selection = match a.selection {
        SelectionArg::Lazy => Selection::Lazy,
        SelectionArg::Materialize => Selection::Materialize,
    };
    params.validate()?;
    let lattice = StarLattice::build(params.lattice_radius)?;
    let layers: Vec<Vec<i64>> = (0..a.layers as i64)
        .map(|i| {
            let mut k = vec![0; a.dim - 2];
            k[0] = i;
            k
        })
        .collect();
    let (gamma, runs) = run_multilayer(&params, &lattice, ctx.seed, &layers)?;

    let mut spheres = ctx.file("spheres.txt")?;
    write_sphere_dump(&gamma, &mut spheres)?;
    spheres.flush()?;
    let mut steps = ctx.file("steps.csv")?;
    writeln!(steps, "{STEP_CSV_HEADER}")?;
    for run in &runs {
        write_step_csv(run, &mut steps)?;
    }
    steps.flush()?;

    let hs = verify_hard_sphere(&gamma.spheres, INVARIANT_TOL)?;
    let clusters = cluster_components(&gamma.spheres, INVARIANT_TOL)?;
    let invariants = runs.iter().map(|r| check_invariants(&params, &lattice, r)).collect::<Result<Vec<_>, _>>()?;
    let largest = clusters.iter().map(|c| c.size).max().unwrap_or(0);
    eprintln!(
        "{} spheres ({} constructed), {} clusters, largest {largest}, {} hard-sphere violations",
        gamma.spheres.len(),
        gamma.constructed().count(),
        clusters.len(),
        hs.violations.len()
    );
    let results = json!({
        "params": params,
        "cell_search": search,
        "layers": gamma.layers,
        "spheres": gamma.spheres.len(),
        "constructed": gamma.constructed().count(),
        "leftovers": gamma.leftovers().count(),
        "unresolved_leftovers": gamma.unresolved,
        "hard_sphere": { "pairs_checked": hs.pairs_checked, "violations": hs.violations },
        "clusters": clusters.len(),
        "largest_cluster": largest,
        "invariants": invariants,
        "files": ["spheres.txt", "steps.csv"],
    });
    let broken = invariants.iter().filter(|r| !r.ok()).count();
    let violation = (!hs.passed() || broken > 0).then(|| {
        format!("{} hard-sphere violations, {broken} layers with broken invariants", hs.violations.len())
    });
    Ok((results, violation))
}

fn perc2d(ctx: &Ctx, a: &PercArgs) -> Result<Value, Failure> {
    let est = estimate_theta(a.p, a.radius, a.trials, ctx.seed)?;
    let body = match ctx.format {
        Format::Json => serde_json::to_string_pretty(&est).expect("plain data serializes") + "\n",
        Format::Csv => format!(
            "p,radius,trials,theta_hat,std_error,seed\n{:.16e},{:.16e},{},{:.16e},{:.16e},{}\n",
            est.p, est.radius, est.trials, est.theta_hat, est.std_error, est.seed
        ),
    };
    eprintln!("theta({}) = {} +- {}", est.p, est.theta_hat, est.std_error);
    ctx.emit(&format!("theta.{}", ext(ctx.format)), &body)?;
    Ok(to_json(&est))
}

fn verify(ctx: &Ctx, a: &VerifyArgs) -> Outcome {
    let run = || -> Result<Vec<SuiteReport>, Failure> {
        let suites = match a.suite {
            Suite::All => vec![Suite::Geometry, Suite::Isolation, Suite::Sampler],
            s => vec![s],
        };
        let mut reports = Vec::new();
        for s in suites {
            reports.push(match s {
                Suite::Geometry => geometry_suite(a.budget.unwrap_or(1_000_000), ctx.seed)?,
                Suite::Isolation => isolation_suite(a.budget.unwrap_or(100_000), ctx.seed)?,
                Suite::Sampler => sampler_suite(a.budget.unwrap_or(10_000), ctx.seed)?,
                Suite::All => unreachable!(),
            });
        }
        Ok(reports)
    };
    let reports = run().map_err(|f| (Value::Null, f))?;
    let body = match ctx.format {
        Format::Json => serde_json::to_string_pretty(&reports).expect("plain data serializes") + "\n",
        Format::Csv => {
            let mut s = String::from("suite,check,value,lower,upper,pass\n");
            for r in &reports {
                for c in &r.checks {
                    s.push_str(&format!(
                        "{},{},{:.16e},{:.16e},{:.16e},{}\n",
                        r.suite, c.name, c.value, c.lower, c.upper, c.pass
                    ));
                }
            }
            s
        }
    };
    for c in reports.iter().flat_map(|r| &r.checks) {
        eprintln!("{c}");
    }
    if let Err(e) = ctx.emit(&format!("verify.{}", ext(ctx.format)), &body) {
        return Err((Value::Null, e.into()));
    }
    let failed = reports.iter().flat_map(|r| &r.checks).filter(|c| !c.pass).count();
    let summary = json!({
        "suites": reports.iter().map(|r| json!({ "suite": r.suite, "checks": r.checks.len(), "passed": r.passed() })).collect::<Vec<_>>(),
        "failed_checks": failed,
    });
    if failed > 0 {
        Err((summary, Failure::Statistical(format!("{failed} checks failed at 4 sigma"))))
    } else {
        Ok(summary)
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let sub = matches.subcommand().map(|(_, m)| m);
    let source = sub
        .and_then(|m| m.value_source("seed"))
        .or_else(|| matches.value_source("seed"));
    let seed_source = match source {
        Some(ValueSource::CommandLine) => "flag",
        Some(ValueSource::EnvVariable) => "env:HARDSPHERE_SEED",
        _ => "default",
    };

    if let Some(dir) = &cli.out {
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return ExitCode::from(1);
        }
    }
    let ctx = Ctx { seed: cli.seed, out: cli.out.as_deref(), format: cli.format };
    let start = Instant::now();
    let (config, outcome): (Value, Outcome) = match &cli.command {
        Command::BoundsScan(a) => (to_json(a), bounds_scan(&ctx, a).map_err(|f| (Value::Null, f))),
        Command::Simulate(a) => (to_json(a), simulate(&ctx, a)),
        Command::Perc2d(a) => (to_json(a), perc2d(&ctx, a).map_err(|f| (Value::Null, f))),
        Command::Verify(a) => (to_json(a), verify(&ctx, a)),
    };
    let (results, code) = match outcome {
        Ok(v) => (v, 0),
        Err((v, f)) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Violation(m) | Failure::Statistical(m) | Failure::Other(m) => m,
            };
            eprintln!("error: {msg}");
            (v, f.code())
        }
    };
    let mut config = config;
    if let Value::Object(m) = &mut config {
        m.insert("out".into(), to_json(&cli.out));
        m.insert("format".into(), to_json(&cli.format));
    }
    let manifest = Manifest {
        tool: "hardsphere",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name(),
        config,
        seed: cli.seed,
        seed_source,
        rng_algorithm: rng::RNG_ALGORITHM,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        exit_code: code,
        results,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("plain data serializes") + "\n";
    let written = match ctx.out {
        Some(dir) => fs::write(dir.join("manifest.json"), text),
        None => io::stderr().lock().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::from(Error::Domain("x".into())).code(), 2);
        assert_eq!(Failure::from(Error::DimensionMismatch { expected: 2, found: 3 }).code(), 2);
        assert_eq!(Failure::from(Error::Internal("x".into())).code(), 3);
        assert_eq!(Failure::Statistical("x".into()).code(), 4);
    }

    #[test]
    fn auto_parses() {
        assert_eq!("auto".parse::<Auto>().unwrap(), Auto::Auto);
        assert_eq!("AUTO".parse::<Auto>().unwrap(), Auto::Auto);
        assert_eq!("2.5".parse::<Auto>().unwrap(), Auto::Value(2.5));
        assert!("two".parse::<Auto>().is_err());
        assert_eq!(serde_json::to_string(&Auto::Auto).unwrap(), "\"auto\"");
    }
}
