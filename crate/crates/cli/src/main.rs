//! `mlz`: series coefficients, numerical propagation and their comparison
//! for one-crossing multistate Landau-Zener models.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 for unreadable or
//! invalid input. `validate` exits with the number of failed checks. The
//! `MLZ_THREADS` environment variable sets the worker thread count.

mod commands;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use commands::{Failure, LoadedModel, Outcome};
use output::{Document, Format};

#[derive(Debug, Parser)]
#[command(name = "mlz", version, about = "Perturbative and numerical transition probabilities for one-crossing MLZ models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Model file (see docs/model-format.md).
    #[arg(long)]
    model: PathBuf,
    /// Target accuracy.
    #[arg(long, default_value_t = 1e-10, value_parser = positive)]
    tol: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
struct Coupling {
    /// Single coupling strength.
    #[arg(long, allow_hyphen_values = true)]
    g: Option<f64>,
    /// Geometric grid `a:b:n` from a to b with n points.
    #[arg(long, value_parser = GGrid::from_str)]
    g_grid: Option<GGrid>,
}

impl Coupling {
    fn values(&self, default: Option<GGrid>) -> Result<Vec<f64>, Failure> {
        match (self.g, &self.g_grid, default) {
            (Some(g), _, _) if g.is_finite() => Ok(vec![g]),
            (Some(g), _, _) => Err(Failure::Input(anyhow::anyhow!("--g must be finite, got {g}"))),
            (None, Some(grid), _) => Ok(grid.points()),
            (None, None, Some(grid)) => Ok(grid.points()),
            (None, None, None) => Err(Failure::Input(anyhow::anyhow!("one of --g or --g-grid is required"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct GGrid {
    a: f64,
    b: f64,
    n: usize,
}

impl GGrid {
    fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.a];
        }
        let ratio = self.b / self.a;
        let mut pts: Vec<f64> = (0..self.n)
            .map(|i| self.a * ratio.powf(i as f64 / (self.n - 1) as f64))
            .collect();
        pts[self.n - 1] = self.b;
        pts
    }
}

impl FromStr for GGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected a:b:n, got `{s}`"));
        };
        let a: f64 = a.parse().map_err(|e| format!("bad start `{a}`: {e}"))?;
        let b: f64 = b.parse().map_err(|e| format!("bad end `{b}`: {e}"))?;
        let n: usize = n.parse().map_err(|e| format!("bad point count `{n}`: {e}"))?;
        if n == 0 {
            return Err("the grid needs at least one point".into());
        }
        if n == 1 {
            return if a.is_finite() && a >= 0.0 && a == b {
                Ok(Self { a, b, n })
            } else {
                Err("a one-point grid needs a = b >= 0".into())
            };
        }
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(format!("a geometric grid needs 0 < a < b, got a = {a}, b = {b}"));
        }
        Ok(Self { a, b, n })
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(x) => Err(format!("must be positive and finite, got {x}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Times(Vec<f64>);

fn parse_times(s: &str) -> Result<Times, String> {
    let ts: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad time `{x}`: {e}")))
        .collect::<Result<_, _>>()?;
    if ts.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err("times must be positive and finite".into());
    }
    Ok(Times(ts))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check model and coefficient invariants; exits with the failure count.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Second- to fourth-order coefficient matrices.
    Series {
        #[command(flatten)]
        common: Common,
        /// Also evaluate the truncated series at this g.
        #[arg(long, allow_hyphen_values = true)]
        g: Option<f64>,
    },
    /// Transition probabilities by numerical propagation.
    Numeric {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        coupling: Coupling,
    },
    /// Series against numerics, with residual ratios.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        coupling: Coupling,
    },
    /// Ratio-stability verdict per entry over a g grid (default 0.02:0.5:12).
    Scan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        coupling: Coupling,
    },
    /// The Q integral in closed form and by quadrature.
    Qint {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-10, value_parser = positive)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Parity and consistency checks of W1..W3 and P1..P4 at finite times.
    Wcheck {
        #[command(flatten)]
        common: Common,
        /// Comma-separated times.
        #[arg(long, value_parser = parse_times, default_value = "1,3,10")]
        t: Times,
    },
}

fn emit(doc: &Document, format: Format, out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(|e| anyhow::anyhow!("cannot create {}: {e}", path.display()))?);
            doc.write(format, &mut w)
        }
        None => doc.write(format, &mut io::stdout().lock()),
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("MLZ_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Input(anyhow::anyhow!("MLZ_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Input(e.into()))
}

fn run(cli: Cli) -> (Outcome, Format, Option<PathBuf>) {
    let with_model = |common: &Common, f: &dyn Fn(&LoadedModel) -> Outcome| -> (Outcome, Format, Option<PathBuf>) {
        let outcome = commands::load_model(&common.model).and_then(|m| f(&m));
        (outcome, common.format, common.out.clone())
    };
    let default_scan = GGrid { a: 0.02, b: 0.5, n: 12 };
    match cli.command {
        Command::Validate { common, inject_fault } => {
            with_model(&common, &|m| commands::validate(m, common.tol, inject_fault))
        }
        Command::Series { common, g } => with_model(&common, &|m| commands::series(m, g, common.tol)),
        Command::Numeric { common, coupling } => {
            with_model(&common, &|m| commands::numeric(m, &coupling.values(None)?, common.tol))
        }
        Command::Compare { common, coupling } => {
            with_model(&common, &|m| commands::compare(m, &coupling.values(None)?, common.tol))
        }
        Command::Scan { common, coupling } => with_model(&common, &|m| {
            commands::scan(m, &coupling.values(Some(default_scan.clone()))?, common.tol)
        }),
        Command::Qint { alpha, beta, gamma, tol, out, format } => (commands::qint(alpha, beta, gamma, tol), format, out),
        Command::Wcheck { common, t } => with_model(&common, &|m| commands::wcheck(m, &t.0, common.tol)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(Failure::Input(e)) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let (outcome, format, out) = run(cli);
    let (doc, code, message) = match outcome {
        Ok(doc) => (Some(doc), 0u8, None),
        Err(Failure::Input(e)) => (None, 2, Some(e)),
        Err(Failure::Compute(e, doc)) => (doc, 1, Some(e)),
        Err(Failure::Checks(n, doc)) => (Some(doc), n.min(255) as u8, None),
    };
    if let Some(doc) = doc {
        if let Err(e) = emit(&doc, format, out.as_ref()) {
            eprintln!("error: {e:#}");
            return ExitCode::from(if code == 0 { 1 } else { code });
        }
    }
    if let Some(e) = message {
        eprintln!("error: {e:#}");
    }
    let _ = io::stderr().flush();
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_geometric_and_exact_at_ends() {
        let g: GGrid = "0.05:0.5:8".parse().unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0], 0.05);
        assert_eq!(pts[7], 0.5);
        let r = pts[1] / pts[0];
        for w in pts.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_rejects_bad_input() {
        for s in ["0:1:3", "0.5:0.1:3", "1:2", "1:2:0", "a:2:3", "0.1:0.2:1"] {
            assert!(s.parse::<GGrid>().is_err(), "{s}");
        }
        assert_eq!("0:0:1".parse::<GGrid>().unwrap().points(), vec![0.0]);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
