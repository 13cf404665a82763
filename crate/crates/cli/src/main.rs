use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use quadest_core::estimators::{
    mean_response_estimate, sq_density_estimate, sq_regression_estimate, MeanResponseConfig, RegressionConfig,
    SqDensityConfig, DEFAULT_G_MIN, DEFAULT_NUISANCE_BETA, DEFAULT_P_MIN,
};
use quadest_core::io::{fmt_f64, read_missing, read_sample, to_json, write_replications, write_table};
use quadest_core::kernels::OrthoBasis;
use quadest_core::partitions::{build_partition, check_conditions, default_cell_count};
use quadest_core::simulate::{run_experiment, with_threads, Outcome, Setup};
use quadest_core::{Error, ExperimentConfig, KernelConfig, MissingSample, Partition, Scenario};

#[derive(Parser)]
#[command(name = "quadest", version, about = "Quadratic U-statistic estimators and Monte Carlo checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an estimator on CSV data.
    Estimate(EstimateArgs),
    /// Run a simulation experiment from a config file.
    Simulate(Common),
    /// Report the partition conditions for a kernel.
    CheckConditions(ConditionArgs),
    /// Run the rate experiment (defaults apply without a config).
    Rate(Common),
    /// Write kernel values on a grid as `x1,x2,K`.
    KernelDump(DumpArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set n=200` or `--set kernel.k=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; without it the summary goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Root seed (beats QUADEST_SEED, which beats the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-exact reference runs.
    #[arg(long)]
    threads: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    /// Main sample: `x,y` (or `x` alone), or `z,a,ya` for mean_response.
    #[arg(long)]
    data: PathBuf,
    /// Sample for the nuisance fit; without it the data are split into odd and even rows.
    #[arg(long)]
    nuisance: Option<PathBuf>,
}

#[derive(Args)]
struct KernelFlags {
    /// haar, fourier, wavelet, spline or trig.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Quadrature nodes per axis.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args)]
struct ConditionArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    kernel: KernelFlags,
    /// Number of partition cells; defaults to the kernel's schedule.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 4.0)]
    q: f64,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    kernel: KernelFlags,
    /// Evaluation points per axis (cell midpoints).
    #[arg(long, default_value_t = 64)]
    points: usize,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Data(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Data(_)
            | Error::Domain { .. }
            | Error::InsufficientData(_)
            | Error::Uncovered(_)
            | Error::ZeroMassCell { .. }
            | Error::Csv(_) => Failure::Data(msg),
            Error::InvalidParameter(_)
            | Error::Unknown { .. }
            | Error::Json(_)
            | Error::GridMismatch(_)
            | Error::Alignment(_) => Failure::Config(msg),
            _ => Failure::Other(msg),
        }
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Config(m) => (2, "config error", m),
                Failure::Data(m) => (3, "data error", m),
                Failure::Other(m) => (1, "error", m),
            };
            eprintln!("quadest: {kind}: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Res<()> {
    match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(c) => simulate(c, None),
        Command::Rate(c) => simulate(c, Some(Scenario::Rate)),
        Command::CheckConditions(a) => conditions(a),
        Command::KernelDump(a) => dump(a),
    }
}

// ---- config handling ----

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn apply_override(root: &mut Value, spec: &str) -> Res<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::Config(format!("bad override key `{key}`")));
    }
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Failure::Config(format!("`{key}`: `{p}` is not inside an object")))?;
        node = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Failure::Config(format!("`{key}` does not name an object field")))?;
    obj.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

fn env_seed() -> Res<Option<u64>> {
    match std::env::var("QUADEST_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Config(format!("QUADEST_SEED `{s}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Config file, then `--set`, then the seed precedence; returned unresolved.
fn load_config(c: &Common, base: Value) -> Res<ExperimentConfig> {
    let mut v = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => base,
    };
    if !v.is_object() {
        return Err(Failure::Config("config must be a JSON object".into()));
    }
    for o in &c.overrides {
        apply_override(&mut v, o)?;
    }
    if let Some(s) = c.seed.or(env_seed()?) {
        v["seed"] = Value::from(s);
    }
    serde_json::from_value(v).map_err(|e| Failure::Config(e.to_string()))
}

fn scenario_base(s: Scenario) -> Value {
    serde_json::json!({ "scenario": s })
}

// ---- output ----

struct Outputs {
    dir: Option<PathBuf>,
    force: bool,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Outputs {
    fn new(c: &Common) -> Self {
        Outputs {
            dir: c.output.clone(),
            force: c.force,
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &'static str, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    /// Writes everything or nothing; the first file goes to stdout without a directory.
    fn commit(self) -> Res<()> {
        let Some(dir) = self.dir else {
            if let Some((_, b)) = self.files.first() {
                println!("{}", String::from_utf8_lossy(b).trim_end());
            }
            return Ok(());
        };
        if !self.force {
            if let Some((name, _)) = self.files.iter().find(|(n, _)| dir.join(n).exists()) {
                return Err(Failure::Config(format!(
                    "{} exists; pass --force to overwrite",
                    dir.join(name).display()
                )));
            }
        }
        fs::create_dir_all(&dir).map_err(|e| Failure::Other(format!("{}: {e}", dir.display())))?;
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Failure::Other(format!("{}: {e}", p.display())))?;
        }
        Ok(())
    }
}

fn json_bytes<T: Serialize + ?Sized>(v: &T) -> Res<Vec<u8>> {
    let mut s = to_json(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: T,
}

fn threaded<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Res<T> + Send) -> Res<T> {
    with_threads(threads, f).map_err(Failure::from)?
}

// ---- simulate / rate ----

fn simulate(c: Common, forced: Option<Scenario>) -> Res<()> {
    if c.config.is_none() && forced.is_none() {
        return Err(Failure::Config("simulate needs --config".into()));
    }
    let mut cfg = load_config(&c, scenario_base(forced.unwrap_or(Scenario::RawUstat)))?;
    if let Some(s) = forced {
        if cfg.scenario != s {
            return Err(Failure::Config(format!("config scenario is {:?}, expected {s:?}", cfg.scenario)));
        }
    }
    cfg = cfg.resolve()?;
    let outcome = threaded(c.threads, || Ok(run_experiment(&cfg)?))?;
    let mut out = Outputs::new(&c);
    match outcome {
        Outcome::Normality {
            report,
            replications,
        } => {
            #[derive(Serialize)]
            struct B<'a> {
                report: &'a quadest_core::NormalityReport,
            }
            out.add("summary.json", json_bytes(&Summary { config: &cfg, body: B { report: &report } })?);
            let mut csv = Vec::new();
            write_replications(&mut csv, &replications)?;
            out.add("replications.csv", csv);
        }
        Outcome::Multinomial(s) => {
            #[derive(Serialize)]
            struct B<'a> {
                multinomial: &'a quadest_core::simulate::MultinomialSummary,
            }
            out.add("summary.json", json_bytes(&Summary { config: &cfg, body: B { multinomial: &s } })?);
        }
        Outcome::Rate(t) => {
            #[derive(Serialize)]
            struct B<'a> {
                rate: &'a quadest_core::simulate::RateTable,
            }
            out.add("summary.json", json_bytes(&Summary { config: &cfg, body: B { rate: &t } })?);
            let rows: Vec<Vec<f64>> = t
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.n as f64, r.k as f64, r.expected, r.mc_mean, r.bias, r.bias_se, r.rmse, r.sd,
                    ]
                })
                .collect();
            let mut csv = Vec::new();
            write_table(&mut csv, &["n", "k", "expected", "mc_mean", "bias", "bias_se", "rmse", "sd"], &rows)?;
            out.add("rate.csv", csv);
        }
    }
    out.add("resolved_config.json", json_bytes(&cfg)?);
    out.commit()
}

// ---- estimate ----

fn read_file<T>(p: &Path, f: impl FnOnce(fs::File) -> quadest_core::Result<T>) -> Res<T> {
    let file = fs::File::open(p).map_err(|e| Failure::Data(format!("cannot open {}: {e}", p.display())))?;
    f(file).map_err(|e| match Failure::from(e) {
        Failure::Data(m) | Failure::Config(m) | Failure::Other(m) => Failure::Data(format!("{}: {m}", p.display())),
    })
}

fn haar_k(cfg: &ExperimentConfig) -> Res<usize> {
    match cfg.kernel {
        Some(KernelConfig::Haar { k }) => Ok(k),
        _ => Err(Failure::Config(format!("{:?} needs a haar kernel", cfg.scenario))),
    }
}

fn split_rows(n: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n).step_by(2).collect(), (1..n).step_by(2).collect())
}

fn pick(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| v[r]).collect()
}

fn estimate(a: EstimateArgs) -> Res<()> {
    let c = &a.common;
    if c.config.is_none() {
        return Err(Failure::Config("estimate needs --config".into()));
    }
    let mut cfg = load_config(c, Value::Null)?;
    let mut out = Outputs::new(c);
    match cfg.scenario {
        Scenario::SqDensity => {
            let s = read_file(&a.data, read_sample)?;
            if s.dim() != 1 {
                return Err(Failure::Data("sq_density takes one x column".into()));
            }
            let (basis, k) = match cfg.kernel {
                Some(KernelConfig::Haar { k }) => (OrthoBasis::HaarWavelets, k),
                Some(KernelConfig::Basis { basis, k }) => (basis, k),
                _ => return Err(Failure::Config("sq_density needs a haar or basis kernel".into())),
            };
            cfg.n = s.len();
            cfg = cfg.resolve()?;
            let est = SqDensityConfig {
                basis,
                k,
                beta: cfg.beta.unwrap_or(0.125),
            };
            let value = threaded(c.threads, || Ok(sq_density_estimate(s.x(), &est)?))?;
            #[derive(Serialize)]
            struct B {
                value: f64,
                k: usize,
                n: usize,
            }
            let body = B { value, k, n: s.len() };
            out.add("summary.json", json_bytes(&Summary { config: &cfg, body })?);
        }
        Scenario::SqRegression => {
            let k = haar_k(&cfg)?;
            let data = read_file(&a.data, read_sample)?;
            let (main, nuis) = match &a.nuisance {
                Some(p) => (data, read_file(p, read_sample)?),
                None => {
                    let (even, odd) = split_rows(data.len());
                    (data.select(&even), data.select(&odd))
                }
            };
            cfg.n = main.len();
            cfg.nuisance_n = Some(nuis.len());
            cfg = cfg.resolve()?;
            let rc = RegressionConfig {
                k,
                beta: cfg.beta.unwrap_or(DEFAULT_NUISANCE_BETA),
                g_min: cfg.g_min.unwrap_or(DEFAULT_G_MIN),
                resolution: cfg.resolution,
            };
            let e = threaded(c.threads, || Ok(sq_regression_estimate(&main, &nuis, &rc, None)?))?;
            out.add("summary.json", json_bytes(&Summary { config: &cfg, body: &e })?);
        }
        Scenario::MeanResponse => {
            let k = haar_k(&cfg)?;
            let data = read_file(&a.data, read_missing)?;
            let (main, nuis) = match &a.nuisance {
                Some(p) => (data, read_file(p, read_missing)?),
                None => {
                    let (even, odd) = split_rows(data.len());
                    let part = |r: &[usize]| MissingSample::new(pick(&data.z, r), pick(&data.a, r), pick(&data.ya, r));
                    (part(&even)?, part(&odd)?)
                }
            };
            cfg.n = main.len();
            cfg.nuisance_n = Some(nuis.len());
            cfg = cfg.resolve()?;
            let mc = MeanResponseConfig {
                k,
                beta: cfg.beta.unwrap_or(DEFAULT_NUISANCE_BETA),
                g_min: cfg.g_min.unwrap_or(DEFAULT_G_MIN),
                p_min: cfg.p_min.unwrap_or(DEFAULT_P_MIN),
                resolution: cfg.resolution,
            };
            let e = threaded(c.threads, || Ok(mean_response_estimate(&main, &nuis, &mc, None)?))?;
            out.add("summary.json", json_bytes(&Summary { config: &cfg, body: &e })?);
        }
        s => {
            return Err(Failure::Config(format!(
                "estimate runs sq_density, sq_regression or mean_response, not {s:?}"
            )))
        }
    }
    out.add("resolved_config.json", json_bytes(&cfg)?);
    out.commit()
}

// ---- kernels from flags ----

fn kernel_from_flags(f: &KernelFlags) -> Res<Option<KernelConfig>> {
    let Some(name) = &f.kernel else {
        if f.k.is_some() {
            return Err(Failure::Config("--k needs --kernel".into()));
        }
        return Ok(None);
    };
    let k = f.k.ok_or_else(|| Failure::Config("--kernel needs --k".into()))?;
    let log2 = || {
        if k.is_power_of_two() {
            Ok(k.trailing_zeros())
        } else {
            Err(Failure::Config(format!("{name} needs k a power of two, got {k}")))
        }
    };
    Ok(Some(match name.as_str() {
        "haar" => KernelConfig::Haar { k },
        "fourier" => KernelConfig::Fourier { k },
        "wavelet" => KernelConfig::Wavelet {
            level: log2()?,
            dim: 1,
            wavelet: Default::default(),
            depth: 6,
        },
        "spline" => {
            if k < 5 {
                return Err(Failure::Config("cubic spline kernels need k ≥ 5".into()));
            }
            KernelConfig::Spline {
                order: 4,
                interior: k - 4,
            }
        }
        "trig" => KernelConfig::Basis {
            basis: OrthoBasis::Trig,
            k,
        },
        other => return Err(Failure::Config(format!("unknown kernel `{other}`"))),
    }))
}

/// Config from the file (if any) with kernel flags and `n` layered on top.
fn kernel_config(c: &Common, f: &KernelFlags, n: Option<usize>) -> Res<ExperimentConfig> {
    let mut cfg = load_config(c, scenario_base(Scenario::RawUstat))?;
    if let Some(k) = kernel_from_flags(f)? {
        cfg.kernel = Some(k);
        if f.grid.is_none() {
            cfg.grid = None;
        }
    }
    if cfg.kernel.is_none() {
        return Err(Failure::Config("no kernel: pass --kernel and --k or a config".into()));
    }
    if let Some(g) = f.grid {
        cfg.grid = Some(g);
    }
    if let Some(n) = n {
        cfg.n = n;
    }
    if cfg.n < 2 {
        cfg.n = 2;
    }
    cfg.scenario = Scenario::RawUstat;
    Ok(cfg.resolve()?)
}

fn conditions(a: ConditionArgs) -> Res<()> {
    let c = &a.common;
    let mut cfg = kernel_config(c, &a.kernel, a.n)?;
    if a.n.is_none() && c.config.is_none() {
        return Err(Failure::Config("check-conditions needs --n".into()));
    }
    let setup = Setup::new(&cfg)?;
    let m = a.m.unwrap_or_else(|| default_cell_count(&setup.kernel, cfg.n));
    let report = threaded(c.threads, || {
        let p = if m == 1 {
            Partition::whole(&setup.g)?
        } else {
            build_partition(&setup.kernel, m, &setup.g)?
        };
        Ok(check_conditions(&setup.kernel, &p, &setup.g, cfg.n, a.q)?)
    })?;
    cfg.partition = Some(quadest_core::simulate::PartitionConfig { cells: Some(m) });
    #[derive(Serialize)]
    struct B<'a> {
        q: f64,
        report: &'a quadest_core::ConditionReport,
    }
    let mut out = Outputs::new(c);
    let body = B {
        q: a.q,
        report: &report,
    };
    out.add("conditions.json", json_bytes(&Summary { config: &cfg, body })?);
    out.add("resolved_config.json", json_bytes(&cfg)?);
    out.commit()
}

fn dump(a: DumpArgs) -> Res<()> {
    let c = &a.common;
    let cfg = kernel_config(c, &a.kernel, None)?;
    if a.points == 0 {
        return Err(Failure::Config("--points must be positive".into()));
    }
    let setup = Setup::new(&cfg)?;
    if setup.g.dim() != 1 {
        return Err(Failure::Config("kernel-dump handles one-dimensional kernels".into()));
    }
    let dom = setup.g.domain();
    let h = dom.width() / a.points as f64;
    let xs: Vec<f64> = (0..a.points).map(|i| dom.lo + (i as f64 + 0.5) * h).collect();
    let mut csv = String::from("x1,x2,K\n");
    for &x1 in &xs {
        for &x2 in &xs {
            let v = setup.kernel.eval(&[x1], &[x2])?;
            csv.push_str(&format!("{},{},{}\n", fmt_f64(x1), fmt_f64(x2), fmt_f64(v)));
        }
    }
    let mut out = Outputs::new(c);
    out.add("kernel.csv", csv.into_bytes());
    out.add("resolved_config.json", json_bytes(&cfg)?);
    out.commit()
}
