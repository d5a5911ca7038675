//! Command line driver. Every subcommand writes one CSV table or one JSON
//! document; floats carry 17 significant digits so reruns diff exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::berry_esseen::{berry_esseen_report, constant_set, gaussian_integrals, Bounds};
use crate::conditional::{acceptance_audit, rejection_sample_chunked, DEFAULT_CHUNK};
use crate::error::{Error, Result};
use crate::exact::{exact_conditional_law, exact_displacement_pmf, ConditioningSpec};
use crate::fourier::{llt_check, llt_check_with_psi};
use crate::model::{ModelKind, ModelSpec};
use crate::models::{build_model, ModelConfig};
use crate::numeric::fmt_f64;
use crate::probing::{block_decomposition, insert_trace, HashSequence};
use crate::rng::{RngStream, DEFAULT_SEED};
use crate::tails::{hash_lower_bound, tail_mc_decomposition, x_tail_check, y_tail_bracket};

/// Version of the emitted document layouts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "lpcond",
    version,
    about = "Linear probing displacement and conditioned sums"
)]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, env = "LPCOND_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Insert a hash sequence and report displacements and blocks.
    Simulate(SimulateArgs),
    /// Exact law of the total displacement d_{m,n}.
    Enumerate(EnumerateArgs),
    /// Law of T given S = m, exactly or by rejection sampling.
    Conditional(ConditionalArgs),
    /// Local limit report for P(S = m).
    Llt(LltArgs),
    /// Normal approximation audit with the explicit constants.
    BeAudit(BeAuditArgs),
    /// Tail tables for the hashing model.
    LdTails(LdTailsArgs),
    /// Constants of the Berry-Esseen bound from a bounds file.
    Constants(ConstantsArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub m: usize,
    /// Comma separated home urns in 1..=m.
    #[arg(long, value_delimiter = ',', conflicts_with = "random")]
    pub seq: Vec<usize>,
    /// Draw this many uniform home urns from the seed instead.
    #[arg(long)]
    pub random: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub m: u64,
    #[arg(long)]
    pub n: u64,
    /// Also store the table as `d_{m}_{n}.csv` in this directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Hashing,
    Occupancy,
    BoseEinstein,
    Branching,
    RandomForest,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Hashing => ModelKind::Hashing,
            KindArg::Occupancy => ModelKind::Occupancy,
            KindArg::BoseEinstein => ModelKind::BoseEinstein,
            KindArg::Branching => ModelKind::Branching,
            KindArg::RandomForest => ModelKind::RandomForest,
        }
    }
}

/// Model selection shared by the model-based subcommands. Flags override the
/// values of `--config`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// JSON model config `{kind, params{}, N, m, y, grids{}}`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<KindArg>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Balls (hashing, Bose-Einstein) or total progeny (branching).
    #[arg(long)]
    pub n: Option<u64>,
    /// Value whose indicator is the response.
    #[arg(long)]
    pub k: Option<i64>,
    /// Number of summands.
    #[arg(long = "N")]
    pub big_n: Option<u64>,
    #[arg(long)]
    pub m: Option<i64>,
}

impl ModelArgs {
    pub fn config(&self) -> Result<ModelConfig> {
        let mut c = match &self.config {
            Some(path) => ModelConfig::from_json(&std::fs::read_to_string(path)?)?,
            None => ModelConfig::new(
                self.model
                    .ok_or_else(|| Error::Input("give --model or --config".into()))?
                    .into(),
            ),
        };
        if let Some(k) = self.model {
            c.kind = k.into();
        }
        let p = &mut c.params;
        p.mu = self.mu.or(p.mu);
        p.lambda = self.lambda.or(p.lambda);
        p.p = self.p.or(p.p);
        p.n = self.n.or(p.n);
        p.k = self.k.or(p.k);
        c.big_n = self.big_n.or(c.big_n);
        c.m = self.m.or(c.m);
        Ok(c)
    }

    pub fn build(&self) -> Result<(ModelSpec, ConditioningSpec)> {
        build_model(&self.config()?)
    }
}

#[derive(Debug, Args)]
pub struct ConditionalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Exact dynamic programming instead of sampling.
    #[arg(long)]
    pub exact: bool,
    /// Accepted samples to draw.
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    /// Maximum attempts.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_CHUNK)]
    pub chunk: u64,
    /// Write sampling metadata as JSON to this file.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LltArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also evaluate ψ(0) by quadrature of the characteristic function.
    #[arg(long)]
    pub psi: bool,
}

#[derive(Debug, Args)]
pub struct BeAuditArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    pub eta0: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TailTable {
    /// Borel tail exponents along an `l` grid (CSV).
    X,
    /// Displacement tail bracket along a `u` grid (CSV).
    Y,
    /// Long-block lower bound for a = 1..=a-max (JSON).
    Lemma,
    /// Monte Carlo conditional tail decomposition (JSON).
    Mc,
}

#[derive(Debug, Args)]
pub struct LdTailsArgs {
    #[arg(long, value_enum)]
    pub table: TailTable,
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    /// Grid of `l` (x table) or `u` (y table).
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    /// Largest block length summed exactly in the y table.
    #[arg(long, default_value_t = 200)]
    pub exact_l_max: u64,
    #[arg(long, default_value_t = 15)]
    pub a_max: u64,
    /// Number of summands for the Monte Carlo table; m = 2N unless given.
    #[arg(long = "N", default_value_t = 40)]
    pub big_n: u64,
    #[arg(long)]
    pub m: Option<i64>,
    #[arg(long, default_value_t = 0.5)]
    pub y: f64,
    #[arg(long, default_value_t = 10_000_000)]
    pub attempts: u64,
    #[arg(long, default_value_t = DEFAULT_CHUNK)]
    pub chunk: u64,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    /// JSON object with c1_tilde, c1, c2, c3_tilde, c3, c4, c5, c5_tilde, c6, eta0.
    #[arg(long)]
    pub bounds: PathBuf,
}

/// Pretty JSON whose floats are printed by [`fmt_f64`].
struct FixedFloats(PrettyFormatter<'static>);

impl Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with 17-digit floats.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, FixedFloats(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(format!("json: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    out.write_all(to_json(value)?.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    seed: Option<u64>,
    result: T,
}

fn doc<T: Serialize>(command: &str, seed: Option<u64>, result: T) -> Document<'_, T> {
    Document {
        schema_version: SCHEMA_VERSION,
        command,
        seed,
        result,
    }
}

#[derive(Serialize)]
struct BlockOut {
    first_urn: usize,
    length: usize,
    urns: Vec<usize>,
    empty_urn: usize,
    disp_sum: u64,
}

#[derive(Serialize)]
struct SimulateOut {
    m: usize,
    n: usize,
    sequence: Vec<usize>,
    displacements: Vec<u64>,
    positions: Vec<usize>,
    total: u64,
    blocks: Vec<BlockOut>,
}

fn simulate(a: &SimulateArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let seq = match a.random {
        Some(n) => {
            if a.m == 0 {
                return Err(Error::Input("table size m must be at least 1".into()));
            }
            let mut rng = RngStream::new(seed, 0);
            (0..n).map(|_| rng.below(a.m as u64) as usize + 1).collect()
        }
        None => a.seq.clone(),
    };
    let hs = HashSequence::new(a.m, seq)?;
    let trace = insert_trace(&hs);
    let blocks = block_decomposition(&hs)?;
    let result = SimulateOut {
        m: hs.m(),
        n: hs.n(),
        sequence: hs.addresses().to_vec(),
        displacements: trace.displacements.clone(),
        positions: trace.positions.clone(),
        total: trace.total,
        blocks: blocks
            .blocks
            .iter()
            .map(|b| BlockOut {
                first_urn: b.first_urn,
                length: b.length,
                urns: b.urns(hs.m()),
                empty_urn: b.empty_urn(hs.m()),
                disp_sum: b.disp_sum,
            })
            .collect(),
    };
    write_json(out, &doc("simulate", a.random.map(|_| seed), result))
}

fn enumerate(a: &EnumerateArgs, out: &mut dyn Write) -> Result<()> {
    let law = exact_displacement_pmf(a.m, a.n)?;
    if let Some(dir) = &a.cache_dir {
        std::fs::create_dir_all(dir)?;
        let file = File::create(dir.join(format!("d_{}_{}.csv", a.m, a.n)))?;
        law.write_csv(BufWriter::new(file))?;
    }
    law.write_csv(out)
}

fn conditional(a: &ConditionalArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let (model, cond) = a.model.build()?;
    if a.exact {
        return exact_conditional_law(&model, &cond)?.law.write_csv(out);
    }
    let batch = rejection_sample_chunked(&model, &cond, a.samples, a.budget, seed, a.chunk)?;
    if let Some(path) = &a.metadata {
        let audit = acceptance_audit(&batch, &model, &cond).ok();
        let meta = serde_json::json!({
            "batch": batch.metadata_json(),
            "acceptance": audit,
        });
        std::fs::write(path, to_json(&doc("conditional", Some(seed), meta))?)?;
    }
    batch.write_csv(out)
}

fn llt(a: &LltArgs, out: &mut dyn Write) -> Result<()> {
    let (model, cond) = a.model.build()?;
    let report = if a.psi {
        llt_check_with_psi(&model, &cond)?
    } else {
        llt_check(&model, &cond)?
    };
    write_json(out, &doc("llt", None, report))
}

fn be_audit(a: &BeAuditArgs, out: &mut dyn Write) -> Result<()> {
    let (model, cond) = a.model.build()?;
    write_json(
        out,
        &doc(
            "be-audit",
            None,
            berry_esseen_report(&model, &cond, a.eta0)?,
        ),
    )
}

fn grid_u64(grid: &[f64]) -> Result<Vec<u64>> {
    grid.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(Error::Input(format!(
                    "grid value {v} is not a nonnegative integer"
                )))
            }
        })
        .collect()
}

fn ld_tails(a: &LdTailsArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    match a.table {
        TailTable::X => {
            let grid = if a.grid.is_empty() {
                vec![1, 2, 10, 50, 100, 200]
            } else {
                grid_u64(&a.grid)?
            };
            let r = x_tail_check(a.mu, &grid)?;
            writeln!(out, "l,p,exponent,kappa")?;
            for row in &r.rows {
                writeln!(
                    out,
                    "{},{},{},{}",
                    row.l,
                    fmt_f64(row.p),
                    fmt_f64(row.exponent),
                    fmt_f64(r.kappa)
                )?;
            }
            Ok(())
        }
        TailTable::Y => {
            let grid = if a.grid.is_empty() {
                vec![1.0, 10.0, 100.0, 1000.0, 10000.0]
            } else {
                a.grid.clone()
            };
            y_tail_bracket(a.mu, &grid, a.exact_l_max)?.write_csv(out)
        }
        TailTable::Lemma => {
            let rows = (1..=a.a_max)
                .map(hash_lower_bound)
                .collect::<Result<Vec<_>>>()?;
            write_json(out, &doc("ld-tails", None, rows))
        }
        TailTable::Mc => {
            let mut c = ModelConfig::new(ModelKind::Hashing);
            c.params.mu = Some(a.mu);
            c.big_n = Some(a.big_n);
            c.m = Some(a.m.unwrap_or(2 * a.big_n as i64));
            let (model, cond) = build_model(&c)?;
            let r = tail_mc_decomposition(&model, &cond, a.y, seed, a.attempts, a.chunk)?;
            write_json(out, &doc("ld-tails", Some(seed), r))
        }
    }
}

#[derive(Serialize)]
struct ConstantsOut {
    constants: crate::berry_esseen::ConstantSet,
    gaussian_integrals: Vec<crate::berry_esseen::GaussianIntegral>,
}

fn constants(a: &ConstantsArgs, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(&a.bounds)?;
    let bounds: Bounds =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("bounds file: {e}")))?;
    let result = ConstantsOut {
        constants: constant_set(&bounds)?,
        gaussian_integrals: gaussian_integrals(bounds.c5)?,
    };
    write_json(out, &doc("constants", None, result))
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed, out),
        Command::Enumerate(a) => enumerate(a, out),
        Command::Conditional(a) => conditional(a, cli.seed, out),
        Command::Llt(a) => llt(a, out),
        Command::BeAudit(a) => be_audit(a, out),
        Command::LdTails(a) => ld_tails(a, cli.seed, out),
        Command::Constants(a) => constants(a, out),
    }
}

/// Runs the command on the requested pool and returns the rendered output.
fn render(cli: &Cli) -> Result<Vec<u8>> {
    let run = || {
        let mut buf = Vec::new();
        dispatch(cli, &mut buf).map(|()| buf)
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Input(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Runs a parsed command line, honouring `--threads` and `--output`.
pub fn execute(cli: &Cli) -> Result<()> {
    let bytes = render(cli)?;
    match &cli.output {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(&bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Parses `argv` and returns what the command would print, ignoring
/// `--output`.
pub fn run_to_bytes<I, S>(argv: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Input(e.to_string()))?;
    render(&cli)
}
