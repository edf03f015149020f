//! Command-line front end: file formats, config merging and the four subcommands.
//!
//! Exit codes: 0 ok, 1 input error, 2 uncertified (or audit failure), 3 oracle refusal.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bsgame::{self, Mode, RegGame, SolverConfig};
use crate::ddbm::{self, Adversary, BipartiteGraph, CroKind, RunConfig};
use crate::error::{instance, Error, Result};
use crate::numkit::SparseMatrix;
use crate::oracle::{self, OracleBudget};
use crate::sinkhorn::{self, OTInstance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_UNCERTIFIED: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn tokens(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect()
}

fn num<T: FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse().or_else(|_| parse_err(line, format!("cannot parse {what} from '{tok}'")))
}

fn nums(line: usize, toks: &[&str], want: usize, what: &str) -> Result<Vec<f64>> {
    if toks.len() != want {
        return parse_err(line, format!("expected {want} values for {what}, found {}", toks.len()));
    }
    toks.iter().map(|t| num(line, t, what)).collect()
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Game file contents in input units.
#[derive(Debug, Clone, PartialEq)]
pub struct GameFile {
    pub m: usize,
    pub n: usize,
    pub mu: f64,
    pub eps: f64,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl GameFile {
    /// Header `bsgame <m> <n> <mu> <eps>`, a `c` row, a `b` row, an optional nnz count, then `i j value` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let Some((ln, head)) = lines.next() else { return parse_err(1, "empty game file") };
        let h = tokens(head);
        if h.len() != 5 || h[0] != "bsgame" {
            return parse_err(ln, "expected header 'bsgame <m> <n> <mu> <eps>'");
        }
        let (m, n): (usize, usize) = (num(ln, h[1], "m")?, num(ln, h[2], "n")?);
        let (mu, eps): (f64, f64) = (num(ln, h[3], "mu")?, num(ln, h[4], "eps")?);
        let Some((ln, c)) = lines.next() else { return parse_err(ln + 1, "missing c row") };
        let c = nums(ln, &tokens(c), m, "c")?;
        let Some((ln, b)) = lines.next() else { return parse_err(ln + 1, "missing b row") };
        let b = nums(ln, &tokens(b), n, "b")?;
        let mut triplets = Vec::new();
        let mut declared = None;
        for (ln, l) in lines {
            let t = tokens(l);
            match t.len() {
                1 if declared.is_none() && triplets.is_empty() => declared = Some(num::<usize>(ln, t[0], "nnz")?),
                3 => {
                    let (i, j): (usize, usize) = (num(ln, t[0], "row")?, num(ln, t[1], "column")?);
                    if i >= m || j >= n {
                        return parse_err(ln, format!("entry ({i},{j}) outside {m}x{n}"));
                    }
                    triplets.push((i, j, num(ln, t[2], "value")?));
                }
                _ => return parse_err(ln, "expected 'i j value'"),
            }
        }
        if let Some(k) = declared {
            if k != triplets.len() {
                return parse_err(0, format!("declared {k} entries, found {}", triplets.len()));
            }
        }
        Ok(Self { m, n, mu, eps, c, b, triplets })
    }

    pub fn render(&self) -> String {
        let mut s = format!("bsgame {} {} {} {}\n{}\n{}\n{}\n", self.m, self.n, self.mu, self.eps, fmt_row(&self.c), fmt_row(&self.b), self.triplets.len());
        for (i, j, v) in &self.triplets {
            let _ = writeln!(s, "{i} {j} {v}");
        }
        s
    }

    pub fn matrix(&self) -> Result<SparseMatrix> {
        SparseMatrix::from_triplets(self.m, self.n, &self.triplets)
    }

    pub fn game(&self) -> Result<RegGame> {
        RegGame::new(self.matrix()?, self.b.clone(), self.c.clone(), self.mu, self.eps)
    }
}

/// Header `bipartite <nL> <nR> <m>` then one `u v` pair per line.
pub fn parse_graph(text: &str) -> Result<BipartiteGraph> {
    let mut lines = content_lines(text);
    let Some((ln, head)) = lines.next() else { return parse_err(1, "empty graph file") };
    let h = tokens(head);
    if h.len() != 4 || h[0] != "bipartite" {
        return parse_err(ln, "expected header 'bipartite <nL> <nR> <m>'");
    }
    let (nl, nr, m): (usize, usize, usize) = (num(ln, h[1], "nL")?, num(ln, h[2], "nR")?, num(ln, h[3], "m")?);
    let mut edges = Vec::with_capacity(m);
    for (ln, l) in lines {
        let t = tokens(l);
        if t.len() != 2 {
            return parse_err(ln, "expected 'u v'");
        }
        let (u, v): (usize, usize) = (num(ln, t[0], "u")?, num(ln, t[1], "v")?);
        if u >= nl || v >= nr {
            return parse_err(ln, format!("edge ({u},{v}) out of range"));
        }
        edges.push((u, v));
    }
    if edges.len() != m {
        return parse_err(0, format!("header declares {m} edges, found {}", edges.len()));
    }
    BipartiteGraph::new(nl, nr, edges)
}

pub fn render_graph(g: &BipartiteGraph) -> String {
    let mut s = format!("bipartite {} {} {}\n", g.n_left(), g.n_right(), g.m());
    for (u, v) in g.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}

/// Adaptive strategy named in a stream file or on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversarySpec {
    MaxWeight,
    Random(u64),
}

/// Explicit edge ids, optionally followed by an adversary that takes over.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamSpec {
    pub edges: Vec<usize>,
    pub adversary: Option<AdversarySpec>,
}

impl StreamSpec {
    pub fn parse(text: &str, default_seed: u64) -> Result<Self> {
        let mut spec = StreamSpec::default();
        for (ln, l) in content_lines(text) {
            if spec.adversary.is_some() {
                return parse_err(ln, "nothing may follow an @adversary directive");
            }
            let t = tokens(l);
            if t[0] == "@adversary" {
                spec.adversary = Some(match t.get(1).copied() {
                    Some("max-weight") if t.len() == 2 => AdversarySpec::MaxWeight,
                    Some("random") if t.len() <= 3 => {
                        AdversarySpec::Random(t.get(2).map_or(Ok(default_seed), |s| num(ln, s, "seed"))?)
                    }
                    _ => return parse_err(ln, "expected '@adversary max-weight' or '@adversary random <seed>'"),
                });
            } else if t.len() == 1 {
                spec.edges.push(num(ln, t[0], "edge id")?);
            } else {
                return parse_err(ln, "expected one edge id per line");
            }
        }
        Ok(spec)
    }

    pub fn into_adversary(self) -> Box<dyn Adversary> {
        let tail: Option<Box<dyn Adversary>> = self.adversary.map(|a| match a {
            AdversarySpec::MaxWeight => Box::new(ddbm::MaxWeight) as Box<dyn Adversary>,
            AdversarySpec::Random(seed) => Box::new(ddbm::RandomOrder::new(seed)),
        });
        Box::new(Chained { head: ddbm::FixedOrder::new(self.edges), tail })
    }
}

struct Chained {
    head: ddbm::FixedOrder,
    tail: Option<Box<dyn Adversary>>,
}

impl Adversary for Chained {
    fn next(&mut self, g: &BipartiteGraph, x: &[f64]) -> Option<usize> {
        self.head.next(g, x).or_else(|| self.tail.as_mut().and_then(|t| t.next(g, x)))
    }
}

/// First row `ot <L> <R> <mu>`, then `L` cost rows, then the `d_L` and `d_R` rows.
pub fn parse_ot(text: &str) -> Result<OTInstance> {
    let lines: Vec<(usize, &str)> = content_lines(text).collect();
    let Some(&(ln, head)) = lines.first() else { return parse_err(1, "empty OT file") };
    let h = tokens(head);
    if h.len() != 4 || h[0] != "ot" {
        return parse_err(ln, "expected header 'ot <L> <R> <mu>'");
    }
    let (l, r): (usize, usize) = (num(ln, h[1], "L")?, num(ln, h[2], "R")?);
    let mu: f64 = num(ln, h[3], "mu")?;
    if lines.len() != l + 3 {
        return parse_err(ln, format!("expected {} rows after the header, found {}", l + 2, lines.len() - 1));
    }
    let mut cost = Vec::with_capacity(l);
    for &(ln, row) in &lines[1..=l] {
        cost.push(nums(ln, &tokens(row), r, "cost row")?);
    }
    let (ln_l, dl) = lines[l + 1];
    let (ln_r, dr) = lines[l + 2];
    OTInstance::new(cost, nums(ln_l, &tokens(dl), l, "d_L")?, nums(ln_r, &tokens(dr), r, "d_R")?, mu)
}

pub fn render_ot(inst: &OTInstance) -> String {
    let mut s = format!("ot,{},{},{}\n", inst.left(), inst.right(), inst.mu());
    for row in inst.cost() {
        let _ = writeln!(s, "{}", fmt_row(row));
    }
    let _ = writeln!(s, "{}", fmt_row(inst.d_l()));
    let _ = writeln!(s, "{}", fmt_row(inst.d_r()));
    s
}

pub fn render_matrix(x: &[Vec<f64>]) -> String {
    x.iter().map(|r| fmt_row(r) + "\n").collect()
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (ln, l) in content_lines(text) {
        let Some((k, v)) = l.split_once('=') else { return parse_err(ln, "expected key = value") };
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

#[derive(Parser, Debug)]
#[command(name = "bsg", about = "Regularized box-simplex games, decremental matching and Sinkhorn solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve a regularized box-simplex game file.
    Solve(SolveArgs),
    /// Run a deletion stream against a bipartite graph.
    Ddbm(DdbmArgs),
    /// Solve an entropic transport instance.
    Sinkhorn(SinkhornArgs),
    /// Brute-force reference computations.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (CSV or JSON lines); stdout gets the JSON summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    pub game: PathBuf,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub c_t: Option<f64>,
    #[arg(long)]
    pub c_k: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Solve the half-regularized problem at this accuracy instead.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Per-iteration trace CSV (gap, min_x, padded).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct DdbmArgs {
    pub graph: PathBuf,
    /// Stream file; defaults to the max-weight adversary.
    pub stream: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// bs or sinkhorn.
    #[arg(long)]
    pub kind: Option<CroKind>,
    #[arg(long)]
    pub audit: bool,
    #[arg(long)]
    pub no_timestamps: bool,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct SinkhornArgs {
    pub instance: PathBuf,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// accel, unaccel or both.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// mcm, reg-optimum or fixpoint.
    pub task: String,
    pub input: PathBuf,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

/// Flag value, else config file value, else default.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(common: &Common) -> Result<Self> {
        let file = match &common.config {
            Some(p) => parse_config(&read(p)?)?,
            None => BTreeMap::new(),
        };
        Ok(Self { file })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(v) => v.parse().map(Some).or_else(|_| instance(format!("config key {key}: cannot parse '{v}'"))),
            None => Ok(None),
        }
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.get::<bool>(None, key)?.unwrap_or(false))
    }
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::Instance(format!("{}: {e}", p.display())))
}

/// Writes to stdout; a closed pipe is not an error.
fn stdout(body: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(body.as_bytes());
}

fn emit(out: &Option<PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, body)?,
        None => stdout(body),
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    certified: bool,
    final_gap: f64,
    x: &'a [f64],
    y: &'a [f64],
    report: &'a bsgame::SolveReport,
}

fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let s = Settings::load(&a.common)?;
    let file = GameFile::parse(&read(&a.game)?)?;
    let mut cfg = SolverConfig::new(s.get(a.mode, "mode")?.unwrap_or(Mode::Theory));
    cfg.c_t = s.get(a.c_t, "c_t")?.unwrap_or(cfg.c_t);
    cfg.c_k = s.get(a.c_k, "c_k")?.unwrap_or(cfg.c_k);
    cfg.max_outer = s.get(a.max_outer, "max_outer")?;
    let (z, report) = match s.get(a.epsilon, "epsilon")? {
        Some(eps) => {
            let (z, r, _) = bsgame::solve_half_regularized(file.matrix()?, file.b.clone(), file.c.clone(), file.mu, eps, &cfg)?;
            (z, r)
        }
        None => {
            let sigma = s.get(a.sigma, "sigma")?.unwrap_or(1e-6);
            bsgame::solve_with(&file.game()?, sigma, &cfg)?
        }
    };
    if let Some(p) = &a.common.out {
        std::fs::write(p, format!("{}\n{}\n", fmt_row(&z.x), fmt_row(&z.y)))?;
    }
    if let Some(p) = &a.trace {
        let mut csv = String::from("gap,min_x,padded\n");
        for t in &report.trace {
            let _ = writeln!(csv, "{},{},{}", t.gap, t.min_x, u8::from(t.padded));
        }
        std::fs::write(p, csv)?;
    }
    stdout(&json(&SolveSummary { certified: report.certified, final_gap: report.final_gap, x: &z.x, y: &z.y, report: &report }));
    Ok(if report.certified { EXIT_OK } else { EXIT_UNCERTIFIED })
}

#[derive(Serialize)]
struct DdbmSummary {
    events: usize,
    phases: Vec<ddbm::PhaseRecord>,
    violations: Vec<String>,
    worst_ratio: Option<f64>,
    uncertified_solves: usize,
}

fn cmd_ddbm(a: &DdbmArgs) -> Result<i32> {
    let s = Settings::load(&a.common)?;
    let g = parse_graph(&read(&a.graph)?)?;
    let seed = s.get(a.common.seed, "seed")?.unwrap_or(0);
    let stream = match &a.stream {
        Some(p) => StreamSpec::parse(&read(p)?, seed)?,
        None => StreamSpec { edges: Vec::new(), adversary: Some(AdversarySpec::MaxWeight) },
    };
    let eps = s.get(a.epsilon, "epsilon")?.unwrap_or(0.1);
    let mut cfg = RunConfig {
        audit: s.flag(a.audit, "audit")?,
        timestamps: !s.flag(a.no_timestamps, "no_timestamps")?,
        ..RunConfig::default()
    };
    cfg.cro.kind = s.get(a.kind, "kind")?.unwrap_or(CroKind::Sinkhorn);
    if let Some(mode) = s.get(a.mode, "mode")? {
        cfg.cro.solver = SolverConfig::new(mode);
    }
    let log = ddbm::dec_matching_run(&g, eps, stream.into_adversary().as_mut(), &cfg)?;
    let lines: String = log.events.iter().map(|e| serde_json::to_string(e).expect("plain data") + "\n").collect();
    let summary = DdbmSummary {
        events: log.events.len(),
        phases: log.phases.clone(),
        violations: log.violations.clone(),
        worst_ratio: log.worst_ratio,
        uncertified_solves: log.uncertified_solves,
    };
    match &a.common.out {
        Some(p) => {
            std::fs::write(p, lines)?;
            stdout(&json(&summary));
        }
        None => stdout(&lines),
    }
    for v in &log.violations {
        log::error!("audit: {v}");
    }
    Ok(if log.violations.is_empty() { EXIT_OK } else { EXIT_UNCERTIFIED })
}

#[derive(Serialize)]
struct PlanSummary {
    method: &'static str,
    objective: f64,
    marginal_violation: f64,
    iterations: usize,
    converged: bool,
}

fn cmd_sinkhorn(a: &SinkhornArgs) -> Result<i32> {
    let s = Settings::load(&a.common)?;
    let inst = parse_ot(&read(&a.instance)?)?;
    let eps = s.get(a.epsilon, "epsilon")?.unwrap_or(1e-3);
    let method = s.get(a.method.clone(), "method")?.unwrap_or_else(|| "unaccel".into());
    let max_iters = s.get(a.max_iters, "max_iters")?.unwrap_or(1_000_000);
    let mode = s.get(a.mode, "mode")?.unwrap_or(Mode::Practical);
    let methods: &[&'static str] = match method.as_str() {
        "accel" => &["accel"],
        "unaccel" => &["unaccel"],
        "both" => &["unaccel", "accel"],
        other => return instance(format!("unknown method '{other}'")),
    };
    let mut summaries = Vec::new();
    let mut plans = String::new();
    let mut ok = true;
    for &m in methods {
        let plan = match m {
            "accel" => sinkhorn::solve_via_bsgame(&inst, eps, &SolverConfig::new(mode))?.0,
            _ => sinkhorn::solve_unaccel(&inst, eps, None, max_iters)?.0,
        };
        ok &= plan.converged;
        summaries.push(PlanSummary {
            method: m,
            objective: sinkhorn::sinkhorn_objective(&inst, &plan)?,
            marginal_violation: sinkhorn::marginal_violation(&plan.x, inst.d_l(), inst.d_r()),
            iterations: plan.iterations,
            converged: plan.converged,
        });
        plans.push_str(&render_matrix(&plan.x));
    }
    if let Some(p) = &a.common.out {
        std::fs::write(p, plans)?;
    }
    stdout(&json(&summaries));
    Ok(if ok { EXIT_OK } else { EXIT_UNCERTIFIED })
}

fn cmd_oracle(a: &OracleArgs) -> Result<i32> {
    let s = Settings::load(&a.common)?;
    let text = read(&a.input)?;
    let mut budget = OracleBudget::default();
    if let Some(t) = s.get(a.tolerance, "tolerance")? {
        budget = OracleBudget::with_tolerance(t);
    }
    let body = match a.task.as_str() {
        "mcm" => {
            let g = parse_graph(&text)?;
            format!("{}\n", oracle::hopcroft_karp(g.n_left(), g.n_right(), g.edges())?)
        }
        "reg-optimum" => json(&oracle::brute_reg_optimum(&GameFile::parse(&text)?.game()?, &budget)?),
        "fixpoint" => {
            let inst = parse_ot(&text)?;
            json(&oracle::sinkhorn_fixpoint(inst.cost(), inst.d_l(), inst.d_r(), inst.mu(), &budget)?)
        }
        other => return instance(format!("unknown oracle task '{other}' (mcm, reg-optimum, fixpoint)")),
    };
    emit(&a.common.out, &body)?;
    Ok(EXIT_OK)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Refused(_) => EXIT_REFUSED,
        _ => EXIT_INPUT,
    }
}

/// Parses arguments, runs the command and maps the result to an exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let res = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Ddbm(a) => cmd_ddbm(a),
        Command::Sinkhorn(a) => cmd_sinkhorn(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    res.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}
