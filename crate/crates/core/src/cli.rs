//! Command-line front end. Classes are written as JSON lines, tables as CSV,
//! and rationals as "p/q" strings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::algebra::{parse_rat, Mat, Rat, SeriesMat, SeriesVec};
use crate::fflat::{self, FflatError, FlatFJet};
use crate::ftft::{toml_rat, AlgebraSpec, FtftError};
use crate::givental::{self, GiventalElement, GiventalError};
use crate::oracle0::{integrate_tautexpr, kappa_psi_integral, pair_with_all, theta_class, OracleError};
use crate::rspin::{self, RspinError};
use crate::tautology::TautExpr;
use crate::trees::{self, is_stable, moduli_dim, TreeError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Unstable(String),
    #[error("malformed group element: {0}")]
    Malformed(String),
    #[error("flat F-manifold: {0}")]
    FlatF(String),
    #[error("verification failed: {0}")]
    Failed(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Unstable(_) => 2,
            CliError::Malformed(_) => 3,
            CliError::FlatF(_) => 4,
            CliError::Failed(_) | CliError::Internal(_) => 1,
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::Unstable { .. } => CliError::Unstable(e.to_string()),
            e => CliError::Internal(e.to_string()),
        }
    }
}

impl From<GiventalError> for CliError {
    fn from(e: GiventalError) -> Self {
        match e {
            GiventalError::Tree(t) => t.into(),
            GiventalError::Malformed(m) => CliError::Malformed(m),
            GiventalError::Truncated { .. } | GiventalError::DimensionMismatch(..) => {
                CliError::Malformed(e.to_string())
            }
            e => CliError::Internal(e.to_string()),
        }
    }
}

impl From<FflatError> for CliError {
    fn from(e: FflatError) -> Self {
        match e {
            FflatError::Givental(g) => g.into(),
            e => CliError::FlatF(e.to_string()),
        }
    }
}

impl From<RspinError> for CliError {
    fn from(e: RspinError) -> Self {
        match e {
            RspinError::Tree(t) => t.into(),
            RspinError::Givental(g) => g.into(),
            RspinError::BadR { .. } => CliError::Malformed(e.to_string()),
            e => CliError::Internal(e.to_string()),
        }
    }
}

impl From<FtftError> for CliError {
    fn from(e: FtftError) -> Self {
        match e {
            FtftError::Unstable(..) => CliError::Unstable(e.to_string()),
            FtftError::Parse(_) | FtftError::Invalid(_) | FtftError::MissingUnit | FtftError::SingularAlpha => {
                CliError::Malformed(e.to_string())
            }
            e => CliError::Internal(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "fgivental", version, about = "Exact F-Givental actions, flat F-manifold reconstruction and κ-relations")]
pub struct Cli {
    /// TOML file whose keys override the matching flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// List the stable trees of type (g, 1+n).
    Trees(TreesArgs),
    /// Act with a group element on an F-TFT and write the classes.
    Act(ActArgs),
    /// Run a named property suite.
    Verify(VerifyArgs),
    /// Reconstruct R, T and compact-type classes from a conformal potential.
    Reconstruct(ReconstructArgs),
    /// Genus-0 κ-relation certificates as CSV.
    RspinRelations(RelationsArgs),
    /// The coefficients s_1…s_M.
    RspinS(SArgs),
    /// A genus-0 integral of ψ and κ classes.
    Oracle(OracleArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeFormat {
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct TreesArgs {
    /// Genus.
    #[arg(long)]
    pub g: u32,
    /// Number of non-root leaves.
    #[arg(long)]
    pub n: u32,
    /// Print only the number of trees.
    #[arg(long)]
    pub count: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TreeFormat,
}

#[derive(Args, Debug)]
pub struct ActArgs {
    /// F-TFT spec (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Group element (TOML with `dim`, `r`, `t`).
    #[arg(long, conflicts_with_all = ["r_json", "t_json"])]
    pub element: Option<PathBuf>,
    /// R as JSON `{"dim", "coeffs"}`, the format `reconstruct` writes.
    #[arg(long = "R", requires = "t_json")]
    pub r_json: Option<PathBuf>,
    /// T as JSON `{"dim", "coeffs"}`.
    #[arg(long = "T", requires = "r_json")]
    pub t_json: Option<PathBuf>,
    /// Genus.
    #[arg(long)]
    pub g: u32,
    /// Number of non-root leaves.
    #[arg(long)]
    pub n: u32,
    /// Use the rank-1 closed form instead of the tree sum.
    #[arg(long)]
    pub closed_form: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    GroupLaws,
    Theta,
    Rspin,
    Flatf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest 3g−2+n for the group-law checks.
    #[arg(long, default_value_t = 3)]
    pub bound: u32,
    #[arg(long, default_value_t = 8)]
    pub max_points: u32,
    #[arg(long, default_value_t = 2)]
    pub r: u32,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Potential (TOML).
    #[arg(long)]
    pub potential: PathBuf,
    /// Truncation order D of R and T.
    #[arg(long, default_value_t = 6)]
    pub order: usize,
    /// Write classes for every stable (g, n) with 1 ≤ 3g−2+n ≤ bound.
    #[arg(long, default_value_t = 2)]
    pub bound: u32,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RelationsArgs {
    /// The spin parameter r ≥ 2.
    #[arg(long)]
    pub r: u32,
    /// Genus.
    #[arg(long, default_value_t = 0)]
    pub g: u32,
    /// Largest total number of marked points.
    #[arg(long)]
    pub max_points: u32,
    /// Check each strict certificate against all complementary monomials.
    #[arg(long)]
    pub verify: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SArgs {
    /// The spin parameter r ≥ 2.
    #[arg(long)]
    pub r: u32,
    /// Number of coefficients.
    #[arg(long = "M")]
    pub m: usize,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Total number of marked points.
    #[arg(long)]
    pub n: u32,
    /// ψ exponents, one per point.
    #[arg(long, value_delimiter = ',')]
    pub psi: Vec<u32>,
    /// κ indices; repeat an index for powers.
    #[arg(long, value_delimiter = ',')]
    pub kappa: Vec<u32>,
}

/// Keys accepted by `--config`; each overrides the flag of the same name.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub order: Option<usize>,
    pub bound: Option<u32>,
    pub seed: Option<u64>,
    pub max_points: Option<u32>,
    pub r: Option<u32>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<TreeFormat>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Internal(format!("config {}: {e}", path.display())))
    }

    fn apply(&self, cmd: &mut Command) {
        match cmd {
            Command::Trees(a) => set(&mut a.format, self.format),
            Command::Act(a) => set_opt(&mut a.out, &self.out),
            Command::Verify(a) => {
                set(&mut a.seed, self.seed);
                set(&mut a.bound, self.bound);
                set(&mut a.max_points, self.max_points);
                set(&mut a.r, self.r);
            }
            Command::Reconstruct(a) => {
                set(&mut a.order, self.order);
                set(&mut a.bound, self.bound);
                if let Some(o) = &self.out {
                    a.out = o.clone();
                }
            }
            Command::RspinRelations(a) => {
                set(&mut a.r, self.r);
                set(&mut a.max_points, self.max_points);
                set_opt(&mut a.out, &self.out);
            }
            Command::RspinS(a) => set(&mut a.r, self.r),
            Command::Oracle(_) => {}
        }
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
    if v.is_some() {
        slot.clone_from(v);
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cmd = cli.command;
    let mut threads = std::env::var("FGIVENTAL_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    if let Some(path) = &cli.config {
        let cfg = RunConfig::load(path)?;
        cfg.apply(&mut cmd);
        threads = cfg.threads.or(threads);
    }
    if let Some(n) = threads {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match cmd {
        Command::Trees(a) => cmd_trees(&a),
        Command::Act(a) => cmd_act(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::RspinRelations(a) => cmd_rspin_relations(&a),
        Command::RspinS(a) => cmd_rspin_s(&a),
        Command::Oracle(a) => cmd_oracle(&a),
    }
}

pub fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn cmd_trees(a: &TreesArgs) -> Result<(), CliError> {
    let list = trees::enumerate(a.g, a.n)?;
    if a.count {
        println!("{}", list.len());
        return Ok(());
    }
    for t in &list {
        match a.format {
            TreeFormat::Json => println!("{}", t.to_json()),
            TreeFormat::Text => {
                let v: Vec<String> = t.genera.iter().map(|g| g.to_string()).collect();
                let e: Vec<String> = t.edges.iter().map(|(c, p)| format!("{c}->{p}")).collect();
                let l: Vec<String> = t.leaves.iter().map(|(lab, v)| format!("{lab}@{v}")).collect();
                println!("root={} genera=[{}] edges=[{}] leaves=[{}] aut={}", t.root, v.join(","), e.join(","), l.join(","), trees::aut_order(t));
            }
        }
    }
    Ok(())
}

fn rat_rows(v: &toml::Value, what: &str) -> Result<Vec<Vec<Rat>>, CliError> {
    let bad = || CliError::Malformed(format!("{what} must be an array of arrays"));
    v.as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|x| toml_rat(x).map_err(|e| CliError::Malformed(e.to_string())))
                .collect()
        })
        .collect()
}

/// TOML keys: `dim`, `r` (the matrices R_0…R_D) and `t` (the vectors T_0…T_D).
pub fn parse_element(text: &str) -> Result<GiventalElement, CliError> {
    let v: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Malformed(e.to_string()))?;
    let dim = v
        .get("dim")
        .and_then(toml::Value::as_integer)
        .filter(|&d| d > 0)
        .ok_or_else(|| CliError::Malformed("dim must be a positive integer".into()))? as usize;
    let r = v.get("r").ok_or_else(|| CliError::Malformed("missing r".into()))?;
    let t = v.get("t").ok_or_else(|| CliError::Malformed("missing t".into()))?;
    let mats = r
        .as_array()
        .ok_or_else(|| CliError::Malformed("r must be a list of matrices".into()))?
        .iter()
        .map(|m| rat_rows(m, "r").map(Mat::from_rows))
        .collect::<Result<Vec<_>, _>>()?;
    let r = SeriesMat::new(dim, mats).map_err(|e| CliError::Malformed(e.to_string()))?;
    let t = SeriesVec::new(dim, rat_rows(t, "t")?).map_err(|e| CliError::Malformed(e.to_string()))?;
    Ok(GiventalElement::new(r, t)?)
}

fn json_rats(v: &Value, what: &str) -> Result<Vec<Rat>, CliError> {
    let bad = || CliError::Malformed(format!("{what}: expected an array of rationals"));
    v.as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|x| match x {
            Value::String(s) => parse_rat(s).map_err(|e| CliError::Malformed(e.to_string())),
            Value::Number(n) => n.as_i64().map(|i| Rat::from_integer(i.into())).ok_or_else(bad),
            _ => Err(bad()),
        })
        .collect()
}

fn json_series(text: &str, what: &str) -> Result<(usize, Vec<Value>), CliError> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::Malformed(format!("{what}: {e}")))?;
    let dim = v
        .get("dim")
        .and_then(Value::as_u64)
        .filter(|&d| d > 0)
        .ok_or_else(|| CliError::Malformed(format!("{what}: dim must be a positive integer")))?;
    let coeffs = v
        .get("coeffs")
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::Malformed(format!("{what}: missing coeffs")))?;
    Ok((dim as usize, coeffs.clone()))
}

/// R and T from the JSON written by `reconstruct`.
pub fn parse_element_json(r_text: &str, t_text: &str) -> Result<GiventalElement, CliError> {
    let (rd, rc) = json_series(r_text, "R")?;
    let (td, tc) = json_series(t_text, "T")?;
    let mats = rc
        .iter()
        .map(|m| {
            let rows = m.as_array().ok_or_else(|| CliError::Malformed("R: coefficient must be a matrix".into()))?;
            Ok(Mat::from_rows(rows.iter().map(|r| json_rats(r, "R")).collect::<Result<_, CliError>>()?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let vecs = tc.iter().map(|v| json_rats(v, "T")).collect::<Result<Vec<_>, _>>()?;
    let r = SeriesMat::new(rd, mats).map_err(|e| CliError::Malformed(e.to_string()))?;
    let t = SeriesVec::new(td, vecs).map_err(|e| CliError::Malformed(e.to_string()))?;
    Ok(GiventalElement::new(r, t)?)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

/// JSON lines of one slice entry, each term tagged with ν and the inputs.
fn entry_lines(nu: usize, inputs: &[usize], e: &TautExpr, out: &mut String) {
    if e.terms.is_empty() {
        return;
    }
    for line in e.to_text().lines() {
        let mut v: Value = serde_json::from_str(line).expect("to_text emits JSON");
        v["nu"] = json!(nu);
        v["inputs"] = json!(inputs);
        out.push_str(&v.to_string());
        out.push('\n');
    }
}

/// Every nonzero entry of a slice as JSON lines, in key order.
pub fn slice_jsonl(s: &givental::Slice) -> String {
    let mut out = String::new();
    for ((nu, mu), e) in &s.entries {
        entry_lines(*nu, mu, e, &mut out);
    }
    out
}

pub fn cmd_act(a: &ActArgs) -> Result<(), CliError> {
    let spec = AlgebraSpec::from_toml(&read(&a.spec)?)?;
    let elem = match (&a.element, &a.r_json, &a.t_json) {
        (Some(p), _, _) => parse_element(&read(p)?)?,
        (None, Some(r), Some(t)) => parse_element_json(&read(r)?, &read(t)?)?,
        _ => return Err(CliError::Malformed("give --element or both --R and --T".into())),
    };
    if !is_stable(a.g, a.n) {
        return Err(TreeError::Unstable { g: a.g, n: a.n }.into());
    }
    let mut out = String::new();
    if a.closed_form {
        let one = Rat::from_integer(1.into());
        if spec.dim != 1 || spec.c[0][0][0] != one || spec.alpha[0] != one {
            return Err(CliError::Internal("--closed-form needs the trivial rank-1 spec (∂·∂ = ∂, α = ∂)".into()));
        }
        let d = moduli_dim(a.g, a.n) as usize;
        if elem.r.order() < d || elem.t.order() < d + 1 {
            return Err(GiventalError::Truncated { needed: d + 1, have: elem.t.order() }.into());
        }
        let r: Vec<Rat> = elem.r.coeffs.iter().map(|m| m.get(0, 0).clone()).collect();
        let logr = givental::scalar_log(&r);
        let h: Vec<Rat> = givental::hatt(&elem.t, &spec)?.into_iter().map(|v| v[0].clone()).collect();
        let e = givental::rank1_closed_form(&logr[..d.min(logr.len())], &h, a.g, a.n)?;
        entry_lines(0, &vec![0; a.n as usize], &e, &mut out);
    } else {
        out = slice_jsonl(&givental::act_on_tft(&elem, &spec, a.g, a.n)?);
    }
    emit(a.out.as_deref(), &out)
}

fn stable_types(lo: i64, hi: i64) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for g in 0..=(hi as u32).div_ceil(3) {
        for n in 0..=(hi as u32 + 2) {
            let d = moduli_dim(g, n);
            if is_stable(g, n) && d >= lo && d <= hi {
                out.push((g, n));
            }
        }
    }
    out
}

fn check(ok: bool, what: String, failures: &mut Vec<String>) {
    println!("{} {what}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        failures.push(what);
    }
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<(), CliError> {
    let mut failures = Vec::new();
    match a.suite {
        Suite::GroupLaws => verify_group_laws(a, &mut failures)?,
        Suite::Theta => verify_theta(a, &mut failures)?,
        Suite::Rspin => verify_rspin(a, &mut failures)?,
        Suite::Flatf => verify_flatf(&mut failures)?,
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failures.join("; ")))
    }
}

fn verify_group_laws(a: &VerifyArgs, failures: &mut Vec<String>) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for dim in [1usize, 2] {
        let pairs: Vec<_> = (0..20)
            .map(|_| (givental::random_element(&mut rng, dim, 5).r, givental::random_element(&mut rng, dim, 5).r))
            .collect();
        let defects: Vec<usize> =
            pairs.par_iter().map(|(x, y)| givental::edge_cocycle_defect(x, y)).collect::<Result<_, _>>()?;
        check(defects.iter().all(|&d| d == 0), format!("edge cocycle, dim {dim}, 20 pairs"), failures);
    }
    let types = stable_types(1, a.bound as i64);
    let mut cases = Vec::new();
    for dim in [1usize, 2] {
        // In dimension 2 the input tuples grow as 2^n; keep n ≤ 3.
        for &(g, n) in types.iter().filter(|t| dim == 1 || t.1 <= 3) {
            let order = moduli_dim(g, n) as usize + 1;
            let x = givental::random_element(&mut rng, dim, order);
            let y = givental::random_element(&mut rng, dim, order);
            cases.push((dim, g, n, x, y));
        }
    }
    let results: Vec<(bool, bool)> = cases
        .par_iter()
        .map(|(dim, g, n, x, y)| -> Result<_, CliError> {
            let spec = if *dim == 1 {
                AlgebraSpec::rank_one(Rat::new(2.into(), 1.into()), Rat::new((-3).into(), 2.into()))
            } else {
                AlgebraSpec::diagonal(vec![Rat::new(2.into(), 1.into()), Rat::new((-1).into(), 3.into())])
            };
            let (l, r) = givental::composition_sides(x, y, &spec, *g, *n)?;
            let (sl, sr) = givental::semidirect_sides(&x.r, &y.t, &spec, *g, *n)?;
            Ok((l.same_classes(&r), sl.same_classes(&sr)))
        })
        .collect::<Result<_, _>>()?;
    for ((dim, g, n, _, _), (comp, semi)) in cases.iter().zip(results) {
        check(comp, format!("composition, dim {dim}, (g,n) = ({g},{n})"), failures);
        check(semi, format!("semidirect law, dim {dim}, (g,n) = ({g},{n})"), failures);
    }
    Ok(())
}

fn verify_theta(a: &VerifyArgs, failures: &mut Vec<String>) -> Result<(), CliError> {
    let mut cases = Vec::new();
    for pts in 5..=a.max_points {
        for k in 1..=(pts - 3) / 2 {
            cases.push((k, pts));
        }
    }
    let results: Vec<(u32, u32, bool)> = cases
        .par_iter()
        .map(|&(k, pts)| -> Result<_, CliError> {
            let t = theta_class(k, pts)?;
            Ok((k, pts, pair_with_all(&t, 2 * k)?.iter().all(|(_, v)| v == &Rat::from_integer(0.into()))))
        })
        .collect::<Result<_, _>>()?;
    for (k, pts, ok) in results {
        check(ok, format!("θ_{} vanishes on M̄_0,{pts}", 2 * k), failures);
    }
    Ok(())
}

fn verify_rspin(a: &VerifyArgs, failures: &mut Vec<String>) -> Result<(), CliError> {
    let r = a.r;
    check(rspin::factorial_series_check(r as i64, 12), format!("factorial series, r = {r}"), failures);
    let certs = rspin::certificates_up_to(r, 0, a.max_points, true)?;
    let strict: Vec<_> = certs.iter().filter(|c| c.status == rspin::CertStatus::StrictVanishing).collect();
    let ok = strict.iter().all(|c| c.verified == Some(true));
    check(ok, format!("{} strict genus-0 certificates, r = {r}, ≤ {} points", strict.len(), a.max_points), failures);
    let v = rspin::crstar_genus0_integral(r)?;
    let ok = v == rspin::crstar_genus0_from_gluing(r)? && v == rspin::crstar_genus0_from_class(r)?;
    check(ok, format!("c^(r,*) genus-0 integral = {v}"), failures);
    Ok(())
}

fn verify_flatf(failures: &mut Vec<String>) -> Result<(), CliError> {
    for r in 2..=4u32 {
        let j = FlatFJet::rspin(r)?;
        check(j.check().is_ok(), format!("WDVV and unit, r-spin r = {r}"), failures);
        check(fflat::homogeneity_check(&j)?.is_homogeneous(), format!("homogeneity, r = {r}"), failures);
        let f = fflat::symbolic_frame_1d(&j)?;
        let d = f.direction();
        let (rr, ups, that) = fflat::rspin_closed_fields(r, 8);
        let ok = fflat::all_vanish(&fflat::r_equation_residual(&d, &rr, &fflat::d_series(&rr, 0)))
            && fflat::that_residual(&d, &that, &fflat::d_vec_series(&that, 0), &rr).iter().flatten().all(|x| x.is_zero())
            && fflat::vacuum_residual(&d, &ups, &fflat::d_vec_series(&ups, 0)).iter().flatten().all(|x| x.is_zero());
        check(ok, format!("R, T̂ and vacuum equations, r = {r}"), failures);
        let (_, rec) = fflat::reconstruct_at_base(&j, 8)?;
        let ok = rec.element == rspin::rspin_element(r, 8)?;
        check(ok, format!("conformal reconstruction, r = {r}"), failures);
    }
    Ok(())
}

fn series_mat_json(s: &SeriesMat) -> Value {
    let coeffs: Vec<Vec<Vec<String>>> =
        s.coeffs.iter().map(|m| m.to_rows().iter().map(|r| r.iter().map(|x| x.to_string()).collect()).collect()).collect();
    json!({"dim": s.dim, "order": s.order(), "coeffs": coeffs})
}

fn series_vec_json(s: &SeriesVec) -> Value {
    let coeffs: Vec<Vec<String>> = s.coeffs.iter().map(|v| v.iter().map(|x| x.to_string()).collect()).collect();
    json!({"dim": s.dim, "order": s.order(), "coeffs": coeffs})
}

pub fn cmd_reconstruct(a: &ReconstructArgs) -> Result<(), CliError> {
    let jet = FlatFJet::from_toml(&read(&a.potential)?)?;
    let wdvv = fflat::wdvv_residual(&jet);
    if !wdvv.is_empty() {
        for (idx, p) in &wdvv {
            eprintln!("WDVV residual {idx:?}: {p}");
        }
        return Err(FflatError::Wdvv(wdvv.len()).into());
    }
    jet.check()?;
    let order = a.order.max(a.bound as usize + 1);
    let (spec, rec) = fflat::reconstruct_at_base(&jet, order)?;
    fs::create_dir_all(&a.out)?;
    let r = rec.element.r.truncate(a.order);
    let t = rec.element.t.truncate(a.order);
    write_atomic(&a.out.join("R.json"), &format!("{}\n", series_mat_json(&r)))?;
    write_atomic(&a.out.join("T.json"), &format!("{}\n", series_vec_json(&t)))?;
    write_atomic(&a.out.join("Upsilon.json"), &format!("{}\n", series_vec_json(&rec.upsilon.truncate(a.order))))?;
    let types = stable_types(1, a.bound as i64);
    let slices: Vec<_> = types
        .par_iter()
        .map(|&(g, n)| givental::act_on_tft(&rec.element, &spec, g, n))
        .collect::<Result<_, _>>()?;
    let out: String = slices.iter().map(slice_jsonl).collect();
    write_atomic(&a.out.join("classes.jsonl"), &out)?;
    // Genus-0 integrals of the reconstructed classes on basis inputs.
    let mut ints = String::new();
    for s in slices.iter().filter(|s| s.g == 0) {
        for ((nu, mu), e) in &s.entries {
            let v = integrate_tautexpr(e)?;
            ints.push_str(&format!("{}\n", json!({"n": s.n, "nu": nu, "inputs": mu, "integral": v.to_string()})));
        }
    }
    write_atomic(&a.out.join("genus0_integrals.jsonl"), &ints)
}

pub fn cmd_rspin_relations(a: &RelationsArgs) -> Result<(), CliError> {
    let certs = rspin::certificates_up_to(a.r, a.g, a.max_points, a.verify)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(["r", "g", "n", "m", "status", "verified", "witness-count"]).map_err(csv_err)?;
    for c in &certs {
        let verified = c.verified.map(|b| b.to_string()).unwrap_or_default();
        w.write_record([
            c.r.to_string(),
            c.g.to_string(),
            c.n.to_string(),
            c.m.to_string(),
            c.status.to_string(),
            verified,
            c.witnesses.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    emit(a.out.as_deref(), &String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn cmd_rspin_s(a: &SArgs) -> Result<(), CliError> {
    if a.r < 2 {
        return Err(RspinError::BadR { r: a.r as i64, min: 2 }.into());
    }
    for (i, s) in rspin::s_coeffs(a.r as i64, a.m).iter().enumerate() {
        println!("s_{} = {s}", i + 1);
    }
    Ok(())
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<(), CliError> {
    if a.n < 3 {
        return Err(TreeError::Unstable { g: 0, n: a.n.saturating_sub(1) }.into());
    }
    let mut psi = a.psi.clone();
    if psi.len() > a.n as usize {
        return Err(CliError::Internal(format!("{} ψ exponents for {} points", psi.len(), a.n)));
    }
    psi.resize(a.n as usize, 0);
    println!("{}", kappa_psi_integral(&psi, &a.kappa));
    Ok(())
}
