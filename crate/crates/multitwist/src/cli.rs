//! Batch pipeline behind the `multitwist` binary.
//!
//! Every command returns an [`Outcome`] instead of printing, so the same
//! code path serves the binary and the tests.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bkn::{self, BknCandidate, DecideOptions, Provenance, Verdict, VerifyReport};
use crate::config_graph::{
    anosov_classify, bicoloring, bipartite_double_cover, parse_input, parse_validate, AnosovClass, ConfigError,
    ConfigGraph, CoverMap, InputFile,
};
use crate::cube_kernel::salvetti;
use crate::cubulation::{self, Cubulation, CubulationError, DEFAULT_BUDGET};
use crate::current_solver::CurrentSolution;
use crate::surface_model::build_model;

pub const EXIT_NPC: i32 = 0;
pub const EXIT_NOT_NPC: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_INPUT: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "multitwist", version, about = "Nonpositive curvature and special cubulations of multitwist mapping tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide whether the mapping torus is nonpositively curved.
    Decide {
        path: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Re-run verification from the serialized report and compare.
        #[arg(long)]
        recheck: bool,
        #[arg(long)]
        json: bool,
        /// Workspace directory for report.json and config.dot.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dot_dir: Option<PathBuf>,
    },
    /// Build and certify the special cube complex.
    Cubulate {
        path: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Cell budget for every stage of the cover tower.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        /// Highest cube dimension materialized in the RAAG complex.
        #[arg(long, default_value_t = 3)]
        dim_cap: usize,
        #[arg(long)]
        json: bool,
        #[arg(long, default_value = "multitwist-out")]
        out: PathBuf,
        #[arg(long)]
        dot_dir: Option<PathBuf>,
    },
    /// Copy an artifact out of a workspace written by decide or cubulate.
    Export {
        workspace: PathBuf,
        what: Artifact,
        #[arg(long)]
        dot_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Artifact {
    ConfigDot,
    CrossingGraph,
    Complex,
    Certificate,
    Census,
    Report,
}

impl Artifact {
    pub fn file_name(self) -> &'static str {
        match self {
            Artifact::ConfigDot => "config.dot",
            Artifact::CrossingGraph => "crossing.dot",
            Artifact::Complex => "complex.json",
            Artifact::Certificate => "certificate.json",
            Artifact::Census => "census.json",
            Artifact::Report => "report.json",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn input_error(kind: &str, detail: Value) -> Self {
        let diag = json!({"error": kind, "detail": detail});
        Outcome { code: EXIT_INPUT, stdout: String::new(), stderr: diag.to_string() + "\n" }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecisionReport {
    pub input_digest: String,
    pub input_kind: &'static str,
    /// Normalized (bipartite) graph the decision was made on, in input format.
    pub graph: Option<Value>,
    pub double_cover: Option<CoverMap>,
    pub matrix: Option<[[i64; 2]; 2]>,
    pub anosov: Option<AnosovClass>,
    pub verdict: Verdict,
    pub provenance: Provenance,
    pub tol: f64,
    pub candidate: Option<BknCandidate>,
    pub residuals: Option<VerifyReport>,
    pub current: Option<CurrentSolution>,
    pub perturbation_s: Option<f64>,
    pub census: Option<Value>,
    pub certificate: Option<String>,
    pub diagnostics: Vec<String>,
}

pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::NpcCertified => EXIT_NPC,
        Verdict::NotNpc => EXIT_NOT_NPC,
        Verdict::Unknown => EXIT_UNKNOWN,
    }
}

/// FNV-1a, hex.
pub fn digest(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// The graph in the input file schema.
pub fn graph_json(g: &ConfigGraph) -> Value {
    let vs: Vec<Value> = g.vertices.iter().map(|v| json!({"id": v.id, "chi": v.chi})).collect();
    let es: Vec<Value> = g
        .edges
        .iter()
        .map(|e| json!({"id": e.id, "ends": [g.vertices[e.ends[0]].id, g.vertices[e.ends[1]].id], "b": e.b}))
        .collect();
    json!({"vertices": vs, "edges": es})
}

fn config_error_json(e: &ConfigError) -> Value {
    match e {
        ConfigError::Parse(s) => json!({"parse": s}),
        ConfigError::Invalid(vs) => json!({"violations": vs.iter().map(|v| v.to_string()).collect::<Vec<_>>()}),
        ConfigError::NotUnimodular(d) => json!({"not_unimodular": d}),
    }
}

/// Decision on parsed input. Non-bipartite graphs are replaced by their
/// bipartite double cover first.
pub fn decide_text(text: &str, tol: f64) -> Result<(DecisionReport, Option<ConfigGraph>), Outcome> {
    let input = parse_input(text).map_err(|e| Outcome::input_error("invalid input", config_error_json(&e)))?;
    let base = DecisionReport {
        input_digest: digest(text.as_bytes()),
        input_kind: "graph",
        graph: None,
        double_cover: None,
        matrix: None,
        anosov: None,
        verdict: Verdict::Unknown,
        provenance: Provenance::None,
        tol,
        candidate: None,
        residuals: None,
        current: None,
        perturbation_s: None,
        census: None,
        certificate: None,
        diagnostics: Vec::new(),
    };
    match input {
        InputFile::Anosov(m) => {
            let class = anosov_classify(m).map_err(|e| Outcome::input_error("invalid input", config_error_json(&e)))?;
            let mut r = DecisionReport { input_kind: "matrix", matrix: Some(m), anosov: Some(class), ..base };
            if class == AnosovClass::Anosov {
                r.verdict = Verdict::NotNpc;
                r.provenance = Provenance::AnosovRule;
            } else {
                r.diagnostics.push("torus bundle with non-Anosov monodromy is outside the multitwist decision".into());
            }
            Ok((r, None))
        }
        InputFile::Graph(g0) => {
            let (g, cover) = if bicoloring(&g0).is_some() {
                (g0, None)
            } else {
                let (c, map) = bipartite_double_cover(&g0);
                (c, Some(map))
            };
            let mut r = DecisionReport { graph: Some(graph_json(&g)), double_cover: cover, ..base };
            match bkn::decide_npc(&g, DecideOptions { tol, ..DecideOptions::default() }) {
                Ok(d) => {
                    r.verdict = d.verdict;
                    r.provenance = d.provenance;
                    r.candidate = d.candidate;
                    r.residuals = d.report;
                    r.current = d.current;
                    r.perturbation_s = d.perturbation_s;
                    r.diagnostics = d.diagnostics;
                }
                Err(e) => r.diagnostics.push(e.to_string()),
            }
            Ok((r, Some(g)))
        }
    }
}

/// Re-derive the verdict from a serialized report alone. Returns the
/// recomputed verdict, or a reason the report cannot stand.
pub fn recheck_report(report: &Value) -> Result<Verdict, String> {
    let field = |k: &str| report.get(k).filter(|v| !v.is_null());
    let provenance: Provenance = match field("provenance").and_then(Value::as_str) {
        Some("current+perturbation") => Provenance::CurrentPerturbation,
        Some("numeric-search") => Provenance::NumericSearch,
        Some("all-positive-rule") => Provenance::AllPositiveRule,
        Some("anosov-rule") => Provenance::AnosovRule,
        Some("none") => Provenance::None,
        other => return Err(format!("unknown provenance {other:?}")),
    };
    let graph = || -> Result<ConfigGraph, String> {
        let gv = field("graph").ok_or("report has no graph")?;
        parse_validate(&gv.to_string()).map_err(|e| e.to_string())
    };
    match provenance {
        Provenance::AnosovRule => {
            let m: [[i64; 2]; 2] =
                serde_json::from_value(field("matrix").ok_or("report has no matrix")?.clone()).map_err(|e| e.to_string())?;
            match anosov_classify(m).map_err(|e| e.to_string())? {
                AnosovClass::Anosov => Ok(Verdict::NotNpc),
                AnosovClass::NotAnosov => Err("matrix is not Anosov".into()),
            }
        }
        Provenance::AllPositiveRule => {
            let g = graph()?;
            let s = g.edges[0].b.signum();
            if g.edges.iter().all(|e| e.b.signum() == s) {
                Ok(Verdict::NotNpc)
            } else {
                Err("edge signs are mixed".into())
            }
        }
        Provenance::CurrentPerturbation | Provenance::NumericSearch => {
            let g = graph()?;
            let tol = field("tol").and_then(Value::as_f64).ok_or("report has no tolerance")?;
            let c = field("candidate").ok_or("report has no candidate")?;
            let t: Vec<f64> = serde_json::from_value(c["t"].clone()).map_err(|e| e.to_string())?;
            let omega: Vec<[f64; 2]> = serde_json::from_value(c["omega"].clone()).map_err(|e| e.to_string())?;
            if t.len() != g.num_vertices() || omega.len() != g.num_edges() {
                return Err("candidate does not fit the graph".into());
            }
            let rep = bkn::verify(&g, &BknCandidate { t, omega }, tol).map_err(|e| e.to_string())?;
            if rep.pass {
                Ok(Verdict::NpcCertified)
            } else {
                Err(format!("candidate fails verification, max residual {:e}", rep.max_residual))
            }
        }
        Provenance::None => Ok(Verdict::Unknown),
    }
}

fn read_input(path: &Path) -> Result<String, Outcome> {
    fs::read_to_string(path).map_err(|e| Outcome::input_error("unreadable input", json!(format!("{}: {e}", path.display()))))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| format!("{}: {e}", p.display()))
}

fn pretty<T: Serialize>(x: &T) -> String {
    serde_json::to_string_pretty(x).expect("report types serialize") + "\n"
}

fn summary(r: &DecisionReport) -> String {
    let verdict = serde_json::to_value(r.verdict).unwrap();
    let prov = serde_json::to_value(r.provenance).unwrap();
    let mut s = format!("verdict: {}\nprovenance: {}\n", verdict.as_str().unwrap(), prov.as_str().unwrap());
    if let Some(rep) = &r.residuals {
        s += &format!("max residual: {:e}\n", rep.max_residual);
    }
    if let Some(c) = &r.double_cover {
        if !c.input_already_bipartite {
            s += "decided on the bipartite double cover\n";
        }
    }
    for d in &r.diagnostics {
        s += &format!("note: {d}\n");
    }
    s
}

pub fn cmd_decide(path: &Path, tol: f64, recheck: bool, as_json: bool, out: Option<&Path>, dot_dir: Option<&Path>) -> Outcome {
    let text = match read_input(path) {
        Ok(t) => t,
        Err(o) => return o,
    };
    let (report, g) = match decide_text(&text, tol) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let mut code = exit_code(report.verdict);
    let mut stderr = String::new();
    if recheck {
        let v = serde_json::to_value(&report).unwrap();
        match recheck_report(&v) {
            Ok(again) if again == report.verdict => stderr += "recheck: agree\n",
            Ok(again) => {
                stderr += &format!("recheck: disagree ({again:?})\n");
                code = EXIT_UNKNOWN;
            }
            Err(e) => {
                stderr += &format!("recheck: disagree ({e})\n");
                code = EXIT_UNKNOWN;
            }
        }
    }
    let mut targets: Vec<(&Path, bool)> = Vec::new();
    if let Some(o) = out {
        targets.push((o, true));
    }
    if let Some(d) = dot_dir {
        targets.push((d, false));
    }
    for (dir, with_report) in targets {
        let mut res = Ok(());
        if with_report {
            res = res.and(write_file(dir, Artifact::Report.file_name(), &pretty(&report)));
        }
        if let Some(g) = &g {
            res = res.and(write_file(dir, Artifact::ConfigDot.file_name(), &g.to_dot()));
        }
        if let Err(e) = res {
            return Outcome { code: EXIT_INPUT, stdout: String::new(), stderr: stderr + &format!("write failed: {e}\n") };
        }
    }
    let stdout = if as_json { pretty(&report) } else { summary(&report) };
    Outcome { code, stdout, stderr }
}

#[derive(Clone, Copy, Debug)]
pub struct CubulateFlags<'a> {
    pub tol: f64,
    pub budget: usize,
    pub dim_cap: usize,
    pub json: bool,
    pub out: &'a Path,
    pub dot_dir: Option<&'a Path>,
}

pub fn cmd_cubulate(path: &Path, flags: CubulateFlags) -> Outcome {
    let text = match read_input(path) {
        Ok(t) => t,
        Err(o) => return o,
    };
    let (mut report, g) = match decide_text(&text, flags.tol) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let g = match g {
        Some(g) if report.verdict == Verdict::NpcCertified && report.provenance == Provenance::CurrentPerturbation => g,
        _ => {
            let v = serde_json::to_value(report.verdict).unwrap();
            let p = serde_json::to_value(report.provenance).unwrap();
            let code = if report.verdict == Verdict::NotNpc { EXIT_NOT_NPC } else { EXIT_UNKNOWN };
            return Outcome {
                code,
                stdout: String::new(),
                stderr: format!(
                    "refusing to cubulate: needs a nondegenerate current solution; decide gives {} via {} (run `multitwist decide`)\n",
                    v.as_str().unwrap(),
                    p.as_str().unwrap()
                ),
            };
        }
    };
    let m = build_model(&g);
    let mut files: Vec<(&str, String)> = vec![(Artifact::ConfigDot.file_name(), g.to_dot())];
    let mut stderr = String::new();
    let summary_line;
    match cubulation::cubulate(&m, &g, flags.budget) {
        Ok((Cubulation::Symbolic(sc), _)) => {
            stderr += &format!("materialization declined: n = {} > 0, symbolic census only\n", sc.n);
            let census = serde_json::to_value(&sc).unwrap();
            files.push((Artifact::Census.file_name(), pretty(&census)));
            report.census = Some(census);
            summary_line = format!("symbolic census, n = {}\n", sc.n);
        }
        Ok((Cubulation::Certified(cert), Some(fin))) => {
            let raag = salvetti(cert.generators, &cert.crossing_graph, flags.dim_cap);
            let mut cv = serde_json::to_value(&*cert).unwrap();
            cv["raag_cells"] = json!(raag.cell_count());
            cv["dim_cap"] = json!(flags.dim_cap);
            files.push((Artifact::Certificate.file_name(), pretty(&cv)));
            files.push((Artifact::Complex.file_name(), pretty(&fin)));
            files.push((Artifact::CrossingGraph.file_name(), cert.crossing_dot.clone()));
            files.push((Artifact::Census.file_name(), pretty(&cert.census)));
            report.census = Some(serde_json::to_value(&cert.census).unwrap());
            report.certificate = Some(Artifact::Certificate.file_name().into());
            summary_line = format!(
                "{}: tower degrees {:?}, final degree {}, {} hyperplanes\n",
                if cert.special { "SPECIAL" } else { "NOT SPECIAL" },
                cert.tower_degrees,
                cert.final_degree,
                cert.generators
            );
            if !cert.special {
                stderr += "final complex failed the specialness check\n";
            }
        }
        Ok((Cubulation::Certified(_), None)) => unreachable!("certified cubulation always carries its complex"),
        Err(e @ (CubulationError::Scope(_) | CubulationError::TowerBlowup { .. })) => {
            return Outcome { code: EXIT_UNKNOWN, stdout: String::new(), stderr: format!("{e}\n") };
        }
        Err(e) => return Outcome { code: EXIT_UNKNOWN, stdout: String::new(), stderr: format!("cubulation failed: {e}\n") },
    }
    files.push((Artifact::Report.file_name(), pretty(&report)));
    for (name, body) in &files {
        if let Err(e) = write_file(flags.out, name, body) {
            return Outcome { code: EXIT_INPUT, stdout: String::new(), stderr: format!("write failed: {e}\n") };
        }
        if let (Some(d), true) = (flags.dot_dir, name.ends_with(".dot")) {
            if let Err(e) = write_file(d, name, body) {
                return Outcome { code: EXIT_INPUT, stdout: String::new(), stderr: format!("write failed: {e}\n") };
            }
        }
    }
    let stdout = if flags.json { pretty(&report) } else { summary(&report) + &summary_line };
    Outcome { code: EXIT_NPC, stdout, stderr }
}

pub fn cmd_export(workspace: &Path, what: Artifact, dot_dir: Option<&Path>) -> Outcome {
    let src = workspace.join(what.file_name());
    let body = match fs::read_to_string(&src) {
        Ok(b) => b,
        Err(_) => {
            return Outcome::input_error(
                "missing artifact",
                json!({"workspace": workspace.display().to_string(), "artifact": what.file_name()}),
            )
        }
    };
    match dot_dir {
        Some(d) => match write_file(d, what.file_name(), &body) {
            Ok(()) => Outcome { code: 0, stdout: format!("{}\n", d.join(what.file_name()).display()), stderr: String::new() },
            Err(e) => Outcome { code: EXIT_INPUT, stdout: String::new(), stderr: format!("write failed: {e}\n") },
        },
        None => Outcome { code: 0, stdout: body, stderr: String::new() },
    }
}

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Decide { path, tol, recheck, json, out, dot_dir } => {
            cmd_decide(&path, tol, recheck, json, out.as_deref(), dot_dir.as_deref())
        }
        Command::Cubulate { path, tol, budget, dim_cap, json, out, dot_dir } => {
            cmd_cubulate(&path, CubulateFlags { tol, budget, dim_cap, json, out: &out, dot_dir: dot_dir.as_deref() })
        }
        Command::Export { workspace, what, dot_dir } => cmd_export(&workspace, what, dot_dir.as_deref()),
    }
}
