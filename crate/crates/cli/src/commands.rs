//! The six subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use carpetq_core::coding::{
    build_antichain, delta_k, l_map, length_weighted_mass, sequence_point,
    verify_maximal_antichain, AntichainOptions, FamilyRecord, SequenceOptions, SequencePoint,
    StageLog,
};
use carpetq_core::partition::{
    check_partition_words, diameter_bounds_hold, find_overlapping_squares,
};
use carpetq_core::quantizer::{
    ball_bound_check, draw_cloud, r_k_diagnostic, BallReport, QuantDiagnostics, QuantOptions,
    DEFAULT_FLOOR,
};
use carpetq_core::sum::{least_squares, LinearFit};
use carpetq_core::{
    check_separation, enumerate_lambda_k, partition_stats, validate_spec, Carpet, CarpetError,
    EnumOptions, PartitionLambdaK,
};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

use crate::config::{Format, RunConfig};
use crate::output::{line_chart, num, opt_num, write_csv, write_json, write_text, Series};
use crate::{CliError, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Partition,
    Antichain,
    Sequences,
    Quantize,
    Report,
}

pub struct Context {
    pub cfg: RunConfig,
    pub carpet: Carpet,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self, CliError> {
        let carpet = Carpet::new(cfg.spec.clone()).map_err(CarpetError::from)?;
        fs::create_dir_all(&out).map_err(|source| CliError::Io {
            path: out.clone(),
            source,
        })?;
        Ok(Context { cfg, carpet, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn enum_opts(&self) -> EnumOptions {
        EnumOptions {
            cap_words: self.cfg.cap_words,
        }
    }
}

/// Runs a subcommand. Failed checks end up in the outcome, not in the error.
pub fn run_command(cmd: Command, ctx: &Context) -> Result<Outcome, CliError> {
    let mut out = match cmd {
        Command::Validate => validate(ctx)?,
        Command::Partition => partition(ctx)?,
        Command::Antichain => antichain(ctx)?,
        Command::Sequences => sequences(ctx)?,
        Command::Quantize => quantize(ctx)?,
        Command::Report => report(ctx)?,
    };
    if ctx.cfg.wants(Format::Json) && cmd != Command::Report {
        let name = format!("failures_{}.json", command_name(cmd));
        out.written.push(write_json(
            &ctx.path(&name),
            &json!({ "failures": out.failures }),
        )?);
    }
    Ok(out)
}

fn command_name(cmd: Command) -> &'static str {
    match cmd {
        Command::Validate => "validate",
        Command::Partition => "partition",
        Command::Antichain => "antichain",
        Command::Sequences => "sequences",
        Command::Quantize => "quantize",
        Command::Report => "report",
    }
}

fn flag(b: bool) -> String {
    b.to_string()
}

fn validate(ctx: &Context) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let spec = &ctx.cfg.spec;
    let report = validate_spec(spec);
    let p = ctx.carpet.params();
    let separated = check_separation(spec);
    let s0_alt = p.s0_entropy_form(spec.m);
    o.check(
        "validate",
        None,
        "s0_forms_agree",
        (p.s0 - s0_alt).abs() <= 1e-12,
        || format!("s0 = {} but the entropy form gives {}", p.s0, s0_alt),
    );
    o.check("validate", None, "eta_le_q_max", p.eta <= p.q_max, || {
        format!("eta = {} exceeds q_max = {}", p.eta, p.q_max)
    });
    for c in report.checks.iter().filter(|c| !c.passed) {
        o.check("validate", None, c.name, false, || c.detail.clone());
    }

    let q: BTreeMap<String, String> =
        p.q.iter()
            .map(|(j, q)| (j.to_string(), q.to_string()))
            .collect();
    let params = json!({
        "theta": p.theta, "k0": p.k0, "gy": p.gy, "gx": p.gx, "q": q,
        "p_min": p.p_min.to_string(), "p_max": p.p_max.to_string(),
        "q_min": p.q_min.to_string(), "q_max": p.q_max.to_string(),
        "eta": p.eta.to_string(), "s0": p.s0, "hp": p.hp, "hq": p.hq,
        "c0": p.c0, "c1": p.c1, "delta": p.delta, "a1": p.a1, "a2": p.a2, "d0": p.d0,
        "ball_exponent": p.ball_exponent, "eps0": p.eps0, "d_ball": p.d_ball, "c_ball": p.c_ball,
    });
    if ctx.cfg.wants(Format::Json) {
        o.written.push(write_json(
            &ctx.path("validate.json"),
            &json!({
                "valid": report.is_valid(),
                "separated": separated,
                "checks": report.checks,
                "warnings": report.warnings,
                "params": params,
            }),
        )?);
    }
    if ctx.cfg.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = report
            .checks
            .iter()
            .map(|c| vec![c.name.to_string(), flag(c.passed), c.detail.clone()])
            .collect();
        o.written.push(write_csv(
            &ctx.path("validate.csv"),
            &["check", "passed", "detail"],
            &rows,
        )?);
    }
    println!("valid: {}, separated: {separated}", report.is_valid());
    println!("theta = {}, eta = {}, s0 = {}", p.theta, p.eta, p.s0);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(o)
}

#[derive(Serialize)]
struct PartitionRow {
    k: usize,
    phi_k: usize,
    xi_min: usize,
    xi_max: usize,
    eta_k: String,
    mass_sum_is_one: bool,
    checks: BTreeMap<&'static str, bool>,
    pass: bool,
}

fn partition_row(
    ctx: &Context,
    lk: &PartitionLambdaK,
    next: Option<usize>,
    o: &mut Outcome,
) -> PartitionRow {
    let c = &ctx.carpet;
    let k = lk.k;
    let stats = partition_stats(c, lk, next);
    let mut checks = BTreeMap::new();
    let mut pass = o.check(
        "partition",
        Some(k),
        "mass_sum_one",
        stats.mass_sum_is_one,
        || format!("masses sum to {}", lk.mass_sum()),
    );
    for b in &stats.checks {
        checks.insert(b.name, b.passed);
        pass &= o.check("partition", Some(k), b.name, b.passed, || b.detail.clone());
    }
    let bad = check_partition_words(c, lk);
    checks.insert("word_bounds", bad.is_empty());
    pass &= o.check("partition", Some(k), "word_bounds", bad.is_empty(), || {
        format!(
            "{} words violate the stopping rule or mass ratio, e.g. {}",
            bad.len(),
            lk.words[bad[0]]
        )
    });
    let overlap = find_overlapping_squares(c, lk);
    checks.insert("disjoint_interiors", overlap.is_none());
    pass &= o.check(
        "partition",
        Some(k),
        "disjoint_interiors",
        overlap.is_none(),
        || {
            let (a, b) = overlap.expect("failed");
            format!("{} and {} overlap", lk.words[a], lk.words[b])
        },
    );
    let diam = lk.words.iter().all(|w| diameter_bounds_hold(c, w));
    checks.insert("diameter_bounds", diam);
    pass &= o.check("partition", Some(k), "diameter_bounds", diam, || {
        "a square violates the diameter bounds".into()
    });
    PartitionRow {
        k,
        phi_k: lk.phi_k(),
        xi_min: lk.xi_min,
        xi_max: lk.xi_max,
        eta_k: lk.eta_k.to_string(),
        mass_sum_is_one: stats.mass_sum_is_one,
        checks,
        pass,
    }
}

fn partition(ctx: &Context) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let mut rows = Vec::new();
    let mut prev: Option<PartitionLambdaK> = None;
    for k in ctx.cfg.levels() {
        let lk = enumerate_lambda_k(&ctx.carpet, k, &ctx.enum_opts())?;
        if let Some(p) = prev.take() {
            rows.push(partition_row(ctx, &p, Some(lk.phi_k()), &mut o));
        }
        prev = Some(lk);
    }
    if let Some(p) = prev {
        rows.push(partition_row(ctx, &p, None, &mut o));
    }
    for r in &rows {
        println!(
            "k={} phi_k={} xi=[{}, {}] pass: {}",
            r.k, r.phi_k, r.xi_min, r.xi_max, r.pass
        );
    }
    let names = [
        "length_bounds",
        "count_bounds",
        "growth_bounds",
        "word_bounds",
        "disjoint_interiors",
        "diameter_bounds",
    ];
    if ctx.cfg.wants(Format::Csv) {
        let mut header = vec!["k", "phi_k", "xi_min", "xi_max", "eta_k", "mass_sum_is_one"];
        header.extend(names);
        header.push("pass");
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let mut v = vec![
                    r.k.to_string(),
                    r.phi_k.to_string(),
                    r.xi_min.to_string(),
                    r.xi_max.to_string(),
                    r.eta_k.clone(),
                    flag(r.mass_sum_is_one),
                ];
                v.extend(
                    names
                        .iter()
                        .map(|n| r.checks.get(n).map(|b| flag(*b)).unwrap_or_default()),
                );
                v.push(flag(r.pass));
                v
            })
            .collect();
        o.written
            .push(write_csv(&ctx.path("partition.csv"), &header, &table)?);
    }
    if ctx.cfg.wants(Format::Json) {
        o.written
            .push(write_json(&ctx.path("partition.json"), &rows)?);
    }
    Ok(o)
}

#[derive(Serialize)]
struct StageSummary<'a> {
    stage: usize,
    length: usize,
    gamma_count: usize,
    f_count: usize,
    g_count: usize,
    family_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    families: Option<&'a [FamilyRecord]>,
}

fn summarize(stages: &[StageLog], keep_families: bool) -> Vec<StageSummary<'_>> {
    stages
        .iter()
        .map(|s| StageSummary {
            stage: s.stage,
            length: s.length,
            gamma_count: s.gamma_count,
            f_count: s.f_count,
            g_count: s.g_count,
            family_count: s.families.len(),
            families: keep_families.then_some(s.families.as_slice()),
        })
        .collect()
}

fn antichain(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.carpet;
    let mut o = Outcome::default();
    let mut rows = Vec::new();
    let mut docs = Vec::new();
    let opts = AntichainOptions::default();
    for k in ctx.cfg.levels() {
        let lk = enumerate_lambda_k(c, k, &ctx.enum_opts())?;
        let a = match build_antichain(c, &lk, &opts) {
            Ok(a) => a,
            Err(
                e @ (CarpetError::Collision(_)
                | CarpetError::IncompleteFamily { .. }
                | CarpetError::Invariant(_)
                | CarpetError::SwapShape(_)),
            ) => {
                o.check("antichain", Some(k), "construction", false, || {
                    e.to_string()
                });
                println!("k={k} construction failed: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let report = verify_maximal_antichain(c, &a.words);
        let raw: Vec<_> = lk.words.iter().map(l_map).collect();
        let s8 = a.length_weighted_mass() == length_weighted_mass(&raw, &lk.masses);
        let d = delta_k(c, &a);
        let mut pass = o.check(
            "antichain",
            Some(k),
            "incomparable",
            report.incomparable,
            || {
                let (x, y) = report.violation.clone().unwrap_or_default();
                format!("{x} precedes {y}")
            },
        );
        pass &= o.check(
            "antichain",
            Some(k),
            "mass_sum_one",
            report.mass_is_one,
            || format!("masses sum to {}", report.mass_sum),
        );
        pass &= o.check("antichain", Some(k), "length_weighted_mass", s8, || {
            "sum lambda |w| changed under replacement".into()
        });
        pass &= o.check("antichain", Some(k), "delta_le_c1", d.within_c1, || {
            format!("Delta_k = {} > C1 = {}", d.delta, d.c1)
        });
        pass &= o.check(
            "antichain",
            Some(k),
            "family_delta_le_c1",
            d.families_within_c1,
            || {
                format!(
                    "a family has |F - G| / lambda(F) = {}",
                    d.worst_family_ratio
                )
            },
        );
        println!(
            "k={k} maximal: {}, mass: {} (exact), \u{394}_k \u{2264} C1: {}",
            report.is_maximal(),
            report.mass_sum,
            d.within_c1
        );
        let replaced: usize = a.stages.iter().map(|s| s.f_count).sum();
        let inserted: usize = a.stages.iter().map(|s| s.g_count).sum();
        rows.push(vec![
            k.to_string(),
            lk.phi_k().to_string(),
            a.len().to_string(),
            a.stages.len().to_string(),
            replaced.to_string(),
            inserted.to_string(),
            flag(report.is_maximal()),
            report.mass_sum.to_string(),
            flag(s8),
            num(d.delta),
            num(d.c1),
            num(d.worst_family_ratio),
            flag(pass),
        ]);
        docs.push(json!({
            "k": k,
            "phi_k": lk.phi_k(),
            "xi": a.xi,
            "l_min": a.l_min,
            "l_max": a.l_max,
            "verification": report,
            "length_weighted_mass_preserved": s8,
            "delta": d,
            "stages": summarize(&a.stages, k <= opts.word_log_max_k),
        }));
    }
    if ctx.cfg.wants(Format::Csv) {
        let header = [
            "k",
            "phi_k",
            "antichain_size",
            "stages",
            "replaced",
            "inserted",
            "maximal",
            "mass_sum",
            "length_weighted_mass_preserved",
            "delta_k",
            "c1",
            "worst_family_ratio",
            "pass",
        ];
        o.written
            .push(write_csv(&ctx.path("antichain.csv"), &header, &rows)?);
    }
    if ctx.cfg.wants(Format::Json) {
        o.written
            .push(write_json(&ctx.path("antichain.json"), &docs)?);
    }
    Ok(o)
}

/// Least-squares trend of `k |s_k - s0|` against `k`.
pub fn scaled_error_trend(points: &[SequencePoint]) -> Option<LinearFit> {
    let x: Vec<f64> = points.iter().map(|p| p.k as f64).collect();
    let y: Vec<f64> = points
        .iter()
        .map(|p| p.k as f64 * (p.s_k - p.s0).abs())
        .collect();
    least_squares(&x, &y)
}

pub const SEQUENCE_HEADER: [&str; 11] = [
    "k", "phi_k", "xi_min", "xi_max", "d_k", "t_k", "s_k", "s0", "bound_dk", "bound_sk", "pass",
];

fn sequences(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.carpet;
    let mut o = Outcome::default();
    let opts = SequenceOptions {
        enum_opts: ctx.enum_opts(),
        ..SequenceOptions::default()
    };
    let mut points = Vec::new();
    for k in ctx.cfg.levels() {
        let p = sequence_point(c, k, &opts)?;
        o.check("sequences", Some(k), "d_k_bound", p.dk_ok(), || {
            format!("s0 - d_k = {} outside [0, {}]", p.s0 - p.d_k, p.bound_dk)
        });
        o.check("sequences", Some(k), "s_k_bound", p.sk_ok(), || {
            format!("|s_k - s0| = {} > {}", (p.s_k - p.s0).abs(), p.bound_sk)
        });
        o.check("sequences", Some(k), "t_k_bound", p.tk_ok(), || {
            format!("|t_k - s0| > {}", p.bound_tk)
        });
        println!(
            "k={k} d_k={:.6} t_k={} s_k={:.6} s0={:.6} pass: {}",
            p.d_k,
            p.t_k.map_or("-".into(), |t| format!("{t:.6}")),
            p.s_k,
            p.s0,
            p.pass
        );
        points.push(p);
    }
    let trend = scaled_error_trend(&points);
    if let Some(fit) = trend {
        o.check(
            "sequences",
            None,
            "scaled_error_not_increasing",
            fit.not_increasing(3.0),
            || {
                format!(
                    "k |s_k - s0| has slope {} +- {}",
                    fit.slope, fit.slope_stderr
                )
            },
        );
    }
    if ctx.cfg.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = points
            .iter()
            .map(|p| {
                vec![
                    p.k.to_string(),
                    p.phi_k.to_string(),
                    p.xi_min.to_string(),
                    p.xi_max.to_string(),
                    num(p.d_k),
                    opt_num(p.t_k),
                    num(p.s_k),
                    num(p.s0),
                    num(p.bound_dk),
                    num(p.bound_sk),
                    flag(p.pass),
                ]
            })
            .collect();
        o.written.push(write_csv(
            &ctx.path("sequences.csv"),
            &SEQUENCE_HEADER,
            &rows,
        )?);
    }
    if ctx.cfg.wants(Format::Json) {
        o.written.push(write_json(
            &ctx.path("sequences.json"),
            &json!({ "points": points, "scaled_error_trend": trend }),
        )?);
    }
    Ok(o)
}

pub const QUANTIZE_HEADER: [&str; 7] = [
    "k",
    "phi_k",
    "lower_anchor",
    "upper_anchor",
    "e_hat_est",
    "stderr",
    "R_k",
];

/// Ball radii `m^-2 .. m^-8`.
pub fn ball_radii(m: u32) -> Vec<f64> {
    (2..=8).map(|e| f64::from(m).powi(-e)).collect()
}

pub const BALL_CENTERS: usize = 100;

fn quantize(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.carpet;
    let cfg = &ctx.cfg;
    let mut o = Outcome::default();
    let cloud = draw_cloud(c, cfg.cloud_size, cfg.depth, cfg.seed)?;
    let qopts = QuantOptions {
        enum_opts: ctx.enum_opts(),
        floor: DEFAULT_FLOOR,
        refine_iters: 0,
    };
    let gap_bound = (f64::from(c.n()).powi(2) + 1.0).sqrt().ln();
    let mut diags: Vec<QuantDiagnostics> = Vec::new();
    for k in cfg.levels() {
        let d = r_k_diagnostic(c, k, &cloud, &qopts)?;
        o.check(
            "quantize",
            Some(k),
            "below_upper_anchor",
            d.below_upper_anchor(),
            || {
                format!(
                    "estimate {} > upper anchor {} + 3 * {}",
                    d.e_hat_est, d.upper_anchor, d.stderr
                )
            },
        );
        let gap = d.upper_anchor - d.lower_anchor;
        // the anchors are f64 sums of up to 1e7 terms
        o.check(
            "quantize",
            Some(k),
            "anchor_gap",
            (0.0..=gap_bound + 1e-12).contains(&gap),
            || format!("anchor gap {gap} outside [0, {gap_bound}]"),
        );
        println!(
            "k={k} phi_k={} anchors=[{:.6}, {:.6}] e_hat={:.6} +- {:.2e} R_k={:.6}",
            d.phi_k, d.lower_anchor, d.upper_anchor, d.e_hat_est, d.stderr, d.r_k
        );
        diags.push(d);
    }
    let x: Vec<f64> = diags.iter().map(|d| d.k as f64).collect();
    let y: Vec<f64> = diags.iter().map(|d| d.r_k).collect();
    let trend = least_squares(&x, &y);
    if let Some(fit) = trend {
        o.check("quantize", None, "r_k_no_trend", fit.no_trend(3.0), || {
            format!("R_k slope {} +- {}", fit.slope, fit.slope_stderr)
        });
    }
    let ball: BallReport = ball_bound_check(
        c,
        &cloud,
        BALL_CENTERS,
        &ball_radii(c.m()),
        cfg.seed.wrapping_add(1),
    )?;
    match &ball.skipped {
        Some(why) => println!("ball bound skipped: {why}"),
        None => {
            let failed = ball.checks.iter().filter(|b| !b.passed).count();
            o.check("quantize", None, "ball_bound", failed == 0, || {
                format!(
                    "{failed} of {} ball checks exceed C eps^t",
                    ball.checks.len()
                )
            });
            println!(
                "ball bound: {} of {} checks pass",
                ball.checks.len() - failed,
                ball.checks.len()
            );
        }
    }

    if cfg.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = diags
            .iter()
            .map(|d| {
                vec![
                    d.k.to_string(),
                    d.phi_k.to_string(),
                    num(d.lower_anchor),
                    num(d.upper_anchor),
                    num(d.e_hat_est),
                    num(d.stderr),
                    num(d.r_k),
                ]
            })
            .collect();
        o.written.push(write_csv(
            &ctx.path("quantize.csv"),
            &QUANTIZE_HEADER,
            &rows,
        )?);
        let ball_rows: Vec<Vec<String>> = ball
            .checks
            .iter()
            .map(|b| {
                vec![
                    num(b.center[0]),
                    num(b.center[1]),
                    num(b.eps),
                    num(b.empirical),
                    num(b.stderr),
                    num(b.bound),
                    flag(b.passed),
                ]
            })
            .collect();
        o.written.push(write_csv(
            &ctx.path("ball.csv"),
            &[
                "center_x",
                "center_y",
                "eps",
                "empirical",
                "stderr",
                "bound",
                "pass",
            ],
            &ball_rows,
        )?);
    }
    if cfg.wants(Format::Json) {
        let ball_summary = json!({
            "skipped": ball.skipped,
            "exponent": ball.exponent,
            "constant": ball.constant,
            "checks": ball.checks.len(),
            "passed": ball.checks.iter().filter(|b| b.passed).count(),
            "max_ratio": ball.checks.iter().map(|b| b.empirical / b.bound).fold(0.0, f64::max),
        });
        o.written.push(write_json(
            &ctx.path("quantize.json"),
            &json!({
                "cloud": { "size": cloud.len(), "depth": cloud.depth, "seed": cloud.seed },
                "diagnostics": diags,
                "r_k_trend": trend,
                "ball": ball_summary,
            }),
        )?);
    }
    Ok(o)
}

type Table = (Vec<String>, Vec<BTreeMap<String, String>>);

fn read_table(path: &Path) -> Result<Option<Table>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(
            header
                .iter()
                .cloned()
                .zip(rec.iter().map(str::to_string))
                .collect(),
        );
    }
    Ok(Some((header, rows)))
}

fn column(
    path: &Path,
    rows: &[BTreeMap<String, String>],
    name: &str,
) -> Result<Vec<f64>, CliError> {
    rows.iter()
        .map(|r| {
            let v = r.get(name).map(String::as_str).unwrap_or("");
            if v.is_empty() {
                return Ok(f64::NAN);
            }
            v.parse().map_err(|_| CliError::Table {
                path: path.to_path_buf(),
                message: format!("column {name}: `{v}` is not a number"),
            })
        })
        .collect()
}

const TABLES: [&str; 4] = ["partition", "antichain", "sequences", "quantize"];

fn report(ctx: &Context) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let mut summary = BTreeMap::new();
    let mut tables = BTreeMap::new();
    for name in TABLES {
        let path = ctx.path(&format!("{name}.csv"));
        if let Some(t) = read_table(&path)? {
            tables.insert(name, (path, t));
        }
    }
    if tables.is_empty() {
        return Err(CliError::NothingToReport(ctx.out.clone()));
    }
    for (name, (_, (header, rows))) in &tables {
        let has_pass = header.iter().any(|h| h == "pass");
        let failed: Vec<&String> = rows
            .iter()
            .filter(|r| has_pass && r.get("pass").map(String::as_str) != Some("true"))
            .filter_map(|r| r.get("k"))
            .collect();
        for k in &failed {
            o.check(
                "report",
                k.parse().ok(),
                &format!("{name}_pass"),
                false,
                || format!("{name}.csv marks k = {k} as failing"),
            );
        }
        summary.insert(
            *name,
            json!({ "rows": rows.len(), "all_pass": failed.is_empty(), "has_pass_column": has_pass }),
        );
        println!(
            "{name}: {} rows, all pass: {}",
            rows.len(),
            failed.is_empty()
        );
    }
    if ctx.cfg.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = summary
            .iter()
            .map(|(name, v)| {
                vec![
                    name.to_string(),
                    v["rows"].to_string(),
                    v["all_pass"].to_string(),
                ]
            })
            .collect();
        o.written.push(write_csv(
            &ctx.path("report.csv"),
            &["table", "rows", "all_pass"],
            &rows,
        )?);
    }
    if ctx.cfg.wants(Format::Json) {
        o.written.push(write_json(
            &ctx.path("report.json"),
            &json!({ "tables": summary, "failures": o.failures }),
        )?);
    }
    if ctx.cfg.wants(Format::Svg) {
        if let Some((path, (_, rows))) = tables.get("sequences") {
            let k = column(path, rows, "k")?;
            let pick = |name: &str, color| -> Result<Series, CliError> {
                Ok(Series {
                    name: name.into(),
                    color,
                    points: k.iter().copied().zip(column(path, rows, name)?).collect(),
                })
            };
            let svg = line_chart(
                "Entropy-to-scale ratios",
                "k",
                "dimension",
                &[
                    pick("d_k", "#1f77b4")?,
                    pick("t_k", "#2ca02c")?,
                    pick("s_k", "#d62728")?,
                    pick("s0", "#7f7f7f")?,
                ],
            );
            o.written
                .push(write_text(&ctx.path("sequences.svg"), &svg)?);
        }
        if let Some((path, (_, rows))) = tables.get("quantize") {
            let k = column(path, rows, "k")?;
            let r = column(path, rows, "R_k")?;
            let svg = line_chart(
                "Normalized log quantization error",
                "k",
                "R_k",
                &[Series {
                    name: "R_k".into(),
                    color: "#9467bd",
                    points: k.into_iter().zip(r).collect(),
                }],
            );
            o.written.push(write_text(&ctx.path("r_k.svg"), &svg)?);
        }
    }
    Ok(o)
}
