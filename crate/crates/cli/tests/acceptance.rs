//! End-to-end acceptance checks. Everything runs inside one test so the
//! runtime limits are measured without other tests competing for cores.
//!
//! Run with `cargo test -p carpetq-cli --test acceptance -- --nocapture` to
//! see the per-criterion lines.

use std::fs;
use std::path::Path;
use std::process::Command as Proc;
use std::time::{Duration, Instant};

use carpetq_cli::commands::ball_radii;
use carpetq_core::coding::{
    compute_d_k, compute_t, delta_k, l_map, length_weighted_mass, phi_k_words, stream_s_k,
};
use carpetq_core::partition::{check_partition_words, find_overlapping_squares};
use carpetq_core::quantizer::{ball_bound_check, QuantOptions, DEFAULT_DEPTH, DEFAULT_SEED};
use carpetq_core::sum::least_squares;
use carpetq_core::{
    build_antichain, derive_params, draw_cloud, enumerate_lambda_k, partition_stats,
    r_k_diagnostic, verify_maximal_antichain, AntichainOptions, Carpet, CarpetSpec, EnumOptions,
    SampleCloud,
};

fn carpet_a() -> Carpet {
    Carpet::new(CarpetSpec::uniform(4, 3, &[(0, 0), (0, 2), (2, 2)])).unwrap()
}

fn carpet_b() -> Carpet {
    Carpet::new(CarpetSpec::uniform(4, 3, &[(0, 0), (2, 0)])).unwrap()
}

fn carpet_c() -> Carpet {
    Carpet::new(CarpetSpec::uniform(3, 3, &[(0, 0), (2, 2)])).unwrap()
}

struct Verdict {
    id: u8,
    name: &'static str,
    problems: Vec<String>,
    elapsed: Duration,
}

impl Verdict {
    fn new(id: u8, name: &'static str) -> Self {
        Verdict {
            id,
            name,
            problems: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.problems.push(what());
        }
    }

    fn within(&mut self, start: Instant, limit: Duration) {
        self.elapsed = start.elapsed();
        let e = self.elapsed;
        self.expect(e < limit, || format!("took {e:?}, limit {limit:?}"));
    }

    fn line(&self) -> String {
        let status = if self.problems.is_empty() {
            "PASS"
        } else {
            "FAIL"
        };
        let mut s = format!(
            "criterion {}: {status} {} ({:.2?})",
            self.id, self.name, self.elapsed
        );
        for p in &self.problems {
            s.push_str("\n    ");
            s.push_str(p);
        }
        s
    }
}

fn dimension_formula() -> Verdict {
    let mut v = Verdict::new(1, "dimension formula");
    // high-precision reference values, rounded to double
    let cases = [
        (
            CarpetSpec::uniform(4, 3, &[(0, 0), (0, 2), (2, 2)]),
            0.912_713_497_619_028_4,
        ),
        (CarpetSpec::uniform(4, 3, &[(0, 0), (2, 0)]), 0.5),
        (
            CarpetSpec::uniform(3, 3, &[(0, 0), (2, 2)]),
            0.630_929_753_571_457_4,
        ),
    ];
    let start = Instant::now();
    let got: Vec<f64> = cases
        .iter()
        .map(|(s, _)| derive_params(s).unwrap().s0)
        .collect();
    v.within(start, Duration::from_millis(1));
    for ((_, want), s0) in cases.iter().zip(&got) {
        v.expect((s0 - want).abs() <= 1e-12, || {
            format!("s0 = {s0}, expected {want}")
        });
    }
    v.expect(got[1] == 0.5, || {
        format!("carpet B s0 = {} is not exactly 1/2", got[1])
    });
    let c = 2f64.ln() / 3f64.ln();
    v.expect(got[2] == c, || {
        format!("carpet C s0 = {} differs from log 2 / log 3 = {c}", got[2])
    });
    v
}

fn partition_exactness(a: &Carpet) -> Verdict {
    let mut v = Verdict::new(2, "partition exactness, carpet A, k = 2..6");
    let start = Instant::now();
    for k in 2..=6 {
        let lk = enumerate_lambda_k(a, k, &EnumOptions::default()).unwrap();
        let next = stream_s_k(a, k + 1).unwrap().phi_k;
        let stats = partition_stats(a, &lk, Some(next));
        v.expect(stats.mass_sum_is_one, || {
            format!("k={k}: masses sum to {}", lk.mass_sum())
        });
        for c in stats.checks.iter().filter(|c| !c.passed) {
            v.expect(false, || format!("k={k}: {} fails: {}", c.name, c.detail));
        }
        let bad = check_partition_words(a, &lk);
        v.expect(bad.is_empty(), || {
            format!("k={k}: {} words fail the mass ratio", bad.len())
        });
        let overlap = find_overlapping_squares(a, &lk);
        v.expect(overlap.is_none(), || {
            format!("k={k}: squares {overlap:?} overlap")
        });
        v.expect(k < 6 || lk.phi_k() <= 9usize.pow(7), || {
            format!("phi_6 = {}", lk.phi_k())
        });
    }
    v.within(start, Duration::from_secs(120));
    v
}

fn d_k_bound() -> Verdict {
    let mut v = Verdict::new(3, "d_k bound, carpets A and C, k = 1..200");
    let start = Instant::now();
    for (name, c) in [("A", carpet_a()), ("C", carpet_c())] {
        let p = c.params();
        let log_m = f64::from(c.m()).ln();
        for k in 1..=200 {
            let d = compute_d_k(&c, k);
            let gap = p.s0 - d;
            let bound = 2.0 * p.hp / (k as f64 * log_m);
            // the two sides agree exactly when theta = 1; allow for the rounding
            v.expect(gap >= -1e-12 && gap <= bound, || {
                format!("{name} k={k}: s0 - d_k = {gap}, bound {bound}")
            });
        }
        for k in 1..=4 {
            let words = phi_k_words(&c, k, 1_000_000).unwrap();
            let brute = compute_t(&c, &words);
            let d = compute_d_k(&c, k);
            v.expect((brute - d).abs() <= 1e-12, || {
                format!("{name} k={k}: closed form {d} vs brute force {brute}")
            });
        }
    }
    v.within(start, Duration::from_secs(1));
    v
}

fn antichain_certification(a: &Carpet) -> Verdict {
    let mut v = Verdict::new(4, "antichain certification, carpet A, k = 2..6");
    let c1 = 8.0 * 3f64.ln();
    v.expect((a.params().c1 - c1).abs() <= 1e-12, || {
        format!("C1 = {}", a.params().c1)
    });
    let start = Instant::now();
    for k in 2..=6 {
        let lk = enumerate_lambda_k(a, k, &EnumOptions::default()).unwrap();
        // per-family mass conservation is enforced during construction
        let anti = match build_antichain(a, &lk, &AntichainOptions::default()) {
            Ok(x) => x,
            Err(e) => {
                v.expect(false, || format!("k={k}: {e}"));
                continue;
            }
        };
        let report = verify_maximal_antichain(a, &anti.words);
        v.expect(report.incomparable, || {
            format!("k={k}: {:?}", report.violation)
        });
        v.expect(report.mass_is_one, || {
            format!("k={k}: mass {}", report.mass_sum)
        });
        let raw: Vec<_> = lk.words.iter().map(l_map).collect();
        let before = length_weighted_mass(&raw, &lk.masses);
        v.expect(anti.length_weighted_mass() == before, || {
            format!(
                "k={k}: sum lambda |w| went from {before} to {}",
                anti.length_weighted_mass()
            )
        });
        let d = delta_k(a, &anti);
        v.expect(d.delta <= c1, || format!("k={k}: Delta_k = {}", d.delta));
        println!(
            "    k={k}: {} words, {} stages, Delta_k = {:.6}",
            anti.len(),
            anti.stages.len(),
            d.delta
        );
    }
    v.within(start, Duration::from_secs(300));
    v
}

fn s_k_convergence(a: &Carpet) -> Verdict {
    let mut v = Verdict::new(5, "s_k convergence, carpet A, k = 2..8");
    let p = a.params();
    let log_m = f64::from(a.m()).ln();
    let start = Instant::now();
    let (mut ks, mut scaled) = (Vec::new(), Vec::new());
    for k in 2..=8 {
        let st = stream_s_k(a, k).unwrap();
        let err = (st.s_k - p.s0).abs();
        let bound = (p.c1 + 2.0 * p.hp) / (st.xi_min as f64 * log_m);
        v.expect(err <= bound, || {
            format!("k={k}: |s_k - s0| = {err} > {bound}")
        });
        ks.push(k as f64);
        scaled.push(k as f64 * err);
    }
    let fit = least_squares(&ks, &scaled).unwrap();
    v.expect(fit.not_increasing(3.0), || {
        format!("k |s_k - s0| slope {} +- {}", fit.slope, fit.slope_stderr)
    });
    println!(
        "    k |s_k - s0| slope {:.4e} +- {:.4e}",
        fit.slope, fit.slope_stderr
    );
    v.elapsed = start.elapsed();
    v
}

fn quantization(a: &Carpet, cloud: &SampleCloud, cloud_time: Duration) -> Verdict {
    let mut v = Verdict::new(6, "quantization sandwich and R_k, carpet A, k = 2..6");
    let start = Instant::now();
    let gap_bound = 17f64.sqrt().ln();
    let opts = QuantOptions::default();
    let (mut ks, mut rk) = (Vec::new(), Vec::new());
    for k in 2..=6 {
        let d = r_k_diagnostic(a, k, cloud, &opts).unwrap();
        v.expect(d.e_hat_est <= d.upper_anchor + 3.0 * d.stderr, || {
            format!(
                "k={k}: estimate {} above {} + 3 * {}",
                d.e_hat_est, d.upper_anchor, d.stderr
            )
        });
        let gap = d.upper_anchor - d.lower_anchor;
        v.expect(gap <= gap_bound + 1e-12, || {
            format!("k={k}: anchor gap {gap}")
        });
        println!(
            "    k={k}: e_hat = {:.6}, anchor gap = {gap:.4}, R_k = {:.6}",
            d.e_hat_est, d.r_k
        );
        ks.push(k as f64);
        rk.push(d.r_k);
    }
    let fit = least_squares(&ks, &rk).unwrap();
    v.expect(fit.no_trend(3.0), || {
        format!("R_k slope {} +- {}", fit.slope, fit.slope_stderr)
    });
    println!(
        "    R_k slope {:.4e} +- {:.4e}",
        fit.slope, fit.slope_stderr
    );
    v.elapsed = start.elapsed() + cloud_time;
    let e = v.elapsed;
    v.expect(e < Duration::from_secs(600), || format!("took {e:?}"));
    v
}

fn ball_bound(a: &Carpet, cloud: &SampleCloud) -> Verdict {
    let mut v = Verdict::new(7, "ball bound, carpet A; carpet B skipped");
    let start = Instant::now();
    let r = ball_bound_check(a, cloud, 100, &ball_radii(3), 7).unwrap();
    v.expect(r.skipped.is_none(), || {
        format!("carpet A skipped: {:?}", r.skipped)
    });
    v.expect((r.exponent - 0.369_070).abs() < 5e-7, || {
        format!("exponent {}", r.exponent)
    });
    v.expect(r.checks.len() == 700, || {
        format!("{} checks", r.checks.len())
    });
    for c in r.checks.iter().filter(|c| !c.passed) {
        v.expect(false, || {
            format!(
                "center {:?}, eps {}: {} > {}",
                c.center, c.eps, c.empirical, c.bound
            )
        });
    }

    let b = carpet_b();
    let small = draw_cloud(&b, 1000, DEFAULT_DEPTH, 1).unwrap();
    let rb = ball_bound_check(&b, &small, 100, &ball_radii(3), 7).unwrap();
    match &rb.skipped {
        Some(why) => println!("    carpet B skipped: {why}"),
        None => v.expect(false, || "carpet B was not skipped".into()),
    }
    v.elapsed = start.elapsed();
    v
}

const DETERMINISM_CONFIG: &str = r#"{
  "n": 4, "m": 3,
  "maps": [
    {"i": 0, "j": 0, "p": "1/3"},
    {"i": 0, "j": 2, "p": "1/3"},
    {"i": 2, "j": 2, "p": "1/3"}
  ],
  "k_min": 2, "k_max": 5, "cloud_size": 100000, "seed": 20240601,
  "outputs": ["csv"]
}"#;

fn csv_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let mut v = Verdict::new(8, "byte-identical CSV across 1, 4 and 16 threads");
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("a.json");
    fs::write(&config, DETERMINISM_CONFIG).unwrap();
    let mut snapshots = Vec::new();
    for threads in ["1", "4", "16"] {
        let out = tmp.path().join(format!("t{threads}"));
        for cmd in ["partition", "antichain", "sequences", "quantize"] {
            let status = Proc::new(env!("CARGO_BIN_EXE_carpetq"))
                .args([cmd, "--config", config.to_str().unwrap()])
                .args(["--out", out.to_str().unwrap(), "--threads", threads])
                .output()
                .unwrap();
            v.expect(status.status.success(), || {
                format!(
                    "{cmd} with {threads} threads: {}",
                    String::from_utf8_lossy(&status.stderr)
                )
            });
        }
        snapshots.push((threads, csv_snapshot(&out)));
    }
    let (_, reference) = &snapshots[0];
    v.expect(reference.len() == 5, || {
        format!("{} csv files", reference.len())
    });
    for (threads, snap) in &snapshots[1..] {
        let names: Vec<&String> = snap.iter().map(|(n, _)| n).collect();
        let ref_names: Vec<&String> = reference.iter().map(|(n, _)| n).collect();
        v.expect(names == ref_names, || {
            format!("{threads} threads wrote {names:?}")
        });
        for ((name, a), (_, b)) in reference.iter().zip(snap) {
            v.expect(a == b, || {
                format!("{name} differs between 1 and {threads} threads")
            });
        }
    }
    v.elapsed = start.elapsed();
    v
}

#[test]
fn acceptance_criteria() {
    let a = carpet_a();
    let mut verdicts = vec![dimension_formula()];
    verdicts.push(partition_exactness(&a));
    verdicts.push(d_k_bound());
    verdicts.push(antichain_certification(&a));
    verdicts.push(s_k_convergence(&a));
    let start = Instant::now();
    let cloud = draw_cloud(&a, 1_000_000, DEFAULT_DEPTH, DEFAULT_SEED).unwrap();
    let cloud_time = start.elapsed();
    verdicts.push(quantization(&a, &cloud, cloud_time));
    verdicts.push(ball_bound(&a, &cloud));
    verdicts.push(determinism());

    for v in &verdicts {
        println!("{}", v.line());
    }
    let failed: Vec<u8> = verdicts
        .iter()
        .filter(|v| !v.problems.is_empty())
        .map(|v| v.id)
        .collect();
    assert!(failed.is_empty(), "criteria {failed:?} failed");
}
