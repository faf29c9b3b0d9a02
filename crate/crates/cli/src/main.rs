use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dimer_cff::dgauss::{energy_matrix, DiscreteGaussianLaw, HarmonicDomain};
use dimer_cff::experiments::{
    run_gap_study, run_kenyon_sweep, run_u2_convergence, ExperimentConfig, FaultInjection, GapStudyConfig,
    GraphSpec, KenyonSweepConfig, Summary, U2ConvergenceConfig,
};
use dimer_cff::kasteleyn::KasteleynSystem;
use dimer_cff::lattice::CylinderStyle;
use dimer_cff::matchings::{count_matchings, enumerate};
use dimer_cff::torus::CylinderComponents;
use num_complex::Complex64;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dimer-cff", version, about = "Dimer heights versus compactified free field predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON experiment config (`{"suite": "kenyon-verify" | "gap-study" | "u2-convergence", ...}`).
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check Kenyon's determinant moments against enumeration.
    KenyonVerify {
        /// Sweep config; the default suite when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Negate one weight, as `instance:edge`.
        #[arg(long)]
        fault: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Cylinder gap laws against the discrete Gaussian.
    GapStudy {
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        ks: Vec<i32>,
        #[arg(long, default_value_t = 3)]
        enumeration_max_k: i32,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Two-point path moments against integrated U_2.
    U2Convergence {
        #[arg(long, default_value = "ND", value_parser = parse_style)]
        style: CylinderStyle,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        ks: Vec<i32>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Tabulate a discrete Gaussian law from a cylinder modulus or an explicit form.
    CffLaw {
        /// Shift vector, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
        c0: Vec<f64>,
        /// Row-major quadratic form `Q` in `exp(−uᵀQu)`; overrides `--tau`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Option<Vec<f64>>,
        /// Cylinder modulus; the energy comes from a harmonic-measure solve.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 128)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        ny: usize,
        /// Twist vector for the reported twisted moments.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        twist: Option<Vec<i64>>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// U_2 on a grid of point pairs.
    ContinuumU2 {
        #[arg(long, default_value = "ND", value_parser = parse_style)]
        style: CylinderStyle,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Grid points per direction in the strip interior.
        #[arg(long, default_value_t = 6)]
        grid: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Kasteleyn determinant of a graph, compared with the transfer count.
    Det {
        /// Graph spec file or inline JSON.
        #[arg(long)]
        graph: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Single-edge probabilities from the inverse Kasteleyn matrix.
    EdgeProbs {
        #[arg(long)]
        graph: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Enumerate perfect matchings.
    Enumerate {
        #[arg(long)]
        graph: String,
        #[arg(long, default_value_t = 1_000_000)]
        limit: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn parse_style(s: &str) -> Result<CylinderStyle, String> {
    match s.to_ascii_uppercase().as_str() {
        "DD" => Ok(CylinderStyle::DD),
        "ND" => Ok(CylinderStyle::ND),
        _ => Err(format!("unknown style {s}, expected DD or ND")),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DIMER_CFF_THREADS") {
        let n: usize = v.parse().with_context(|| format!("DIMER_CFF_THREADS={v}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn read_graph(arg: &str) -> Result<GraphSpec> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
    };
    Ok(serde_json::from_str(&text)?)
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes the summary, prints it, and reports whether the suite passed.
fn finish(dir: &Path, summary: Summary) -> Result<bool> {
    write_json(dir, "summary.json", &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(summary.pass)
}

#[derive(Serialize)]
struct InstanceCsv<'a> {
    instance: &'a str,
    vertices: usize,
    matchings: u128,
    det_abs: f64,
    count_matches: bool,
    oracle: dimer_cff::experiments::Oracle,
    tuples: usize,
    max_error: f64,
    pass: bool,
    face_violations: String,
}

fn kenyon(cfg: &KenyonSweepConfig, out: &Path) -> Result<bool> {
    let rep = run_kenyon_sweep(cfg);
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    for s in &rep.skipped {
        eprintln!("skipped {}: {}", s.instance, s.reason);
    }
    write_csv(out, "kenyon_tuples.csv", &rep.rows)?;
    let inst: Vec<InstanceCsv> = rep
        .instances
        .iter()
        .map(|i| InstanceCsv {
            instance: &i.instance,
            vertices: i.vertices,
            matchings: i.matchings,
            det_abs: i.det_abs,
            count_matches: i.count_matches,
            oracle: i.oracle,
            tuples: i.tuples,
            max_error: i.max_error,
            pass: i.pass,
            face_violations: i.face_violations.join(" "),
        })
        .collect();
    write_csv(out, "kenyon_instances.csv", &inst)?;
    write_json(out, "report.json", &rep)?;
    finish(out, rep.summary())
}

fn gap(cfg: &GapStudyConfig, out: &Path) -> Result<bool> {
    let rep = run_gap_study(cfg)?;
    for n in &rep.notes {
        eprintln!("note: {n}");
    }
    write_csv(out, "gap_study.csv", &rep.rows)?;
    write_json(out, "report.json", &rep)?;
    finish(out, rep.summary())
}

fn u2(cfg: &U2ConvergenceConfig, out: &Path) -> Result<bool> {
    let rep = run_u2_convergence(cfg)?;
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    write_csv(out, "u2_convergence.csv", &rep.rows)?;
    write_json(out, "report.json", &rep)?;
    finish(out, rep.summary())
}

#[derive(Serialize)]
struct AtomRow {
    u: String,
    probability: f64,
}

#[derive(Serialize)]
struct LawReport {
    c0: Vec<f64>,
    q: Vec<Vec<f64>>,
    truncation: usize,
    total_mass: f64,
    twist: Option<Vec<i64>>,
    twisted_mean: Vec<f64>,
    twisted_covariance: Vec<Vec<f64>>,
    min_eigenvalue: f64,
}

fn cff_law(
    c0: Vec<f64>,
    q: Option<Vec<f64>>,
    tau: f64,
    (nx, ny): (usize, usize),
    twist: Option<Vec<i64>>,
    out: &Path,
) -> Result<bool> {
    let n = c0.len();
    let law = match q {
        Some(flat) => {
            if flat.len() != n * n {
                bail!("--q needs {} entries for a {n}-dimensional shift", n * n);
            }
            DiscreteGaussianLaw::new(c0, flat.chunks(n).map(|r| r.to_vec()).collect())?
        }
        None => {
            if n != 1 {
                bail!("a cylinder has one gap; pass --q for higher dimensions");
            }
            let e = energy_matrix(&HarmonicDomain::Cylinder { tau }, nx, ny)?;
            eprintln!("energy {:.8} (annulus value 2/tau = {:.8})", e.energies[0][0], 2.0 / tau);
            DiscreteGaussianLaw::from_energy(c0, &e.energies)?
        }
    };
    let rows: Vec<AtomRow> = law
        .atoms()
        .iter()
        .filter(|a| a.probability > 1e-300)
        .map(|a| AtomRow {
            u: a.u.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "),
            probability: a.probability,
        })
        .collect();
    write_csv(out, "cff_law.csv", &rows)?;
    let total_mass: f64 = law.atoms().iter().map(|a| a.probability).sum();
    let t = twist.clone().unwrap_or_else(|| vec![0; law.dim()]);
    let var = law.variance_test(&t)?;
    let twisted_mean = (0..law.dim())
        .map(|i| {
            let mut alpha = vec![0; law.dim()];
            alpha[i] = 1;
            law.twisted_expectation(&t, &alpha).map(|z| z.re)
        })
        .collect::<Result<_, _>>()?;
    let report = LawReport {
        c0: law.c0().to_vec(),
        q: law.q(),
        truncation: law.truncation(),
        total_mass,
        twist,
        twisted_mean,
        twisted_covariance: var.covariance,
        min_eigenvalue: var.min_eigenvalue,
    };
    write_json(out, "report.json", &report)?;
    let err = (total_mass - 1.0).abs();
    finish(
        out,
        Summary {
            suite: "cff-law".into(),
            pass: err < 1e-12,
            max_error: err,
            rows: rows.len(),
        },
    )
}

#[derive(Serialize)]
struct U2Row {
    re_p: f64,
    im_p: f64,
    re_q: f64,
    im_q: f64,
    u2: f64,
}

fn continuum_u2(style: CylinderStyle, tau: f64, grid: usize, out: &Path) -> Result<bool> {
    let comps = CylinderComponents::new(style, tau)?;
    let pts: Vec<Complex64> = (0..grid)
        .flat_map(|i| {
            (0..grid).map(move |j| {
                Complex64::new(
                    (i as f64 + 0.5) / grid as f64,
                    (j as f64 + 0.5) / grid as f64 * tau / 2.0,
                )
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut asym: f64 = 0.0;
    for (a, &p) in pts.iter().enumerate() {
        for &q in &pts[a + 1..] {
            let u = comps.u_m(&[p, q])?;
            asym = asym.max((u - comps.u_m(&[q, p])?).abs());
            rows.push(U2Row {
                re_p: p.re,
                im_p: p.im,
                re_q: q.re,
                im_q: q.im,
                u2: u,
            });
        }
    }
    write_csv(out, "continuum_u2.csv", &rows)?;
    finish(
        out,
        Summary {
            suite: "continuum-u2".into(),
            pass: asym < 1e-9,
            max_error: asym,
            rows: rows.len(),
        },
    )
}

#[derive(Serialize)]
struct DetReport {
    graph: String,
    vertices: usize,
    log_abs_det: f64,
    phase_re: f64,
    phase_im: f64,
    det_rounded: u128,
    transfer_count: Option<u128>,
}

fn det(spec: &GraphSpec, out: &Path) -> Result<bool> {
    let g = spec.build()?;
    let pf = KasteleynSystem::new(&g)?.partition_function()?;
    let count = count_matchings(&g).ok();
    let rep = DetReport {
        graph: spec.id(),
        vertices: g.vertices().len(),
        log_abs_det: pf.log_abs_det,
        phase_re: pf.phase.re,
        phase_im: pf.phase.im,
        det_rounded: pf.rounded(),
        transfer_count: count,
    };
    write_csv(out, "det.csv", std::slice::from_ref(&rep))?;
    let err = count.map_or(0.0, |c| (pf.abs() - c as f64).abs() / (c as f64).max(1.0));
    finish(
        out,
        Summary {
            suite: "det".into(),
            pass: count.is_none_or(|c| c == pf.rounded()),
            max_error: err,
            rows: 1,
        },
    )
}

#[derive(Serialize)]
struct EdgeRow {
    edge: usize,
    x1: i32,
    y1: i32,
    x2: i32,
    y2: i32,
    probability: f64,
}

fn edge_probs(spec: &GraphSpec, out: &Path) -> Result<bool> {
    let g = spec.build()?;
    let ks = KasteleynSystem::new(&g)?;
    let p = ks.edge_probabilities()?;
    let rows: Vec<EdgeRow> = g
        .edges()
        .iter()
        .zip(&p)
        .enumerate()
        .map(|(i, (e, &probability))| EdgeRow {
            edge: i,
            x1: e.tail.x,
            y1: e.tail.y,
            x2: e.head.x,
            y2: e.head.y,
            probability,
        })
        .collect();
    write_csv(out, "edge_probs.csv", &rows)?;
    // Every vertex is covered exactly once.
    let mut cover = vec![0.0; g.vertices().len()];
    for (e, &q) in g.edges().iter().zip(&p) {
        for v in [e.tail, e.head] {
            cover[g.vertex_index(v).expect("endpoint")] += q;
        }
    }
    let err = cover.iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max);
    finish(
        out,
        Summary {
            suite: "edge-probs".into(),
            pass: err < 1e-9,
            max_error: err,
            rows: rows.len(),
        },
    )
}

#[derive(Serialize)]
struct MatchingRow {
    index: usize,
    edges: String,
}

fn enumerate_cmd(spec: &GraphSpec, limit: u64, out: &Path) -> Result<bool> {
    let g = spec.build()?;
    let all = enumerate(&g, limit)?;
    let rows: Vec<MatchingRow> = all
        .iter()
        .enumerate()
        .map(|(index, m)| MatchingRow {
            index,
            edges: m.edges.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" "),
        })
        .collect();
    write_csv(out, "matchings.csv", &rows)?;
    let count = count_matchings(&g).ok();
    eprintln!("{} matchings", all.len());
    finish(
        out,
        Summary {
            suite: "enumerate".into(),
            pass: count.is_none_or(|c| c == all.len() as u128),
            max_error: 0.0,
            rows: rows.len(),
        },
    )
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    let out = match &cli.command {
        Command::Run { out, .. }
        | Command::KenyonVerify { out, .. }
        | Command::GapStudy { out, .. }
        | Command::U2Convergence { out, .. }
        | Command::CffLaw { out, .. }
        | Command::ContinuumU2 { out, .. }
        | Command::Det { out, .. }
        | Command::EdgeProbs { out, .. }
        | Command::Enumerate { out, .. } => out.clone(),
    };
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::Run { config, .. } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg: ExperimentConfig = serde_json::from_str(&text)?;
            cfg.validate()?;
            match cfg {
                ExperimentConfig::KenyonVerify(c) => kenyon(&c, &out),
                ExperimentConfig::GapStudy(c) => gap(&c, &out),
                ExperimentConfig::U2Convergence(c) => u2(&c, &out),
            }
        }
        Command::KenyonVerify { config, fault, .. } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)?,
                None => KenyonSweepConfig::default_suite(),
            };
            if let Some(f) = fault {
                let (i, e) = f.split_once(':').context("--fault expects instance:edge")?;
                cfg.fault = Some(FaultInjection {
                    instance: i.parse()?,
                    edge: e.parse()?,
                });
            }
            kenyon(&cfg, &out)
        }
        Command::GapStudy {
            tau,
            ks,
            enumeration_max_k,
            ..
        } => gap(
            &GapStudyConfig {
                tau,
                ks,
                enumeration_max_k,
                ..GapStudyConfig::default()
            },
            &out,
        ),
        Command::U2Convergence { style, tau, ks, .. } => u2(
            &U2ConvergenceConfig {
                style,
                tau,
                ks,
                ..U2ConvergenceConfig::default()
            },
            &out,
        ),
        Command::CffLaw {
            c0,
            q,
            tau,
            nx,
            ny,
            twist,
            ..
        } => cff_law(c0, q, tau, (nx, ny), twist, &out),
        Command::ContinuumU2 { style, tau, grid, .. } => continuum_u2(style, tau, grid, &out),
        Command::Det { graph, .. } => det(&read_graph(&graph)?, &out),
        Command::EdgeProbs { graph, .. } => edge_probs(&read_graph(&graph)?, &out),
        Command::Enumerate { graph, limit, .. } => enumerate_cmd(&read_graph(&graph)?, limit, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
