//! Implementations of the CLI subcommands.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

use rsdesign::criteria::{efficiency_table, CriterionConfig, CriterionKind};
use rsdesign::graphs::graph_series;
use rsdesign::io as rio;
use rsdesign::model::{candidate_set, central_composite, df_accounting, ModelSpec};
use rsdesign::optimizer::{exchange_search, verify_optimal, SearchConfig};
use rsdesign::{Design, Region};

use crate::config::{parse_range, FileConfig};

/// Writer on a file or standard output.
fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            Ok(Box::new(File::create(p).with_context(|| {
                format!("cannot create {}", p.display())
            })?))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn region_comments(region: &Region) -> Vec<(String, String)> {
    let mut out = vec![
        ("q".into(), region.q().to_string()),
        (
            "region".into(),
            match region.kind() {
                rsdesign::region::RegionKind::Cube => "cube".to_string(),
                rsdesign::region::RegionKind::Sphere => format!("sphere rho={}", region.rho()),
            },
        ),
    ];
    out.dedup();
    out
}

fn kappa_summary(cfg: &CriterionConfig) -> String {
    const NAMES: [&str; 9] = ["d", "dp", "ap", "a", "df", "i", "ip", "id", "idp"];
    cfg.kappas
        .iter()
        .zip(NAMES)
        .filter(|(k, _)| **k > 0.0)
        .map(|(k, name)| format!("kappa_{name}={k}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Read a design, snapping sphere coordinates unless disabled.
fn load_design(path: &Path, region: &Region, snap: bool) -> Result<Design> {
    let snap_region = if snap { Some(region) } else { None };
    rio::read_design(path, snap_region)
        .with_context(|| format!("cannot read design {}", path.display()))
}

pub struct OptimizeArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
    pub seed: Option<u64>,
    pub starts: Option<usize>,
    pub alpha: Option<f64>,
    pub quiet: bool,
}

pub fn cmd_optimize(args: OptimizeArgs) -> Result<()> {
    let file = FileConfig::load(&args.config)?;
    let q = file.q()?;
    let n = file.n()?;
    let region = file.region()?;
    if region.q() != q {
        bail!("region and problem disagree on q");
    }
    let model = ModelSpec::full_quadratic(q);
    let criterion = file.criterion(&model, args.alpha)?;
    let candidates = candidate_set(&region);
    let mut search = SearchConfig::new(n, candidates, criterion.clone());
    search.starts = args.starts.unwrap_or(file.search.starts);
    search.max_passes = file.search.max_passes;
    search.seed = args.seed.unwrap_or(file.search.seed);
    search.log_progress = !args.quiet;

    let result = exchange_search(&search)?;
    let (d, lof) = df_accounting(&result.best, &model);

    let mut comments = region_comments(&region);
    comments.push(("n".into(), n.to_string()));
    comments.push(("criterion".into(), kappa_summary(&criterion)));
    comments.push(("seed".into(), search.seed.to_string()));
    comments.push(("starts".into(), search.starts.to_string()));
    let mut out =
        File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    rio::write_design(&mut out, &result.best, &comments)?;

    let mut report = String::new();
    report.push_str(&format!(
        "best design written to {} ({} runs)\n",
        args.out.display(),
        result.best.n()
    ));
    report.push_str(&format!(
        "df: pure error {d}, lack of fit {lof} (n = {n}, p = {})\n",
        model.p()
    ));
    report.push_str(&format!("criterion evaluations: {}\n", result.evaluations));
    report.push_str(&result.value.to_string());
    print!("{report}");
    if let Some(path) = args.report {
        std::fs::write(&path, &report)
            .with_context(|| format!("cannot write report {}", path.display()))?;
    }
    Ok(())
}

pub struct EvaluateArgs {
    pub config: PathBuf,
    pub designs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: String,
    pub reference: Vec<String>,
    pub no_snap: bool,
    pub alpha: Option<f64>,
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let file = FileConfig::load(&args.config)?;
    let q = file.q()?;
    let region = file.region()?;
    let model = ModelSpec::full_quadratic(q);
    let criterion = file.criterion(&model, args.alpha)?;

    let mut reference: [Option<f64>; 8] = [None; 8];
    for spec in &args.reference {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--reference expects key=value, got `{spec}`"))?;
        let kind =
            CriterionKind::from_key(key).ok_or_else(|| anyhow!("unknown criterion key `{key}`"))?;
        let idx = CriterionKind::ALL.iter().position(|k| *k == kind).unwrap();
        reference[idx] = Some(value.parse::<f64>().context("bad reference value")?);
    }
    let reference = if reference.iter().any(Option::is_some) {
        Some(reference)
    } else {
        None
    };

    let mut labeled = Vec::new();
    for path in &args.designs {
        let design = load_design(path, &region, !args.no_snap)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        labeled.push((label, design));
    }
    let table = efficiency_table(&labeled, &model, &region, &criterion, reference)?;

    let mut out = open_output(args.out.as_deref())?;
    match args.format.as_str() {
        "csv" => write!(out, "{}", table.to_csv())?,
        "text" => write!(out, "{table}")?,
        other => bail!("unknown format `{other}` (expected text or csv)"),
    }
    Ok(())
}

pub struct GraphArgs {
    pub config: PathBuf,
    pub design: PathBuf,
    pub variant: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub no_snap: bool,
}

pub fn cmd_graph(args: GraphArgs) -> Result<()> {
    let file = FileConfig::load(&args.config)?;
    let q = file.q()?;
    let region = file.region()?;
    let model = ModelSpec::full_quadratic(q);
    let mut cfg = file.graph(args.variant.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(a) = args.alpha {
        cfg.interval_alpha = Some(a);
    }

    let bytes = std::fs::read(&args.design)
        .with_context(|| format!("cannot read design {}", args.design.display()))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let design = load_design(&args.design, &region, !args.no_snap)?;

    let series = graph_series(&design, &model, &region, &cfg)?;
    let extra = vec![
        ("design_file".to_string(), args.design.display().to_string()),
        ("design_sha256".to_string(), digest),
    ];
    let mut out = open_output(args.out.as_deref())?;
    rio::write_graph_series(&mut out, &series, &extra)?;
    Ok(())
}

pub struct VerifyCcdArgs {
    pub q: usize,
    pub n_range: Option<String>,
    pub center_range: Option<String>,
    pub starts: usize,
    pub seed: u64,
    pub progress: bool,
}

pub fn cmd_verify_ccd(args: VerifyCcdArgs) -> Result<()> {
    if !(3..=6).contains(&args.q) {
        bail!("verify-ccd supports q in 3..6");
    }
    let q = args.q;
    let half = q >= 5;
    let factorial_runs = 1usize << (if half { q - 1 } else { q });
    let base = factorial_runs + 2 * q;
    let (n_lo, n_hi) = match (&args.n_range, &args.center_range) {
        (Some(n), None) => parse_range(n)?,
        (None, Some(c)) => {
            let (lo, hi) = parse_range(c)?;
            (base + lo, base + hi)
        }
        _ => bail!("give exactly one of --n or --centers"),
    };
    if n_lo < base {
        bail!("n = {n_lo} is below the CCD point count {base}");
    }

    let region: Region = Region::sphere_through_corners(q);
    let model = ModelSpec::full_quadratic(q);
    let candidates = candidate_set(&region);
    let criterion = CriterionConfig::single(CriterionKind::Id, &model);

    println!(
        "I_D check of the central composite design, q = {q}, sphere rho = sqrt({q}), \
         {} factorial portion, {} starts, seed {}",
        if half { "half-replicate" } else { "full" },
        args.starts,
        args.seed
    );
    for n in n_lo..=n_hi {
        let centers = n - base;
        let ccd = central_composite(q, region.rho(), centers, half);
        let mut search = SearchConfig::new(n, candidates.clone(), criterion.clone());
        search.starts = args.starts;
        search.seed = args.seed;
        search.log_progress = args.progress;
        let report = verify_optimal(&ccd, &search)?;
        let verdict = if report.not_improved_upon {
            "CCD not improved upon".to_string()
        } else {
            format!("improved upon (relative gap {:.3e})", report.relative_gap)
        };
        println!(
            "q={q} n={n} centers={centers}: {verdict} [ccd {:.9e}, search best {:.9e}]",
            report.candidate_value.value, report.search.value.value
        );
    }
    Ok(())
}

pub struct CandidatesArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
}

pub fn cmd_candidates(args: CandidatesArgs) -> Result<()> {
    let file = FileConfig::load(&args.config)?;
    let region = file.region()?;
    let candidates = candidate_set(&region);
    let mut comments = region_comments(&region);
    comments.push(("points".into(), candidates.len().to_string()));
    let mut out = open_output(args.out.as_deref())?;
    rio::write_candidate_set(&mut out, &candidates, &comments)?;
    Ok(())
}
