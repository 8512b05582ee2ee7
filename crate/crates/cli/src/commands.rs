use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use warpreg::io::{self, format_f64, CurveSet};
use warpreg::metrics;
use warpreg::quad::uniform_grid;
use warpreg::{
    generate, register_set, select_reference_j, select_reference_power, BasisKind, BasisSpec,
    DatasetConfig, MonotoneWarp, RegistrationConfig, RegistrationResult, SampledCurve, TrueWarp,
};

use crate::args::RefSpec;
use crate::manifest::{write_json, Job, RunManifest};

/// Basis orders visited by `evaluate --sweep`.
pub const SWEEP_ORDERS: [usize; 8] = [10, 15, 20, 25, 30, 35, 40, 45];

/// Points at which estimated warps are tabulated.
const WARP_TABLE_POINTS: usize = 1001;

/// Whether a completed command hit numerical failures on part of its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Outcome {
    pub partial_failure: bool,
}

/// How the reference of a run was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    /// 0-based position in the curve file.
    pub index: usize,
    pub curve_id: u64,
    pub method: String,
    /// Per-candidate scores; `null` marks an excluded candidate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<Option<f64>>>,
}

pub fn execute(job: &Job, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    match job {
        Job::Simulate { config } => simulate(config, out),
        Job::Register { curves, reference, config } => register(curves, *reference, config, out),
        Job::SelectRef { curves, reference, config } => select_ref(curves, *reference, config, out),
        Job::Evaluate { run, truth, sweep } => evaluate(run, truth.as_deref(), *sweep, out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn simulate(config: &DatasetConfig, out: &Path) -> Result<Outcome> {
    let ds = generate(config)?;
    let ids: Vec<u64> = (0..ds.curves.len() as u64).collect();
    io::write_long_csv(create(&out.join("curves.csv"))?, "value", &ids, &ds.curves)?;

    let grid = ds.grid().to_vec();
    let truth = ds
        .true_warps
        .iter()
        .map(|w| SampledCurve::new(grid.clone(), grid.iter().map(|&t| w.eval(t)).collect()))
        .collect::<warpreg::Result<Vec<_>>>()?;
    io::write_long_csv(create(&out.join("true_warps.csv"))?, "h", &ids, &truth)?;

    let params = ds.true_warps.iter().zip(&ids).map(|(w, id)| {
        let (family, b, c) = match *w {
            TrueWarp::Identity => ("none", 0.0, 0),
            TrueWarp::F1 { b } => ("f1", b, 0),
            TrueWarp::F2 { b, c } => ("f2", b, c),
        };
        vec![id.to_string(), family.to_owned(), format_f64(b), c.to_string()]
    });
    io::write_table(create(&out.join("true_params.csv"))?, &["curve_id", "family", "b", "c"], params)?;

    let (centers, widths) = config.terms()?;
    let echo = DatasetConfig {
        centers: Some(centers),
        widths: Some(widths),
        ..config.clone()
    };
    write_json(&out.join("config.json"), &echo)?;
    Ok(Outcome::default())
}

fn read_curves(path: &Path) -> Result<CurveSet> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let set = io::read_long_csv(file, "value")
        .with_context(|| format!("cannot parse {}", path.display()))?;
    if !set.has_common_grid() {
        bail!("curves in {} do not share a common grid", path.display());
    }
    Ok(set)
}

fn choose_reference(set: &CurveSet, spec: RefSpec, config: &RegistrationConfig) -> Result<ReferenceRecord> {
    let finite = |s: &[f64]| s.iter().map(|v| v.is_finite().then_some(*v)).collect();
    let (index, method, scores) = match spec {
        RefSpec::Index(i) => {
            if i >= set.len() {
                bail!("reference index {i} out of range for {} curves", set.len());
            }
            (i, "given", None)
        }
        RefSpec::AutoJ => {
            let c = select_reference_j(&set.curves, config)?;
            (c.index, "j_criterion", Some(finite(&c.scores)))
        }
        RefSpec::AutoPower => {
            let c = select_reference_power(&set.curves)?;
            (c.index, "half_power_median", Some(finite(&c.scores)))
        }
    };
    Ok(ReferenceRecord {
        index,
        curve_id: set.ids[index],
        method: method.to_owned(),
        scores,
    })
}

fn select_ref(curves: &Path, spec: RefSpec, config: &RegistrationConfig, out: &Path) -> Result<Outcome> {
    if let RefSpec::Index(_) = spec {
        bail!("select-ref needs `--ref auto-j` or `--ref auto-power`");
    }
    let set = read_curves(curves)?;
    let record = choose_reference(&set, spec, config)?;
    write_json(&out.join("config.json"), config)?;
    write_json(&out.join("reference.json"), &record)?;
    if let Some(scores) = &record.scores {
        let rows = set.ids.iter().zip(scores).map(|(id, s)| {
            vec![id.to_string(), s.map(format_f64).unwrap_or_default()]
        });
        io::write_table(create(&out.join("scores.csv"))?, &["curve_id", "score"], rows)?;
    }
    println!("{}", record.curve_id);
    Ok(Outcome::default())
}

fn opt_f64(v: f64) -> String {
    if v.is_finite() {
        format_f64(v)
    } else {
        String::new()
    }
}

fn register(curves: &Path, spec: RefSpec, config: &RegistrationConfig, out: &Path) -> Result<Outcome> {
    let set = read_curves(curves)?;
    let record = choose_reference(&set, spec, config)?;
    let results = register_set(&set.curves, record.index, config)?;

    let mut partial = false;
    let mut rows = Vec::with_capacity(results.len());
    let mut ok_ids = Vec::new();
    let mut warps = Vec::new();
    let mut aligned = Vec::new();
    for (id, res) in set.ids.iter().zip(&results) {
        match res {
            Ok(r) => {
                report_warnings(*id, r);
                partial |= !r.report.converged;
                rows.push(vec![
                    id.to_string(),
                    opt_f64(r.amplitude),
                    opt_f64(r.prd),
                    opt_f64(r.criterion),
                    r.report.converged.to_string(),
                    r.report.iterations.to_string(),
                ]);
                ok_ids.push(*id);
                warps.push(r.warp.clone());
                aligned.push(r.aligned.clone());
            }
            Err(e) => {
                eprintln!("error: curve {id}: {e}");
                partial = true;
                rows.push(vec![id.to_string(), String::new(), String::new(), String::new(), "false".into(), "0".into()]);
            }
        }
    }

    write_json(&out.join("config.json"), config)?;
    write_json(&out.join("reference.json"), &record)?;
    io::write_table(
        create(&out.join("results.csv"))?,
        &["curve_id", "amplitude", "prd", "criterion", "converged", "iterations"],
        rows,
    )?;
    let grid = uniform_grid(WARP_TABLE_POINTS);
    let tables = warps
        .iter()
        .map(|w| SampledCurve::new(grid.clone(), w.eval_many(&grid)?))
        .collect::<warpreg::Result<Vec<_>>>()?;
    io::write_long_csv(create(&out.join("warps.csv"))?, "h_hat", &ok_ids, &tables)?;
    let coeff_rows = ok_ids.iter().zip(&warps).flat_map(|(id, w)| {
        w.canonical_coeffs()
            .into_iter()
            .enumerate()
            .map(move |(k, c)| vec![id.to_string(), k.to_string(), format_f64(c)])
    });
    io::write_table(create(&out.join("warp_coeffs.csv"))?, &["curve_id", "index", "coeff"], coeff_rows)?;
    io::write_long_csv(create(&out.join("aligned.csv"))?, "value", &ok_ids, &aligned)?;
    Ok(Outcome { partial_failure: partial })
}

fn report_warnings(id: u64, r: &RegistrationResult) {
    if r.masked_warning {
        eprintln!(
            "warning: curve {id}: {:.1}% of evaluation points masked near zeros of the expansions",
            100.0 * r.report.masked_fraction
        );
    }
    if r.degenerate_amplitude {
        eprintln!("warning: curve {id}: amplitude estimate is numerically zero; aligned curve left unscaled");
    }
    if r.report.clamped_exp {
        eprintln!("warning: curve {id}: warp log-rate reached the clamp");
    }
    if !r.report.converged {
        eprintln!("warning: curve {id}: solver stopped after {} iterations without converging", r.report.iterations);
    }
}

/// Per-curve row of a finished registration run.
struct RunRow {
    id: u64,
    prd: Option<f64>,
    converged: bool,
}

fn read_table_file(path: &Path) -> Result<io::Table> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    io::read_table(file).with_context(|| format!("cannot parse {}", path.display()))
}

fn parse_cell<T: std::str::FromStr>(cell: &str, what: &str) -> Result<T> {
    cell.parse().map_err(|_| anyhow!("cannot parse {what} `{cell}`"))
}

fn read_results(path: &Path) -> Result<Vec<RunRow>> {
    let table = read_table_file(path)?;
    let (id, prd, conv) = (table.column("curve_id")?, table.column("prd")?, table.column("converged")?);
    table
        .rows
        .iter()
        .map(|row| {
            Ok(RunRow {
                id: parse_cell(&row[id], "curve_id")?,
                prd: if row[prd].is_empty() { None } else { Some(parse_cell(&row[prd], "prd")?) },
                converged: parse_cell(&row[conv], "converged")?,
            })
        })
        .collect()
}

fn read_warps(path: &Path, config: &RegistrationConfig) -> Result<HashMap<u64, MonotoneWarp>> {
    let table = read_table_file(path)?;
    let (id, idx, coeff) = (table.column("curve_id")?, table.column("index")?, table.column("coeff")?);
    let mut coeffs: HashMap<u64, Vec<(usize, f64)>> = HashMap::new();
    for row in &table.rows {
        coeffs
            .entry(parse_cell(&row[id], "curve_id")?)
            .or_default()
            .push((parse_cell(&row[idx], "index")?, parse_cell(&row[coeff], "coeff")?));
    }
    coeffs
        .into_iter()
        .map(|(id, mut cs)| {
            cs.sort_by_key(|(k, _)| *k);
            let c: Vec<f64> = cs.into_iter().map(|(_, v)| v).collect();
            let w = MonotoneWarp::from_coeffs(&c, &config.warp_basis, config.quad_points)
                .with_context(|| format!("invalid warp coefficients for curve {id}"))?;
            Ok((id, w))
        })
        .collect()
}

/// Mean, median and maximum; NaN for an empty list.
fn summary_stats(values: &[f64]) -> [f64; 3] {
    if values.is_empty() {
        return [f64::NAN; 3];
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [mean, metrics::median(values).unwrap_or(f64::NAN), max]
}

fn evaluate(run: &Path, truth: Option<&Path>, sweep: bool, out: &Path) -> Result<Outcome> {
    let manifest = RunManifest::read(&run.join(crate::manifest::MANIFEST_FILE))?;
    let Job::Register { curves: curves_path, config, .. } = manifest.job else {
        bail!("{} is not the output of a register run", run.display());
    };
    let reference: ReferenceRecord = serde_json::from_str(
        &fs::read_to_string(run.join("reference.json")).context("cannot read reference.json")?,
    )
    .context("invalid reference.json")?;
    let set = read_curves(&curves_path)?;
    let rows = read_results(&run.join("results.csv"))?;
    let aligned_file = File::open(run.join("aligned.csv")).context("cannot open aligned.csv")?;
    let aligned = io::read_long_csv(aligned_file, "value").context("cannot parse aligned.csv")?;
    let warps = read_warps(&run.join("warp_coeffs.csv"), &config)?;

    let position: HashMap<u64, usize> = set.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let ok: Vec<&RunRow> = rows.iter().filter(|r| r.prd.is_some()).collect();
    let prds: Vec<f64> = ok.iter().filter_map(|r| r.prd).collect();
    let before: Vec<SampledCurve> = aligned
        .ids
        .iter()
        .map(|id| {
            position
                .get(id)
                .map(|&i| set.curves[i].clone())
                .ok_or_else(|| anyhow!("curve {id} of aligned.csv is not in the input"))
        })
        .collect::<Result<_>>()?;
    let (var_before, var_after) = metrics::variance_reduction(&before, &aligned.curves)?;

    let rmse = match truth {
        Some(dir) => Some(warp_rmse(dir, reference.curve_id, &ok, &warps)?),
        None => None,
    };

    let [prd_mean, prd_median, prd_max] = summary_stats(&prds);
    let count = |n: usize| n.to_string();
    let mut summary = vec![
        ("n_curves", count(rows.len())),
        ("n_registered", count(ok.len())),
        ("n_converged", count(rows.iter().filter(|r| r.converged).count())),
        ("reference_curve_id", reference.curve_id.to_string()),
        ("prd_mean", opt_f64(prd_mean)),
        ("prd_median", opt_f64(prd_median)),
        ("prd_max", opt_f64(prd_max)),
        ("variance_before", opt_f64(var_before)),
        ("variance_after", opt_f64(var_after)),
        ("variance_ratio", opt_f64(var_after / var_before)),
    ];
    if let Some(per_curve) = &rmse {
        let values: Vec<f64> = per_curve.values().copied().collect();
        let [mean, median, max] = summary_stats(&values);
        summary.extend([
            ("warp_rmse_mean", opt_f64(mean)),
            ("warp_rmse_median", opt_f64(median)),
            ("warp_rmse_max", opt_f64(max)),
        ]);
    }
    io::write_table(
        create(&out.join("summary.csv"))?,
        &["metric", "value"],
        summary.into_iter().map(|(k, v)| vec![k.to_owned(), v]),
    )?;
    let per_curve = rows.iter().map(|r| {
        let e = rmse.as_ref().and_then(|m| m.get(&r.id)).copied().unwrap_or(f64::NAN);
        vec![r.id.to_string(), r.prd.map(opt_f64).unwrap_or_default(), opt_f64(e)]
    });
    io::write_table(create(&out.join("per_curve.csv"))?, &["curve_id", "prd", "warp_rmse"], per_curve)?;

    let mut outcome = Outcome::default();
    if sweep {
        outcome.partial_failure = sweep_orders(&set, reference.index, &config, out)?;
    }
    Ok(outcome)
}

/// RMSE of each estimated warp against the warp it should recover, `h_ref⁻¹ ∘ h_i`.
fn warp_rmse(
    dir: &Path,
    ref_id: u64,
    ok: &[&RunRow],
    warps: &HashMap<u64, MonotoneWarp>,
) -> Result<BTreeMap<u64, f64>> {
    let path = dir.join("true_warps.csv");
    let file = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    let truth = io::read_long_csv(file, "h").with_context(|| format!("cannot parse {}", path.display()))?;
    let lookup = |id: u64| {
        truth
            .ids
            .iter()
            .position(|x| *x == id)
            .map(|i| &truth.curves[i])
            .ok_or_else(|| anyhow!("no true warp for curve {id}"))
    };
    let h_ref = lookup(ref_id)?;
    let h_ref_inv = SampledCurve::new(h_ref.values().to_vec(), h_ref.grid().to_vec())
        .context("true reference warp is not strictly increasing")?;
    let grid = uniform_grid(WARP_TABLE_POINTS);
    ok.iter()
        .map(|r| {
            let h_i = lookup(r.id)?;
            let w = warps.get(&r.id).ok_or_else(|| anyhow!("no estimated warp for curve {}", r.id))?;
            let e = metrics::warp_recovery_rmse(w, |t| h_ref_inv.interp(h_i.interp(t)), &grid)?;
            Ok((r.id, e))
        })
        .collect()
}

/// Re-registers the run's curves with every sweep order and both basis kinds.
/// Returns true when some registration failed outright.
fn sweep_orders(set: &CurveSet, ref_index: usize, config: &RegistrationConfig, out: &Path) -> Result<bool> {
    let degree = match config.basis.kind() {
        BasisKind::Bspline => config.basis.degree(),
        BasisKind::Fourier => 3,
    };
    let mut rows = Vec::new();
    let mut failed = false;
    for kind in [BasisKind::Fourier, BasisKind::Bspline] {
        for order in SWEEP_ORDERS {
            let basis = match kind {
                BasisKind::Fourier => BasisSpec::fourier(order)?,
                BasisKind::Bspline => BasisSpec::bspline(order, degree)?,
            };
            let cfg = RegistrationConfig { basis, ..config.clone() };
            let name = match kind {
                BasisKind::Fourier => "fourier",
                BasisKind::Bspline => "bspline",
            };
            for (id, res) in set.ids.iter().zip(register_set(&set.curves, ref_index, &cfg)?) {
                match res {
                    Ok(r) => rows.push(vec![
                        name.to_owned(),
                        order.to_string(),
                        id.to_string(),
                        opt_f64(r.prd),
                        r.report.converged.to_string(),
                    ]),
                    Err(e) => {
                        eprintln!("error: {name} order {order}, curve {id}: {e}");
                        failed = true;
                    }
                }
            }
        }
    }
    io::write_table(
        create(&out.join("prd_by_order.csv"))?,
        &["basis", "order", "curve_id", "prd", "converged"],
        rows,
    )?;
    Ok(failed)
}
