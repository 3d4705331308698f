//! Figure and table data as CSV. Rendering is left to external plotters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use oranguide_core::env::SliceId;
use serde_json::json;

use crate::analysis::{
    ablation_rows, box_stats, empirical_cdf, moving_average, slice_rates, sweep_table, AblationRow, SweepRow, MIN_SEEDS,
};
use crate::error::BenchError;
use crate::experiment::OutputDir;
use crate::record::{load_records, write_atomic, RunRecord};
use crate::variant::VariantId;

pub const FIG3_FILE: &str = "fig3_boxplot.csv";
pub const FIG4_FILE: &str = "fig4_convergence.csv";
pub const FIG5_FILE: &str = "fig5_token_sweep.csv";
pub const FIG6_FILE: &str = "fig6_cdf.csv";
pub const TABLE3_FILE: &str = "table3_ablation.csv";
pub const TABLE3_META_FILE: &str = "table3_ablation.meta.json";

pub const FIG3_HEADER: &str = "variant,n_seeds,median,q1,q3,whisker_low,whisker_high,outliers";
pub const FIG4_HEADER: &str = "variant,seed,iteration,reward,moving_average";
pub const FIG5_HEADER: &str = "n_learnable,n_seeds,mean_max_reward,std_max_reward,is_argmax";
pub const FIG6_HEADER: &str = "variant,slice,rate_bps,cdf";
pub const TABLE3_HEADER: &str = "method,eMBB,mMTC,URLLC,RPI";

/// Which records to aggregate and how.
#[derive(Clone, Debug)]
pub struct ReportOptions {
    /// Prefix of the config hash to select; required when several configs share an output directory.
    pub config_hash: Option<String>,
    pub rpi_horizon: usize,
    pub moving_average: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            config_hash: None,
            rpi_horizon: 1000,
            moving_average: 100,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReportSummary {
    pub files: Vec<PathBuf>,
    /// Parts of the report left empty and why.
    pub notes: Vec<String>,
}

/// Aggregates the stored records of `out` into the five figure/table CSVs
/// under `out/report/`. Every file is written, with its header, even when
/// no data is available for it.
pub fn report(out: &OutputDir, options: &ReportOptions) -> Result<ReportSummary, BenchError> {
    let filter = options.config_hash.as_deref();
    let runs = select_single_config(load_records(&out.runs())?, filter, "runs")?;
    let sweep = load_sweep(out, filter)?;
    let dir = out.report();
    let mut summary = ReportSummary::default();
    if runs.is_empty() {
        summary.notes.push("no training runs found".into());
    }

    let mut fig3 = format!("{}\n", FIG3_HEADER);
    let mut by_variant: BTreeMap<VariantId, Vec<&RunRecord>> = BTreeMap::new();
    for r in &runs {
        by_variant.entry(r.variant).or_default().push(r);
    }
    for (variant, records) in &by_variant {
        if records.len() < MIN_SEEDS {
            summary.notes.push(format!(
                "{}: {} seeds, box statistics need {}",
                variant,
                records.len(),
                MIN_SEEDS
            ));
            continue;
        }
        let values: Vec<f64> = records.iter().map(|r| r.accumulated_reward).collect();
        let b = box_stats(&values)?;
        let outliers: Vec<String> = b.outliers.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            fig3,
            "{},{},{},{},{},{},{},{}",
            variant,
            b.n,
            b.median,
            b.q1,
            b.q3,
            b.whisker_low,
            b.whisker_high,
            outliers.join(";")
        );
    }
    summary.files.push(emit(&dir, FIG3_FILE, &fig3)?);

    let mut fig4 = format!("{}\n", FIG4_HEADER);
    for r in &runs {
        let ma = moving_average(&r.rewards, options.moving_average);
        for (i, (reward, avg)) in r.rewards.iter().zip(&ma).enumerate() {
            let _ = writeln!(fig4, "{},{},{},{},{}", r.variant, r.seed, i + 1, reward, avg);
        }
    }
    summary.files.push(emit(&dir, FIG4_FILE, &fig4)?);

    if sweep.is_empty() {
        summary.notes.push("no token-sweep runs found".into());
    }
    let fig5 = sweep_csv(&sweep_table(&sweep, options.moving_average));
    summary.files.push(emit(&dir, FIG5_FILE, &fig5)?);

    let mut fig6 = format!("{}\n", FIG6_HEADER);
    for (variant, records) in &by_variant {
        let owned: Vec<RunRecord> = records.iter().map(|r| (*r).clone()).collect();
        let filters = std::iter::once(None).chain(SliceId::ALL.into_iter().map(Some));
        for slice in filters {
            let rates = slice_rates(&owned, slice);
            if rates.is_empty() {
                continue;
            }
            let label = slice.map_or("all", SliceId::name);
            for (x, f) in empirical_cdf(&rates)? {
                let _ = writeln!(fig6, "{},{},{},{}", variant, label, x, f);
            }
        }
    }
    summary.files.push(emit(&dir, FIG6_FILE, &fig6)?);

    let rows = match ablation_rows(&runs, Some(options.rpi_horizon)) {
        Ok(rows) => rows,
        Err(e) => {
            summary.notes.push(format!("RPI column left empty: {}", e));
            ablation_rows(&runs, None)?
        }
    };
    summary.files.extend(write_ablation(&dir, &rows, options.rpi_horizon)?);
    Ok(summary)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{}\n", FIG5_HEADER);
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.n_learnable,
            r.per_seed.len(),
            r.mean,
            r.std,
            u8::from(r.is_argmax)
        );
    }
    s
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let cell = |v: Option<f64>, digits: usize| v.map_or(String::new(), |x| format!("{:.*}", digits, x));
    let mut s = format!("{}\n", TABLE3_HEADER);
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.variant,
            cell(r.satisfaction_pct[0], 1),
            cell(r.satisfaction_pct[1], 1),
            cell(r.satisfaction_pct[2], 1),
            cell(r.rpi.map(|v| 100.0 * v), 2)
        );
    }
    s
}

/// Writes the ablation table and a JSON file defining its columns.
pub fn write_ablation(dir: &Path, rows: &[AblationRow], rpi_horizon: usize) -> Result<Vec<PathBuf>, BenchError> {
    let meta = json!({
        "columns": {
            "method": "variant identifier",
            "eMBB": "percent of evaluation (epoch, DU) pairs with active eMBB UEs whose epoch-mean eMBB throughput met reward.thr[0]; mean over seeds",
            "mMTC": "percent of evaluation (epoch, DU) pairs with active mMTC UEs whose epoch-mean mMTC throughput met reward.thr[1]; mean over seeds",
            "URLLC": "percent of evaluation (epoch, DU) pairs with active URLLC UEs whose inverted latency max(latency_cap_s - l_d, 0) met reward.thr[2]; mean over seeds",
            "RPI": "percent; (Acc_m - Acc_b) / |Acc_b| with Acc the team reward summed over the first rpi_horizon training iterations and b = PLAIN_MARL of the same seed; mean over seeds",
        },
        "baseline": VariantId::BASELINE.name(),
        "rpi_horizon": rpi_horizon,
        "evaluation": "deterministic policy (tanh of the mean) on a fresh environment; no learning",
        "seeds": rows.iter().map(|r| json!({"method": r.variant.name(), "n_seeds": r.n_seeds})).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&meta).map_err(|e| BenchError::Analysis(e.to_string()))?;
    Ok(vec![
        emit(dir, TABLE3_FILE, &ablation_csv(rows))?,
        emit(dir, TABLE3_META_FILE, &format!("{}\n", text))?,
    ])
}

fn emit(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, BenchError> {
    let path = dir.join(name);
    write_atomic(&path, contents.as_bytes())?;
    Ok(path)
}

fn select_single_config(records: Vec<RunRecord>, filter: Option<&str>, what: &str) -> Result<Vec<RunRecord>, BenchError> {
    let selected: Vec<RunRecord> = records
        .into_iter()
        .filter(|r| filter.is_none_or(|f| r.config_hash.starts_with(f)))
        .collect();
    let hashes: BTreeSet<&str> = selected.iter().map(|r| &r.config_hash[..12.min(r.config_hash.len())]).collect();
    if hashes.len() > 1 {
        return Err(BenchError::Analysis(format!(
            "{} from {} configurations ({}); select one with a config hash",
            what,
            hashes.len(),
            hashes.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(selected)
}

fn load_sweep(out: &OutputDir, filter: Option<&str>) -> Result<Vec<RunRecord>, BenchError> {
    let root = out.sweeps();
    let mut groups = Vec::new();
    match fs::read_dir(&root) {
        Ok(entries) => {
            for entry in entries {
                let entry = entry.map_err(|e| BenchError::io(&root, e))?;
                let name = entry.file_name().to_string_lossy().into_owned();
                if entry.path().is_dir() && filter.is_none_or(|f| name.starts_with(f) || f.starts_with(&name)) {
                    groups.push((name, entry.path()));
                }
            }
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(BenchError::io(&root, e)),
    }
    groups.sort();
    match groups.len() {
        0 => Ok(Vec::new()),
        1 => load_records(&groups[0].1),
        n => Err(BenchError::Analysis(format!(
            "token sweeps from {} configurations ({}); select one with a config hash",
            n,
            groups.iter().map(|g| g.0.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}
