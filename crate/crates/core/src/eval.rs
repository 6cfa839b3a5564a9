//! Sampled leave-one-out ranking evaluation.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataio::DatasetBundle;
use crate::error::{Error, Result};
use crate::model::{forward, HyperParams, ModelData, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Valid,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::config("split", format!("unknown split `{other}` (valid, test)"))),
        }
    }
}

/// A held-out item to be ranked among sampled non-interacted items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingTask {
    pub user: usize,
    pub target: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<RankingTask>,
    /// Users without enough eligible negatives.
    pub skipped: usize,
}

/// One task per target user with a record in `split`. Negatives are drawn
/// uniformly without replacement from target items the user never touched
/// in any split.
pub fn build_tasks<R: Rng>(
    bundle: &DatasetBundle,
    split: Split,
    n_negatives: usize,
    rng: &mut R,
) -> TaskSet {
    let records = match split {
        Split::Valid => &bundle.valid,
        Split::Test => &bundle.test,
    };
    let n_items = bundle.n_target_items();
    let mut tasks = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for r in records {
        let eligible: Vec<usize> = (0..n_items)
            .filter(|&i| !bundle.has_interacted(r.user, i))
            .collect();
        if eligible.len() < n_negatives {
            log::warn!(
                "user {} has {} eligible negatives, {} needed; skipped",
                bundle.target_users[r.user],
                eligible.len(),
                n_negatives
            );
            skipped += 1;
            continue;
        }
        let negatives = rand::seq::index::sample(rng, eligible.len(), n_negatives)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        tasks.push(RankingTask {
            user: r.user,
            target: r.item,
            negatives,
        });
    }
    if skipped > 0 {
        log::warn!("{skipped} user(s) skipped for lack of negatives");
    }
    TaskSet { tasks, skipped }
}

/// 1-based rank of the target: candidates scoring higher come first, equal
/// scores are ordered by ascending item index.
pub fn target_rank(task: &RankingTask, score: impl Fn(usize) -> f64) -> usize {
    let st = score(task.target);
    1 + task
        .negatives
        .iter()
        .filter(|&&n| {
            let s = score(n);
            s > st || (s == st && n < task.target)
        })
        .count()
}

/// `(HR@K, NDCG@K)` of one rank.
pub fn hit_and_gain(rank: usize, k: usize) -> (f64, f64) {
    if rank <= k {
        (1.0, 1.0 / ((rank + 1) as f64).log2())
    } else {
        (0.0, 0.0)
    }
}

/// Mean HR and NDCG per cutoff.
pub fn metrics_from_ranks(ranks: &[usize], ks: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = ranks.len().max(1) as f64;
    ks.iter()
        .map(|&k| {
            let (h, g) = ranks.iter().fold((0.0, 0.0), |(h, g), &r| {
                let (a, b) = hit_and_gain(r, k);
                (h + a, g + b)
            });
            (h / n, g / n)
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    /// 95% half-widths across runs; absent for a single run.
    pub hr_ci: Option<Vec<f64>>,
    pub ndcg_ci: Option<Vec<f64>>,
    pub runs: usize,
    /// Tasks per run.
    pub tasks: usize,
    pub skipped: usize,
}

/// Rank every task under `score(user, item)` and average the metrics.
pub fn rank_tasks(
    tasks: &TaskSet,
    ks: &[usize],
    score: impl Fn(usize, usize) -> f64 + Sync,
) -> EvalReport {
    let ranks: Vec<usize> = tasks
        .tasks
        .par_iter()
        .map(|t| target_rank(t, |i| score(t.user, i)))
        .collect();
    let (hr, ndcg) = metrics_from_ranks(&ranks, ks);
    EvalReport {
        ks: ks.to_vec(),
        hr,
        ndcg,
        hr_ci: None,
        ndcg_ci: None,
        runs: 1,
        tasks: ranks.len(),
        skipped: tasks.skipped,
    }
}

/// Score tasks with the model's final representations.
pub fn rank_and_score(
    tasks: &TaskSet,
    params: &Parameters,
    data: &ModelData,
    hp: &HyperParams,
    ks: &[usize],
) -> Result<EvalReport> {
    data.check(params)?;
    if let Some(t) = tasks
        .tasks
        .iter()
        .find(|t| t.user >= data.n_target_users || t.negatives.iter().chain([&t.target]).any(|&i| i >= data.n_target_items()))
    {
        return Err(Error::Data(format!(
            "task for user {} references ids outside the checkpoint",
            t.user
        )));
    }
    let cache = forward(params, data, hp);
    let user = cache.user_final();
    let item = cache.item_final();
    Ok(rank_tasks(tasks, ks, |u, i| user.row(u).dot(&item.row(i))))
}

/// 97.5% quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Mean and 95% t-interval half-width of a sample of at least two values.
pub fn mean_and_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, t_quantile_975(values.len() - 1) * (var / n).sqrt())
}

/// Combine per-seed reports into means with 95% Student-t half-widths.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Data("no evaluation runs to aggregate".into()))?;
    if reports.iter().any(|r| r.ks != first.ks) {
        return Err(Error::Data("runs were evaluated at different cutoffs".into()));
    }
    if reports.len() == 1 {
        let mut r = first.clone();
        r.hr_ci = None;
        r.ndcg_ci = None;
        return Ok(r);
    }
    let column = |f: &dyn Fn(&EvalReport) -> &Vec<f64>, j: usize| -> (f64, f64) {
        let vals: Vec<f64> = reports.iter().map(|r| f(r)[j]).collect();
        mean_and_half_width(&vals)
    };
    let (hr, hr_ci): (Vec<f64>, Vec<f64>) = (0..first.ks.len()).map(|j| column(&|r| &r.hr, j)).unzip();
    let (ndcg, ndcg_ci): (Vec<f64>, Vec<f64>) =
        (0..first.ks.len()).map(|j| column(&|r| &r.ndcg, j)).unzip();
    Ok(EvalReport {
        ks: first.ks.clone(),
        hr,
        ndcg,
        hr_ci: Some(hr_ci),
        ndcg_ci: Some(ndcg_ci),
        runs: reports.len(),
        tasks: first.tasks,
        skipped: first.skipped,
    })
}

/// Plain-text table, one row per model: `HR@K` and `NDCG@K` columns with
/// `mean ± half-width` cells.
pub fn format_table(rows: &[(String, EvalReport)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = rows.first() else {
        return out;
    };
    let _ = write!(out, "{:<16}", "model");
    for k in &first.ks {
        let _ = write!(out, " {:>17} {:>17}", format!("HR@{k}"), format!("NDCG@{k}"));
    }
    out.push('\n');
    let cell = |m: f64, ci: Option<f64>| match ci {
        Some(c) => format!("{m:.3} ± {c:.3}"),
        None => format!("{m:.3}"),
    };
    for (name, r) in rows {
        let _ = write!(out, "{name:<16}");
        for j in 0..r.ks.len() {
            let _ = write!(
                out,
                " {:>17} {:>17}",
                cell(r.hr[j], r.hr_ci.as_ref().map(|c| c[j])),
                cell(r.ndcg[j], r.ndcg_ci.as_ref().map(|c| c[j]))
            );
        }
        out.push('\n');
    }
    out
}
