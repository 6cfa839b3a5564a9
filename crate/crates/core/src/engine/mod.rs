//! Gradients, optimisation, negative sampling, and the training loop.

mod backward;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::DatasetBundle;
use crate::error::{Error, Result};
use crate::eval::{build_tasks, rank_and_score, Split, TaskSet};
use crate::model::{
    forward, total_loss, Gradients, HyperParams, ModelData, ParamGroup, Parameters, TrainTuple,
};

pub use backward::{backward, GradientMode};

/// Rejection-sampling attempts before giving up on a user.
pub const NEGATIVE_RETRY_CAP: usize = 100;

/// Salt mixed into the seed for the validation task RNG.
const VALID_STREAM: u64 = 0x05ee_d0f7_a11d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Parameters,
    pub v: Parameters,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    params: &mut Parameters,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::Data("optimizer state does not match parameter shapes".into()));
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for g in ParamGroup::ALL {
        let p = params.group_mut(g);
        let m = state.m.group_mut(g);
        let v = state.v.group_mut(g);
        for (((p, m), v), &d) in p.iter_mut().zip(m).zip(v).zip(grads.group(g)) {
            *m = b1 * *m + (1.0 - b1) * d;
            *v = b2 * *v + (1.0 - b2) * d * d;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
    Ok(())
}

/// One negative per entry of `users`: a uniform draw from `0..n_items`
/// outside the user's sorted interaction list.
pub fn sample_negatives<R: Rng>(
    users: &[usize],
    interacted: &[Vec<usize>],
    n_items: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    users
        .iter()
        .map(|&u| {
            let seen = &interacted[u];
            if seen.len() >= n_items {
                return Err(Error::Data(format!(
                    "user {u} has interacted with every item; no negative exists"
                )));
            }
            for _ in 0..NEGATIVE_RETRY_CAP {
                let v = rng.random_range(0..n_items);
                if seen.binary_search(&v).is_err() {
                    return Ok(v);
                }
            }
            Err(Error::Data(format!(
                "no negative for user {u} after {NEGATIVE_RETRY_CAP} draws ({} of {n_items} items interacted)",
                seen.len()
            )))
        })
        .collect()
}

/// Everything needed to resume or evaluate a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hp: HyperParams,
    pub params: Parameters,
    pub rng: ChaCha8Rng,
    /// Epoch the parameters come from; 0 is the initialisation.
    pub epoch: usize,
    pub valid_hr5: f64,
    pub valid_ndcg5: f64,
}

impl Checkpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::archive::write(path, crate::archive::kind::CHECKPOINT, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::archive::read(path, crate::archive::kind::CHECKPOINT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// BPR per training tuple.
    pub bpr: f64,
    /// Batch-mean restriction loss sum, unweighted.
    pub rs: f64,
    /// Batch-mean dimension-reduction loss, unweighted.
    pub dr: f64,
    /// `||theta||^2` after the epoch.
    pub reg: f64,
    /// Mean weighted batch loss.
    pub total: f64,
    pub valid_hr5: f64,
    pub valid_ndcg5: f64,
}

impl EpochLog {
    pub fn line(&self) -> String {
        format!(
            "epoch {:>3}  bpr {:.6}  rs {:.6}  dr {:.6}  reg {:.4}  valid hr@5 {:.4}  ndcg@5 {:.4}",
            self.epoch, self.bpr, self.rs, self.dr, self.reg, self.valid_hr5, self.valid_ndcg5
        )
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Best-validation checkpoint.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub diverged: Option<Error>,
}

/// Training tuples `(u, v, c)` from the target train split.
pub fn train_tuples(bundle: &DatasetBundle, data: &ModelData) -> Vec<TrainTuple> {
    bundle
        .train
        .iter()
        .map(|r| TrainTuple {
            user: r.user,
            item: r.item,
            cluster: data.item_cluster[r.item],
            neg_item: r.item,
            neg_cluster: data.item_cluster[r.item],
        })
        .collect()
}

fn validate_once(
    tasks: &TaskSet,
    params: &Parameters,
    data: &ModelData,
    hp: &HyperParams,
) -> Result<(f64, f64)> {
    let r = rank_and_score(tasks, params, data, hp, &[5])?;
    Ok((r.hr[0], r.ndcg[0]))
}

/// Mini-batch training with per-epoch negative resampling and early
/// stopping on validation HR@5.
pub fn train(bundle: &DatasetBundle, data: &ModelData, hp: &HyperParams) -> Result<TrainOutcome> {
    train_with(bundle, data, hp, |_, _| {})
}

/// [`train`] with a callback per finished epoch, given the log entry and
/// the parameters at the end of that epoch.
pub fn train_with(
    bundle: &DatasetBundle,
    data: &ModelData,
    hp: &HyperParams,
    mut on_epoch: impl FnMut(&EpochLog, &Parameters),
) -> Result<TrainOutcome> {
    hp.validate()?;
    if data.k() != hp.k {
        return Err(Error::config(
            "k",
            format!("hyper-parameters ask for {} clusters, semantics have {}", hp.k, data.k()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut valid_rng = ChaCha8Rng::seed_from_u64(hp.seed ^ VALID_STREAM);
    let tasks = build_tasks(bundle, Split::Valid, hp.eval_negatives, &mut valid_rng);
    if tasks.tasks.is_empty() {
        return Err(Error::Data(format!(
            "no validation task has {} eligible negatives",
            hp.eval_negatives
        )));
    }

    let mut params = Parameters::init(data.n_users(), data.k(), data.text_dim(), hp, &mut rng);
    let mut adam = AdamState::new(&params);
    let (hr, ndcg) = validate_once(&tasks, &params, data, hp)?;
    let mut best = Checkpoint {
        hp: hp.clone(),
        params: params.clone(),
        rng: rng.clone(),
        epoch: 0,
        valid_hr5: hr,
        valid_ndcg5: ndcg,
    };
    let mut since_best = 0;
    let mut log = Vec::new();
    let mut tuples = train_tuples(bundle, data);
    let n_items = data.n_target_items();

    for epoch in 1..=hp.max_epochs {
        tuples.shuffle(&mut rng);
        let users: Vec<usize> = tuples.iter().map(|t| t.user).collect();
        let negatives = sample_negatives(&users, &bundle.user_items, n_items, &mut rng)?;
        for (t, n) in tuples.iter_mut().zip(negatives) {
            t.neg_item = n;
            t.neg_cluster = data.item_cluster[n];
        }

        let (mut bpr, mut rs, mut dr, mut total) = (0.0, 0.0, 0.0, 0.0);
        let mut batches = 0;
        let mut failure = None;
        for (b, batch) in tuples.chunks(hp.batch_size).enumerate() {
            let cache = forward(&params, data, hp);
            let loss = total_loss(batch, &cache, &params, data, hp);
            if !loss.total.is_finite() {
                failure = Some(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {b}"
                )));
                break;
            }
            let grads = match backward(batch, &cache, &params, data, hp, GradientMode::Detached, b) {
                Ok(g) => g,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            adam_step(&mut params, &grads, &mut adam, hp.learning_rate)?;
            bpr += loss.bpr;
            rs += loss.restriction.sum();
            dr += loss.dr;
            total += loss.total;
            batches += 1;
        }
        if failure.is_none() && !params.is_finite() {
            failure = Some(Error::Numeric(format!("parameters became non-finite in epoch {epoch}")));
        }
        if let Some(e) = failure {
            log::error!("training diverged: {e}; keeping checkpoint from epoch {}", best.epoch);
            return Ok(TrainOutcome {
                checkpoint: best,
                log,
                diverged: Some(e),
            });
        }

        let (hr, ndcg) = validate_once(&tasks, &params, data, hp)?;
        let nb = batches.max(1) as f64;
        let entry = EpochLog {
            epoch,
            bpr: bpr / tuples.len().max(1) as f64,
            rs: rs / nb,
            dr: dr / nb,
            reg: crate::model::squared_norm(&params, hp),
            total: total / nb,
            valid_hr5: hr,
            valid_ndcg5: ndcg,
        };
        on_epoch(&entry, &params);
        log.push(entry);

        if hr > best.valid_hr5 {
            best = Checkpoint {
                hp: hp.clone(),
                params: params.clone(),
                rng: rng.clone(),
                epoch,
                valid_hr5: hr,
                valid_ndcg5: ndcg,
            };
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hp.patience {
                log::info!("no validation gain for {} epochs; stopping at epoch {epoch}", hp.patience);
                break;
            }
        }
    }
    Ok(TrainOutcome {
        checkpoint: best,
        log,
        diverged: None,
    })
}
