use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{ForwardCache, HyperParams, ModelData, ParamGroup, Parameters};

/// One training record `(u, v, c)` of the target domain with its sampled
/// negative item `v-` and that item's cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainTuple {
    pub user: usize,
    pub item: usize,
    pub cluster: usize,
    pub neg_item: usize,
    pub neg_cluster: usize,
}

/// `ln(sigmoid(x))` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-sum ln sigmoid(y_uv - y_uv-)` over the batch (a sum, not a mean).
pub fn bpr_loss(batch: &[TrainTuple], cache: &ForwardCache) -> f64 {
    let f = &cache.finals;
    batch
        .iter()
        .map(|t| {
            let u = f.user.row(t.user);
            let diff = u.dot(&f.item.row(t.item)) - u.dot(&f.item.row(t.neg_item));
            -log_sigmoid(diff)
        })
        .sum()
}

/// Cosine similarity, defined as 0 when either vector has zero norm. The
/// flag reports that case.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> (f64, bool) {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        (0.0, true)
    } else {
        (a.dot(&b) / (na * nb), false)
    }
}

/// Dimension-reduction loss: mean over the batch of the squared change in
/// item-pair and cluster-pair cosine similarity caused by the reduction.
/// Returns the loss and how many cosines hit a zero-norm vector.
pub fn dr_loss(batch: &[TrainTuple], cache: &ForwardCache, data: &ModelData) -> (f64, usize) {
    if batch.is_empty() {
        return (0.0, 0);
    }
    let mut zero = 0;
    let mut total = 0.0;
    let mut cos = |a: ArrayView1<f64>, b: ArrayView1<f64>| {
        let (c, z) = cosine(a, b);
        zero += z as usize;
        c
    };
    for t in batch {
        let item = cos(
            cache.item_embedding.row(t.item),
            cache.item_embedding.row(t.neg_item),
        ) - cos(data.item_text.row(t.item), data.item_text.row(t.neg_item));
        let cluster = cos(
            cache.cluster_embedding.row(t.cluster),
            cache.cluster_embedding.row(t.neg_cluster),
        ) - cos(
            data.cluster_text.row(t.cluster),
            data.cluster_text.row(t.neg_cluster),
        );
        total += item * item + cluster * cluster;
    }
    (total / batch.len() as f64, zero)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RestrictionLosses {
    /// Prediction level, mean over batch tuples.
    pub rsp: f64,
    /// User level, mean over all users.
    pub rsu: f64,
    /// Cluster level, mean over all clusters.
    pub rsc: f64,
}

impl RestrictionLosses {
    pub fn sum(&self) -> f64 {
        self.rsp + self.rsu + self.rsc
    }
}

/// User representation the restriction losses compare against the biased one.
pub(crate) fn restricted_user<'a>(cache: &'a ForwardCache, hp: &HyperParams) -> &'a Array2<f64> {
    if hp.restrict_full_user {
        &cache.finals.user
    } else {
        &cache.finals.user_cross
    }
}

/// Prediction- and individual-level restriction losses. Zero when the
/// model has no user-cluster graph.
pub fn restriction_losses(
    batch: &[TrainTuple],
    cache: &ForwardCache,
    params: &Parameters,
    hp: &HyperParams,
) -> RestrictionLosses {
    if !hp.ablation.uses_cross_graph() {
        return RestrictionLosses::default();
    }
    let f = &cache.finals;
    let user = restricted_user(cache, hp);
    let au = &params.user_debias;
    let ac = &params.cluster_debias;

    let rsp = if batch.is_empty() {
        0.0
    } else {
        batch
            .iter()
            .map(|t| {
                let a_uc = au.row(t.user).dot(&ac.row(t.cluster));
                let y = user.row(t.user).dot(&f.cluster.row(t.cluster));
                let y_biased = f.user_biased.row(t.user).dot(&f.cluster_biased.row(t.cluster));
                let r = y - a_uc * y_biased;
                r * r
            })
            .sum::<f64>()
            / batch.len() as f64
    };

    let individual = |unbiased: &Array2<f64>, biased: &Array2<f64>, a: &Array2<f64>| -> f64 {
        let n = unbiased.nrows();
        if n == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..n {
            for ((x, y), w) in unbiased.row(i).iter().zip(biased.row(i)).zip(a.row(i)) {
                let r = x - w * y;
                total += r * r;
            }
        }
        total / n as f64
    };

    RestrictionLosses {
        rsp,
        rsu: individual(user, &f.user_biased, au),
        rsc: individual(&f.cluster, &f.cluster_biased, ac),
    }
}

/// Parameter groups covered by the regulariser; debias vectors drop out
/// when the ablation leaves them unused.
pub(crate) fn regularized_groups(hp: &HyperParams) -> impl Iterator<Item = ParamGroup> + '_ {
    ParamGroup::ALL
        .into_iter()
        .filter(move |g| hp.ablation.uses_debias() || !g.is_debias())
}

/// `||theta||^2` over the regularised groups.
pub fn squared_norm(params: &Parameters, hp: &HyperParams) -> f64 {
    regularized_groups(hp)
        .map(|g| params.group(g).iter().map(|x| x * x).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bpr: f64,
    pub restriction: RestrictionLosses,
    pub dr: f64,
    /// Unweighted `||theta||^2`.
    pub reg: f64,
    pub total: f64,
    /// Cosines evaluated against a zero-norm vector.
    pub zero_norm_cosines: usize,
}

/// `L_bpr + l1 L_rs + l2 L_dr + l3 ||theta||^2` with ablation-adjusted weights.
pub fn total_loss(
    batch: &[TrainTuple],
    cache: &ForwardCache,
    params: &Parameters,
    data: &ModelData,
    hp: &HyperParams,
) -> LossBreakdown {
    let bpr = bpr_loss(batch, cache);
    let restriction = restriction_losses(batch, cache, params, hp);
    let (dr, zero_norm_cosines) = dr_loss(batch, cache, data);
    let reg = squared_norm(params, hp);
    let total = bpr
        + hp.effective_lambda_rs() * restriction.sum()
        + hp.effective_lambda_dr() * dr
        + hp.lambda_reg * reg;
    LossBreakdown {
        bpr,
        restriction,
        dr,
        reg,
        total,
        zero_norm_cosines,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((-log_sigmoid(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let big = -log_sigmoid(40.0);
        // -ln sigmoid(40) = ln(1 + e^-40) ~ e^-40
        assert!(big > 0.0 && (big - (-40.0f64).exp()).abs() < 1e-30);
        let neg = -log_sigmoid(-800.0);
        assert!((neg - 800.0).abs() < 1e-9);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        let (c, z) = cosine(array![0.0, 0.0].view(), array![1.0, 0.0].view());
        assert_eq!((c, z), (0.0, true));
        let (c, z) = cosine(array![1.0, 0.0].view(), array![0.0, 3.0].view());
        assert_eq!((c, z), (0.0, false));
    }
}
