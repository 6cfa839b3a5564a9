use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graphs::BipartiteGraph;
use crate::model::{
    cosine, propagate, ForwardCache, Gradients, HyperParams, ModelData, ParamGroup, Parameters,
    TrainTuple,
};

/// How the debiasing vectors inside the debias convolution are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Constants inside convolution; the training mode.
    Detached,
    /// Differentiated through every path. Reference only.
    Full,
}

/// Adjoints of the aggregated representations plus direct adjoints of the
/// reduced embeddings.
struct Adjoints {
    /// Flows into both graphs.
    user_full: Array2<f64>,
    /// Flows into the user-cluster graph only.
    user_cross: Array2<f64>,
    item: Array2<f64>,
    cluster: Array2<f64>,
    user_biased: Array2<f64>,
    cluster_biased: Array2<f64>,
    item_embedding: Array2<f64>,
    cluster_embedding: Array2<f64>,
}

/// Gradient of `cos(a, b)` with respect to both arguments; zero when either
/// vector has zero norm.
fn cosine_grad(a: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return (Array1::zeros(a.len()), Array1::zeros(b.len()));
    }
    let c = a.dot(&b) / (na * nb);
    let da = &b / (na * nb) - &a * (c / (na * na));
    let db = &a / (na * nb) - &b * (c / (nb * nb));
    (da, db)
}

/// Reverse pass through a stack of propagation layers.
///
/// `left_direct` is added to the adjoint of every left output from layer
/// `left_from` up, `right_direct` to every right output. Returns the
/// adjoints of the layer-0 inputs and accumulates per-edge weight
/// gradients into `edge_grad` when given.
#[allow(clippy::too_many_arguments)]
fn chain_backward(
    graph: &BipartiteGraph,
    weights: &[f64],
    left: &[Array2<f64>],
    right: &[Array2<f64>],
    left_direct: ArrayView2<f64>,
    left_from: usize,
    right_direct: ArrayView2<f64>,
    mut edge_grad: Option<&mut [f64]>,
) -> (Array2<f64>, Array2<f64>) {
    let top = left.len() - 1;
    let mut a_left = if top >= left_from {
        left_direct.to_owned()
    } else {
        Array2::zeros(left_direct.raw_dim())
    };
    let mut a_right = right_direct.to_owned();
    for l in (0..top).rev() {
        if let Some(g) = edge_grad.as_deref_mut() {
            for (e, (u, c)) in graph.edges().enumerate() {
                g[e] += a_left.row(u).dot(&right[l].row(c)) + a_right.row(c).dot(&left[l].row(u));
            }
        }
        let (pl, pr) = propagate(graph, weights, a_left.view(), a_right.view());
        a_left = pl;
        a_right = pr;
        if l >= left_from {
            a_left += &left_direct;
        }
        a_right += &right_direct;
    }
    (a_left, a_right)
}

fn loss_adjoints(
    batch: &[TrainTuple],
    cache: &ForwardCache,
    params: &Parameters,
    data: &ModelData,
    hp: &HyperParams,
    grads: &mut Gradients,
) -> Adjoints {
    let f = &cache.finals;
    let zeros = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
    let mut adj = Adjoints {
        user_full: zeros(&f.user),
        user_cross: zeros(&f.user_cross),
        item: zeros(&f.item),
        cluster: zeros(&f.cluster),
        user_biased: zeros(&f.user_biased),
        cluster_biased: zeros(&f.cluster_biased),
        item_embedding: zeros(&cache.item_embedding),
        cluster_embedding: zeros(&cache.cluster_embedding),
    };

    // BPR
    for t in batch {
        let u = f.user.row(t.user);
        let (vi, vj) = (f.item.row(t.item), f.item.row(t.neg_item));
        let s = u.dot(&vi) - u.dot(&vj);
        let coef = -crate::model::sigmoid(-s);
        adj.user_full.row_mut(t.user).scaled_add(coef, &(&vi - &vj));
        adj.item.row_mut(t.item).scaled_add(coef, &u);
        adj.item.row_mut(t.neg_item).scaled_add(-coef, &u);
    }

    // Restriction losses
    let l1 = hp.effective_lambda_rs();
    if hp.ablation.uses_cross_graph() && l1 != 0.0 {
        let user = crate::model::restricted_user(cache, hp);
        let mut d_user = Array2::zeros(user.raw_dim());
        let au = &params.user_debias;
        let ac = &params.cluster_debias;
        if !batch.is_empty() {
            let scale = 2.0 * l1 / batch.len() as f64;
            for t in batch {
                let (u, c) = (t.user, t.cluster);
                let a_uc = au.row(u).dot(&ac.row(c));
                let yb = f.user_biased.row(u).dot(&f.cluster_biased.row(c));
                let r = user.row(u).dot(&f.cluster.row(c)) - a_uc * yb;
                let coef = scale * r;
                d_user.row_mut(u).scaled_add(coef, &f.cluster.row(c));
                adj.cluster.row_mut(c).scaled_add(coef, &user.row(u));
                adj.user_biased
                    .row_mut(u)
                    .scaled_add(-coef * a_uc, &f.cluster_biased.row(c));
                adj.cluster_biased
                    .row_mut(c)
                    .scaled_add(-coef * a_uc, &f.user_biased.row(u));
                let d_auc = -coef * yb;
                grads.user_debias.row_mut(u).scaled_add(d_auc, &ac.row(c));
                grads.cluster_debias.row_mut(c).scaled_add(d_auc, &au.row(u));
            }
        }
        let n = user.nrows();
        if n > 0 {
            let coef = 2.0 * l1 / n as f64;
            let r = user - &(au * &f.user_biased);
            d_user.scaled_add(coef, &r);
            adj.user_biased.scaled_add(-coef, &(&r * au));
            grads.user_debias.scaled_add(-coef, &(&r * &f.user_biased));
        }
        let k = f.cluster.nrows();
        if k > 0 {
            let coef = 2.0 * l1 / k as f64;
            let r = &f.cluster - &(ac * &f.cluster_biased);
            adj.cluster.scaled_add(coef, &r);
            adj.cluster_biased.scaled_add(-coef, &(&r * ac));
            grads.cluster_debias.scaled_add(-coef, &(&r * &f.cluster_biased));
        }
        if hp.restrict_full_user {
            adj.user_full += &d_user;
        } else {
            adj.user_cross += &d_user;
        }
    }

    // Dimension-reduction loss
    let l2 = hp.effective_lambda_dr();
    if l2 != 0.0 && !batch.is_empty() {
        let scale = 2.0 * l2 / batch.len() as f64;
        let pair = |emb: &Array2<f64>, text: &Array2<f64>, out: &mut Array2<f64>, i: usize, j: usize| {
            let diff = cosine(emb.row(i), emb.row(j)).0 - cosine(text.row(i), text.row(j)).0;
            let (di, dj) = cosine_grad(emb.row(i), emb.row(j));
            out.row_mut(i).scaled_add(scale * diff, &di);
            out.row_mut(j).scaled_add(scale * diff, &dj);
        };
        for t in batch {
            pair(&cache.item_embedding, &data.item_text, &mut adj.item_embedding, t.item, t.neg_item);
            pair(
                &cache.cluster_embedding,
                &data.cluster_text,
                &mut adj.cluster_embedding,
                t.cluster,
                t.neg_cluster,
            );
        }
    }
    adj
}

/// Exact reverse-mode gradient of the total loss.
///
/// In [`GradientMode::Detached`] the debiasing vectors receive gradient only
/// from their explicit appearances in the restriction losses and from the
/// regulariser. Errors when any gradient entry is not finite, naming the
/// group and `batch_index`.
pub fn backward(
    batch: &[TrainTuple],
    cache: &ForwardCache,
    params: &Parameters,
    data: &ModelData,
    hp: &HyperParams,
    mode: GradientMode,
    batch_index: usize,
) -> Result<Gradients> {
    let mut grads = params.zeros_like();
    let adj = loss_adjoints(batch, cache, params, data, hp, &mut grads);
    let nt = data.n_target_users;
    let cross = hp.ablation.uses_cross_graph();

    let mut d_item_emb = adj.item_embedding;
    let mut d_cluster_emb = adj.cluster_embedding;

    // Target graph.
    let h_from = if cross && hp.dedup_layer0 { 1 } else { 0 };
    let (du, dv) = chain_backward(
        &data.graphs.target,
        data.graphs.target.norms(),
        &cache.h_user,
        &cache.h_item,
        adj.user_full.slice(s![..nt, ..]),
        h_from,
        adj.item.view(),
        None,
    );
    grads.user_embedding.slice_mut(s![..nt, ..]).scaled_add(1.0, &du);
    d_item_emb += &dv;

    if cross {
        let cg = &data.graphs.cross;
        let full = mode == GradientMode::Full && hp.ablation.uses_debias();
        let mut edge_grad = vec![0.0; if full { cg.edge_count() } else { 0 }];
        let direct = &adj.user_full + &adj.user_cross;
        let (du, dc) = chain_backward(
            cg,
            &cache.debias_weights,
            &cache.g_user,
            &cache.g_cluster,
            direct.view(),
            0,
            adj.cluster.view(),
            full.then_some(edge_grad.as_mut_slice()),
        );
        grads.user_embedding += &du;
        d_cluster_emb += &dc;

        let (du, dc) = chain_backward(
            cg,
            cg.norms(),
            &cache.gp_user,
            &cache.gp_cluster,
            adj.user_biased.view(),
            0,
            adj.cluster_biased.view(),
            None,
        );
        grads.user_embedding += &du;
        d_cluster_emb += &dc;

        if full {
            for ((e, (u, c)), norm) in cg.edges().enumerate().zip(cg.norms()) {
                let d_auc = edge_grad[e] * norm;
                grads
                    .user_debias
                    .row_mut(u)
                    .scaled_add(d_auc, &params.cluster_debias.row(c));
                grads
                    .cluster_debias
                    .row_mut(c)
                    .scaled_add(d_auc, &params.user_debias.row(u));
            }
        }
    }

    grads.reduce_weight = d_item_emb.t().dot(&data.item_text) + d_cluster_emb.t().dot(&data.cluster_text);
    grads.reduce_bias = d_item_emb.sum_axis(Axis(0)) + d_cluster_emb.sum_axis(Axis(0));

    for g in crate::model::regularized_groups(hp) {
        let reg = 2.0 * hp.lambda_reg;
        for (d, p) in grads.group_mut(g).iter_mut().zip(params.group(g)) {
            *d += reg * p;
        }
    }
    if !hp.ablation.uses_debias() {
        grads.user_debias.fill(0.0);
        grads.cluster_debias.fill(0.0);
    }

    for g in ParamGroup::ALL {
        if let Some(i) = grads.group(g).iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in {} (entry {i}) at batch {batch_index}",
                g.name()
            )));
        }
    }
    Ok(grads)
}
