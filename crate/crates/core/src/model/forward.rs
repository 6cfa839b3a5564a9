use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::{HyperParams, ModelData, Parameters};
use crate::error::{Error, Result};
use crate::graphs::{BipartiteGraph, Side};

/// Affine reduction `W x + b` of one semantic vector.
pub fn reduce(x: ArrayView1<f64>, params: &Parameters) -> Result<Array1<f64>> {
    if x.len() != params.reduce_weight.ncols() {
        return Err(Error::Data(format!(
            "semantic vector has dimension {}, reduction layer expects {}",
            x.len(),
            params.reduce_weight.ncols()
        )));
    }
    Ok(params.reduce_weight.dot(&x) + &params.reduce_bias)
}

/// Row-wise `W x + b` over a matrix of semantic vectors.
pub fn reduce_rows(x: ArrayView2<f64>, params: &Parameters) -> Array2<f64> {
    x.dot(&params.reduce_weight.t()) + &params.reduce_bias
}

/// One propagation step over `graph` with per-edge weights in left-major
/// order: `left_out[l] = sum_r w(l,r) right_in[r]` and
/// `right_out[r] = sum_l w(l,r) left_in[l]`.
///
/// Rows are computed independently, so the result does not depend on the
/// thread count.
pub fn propagate(
    graph: &BipartiteGraph,
    weights: &[f64],
    left_in: ArrayView2<f64>,
    right_in: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    debug_assert_eq!(weights.len(), graph.edge_count());
    let d = left_in.ncols();
    let mut left_out = Array2::zeros((graph.left_count(), d));
    let mut right_out = Array2::zeros((graph.right_count(), d));
    left_out
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(l, mut row)| {
            for (r, _, e) in graph.neighbors_unchecked(l, Side::Left).iter() {
                row.scaled_add(weights[e], &right_in.row(r));
            }
        });
    right_out
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            for (l, _, e) in graph.neighbors_unchecked(r, Side::Right).iter() {
                row.scaled_add(weights[e], &left_in.row(l));
            }
        });
    (left_out, right_out)
}

/// Light graph convolution on the target user-item graph.
pub fn target_conv_layer(
    h_user: ArrayView2<f64>,
    h_item: ArrayView2<f64>,
    graph: &BipartiteGraph,
) -> (Array2<f64>, Array2<f64>) {
    propagate(graph, graph.norms(), h_user, h_item)
}

/// Debiasing factor `a_u . a_c` of every user-cluster edge, left-major.
pub fn edge_factors(
    graph: &BipartiteGraph,
    user_debias: ArrayView2<f64>,
    cluster_debias: ArrayView2<f64>,
) -> Vec<f64> {
    graph
        .edges()
        .map(|(u, c)| user_debias.row(u).dot(&cluster_debias.row(c)))
        .collect()
}

fn debias_weights(graph: &BipartiteGraph, factors: &[f64]) -> Vec<f64> {
    graph
        .norms()
        .iter()
        .zip(factors)
        .map(|(n, a)| n * a)
        .collect()
}

/// Debiasing convolution on the user-cluster graph: every edge is scaled
/// by `a_u . a_c`. The debias vectors are constants here; no gradient
/// reaches them through this layer.
pub fn debias_conv_layer(
    g_user: ArrayView2<f64>,
    g_cluster: ArrayView2<f64>,
    graph: &BipartiteGraph,
    user_debias: ArrayView2<f64>,
    cluster_debias: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let factors = edge_factors(graph, user_debias, cluster_debias);
    propagate(graph, &debias_weights(graph, &factors), g_user, g_cluster)
}

/// Plain light convolution on the user-cluster graph.
pub fn plain_conv_layer(
    g_user: ArrayView2<f64>,
    g_cluster: ArrayView2<f64>,
    graph: &BipartiteGraph,
) -> (Array2<f64>, Array2<f64>) {
    propagate(graph, graph.norms(), g_user, g_cluster)
}

pub fn predict(user_final: ArrayView1<f64>, item_final: ArrayView1<f64>) -> f64 {
    user_final.dot(&item_final)
}

pub fn predict_cluster(user_final: ArrayView1<f64>, cluster_final: ArrayView1<f64>) -> f64 {
    user_final.dot(&cluster_final)
}

pub fn predict_cluster_biased(user_biased: ArrayView1<f64>, cluster_biased: ArrayView1<f64>) -> f64 {
    user_biased.dot(&cluster_biased)
}

/// Layer-aggregated representations.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalEmbeddings {
    /// Final user representation used for item scores, every user.
    pub user: Array2<f64>,
    /// User-cluster graph aggregate `sum_l g_u^(l)`, every user.
    pub user_cross: Array2<f64>,
    pub item: Array2<f64>,
    pub cluster: Array2<f64>,
    pub user_biased: Array2<f64>,
    pub cluster_biased: Array2<f64>,
}

/// Per-layer outputs of one forward pass plus the aggregated embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub item_embedding: Array2<f64>,
    pub cluster_embedding: Array2<f64>,
    /// Target-graph outputs, layers `0..=Q`. Users are the target users.
    pub h_user: Vec<Array2<f64>>,
    pub h_item: Vec<Array2<f64>>,
    /// Debiasing user-cluster outputs, layers `0..=P`; empty without the cross graph.
    pub g_user: Vec<Array2<f64>>,
    pub g_cluster: Vec<Array2<f64>>,
    /// Plain user-cluster outputs, layers `0..=P`.
    pub gp_user: Vec<Array2<f64>>,
    pub gp_cluster: Vec<Array2<f64>>,
    /// Per-edge weights used by the debiasing layers (norm times factor).
    pub debias_weights: Vec<f64>,
    pub finals: FinalEmbeddings,
}

impl ForwardCache {
    pub fn user_final(&self) -> &Array2<f64> {
        &self.finals.user
    }

    pub fn item_final(&self) -> &Array2<f64> {
        &self.finals.item
    }

    /// Score of every target item for `user`.
    pub fn scores(&self, user: usize) -> Array1<f64> {
        self.finals.item.dot(&self.finals.user.row(user))
    }
}

fn sum_layers(layers: &[Array2<f64>], from: usize, rows: usize, d: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, d));
    for l in layers.iter().skip(from) {
        out += l;
    }
    out
}

/// Aggregate per-layer outputs into final representations.
///
/// Target users receive the sum over both graphs (with the layer-0 user
/// embedding counted in each sum unless `dedup_layer0`); source users only
/// have the user-cluster sum. Without the cross graph, target users get
/// the target-graph sum alone.
#[allow(clippy::too_many_arguments)]
pub fn final_embeddings(
    h_user: &[Array2<f64>],
    h_item: &[Array2<f64>],
    g_user: &[Array2<f64>],
    g_cluster: &[Array2<f64>],
    gp_user: &[Array2<f64>],
    gp_cluster: &[Array2<f64>],
    n_users: usize,
    k: usize,
    dedup_layer0: bool,
) -> FinalEmbeddings {
    let d = h_item[0].ncols();
    let nt = h_user[0].nrows();
    let item = sum_layers(h_item, 0, h_item[0].nrows(), d);
    let cross = !g_user.is_empty();
    let user_cross = sum_layers(g_user, 0, n_users, d);
    let h_from = if cross && dedup_layer0 { 1 } else { 0 };
    let h_sum = sum_layers(h_user, h_from, nt, d);
    let mut user = user_cross.clone();
    user.slice_mut(ndarray::s![..nt, ..]).zip_mut_with(&h_sum, |a, b| *a += b);
    FinalEmbeddings {
        user,
        user_cross,
        item,
        cluster: sum_layers(g_cluster, 0, k, d),
        user_biased: sum_layers(gp_user, 0, n_users, d),
        cluster_biased: sum_layers(gp_cluster, 0, k, d),
    }
}

/// Full forward pass over both graphs.
pub fn forward(params: &Parameters, data: &ModelData, hp: &HyperParams) -> ForwardCache {
    forward_with_conv_debias(params, data, hp, None)
}

/// Forward pass where the debiasing layers may use debias vectors other
/// than `params`' own. The explicit factors inside the restriction losses
/// always use `params`; this separation is what the detach contract means
/// for differentiation.
pub fn forward_with_conv_debias(
    params: &Parameters,
    data: &ModelData,
    hp: &HyperParams,
    conv_debias: Option<(ArrayView2<f64>, ArrayView2<f64>)>,
) -> ForwardCache {
    let tg = &data.graphs.target;
    let cg = &data.graphs.cross;
    let nt = data.n_target_users;
    let n_users = data.n_users();
    let k = data.k();

    let item_embedding = reduce_rows(data.item_text.view(), params);
    let cluster_embedding = reduce_rows(data.cluster_text.view(), params);

    let mut h_user = vec![params
        .user_embedding
        .slice(ndarray::s![..nt, ..])
        .to_owned()];
    let mut h_item = vec![item_embedding.clone()];
    for l in 0..hp.target_layers {
        let (u, v) = target_conv_layer(h_user[l].view(), h_item[l].view(), tg);
        h_user.push(u);
        h_item.push(v);
    }

    let (mut g_user, mut g_cluster, mut gp_user, mut gp_cluster) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut weights = Vec::new();
    if hp.ablation.uses_cross_graph() {
        gp_user.push(params.user_embedding.clone());
        gp_cluster.push(cluster_embedding.clone());
        for l in 0..hp.cross_layers {
            let (u, c) = plain_conv_layer(gp_user[l].view(), gp_cluster[l].view(), cg);
            gp_user.push(u);
            gp_cluster.push(c);
        }
        if hp.ablation.uses_debias() {
            let (au, ac) = conv_debias
                .unwrap_or((params.user_debias.view(), params.cluster_debias.view()));
            weights = debias_weights(cg, &edge_factors(cg, au, ac));
            g_user.push(params.user_embedding.clone());
            g_cluster.push(cluster_embedding.clone());
            for l in 0..hp.cross_layers {
                let (u, c) = propagate(cg, &weights, g_user[l].view(), g_cluster[l].view());
                g_user.push(u);
                g_cluster.push(c);
            }
        } else {
            weights = cg.norms().to_vec();
            g_user = gp_user.clone();
            g_cluster = gp_cluster.clone();
        }
    }

    let finals = final_embeddings(
        &h_user,
        &h_item,
        &g_user,
        &g_cluster,
        &gp_user,
        &gp_cluster,
        n_users,
        k,
        hp.dedup_layer0,
    );
    ForwardCache {
        item_embedding,
        cluster_embedding,
        h_user,
        h_item,
        g_user,
        g_cluster,
        gp_user,
        gp_cluster,
        debias_weights: weights,
        finals,
    }
}
