//! Fixtures and independent reference computations shared by the
//! integration tests.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use scdgn::graphs::{BipartiteGraph, GraphSet};
use scdgn::model::{
    forward_with_conv_debias, total_loss, HyperParams, ModelData, ParamGroup, Parameters,
    TrainTuple,
};

pub struct Fixture {
    pub data: ModelData,
    pub params: Parameters,
    pub hp: HyperParams,
    pub batch: Vec<TrainTuple>,
}

pub struct Shape {
    pub target_users: usize,
    pub source_users: usize,
    pub items: usize,
    pub clusters: usize,
    pub text_dim: usize,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let n = Normal::new(0.0, std).unwrap();
    Array2::from_shape_simple_fn((rows, cols), || n.sample(rng))
}

/// Random graphs where every target user has at least one item, every
/// user at least one cluster, and the cross edges of target users follow
/// their items' clusters.
pub fn random_fixture(rng: &mut ChaCha8Rng, shape: &Shape, hp: HyperParams) -> Fixture {
    let Shape {
        target_users: nt,
        source_users: ns,
        items: m,
        clusters: k,
        text_dim,
    } = *shape;
    let item_cluster: Vec<usize> = (0..m).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    let mut target_edges = Vec::new();
    let mut cross_edges = Vec::new();
    let mut baskets = vec![Vec::new(); nt];
    for (u, basket) in baskets.iter_mut().enumerate() {
        for i in 0..m {
            if rng.random_bool(0.5) {
                basket.push(i);
            }
        }
        if basket.is_empty() {
            basket.push(rng.random_range(0..m));
        }
        for &i in basket.iter() {
            target_edges.push((u, i));
            cross_edges.push((u, item_cluster[i]));
        }
    }
    for u in nt..nt + ns {
        cross_edges.push((u, rng.random_range(0..k)));
        for c in 0..k {
            if rng.random_bool(0.4) {
                cross_edges.push((u, c));
            }
        }
    }
    let graphs = GraphSet {
        target: BipartiteGraph::from_edges(nt, m, target_edges.clone()).unwrap(),
        cross: BipartiteGraph::from_edges(nt + ns, k, cross_edges).unwrap(),
    };
    let data = ModelData {
        item_text: gaussian(rng, m, text_dim, 1.0),
        cluster_text: gaussian(rng, k, text_dim, 1.0),
        item_cluster: item_cluster.clone(),
        graphs,
        n_target_users: nt,
    };
    let d = hp.dim;
    let params = Parameters {
        user_embedding: gaussian(rng, nt + ns, d, 0.5),
        reduce_weight: gaussian(rng, d, text_dim, 0.5),
        reduce_bias: gaussian(rng, 1, d, 0.5).row(0).to_owned(),
        user_debias: gaussian(rng, nt + ns, d, 0.7),
        cluster_debias: gaussian(rng, k, d, 0.7),
    };
    let batch = target_edges
        .iter()
        .map(|&(u, i)| {
            let free: Vec<usize> = (0..m).filter(|j| !baskets[u].contains(j)).collect();
            let neg = *free
                .choose(rng)
                .unwrap_or(&((i + 1) % m));
            TrainTuple {
                user: u,
                item: i,
                cluster: item_cluster[i],
                neg_item: neg,
                neg_cluster: item_cluster[neg],
            }
        })
        .collect();
    Fixture {
        data,
        params,
        hp,
        batch,
    }
}

/// Total loss with the debias vectors inside convolution taken from
/// `conv` instead of `params`.
pub fn loss_with_conv(f: &Fixture, params: &Parameters, conv: &Parameters) -> f64 {
    let cache = forward_with_conv_debias(
        params,
        &f.data,
        &f.hp,
        Some((conv.user_debias.view(), conv.cluster_debias.view())),
    );
    total_loss(&f.batch, &cache, params, &f.data, &f.hp).total
}

/// Which debias vectors a finite-difference perturbation touches.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Perturb {
    /// Explicit occurrences only; convolution keeps the unperturbed vectors.
    Explicit,
    /// Convolution only; the explicit occurrences stay fixed.
    Conv,
    /// Both.
    Both,
}

/// Central differences of the total loss for every parameter entry.
pub fn finite_difference(f: &Fixture, h: f64, mode: Perturb) -> Parameters {
    let mut out = f.params.zeros_like();
    for g in ParamGroup::ALL {
        for idx in 0..f.params.group(g).len() {
            let eval = |delta: f64| {
                let mut p = f.params.clone();
                p.group_mut(g)[idx] += delta;
                if !g.is_debias() {
                    return loss_with_conv(f, &p, &p);
                }
                match mode {
                    Perturb::Explicit => loss_with_conv(f, &p, &f.params),
                    Perturb::Conv => loss_with_conv(f, &f.params, &p),
                    Perturb::Both => loss_with_conv(f, &p, &p),
                }
            };
            out.group_mut(g)[idx] = (eval(h) - eval(-h)) / (2.0 * h);
        }
    }
    out
}

/// Largest relative error over all entries, with `floor` guarding the
/// denominator of entries that are essentially zero.
pub fn max_relative_error(a: &Parameters, b: &Parameters, floor: f64) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for g in ParamGroup::ALL {
        for (i, (x, y)) in a.group(g).iter().zip(b.group(g)).enumerate() {
            let rel = (x - y).abs() / x.abs().max(y.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{}[{i}]: {x} vs {y}", g.name()));
            }
        }
    }
    worst
}

/// Dense `D_l^-1/2 R D_r^-1/2` of a bipartite graph.
pub fn dense_normalized(graph: &BipartiteGraph) -> Array2<f64> {
    let mut adj = Array2::<f64>::zeros((graph.left_count(), graph.right_count()));
    for (l, r) in graph.edges() {
        adj[[l, r]] = 1.0;
    }
    let dl: Vec<f64> = adj.rows().into_iter().map(|r| r.sum()).collect();
    let dr: Vec<f64> = adj.columns().into_iter().map(|c| c.sum()).collect();
    for ((l, r), v) in adj.indexed_iter_mut() {
        if *v != 0.0 {
            *v /= dl[l].sqrt() * dr[r].sqrt();
        }
    }
    adj
}

/// Dense layer stack: `left' = M right`, `right' = M^T left`.
pub fn dense_layers(
    m: ArrayView2<f64>,
    left0: Array2<f64>,
    right0: Array2<f64>,
    layers: usize,
) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let mut left = vec![left0];
    let mut right = vec![right0];
    for l in 0..layers {
        let nl = m.dot(&right[l]);
        let nr = m.t().dot(&left[l]);
        left.push(nl);
        right.push(nr);
    }
    (left, right)
}

pub fn sum(layers: &[Array2<f64>]) -> Array2<f64> {
    let mut out = Array2::zeros(layers[0].raw_dim());
    for l in layers {
        out += l;
    }
    out
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Synthetic corpus carried through preparation, clustering and graph
/// construction.
pub struct Prepared {
    pub bundle: scdgn::dataio::DatasetBundle,
    pub semantics: scdgn::semantics::SemanticModel,
    pub data: ModelData,
}

pub fn prepared_synthetic(spec: &scdgn::synth::SynthSpec) -> Prepared {
    let ds = scdgn::synth::generate(spec).unwrap();
    let corpus = scdgn::dataio::ingest(
        ds.source.iter().chain(&ds.target).cloned(),
        ds.source_texts.clone(),
        ds.target_texts.clone(),
    )
    .unwrap();
    let mut bundle = scdgn::dataio::prepare(&corpus).unwrap().bundle;
    let table = ds.token_table().unwrap();
    let semantics = scdgn::semantics::build_semantics(&bundle, &table, spec.clusters, spec.seed).unwrap();
    bundle.assign_clusters(&semantics.clusters.assignment).unwrap();
    let graphs = GraphSet::build(&bundle, &semantics.clusters.assignment, spec.clusters).unwrap();
    let data = ModelData::new(&bundle, &semantics, graphs).unwrap();
    Prepared {
        bundle,
        semantics,
        data,
    }
}
