//! Trainable parameters, hyper-parameters, and every forward computation.

mod forward;
mod loss;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataio::DatasetBundle;
use crate::error::{Error, Result};
use crate::graphs::GraphSet;
use crate::semantics::SemanticModel;

pub use forward::{
    debias_conv_layer, edge_factors, final_embeddings, forward, plain_conv_layer, predict,
    predict_cluster, predict_cluster_biased, propagate, reduce, reduce_rows, target_conv_layer,
    forward_with_conv_debias, FinalEmbeddings, ForwardCache,
};
pub(crate) use loss::{regularized_groups, restricted_user, sigmoid};
pub use loss::{
    bpr_loss, cosine, dr_loss, log_sigmoid, restriction_losses, squared_norm, total_loss,
    LossBreakdown, RestrictionLosses, TrainTuple,
};

/// Model variants studied in the ablation experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// Drop the user-cluster graph: target-graph propagation only.
    NoSi,
    /// Drop the dimension-reduction loss.
    NoDrloss,
    /// Plain convolution on the user-cluster graph, no restriction losses.
    NoDb,
}

impl Ablation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "no-si" => Ok(Ablation::NoSi),
            "no-drloss" => Ok(Ablation::NoDrloss),
            "no-db" => Ok(Ablation::NoDb),
            other => Err(Error::config(
                "ablation",
                format!("unknown ablation `{other}` (expected none, no-si, no-drloss, no-db)"),
            )),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoSi => "no-si",
            Ablation::NoDrloss => "no-drloss",
            Ablation::NoDb => "no-db",
        }
    }

    pub fn uses_cross_graph(self) -> bool {
        self != Ablation::NoSi
    }

    pub fn uses_debias(self) -> bool {
        matches!(self, Ablation::None | Ablation::NoDrloss)
    }

    pub fn uses_dr_loss(self) -> bool {
        self != Ablation::NoDrloss
    }
}

/// How debiasing vectors start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DebiasInit {
    #[default]
    Normal,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Debiasing-vector dimension; must equal `dim`.
    pub debias_dim: usize,
    /// Layers on the user-cluster graph (P).
    pub cross_layers: usize,
    /// Layers on the target user-item graph (Q).
    pub target_layers: usize,
    pub lambda_rs: f64,
    pub lambda_dr: f64,
    pub lambda_reg: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub k: usize,
    pub seed: u64,
    pub ablation: Ablation,
    /// Count the layer-0 user embedding once instead of once per graph.
    pub dedup_layer0: bool,
    /// Use the full final user embedding (both graphs) inside the
    /// restriction losses instead of the user-cluster graph aggregate.
    pub restrict_full_user: bool,
    pub debias_init: DebiasInit,
    pub max_epochs: usize,
    pub patience: usize,
    pub eval_negatives: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            dim: 32,
            debias_dim: 32,
            cross_layers: 2,
            target_layers: 3,
            lambda_rs: 0.01,
            lambda_dr: 1.0,
            lambda_reg: 0.1,
            learning_rate: 0.01,
            batch_size: 1024,
            k: 200,
            seed: 0,
            ablation: Ablation::None,
            dedup_layer0: false,
            restrict_full_user: false,
            debias_init: DebiasInit::Normal,
            max_epochs: 200,
            patience: 20,
            eval_negatives: 99,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dim", "must be positive"));
        }
        if self.debias_dim != self.dim {
            return Err(Error::config(
                "debias_dim",
                format!(
                    "debiasing dimension {} must equal the embedding dimension {}",
                    self.debias_dim, self.dim
                ),
            ));
        }
        for (name, v) in [
            ("lambda_rs", self.lambda_rs),
            ("lambda_dr", self.lambda_dr),
            ("lambda_reg", self.lambda_reg),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.k < 2 {
            return Err(Error::config("k", "must be at least 2"));
        }
        if self.eval_negatives == 0 {
            return Err(Error::config("eval_negatives", "must be positive"));
        }
        Ok(())
    }

    /// Restriction-loss weight after the ablation is applied.
    pub fn effective_lambda_rs(&self) -> f64 {
        if self.ablation.uses_debias() {
            self.lambda_rs
        } else {
            0.0
        }
    }

    pub fn effective_lambda_dr(&self) -> f64 {
        if self.ablation.uses_dr_loss() {
            self.lambda_dr
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    UserEmbedding,
    ReduceWeight,
    ReduceBias,
    UserDebias,
    ClusterDebias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::UserEmbedding,
        ParamGroup::ReduceWeight,
        ParamGroup::ReduceBias,
        ParamGroup::UserDebias,
        ParamGroup::ClusterDebias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::UserEmbedding => "user_embedding",
            ParamGroup::ReduceWeight => "reduce_weight",
            ParamGroup::ReduceBias => "reduce_bias",
            ParamGroup::UserDebias => "user_debias",
            ParamGroup::ClusterDebias => "cluster_debias",
        }
    }

    pub fn is_debias(self) -> bool {
        matches!(self, ParamGroup::UserDebias | ParamGroup::ClusterDebias)
    }
}

/// All trainable arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// `|U| x d` ID embeddings of every user, target users first.
    pub user_embedding: Array2<f64>,
    /// `d x D_txt` reduction weight.
    pub reduce_weight: Array2<f64>,
    pub reduce_bias: Array1<f64>,
    /// `|U| x d` user debiasing vectors.
    pub user_debias: Array2<f64>,
    /// `|C| x d` cluster debiasing vectors.
    pub cluster_debias: Array2<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = Parameters;

impl Parameters {
    pub fn zeros(n_users: usize, k: usize, dim: usize, text_dim: usize) -> Self {
        Parameters {
            user_embedding: Array2::zeros((n_users, dim)),
            reduce_weight: Array2::zeros((dim, text_dim)),
            reduce_bias: Array1::zeros(dim),
            user_debias: Array2::zeros((n_users, dim)),
            cluster_debias: Array2::zeros((k, dim)),
        }
    }

    /// ID embeddings and normal-initialised debias vectors ~ N(0, 0.1^2),
    /// Xavier-uniform reduction weight, zero bias.
    pub fn init<R: Rng>(
        n_users: usize,
        k: usize,
        text_dim: usize,
        hp: &HyperParams,
        rng: &mut R,
    ) -> Self {
        let d = hp.dim;
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let limit = (6.0 / (d + text_dim) as f64).sqrt();
        let uniform = Uniform::new_inclusive(-limit, limit).expect("valid range");
        let user_embedding = Array2::from_shape_simple_fn((n_users, d), || normal.sample(rng));
        let reduce_weight = Array2::from_shape_simple_fn((d, text_dim), || uniform.sample(rng));
        let (user_debias, cluster_debias) = match hp.debias_init {
            DebiasInit::Normal => (
                Array2::from_shape_simple_fn((n_users, d), || normal.sample(rng)),
                Array2::from_shape_simple_fn((k, d), || normal.sample(rng)),
            ),
            DebiasInit::Ones => (Array2::ones((n_users, d)), Array2::ones((k, d))),
        };
        Parameters {
            user_embedding,
            reduce_weight,
            reduce_bias: Array1::zeros(d),
            user_debias,
            cluster_debias,
        }
    }

    pub fn dim(&self) -> usize {
        self.reduce_bias.len()
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        let s = match g {
            ParamGroup::UserEmbedding => self.user_embedding.as_slice(),
            ParamGroup::ReduceWeight => self.reduce_weight.as_slice(),
            ParamGroup::ReduceBias => self.reduce_bias.as_slice(),
            ParamGroup::UserDebias => self.user_debias.as_slice(),
            ParamGroup::ClusterDebias => self.cluster_debias.as_slice(),
        };
        s.expect("parameters are stored contiguously")
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        let s = match g {
            ParamGroup::UserEmbedding => self.user_embedding.as_slice_mut(),
            ParamGroup::ReduceWeight => self.reduce_weight.as_slice_mut(),
            ParamGroup::ReduceBias => self.reduce_bias.as_slice_mut(),
            ParamGroup::UserDebias => self.user_debias.as_slice_mut(),
            ParamGroup::ClusterDebias => self.cluster_debias.as_slice_mut(),
        };
        s.expect("parameters are stored contiguously")
    }

    pub fn zeros_like(&self) -> Self {
        Parameters {
            user_embedding: Array2::zeros(self.user_embedding.raw_dim()),
            reduce_weight: Array2::zeros(self.reduce_weight.raw_dim()),
            reduce_bias: Array1::zeros(self.reduce_bias.raw_dim()),
            user_debias: Array2::zeros(self.user_debias.raw_dim()),
            cluster_debias: Array2::zeros(self.cluster_debias.raw_dim()),
        }
    }

    pub fn same_shape(&self, other: &Parameters) -> bool {
        self.user_embedding.dim() == other.user_embedding.dim()
            && self.reduce_weight.dim() == other.reduce_weight.dim()
            && self.reduce_bias.dim() == other.reduce_bias.dim()
            && self.user_debias.dim() == other.user_debias.dim()
            && self.cluster_debias.dim() == other.cluster_debias.dim()
    }

    pub fn is_finite(&self) -> bool {
        ParamGroup::ALL
            .iter()
            .all(|&g| self.group(g).iter().all(|x| x.is_finite()))
    }
}

/// Constant model inputs: semantic vectors and graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    /// Semantic vectors of the target items, `n_target_items x D_txt`.
    pub item_text: Array2<f64>,
    /// Cluster semantic vectors, `k x D_txt`.
    pub cluster_text: Array2<f64>,
    /// Cluster of every target item.
    pub item_cluster: Vec<usize>,
    pub graphs: GraphSet,
    pub n_target_users: usize,
}

impl ModelData {
    pub fn new(bundle: &DatasetBundle, semantics: &SemanticModel, graphs: GraphSet) -> Result<Self> {
        let nti = bundle.n_target_items();
        if semantics.item_vectors.nrows() != bundle.n_items() {
            return Err(Error::Data(format!(
                "semantic model covers {} items, bundle has {}",
                semantics.item_vectors.nrows(),
                bundle.n_items()
            )));
        }
        Ok(ModelData {
            item_text: semantics.item_vectors.slice(ndarray::s![..nti, ..]).to_owned(),
            cluster_text: semantics.cluster_vectors.clone(),
            item_cluster: semantics.clusters.assignment[..nti].to_vec(),
            graphs,
            n_target_users: bundle.n_target_users(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.graphs.cross.left_count()
    }

    pub fn n_target_items(&self) -> usize {
        self.item_text.nrows()
    }

    pub fn k(&self) -> usize {
        self.cluster_text.nrows()
    }

    pub fn text_dim(&self) -> usize {
        self.item_text.ncols()
    }

    /// Check parameter shapes against these inputs.
    pub fn check(&self, params: &Parameters) -> Result<()> {
        let d = params.dim();
        let expect = Parameters::zeros(self.n_users(), self.k(), d, self.text_dim());
        if !params.same_shape(&expect) {
            return Err(Error::Data(format!(
                "parameter shapes do not match the data ({} users, {} clusters, text dim {})",
                self.n_users(),
                self.k(),
                self.text_dim()
            )));
        }
        Ok(())
    }
}
