//! Semantic item vectors, cross-domain item clustering, and cluster vectors.

pub mod kmeans;
pub mod tfidf;

use std::collections::HashMap;
use std::io::BufRead;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataio::DatasetBundle;
use crate::error::{Error, Result};

pub use kmeans::{kmeans, ClusterModel, DEFAULT_MAX_ITER};
pub use tfidf::{tokenize, TfIdfModel};

/// Read-only token → vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
}

impl TokenEmbeddingTable {
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        let mut flat = Vec::with_capacity(entries.len() * dim);
        for (token, v) in entries {
            if v.len() != dim {
                return Err(Error::Data(format!(
                    "token `{token}` has {} components, table dimension is {dim}",
                    v.len()
                )));
            }
            if index.insert(token.clone(), index.len()).is_some() {
                return Err(Error::Data(format!("duplicate token `{token}` in table")));
            }
            flat.extend(v);
        }
        let vectors = Array2::from_shape_vec((index.len(), dim), flat).expect("shape checked");
        Ok(TokenEmbeddingTable {
            dim,
            index,
            vectors,
        })
    }

    /// Parse `D` on the first line, then `token<TAB>f1 f2 ... fD` per line.
    pub fn parse<R: BufRead>(reader: R, label: &str) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let bad = |line: usize, message: String| Error::Parse {
            path: label.to_string(),
            line,
            message,
        };
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "empty token table".into()))?;
        let header = header.map_err(|e| bad(1, e.to_string()))?;
        let dim: usize = header
            .trim()
            .parse()
            .map_err(|_| bad(1, format!("header `{header}` is not a dimension")))?;
        if dim == 0 {
            return Err(bad(1, "dimension must be positive".into()));
        }
        let mut entries = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| bad(lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (token, rest) = line
                .split_once('\t')
                .ok_or_else(|| bad(lineno, "expected `token<TAB>values`".into()))?;
            let values: Vec<f64> = rest
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(lineno, format!("bad value: {e}")))?;
            if values.len() != dim {
                return Err(bad(
                    lineno,
                    format!("expected {dim} values, found {}", values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(bad(lineno, "non-finite value".into()));
            }
            entries.push((token.to_string(), values));
        }
        Self::new(dim, entries).map_err(|e| bad(0, e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.index.get(token).map(|&i| self.vectors.row(i))
    }

    /// Multiply every vector by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        TokenEmbeddingTable {
            dim: self.dim,
            index: self.index.clone(),
            vectors: &self.vectors * alpha,
        }
    }
}

/// Semantic vector of one tokenised document.
///
/// Each distinct token contributes once, weighted by its tf-idf in this
/// document. Returns the vector and the number of out-of-vocabulary tokens.
pub fn item_semantic_embedding<S: AsRef<str>>(
    doc: &[S],
    tfidf: &TfIdfModel,
    table: &TokenEmbeddingTable,
) -> (Array1<f64>, usize) {
    let mut out = Array1::zeros(table.dim());
    let mut oov = 0;
    for (token, weight) in tfidf.weights(doc) {
        match table.get(token) {
            Some(v) => out.scaled_add(weight, &v),
            None => oov += 1,
        }
    }
    (out, oov)
}

/// Mean of the member item vectors of `cluster`.
pub fn cluster_semantic_embedding(
    cluster: usize,
    model: &ClusterModel,
    item_vectors: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    let members = model.members(cluster);
    if members.is_empty() {
        return Err(Error::Data(format!("cluster {cluster} has no members")));
    }
    let mut sum = Array1::zeros(item_vectors.ncols());
    for &i in &members {
        sum += &item_vectors.row(i);
    }
    Ok(sum / members.len() as f64)
}

/// Output of the clustering stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticModel {
    /// One row per dense item index (both domains).
    pub item_vectors: Array2<f64>,
    /// One row per cluster: mean of member item vectors.
    pub cluster_vectors: Array2<f64>,
    pub clusters: ClusterModel,
    /// Items whose text produced a zero vector (empty or fully out of vocabulary).
    pub zero_vector_items: Vec<usize>,
    pub oov_tokens: usize,
}

impl SemanticModel {
    pub fn text_dim(&self) -> usize {
        self.item_vectors.ncols()
    }

    pub fn k(&self) -> usize {
        self.clusters.k
    }
}

/// tf-idf over the documents of both domains, weighted token sums, k-means,
/// and cluster means.
pub fn build_semantics(
    bundle: &DatasetBundle,
    table: &TokenEmbeddingTable,
    k: usize,
    seed: u64,
) -> Result<SemanticModel> {
    let docs: Vec<Vec<String>> = bundle.documents.iter().map(|d| tokenize(d)).collect();
    let tfidf = TfIdfModel::fit(&docs)?;
    let mut item_vectors = Array2::zeros((docs.len(), table.dim()));
    let mut zero_vector_items = Vec::new();
    let mut oov_tokens = 0;
    for (i, doc) in docs.iter().enumerate() {
        let (v, oov) = item_semantic_embedding(doc, &tfidf, table);
        oov_tokens += oov;
        if v.iter().all(|&x| x == 0.0) {
            zero_vector_items.push(i);
        }
        item_vectors.row_mut(i).assign(&v);
    }
    if !zero_vector_items.is_empty() {
        log::warn!(
            "{} item(s) have empty or out-of-vocabulary text and get a zero semantic vector",
            zero_vector_items.len()
        );
    }
    let clusters = kmeans(item_vectors.view(), k, seed, DEFAULT_MAX_ITER)?;
    let mut cluster_vectors = Array2::zeros((k, table.dim()));
    for c in 0..k {
        let v = cluster_semantic_embedding(c, &clusters, item_vectors.view())?;
        cluster_vectors.row_mut(c).assign(&v);
    }
    Ok(SemanticModel {
        item_vectors,
        cluster_vectors,
        clusters,
        zero_vector_items,
        oov_tokens,
    })
}
