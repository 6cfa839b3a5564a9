//! Planted two-domain datasets with shared cluster-level preferences.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataio::{CorpusPaths, Domain, FilterBounds, FilterRole, RawInteraction};
use crate::error::{Error, Result};
use crate::semantics::TokenEmbeddingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub users_per_domain: usize,
    pub items_per_domain: usize,
    pub clusters: usize,
    /// 0 gives identical source and target preferences.
    pub bias_strength: f64,
    pub seed: u64,
    pub text_dim: usize,
    pub topic_tokens: usize,
    pub noise_tokens: usize,
    pub doc_len: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users_per_domain: 200,
            items_per_domain: 100,
            clusters: 10,
            bias_strength: 0.3,
            seed: 0,
            text_dim: 16,
            topic_tokens: 8,
            noise_tokens: 40,
            doc_len: 12,
        }
    }
}

/// Generated records, texts, token table, and the planted structure.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub source: Vec<RawInteraction>,
    pub target: Vec<RawInteraction>,
    pub source_texts: BTreeMap<String, String>,
    pub target_texts: BTreeMap<String, String>,
    pub tokens: Vec<(String, Vec<f64>)>,
    pub text_dim: usize,
    /// Planted cluster of item `j` (same in both domains).
    pub item_cluster: Vec<usize>,
    /// Per-type cluster preferences of target users.
    pub target_preferences: Array2<f64>,
    /// Per-type cluster preferences of source users before per-user noise.
    pub source_preferences: Array2<f64>,
}

/// File names written by [`SynthDataset::write`].
pub const SOURCE_FILE: &str = "source.tsv";
pub const TARGET_FILE: &str = "target.tsv";
pub const SOURCE_TEXT_FILE: &str = "source_texts.tsv";
pub const TARGET_TEXT_FILE: &str = "target_texts.tsv";
pub const TOKEN_FILE: &str = "tokens.txt";

impl SynthDataset {
    pub fn token_table(&self) -> Result<TokenEmbeddingTable> {
        TokenEmbeddingTable::new(self.text_dim, self.tokens.clone())
    }

    /// Write everything in the ingestion formats; returns the corpus paths
    /// and the token-table path.
    pub fn write(&self, dir: &Path) -> Result<(CorpusPaths, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: String| -> Result<PathBuf> {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        };
        let records = |rs: &[RawInteraction]| {
            let mut s = String::new();
            for r in rs {
                let _ = writeln!(s, "{}\t{}\t{}", r.user_key, r.item_key, r.timestamp);
            }
            s
        };
        let texts = |t: &BTreeMap<String, String>| {
            let mut s = String::new();
            for (k, v) in t {
                let _ = writeln!(s, "{k}\t{v}");
            }
            s
        };
        let mut table = format!("{}\n", self.text_dim);
        for (tok, v) in &self.tokens {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(table, "{tok}\t{}", vals.join(" "));
        }
        let paths = CorpusPaths {
            source_interactions: put(SOURCE_FILE, records(&self.source))?,
            target_interactions: put(TARGET_FILE, records(&self.target))?,
            source_texts: put(SOURCE_TEXT_FILE, texts(&self.source_texts))?,
            target_texts: put(TARGET_TEXT_FILE, texts(&self.target_texts))?,
        };
        Ok((paths, put(TOKEN_FILE, table)?))
    }
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
}

fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
    let mut u: f64 = rng.random();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Move interactions between items until every item count lies in
/// `[lo, hi]`. Users keep their interaction counts; same-cluster moves are
/// preferred so cluster-level preferences survive.
fn repair_item_counts(
    baskets: &mut [Vec<usize>],
    n_items: usize,
    item_cluster: &[usize],
    lo: usize,
    hi: usize,
) -> Result<()> {
    let total: usize = baskets.iter().map(Vec::len).sum();
    if total < lo * n_items || total > hi * n_items {
        return Err(Error::config(
            "synth",
            format!("{total} interactions cannot give every one of {n_items} items {lo}..={hi}"),
        ));
    }
    let mut count = vec![0usize; n_items];
    for b in baskets.iter() {
        for &i in b {
            count[i] += 1;
        }
    }
    for _ in 0..100 * total {
        let Some(bad) = (0..n_items).find(|&i| count[i] < lo || count[i] > hi) else {
            return Ok(());
        };
        let short = count[bad] < lo;
        // Candidate partners ordered: same cluster first, then by surplus or deficit.
        let mut partners: Vec<usize> = (0..n_items)
            .filter(|&j| j != bad && if short { count[j] > lo } else { count[j] < hi })
            .collect();
        partners.sort_by_key(|&j| {
            let slack = if short { usize::MAX - count[j] } else { count[j] };
            (item_cluster[j] != item_cluster[bad], slack, j)
        });
        let pick = |j: usize| if short { (j, bad) } else { (bad, j) };
        let mut moved = false;
        'outer: for j in partners {
            let (from, to) = pick(j);
            for b in baskets.iter_mut() {
                if b.contains(&from) && !b.contains(&to) {
                    let pos = b.iter().position(|&x| x == from).expect("present");
                    b[pos] = to;
                    count[from] -= 1;
                    count[to] += 1;
                    moved = true;
                    break 'outer;
                }
            }
        }
        if !moved {
            break;
        }
    }
    Err(Error::Data("could not balance synthetic item counts".into()))
}

/// Generate one dataset. Identical specs give identical output.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    let c = spec.clusters;
    if c < 2 || spec.users_per_domain < 10 || spec.items_per_domain < c {
        return Err(Error::config(
            "synth",
            "need at least 2 clusters, 10 users per domain, and one item per cluster",
        ));
    }
    if !(0.0..=1.0).contains(&spec.bias_strength) {
        return Err(Error::config("bias_strength", "must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_items = spec.items_per_domain;
    let item_cluster: Vec<usize> = (0..n_items).map(|j| j % c).collect();

    // Token vectors: topic tokens cluster around a per-cluster centre.
    let noise = Normal::new(0.0, 0.05).expect("valid std");
    let centre = Normal::new(0.0, 0.25).expect("valid std");
    let mut tokens = Vec::new();
    for k in 0..c {
        let mid: Vec<f64> = (0..spec.text_dim).map(|_| centre.sample(&mut rng)).collect();
        for t in 0..spec.topic_tokens {
            let v = mid.iter().map(|m| m + noise.sample(&mut rng)).collect();
            tokens.push((format!("topic{k}w{t}"), v));
        }
    }
    for t in 0..spec.noise_tokens {
        let v = (0..spec.text_dim).map(|_| noise.sample(&mut rng)).collect();
        tokens.push((format!("misc{t}"), v));
    }

    let docs = |prefix: &str, rng: &mut ChaCha8Rng| -> BTreeMap<String, String> {
        (0..n_items)
            .map(|j| {
                let k = item_cluster[j];
                let mut words: Vec<String> = (0..spec.doc_len)
                    .map(|w| {
                        if w % 4 == 3 && spec.noise_tokens > 0 {
                            format!("misc{}", rng.random_range(0..spec.noise_tokens))
                        } else {
                            format!("topic{k}w{}", rng.random_range(0..spec.topic_tokens))
                        }
                    })
                    .collect();
                words.shuffle(rng);
                (format!("{prefix}_item{j:03}"), words.join(" "))
            })
            .collect()
    };
    let source_texts = docs("s", &mut rng);
    let target_texts = docs("t", &mut rng);

    // One user type per cluster, preferring it and its successor.
    let mut target_preferences = Array2::from_elem((c, c), 0.2 / (c as f64 - 2.0).max(1.0));
    for t in 0..c {
        target_preferences[[t, t]] = 0.4;
        target_preferences[[t, (t + 1) % c]] = 0.4;
        normalize(target_preferences.row_mut(t).as_slice_mut().expect("contiguous"));
    }
    let s = spec.bias_strength;
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let mut source_preferences = target_preferences.clone();
    for t in 0..c {
        let mut bias: Vec<f64> = (0..c).map(|_| unit.sample(&mut rng)).collect();
        normalize(&mut bias);
        for (x, b) in source_preferences.row_mut(t).iter_mut().zip(&bias) {
            *x = (1.0 - s) * *x + s * b;
        }
    }

    let domain = |d: Domain,
                      prefs: &Array2<f64>,
                      per_user: std::ops::RangeInclusive<usize>,
                      role: FilterRole,
                      rng: &mut ChaCha8Rng|
     -> Result<Vec<RawInteraction>> {
        let (prefix, perturb) = match d {
            Domain::Source => ("s", s),
            Domain::Target => ("t", 0.0),
        };
        let by_cluster: Vec<Vec<usize>> = (0..c)
            .map(|k| (0..n_items).filter(|&j| item_cluster[j] == k).collect())
            .collect();
        let mut baskets = Vec::with_capacity(spec.users_per_domain);
        for u in 0..spec.users_per_domain {
            let mut p = prefs.row(u % c).to_vec();
            if perturb > 0.0 {
                let mut own: Vec<f64> = (0..c).map(|_| unit.sample(rng)).collect();
                normalize(&mut own);
                for (x, o) in p.iter_mut().zip(&own) {
                    *x = (1.0 - perturb) * *x + perturb * o;
                }
            }
            let n = rng.random_range(per_user.clone());
            let mut basket: Vec<usize> = Vec::with_capacity(n);
            while basket.len() < n {
                let k = draw(&p, rng);
                let free: Vec<usize> = by_cluster[k]
                    .iter()
                    .copied()
                    .filter(|j| !basket.contains(j))
                    .collect();
                if let Some(&j) = free.choose(rng) {
                    basket.push(j);
                }
            }
            baskets.push(basket);
        }
        let b = FilterBounds::for_role(role);
        repair_item_counts(&mut baskets, n_items, &item_cluster, b.item_min, b.item_max)?;
        let mut out = Vec::new();
        for (u, basket) in baskets.iter().enumerate() {
            for (pos, &j) in basket.iter().enumerate() {
                out.push(RawInteraction {
                    user_key: format!("{prefix}_user{u:03}"),
                    item_key: format!("{prefix}_item{j:03}"),
                    timestamp: 1_600_000_000 + (u * 1000 + pos) as i64,
                    domain: d,
                });
            }
        }
        Ok(out)
    };
    let source = domain(Domain::Source, &source_preferences, 5..=7, FilterRole::SourceDomain, &mut rng)?;
    let target = domain(Domain::Target, &target_preferences, 3..=5, FilterRole::TargetDomain, &mut rng)?;

    Ok(SynthDataset {
        source,
        target,
        source_texts,
        target_texts,
        tokens,
        text_dim: spec.text_dim,
        item_cluster,
        target_preferences,
        source_preferences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_bias_gives_identical_preferences() {
        let d = generate(&SynthSpec {
            bias_strength: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(d.source_preferences, d.target_preferences);
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SynthSpec::default();
        let (a, b) = (generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_eq!(a.source, b.source);
        assert_eq!(a.target, b.target);
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.target_texts, b.target_texts);
    }
}
