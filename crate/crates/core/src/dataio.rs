//! Interaction and item-text ingestion, density filtering, and the
//! leave-one-out split.
//!
//! On-disk inputs are UTF-8, tab separated:
//!
//! * interactions: `user<TAB>item<TAB>unix_seconds`, one event per line;
//! * item texts: `item<TAB>document`, one item per line.
//!
//! Blank lines are ignored in both.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInteraction {
    pub user_key: String,
    pub item_key: String,
    pub timestamp: i64,
    pub domain: Domain,
}

/// One event in dense index space.
///
/// `cluster` is `None` until the semantic clustering stage has run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub cluster: Option<usize>,
    pub domain: Domain,
}

pub fn parse_interactions<R: BufRead>(
    reader: R,
    domain: Domain,
    label: &str,
) -> Result<Vec<RawInteraction>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            path: label.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: label.to_string(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad(format!(
                "expected 3 tab-separated fields (user, item, timestamp), found {}",
                fields.len()
            )));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(bad("empty user or item key".into()));
        }
        let timestamp: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("timestamp `{}` is not an integer", fields[2])))?;
        if timestamp < 0 {
            return Err(bad(format!("negative timestamp {timestamp}")));
        }
        out.push(RawInteraction {
            user_key: fields[0].to_string(),
            item_key: fields[1].to_string(),
            timestamp,
            domain,
        });
    }
    Ok(out)
}

pub fn parse_texts<R: BufRead>(reader: R, label: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let bad = |message: String| Error::Parse {
            path: label.to_string(),
            line: lineno,
            message,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (key, doc) = match line.split_once('\t') {
            Some((k, d)) => (k, d),
            None => (line, ""),
        };
        if key.is_empty() {
            return Err(bad("empty item key".into()));
        }
        if out.insert(key.to_string(), doc.to_string()).is_some() {
            return Err(bad(format!("duplicate text entry for item `{key}`")));
        }
    }
    Ok(out)
}

/// Deduplicated records of both domains plus the item documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawCorpus {
    pub source: Vec<RawInteraction>,
    pub target: Vec<RawInteraction>,
    pub source_texts: BTreeMap<String, String>,
    pub target_texts: BTreeMap<String, String>,
}

impl RawCorpus {
    pub fn records(&self, domain: Domain) -> &[RawInteraction] {
        match domain {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }
}

/// Deduplicate records on `(domain, user, item, timestamp)` keeping first
/// occurrences, split them by domain, and check every item has a document.
pub fn ingest(
    records: impl IntoIterator<Item = RawInteraction>,
    source_texts: BTreeMap<String, String>,
    target_texts: BTreeMap<String, String>,
) -> Result<RawCorpus> {
    let mut seen = HashSet::new();
    let mut corpus = RawCorpus {
        source_texts,
        target_texts,
        ..Default::default()
    };
    let mut missing: BTreeSet<(Domain, String)> = BTreeSet::new();
    for r in records {
        if r.timestamp < 0 {
            return Err(Error::Data(format!(
                "record ({}, {}) has negative timestamp {}",
                r.user_key, r.item_key, r.timestamp
            )));
        }
        if !seen.insert((r.domain, r.user_key.clone(), r.item_key.clone(), r.timestamp)) {
            continue;
        }
        let texts = match r.domain {
            Domain::Source => &corpus.source_texts,
            Domain::Target => &corpus.target_texts,
        };
        if !texts.contains_key(&r.item_key) {
            missing.insert((r.domain, r.item_key.clone()));
        }
        match r.domain {
            Domain::Source => corpus.source.push(r),
            Domain::Target => corpus.target.push(r),
        }
    }
    if !missing.is_empty() {
        let listed: Vec<String> = missing
            .iter()
            .take(20)
            .map(|(d, k)| format!("{}:{}", d.name(), k))
            .collect();
        return Err(Error::Data(format!(
            "{} item(s) have no text entry: {}{}",
            missing.len(),
            listed.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        )));
    }
    Ok(corpus)
}

/// Which side of the transfer a domain plays; selects the density bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterRole {
    SourceDomain,
    TargetDomain,
}

/// Inclusive interaction-count bounds for users and items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterBounds {
    pub user_min: usize,
    pub user_max: usize,
    pub item_min: usize,
    pub item_max: usize,
}

impl FilterBounds {
    pub fn for_role(role: FilterRole) -> Self {
        match role {
            FilterRole::SourceDomain => FilterBounds {
                user_min: 3,
                user_max: 10,
                item_min: 10,
                item_max: 15,
            },
            FilterRole::TargetDomain => FilterBounds {
                user_min: 3,
                user_max: 5,
                item_min: 5,
                item_max: 15,
            },
        }
    }
}

pub fn density_filter(records: &[RawInteraction], role: FilterRole) -> Result<Vec<RawInteraction>> {
    density_filter_with(records, FilterBounds::for_role(role))
}

/// One simultaneous pass: a record survives iff its user's and its item's
/// counts, both measured on `records`, fall inside the bounds.
pub fn density_filter_with(
    records: &[RawInteraction],
    bounds: FilterBounds,
) -> Result<Vec<RawInteraction>> {
    let mut user_counts: HashMap<&str, usize> = HashMap::new();
    let mut item_counts: HashMap<&str, usize> = HashMap::new();
    for r in records {
        *user_counts.entry(&r.user_key).or_default() += 1;
        *item_counts.entry(&r.item_key).or_default() += 1;
    }
    let kept: Vec<RawInteraction> = records
        .iter()
        .filter(|r| {
            let u = user_counts[r.user_key.as_str()];
            let i = item_counts[r.item_key.as_str()];
            (bounds.user_min..=bounds.user_max).contains(&u)
                && (bounds.item_min..=bounds.item_max).contains(&i)
        })
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "density filter (users {}-{}, items {}-{}) removed every record; relax the thresholds",
            bounds.user_min, bounds.user_max, bounds.item_min, bounds.item_max
        )));
    }
    Ok(kept)
}

/// Drop users left with fewer than `min` records. Returns the kept records
/// and the number of users removed.
pub fn prune_short_users(records: &[RawInteraction], min: usize) -> (Vec<RawInteraction>, usize) {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in records {
        *counts.entry(&r.user_key).or_default() += 1;
    }
    let dropped = counts.values().filter(|&&c| c < min).count();
    let kept = records
        .iter()
        .filter(|r| counts[r.user_key.as_str()] >= min)
        .cloned()
        .collect();
    (kept, dropped)
}

/// Per-user chronological leave-one-out split over raw target records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeaveOneOut {
    pub train: Vec<RawInteraction>,
    pub valid: Vec<RawInteraction>,
    pub test: Vec<RawInteraction>,
}

/// Last interaction of each user goes to test, second-last to validation,
/// the rest to train. Equal timestamps keep input order.
pub fn split_leave_one_out(records: &[RawInteraction]) -> Result<LeaveOneOut> {
    let mut by_user: BTreeMap<&str, Vec<&RawInteraction>> = BTreeMap::new();
    for r in records {
        by_user.entry(&r.user_key).or_default().push(r);
    }
    let mut split = LeaveOneOut::default();
    for (user, mut rs) in by_user {
        if rs.len() < 3 {
            return Err(Error::Data(format!(
                "user `{user}` has {} interaction(s); the split needs at least 3",
                rs.len()
            )));
        }
        // Stable sort keeps input order among equal timestamps.
        rs.sort_by_key(|r| r.timestamp);
        let n = rs.len();
        split.test.push(rs[n - 1].clone());
        split.valid.push(rs[n - 2].clone());
        split.train.extend(rs[..n - 2].iter().map(|r| (*r).clone()));
    }
    Ok(split)
}

/// Canonical dense-index dataset handed to every later stage.
///
/// Index layout: target users occupy `0..n_target_users`, source users
/// follow. Target items occupy `0..n_target_items`, source items follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub target_users: Vec<String>,
    pub source_users: Vec<String>,
    pub target_items: Vec<String>,
    pub source_items: Vec<String>,
    pub train: Vec<Interaction>,
    pub valid: Vec<Interaction>,
    pub test: Vec<Interaction>,
    /// All source-domain interactions; the source has no split.
    pub source: Vec<Interaction>,
    /// Item documents indexed by dense item index.
    pub documents: Vec<String>,
    /// Per target user, the sorted target items they interacted with in any split.
    pub user_items: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub interactions_per_user: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub source: DomainStats,
    pub target: DomainStats,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

fn dense_ids<'a>(keys: impl Iterator<Item = &'a str>) -> Vec<String> {
    keys.collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect()
}

impl DatasetBundle {
    /// Assign dense ids (sorted by key within each domain) and split the
    /// target records.
    pub fn from_records(
        source: &[RawInteraction],
        target: &[RawInteraction],
        source_texts: &BTreeMap<String, String>,
        target_texts: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let split = split_leave_one_out(target)?;
        let target_users = dense_ids(target.iter().map(|r| r.user_key.as_str()));
        let target_items = dense_ids(target.iter().map(|r| r.item_key.as_str()));
        let source_users = dense_ids(source.iter().map(|r| r.user_key.as_str()));
        let source_items = dense_ids(source.iter().map(|r| r.item_key.as_str()));

        let index = |keys: &[String], offset: usize| -> HashMap<String, usize> {
            keys.iter()
                .enumerate()
                .map(|(i, k)| (k.clone(), i + offset))
                .collect()
        };
        let tu = index(&target_users, 0);
        let ti = index(&target_items, 0);
        let su = index(&source_users, target_users.len());
        let si = index(&source_items, target_items.len());

        let to_dense = |rs: &[RawInteraction]| -> Vec<Interaction> {
            rs.iter()
                .map(|r| Interaction {
                    user: tu[&r.user_key],
                    item: ti[&r.item_key],
                    cluster: None,
                    domain: Domain::Target,
                })
                .collect()
        };
        let train = to_dense(&split.train);
        let valid = to_dense(&split.valid);
        let test = to_dense(&split.test);
        let source_dense = source
            .iter()
            .map(|r| Interaction {
                user: su[&r.user_key],
                item: si[&r.item_key],
                cluster: None,
                domain: Domain::Source,
            })
            .collect();

        let lookup = |texts: &BTreeMap<String, String>, key: &str| -> Result<String> {
            texts
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Data(format!("item `{key}` has no text entry")))
        };
        let mut documents = Vec::with_capacity(target_items.len() + source_items.len());
        for k in &target_items {
            documents.push(lookup(target_texts, k)?);
        }
        for k in &source_items {
            documents.push(lookup(source_texts, k)?);
        }

        let mut user_items = vec![Vec::new(); target_users.len()];
        for r in train.iter().chain(&valid).chain(&test) {
            user_items[r.user].push(r.item);
        }
        for items in &mut user_items {
            items.sort_unstable();
            items.dedup();
        }

        Ok(DatasetBundle {
            target_users,
            source_users,
            target_items,
            source_items,
            train,
            valid,
            test,
            source: source_dense,
            documents,
            user_items,
        })
    }

    pub fn n_target_users(&self) -> usize {
        self.target_users.len()
    }

    pub fn n_users(&self) -> usize {
        self.target_users.len() + self.source_users.len()
    }

    pub fn n_target_items(&self) -> usize {
        self.target_items.len()
    }

    pub fn n_items(&self) -> usize {
        self.target_items.len() + self.source_items.len()
    }

    pub fn item_domain(&self, item: usize) -> Domain {
        if item < self.n_target_items() {
            Domain::Target
        } else {
            Domain::Source
        }
    }

    pub fn item_key(&self, item: usize) -> &str {
        let nt = self.n_target_items();
        if item < nt {
            &self.target_items[item]
        } else {
            &self.source_items[item - nt]
        }
    }

    /// Whether target user `user` has interacted with target item `item` in any split.
    pub fn has_interacted(&self, user: usize, item: usize) -> bool {
        self.user_items[user].binary_search(&item).is_ok()
    }

    /// Fill in the cluster field of every interaction.
    pub fn assign_clusters(&mut self, assignment: &[usize]) -> Result<()> {
        if assignment.len() != self.n_items() {
            return Err(Error::Data(format!(
                "cluster assignment covers {} items, bundle has {}",
                assignment.len(),
                self.n_items()
            )));
        }
        for r in self
            .train
            .iter_mut()
            .chain(self.valid.iter_mut())
            .chain(self.test.iter_mut())
            .chain(self.source.iter_mut())
        {
            r.cluster = Some(assignment[r.item]);
        }
        Ok(())
    }

    pub fn stats(&self) -> DatasetStats {
        let per_user = |n: usize, users: usize| {
            if users == 0 {
                0.0
            } else {
                n as f64 / users as f64
            }
        };
        let n_target = self.train.len() + self.valid.len() + self.test.len();
        DatasetStats {
            source: DomainStats {
                users: self.source_users.len(),
                items: self.source_items.len(),
                interactions: self.source.len(),
                interactions_per_user: per_user(self.source.len(), self.source_users.len()),
            },
            target: DomainStats {
                users: self.target_users.len(),
                items: self.target_items.len(),
                interactions: n_target,
                interactions_per_user: per_user(n_target, self.target_users.len()),
            },
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
        }
    }

    /// One line per item: `index<TAB>domain<TAB>key<TAB>document`.
    pub fn corpus_text(&self) -> String {
        let mut out = String::new();
        for (i, doc) in self.documents.iter().enumerate() {
            let clean: String = doc
                .chars()
                .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
                .collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                i,
                self.item_domain(i).name(),
                self.item_key(i),
                clean
            ));
        }
        out
    }
}

/// Locations of the four input files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPaths {
    pub source_interactions: PathBuf,
    pub target_interactions: PathBuf,
    pub source_texts: PathBuf,
    pub target_texts: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Parse and ingest the input files of both domains.
pub fn load_corpus(paths: &CorpusPaths) -> Result<RawCorpus> {
    let label = |p: &Path| p.display().to_string();
    let mut records = parse_interactions(
        open(&paths.source_interactions)?,
        Domain::Source,
        &label(&paths.source_interactions),
    )?;
    records.extend(parse_interactions(
        open(&paths.target_interactions)?,
        Domain::Target,
        &label(&paths.target_interactions),
    )?);
    let source_texts = parse_texts(open(&paths.source_texts)?, &label(&paths.source_texts))?;
    let target_texts = parse_texts(open(&paths.target_texts)?, &label(&paths.target_texts))?;
    ingest(records, source_texts, target_texts)
}

/// Outcome of the full preparation pass over one raw corpus.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub bundle: DatasetBundle,
    /// Target users removed because the simultaneous filter left them
    /// fewer than three records.
    pub pruned_target_users: usize,
}

/// Filter both domains, prune target users the filter left too short, and
/// build the bundle.
pub fn prepare(corpus: &RawCorpus) -> Result<Prepared> {
    let source = density_filter(&corpus.source, FilterRole::SourceDomain)?;
    let target = density_filter(&corpus.target, FilterRole::TargetDomain)?;
    let (target, pruned) = prune_short_users(&target, 3);
    if target.is_empty() {
        return Err(Error::Data(
            "no target user keeps 3 interactions after filtering; relax the thresholds".into(),
        ));
    }
    if pruned > 0 {
        log::warn!("dropped {pruned} target user(s) left with fewer than 3 interactions");
    }
    let bundle =
        DatasetBundle::from_records(&source, &target, &corpus.source_texts, &corpus.target_texts)?;
    Ok(Prepared {
        bundle,
        pruned_target_users: pruned,
    })
}
