//! Association rules inside posterior clusters and their aggregation into
//! covariate-pair evidence.
//!
//! Items are `(column, level)` pairs of a [`DiscretizedView`]; each row is a
//! transaction holding exactly one item per column. Frequent itemsets are
//! grown level by level with downward-closure pruning and rules carry a
//! single-item consequent, so with `max_order = 2` every rule is `{a} => {b}`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::discretize::{DiscretizedView, Item};

const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub min_support: f64,
    pub min_confidence: f64,
    /// Largest itemset size (2 mines pairwise rules only).
    pub max_order: usize,
    /// Clusters smaller than this are skipped.
    pub min_cluster: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            min_support: 0.25,
            min_confidence: 0.5,
            max_order: 2,
            min_cluster: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationRule {
    pub antecedent: Vec<Item>,
    pub consequent: Vec<Item>,
    pub support: f64,
    pub confidence: f64,
    pub cluster_size: usize,
}

impl AssociationRule {
    /// The unordered column pair of a rule spanning exactly two columns.
    pub fn pair(&self) -> Option<ColumnPair> {
        let mut cols: Vec<usize> = self.antecedent.iter().chain(&self.consequent).map(|i| i.column).collect();
        cols.sort_unstable();
        cols.dedup();
        match cols[..] {
            [a, b] => Some(ColumnPair::new(a, b)),
            _ => None,
        }
    }
}

/// Unordered pair of distinct columns, stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnPair {
    pub a: usize,
    pub b: usize,
}

impl ColumnPair {
    pub fn new(x: usize, y: usize) -> Self {
        assert_ne!(x, y, "a pair needs two distinct columns");
        Self { a: x.min(y), b: x.max(y) }
    }

    pub fn contains(&self, col: usize) -> bool {
        self.a == col || self.b == col
    }
}

fn meets(count: usize, n: usize, threshold: f64) -> bool {
    count as f64 / n as f64 >= threshold - THRESHOLD_SLACK
}

/// Apriori over the rows `rows` of `view`. Output is sorted by antecedent,
/// then consequent.
pub fn mine_rules(view: &DiscretizedView, rows: &[usize], cfg: &RuleConfig) -> Vec<AssociationRule> {
    let n = rows.len();
    if n == 0 || cfg.max_order < 2 {
        return Vec::new();
    }
    let p = view.n_columns();
    let offsets: Vec<usize> = (0..p)
        .scan(0, |acc, c| {
            let o = *acc;
            *acc += view.n_levels(c);
            Some(o)
        })
        .collect();
    let n_items = offsets.last().map_or(0, |o| o + view.n_levels(p - 1));
    let item_of = |idx: usize| -> Item {
        let column = offsets.partition_point(|&o| o <= idx) - 1;
        Item {
            column,
            level: idx - offsets[column],
        }
    };

    let mut single = vec![0usize; n_items];
    for &r in rows {
        for c in 0..p {
            single[offsets[c] + view.level(r, c)] += 1;
        }
    }
    let frequent: Vec<bool> = single.iter().map(|&c| meets(c, n, cfg.min_support)).collect();

    // pairs counted row by row over frequent items only
    let mut pair_counts = vec![0usize; n_items * n_items];
    let mut row_items = Vec::with_capacity(p);
    for &r in rows {
        row_items.clear();
        row_items.extend((0..p).map(|c| offsets[c] + view.level(r, c)).filter(|&i| frequent[i]));
        for (x, &i) in row_items.iter().enumerate() {
            for &j in &row_items[x + 1..] {
                pair_counts[i * n_items + j] += 1;
            }
        }
    }

    let mut counts: HashMap<Vec<Item>, usize> = HashMap::new();
    for (i, &c) in single.iter().enumerate() {
        if frequent[i] {
            counts.insert(vec![item_of(i)], c);
        }
    }
    let mut level: Vec<Vec<Item>> = Vec::new();
    for i in 0..n_items {
        for j in i + 1..n_items {
            let c = pair_counts[i * n_items + j];
            if c > 0 && meets(c, n, cfg.min_support) {
                let set = vec![item_of(i), item_of(j)];
                counts.insert(set.clone(), c);
                level.push(set);
            }
        }
    }
    let mut frequent_sets: Vec<Vec<Item>> = level.clone();

    for k in 3..=cfg.max_order.min(p) {
        let candidates = join_candidates(&level, &counts);
        level = Vec::new();
        for cand in candidates {
            let c = rows
                .iter()
                .filter(|&&r| cand.iter().all(|it| view.level(r, it.column) == it.level))
                .count();
            if meets(c, n, cfg.min_support) {
                counts.insert(cand.clone(), c);
                level.push(cand);
            }
        }
        debug_assert!(level.iter().all(|s| s.len() == k));
        frequent_sets.extend(level.iter().cloned());
        if level.is_empty() {
            break;
        }
    }

    let mut rules = Vec::new();
    for set in &frequent_sets {
        let c = counts[set];
        for (x, cons) in set.iter().enumerate() {
            let ante: Vec<Item> = set.iter().enumerate().filter(|&(y, _)| y != x).map(|(_, it)| *it).collect();
            let ca = counts[&ante];
            if !meets(c, ca, cfg.min_confidence) {
                continue;
            }
            rules.push(AssociationRule {
                antecedent: ante,
                consequent: vec![*cons],
                support: c as f64 / n as f64,
                confidence: c as f64 / ca as f64,
                cluster_size: n,
            });
        }
    }
    rules.sort_by(|a, b| (&a.antecedent, &a.consequent).cmp(&(&b.antecedent, &b.consequent)));
    rules
}

/// Joins frequent `(k-1)`-itemsets sharing their first `k-2` items and keeps
/// candidates whose every `(k-1)`-subset is frequent.
fn join_candidates(level: &[Vec<Item>], counts: &HashMap<Vec<Item>, usize>) -> Vec<Vec<Item>> {
    let mut out = Vec::new();
    for (x, s) in level.iter().enumerate() {
        for t in &level[x + 1..] {
            let k = s.len();
            if s[..k - 1] != t[..k - 1] {
                continue;
            }
            let (last_s, last_t) = (s[k - 1], t[k - 1]);
            if last_s.column == last_t.column {
                continue;
            }
            let mut cand = s.clone();
            cand.push(last_t);
            cand.sort();
            let closed = (0..cand.len()).all(|d| {
                let sub: Vec<Item> = cand.iter().enumerate().filter(|&(y, _)| y != d).map(|(_, it)| *it).collect();
                counts.contains_key(&sub)
            });
            if closed {
                out.push(cand);
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Rules of one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRules {
    pub size: usize,
    pub rules: Vec<AssociationRule>,
}

/// Mines every cluster of one retained partition with at least
/// `cfg.min_cluster` members.
pub fn mine_iterate(labels: &[usize], view: &DiscretizedView, cfg: &RuleConfig) -> Vec<ClusterRules> {
    assert_eq!(labels.len(), view.n_rows(), "partition and view disagree on row count");
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
        .into_iter()
        .filter(|rows| !rows.is_empty() && rows.len() >= cfg.min_cluster)
        .map(|rows| ClusterRules {
            size: rows.len(),
            rules: mine_rules(view, &rows, cfg),
        })
        .collect()
}

fn ordered_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

/// Pair(s) with the largest total support plus confidence over one iterate's
/// pairwise rules; ties are all kept.
pub fn top_pair_per_iterate(clusters: &[ClusterRules]) -> Vec<ColumnPair> {
    let mut scores: BTreeMap<ColumnPair, Vec<f64>> = BTreeMap::new();
    for rule in clusters.iter().flat_map(|c| &c.rules) {
        if let Some(pair) = rule.pair() {
            let e = scores.entry(pair).or_default();
            e.push(rule.support);
            e.push(rule.confidence);
        }
    }
    let totals: Vec<(ColumnPair, f64)> = scores.into_iter().map(|(p, v)| (p, ordered_sum(v))).collect();
    let Some(best) = totals.iter().map(|t| t.1).reduce(f64::max) else {
        return Vec::new();
    };
    totals
        .into_iter()
        .filter(|&(_, s)| (best - s).abs() <= 1e-9 * best.abs().max(1.0))
        .map(|(p, _)| p)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair: ColumnPair,
    /// Fraction of iterates in which at least one rule over the pair fired.
    pub pr: f64,
    pub mean_support: f64,
    pub mean_confidence: f64,
    pub mean_cluster_size: f64,
    /// Iterates in which the pair was the top pair.
    pub top_count: usize,
    pub n_iterates: usize,
}

/// Summarizes every pair that fired in at least one iterate, sorted by `pr`
/// descending, then mean support descending, then pair. The result does not
/// depend on the order of `iterates`.
pub fn aggregate(iterates: &[Vec<ClusterRules>]) -> Vec<PairSummary> {
    #[derive(Default)]
    struct Acc {
        fired: usize,
        top: usize,
        support: Vec<f64>,
        confidence: Vec<f64>,
        size: Vec<f64>,
    }
    let mut acc: BTreeMap<ColumnPair, Acc> = BTreeMap::new();
    for it in iterates {
        let mut fired: Vec<ColumnPair> = Vec::new();
        for rule in it.iter().flat_map(|c| &c.rules) {
            if let Some(pair) = rule.pair() {
                let a = acc.entry(pair).or_default();
                a.support.push(rule.support);
                a.confidence.push(rule.confidence);
                a.size.push(rule.cluster_size as f64);
                fired.push(pair);
            }
        }
        fired.sort_unstable();
        fired.dedup();
        for p in fired {
            acc.get_mut(&p).expect("entry created above").fired += 1;
        }
        for p in top_pair_per_iterate(it) {
            acc.get_mut(&p).expect("top pairs fired").top += 1;
        }
    }
    let n = iterates.len();
    let mut out: Vec<PairSummary> = acc
        .into_iter()
        .map(|(pair, a)| {
            let k = a.support.len() as f64;
            PairSummary {
                pair,
                pr: a.fired as f64 / n as f64,
                mean_support: ordered_sum(a.support) / k,
                mean_confidence: ordered_sum(a.confidence) / k,
                mean_cluster_size: ordered_sum(a.size) / k,
                top_count: a.top,
                n_iterates: n,
            }
        })
        .collect();
    out.sort_by(|x, y| {
        y.pr.total_cmp(&x.pr)
            .then(y.mean_support.total_cmp(&x.mean_support))
            .then(x.pair.cmp(&y.pair))
    });
    out
}

/// How stage-2 evidence is turned into candidate pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CandidateMode {
    /// Pairs that were the top pair in at least one iterate.
    TopPair,
    /// Pairs firing in at least this fraction of iterates.
    Threshold { detect_threshold: f64 },
}

impl Default for CandidateMode {
    fn default() -> Self {
        CandidateMode::Threshold { detect_threshold: 0.5 }
    }
}

pub fn candidates(summaries: &[PairSummary], mode: CandidateMode) -> Vec<PairSummary> {
    summaries
        .iter()
        .filter(|s| match mode {
            CandidateMode::TopPair => s.top_count > 0,
            CandidateMode::Threshold { detect_threshold } => s.pr >= detect_threshold - THRESHOLD_SLACK,
        })
        .cloned()
        .collect()
}

/// Table row with column names resolved: `Pr, Supp., Conf., |S|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub column_a: String,
    pub column_b: String,
    pub pr: f64,
    pub support: f64,
    pub confidence: f64,
    pub cluster_size: f64,
    pub top_count: usize,
}

impl PairRow {
    pub fn new(s: &PairSummary, view: &DiscretizedView) -> Self {
        Self {
            column_a: view.column_name(s.pair.a).to_string(),
            column_b: view.column_name(s.pair.b).to_string(),
            pr: s.pr,
            support: s.mean_support,
            confidence: s.mean_confidence,
            cluster_size: s.mean_cluster_size,
            top_count: s.top_count,
        }
    }
}
