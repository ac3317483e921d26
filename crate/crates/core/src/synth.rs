//! Labelled synthetic reviewer–product networks with planted fraud groups.
//!
//! Organic reviewers arrive as Poisson processes and pick products by
//! preferential attachment among already-launched products. Planted groups
//! either burst onto their targets together (`star_burst`) or co-review
//! them in staggered rotations (`ring`).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ReviewEvent, TemporalBipartiteGraph, SECONDS_PER_DAY};

/// First timestamp of every generated dataset.
pub const EPOCH_START: i64 = 1_600_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FraudMode {
    StarBurst,
    Ring,
    /// Groups alternate between star bursts and rings.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_reviewers: usize,
    pub n_products: usize,
    pub days: f64,
    /// Organic reviews per reviewer per day.
    pub organic_rate: f64,
    /// Minimum organic reviews per reviewer.
    pub min_reviews: usize,
    /// Organic activity of fake accounts relative to real ones.
    pub camouflage: f64,
    pub n_groups: usize,
    pub group_size: usize,
    pub targets_per_group: usize,
    /// Burst length in seconds.
    pub burst_window: i64,
    pub mode: FraudMode,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_reviewers: 2000,
            n_products: 300,
            days: 180.0,
            organic_rate: 0.04,
            min_reviews: 3,
            camouflage: 1.0,
            n_groups: 5,
            group_size: 10,
            targets_per_group: 4,
            burst_window: 3 * SECONDS_PER_DAY,
            mode: FraudMode::Mixed,
            seed: 72,
        }
    }
}

impl SynthConfig {
    fn horizon(&self) -> i64 {
        (self.days * SECONDS_PER_DAY as f64) as i64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleConfig(m.to_string()));
        if self.n_reviewers == 0 || self.n_products == 0 || self.days <= 0.0 {
            return bad("reviewer, product and day counts must be positive");
        }
        if self.organic_rate < 0.0 || self.camouflage < 0.0 {
            return bad("rates must be non-negative");
        }
        if self.n_groups > 0 && (self.group_size == 0 || self.targets_per_group == 0 || self.burst_window <= 0) {
            return bad("group size, targets and burst window must be positive");
        }
        if self.n_groups * self.group_size > self.n_reviewers {
            return bad("more fake reviewers than reviewers");
        }
        if self.targets_per_group > self.n_products {
            return bad("more targets per group than products");
        }
        if self.min_reviews > self.n_products {
            return bad("min_reviews exceeds the product count");
        }
        let horizon = self.horizon();
        if self.burst_window > horizon {
            return bad("burst window longer than the horizon");
        }
        let rings = match self.mode {
            FraudMode::StarBurst => false,
            FraudMode::Ring => self.n_groups > 0,
            FraudMode::Mixed => self.n_groups > 1,
        };
        if rings && self.burst_window * self.targets_per_group as i64 > horizon {
            return bad("ring stages do not fit in the horizon");
        }
        Ok(())
    }

    /// Mode used by group `g`.
    fn group_mode(&self, g: usize) -> FraudMode {
        match self.mode {
            FraudMode::Mixed if g % 2 == 0 => FraudMode::StarBurst,
            FraudMode::Mixed => FraudMode::Ring,
            m => m,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Small,
    Medium,
    Large,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Small, Scale::Medium, Scale::Large];

    /// `< 50` small, `50..=200` medium, `> 200` large.
    pub fn of(review_count: usize) -> Scale {
        if review_count < 50 {
            Scale::Small
        } else if review_count <= 200 {
            Scale::Medium
        } else {
            Scale::Large
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scale::Small => "small",
            Scale::Medium => "medium",
            Scale::Large => "large",
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Scale::Small),
            "medium" => Ok(Scale::Medium),
            "large" => Ok(Scale::Large),
            _ => Err(Error::InvalidArgument(format!("unknown scale '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub graph: TemporalBipartiteGraph,
    /// Reviewer id → 0 real / 1 fake.
    pub labels: BTreeMap<String, u8>,
    /// Fake reviewer id → group index.
    pub group_ids: BTreeMap<String, usize>,
    pub scale_split: BTreeMap<String, Scale>,
}

impl LabeledDataset {
    /// Labels aligned with the graph's reviewer order.
    pub fn reviewer_labels(&self) -> Vec<u8> {
        self.graph
            .reviewer_ids()
            .iter()
            .map(|id| self.labels.get(id).copied().unwrap_or(0))
            .collect()
    }

    /// Scales assigned from the given graph's product review counts.
    pub fn split_for(graph: &TemporalBipartiteGraph) -> BTreeMap<String, Scale> {
        (0..graph.num_products())
            .map(|j| {
                let count = graph.review_count(graph.product_node(j));
                (graph.product_ids()[j].clone(), Scale::of(count))
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in self.graph.events() {
            serde_json::to_writer(&mut out, &e)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_labels_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["reviewer_id", "label", "group_id"])?;
        for (id, label) in &self.labels {
            let group = self.group_ids.get(id).map(|g| g.to_string()).unwrap_or_default();
            w.write_record([id.as_str(), &label.to_string(), &group])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_split_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["product_id", "scale"])?;
        for (id, scale) in &self.scale_split {
            w.write_record([id.as_str(), scale.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `reviewer_id,label[,group_id]`.
pub fn read_labels_csv<R: Read>(input: R) -> Result<(BTreeMap<String, u8>, BTreeMap<String, usize>)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let mut labels = BTreeMap::new();
    let mut groups = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let label: u8 = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .filter(|l| *l <= 1)
            .ok_or_else(|| Error::InvalidArgument(format!("bad label for reviewer '{id}'")))?;
        if let Some(g) = rec.get(2).filter(|s| !s.trim().is_empty()) {
            let g = g
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad group id for reviewer '{id}'")))?;
            groups.insert(id.clone(), g);
        }
        labels.insert(id, label);
    }
    Ok((labels, groups))
}

pub fn read_split_csv<R: Read>(input: R) -> Result<BTreeMap<String, Scale>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let scale: Scale = rec.get(1).unwrap_or_default().parse()?;
        out.insert(rec.get(0).unwrap_or_default().to_string(), scale);
    }
    Ok(out)
}

struct Product {
    launch: i64,
    mean_rating: f64,
}

fn star_rating(rng: &mut ChaCha8Rng, mean: f64, noise: &Normal<f64>) -> f64 {
    (mean + noise.sample(rng)).clamp(1.0, 5.0).round()
}

fn content_len(rng: &mut ChaCha8Rng, dist: &Exp<f64>) -> u32 {
    20 + dist.sample(rng) as u32
}

/// Organic arrival times of one reviewer within `[join, horizon)`.
fn arrivals(rng: &mut ChaCha8Rng, rate_per_sec: f64, join: i64, horizon: i64, min: usize) -> Vec<i64> {
    let mut times = Vec::new();
    if rate_per_sec > 0.0 {
        let gap = Exp::new(rate_per_sec).expect("positive rate");
        let mut t = join as f64;
        loop {
            t += gap.sample(rng);
            if t >= horizon as f64 {
                break;
            }
            times.push(t as i64);
        }
    }
    if times.len() < min {
        // too few arrivals: spread `min` uniform draws over the active span
        times = (0..min).map(|_| rng.gen_range(join..horizon)).collect();
        times.sort_unstable();
    }
    times
}

pub fn generate(cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let horizon = cfg.horizon();
    let noise = Normal::new(0.0, 0.9).expect("valid normal");
    let len_dist = Exp::new(1.0 / 200.0).expect("valid exp");

    let early = (cfg.n_products / 10).max(1);
    let products: Vec<Product> = (0..cfg.n_products)
        .map(|j| Product {
            launch: if j < early {
                0
            } else {
                rng.gen_range(0..=(horizon as f64 * 0.7) as i64)
            },
            mean_rating: rng.gen_range(2.5..4.5),
        })
        .collect();

    // fake membership
    let mut order: Vec<usize> = (0..cfg.n_reviewers).collect();
    order.shuffle(&mut rng);
    let mut group_of: Vec<Option<usize>> = vec![None; cfg.n_reviewers];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_groups];
    for (slot, &r) in order.iter().take(cfg.n_groups * cfg.group_size).enumerate() {
        let g = slot / cfg.group_size;
        group_of[r] = Some(g);
        members[g].push(r);
    }
    for m in &mut members {
        m.sort_unstable();
    }

    // organic activity, processed in global time order
    let rate = cfg.organic_rate / SECONDS_PER_DAY as f64;
    let mut arrivals_all: Vec<(i64, usize)> = Vec::new();
    for r in 0..cfg.n_reviewers {
        let join = rng.gen_range(0..horizon / 2);
        let own_rate = if group_of[r].is_some() { rate * cfg.camouflage } else { rate };
        for t in arrivals(&mut rng, own_rate, join, horizon, cfg.min_reviews) {
            arrivals_all.push((t, r));
        }
    }
    arrivals_all.sort_unstable();

    let mut counts = vec![0usize; cfg.n_products];
    let mut reviewed: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); cfg.n_reviewers];
    let mut events: Vec<ReviewEvent> = Vec::new();
    let rid = |r: usize| format!("u{r:05}");
    let pid = |p: usize| format!("p{p:04}");
    for (t, r) in arrivals_all {
        let mut total = 0.0;
        let mut cands = Vec::new();
        for (j, p) in products.iter().enumerate() {
            if p.launch <= t && !reviewed[r].contains(&j) {
                total += counts[j] as f64 + 1.0;
                cands.push(j);
            }
        }
        if cands.is_empty() {
            continue;
        }
        let mut pick = rng.gen_range(0.0..total);
        let mut chosen = *cands.last().expect("non-empty");
        for &j in &cands {
            pick -= counts[j] as f64 + 1.0;
            if pick < 0.0 {
                chosen = j;
                break;
            }
        }
        counts[chosen] += 1;
        reviewed[r].insert(chosen);
        events.push(ReviewEvent {
            reviewer_id: rid(r),
            product_id: pid(chosen),
            timestamp: EPOCH_START + t,
            rating: star_rating(&mut rng, products[chosen].mean_rating, &noise),
            content_len: content_len(&mut rng, &len_dist),
        });
    }

    // planted groups
    let latest_start = horizon - cfg.burst_window;
    let eligible: Vec<usize> = (0..cfg.n_products).filter(|&j| products[j].launch <= latest_start).collect();
    if cfg.n_groups > 0 && eligible.len() < cfg.targets_per_group {
        return Err(Error::InfeasibleConfig("not enough products launched before the last burst".into()));
    }
    let need = (cfg.group_size * 4).div_ceil(5);
    for (g, group) in members.iter().enumerate() {
        let mut targets = eligible.clone();
        targets.shuffle(&mut rng);
        targets.truncate(cfg.targets_per_group);
        targets.sort_unstable();
        match cfg.group_mode(g) {
            FraudMode::StarBurst | FraudMode::Mixed => {
                for &p in &targets {
                    let start = rng.gen_range(products[p].launch..=latest_start);
                    let m = rng.gen_range(need..=cfg.group_size);
                    let mut who = group.clone();
                    who.shuffle(&mut rng);
                    who.truncate(m);
                    who.sort_unstable();
                    for &r in &who {
                        events.push(ReviewEvent {
                            reviewer_id: rid(r),
                            product_id: pid(p),
                            timestamp: EPOCH_START + start + rng.gen_range(0..=cfg.burst_window),
                            rating: rng.gen_range(4..=5) as f64,
                            content_len: content_len(&mut rng, &len_dist),
                        });
                    }
                }
            }
            FraudMode::Ring => {
                let stage = horizon / cfg.targets_per_group as i64;
                for (j, &p) in targets.iter().enumerate() {
                    let lo = (j as i64 * stage).max(products[p].launch).min(latest_start);
                    let hi = ((j as i64 + 1) * stage - cfg.burst_window).clamp(lo, latest_start);
                    let start = rng.gen_range(lo..=hi);
                    for k in 0..need {
                        let r = group[(j + k) % group.len()];
                        let offset = cfg.burst_window * k as i64 / need as i64;
                        events.push(ReviewEvent {
                            reviewer_id: rid(r),
                            product_id: pid(p),
                            timestamp: EPOCH_START + start + offset,
                            rating: rng.gen_range(4..=5) as f64,
                            content_len: content_len(&mut rng, &len_dist),
                        });
                    }
                }
            }
        }
    }

    let graph = TemporalBipartiteGraph::from_events(&events);
    let labels = (0..cfg.n_reviewers)
        .filter(|&r| graph.reviewer_index(&rid(r)).is_some())
        .map(|r| (rid(r), u8::from(group_of[r].is_some())))
        .collect();
    let group_ids = (0..cfg.n_reviewers)
        .filter_map(|r| group_of[r].map(|g| (rid(r), g)))
        .collect();
    let scale_split = LabeledDataset::split_for(&graph);
    Ok(LabeledDataset {
        graph,
        labels,
        group_ids,
        scale_split,
    })
}

/// Mean Jaccard overlap of product sets over the given reviewer pairs.
pub fn mean_pair_jaccard(g: &TemporalBipartiteGraph, pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|&(a, b)| {
            let sa: BTreeSet<usize> = g.neighbors(a).iter().copied().collect();
            let sb: BTreeSet<usize> = g.neighbors(b).iter().copied().collect();
            let inter = sa.intersection(&sb).count() as f64;
            let union = sa.union(&sb).count() as f64;
            if union == 0.0 {
                0.0
            } else {
                inter / union
            }
        })
        .sum();
    total / pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: FraudMode, seed: u64) -> SynthConfig {
        SynthConfig {
            n_reviewers: 600,
            n_products: 80,
            n_groups: 3,
            group_size: 10,
            mode,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn no_groups_means_no_fakes() {
        let ds = generate(&SynthConfig {
            n_groups: 0,
            n_reviewers: 200,
            n_products: 40,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(ds.labels.values().all(|&l| l == 0));
        assert!(ds.group_ids.is_empty());
    }

    #[test]
    fn star_burst_target_gets_enough_same_window_reviews() {
        let cfg = SynthConfig {
            n_reviewers: 300,
            n_products: 50,
            n_groups: 1,
            group_size: 10,
            targets_per_group: 1,
            mode: FraudMode::StarBurst,
            ..SynthConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let g = &ds.graph;
        let fakes: BTreeSet<usize> = ds.group_ids.keys().map(|id| g.reviewer_index(id).unwrap()).collect();
        // the target is the product with the most high-rated fake reviews
        let mut best = 0;
        for j in 0..g.num_products() {
            let mut times: Vec<i64> = g
                .incident_reviews(g.product_node(j))
                .iter()
                .map(|&k| &g.reviews()[k])
                .filter(|r| fakes.contains(&r.reviewer) && r.rating >= 4.0)
                .map(|r| r.timestamp)
                .collect();
            times.sort_unstable();
            for i in 0..times.len() {
                let within = times[i..].iter().take_while(|&&t| t - times[i] <= cfg.burst_window).count();
                best = best.max(within);
            }
        }
        assert!(best >= 8, "best burst {best}");
    }

    #[test]
    fn fake_fraction_matches_counting_oracle() {
        for mode in [FraudMode::StarBurst, FraudMode::Ring, FraudMode::Mixed] {
            let cfg = small(mode, 3);
            let ds = generate(&cfg).unwrap();
            assert_eq!(ds.labels.len(), cfg.n_reviewers);
            let fakes = ds.labels.values().filter(|&&l| l == 1).count();
            assert_eq!(
                fakes as f64 / ds.labels.len() as f64,
                (cfg.n_groups * cfg.group_size) as f64 / cfg.n_reviewers as f64
            );
            for (id, &l) in &ds.labels {
                assert_eq!(l == 1, ds.group_ids.contains_key(id));
            }
        }
    }

    #[test]
    fn split_follows_thresholds() {
        let ds = generate(&small(FraudMode::Mixed, 1)).unwrap();
        let counts = crate::graph::product_review_counts(&ds.graph);
        for (id, scale) in &ds.scale_split {
            let c = counts[id];
            let want = if c < 50 {
                Scale::Small
            } else if c <= 200 {
                Scale::Medium
            } else {
                Scale::Large
            };
            assert_eq!(*scale, want);
        }
        assert_eq!(Scale::of(49), Scale::Small);
        assert_eq!(Scale::of(50), Scale::Medium);
        assert_eq!(Scale::of(200), Scale::Medium);
        assert_eq!(Scale::of(201), Scale::Large);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = generate(&small(FraudMode::Mixed, 9)).unwrap();
        let b = generate(&small(FraudMode::Mixed, 9)).unwrap();
        let (mut ja, mut jb) = (Vec::new(), Vec::new());
        a.write_jsonl(&mut ja).unwrap();
        b.write_jsonl(&mut jb).unwrap();
        assert_eq!(ja, jb);
        let c = generate(&small(FraudMode::Mixed, 10)).unwrap();
        let mut jc = Vec::new();
        c.write_jsonl(&mut jc).unwrap();
        assert_ne!(ja, jc);
    }

    #[test]
    fn planted_pairs_overlap_more_than_organic_pairs() {
        for (mode, seed) in [(FraudMode::StarBurst, 1), (FraudMode::Ring, 2), (FraudMode::Mixed, 3)] {
            let ds = generate(&small(mode, seed)).unwrap();
            let g = &ds.graph;
            let mut by_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (id, &grp) in &ds.group_ids {
                by_group.entry(grp).or_default().push(g.reviewer_index(id).unwrap());
            }
            let mut fake_pairs = Vec::new();
            for m in by_group.values() {
                for i in 0..m.len() {
                    for j in i + 1..m.len() {
                        fake_pairs.push((m[i], m[j]));
                    }
                }
            }
            let real: Vec<usize> = ds
                .labels
                .iter()
                .filter(|(_, &l)| l == 0)
                .map(|(id, _)| g.reviewer_index(id).unwrap())
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let real_pairs: Vec<(usize, usize)> = (0..2000)
                .map(|_| {
                    let a = real[rng.gen_range(0..real.len())];
                    let mut b = a;
                    while b == a {
                        b = real[rng.gen_range(0..real.len())];
                    }
                    (a, b)
                })
                .collect();
            assert!(mean_pair_jaccard(g, &fake_pairs) > mean_pair_jaccard(g, &real_pairs));
        }
    }

    #[test]
    fn infeasible_configs_error() {
        let base = SynthConfig::default();
        let cases = [
            SynthConfig {
                burst_window: 400 * SECONDS_PER_DAY,
                ..base.clone()
            },
            SynthConfig {
                n_groups: 300,
                ..base.clone()
            },
            SynthConfig {
                mode: FraudMode::Ring,
                targets_per_group: 100,
                burst_window: 5 * SECONDS_PER_DAY,
                ..base.clone()
            },
        ];
        for c in cases {
            assert!(matches!(generate(&c), Err(Error::InfeasibleConfig(_))));
        }
    }

    #[test]
    fn labels_and_split_roundtrip_through_csv() {
        let ds = generate(&small(FraudMode::Ring, 4)).unwrap();
        let mut buf = Vec::new();
        ds.write_labels_csv(&mut buf).unwrap();
        let (labels, groups) = read_labels_csv(buf.as_slice()).unwrap();
        assert_eq!(labels, ds.labels);
        assert_eq!(groups, ds.group_ids);
        let mut buf = Vec::new();
        ds.write_split_csv(&mut buf).unwrap();
        assert_eq!(read_split_csv(buf.as_slice()).unwrap(), ds.scale_split);
    }
}
