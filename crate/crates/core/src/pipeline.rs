//! End-to-end runs: structure profiles → NFS → pooling → attention network
//! → evaluation, for the full model and its ablations.

use log::info;

use crate::config::RunConfig;
use crate::dga::{
    build_input, initial_frequencies, node_features, predict_fake, rescale_time, stratified_split, time_encode, train,
    DgaInput, DgaModel, Split, TrainOutcome, Variant,
};
use crate::error::{Error, Result};
use crate::graph::{make_windows, raw_features, RawFeatures, TemporalBipartiteGraph, WindowSpec};
use crate::linalg::Matrix;
use crate::metrics::{evaluate, MetricRow, Scores};
use crate::nfs::{assemble_features, youden_threshold, NfsModel, NfsScores};
use crate::pool::{merge_windows, pool_window, window_slices, PoolStats, PooledGraph, WindowSlice};
use crate::structure::{compute_profiles, NodeStructureProfile};
use crate::synth::Scale;

/// Variant-independent state shared by every model trained on one dataset.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub graph: TemporalBipartiteGraph,
    /// Per reviewer, 1 = fake.
    pub labels: Vec<u8>,
    /// Reviewer indices.
    pub split: Split,
    pub profiles: Vec<NodeStructureProfile>,
    pub raw: RawFeatures,
    pub nfs: NfsModel,
    /// Scores for every node, reviewers first.
    pub nfs_scores: NfsScores,
}

/// Fits the NFS pipeline on the training reviewers and scores every node.
pub fn fit_nfs(profiles: &[NodeStructureProfile], labels: &[u8], train_rows: &[usize], cfg: &RunConfig) -> Result<(NfsModel, NfsScores)> {
    let features = assemble_features(profiles, cfg.nfs.dv);
    let mut fit_x = Matrix::zeros(train_rows.len(), features.cols);
    for (k, &r) in train_rows.iter().enumerate() {
        fit_x.row_mut(k).copy_from_slice(features.row(r));
    }
    let fit_y: Vec<u8> = train_rows.iter().map(|&r| labels[r]).collect();
    let model = NfsModel::fit(&fit_x, &fit_y, &cfg.nfs)?;
    let scores = model.score(&features);
    Ok((model, scores))
}

pub fn prepare(graph: TemporalBipartiteGraph, labels: Vec<u8>, cfg: &RunConfig) -> Result<Prepared> {
    let profiles = compute_profiles(&graph, &cfg.structure)?;
    prepare_with_profiles(graph, labels, profiles, cfg)
}

pub fn prepare_with_profiles(
    graph: TemporalBipartiteGraph,
    labels: Vec<u8>,
    profiles: Vec<NodeStructureProfile>,
    cfg: &RunConfig,
) -> Result<Prepared> {
    if labels.len() != graph.num_reviewers() {
        return Err(Error::DimensionMismatch {
            expected: graph.num_reviewers(),
            got: labels.len(),
        });
    }
    if profiles.len() != graph.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: graph.num_nodes(),
            got: profiles.len(),
        });
    }
    let split = stratified_split(&labels, cfg.split.train, cfg.split.val, cfg.seed);
    let (nfs, nfs_scores) = fit_nfs(&profiles, &labels, &split.train, cfg)?;
    info!(
        "NFS fitted on {} reviewers, threshold {:.3}, validation J {:.3}",
        split.train.len(),
        nfs.threshold,
        nfs.validation_j
    );
    Ok(Prepared {
        raw: raw_features(&graph),
        graph,
        labels,
        split,
        profiles,
        nfs,
        nfs_scores,
    })
}

/// Unlabelled preparation for scoring with an already fitted NFS model.
/// Labels are all zero and the split is empty.
pub fn prepare_with_model(
    graph: TemporalBipartiteGraph,
    profiles: Vec<NodeStructureProfile>,
    nfs: NfsModel,
    cfg: &RunConfig,
) -> Result<Prepared> {
    if profiles.len() != graph.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: graph.num_nodes(),
            got: profiles.len(),
        });
    }
    let features = assemble_features(&profiles, cfg.nfs.dv);
    let nfs_scores = nfs.score(&features);
    Ok(Prepared {
        raw: raw_features(&graph),
        labels: vec![0; graph.num_reviewers()],
        split: Split::default(),
        graph,
        profiles,
        nfs,
        nfs_scores,
    })
}

impl Prepared {
    /// Attaches reviewer labels and draws the stratified split from them,
    /// keeping the NFS model as is.
    pub fn with_labels(mut self, labels: Vec<u8>, cfg: &RunConfig) -> Result<Self> {
        if labels.len() != self.graph.num_reviewers() {
            return Err(Error::DimensionMismatch {
                expected: self.graph.num_reviewers(),
                got: labels.len(),
            });
        }
        self.split = stratified_split(&labels, cfg.split.train, cfg.split.val, cfg.seed);
        self.labels = labels;
        Ok(self)
    }
}

/// Pooled view of the graph as a variant sees it.
#[derive(Clone, Debug)]
pub struct Pooling {
    pub slices: Vec<WindowSlice>,
    pub pooled: PooledGraph,
    pub stats: Vec<PoolStats>,
    /// Static node features ([`node_features`]).
    pub node_x: Matrix,
    /// NFS scores the variant may use (zero for the no-NFS ablation).
    pub s_norm: Vec<f64>,
}

pub fn pool_for(prep: &Prepared, variant: Variant, cfg: &RunConfig) -> Result<Pooling> {
    let g = &prep.graph;
    let s_norm: Vec<f64> = if variant.uses_nfs() {
        prep.nfs_scores.normalized.clone()
    } else {
        vec![0.0; g.num_nodes()]
    };
    let node_x = node_features(g, &prep.raw.reviewer, &prep.raw.product, &s_norm, variant);
    let spec = if variant.uses_time() { cfg.windows } else { WindowSpec::Count(1) };
    let windowing = make_windows(g, spec)?;
    let slices = window_slices(g, &windowing);
    let span = g.time_range().map(|(a, b)| (a as f64, b as f64)).unwrap_or((0.0, 0.0));
    let omega = initial_frequencies(cfg.dga.time_dim);
    let phi = vec![0.0; omega.len()];
    let clustering: Vec<f64> = prep.profiles.iter().map(|p| p.clustering_coeff).collect();
    let mut parts = Vec::new();
    let mut stats = Vec::new();
    for slice in slices.iter().filter(|s| !s.nodes.is_empty()) {
        let width = node_x.cols + if variant.uses_time() { omega.len() } else { 0 };
        let mut h = Matrix::zeros(slice.nodes.len(), width);
        for (i, &v) in slice.nodes.iter().enumerate() {
            let row = h.row_mut(i);
            row[..node_x.cols].copy_from_slice(node_x.row(v));
            if variant.uses_time() {
                let te = time_encode(rescale_time(slice.times[i], span), &omega, &phi);
                row[node_x.cols..].copy_from_slice(&te);
            }
        }
        let (p, st) = pool_window(slice, &h, &s_norm, &clustering, &cfg.pool);
        parts.push(p);
        stats.push(st);
    }
    Ok(Pooling {
        slices,
        pooled: merge_windows(parts),
        stats,
        node_x,
        s_norm,
    })
}

/// Network input for `variant`, classifying every reviewer.
pub fn input_for(prep: &Prepared, variant: Variant, cfg: &RunConfig) -> Result<(DgaInput, Pooling)> {
    let pooling = pool_for(prep, variant, cfg)?;
    let dga_cfg = variant_config(cfg, variant);
    let readout: Vec<usize> = (0..prep.graph.num_reviewers()).collect();
    let input = build_input(
        &prep.graph,
        &pooling.slices,
        &pooling.pooled,
        &pooling.node_x,
        &pooling.s_norm,
        &readout,
        &dga_cfg,
    )?;
    Ok((input, pooling))
}

fn variant_config(cfg: &RunConfig, variant: Variant) -> crate::dga::DgaConfig {
    let mut c = cfg.dga.clone();
    c.variant = variant;
    c
}

#[derive(Clone, Debug)]
pub struct VariantRun {
    pub variant: Variant,
    pub outcome: TrainOutcome,
    /// Fake-class probability per reviewer.
    pub probs: Vec<f64>,
    /// Youden-optimal probability cut on the validation reviewers.
    pub threshold: f64,
    pub pool_stats: Vec<PoolStats>,
    pub pooled: PooledGraph,
}

pub fn run_variant(prep: &Prepared, variant: Variant, cfg: &RunConfig) -> Result<VariantRun> {
    let (input, pooling) = input_for(prep, variant, cfg)?;
    info!(
        "{variant}: {} supernodes, {} attention edges",
        input.num_supernodes(),
        input.num_edges()
    );
    let model = DgaModel::new(variant_config(cfg, variant))?;
    let outcome = train(model, &input, &prep.labels, &prep.split)?;
    let probs = predict_fake(&outcome.model, &input)?;
    let val = if prep.split.val.is_empty() { &prep.split.train } else { &prep.split.val };
    let vs: Vec<f64> = val.iter().map(|&r| probs[r]).collect();
    let vl: Vec<u8> = val.iter().map(|&r| prep.labels[r]).collect();
    let threshold = match youden_threshold(&vs, &vl) {
        Ok(p) if p.threshold.is_finite() => p.threshold,
        _ => 0.5,
    };
    Ok(VariantRun {
        variant,
        outcome,
        probs,
        threshold,
        pool_stats: pooling.stats,
        pooled: pooling.pooled,
    })
}

/// For each reviewer, whether it reviewed at least one product of each
/// scale (small, medium, large).
pub fn scale_membership(g: &TemporalBipartiteGraph) -> Vec<[bool; 3]> {
    let m = g.num_reviewers();
    (0..m)
        .map(|r| {
            let mut out = [false; 3];
            for &p in g.neighbors(r) {
                let idx = Scale::ALL
                    .iter()
                    .position(|&s| s == Scale::of(g.review_count(p)))
                    .expect("scale is one of ALL");
                out[idx] = true;
            }
            out
        })
        .collect()
}

fn scores_on(rows: &[usize], probs: &[f64], labels: &[u8], threshold: f64) -> Option<Scores> {
    let s: Vec<f64> = rows.iter().map(|&r| probs[r]).collect();
    let y: Vec<u8> = rows.iter().map(|&r| labels[r]).collect();
    evaluate(&s, &y, threshold).ok()
}

/// Test-set rows for the whole set ("all") and per product scale; scales
/// whose test reviewers are all one class are omitted.
pub fn evaluate_run(prep: &Prepared, run: &VariantRun) -> Result<Vec<MetricRow>> {
    let test = &prep.split.test;
    let name = run.variant.as_str();
    let all = scores_on(test, &run.probs, &prep.labels, run.threshold).ok_or(Error::SingleClass)?;
    let mut rows = vec![MetricRow::new(name, "all", &all)];
    let member = scale_membership(&prep.graph);
    for (i, scale) in Scale::ALL.iter().enumerate() {
        let subset: Vec<usize> = test.iter().copied().filter(|&r| member[r][i]).collect();
        match scores_on(&subset, &run.probs, &prep.labels, run.threshold) {
            Some(s) => rows.push(MetricRow::new(name, scale.as_str(), &s)),
            None => info!("{name}: no two-class test set on {} products", scale.as_str()),
        }
    }
    Ok(rows)
}

/// Trains and evaluates each variant on the shared split and seed.
pub fn run_ablation(prep: &Prepared, variants: &[Variant], cfg: &RunConfig) -> Result<(Vec<VariantRun>, Vec<MetricRow>)> {
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &v in variants {
        let run = run_variant(prep, v, cfg)?;
        rows.extend(evaluate_run(prep, &run)?);
        runs.push(run);
    }
    Ok((runs, rows))
}

/// Mean normalised NFS score of fake minus real reviewers.
pub fn nfs_gap(prep: &Prepared) -> f64 {
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (r, &y) in prep.labels.iter().enumerate() {
        sums[y as usize] += prep.nfs_scores.normalized[r];
        counts[y as usize] += 1;
    }
    sums[1] / counts[1].max(1) as f64 - sums[0] / counts[0].max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::preprocess;
    use crate::synth::{generate, SynthConfig};

    fn small(seed: u64) -> (RunConfig, Prepared) {
        let mut cfg = RunConfig {
            seed,
            ..RunConfig::default()
        };
        cfg.dga.max_epochs = 15;
        let cfg = cfg.resolved().unwrap();
        let ds = generate(&SynthConfig {
            n_reviewers: 200,
            n_products: 50,
            n_groups: 2,
            group_size: 8,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let g = preprocess(&ds.graph, 3).unwrap();
        let labels = g.reviewer_ids().iter().map(|id| ds.labels[id]).collect();
        (cfg.clone(), prepare(g, labels, &cfg).unwrap())
    }

    #[test]
    fn stored_model_reproduces_fitted_scores() {
        let (cfg, prep) = small(3);
        let again = prepare_with_model(prep.graph.clone(), prep.profiles.clone(), prep.nfs.clone(), &cfg).unwrap();
        assert_eq!(again.nfs_scores, prep.nfs_scores);
        assert!(again.split.train.is_empty());
        let labelled = again.with_labels(prep.labels.clone(), &cfg).unwrap();
        assert_eq!(labelled.split, prep.split);
        assert!(prep.clone().with_labels(vec![0; 3], &cfg).is_err());
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let (cfg, prep) = small(4);
        let short = prep.profiles[..prep.profiles.len() - 1].to_vec();
        assert!(prepare_with_profiles(prep.graph.clone(), prep.labels.clone(), short, &cfg).is_err());
        assert!(prepare_with_profiles(prep.graph.clone(), vec![0; 2], prep.profiles.clone(), &cfg).is_err());
    }

    #[test]
    fn ablation_without_nfs_sees_no_scores() {
        let (cfg, prep) = small(5);
        let pooling = pool_for(&prep, Variant::NoNfs, &cfg).unwrap();
        assert!(pooling.s_norm.iter().all(|&s| s == 0.0));
        let single = pool_for(&prep, Variant::NoTemporal, &cfg).unwrap();
        assert_eq!(single.stats.len(), 1);
        let full = pool_for(&prep, Variant::Full, &cfg).unwrap();
        assert!(full.stats.len() > 1);
        assert_eq!(full.node_x.rows, prep.graph.num_nodes());
    }

    #[test]
    fn ablation_rows_cover_each_variant() {
        let (cfg, prep) = small(6);
        let (runs, rows) = run_ablation(&prep, &[Variant::Full, Variant::NfsOnly], &cfg).unwrap();
        assert_eq!(runs.len(), 2);
        for v in ["full", "D"] {
            assert_eq!(rows.iter().filter(|r| r.variant == v && r.split == "all").count(), 1);
        }
        for r in &runs {
            assert_eq!(r.probs.len(), prep.graph.num_reviewers());
            assert!(r.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn every_reviewer_touches_some_scale() {
        let (_, prep) = small(7);
        let member = scale_membership(&prep.graph);
        assert_eq!(member.len(), prep.graph.num_reviewers());
        assert!(member.iter().all(|m| m.iter().any(|&b| b)));
    }

    #[test]
    fn gap_is_difference_of_class_means() {
        let (_, prep) = small(8);
        let mean = |c: u8| {
            let v: Vec<f64> = (0..prep.labels.len())
                .filter(|&r| prep.labels[r] == c)
                .map(|r| prep.nfs_scores.normalized[r])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((nfs_gap(&prep) - (mean(1) - mean(0))).abs() < 1e-12);
    }
}
