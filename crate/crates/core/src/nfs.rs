//! Network feature scoring: `[D_v, S_v]` → standardize → PCA → linear SVM
//! projection → min–max normalization → Youden-calibrated threshold.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::structure::NodeStructureProfile;

/// Which profile field fills the first NFS feature column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DvSource {
    #[default]
    Diversity,
    DegreeCentrality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NfsConfig {
    pub dv: DvSource,
    pub pca_components: usize,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub svm_lr: f64,
    pub use_bias: bool,
    /// Weight hinge terms inversely to class frequency.
    pub class_balanced: bool,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for NfsConfig {
    fn default() -> Self {
        Self {
            dv: DvSource::Diversity,
            pca_components: 2,
            svm_c: 1.0,
            svm_epochs: 500,
            svm_lr: 0.01,
            use_bias: true,
            class_balanced: true,
            validation_fraction: 0.2,
            seed: 72,
        }
    }
}

impl NfsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.pca_components) {
            return Err(Error::Config("pca_components must be 1 or 2".into()));
        }
        if self.svm_c <= 0.0 || self.svm_lr <= 0.0 || self.svm_epochs == 0 {
            return Err(Error::Config("svm settings must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must be in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NfsLabel {
    Normal,
    Suspicious,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NfsModel {
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    /// Columns are principal axes of the standardized features.
    pub pca_basis: Matrix,
    pub pca_kept: usize,
    pub svm_weights: Vec<f64>,
    pub bias: f64,
    pub score_min: f64,
    pub score_max: f64,
    pub threshold: f64,
    /// Youden index reached on the validation split.
    pub validation_j: f64,
    pub config: NfsConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NfsScores {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub labels: Vec<NfsLabel>,
}

/// Feature rows `f_v = [D_v, S_v]` in profile order.
pub fn assemble_features(profiles: &[NodeStructureProfile], dv: DvSource) -> Matrix {
    let mut m = Matrix::zeros(profiles.len(), 2);
    for (i, p) in profiles.iter().enumerate() {
        let d = match dv {
            DvSource::Diversity => p.diversity,
            DvSource::DegreeCentrality => p.degree_centrality,
        };
        m.set(i, 0, d);
        m.set(i, 1, p.self_similarity);
    }
    m
}

// ---------------------------------------------------------------------------
// Youden threshold

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YoudenPoint {
    pub threshold: f64,
    pub j: f64,
}

fn check_binary(labels: &[u8]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Threshold maximizing `TPR(t) − FPR(t)` for the rule `score ≥ t`.
/// Candidates are midpoints of consecutive distinct scores plus ±∞; ties go
/// to the larger threshold.
pub fn youden_threshold(scores: &[f64], labels: &[u8]) -> Result<YoudenPoint> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let (pos, neg) = check_binary(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // sweep from +inf downwards, admitting one block of tied scores at a time
    let mut best = YoudenPoint {
        threshold: f64::INFINITY,
        j: 0.0,
    };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() {
            0.5 * (s + scores[order[i]])
        } else {
            f64::NEG_INFINITY
        };
        let j = tp as f64 / pos as f64 - fp as f64 / neg as f64;
        // strictly better only: earlier candidates are larger thresholds
        if j > best.j + 1e-15 {
            best = YoudenPoint { threshold, j };
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Fitting

/// Per-column mean and population std, std clamped to 1e-12.
fn column_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows as f64;
    let mut means = vec![0.0; x.cols];
    let mut stds = vec![0.0; x.cols];
    for c in 0..x.cols {
        let col = x.column(c);
        let mu = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        means[c] = mu;
        stds[c] = if var.sqrt() < 1e-12 {
            warn!("feature column {c} has zero variance; std clamped to 1e-12");
            1e-12
        } else {
            var.sqrt()
        };
    }
    (means, stds)
}

pub fn standardize(x: &Matrix, means: &[f64], stds: &[f64]) -> Matrix {
    let mut out = x.clone();
    for r in 0..x.rows {
        for c in 0..x.cols {
            out.set(r, c, (x.get(r, c) - means[c]) / stds[c]);
        }
    }
    out
}

/// Principal axes of `z` (covariance eigenvectors, descending variance).
/// Each axis is signed so its largest-magnitude entry is positive.
fn pca_basis(z: &Matrix, keep: usize) -> Matrix {
    let d = z.cols;
    let n = z.rows as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in 0..z.rows {
        let row = z.row(r);
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += row[a] * row[b] / n;
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut basis = Matrix::zeros(d, keep);
    for (k, &idx) in order.iter().take(keep).enumerate() {
        let col: Vec<f64> = (0..d).map(|a| eig.eigenvectors[(a, idx)]).collect();
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (a, v) in col.iter().enumerate() {
            basis.set(a, k, sign * v);
        }
    }
    basis
}

/// Weighted hinge objective `‖w‖²/(2 C n) + Σ c_i max(0, 1 − y_i f_i) / Σ c_i`.
pub fn svm_objective(z: &Matrix, y: &[f64], weights: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    let reg = dot(w, w) / (2.0 * c * z.rows as f64);
    let hinge: f64 = (0..z.rows)
        .map(|i| weights[i] * (1.0 - y[i] * (dot(z.row(i), w) + b)).max(0.0))
        .sum();
    reg + hinge / total
}

/// Full-batch subgradient descent on the weighted hinge objective.
/// Subgradient steps are not monotone, so the best iterate seen so far is
/// kept and returned. Returns `(w, b, best objective after each epoch)`.
pub fn train_linear_svm(
    z: &Matrix,
    y: &[f64],
    weights: &[f64],
    cfg: &NfsConfig,
) -> (Vec<f64>, f64, Vec<f64>) {
    let d = z.cols;
    let n = z.rows as f64;
    let total: f64 = weights.iter().sum();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut history = Vec::with_capacity(cfg.svm_epochs);
    let mut best = (w.clone(), b, svm_objective(z, y, weights, &w, b, cfg.svm_c));
    for _ in 0..cfg.svm_epochs {
        let mut gw: Vec<f64> = w.iter().map(|wi| wi / (cfg.svm_c * n)).collect();
        let mut gb = 0.0;
        for i in 0..z.rows {
            let row = z.row(i);
            if y[i] * (dot(row, &w) + b) < 1.0 {
                let s = weights[i] * y[i] / total;
                for (g, x) in gw.iter_mut().zip(row) {
                    *g -= s * x;
                }
                gb -= s;
            }
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= cfg.svm_lr * g;
        }
        if cfg.use_bias {
            b -= cfg.svm_lr * gb;
        }
        let obj = svm_objective(z, y, weights, &w, b, cfg.svm_c);
        if obj < best.2 {
            best = (w.clone(), b, obj);
        }
        history.push(best.2);
    }
    (best.0, best.1, history)
}

/// Stratified split of row indices into (fit, validation).
pub fn stratified_split(labels: &[u8], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * val_fraction).round() as usize).clamp(
            usize::from(idx.len() >= 2),
            idx.len().saturating_sub(1),
        );
        val.extend_from_slice(&idx[..n_val]);
        fit.extend_from_slice(&idx[n_val..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

fn select_rows(x: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), x.cols);
    for (k, &r) in rows.iter().enumerate() {
        out.row_mut(k).copy_from_slice(x.row(r));
    }
    out
}

impl NfsModel {
    /// Fits standardizer, PCA and SVM on a stratified fit split and picks
    /// the threshold on the held-out validation split.
    pub fn fit(features: &Matrix, labels: &[u8], cfg: &NfsConfig) -> Result<NfsModel> {
        cfg.validate()?;
        if features.rows != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows,
                got: labels.len(),
            });
        }
        if features.cols != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: features.cols,
            });
        }
        check_binary(labels)?;
        if labels.len() < 10 {
            return Err(Error::InvalidArgument(format!(
                "need at least 10 labelled nodes, got {}",
                labels.len()
            )));
        }
        let (fit_idx, val_idx) = stratified_split(labels, cfg.validation_fraction, cfg.seed);
        let x_fit = select_rows(features, &fit_idx);
        let y_fit: Vec<u8> = fit_idx.iter().map(|&i| labels[i]).collect();
        check_binary(&y_fit)?;

        let (means, stds) = column_stats(&x_fit);
        let z_std = standardize(&x_fit, &means, &stds);
        let basis = pca_basis(&z_std, cfg.pca_components);
        let z = z_std.matmul(&basis);

        let pos = y_fit.iter().filter(|&&l| l == 1).count() as f64;
        let neg = y_fit.len() as f64 - pos;
        let ys: Vec<f64> = y_fit.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let sample_w: Vec<f64> = y_fit
            .iter()
            .map(|&l| match (cfg.class_balanced, l) {
                (false, _) => 1.0,
                (true, 1) => 0.5 * y_fit.len() as f64 / pos,
                (true, _) => 0.5 * y_fit.len() as f64 / neg,
            })
            .collect();
        let (w, b, _) = train_linear_svm(&z, &ys, &sample_w, cfg);

        let raw: Vec<f64> = (0..z.rows).map(|i| dot(z.row(i), &w) + b).collect();
        let mut score_min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let mut score_max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if score_max - score_min < 1e-12 {
            warn!("degenerate NFS calibration range; widening to unit span");
            score_min -= 0.5;
            score_max += 0.5;
        }
        let mut model = NfsModel {
            feature_means: means,
            feature_stds: stds,
            pca_basis: basis,
            pca_kept: cfg.pca_components,
            svm_weights: w,
            bias: b,
            score_min,
            score_max,
            threshold: 0.5,
            validation_j: 0.0,
            config: cfg.clone(),
        };
        let x_val = select_rows(features, &val_idx);
        let y_val: Vec<u8> = val_idx.iter().map(|&i| labels[i]).collect();
        let val_scores = model.score(&x_val).normalized;
        let yp = youden_threshold(&val_scores, &y_val)?;
        model.threshold = yp.threshold.clamp(0.0, 1.0);
        model.validation_j = yp.j;
        Ok(model)
    }

    /// Processed feature vectors `z_v = PCA(standardize(f_v))`.
    pub fn transform(&self, features: &Matrix) -> Matrix {
        standardize(features, &self.feature_means, &self.feature_stds).matmul(&self.pca_basis)
    }

    pub fn raw_score(&self, z: &[f64]) -> f64 {
        dot(z, &self.svm_weights) + self.bias
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        ((raw - self.score_min) / (self.score_max - self.score_min)).clamp(0.0, 1.0)
    }

    pub fn classify(&self, normalized: f64) -> NfsLabel {
        if normalized >= self.threshold {
            NfsLabel::Suspicious
        } else {
            NfsLabel::Normal
        }
    }

    pub fn score(&self, features: &Matrix) -> NfsScores {
        let z = self.transform(features);
        let raw: Vec<f64> = (0..z.rows).map(|i| self.raw_score(z.row(i))).collect();
        let normalized: Vec<f64> = raw.iter().map(|&r| self.normalize(r)).collect();
        let labels = normalized.iter().map(|&s| self.classify(s)).collect();
        NfsScores {
            raw,
            normalized,
            labels,
        }
    }
}

pub fn write_scores_csv<W: std::io::Write>(names: &[String], scores: &NfsScores, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node_id", "raw", "norm", "label"])?;
    for (i, name) in names.iter().enumerate() {
        let label = match scores.labels[i] {
            NfsLabel::Suspicious => "Suspicious",
            NfsLabel::Normal => "Normal",
        };
        w.write_record([
            name.clone(),
            scores.raw[i].to_string(),
            scores.normalized[i].to_string(),
            label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive sweep: every midpoint and sentinel, ties to larger t.
    fn sweep_oracle(scores: &[f64], labels: &[u8]) -> (f64, f64) {
        let mut s: Vec<f64> = scores.to_vec();
        s.sort_by(f64::total_cmp);
        s.dedup();
        let mut cands = vec![f64::NEG_INFINITY, f64::INFINITY];
        for w in s.windows(2) {
            cands.push(0.5 * (w[0] + w[1]));
        }
        cands.sort_by(|a, b| b.total_cmp(a));
        let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
        let neg = labels.len() as f64 - pos;
        let mut best = (f64::INFINITY, f64::NEG_INFINITY);
        for t in cands {
            let tp = (0..scores.len()).filter(|&i| labels[i] == 1 && scores[i] >= t).count() as f64;
            let fp = (0..scores.len()).filter(|&i| labels[i] == 0 && scores[i] >= t).count() as f64;
            let j = tp / pos - fp / neg;
            if j > best.1 + 1e-15 {
                best = (t, j);
            }
        }
        best
    }

    #[test]
    fn youden_separable_toy() {
        let p = youden_threshold(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_eq!(p.threshold, 0.5);
        assert_eq!(p.j, 1.0);
        assert_eq!(sweep_oracle(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]), (0.5, 1.0));
    }

    #[test]
    fn youden_identical_scores() {
        let p = youden_threshold(&[0.3; 6], &[0, 1, 0, 1, 0, 1]).unwrap();
        assert_eq!(p.j, 0.0);
        assert_eq!(p.threshold, f64::INFINITY);
    }

    #[test]
    fn youden_single_class_errors() {
        assert!(matches!(youden_threshold(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn youden_matches_sweep_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        for _ in 0..200 {
            let scores: Vec<f64> = (0..20).map(|_| (rng.gen_range(0..8) as f64) / 8.0).collect();
            let mut labels: Vec<u8> = (0..20).map(|_| rng.gen_range(0..2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let p = youden_threshold(&scores, &labels).unwrap();
            let (t, j) = sweep_oracle(&scores, &labels);
            assert!((p.j - j).abs() < 1e-12);
            assert_eq!(p.threshold, t);
            assert!(p.j >= 0.0);
        }
    }

    fn separable_toy() -> (Matrix, Vec<u8>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let y = u8::from(i % 2 == 1);
            let x = if y == 1 { 1.0 } else { -1.0 };
            rows.push(vec![x, 0.0]);
            labels.push(y);
        }
        (Matrix::from_rows(&rows), labels)
    }

    #[test]
    fn fit_separable_orients_positive_class_up() {
        let (x, y) = separable_toy();
        let m = NfsModel::fit(&x, &y, &NfsConfig::default()).unwrap();
        assert_eq!(m.validation_j, 1.0);
        let s = m.score(&x);
        for i in 0..20 {
            if y[i] == 1 {
                assert!(s.raw[i] > 0.0);
                assert_eq!(s.labels[i], NfsLabel::Suspicious);
            } else {
                assert!(s.raw[i] < 0.0);
                assert_eq!(s.labels[i], NfsLabel::Normal);
            }
        }
        assert!((0.0..=1.0).contains(&m.threshold));
    }

    #[test]
    fn fit_rejects_single_class() {
        let (x, _) = separable_toy();
        assert!(matches!(NfsModel::fit(&x, &[0; 20], &NfsConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn standardized_columns_are_centered_and_pca_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let a: f64 = rng.gen();
                vec![a, 0.5 * a + rng.gen::<f64>()]
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let (mu, sd) = column_stats(&x);
        let z = standardize(&x, &mu, &sd);
        for c in 0..2 {
            assert!(crate::linalg::mean(&z.column(c)).abs() < 1e-9);
        }
        let basis = pca_basis(&z, 2);
        let gram = basis.transpose().matmul(&basis);
        assert!(gram.max_abs_diff(&Matrix::identity(2)) < 1e-9);
        // full basis: inverse transform recovers standardized features
        let back = z.matmul(&basis).matmul(&basis.transpose());
        assert!(back.max_abs_diff(&z) < 1e-9);
    }

    #[test]
    fn svm_objective_non_increasing_on_separable_toy() {
        let (x, y) = separable_toy();
        let ys: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let (mu, sd) = column_stats(&x);
        let z = standardize(&x, &mu, &sd).matmul(&pca_basis(&standardize(&x, &mu, &sd), 2));
        let (_, _, hist) = train_linear_svm(&z, &ys, &[1.0; 20], &NfsConfig::default());
        assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{hist:?}");
    }

    #[test]
    fn score_edge_cases() {
        let (x, y) = separable_toy();
        let mut m = NfsModel::fit(&x, &y, &NfsConfig::default()).unwrap();
        assert_eq!(m.normalize(m.score_min), 0.0);
        assert_eq!(m.normalize(m.score_max), 1.0);
        m.threshold = 0.68;
        assert_eq!(m.classify(0.68), NfsLabel::Suspicious);
        assert_eq!(m.classify(0.0), NfsLabel::Normal);
        assert_eq!(m.classify(1.0), NfsLabel::Suspicious);
    }

    #[test]
    fn assemble_copies_profile_fields() {
        let p = |n, eta, s, c| NodeStructureProfile {
            node: n,
            degree_centrality: c,
            pagerank: 1.0,
            diversity: eta,
            self_similarity: s,
            geometric_score: 0.0,
            spectral_score: 0.0,
            consistency: 0.5,
            clustering_coeff: 0.0,
        };
        let profiles = vec![p(0, 0.0, 0.0, 0.1), p(1, 0.3, 0.7, 0.2), p(2, 0.123456789, 0.9, 0.3)];
        let f = assemble_features(&profiles, DvSource::Diversity);
        assert_eq!(f.shape(), (3, 2));
        assert_eq!(f.row(0), &[0.0, 0.0]);
        assert_eq!(f.get(2, 0).to_bits(), 0.123456789f64.to_bits());
        let g = assemble_features(&profiles, DvSource::DegreeCentrality);
        assert_eq!(g.get(1, 0), 0.2);
    }
}
