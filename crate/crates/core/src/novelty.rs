//! Degree-of-novelty scores: probabilistic PCA latent projections and
//! distances to the bank of training lesions.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::{IOU_ADJ_FEATURE, MAHALANOBIS_FEATURE, SMALLEST_DISTANCE_FEATURE};
use crate::tabular::FeatureTable;

/// Diagonal jitter added to the latent covariance before inversion.
pub const COVARIANCE_JITTER: f64 = 1e-8;
/// Default share of variance the latent space must explain.
pub const DEFAULT_EXPLAINED_VARIANCE: f64 = 0.9;

/// Closed-form maximum-likelihood probabilistic PCA model.
#[derive(Debug, Clone, PartialEq)]
pub struct PpcaModel {
    pub mean: DVector<f64>,
    /// D × q loadings, columns ordered by decreasing variance.
    pub loadings: DMatrix<f64>,
    pub noise_variance: f64,
    /// All D eigenvalues of the sample covariance, decreasing.
    pub eigenvalues: Vec<f64>,
}

impl PpcaModel {
    pub fn latent_dim(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input("feature matrix contains non-finite values".into()))
    }
}

/// Eigen-decomposition of the (1/n) sample covariance, eigenpairs sorted by
/// decreasing eigenvalue and each eigenvector signed so its largest-magnitude
/// entry is positive.
fn sorted_covariance_eigen(x: &DMatrix<f64>) -> (DVector<f64>, Vec<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut centred = x.clone();
    for (j, mut col) in centred.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = centred.transpose() * &centred / n;
    let eig = SymmetricEigen::new(cov);
    let d = x.ncols();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let mut big = 0;
        for r in 0..d {
            if v[r].abs() > v[big].abs() {
                big = r;
            }
        }
        if v[big] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
    }
    (mean, values, vectors)
}

/// Smallest latent dimension whose leading eigenvalues explain at least
/// `fraction` of the total variance, clamped to `1..=d-1`.
pub fn choose_latent_dim(eigenvalues: &[f64], fraction: f64) -> usize {
    let d = eigenvalues.len();
    if d < 2 {
        return 1;
    }
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (k, &l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc / total >= fraction {
            return (k + 1).clamp(1, d - 1);
        }
    }
    d - 1
}

/// Fits PPCA with `q` latent dimensions. σ² is the mean of the `D − q`
/// discarded eigenvalues and `W = U_q (Λ_q − σ² I)^{1/2}`.
pub fn ppca_fit(x: &DMatrix<f64>, q: usize) -> Result<PpcaModel> {
    check_finite(x)?;
    let (n, d) = x.shape();
    if q == 0 || q >= d {
        return Err(Error::Input(format!("latent dimension {q} must satisfy 1 <= q < {d}")));
    }
    if n <= q {
        return Err(Error::InsufficientData(format!(
            "PPCA with q = {q} needs more than {q} rows, got {n}"
        )));
    }
    let (mean, eigenvalues, vectors) = sorted_covariance_eigen(x);
    let noise_variance = eigenvalues[q..].iter().sum::<f64>() / (d - q) as f64;
    let mut loadings = DMatrix::zeros(d, q);
    for k in 0..q {
        let scale = (eigenvalues[k] - noise_variance).max(0.0).sqrt();
        loadings.set_column(k, &(vectors.column(k) * scale));
    }
    Ok(PpcaModel {
        mean,
        loadings,
        noise_variance,
        eigenvalues,
    })
}

/// Fits PPCA with the latent dimension chosen by [`choose_latent_dim`].
pub fn ppca_fit_auto(x: &DMatrix<f64>, fraction: f64) -> Result<PpcaModel> {
    check_finite(x)?;
    if x.ncols() < 2 {
        return Err(Error::Input("PPCA needs at least two feature columns".into()));
    }
    let (_, eigenvalues, _) = sorted_covariance_eigen(x);
    let q = choose_latent_dim(&eigenvalues, fraction).min(x.nrows().saturating_sub(1)).max(1);
    ppca_fit(x, q)
}

/// Posterior mean latent `(WᵀW + σ² I)⁻¹ Wᵀ (x − μ)`.
pub fn ppca_project(m: &PpcaModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != m.input_dim() {
        return Err(Error::Input(format!(
            "expected a {}-vector, got {}",
            m.input_dim(),
            x.len()
        )));
    }
    let q = m.latent_dim();
    let wt = m.loadings.transpose();
    let mmat = &wt * &m.loadings + DMatrix::identity(q, q) * m.noise_variance;
    let rhs = wt * (x - &m.mean);
    mmat.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular PPCA posterior matrix".into()))
}

/// Projects each row of `x`.
pub fn ppca_project_rows(m: &PpcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(x.nrows(), m.latent_dim());
    for r in 0..x.nrows() {
        let z = ppca_project(m, &x.row(r).transpose())?;
        out.set_row(r, &z.transpose());
    }
    Ok(out)
}

/// Training latents with their mean and regularised covariance.
#[derive(Debug, Clone)]
pub struct LatentBank {
    latents: DMatrix<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl LatentBank {
    /// Uses the unbiased sample covariance plus [`COVARIANCE_JITTER`] on
    /// the diagonal.
    pub fn fit(latents: DMatrix<f64>) -> Result<Self> {
        let (n, q) = latents.shape();
        if n < 2 || q == 0 {
            return Err(Error::InsufficientData(format!(
                "latent bank needs at least two rows and one column, got {n}x{q}"
            )));
        }
        check_finite(&latents)?;
        let mean = DVector::from_iterator(q, latents.column_iter().map(|c| c.sum() / n as f64));
        let mut centred = latents.clone();
        for (j, mut col) in centred.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        let mut cov = centred.transpose() * &centred / (n - 1) as f64;
        for k in 0..q {
            cov[(k, k)] += COVARIANCE_JITTER;
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numeric("latent covariance is not positive definite".into()))?;
        Ok(Self {
            latents,
            mean,
            cov,
            chol,
        })
    }

    pub fn latents(&self) -> &DMatrix<f64> {
        &self.latents
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

pub fn mahalanobis(bank: &LatentBank, z: &DVector<f64>) -> Result<f64> {
    if z.len() != bank.mean.len() {
        return Err(Error::Input("latent dimension mismatch".into()));
    }
    let d = z - &bank.mean;
    let y = bank
        .chol
        .l()
        .solve_lower_triangular(&d)
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    Ok(y.norm_squared().sqrt())
}

/// Euclidean distance to the closest bank latent at non-zero distance.
pub fn smallest_distance(bank: &LatentBank, z: &DVector<f64>) -> Result<f64> {
    if z.len() != bank.mean.len() {
        return Err(Error::Input("latent dimension mismatch".into()));
    }
    let mut best = f64::INFINITY;
    for row in bank.latents.row_iter() {
        let d = row
            .iter()
            .zip(z.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if d > 0.0 && d < best {
            best = d;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::NoValidNeighbor)
    }
}

fn design_matrix(t: &FeatureTable, columns: &[String], mean: &[f64], std: &[f64]) -> Result<DMatrix<f64>> {
    let sel = t.select_columns(columns)?;
    Ok(DMatrix::from_fn(sel.n_rows(), columns.len(), |r, c| {
        (sel.cell(r, c).unwrap_or(mean[c]) - mean[c]) / std[c]
    }))
}

/// True for lesion-scale columns that feed the novelty model.
pub fn is_novelty_input(column: &str) -> bool {
    (column.starts_with("lesion__") || column.starts_with("perilesion__"))
        && column != IOU_ADJ_FEATURE
        && column != MAHALANOBIS_FEATURE
        && column != SMALLEST_DISTANCE_FEATURE
}

/// PPCA novelty model fitted on a training feature table. Missing cells
/// are filled with training means and every table is scaled with the
/// training statistics, so all datasets share one latent space.
#[derive(Debug, Clone)]
pub struct NoveltyScorer {
    columns: Vec<String>,
    mean: Vec<f64>,
    std: Vec<f64>,
    model: PpcaModel,
    bank: LatentBank,
}

impl NoveltyScorer {
    pub fn fit(train: &FeatureTable, explained_variance: f64) -> Result<Self> {
        let mut columns = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for (j, name) in train.columns().iter().enumerate() {
            if !is_novelty_input(name) {
                continue;
            }
            let obs: Vec<f64> = train.column(j).flatten().collect();
            if obs.is_empty() {
                continue;
            }
            let m = obs.iter().sum::<f64>() / obs.len() as f64;
            // Filled cells sit at the mean, so they add nothing to the spread.
            let v = obs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / train.n_rows() as f64;
            if v.sqrt() > 0.0 {
                columns.push(name.clone());
                mean.push(m);
                std.push(v.sqrt());
            }
        }
        if columns.len() < 2 {
            return Err(Error::EmptyFeatureSpace);
        }
        let x = design_matrix(train, &columns, &mean, &std)?;
        let model = ppca_fit_auto(&x, explained_variance)?;
        let bank = LatentBank::fit(ppca_project_rows(&model, &x)?)?;
        Ok(Self {
            columns,
            mean,
            std,
            model,
            bank,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn model(&self) -> &PpcaModel {
        &self.model
    }

    pub fn bank(&self) -> &LatentBank {
        &self.bank
    }

    /// `(mahalanobis, smallest_distance)` per row; a row with no distinct
    /// neighbor gets a missing smallest distance.
    pub fn score(&self, t: &FeatureTable) -> Result<Vec<(Option<f64>, Option<f64>)>> {
        let x = design_matrix(t, &self.columns, &self.mean, &self.std)?;
        let z = ppca_project_rows(&self.model, &x)?;
        z.row_iter()
            .map(|row| {
                let z = row.transpose();
                let m = mahalanobis(&self.bank, &z)?;
                let s = match smallest_distance(&self.bank, &z) {
                    Ok(d) => Some(d),
                    Err(Error::NoValidNeighbor) => None,
                    Err(e) => return Err(e),
                };
                Ok((Some(m), s))
            })
            .collect()
    }

    /// Appends both novelty columns to `t`.
    pub fn append(&self, t: &FeatureTable) -> Result<FeatureTable> {
        let scores = self.score(t)?;
        t.with_column(MAHALANOBIS_FEATURE, scores.iter().map(|s| s.0).collect())?
            .with_column(SMALLEST_DISTANCE_FEATURE, scores.iter().map(|s| s.1).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn rank_one_line_has_zero_noise() {
        let dir = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let shift = DVector::from_vec(vec![3.0, 1.0, -1.0]);
        let x = DMatrix::from_fn(40, 3, |r, c| (r as f64 - 20.0) * 0.1 * dir[c] + shift[c]);
        let m = ppca_fit(&x, 1).unwrap();
        assert!(m.noise_variance.abs() < 1e-12);
        let w = m.loadings.column(0);
        let cos = w.dot(&dir).abs() / (w.norm() * dir.norm());
        assert!((cos - 1.0).abs() < 1e-10);
        // dir's largest-magnitude entry is negative, so the sign flips
        assert!(w[1] > 0.0);
    }

    #[test]
    fn isotropic_noise_variance() {
        let sigma = 1.5;
        let x = gaussian(10_000, 6, 1) * sigma;
        let m = ppca_fit(&x, 1).unwrap();
        let rel = (m.noise_variance - sigma * sigma).abs() / (sigma * sigma);
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn duplicated_rows_give_the_same_model() {
        let x = gaussian(30, 4, 2);
        let doubled = DMatrix::from_fn(60, 4, |r, c| x[(r % 30, c)]);
        let a = ppca_fit(&x, 2).unwrap();
        let b = ppca_fit(&doubled, 2).unwrap();
        assert!((a.noise_variance - b.noise_variance).abs() < 1e-12);
        assert!((&a.loadings - &b.loadings).amax() < 1e-10);
    }

    #[test]
    fn fit_errors() {
        let x = gaussian(2, 4, 3);
        assert!(matches!(ppca_fit(&x, 2), Err(Error::InsufficientData(_))));
        assert!(ppca_fit(&x, 4).is_err());
        let mut bad = gaussian(10, 3, 3);
        bad[(0, 0)] = f64::NAN;
        assert!(matches!(ppca_fit(&bad, 1), Err(Error::Input(_))));
    }

    #[test]
    fn projection_of_mean_is_zero_and_noiseless_inverts() {
        let x = gaussian(50, 4, 4);
        let m = ppca_fit(&x, 2).unwrap();
        assert!(ppca_project(&m, &m.mean).unwrap().amax() < 1e-12);

        let mut m0 = m.clone();
        m0.noise_variance = 0.0;
        let z_true = DVector::from_vec(vec![0.3, -1.2]);
        let x_in = &m0.mean + &m0.loadings * &z_true;
        let z = ppca_project(&m0, &x_in).unwrap();
        let recon = &m0.loadings * &z;
        assert!((recon - (&x_in - &m0.mean)).amax() < 1e-10);
        assert!(ppca_project(&m, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn latent_dim_choice() {
        assert_eq!(choose_latent_dim(&[5.0, 3.0, 1.0, 1.0], 0.8), 2);
        assert_eq!(choose_latent_dim(&[1.0, 1.0, 1.0, 1.0], 0.9), 3);
        assert_eq!(choose_latent_dim(&[10.0, 0.0], 0.9), 1);
    }

    #[test]
    fn bank_distances() {
        let bank = LatentBank::fit(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])).unwrap();
        let z = DVector::from_vec(vec![0.4, 0.0]);
        assert!((smallest_distance(&bank, &z).unwrap() - 0.4).abs() < 1e-15);
        // query equal to a bank point skips it
        let z0 = DVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(smallest_distance(&bank, &z0).unwrap(), 1.0);
        let same = LatentBank::fit(DMatrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap();
        assert!(matches!(
            smallest_distance(&same, &DVector::from_vec(vec![1.0])),
            Err(Error::NoValidNeighbor)
        ));
    }

    #[test]
    fn mahalanobis_centre_and_unit() {
        let bank = LatentBank::fit(gaussian(300, 3, 6)).unwrap();
        assert!(mahalanobis(&bank, &bank.mean().clone()).unwrap() < 1e-12);

        // four points whose unbiased covariance is the identity
        let mut pts = Vec::new();
        for k in 0..2 {
            for s in [-1.0, 1.0] {
                let mut p = [0.0, 0.0];
                p[k] = s * 1.5f64.sqrt();
                pts.extend_from_slice(&p);
            }
        }
        let bank = LatentBank::fit(DMatrix::from_row_slice(4, 2, &pts)).unwrap();
        let d = mahalanobis(&bank, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-7);
    }

    #[test]
    fn scorer_uses_lesion_columns_only() {
        use crate::tabular::RowId;
        let x = gaussian(60, 3, 9);
        let names = vec![
            "lesion__a".to_string(),
            "lesion__b".into(),
            "perilesion__c".into(),
            "lesion__quality__iou_adj".into(),
            "patient__age".into(),
        ];
        let rows: Vec<RowId> = (0..60)
            .map(|i| RowId { dataset_id: "train".into(), subject_id: "s".into(), lesion_id: i + 1 })
            .collect();
        let cells: Vec<Vec<Option<f64>>> = (0..60)
            .map(|r| {
                let a = x[(r, 0)];
                vec![Some(a), Some(x[(r, 1)] + 0.5 * a), if r == 3 { None } else { Some(x[(r, 2)]) }, Some(0.5), Some(r as f64)]
            })
            .collect();
        let t = FeatureTable::new(rows.clone(), names.clone(), cells, vec![0.0; 60]).unwrap();
        let scorer = NoveltyScorer::fit(&t, DEFAULT_EXPLAINED_VARIANCE).unwrap();
        assert_eq!(scorer.columns(), &names[..3]);

        let out = scorer.append(&t).unwrap();
        assert_eq!(out.n_cols(), 7);
        let m = out.column_index(MAHALANOBIS_FEATURE).unwrap();
        let s = out.column_index(SMALLEST_DISTANCE_FEATURE).unwrap();
        assert!(out.column(s).all(|v| v.unwrap() > 0.0));

        let far = FeatureTable::new(
            vec![rows[0].clone()],
            names,
            vec![vec![Some(40.0), Some(-40.0), Some(40.0), None, None]],
            vec![0.0],
        )
        .unwrap();
        let far = scorer.append(&far).unwrap();
        let max_train = out.column(m).map(|v| v.unwrap()).fold(0.0, f64::max);
        assert!(far.cell(0, m).unwrap() > max_train);
    }

    /// Squared residual of projecting centred rows onto the loading span.
    fn reconstruction_error(m: &PpcaModel, x: &DMatrix<f64>) -> f64 {
        let q = m.loadings.clone().qr().q();
        x.row_iter()
            .map(|r| {
                let c = r.transpose() - &m.mean;
                (&c - &q * (q.transpose() * &c)).norm_squared()
            })
            .sum()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn reconstruction_error_falls_with_latent_dim(seed in 0u64..10_000, q in 2usize..6) {
            let scales = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.5, 2.0, 1.5, 1.0, 0.5]));
            let x = gaussian(30, 6, seed) * scales;
            let hi = reconstruction_error(&ppca_fit(&x, q).unwrap(), &x);
            let lo = reconstruction_error(&ppca_fit(&x, q - 1).unwrap(), &x);
            prop_assert!(hi <= lo * (1.0 + 1e-12) + 1e-12, "{} > {}", hi, lo);
        }

        #[test]
        fn mahalanobis_is_affine_invariant(seed in 0u64..10_000) {
            let z = gaussian(40, 3, seed);
            let a = gaussian(3, 3, seed + 1) + DMatrix::identity(3, 3) * 2.0;
            prop_assume!(a.singular_values().min() > 0.3);
            let b = gaussian(1, 3, seed + 2);
            let mut z2 = &z * a.transpose();
            for mut row in z2.row_iter_mut() {
                row += &b;
            }
            let bank = LatentBank::fit(z).unwrap();
            let bank2 = LatentBank::fit(z2).unwrap();
            let query = gaussian(3, 1, seed + 3).column(0).into_owned();
            let query2 = &a * &query + b.transpose();
            let d1 = mahalanobis(&bank, &query).unwrap();
            let d2 = mahalanobis(&bank2, &query2).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-5 * d1.max(1.0), "{} vs {}", d1, d2);
        }

        #[test]
        fn smallest_distance_is_the_nearest_other_point(seed in 0u64..10_000, pick in 0usize..20) {
            let z = gaussian(20, 3, seed);
            let bank = LatentBank::fit(z.clone()).unwrap();
            let query = z.row(pick).transpose();
            let d = smallest_distance(&bank, &query).unwrap();
            let mut best = f64::INFINITY;
            for (i, row) in z.row_iter().enumerate() {
                let e = (row.transpose() - &query).norm();
                if i != pick {
                    prop_assert!(d <= e);
                    best = best.min(e);
                }
            }
            prop_assert_eq!(d, best);
        }
    }
}
