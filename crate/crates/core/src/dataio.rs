//! Observational data, normal-Wishart hyperparameters and their posterior update.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An `N x n` matrix of finite observations with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    columns: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, columns: Vec<String>) -> Result<Self> {
        if values.nrows() < 1 {
            return Err(Error::InvalidData("need at least one observation".into()));
        }
        if values.ncols() < 2 {
            return Err(Error::InvalidData("need at least two variables".into()));
        }
        if columns.len() != values.ncols() {
            return Err(Error::InvalidData(format!(
                "{} column names for {} columns",
                columns.len(),
                values.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidData(format!("duplicate column name {c:?}")));
            }
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, col) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::NonNumericCell {
                row,
                col,
                value: values[(row, col)].to_string(),
            });
        }
        Ok(Self { values, columns })
    }

    /// Builds a matrix with auto-generated column names `x1..xn`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let columns = default_names(values.ncols());
        Self::new(values, columns)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Sample count `N`.
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    /// Variable count `n`.
    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    /// Writes the matrix as comma-separated text with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for r in 0..self.n_samples() {
            w.write_record(self.values.row(r).iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("x{j}")).collect()
}

/// Parses a comma-delimited numeric file. Row numbers in errors are 1-based file lines.
pub fn load_csv(path: &Path, header: bool) -> Result<DataMatrix> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let mut names: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = line + 1;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows {
                row,
                expected,
                found: record.len(),
            });
        }
        if header && names.is_none() {
            names = Some(record.iter().map(str::to_owned).collect());
            continue;
        }
        let parsed = record
            .iter()
            .enumerate()
            .map(|(col, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonNumericCell {
                    row,
                    col: col + 1,
                    value: cell.to_owned(),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(parsed);
    }
    let n = width.unwrap_or(0);
    let values = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    let columns = names.unwrap_or_else(|| default_names(n));
    DataMatrix::new(values, columns)
}

/// Centers every column and scales it to unit sample variance (denominator `N - 1`).
pub fn standardize(d: &DataMatrix) -> Result<DataMatrix> {
    let n_samples = d.n_samples();
    if n_samples < 2 {
        return Err(Error::InvalidData(
            "standardization needs at least two observations".into(),
        ));
    }
    let mut values = d.values.clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_samples - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) || sd <= f64::EPSILON * mean.abs() {
            return Err(Error::ConstantColumn(j));
        }
        col.apply(|v| *v = (*v - mean) / sd);
    }
    DataMatrix::new(values, d.columns.clone())
}

/// Normal-Wishart prior: `mu | W ~ N(nu, alpha_mu W)`, `W ~ Wishart(T^-1, alpha_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BgeHyper {
    pub alpha_mu: f64,
    pub alpha_w: f64,
    pub nu: DVector<f64>,
    pub t_mat: DMatrix<f64>,
}

impl BgeHyper {
    /// `alpha_mu = 1`, `alpha_w = n + 2`, `T = I/2`, `nu = 0`.
    pub fn default_for(n: usize) -> Self {
        Self {
            alpha_mu: 1.0,
            alpha_w: n as f64 + 2.0,
            nu: DVector::zeros(n),
            t_mat: DMatrix::identity(n, n) * 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.t_mat.nrows() != n || self.t_mat.ncols() != n {
            return Err(Error::InvalidHyper(format!(
                "T is {}x{}, expected {n}x{n}",
                self.t_mat.nrows(),
                self.t_mat.ncols()
            )));
        }
        if !(self.alpha_mu > 0.0) {
            return Err(Error::InvalidHyper("alpha_mu must be positive".into()));
        }
        if !(self.alpha_w > n as f64 - 1.0) {
            return Err(Error::InvalidHyper(format!(
                "alpha_w = {} must exceed n - 1 = {}",
                self.alpha_w,
                n as f64 - 1.0
            )));
        }
        if (&self.t_mat - self.t_mat.transpose()).amax() > 1e-12 * self.t_mat.amax().max(1.0) {
            return Err(Error::InvalidHyper("T is not symmetric".into()));
        }
        if self.t_mat.clone().cholesky().is_none() {
            return Err(Error::InvalidHyper("T is not positive definite".into()));
        }
        Ok(())
    }
}

/// Posterior normal-Wishart parameters. `nu_post` and `alpha_mu_post` are kept for
/// completeness; effect sampling only needs `r_mat` and `alpha_w_post`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub r_mat: DMatrix<f64>,
    pub alpha_w_post: f64,
    pub alpha_mu_post: f64,
    pub nu_post: DVector<f64>,
    pub n_samples: usize,
}

impl PosteriorStats {
    /// Posterior update from a raw `N x n` value matrix (no shape restrictions beyond
    /// matching the hyperparameter dimension).
    pub fn from_values(values: &DMatrix<f64>, h: &BgeHyper) -> Result<Self> {
        h.validate()?;
        let (n_samples, n) = values.shape();
        if n != h.dim() {
            return Err(Error::InvalidHyper(format!(
                "hyperparameters are for {} variables, data has {n}",
                h.dim()
            )));
        }
        if n_samples == 0 {
            return Err(Error::InvalidData("need at least one observation".into()));
        }
        let big_n = n_samples as f64;
        let mean: DVector<f64> = DVector::from_fn(n, |j, _| values.column(j).mean());
        let mut centered = values.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        let scatter = centered.transpose() * &centered;
        let diff = &h.nu - &mean;
        let shrink = h.alpha_mu * big_n / (h.alpha_mu + big_n);
        let mut r_mat = &h.t_mat + scatter + (&diff * diff.transpose()) * shrink;
        // exact symmetry keeps Cholesky of every principal block well defined
        r_mat = (&r_mat + r_mat.transpose()) * 0.5;
        Ok(Self {
            r_mat,
            alpha_w_post: h.alpha_w + big_n,
            alpha_mu_post: h.alpha_mu + big_n,
            nu_post: (&h.nu * h.alpha_mu + &mean * big_n) / (h.alpha_mu + big_n),
            n_samples,
        })
    }
}

/// `R = T + S_N + (alpha_mu N / (alpha_mu + N)) (nu - xbar)(nu - xbar)^T` and friends.
pub fn posterior_stats(d: &DataMatrix, h: &BgeHyper) -> Result<PosteriorStats> {
    PosteriorStats::from_values(d.values(), h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn scatter(values: &DMatrix<f64>) -> DMatrix<f64> {
        let (rows, n) = values.shape();
        let mut s = DMatrix::zeros(n, n);
        let mean: Vec<f64> = (0..n).map(|j| values.column(j).mean()).collect();
        for r in 0..rows {
            for a in 0..n {
                for b in 0..n {
                    s[(a, b)] += (values[(r, a)] - mean[a]) * (values[(r, b)] - mean[b]);
                }
            }
        }
        s
    }

    #[test]
    fn load_with_header() {
        let f = write_tmp("a,b\n1,2\n3,4\n5,6.5\n");
        let d = load_csv(f.path(), true).unwrap();
        assert_eq!(d.n_samples(), 3);
        assert_eq!(d.n_vars(), 2);
        assert_eq!(d.columns(), ["a", "b"]);
        assert_eq!(d.values()[(2, 1)], 6.5);
    }

    #[test]
    fn load_without_header_names_columns() {
        let f = write_tmp("1,2,3\n4,5,6\n");
        let d = load_csv(f.path(), false).unwrap();
        assert_eq!(d.columns(), ["x1", "x2", "x3"]);
    }

    #[test]
    fn load_errors() {
        let f = write_tmp("1,2\n3,4,5\n");
        assert!(matches!(
            load_csv(f.path(), false),
            Err(Error::RaggedRows { row: 2, expected: 2, found: 3 })
        ));
        let f = write_tmp("1,2\n3,NaN\n");
        assert!(matches!(
            load_csv(f.path(), false),
            Err(Error::NonNumericCell { row: 2, col: 2, .. })
        ));
        let f = write_tmp("1,2\nfoo,3\n");
        assert!(matches!(load_csv(f.path(), false), Err(Error::NonNumericCell { .. })));
        assert!(matches!(
            load_csv(Path::new("/definitely/not/here.csv"), true),
            Err(Error::MissingFile(_))
        ));
        let f = write_tmp("a,a\n1,2\n");
        assert!(matches!(load_csv(f.path(), true), Err(Error::InvalidData(_))));
    }

    #[test]
    fn standardize_cases() {
        let d = DataMatrix::from_values(DMatrix::from_row_slice(3, 2, &[1., 10., 2., 20., 3., 60.]))
            .unwrap();
        let s = standardize(&d).unwrap();
        let col: Vec<f64> = s.values().column(0).iter().copied().collect();
        for (a, b) in col.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let again = standardize(&s).unwrap();
        assert!((again.values() - s.values()).amax() < 1e-12);

        let c = DataMatrix::from_values(DMatrix::from_row_slice(3, 2, &[5., 1., 5., 2., 5., 3.]))
            .unwrap();
        assert!(matches!(standardize(&c), Err(Error::ConstantColumn(0))));
    }

    #[test]
    fn posterior_stats_single_variable_by_hand() {
        let h = BgeHyper {
            alpha_mu: 1.0,
            alpha_w: 3.0,
            nu: DVector::from_element(1, 0.0),
            t_mat: DMatrix::from_element(1, 1, 0.5),
        };
        let st = PosteriorStats::from_values(&DMatrix::from_element(1, 1, 0.0), &h).unwrap();
        assert_eq!(st.r_mat[(0, 0)], 0.5);
        assert_eq!(st.alpha_w_post, 4.0);
        assert_eq!(st.alpha_mu_post, 2.0);
        assert_eq!(st.nu_post[0], 0.0);
    }

    #[test]
    fn posterior_stats_nu_at_mean_drops_rank_one_term() {
        let v = DMatrix::from_row_slice(4, 3, &[1., 2., 0., 3., 1., 1., 0., 0., 2., 2., 5., 1.]);
        let d = DataMatrix::from_values(v.clone()).unwrap();
        let mut h = BgeHyper::default_for(3);
        h.nu = DVector::from_fn(3, |j, _| v.column(j).mean());
        let st = posterior_stats(&d, &h).unwrap();
        let expect = &h.t_mat + scatter(&v);
        assert!((&st.r_mat - expect).amax() < 1e-12);
        assert_eq!(st.alpha_w_post - h.alpha_w, 4.0);
    }

    #[test]
    fn posterior_r_is_spd_and_rank_one_correction() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        for _ in 0..20 {
            let v = DMatrix::from_fn(7, 4, |_, _| next());
            let d = DataMatrix::from_values(v.clone()).unwrap();
            let mut h = BgeHyper::default_for(4);
            h.nu = DVector::from_fn(4, |_, _| next());
            let st = posterior_stats(&d, &h).unwrap();
            let eig = SymmetricEigen::new(st.r_mat.clone());
            assert!(eig.eigenvalues.iter().all(|&e| e > 0.0));
            let rest = &st.r_mat - &h.t_mat - scatter(&v);
            let sv = rest.singular_values();
            assert!(sv.iter().filter(|&&s| s > 1e-9 * sv.max().max(1.0)).count() <= 1);
        }
    }

    #[test]
    fn posterior_stats_permutation_covariant() {
        let v = DMatrix::from_row_slice(5, 3, &[
            0.3, 1.2, -0.4, 1.1, 0.2, 0.9, -0.7, 0.5, 0.1, 0.4, -1.3, 2.2, 1.9, 0.0, -0.6,
        ]);
        let perm = [2usize, 0, 1];
        let vp = DMatrix::from_fn(5, 3, |r, c| v[(r, perm[c])]);
        let mut h = BgeHyper::default_for(3);
        h.nu = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        h.t_mat[(0, 0)] = 0.7;
        let mut hp = h.clone();
        hp.nu = DVector::from_fn(3, |c, _| h.nu[perm[c]]);
        hp.t_mat = DMatrix::from_fn(3, 3, |a, b| h.t_mat[(perm[a], perm[b])]);
        let st = PosteriorStats::from_values(&v, &h).unwrap();
        let stp = PosteriorStats::from_values(&vp, &hp).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((stp.r_mat[(a, b)] - st.r_mat[(perm[a], perm[b])]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hyper_validation() {
        let mut h = BgeHyper::default_for(3);
        assert!(h.validate().is_ok());
        h.alpha_w = 2.0;
        assert!(h.validate().is_err());
        let mut h = BgeHyper::default_for(2);
        h.t_mat[(0, 1)] = 1.0;
        h.t_mat[(1, 0)] = 1.0;
        assert!(h.validate().is_err());
    }
}
