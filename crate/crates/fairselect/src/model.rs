//! Data-generating processes, historical datasets, and candidate pools.
//!
//! Two process families are supported: a synthetic Gaussian family, where
//! `Z ~ Bernoulli(rho)`, `X | Z=z ~ N(mu_z, C_z)` with `C_z = tau_z A_z A_z'`,
//! and responses follow `y = beta' x + eps`; and an empirical bootstrap
//! family, where entire rows `(x, z, y)` are drawn uniformly with replacement
//! from a finite population table, so the joint empirical law is preserved.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::Error;
use crate::rng::{Purpose, RngStream};
use crate::Result;

/// Diagonal jitter added to a covariance factorization that fails because the
/// matrix is only semidefinite (e.g. `A_z A_z'` with more columns than rank).
const CHOLESKY_JITTER: f64 = 1e-10;

/// A finite population treated as the data-generating law itself.
#[derive(Debug, Clone)]
pub struct PopulationTable {
    pub features: DMatrix<f64>,
    pub z: Vec<u8>,
    pub y: Vec<f64>,
}

impl PopulationTable {
    /// Validate dimensions and subgroup coverage.
    pub fn new(features: DMatrix<f64>, z: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(Error::param("population", "needs at least 2 rows"));
        }
        if z.len() != n || y.len() != n {
            return Err(Error::param("population", "column lengths disagree"));
        }
        if z.iter().any(|&v| v > 1) {
            return Err(Error::param("population", "z must be 0 or 1"));
        }
        for zv in [0u8, 1u8] {
            if !z.contains(&zv) {
                return Err(Error::MissingSubgroup { z: zv });
            }
        }
        Ok(PopulationTable { features, z, y })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn subgroup_count(&self, z: u8) -> usize {
        self.z.iter().filter(|&&v| v == z).count()
    }

    /// Mean recorded response within subgroup `z`.
    pub fn subgroup_mean_y(&self, z: u8) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for (i, &zi) in self.z.iter().enumerate() {
            if zi == z {
                sum += self.y[i];
                count += 1;
            }
        }
        sum / count as f64
    }
}

#[derive(Debug, Clone)]
struct SyntheticGaussian {
    rho: f64,
    beta: DVector<f64>,
    noise_sd: f64,
    mean: [DVector<f64>; 2],
    cov: [DMatrix<f64>; 2],
    /// Lower Cholesky factors of `cov`, used for sampling.
    chol: [DMatrix<f64>; 2],
}

#[derive(Debug, Clone)]
struct EmpiricalBootstrap {
    population: PopulationTable,
}

#[derive(Debug, Clone)]
enum DgpKind {
    Synthetic(SyntheticGaussian),
    Empirical(EmpiricalBootstrap),
}

/// A sampler for `(X, Z)` pairs and responses `Y`.
///
/// Immutable after construction; sampling draws from a caller-owned
/// [`RngStream`], so a process value can be shared across threads.
#[derive(Debug, Clone)]
pub struct DataGeneratingProcess {
    kind: DgpKind,
}

impl DataGeneratingProcess {
    /// Construct the synthetic Gaussian family: `beta ~ N(0, I_p)` drawn once
    /// from the seed, factor matrices `A_z` with i.i.d. standard normal
    /// entries drawn once, `C_z = tau_z A_z A_z'`, and `X` means fixed at
    /// zero.  The process is deterministic given `seed`.
    pub fn synthetic(
        p: usize,
        rho: f64,
        tau0: f64,
        tau1: f64,
        noise_sd: f64,
        seed: u64,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::param("p", "dimension must be positive"));
        }
        if !(rho.is_finite() && rho > 0.0 && rho < 1.0) {
            return Err(Error::param("rho", format!("must lie in (0,1), got {rho}")));
        }
        for (name, v) in [("tau0", tau0), ("tau1", tau1)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(noise_sd.is_finite() && noise_sd >= 0.0) {
            return Err(Error::param(
                "noise_sd",
                format!("must be nonnegative, got {noise_sd}"),
            ));
        }

        let mut init = RngStream::derive(seed, 0, Purpose::ModelInit);
        let beta = DVector::from_fn(p, |_, _| init.standard_normal());
        let mut factor = |tau: f64| {
            let a = DMatrix::from_fn(p, p, |_, _| init.standard_normal());
            &a * a.transpose() * tau
        };
        let cov0 = factor(tau0);
        let cov1 = factor(tau1);
        let chol0 = cholesky_with_jitter(&cov0)?;
        let chol1 = cholesky_with_jitter(&cov1)?;

        Ok(DataGeneratingProcess {
            kind: DgpKind::Synthetic(SyntheticGaussian {
                rho,
                beta,
                noise_sd,
                mean: [DVector::zeros(p), DVector::zeros(p)],
                cov: [cov0, cov1],
                chol: [chol0, chol1],
            }),
        })
    }

    /// Replace the (default zero) conditional means of `X`.
    pub fn with_means(mut self, mean0: DVector<f64>, mean1: DVector<f64>) -> Result<Self> {
        match &mut self.kind {
            DgpKind::Synthetic(s) => {
                if mean0.len() != s.beta.len() || mean1.len() != s.beta.len() {
                    return Err(Error::param("means", "length must equal p"));
                }
                s.mean = [mean0, mean1];
                Ok(self)
            }
            DgpKind::Empirical(_) => Err(Error::param(
                "means",
                "empirical bootstrap has no configurable means",
            )),
        }
    }

    /// Construct the empirical bootstrap family over a finite population.
    pub fn empirical(population: PopulationTable) -> Result<Self> {
        // PopulationTable::new already guarantees both subgroups are present.
        Ok(DataGeneratingProcess {
            kind: DgpKind::Empirical(EmpiricalBootstrap { population }),
        })
    }

    /// Feature dimension `p`.
    pub fn dim(&self) -> usize {
        match &self.kind {
            DgpKind::Synthetic(s) => s.beta.len(),
            DgpKind::Empirical(e) => e.population.dim(),
        }
    }

    /// `P(Z = 1)` under this process.
    pub fn rho(&self) -> f64 {
        match &self.kind {
            DgpKind::Synthetic(s) => s.rho,
            DgpKind::Empirical(e) => {
                e.population.subgroup_count(1) as f64 / e.population.len() as f64
            }
        }
    }

    /// True coefficient vector, when the process has one.
    pub fn beta(&self) -> Option<&DVector<f64>> {
        match &self.kind {
            DgpKind::Synthetic(s) => Some(&s.beta),
            DgpKind::Empirical(_) => None,
        }
    }

    /// Conditional covariance of `X` given `Z = z` (synthetic only).
    pub fn covariance(&self, z: u8) -> Option<&DMatrix<f64>> {
        match &self.kind {
            DgpKind::Synthetic(s) => Some(&s.cov[z as usize]),
            DgpKind::Empirical(_) => None,
        }
    }

    /// Conditional mean of the score `beta' X` given `Z = z` (synthetic only).
    pub fn score_mean(&self, z: u8) -> Option<f64> {
        match &self.kind {
            DgpKind::Synthetic(s) => Some(s.beta.dot(&s.mean[z as usize])),
            DgpKind::Empirical(_) => None,
        }
    }

    /// Conditional standard deviation of the score `beta' X` given `Z = z`
    /// (synthetic only): `sqrt(beta' C_z beta)`.
    pub fn score_sd(&self, z: u8) -> Option<f64> {
        match &self.kind {
            DgpKind::Synthetic(s) => {
                let q = (&s.cov[z as usize] * &s.beta).dot(&s.beta);
                Some(q.max(0.0).sqrt())
            }
            DgpKind::Empirical(_) => None,
        }
    }

    pub fn population(&self) -> Option<&PopulationTable> {
        match &self.kind {
            DgpKind::Synthetic(_) => None,
            DgpKind::Empirical(e) => Some(&e.population),
        }
    }

    /// Draw one record.  Draw order per record is fixed (z, then feature
    /// noise, then response noise) so streams replay identically.
    fn draw(&self, stream: &mut RngStream) -> (DVector<f64>, u8, f64) {
        match &self.kind {
            DgpKind::Synthetic(s) => {
                let z = u8::from(stream.bernoulli(s.rho));
                let p = s.beta.len();
                let g = DVector::from_fn(p, |_, _| stream.standard_normal());
                let x = &s.mean[z as usize] + &s.chol[z as usize] * g;
                let noise = stream.standard_normal();
                let y = s.beta.dot(&x) + s.noise_sd * noise;
                (x, z, y)
            }
            DgpKind::Empirical(e) => {
                let idx = stream.index(e.population.len());
                let x = e.population.features.row(idx).transpose();
                (x, e.population.z[idx], e.population.y[idx])
            }
        }
    }
}

fn cholesky_with_jitter(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = Cholesky::new(cov.clone()) {
        return Ok(ch.l());
    }
    let p = cov.nrows();
    let jittered = cov + DMatrix::identity(p, p) * CHOLESKY_JITTER;
    Cholesky::new(jittered)
        .map(|ch| ch.l())
        .ok_or_else(|| Error::Numeric("covariance not positive semidefinite".into()))
}

/// The training triple of `n` labeled historical records.
#[derive(Debug, Clone)]
pub struct HistoryDataset {
    pub features: DMatrix<f64>,
    pub z: Vec<u8>,
    pub y: DVector<f64>,
    pub n0: usize,
    pub n1: usize,
}

impl HistoryDataset {
    pub fn new(features: DMatrix<f64>, z: Vec<u8>, y: DVector<f64>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::param("history", "needs at least one record"));
        }
        if z.len() != n || y.len() != n {
            return Err(Error::param("history", "column lengths disagree"));
        }
        let n1 = z.iter().filter(|&&v| v == 1).count();
        Ok(HistoryDataset {
            features,
            z,
            y,
            n0: n - n1,
            n1,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// The first `m` records, as their own dataset.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(Error::param("m", "prefix length out of range"));
        }
        HistoryDataset::new(
            self.features.rows(0, m).into_owned(),
            self.z[..m].to_vec(),
            DVector::from_iterator(m, self.y.iter().take(m).copied()),
        )
    }
}

/// The `K` unlabeled applicants a policy selects from.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub features: DMatrix<f64>,
    pub z: Vec<u8>,
}

impl CandidatePool {
    pub fn new(features: DMatrix<f64>, z: Vec<u8>) -> Result<Self> {
        let k = features.nrows();
        if k == 0 {
            return Err(Error::param("pool", "needs at least one candidate"));
        }
        if z.len() != k {
            return Err(Error::param("pool", "z length disagrees with features"));
        }
        Ok(CandidatePool { features, z })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of candidates in subgroup `z`.
    pub fn subgroup_count(&self, z: u8) -> usize {
        self.z.iter().filter(|&&v| v == z).count()
    }
}

/// Sample `n` i.i.d. labeled records from the process.
pub fn sample_history(
    dgp: &DataGeneratingProcess,
    n: usize,
    stream: &mut RngStream,
) -> Result<HistoryDataset> {
    if n == 0 {
        return Err(Error::param("n", "sample size must be positive"));
    }
    let p = dgp.dim();
    let mut features = DMatrix::zeros(n, p);
    let mut z = Vec::with_capacity(n);
    let mut y = DVector::zeros(n);
    for m in 0..n {
        let (x, zm, ym) = dgp.draw(stream);
        features.row_mut(m).tr_copy_from(&x);
        z.push(zm);
        y[m] = ym;
    }
    HistoryDataset::new(features, z, y)
}

/// Sample a pool of `K` unlabeled candidates.  The feature/attribute marginal
/// law is identical to [`sample_history`]'s.
pub fn sample_pool(
    dgp: &DataGeneratingProcess,
    k: usize,
    stream: &mut RngStream,
) -> Result<CandidatePool> {
    Ok(sample_scored_pool(dgp, k, stream)?.0)
}

/// Sample a pool together with each candidate's true payoff: the true score
/// `beta' x` for synthetic processes, the recorded response for bootstrapped
/// populations.  Consumes the stream exactly as [`sample_pool`] does.
pub fn sample_scored_pool(
    dgp: &DataGeneratingProcess,
    k: usize,
    stream: &mut RngStream,
) -> Result<(CandidatePool, Vec<f64>)> {
    if k == 0 {
        return Err(Error::param("K", "pool size must be positive"));
    }
    let p = dgp.dim();
    let mut features = DMatrix::zeros(k, p);
    let mut z = Vec::with_capacity(k);
    let mut payoff = Vec::with_capacity(k);
    for i in 0..k {
        let (x, zi, y) = dgp.draw(stream);
        let value = match &dgp.kind {
            // True expected performance, not the noisy response.
            DgpKind::Synthetic(s) => s.beta.dot(&x),
            // For bootstrapped rows the recorded response is the payoff.
            DgpKind::Empirical(_) => y,
        };
        features.row_mut(i).tr_copy_from(&x);
        z.push(zi);
        payoff.push(value);
    }
    Ok((CandidatePool::new(features, z)?, payoff))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_population() -> PopulationTable {
        PopulationTable::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            vec![0, 1],
            vec![10.0, 20.0],
        )
        .unwrap()
    }

    #[test]
    fn synthetic_is_deterministic_given_seed() {
        let a = DataGeneratingProcess::synthetic(2, 0.5, 1.0, 1.0, 1.0, 99).unwrap();
        let b = DataGeneratingProcess::synthetic(2, 0.5, 1.0, 1.0, 1.0, 99).unwrap();
        assert_eq!(a.beta().unwrap(), b.beta().unwrap());
        assert_eq!(a.covariance(0).unwrap(), b.covariance(0).unwrap());
        assert_eq!(a.covariance(1).unwrap(), b.covariance(1).unwrap());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DataGeneratingProcess::synthetic(0, 0.5, 1.0, 1.0, 1.0, 1).is_err());
        assert!(DataGeneratingProcess::synthetic(2, 0.0, 1.0, 1.0, 1.0, 1).is_err());
        assert!(DataGeneratingProcess::synthetic(2, 1.0, 1.0, 1.0, 1.0, 1).is_err());
        assert!(DataGeneratingProcess::synthetic(2, 0.5, -1.0, 1.0, 1.0, 1).is_err());
        assert!(DataGeneratingProcess::synthetic(2, 0.5, 1.0, 1.0, f64::NAN, 1).is_err());
    }

    #[test]
    fn population_requires_both_subgroups() {
        let r = PopulationTable::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            vec![0, 0],
            vec![1.0, 2.0],
        );
        assert!(matches!(r, Err(Error::MissingSubgroup { z: 1 })));
    }

    #[test]
    fn empirical_rows_come_from_population() {
        let dgp = DataGeneratingProcess::empirical(tiny_population()).unwrap();
        let mut stream = RngStream::derive(5, 0, Purpose::History);
        let h = sample_history(&dgp, 50, &mut stream).unwrap();
        for m in 0..h.len() {
            let row: Vec<f64> = h.features.row(m).iter().copied().collect();
            let is_row0 = row == [1.0, 2.0] && h.z[m] == 0 && h.y[m] == 10.0;
            let is_row1 = row == [3.0, 4.0] && h.z[m] == 1 && h.y[m] == 20.0;
            assert!(is_row0 || is_row1, "sampled record not in population");
        }
    }

    #[test]
    fn subgroup_counts_partition() {
        let dgp = DataGeneratingProcess::synthetic(3, 0.3, 1.0, 0.5, 1.0, 11).unwrap();
        let mut stream = RngStream::derive(11, 0, Purpose::History);
        let h = sample_history(&dgp, 200, &mut stream).unwrap();
        assert_eq!(h.n0 + h.n1, h.len());
        let mut pool_stream = RngStream::derive(11, 0, Purpose::Pool);
        let pool = sample_pool(&dgp, 17, &mut pool_stream).unwrap();
        assert_eq!(pool.subgroup_count(0) + pool.subgroup_count(1), pool.len());
    }

    #[test]
    fn bernoulli_fraction_close_to_rho() {
        // Binomial oracle: with n = 1e5 and rho = 0.15, the 6-sigma band is
        // +/- 6 * sqrt(0.15 * 0.85 / 1e5) ~ 0.0068, inside the 0.01 target.
        let dgp = DataGeneratingProcess::synthetic(1, 0.15, 1.0, 1.0, 1.0, 21).unwrap();
        let mut stream = RngStream::derive(21, 0, Purpose::History);
        let h = sample_history(&dgp, 100_000, &mut stream).unwrap();
        let frac = h.n1 as f64 / h.len() as f64;
        assert!((frac - 0.15).abs() < 0.01, "frac={frac}");
    }

    #[test]
    fn empirical_covariance_converges() {
        let p = 4;
        let dgp = DataGeneratingProcess::synthetic(p, 0.5, 1.0, 0.5, 0.0, 3).unwrap();
        let mut stream = RngStream::derive(3, 0, Purpose::History);
        let h = sample_history(&dgp, 100_000, &mut stream).unwrap();
        for z in [0u8, 1u8] {
            let rows: Vec<usize> = (0..h.len()).filter(|&m| h.z[m] == z).collect();
            let nz = rows.len() as f64;
            let mut mean = DVector::zeros(p);
            for &m in &rows {
                mean += h.features.row(m).transpose();
            }
            mean /= nz;
            let mut cov = DMatrix::zeros(p, p);
            for &m in &rows {
                let d = h.features.row(m).transpose() - &mean;
                cov += &d * d.transpose();
            }
            cov /= nz;
            let truth = dgp.covariance(z).unwrap();
            let err = (&cov - truth).norm() / truth.norm();
            assert!(err < 0.05, "z={z} frobenius rel err {err}");
        }
    }

    #[test]
    fn noiseless_scores_match_beta() {
        let dgp = DataGeneratingProcess::synthetic(3, 0.5, 1.0, 1.0, 0.0, 8).unwrap();
        let beta = dgp.beta().unwrap().clone();
        let mut stream = RngStream::derive(8, 0, Purpose::History);
        let h = sample_history(&dgp, 20, &mut stream).unwrap();
        for m in 0..h.len() {
            let pred = beta.dot(&h.features.row(m).transpose());
            assert!((h.y[m] - pred).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_and_scored_pool_agree() {
        let dgp = DataGeneratingProcess::synthetic(3, 0.4, 1.0, 0.5, 1.0, 14).unwrap();
        let mut s1 = RngStream::derive(14, 7, Purpose::Pool);
        let mut s2 = RngStream::derive(14, 7, Purpose::Pool);
        let plain = sample_pool(&dgp, 9, &mut s1).unwrap();
        let (scored, payoff) = sample_scored_pool(&dgp, 9, &mut s2).unwrap();
        assert_eq!(plain.features, scored.features);
        assert_eq!(plain.z, scored.z);
        let beta = dgp.beta().unwrap();
        for i in 0..9 {
            let expect = beta.dot(&scored.features.row(i).transpose());
            assert_eq!(payoff[i].to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn prefix_takes_first_rows() {
        let dgp = DataGeneratingProcess::synthetic(2, 0.5, 1.0, 1.0, 1.0, 2).unwrap();
        let mut stream = RngStream::derive(2, 0, Purpose::History);
        let h = sample_history(&dgp, 10, &mut stream).unwrap();
        let pre = h.prefix(4).unwrap();
        assert_eq!(pre.len(), 4);
        assert_eq!(pre.features, h.features.rows(0, 4).into_owned());
        assert_eq!(pre.z, h.z[..4]);
        assert!(h.prefix(0).is_err());
        assert!(h.prefix(11).is_err());
    }
}
