//! OLS fitting, per-subgroup empirical CDFs, and the selection quantile.
//!
//! A fitted selector holds the OLS coefficients together with the sorted
//! fitted scores of each historical subgroup.  Resampling `K_z` scores
//! uniformly with replacement from subgroup `z` and taking the maximum gives
//! a random variable `R~(z)`; the *selection quantile* is the `K0/K`-quantile
//! of the law of `R~(1) - R~(0)`.  It is the data-driven threshold against
//! which the empirical fair policy compares the best candidate of each
//! subgroup.
//!
//! The quantile has a closed combinatorial form: the cdf of `R~(z)` is
//! `F_z(r)^{K_z}` where `F_z` is the subgroup empirical cdf, and the
//! difference law jumps only at pairwise score gaps
//! `B[i][m] = s1_desc[i] - s0_asc[m]`.  Since `B` is nonincreasing in both
//! indices, the smallest gap at which the difference cdf reaches `K0/K` can
//! be found by walking the staircase frontier of the implicit matrix, with
//! one cdf evaluation per step and no materialized `n1 x n0` matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::model::HistoryDataset;
use crate::rng::RngStream;
use crate::Result;

/// Designs with `cond(X'X)` beyond this are rejected as singular.
const MAX_CONDITION: f64 = 1e12;

/// Ordinary least squares: the minimizer of `|Y - X b|_2`.
///
/// Solved through the SVD of `X`; the condition number reported on failure is
/// that of the normal-equations matrix `X'X`.
pub fn ols_fit(history: &HistoryDataset) -> Result<DVector<f64>> {
    let x = &history.features;
    let (n, p) = (x.nrows(), x.ncols());
    if n < p {
        return Err(Error::SingularDesign { cond: f64::INFINITY });
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::SingularDesign { cond });
    }
    svd.solve(&history.y, 0.0)
        .map_err(|e| Error::Numeric(e.to_string()))
}

/// An empirical cdf over a finite sample: `eval(r)` is the exact fraction of
/// stored values `<= r`.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("samples", "empirical cdf needs data"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("samples", "values must be finite"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalCdf { sorted })
    }

    /// Fraction of samples `<= r`.  Zero below the minimum, one at and above
    /// the maximum; jumps carry tie multiplicity.
    pub fn eval(&self, r: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v <= r);
        count as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }
}

/// OLS coefficients plus the per-subgroup sorted fitted-score tables that
/// power the empirical cdfs and the selection quantile.
#[derive(Debug, Clone)]
pub struct FittedSelector {
    pub beta_hat: DVector<f64>,
    /// Fitted scores of historical subgroup 1, descending.
    pub scores_z1_desc: Vec<f64>,
    /// Fitted scores of historical subgroup 0, ascending.
    pub scores_z0_asc: Vec<f64>,
    pub n0: usize,
    pub n1: usize,
    /// Subgroup-1 scores ascending; kept alongside the descending order so
    /// count queries and the frontier walk both read their natural layout.
    s1_asc: Vec<f64>,
}

impl FittedSelector {
    /// Fit OLS on the history and build the sorted score tables.
    ///
    /// Both historical subgroups must be nonempty: without one of the two
    /// empirical cdfs the fair policy is undefined.
    pub fn fit(history: &HistoryDataset) -> Result<Self> {
        let beta_hat = ols_fit(history)?;
        let scores = &history.features * &beta_hat;
        let mut s0 = Vec::with_capacity(history.n0);
        let mut s1 = Vec::with_capacity(history.n1);
        for m in 0..history.len() {
            if history.z[m] == 1 {
                s1.push(scores[m]);
            } else {
                s0.push(scores[m]);
            }
        }
        Self::from_scores(beta_hat, s0, s1)
    }

    /// Build a selector from raw subgroup scores (multiset semantics:
    /// duplicates are retained and the cdfs jump by multiplicity).
    pub fn from_scores(beta_hat: DVector<f64>, s0: Vec<f64>, s1: Vec<f64>) -> Result<Self> {
        if s0.is_empty() {
            return Err(Error::MissingSubgroup { z: 0 });
        }
        if s1.is_empty() {
            return Err(Error::MissingSubgroup { z: 1 });
        }
        if s0.iter().chain(s1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("scores", "fitted scores must be finite"));
        }
        let mut scores_z0_asc = s0;
        scores_z0_asc.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mut s1_asc = s1;
        s1_asc.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let scores_z1_desc: Vec<f64> = s1_asc.iter().rev().copied().collect();
        Ok(FittedSelector {
            beta_hat,
            n0: scores_z0_asc.len(),
            n1: s1_asc.len(),
            scores_z0_asc,
            scores_z1_desc,
            s1_asc,
        })
    }

    /// Empirical cdf of the subgroup-`z` fitted scores.
    pub fn cdf(&self, z: u8) -> EmpiricalCdf {
        let samples = if z == 1 {
            &self.s1_asc
        } else {
            &self.scores_z0_asc
        };
        EmpiricalCdf {
            sorted: samples.clone(),
        }
    }

    /// Fitted scores for every candidate in a feature matrix (rows are
    /// candidates).
    pub fn scores_for(&self, features: &DMatrix<f64>) -> Vec<f64> {
        (features * &self.beta_hat).iter().copied().collect()
    }

    fn count1_le(&self, v: f64) -> usize {
        self.s1_asc.partition_point(|&s| s <= v)
    }

    fn count0_le(&self, v: f64) -> usize {
        self.scores_z0_asc.partition_point(|&s| s <= v)
    }

    /// The centered plug-in cdf functional whose sign change locates the
    /// selection threshold:
    ///
    /// ```text
    /// (1/n0) * sum over group-0 scores s of  F1(s + t)^K1 * F0(s)^(K0-1)  -  1/K
    /// ```
    ///
    /// Nondecreasing in `t`, with values in `[-1/K, 1 - 1/K]`.
    pub fn threshold_functional(&self, k0: usize, k1: usize, t: f64) -> Result<f64> {
        let k = check_pool_split(k0, k1)?;
        let n0 = self.n0 as f64;
        let n1 = self.n1 as f64;
        let mut sum = 0.0;
        for &s in &self.scores_z0_asc {
            let f1 = self.count1_le(s + t) as f64 / n1;
            let f0 = self.count0_le(s) as f64 / n0;
            sum += f1.powi(k1 as i32) * f0.powi(k0 as i32 - 1);
        }
        Ok(sum / n0 - 1.0 / k as f64)
    }

    /// Exact selection quantile: the smallest pairwise score gap `t` with
    /// `P(R~(1) - R~(0) <= t) >= K0/K`, where `R~(z)` is the maximum of `K_z`
    /// uniform-with-replacement picks from the subgroup-`z` score table.
    ///
    /// Walks the staircase frontier of the implicit gap matrix; the
    /// difference-law cdf is evaluated at most `n0 + n1` times.
    pub fn exact_quantile(&self, k0: usize, k1: usize) -> Result<f64> {
        check_pool_split(k0, k1)?;
        let law = DiffLawEval::new(self, k0, k1);

        let s1d = &self.scores_z1_desc;
        let s0a = &self.scores_z0_asc;
        // Start at the bottom-left corner: the smallest gap against the
        // smallest group-0 score.  Predicate true -> candidate, move right
        // (smaller gaps); false -> move up (larger gaps).  Rows abandoned
        // below the cursor failed in an earlier column and only shrink.
        let mut i = self.n1 - 1;
        let mut m = 0usize;
        let mut best: Option<f64> = None;
        loop {
            let t = s1d[i] - s0a[m];
            if law.cdf_at_least(t) {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
                m += 1;
                if m == self.n0 {
                    break;
                }
            } else {
                if i == 0 {
                    break;
                }
                i -= 1;
            }
        }
        // The top-left entry is the largest gap, where the cdf is 1 >= alpha,
        // so the first column always yields a candidate.
        best.ok_or_else(|| Error::Numeric("quantile frontier walk found no candidate".into()))
    }

    /// Bootstrap estimate of the selection quantile: `reps` resampled draws
    /// of `R~(1) - R~(0)`, returning the smallest draw whose cumulative
    /// fraction reaches `K0/K`.
    pub fn bootstrap_quantile(
        &self,
        k0: usize,
        k1: usize,
        reps: usize,
        stream: &mut RngStream,
    ) -> Result<f64> {
        let k = check_pool_split(k0, k1)?;
        if reps == 0 {
            return Err(Error::param("reps", "bootstrap needs at least one draw"));
        }
        let mut diffs = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut r1 = f64::NEG_INFINITY;
            for _ in 0..k1 {
                r1 = r1.max(self.s1_asc[stream.index(self.n1)]);
            }
            let mut r0 = f64::NEG_INFINITY;
            for _ in 0..k0 {
                r0 = r0.max(self.scores_z0_asc[stream.index(self.n0)]);
            }
            diffs.push(r1 - r0);
        }
        diffs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        // Smallest index i with (i+1)/reps >= k0/k, in exact integer
        // arithmetic so boundary cases cannot round the wrong way.
        let pos = (k0 * reps).div_ceil(k);
        Ok(diffs[pos - 1])
    }
}

fn check_pool_split(k0: usize, k1: usize) -> Result<usize> {
    if k0 == 0 || k1 == 0 {
        return Err(Error::param("K0/K1", "both subgroup counts must be positive"));
    }
    Ok(k0 + k1)
}

/// Evaluator for the cdf comparison `P(R~(1) - R~(0) <= t) >= K0/K`.
///
/// Group-0 atom masses follow from consecutive powers of the empirical cdf,
/// `(c_j/n0)^K0 - (c_{j-1}/n0)^K0`; the group-1 factor is `(c/n1)^K1` with
/// `c` the number of group-1 scores at or below the shifted atom.
/// Evaluation is a single two-pointer sweep over both sorted tables.
///
/// The cumulative law frequently hits `K0/K` exactly (every quantity is a
/// ratio of small integers), so whenever `K * n0^K0 * n1^K1` fits in 127
/// bits the comparison is done in exact integer arithmetic; boundary atoms
/// then resolve identically no matter how a reference implementation orders
/// its floating-point sums.
enum DiffLawEval<'a> {
    Int(DiffLawInt<'a>),
    Float(DiffLawFloat<'a>),
}

struct DiffLawInt<'a> {
    atoms0: Vec<f64>,
    mass0: Vec<u128>,
    /// Remaining group-0 mass strictly after atom `j`.
    rest0: Vec<u128>,
    pow1: Vec<u128>,
    s1_asc: &'a [f64],
    k: u128,
    /// `K0 * n0^K0 * n1^K1`.
    target: u128,
}

struct DiffLawFloat<'a> {
    atoms0: Vec<f64>,
    mass0: Vec<f64>,
    /// Cumulative group-0 mass up to and including atom `j`.
    cum0: Vec<f64>,
    pow1: Vec<f64>,
    s1_asc: &'a [f64],
    alpha: f64,
}

/// Distinct values of a sorted slice with their cumulative counts.
fn distinct_cumulative(sorted: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut atoms = Vec::new();
    let mut cums = Vec::new();
    let mut idx = 0;
    while idx < sorted.len() {
        let v = sorted[idx];
        while idx < sorted.len() && sorted[idx] == v {
            idx += 1;
        }
        atoms.push(v);
        cums.push(idx);
    }
    (atoms, cums)
}

impl<'a> DiffLawEval<'a> {
    fn new(selector: &'a FittedSelector, k0: usize, k1: usize) -> Self {
        let (n0, n1) = (selector.n0, selector.n1);
        let k = k0 + k1;
        let (atoms0, cums0) = distinct_cumulative(&selector.scores_z0_asc);

        // Bit budget for K * n0^K0 * n1^K1.
        let bits = (k as f64).log2()
            + k0 as f64 * (n0 as f64).log2()
            + k1 as f64 * (n1 as f64).log2();
        if bits < 126.0 {
            let pow = |base: usize, exp: usize| (base as u128).pow(exp as u32);
            let total0 = pow(n0, k0);
            let mut mass0 = Vec::with_capacity(atoms0.len());
            let mut rest0 = Vec::with_capacity(atoms0.len());
            let mut prev = 0u128;
            for &c in &cums0 {
                let cur = pow(c, k0);
                mass0.push(cur - prev);
                rest0.push(total0 - cur);
                prev = cur;
            }
            let pow1: Vec<u128> = (0..=n1).map(|c| pow(c, k1)).collect();
            DiffLawEval::Int(DiffLawInt {
                atoms0,
                mass0,
                rest0,
                pow1,
                s1_asc: &selector.s1_asc,
                k: k as u128,
                target: k0 as u128 * total0 * pow(n1, k1),
            })
        } else {
            let mut mass0 = Vec::with_capacity(atoms0.len());
            let mut cum0 = Vec::with_capacity(atoms0.len());
            let mut prev = 0.0;
            for &c in &cums0 {
                let cur = (c as f64 / n0 as f64).powi(k0 as i32);
                mass0.push(cur - prev);
                cum0.push(cur);
                prev = cur;
            }
            let pow1: Vec<f64> = (0..=n1)
                .map(|c| (c as f64 / n1 as f64).powi(k1 as i32))
                .collect();
            DiffLawEval::Float(DiffLawFloat {
                atoms0,
                mass0,
                cum0,
                pow1,
                s1_asc: &selector.s1_asc,
                alpha: k0 as f64 / k as f64,
            })
        }
    }

    /// Whether `P(R~(1) - R~(0) <= t) >= K0/K`.
    fn cdf_at_least(&self, t: f64) -> bool {
        match self {
            DiffLawEval::Int(law) => {
                let mut scaled = 0u128;
                let mut c = 0usize;
                let n1 = law.s1_asc.len();
                for j in 0..law.atoms0.len() {
                    let cutoff = law.atoms0[j] + t;
                    while c < n1 && law.s1_asc[c] <= cutoff {
                        c += 1;
                    }
                    scaled += law.k * law.mass0[j] * law.pow1[c];
                    if scaled >= law.target {
                        return true;
                    }
                    // Later atoms contribute at most the remaining mass at
                    // the full group-1 factor.
                    if scaled + law.k * law.rest0[j] * law.pow1[n1] < law.target {
                        return false;
                    }
                }
                scaled >= law.target
            }
            DiffLawEval::Float(law) => {
                let mut sum = 0.0;
                let mut c = 0usize;
                let n1 = law.s1_asc.len();
                for j in 0..law.atoms0.len() {
                    let cutoff = law.atoms0[j] + t;
                    while c < n1 && law.s1_asc[c] <= cutoff {
                        c += 1;
                    }
                    sum += law.mass0[j] * law.pow1[c];
                    if sum >= law.alpha {
                        return true;
                    }
                    if sum + (1.0 - law.cum0[j]) < law.alpha {
                        return false;
                    }
                }
                sum >= law.alpha
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HistoryDataset;
    use crate::rng::Purpose;

    fn history(x: &[f64], rows: usize, cols: usize, z: &[u8], y: &[f64]) -> HistoryDataset {
        HistoryDataset::new(
            DMatrix::from_row_slice(rows, cols, x),
            z.to_vec(),
            DVector::from_row_slice(y),
        )
        .unwrap()
    }

    #[test]
    fn ols_single_cell() {
        let h = history(&[2.0], 1, 1, &[0], &[4.0]);
        let beta = ols_fit(&h).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_recovers_noiseless_coefficients() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, 0.5, 2.0, -1.0, 0.3, 2.2, -1.5, 0.7, 0.9, 0.9, 2.5, -0.4]);
        let beta = DVector::from_row_slice(&[1.5, -2.0]);
        let y = &x * &beta;
        let h = HistoryDataset::new(x, vec![0, 1, 0, 1, 0, 1], y).unwrap();
        let fitted = ols_fit(&h).unwrap();
        assert!((fitted - beta).amax() < 1e-10);
    }

    #[test]
    fn ols_matches_cramer_rule_oracle() {
        // Fixed 5x2 design solved independently through the normal equations
        // with an exhaustive 2x2 inversion.
        let xr = [1.0, 2.0, 0.5, -1.0, 2.0, 0.3, -0.7, 1.1, 1.4, -0.2];
        let yr = [3.1, -0.4, 2.2, 0.9, 1.7];
        let h = history(&xr, 5, 2, &[0, 0, 1, 1, 0], &yr);

        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..5 {
            let (x1, x2) = (xr[2 * i], xr[2 * i + 1]);
            a11 += x1 * x1;
            a12 += x1 * x2;
            a22 += x2 * x2;
            b1 += x1 * yr[i];
            b2 += x2 * yr[i];
        }
        let det = a11 * a22 - a12 * a12;
        let oracle = [(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det];

        let beta = ols_fit(&h).unwrap();
        assert!((beta[0] - oracle[0]).abs() < 1e-10);
        assert!((beta[1] - oracle[1]).abs() < 1e-10);
    }

    #[test]
    fn ols_normal_equation_residual_orthogonality() {
        let mut stream = RngStream::derive(77, 0, Purpose::Simulation);
        let x = DMatrix::from_fn(40, 3, |_, _| stream.standard_normal());
        let y = DVector::from_fn(40, |_, _| stream.standard_normal());
        let h = HistoryDataset::new(x.clone(), vec![0; 40], y.clone()).unwrap();
        let beta = ols_fit(&h).unwrap();
        let resid_proj = x.transpose() * (&y - &x * &beta);
        let scale = (x.transpose() * &y).amax().max(1.0);
        assert!(resid_proj.amax() < 1e-8 * scale);
    }

    #[test]
    fn ols_rejects_rank_deficient_design() {
        // Second column is an exact copy of the first.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        let h = HistoryDataset::new(x, vec![0, 1, 0, 1], DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!(matches!(ols_fit(&h), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn cdf_eval_counts_exactly() {
        let cdf = EmpiricalCdf::new(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(cdf.eval(2.0), 2.0 / 3.0);
        assert_eq!(cdf.eval(0.5), 0.0);
        assert_eq!(cdf.eval(3.0), 1.0);
        assert_eq!(cdf.eval(100.0), 1.0);
    }

    #[test]
    fn cdf_eval_matches_linear_scan() {
        let mut stream = RngStream::derive(4, 0, Purpose::Simulation);
        let samples: Vec<f64> = (0..1000).map(|_| stream.standard_normal()).collect();
        let cdf = EmpiricalCdf::new(&samples).unwrap();
        for _ in 0..200 {
            let r = stream.standard_normal() * 1.5;
            let count = samples.iter().filter(|&&v| v <= r).count();
            assert_eq!(cdf.eval(r), count as f64 / 1000.0);
        }
    }

    #[test]
    fn selector_requires_both_subgroups() {
        let h = history(&[1.0, 2.0], 2, 1, &[0, 0], &[1.0, 2.0]);
        assert!(matches!(
            FittedSelector::fit(&h),
            Err(Error::MissingSubgroup { z: 1 })
        ));
    }

    #[test]
    fn selector_orders_scores() {
        let beta = DVector::from_row_slice(&[1.0]);
        let sel = FittedSelector::from_scores(beta, vec![3.0, 1.0, 2.0], vec![5.0, 7.0]).unwrap();
        assert_eq!(sel.scores_z0_asc, vec![1.0, 2.0, 3.0]);
        assert_eq!(sel.scores_z1_desc, vec![7.0, 5.0]);
        assert_eq!((sel.n0, sel.n1), (3, 2));
    }

    #[test]
    fn selector_keeps_duplicate_scores() {
        let beta = DVector::from_row_slice(&[1.0]);
        let sel = FittedSelector::from_scores(beta, vec![2.0, 2.0], vec![4.0, 4.0, 4.0]).unwrap();
        assert_eq!(sel.scores_z0_asc, vec![2.0, 2.0]);
        assert_eq!(sel.scores_z1_desc, vec![4.0, 4.0, 4.0]);
    }

    #[test]
    fn threshold_functional_left_limit() {
        let beta = DVector::from_row_slice(&[1.0]);
        let sel = FittedSelector::from_scores(beta, vec![0.0, 1.0], vec![5.0, 6.0]).unwrap();
        // t far below any group gap: F1(s + t) = 0 everywhere.
        let v = sel.threshold_functional(2, 1, -100.0).unwrap();
        assert_eq!(v, -1.0 / 3.0);
    }

    #[test]
    fn threshold_functional_single_atoms() {
        let beta = DVector::from_row_slice(&[1.0]);
        let (s0, s1) = (0.4, 1.3);
        let sel = FittedSelector::from_scores(beta, vec![s0], vec![s1]).unwrap();
        for t in [-1.0, 0.0, 0.89, 0.9, 1.5] {
            let expect = if s1 <= s0 + t { 1.0 } else { 0.0 } - 0.5;
            assert_eq!(sel.threshold_functional(1, 1, t).unwrap(), expect);
        }
    }

    #[test]
    fn threshold_functional_matches_double_loop() {
        // Direct evaluation of the plug-in functional, written as the
        // literal double loop over history records.
        let mut stream = RngStream::derive(9, 0, Purpose::Simulation);
        let s0: Vec<f64> = (0..4).map(|_| stream.standard_normal()).collect();
        let s1: Vec<f64> = (0..3).map(|_| stream.standard_normal()).collect();
        let sel = FittedSelector::from_scores(DVector::from_row_slice(&[1.0]), s0.clone(), s1.clone())
            .unwrap();
        let (k0, k1) = (2usize, 1usize);
        for t in [-2.0, -0.5, 0.0, 0.3, 1.7] {
            let mut sum = 0.0;
            for &s in &s0 {
                let f1 = s1.iter().filter(|&&v| v <= s + t).count() as f64 / s1.len() as f64;
                let f0 = s0.iter().filter(|&&v| v <= s).count() as f64 / s0.len() as f64;
                sum += f1.powi(k1 as i32) * f0.powi(k0 as i32 - 1);
            }
            let oracle = sum / s0.len() as f64 - 1.0 / (k0 + k1) as f64;
            let got = sel.threshold_functional(k0, k1, t).unwrap();
            assert!((got - oracle).abs() < 1e-15, "t={t}: {got} vs {oracle}");
        }
    }

    #[test]
    fn exact_quantile_point_masses() {
        let beta = DVector::from_row_slice(&[1.0]);
        let sel =
            FittedSelector::from_scores(beta, vec![0.7, 0.7, 0.7], vec![2.2, 2.2]).unwrap();
        for (k0, k1) in [(1, 1), (2, 1), (1, 2), (3, 4)] {
            let q = sel.exact_quantile(k0, k1).unwrap();
            assert_eq!(q, 2.2 - 0.7, "k0={k0} k1={k1}");
        }
    }

    #[test]
    fn exact_quantile_single_scores() {
        let beta = DVector::from_row_slice(&[1.0]);
        let sel = FittedSelector::from_scores(beta, vec![-0.3], vec![1.1]).unwrap();
        assert_eq!(sel.exact_quantile(1, 1).unwrap(), 1.1 - (-0.3));
    }

    #[test]
    fn quantile_satisfies_threshold_functional() {
        // The returned quantile always sits in the nonnegative region of the
        // plug-in functional.
        let mut stream = RngStream::derive(31, 0, Purpose::Simulation);
        for case in 0..50 {
            let n0 = 1 + stream.index(12);
            let n1 = 1 + stream.index(12);
            let s0: Vec<f64> = (0..n0).map(|_| stream.standard_normal()).collect();
            let s1: Vec<f64> = (0..n1).map(|_| stream.standard_normal()).collect();
            let sel =
                FittedSelector::from_scores(DVector::from_row_slice(&[1.0]), s0, s1).unwrap();
            let k0 = 1 + stream.index(4);
            let k1 = 1 + stream.index(4);
            let q = sel.exact_quantile(k0, k1).unwrap();
            let t = sel.threshold_functional(k0, k1, q).unwrap();
            assert!(t >= 0.0, "case {case}: functional {t} negative at quantile");
        }
    }

    #[test]
    fn bootstrap_quantile_degenerate_cases() {
        let beta = DVector::from_row_slice(&[1.0]);
        let sel = FittedSelector::from_scores(beta.clone(), vec![1.0, 1.0], vec![4.0, 4.0]).unwrap();
        let mut stream = RngStream::derive(6, 0, Purpose::Bootstrap);
        assert_eq!(sel.bootstrap_quantile(2, 3, 50, &mut stream).unwrap(), 3.0);

        let sel = FittedSelector::from_scores(beta, vec![0.25], vec![0.75]).unwrap();
        let mut stream = RngStream::derive(6, 1, Purpose::Bootstrap);
        assert_eq!(sel.bootstrap_quantile(1, 1, 10, &mut stream).unwrap(), 0.5);
    }

    #[test]
    fn rejects_empty_pool_side() {
        let beta = DVector::from_row_slice(&[1.0]);
        let sel = FittedSelector::from_scores(beta, vec![1.0], vec![2.0]).unwrap();
        assert!(sel.exact_quantile(0, 1).is_err());
        assert!(sel.threshold_functional(1, 0, 0.0).is_err());
    }
}
