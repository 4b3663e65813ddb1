//! Principal expectile components.
//!
//! A principal expectile component (PEC) at level `tau` is the unit direction
//! whose projections have the largest `tau`-variance. It is the top
//! eigenvector of an asymmetrically weighted covariance matrix whose weights
//! are themselves induced by the direction, so it is found by a fixed-point
//! iteration over weight partitions:
//!
//! 1. build the weighted center and covariance from the current partition;
//! 2. take the top eigenvector, oriented so that its `tau`-variance is larger;
//! 3. re-partition the data by comparing each score to the `tau`-expectile of
//!    the scores, and stop once the partition repeats.
//!
//! The iteration is started from the classical principal component and from a
//! number of seeded random directions; the best fixed point wins.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::asymnorm::{asym_loss, expectile_of, ExpectileLevel, ExpectileResult, DEFAULT_EXPECTILE_MAX_ITER};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2, Matrix, SymmetricEigen};

/// Identifies one column of a [`ProfileMatrix`]: a detector-day.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProfileId {
    pub day: NaiveDate,
    pub location: String,
}

impl ProfileId {
    pub fn new(day: NaiveDate, location: impl Into<String>) -> Self {
        Self { day, location: location.into() }
    }
}

/// `p x n` matrix whose columns are profiles, stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMatrix {
    p: usize,
    n: usize,
    data: Vec<f64>,
    row_grid: Vec<f64>,
    column_ids: Vec<ProfileId>,
}

impl ProfileMatrix {
    /// `data` is column-major: column `i` occupies `data[i * p..(i + 1) * p]`.
    pub fn new(p: usize, n: usize, data: Vec<f64>, row_grid: Vec<f64>, column_ids: Vec<ProfileId>) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(invalid(format!("profile matrix must be non-empty, got {p}x{n}")));
        }
        if data.len() != p * n {
            return Err(invalid(format!("expected {} entries for {p}x{n}, got {}", p * n, data.len())));
        }
        if row_grid.len() != p {
            return Err(invalid(format!("row grid has {} labels for {p} rows", row_grid.len())));
        }
        if column_ids.len() != n {
            return Err(invalid(format!("{} column ids for {n} columns", column_ids.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("entry ({}, {}) is not finite", i % p, i / p)));
        }
        if row_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("row grid must be strictly increasing"));
        }
        Ok(Self { p, n, data, row_grid, column_ids })
    }

    /// Builds a matrix from columns with an index row grid and placeholder ids
    /// (`1970-01-01 + i` days at location `col{i}`).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let p = columns.first().map_or(0, Vec::len);
        if let Some(i) = columns.iter().position(|c| c.len() != p) {
            return Err(invalid(format!("column {i} has length {} but column 0 has {p}", columns[i].len())));
        }
        let data = columns.iter().flatten().copied().collect();
        let epoch = NaiveDate::default();
        let ids = (0..n)
            .map(|i| ProfileId::new(epoch + chrono::Days::new(i as u64), format!("col{i}")))
            .collect();
        Self::new(p, n, data, (0..p).map(|t| t as f64).collect(), ids)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.p + row]
    }

    pub fn row_grid(&self) -> &[f64] {
        &self.row_grid
    }

    pub fn column_ids(&self) -> &[ProfileId] {
        &self.column_ids
    }

    pub fn as_column_major(&self) -> &[f64] {
        &self.data
    }

    /// Same grid and ids, new entries.
    fn with_data(&self, data: Vec<f64>) -> Self {
        Self { p: self.p, n: self.n, data, row_grid: self.row_grid.clone(), column_ids: self.column_ids.clone() }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.with_data(self.data.iter().map(|v| a * v).collect())
    }

    fn all_columns_identical(&self) -> bool {
        let first = self.column(0);
        self.columns().all(|c| c == first)
    }
}

/// Split of column indices into the `tau`-weighted set (`plus`, strictly above
/// the expectile) and the `1 - tau`-weighted set (`minus`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightPartition {
    pub plus_set: Vec<usize>,
    pub minus_set: Vec<usize>,
    pub n_plus: usize,
    pub n_minus: usize,
}

impl WeightPartition {
    pub fn from_above(above: &[bool]) -> Self {
        let plus_set: Vec<usize> = (0..above.len()).filter(|&i| above[i]).collect();
        let minus_set: Vec<usize> = (0..above.len()).filter(|&i| !above[i]).collect();
        Self { n_plus: plus_set.len(), n_minus: minus_set.len(), plus_set, minus_set }
    }

    /// Strict rule: `plus` iff `score > expectile`.
    pub fn from_scores(scores: &[f64], expectile: f64) -> Self {
        let above: Vec<bool> = scores.iter().map(|&s| s > expectile).collect();
        Self::from_above(&above)
    }

    pub fn len(&self) -> usize {
        self.n_plus + self.n_minus
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_plus(&self, i: usize) -> bool {
        self.plus_set.binary_search(&i).is_ok()
    }

    /// Membership mask; errors unless the sets partition `0..n`.
    pub fn to_above(&self, n: usize) -> Result<Vec<bool>> {
        if self.n_plus != self.plus_set.len() || self.n_minus != self.minus_set.len() || self.len() != n {
            return Err(invalid(format!("partition sizes {}+{} do not cover {n} columns", self.n_plus, self.n_minus)));
        }
        let mut above = vec![false; n];
        let mut seen = vec![false; n];
        for (set, flag) in [(&self.plus_set, true), (&self.minus_set, false)] {
            for &i in set.iter() {
                if i >= n || seen[i] {
                    return Err(invalid(format!("partition index {i} is out of range or repeated")));
                }
                seen[i] = true;
                above[i] = flag;
            }
        }
        Ok(above)
    }
}

/// How residuals are formed before fitting the next component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Deflation {
    /// `r_i = q_i - phi (phi' q_i + e_tau)`: removes the projection and
    /// shifts the residual to `-e_tau` along `phi`.
    #[default]
    #[serde(rename = "paper")]
    ExpectileShift,
    /// `r_i = q_i - phi phi' q_i`.
    ProjectionOnly,
}

impl core::str::FromStr for Deflation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::ExpectileShift),
            "projection-only" => Ok(Self::ProjectionOnly),
            other => Err(invalid(format!("unknown deflation mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Random restarts in addition to the classical-PCA start.
    pub restarts: usize,
    pub seed: u64,
    /// Iteration cap per run of the fixed-point iteration.
    pub max_iter: usize,
    pub expectile_max_iter: usize,
    pub deflation: Deflation,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            max_iter: 200,
            expectile_max_iter: DEFAULT_EXPECTILE_MAX_ITER,
            deflation: Deflation::ExpectileShift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PecComponent {
    pub order: usize,
    pub level: ExpectileLevel,
    /// Unit loading vector.
    pub direction: Vec<f64>,
    /// Raw inner products of `direction` with the columns the component was fitted on.
    pub scores: Vec<f64>,
    /// `tau`-expectile of `scores`.
    pub expectile: f64,
    /// Weighted centering vector for the final partition.
    pub center: Vec<f64>,
    pub partition: WeightPartition,
    /// Attained sample `tau`-variance of the scores.
    pub objective: f64,
    /// Top eigenvalue of the weighted covariance at the last step.
    pub eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
    pub runs: usize,
    pub runs_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PecModel {
    pub level: ExpectileLevel,
    pub p: usize,
    pub n: usize,
    pub options: FitOptions,
    pub row_grid: Vec<f64>,
    pub column_ids: Vec<ProfileId>,
    pub components: Vec<PecComponent>,
}

impl PecModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, k: usize) -> Option<&PecComponent> {
        k.checked_sub(1).and_then(|i| self.components.get(i))
    }
}

/// `(tau * sum_plus q_i + (1 - tau) * sum_minus q_i) / (tau * n_plus + (1 - tau) * n_minus)`.
pub fn weighted_center(q: &ProfileMatrix, part: &WeightPartition, level: ExpectileLevel) -> Result<Vec<f64>> {
    let above = part.to_above(q.n())?;
    Ok(center_of(q, &above, level))
}

fn center_of(q: &ProfileMatrix, above: &[bool], level: ExpectileLevel) -> Vec<f64> {
    let mut acc = vec![0.0; q.p()];
    let mut total = 0.0;
    for (col, &a) in q.columns().zip(above) {
        let w = level.weight(a);
        total += w;
        for (s, v) in acc.iter_mut().zip(col) {
            *s += w * v;
        }
    }
    acc.iter_mut().for_each(|s| *s /= total);
    acc
}

/// `(tau / n) sum_plus (q_i - c)(q_i - c)' + ((1 - tau) / n) sum_minus (q_i - c)(q_i - c)'`.
pub fn weighted_cov(q: &ProfileMatrix, part: &WeightPartition, level: ExpectileLevel, center: &[f64]) -> Result<Matrix> {
    if center.len() != q.p() {
        return Err(invalid(format!("center has length {} but matrix has {} rows", center.len(), q.p())));
    }
    let above = part.to_above(q.n())?;
    Ok(cov_of(q, &above, level, center))
}

fn cov_of(q: &ProfileMatrix, above: &[bool], level: ExpectileLevel, center: &[f64]) -> Matrix {
    let p = q.p();
    let n = q.n() as f64;
    let mut c = Matrix::zeros(p, p);
    let mut d = vec![0.0; p];
    for (col, &a) in q.columns().zip(above) {
        let w = level.weight(a) / n;
        for ((di, v), m) in d.iter_mut().zip(col).zip(center) {
            *di = v - m;
        }
        for r in 0..p {
            let wr = w * d[r];
            if wr == 0.0 {
                continue;
            }
            for s in 0..=r {
                c[(r, s)] += wr * d[s];
            }
        }
    }
    for r in 0..p {
        for s in 0..r {
            c[(s, r)] = c[(r, s)];
        }
    }
    c
}

/// Flips `v` so its first coordinate with `|v_i| > 1e-12` is positive.
fn canonical_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Unit eigenvector of the largest eigenvalue of a symmetric matrix.
///
/// When the top eigenvalue is (numerically) repeated, the returned vector is the
/// normalised projection of the first standard basis vector that has a
/// substantial component in the top eigenspace. The sign makes the first
/// nonzero coordinate positive.
pub fn largest_eigenvector(c: &Matrix) -> Result<(Vec<f64>, f64)> {
    if !c.is_square() || c.rows() == 0 {
        return Err(invalid(format!("expected a non-empty square matrix, got {}x{}", c.rows(), c.cols())));
    }
    if c.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    let scale = c.frobenius_norm();
    if c.asymmetry() > 1e-10 * scale.max(1.0) {
        return Err(invalid("matrix is not symmetric"));
    }
    let p = c.rows();
    let eig = SymmetricEigen::new(c)?;
    let lambda = eig.values[p - 1];

    let cluster_tol = 1e-11 * scale;
    let top: Vec<usize> = (0..p).filter(|&j| eig.values[j] >= lambda - cluster_tol).collect();
    let mut v = if top.len() == 1 {
        eig.vectors.column(p - 1)
    } else {
        let threshold = 1.0 / p as f64;
        let mut chosen = None;
        for j in 0..p {
            // Projection of e_j onto span{v_c : c in top}.
            let mut u = vec![0.0; p];
            for &c_idx in &top {
                let coef = eig.vectors[(j, c_idx)];
                for (r, ur) in u.iter_mut().enumerate() {
                    *ur += coef * eig.vectors[(r, c_idx)];
                }
            }
            if dot(&u, &u) >= threshold {
                chosen = Some(u);
                break;
            }
        }
        chosen.ok_or_else(|| Error::EigenNotConverged("top eigenspace projection vanished".into()))?
    };
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    canonical_sign(&mut v);

    let cv = c.mul_vec(&v);
    let residual = libm::sqrt(cv.iter().zip(&v).map(|(a, b)| (a - lambda * b) * (a - lambda * b)).sum());
    if residual > 1e-10 * scale + f64::MIN_POSITIVE {
        return Err(Error::EigenNotConverged(format!("residual {residual:e} exceeds tolerance for norm {scale:e}")));
    }
    Ok((v, lambda))
}

/// Scores, expectile and `tau`-variance of the projections on one direction.
#[derive(Debug, Clone)]
struct Evaluation {
    direction: Vec<f64>,
    scores: Vec<f64>,
    expectile: ExpectileResult,
    objective: f64,
}

fn evaluate(q: &ProfileMatrix, level: ExpectileLevel, direction: Vec<f64>, max_iter: usize) -> Result<Evaluation> {
    let scores: Vec<f64> = q.columns().map(|c| dot(&direction, c)).collect();
    let expectile = expectile_of(&scores, level, max_iter)?;
    let objective = asym_loss(&scores, level, expectile.value);
    Ok(Evaluation { direction, scores, expectile, objective })
}

/// Picks the sign of `direction` with the larger `tau`-variance. On a tie the
/// incoming sign is kept, which callers pass in canonical form.
fn orient(q: &ProfileMatrix, level: ExpectileLevel, direction: Vec<f64>, max_iter: usize) -> Result<Evaluation> {
    let flipped: Vec<f64> = direction.iter().map(|v| -v).collect();
    let pos = evaluate(q, level, direction, max_iter)?;
    let neg = evaluate(q, level, flipped, max_iter)?;
    let tie = 1e-12 * pos.objective.abs().max(neg.objective.abs());
    Ok(if neg.objective > pos.objective + tie { neg } else { pos })
}

struct RunResult {
    eval: Evaluation,
    eigenvalue: f64,
    iterations: usize,
    converged: bool,
}

fn run_fixed_point(q: &ProfileMatrix, level: ExpectileLevel, start: Evaluation, opts: &FitOptions) -> Result<RunResult> {
    let mut above = start.expectile.above.clone();
    let mut seen: BTreeSet<Vec<bool>> = BTreeSet::new();
    let mut best: Option<(Evaluation, f64, usize)> = None;

    for it in 1..=opts.max_iter {
        let center = center_of(q, &above, level);
        let cov = cov_of(q, &above, level, &center);
        let (phi, lambda) = largest_eigenvector(&cov)?;
        let eval = orient(q, level, phi, opts.expectile_max_iter)?;

        if eval.expectile.above == above {
            return Ok(RunResult { eval, eigenvalue: lambda, iterations: it, converged: true });
        }
        let cycled = seen.contains(&eval.expectile.above);
        seen.insert(core::mem::replace(&mut above, eval.expectile.above.clone()));
        if best.as_ref().is_none_or(|(b, _, _)| eval.objective > b.objective) {
            best = Some((eval, lambda, it));
        }
        if cycled {
            break;
        }
    }
    let (eval, eigenvalue, _) = best.expect("at least one iteration ran");
    Ok(RunResult { eval, eigenvalue, iterations: opts.max_iter.min(seen.len()), converged: false })
}

fn random_unit(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let nv = norm2(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

fn classical_direction(q: &ProfileMatrix) -> Result<Vec<f64>> {
    let above = vec![false; q.n()];
    let center = center_of(q, &above, ExpectileLevel::HALF);
    let cov = cov_of(q, &above, ExpectileLevel::HALF, &center);
    Ok(largest_eigenvector(&cov)?.0)
}

/// First principal expectile component of the columns of `q`.
pub fn pec_first(q: &ProfileMatrix, level: ExpectileLevel, opts: &FitOptions) -> Result<PecComponent> {
    if q.n() < 2 {
        return Err(invalid(format!("need at least 2 profiles, got {}", q.n())));
    }
    if q.all_columns_identical() {
        return Err(Error::DegenerateData("all profiles are identical".into()));
    }

    let mut starts = Vec::with_capacity(opts.restarts + 1);
    starts.push(classical_direction(q)?);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let mut v = random_unit(&mut rng, q.p());
        canonical_sign(&mut v);
        starts.push(v);
    }

    let runs = starts.len();
    let mut best_fixed: Option<RunResult> = None;
    let mut best_any: Option<RunResult> = None;
    let mut runs_converged = 0;
    for start in starts {
        let start = orient(q, level, start, opts.expectile_max_iter)?;
        let run = run_fixed_point(q, level, start, opts)?;
        let slot = if run.converged {
            runs_converged += 1;
            &mut best_fixed
        } else {
            &mut best_any
        };
        if slot.as_ref().is_none_or(|b| run.eval.objective > b.eval.objective) {
            *slot = Some(run);
        }
    }

    let build = |r: RunResult| {
        let partition = WeightPartition::from_above(&r.eval.expectile.above);
        let center = center_of(q, &r.eval.expectile.above, level);
        PecComponent {
            order: 1,
            level,
            direction: r.eval.direction,
            scores: r.eval.scores,
            expectile: r.eval.expectile.value,
            center,
            partition,
            objective: r.eval.objective,
            eigenvalue: r.eigenvalue,
            iterations: r.iterations,
            converged: r.converged,
            runs,
            runs_converged,
        }
    };
    match best_fixed {
        Some(r) => Ok(build(r)),
        None => Err(Error::PecNotConverged {
            runs,
            best: Box::new(build(best_any.expect("at least one run"))),
        }),
    }
}

/// Residuals after removing a fitted component.
pub fn deflate(q: &ProfileMatrix, comp: &PecComponent, mode: Deflation) -> Result<ProfileMatrix> {
    if comp.direction.len() != q.p() {
        return Err(invalid(format!("direction has length {} but matrix has {} rows", comp.direction.len(), q.p())));
    }
    let mut data = Vec::with_capacity(q.p() * q.n());
    for col in q.columns() {
        deflate_column(col, comp, mode, &mut data);
    }
    Ok(q.with_data(data))
}

fn deflate_column(col: &[f64], comp: &PecComponent, mode: Deflation, out: &mut Vec<f64>) {
    let shift = match mode {
        Deflation::ExpectileShift => comp.expectile,
        Deflation::ProjectionOnly => 0.0,
    };
    let coef = dot(&comp.direction, col) + shift;
    out.extend(col.iter().zip(&comp.direction).map(|(v, phi)| v - phi * coef));
}

/// Fits `k` components, each on the residuals of the previous one.
/// Component `j` uses seed `opts.seed + j - 1`.
pub fn fit(q: &ProfileMatrix, level: ExpectileLevel, k: usize, opts: &FitOptions) -> Result<PecModel> {
    if k == 0 || k > q.p() {
        return Err(invalid(format!("number of components must be in 1..={}, got {k}", q.p())));
    }
    let mut components = Vec::with_capacity(k);
    let mut current = q.clone();
    for order in 1..=k {
        let comp_opts = FitOptions { seed: opts.seed.wrapping_add(order as u64 - 1), ..*opts };
        let mut comp = pec_first(&current, level, &comp_opts).map_err(|e| match e {
            Error::PecNotConverged { runs, mut best } => {
                best.order = order;
                Error::PecNotConverged { runs, best }
            }
            other => other,
        })?;
        comp.order = order;
        if order < k {
            current = deflate(&current, &comp, opts.deflation)?;
        }
        components.push(comp);
    }
    Ok(PecModel {
        level,
        p: q.p(),
        n: q.n(),
        options: *opts,
        row_grid: q.row_grid().to_vec(),
        column_ids: q.column_ids().to_vec(),
        components,
    })
}

/// Scores of new columns: row `k` holds component `k`'s loading applied to the
/// column after replaying the first `k - 1` deflations. Shape `K x m`.
pub fn project(model: &PecModel, q_new: &ProfileMatrix) -> Result<Matrix> {
    if q_new.p() != model.p {
        return Err(invalid(format!("model has {} rows but new data has {}", model.p, q_new.p())));
    }
    let k = model.k();
    let mut out = Matrix::zeros(k, q_new.n());
    let mut buf = Vec::with_capacity(q_new.p());
    for (j, col) in q_new.columns().enumerate() {
        let mut y = col.to_vec();
        for (r, comp) in model.components.iter().enumerate() {
            out[(r, j)] = dot(&comp.direction, &y);
            if r + 1 < k {
                buf.clear();
                deflate_column(&y, comp, model.options.deflation, &mut buf);
                core::mem::swap(&mut y, &mut buf);
            }
        }
    }
    Ok(out)
}
