//! Data containers, input domains, seeded random streams, standardization
//! and the sample-splitting primitives used by the regularization
//! algorithms.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SreError};

/// Observed tuples `(x_i, y_i)`, optionally with instruments and a period
/// index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    outcome: DVector<f64>,
    instruments: Option<DMatrix<f64>>,
    time_index: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, outcome: DVector<f64>) -> Result<Self> {
        Self::with_parts(inputs, outcome, None, None)
    }

    pub fn with_parts(
        inputs: DMatrix<f64>,
        outcome: DVector<f64>,
        instruments: Option<DMatrix<f64>>,
        time_index: Option<Vec<i64>>,
    ) -> Result<Self> {
        let n = outcome.len();
        if n == 0 {
            return Err(SreError::EmptyDataset);
        }
        if inputs.nrows() != n {
            return Err(SreError::DimensionMismatch {
                what: "dataset inputs rows",
                expected: n,
                got: inputs.nrows(),
            });
        }
        if let Some(z) = &instruments {
            if z.nrows() != n {
                return Err(SreError::DimensionMismatch {
                    what: "dataset instrument rows",
                    expected: n,
                    got: z.nrows(),
                });
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(SreError::NonFinite("dataset instruments"));
            }
        }
        if let Some(t) = &time_index {
            if t.len() != n {
                return Err(SreError::DimensionMismatch {
                    what: "dataset time index",
                    expected: n,
                    got: t.len(),
                });
            }
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(SreError::NonFinite("dataset inputs"));
        }
        if !outcome.iter().all(|v| v.is_finite()) {
            return Err(SreError::NonFinite("dataset outcome"));
        }
        Ok(Self {
            inputs,
            outcome,
            instruments,
            time_index,
        })
    }

    /// One-regressor dataset.
    pub fn from_columns(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(SreError::DimensionMismatch {
                what: "regressor length",
                expected: y.len(),
                got: x.len(),
            });
        }
        Self::new(
            DMatrix::from_column_slice(x.len(), 1, x),
            DVector::from_column_slice(y),
        )
    }

    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outcome(&self) -> &DVector<f64> {
        &self.outcome
    }

    pub fn instruments(&self) -> Option<&DMatrix<f64>> {
        self.instruments.as_ref()
    }

    pub fn time_index(&self) -> Option<&[i64]> {
        self.time_index.as_deref()
    }

    pub fn input_row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    pub fn input_column(&self, j: usize) -> Vec<f64> {
        self.inputs.column(j).iter().copied().collect()
    }

    /// Rows at `idx`, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        if idx.is_empty() {
            return Err(SreError::EmptyDataset);
        }
        let inputs = self.inputs.select_rows(idx);
        let outcome = self.outcome.select_rows(idx);
        let instruments = self.instruments.as_ref().map(|z| z.select_rows(idx));
        let time_index = self
            .time_index
            .as_ref()
            .map(|t| idx.iter().map(|&i| t[i]).collect());
        Ok(Dataset {
            inputs,
            outcome,
            instruments,
            time_index,
        })
    }

    /// Row indices sorted by period (stable); identity order without a
    /// time index.
    pub fn time_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        if let Some(t) = &self.time_index {
            idx.sort_by_key(|&i| t[i]);
        }
        idx
    }
}

/// Closed box `∏ [lower_d, upper_d]` describing an input region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    bounds: Vec<(f64, f64)>,
}

impl DomainSpec {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(SreError::InvalidArgument("domain has no dimensions".into()));
        }
        for &(lo, hi) in &bounds {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(SreError::NonFinite("domain bounds"));
            }
            if lo > hi {
                return Err(SreError::InvalidArgument(format!(
                    "domain lower bound {lo} exceeds upper bound {hi}"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(&self.bounds)
                .all(|(&v, &(l, u))| v >= l && v <= u)
    }

    /// Euclidean distance from `x` to the nearest point of the box (0 inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.bounds)
            .map(|(&v, &(l, u))| {
                let d = if v < l {
                    l - v
                } else if v > u {
                    v - u
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Centering and scaling of input columns plus centering of the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeTransform {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub outcome_mean: f64,
}

impl StandardizeTransform {
    pub fn identity(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            scale: vec![1.0; p],
            outcome_mean: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_inputs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| (v - self.mean[j]) / self.scale[j])
            .collect()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_inputs() != self.dim() {
            return Err(SreError::DimensionMismatch {
                what: "standardize transform",
                expected: self.dim(),
                got: data.n_inputs(),
            });
        }
        Dataset::with_parts(
            self.apply_inputs(data.inputs()),
            data.outcome().add_scalar(-self.outcome_mean),
            data.instruments().cloned(),
            data.time_index().map(<[i64]>::to_vec),
        )
    }

    pub fn invert(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_inputs() != self.dim() {
            return Err(SreError::DimensionMismatch {
                what: "standardize transform",
                expected: self.dim(),
                got: data.n_inputs(),
            });
        }
        let mut inputs = data.inputs().clone();
        for (j, mut col) in inputs.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = *v * self.scale[j] + self.mean[j];
            }
        }
        Dataset::with_parts(
            inputs,
            data.outcome().add_scalar(self.outcome_mean),
            data.instruments().cloned(),
            data.time_index().map(<[i64]>::to_vec),
        )
    }
}

/// Per-column mean and population standard deviation. Columns whose spread
/// is below round-off relative to their magnitude keep scale 1.
pub(crate) fn column_moments(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let magnitude = col.amax().max(1.0);
        means.push(mean);
        scales.push(if sd > 1e-12 * magnitude { sd } else { 1.0 });
    }
    (means, scales)
}

/// Center and scale every input column (population standard deviation) and
/// center the outcome.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizeTransform)> {
    if data.is_empty() {
        return Err(SreError::EmptyDataset);
    }
    let (mean, scale) = column_moments(data.inputs());
    let outcome_mean = data.outcome().mean();
    let t = StandardizeTransform {
        mean,
        scale,
        outcome_mean,
    };
    Ok((t.apply(data)?, t))
}

/// ChaCha20 stream keyed by `(base_seed, stream_index)`.
///
/// Identical keys reproduce identical draws; distinct stream indices select
/// disjoint ChaCha streams.
#[derive(Debug, Clone)]
pub struct SeededRng {
    base_seed: u64,
    stream_index: u64,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(base_seed);
        inner.set_stream(stream_index);
        Self {
            base_seed,
            stream_index,
            inner,
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Independent child generator seeded from this one's next output.
    pub fn fork(&mut self) -> SeededRng {
        let seed = self.inner.next_u64();
        SeededRng::new(seed, self.stream_index)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Random assignment of `0..n` into `k` folds whose sizes differ by at most
/// one. Indices inside each fold are ascending.
pub fn partition_indices(n: usize, k: usize, rng: &mut SeededRng) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(SreError::InvalidArgument(format!(
            "partition needs at least 2 folds, got {k}"
        )));
    }
    if k > n {
        return Err(SreError::InvalidArgument(format!(
            "cannot partition {n} observations into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, &i) in order.iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn partition(data: &Dataset, k: usize, rng: &mut SeededRng) -> Result<Vec<Dataset>> {
    partition_indices(data.len(), k, rng)?
        .iter()
        .map(|idx| data.select(idx))
        .collect()
}

/// Compact set operand for [`hausdorff_distance`].
#[derive(Debug, Clone, Copy)]
pub enum CompactSet<'a> {
    Box(&'a DomainSpec),
    Points(&'a [Vec<f64>]),
}

impl CompactSet<'_> {
    fn dim(&self) -> Result<usize> {
        match self {
            CompactSet::Box(d) => Ok(d.dim()),
            CompactSet::Points(p) => {
                let first = p.first().ok_or(SreError::EmptyDataset)?;
                if p.iter().any(|q| q.len() != first.len()) {
                    return Err(SreError::InvalidArgument(
                        "point set has ragged dimensions".into(),
                    ));
                }
                Ok(first.len())
            }
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn nearest(points: &[Vec<f64>], x: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| euclid(p, x))
        .fold(f64::INFINITY, f64::min)
}

/// `sup_{x in box} inf_{p in points} |x - p|`.
///
/// Exact in one dimension (the supremum sits at an endpoint or a midpoint
/// between neighbouring points). In higher dimensions the box is scanned on
/// a regular lattice of roughly 4096 nodes including all vertices, so the
/// result is a lower bound accurate to about half the lattice spacing.
fn box_to_points(domain: &DomainSpec, points: &[Vec<f64>]) -> f64 {
    if domain.dim() == 1 {
        let (lo, hi) = domain.bounds()[0];
        let mut candidates = vec![lo, hi];
        let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            if mid > lo && mid < hi {
                candidates.push(mid);
            }
        }
        return candidates
            .iter()
            .map(|&c| nearest(points, &[c]))
            .fold(0.0, f64::max);
    }
    let d = domain.dim();
    let per_dim = ((4096f64).powf(1.0 / d as f64).floor() as usize).max(2);
    let total = per_dim.pow(d as u32);
    let mut best: f64 = 0.0;
    let mut x = vec![0.0; d];
    for node in 0..total {
        let mut rem = node;
        for (k, &(lo, hi)) in domain.bounds().iter().enumerate() {
            let i = rem % per_dim;
            rem /= per_dim;
            x[k] = lo + (hi - lo) * i as f64 / (per_dim - 1) as f64;
        }
        best = best.max(nearest(points, &x));
    }
    best
}

/// `sup_{a in A} inf_{b in B} |a - b|` for two boxes: the separable convex
/// distance is maximized at a vertex of `A`, coordinate by coordinate.
fn box_to_box(a: &DomainSpec, b: &DomainSpec) -> f64 {
    a.bounds()
        .iter()
        .zip(b.bounds())
        .map(|(&(al, au), &(bl, bu))| {
            let gap = |v: f64| {
                if v < bl {
                    bl - v
                } else if v > bu {
                    v - bu
                } else {
                    0.0
                }
            };
            let g = gap(al).max(gap(au));
            g * g
        })
        .sum::<f64>()
        .sqrt()
}

fn directed(a: CompactSet<'_>, b: CompactSet<'_>) -> f64 {
    match (a, b) {
        (CompactSet::Points(pa), CompactSet::Points(pb)) => {
            pa.iter().map(|p| nearest(pb, p)).fold(0.0, f64::max)
        }
        (CompactSet::Points(pa), CompactSet::Box(db)) => {
            pa.iter().map(|p| db.distance(p)).fold(0.0, f64::max)
        }
        (CompactSet::Box(da), CompactSet::Points(pb)) => box_to_points(da, pb),
        (CompactSet::Box(da), CompactSet::Box(db)) => box_to_box(da, db),
    }
}

/// Euclidean Hausdorff distance between two compact sets.
pub fn hausdorff_distance(a: CompactSet<'_>, b: CompactSet<'_>) -> Result<f64> {
    let (da, db) = (a.dim()?, b.dim()?);
    if da != db {
        return Err(SreError::DimensionMismatch {
            what: "hausdorff operands",
            expected: da,
            got: db,
        });
    }
    Ok(directed(a, b).max(directed(b, a)))
}

/// Index form of [`forward_split`]: `(s1, s2)` with `s2` the
/// `ceil(fraction * n)` rows nearest the target box.
///
/// Ranking key is box distance, then distance to the box center, then row
/// index. Both index lists are returned ascending.
pub fn forward_split_indices(
    data: &Dataset,
    target: &DomainSpec,
    fraction: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SreError::InvalidArgument(format!(
            "forward split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if data.n_inputs() != target.dim() {
        return Err(SreError::DimensionMismatch {
            what: "forward split target",
            expected: data.n_inputs(),
            got: target.dim(),
        });
    }
    let n = data.len();
    let center = target.center();
    let keys: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = data.input_row(i);
            (target.distance(&x), euclid(&x, &center))
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        keys[i]
            .0
            .total_cmp(&keys[j].0)
            .then(keys[i].1.total_cmp(&keys[j].1))
            .then(i.cmp(&j))
    });
    let take = ((fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
    if take >= n {
        return Err(SreError::InvalidArgument(format!(
            "forward split of {n} observations at fraction {fraction} leaves no training data"
        )));
    }
    let mut s2 = order[..take].to_vec();
    let mut s1 = order[take..].to_vec();
    s1.sort_unstable();
    s2.sort_unstable();
    Ok((s1, s2))
}

/// Split `data` into `(S1, S2)` where `S2` is the fraction of observations
/// closest to the target domain.
pub fn forward_split(
    data: &Dataset,
    target: &DomainSpec,
    fraction: f64,
) -> Result<(Dataset, Dataset)> {
    let (s1, s2) = forward_split_indices(data, target, fraction)?;
    Ok((data.select(&s1)?, data.select(&s2)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::from_columns(xs, &vec![0.0; xs.len()]).unwrap()
    }

    #[test]
    fn standardize_two_points() {
        let d = Dataset::from_columns(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        let (s, t) = standardize(&d).unwrap();
        assert_eq!(s.inputs().as_slice(), &[-1.0, 1.0]);
        assert_eq!(s.outcome().as_slice(), &[-1.0, 1.0]);
        assert_eq!(t.mean, vec![2.0]);
        assert_eq!(t.scale, vec![1.0]);
        assert_eq!(t.outcome_mean, 3.0);
    }

    #[test]
    fn standardize_keeps_standard_column() {
        let d = Dataset::from_columns(&[-1.0, 1.0, -1.0, 1.0], &[0.0, 0.0, 0.0, 0.0]).unwrap();
        let (s, t) = standardize(&d).unwrap();
        assert_eq!(s, d);
        assert_eq!(t, StandardizeTransform::identity(1));
    }

    #[test]
    fn standardize_zero_variance_column_is_only_centered() {
        let x = DMatrix::from_row_slice(3, 2, &[5.0, 1.0, 5.0, 2.0, 5.0, 3.0]);
        let d = Dataset::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let (s, t) = standardize(&d).unwrap();
        assert_eq!(t.scale[0], 1.0);
        assert!(s.inputs().column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardize_round_trip_random() {
        let mut rng = SeededRng::new(7, 0);
        let x = DMatrix::from_fn(100, 3, |_, j| rng.gen::<f64>() * (j as f64 + 1.0) * 10.0 - 3.0);
        let y = DVector::from_fn(100, |_, _| rng.gen::<f64>() * 5.0);
        let d = Dataset::new(x, y).unwrap();
        let (s, t) = standardize(&d).unwrap();
        for col in s.inputs().column_iter() {
            assert!(col.mean().abs() <= 1e-12 * 100.0);
            let var = col.iter().map(|v| v * v).sum::<f64>() / 100.0;
            assert!((var - 1.0).abs() < 1e-12);
        }
        let back = t.invert(&s).unwrap();
        for (a, b) in back.inputs().iter().zip(d.inputs().iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in back.outcome().iter().zip(d.outcome().iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let r = Dataset::new(DMatrix::zeros(0, 1), DVector::zeros(0));
        assert!(matches!(r, Err(SreError::EmptyDataset)));
        assert_eq!(SreError::EmptyDataset.to_string(), "empty dataset");
    }

    #[test]
    fn non_finite_rejected() {
        let r = Dataset::from_columns(&[1.0, f64::NAN], &[1.0, 2.0]);
        assert!(matches!(r, Err(SreError::NonFinite(_))));
    }

    #[test]
    fn partition_sizes() {
        let d = line(&(0..10).map(f64::from).collect::<Vec<_>>());
        let folds = partition(&d, 2, &mut SeededRng::new(1, 0)).unwrap();
        assert_eq!(folds.iter().map(Dataset::len).collect::<Vec<_>>(), vec![5, 5]);

        let d = line(&(0..11).map(f64::from).collect::<Vec<_>>());
        let mut sizes: Vec<usize> = partition(&d, 2, &mut SeededRng::new(1, 0))
            .unwrap()
            .iter()
            .map(Dataset::len)
            .collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![5, 6]);
    }

    #[test]
    fn partition_is_deterministic_and_rejects_too_many_folds() {
        let a = partition_indices(50, 4, &mut SeededRng::new(99, 3)).unwrap();
        let b = partition_indices(50, 4, &mut SeededRng::new(99, 3)).unwrap();
        assert_eq!(a, b);
        let c = partition_indices(50, 4, &mut SeededRng::new(99, 4)).unwrap();
        assert_ne!(a, c);
        assert!(partition_indices(3, 4, &mut SeededRng::new(0, 0)).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let a = DomainSpec::interval(0.0, 1.0).unwrap();
        let b = DomainSpec::interval(2.0, 3.0).unwrap();
        assert_eq!(hausdorff_distance(CompactSet::Box(&a), CompactSet::Box(&a)).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(CompactSet::Box(&a), CompactSet::Box(&b)).unwrap(), 2.0);
        let p = vec![vec![0.0]];
        let q = vec![vec![0.0], vec![5.0]];
        assert_eq!(
            hausdorff_distance(CompactSet::Points(&p), CompactSet::Points(&q)).unwrap(),
            5.0
        );
    }

    #[test]
    fn hausdorff_box_to_points_uses_gaps() {
        // Points {0, 1} against [0, 1]: the midpoint 0.5 is farthest.
        let dom = DomainSpec::interval(0.0, 1.0).unwrap();
        let pts = vec![vec![0.0], vec![1.0]];
        let h = hausdorff_distance(CompactSet::Box(&dom), CompactSet::Points(&pts)).unwrap();
        assert!((h - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hausdorff_dimension_mismatch() {
        let a = DomainSpec::interval(0.0, 1.0).unwrap();
        let b = DomainSpec::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!(hausdorff_distance(CompactSet::Box(&a), CompactSet::Box(&b)).is_err());
    }

    #[test]
    fn forward_split_picks_nearest() {
        let d = line(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let target = DomainSpec::interval(7.0, 10.0).unwrap();
        let (s1, s2) = forward_split(&d, &target, 1.0 / 6.0).unwrap();
        assert_eq!(s2.inputs().as_slice(), &[6.0]);
        assert_eq!(s1.len(), 5);
    }

    #[test]
    fn forward_split_degenerate_target_prefers_center() {
        let d = line(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let target = DomainSpec::interval(0.0, 7.0).unwrap();
        let (_, s2) = forward_split(&d, &target, 1.0 / 6.0).unwrap();
        assert_eq!(s2.inputs().as_slice(), &[3.0]);
    }

    #[test]
    fn forward_split_two_dimensional_grid() {
        let mut rows = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                rows.push(i as f64);
                rows.push(j as f64);
            }
        }
        let x = DMatrix::from_row_slice(16, 2, &rows);
        let d = Dataset::new(x, DVector::zeros(16)).unwrap();
        let target = DomainSpec::new(vec![(5.0, 9.0), (5.0, 9.0)]).unwrap();
        let (_, s2) = forward_split(&d, &target, 3.0 / 16.0).unwrap();
        let mut got: Vec<(f64, f64)> = (0..s2.len())
            .map(|i| (s2.inputs()[(i, 0)], s2.inputs()[(i, 1)]))
            .collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![(2.0, 3.0), (3.0, 2.0), (3.0, 3.0)]);
    }

    #[test]
    fn forward_split_rejects_bad_fraction() {
        let d = line(&[1.0, 2.0]);
        let t = DomainSpec::interval(3.0, 4.0).unwrap();
        assert!(forward_split(&d, &t, 0.0).is_err());
        assert!(forward_split(&d, &t, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_a_partition(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = partition_indices(n, k, &mut SeededRng::new(seed, 0)).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn hausdorff_interval_metric(
            a in (-10.0f64..10.0, 0.0f64..5.0),
            b in (-10.0f64..10.0, 0.0f64..5.0),
            c in (-10.0f64..10.0, 0.0f64..5.0),
        ) {
            let ia = DomainSpec::interval(a.0, a.0 + a.1).unwrap();
            let ib = DomainSpec::interval(b.0, b.0 + b.1).unwrap();
            let ic = DomainSpec::interval(c.0, c.0 + c.1).unwrap();
            let h = |x: &DomainSpec, y: &DomainSpec| {
                hausdorff_distance(CompactSet::Box(x), CompactSet::Box(y)).unwrap()
            };
            prop_assert_eq!(h(&ia, &ib), h(&ib, &ia));
            prop_assert_eq!(h(&ia, &ia), 0.0);
            prop_assert!(h(&ia, &ic) <= h(&ia, &ib) + h(&ib, &ic) + 1e-12);
        }

        #[test]
        fn forward_split_orders_by_distance(
            xs in proptest::collection::vec(-20.0f64..20.0, 3..60),
            lo in -10.0f64..30.0,
            frac in 0.05f64..0.6,
        ) {
            let d = line(&xs);
            let target = DomainSpec::interval(lo, lo + 5.0).unwrap();
            if let Ok((s1, s2)) = forward_split_indices(&d, &target, frac) {
                prop_assert_eq!(s1.len() + s2.len(), xs.len());
                let worst_s2 = s2.iter().map(|&i| target.distance(&[xs[i]])).fold(0.0, f64::max);
                let best_s1 = s1.iter().map(|&i| target.distance(&[xs[i]])).fold(f64::INFINITY, f64::min);
                prop_assert!(worst_s2 <= best_s1);
            }
        }

        #[test]
        fn forward_split_hausdorff_ordering_for_one_sided_data(
            xs in proptest::collection::vec(-20.0f64..20.0, 3..60),
            frac in 0.05f64..0.6,
        ) {
            // Target strictly to the right of every observation.
            let d = line(&xs);
            let target = DomainSpec::interval(25.0, 30.0).unwrap();
            let (s1, s2) = forward_split_indices(&d, &target, frac).unwrap();
            let worst_s2 = s2.iter().map(|&i| target.distance(&[xs[i]])).fold(0.0, f64::max);
            let best_s1 = s1.iter().map(|&i| target.distance(&[xs[i]])).fold(f64::INFINITY, f64::min);
            if best_s1 > worst_s2 {
                let p1: Vec<Vec<f64>> = s1.iter().map(|&i| vec![xs[i]]).collect();
                let p2: Vec<Vec<f64>> = s2.iter().map(|&i| vec![xs[i]]).collect();
                let h1 = hausdorff_distance(CompactSet::Points(&p1), CompactSet::Box(&target)).unwrap();
                let h2 = hausdorff_distance(CompactSet::Points(&p2), CompactSet::Box(&target)).unwrap();
                prop_assert!(h2 < h1);
            }
        }
    }
}
