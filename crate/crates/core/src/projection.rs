//! Closed-form ridge projection from source-word vectors to target-word
//! vectors.
//!
//! For the design `X = [1 | sources]` (n × (d+1)) and targets `Y` (n × d) the
//! coefficients are `(XᵀX + λL)⁻¹ XᵀY`, where `L` is the identity with a zero
//! in the top-left cell so that the intercept is not shrunk. All `d` output
//! columns share one Cholesky factorization.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{nearest_neighbors, EmbeddingModel};
use crate::error::{Error, Result};
use crate::gold::{filter_by_vocab, RelationPair, SkipReason};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{norm, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// source → target (location → group)
    #[default]
    Forward,
    /// target → source (group → location)
    Reverse,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" | "source-to-target" => Ok(Direction::Forward),
            "reverse" | "target-to-source" => Ok(Direction::Reverse),
            other => Err(Error::Config(format!("unknown direction {other:?}"))),
        }
    }
}

impl Direction {
    pub fn name(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }

    /// (input token, output token) of `pair` under this direction.
    pub fn roles<'a>(&self, pair: &'a RelationPair) -> (&'a str, &'a str) {
        match self {
            Direction::Forward => (&pair.source, &pair.target),
            Direction::Reverse => (&pair.target, &pair.source),
        }
    }
}

/// Regression rows assembled from in-vocabulary pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSystem<F> {
    /// n × (d+1); column 0 is all ones.
    pub x: Matrix<F>,
    /// n × d.
    pub y: Matrix<F>,
    /// Pair of each row, in row order.
    pub pairs: Vec<RelationPair>,
    pub skipped: Vec<(RelationPair, SkipReason)>,
}

impl<F: Scalar> DesignSystem<F> {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.y.cols()
    }

    /// Copy of the system without row `i`.
    pub fn without_row(&self, i: usize) -> DesignSystem<F> {
        let keep = |m: &Matrix<F>| {
            let mut out = Matrix::zeros(0, m.cols());
            for (r, row) in m.iter_rows().enumerate() {
                if r != i {
                    out.push_row(row).expect("same width");
                }
            }
            out
        };
        let mut pairs = self.pairs.clone();
        pairs.remove(i);
        DesignSystem { x: keep(&self.x), y: keep(&self.y), pairs, skipped: self.skipped.clone() }
    }
}

/// Build the regression system. Pairs with an out-of-vocabulary member are
/// dropped and listed in `skipped`; duplicate pairs give duplicate rows.
pub fn assemble_design<F: Scalar>(
    pairs: &[RelationPair],
    model: &EmbeddingModel<F>,
    direction: Direction,
) -> Result<DesignSystem<F>> {
    assemble_design_with(pairs, model, direction, false)
}

/// [`assemble_design`] with optional unit-normalization of every vector.
pub fn assemble_design_with<F: Scalar>(
    pairs: &[RelationPair],
    model: &EmbeddingModel<F>,
    direction: Direction,
    normalize: bool,
) -> Result<DesignSystem<F>> {
    let slice = filter_by_vocab(pairs, model);
    if slice.pairs.is_empty() {
        return Err(Error::EmptyDesign(pairs.len()));
    }
    let d = model.dim();
    let prepare = |token: &str| -> Vec<F> {
        let v = model.get(token).expect("filtered to in-vocabulary").to_vec();
        let n = norm(&v);
        if normalize && n > F::zero() {
            v.into_iter().map(|c| c / n).collect()
        } else {
            v
        }
    };
    let mut x = Matrix::zeros(0, d + 1);
    let mut y = Matrix::zeros(0, d);
    let mut row = Vec::with_capacity(d + 1);
    for pair in &slice.pairs {
        let (input, output) = direction.roles(pair);
        row.clear();
        row.push(F::one());
        row.extend(prepare(input));
        x.push_row(&row)?;
        y.push_row(&prepare(output))?;
    }
    let skipped = slice
        .skipped
        .into_iter()
        .map(|(p, reason)| {
            let reason = match (direction, reason) {
                (Direction::Reverse, SkipReason::SourceOov) => SkipReason::TargetOov,
                (Direction::Reverse, SkipReason::TargetOov) => SkipReason::SourceOov,
                (_, r) => r,
            };
            (p, reason)
        })
        .collect();
    Ok(DesignSystem { x, y, pairs: slice.pairs, skipped })
}

/// Intercept row plus linear map, `(source_dim + 1) × target_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix<F> {
    coeffs: Matrix<F>,
    lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub lambda: f64,
    /// Fit an unregularized intercept. When off the intercept row is zero
    /// and every coefficient is regularized.
    pub intercept: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { lambda: 1.0, intercept: true }
    }
}

pub fn fit<F: Scalar>(design: &DesignSystem<F>, lambda: f64) -> Result<ProjectionMatrix<F>> {
    fit_with(design, FitOptions { lambda, intercept: true })
}

pub fn fit_with<F: Scalar>(design: &DesignSystem<F>, opts: FitOptions) -> Result<ProjectionMatrix<F>> {
    if design.is_empty() {
        return Err(Error::EmptyDesign(0));
    }
    if !(opts.lambda >= 0.0 && opts.lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be a finite non-negative number, got {}", opts.lambda)));
    }
    let lambda = F::from_f64_lossy(opts.lambda);
    let d = design.dim();
    let mut gram = design.x.t_mul(&design.x)?;
    let mut cross = design.x.t_mul(&design.y)?;

    let coeffs = if opts.intercept {
        for i in 1..=d {
            gram[(i, i)] += lambda;
        }
        let chol = Cholesky::factor(&gram)?;
        chol.solve(&cross)?
    } else {
        let mut g = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                g[(i, j)] = gram[(i + 1, j + 1)];
            }
            g[(i, i)] += lambda;
        }
        let c = Matrix::from_vec(d, d, cross.as_mut_slice()[d..].to_vec())?;
        let linear = Cholesky::factor(&g)?.solve(&c)?;
        let mut coeffs = Matrix::zeros(d + 1, d);
        coeffs.as_mut_slice()[d..].copy_from_slice(linear.as_slice());
        coeffs
    };
    if !coeffs.is_finite() {
        return Err(Error::Domain("projection coefficients are not finite".into()));
    }
    Ok(ProjectionMatrix { coeffs, lambda: opts.lambda })
}

impl<F: Scalar> ProjectionMatrix<F> {
    pub fn from_coeffs(coeffs: Matrix<F>, lambda: f64) -> Result<Self> {
        if coeffs.rows() < 2 || coeffs.cols() == 0 {
            return Err(Error::Domain("projection needs an intercept row and at least one column".into()));
        }
        if !coeffs.is_finite() {
            return Err(Error::Domain("projection coefficients are not finite".into()));
        }
        Ok(ProjectionMatrix { coeffs, lambda })
    }

    pub fn coeffs(&self) -> &Matrix<F> {
        &self.coeffs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn source_dim(&self) -> usize {
        self.coeffs.rows() - 1
    }

    pub fn target_dim(&self) -> usize {
        self.coeffs.cols()
    }

    pub fn intercept(&self) -> &[F] {
        self.coeffs.row(0)
    }

    /// `intercept + source · linear_block`
    pub fn apply(&self, source: &[F]) -> Result<Vec<F>> {
        if source.len() != self.source_dim() {
            return Err(Error::DimensionMismatch { expected: self.source_dim(), actual: source.len() });
        }
        let mut out = self.intercept().to_vec();
        for (i, &s) in source.iter().enumerate() {
            if s != F::zero() {
                crate::scalar::axpy(s, self.coeffs.row(i + 1), &mut out);
            }
        }
        Ok(out)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "dim {} lambda {}", self.target_dim(), self.lambda)?;
        for row in self.coeffs.iter_rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.ok_or_else(|| Error::parse_at_line(1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (dim, lambda) = match fields.as_slice() {
            ["dim", d, "lambda", l] => (
                d.parse::<usize>().map_err(|_| Error::parse_at_line(1, format!("invalid dim {d:?}")))?,
                l.parse::<f64>().map_err(|_| Error::parse_at_line(1, format!("invalid lambda {l:?}")))?,
            ),
            _ => return Err(Error::parse_at_line(1, format!("malformed header {header:?}"))),
        };
        let mut rows = Vec::with_capacity(dim + 1);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<F> = line
                .split_whitespace()
                .map(|v| v.parse::<F>())
                .collect::<Result<_, _>>()
                .map_err(|_| Error::parse_at_line(i + 2, "invalid coefficient"))?;
            if row.len() != dim {
                return Err(Error::parse_at_line(i + 2, format!("expected {dim} values, found {}", row.len())));
            }
            rows.push(row);
        }
        if rows.len() != dim + 1 {
            return Err(Error::Parse {
                location: "end of file".into(),
                message: format!("expected {} rows, found {}", dim + 1, rows.len()),
            });
        }
        Self::from_coeffs(Matrix::from_rows(&rows)?, lambda)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write(&mut w).and_then(|()| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LooOptions {
    pub fit: FitOptions,
    pub ks: Vec<usize>,
    pub direction: Direction,
    /// Remove the held-out input token from its own neighbor candidates.
    pub exclude_source: bool,
    pub normalize: bool,
}

impl Default for LooOptions {
    fn default() -> Self {
        LooOptions {
            fit: FitOptions::default(),
            ks: vec![1, 5, 10],
            direction: Direction::Forward,
            exclude_source: false,
            normalize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub ks: Vec<usize>,
    /// Hit fraction per k over successful folds, in `[0, 1]`.
    pub accuracy: Vec<f64>,
    pub hits: Vec<usize>,
    pub folds: usize,
    pub failed: usize,
    pub skipped: usize,
}

/// Leave-one-out over row instances: each row is held out once, the
/// projection is fit on every other row (other duplicates of the same pair
/// stay in), and the held-out input is mapped and ranked against the whole
/// vocabulary. Failed folds are counted and excluded from the mean.
pub fn loo_cross_validate<F: Scalar>(
    pairs: &[RelationPair],
    model: &EmbeddingModel<F>,
    opts: &LooOptions,
) -> Result<LooReport> {
    let design = assemble_design_with(pairs, model, opts.direction, opts.normalize)?;
    if design.len() < 2 {
        return Err(Error::Domain("leave-one-out needs at least two in-vocabulary pairs".into()));
    }
    let k_max = opts.ks.iter().copied().max().unwrap_or(1).max(1);
    let outcomes: Vec<Option<Option<usize>>> = (0..design.len())
        .into_par_iter()
        .map(|i| -> Result<Option<Option<usize>>> {
            let proj = match fit_with(&design.without_row(i), opts.fit) {
                Ok(p) => p,
                Err(e) if e.is_numerical() => return Ok(None),
                Err(e) => return Err(e),
            };
            let pair = &design.pairs[i];
            let (input, output) = opts.direction.roles(pair);
            let source = &design.x.row(i)[1..];
            let predicted = proj.apply(source)?;
            let mut exclude = HashSet::new();
            if opts.exclude_source {
                exclude.insert(input.to_owned());
            }
            match nearest_neighbors(model, &predicted, k_max, &exclude) {
                Ok(nn) => Ok(Some(nn.position(output))),
                Err(Error::Domain(_)) => Ok(Some(None)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    let done: Vec<Option<usize>> = outcomes.into_iter().flatten().collect();
    let hits: Vec<usize> =
        opts.ks.iter().map(|&k| done.iter().filter(|r| r.is_some_and(|rank| rank < k)).count()).collect();
    let accuracy = hits.iter().map(|&h| if done.is_empty() { 0.0 } else { h as f64 / done.len() as f64 }).collect();
    Ok(LooReport { ks: opts.ks.clone(), accuracy, hits, folds: design.len(), failed, skipped: design.skipped.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(rows: &[(&str, Vec<f64>)]) -> EmbeddingModel<f64> {
        let mut m = EmbeddingModel::new(rows[0].1.len());
        for (t, v) in rows {
            m.push(*t, v, 1).unwrap();
        }
        m
    }

    fn pair(id: usize, s: &str, t: &str) -> RelationPair {
        RelationPair::new(id, 2000, s, t)
    }

    fn swap_fixture() -> (EmbeddingModel<f64>, Vec<RelationPair>) {
        let m = model(&[
            ("s1", vec![1.0, 0.0]),
            ("s2", vec![0.0, 1.0]),
            ("s3", vec![1.0, 1.0]),
            ("t1", vec![0.0, 1.0]),
            ("t2", vec![1.0, 0.0]),
            ("t3", vec![1.0, 1.0]),
        ]);
        let pairs = vec![pair(0, "s1", "t1"), pair(1, "s2", "t2"), pair(2, "s3", "t3")];
        (m, pairs)
    }

    #[test]
    fn design_shape_and_skips() {
        let (m, mut pairs) = swap_fixture();
        let d = assemble_design(&pairs[..2], &m, Direction::Forward).unwrap();
        assert_eq!((d.x.rows(), d.x.cols()), (2, 3));
        assert!(d.x.iter_rows().all(|r| r[0] == 1.0));
        pairs.push(pair(3, "s1", "missing"));
        let d = assemble_design(&pairs, &m, Direction::Forward).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.skipped[0].1, SkipReason::TargetOov);
        let r = assemble_design(&pairs, &m, Direction::Reverse).unwrap();
        assert_eq!(r.skipped[0].1, SkipReason::SourceOov);
        assert_eq!(r.x.row(0), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn duplicate_pairs_give_duplicate_rows() {
        let (m, _) = swap_fixture();
        let pairs: Vec<_> = (0..3).map(|i| RelationPair::new(i, 1995 + i as i32, "s1", "t1")).collect();
        let d = assemble_design(&pairs, &m, Direction::Forward).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.x.row(0), d.x.row(2));
    }

    #[test]
    fn all_oov_is_empty_design() {
        let (m, _) = swap_fixture();
        let err = assemble_design(&[pair(0, "a", "b")], &m, Direction::Forward).unwrap_err();
        assert!(matches!(err, Error::EmptyDesign(1)));
    }

    #[test]
    fn swap_pairs_fit() {
        let (m, pairs) = swap_fixture();
        let d = assemble_design(&pairs, &m, Direction::Forward).unwrap();
        let p = fit(&d, 0.0).unwrap();
        let expected = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        for (row, want) in p.coeffs().iter_rows().zip(expected) {
            for (g, w) in row.iter().zip(want) {
                assert!((g - w).abs() < 1e-8, "{row:?}");
            }
        }
        let y = p.apply(&[1.0, 0.0]).unwrap();
        assert!((y[0] - 0.0).abs() < 1e-6 && (y[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_pair_without_ridge_is_rank_deficient() {
        let (m, pairs) = swap_fixture();
        let d = assemble_design(&pairs[..1], &m, Direction::Forward).unwrap();
        assert!(matches!(fit(&d, 0.0), Err(Error::RankDeficient { .. })));
        assert!(fit(&d, 1.0).is_ok());
    }

    #[test]
    fn heavy_ridge_leaves_only_the_mean() {
        let (m, pairs) = swap_fixture();
        let d = assemble_design(&pairs, &m, Direction::Forward).unwrap();
        let p = fit(&d, 1e8).unwrap();
        let linear: f64 = p.coeffs().as_slice()[2..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(linear < 1e-4);
        let mean = [2.0 / 3.0, 2.0 / 3.0];
        for (g, w) in p.intercept().iter().zip(mean) {
            assert!((g - w).abs() < 1e-4);
        }
    }

    #[test]
    fn apply_basics() {
        let mut c = Matrix::zeros(3, 2);
        c[(0, 0)] = 0.5;
        c[(0, 1)] = -2.0;
        let p = ProjectionMatrix::from_coeffs(c, 0.0).unwrap();
        assert_eq!(p.apply(&[0.0, 0.0]).unwrap(), vec![0.5, -2.0]);
        assert!(p.apply(&[1.0]).is_err());

        let mut c = Matrix::zeros(3, 2);
        c[(1, 0)] = 1.0;
        c[(2, 1)] = 1.0;
        let id = ProjectionMatrix::from_coeffs(c, 0.0).unwrap();
        assert_eq!(id.apply(&[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn no_intercept_fit_has_zero_intercept() {
        let (m, pairs) = swap_fixture();
        let d = assemble_design(&pairs, &m, Direction::Forward).unwrap();
        let p = fit_with(&d, FitOptions { lambda: 0.0, intercept: false }).unwrap();
        assert_eq!(p.intercept(), &[0.0, 0.0]);
        let y = p.apply(&[0.0, 1.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10);
    }

    #[test]
    fn projection_file_round_trip() {
        let (m, pairs) = swap_fixture();
        let d = assemble_design(&pairs, &m, Direction::Forward).unwrap();
        let p = fit(&d, 0.5).unwrap();
        let mut buf = Vec::new();
        p.write(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("dim 2 lambda 0.5\n"));
        let back = ProjectionMatrix::<f64>::read(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        assert!(ProjectionMatrix::<f64>::read("dim 2 lambda 0\n1 2\n".as_bytes()).is_err());
    }

    #[test]
    fn two_pairs_all_folds_fail_without_ridge() {
        let (m, pairs) = swap_fixture();
        let opts = LooOptions { fit: FitOptions { lambda: 0.0, intercept: true }, ..LooOptions::default() };
        let r = loo_cross_validate(&pairs[..2], &m, &opts).unwrap();
        assert_eq!((r.folds, r.failed), (2, 2));
        assert!(loo_cross_validate(&pairs[..1], &m, &opts).is_err());
    }
}
