//! Labelled datasets, synthetic Gaussian blobs and the ASCII dataset format.
//!
//! File layout: a header line `d num_classes num_samples`, then one line per
//! sample, `label f1 ... fd`, whitespace separated.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Axis};

use super::{LearnerError, Result};
use crate::dp::{standard_normals, Purpose, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(LearnerError::EmptyDataset);
        }
        if features.nrows() != labels.len() {
            return Err(LearnerError::DimMismatch(format!(
                "{} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(LearnerError::LabelOutOfRange(y));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::NonFinite);
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.features.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.num_classes,
        )
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.dim(), self.num_classes, self.len())?;
        for (row, y) in self.features.rows().into_iter().zip(&self.labels) {
            write!(w, "{y}")?;
            for v in row {
                write!(w, " {v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Dataset> {
        let parse_err = |line: usize, msg: String| LearnerError::Parse { line, msg };
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let header = header.map_err(|e| parse_err(hline, e.to_string()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(hline, e.to_string()))?;
        let [d, num_classes, n] = nums[..] else {
            return Err(parse_err(hline, "header must be `d num_classes num_samples`".into()));
        };
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for (ln, line) in lines {
            let line = line.map_err(|e| parse_err(ln, e.to_string()))?;
            let mut toks = line.split_whitespace();
            let y: usize = toks
                .next()
                .ok_or_else(|| parse_err(ln, "empty sample".into()))?
                .parse()
                .map_err(|e: std::num::ParseIntError| parse_err(ln, e.to_string()))?;
            let before = features.len();
            for t in toks {
                features.push(t.parse::<f64>().map_err(|e| parse_err(ln, e.to_string()))?);
            }
            if features.len() - before != d {
                return Err(parse_err(ln, format!("expected {d} features")));
            }
            labels.push(y);
        }
        if labels.len() != n {
            return Err(parse_err(
                0,
                format!("header promised {n} samples, found {}", labels.len()),
            ));
        }
        let features = Array2::from_shape_vec((n, d), features).map_err(|e| parse_err(0, e.to_string()))?;
        Dataset::new(features, labels, num_classes)
    }
}

/// Shape of a synthetic blob problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub spread: f64,
    pub seed: u64,
    /// Confine the centers to a random subspace of this dimension. `None`
    /// (or a value ≥ `dim`) draws them isotropically.
    pub latent_rank: Option<usize>,
}

impl BlobSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(LearnerError::InvalidArgument(
                "blob classes, dim and samples must be at least 1".into(),
            ));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(LearnerError::InvalidArgument(format!("spread {}", self.spread)));
        }
        if self.latent_rank == Some(0) {
            return Err(LearnerError::InvalidArgument("latent rank must be at least 1".into()));
        }
        Ok(())
    }

    /// Unit-norm class centers, one row per class.
    pub fn centers(&self) -> Array2<f64> {
        let mut g = StreamRng::root(self.seed, Purpose::DataSynthesis).generator();
        let basis = match self.latent_rank {
            Some(r) if r < self.dim => Some(orthonormal_rows(&mut g, r, self.dim)),
            _ => None,
        };
        let mut c = Array2::zeros((self.num_classes, self.dim));
        for mut row in c.rows_mut() {
            let z = match &basis {
                Some(q) => {
                    let coef = standard_normals(&mut g, q.nrows());
                    q.t().dot(&Array1::from(coef)).to_vec()
                }
                None => standard_normals(&mut g, self.dim),
            };
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (dst, v) in row.iter_mut().zip(&z) {
                *dst = v / n;
            }
        }
        c
    }

    fn sample(&self, per_class: usize, stream: u64) -> Result<Dataset> {
        let centers = self.centers();
        let mut g = StreamRng::new(self.seed, 0, stream, Purpose::DataSynthesis).generator();
        let n = per_class * self.num_classes;
        let mut features = Array2::zeros((n, self.dim));
        let mut labels = Vec::with_capacity(n);
        for class in 0..self.num_classes {
            for s in 0..per_class {
                let z = standard_normals(&mut g, self.dim);
                let mut row = features.row_mut(class * per_class + s);
                for ((dst, c), z) in row.iter_mut().zip(centers.row(class)).zip(z) {
                    *dst = c + self.spread * z;
                }
                labels.push(class);
            }
        }
        Dataset::new(features, labels, self.num_classes)
    }
}

/// `r` orthonormal rows in `R^d` by Gram–Schmidt on Gaussian draws.
fn orthonormal_rows<R: rand::Rng>(g: &mut R, r: usize, d: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((r, d));
    let mut filled = 0;
    while filled < r {
        let mut v = Array1::from(standard_normals(g, d));
        for i in 0..filled {
            let proj = q.row(i).dot(&v);
            v.scaled_add(-proj, &q.row(i));
        }
        let n = v.dot(&v).sqrt();
        if n > 1e-8 {
            q.row_mut(filled).assign(&(v / n));
            filled += 1;
        }
    }
    q
}

/// Gaussian blobs around random unit-norm centers, class-major order.
pub fn synth_blobs(spec: &BlobSpec) -> Result<Dataset> {
    spec.validate()?;
    spec.sample(spec.samples_per_class, 1)
}

/// Training blobs plus an independent test draw from the same centers.
pub fn synth_blobs_with_test(spec: &BlobSpec, test_per_class: usize) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    if test_per_class == 0 {
        return Err(LearnerError::InvalidArgument("test set must be nonempty".into()));
    }
    Ok((spec.sample(spec.samples_per_class, 1)?, spec.sample(test_per_class, 2)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(spread: f64, seed: u64) -> BlobSpec {
        BlobSpec {
            num_classes: 4,
            dim: 6,
            samples_per_class: 25,
            spread,
            seed,
            latent_rank: None,
        }
    }

    #[test]
    fn histogram_is_uniform_and_deterministic() {
        let d = synth_blobs(&spec(0.3, 1)).unwrap();
        assert_eq!(d.label_histogram(), vec![25; 4]);
        assert_eq!(d, synth_blobs(&spec(0.3, 1)).unwrap());
        assert_ne!(d, synth_blobs(&spec(0.3, 2)).unwrap());
    }

    #[test]
    fn tight_blobs_are_nearest_center_separable() {
        let s = spec(1e-6, 3);
        let d = synth_blobs(&s).unwrap();
        let c = s.centers();
        for row in c.rows() {
            assert!((row.dot(&row) - 1.0).abs() < 1e-12);
        }
        for (x, &y) in d.features().rows().into_iter().zip(d.labels()) {
            let nearest = (0..4)
                .min_by(|&a, &b| {
                    let da = (&x - &c.row(a)).mapv(|v| v * v).sum();
                    let db = (&x - &c.row(b)).mapv(|v| v * v).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(nearest, y);
        }
    }

    #[test]
    fn test_split_shares_centers_but_not_samples() {
        let (train, test) = synth_blobs_with_test(&spec(0.2, 4), 5).unwrap();
        assert_eq!(train.len(), 100);
        assert_eq!(test.len(), 20);
        assert_ne!(train.features().row(0), test.features().row(0));
    }

    #[test]
    fn invalid_spread() {
        assert!(synth_blobs(&spec(0.0, 1)).is_err());
    }

    #[test]
    fn text_round_trip() {
        let d = synth_blobs(&spec(0.5, 7)).unwrap();
        let mut buf = Vec::new();
        d.write_text(&mut buf).unwrap();
        let back = Dataset::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn text_errors_carry_line_numbers() {
        let src = "2 3 2\n0 1.0 2.0\n1 oops 2.0\n";
        match Dataset::read_text(src.as_bytes()) {
            Err(LearnerError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let src = "2 3 1\n5 1.0 2.0\n";
        assert!(matches!(
            Dataset::read_text(src.as_bytes()),
            Err(LearnerError::LabelOutOfRange(5))
        ));
    }
}
