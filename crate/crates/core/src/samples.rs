//! Sample sets.
//!
//! Observations are stored column-wise in a `d × N` matrix so that each
//! observation is a contiguous slice; the moment kernels feed column blocks
//! straight into matrix products.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: DMatrix<f64>,
    mask: Option<Vec<bool>>,
}

/// How many removed rows were adversarial and how many were clean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Census {
    pub corrupt: usize,
    pub clean: usize,
}

impl SampleSet {
    /// Wraps a `d × N` matrix whose columns are observations.
    pub fn from_columns(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sample set contains non-finite values"));
        }
        Ok(SampleSet { data, mask: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::param("rows have different lengths"));
        }
        let mut data = DMatrix::zeros(d, n);
        for (j, r) in rows.iter().enumerate() {
            data.column_mut(j).copy_from_slice(r);
        }
        Self::from_columns(data)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(Error::param(format!(
                "mask length {} does not match {} samples",
                mask.len(),
                self.len()
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn without_mask(mut self) -> Self {
        self.mask = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice()[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        let d = self.dim().max(1);
        let n = self.len();
        self.data.as_slice().chunks_exact(d).take(n)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Ground-truth corruption flags. Diagnostics only; estimators never
    /// consult this.
    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn num_corrupt(&self) -> Option<usize> {
        self.mask.as_ref().map(|m| m.iter().filter(|&&b| b).count())
    }

    /// The subset at `indices` (in that order), carrying the mask along.
    pub fn select(&self, indices: &[usize]) -> SampleSet {
        let d = self.dim();
        let src = self.data.as_slice();
        let mut buf = Vec::with_capacity(d * indices.len());
        for &i in indices {
            buf.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        SampleSet {
            data: DMatrix::from_vec(d, indices.len(), buf),
            mask: self
                .mask
                .as_ref()
                .map(|m| indices.iter().map(|&i| m[i]).collect()),
        }
    }

    /// Keeps the samples with `keep[i]` set, in order.
    pub fn retain(&self, keep: &[bool]) -> SampleSet {
        debug_assert_eq!(keep.len(), self.len());
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        self.select(&idx)
    }

    /// Census of the samples dropped by `keep`, if a mask is present.
    pub fn removal_census(&self, keep: &[bool]) -> Option<Census> {
        let mask = self.mask.as_ref()?;
        let mut c = Census::default();
        for (&k, &bad) in keep.iter().zip(mask) {
            if !k {
                if bad {
                    c.corrupt += 1;
                } else {
                    c.clean += 1;
                }
            }
        }
        Some(c)
    }

    /// Census of the samples present here but absent from `after`, assuming
    /// `after` came from this set by removals only.
    pub fn census_against(&self, after: &SampleSet) -> Option<Census> {
        let before = self.num_corrupt()?;
        let after_bad = after.num_corrupt()?;
        let removed = self.len() - after.len();
        let corrupt = before - after_bad;
        Some(Census {
            corrupt,
            clean: removed - corrupt,
        })
    }

    /// Applies `f` to every coordinate of every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<SampleSet> {
        let out = SampleSet::from_columns(self.data.map(f))?;
        Ok(SampleSet {
            mask: self.mask.clone(),
            ..out
        })
    }

    /// Left-multiplies every sample by `a` (`k × d`).
    pub fn transform(&self, a: &DMatrix<f64>) -> Result<SampleSet> {
        if a.ncols() != self.dim() {
            return Err(Error::param("transform has wrong number of columns"));
        }
        let out = SampleSet::from_columns(a * &self.data)?;
        Ok(SampleSet {
            mask: self.mask.clone(),
            ..out
        })
    }

    /// Splits into `k` contiguous folds of (nearly) equal size.
    pub fn folds(&self, k: usize) -> Vec<SampleSet> {
        let n = self.len();
        (0..k)
            .map(|f| {
                let lo = f * n / k;
                let hi = (f + 1) * n / k;
                self.select(&(lo..hi).collect::<Vec<_>>())
            })
            .collect()
    }

    /// Writes the set as CSV with header `x0,...,x{d-1}[,corrupted]`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        if self.mask.is_some() {
            header.push("corrupted".into());
        }
        wtr.write_record(&header)?;
        let mut rec = Vec::with_capacity(d + 1);
        for (i, p) in self.points().enumerate() {
            rec.clear();
            rec.extend(p.iter().map(|v| v.to_string()));
            if let Some(m) = &self.mask {
                rec.push(if m[i] { "1" } else { "0" }.to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<SampleSet> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let has_mask = header.iter().last() == Some("corrupted");
        let d = header.len() - usize::from(has_mask);
        for (j, name) in header.iter().take(d).enumerate() {
            if name != format!("x{j}") {
                return Err(Error::param(format!("unexpected column `{name}`")));
            }
        }
        let mut buf = Vec::new();
        let mut mask = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for field in rec.iter().take(d) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::param(format!("not a number: `{field}`")))?;
                buf.push(v);
            }
            if has_mask {
                match rec.get(d).map(str::trim) {
                    Some("1") => mask.push(true),
                    Some("0") => mask.push(false),
                    other => {
                        return Err(Error::param(format!("bad corruption flag {other:?}")))
                    }
                }
            }
        }
        let n = if d == 0 { 0 } else { buf.len() / d };
        let set = SampleSet::from_columns(DMatrix::from_vec(d, n, buf))?;
        if has_mask {
            set.with_mask(mask)
        } else {
            Ok(set)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SampleSet> {
        SampleSet::read_csv(std::fs::File::open(path)?)
    }
}
