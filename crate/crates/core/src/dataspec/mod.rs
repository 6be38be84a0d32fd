//! Dataset schema shared by every pipeline stage: the dense embedding matrix,
//! the EMBX binary interchange format, the JSON-lines manifest and
//! train/test splitting.

mod embx;
mod manifest;
mod split;

pub use embx::{decode_embx, encode_embx, read_embeddings, write_embeddings, EMBX_HEADER_LEN};
pub use manifest::{
    content_hash, read_manifest, write_manifest, Corpus, LabelSet, Manifest, ManifestMeta,
    UtteranceRecord,
};
pub use split::{make_split, make_split_with, test_count, SplitOptions, SplitPlan};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense `rows × dims` matrix of finite reals, one row per utterance.
///
/// Used for text, speech, residual and predicted embeddings alike. Storage is
/// row-major `f64`; files store `f32`. A zero-row matrix is representable in
/// memory (empty batches) but cannot be written to EMBX.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dims: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dims: usize, data: Vec<f64>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::shape("embedding dimensionality must be at least 1"));
        }
        if data.len() != rows * dims {
            return Err(Error::shape(format!(
                "data length {} does not match {rows}x{dims}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dims,
                col: pos % dims,
            });
        }
        Ok(Self { rows, dims, data })
    }

    pub fn zeros(rows: usize, dims: usize) -> Self {
        assert!(dims > 0, "dims must be positive");
        Self {
            rows,
            dims,
            data: vec![0.0; rows * dims],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dims = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dims);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dims {
                return Err(Error::shape(format!(
                    "row {i} has {} values, expected {dims}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dims, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dims + j]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dims)
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dims: self.dims,
            data,
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.dims, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, dims) = m.shape();
        let mut data = Vec::with_capacity(rows * dims);
        for i in 0..rows {
            data.extend(m.row(i).iter().copied());
        }
        Self::new(rows, dims, data)
    }

    /// Each row scaled to unit Euclidean norm; all-zero rows are left as is.
    pub fn l2_normalized(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.dims) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Self { data, ..*self }
    }

    /// The same matrix rounded through `f32`, i.e. what a file round-trip yields.
    pub fn to_f32_precision(&self) -> Self {
        Self {
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
            ..*self
        }
    }
}
