use serde::{Deserialize, Serialize};

use super::{NumericsError, Result, NEG_INF};

/// Dense row-major array of `f64`.
///
/// Every extent is positive and `data.len()` is the product of the extents.
/// Gradients are not stored here; they live on the [`ComputeGraph`] node
/// that tracks the tensor.
///
/// [`ComputeGraph`]: super::ComputeGraph
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(NumericsError::Shape(format!(
                "extents must be positive, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NumericsError::Shape(format!(
                "shape {shape:?} holds {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Builds a `rows x cols` matrix. Panics if the data length is wrong.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(vec![rows, cols], data).expect("matrix data length")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::matrix(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::matrix(rows, cols, vec![value; rows * cols])
    }

    pub fn scalar(value: f64) -> Self {
        Self::matrix(1, 1, vec![value])
    }

    /// A `1 x n` row vector.
    pub fn row_vector(values: Vec<f64>) -> Self {
        let n = values.len();
        Self::matrix(1, n, values)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::Shape("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    /// Row count of a matrix (leading extent otherwise).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a matrix (product of trailing extents otherwise).
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(NumericsError::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn require_matrix(&self, op: &str) -> Result<()> {
        if !self.is_matrix() {
            return Err(NumericsError::Shape(format!(
                "{op}: expected a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// Square attention mask whose entries are exactly `0` or [`NEG_INF`].
#[derive(Clone, Debug, PartialEq)]
pub struct MaskMatrix(Tensor);

impl MaskMatrix {
    pub fn new(t: Tensor) -> Result<Self> {
        t.require_matrix("mask")?;
        if t.rows() != t.cols() {
            return Err(NumericsError::Shape(format!(
                "mask must be square, got {:?}",
                t.shape()
            )));
        }
        if t.data().iter().any(|&v| v != 0.0 && v != NEG_INF) {
            return Err(NumericsError::Contract(
                "mask entries must be 0 or NEG_INF".into(),
            ));
        }
        Ok(Self(t))
    }

    /// Mask with `allowed(i, j)` giving the open (zero) cells.
    pub fn from_fn(n: usize, allowed: impl Fn(usize, usize) -> bool) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if !allowed(i, j) {
                    t.set(i, j, NEG_INF);
                }
            }
        }
        Self(t)
    }

    /// Mask with every cell open.
    pub fn open(n: usize) -> Self {
        Self(Tensor::zeros(n, n))
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }

    pub fn is_open(&self, i: usize, j: usize) -> bool {
        self.0.get(i, j) == 0.0
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Row-wise softmax of `logits + mask`, stabilized by max subtraction.
///
/// A row whose mask entries are all `<= NEG_INF` yields an all-zero row.
pub fn masked_softmax(logits: &Tensor, mask: &Tensor) -> Result<Tensor> {
    logits.require_matrix("masked_softmax")?;
    logits.same_shape(mask, "masked_softmax")?;
    let cols = logits.cols();
    let mut out = vec![0.0; logits.numel()];
    for (r, dst) in out.chunks_mut(cols).enumerate() {
        softmax_row_into(logits.row(r), mask.row(r), dst);
    }
    Ok(Tensor::matrix(logits.rows(), cols, out))
}

pub(crate) fn softmax_row_into(logits: &[f64], mask: &[f64], dst: &mut [f64]) {
    if mask.iter().all(|&m| m <= NEG_INF) {
        dst.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let max = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| l + m)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for ((d, l), m) in dst.iter_mut().zip(logits).zip(mask) {
        *d = (l + m - max).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

/// `out[m x n] += a[m x k] * b[k x n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[m x k] += g[m x n] * b[k x n]^T`
pub(crate) fn matmul_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let dot: f64 = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            out[i * k + p] += dot;
        }
    }
}

/// `out[k x n] += a[m x k]^T * g[m x n]`
pub(crate) fn matmul_at_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, gv) in out_row.iter_mut().zip(g_row) {
                *o += aip * gv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let z = Tensor::row_vector(vec![0.0, 0.0]);
        let open = Tensor::row_vector(vec![0.0, 0.0]);
        assert_eq!(masked_softmax(&z, &open).unwrap().data(), &[0.5, 0.5]);

        let half = Tensor::row_vector(vec![0.0, NEG_INF]);
        assert_eq!(masked_softmax(&z, &half).unwrap().data(), &[1.0, 0.0]);

        let l = Tensor::row_vector(vec![1.0, 2.0]);
        let closed = Tensor::row_vector(vec![NEG_INF, NEG_INF]);
        assert_eq!(masked_softmax(&l, &closed).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_shape_mismatch() {
        let l = Tensor::row_vector(vec![1.0, 2.0]);
        let m = Tensor::row_vector(vec![0.0, 0.0, 0.0]);
        assert!(matches!(
            masked_softmax(&l, &m),
            Err(NumericsError::Shape(_))
        ));
    }

    #[test]
    fn mask_rejects_other_values() {
        assert!(MaskMatrix::new(Tensor::matrix(1, 1, vec![-1.0])).is_err());
        assert!(MaskMatrix::new(Tensor::matrix(1, 2, vec![0.0, 0.0])).is_err());
        assert!(MaskMatrix::new(Tensor::matrix(1, 1, vec![NEG_INF])).is_ok());
    }

    #[test]
    fn matmul_kernels_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        let mut c = [0.0; 4];
        matmul_acc(&a, &b, &mut c, 2, 3, 2);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // dA = dC B^T with dC = ones
        let mut da = [0.0; 6];
        matmul_bt_acc(&[1.0; 4], &b, &mut da, 2, 3, 2);
        assert_eq!(da, [1.0, 1.0, 2.0, 1.0, 1.0, 2.0]);
        let mut db = [0.0; 6];
        matmul_at_acc(&a, &[1.0; 4], &mut db, 2, 3, 2);
        assert_eq!(db, [5.0, 5.0, 7.0, 7.0, 9.0, 9.0]);
    }
}
