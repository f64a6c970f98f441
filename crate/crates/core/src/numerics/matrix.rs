use crate::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Whether an operand of [`DenseMatrix::gemm`] is used as stored or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{} values for {rows}x{cols}", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Stack equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!("row of length {cols}"), r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(v: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a 0-column matrix has no meaningful rows
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Sum of each column, as a vector of length `cols`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    fn op_shape(&self, t: Transpose) -> (usize, usize) {
        match t {
            Transpose::No => (self.rows, self.cols),
            Transpose::Yes => (self.cols, self.rows),
        }
    }

    /// `self ← alpha · op(a) · op(b) + beta · self`.
    ///
    /// When `beta == 0` the previous contents of `self` are ignored entirely.
    pub fn gemm(
        &mut self,
        alpha: f64,
        a: &DenseMatrix,
        ta: Transpose,
        b: &DenseMatrix,
        tb: Transpose,
        beta: f64,
    ) -> Result<()> {
        let (m, k) = a.op_shape(ta);
        let (k2, n) = b.op_shape(tb);
        if k != k2 || self.rows != m || self.cols != n {
            return Err(Error::shape(
                format!("({m}x{k})·({k}x{n}) into {m}x{n}"),
                format!("({m}x{k})·({k2}x{n}) into {}x{}", self.rows, self.cols),
            ));
        }
        if m == 0 || n == 0 {
            return Ok(());
        }
        if k == 0 {
            if beta == 0.0 {
                self.fill(0.0);
            } else {
                self.data.iter_mut().for_each(|x| *x *= beta);
            }
            return Ok(());
        }
        let strides = |mat: &DenseMatrix, t: Transpose| -> (isize, isize) {
            match t {
                Transpose::No => (mat.cols as isize, 1),
                Transpose::Yes => (1, mat.cols as isize),
            }
        };
        let (rsa, csa) = strides(a, ta);
        let (rsb, csb) = strides(b, tb);
        // SAFETY: dimensions and strides were validated against the backing
        // buffers above, and `self` does not alias `a` or `b` (it is borrowed
        // mutably while they are borrowed shared).
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.data.as_ptr(),
                rsa,
                csa,
                b.data.as_ptr(),
                rsb,
                csb,
                beta,
                self.data.as_mut_ptr(),
                self.cols as isize,
                1,
            );
        }
        Ok(())
    }

    /// `op(a) · op(b)` as a fresh matrix.
    pub fn product(a: &DenseMatrix, ta: Transpose, b: &DenseMatrix, tb: Transpose) -> Result<Self> {
        let (m, _) = a.op_shape(ta);
        let (_, n) = b.op_shape(tb);
        let mut out = DenseMatrix::zeros(m, n);
        out.gemm(1.0, a, ta, b, tb, 0.0)?;
        Ok(out)
    }
}
