//! Thin wrappers over `matrixmultiply` for row-major f64 matrices.

/// Row-major view: `data[offset + r * row_stride + c]`.
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
}

impl<'a> View<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert!(data.len() >= rows * cols);
        View { data, rows, cols, row_stride: cols }
    }

    /// Columns `start..start + cols` of a wider row-major matrix.
    pub fn columns(data: &'a [f64], rows: usize, total_cols: usize, start: usize, cols: usize) -> Self {
        debug_assert!(start + cols <= total_cols);
        View { data: &data[start..], rows, cols, row_stride: total_cols }
    }
}

fn check_fits(v: &View, transposed: bool) {
    if v.rows == 0 || v.cols == 0 {
        return;
    }
    let _ = transposed;
    assert!((v.rows - 1) * v.row_stride + v.cols <= v.data.len(), "matrix view out of bounds");
}

/// `c = beta * c + op(a) * op(b)` where `op` optionally transposes.
///
/// `c` is row-major with `ldc` elements per row.
pub fn gemm(a: View, trans_a: bool, b: View, trans_b: bool, c: &mut [f64], ldc: usize, beta: f64) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "inner dimensions differ");
    check_fits(&a, trans_a);
    check_fits(&b, trans_b);
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * ldc + n <= c.len(), "output out of bounds");
    if k == 0 {
        for r in 0..m {
            for v in &mut c[r * ldc..r * ldc + n] {
                *v *= beta;
            }
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, a.row_stride) } else { (a.row_stride, 1) };
    let (rsb, csb) = if trans_b { (1, b.row_stride) } else { (b.row_stride, 1) };
    // SAFETY: bounds of all three operands were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// Add `bias` to every row of the `rows x bias.len()` matrix `m`.
pub fn add_row_bias(m: &mut [f64], bias: &[f64]) {
    for row in m.chunks_exact_mut(bias.len()) {
        for (x, b) in row.iter_mut().zip(bias) {
            *x += b;
        }
    }
}

/// Accumulate column sums of a `rows x out.len()` matrix into `out`.
pub fn add_column_sums(m: &[f64], out: &mut [f64]) {
    for row in m.chunks_exact(out.len()) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
}

/// Numerically stable in-place log-softmax of one row; returns nothing, the
/// row holds log-probabilities afterwards.
pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
    let log_z = max + sum.ln();
    for x in row.iter_mut() {
        *x -= log_z;
    }
}

/// In-place softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
