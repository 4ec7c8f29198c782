//! Dense row-major `f64` tensors and the numerical kernels built on them.
//!
//! Image-like data is channels-last (`H×W×C`, or `B×H×W×C` for batches).
//! Convolution is cross-correlation (no kernel flip) with stride 1 and
//! "same" zero padding; pooling is a 2×2 window with stride 2.
//!
//! All kernels are single-threaded with a fixed summation order, so equal
//! inputs give bit-identical outputs.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= PREVIEW {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " {:?}..", &self.data[..PREVIEW])
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor rank must be at least 1".into()));
    }
    if let Some(axis) = shape.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!(
            "extent of axis {axis} is zero in {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} elements but {} were given",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    /// Rank-1 tensor over `data`.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Self::new(&[data.len()], data)
    }

    /// Rank-2 tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("rows have unequal lengths".into()));
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Extent of the leading axis.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements per leading-axis entry.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.row_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.row_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::dimension("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Copies the given leading-axis entries into a new tensor.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Shape("cannot select zero rows".into()));
        }
        let n = self.row_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= self.rows() {
                return Err(Error::Shape(format!(
                    "row {i} out of range for {:?}",
                    self.shape
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Tensor { shape, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn squared_norm(&self) -> f64 {
        // independent lanes so the adds pipeline
        let mut acc = [0.0; 8];
        let chunks = self.data.chunks_exact(8);
        let tail: f64 = chunks.remainder().iter().map(|v| v * v).sum();
        for c in chunks {
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v * v;
            }
        }
        acc.iter().sum::<f64>() + tail
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::dimension("max_abs_diff", &self.shape, &other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major slices, where `op(a)`
/// is `m×k` and `op(b)` is `k×n`. With `trans_a` the slice `a` holds the
/// `k×m` matrix; likewise for `trans_b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above pin every slice to the extent implied by its
    // strides, so all reads and writes stay in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of `a[m×k]` and `b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::dimension("matmul", &a.shape, &b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, 1.0, &a.data, false, &b.data, false, 0.0, &mut out);
    Tensor::new(&[m, n], out)
}

/// Unfolds an `h×w×c` image into a `(h·w)×(kh·kw·c)` patch matrix with zero
/// padding so that each row is the receptive field of one output pixel.
/// Column order is `(dy, dx, channel)`, matching the `kh×kw×Cin×Cout` kernel
/// layout viewed as a `(kh·kw·Cin)×Cout` matrix.
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col(
    x: &[f64],
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    col: &mut [f64],
) {
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let kcols = kh * kw * c;
    debug_assert_eq!(col.len(), h * w * kcols);
    for oy in 0..h {
        for ox in 0..w {
            let row = &mut col[(oy * w + ox) * kcols..(oy * w + ox + 1) * kcols];
            for dy in 0..kh {
                let iy = oy + dy;
                let dst = &mut row[dy * kw * c..(dy + 1) * kw * c];
                if iy < ph || iy - ph >= h {
                    dst.fill(0.0);
                    continue;
                }
                let iy = iy - ph;
                // Contiguous run of valid columns for this kernel row.
                let dx_lo = pw.saturating_sub(ox);
                let dx_hi = (w + pw - ox).min(kw);
                dst[..dx_lo * c].fill(0.0);
                if dx_hi > dx_lo {
                    let ix_lo = ox + dx_lo - pw;
                    let src = &x[(iy * w + ix_lo) * c..(iy * w + ix_lo + dx_hi - dx_lo) * c];
                    dst[dx_lo * c..dx_hi * c].copy_from_slice(src);
                }
                dst[dx_hi.max(dx_lo) * c..].fill(0.0);
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch-matrix rows back onto the image,
/// accumulating into `x`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im_add(
    col: &[f64],
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    x: &mut [f64],
) {
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let kcols = kh * kw * c;
    for oy in 0..h {
        for ox in 0..w {
            let row = &col[(oy * w + ox) * kcols..(oy * w + ox + 1) * kcols];
            for dy in 0..kh {
                let iy = oy + dy;
                if iy < ph || iy - ph >= h {
                    continue;
                }
                let iy = iy - ph;
                let dx_lo = pw.saturating_sub(ox);
                let dx_hi = (w + pw - ox).min(kw);
                if dx_hi <= dx_lo {
                    continue;
                }
                let ix_lo = ox + dx_lo - pw;
                let dst = &mut x[(iy * w + ix_lo) * c..(iy * w + ix_lo + dx_hi - dx_lo) * c];
                let src = &row[(dy * kw + dx_lo) * c..(dy * kw + dx_hi) * c];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }
}

/// Validates a `kh×kw×Cin×Cout` kernel against an input channel count and
/// returns `(kh, kw, cout)`.
pub(crate) fn kernel_dims(kernels: &Tensor, cin: usize) -> Result<(usize, usize, usize)> {
    if kernels.rank() != 4 || kernels.shape[2] != cin {
        return Err(Error::dimension("conv2d", &[cin], &kernels.shape));
    }
    let (kh, kw) = (kernels.shape[0], kernels.shape[1]);
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::UnsupportedKernel { kh, kw });
    }
    Ok((kh, kw, kernels.shape[3]))
}

/// Same-padded stride-1 cross-correlation of an `H×W×Cin` input with
/// `kh×kw×Cin×Cout` kernels plus a per-output-channel bias.
pub fn conv2d_same(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::Shape(format!(
            "conv2d_same expects H×W×C input, got {:?}",
            input.shape
        )));
    }
    let (h, w, cin) = (input.shape[0], input.shape[1], input.shape[2]);
    let (kh, kw, cout) = kernel_dims(kernels, cin)?;
    if bias.shape != [cout] {
        return Err(Error::dimension("conv2d bias", &[cout], &bias.shape));
    }
    let kcols = kh * kw * cin;
    let mut col = vec![0.0; h * w * kcols];
    im2col(&input.data, h, w, cin, kh, kw, &mut col);
    let mut out = Vec::with_capacity(h * w * cout);
    for _ in 0..h * w {
        out.extend_from_slice(&bias.data);
    }
    gemm(h * w, kcols, cout, 1.0, &col, false, &kernels.data, false, 1.0, &mut out);
    Tensor::new(&[h, w, cout], out)
}

pub(crate) fn avg_pool2d_into(x: &[f64], h: usize, w: usize, c: usize, out: &mut [f64]) {
    let (oh, ow) = (h / 2, w / 2);
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
            let p00 = ((2 * oy) * w + 2 * ox) * c;
            let p01 = p00 + c;
            let p10 = p00 + w * c;
            let p11 = p10 + c;
            for ch in 0..c {
                o[ch] = (x[p00 + ch] + x[p01 + ch] + x[p10 + ch] + x[p11 + ch]) * 0.25;
            }
        }
    }
}

pub(crate) fn avg_pool2d_backward_into(
    grad_out: &[f64],
    h: usize,
    w: usize,
    c: usize,
    grad_in: &mut [f64],
) {
    let ow = w / 2;
    for iy in 0..h {
        for ix in 0..w {
            let g = &grad_out[((iy / 2) * ow + ix / 2) * c..((iy / 2) * ow + ix / 2 + 1) * c];
            let d = &mut grad_in[(iy * w + ix) * c..(iy * w + ix + 1) * c];
            for (d, g) in d.iter_mut().zip(g) {
                *d = g * 0.25;
            }
        }
    }
}

/// 2×2 average pooling with stride 2 on an `H×W×C` tensor.
pub fn avg_pool2d(input: &Tensor) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::Shape(format!(
            "avg_pool2d expects H×W×C input, got {:?}",
            input.shape
        )));
    }
    let (h, w, c) = (input.shape[0], input.shape[1], input.shape[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "avg_pool2d needs even spatial extents, got {h}×{w}"
        )));
    }
    let mut out = vec![0.0; (h / 2) * (w / 2) * c];
    avg_pool2d_into(&input.data, h, w, c, &mut out);
    Tensor::new(&[h / 2, w / 2, c], out)
}

pub(crate) fn global_avg_pool_into(x: &[f64], positions: usize, c: usize, out: &mut [f64]) {
    out.fill(0.0);
    for p in 0..positions {
        for (o, v) in out.iter_mut().zip(&x[p * c..(p + 1) * c]) {
            *o += v;
        }
    }
    let inv = 1.0 / positions as f64;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

/// Per-channel mean over all spatial positions of an `H×W×C` tensor.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    if input.rank() != 3 {
        return Err(Error::Shape(format!(
            "global_avg_pool expects H×W×C input, got {:?}",
            input.shape
        )));
    }
    let c = input.shape[2];
    let mut out = vec![0.0; c];
    global_avg_pool_into(&input.data, input.shape[0] * input.shape[1], c, &mut out);
    Tensor::new(&[c], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn shape_invariant_enforced() {
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(&[0, 2], vec![]).is_err());
        assert!(Tensor::new(&[], vec![]).is_err());
    }

    #[test]
    fn matmul_identity_and_dot() {
        let i2 = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matmul(&i2, &m).unwrap(), m);
        let r = matmul(&t(&[1, 2], &[1.0, 2.0]), &t(&[2, 1], &[3.0, 4.0])).unwrap();
        assert_eq!(r.data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Tensor::zeros(&[2, 3]).unwrap(), &Tensor::zeros(&[2, 3]).unwrap())
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn gemm_transposes() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let bt = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let expect = [4.0, 5.0, 10.0, 11.0];
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = [0.0; 4];
                gemm(2, 3, 2, 1.0, aa, ta, bb, tb, 0.0, &mut c);
                assert_eq!(c, expect);
            }
        }
    }

    #[test]
    fn conv_zero_kernel_and_unit_kernel() {
        let x = Tensor::new(&[4, 4, 1], (0..16).map(f64::from).collect()).unwrap();
        let zero = conv2d_same(
            &x,
            &Tensor::zeros(&[3, 3, 1, 1]).unwrap(),
            &Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        assert_eq!(zero.shape(), &[4, 4, 1]);

        let ident = conv2d_same(
            &x,
            &Tensor::full(&[1, 1, 1, 1], 1.0).unwrap(),
            &Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        assert_eq!(ident, x);
    }

    #[test]
    fn conv_rejects_even_kernel() {
        let x = Tensor::zeros(&[4, 4, 1]).unwrap();
        let err = conv2d_same(
            &x,
            &Tensor::zeros(&[2, 3, 1, 1]).unwrap(),
            &Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnsupportedKernel { kh: 2, kw: 3 }));
    }

    #[test]
    fn avg_pool_examples() {
        let x = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(avg_pool2d(&x).unwrap().data(), &[2.5]);
        let c = Tensor::full(&[6, 4, 3], 1.75).unwrap();
        let p = avg_pool2d(&c).unwrap();
        assert_eq!(p.shape(), &[3, 2, 3]);
        assert!(p.data().iter().all(|&v| v == 1.75));
        assert!(avg_pool2d(&Tensor::zeros(&[3, 4, 1]).unwrap()).is_err());
    }

    #[test]
    fn global_pool_examples() {
        let x = Tensor::zeros(&[16, 16, 256]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().shape(), &[256]);
        let c = Tensor::full(&[3, 5, 2], -0.5).unwrap();
        assert_eq!(global_avg_pool(&c).unwrap().data(), &[-0.5, -0.5]);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let (h, w, c, kh, kw) = (5, 4, 2, 3, 5);
        let x: Vec<f64> = (0..h * w * c).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..h * w * kh * kw * c)
            .map(|i| (i as f64 * 0.11).cos())
            .collect();
        let mut col = vec![0.0; y.len()];
        im2col(&x, h, w, c, kh, kw, &mut col);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(&y, h, w, c, kh, kw, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }
}
