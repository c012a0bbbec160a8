//! Cross-correlation kernels shared by `conv2d` and `conv_transpose2d`.
//!
//! A transposed convolution is the adjoint of a convolution with the same
//! weight, so both operators are assembled from the three kernels below
//! with the roles of input and output swapped.

use crate::error::{Error, Result};
use alloc::vec;

use crate::tensor::{Gemm, Scalar};

/// Geometry of a forward cross-correlation `x (N×Cin×H×W) -> y (N×Cout×OH×OW)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    /// Geometry for `conv2d(x, w)` with `x: N×Cin×H×W` and `w: Cout×Cin×kh×kw`.
    pub fn forward(x: &[usize], w: &[usize], stride: usize, padding: usize) -> Result<Self> {
        check_rank4("conv2d", x, w)?;
        if x[1] != w[1] {
            return Err(Error::shape(
                "conv2d",
                alloc::format!("input has {} channels but weight expects {} ({x:?} vs {w:?})", x[1], w[1]),
            ));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be >= 1"));
        }
        let (h, wd) = (x[2] + 2 * padding, x[3] + 2 * padding);
        if w[2] > h || w[3] > wd {
            return Err(Error::shape(
                "conv2d",
                alloc::format!("kernel {}x{} larger than padded input {h}x{wd}", w[2], w[3]),
            ));
        }
        Ok(ConvGeometry {
            batch: x[0],
            in_channels: x[1],
            height: x[2],
            width: x[3],
            out_channels: w[0],
            kernel_h: w[2],
            kernel_w: w[3],
            stride,
            padding,
            out_height: (h - w[2]) / stride + 1,
            out_width: (wd - w[3]) / stride + 1,
        })
    }

    /// Geometry of the forward correlation whose adjoint is
    /// `conv_transpose2d(y, w)` with `y: N×Cin_t×H×W` and `w: Cin_t×Cout_t×kh×kw`.
    /// In the returned geometry, `y` plays the role of the correlation output.
    pub fn transposed(y: &[usize], w: &[usize], stride: usize, padding: usize) -> Result<Self> {
        check_rank4("conv_transpose2d", y, w)?;
        if y[1] != w[0] {
            return Err(Error::shape(
                "conv_transpose2d",
                alloc::format!("input has {} channels but weight expects {} ({y:?} vs {w:?})", y[1], w[0]),
            ));
        }
        if stride == 0 {
            return Err(Error::invalid("conv_transpose2d stride must be >= 1"));
        }
        let full_h = (y[2] - 1) * stride + w[2];
        let full_w = (y[3] - 1) * stride + w[3];
        if full_h <= 2 * padding || full_w <= 2 * padding {
            return Err(Error::shape(
                "conv_transpose2d",
                alloc::format!("padding {padding} consumes the whole {full_h}x{full_w} output"),
            ));
        }
        Ok(ConvGeometry {
            batch: y[0],
            in_channels: w[1],
            height: full_h - 2 * padding,
            width: full_w - 2 * padding,
            out_channels: w[0],
            kernel_h: w[2],
            kernel_w: w[3],
            stride,
            padding,
            out_height: y[2],
            out_width: y[3],
        })
    }

    pub fn input_len(&self) -> usize {
        self.batch * self.in_channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.batch * self.out_channels * self.out_height * self.out_width
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Output rows `o` with `0 <= o*stride + k - padding < extent`.
    fn valid(&self, k: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        let (s, p, k) = (self.stride as isize, self.padding as isize, k as isize);
        let lo = if p > k { (p - k + s - 1) / s } else { 0 };
        let hi = (extent as isize - 1 + p - k).div_euclid(s) + 1;
        let hi = hi.clamp(0, out_extent as isize);
        (lo as usize, (hi as usize).max(lo as usize))
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        // f(ky, kx, oy0, oy1, ox0, ox1)
        for ky in 0..self.kernel_h {
            let (oy0, oy1) = self.valid(ky, self.height, self.out_height);
            for kx in 0..self.kernel_w {
                let (ox0, ox1) = self.valid(kx, self.width, self.out_width);
                f(ky, kx, oy0, oy1, ox0, ox1);
            }
        }
    }
}

fn check_rank4(op: &'static str, x: &[usize], w: &[usize]) -> Result<()> {
    if x.len() != 4 || w.len() != 4 {
        return Err(Error::shape(op, alloc::format!("expected rank-4 operands, got {x:?} and {w:?}")));
    }
    Ok(())
}

/// Unfolds one sample `Cin×H×W` into `(Cin·kh·kw)×(OH·OW)` patch columns.
fn im2col<T: Scalar>(g: &ConvGeometry, x: &[T], cols: &mut [T]) {
    let (ih, iw, ow) = (g.height, g.width, g.out_width);
    let plane = g.out_height * ow;
    let (s, p) = (g.stride, g.padding);
    cols.fill(T::zero());
    for ci in 0..g.in_channels {
        let xp = &x[ci * ih * iw..][..ih * iw];
        g.for_each_tap(|ky, kx, oy0, oy1, ox0, ox1| {
            let row = (ci * g.kernel_h + ky) * g.kernel_w + kx;
            let col = &mut cols[row * plane..][..plane];
            for oy in oy0..oy1 {
                let xr = &xp[(oy * s + ky - p) * iw..][..iw];
                let cr = &mut col[oy * ow..][..ow];
                for ox in ox0..ox1 {
                    cr[ox] = xr[ox * s + kx - p];
                }
            }
        });
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch columns back onto a sample.
fn col2im<T: Scalar>(g: &ConvGeometry, cols: &[T], x: &mut [T]) {
    let (ih, iw, ow) = (g.height, g.width, g.out_width);
    let plane = g.out_height * ow;
    let (s, p) = (g.stride, g.padding);
    for ci in 0..g.in_channels {
        let xp = &mut x[ci * ih * iw..][..ih * iw];
        g.for_each_tap(|ky, kx, oy0, oy1, ox0, ox1| {
            let row = (ci * g.kernel_h + ky) * g.kernel_w + kx;
            let col = &cols[row * plane..][..plane];
            for oy in oy0..oy1 {
                let xr = &mut xp[(oy * s + ky - p) * iw..][..iw];
                let cr = &col[oy * ow..][..ow];
                for ox in ox0..ox1 {
                    xr[ox * s + kx - p] += cr[ox];
                }
            }
        });
    }
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn out_plane(&self) -> usize {
        self.out_height * self.out_width
    }
}

/// `y += corr(x, w)`.
pub(crate) fn corr_forward<T: Scalar>(g: &ConvGeometry, x: &[T], w: &[T], y: &mut [T]) {
    let (pk, plane) = (g.patch_len(), g.out_plane());
    let in_len = g.in_channels * g.height * g.width;
    let mut cols = vec![T::zero(); pk * plane];
    for n in 0..g.batch {
        im2col(g, &x[n * in_len..][..in_len], &mut cols);
        let dims = Gemm { m: g.out_channels, k: pk, n: plane, a: (pk, 1), b: (plane, 1), c: (plane, 1) };
        T::gemm(dims, w, &cols, &mut y[n * g.out_channels * plane..][..g.out_channels * plane]);
    }
}

/// `dx += corr^T(dy, w)`: gradient of the correlation with respect to its input.
pub(crate) fn corr_input_grad<T: Scalar>(g: &ConvGeometry, dy: &[T], w: &[T], dx: &mut [T]) {
    let (pk, plane) = (g.patch_len(), g.out_plane());
    let in_len = g.in_channels * g.height * g.width;
    let mut cols = vec![T::zero(); pk * plane];
    for n in 0..g.batch {
        cols.fill(T::zero());
        // cols = wᵀ · dy_n
        let dims = Gemm { m: pk, k: g.out_channels, n: plane, a: (1, pk), b: (plane, 1), c: (plane, 1) };
        T::gemm(dims, w, &dy[n * g.out_channels * plane..][..g.out_channels * plane], &mut cols);
        col2im(g, &cols, &mut dx[n * in_len..][..in_len]);
    }
}

/// `dw += sum_n x ⋆ dy`: gradient of the correlation with respect to its weight.
pub(crate) fn corr_weight_grad<T: Scalar>(g: &ConvGeometry, x: &[T], dy: &[T], dw: &mut [T]) {
    let (pk, plane) = (g.patch_len(), g.out_plane());
    let in_len = g.in_channels * g.height * g.width;
    let mut cols = vec![T::zero(); pk * plane];
    for n in 0..g.batch {
        im2col(g, &x[n * in_len..][..in_len], &mut cols);
        // dw += dy_n · colsᵀ
        let dims = Gemm { m: g.out_channels, k: plane, n: pk, a: (plane, 1), b: (1, plane), c: (pk, 1) };
        T::gemm(dims, &dy[n * g.out_channels * plane..][..g.out_channels * plane], &cols, dw);
    }
}

/// Adds a per-channel bias to an `N×C×HW` buffer.
pub(crate) fn add_channel_bias<T: Scalar>(y: &mut [T], bias: &[T], batch: usize, plane: usize) {
    let c = bias.len();
    for n in 0..batch {
        for (ch, &b) in bias.iter().enumerate() {
            for v in &mut y[(n * c + ch) * plane..][..plane] {
                *v += b;
            }
        }
    }
}

/// Per-channel sum of an `N×C×HW` buffer, accumulated into `db`.
pub(crate) fn channel_sum<T: Scalar>(dy: &[T], db: &mut [T], batch: usize, plane: usize) {
    let c = db.len();
    for n in 0..batch {
        for (ch, acc) in db.iter_mut().enumerate() {
            *acc += dy[(n * c + ch) * plane..][..plane].iter().copied().sum::<T>();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_covers_padding() {
        let g = ConvGeometry::forward(&[1, 1, 4, 4], &[1, 1, 3, 3], 2, 1).unwrap();
        assert_eq!((g.out_height, g.out_width), (2, 2));
        // ky = 0 touches input row -1 at oy = 0, so the first valid row is 1.
        assert_eq!(g.valid(0, 4, 2), (1, 2));
        assert_eq!(g.valid(1, 4, 2), (0, 2));
        assert_eq!(g.valid(2, 4, 2), (0, 2));
    }

    #[test]
    fn transposed_size_formula() {
        let g = ConvGeometry::transposed(&[1, 1, 2, 2], &[1, 1, 2, 2], 2, 0).unwrap();
        assert_eq!((g.height, g.width), (4, 4));
        let g = ConvGeometry::transposed(&[1, 3, 4, 4], &[3, 5, 4, 4], 2, 1).unwrap();
        assert_eq!((g.in_channels, g.height, g.width), (5, 8, 8));
    }
}
