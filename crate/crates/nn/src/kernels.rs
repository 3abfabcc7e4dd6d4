//! Raw per-batch kernels. Every function here is stateless; the autodiff
//! graph calls them for both passes.

use crate::par;
use crate::tensor::Tensor;

/// Static geometry of one 2-d convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Rows of the unfolded patch matrix.
    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

/// C = A·B (+ C when `accumulate`). `a_t`/`b_t` read A/B transposed.
/// Shapes after transposition: A is m×k, B is k×n, C is m×n, all row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_t: bool,
    b: &[f32],
    b_t: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices are at least as long as the strided views request.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f32], g: &ConvGeom, col: &mut [f32]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let k = g.kernel;
    let mut row = 0;
    for c in 0..g.in_channels {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.in_h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im(col: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let k = g.kernel;
    let mut row = 0;
    for c in 0..g.in_channels {
        let plane = &mut dx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let src = &col[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            line[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward convolution. `weight` is `[out, in, k, k]` flattened, `bias` is `[out]`.
pub fn conv2d_forward(x: &Tensor, weight: &[f32], bias: &[f32], g: &ConvGeom) -> Tensor {
    let n = x.batch();
    let (oh, ow) = (g.out_h(), g.out_w());
    let hw = oh * ow;
    let kk = g.patch_len();
    let mut out = Tensor::zeros([n, g.out_channels, oh, ow]);
    par::for_each_chunk_mut(out.data_mut(), g.out_channels * hw, |i, y| {
        let xi = x.item(i);
        if g.is_pointwise() {
            gemm(g.out_channels, kk, hw, weight, false, xi, false, y, false);
        } else {
            let mut col = vec![0.0f32; kk * hw];
            im2col(xi, g, &mut col);
            gemm(g.out_channels, kk, hw, weight, false, &col, false, y, false);
        }
        for (c, b) in bias.iter().enumerate() {
            y[c * hw..(c + 1) * hw].iter_mut().for_each(|v| *v += b);
        }
    });
    out
}

/// Gradients of one convolution call.
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

pub fn conv2d_backward(
    x: &Tensor,
    weight: &[f32],
    dy: &Tensor,
    g: &ConvGeom,
    need_input: bool,
) -> ConvGrads {
    let n = x.batch();
    let hw = g.out_h() * g.out_w();
    let kk = g.patch_len();
    let per_item = par::map_indexed(n, |i| {
        let xi = x.item(i);
        let dyi = dy.item(i);
        let mut dw = vec![0.0f32; g.out_channels * kk];
        let col_owned;
        let col: &[f32] = if g.is_pointwise() {
            xi
        } else {
            let mut c = vec![0.0f32; kk * hw];
            im2col(xi, g, &mut c);
            col_owned = c;
            &col_owned
        };
        gemm(g.out_channels, hw, kk, dyi, false, col, true, &mut dw, false);
        let db: Vec<f32> = (0..g.out_channels)
            .map(|c| dyi[c * hw..(c + 1) * hw].iter().sum())
            .collect();
        let dx = need_input.then(|| {
            let mut dx = vec![0.0f32; g.in_channels * g.in_h * g.in_w];
            if g.is_pointwise() {
                gemm(kk, g.out_channels, hw, weight, true, dyi, false, &mut dx, false);
            } else {
                let mut dcol = vec![0.0f32; kk * hw];
                gemm(kk, g.out_channels, hw, weight, true, dyi, false, &mut dcol, false);
                col2im(&dcol, g, &mut dx);
            }
            dx
        });
        (dw, db, dx)
    });

    let mut weight_grad = vec![0.0f32; g.out_channels * kk];
    let mut bias_grad = vec![0.0f32; g.out_channels];
    let mut input = need_input.then(|| Tensor::zeros(x.shape()));
    for (i, (dw, db, dx)) in per_item.into_iter().enumerate() {
        weight_grad.iter_mut().zip(&dw).for_each(|(a, b)| *a += b);
        bias_grad.iter_mut().zip(&db).for_each(|(a, b)| *a += b);
        if let (Some(t), Some(dx)) = (input.as_mut(), dx) {
            t.item_mut(i).copy_from_slice(&dx);
        }
    }
    ConvGrads {
        input,
        weight: weight_grad,
        bias: bias_grad,
    }
}

/// Upsampling interpolation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Nearest,
    /// Half-pixel-centred bilinear (`align_corners = false`).
    Bilinear,
}

/// Source taps `(index, weight)` for one output coordinate.
fn taps(out: usize, factor: usize, in_len: usize, interp: Interp) -> [(usize, f32); 2] {
    match interp {
        Interp::Nearest => [(out / factor, 1.0), (0, 0.0)],
        Interp::Bilinear => {
            let src = ((out as f32 + 0.5) / factor as f32 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let t = src - i0 as f32;
            [(i0, 1.0 - t), (i1, t)]
        }
    }
}

pub fn upsample_forward(x: &Tensor, factor: usize, interp: Interp) -> Tensor {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h * factor, w * factor);
    let ty: Vec<_> = (0..oh).map(|o| taps(o, factor, h, interp)).collect();
    let tx: Vec<_> = (0..ow).map(|o| taps(o, factor, w, interp)).collect();
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let src = x.data();
    par::for_each_chunk_mut(out.data_mut(), oh * ow, |plane, dst| {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        for (oy, ry) in ty.iter().enumerate() {
            for (ox, rx) in tx.iter().enumerate() {
                let mut acc = 0.0;
                for &(iy, wy) in ry {
                    for &(ix, wx) in rx {
                        acc += wy * wx * s[iy * w + ix];
                    }
                }
                dst[oy * ow + ox] = acc;
            }
        }
    });
    out
}

pub fn upsample_backward(dy: &Tensor, factor: usize, interp: Interp) -> Tensor {
    let [n, c, oh, ow] = dy.shape();
    let (h, w) = (oh / factor, ow / factor);
    let ty: Vec<_> = (0..oh).map(|o| taps(o, factor, h, interp)).collect();
    let tx: Vec<_> = (0..ow).map(|o| taps(o, factor, w, interp)).collect();
    let mut dx = Tensor::zeros([n, c, h, w]);
    let src = dy.data();
    par::for_each_chunk_mut(dx.data_mut(), h * w, |plane, dst| {
        let g = &src[plane * oh * ow..(plane + 1) * oh * ow];
        for (oy, ry) in ty.iter().enumerate() {
            for (ox, rx) in tx.iter().enumerate() {
                let v = g[oy * ow + ox];
                for &(iy, wy) in ry {
                    for &(ix, wx) in rx {
                        dst[iy * w + ix] += wy * wx * v;
                    }
                }
            }
        }
    });
    dx
}

/// Channel-wise concatenation of tensors sharing batch and spatial size.
pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
    let [n, _, h, w] = parts[0].shape();
    let total: usize = parts.iter().map(|p| p.channels()).sum();
    let mut out = Tensor::zeros([n, total, h, w]);
    for i in 0..n {
        let dst = out.item_mut(i);
        let mut offset = 0;
        for p in parts {
            let src = p.item(i);
            dst[offset..offset + src.len()].copy_from_slice(src);
            offset += src.len();
        }
    }
    out
}

/// Splits a concatenation gradient back into per-part gradients.
pub fn split_channels(dy: &Tensor, channels: &[usize]) -> Vec<Tensor> {
    let [n, _, h, w] = dy.shape();
    let mut outs: Vec<Tensor> = channels.iter().map(|&c| Tensor::zeros([n, c, h, w])).collect();
    for i in 0..n {
        let src = dy.item(i);
        let mut offset = 0;
        for o in outs.iter_mut() {
            let dst = o.item_mut(i);
            dst.copy_from_slice(&src[offset..offset + dst.len()]);
            offset += dst.len();
        }
    }
    outs
}
