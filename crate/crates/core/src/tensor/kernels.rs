//! Raw forward/backward kernels. Shapes are validated by the callers in
//! `graph.rs`; these functions only compute.

use rayon::prelude::*;

use super::{Real, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub input: Shape,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        let oh = (self.input.h + 2 * self.pad - self.k) / self.stride + 1;
        let ow = (self.input.w + 2 * self.pad - self.k) / self.stride + 1;
        (oh, ow)
    }

    pub fn output(&self) -> Shape {
        let (oh, ow) = self.out_hw();
        Shape::new(self.input.n, self.out_c, oh, ow)
    }

    fn cin_g(&self) -> usize {
        self.input.c / self.groups
    }

    fn cout_g(&self) -> usize {
        self.out_c / self.groups
    }

    /// Rows of the unfolded patch matrix for one group.
    fn patch_len(&self) -> usize {
        self.cin_g() * self.k * self.k
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds the channels of one group of one sample into a
/// `(cin_g*k*k) x (oh*ow)` matrix.
fn im2col<T: Real>(x: &[T], geom: &ConvGeom, cols: &mut [T]) {
    let (oh, ow) = geom.out_hw();
    let (h, w, k, s) = (geom.input.h, geom.input.w, geom.k, geom.stride);
    let pad = geom.pad as isize;
    let plane = h * w;
    let opix = oh * ow;
    for ci in 0..geom.cin_g() {
        let src = &x[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * opix..(row + 1) * opix];
                for oy in 0..oh {
                    let iy = (oy * s) as isize - pad + ky as isize;
                    let drow = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                    let dx = kx as isize - pad;
                    if s == 1 {
                        // valid ox range: 0 <= ox + dx < w
                        let lo = (-dx).clamp(0, ow as isize) as usize;
                        let hi = (w as isize - dx).clamp(0, ow as isize) as usize;
                        drow[..lo].fill(T::zero());
                        if hi > lo {
                            let a = (lo as isize + dx) as usize;
                            drow[lo..hi].copy_from_slice(&srow[a..a + (hi - lo)]);
                        }
                        drow[hi.max(lo)..].fill(T::zero());
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * s) as isize + dx;
                            *d = if ix < 0 || ix >= w as isize {
                                T::zero()
                            } else {
                                srow[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds patch rows back into the image.
fn col2im<T: Real>(cols: &[T], geom: &ConvGeom, dx: &mut [T]) {
    let (oh, ow) = geom.out_hw();
    let (h, w, k, s) = (geom.input.h, geom.input.w, geom.k, geom.stride);
    let pad = geom.pad as isize;
    let plane = h * w;
    let opix = oh * ow;
    for ci in 0..geom.cin_g() {
        let dst = &mut dx[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * opix..(row + 1) * opix];
                for oy in 0..oh {
                    let iy = (oy * s) as isize - pad + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    let srow = &src[oy * ow..(oy + 1) * ow];
                    let off = kx as isize - pad;
                    for (ox, &v) in srow.iter().enumerate() {
                        let ix = (ox * s) as isize + off;
                        if ix >= 0 && ix < w as isize {
                            drow[ix as usize] = drow[ix as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(x: &[T], weight: &[T], geom: &ConvGeom) -> Vec<T> {
    let out = geom.output();
    let in_sample = geom.input.c * geom.input.plane();
    let out_sample = out.c * out.plane();
    let mut y = vec![T::zero(); out.numel()];
    if out.numel() == 0 {
        return y;
    }
    let (cin_g, cout_g, plen) = (geom.cin_g(), geom.cout_g(), geom.patch_len());
    let opix = out.plane();
    let ipix = geom.input.plane();
    y.par_chunks_mut(out_sample)
        .enumerate()
        .for_each(|(n, ys)| {
            let xs = &x[n * in_sample..(n + 1) * in_sample];
            let mut cols = if geom.is_pointwise() {
                Vec::new()
            } else {
                vec![T::zero(); plen * opix]
            };
            for g in 0..geom.groups {
                let xg = &xs[g * cin_g * ipix..(g + 1) * cin_g * ipix];
                let wg = &weight[g * cout_g * plen..(g + 1) * cout_g * plen];
                let yg = &mut ys[g * cout_g * opix..(g + 1) * cout_g * opix];
                let b: &[T] = if geom.is_pointwise() {
                    xg
                } else {
                    im2col(xg, geom, &mut cols);
                    &cols
                };
                T::gemm(false, false, cout_g, opix, plen, wg, b, T::zero(), yg);
            }
        });
    y
}

/// Returns `(dx, dw)`; either is skipped when not requested.
///
/// Weight gradients are formed per sample and summed in sample order, so the
/// result does not depend on how many worker threads ran.
pub(crate) fn conv2d_backward<T: Real>(
    x: &[T],
    weight: &[T],
    dy: &[T],
    geom: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let out = geom.output();
    let in_sample = geom.input.c * geom.input.plane();
    let out_sample = out.c * out.plane();
    let (cin_g, cout_g, plen) = (geom.cin_g(), geom.cout_g(), geom.patch_len());
    let opix = out.plane();
    let ipix = geom.input.plane();
    let pointwise = geom.is_pointwise();

    let per_sample: Vec<(Vec<T>, Vec<T>)> = (0..geom.input.n)
        .into_par_iter()
        .map(|n| {
            let xs = &x[n * in_sample..(n + 1) * in_sample];
            let dys = &dy[n * out_sample..(n + 1) * out_sample];
            let mut dx = if need_dx {
                vec![T::zero(); in_sample]
            } else {
                Vec::new()
            };
            let mut dw = if need_dw {
                vec![T::zero(); weight.len()]
            } else {
                Vec::new()
            };
            let mut cols = if pointwise {
                Vec::new()
            } else {
                vec![T::zero(); plen * opix]
            };
            for g in 0..geom.groups {
                let wg = &weight[g * cout_g * plen..(g + 1) * cout_g * plen];
                let dyg = &dys[g * cout_g * opix..(g + 1) * cout_g * opix];
                if need_dw {
                    let xg = &xs[g * cin_g * ipix..(g + 1) * cin_g * ipix];
                    let b: &[T] = if pointwise {
                        xg
                    } else {
                        im2col(xg, geom, &mut cols);
                        &cols
                    };
                    let dwg = &mut dw[g * cout_g * plen..(g + 1) * cout_g * plen];
                    T::gemm(false, true, cout_g, plen, opix, dyg, b, T::zero(), dwg);
                }
                if need_dx {
                    let dxg = &mut dx[g * cin_g * ipix..(g + 1) * cin_g * ipix];
                    if pointwise {
                        T::gemm(true, false, plen, opix, cout_g, wg, dyg, T::zero(), dxg);
                    } else {
                        T::gemm(
                            true,
                            false,
                            plen,
                            opix,
                            cout_g,
                            wg,
                            dyg,
                            T::zero(),
                            &mut cols,
                        );
                        col2im(&cols, geom, dxg);
                    }
                }
            }
            (dx, dw)
        })
        .collect();

    let dx = need_dx.then(|| {
        let mut dx = Vec::with_capacity(x.len());
        for (d, _) in &per_sample {
            dx.extend_from_slice(d);
        }
        dx
    });
    let dw = need_dw.then(|| {
        let mut acc = vec![T::zero(); weight.len()];
        for (_, d) in &per_sample {
            acc.iter_mut().zip(d).for_each(|(a, b)| *a = *a + *b);
        }
        acc
    });
    (dx, dw)
}

/// 2x2 max-pool; also returns the flat input index each output came from.
/// Ties resolve to the first element in row-major order.
pub(crate) fn maxpool2_forward<T: Real>(x: &[T], shape: Shape) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (shape.h / 2, shape.w / 2);
    let planes = shape.n * shape.c;
    let mut y = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * shape.plane();
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * shape.w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * shape.w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                y.push(x[best]);
                arg.push(best);
            }
        }
    }
    (y, arg)
}

pub(crate) fn maxpool2_backward<T: Real>(dy: &[T], arg: &[usize], in_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); in_len];
    for (&g, &i) in dy.iter().zip(arg) {
        dx[i] = dx[i] + g;
    }
    dx
}

pub(crate) fn upsample2_forward<T: Real>(x: &[T], shape: Shape) -> Vec<T> {
    let (h, w) = (shape.h, shape.w);
    let ow = 2 * w;
    let planes = shape.n * shape.c;
    let mut y = vec![T::zero(); planes * 4 * h * w];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut y[p * 4 * h * w..(p + 1) * 4 * h * w];
        for iy in 0..h {
            for ix in 0..w {
                let v = src[iy * w + ix];
                let o = 2 * iy * ow + 2 * ix;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + ow] = v;
                dst[o + ow + 1] = v;
            }
        }
    }
    y
}

/// `shape` is the (small) input shape of the forward pass.
pub(crate) fn upsample2_backward<T: Real>(dy: &[T], shape: Shape) -> Vec<T> {
    let (h, w) = (shape.h, shape.w);
    let ow = 2 * w;
    let planes = shape.n * shape.c;
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let src = &dy[p * 4 * h * w..(p + 1) * 4 * h * w];
        for iy in 0..h {
            for ix in 0..w {
                let o = 2 * iy * ow + 2 * ix;
                dx[p * h * w + iy * w + ix] = src[o] + src[o + 1] + src[o + ow] + src[o + ow + 1];
            }
        }
    }
    dx
}
