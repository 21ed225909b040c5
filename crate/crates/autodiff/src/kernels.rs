//! Numeric kernels behind the graph operators. Everything works on flat
//! row-major slices; shape validation happens in the graph layer.

/// Output geometry of a same-padded 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], k: &[usize], stride: usize) -> Self {
        let (n, c, h, w) = (x[0], x[1], x[2], x[3]);
        let (f, kh, kw) = (k[0], k[2], k[3]);
        let oh = h.div_ceil(stride);
        let ow = w.div_ceil(stride);
        // Total padding needed so that ceil(H / stride) windows fit; the
        // extra row/column (if odd) goes to the bottom/right.
        let pad_h = ((oh - 1) * stride + kh).saturating_sub(h);
        let pad_w = ((ow - 1) * stride + kw).saturating_sub(w);
        Self {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            stride,
            oh,
            ow,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        }
    }

    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// Source coordinate for output index `o` and kernel offset `k`, or
    /// `None` when it falls into the zero padding.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, limit: usize) -> Option<usize> {
        let pos = (o * stride + k).checked_sub(pad)?;
        (pos < limit).then_some(pos)
    }

    /// Output indices `lo..hi` whose source position for kernel offset `k`
    /// lies inside the image.
    #[inline]
    fn valid(k: usize, stride: usize, pad: usize, limit: usize, out: usize) -> (usize, usize) {
        let lo = pad.saturating_sub(k).div_ceil(stride);
        let hi = (limit + pad).saturating_sub(k).div_ceil(stride).min(out);
        (lo.min(hi), hi)
    }
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let plane = g.out_plane();
    for ci in 0..g.c {
        let chan = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    match ConvGeom::src(oy, ky, g.stride, g.pad_top, g.h) {
                        None => line.fill(0.0),
                        Some(iy) => {
                            let (lo, hi) = ConvGeom::valid(kx, g.stride, g.pad_left, g.w, g.ow);
                            line[..lo].fill(0.0);
                            line[hi..].fill(0.0);
                            let src = &chan[iy * g.w..(iy + 1) * g.w];
                            let first = lo * g.stride + kx - g.pad_left;
                            if g.stride == 1 {
                                line[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                            } else {
                                for (v, ix) in line[lo..hi].iter_mut().zip((first..).step_by(g.stride)) {
                                    *v = src[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], g: &ConvGeom, x: &mut [f64]) {
    let plane = g.out_plane();
    for ci in 0..g.c {
        let chan = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.pad_top, g.h) else {
                        continue;
                    };
                    let (lo, hi) = ConvGeom::valid(kx, g.stride, g.pad_left, g.w, g.ow);
                    if lo == hi {
                        continue;
                    }
                    let first = lo * g.stride + kx - g.pad_left;
                    let dst = &mut chan[iy * g.w..(iy + 1) * g.w];
                    let line = &src[oy * g.ow + lo..oy * g.ow + hi];
                    for (v, ix) in line.iter().zip((first..).step_by(g.stride)) {
                        dst[ix] += v;
                    }
                }
            }
        }
    }
}

/// Strided matrix operand: (slice, row stride, column stride).
type Operand<'a> = (&'a [f64], isize, isize);

/// `c = a · b + beta · c` for an `m×k` by `k×n` product with a row-major
/// `c`. Bounds are checked before handing raw pointers to the kernel.
fn gemm(m: usize, k: usize, n: usize, a: Operand<'_>, b: Operand<'_>, beta: f64, c: &mut [f64]) {
    let last = |rows: usize, cols: usize, rs: isize, cs: isize| {
        (rows as isize - 1) * rs + (cols as isize - 1) * cs
    };
    assert!(last(m, k, a.1, a.2) < a.0.len() as isize);
    assert!(last(k, n, b.1, b.2) < b.0.len() as isize);
    assert!(m * n <= c.len());
    // SAFETY: every index touched by the kernel is bounded by the checks
    // above, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
    let plane = g.out_plane();
    let patch = g.patch_len();
    let mut out = vec![0.0; g.n * g.f * plane];
    let mut cols = vec![0.0; patch * plane];
    for ni in 0..g.n {
        im2col(&x[ni * g.c * g.h * g.w..(ni + 1) * g.c * g.h * g.w], g, &mut cols);
        let dst = &mut out[ni * g.f * plane..(ni + 1) * g.f * plane];
        gemm(
            g.f,
            patch,
            plane,
            (w, patch as isize, 1),
            (&cols, plane as isize, 1),
            0.0,
            dst,
        );
        for (fi, row) in dst.chunks_mut(plane).enumerate() {
            let bias = b[fi];
            row.iter_mut().for_each(|v| *v += bias);
        }
    }
    out
}

/// Returns (dx, dw, db).
pub(crate) fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    g: &ConvGeom,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plane = g.out_plane();
    let patch = g.patch_len();
    let in_len = g.c * g.h * g.w;
    let mut dx = vec![0.0; g.n * in_len];
    let mut dw = vec![0.0; g.f * patch];
    let mut db = vec![0.0; g.f];
    let mut cols = vec![0.0; patch * plane];
    let mut dcols = vec![0.0; patch * plane];
    for ni in 0..g.n {
        let go = &gout[ni * g.f * plane..(ni + 1) * g.f * plane];
        im2col(&x[ni * in_len..(ni + 1) * in_len], g, &mut cols);
        // dW += dOut · colsᵀ
        gemm(
            g.f,
            plane,
            patch,
            (go, plane as isize, 1),
            (&cols, 1, plane as isize),
            1.0,
            &mut dw,
        );
        // dcols = Wᵀ · dOut
        gemm(
            patch,
            g.f,
            plane,
            (w, 1, patch as isize),
            (go, plane as isize, 1),
            0.0,
            &mut dcols,
        );
        col2im_add(&dcols, g, &mut dx[ni * in_len..(ni + 1) * in_len]);
        for (fi, row) in go.chunks(plane).enumerate() {
            db[fi] += row.iter().sum::<f64>();
        }
    }
    (dx, dw, db)
}

pub(crate) fn dense_forward(x: &[f64], w: &[f64], b: &[f64], n: usize, d: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let row = &mut out[i * k..(i + 1) * k];
        row.copy_from_slice(b);
        for j in 0..d {
            let xv = x[i * d + j];
            let wrow = &w[j * k..(j + 1) * k];
            for (o, wv) in row.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    out
}

pub(crate) fn dense_backward(
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    n: usize,
    d: usize,
    k: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; n * d];
    let mut dw = vec![0.0; d * k];
    let mut db = vec![0.0; k];
    for i in 0..n {
        let go = &gout[i * k..(i + 1) * k];
        for (acc, v) in db.iter_mut().zip(go) {
            *acc += v;
        }
        for j in 0..d {
            let wrow = &w[j * k..(j + 1) * k];
            dx[i * d + j] = wrow.iter().zip(go).map(|(a, b)| a * b).sum();
            let xv = x[i * d + j];
            for (acc, gv) in dw[j * k..(j + 1) * k].iter_mut().zip(go) {
                *acc += xv * gv;
            }
        }
    }
    (dx, dw, db)
}

/// Per-channel statistics over every axis except axis 1.
pub(crate) fn channel_stats(x: &[f64], n: usize, c: usize, spatial: usize) -> (Vec<f64>, Vec<f64>) {
    let count = (n * spatial) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ci in 0..c {
        let mut s = 0.0;
        for ni in 0..n {
            let base = (ni * c + ci) * spatial;
            s += x[base..base + spatial].iter().sum::<f64>();
        }
        let m = s / count;
        let mut v = 0.0;
        for ni in 0..n {
            let base = (ni * c + ci) * spatial;
            v += x[base..base + spatial].iter().map(|e| (e - m) * (e - m)).sum::<f64>();
        }
        mean[ci] = m;
        var[ci] = v / count;
    }
    (mean, var)
}

/// Applies `y = scale * (x - mean) * inv_std + shift` per channel and
/// returns (y, xhat).
pub(crate) fn normalize(
    x: &[f64],
    dims: (usize, usize, usize),
    mean: &[f64],
    inv_std: &[f64],
    scale: &[f64],
    shift: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (n, c, spatial) = dims;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * spatial;
            for i in base..base + spatial {
                let h = (x[i] - mean[ci]) * inv_std[ci];
                xhat[i] = h;
                y[i] = scale[ci] * h + shift[ci];
            }
        }
    }
    (y, xhat)
}

/// Sums of `g` and `g * xhat` per channel.
pub(crate) fn channel_grad_sums(
    g: &[f64],
    xhat: &[f64],
    dims: (usize, usize, usize),
) -> (Vec<f64>, Vec<f64>) {
    let (n, c, spatial) = dims;
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * spatial;
            for i in base..base + spatial {
                sum_g[ci] += g[i];
                sum_gx[ci] += g[i] * xhat[i];
            }
        }
    }
    (sum_g, sum_gx)
}
