//! im2col based 2-D convolution kernels. 1-D convolution runs through the
//! same code with a unit height.

use crate::scalar::{gemm, Layout};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn k(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_size(&self) -> usize {
        self.in_ch * self.height * self.width
    }

    fn out_size(&self) -> usize {
        self.out_ch * self.positions()
    }
}

/// Output extent of a convolution; `None` when the kernel does not fit.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if kernel == 0 || stride == 0 || padded < kernel {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

fn im2col<S: Scalar>(g: &ConvGeom, x: &[S], cols: &mut [S]) {
    let p = g.positions();
    for c in 0..g.in_ch {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = &mut cols[((c * g.kh + i) * g.kw + j) * p..][..p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.sh + i) as isize - g.ph as isize;
                    let dst = &mut row[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        dst.iter_mut().for_each(|v| *v = S::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.sw + j) as isize - g.pw as isize;
                        *d = if ix < 0 || ix >= g.width as isize {
                            S::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<S: Scalar>(g: &ConvGeom, cols: &[S], dx: &mut [S]) {
    let p = g.positions();
    for c in 0..g.in_ch {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = &cols[((c * g.kh + i) * g.kw + j) * p..][..p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.sh + i) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.sw + j) as isize - g.pw as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += row[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<S: Scalar>(g: &ConvGeom, x: &[S], w: &[S], b: Option<&[S]>) -> Vec<S> {
    let (k, p) = (g.k(), g.positions());
    let mut out = vec![S::zero(); g.batch * g.out_size()];
    let mut cols = vec![S::zero(); k * p];
    for n in 0..g.batch {
        im2col(g, &x[n * g.in_size()..(n + 1) * g.in_size()], &mut cols);
        let y = &mut out[n * g.out_size()..(n + 1) * g.out_size()];
        if let Some(b) = b {
            for (o, &bo) in b.iter().enumerate() {
                y[o * p..(o + 1) * p].iter_mut().for_each(|v| *v = bo);
            }
        }
        gemm(g.out_ch, k, p, w, Layout::N, &cols, Layout::N, S::one(), y);
    }
    out
}

/// Returns `(dx, dw, db)`; `dx` only when requested.
pub fn conv2d_backward<S: Scalar>(
    g: &ConvGeom,
    x: &[S],
    w: &[S],
    dy: &[S],
    want_dx: bool,
    want_dw: bool,
    want_db: bool,
) -> (Option<Vec<S>>, Option<Vec<S>>, Option<Vec<S>>) {
    let (k, p) = (g.k(), g.positions());
    let mut dx = want_dx.then(|| vec![S::zero(); g.batch * g.in_size()]);
    let mut dw = want_dw.then(|| vec![S::zero(); g.out_ch * k]);
    let mut db = want_db.then(|| vec![S::zero(); g.out_ch]);
    let mut cols = vec![S::zero(); k * p];
    let mut dcols = vec![S::zero(); k * p];
    for n in 0..g.batch {
        let dyn_ = &dy[n * g.out_size()..(n + 1) * g.out_size()];
        if let Some(db) = db.as_mut() {
            for (o, acc) in db.iter_mut().enumerate() {
                *acc += dyn_[o * p..(o + 1) * p].iter().copied().sum::<S>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            im2col(g, &x[n * g.in_size()..(n + 1) * g.in_size()], &mut cols);
            gemm(g.out_ch, p, k, dyn_, Layout::N, &cols, Layout::T, S::one(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(k, g.out_ch, p, w, Layout::T, dyn_, Layout::N, S::zero(), &mut dcols);
            col2im(g, &dcols, &mut dx[n * g.in_size()..(n + 1) * g.in_size()]);
        }
    }
    (dx, dw, db)
}
