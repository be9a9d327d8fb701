//! Raw numeric kernels behind the tape operations. Everything here works on
//! flat slices; shape checking happens in the tape layer.

/// Strided read-only view of a matrix stored in a flat slice.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> MatRef<'a> {
    pub fn row_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn span(&self) -> usize {
        (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
    }
}

/// `c = alpha * a·b + beta * c` with `c` a contiguous row-major `a.rows × b.cols` block.
pub(crate) fn gemm(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n, "gemm output too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    assert!(a.data.len() >= a.span(), "gemm lhs view out of bounds");
    assert!(b.data.len() >= b.span(), "gemm rhs view out of bounds");
    // SAFETY: the asserts above bound every element the views address, and the
    // output block of m*n contiguous values lies inside `c`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv1dGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1dGeom {
    pub fn output_len(t_in: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
        let padded = t_in + 2 * padding;
        if stride == 0 || k == 0 || k > padded {
            return None;
        }
        Some((padded - k) / stride + 1)
    }

    fn source(&self, to: usize, j: usize) -> Option<usize> {
        let pos = (to * self.stride + j) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < self.t_in).then_some(pos as usize)
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        for ci in 0..self.c_in {
            let row = &x[ci * self.t_in..(ci + 1) * self.t_in];
            for j in 0..self.k {
                let dst = &mut cols[(ci * self.k + j) * self.t_out..][..self.t_out];
                for (to, d) in dst.iter_mut().enumerate() {
                    *d = self.source(to, j).map_or(0.0, |p| row[p]);
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], dx: &mut [f64]) {
        for ci in 0..self.c_in {
            let row = &mut dx[ci * self.t_in..(ci + 1) * self.t_in];
            for j in 0..self.k {
                let src = &cols[(ci * self.k + j) * self.t_out..][..self.t_out];
                for (to, &g) in src.iter().enumerate() {
                    if let Some(p) = self.source(to, j) {
                        row[p] += g;
                    }
                }
            }
        }
    }
}

/// Cross-correlation: `out[b, co, t] = bias[co] + Σ_ci Σ_j w[co, ci, j] · x[b, ci, t·stride + j − padding]`.
pub(crate) fn conv1d_forward(g: &Conv1dGeom, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let ck = g.c_in * g.k;
    let mut cols = vec![0.0; ck * g.t_out];
    let mut out = vec![0.0; g.batch * g.c_out * g.t_out];
    let wm = MatRef::row_major(w, g.c_out, ck);
    for b in 0..g.batch {
        g.im2col(&x[b * g.c_in * g.t_in..][..g.c_in * g.t_in], &mut cols);
        let out_b = &mut out[b * g.c_out * g.t_out..][..g.c_out * g.t_out];
        gemm(1.0, wm, MatRef::row_major(&cols, ck, g.t_out), 0.0, out_b);
        if let Some(bias) = bias {
            for (co, row) in out_b.chunks_mut(g.t_out).enumerate() {
                for v in row {
                    *v += bias[co];
                }
            }
        }
    }
    out
}

pub(crate) struct Conv1dGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub dbias: Option<Vec<f64>>,
}

pub(crate) fn conv1d_backward(
    g: &Conv1dGeom,
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    want: (bool, bool, bool),
) -> Conv1dGrads {
    let ck = g.c_in * g.k;
    let mut cols = vec![0.0; ck * g.t_out];
    let mut dx = want.0.then(|| vec![0.0; g.batch * g.c_in * g.t_in]);
    let mut dw = want.1.then(|| vec![0.0; g.c_out * ck]);
    let mut dbias = want.2.then(|| vec![0.0; g.c_out]);
    let wm = MatRef::row_major(w, g.c_out, ck);
    for b in 0..g.batch {
        let dout_b = &dout[b * g.c_out * g.t_out..][..g.c_out * g.t_out];
        let dm = MatRef::row_major(dout_b, g.c_out, g.t_out);
        if let Some(dw) = dw.as_mut() {
            g.im2col(&x[b * g.c_in * g.t_in..][..g.c_in * g.t_in], &mut cols);
            gemm(1.0, dm, MatRef::row_major(&cols, ck, g.t_out).t(), 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(1.0, wm.t(), dm, 0.0, &mut cols);
            g.col2im_add(&cols, &mut dx[b * g.c_in * g.t_in..][..g.c_in * g.t_in]);
        }
        if let Some(db) = dbias.as_mut() {
            for (co, row) in dout_b.chunks(g.t_out).enumerate() {
                db[co] += row.iter().sum::<f64>();
            }
        }
    }
    Conv1dGrads { dx, dw, dbias }
}

/// Row-major strides for a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Generic axis permutation: output axis `i` is input axis `axes[i]`.
pub(crate) fn permute(data: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    let rank = out_shape.len();
    if rank == 0 {
        return data.to_vec();
    }
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..n {
        out.push(data[src]);
        // odometer increment over the output index
        let mut ax = rank;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            src += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

pub(crate) fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}
