use super::tensor::Tensor;

/// One stage of a feed-forward network.
///
/// Convolutions use valid padding and stride 1; pooling is a fixed 2x2
/// window with stride 2 (odd trailing rows/columns are dropped).
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `weight` is `[fan_out, fan_in]`, `bias` is `[fan_out]`.
    Dense { weight: Tensor, bias: Tensor },
    /// `weight` is `[out_ch, in_ch, k_h, k_w]`, `bias` is `[out_ch]`.
    Conv2d { weight: Tensor, bias: Tensor },
    Relu,
    MaxPool2x2,
    Flatten,
}

/// Values a layer keeps from its forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Dense { input: Tensor },
    Conv { cols: Vec<f64>, in_shape: Vec<usize> },
    Relu { output: Tensor },
    Pool { argmax: Vec<u32>, in_shape: Vec<usize> },
    Flatten { in_shape: Vec<usize> },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::Flatten => "flatten",
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    /// Number of inputs feeding one output unit.
    pub fn fan_in(&self) -> Option<usize> {
        match self {
            Layer::Dense { weight, .. } => Some(weight.shape()[1]),
            Layer::Conv2d { weight, .. } => Some(weight.shape()[1..].iter().product()),
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            Layer::Dense { weight, .. } => {
                let fan_in = weight.shape()[1];
                if input.len() != 1 || input[0] != fan_in {
                    return Err(format!("expected input [{fan_in}], got {input:?}"));
                }
                Ok(vec![weight.shape()[0]])
            }
            Layer::Conv2d { weight, .. } => {
                let ws = weight.shape();
                let (oc, ic, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
                if input.len() != 3 || input[0] != ic {
                    return Err(format!("expected input [{ic}, H, W], got {input:?}"));
                }
                if input[1] < kh || input[2] < kw {
                    return Err(format!(
                        "{kh}x{kw} kernel does not fit a {}x{} input",
                        input[1], input[2]
                    ));
                }
                Ok(vec![oc, input[1] - kh + 1, input[2] - kw + 1])
            }
            Layer::MaxPool2x2 => {
                if input.len() != 3 || input[1] < 2 || input[2] < 2 {
                    return Err(format!("expected input [C, H>=2, W>=2], got {input:?}"));
                }
                Ok(vec![input[0], input[1] / 2, input[2] / 2])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Forward pass over a batch; the caller has already validated shapes.
    pub(crate) fn forward(&self, x: &Tensor, keep: bool) -> (Tensor, Option<Cache>) {
        match self {
            Layer::Dense { weight, bias } => {
                let y = dense_forward(weight, bias, x);
                (y, keep.then(|| Cache::Dense { input: x.clone() }))
            }
            Layer::Conv2d { weight, bias } => {
                let (y, cols) = conv_forward(weight, bias, x, keep);
                let cache = keep.then(|| Cache::Conv {
                    cols,
                    in_shape: x.shape().to_vec(),
                });
                (y, cache)
            }
            Layer::Relu => {
                let data = x.data().iter().map(|&v| v.max(0.0)).collect();
                let y = Tensor::from_parts_unchecked(x.shape().to_vec(), data);
                let cache = keep.then(|| Cache::Relu { output: y.clone() });
                (y, cache)
            }
            Layer::MaxPool2x2 => {
                let (y, argmax) = pool_forward(x);
                let cache = keep.then(|| Cache::Pool {
                    argmax,
                    in_shape: x.shape().to_vec(),
                });
                (y, cache)
            }
            Layer::Flatten => {
                let b = x.rows();
                let y = Tensor::from_parts_unchecked(vec![b, x.row_len()], x.data().to_vec());
                (y, keep.then(|| Cache::Flatten {
                    in_shape: x.shape().to_vec(),
                }))
            }
        }
    }

    /// Backward pass. Returns parameter gradients (empty for parameterless
    /// kinds) and, when `need_input_grad`, the gradient w.r.t. the input.
    pub(crate) fn backward(
        &self,
        cache: &Cache,
        dy: &Tensor,
        need_input_grad: bool,
    ) -> (Vec<Tensor>, Option<Tensor>) {
        match (self, cache) {
            (Layer::Dense { weight, .. }, Cache::Dense { input }) => {
                let (dw, db, dx) = dense_backward(weight, input, dy, need_input_grad);
                (vec![dw, db], dx)
            }
            (Layer::Conv2d { weight, .. }, Cache::Conv { cols, in_shape }) => {
                let (dw, db, dx) = conv_backward(weight, cols, in_shape, dy, need_input_grad);
                (vec![dw, db], dx)
            }
            (Layer::Relu, Cache::Relu { output }) => {
                let dx = need_input_grad.then(|| {
                    let data = dy
                        .data()
                        .iter()
                        .zip(output.data())
                        .map(|(&g, &o)| if o > 0.0 { g } else { 0.0 })
                        .collect();
                    Tensor::from_parts_unchecked(dy.shape().to_vec(), data)
                });
                (Vec::new(), dx)
            }
            (Layer::MaxPool2x2, Cache::Pool { argmax, in_shape }) => {
                let dx = need_input_grad.then(|| {
                    let mut dx = Tensor::zeros(in_shape);
                    let d = dx.data_mut();
                    for (&src, &g) in argmax.iter().zip(dy.data()) {
                        d[src as usize] += g;
                    }
                    dx
                });
                (Vec::new(), dx)
            }
            (Layer::Flatten, Cache::Flatten { in_shape }) => {
                let dx = need_input_grad
                    .then(|| Tensor::from_parts_unchecked(in_shape.clone(), dy.data().to_vec()));
                (Vec::new(), dx)
            }
            _ => unreachable!("cache kind does not match layer kind"),
        }
    }
}

/// `c = a * b + beta * c` for row/column-strided `f64` matrices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
    c_strides: (isize, isize),
) {
    let last = |rows: usize, cols: usize, (rs, cs): (isize, isize)| {
        (rows as isize - 1) * rs + (cols as isize - 1) * cs
    };
    assert!(last(m, k, a_strides) < a.len() as isize);
    assert!(last(k, n, b_strides) < b.len() as isize);
    assert!(last(m, n, c_strides) < c.len() as isize);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            c_strides.0,
            c_strides.1,
        );
    }
}

fn dense_forward(weight: &Tensor, bias: &Tensor, x: &Tensor) -> Tensor {
    let (out, fan_in) = (weight.shape()[0], weight.shape()[1]);
    let b = x.rows();
    let mut y = Vec::with_capacity(b * out);
    for _ in 0..b {
        y.extend_from_slice(bias.data());
    }
    // y[b, out] += x[b, in] * W^T
    gemm(
        b,
        fan_in,
        out,
        x.data(),
        (fan_in as isize, 1),
        weight.data(),
        (1, fan_in as isize),
        1.0,
        &mut y,
        (out as isize, 1),
    );
    Tensor::from_parts_unchecked(vec![b, out], y)
}

fn dense_backward(
    weight: &Tensor,
    x: &Tensor,
    dy: &Tensor,
    need_input_grad: bool,
) -> (Tensor, Tensor, Option<Tensor>) {
    let (out, fan_in) = (weight.shape()[0], weight.shape()[1]);
    let b = x.rows();
    let mut dw = vec![0.0; out * fan_in];
    // dW[out, in] = dy^T[out, b] * x[b, in]
    gemm(
        out,
        b,
        fan_in,
        dy.data(),
        (1, out as isize),
        x.data(),
        (fan_in as isize, 1),
        0.0,
        &mut dw,
        (fan_in as isize, 1),
    );
    let mut db = vec![0.0; out];
    for row in dy.rows_iter() {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let dx = need_input_grad.then(|| {
        let mut dx = vec![0.0; b * fan_in];
        gemm(
            b,
            out,
            fan_in,
            dy.data(),
            (out as isize, 1),
            weight.data(),
            (fan_in as isize, 1),
            0.0,
            &mut dx,
            (fan_in as isize, 1),
        );
        Tensor::from_parts_unchecked(vec![b, fan_in], dx)
    });
    (
        Tensor::from_parts_unchecked(weight.shape().to_vec(), dw),
        Tensor::from_parts_unchecked(vec![out], db),
        dx,
    )
}

struct ConvGeom {
    oc: usize,
    ic: usize,
    kh: usize,
    kw: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(weight: &Tensor, in_shape: &[usize]) -> Self {
        let ws = weight.shape();
        let (h, w) = (in_shape[2], in_shape[3]);
        ConvGeom {
            oc: ws[0],
            ic: ws[1],
            kh: ws[2],
            kw: ws[3],
            h,
            w,
            oh: h - ws[2] + 1,
            ow: w - ws[3] + 1,
        }
    }

    fn k(&self) -> usize {
        self.ic * self.kh * self.kw
    }

    fn n(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one sample `[ic, h, w]` into `[k, n]` patch columns.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let n = self.n();
        for c in 0..self.ic {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let r = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[r * n..(r + 1) * n];
                    for oy in 0..self.oh {
                        let src = &plane[(oy + ky) * self.w + kx..][..self.ow];
                        dst[oy * self.ow..(oy + 1) * self.ow].copy_from_slice(src);
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatters column gradients back onto the input.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let n = self.n();
        for c in 0..self.ic {
            let plane = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let r = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols[r * n..(r + 1) * n];
                    for oy in 0..self.oh {
                        let dst = &mut plane[(oy + ky) * self.w + kx..][..self.ow];
                        for (d, &s) in dst.iter_mut().zip(&src[oy * self.ow..(oy + 1) * self.ow]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward(weight: &Tensor, bias: &Tensor, x: &Tensor, keep: bool) -> (Tensor, Vec<f64>) {
    let g = ConvGeom::new(weight, x.shape());
    let b = x.rows();
    let (k, n) = (g.k(), g.n());
    let in_len = g.ic * g.h * g.w;
    let out_len = g.oc * n;
    let mut y = vec![0.0; b * out_len];
    let mut all_cols = if keep { vec![0.0; b * k * n] } else { Vec::new() };
    let mut scratch = if keep { Vec::new() } else { vec![0.0; k * n] };
    for s in 0..b {
        let cols: &mut [f64] = if keep {
            &mut all_cols[s * k * n..(s + 1) * k * n]
        } else {
            &mut scratch
        };
        g.im2col(&x.data()[s * in_len..(s + 1) * in_len], cols);
        let ys = &mut y[s * out_len..(s + 1) * out_len];
        for (o, &bv) in bias.data().iter().enumerate() {
            ys[o * n..(o + 1) * n].fill(bv);
        }
        gemm(
            g.oc,
            k,
            n,
            weight.data(),
            (k as isize, 1),
            cols,
            (n as isize, 1),
            1.0,
            ys,
            (n as isize, 1),
        );
    }
    (
        Tensor::from_parts_unchecked(vec![b, g.oc, g.oh, g.ow], y),
        all_cols,
    )
}

fn conv_backward(
    weight: &Tensor,
    cols: &[f64],
    in_shape: &[usize],
    dy: &Tensor,
    need_input_grad: bool,
) -> (Tensor, Tensor, Option<Tensor>) {
    let g = ConvGeom::new(weight, in_shape);
    let b = in_shape[0];
    let (k, n) = (g.k(), g.n());
    let out_len = g.oc * n;
    let in_len = g.ic * g.h * g.w;
    let mut dw = vec![0.0; g.oc * k];
    let mut db = vec![0.0; g.oc];
    let mut dx = need_input_grad.then(|| vec![0.0; b * in_len]);
    let mut dcols = vec![0.0; if need_input_grad { k * n } else { 0 }];
    for s in 0..b {
        let dys = &dy.data()[s * out_len..(s + 1) * out_len];
        let cs = &cols[s * k * n..(s + 1) * k * n];
        // dW[oc, k] += dy_s[oc, n] * cols_s^T[n, k]
        gemm(
            g.oc,
            n,
            k,
            dys,
            (n as isize, 1),
            cs,
            (1, n as isize),
            1.0,
            &mut dw,
            (k as isize, 1),
        );
        for (o, acc) in db.iter_mut().enumerate() {
            *acc += dys[o * n..(o + 1) * n].iter().sum::<f64>();
        }
        if let Some(dx) = dx.as_mut() {
            // dcols[k, n] = W^T[k, oc] * dy_s[oc, n]
            gemm(
                k,
                g.oc,
                n,
                weight.data(),
                (1, k as isize),
                dys,
                (n as isize, 1),
                0.0,
                &mut dcols,
                (n as isize, 1),
            );
            g.col2im(&dcols, &mut dx[s * in_len..(s + 1) * in_len]);
        }
    }
    (
        Tensor::from_parts_unchecked(weight.shape().to_vec(), dw),
        Tensor::from_parts_unchecked(vec![g.oc], db),
        dx.map(|d| Tensor::from_parts_unchecked(in_shape.to_vec(), d)),
    )
}

fn pool_forward(x: &Tensor) -> (Tensor, Vec<u32>) {
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    let data = x.data();
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if data[cand] > data[best] {
                        best = cand;
                    }
                }
                y.push(data[best]);
                argmax.push(best as u32);
            }
        }
    }
    (Tensor::from_parts_unchecked(vec![b, c, oh, ow], y), argmax)
}
