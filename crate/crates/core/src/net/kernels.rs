//! Raw loops for the layer kinds. Images are stored height × width × channel
//! (channel fastest); convolution kernels arrive as out × in × kh × kw and
//! are repacked to kh × kw × in × out so the innermost loop runs over output
//! channels.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    /// Input coordinate for output coordinate `o` and kernel offset `k`, or
    /// `None` when it lands in the zero padding.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(self.padding)?;
        (pos < extent).then_some(pos)
    }
}

/// OIHW → HWIO.
pub(crate) fn repack_kernels(kernels: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let mut out = vec![0.0; kernels.len()];
    for oc in 0..g.out_c {
        for ic in 0..g.in_c {
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let src = ((oc * g.in_c + ic) * g.kh + ky) * g.kw + kx;
                    let dst = ((ky * g.kw + kx) * g.in_c + ic) * g.out_c + oc;
                    out[dst] = kernels[src];
                }
            }
        }
    }
    out
}

/// HWIO → OIHW.
pub(crate) fn unpack_kernels(packed: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let mut out = vec![0.0; packed.len()];
    for oc in 0..g.out_c {
        for ic in 0..g.in_c {
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let dst = ((oc * g.in_c + ic) * g.kh + ky) * g.kw + kx;
                    let src = ((ky * g.kw + kx) * g.in_c + ic) * g.out_c + oc;
                    out[dst] = packed[src];
                }
            }
        }
    }
    out
}

/// `out = bias + conv(input, kernels)`; pass `None` for the bias to get the
/// purely linear part.
pub(crate) fn conv_forward(
    input: &[f64],
    packed: &[f64],
    bias: Option<&[f64]>,
    g: &ConvGeometry,
) -> Vec<f64> {
    let oc = g.out_c;
    let mut out = vec![0.0; g.out_h * g.out_w * oc];
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let o = &mut out[(oy * g.out_w + ox) * oc..][..oc];
            if let Some(b) = bias {
                o.copy_from_slice(b);
            }
            for ky in 0..g.kh {
                let Some(iy) = g.source(oy, ky, g.in_h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = g.source(ox, kx, g.in_w) else {
                        continue;
                    };
                    let pixel = &input[(iy * g.in_w + ix) * g.in_c..][..g.in_c];
                    let block = &packed[(ky * g.kw + kx) * g.in_c * oc..][..g.in_c * oc];
                    for (&v, row) in pixel.iter().zip(block.chunks_exact(oc)) {
                        for (acc, &w) in o.iter_mut().zip(row) {
                            *acc += v * w;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient with respect to the convolution input.
pub(crate) fn conv_backward_input(grad_out: &[f64], packed: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let oc = g.out_c;
    let mut grad_in = vec![0.0; g.in_h * g.in_w * g.in_c];
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let go = &grad_out[(oy * g.out_w + ox) * oc..][..oc];
            for ky in 0..g.kh {
                let Some(iy) = g.source(oy, ky, g.in_h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = g.source(ox, kx, g.in_w) else {
                        continue;
                    };
                    let gi = &mut grad_in[(iy * g.in_w + ix) * g.in_c..][..g.in_c];
                    let block = &packed[(ky * g.kw + kx) * g.in_c * oc..][..g.in_c * oc];
                    for (acc, row) in gi.iter_mut().zip(block.chunks_exact(oc)) {
                        *acc += dot(go, row);
                    }
                }
            }
        }
    }
    grad_in
}

/// Accumulates kernel (packed layout) and bias gradients.
pub(crate) fn conv_backward_params(
    input: &[f64],
    grad_out: &[f64],
    g: &ConvGeometry,
    grad_packed: &mut [f64],
    grad_bias: &mut [f64],
) {
    let oc = g.out_c;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let go = &grad_out[(oy * g.out_w + ox) * oc..][..oc];
            for (b, &v) in grad_bias.iter_mut().zip(go) {
                *b += v;
            }
            for ky in 0..g.kh {
                let Some(iy) = g.source(oy, ky, g.in_h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = g.source(ox, kx, g.in_w) else {
                        continue;
                    };
                    let pixel = &input[(iy * g.in_w + ix) * g.in_c..][..g.in_c];
                    let block = &mut grad_packed[(ky * g.kw + kx) * g.in_c * oc..][..g.in_c * oc];
                    for (&v, row) in pixel.iter().zip(block.chunks_exact_mut(oc)) {
                        for (acc, &d) in row.iter_mut().zip(go) {
                            *acc += v * d;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolGeometry {
    pub in_w: usize,
    pub channels: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub window: usize,
    pub stride: usize,
}

/// Flat input index of the first maximal element of every pooling window.
pub(crate) fn pool_argmax(input: &[f64], g: &PoolGeometry) -> Vec<usize> {
    let c = g.channels;
    let mut idx = Vec::with_capacity(g.out_h * g.out_w * c);
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            for ch in 0..c {
                let mut best = (usize::MAX, f64::NEG_INFINITY);
                for ky in 0..g.window {
                    for kx in 0..g.window {
                        let i = ((oy * g.stride + ky) * g.in_w + ox * g.stride + kx) * c + ch;
                        if best.0 == usize::MAX || input[i] > best.1 {
                            best = (i, input[i]);
                        }
                    }
                }
                idx.push(best.0);
            }
        }
    }
    idx
}

/// Flat input indices of every element of the window feeding pooled output `o`.
pub(crate) fn pool_window(o: usize, g: &PoolGeometry) -> impl Iterator<Item = usize> + '_ {
    let c = g.channels;
    let ch = o % c;
    let ox = (o / c) % g.out_w;
    let oy = o / c / g.out_w;
    (0..g.window).flat_map(move |ky| {
        (0..g.window).map(move |kx| ((oy * g.stride + ky) * g.in_w + ox * g.stride + kx) * c + ch)
    })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = W x (+ b)` for a row-major `rows × cols` matrix.
pub(crate) fn matvec(w: &[f64], x: &[f64], bias: Option<&[f64]>, rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| {
            let base = bias.map_or(0.0, |b| b[r]);
            base + dot(&w[r * cols..][..cols], x)
        })
        .collect()
}

/// `out = Wᵀ g` for a row-major `rows × cols` matrix.
pub(crate) fn matvec_transposed(w: &[f64], g: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, &gr) in w.chunks_exact(cols).zip(g) {
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += gr * wv;
        }
    }
    out
}
