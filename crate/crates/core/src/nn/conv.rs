use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_uniform, ParamLayout};

/// Channels-last 4-D activation: `time × height × width × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        let [_, h, w, ch] = self.dims;
        ((t * h + y) * w + x) * ch + c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding; each axis shrinks by `kernel - 1`.
    #[default]
    Valid,
    /// Zero padding after the input (TensorFlow convention); axes keep size.
    Same,
}

/// 3-D convolution, stride 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub padding: Padding,
    offset: usize,
}

impl Conv3d {
    pub fn new(layout: &mut ParamLayout, in_channels: usize, out_channels: usize, kernel: [usize; 3], padding: Padding) -> Self {
        let k = kernel.iter().product::<usize>() * in_channels;
        let offset = layout.alloc(out_channels * k + out_channels);
        Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            offset,
        }
    }

    fn patch_len(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.in_channels
    }

    pub fn output_dims(&self, input: [usize; 4]) -> Option<[usize; 4]> {
        let mut out = [0, 0, 0, self.out_channels];
        for axis in 0..3 {
            out[axis] = match self.padding {
                Padding::Valid => input[axis].checked_sub(self.kernel[axis] - 1).filter(|&n| n > 0)?,
                Padding::Same => input[axis],
            };
        }
        (input[3] == self.in_channels && out[..3].iter().all(|&n| n > 0)).then_some(out)
    }

    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        let k = self.patch_len();
        let receptive = self.kernel.iter().product::<usize>();
        glorot_uniform(
            k,
            self.out_channels * receptive,
            &mut params[self.offset..self.offset + self.out_channels * k],
            rng,
        );
        params[self.offset + self.out_channels * k..self.offset + self.out_channels * (k + 1)].fill(0.0);
    }

    fn im2col(&self, input: &Volume, out: [usize; 4]) -> Array2<f64> {
        let [kt, kh, kw] = self.kernel;
        let [it, ih, iw, ic] = input.dims;
        let positions = out[0] * out[1] * out[2];
        let mut cols = Array2::<f64>::zeros((positions, self.patch_len()));
        let mut row = 0;
        for t in 0..out[0] {
            for y in 0..out[1] {
                for x in 0..out[2] {
                    let mut r = cols.row_mut(row);
                    let dst = r.as_slice_mut().expect("row contiguous");
                    let mut col = 0;
                    for dt in 0..kt {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let (st, sy, sx) = (t + dt, y + dy, x + dx);
                                if st < it && sy < ih && sx < iw {
                                    let base = input.index(st, sy, sx, 0);
                                    dst[col..col + ic].copy_from_slice(&input.data[base..base + ic]);
                                }
                                col += ic;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        cols
    }

    fn weights<'a>(&self, params: &'a [f64]) -> (ArrayView2<'a, f64>, &'a [f64]) {
        let k = self.patch_len();
        let w = ArrayView2::from_shape((self.out_channels, k), &params[self.offset..self.offset + self.out_channels * k])
            .expect("weight shape");
        let b = &params[self.offset + self.out_channels * k..self.offset + self.out_channels * (k + 1)];
        (w, b)
    }

    /// Pre-activation output. Panics if the input is too small; callers
    /// check shapes up front.
    pub fn forward(&self, params: &[f64], input: &Volume) -> Volume {
        let out = self.output_dims(input.dims).expect("conv input too small");
        let cols = self.im2col(input, out);
        let (w, b) = self.weights(params);
        let mut y = cols.dot(&w.t());
        for mut r in y.rows_mut() {
            for (v, bias) in r.iter_mut().zip(b) {
                *v += bias;
            }
        }
        Volume {
            dims: out,
            data: y.into_raw_vec_and_offset().0,
        }
    }

    pub fn backward(&self, params: &[f64], input: &Volume, d_out: &Volume, grad: &mut [f64]) -> Volume {
        let out = d_out.dims;
        let cols = self.im2col(input, out);
        let positions = out[0] * out[1] * out[2];
        let dy = ArrayView2::from_shape((positions, self.out_channels), &d_out.data).expect("grad shape");
        let k = self.patch_len();
        let dw = dy.t().dot(&cols);
        for (g, d) in grad[self.offset..self.offset + self.out_channels * k].iter_mut().zip(dw.iter()) {
            *g += d;
        }
        let gb = &mut grad[self.offset + self.out_channels * k..self.offset + self.out_channels * (k + 1)];
        for r in dy.rows() {
            for (g, d) in gb.iter_mut().zip(r) {
                *g += d;
            }
        }
        let (w, _) = self.weights(params);
        let dcols = dy.dot(&w);

        let [kt, kh, kw] = self.kernel;
        let [it, ih, iw, ic] = input.dims;
        let mut dx = Volume::zeros(input.dims);
        let mut row = 0;
        for t in 0..out[0] {
            for y in 0..out[1] {
                for x in 0..out[2] {
                    let src = dcols.row(row);
                    let src = src.as_slice().expect("row contiguous");
                    let mut col = 0;
                    for dt in 0..kt {
                        for ddy in 0..kh {
                            for ddx in 0..kw {
                                let (st, sy, sx) = (t + dt, y + ddy, x + ddx);
                                if st < it && sy < ih && sx < iw {
                                    let base = dx.index(st, sy, sx, 0);
                                    for c in 0..ic {
                                        dx.data[base + c] += src[col + c];
                                    }
                                }
                                col += ic;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        dx
    }
}

/// Non-overlapping 3-D max pooling (stride = kernel, floor).
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool3d {
    pub kernel: [usize; 3],
}

impl MaxPool3d {
    pub fn output_dims(&self, input: [usize; 4]) -> Option<[usize; 4]> {
        let out = [
            input[0] / self.kernel[0],
            input[1] / self.kernel[1],
            input[2] / self.kernel[2],
            input[3],
        ];
        out[..3].iter().all(|&n| n > 0).then_some(out)
    }

    /// Pooled volume and, for each output cell, the flat input index of its
    /// maximum.
    pub fn forward(&self, input: &Volume) -> (Volume, Vec<usize>) {
        let out = self.output_dims(input.dims).expect("pool input too small");
        let mut pooled = Volume::zeros(out);
        let mut argmax = vec![0usize; pooled.data.len()];
        let [pt, ph, pw] = self.kernel;
        for t in 0..out[0] {
            for y in 0..out[1] {
                for x in 0..out[2] {
                    for c in 0..out[3] {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for dt in 0..pt {
                            for dy in 0..ph {
                                for dx in 0..pw {
                                    let idx = input.index(t * pt + dt, y * ph + dy, x * pw + dx, c);
                                    if input.data[idx] > best {
                                        best = input.data[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        let o = pooled.index(t, y, x, c);
                        pooled.data[o] = best;
                        argmax[o] = best_idx;
                    }
                }
            }
        }
        (pooled, argmax)
    }

    pub fn backward(input_dims: [usize; 4], argmax: &[usize], d_out: &Volume) -> Volume {
        let mut dx = Volume::zeros(input_dims);
        for (o, &i) in argmax.iter().enumerate() {
            dx.data[i] += d_out.data[o];
        }
        dx
    }
}
