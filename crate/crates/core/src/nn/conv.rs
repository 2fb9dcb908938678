use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{matmul, FeatureMap, Mat, Param, Real};

/// Valid output-index range `[lo, hi)` along one axis for kernel offset `k`:
/// those `o < out` with `0 <= o·stride + k - pad < len`.
#[inline]
fn valid_range(out: usize, len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let (k, s, p, len) = (k as isize, stride as isize, pad as isize, len as isize);
    // smallest o with o·s >= p - k
    let lo = if p - k <= 0 { 0 } else { (p - k + s - 1) / s };
    // largest o with o·s <= len - 1 + p - k
    let top = len - 1 + p - k;
    let hi = if top < 0 { 0 } else { top / s + 1 };
    let hi = hi.min(out as isize);
    let lo = lo.min(hi);
    (lo as usize, hi as usize)
}

struct Geometry {
    channels: usize,
    image: [usize; 3],
    grid: [usize; 3],
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel.pow(3)
    }

    fn grid_len(&self) -> usize {
        self.grid.iter().product()
    }

    /// Visits every (col row, col offset range, image offset, image step) run.
    #[inline]
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let k = self.kernel;
        let [gd, gh, gw] = self.grid;
        let [id, ih, iw] = self.image;
        let img_plane = ih * iw;
        let img_len = id * img_plane;
        let grid_len = self.grid_len();
        for c in 0..self.channels {
            for kz in 0..k {
                let (z0, z1) = valid_range(gd, id, kz, self.stride, self.pad);
                for ky in 0..k {
                    let (y0, y1) = valid_range(gh, ih, ky, self.stride, self.pad);
                    for kx in 0..k {
                        let (x0, x1) = valid_range(gw, iw, kx, self.stride, self.pad);
                        let row = ((c * k + kz) * k + ky) * k + kx;
                        if x0 >= x1 {
                            continue;
                        }
                        for oz in z0..z1 {
                            let iz = oz * self.stride + kz - self.pad;
                            for oy in y0..y1 {
                                let iy = oy * self.stride + ky - self.pad;
                                let col_off = row * grid_len + (oz * gh + oy) * gw + x0;
                                let img_off = c * img_len + iz * img_plane + iy * iw + x0 * self.stride + kx - self.pad;
                                f(row, col_off, img_off, self.stride, x1 - x0);
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Real>(&self, image: &[T]) -> Vec<T> {
        let mut col = vec![T::zero(); self.rows() * self.grid_len()];
        self.for_each_run(|_, col_off, img_off, step, n| {
            let dst = &mut col[col_off..col_off + n];
            if step == 1 {
                dst.copy_from_slice(&image[img_off..img_off + n]);
            } else {
                for (i, d) in dst.iter_mut().enumerate() {
                    *d = image[img_off + i * step];
                }
            }
        });
        col
    }

    fn col2im<T: Real>(&self, col: &[T], image: &mut [T]) {
        self.for_each_run(|_, col_off, img_off, step, n| {
            let src = &col[col_off..col_off + n];
            if step == 1 {
                for (d, s) in image[img_off..img_off + n].iter_mut().zip(src) {
                    *d += *s;
                }
            } else {
                for (i, s) in src.iter().enumerate() {
                    image[img_off + i * step] += *s;
                }
            }
        });
    }
}

/// 3D convolution or transposed convolution with cubic kernels.
///
/// Standard weights are laid out `[out, in·k³]`; transposed weights
/// `[in, out·k³]`, so a transposed layer is exactly the adjoint of a standard
/// layer with the same weight buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub transposed: bool,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
}

/// Saved forward state: the column matrix (standard) or the input (transposed).
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input_shape: [usize; 3],
    saved: Vec<T>,
}

impl<T: Real> Conv3d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        transposed: bool,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let taps = kernel.pow(3);
        let fan_in = if transposed {
            (in_channels * taps / stride.pow(3)).max(1)
        } else {
            in_channels * taps
        };
        let std = libm::sqrt(2.0 / fan_in as f64);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            transposed,
            weight: Param::normal(in_channels * out_channels * taps, std, rng),
            bias: bias.then(|| Param::zeros(out_channels)),
        }
    }

    pub fn output_shape(&self, input: [usize; 3]) -> [usize; 3] {
        input.map(|n| {
            if self.transposed {
                (n - 1) * self.stride + self.kernel - 2 * self.padding
            } else {
                (n + 2 * self.padding - self.kernel) / self.stride + 1
            }
        })
    }

    /// Geometry of the equivalent standard convolution: `channels` and
    /// `image` describe its input, `grid` its output.
    fn geometry(&self, input: [usize; 3]) -> Geometry {
        let output = self.output_shape(input);
        let (channels, image, grid) = if self.transposed {
            (self.out_channels, output, input)
        } else {
            (self.in_channels, input, output)
        };
        Geometry { channels, image, grid, kernel: self.kernel, stride: self.stride, pad: self.padding }
    }

    pub fn forward(&self, x: &FeatureMap<T>, keep_cache: bool) -> (FeatureMap<T>, Option<ConvCache<T>>) {
        assert_eq!(x.channels, self.in_channels, "conv input channel mismatch");
        let geo = self.geometry(x.shape);
        let out_shape = self.output_shape(x.shape);
        let mut y = FeatureMap::zeros(self.out_channels, out_shape);
        let cache;
        if self.transposed {
            let p_in = x.spatial();
            let mut col = vec![T::zero(); geo.rows() * p_in];
            matmul(
                Mat::new(&self.weight.value, self.in_channels, geo.rows()).t(),
                Mat::new(&x.data, self.in_channels, p_in),
                &mut col,
                false,
            );
            geo.col2im(&col, &mut y.data);
            cache = keep_cache.then(|| ConvCache { input_shape: x.shape, saved: x.data.clone() });
        } else {
            let col = geo.im2col(&x.data);
            let p_out = geo.grid_len();
            matmul(
                Mat::new(&self.weight.value, self.out_channels, geo.rows()),
                Mat::new(&col, geo.rows(), p_out),
                &mut y.data,
                false,
            );
            cache = keep_cache.then_some(ConvCache { input_shape: x.shape, saved: col });
        }
        if let Some(b) = &self.bias {
            let n = y.spatial();
            for (c, &bc) in b.value.iter().enumerate() {
                y.data[c * n..(c + 1) * n].iter_mut().for_each(|v| *v += bc);
            }
        }
        (y, cache)
    }

    /// Accumulates parameter gradients; returns the input gradient when requested.
    pub fn backward(&mut self, cache: &ConvCache<T>, dy: &FeatureMap<T>, input_grad: bool) -> Option<FeatureMap<T>> {
        let geo = self.geometry(cache.input_shape);
        if let Some(b) = &mut self.bias {
            let n = dy.spatial();
            for (c, g) in b.grad.iter_mut().enumerate() {
                *g += dy.data[c * n..(c + 1) * n].iter().copied().sum::<T>();
            }
        }
        let p_in: usize = cache.input_shape.iter().product();
        if self.transposed {
            let dcol = geo.im2col(&dy.data);
            // dW[in, out·k³] += X · dcolᵀ
            matmul(
                Mat::new(&cache.saved, self.in_channels, p_in),
                Mat::new(&dcol, geo.rows(), p_in).t(),
                &mut self.weight.grad,
                true,
            );
            input_grad.then(|| {
                let mut dx = FeatureMap::zeros(self.in_channels, cache.input_shape);
                matmul(
                    Mat::new(&self.weight.value, self.in_channels, geo.rows()),
                    Mat::new(&dcol, geo.rows(), p_in),
                    &mut dx.data,
                    false,
                );
                dx
            })
        } else {
            let p_out = geo.grid_len();
            // dW[out, in·k³] += dY · colᵀ
            matmul(
                Mat::new(&dy.data, self.out_channels, p_out),
                Mat::new(&cache.saved, geo.rows(), p_out).t(),
                &mut self.weight.grad,
                true,
            );
            input_grad.then(|| {
                let mut dcol = vec![T::zero(); geo.rows() * p_out];
                matmul(
                    Mat::new(&self.weight.value, self.out_channels, geo.rows()).t(),
                    Mat::new(&dy.data, self.out_channels, p_out),
                    &mut dcol,
                    false,
                );
                let mut dx = FeatureMap::zeros(self.in_channels, cache.input_shape);
                geo.col2im(&dcol, &mut dx.data);
                dx
            })
        }
    }
}
