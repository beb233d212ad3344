use rand::Rng;
use rand_distr::StandardNormal;

use super::{shape_err, NumericsError, Result};

/// Row-major dense tensor of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NumericsError::Invalid(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// 1-D tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// 2-D tensor from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return shape_err("from_rows", &[cols], &[r.len()]);
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return shape_err("reshape", &self.shape, shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Treats the tensor as `[rows, cols]` where cols is the last axis.
    pub(crate) fn rows_cols(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => {
                let cols = *self.shape.last().unwrap();
                (self.data.len() / cols.max(1), cols)
            }
        }
    }
}

/// `c = beta * c + op(a) * op(b)` with `op(a)` of shape m×k and `op(b)` k×n.
/// `trans_a` means `a` is stored k×m; `trans_b` means `b` is stored n×k.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe the stated layouts.
    unsafe {
        matrixmultiply::dgemm(
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

/// Matrix product of `[m, k]` and `[k, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return shape_err("matmul", &a.shape, &b.shape);
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, &a.data, false, &b.data, false, 0.0, &mut out);
    Tensor::new(vec![m, n], out)
}

/// Geometry of a 3×3×3 convolution with stride 1 and optional zero padding
/// of one sample on the last axis only.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], k: &[usize], pad_last: bool) -> Result<Self> {
        let (batch, rest) = match x.len() {
            4 => (1, x),
            5 => (x[0], &x[1..]),
            _ => return shape_err("conv3d", &[0, 0, 0, 0], x),
        };
        if k.len() != 5 || k[2..] != [3, 3, 3] || k[1] != rest[0] {
            return shape_err("conv3d", &[0, rest[0], 3, 3, 3], k);
        }
        let pad = usize::from(pad_last);
        if rest[1] < 3 || rest[2] < 3 || rest[3] + 2 * pad < 3 {
            return shape_err("conv3d", &[rest[0], 3, 3, 3], rest);
        }
        Ok(Self {
            batch,
            c_in: rest[0],
            c_out: k[0],
            d: rest[1],
            h: rest[2],
            w: rest[3],
            pad,
        })
    }

    pub fn out_dims(&self) -> (usize, usize, usize) {
        (self.d - 2, self.h - 2, self.w + 2 * self.pad - 2)
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * 27
    }

    pub fn out_positions(&self) -> usize {
        let (a, b, c) = self.out_dims();
        a * b * c
    }

    pub fn in_len(&self) -> usize {
        self.c_in * self.d * self.h * self.w
    }

    pub fn out_shape(&self, batched: bool) -> Vec<usize> {
        let (od, oh, ow) = self.out_dims();
        if batched {
            vec![self.batch, self.c_out, od, oh, ow]
        } else {
            vec![self.c_out, od, oh, ow]
        }
    }

    /// Unfolds one sample into a `[c_in*27, positions]` matrix.
    pub fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (od, oh, ow) = self.out_dims();
        let p = od * oh * ow;
        for ci in 0..self.c_in {
            for kd in 0..3 {
                for kh in 0..3 {
                    for kw in 0..3 {
                        let r = ci * 27 + kd * 9 + kh * 3 + kw;
                        let row = &mut cols[r * p..(r + 1) * p];
                        for a in 0..od {
                            for b in 0..oh {
                                let src = ((ci * self.d + a + kd) * self.h + b + kh) * self.w;
                                let dst = &mut row[(a * oh + b) * ow..(a * oh + b + 1) * ow];
                                for (c, slot) in dst.iter_mut().enumerate() {
                                    let wi = c as isize + kw as isize - self.pad as isize;
                                    *slot = if wi >= 0 && (wi as usize) < self.w {
                                        x[src + wi as usize]
                                    } else {
                                        0.0
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatters columns back onto the input.
    pub fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (od, oh, ow) = self.out_dims();
        let p = od * oh * ow;
        for ci in 0..self.c_in {
            for kd in 0..3 {
                for kh in 0..3 {
                    for kw in 0..3 {
                        let r = ci * 27 + kd * 9 + kh * 3 + kw;
                        let row = &cols[r * p..(r + 1) * p];
                        for a in 0..od {
                            for b in 0..oh {
                                let dst = ((ci * self.d + a + kd) * self.h + b + kh) * self.w;
                                let src = &row[(a * oh + b) * ow..(a * oh + b + 1) * ow];
                                for (c, &v) in src.iter().enumerate() {
                                    let wi = c as isize + kw as isize - self.pad as isize;
                                    if wi >= 0 && (wi as usize) < self.w {
                                        dx[dst + wi as usize] += v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3-D convolution with 3×3×3 kernels and stride 1 on every axis.
///
/// `x` is `[C_in, D, H, W]` or batched `[B, C_in, D, H, W]`; `kernels` is
/// `[C_out, C_in, 3, 3, 3]`. With `pad_last_only` one zero sample is padded
/// on both ends of the last axis, so it keeps its length while the first two
/// spatial axes shrink by two.
pub fn conv3d(x: &Tensor, kernels: &Tensor, pad_last_only: bool) -> Result<Tensor> {
    let g = ConvGeom::new(&x.shape, &kernels.shape, pad_last_only)?;
    let p = g.out_positions();
    let mut cols = vec![0.0; g.patch_len() * p];
    let mut out = vec![0.0; g.batch * g.c_out * p];
    for b in 0..g.batch {
        g.im2col(&x.data[b * g.in_len()..(b + 1) * g.in_len()], &mut cols);
        gemm(
            g.c_out,
            g.patch_len(),
            p,
            &kernels.data,
            false,
            &cols,
            false,
            0.0,
            &mut out[b * g.c_out * p..(b + 1) * g.c_out * p],
        );
    }
    Tensor::new(g.out_shape(x.shape.len() == 5), out)
}

pub(crate) fn elu_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn elu(x: &Tensor) -> Tensor {
    x.map(elu_scalar)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Tensor of independent N(0, 1) draws.
pub fn standard_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

/// `mu + exp(log_var / 2) * eps` with `eps ~ N(0, I)` drawn from `rng`.
pub fn gaussian_reparameterize<R: Rng + ?Sized>(
    mu: &Tensor,
    log_var: &Tensor,
    rng: &mut R,
) -> Result<Tensor> {
    if mu.shape != log_var.shape {
        return shape_err("gaussian_reparameterize", &mu.shape, &log_var.shape);
    }
    let eps = standard_normal(&mu.shape, rng);
    let data = mu
        .data
        .iter()
        .zip(&log_var.data)
        .zip(&eps.data)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    Tensor::new(mu.shape.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn matmul_oracle(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.data[i * k + p] * b.data[p * n + j];
                }
            }
        }
        out
    }

    // Direct six-loop convolution, single sample.
    fn conv_oracle(x: &Tensor, k: &Tensor, pad: bool) -> Vec<f64> {
        let (ci, d, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let co = k.shape[0];
        let p = usize::from(pad) as isize;
        let (od, oh, ow) = (d - 2, h - 2, (w as isize + 2 * p - 2) as usize);
        let mut out = vec![0.0; co * od * oh * ow];
        for o in 0..co {
            for a in 0..od {
                for b in 0..oh {
                    for c in 0..ow {
                        let mut acc = 0.0;
                        for i in 0..ci {
                            for kd in 0..3 {
                                for kh in 0..3 {
                                    for kw in 0..3 {
                                        let wi = c as isize + kw as isize - p;
                                        if wi < 0 || wi >= w as isize {
                                            continue;
                                        }
                                        let xv = x.data
                                            [((i * d + a + kd) * h + b + kh) * w + wi as usize];
                                        let kv = k.data[(((o * ci + i) * 3 + kd) * 3 + kh) * 3 + kw];
                                        acc += xv * kv;
                                    }
                                }
                            }
                        }
                        out[((o * od + a) * oh + b) * ow + c] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_hand_values() {
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(matmul(&eye, &b).unwrap(), b);
        let a = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let c = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(matmul(&a, &c).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&[4, 5], &mut rng);
        let b = random(&[5, 3], &mut rng);
        let got = matmul(&a, &b).unwrap();
        for (g, e) in got.data().iter().zip(matmul_oracle(&a, &b)) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(
            matmul(&a, &b),
            Err(NumericsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn transposed_gemm_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let expect = matmul_oracle(&a, &b);
        // a stored transposed (4×3), b stored transposed (2×4)
        let mut at = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                at[j * 3 + i] = a.data[i * 4 + j];
            }
        }
        let mut bt = vec![0.0; 8];
        for i in 0..4 {
            for j in 0..2 {
                bt[j * 4 + i] = b.data[i * 2 + j];
            }
        }
        let mut c = vec![0.0; 6];
        gemm(3, 4, 2, &at, true, &bt, true, 0.0, &mut c);
        for (g, e) in c.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_delta_kernel_crops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[1, 5, 5, 16], &mut rng);
        let mut k = Tensor::zeros(&[1, 1, 3, 3, 3]);
        k.data_mut()[13] = 1.0;
        let y = conv3d(&x, &k, true).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3, 16]);
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..16 {
                    let got = y.data()[(a * 3 + b) * 16 + c];
                    let want = x.data()[((a + 1) * 5 + b + 1) * 16 + c];
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn conv_all_ones_counts_27() {
        let x = Tensor::full(&[1, 5, 5, 128], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3, 3], 1.0);
        let y = conv3d(&x, &k, true).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3, 128]);
        assert_eq!(y.data()[(1 * 3 + 1) * 128 + 64], 27.0);
        // the padded edge only sees two frequency taps
        assert_eq!(y.data()[0], 18.0);
    }

    #[test]
    fn conv_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &pad in &[true, false] {
            let x = random(&[3, 5, 4, 7], &mut rng);
            let k = random(&[2, 3, 3, 3, 3], &mut rng);
            let y = conv3d(&x, &k, pad).unwrap();
            let want = conv_oracle(&x, &k, pad);
            assert_eq!(y.len(), want.len());
            for (g, e) in y.data().iter().zip(&want) {
                assert!((g - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn conv_batched_equals_per_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random(&[2, 2, 5, 5, 6], &mut rng);
        let k = random(&[3, 2, 3, 3, 3], &mut rng);
        let y = conv3d(&x, &k, true).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3, 3, 6]);
        let half = x.len() / 2;
        for b in 0..2 {
            let xb = Tensor::new(vec![2, 5, 5, 6], x.data()[b * half..(b + 1) * half].to_vec())
                .unwrap();
            let yb = conv3d(&xb, &k, true).unwrap();
            assert_eq!(&y.data()[b * yb.len()..(b + 1) * yb.len()], yb.data());
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(&[2, 5, 5, 8]);
        let k = Tensor::zeros(&[1, 3, 3, 3, 3]);
        assert!(conv3d(&x, &k, true).is_err());
    }

    #[test]
    fn activation_values() {
        assert_eq!(elu(&Tensor::scalar(0.0)).item(), 0.0);
        assert_eq!(sigmoid(&Tensor::scalar(0.0)).item(), 0.5);
        assert_eq!(relu(&Tensor::scalar(-3.2)).item(), 0.0);
        assert!((elu(&Tensor::scalar(-1.0)).item() - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(elu(&Tensor::scalar(2.5)).item(), 2.5);
    }

    #[test]
    fn reparameterize_zero_variance_and_determinism() {
        let mu = Tensor::vector(vec![0.3, -1.2, 4.0]);
        let lv = Tensor::full(&[3], -50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = gaussian_reparameterize(&mu, &lv, &mut rng).unwrap();
        for (a, b) in z.data().iter().zip(mu.data()) {
            assert!((a - b).abs() < 1e-10);
        }
        let lv0 = Tensor::zeros(&[3]);
        let a = gaussian_reparameterize(&mu, &lv0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = gaussian_reparameterize(&mu, &lv0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
        assert!(gaussian_reparameterize(&mu, &Tensor::zeros(&[2]), &mut rng).is_err());
    }

    #[test]
    fn reparameterize_moments() {
        let n = 100_000;
        let mu = Tensor::zeros(&[n]);
        let lv = Tensor::zeros(&[n]);
        let z = gaussian_reparameterize(&mu, &lv, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let mean = z.data().iter().sum::<f64>() / n as f64;
        let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
