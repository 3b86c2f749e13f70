//! Dense row-major `f64` arrays and the handful of kernels the rest of the
//! crate needs: matrix products (with transposed operands for backprop),
//! dot products, norms, and Glorot initialization.
//!
//! Flattening order is row-major everywhere: element `(i, j)` of an
//! `r x c` matrix lives at `data[i * c + j]`. Cosine distances and rotation
//! angles are computed over this flat order.

use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected a 2-d matrix, got shape {shape:?}")]
    NotAMatrix { op: &'static str, shape: Vec<usize> },
    #[error("shape {shape:?} holds {expected} values but {actual} were supplied")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// A dense, contiguous, row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Dense {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// A flat vector of shape `[n]`.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(vec![n, n]);
        for i in 0..n {
            out.data[i * n + i] = 1.0;
        }
        out
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows and columns of a 2-d array.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::NotAMatrix {
                op,
                shape: self.shape.clone(),
            }),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            self.data.len()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of rows `idx` (in the given order) of a 2-d array.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Dense> {
        let (r, c) = self.dims2("gather_rows")?;
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(TensorError::InvalidArgument(format!(
                    "row {i} out of range for {r} rows"
                )));
            }
            data.extend_from_slice(&self.data[i * c..(i + 1) * c]);
        }
        Ok(Dense {
            shape: vec![idx.len(), c],
            data,
        })
    }

    /// The transpose of a 2-d array.
    pub fn transpose(&self) -> Result<Dense> {
        let (r, c) = self.dims2("transpose")?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Dense {
            shape: vec![c, r],
            data,
        })
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Dense, scale: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op: "add_scaled",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

/// Which way an operand enters a product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

/// `c = alpha * op(a) * op(b) + beta * c` for 2-d arrays, where `op` is
/// either identity or transpose. Single threaded, so results are
/// reproducible bit-for-bit on a given machine.
pub fn gemm(
    alpha: f64,
    a: &Dense,
    ta: Trans,
    b: &Dense,
    tb: Trans,
    beta: f64,
    c: &mut Dense,
) -> Result<()> {
    let (ar, ac) = a.dims2("gemm")?;
    let (br, bc) = b.dims2("gemm")?;
    let (m, k, rsa, csa) = match ta {
        Trans::No => (ar, ac, ac as isize, 1isize),
        Trans::Yes => (ac, ar, 1isize, ac as isize),
    };
    let (k2, n, rsb, csb) = match tb {
        Trans::No => (br, bc, bc as isize, 1isize),
        Trans::Yes => (bc, br, 1isize, bc as isize),
    };
    if k != k2 {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    if c.shape != [m, n] {
        return Err(TensorError::ShapeMismatch {
            op: "matmul output",
            left: vec![m, n],
            right: c.shape.clone(),
        });
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        c.scale(beta);
        return Ok(());
    }
    // SAFETY: the strides and extents describe exactly the buffers of `a`,
    // `b` and `c`, whose lengths were validated against their shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(())
}

/// Standard matrix product of `[m x k]` and `[k x n]`.
pub fn matmul(a: &Dense, b: &Dense) -> Result<Dense> {
    let (m, _) = a.dims2("matmul")?;
    let (_, n) = b.dims2("matmul")?;
    let mut c = Dense::zeros(vec![m, n]);
    gemm(1.0, a, Trans::No, b, Trans::No, 0.0, &mut c)?;
    Ok(c)
}

/// Sum of elementwise products, accumulated left to right.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TensorError::ShapeMismatch {
            op: "dot",
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Seeded pseudo-random source.
///
/// Backed by ChaCha8 so that a seed produces the same sequence on every
/// platform and release. Independent streams (initialization, shuffling,
/// data generation) are derived from one seed through [`SeededRng::stream`].
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A generator on an independent ChaCha stream of the same seed.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.gen::<f64>()
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.inner.gen::<f64>();
        let u2 = self.inner.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }
}

/// Glorot/Xavier uniform initialization of a `[fan_in x fan_out]` matrix:
/// values uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform_init(rng: &mut SeededRng, fan_in: usize, fan_out: usize) -> Result<Dense> {
    if fan_in == 0 || fan_out == 0 {
        return Err(TensorError::InvalidArgument(format!(
            "glorot init needs positive fans, got {fan_in} x {fan_out}"
        )));
    }
    let bound = glorot_bound(fan_in, fan_out);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.uniform(-bound, bound))
        .collect();
    Dense::matrix(fan_in, fan_out, data)
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
