use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense NHWC tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn new(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::ShapeMismatch(format!("zero dimension in {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "{} values for dims {dims:?} ({len} expected)",
                data.len()
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        let len = dims.iter().product();
        Tensor4 {
            dims,
            data: vec![T::zero(); len],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data viewed with new per-sample dims (element count must agree).
    pub fn reshape(self, dims: [usize; 4]) -> Result<Self> {
        Self::new(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan))
                .collect(),
        }
    }

    /// Concatenates samples of equal per-sample dims.
    pub fn stack(samples: &[&[T]], h: usize, w: usize, c: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(samples.len() * h * w * c);
        for s in samples {
            if s.len() != h * w * c {
                return Err(Error::ShapeMismatch(format!(
                    "sample of {} values, expected {h}x{w}x{c}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Self::new([samples.len(), h, w, c], data)
    }
}
