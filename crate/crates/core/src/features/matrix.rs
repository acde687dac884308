use std::fmt::Write as _;

use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Frame-level features, one row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T> {
    data: Mat<T>,
    frame_rate: f64,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(data: Mat<T>, frame_rate: f64) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Empty("feature matrix"));
        }
        if let Some(((r, c), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature ({r}, {c})")));
        }
        Ok(Self { data, frame_rate })
    }

    pub fn data(&self) -> &Mat<T> {
        &self.data
    }

    pub fn into_data(self) -> Mat<T> {
        self.data
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMatrix<U> {
        FeatureMatrix { data: self.data.mapv(|v| U::of(v.to_f64_lossy())), frame_rate: self.frame_rate }
    }

    /// One line per frame, comma separated, preceded by a `frame,f0,f1,...` header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame");
        for j in 0..self.dim() {
            let _ = write!(s, ",f{j}");
        }
        s.push('\n');
        for (i, row) in self.data.rows().into_iter().enumerate() {
            let _ = write!(s, "{i}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}
