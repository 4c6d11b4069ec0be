//! Tensor grids on `[-b, b]^d` with multilinear interpolation and
//! constant continuation outside the box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorGrid {
    pub dim: usize,
    pub nodes_per_axis: usize,
    pub half_width: f64,
}

impl TensorGrid {
    pub fn new(dim: usize, nodes_per_axis: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::ParameterOutOfRange {
                name: "n_modes",
                value: dim as f64,
                bound: "grid solver supports 1 to 3 modes".into(),
            });
        }
        if nodes_per_axis < 3 || nodes_per_axis % 2 == 0 {
            return Err(Error::ParameterOutOfRange {
                name: "nodes_per_axis",
                value: nodes_per_axis as f64,
                bound: "must be odd and >= 3".into(),
            });
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::ParameterOutOfRange {
                name: "half_width",
                value: half_width,
                bound: "must be finite and > 0".into(),
            });
        }
        Ok(Self {
            dim,
            nodes_per_axis,
            half_width,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.nodes_per_axis - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Axis indices of a flat node index; axis 0 varies slowest.
    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.dim).rev() {
            out[a] = idx % self.nodes_per_axis;
            idx /= self.nodes_per_axis;
        }
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.nodes_per_axis + i)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut multi = vec![0; self.dim];
        self.multi_index(idx, &mut multi);
        multi.iter().map(|&i| self.coordinate(i)).collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter().all(|v| v.abs() <= self.half_width)
    }

    /// Cell index and local weight per axis, clamped to the box.
    #[inline]
    fn locate(&self, y: f64) -> (usize, f64) {
        let m = self.nodes_per_axis;
        let pos = ((y + self.half_width) / self.spacing()).clamp(0.0, (m - 1) as f64);
        let i0 = (pos.floor() as usize).min(m - 2);
        (i0, pos - i0 as f64)
    }

    /// Multilinear interpolation of a `width`-component field stored
    /// node-major (`field[node * width + c]`).
    #[inline]
    pub fn interpolate(&self, field: &[f64], width: usize, y: &[f64], out: &mut [f64]) {
        out[..width].iter_mut().for_each(|o| *o = 0.0);
        let m = self.nodes_per_axis;
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..self.dim {
            let (i, w) = self.locate(y[a]);
            base[a] = i;
            frac[a] = w;
        }
        for corner in 0..(1usize << self.dim) {
            let mut weight = 1.0;
            let mut idx = 0;
            for a in 0..self.dim {
                let bit = (corner >> (self.dim - 1 - a)) & 1;
                weight *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                idx = idx * m + base[a] + bit;
            }
            if weight == 0.0 {
                continue;
            }
            let src = &field[idx * width..(idx + 1) * width];
            for c in 0..width {
                out[c] += weight * src[c];
            }
        }
    }

    pub fn interpolate_scalar(&self, field: &[f64], y: &[f64]) -> f64 {
        let mut out = [0.0];
        self.interpolate(field, 1, y, &mut out);
        out[0]
    }

    /// Central differences in the interior, one-sided at the box faces.
    pub fn gradient(&self, values: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let m = self.nodes_per_axis;
        let h = self.spacing();
        let mut out = vec![0.0; values.len() * d];
        let mut multi = vec![0; d];
        for idx in 0..values.len() {
            self.multi_index(idx, &mut multi);
            for a in 0..d {
                let stride = m.pow((d - 1 - a) as u32);
                let i = multi[a];
                out[idx * d + a] = if i == 0 {
                    (values[idx + stride] - values[idx]) / h
                } else if i == m - 1 {
                    (values[idx] - values[idx - stride]) / h
                } else {
                    (values[idx + stride] - values[idx - stride]) / (2.0 * h)
                };
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_exact_at_nodes_and_for_multilinear_fields() {
        let g = TensorGrid::new(2, 5, 2.0).unwrap();
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
        let vals: Vec<f64> = g.nodes().iter().map(|x| f(x)).collect();
        for (i, x) in g.nodes().iter().enumerate() {
            assert_eq!(g.interpolate_scalar(&vals, x), vals[i]);
        }
        for y in [[0.3, -1.7], [1.99, 0.01], [-0.5, 0.5]] {
            assert!((g.interpolate_scalar(&vals, &y) - f(&y)).abs() < 1e-12);
        }
        // constant continuation outside the box
        let inside = g.interpolate_scalar(&vals, &[2.0, 0.3]);
        assert_eq!(g.interpolate_scalar(&vals, &[9.0, 0.3]), inside);
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let g = TensorGrid::new(3, 5, 1.0).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|x| 3.0 * x[0] - x[1] + 0.25 * x[2]).collect();
        let grad = g.gradient(&vals);
        for c in grad.chunks(3) {
            assert!((c[0] - 3.0).abs() < 1e-12 && (c[1] + 1.0).abs() < 1e-12 && (c[2] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn index_round_trip() {
        let g = TensorGrid::new(3, 7, 1.0).unwrap();
        let mut multi = [0; 3];
        for idx in 0..g.len() {
            g.multi_index(idx, &mut multi);
            assert_eq!(g.flat_index(&multi), idx);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TensorGrid::new(4, 5, 1.0).is_err());
        assert!(TensorGrid::new(1, 4, 1.0).is_err());
        assert!(TensorGrid::new(1, 5, 0.0).is_err());
    }
}
