use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sample `(Xⁱ, Zⁱ, Yⁱ)`, `i = 1..n`, stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    /// `x[j]` and `z[j]` are the columns of component `j`.
    pub fn new(x: Vec<Vec<f64>>, z: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Data("empty sample".into()));
        }
        if x.is_empty() || x.len() != z.len() {
            return Err(Error::Data(format!(
                "need one X and one Z column per component, got {} and {}",
                x.len(),
                z.len()
            )));
        }
        for (j, (xc, zc)) in x.iter().zip(&z).enumerate() {
            if xc.len() != n || zc.len() != n {
                return Err(Error::Data(format!("component {j} has mismatched column length")));
            }
            if let Some((i, v)) = xc.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Data(format!("X[{i}][{j}] = {v} lies outside [0, 1]")));
            }
            if let Some((i, v)) = zc.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Data(format!("Z[{i}][{j}] = {v} is not finite")));
            }
        }
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!("Y[{i}] = {v} is not finite")));
        }
        Ok(Dataset { x, z, y })
    }

    /// Builds a dataset from rows `(x, z, y)`.
    pub fn from_rows(rows: &[(Vec<f64>, Vec<f64>, f64)]) -> Result<Self> {
        let d = rows.first().map(|r| r.0.len()).unwrap_or(0);
        let mut x = vec![Vec::with_capacity(rows.len()); d];
        let mut z = vec![Vec::with_capacity(rows.len()); d];
        let mut y = Vec::with_capacity(rows.len());
        for (i, (xr, zr, yr)) in rows.iter().enumerate() {
            if xr.len() != d || zr.len() != d {
                return Err(Error::Data(format!("row {i} has the wrong number of components")));
            }
            for j in 0..d {
                x[j].push(xr[j]);
                z[j].push(zr[j]);
            }
            y.push(*yr);
        }
        Dataset::new(x, z, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self, j: usize) -> &[f64] {
        &self.x[j]
    }

    pub fn z(&self, j: usize) -> &[f64] {
        &self.z[j]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Same covariates with a different response vector.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Data(format!(
                "response has length {}, expected {}",
                y.len(),
                self.n()
            )));
        }
        Dataset::new(self.x.clone(), self.z.clone(), y)
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |col: &Vec<f64>| idx.iter().map(|&i| col[i]).collect::<Vec<_>>();
        Dataset {
            x: self.x.iter().map(pick).collect(),
            z: self.z.iter().map(pick).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// `true` when column `Z_j` takes a single value.
    pub fn z_is_constant(&self, j: usize) -> bool {
        let z = &self.z[j];
        z.iter().all(|v| *v == z[0])
    }

    /// Local polynomial fits of order `order` need `n > d(order + 1)`.
    pub fn check_order(&self, order: usize) -> Result<()> {
        let need = self.d() * (order + 1);
        if self.n() <= need {
            return Err(Error::Data(format!(
                "n = {} is too small for {} components at order {order} (need more than {need})",
                self.n(),
                self.d()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_covariates_outside_unit_interval() {
        let err = Dataset::new(vec![vec![0.2, 1.5]], vec![vec![1.0, 1.0]], vec![0.0, 1.0]);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn rejects_ragged_columns() {
        assert!(Dataset::new(vec![vec![0.2]], vec![vec![1.0, 1.0]], vec![0.0, 1.0]).is_err());
        assert!(Dataset::new(vec![vec![0.2, 0.3]], vec![], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn order_requirement() {
        let data = Dataset::new(
            vec![vec![0.1, 0.5, 0.9], vec![0.3, 0.2, 0.1]],
            vec![vec![1.0; 3], vec![2.0, 1.0, 0.5]],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        assert!(data.check_order(0).is_ok());
        assert!(data.check_order(1).is_err());
        assert!(data.z_is_constant(0));
        assert!(!data.z_is_constant(1));
    }

    #[test]
    fn rows_and_subsets() {
        let data = Dataset::from_rows(&[
            (vec![0.1, 0.2], vec![1.0, 3.0], 5.0),
            (vec![0.4, 0.6], vec![1.0, -1.0], 7.0),
            (vec![0.9, 0.0], vec![1.0, 0.5], 9.0),
        ])
        .unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.x(1), &[0.2, 0.6, 0.0]);
        let sub = data.subset(&[2, 0]);
        assert_eq!(sub.y(), &[9.0, 5.0]);
        assert_eq!(sub.z(1), &[0.5, 3.0]);
    }
}
