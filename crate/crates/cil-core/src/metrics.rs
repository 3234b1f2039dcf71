//! Evaluation bookkeeping: the lower-triangular accuracy matrix, its derived
//! scalar metrics, and feature-geometry snapshots for stationarity analysis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower-triangular matrix `a[i][j]` (j ≤ i): test accuracy on task j after
/// training through task i. Row i has i+1 entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    t_total: usize,
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    /// An empty matrix expecting `t_total` rows.
    pub fn new(t_total: usize) -> Self {
        AccuracyMatrix {
            t_total,
            rows: Vec::with_capacity(t_total),
        }
    }

    /// A complete matrix from already-collected rows; `t_total` becomes the
    /// row count, so the engine never needs the stream length up front.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = AccuracyMatrix::new(rows.len());
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    /// Appends the row recorded after training task `rows.len()`.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if self.rows.len() == self.t_total {
            return Err(Error::usage(format!(
                "matrix already has all {} rows",
                self.t_total
            )));
        }
        if row.len() != self.rows.len() + 1 {
            return Err(Error::usage(format!(
                "row {} must have {} entries, got {}",
                self.rows.len(),
                self.rows.len() + 1,
                row.len()
            )));
        }
        if let Some(&bad) = row.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::usage(format!("accuracy {bad} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn t_total(&self) -> usize {
        self.t_total
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.t_total
    }

    /// Mean of the last row: the average accuracy over all tasks at stream
    /// end. Errors unless the matrix is complete.
    pub fn final_average_accuracy(&self) -> Result<f64> {
        if !self.is_complete() || self.t_total == 0 {
            return Err(Error::usage(format!(
                "matrix has {} of {} rows",
                self.rows.len(),
                self.t_total
            )));
        }
        let last = &self.rows[self.t_total - 1];
        Ok(last.iter().sum::<f64>() / last.len() as f64)
    }

    /// Per-stage averages: value i is the mean of row i, i.e. average
    /// accuracy over tasks seen so far. The last point equals
    /// [`AccuracyMatrix::final_average_accuracy`] by definition.
    pub fn evolution_curve(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect()
    }
}

/// Per-class feature geometry at one point in the stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGeometry {
    /// Unit-normalized mean feature direction over the class's test items.
    pub direction: Vec<f64>,
    /// Cosine between `direction` and the class's weight row.
    pub alignment: f64,
}

/// Geometry of every seen class after training some task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySnapshot {
    /// Index of the task whose training this snapshot follows.
    pub after_task: usize,
    pub classes: BTreeMap<usize, ClassGeometry>,
    /// Classes that had to be skipped (no test items / degenerate mean).
    pub warnings: Vec<String>,
}

/// Angle in radians between each common class's mean-feature directions in
/// two snapshots. Classes present in only one snapshot are omitted; disjoint
/// snapshots give an empty map.
pub fn drift(a: &GeometrySnapshot, b: &GeometrySnapshot) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for (&c, ga) in &a.classes {
        if let Some(gb) = b.classes.get(&c) {
            let dot: f64 = ga
                .direction
                .iter()
                .zip(&gb.direction)
                .map(|(x, y)| x * y)
                .sum();
            out.insert(c, dot.clamp(-1.0, 1.0).acos());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> AccuracyMatrix {
        let mut m = AccuracyMatrix::new(rows.len());
        for r in rows {
            m.push_row(r.to_vec()).unwrap();
        }
        m
    }

    #[test]
    fn final_average_is_the_mean_of_the_last_row() {
        let m = matrix(&[&[1.0], &[0.9, 0.7]]);
        assert!((m.final_average_accuracy().unwrap() - 0.8).abs() < 1e-15);
        let perfect = matrix(&[&[1.0], &[1.0, 1.0], &[1.0, 1.0, 1.0]]);
        assert_eq!(perfect.final_average_accuracy().unwrap(), 1.0);
    }

    #[test]
    fn incomplete_matrix_refuses_the_final_average() {
        let mut m = AccuracyMatrix::new(3);
        m.push_row(vec![0.5]).unwrap();
        assert!(matches!(m.final_average_accuracy(), Err(Error::Usage(_))));
    }

    #[test]
    fn evolution_last_point_equals_final_average_exactly() {
        let m = matrix(&[&[0.83], &[0.61, 0.79], &[0.55, 0.69, 0.91]]);
        let curve = m.evolution_curve();
        assert_eq!(curve.len(), 3);
        assert_eq!(*curve.last().unwrap(), m.final_average_accuracy().unwrap());
        assert_eq!(curve[0], 0.83);
        assert!((curve[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn single_task_matrix_is_its_own_summary() {
        let m = matrix(&[&[0.42]]);
        assert_eq!(m.final_average_accuracy().unwrap(), 0.42);
        assert_eq!(m.evolution_curve(), vec![0.42]);
    }

    #[test]
    fn wrong_row_lengths_and_out_of_range_entries_are_rejected() {
        let mut m = AccuracyMatrix::new(2);
        assert!(m.push_row(vec![0.5, 0.5]).is_err());
        assert!(m.push_row(vec![1.5]).is_err());
        m.push_row(vec![1.0]).unwrap();
        m.push_row(vec![0.0, 1.0]).unwrap();
        assert!(m.push_row(vec![0.1, 0.2, 0.3]).is_err(), "matrix full");
    }

    fn snap(after: usize, entries: &[(usize, Vec<f64>)]) -> GeometrySnapshot {
        GeometrySnapshot {
            after_task: after,
            classes: entries
                .iter()
                .map(|(c, d)| {
                    (
                        *c,
                        ClassGeometry {
                            direction: d.clone(),
                            alignment: 1.0,
                        },
                    )
                })
                .collect(),
            warnings: Vec::new(),
        }
    }

    #[test]
    fn identical_snapshots_have_zero_drift() {
        let a = snap(0, &[(0, vec![1.0, 0.0]), (1, vec![0.0, 1.0])]);
        let d = drift(&a, &a);
        assert_eq!(d.len(), 2);
        assert!(d.values().all(|&v| v == 0.0));
    }

    #[test]
    fn orthogonal_directions_drift_by_half_pi() {
        let a = snap(0, &[(0, vec![1.0, 0.0])]);
        let b = snap(1, &[(0, vec![0.0, 1.0])]);
        let d = drift(&a, &b);
        assert!((d[&0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn disjoint_snapshots_have_empty_drift() {
        let a = snap(0, &[(0, vec![1.0, 0.0])]);
        let b = snap(1, &[(1, vec![1.0, 0.0])]);
        assert!(drift(&a, &b).is_empty());
    }

    #[test]
    fn antipodal_directions_drift_by_pi_despite_rounding() {
        // dot can land epsilon outside [-1, 1]; the clamp keeps acos defined
        let a = snap(0, &[(0, vec![1.0 + 1e-17, 0.0])]);
        let b = snap(1, &[(0, vec![-1.0, 0.0])]);
        let d = drift(&a, &b);
        assert!((d[&0] - std::f64::consts::PI).abs() < 1e-7);
    }
}
