use nalgebra::DMatrix;
use serde::Serialize;

/// Relative threshold below which an entry counts as zero.
pub const DEFAULT_STRUCTURE_TOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub passed: bool,
    /// Surviving (above-threshold) entries per column.
    pub column_counts: Vec<usize>,
    /// Columns with more than one surviving entry.
    pub violating_columns: Vec<usize>,
    /// Rows of the effective matrix with no surviving entry anywhere.
    pub uncovered_rows: Vec<usize>,
}

/// Checks whether `effective = L · L̂` (`d × m`) has the form of a scaled
/// selection: after zeroing entries below `tol · max|entry|`, every column
/// holds at most one entry, at least `d` columns hold exactly one, and every
/// row is hit. For square matrices this is the `D · P` form.
pub fn disentanglement_check(effective: &DMatrix<f64>, tol: f64) -> StructureReport {
    let (d, m) = effective.shape();
    let threshold = tol * effective.amax();
    let survives = |x: f64| x.abs() > threshold;
    let column_counts: Vec<usize> = (0..m)
        .map(|j| effective.column(j).iter().filter(|&&x| survives(x)).count())
        .collect();
    let violating_columns: Vec<usize> = (0..m).filter(|&j| column_counts[j] > 1).collect();
    let uncovered_rows: Vec<usize> = (0..d)
        .filter(|&i| !effective.row(i).iter().any(|&x| survives(x)))
        .collect();
    let singles = column_counts.iter().filter(|&&c| c == 1).count();
    let finite = effective.iter().all(|x| x.is_finite());
    StructureReport {
        passed: finite && violating_columns.is_empty() && singles >= d && uncovered_rows.is_empty(),
        column_counts,
        violating_columns,
        uncovered_rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_passes() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, -1.0, 0.5]));
        assert!(disentanglement_check(&m, DEFAULT_STRUCTURE_TOL).passed);
    }

    #[test]
    fn dense_example_mixing_fails_everywhere() {
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        let r = disentanglement_check(&l, DEFAULT_STRUCTURE_TOL);
        assert!(!r.passed);
        assert_eq!(r.violating_columns, vec![0, 1, 2]);
    }

    #[test]
    fn small_leakage_below_tolerance_is_ignored() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -2.0, 0.01]);
        assert!(disentanglement_check(&m, 1e-2).passed);
        assert!(!disentanglement_check(&m, 1e-3).passed);
    }

    #[test]
    fn zero_and_redundant_columns() {
        // d = 2, m = 3: one zero column is allowed
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        assert!(disentanglement_check(&m, 1e-2).passed);
        // a repeated row with a missing one is not
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let r = disentanglement_check(&m, 1e-2);
        assert!(!r.passed);
        assert_eq!(r.uncovered_rows, vec![1]);
        assert!(!disentanglement_check(&DMatrix::zeros(2, 2), 1e-2).passed);
    }
}
