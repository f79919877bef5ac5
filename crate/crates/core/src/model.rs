//! Partitioned server state and the control matrix of admission probabilities.
//!
//! Partitions and traffic classes are 0-based throughout the library. Policy
//! columns of a [`ControlMatrix`] are addressed 1-based, matching how they are
//! referred to on the command line and in result files.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Default column-sum tolerance. Two-decimal rounding leaves some columns of
/// the shipped matrix at 0.99 and 1.02.
pub const DEFAULT_SUM_TOLERANCE: f64 = 0.05;

/// Floating-point slack added on top of any requested tolerance so that
/// columns of exact hundredths summing to 1 pass at tolerance 0.
const SUM_SLACK: f64 = 1e-9;

const TABLE1_CSV: &str = include_str!("../data/table1.csv");

/// Ports in each section and number of sections of the reference server.
pub const REFERENCE_PORTS_PER_SECTION: u32 = 10;
pub const REFERENCE_SECTIONS: usize = 20;

/// A k x n grid of admission probabilities. Rows are partitions (one per
/// traffic class), columns are alternative policy vectors.
///
/// Construction only checks the shape; range and normalization are reported by
/// [`validate_control_matrix`] so that invalid inputs can be diagnosed rather
/// than rejected outright.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMatrix {
    rows: usize,
    cols: usize,
    // row-major
    entries: Vec<f64>,
}

impl ControlMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config(format!(
                "control matrix must have positive dimensions, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::config(format!(
                "control matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(ControlMatrix { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::config(format!(
                "row {} has {} columns, expected {cols}",
                i + 1,
                r.len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// The 20 x 10 reference matrix shipped with the crate.
    pub fn table1() -> Self {
        Self::from_csv_str(TABLE1_CSV).expect("bundled control matrix parses")
    }

    /// Number of partitions (k).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of policy columns (n).
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, col))
    }

    pub fn column_sum(&self, col: usize) -> f64 {
        self.column(col).sum()
    }

    /// Parses headerless comma-separated rows of decimal probabilities.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|cell| {
                    let cell = cell.trim();
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            line: lineno + 1,
                            message: format!("'{cell}' is not a finite number"),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first().map(Vec::len) {
                if row.len() != first {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("expected {first} columns, found {}", row.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "control matrix file is empty".into(),
            });
        }
        Self::from_rows(&rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    /// Serializes with one row per line, shortest round-trip decimal format.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.get(r, c).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// A single problem found by [`validate_control_matrix`]. Indices are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    ColumnSum { col: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EntryOutOfRange { row, col, value } => {
                write!(f, "entry ({row},{col}) = {value} outside [0,1]")
            }
            Violation::ColumnSum { col, sum } => {
                write!(f, "column {col} sums to {sum}")
            }
        }
    }
}

/// Lists out-of-range entries and columns whose sum deviates from 1 by more
/// than `tolerance`. An empty list means the matrix is valid.
pub fn validate_control_matrix(matrix: &ControlMatrix, tolerance: f64) -> Vec<Violation> {
    let mut violations = Vec::new();
    for r in 0..matrix.rows() {
        for c in 0..matrix.cols() {
            let value = matrix.get(r, c);
            if !(0.0..=1.0).contains(&value) {
                violations.push(Violation::EntryOutOfRange {
                    row: r + 1,
                    col: c + 1,
                    value,
                });
            }
        }
    }
    for c in 0..matrix.cols() {
        let sum = matrix.column_sum(c);
        if (sum - 1.0).abs() > tolerance + SUM_SLACK {
            violations.push(Violation::ColumnSum { col: c + 1, sum });
        }
    }
    violations
}

/// Per-partition admission probabilities: one column of a control matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyVector(Vec<f64>);

impl PolicyVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::config("policy vector is empty"));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::config(format!("policy entry {} = {p} outside [0,1]", i + 1)));
        }
        Ok(PolicyVector(probs))
    }

    /// Every partition admits with probability 1: a pure loss system.
    pub fn admit_all(k: usize) -> Self {
        PolicyVector(vec![1.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, partition: usize) -> f64 {
        self.0[partition]
    }
}

/// Returns column `column` (1-based) of `matrix` in row order.
pub fn select_policy_vector(matrix: &ControlMatrix, column: usize) -> Result<PolicyVector> {
    if column == 0 || column > matrix.cols() {
        return Err(Error::config(format!(
            "policy column {column} outside 1..={}",
            matrix.cols()
        )));
    }
    PolicyVector::new(matrix.column(column - 1).collect())
}

/// Port capacities C_j and occupancies Q_j of each partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    capacities: Vec<u32>,
    occupancies: Vec<u32>,
    /// Simulation time in seconds.
    pub clock: f64,
}

impl ServerState {
    pub fn new(capacities: Vec<u32>) -> Result<Self> {
        if capacities.is_empty() {
            return Err(Error::config("server needs at least one partition"));
        }
        let occupancies = vec![0; capacities.len()];
        Ok(ServerState {
            capacities,
            occupancies,
            clock: 0.0,
        })
    }

    /// `sections` partitions of `ports` each.
    pub fn uniform(sections: usize, ports: u32) -> Result<Self> {
        Self::new(vec![ports; sections])
    }

    pub fn partitions(&self) -> usize {
        self.capacities.len()
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn occupancies(&self) -> &[u32] {
        &self.occupancies
    }

    pub fn total_capacity(&self) -> u64 {
        self.capacities.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn total_occupancy(&self) -> u64 {
        self.occupancies.iter().map(|&q| u64::from(q)).sum()
    }

    pub fn has_free_port(&self, partition: usize) -> bool {
        self.occupancies[partition] < self.capacities[partition]
    }

    pub fn is_full(&self) -> bool {
        (0..self.partitions()).all(|j| !self.has_free_port(j))
    }

    /// Overwrites the occupancy vector. Fails if any entry exceeds its capacity.
    pub fn set_occupancies(&mut self, occupancies: &[u32]) -> Result<()> {
        if occupancies.len() != self.capacities.len() {
            return Err(Error::config(format!(
                "occupancy vector has {} entries for {} partitions",
                occupancies.len(),
                self.capacities.len()
            )));
        }
        if let Some(j) = (0..occupancies.len()).find(|&j| occupancies[j] > self.capacities[j]) {
            return Err(Error::config(format!(
                "occupancy {} exceeds capacity {} at partition {j}",
                occupancies[j], self.capacities[j]
            )));
        }
        self.occupancies.copy_from_slice(occupancies);
        Ok(())
    }

    pub(crate) fn occupy(&mut self, partition: usize) {
        debug_assert!(self.has_free_port(partition));
        self.occupancies[partition] += 1;
    }

    pub(crate) fn vacate(&mut self, partition: usize) -> Result<()> {
        match self.occupancies.get_mut(partition) {
            Some(q) if *q > 0 => {
                *q -= 1;
                Ok(())
            }
            Some(_) => Err(Error::Fault(format!("release on empty partition {partition}"))),
            None => Err(Error::Fault(format!("no partition {partition}"))),
        }
    }
}

/// A class of requests: index into the partition list and its Poisson rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficClass {
    pub index: usize,
    /// Requests per second.
    pub arrival_rate: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_server_layout() {
        let s = ServerState::uniform(REFERENCE_SECTIONS, REFERENCE_PORTS_PER_SECTION).unwrap();
        assert_eq!(s.total_capacity(), 200);
        assert!(s.occupancies().iter().all(|&q| q == 0));
        assert_eq!(s.clock, 0.0);
    }

    #[test]
    fn zero_capacity_state_is_valid_and_full() {
        let s = ServerState::new(vec![0]).unwrap();
        assert!(s.is_full());
    }

    #[test]
    fn empty_capacity_list_rejected() {
        assert!(matches!(ServerState::new(vec![]), Err(Error::Config(_))));
    }

    #[test]
    fn vacate_empty_partition_faults() {
        let mut s = ServerState::new(vec![1]).unwrap();
        assert!(matches!(s.vacate(0), Err(Error::Fault(_))));
    }

    #[test]
    fn table1_columns() {
        let m = ControlMatrix::table1();
        assert_eq!((m.rows(), m.cols()), (20, 10));
        // Column sums computed with exact rational arithmetic over the fixture.
        let expected = [1.0, 1.02, 1.0, 0.99, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        for (c, want) in expected.iter().enumerate() {
            assert!((m.column_sum(c) - want).abs() < 1e-9, "column {}", c + 1);
        }
        assert!(validate_control_matrix(&m, DEFAULT_SUM_TOLERANCE).is_empty());
        // Column 2 is off by 0.02 and column 4 by 0.01.
        let strict = validate_control_matrix(&m, 0.0);
        let cols: Vec<usize> = strict
            .iter()
            .map(|v| match v {
                Violation::ColumnSum { col, .. } => *col,
                other => panic!("unexpected {other}"),
            })
            .collect();
        assert_eq!(cols, vec![2, 4]);
    }

    #[test]
    fn out_of_range_entry_reported_once() {
        let m = ControlMatrix::from_rows(&[vec![1.5, 0.5], vec![0.0, 0.5]]).unwrap();
        let v = validate_control_matrix(&m, 0.05);
        let range: Vec<_> = v
            .iter()
            .filter(|x| matches!(x, Violation::EntryOutOfRange { .. }))
            .collect();
        assert_eq!(
            range,
            vec![&Violation::EntryOutOfRange {
                row: 1,
                col: 1,
                value: 1.5
            }]
        );
        // The same column also misses the sum check.
        assert!(v.contains(&Violation::ColumnSum { col: 1, sum: 1.5 }));
    }

    #[test]
    fn zero_column_fails_sum_check() {
        let m = ControlMatrix::from_rows(&[vec![0.0, 0.5], vec![0.0, 0.5]]).unwrap();
        assert_eq!(
            validate_control_matrix(&m, 0.05),
            vec![Violation::ColumnSum { col: 1, sum: 0.0 }]
        );
    }

    #[test]
    fn validation_is_idempotent() {
        let m = ControlMatrix::from_rows(&[vec![2.0, 0.1], vec![0.3, 0.1]]).unwrap();
        assert_eq!(validate_control_matrix(&m, 0.0), validate_control_matrix(&m, 0.0));
    }

    #[test]
    fn policy_columns() {
        let m = ControlMatrix::table1();
        let col2 = select_policy_vector(&m, 2).unwrap();
        assert_eq!(col2.len(), 20);
        assert_eq!(&col2.probs()[..3], &[0.04, 0.04, 0.08]);
        assert_eq!(col2.probs()[19], 0.07);
        let col1 = select_policy_vector(&m, 1).unwrap();
        assert_eq!(&col1.probs()[..3], &[0.04, 0.04, 0.09]);
        assert!(select_policy_vector(&m, 11).is_err());
        assert!(select_policy_vector(&m, 0).is_err());
    }

    #[test]
    fn table1_round_trips_byte_for_byte() {
        let m = ControlMatrix::table1();
        assert_eq!(m.to_csv_string(), TABLE1_CSV);
    }

    #[test]
    fn ragged_csv_rejected_with_line() {
        let err = ControlMatrix::from_csv_str("0.5,0.5\n0.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = ControlMatrix::from_csv_str("0.5,abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
