//! CSV formats.
//!
//! Grid tables have the grid in the first column (`x` for densities, `t` for
//! transformed, quantile or CDF functions) and one column per subject, with
//! subject ids in the header. Raw samples are long-format `subject_id,value`
//! rows. Responses are `subject_id,y` rows; an empty or `NA` cell marks a
//! missing response. Numbers are written with 17 significant digits.

use std::io::{Read, Write};

use crate::density::{normalize, DensityFn, GridFn, GridFunction};
use crate::error::{DensError, Result};
use crate::grid::Grid;

/// Relative tolerance for recognising a uniform grid column.
const GRID_TOL: f64 = 1e-9;

fn csv_err(e: csv::Error) -> DensError {
    DensError::InvalidArgument(format!("csv: {e}"))
}

fn parse_num(s: &str, row: usize, col: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| DensError::InvalidArgument(format!("row {row}, column {col}: '{s}' is not a number")))
}

pub fn format_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Functions sharing one grid, one column per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub axis: String,
    pub grid: Grid,
    pub ids: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl GridTable {
    pub fn from_functions<G: GridFunction>(axis: &str, ids: Vec<String>, functions: &[G]) -> Result<Self> {
        let grid = *functions.first().ok_or(DensError::EmptySample)?.grid();
        if functions.iter().any(|f| f.grid() != &grid) {
            return Err(DensError::GridMismatch);
        }
        if ids.len() != functions.len() {
            return Err(DensError::InvalidArgument(format!("{} ids for {} functions", ids.len(), functions.len())));
        }
        Ok(Self { axis: axis.to_string(), grid, ids, columns: functions.iter().map(|f| f.values().to_vec()).collect() })
    }

    /// Ids `1..=n`.
    pub fn default_ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.len() < 2 {
            return Err(DensError::InvalidArgument("grid table needs a grid column and at least one subject".into()));
        }
        let axis = header[0].to_string();
        let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut points = Vec::new();
        let mut columns = vec![Vec::new(); ids.len()];
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != header.len() {
                return Err(DensError::InvalidArgument(format!("row {} has {} fields, expected {}", r + 2, rec.len(), header.len())));
            }
            points.push(parse_num(&rec[0], r + 2, 1)?);
            for (c, col) in columns.iter_mut().enumerate() {
                col.push(parse_num(&rec[c + 1], r + 2, c + 2)?);
            }
        }
        let grid = uniform_grid(&points)?;
        Ok(Self { axis, grid, ids, columns })
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.axis.clone()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (j, x) in self.grid.points().into_iter().enumerate() {
            let mut row = vec![format_num(x)];
            row.extend(self.columns.iter().map(|c| format_num(c[j])));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| DensError::InvalidArgument(format!("write: {e}")))?;
        Ok(())
    }

    /// Columns as densities, each floored and normalized.
    pub fn densities(&self, floor: f64) -> Result<Vec<DensityFn>> {
        self.columns.iter().map(|c| normalize(&self.grid, c, floor)).collect()
    }

    pub fn functions(&self) -> Result<Vec<GridFn>> {
        self.columns.iter().map(|c| GridFn::new(self.grid, c.clone())).collect()
    }
}

/// The uniform grid through `points`, if they are equally spaced.
fn uniform_grid(points: &[f64]) -> Result<Grid> {
    if points.len() < 2 {
        return Err(DensError::InvalidGrid(format!("{} grid rows", points.len())));
    }
    let grid = Grid::new(points[0], points[points.len() - 1], points.len())?;
    let tol = GRID_TOL * grid.width();
    for (j, (&p, q)) in points.iter().zip(grid.points()).enumerate() {
        if (p - q).abs() > tol {
            return Err(DensError::InvalidGrid(format!("grid column is not uniform at row {}", j + 2)));
        }
    }
    Ok(grid)
}

/// Raw observations of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSample {
    pub id: String,
    pub values: Vec<f64>,
}

/// Reads `subject_id,value` rows, grouping by id in order of first appearance.
pub fn read_samples<R: Read>(reader: R) -> Result<Vec<SubjectSample>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<SubjectSample> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 2 {
            return Err(DensError::InvalidArgument(format!("row {} must have 2 fields", r + 2)));
        }
        let v = parse_num(&rec[1], r + 2, 2)?;
        let id = rec[0].to_string();
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            out.push(SubjectSample { id, values: Vec::new() });
            out.len() - 1
        });
        out[slot].values.push(v);
    }
    if out.is_empty() {
        return Err(DensError::EmptySample);
    }
    Ok(out)
}

pub fn write_samples<W: Write>(writer: W, samples: &[SubjectSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "value"]).map_err(csv_err)?;
    for s in samples {
        for v in &s.values {
            w.write_record([s.id.as_str(), &format_num(*v)]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| DensError::InvalidArgument(format!("write: {e}")))?;
    Ok(())
}

/// Reads `subject_id,y` rows; empty and `NA` cells are missing.
pub fn read_responses<R: Read>(reader: R) -> Result<Vec<(String, Option<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 2 {
            return Err(DensError::InvalidArgument(format!("row {} must have 2 fields", r + 2)));
        }
        let cell = &rec[1];
        let y = if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
            None
        } else {
            Some(parse_num(cell, r + 2, 2)?)
        };
        out.push((rec[0].to_string(), y));
    }
    Ok(out)
}

/// Responses reordered to match `ids`; subjects without a row are missing.
pub fn align_responses(ids: &[String], responses: &[(String, Option<f64>)]) -> Vec<Option<f64>> {
    let map: std::collections::HashMap<&str, Option<f64>> = responses.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    ids.iter().map(|id| map.get(id.as_str()).copied().flatten()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::truncated_normal_density;
    use proptest::prelude::*;

    #[test]
    fn density_table_round_trip() {
        let grid = Grid::new(-5.0, 5.0, 512).unwrap();
        let fs: Vec<DensityFn> = [-1.0, 0.3, 2.2].iter().map(|&m| truncated_normal_density(m, 0.7, -5.0, 5.0, &grid).unwrap()).collect();
        let t = GridTable::from_functions("x", GridTable::default_ids(3), &fs).unwrap();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = GridTable::read(buf.as_slice()).unwrap();
        assert_eq!(back.axis, "x");
        assert_eq!(back.ids, vec!["1", "2", "3"]);
        let ds = back.densities(1e-6).unwrap();
        for (a, b) in ds.iter().zip(&fs) {
            assert_eq!(a.grid(), b.grid());
            for (u, v) in a.values().iter().zip(b.values()) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn non_uniform_grid_is_rejected() {
        let csv = "x,a\n0,1\n0.3,1\n1,1\n";
        assert!(matches!(GridTable::read(csv.as_bytes()), Err(DensError::InvalidGrid(_))));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let csv = "x,a,b\n0,1,1\n1,1\n";
        assert!(GridTable::read(csv.as_bytes()).is_err());
    }

    #[test]
    fn samples_group_by_first_appearance() {
        let csv = "subject_id,value\nb,1.5\na,2\nb,-0.25\n";
        let s = read_samples(csv.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].id, "b");
        assert_eq!(s[0].values, vec![1.5, -0.25]);
        let mut buf = Vec::new();
        write_samples(&mut buf, &s).unwrap();
        assert_eq!(read_samples(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn responses_with_missing_values() {
        let csv = "subject_id,y\n1,0.5\n2,\n3,NA\n4,-2\n";
        let r = read_responses(csv.as_bytes()).unwrap();
        assert_eq!(r[1].1, None);
        assert_eq!(r[2].1, None);
        let ids: Vec<String> = ["4", "1", "9"].iter().map(|s| s.to_string()).collect();
        assert_eq!(align_responses(&ids, &r), vec![Some(-2.0), Some(0.5), None]);
    }

    proptest! {
        #[test]
        fn numbers_survive_formatting(v in proptest::num::f64::NORMAL) {
            prop_assert_eq!(format_num(v).parse::<f64>().unwrap(), v);
        }
    }
}
