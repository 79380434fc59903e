//! Typed columnar data, CSV ingestion and the series-start structure used by
//! the AR(1) machinery.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GammError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Factor,
    OrderedFactor,
    Boolean,
}

impl ColumnKind {
    pub fn name(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Factor => "factor",
            ColumnKind::OrderedFactor => "ordered_factor",
            ColumnKind::Boolean => "boolean",
        }
    }

    pub fn is_factor(self) -> bool {
        matches!(self, ColumnKind::Factor | ColumnKind::OrderedFactor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// Level codes index into `levels`; the first level is the reference level.
    Factor {
        codes: Vec<usize>,
        levels: Vec<String>,
        ordered: bool,
    },
    Boolean(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Numeric(values),
        }
    }

    pub fn boolean(name: impl Into<String>, values: Vec<bool>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Boolean(values),
        }
    }

    /// Factor with levels in order of first appearance.
    pub fn factor<S: AsRef<str>>(name: impl Into<String>, values: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut lookup: HashMap<String, usize> = HashMap::new();
        let codes = values
            .iter()
            .map(|v| {
                let v = v.as_ref();
                *lookup.entry(v.to_string()).or_insert_with(|| {
                    levels.push(v.to_string());
                    levels.len() - 1
                })
            })
            .collect();
        Column {
            name: name.into(),
            data: ColumnData::Factor {
                codes,
                levels,
                ordered: false,
            },
        }
    }

    /// Factor with an explicit level order. Values outside `levels` are an error.
    pub fn factor_with_levels<S: AsRef<str>>(
        name: impl Into<String>,
        values: &[S],
        levels: Vec<String>,
        ordered: bool,
    ) -> Result<Self> {
        let name = name.into();
        let lookup: HashMap<&str, usize> = levels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        if lookup.len() != levels.len() {
            return Err(GammError::Data(format!(
                "column `{name}`: duplicate entries in level list"
            )));
        }
        let codes = values
            .iter()
            .map(|v| {
                lookup.get(v.as_ref()).copied().ok_or_else(|| {
                    GammError::Data(format!(
                        "column `{name}`: value `{}` is not among the declared levels",
                        v.as_ref()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Column {
            name,
            data: ColumnData::Factor {
                codes,
                levels,
                ordered,
            },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn kind(&self) -> ColumnKind {
        match &self.data {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Factor { ordered: false, .. } => ColumnKind::Factor,
            ColumnData::Factor { ordered: true, .. } => ColumnKind::OrderedFactor,
            ColumnData::Boolean(_) => ColumnKind::Boolean,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Factor { codes, .. } => codes.len(),
            ColumnData::Boolean(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<&[bool]> {
        match &self.data {
            ColumnData::Boolean(v) => Some(v),
            _ => None,
        }
    }

    /// Level codes and level names for factor columns.
    pub fn as_factor(&self) -> Option<(&[usize], &[String])> {
        match &self.data {
            ColumnData::Factor { codes, levels, .. } => Some((codes, levels)),
            _ => None,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        self.as_factor().map(|(_, l)| l)
    }

    /// Cell rendered the way the CSV writer emits it.
    pub fn cell(&self, row: usize) -> String {
        match &self.data {
            ColumnData::Numeric(v) => format!("{}", v[row]),
            ColumnData::Factor { codes, levels, .. } => levels[codes[row]].clone(),
            ColumnData::Boolean(v) => if v[row] { "TRUE" } else { "FALSE" }.to_string(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Factor {
                codes,
                levels,
                ordered,
            } => ColumnData::Factor {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                levels: levels.clone(),
                ordered: *ordered,
            },
            ColumnData::Boolean(v) => ColumnData::Boolean(rows.iter().map(|&r| v[r]).collect()),
        };
        Column {
            name: self.name.clone(),
            data,
        }
    }
}

/// Immutable table of equally long, uniquely named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(GammError::Data(format!("duplicate column name `{}`", c.name)));
            }
            if c.len() != n_rows {
                return Err(GammError::Data(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    c.name,
                    c.len()
                )));
            }
            if let ColumnData::Numeric(v) = &c.data {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(GammError::Data(format!(
                        "column `{}` contains non-finite values",
                        c.name
                    )));
                }
            }
        }
        Ok(Dataset { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| GammError::MissingColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        let col = self.column(name)?;
        col.as_numeric().ok_or_else(|| GammError::KindMismatch {
            column: name.to_string(),
            expected: "numeric".into(),
            found: col.kind().name().into(),
        })
    }

    /// Keeps rows where `mask` is true; factor level sets are preserved.
    pub fn filter_rows(&self, mask: &[bool]) -> Result<Dataset> {
        if mask.len() != self.n_rows {
            return Err(GammError::InvalidArgument(format!(
                "row mask has length {}, dataset has {} rows",
                mask.len(),
                self.n_rows
            )));
        }
        let rows: Vec<usize> = (0..self.n_rows).filter(|&r| mask[r]).collect();
        Ok(Dataset {
            columns: self.columns.iter().map(|c| c.select(&rows)).collect(),
            n_rows: rows.len(),
        })
    }

    /// Returns a copy with `column` added (or replaced when the name exists).
    pub fn with_column(&self, column: Column) -> Result<Dataset> {
        let mut columns = self.columns.clone();
        match columns.iter().position(|c| c.name == column.name) {
            Some(i) => columns[i] = column,
            None => columns.push(column),
        }
        Dataset::new(columns)
    }

    /// Schema that restores these column kinds and level orders on reload.
    pub fn schema(&self) -> Schema {
        self.columns
            .iter()
            .map(|c| {
                let entry = ColumnSchema {
                    kind: Some(c.kind()),
                    levels: c.levels().map(<[String]>::to_vec),
                    ..ColumnSchema::default()
                };
                (c.name.clone(), entry)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let io_err = |e: csv::Error| GammError::Io {
            path: "<csv output>".into(),
            message: e.to_string(),
        };
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .map_err(io_err)?;
        for r in 0..self.n_rows {
            w.write_record(self.columns.iter().map(|c| c.cell(r)))
                .map_err(io_err)?;
        }
        w.flush().map_err(|e| GammError::Io {
            path: "<csv output>".into(),
            message: e.to_string(),
        })
    }
}

/// Per-column override read from the schema JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    #[serde(default)]
    pub kind: Option<ColumnKind>,
    #[serde(default)]
    pub levels: Option<Vec<String>>,
    /// Rows whose value falls outside `[lo, hi]` are dropped at ingestion.
    #[serde(default)]
    pub range: Option<[f64; 2]>,
    #[serde(default)]
    pub standardize: bool,
}

pub type Schema = BTreeMap<String, ColumnSchema>;

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GammError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text)
        .map_err(|e| GammError::Data(format!("schema {}: {e}", path.display())))
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| GammError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_csv(file, schema)
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

fn parse_bool(cell: &str) -> Option<bool> {
    match cell.trim() {
        "TRUE" | "true" | "True" | "T" | "1" => Some(true),
        "FALSE" | "false" | "False" | "F" | "0" => Some(false),
        _ => None,
    }
}

fn is_bool_literal(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "TRUE" | "true" | "True" | "FALSE" | "false" | "False"
    )
}

/// Parses RFC-4180 CSV with a header row.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| GammError::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(GammError::Data("empty file: no header row".into()));
    }
    for name in schema.keys() {
        if !headers.contains(name) {
            return Err(GammError::Data(format!(
                "schema override names absent column `{name}`"
            )));
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => {
                GammError::Data(format!("ragged row {}: {e}", i + 2))
            }
            _ => GammError::Data(format!("row {}: {e}", i + 2)),
        })?;
        for (j, cell) in record.iter().enumerate() {
            if is_missing(cell) {
                return Err(GammError::Data(format!(
                    "row {} column `{}`: missing cell",
                    i + 2,
                    headers[j]
                )));
            }
            cells[j].push(cell.trim().to_string());
        }
    }
    let n_raw = cells[0].len();
    if n_raw == 0 {
        return Err(GammError::Data("empty file: no data rows".into()));
    }

    let mut keep = vec![true; n_raw];
    for (j, name) in headers.iter().enumerate() {
        if let Some([lo, hi]) = schema.get(name).and_then(|s| s.range) {
            for (r, cell) in cells[j].iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    GammError::Data(format!(
                        "column `{name}` has a range filter but `{cell}` is not numeric"
                    ))
                })?;
                if v < lo || v > hi {
                    keep[r] = false;
                }
            }
        }
    }
    let rows: Vec<usize> = (0..n_raw).filter(|&r| keep[r]).collect();
    if rows.is_empty() {
        return Err(GammError::Data("range filters removed every row".into()));
    }

    let mut columns = Vec::with_capacity(headers.len());
    for (j, name) in headers.iter().enumerate() {
        let raw: Vec<&str> = rows.iter().map(|&r| cells[j][r].as_str()).collect();
        let over = schema.get(name).cloned().unwrap_or_default();
        let kind = match over.kind {
            Some(k) => k,
            None if over.levels.is_some() => ColumnKind::OrderedFactor,
            None if raw.iter().all(|c| c.parse::<f64>().is_ok()) => ColumnKind::Numeric,
            None if raw.iter().all(|c| is_bool_literal(c)) => ColumnKind::Boolean,
            None => ColumnKind::Factor,
        };
        let column = match kind {
            ColumnKind::Numeric => {
                let mut values = raw
                    .iter()
                    .enumerate()
                    .map(|(r, c)| {
                        let v: f64 = c.parse().map_err(|_| {
                            GammError::Data(format!(
                                "column `{name}` row {}: `{c}` is not numeric",
                                rows[r] + 2
                            ))
                        })?;
                        if !v.is_finite() {
                            return Err(GammError::Data(format!(
                                "column `{name}` row {}: non-finite numeric cell `{c}`",
                                rows[r] + 2
                            )));
                        }
                        Ok(v)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if over.standardize {
                    standardize(name, &mut values)?;
                }
                Column::numeric(name.clone(), values)
            }
            ColumnKind::Boolean => {
                let values = raw
                    .iter()
                    .map(|c| {
                        parse_bool(c).ok_or_else(|| {
                            GammError::Data(format!("column `{name}`: `{c}` is not a boolean"))
                        })
                    })
                    .collect::<Result<Vec<bool>>>()?;
                Column::boolean(name.clone(), values)
            }
            ColumnKind::Factor | ColumnKind::OrderedFactor => match over.levels {
                Some(levels) => Column::factor_with_levels(
                    name.clone(),
                    &raw,
                    levels,
                    kind == ColumnKind::OrderedFactor,
                )?,
                None => {
                    let mut c = Column::factor(name.clone(), &raw);
                    if let ColumnData::Factor { ordered, .. } = &mut c.data {
                        *ordered = kind == ColumnKind::OrderedFactor;
                    }
                    c
                }
            },
        };
        columns.push(column);
    }
    Dataset::new(columns)
}

fn standardize(name: &str, values: &mut [f64]) -> Result<()> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if var <= 0.0 {
        return Err(GammError::Data(format!(
            "column `{name}` is constant and cannot be standardized"
        )));
    }
    let sd = var.sqrt();
    values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    Ok(())
}

/// Partition of the rows into contiguous time series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesIndex {
    start_flags: Vec<bool>,
    series_id: Vec<usize>,
    series_lengths: Vec<usize>,
}

impl SeriesIndex {
    pub fn from_flags(flags: &[bool]) -> Result<Self> {
        match flags.first() {
            None => return Err(GammError::Data("series index over zero rows".into())),
            Some(false) => {
                return Err(GammError::Data(
                    "first row must start a series (flag is false)".into(),
                ))
            }
            Some(true) => {}
        }
        let mut series_id = Vec::with_capacity(flags.len());
        let mut series_lengths: Vec<usize> = Vec::new();
        for &f in flags {
            if f {
                series_lengths.push(0);
            }
            *series_lengths.last_mut().expect("first flag is true") += 1;
            series_id.push(series_lengths.len() - 1);
        }
        Ok(SeriesIndex {
            start_flags: flags.to_vec(),
            series_id,
            series_lengths,
        })
    }

    /// All rows form one series.
    pub fn single(n: usize) -> Self {
        let mut flags = vec![false; n];
        if let Some(f) = flags.first_mut() {
            *f = true;
        }
        SeriesIndex {
            start_flags: flags,
            series_id: vec![0; n],
            series_lengths: if n > 0 { vec![n] } else { vec![] },
        }
    }

    pub fn start_flags(&self) -> &[bool] {
        &self.start_flags
    }

    pub fn series_id(&self) -> &[usize] {
        &self.series_id
    }

    pub fn series_lengths(&self) -> &[usize] {
        &self.series_lengths
    }

    pub fn n_rows(&self) -> usize {
        self.start_flags.len()
    }

    pub fn n_series(&self) -> usize {
        self.series_lengths.len()
    }

    /// Row ranges of each series, in order.
    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.series_lengths
            .iter()
            .map(|&len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }

    /// Index restricted to the rows where `mask` holds. A kept row whose
    /// predecessor was dropped starts a new series only if it started one before
    /// or if its whole series prefix was removed.
    pub fn filter(&self, mask: &[bool]) -> Result<SeriesIndex> {
        let mut flags = Vec::new();
        let mut last_series = None;
        for (r, &keep) in mask.iter().enumerate() {
            if !keep {
                continue;
            }
            let s = self.series_id[r];
            flags.push(last_series != Some(s));
            last_series = Some(s);
        }
        SeriesIndex::from_flags(&flags)
    }
}

pub fn build_series_index(data: &Dataset, start_col: &str) -> Result<SeriesIndex> {
    let col = data.column(start_col)?;
    let flags = col.as_bool().ok_or_else(|| GammError::KindMismatch {
        column: start_col.to_string(),
        expected: "boolean".into(),
        found: col.kind().name().into(),
    })?;
    SeriesIndex::from_flags(flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), &Schema::new())
    }

    #[test]
    fn smallest_numeric_file() {
        let d = parse("y,x\n1,2\n3,4\n5,6.5\n").unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.numeric("x").unwrap(), &[2.0, 4.0, 6.5]);
        assert_eq!(d.column("y").unwrap().kind(), ColumnKind::Numeric);
    }

    #[test]
    fn factor_levels_first_appearance() {
        let d = parse("g\na\nb\na\n").unwrap();
        let (codes, levels) = d.column("g").unwrap().as_factor().unwrap();
        assert_eq!(levels, &["a".to_string(), "b".to_string()]);
        assert_eq!(codes, &[0, 1, 0]);
    }

    #[test]
    fn boolean_inferred() {
        let d = parse("s,y\nTRUE,1\nFALSE,2\n").unwrap();
        assert_eq!(d.column("s").unwrap().as_bool().unwrap(), &[true, false]);
    }

    #[test]
    fn ragged_and_empty_rejected() {
        assert!(matches!(parse("a,b\n1,2\n3\n"), Err(GammError::Data(m)) if m.contains("ragged")));
        assert!(parse("").is_err());
        assert!(parse("a,b\n").is_err());
    }

    #[test]
    fn missing_and_non_finite_rejected() {
        assert!(parse("a,b\n1,\n").is_err());
        assert!(parse("a,b\n1,NA\n").is_err());
        let err = parse("a\n1\nNaN\n").unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn schema_overrides() {
        let schema: Schema = serde_json::from_str(
            r#"{"g": {"levels": ["lo", "mid", "hi"]},
                "x": {"range": [0, 10]},
                "id": {"kind": "factor"}}"#,
        )
        .unwrap();
        let d = read_csv("g,x,id\nmid,1,7\nhi,20,8\nlo,3,7\n".as_bytes(), &schema).unwrap();
        assert_eq!(d.n_rows(), 2);
        let g = d.column("g").unwrap();
        assert_eq!(g.kind(), ColumnKind::OrderedFactor);
        assert_eq!(g.as_factor().unwrap().0, &[1, 0]);
        assert_eq!(d.column("id").unwrap().kind(), ColumnKind::Factor);

        let bad: Schema = serde_json::from_str(r#"{"nope": {"kind": "numeric"}}"#).unwrap();
        assert!(read_csv("a\n1\n".as_bytes(), &bad).is_err());
    }

    #[test]
    fn standardization_option() {
        let schema: Schema = serde_json::from_str(r#"{"x": {"standardize": true}}"#).unwrap();
        let d = read_csv("x\n1\n2\n3\n".as_bytes(), &schema).unwrap();
        assert_eq!(d.numeric("x").unwrap(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn series_index_examples() {
        let s = SeriesIndex::from_flags(&[true, false, false, true, false]).unwrap();
        assert_eq!(s.series_id(), &[0, 0, 0, 1, 1]);
        assert_eq!(s.series_lengths(), &[3, 2]);

        let s = SeriesIndex::from_flags(&[true; 4]).unwrap();
        assert_eq!(s.series_lengths(), &[1, 1, 1, 1]);

        assert!(SeriesIndex::from_flags(&[false, true]).is_err());
    }

    #[test]
    fn series_column_must_be_boolean() {
        let d = parse("s,y\n1,2\n0,3\n").unwrap();
        assert!(matches!(
            build_series_index(&d, "s"),
            Err(GammError::KindMismatch { .. })
        ));
    }

    #[test]
    fn filtered_index_restarts_series() {
        let s = SeriesIndex::from_flags(&[true, false, false, true, false]).unwrap();
        let f = s.filter(&[false, true, true, true, false]).unwrap();
        assert_eq!(f.series_lengths(), &[2, 1]);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let values = vec![0.1, 1.0 / 3.0, -2.5e-17, 12345.678901234567];
        let d = Dataset::new(vec![
            Column::numeric("x", values.clone()),
            Column::boolean("b", vec![true, false, true, false]),
            Column::factor("g", &["u", "v", "u", "w"]),
        ])
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &Schema::new()).unwrap();
        assert_eq!(back, d);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn series_lengths_partition_rows(flags in proptest::collection::vec(any::<bool>(), 1..60)) {
            let mut flags = flags;
            flags[0] = true;
            let s = SeriesIndex::from_flags(&flags).unwrap();
            prop_assert_eq!(s.series_lengths().iter().sum::<usize>(), flags.len());
            prop_assert!(s.series_lengths().iter().all(|&l| l >= 1));
            prop_assert_eq!(s.n_series(), flags.iter().filter(|&&f| f).count());
            for w in s.series_id().windows(2) {
                prop_assert!(w[1] == w[0] || w[1] == w[0] + 1);
            }
        }
    }
}
