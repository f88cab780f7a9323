use std::path::Path;

use super::dataset::{Cell, Dataset};
use super::schema::{ColumnKind, FeatureSchema};
use crate::{Error, Result};

/// Optional CSV column carrying explicit row identifiers. When absent, ids
/// are synthesized from the row position at ingest time and stay stable from
/// then on.
const ROW_ID_HEADER: &str = "row_id";

/// Read a dataset from CSV given its schema. Header row names the columns;
/// the empty string denotes a missing value; category cells hold the
/// category string. Unknown headers (other than `row_id`) and category
/// strings outside the declared vocabulary are refused.
pub fn read_csv(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut id_col: Option<usize> = None;
    let mut column_for_header: Vec<Option<usize>> = Vec::with_capacity(headers.len());
    for (h_idx, header) in headers.iter().enumerate() {
        if header == ROW_ID_HEADER {
            id_col = Some(h_idx);
            column_for_header.push(None);
        } else {
            let idx = schema
                .column_index(header)
                .map_err(|_| Error::Data(format!("CSV header `{header}` not in schema")))?;
            column_for_header.push(Some(idx));
        }
    }
    let mut covered = vec![false; schema.columns().len()];
    for mapped in column_for_header.iter().flatten() {
        covered[*mapped] = true;
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(Error::Data(format!(
            "CSV is missing schema column `{}`",
            schema.columns()[missing].name
        )));
    }

    let mut row_ids = Vec::new();
    let mut rows = Vec::new();
    for (r_idx, record) in reader.records().enumerate() {
        let record = record?;
        let id = match id_col {
            Some(c) => record.get(c).unwrap_or("").to_string(),
            None => format!("r{r_idx:06}"),
        };
        let mut row = vec![Cell::Missing; schema.columns().len()];
        for (h_idx, value) in record.iter().enumerate() {
            let Some(col_idx) = column_for_header[h_idx] else { continue };
            row[col_idx] = parse_cell(value, schema, col_idx, &id)?;
        }
        row_ids.push(id);
        rows.push(row);
    }
    Dataset::new(schema.clone(), row_ids, rows)
}

fn parse_cell(value: &str, schema: &FeatureSchema, col: usize, row_id: &str) -> Result<Cell> {
    if value.is_empty() {
        return Ok(Cell::Missing);
    }
    let spec = &schema.columns()[col];
    match spec.kind {
        ColumnKind::Continuous => parse_number(value, &spec.name, row_id),
        ColumnKind::Label if spec.categories.is_none() => parse_number(value, &spec.name, row_id),
        _ => {
            let idx = schema.category_index(&spec.name, value).map_err(|_| {
                Error::Data(format!(
                    "row `{row_id}`, column `{}`: category `{value}` not in schema vocabulary",
                    spec.name
                ))
            })?;
            Ok(Cell::Category(idx))
        }
    }
}

fn parse_number(value: &str, column: &str, row_id: &str) -> Result<Cell> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("row `{row_id}`, column `{column}`: `{value}` is not a number")))
        .map(Cell::Number)
}

/// Write a dataset as CSV with a leading `row_id` column. Numbers use the
/// shortest round-trippable representation, so read-back is cell-exact.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_path(path)?;
    let mut header = vec![ROW_ID_HEADER.to_string()];
    header.extend(data.schema().columns().iter().map(|c| c.name.clone()));
    writer.write_record(&header)?;
    for (i, id) in data.row_ids().iter().enumerate() {
        let mut record = vec![id.clone()];
        for (cell, spec) in data.row(i).iter().zip(data.schema().columns()) {
            let text = match cell {
                Cell::Missing => String::new(),
                Cell::Number(v) => format!("{v}"),
                Cell::Category(idx) => {
                    let cats = spec.categories.as_ref().ok_or_else(|| {
                        Error::Data(format!("category cell in non-categorical column `{}`", spec.name))
                    })?;
                    cats[*idx as usize].clone()
                }
            };
            record.push(text);
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Load a schema from its JSON document.
pub fn read_schema(path: &Path) -> Result<FeatureSchema> {
    let text = std::fs::read_to_string(path)?;
    let parsed: FeatureSchema = serde_json::from_str(&text)?;
    // Re-run construction so invariants hold for hand-written documents.
    let preprocessed = parsed.preprocessed;
    if preprocessed {
        Ok(parsed)
    } else {
        FeatureSchema::new(parsed.columns().to_vec())
    }
}

pub fn write_schema(schema: &FeatureSchema, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(schema)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::ColumnSpec;

    fn sample_dataset() -> Dataset {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::continuous("volume"),
            ColumnSpec::categorical("site", &["a", "b"]),
            ColumnSpec::group("sex", &["m", "f"]),
            ColumnSpec::class_label("dx", &["cn", "ad"]),
        ])
        .unwrap();
        Dataset::new(
            schema,
            vec!["p1".into(), "p2".into(), "p3".into()],
            vec![
                vec![Cell::Number(1.25), Cell::Category(0), Cell::Category(1), Cell::Category(0)],
                vec![Cell::Missing, Cell::Category(2), Cell::Missing, Cell::Category(1)],
                vec![Cell::Number(-0.5), Cell::Missing, Cell::Category(0), Cell::Category(1)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let data = sample_dataset();
        let csv_path = dir.path().join("data.csv");
        write_csv(&data, &csv_path).unwrap();
        let back = read_csv(&csv_path, data.schema()).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn schema_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = sample_dataset();
        let path = dir.path().join("schema.json");
        write_schema(data.schema(), &path).unwrap();
        let back = read_schema(&path).unwrap();
        assert_eq!(data.schema(), &back);
    }

    #[test]
    fn unknown_header_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "volume,site,sex,dx,extra\n1.0,a,m,cn,zzz\n").unwrap();
        let err = read_csv(&path, sample_dataset().schema()).unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn out_of_vocabulary_category_is_refused_at_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "volume,site,sex,dx\n1.0,zebra,m,cn\n").unwrap();
        let err = read_csv(&path, sample_dataset().schema()).unwrap_err();
        assert!(err.to_string().contains("zebra"));
    }

    #[test]
    fn empty_cells_become_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "volume,site,sex,dx\n,a,m,cn\n2.0,,f,ad\n").unwrap();
        let data = read_csv(&path, sample_dataset().schema()).unwrap();
        assert!(data.cell(0, 0).is_missing());
        assert!(data.cell(1, 1).is_missing());
    }
}
