use std::io::{Read, Write};
use std::path::Path;

use super::{Arm, DataError, IndividualRecord, TrialDataset};

const MISSING: &str = "NA";

fn header(n_followups: usize) -> Vec<String> {
    let mut cols = vec!["id".to_string(), "arm".to_string()];
    cols.extend((0..=n_followups).map(|j| format!("u{j}")));
    cols.extend((1..=n_followups).map(|j| format!("c{j}")));
    cols.extend(["age", "ethnicity", "employment"].map(String::from));
    cols
}

fn parse_followups(cols: &[String]) -> Result<usize, DataError> {
    let n_u = cols.iter().filter(|c| c.starts_with('u')).count();
    if n_u < 2 {
        return Err(DataError::Row {
            row: 0,
            message: "header needs u0 and at least one follow-up utility".into(),
        });
    }
    let n_followups = n_u - 1;
    let expected = header(n_followups);
    if cols != expected.as_slice() {
        return Err(DataError::Row {
            row: 0,
            message: format!("header must be `{}`", expected.join(",")),
        });
    }
    Ok(n_followups)
}

fn parse_opt_f64(field: &str, name: &str) -> Result<Option<f64>, String> {
    let field = field.trim();
    if field == MISSING {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| format!("column {name}: cannot parse `{field}` as a number"))
}

fn parse_level(field: &str, name: &str) -> Result<Option<u32>, String> {
    let field = field.trim();
    if field == MISSING {
        return Ok(None);
    }
    match field.parse::<u32>() {
        Ok(code) if code >= 1 => Ok(Some(code)),
        _ => Err(format!(
            "column {name}: unknown level `{field}` (codes are integers from 1)"
        )),
    }
}

fn parse_row(
    row: &csv::StringRecord,
    n_followups: usize,
    names: &[String],
) -> Result<IndividualRecord, String> {
    let id = row[0].trim().to_string();
    if id.is_empty() {
        return Err("empty id".into());
    }
    let arm = row[1]
        .trim()
        .parse::<u8>()
        .ok()
        .and_then(Arm::from_code)
        .ok_or_else(|| format!("arm must be 1 or 2, found `{}`", &row[1]))?;
    let mut utilities = Vec::with_capacity(n_followups + 1);
    for j in 0..=n_followups {
        let col = 2 + j;
        utilities.push(parse_opt_f64(&row[col], &names[col])?);
    }
    let mut costs = Vec::with_capacity(n_followups);
    for j in 0..n_followups {
        let col = 3 + n_followups + j;
        costs.push(parse_opt_f64(&row[col], &names[col])?);
    }
    let base = 3 + 2 * n_followups;
    let record = IndividualRecord {
        id,
        arm,
        utilities,
        costs,
        age: parse_opt_f64(&row[base], "age")?,
        ethnicity: parse_level(&row[base + 1], "ethnicity")?,
        employment: parse_level(&row[base + 2], "employment")?,
    };
    record.validate(n_followups).map_err(|e| e.to_string())?;
    Ok(record)
}

/// Parses a trial CSV. Errors carry the 1-based data-row number (row 0 is
/// the header).
pub fn read_trial_csv<R: Read>(reader: R) -> Result<TrialDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let n_followups = parse_followups(&names)?;
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| DataError::Row {
            row: row_no,
            message: e.to_string(),
        })?;
        if row.len() != names.len() {
            return Err(DataError::Row {
                row: row_no,
                message: format!("expected {} fields, found {}", names.len(), row.len()),
            });
        }
        let record = parse_row(&row, n_followups, &names).map_err(|message| DataError::Row {
            row: row_no,
            message,
        })?;
        records.push(record);
    }
    Ok(TrialDataset {
        n_followups,
        records,
    })
}

pub fn load_trial_csv(path: impl AsRef<Path>) -> Result<TrialDataset, DataError> {
    read_trial_csv(std::fs::File::open(path)?)
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref()
        .map_or_else(|| MISSING.to_string(), ToString::to_string)
}

pub fn write_trial_csv_to<W: Write>(dataset: &TrialDataset, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header(dataset.n_followups))?;
    for r in &dataset.records {
        let mut fields = vec![r.id.clone(), r.arm.code().to_string()];
        fields.extend(r.utilities.iter().map(fmt_opt));
        fields.extend(r.costs.iter().map(fmt_opt));
        fields.push(fmt_opt(&r.age));
        fields.push(fmt_opt(&r.ethnicity));
        fields.push(fmt_opt(&r.employment));
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trial_csv(dataset: &TrialDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_trial_csv_to(dataset, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_data_section_is_empty_dataset() {
        let text = "id,arm,u0,u1,u2,u3,c1,c2,c3,age,ethnicity,employment\n";
        let d = read_trial_csv(text.as_bytes()).unwrap();
        assert_eq!(d.n_followups, 3);
        assert!(d.records.is_empty());
    }

    #[test]
    fn na_marks_missing() {
        let text = "id,arm,u0,u1,u2,u3,c1,c2,c3,age,ethnicity,employment\n\
                    a,1,0.8,0.9,NA,1,10,NA,5,30,1,2\n";
        let d = read_trial_csv(text.as_bytes()).unwrap();
        let r = &d.records[0];
        assert_eq!(r.utilities[2], None);
        assert_eq!(r.costs[1], None);
        assert_eq!(r.employment, Some(2));
    }

    #[test]
    fn errors_report_row_numbers() {
        let head = "id,arm,u0,u1,c1,age,ethnicity,employment\n";
        let cases = [
            ("a,1,0.5,0.5,1,30,1,1\nb,3,0.5,0.5,1,30,1,1\n", 2),
            ("a,1,1.5,0.5,1,30,1,1\n", 1),
            ("a,1,0.5,0.5,-1,30,1,1\n", 1),
            ("a,1,0.5,0.5,1,30,0,1\n", 1),
            ("a,1,0.5,0.5,1,30,x,1\n", 1),
            ("a,1,0.5,zz,1,30,1,1\n", 1),
            ("a,1,0.5,0.5,1,30,1\n", 1),
        ];
        for (body, row) in cases {
            let err = read_trial_csv(format!("{head}{body}").as_bytes()).unwrap_err();
            assert!(
                matches!(err, DataError::Row { row: r, .. } if r == row),
                "{body}: {err:?}"
            );
        }
    }

    #[test]
    fn rejects_malformed_header() {
        let err = read_trial_csv("id,arm,u0,c1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Row { row: 0, .. }));
        let err = read_trial_csv("id,arm,u0,u1,c2,age,ethnicity,employment\n".as_bytes());
        assert!(err.is_err());
    }
}
