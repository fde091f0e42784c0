use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Cohort, SubjectRecord};
use crate::error::{Error, Result};

const TAIL: [&str; 4] = ["A", "S", "Y_OBS", "DELTA"];

pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Cohort> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub fn save_csv<P: AsRef<Path>>(cohort: &Cohort, path: P) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(cohort, file)
}

/// Reads a cohort whose header lists covariates followed by `A,S,Y_OBS,DELTA`.
/// Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(reader: R) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let locate = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                row: 0,
                msg: format!("missing column {name}"),
            })
    };
    let cols: Vec<usize> = TAIL.iter().map(|n| locate(n)).collect::<Result<_>>()?;
    let covariates: Vec<usize> = (0..header.len()).filter(|i| !cols.contains(i)).collect();
    let names = covariates.iter().map(|&i| header[i].clone()).collect();

    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row_no = k + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            msg: e.to_string(),
        })?;
        let field = |i: usize| -> Result<f64> {
            let raw = row.get(i).ok_or_else(|| Error::Parse {
                row: row_no,
                msg: format!("missing field {}", header[i]),
            })?;
            raw.trim().parse::<f64>().map_err(|_| Error::Parse {
                row: row_no,
                msg: format!("column {}: cannot parse {raw:?} as a number", header[i]),
            })
        };
        let binary = |i: usize| -> Result<u8> {
            let v = field(i)?;
            if v == 0.0 || v == 1.0 {
                Ok(v as u8)
            } else {
                Err(Error::Parse {
                    row: row_no,
                    msg: format!("column {} must be 0 or 1, got {v}", header[i]),
                })
            }
        };
        let x = covariates.iter().map(|&i| field(i)).collect::<Result<Vec<_>>>()?;
        let y_obs = field(cols[2])?;
        if !(y_obs >= 0.0 && y_obs.is_finite()) {
            return Err(Error::Parse {
                row: row_no,
                msg: format!("Y_OBS must be finite and nonnegative, got {y_obs}"),
            });
        }
        records.push(SubjectRecord {
            x,
            a: binary(cols[0])?,
            s: binary(cols[1])?,
            y_obs,
            delta: binary(cols[3])?,
        });
    }
    Cohort::new(records, names)
}

/// Writes floats in shortest round-trip form, so reading back is exact.
pub fn write_csv<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = cohort.covariate_names.iter().map(String::as_str).collect();
    header.extend(TAIL);
    wtr.write_record(&header)?;
    for r in &cohort.records {
        let mut fields: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        fields.push(r.a.to_string());
        fields.push(r.s.to_string());
        fields.push(r.y_obs.to_string());
        fields.push(r.delta.to_string());
        wtr.write_record(&fields)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
