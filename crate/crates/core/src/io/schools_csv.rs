use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::School;

#[derive(Debug, Deserialize)]
struct SchoolRecord {
    id: u64,
    s: f64,
    #[serde(default)]
    e: f64,
    #[serde(default)]
    l0: f64,
    #[serde(default)]
    public: Option<u8>,
    #[serde(default)]
    anglophone: Option<u8>,
    #[serde(default)]
    municipality_id: u64,
}

/// Reads schools for the allocation model. Columns: `id`, `s`, and
/// optionally `e`, `l0`, `public`, `anglophone` (0/1), `municipality_id`.
pub fn read_schools_csv(path: impl AsRef<Path>) -> Result<Vec<School>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read {}: {e}", path.display()),
        ))
    })?;
    read_schools(file)
}

pub fn read_schools<R: std::io::Read>(input: R) -> Result<Vec<School>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut schools = Vec::new();
    for (i, record) in reader.deserialize::<SchoolRecord>().enumerate() {
        let r = record?;
        let line = i as u64 + 2;
        let as_flag = |v: Option<u8>, column: &str| match v {
            None | Some(0) => Ok(false),
            Some(1) => Ok(true),
            Some(other) => Err(Error::Parse {
                line,
                column: column.into(),
                message: format!("expected 0 or 1, found {other}"),
            }),
        };
        let school = School {
            id: r.id,
            s: r.s,
            e: r.e,
            l0: r.l0,
            is_public: r.public.map_or(Ok(true), |v| as_flag(Some(v), "public"))?,
            is_anglophone: as_flag(r.anglophone, "anglophone")?,
            municipality_id: r.municipality_id,
        };
        school.validate().map_err(|e| Error::Parse {
            line,
            column: "s/e/l0".into(),
            message: e.to_string(),
        })?;
        schools.push(school);
    }
    Ok(schools)
}
