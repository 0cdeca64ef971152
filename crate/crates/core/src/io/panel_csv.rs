//! Pupil-period CSV schema.
//!
//! ```text
//! # decentra-panel-schema 1.0
//! pupil_id,school_id,municipality_id,period,post,public,anglophone,grade_high,age,girl,books,electricity,w1..wK,score_math,score_lit
//! ```
//!
//! Flags are written and read as `0`/`1`. The comment line is optional on
//! input, but a present one must carry major version 1.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::{PanelDataset, PanelRow, LEADING_COLUMNS, OUTCOME_COLUMNS};

pub const SCHEMA_VERSION: &str = "1.0";
pub const SCHEMA_LINE: &str = "# decentra-panel-schema 1.0";
const SCHEMA_TAG: &str = "decentra-panel-schema";

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes `dataset` in schema column order. Output is deterministic.
pub fn write_panel<W: Write>(dataset: &PanelDataset, mut out: W) -> Result<()> {
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(dataset.column_names())?;
    let mut record: Vec<String> = Vec::new();
    for r in dataset.rows() {
        record.clear();
        record.extend([
            r.pupil_id.to_string(),
            r.school_id.to_string(),
            r.municipality_id.to_string(),
            r.period.to_string(),
            flag(r.post).into(),
            flag(r.is_public).into(),
            flag(r.is_anglophone).into(),
            flag(r.grade_high).into(),
            r.age.to_string(),
            r.girl.to_string(),
            r.books.to_string(),
            r.electricity.to_string(),
        ]);
        record.extend(r.w.iter().map(f64::to_string));
        record.push(r.score_math.to_string());
        record.push(r.score_lit.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_panel_csv(dataset: &PanelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot write {}: {e}", path.display()),
        ))
    })?;
    let mut buf = std::io::BufWriter::new(file);
    write_panel(dataset, &mut buf)?;
    buf.flush()?;
    Ok(())
}

pub fn read_panel_csv(path: impl AsRef<Path>) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read {}: {e}", path.display()),
        ))
    })?;
    read_panel(file)
}

fn check_schema_line(line: &str) -> Result<()> {
    let body = line.trim_start_matches('#').trim();
    let version = body
        .strip_prefix(SCHEMA_TAG)
        .map(str::trim)
        .ok_or_else(|| Error::Schema(format!("unrecognized comment line `{line}`")))?;
    let major = version.split('.').next().unwrap_or("");
    let expected = SCHEMA_VERSION.split('.').next().unwrap_or("");
    if major != expected {
        return Err(Error::Schema(format!(
            "file has schema version {version}, this reader supports major version {expected}"
        )));
    }
    Ok(())
}

struct Layout {
    index: HashMap<String, usize>,
    n_w: usize,
}

fn layout(header: &csv::StringRecord) -> Result<Layout> {
    let mut index = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if index.insert(name.trim().to_string(), i).is_some() {
            return Err(Error::Schema(format!("duplicate column `{name}`")));
        }
    }
    let mut n_w = 0;
    while index.contains_key(&format!("w{}", n_w + 1)) {
        n_w += 1;
    }
    for name in LEADING_COLUMNS
        .iter()
        .map(|(n, _)| *n)
        .chain(OUTCOME_COLUMNS.iter().copied())
    {
        if !index.contains_key(name) {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }
    let known = LEADING_COLUMNS.len() + OUTCOME_COLUMNS.len() + n_w;
    if index.len() != known {
        let extra: Vec<&String> = index
            .keys()
            .filter(|k| {
                !LEADING_COLUMNS.iter().any(|(n, _)| n == k)
                    && !OUTCOME_COLUMNS.contains(&k.as_str())
                    && !(k.starts_with('w')
                        && k[1..].parse::<usize>().is_ok_and(|j| j >= 1 && j <= n_w))
            })
            .collect();
        return Err(Error::Schema(format!("unexpected column(s): {extra:?}")));
    }
    Ok(Layout { index, n_w })
}

/// Reads a panel, reporting malformed cells by line and column.
pub fn read_panel<R: Read>(input: R) -> Result<PanelDataset> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let (offset, rest): (u64, Box<dyn Read>) = if first.trim_start().starts_with('#') {
        check_schema_line(first.trim())?;
        (1, Box::new(reader))
    } else {
        (
            0,
            Box::new(std::io::Cursor::new(first.into_bytes()).chain(reader)),
        )
    };

    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(rest);
    let header = csv_reader.headers()?.clone();
    let layout = layout(&header)?;
    let mut rows = Vec::new();
    let mut seen: HashMap<(u64, u32), u64> = HashMap::new();

    for record in csv_reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line()) + offset;
        let cell = |name: &str| -> &str { record.get(layout.index[name]).unwrap_or("").trim() };
        let bad = |name: &str, what: &str| Error::Parse {
            line,
            column: name.to_string(),
            message: format!("expected {what}, found `{}`", cell(name)),
        };
        let uint = |name: &str| {
            cell(name)
                .parse::<u64>()
                .map_err(|_| bad(name, "a non-negative integer"))
        };
        let real = |name: &str| {
            cell(name)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(name, "a finite number"))
        };
        let boolean = |name: &str| match cell(name) {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(name, "0 or 1")),
        };

        let period =
            u32::try_from(uint("period")?).map_err(|_| bad("period", "a 32-bit period"))?;
        let pupil_id = uint("pupil_id")?;
        if let Some(prev) = seen.insert((pupil_id, period), line) {
            return Err(Error::Parse {
                line,
                column: "pupil_id".into(),
                message: format!(
                    "pupil {pupil_id} already appears in period {period} on line {prev}"
                ),
            });
        }
        rows.push(PanelRow {
            pupil_id,
            school_id: uint("school_id")?,
            municipality_id: uint("municipality_id")?,
            period,
            post: boolean("post")?,
            is_public: boolean("public")?,
            is_anglophone: boolean("anglophone")?,
            grade_high: boolean("grade_high")?,
            age: real("age")?,
            girl: real("girl")?,
            books: real("books")?,
            electricity: real("electricity")?,
            w: (1..=layout.n_w)
                .map(|k| real(&format!("w{k}")))
                .collect::<Result<Vec<f64>>>()?,
            score_math: real("score_math")?,
            score_lit: real("score_lit")?,
        });
    }
    PanelDataset::with_w_count(rows, layout.n_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
# decentra-panel-schema 1.0
pupil_id,school_id,municipality_id,period,post,public,anglophone,grade_high,age,girl,books,electricity,w1,score_math,score_lit
1,10,1,0,0,1,0,0,8,1,0,1,0.5,41.5,44
2,20,1,0,0,0,0,1,11,0,1,1,-0.25,52,50.5
3,10,1,1,1,1,0,0,7,0,0,0,0.1,47,49
4,20,1,1,1,0,0,1,12,1,1,0,0.3,55.25,51
";

    #[test]
    fn reads_handwritten_fixture() {
        let ds = read_panel(FIXTURE.as_bytes()).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.n_schools(), 2);
        assert_eq!(ds.periods().len(), 2);
        assert_eq!(ds.n_w(), 1);
        assert_eq!(ds.rows()[1].w, vec![-0.25]);
        assert!(ds.rows()[0].is_public);
    }

    #[test]
    fn string_in_outcome_is_located() {
        let text = FIXTURE.replace("47,49", "abc,49");
        match read_panel(text.as_bytes()) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 5);
                assert_eq!(column, "score_math");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_named() {
        let text = FIXTURE.replace(",score_lit", "").replace(",44\n", "\n");
        assert!(
            matches!(read_panel(text.as_bytes()), Err(Error::MissingColumn(c)) if c == "score_lit")
        );
    }

    #[test]
    fn duplicate_pupil_in_period() {
        let text = FIXTURE.replace("\n3,10,1,1", "\n1,10,1,0");
        let err = read_panel(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("already appears"), "{err}");
    }

    #[test]
    fn schema_major_mismatch() {
        let text = FIXTURE.replace("schema 1.0", "schema 2.3");
        assert!(matches!(read_panel(text.as_bytes()), Err(Error::Schema(_))));
        let minor = FIXTURE.replace("schema 1.0", "schema 1.7");
        assert!(read_panel(minor.as_bytes()).is_ok());
        let bare = FIXTURE.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert_eq!(read_panel(bare.as_bytes()).unwrap().len(), 4);
    }

    #[test]
    fn bad_boolean() {
        let text = FIXTURE.replace("1,10,1,0,0,1", "1,10,1,0,0,yes");
        assert!(
            matches!(read_panel(text.as_bytes()), Err(Error::Parse { column, .. }) if column == "public")
        );
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let ds = PanelDataset::with_w_count(Vec::new(), 2).unwrap();
        let mut buf = Vec::new();
        write_panel(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains("w1,w2,score_math"));
        assert_eq!(read_panel(text.as_bytes()).unwrap(), ds);
    }

    #[test]
    fn rejects_unknown_column() {
        let text = FIXTURE
            .replace(",score_lit\n", ",score_lit,extra\n")
            .replace(",44\n", ",44,1\n")
            .replace(",50.5\n", ",50.5,1\n")
            .replace(",49\n", ",49,1\n")
            .replace(",51\n", ",51,1\n");
        assert!(matches!(read_panel(text.as_bytes()), Err(Error::Schema(_))));
    }
}
