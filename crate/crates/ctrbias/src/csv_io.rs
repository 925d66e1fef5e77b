//! Interaction CSV files.
//!
//! Header: `user_id,item_id,label,timestamp,<field>...` with the fields in
//! schema order. Field cells hold category strings; a multi-valued cell
//! separates them with `|` and each becomes an entry of value `1/m`.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use ctrbias_core::data::{Dataset, Sample, SplitTag};
use ctrbias_core::schema::{FeatureIndex, FieldSchema};
use ctrbias_core::Error as CoreError;

use crate::error::{CliError, CliResult};

pub const FIXED_COLUMNS: [&str; 4] = ["user_id", "item_id", "label", "timestamp"];
pub const MULTI_SEPARATOR: char = '|';

pub fn header(schema: &FieldSchema) -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(schema.fields().iter().map(|f| f.name.clone()))
        .collect()
}

pub fn read_dataset(
    path: &Path,
    schema: &FieldSchema,
    vocabulary: &mut FeatureIndex,
    label_threshold: Option<f64>,
    tag: SplitTag,
) -> CliResult<Dataset> {
    let file = File::open(path).map_err(|e| CliError::input(path, e))?;
    parse_dataset(file, path, schema, vocabulary, label_threshold, tag)
}

/// Parses CSV from `reader`; `path` only labels error messages.
pub fn parse_dataset<R: Read>(
    reader: R,
    path: &Path,
    schema: &FieldSchema,
    vocabulary: &mut FeatureIndex,
    label_threshold: Option<f64>,
    tag: SplitTag,
) -> CliResult<Dataset> {
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let expected = header(schema);
    let got: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != expected {
        return Err(parse_err(
            1,
            format!("header {:?} does not match expected {:?}", got.join(","), expected.join(",")),
        ));
    }

    let nf = schema.fields().len();
    let mut samples = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", expected.len(), record.len()),
            ));
        }
        let label = parse_label(&record[2], label_threshold).map_err(|message| CliError::Label {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        let timestamp: i64 = record[3]
            .parse()
            .map_err(|_| parse_err(line, format!("timestamp {:?} is not an integer", &record[3])))?;
        let mut categories = Vec::with_capacity(nf);
        for f in 0..nf {
            let cell = &record[FIXED_COLUMNS.len() + f];
            if cell.is_empty() {
                return Err(parse_err(line, format!("field {} is empty", schema.fields()[f].name)));
            }
            let mut locals = Vec::new();
            for cat in cell.split(MULTI_SEPARATOR) {
                if cat.is_empty() {
                    return Err(parse_err(line, format!("empty category in {cell:?}")));
                }
                let local = vocabulary.local_index(schema, f, cat).map_err(|e| match e {
                    CoreError::Schema(m) => CoreError::Schema(format!("{}, line {line}: {m}", path.display())),
                    other => other,
                })?;
                locals.push(local);
            }
            categories.push(locals);
        }
        samples.push(Sample::from_categories(
            schema,
            &categories,
            label,
            &record[0],
            &record[1],
            timestamp,
        )?);
    }
    Ok(Dataset::new(schema.clone(), samples, tag))
}

fn parse_label(cell: &str, threshold: Option<f64>) -> Result<bool, String> {
    let value: f64 = cell
        .trim()
        .parse()
        .map_err(|_| format!("{cell:?} is not a number"))?;
    match threshold {
        Some(t) => Ok(value > t),
        None if value == 0.0 => Ok(false),
        None if value == 1.0 => Ok(true),
        None => Err(format!("non-binary label {cell:?} and no label_threshold in the schema")),
    }
}

pub fn write_dataset(path: &Path, d: &Dataset, vocabulary: &FeatureIndex) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::output(path, e))?;
    let mut out = io::BufWriter::new(file);
    format_dataset(&mut out, d, vocabulary).map_err(|e| CliError::output(path, e))?;
    out.flush().map_err(|e| CliError::output(path, e))
}

pub fn format_dataset<W: Write>(out: W, d: &Dataset, vocabulary: &FeatureIndex) -> io::Result<()> {
    let schema = &d.schema;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header(schema))?;
    let nf = schema.fields().len();
    let mut cells = vec![String::new(); nf];
    for s in &d.samples {
        cells.iter_mut().for_each(String::clear);
        for &(idx, _) in &s.entries {
            let idx = idx as usize;
            let f = schema.field_of(idx).expect("validated sample");
            let cell = &mut cells[f];
            if !cell.is_empty() {
                cell.push(MULTI_SEPARATOR);
            }
            cell.push_str(&vocabulary.label(f, idx - schema.field_range(f).start));
        }
        let ts = s.timestamp.to_string();
        let fixed = [s.user_id.as_str(), s.item_id.as_str(), if s.label { "1" } else { "0" }, ts.as_str()];
        w.write_record(fixed.iter().copied().chain(cells.iter().map(String::as_str)))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctrbias_core::schema::Field;

    fn schema() -> FieldSchema {
        FieldSchema::new(vec![Field::new("user", 4), Field::new("genre", 3)], "genre").unwrap()
    }

    fn parse(text: &str, threshold: Option<f64>) -> CliResult<(Dataset, FeatureIndex)> {
        let s = schema();
        let mut v = FeatureIndex::new(&s);
        let d = parse_dataset(text.as_bytes(), Path::new("t.csv"), &s, &mut v, threshold, SplitTag::Train)?;
        Ok((d, v))
    }

    const HEAD: &str = "user_id,item_id,label,timestamp,user,genre\n";

    #[test]
    fn multi_valued_cell_splits_evenly() {
        let (d, _) = parse(&format!("{HEAD}u1,m1,1,5,u1,Action|Sci-Fi\n"), None).unwrap();
        let s = &d.samples[0];
        assert_eq!(s.entries, vec![(0, 1.0), (4, 0.5), (5, 0.5)]);
        assert!(s.label);
        assert_eq!(s.timestamp, 5);
    }

    #[test]
    fn single_valued_cell_is_one_hot() {
        let (d, _) = parse(&format!("{HEAD}u1,m1,0,5,u1,Drama\n"), None).unwrap();
        assert_eq!(d.samples[0].entries, vec![(0, 1.0), (4, 1.0)]);
    }

    #[test]
    fn rating_threshold() {
        let (d, _) = parse(&format!("{HEAD}u1,m1,4,1,u1,A\nu1,m2,3,2,u1,A\n"), Some(3.0)).unwrap();
        assert!(d.samples[0].label);
        assert!(!d.samples[1].label);
    }

    #[test]
    fn non_binary_label_needs_threshold() {
        match parse(&format!("{HEAD}u1,m1,4,1,u1,A\n"), None) {
            Err(CliError::Label { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_names_the_line() {
        let text = format!("{HEAD}u1,m1,1,1,u1,A\nu1,m1,1,1,u1\n");
        match parse(&text, None) {
            Err(CliError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("columns"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn category_overflow_is_a_schema_error() {
        let text = format!("{HEAD}u1,m,1,1,u1,A\nu1,m,1,1,u1,B\nu1,m,1,1,u1,C\nu1,m,1,1,u1,D\n");
        match parse(&text, None) {
            Err(CliError::Core(CoreError::Schema(m))) => assert!(m.contains("line 5"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_must_match() {
        assert!(matches!(
            parse("user_id,item_id,label,timestamp,genre,user\n", None),
            Err(CliError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_read_back() {
        let text = format!("{HEAD}u1,m1,1,5,u1,Action|Sci-Fi\nu2,m2,0,6,u2,Drama\n");
        let (d, v) = parse(&text, None).unwrap();
        let mut buf = Vec::new();
        format_dataset(&mut buf, &d, &v).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }
}
