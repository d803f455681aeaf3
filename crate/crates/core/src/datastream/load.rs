use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BinaryLabel, Dataset, FeatureKind, FeatureSpec, FeatureValue, Sample, Schema, LABEL_COLUMN};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Arff,
    Csv,
}

impl DataFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DataFormat::Arff => "arff",
            DataFormat::Csv => "csv",
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arff" => Ok(DataFormat::Arff),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

/// The airlines feature layout, in file order. The CSV header carries no type
/// information so CSV input always uses these kinds; ARFF input uses its own
/// declarations.
pub fn airlines_schema() -> Schema {
    Schema::new(vec![
        FeatureSpec::categorical("Airline"),
        FeatureSpec::numeric("Flight"),
        FeatureSpec::categorical("AirportFrom"),
        FeatureSpec::categorical("AirportTo"),
        FeatureSpec::categorical("DayOfWeek"),
        FeatureSpec::numeric("Time"),
        FeatureSpec::numeric("Length"),
    ])
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file), format, path)
}

/// Parses from any reader; `origin` only labels error messages.
pub fn parse_dataset(reader: impl Read, format: DataFormat, origin: &Path) -> Result<Dataset> {
    match format {
        DataFormat::Csv => parse_csv(reader, origin),
        DataFormat::Arff => parse_arff(BufReader::new(reader), origin),
    }
}

/// First-seen dense dictionaries, one per categorical column.
struct Encoder {
    schema: Schema,
    lookup: Vec<HashMap<String, u32>>,
}

impl Encoder {
    fn new(schema: Schema) -> Self {
        let lookup = vec![HashMap::new(); schema.len()];
        Encoder { schema, lookup }
    }

    fn encode_row(&mut self, fields: &[&str], origin: &Path,
        line: usize,
    ) -> Result<Sample> {
        let expected = self.schema.len() + 1;
        if fields.len() != expected {
            return Err(parse_error(
                origin,
                line,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        let mut values = Vec::with_capacity(self.schema.len());
        let mut label = None;
        for (column, raw) in fields.iter().enumerate() {
            let raw = unquote(raw.trim());
            if column == self.schema.len() {
                label = Some(parse_label(raw).ok_or_else(|| {
                    parse_error(origin, line, format!("label must be 0 or 1, found `{raw}`"))
                })?);
                continue;
            }
            let spec = &mut self.schema.features[column];
            let value = match spec.kind {
                FeatureKind::Numeric => FeatureValue::Numeric(raw.parse::<f64>().map_err(|_| {
                    parse_error(origin, line, format!("{}: `{raw}` is not a number", spec.name))
                })?),
                FeatureKind::Categorical => {
                    if raw.is_empty() || raw == "?" {
                        return Err(parse_error(
                            origin,
                            line,
                            format!("{}: missing value", spec.name),
                        ));
                    }
                    let dictionary = &mut self.lookup[column];
                    let index = match dictionary.get(raw) {
                        Some(&i) => i,
                        None => {
                            let i = spec.values.len() as u32;
                            spec.values.push(raw.to_owned());
                            dictionary.insert(raw.to_owned(), i);
                            i
                        }
                    };
                    FeatureValue::Categorical(index)
                }
            };
            values.push(value);
        }
        Ok(Sample { values, label })
    }
}

fn parse_error(origin: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    }
}

fn parse_label(raw: &str) -> Option<BinaryLabel> {
    match raw {
        "0" => Some(BinaryLabel::Negative),
        "1" => Some(BinaryLabel::Positive),
        _ => None,
    }
}

fn unquote(raw: &str) -> &str {
    let bytes = raw.as_bytes();
    if bytes.len() >= 2
        && (bytes[0] == b'\'' || bytes[0] == b'"')
        && bytes[bytes.len() - 1] == bytes[0]
    {
        &raw[1..raw.len() - 1]
    } else {
        raw
    }
}

fn expected_columns() -> Vec<String> {
    airlines_schema()
        .features
        .into_iter()
        .map(|f| f.name)
        .chain(std::iter::once(LABEL_COLUMN.to_owned()))
        .collect()
}

fn parse_csv(reader: impl Read, origin: &Path) -> Result<Dataset> {
    let mut rows = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rows.records();

    let header = match records.next() {
        Some(record) => record.map_err(|e| csv_error(origin, e))?,
        None => return Err(parse_error(origin, 1, "missing header row".into())),
    };
    let header: Vec<&str> = header.iter().collect();
    if header != expected_columns() {
        return Err(parse_error(
            origin,
            1,
            format!(
                "header must be `{}`, found `{}`",
                expected_columns().join(","),
                header.join(",")
            ),
        ));
    }

    let mut encoder = Encoder::new(airlines_schema());
    let mut samples = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let fields: Vec<&str> = record.iter().collect();
        samples.push(encoder.encode_row(&fields, origin, line)?);
    }
    Ok(Dataset {
        schema: encoder.schema,
        samples,
    })
}

fn csv_error(origin: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_error(origin, line, e.to_string())
}

/// `@attribute` name and declared kind.
fn parse_attribute(rest: &str, origin: &Path, line: usize) -> Result<(String, FeatureKind)> {
    let rest = rest.trim();
    let (name, decl) = if let Some(stripped) = rest.strip_prefix('\'') {
        let end = stripped
            .find('\'')
            .ok_or_else(|| parse_error(origin, line, "unterminated attribute name".into()))?;
        (&stripped[..end], stripped[end + 1..].trim())
    } else {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        (&rest[..end], rest[end..].trim())
    };
    let kind = if decl.starts_with('{') {
        FeatureKind::Categorical
    } else {
        match decl.to_ascii_lowercase().as_str() {
            "numeric" | "real" | "integer" => FeatureKind::Numeric,
            other => {
                return Err(parse_error(
                    origin,
                    line,
                    format!("unsupported attribute type `{other}` for {name}"),
                ))
            }
        }
    };
    Ok((name.to_owned(), kind))
}

fn parse_arff(reader: impl BufRead, origin: &Path) -> Result<Dataset> {
    let mut attributes: Vec<(String, FeatureKind)> = Vec::new();
    let mut encoder: Option<Encoder> = None;
    let mut samples = Vec::new();

    for (index, line) in reader.lines().enumerate() {
        let number = index + 1;
        let line = line.map_err(|e| Error::io(PathBuf::from(origin), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if let Some(encoder) = encoder.as_mut() {
            if line.starts_with('{') {
                return Err(parse_error(origin, number, "sparse ARFF rows are not supported".into()));
            }
            let fields: Vec<&str> = line.split(',').collect();
            samples.push(encoder.encode_row(&fields, origin, number)?);
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("@relation") {
            continue;
        } else if lower.starts_with("@attribute") {
            attributes.push(parse_attribute(&line["@attribute".len()..], origin, number)?);
        } else if lower.starts_with("@data") {
            let names: Vec<&str> = attributes.iter().map(|(n, _)| n.as_str()).collect();
            if names != expected_columns() {
                return Err(parse_error(
                    origin,
                    number,
                    format!(
                        "attributes must be `{}`, found `{}`",
                        expected_columns().join(","),
                        names.join(",")
                    ),
                ));
            }
            if attributes.last().map(|(_, k)| *k) != Some(FeatureKind::Categorical) {
                return Err(parse_error(origin, number, "label attribute must be nominal".into()));
            }
            let mut schema = airlines_schema();
            for (spec, (_, kind)) in schema.features.iter_mut().zip(&attributes) {
                spec.kind = *kind;
            }
            encoder = Some(Encoder::new(schema));
        } else {
            return Err(parse_error(origin, number, format!("unexpected header line `{line}`")));
        }
    }

    let encoder = encoder.ok_or_else(|| parse_error(origin, 0, "missing @data section".into()))?;
    Ok(Dataset {
        schema: encoder.schema,
        samples,
    })
}

/// Writes a dataset in the CSV exchange format, decoding categorical indices
/// through the schema dictionaries.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{}", expected_columns().join(","))?;
        for sample in &dataset.samples {
            for (spec, value) in dataset.schema.features.iter().zip(&sample.values) {
                match value {
                    FeatureValue::Categorical(i) => {
                        write!(out, "{},", spec.decode(*i).unwrap_or("?"))?
                    }
                    FeatureValue::Numeric(x) => write!(out, "{x},")?,
                }
            }
            match sample.label {
                Some(label) => writeln!(out, "{label}")?,
                None => writeln!(out, "?")?,
            }
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Airline,Flight,AirportFrom,AirportTo,DayOfWeek,Time,Length,Delay\n";

    fn csv(body: &str) -> Result<Dataset> {
        parse_dataset(format!("{HEADER}{body}").as_bytes(), DataFormat::Csv, Path::new("mem.csv"))
    }

    #[test]
    fn csv_rows_and_dictionary() {
        let data = csv("CO,269,SFO,IAH,3,15,205,1\r\nUS,1558,PHX,CLT,3,15,222,1\nCO,10,IAH,SFO,4,20,100,0\n").unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.schema.features[0].values, vec!["CO", "US"]);
        assert_eq!(data.samples[2].values[0], FeatureValue::Categorical(0));
        assert_eq!(data.samples[2].values[2], FeatureValue::Categorical(2));
        assert_eq!(data.samples[0].values[1], FeatureValue::Numeric(269.0));
        assert_eq!(data.samples[2].label, Some(BinaryLabel::Negative));
        for s in &data.samples {
            data.schema.check(s).unwrap();
        }
        let spec = &data.schema.features[2];
        assert_eq!(spec.decode(1), Some("PHX"));
    }

    #[test]
    fn empty_body_is_valid() {
        let data = csv("").unwrap();
        assert!(data.is_empty());
        assert_eq!(data.schema.len(), 7);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        match csv("CO,269,SFO,IAH,3,15,205,1\nCO,x,SFO,IAH,3,15,205,1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match csv("CO,269,SFO,IAH,3,15,205,1\nCO,269,SFO\n") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("expected 8 fields"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(csv("CO,269,SFO,IAH,3,15,205,2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_dataset("a,b\n".as_bytes(), DataFormat::Csv, Path::new("x")).is_err());
    }

    #[test]
    fn unknown_format_is_a_config_error() {
        assert!(matches!("parquet".parse::<DataFormat>(), Err(Error::Config(_))));
        assert_eq!("ARFF".parse::<DataFormat>().unwrap(), DataFormat::Arff);
    }

    #[test]
    fn arff_subset() {
        let text = "% airlines\n@relation airlines\n\n\
            @attribute Airline {CO,US}\n@attribute Flight numeric\n\
            @attribute AirportFrom {SFO,PHX}\n@attribute AirportTo {IAH,CLT}\n\
            @attribute DayOfWeek {1,2,3,4,5,6,7}\n@attribute Time numeric\n\
            @attribute Length numeric\n@attribute Delay {0,1}\n\n@data\n\
            CO,269,SFO,IAH,3,15,205,1\r\nUS,1558,PHX,CLT,3,15,222,0\n";
        let data = parse_dataset(text.as_bytes(), DataFormat::Arff, Path::new("a.arff")).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.schema.kinds(), airlines_schema().kinds());
        assert_eq!(data.samples[1].label, Some(BinaryLabel::Negative));

        let bad = text.replace("@attribute Length numeric\n", "");
        assert!(parse_dataset(bad.as_bytes(), DataFormat::Arff, Path::new("a.arff")).is_err());
        let bad_row = format!("{text}CO,269,SFO\n");
        match parse_dataset(bad_row.as_bytes(), DataFormat::Arff, Path::new("a.arff")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_write_read_back() {
        let data = csv("CO,269,SFO,IAH,3,15,205,1\nUS,1558.5,PHX,CLT,3,15,222,0\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.csv");
        write_csv(&data, &path).unwrap();
        assert_eq!(load_dataset(&path, DataFormat::Csv).unwrap(), data);
    }
}
