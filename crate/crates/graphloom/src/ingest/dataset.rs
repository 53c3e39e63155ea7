//! Dataset loading: CSV (first row = header), JSON (array of objects at
//! record_path) and XML (elements at record_path; leaf text nodes become
//! attributes).
//!
//! Records are flattened to attribute→raw-string maps. Nested JSON/XML paths
//! are joined with `/` and then label-normalized, so `beginmoment/date`
//! becomes `beginmoment_date`. XML element attributes (`@attr`) are ignored;
//! only text content is collected.

use std::collections::BTreeMap;
use std::path::Path;

use quick_xml::events::Event;

use super::values;
use super::{IngestError, RecordSet};
use crate::model::{DataFormat, DataType, DatasetDescriptor, normalize_label};

type Record = BTreeMap<String, String>;

/// Loads and flattens the dataset named by `descriptor`, inferring its schema.
/// Relative paths resolve against `base_dir`.
pub fn load_dataset(
    descriptor: &DatasetDescriptor,
    base_dir: &Path,
) -> Result<RecordSet, IngestError> {
    let path = base_dir.join(&descriptor.path);
    let bytes = std::fs::read(&path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let (records, header_attrs) = match descriptor.format {
        DataFormat::Csv => parse_csv_records(&bytes)?,
        DataFormat::Json => (
            parse_json_records(&bytes, descriptor.record_path.as_deref())?,
            Vec::new(),
        ),
        DataFormat::Xml => {
            let record_path = descriptor.record_path.as_deref().unwrap_or("");
            (parse_xml_records(&bytes, record_path)?, Vec::new())
        }
    };
    let mut with_schema = descriptor.clone();
    with_schema.schema = infer_schema(&records, &header_attrs);
    Ok(RecordSet {
        descriptor: with_schema,
        records,
    })
}

/// Parses CSV bytes: first row is the header. Returns the records plus the
/// normalized header names (a header defines the schema even for all-empty
/// columns).
pub fn parse_csv_records(bytes: &[u8]) -> Result<(Vec<Record>, Vec<String>), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let headers: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(normalize_label).collect(),
        Err(e) => return Err(csv_error(e)),
    };
    let mut seen = std::collections::BTreeSet::new();
    for h in &headers {
        if h.is_empty() {
            return Err(IngestError::syntax("empty column name in csv header"));
        }
        if !seen.insert(h.clone()) {
            return Err(IngestError::syntax(format!(
                "duplicate csv column {h:?} after normalization"
            )));
        }
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let mut record = Record::new();
        for (i, field) in row.iter().enumerate() {
            if let Some(name) = headers.get(i) {
                record.insert(name.clone(), field.to_string());
            }
        }
        records.push(record);
    }
    Ok((records, headers))
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = match e.position() {
        Some(p) => p.line() as usize,
        None => 0,
    };
    IngestError::Syntax {
        line,
        column: 0,
        message: e.to_string(),
    }
}

/// Parses JSON bytes; `record_path` (e.g. `/hospital/records`) navigates
/// object keys down to an array of objects. `None` or an empty path means the
/// document root.
pub fn parse_json_records(
    bytes: &[u8],
    record_path: Option<&str>,
) -> Result<Vec<Record>, IngestError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| {
        IngestError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    })?;
    let path = record_path.unwrap_or("");
    let mut node = &value;
    for segment in path.split('/').filter(|s| !s.is_empty()) {
        node = match node.get(segment) {
            Some(next) => next,
            None => {
                return Err(IngestError::RecordPath {
                    path: path.to_string(),
                })
            }
        };
    }
    let items = node.as_array().ok_or_else(|| IngestError::RecordPath {
        path: path.to_string(),
    })?;
    let mut records = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let obj = item.as_object().ok_or_else(|| {
            IngestError::syntax(format!("record {index} is not a json object"))
        })?;
        let mut record = Record::new();
        for (key, value) in obj {
            flatten_json(key, value, &mut record);
        }
        records.push(record);
    }
    Ok(records)
}

fn flatten_json(path: &str, value: &serde_json::Value, out: &mut Record) {
    match value {
        serde_json::Value::Null => {}
        serde_json::Value::Object(map) => {
            for (key, inner) in map {
                flatten_json(&format!("{path}/{key}"), inner, out);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, inner) in items.iter().enumerate() {
                flatten_json(&format!("{path}/{i}"), inner, out);
            }
        }
        serde_json::Value::String(s) => {
            out.insert(normalize_label(path), s.clone());
        }
        other => {
            out.insert(normalize_label(path), other.to_string());
        }
    }
}

/// Parses XML bytes; `record_path` (e.g. `/patients/patient`) names the
/// element stack of a record. Leaf text nodes below a record element become
/// attributes keyed by their `/`-joined relative path.
pub fn parse_xml_records(bytes: &[u8], record_path: &str) -> Result<Vec<Record>, IngestError> {
    let src = std::str::from_utf8(bytes)
        .map_err(|e| IngestError::syntax(format!("xml is not valid utf-8: {e}")))?;
    let segments: Vec<&str> = record_path.split('/').filter(|s| !s.is_empty()).collect();
    if segments.is_empty() {
        return Err(IngestError::RecordPath {
            path: record_path.to_string(),
        });
    }

    let mut reader = quick_xml::Reader::from_str(src);
    let mut stack: Vec<String> = Vec::new();
    let mut records = Vec::new();
    let mut current: Option<Record> = None;
    let mut record_depth = 0usize;

    loop {
        let event = reader.read_event().map_err(|e| {
            let pos = reader.buffer_position() as usize;
            let consumed = &src[..pos.min(src.len())];
            let line = consumed.bytes().filter(|b| *b == b'\n').count() + 1;
            let column = consumed.rfind('\n').map_or(pos + 1, |nl| pos - nl);
            IngestError::Syntax {
                line,
                column,
                message: e.to_string(),
            }
        })?;
        match event {
            Event::Start(start) => {
                let name = String::from_utf8_lossy(start.name().as_ref()).to_string();
                stack.push(name);
                if current.is_none() && stack_matches(&stack, &segments) {
                    current = Some(Record::new());
                    record_depth = stack.len();
                }
            }
            Event::End(_) => {
                if let Some(record) = current.take() {
                    if stack.len() == record_depth {
                        records.push(record);
                    } else {
                        current = Some(record);
                    }
                }
                stack.pop();
            }
            Event::Empty(_) => {} // no text content to collect
            Event::Text(text) => {
                if let Some(record) = current.as_mut() {
                    if stack.len() > record_depth {
                        let raw = text
                            .unescape()
                            .map_err(|e| IngestError::syntax(e.to_string()))?;
                        let trimmed = raw.trim();
                        if !trimmed.is_empty() {
                            let path = stack[record_depth..].join("/");
                            record
                                .entry(normalize_label(&path))
                                .or_default()
                                .push_str(trimmed);
                        }
                    }
                }
            }
            Event::CData(data) => {
                if let Some(record) = current.as_mut() {
                    if stack.len() > record_depth {
                        let raw = String::from_utf8_lossy(&data).to_string();
                        if !raw.trim().is_empty() {
                            let path = stack[record_depth..].join("/");
                            record
                                .entry(normalize_label(&path))
                                .or_default()
                                .push_str(raw.trim());
                        }
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }

    if records.is_empty() {
        return Err(IngestError::RecordPath {
            path: record_path.to_string(),
        });
    }
    Ok(records)
}

fn stack_matches(stack: &[String], segments: &[&str]) -> bool {
    stack.len() == segments.len() && stack.iter().zip(segments).all(|(a, b)| a == b)
}

/// Infers attribute datatypes by sampling every record: all non-sentinel
/// values parse as a date → date, all integers → integer, otherwise string.
/// `seed_attrs` (CSV headers) appear in the schema even with no values.
pub fn infer_schema(records: &[Record], seed_attrs: &[String]) -> BTreeMap<String, DataType> {
    let mut buckets: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for attr in seed_attrs {
        buckets.entry(attr.clone()).or_default();
    }
    for record in records {
        for (attr, value) in record {
            let bucket = buckets.entry(attr.clone()).or_default();
            if !values::is_sentinel(value) {
                bucket.push(value);
            }
        }
    }
    buckets
        .into_iter()
        .map(|(attr, vals)| {
            let datatype = if vals.is_empty() {
                DataType::String
            } else if vals.iter().all(|v| values::parse_date(v).is_some()) {
                DataType::Date
            } else if vals.iter().all(|v| values::parse_integer(v).is_some()) {
                DataType::Integer
            } else {
                DataType::String
            };
            (attr, datatype)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let bytes = b"ID-PATIENT,firstname,familyname\np1,Ada,Rossi\np2,Bea,Verdi\n";
        let (records, headers) = parse_csv_records(bytes).unwrap();
        assert_eq!(headers, vec!["id_patient", "firstname", "familyname"]);
        assert_eq!(records.len(), 2);
        assert_eq!(records[0]["id_patient"], "p1");
        let schema = infer_schema(&records, &headers);
        assert_eq!(schema.len(), 3);
        assert_eq!(schema["firstname"], DataType::String);
    }

    #[test]
    fn csv_duplicate_header_rejected() {
        let err = parse_csv_records(b"a,A\n1,2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate csv column"));
    }

    #[test]
    fn csv_ragged_row_is_syntax_error() {
        let err = parse_csv_records(b"a,b\n1\n").unwrap_err();
        assert!(matches!(err, IngestError::Syntax { .. }));
    }

    #[test]
    fn json_empty_array_is_legal() {
        let records = parse_json_records(b"[]", None).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn json_nested_paths_flatten() {
        let bytes = br#"{"rows": [{"patient": {"id": "p1", "vitals": {"bp": "120/80"}}, "active": true, "visits": 3}]}"#;
        let records = parse_json_records(bytes, Some("/rows")).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0]["patient_id"], "p1");
        assert_eq!(records[0]["patient_vitals_bp"], "120/80");
        assert_eq!(records[0]["active"], "true");
        assert_eq!(records[0]["visits"], "3");
    }

    #[test]
    fn json_missing_path_is_record_path_error() {
        let err = parse_json_records(b"{\"a\": []}", Some("/missing")).unwrap_err();
        assert!(matches!(err, IngestError::RecordPath { .. }));
    }

    #[test]
    fn json_preserves_record_order() {
        let bytes = br#"[{"n": "1"}, {"n": "2"}, {"n": "3"}]"#;
        let records = parse_json_records(bytes, None).unwrap();
        let ns: Vec<&str> = records.iter().map(|r| r["n"].as_str()).collect();
        assert_eq!(ns, vec!["1", "2", "3"]);
    }

    #[test]
    fn xml_records_with_nested_leaves() {
        let bytes = br#"<?xml version="1.0"?>
<translations>
  <translation>
    <target>en</target>
    <meta><source>it</source></meta>
  </translation>
  <translation>
    <target>fr</target>
  </translation>
</translations>"#;
        let records = parse_xml_records(bytes, "/translations/translation").unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0]["target"], "en");
        assert_eq!(records[0]["meta_source"], "it");
        assert!(!records[1].contains_key("meta_source"));
    }

    #[test]
    fn xml_unmatched_path_is_record_path_error() {
        let bytes = b"<patients><patient><id>p1</id></patient></patients>";
        let err = parse_xml_records(bytes, "/people/person").unwrap_err();
        assert!(matches!(err, IngestError::RecordPath { .. }));
    }

    #[test]
    fn xml_malformed_is_syntax_error() {
        let err = parse_xml_records(b"<a><b></a>", "/a/b").unwrap_err();
        assert!(matches!(err, IngestError::Syntax { .. }));
    }

    #[test]
    fn inference_prefers_date_then_integer() {
        let records = vec![
            BTreeMap::from([
                ("d".to_string(), "12/03/2021".to_string()),
                ("i".to_string(), "42".to_string()),
                ("s".to_string(), "42x".to_string()),
                ("n".to_string(), "N/A".to_string()),
            ]),
            BTreeMap::from([
                ("d".to_string(), "2021-03-13".to_string()),
                ("i".to_string(), "-7".to_string()),
                ("s".to_string(), "1".to_string()),
            ]),
        ];
        let schema = infer_schema(&records, &[]);
        assert_eq!(schema["d"], DataType::Date);
        assert_eq!(schema["i"], DataType::Integer);
        assert_eq!(schema["s"], DataType::String);
        // sentinel-only column falls back to string
        assert_eq!(schema["n"], DataType::String);
    }

    #[test]
    fn inference_is_deterministic() {
        let records = vec![BTreeMap::from([
            ("a".to_string(), "1".to_string()),
            ("b".to_string(), "x".to_string()),
        ])];
        assert_eq!(infer_schema(&records, &[]), infer_schema(&records, &[]));
    }
}
