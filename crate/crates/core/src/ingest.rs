//! Turning uploaded, pasted or fetched bytes into a [`RawTable`].
//!
//! Supported payloads are csv, tsv and json-records, optionally gzip- or
//! single-entry zip-compressed. The size limit applies both to the payload
//! as received and to its decompressed form; decompression stops as soon
//! as the limit is crossed.

use std::io::{Cursor, Read};

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::RawTable;

#[cfg(feature = "fetch")]
pub mod fetch;

/// Upload size limit: 100 MB.
pub const DEFAULT_MAX_BYTES: usize = 100_000_000;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
const ZIP_MAGIC: [u8; 4] = [b'P', b'K', 0x03, 0x04];
const UTF8_BOM: &[u8] = &[0xef, 0xbb, 0xbf];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("payload exceeds the limit of {limit} bytes")]
    TooLarge { limit: usize },
    #[error("decompression failed: {0}")]
    Decompress(String),
    #[error("zip archive must contain exactly one entry, found {0}")]
    AmbiguousArchive(usize),
    #[error("input is not valid UTF-8 (at byte {0})")]
    InvalidEncoding(usize),
    #[error("input contains no header row")]
    EmptyInput,
    #[error("data row {row} has {found} cells, header has {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("malformed delimited text: {0}")]
    Delimited(String),
    #[error("malformed json records: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Tsv,
    JsonRecords,
}

impl Format {
    pub fn delimiter(self) -> Option<u8> {
        match self {
            Format::Csv => Some(b','),
            Format::Tsv => Some(b'\t'),
            Format::JsonRecords => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Tsv => "tsv",
            Format::JsonRecords => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    None,
    Gzip,
    Zip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    FileBytes,
    PastedText,
    Url,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpec {
    pub origin: Origin,
    pub declared_name: Option<String>,
    pub max_bytes: usize,
}

impl SourceSpec {
    pub fn file(name: impl Into<String>) -> Self {
        Self {
            origin: Origin::FileBytes,
            declared_name: Some(name.into()),
            max_bytes: DEFAULT_MAX_BYTES,
        }
    }

    pub fn pasted() -> Self {
        Self {
            origin: Origin::PastedText,
            declared_name: None,
            max_bytes: DEFAULT_MAX_BYTES,
        }
    }

    pub fn url(name: Option<String>) -> Self {
        Self {
            origin: Origin::Url,
            declared_name: name,
            max_bytes: DEFAULT_MAX_BYTES,
        }
    }

    pub fn with_max_bytes(mut self, max_bytes: usize) -> Self {
        self.max_bytes = max_bytes;
        self
    }
}

fn format_from_extension(ext: &str) -> Result<Format, IngestError> {
    match ext.to_ascii_lowercase().as_str() {
        "csv" => Ok(Format::Csv),
        "tsv" | "tab" => Ok(Format::Tsv),
        "json" => Ok(Format::JsonRecords),
        other => Err(IngestError::UnsupportedFormat(if other.is_empty() {
            "no file extension".to_string()
        } else {
            format!(".{other}")
        })),
    }
}

/// Splits `name` into its data extension and compression suffix.
fn split_name(name: &str) -> (String, Option<Compression>) {
    let lower = name.to_ascii_lowercase();
    let (stem, comp) = if let Some(s) = lower.strip_suffix(".gz") {
        (s.to_string(), Some(Compression::Gzip))
    } else if let Some(s) = lower.strip_suffix(".zip") {
        (s.to_string(), Some(Compression::Zip))
    } else {
        (lower, None)
    };
    let ext = match stem.rsplit_once('.') {
        Some((_, ext)) => ext.to_string(),
        None => String::new(),
    };
    (ext, comp)
}

/// File name of the first entry recorded in a zip local file header.
fn zip_first_entry_name(head: &[u8]) -> Option<String> {
    if head.len() < 30 || head[..4] != ZIP_MAGIC {
        return None;
    }
    let len = u16::from_le_bytes([head[26], head[27]]) as usize;
    let name = head.get(30..30 + len)?;
    String::from_utf8(name.to_vec()).ok()
}

/// Decides payload format and compression. The declared name's extension
/// picks the format (case-insensitively); gzip and zip magic numbers
/// override the compression it implies. Pasted text is always tsv.
pub fn sniff_format(
    source: &SourceSpec,
    head: &[u8],
) -> Result<(Format, Compression), IngestError> {
    if source.origin == Origin::PastedText {
        return Ok((Format::Tsv, Compression::None));
    }
    let magic = if head.len() >= 4 && head[..4] == ZIP_MAGIC {
        Some(Compression::Zip)
    } else if head.len() >= 2 && head[..2] == GZIP_MAGIC {
        Some(Compression::Gzip)
    } else {
        None
    };
    let name = source.declared_name.as_deref().unwrap_or("");
    let (ext, suffix) = split_name(name);

    let compression = magic.unwrap_or(match suffix {
        // A compression suffix without the matching magic number: trust
        // the bytes, which are then plain text.
        Some(_) if head.len() >= 4 => Compression::None,
        Some(c) => c,
        None => Compression::None,
    });

    let format = match format_from_extension(&ext) {
        Ok(f) => f,
        Err(e) if compression == Compression::Zip => {
            let inner = zip_first_entry_name(head).ok_or(e)?;
            format_from_extension(&split_name(&inner).0)?
        }
        Err(e) => return Err(e),
    };
    Ok((format, compression))
}

fn read_limited(reader: impl Read, limit: usize) -> Result<Vec<u8>, IngestError> {
    let mut out = Vec::new();
    reader
        .take(limit as u64 + 1)
        .read_to_end(&mut out)
        .map_err(|e| IngestError::Decompress(e.to_string()))?;
    if out.len() > limit {
        return Err(IngestError::TooLarge { limit });
    }
    Ok(out)
}

/// Decompresses `bytes`, never producing more than `max_bytes`.
pub fn decompress(
    bytes: &[u8],
    compression: Compression,
    max_bytes: usize,
) -> Result<Vec<u8>, IngestError> {
    if bytes.len() > max_bytes {
        return Err(IngestError::TooLarge { limit: max_bytes });
    }
    match compression {
        Compression::None => Ok(bytes.to_vec()),
        Compression::Gzip => read_limited(MultiGzDecoder::new(bytes), max_bytes),
        Compression::Zip => {
            let mut archive = zip::ZipArchive::new(Cursor::new(bytes))
                .map_err(|e| IngestError::Decompress(e.to_string()))?;
            if archive.len() != 1 {
                return Err(IngestError::AmbiguousArchive(archive.len()));
            }
            let entry = archive
                .by_index(0)
                .map_err(|e| IngestError::Decompress(e.to_string()))?;
            read_limited(entry, max_bytes)
        }
    }
}

fn decode_utf8(bytes: &[u8]) -> Result<&str, IngestError> {
    let bytes = bytes.strip_prefix(UTF8_BOM).unwrap_or(bytes);
    std::str::from_utf8(bytes).map_err(|e| IngestError::InvalidEncoding(e.valid_up_to()))
}

fn check_header(header: &[String]) -> Result<(), IngestError> {
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(IngestError::DuplicateColumn(h.clone()));
        }
    }
    Ok(())
}

fn parse_delimited(text: &str, delimiter: u8) -> Result<RawTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(rec) => rec
            .map_err(|e| IngestError::Delimited(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect(),
        None => return Err(IngestError::EmptyInput),
    };
    check_header(&header)?;
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| IngestError::Delimited(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(IngestError::RaggedRows {
                row: i + 1,
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

fn json_cell(value: &serde_json::Value) -> Result<String, IngestError> {
    use serde_json::Value;
    match value {
        Value::Null => Ok(String::new()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Number(n) => Ok(n.to_string()),
        Value::String(s) => Ok(s.clone()),
        Value::Array(_) | Value::Object(_) => {
            Err(IngestError::Json("nested values are not supported".into()))
        }
    }
}

fn parse_json_records(text: &str) -> Result<RawTable, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| IngestError::Json(e.to_string()))?;
    let items = value
        .as_array()
        .ok_or_else(|| IngestError::Json("expected an array of objects".into()))?;
    let first = match items.first() {
        Some(v) => v
            .as_object()
            .ok_or_else(|| IngestError::Json("record 1 is not an object".into()))?,
        None => return Err(IngestError::EmptyInput),
    };
    let header: Vec<String> = first.keys().cloned().collect();
    let mut rows = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| IngestError::Json(format!("record {} is not an object", i + 1)))?;
        if obj.len() != header.len() || !header.iter().all(|h| obj.contains_key(h)) {
            return Err(IngestError::RaggedRows {
                row: i + 1,
                expected: header.len(),
                found: obj.len(),
            });
        }
        rows.push(
            header
                .iter()
                .map(|h| json_cell(&obj[h]))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(RawTable { header, rows })
}

/// Parses a payload into a raw table. Cell text is kept verbatim.
pub fn parse_table(
    bytes: &[u8],
    format: Format,
    compression: Compression,
    max_bytes: usize,
) -> Result<RawTable, IngestError> {
    let payload = decompress(bytes, compression, max_bytes)?;
    let text = decode_utf8(&payload)?;
    match format.delimiter() {
        Some(d) => parse_delimited(text, d),
        None => parse_json_records(text),
    }
}

/// Sniffs and parses a payload from `source`.
pub fn read_source(source: &SourceSpec, bytes: &[u8]) -> Result<RawTable, IngestError> {
    if bytes.len() > source.max_bytes {
        return Err(IngestError::TooLarge {
            limit: source.max_bytes,
        });
    }
    let head = &bytes[..bytes.len().min(512)];
    let (format, compression) = sniff_format(source, head)?;
    parse_table(bytes, format, compression, source.max_bytes)
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use flate2::write::GzEncoder;

    use super::*;

    pub(crate) fn gzip(bytes: &[u8]) -> Vec<u8> {
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(bytes).unwrap();
        enc.finish().unwrap()
    }

    pub(crate) fn zip_entries(entries: &[(&str, &[u8])]) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = zip::ZipWriter::new(&mut buf);
            let opts = zip::write::SimpleFileOptions::default()
                .compression_method(zip::CompressionMethod::Deflated);
            for (name, data) in entries {
                w.start_file(*name, opts).unwrap();
                w.write_all(data).unwrap();
            }
            w.finish().unwrap();
        }
        buf.into_inner()
    }

    #[test]
    fn sniff_extension_case_insensitive() {
        let s = SourceSpec::file("results.CSV");
        assert_eq!(
            sniff_format(&s, b"a,b\n").unwrap(),
            (Format::Csv, Compression::None)
        );
        let s = SourceSpec::file("x.Json");
        assert_eq!(sniff_format(&s, b"[{}]").unwrap().0, Format::JsonRecords);
    }

    #[test]
    fn sniff_gzip_magic() {
        let bytes = gzip(b"a,b\n1,2\n");
        let s = SourceSpec::file("results.csv.gz");
        assert_eq!(
            sniff_format(&s, &bytes).unwrap(),
            (Format::Csv, Compression::Gzip)
        );
        // Magic bytes win over a missing compression suffix.
        let s = SourceSpec::file("results.csv");
        assert_eq!(sniff_format(&s, &bytes).unwrap().1, Compression::Gzip);
    }

    #[test]
    fn sniff_pasted_is_tsv() {
        assert_eq!(
            sniff_format(&SourceSpec::pasted(), b"a,b").unwrap(),
            (Format::Tsv, Compression::None)
        );
    }

    #[test]
    fn sniff_zip_reads_entry_name() {
        let bytes = zip_entries(&[("inner.tsv", b"a\tb\n1\t2\n")]);
        let s = SourceSpec::file("archive.ZIP");
        assert_eq!(
            sniff_format(&s, &bytes).unwrap(),
            (Format::Tsv, Compression::Zip)
        );
    }

    #[test]
    fn sniff_rejects_binary_stat_formats() {
        for name in [
            "estimates.dta",
            "x.sav",
            "x.sas7bdat",
            "x.rds",
            "x.csv.bz2",
            "x.xlsx",
            "noext",
        ] {
            assert!(
                matches!(
                    sniff_format(&SourceSpec::file(name), b"abcd"),
                    Err(IngestError::UnsupportedFormat(_))
                ),
                "{name}"
            );
        }
    }

    #[test]
    fn parse_small_csv() {
        let t = parse_table(b"a,b\n1,2\n3,4", Format::Csv, Compression::None, 100).unwrap();
        assert_eq!(t.header, vec!["a", "b"]);
        assert_eq!(t.rows, vec![vec!["1", "2"], vec!["3", "4"]]);
    }

    #[test]
    fn gzip_and_zip_are_transparent() {
        let plain = b"a,b\n1,2\n3,4\n";
        let expected = parse_table(plain, Format::Csv, Compression::None, 1000).unwrap();
        let gz = parse_table(&gzip(plain), Format::Csv, Compression::Gzip, 1000).unwrap();
        let zp = parse_table(
            &zip_entries(&[("a.csv", plain)]),
            Format::Csv,
            Compression::Zip,
            1000,
        )
        .unwrap();
        assert_eq!(gz, expected);
        assert_eq!(zp, expected);
    }

    #[test]
    fn zip_with_two_entries_is_ambiguous() {
        let z = zip_entries(&[("a.csv", b"a\n1\n"), ("b.csv", b"b\n2\n")]);
        assert!(matches!(
            parse_table(&z, Format::Csv, Compression::Zip, 1000),
            Err(IngestError::AmbiguousArchive(2))
        ));
    }

    #[test]
    fn decompression_bomb_is_cut_off() {
        let big = vec![b'0'; 5_000_000];
        let gz = gzip(&big);
        assert!(gz.len() < 100_000);
        assert!(matches!(
            decompress(&gz, Compression::Gzip, 1_000_000),
            Err(IngestError::TooLarge { limit: 1_000_000 })
        ));
        assert!(matches!(
            read_source(
                &SourceSpec::file("x.csv").with_max_bytes(10),
                b"a,b\n1,2\n3,4\n"
            ),
            Err(IngestError::TooLarge { .. })
        ));
    }

    #[test]
    fn ragged_rows_reported_with_index() {
        let err = parse_table(b"a,b\n1,2\n3\n", Format::Csv, Compression::None, 100).unwrap_err();
        assert!(matches!(
            err,
            IngestError::RaggedRows {
                row: 2,
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            parse_table(b"", Format::Csv, Compression::None, 100),
            Err(IngestError::EmptyInput)
        ));
        assert!(matches!(
            parse_table(b"  ", Format::JsonRecords, Compression::None, 100),
            Err(IngestError::EmptyInput)
        ));
    }

    #[test]
    fn bom_tolerated_other_encodings_rejected() {
        let t = parse_table(b"\xef\xbb\xbfa,b\n1,2", Format::Csv, Compression::None, 100).unwrap();
        assert_eq!(t.header[0], "a");
        assert!(matches!(
            parse_table(b"a,b\n\xff,2", Format::Csv, Compression::None, 100),
            Err(IngestError::InvalidEncoding(4))
        ));
    }

    #[test]
    fn quoted_csv_and_pasted_tsv() {
        let t = parse_table(b"name,x\n\"a, b\",1\n", Format::Csv, Compression::None, 100).unwrap();
        assert_eq!(t.rows[0][0], "a, b");
        let t = read_source(&SourceSpec::pasted(), b"est\tse\n0.1\t0.02\n").unwrap();
        assert_eq!(t.header, vec!["est", "se"]);
        assert_eq!(t.rows[0], vec!["0.1", "0.02"]);
    }

    #[test]
    fn json_records() {
        let t = parse_table(
            br#"[{"m":"a","v":1.5,"s":null},{"m":"b","v":-2,"s":"NA"}]"#,
            Format::JsonRecords,
            Compression::None,
            1000,
        )
        .unwrap();
        assert_eq!(t.header, vec!["m", "v", "s"]);
        assert_eq!(t.rows[0], vec!["a", "1.5", ""]);
        assert_eq!(t.rows[1], vec!["b", "-2", "NA"]);
        let err = parse_table(
            br#"[{"a":1},{"b":2}]"#,
            Format::JsonRecords,
            Compression::None,
            100,
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::RaggedRows { row: 2, .. }));
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(matches!(
            parse_table(b"a,a\n1,2", Format::Csv, Compression::None, 100),
            Err(IngestError::DuplicateColumn(_))
        ));
    }
}
