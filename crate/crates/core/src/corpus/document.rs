use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

/// Ground-truth class of a document. Positive class for metrics is `Synthetic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real,
    Synthetic,
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Synthetic => "synthetic",
            Label::Unknown => "unknown",
        }
    }

    /// `1` for synthetic, `0` for real. Unknown has no target.
    pub fn target(self) -> Option<u8> {
        match self {
            Label::Real => Some(0),
            Label::Synthetic => Some(1),
            Label::Unknown => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" | "human" => Ok(Label::Real),
            "fake" | "synthetic" | "machine" => Ok(Label::Synthetic),
            "unknown" | "" => Ok(Label::Unknown),
            other => Err(Error::invalid("label", format!("unrecognised label {other:?}"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// A labeled text sample: the unit of detection and attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Label,
    #[serde(rename = "domain", default)]
    pub domain_tag: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label,
            domain_tag: String::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain_tag = domain.into();
        self
    }
}

/// Reads a JSON Lines dataset. Blank lines are skipped but still counted
/// for line numbering.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file_name = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_jsonl(&raw, &file_name)
}

/// Parses JSON Lines content; `source_name` seeds ids for lines without one.
pub fn parse_jsonl(raw: &str, source_name: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_line(line, line_no, source_name)?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::invalid(
                "dataset",
                format!("duplicate id {:?} at line {line_no}", doc.id),
            ));
        }
        docs.push(doc);
    }
    Ok(docs)
}

fn parse_line(line: &str, line_no: usize, source_name: &str) -> Result<Document> {
    let malformed = |message: String| Error::MalformedLine {
        line: line_no,
        message,
    };
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("expected a JSON object".into()))?;

    let id = match obj.get("id") {
        None | Some(Value::Null) => format!("{source_name}:{line_no}"),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(other) => return Err(malformed(format!("\"id\" must be a string, got {other}"))),
    };
    let text = match obj.get("text") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("\"text\" must be a string".into())),
        None => return Err(malformed("missing \"text\" field".into())),
    };
    if text.trim().is_empty() {
        return Err(Error::EmptyText { id, line: line_no });
    }
    let label = match obj.get("label") {
        None | Some(Value::Null) => Label::Unknown,
        Some(Value::String(s)) => s.parse().map_err(|e: Error| malformed(e.to_string()))?,
        Some(other) => return Err(malformed(format!("\"label\" must be a string, got {other}"))),
    };
    let domain_tag = match obj.get("domain") {
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    };
    let mut meta = BTreeMap::new();
    if let Some(Value::Object(m)) = obj.get("meta") {
        for (k, v) in m {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            meta.insert(k.clone(), v);
        }
    }
    Ok(Document {
        id,
        text,
        label,
        domain_tag,
        meta,
    })
}

/// Writes any serializable records as JSON Lines.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
