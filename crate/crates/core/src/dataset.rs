//! Line-delimited text format for `D` and `P`.
//!
//! ```text
//! #fairranklab-dataset kind=pairs version=1 precision=17
//! query_id<TAB>user_features<TAB>context_features<TAB>item_a<TAB>...
//! 12<TAB>1.0000000000000000e-1;-2.5000000000000000e0<TAB>...
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits,
//! which round-trips every `f64` exactly. Vector columns join their
//! components with `;` (an empty vector is an empty field).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Group, Interaction, InteractionLog, PairDataset, PairObservation, Query, Side};

pub const DATASET_VERSION: u32 = 1;
pub const PRECISION: usize = 17;
const MAGIC: &str = "#fairranklab-dataset";

/// A dataset that can be stored in the text format.
pub trait TextDataset: Sized {
    type Record;
    const KIND: &'static str;
    const COLUMNS: &'static [&'static str];

    fn records(&self) -> &[Self::Record];
    fn from_records(records: Vec<Self::Record>) -> Self;
    fn encode(record: &Self::Record, out: &mut Vec<String>);
    fn decode(fields: &[&str]) -> std::result::Result<Self::Record, String>;
}

pub fn format_real(x: f64) -> String {
    format!("{:.*e}", PRECISION - 1, x)
}

fn format_vec(v: &[f64]) -> String {
    v.iter().map(|x| format_real(*x)).collect::<Vec<_>>().join(";")
}

fn parse_real(s: &str, column: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| format!("column `{column}`: cannot parse `{s}` as a real"))
}

fn parse_vec(s: &str, column: &str) -> std::result::Result<Vec<f64>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|x| parse_real(x, column)).collect()
}

fn parse_u64(s: &str, column: &str) -> std::result::Result<u64, String> {
    s.parse::<u64>()
        .map_err(|_| format!("column `{column}`: cannot parse `{s}` as an id"))
}

fn parse_group(s: &str, column: &str) -> std::result::Result<Group, String> {
    match s {
        "0" => Ok(Group::NotSubgroup),
        "1" => Ok(Group::Subgroup),
        _ => Err(format!("column `{column}`: group must be 0 or 1, got `{s}`")),
    }
}

fn parse_side(s: &str, column: &str) -> std::result::Result<Side, String> {
    match s {
        "a" => Ok(Side::A),
        "b" => Ok(Side::B),
        _ => Err(format!("column `{column}`: expected `a` or `b`, got `{s}`")),
    }
}

fn side_str(side: Side) -> &'static str {
    match side {
        Side::A => "a",
        Side::B => "b",
    }
}

impl TextDataset for InteractionLog {
    type Record = Interaction;
    const KIND: &'static str = "interactions";
    const COLUMNS: &'static [&'static str] = &[
        "query_id",
        "user_features",
        "context_features",
        "item_id",
        "clicked",
        "engagement",
    ];

    fn records(&self) -> &[Interaction] {
        &self.records
    }

    fn from_records(records: Vec<Interaction>) -> Self {
        InteractionLog { records }
    }

    fn encode(r: &Interaction, out: &mut Vec<String>) {
        out.push(r.query.query_id.to_string());
        out.push(format_vec(&r.query.user_features));
        out.push(format_vec(&r.query.context_features));
        out.push(r.item_id.to_string());
        out.push(if r.clicked { "1" } else { "0" }.to_string());
        out.push(format_real(r.engagement));
    }

    fn decode(f: &[&str]) -> std::result::Result<Interaction, String> {
        let clicked = match f[4] {
            "0" => false,
            "1" => true,
            other => return Err(format!("column `clicked`: expected 0 or 1, got `{other}`")),
        };
        let query = Query {
            query_id: parse_u64(f[0], "query_id")?,
            user_features: parse_vec(f[1], "user_features")?,
            context_features: parse_vec(f[2], "context_features")?,
        };
        Interaction::new(
            query,
            parse_u64(f[3], "item_id")?,
            clicked,
            parse_real(f[5], "engagement")?,
        )
        .map_err(|e| e.to_string())
    }
}

impl TextDataset for PairDataset {
    type Record = PairObservation;
    const KIND: &'static str = "pairs";
    const COLUMNS: &'static [&'static str] = &[
        "query_id",
        "user_features",
        "context_features",
        "item_a",
        "item_b",
        "group_a",
        "group_b",
        "clicked",
        "engagement",
        "slate_order",
    ];

    fn records(&self) -> &[PairObservation] {
        &self.records
    }

    fn from_records(records: Vec<PairObservation>) -> Self {
        PairDataset { records }
    }

    fn encode(r: &PairObservation, out: &mut Vec<String>) {
        out.push(r.query.query_id.to_string());
        out.push(format_vec(&r.query.user_features));
        out.push(format_vec(&r.query.context_features));
        out.push(r.item_a.to_string());
        out.push(r.item_b.to_string());
        out.push(r.group_a.bit().to_string());
        out.push(r.group_b.bit().to_string());
        out.push(side_str(r.clicked).to_string());
        out.push(format_real(r.engagement));
        out.push(side_str(r.slate_order).to_string());
    }

    fn decode(f: &[&str]) -> std::result::Result<PairObservation, String> {
        let rec = PairObservation {
            query: Query {
                query_id: parse_u64(f[0], "query_id")?,
                user_features: parse_vec(f[1], "user_features")?,
                context_features: parse_vec(f[2], "context_features")?,
            },
            item_a: parse_u64(f[3], "item_a")?,
            item_b: parse_u64(f[4], "item_b")?,
            group_a: parse_group(f[5], "group_a")?,
            group_b: parse_group(f[6], "group_b")?,
            clicked: parse_side(f[7], "clicked")?,
            engagement: parse_real(f[8], "engagement")?,
            slate_order: parse_side(f[9], "slate_order")?,
        };
        rec.validate().map_err(|e| e.to_string())?;
        Ok(rec)
    }
}

pub fn header_line<D: TextDataset>() -> String {
    format!("{MAGIC} kind={} version={DATASET_VERSION} precision={PRECISION}", D::KIND)
}

pub fn write_dataset<D: TextDataset, W: Write>(data: &D, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", header_line::<D>())?;
    writeln!(w, "{}", D::COLUMNS.join("\t"))?;
    let mut fields = Vec::with_capacity(D::COLUMNS.len());
    for r in data.records() {
        fields.clear();
        D::encode(r, &mut fields);
        writeln!(w, "{}", fields.join("\t"))?;
    }
    w.flush()
}

pub fn save_dataset<D: TextDataset>(data: &D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(data, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Parses a dataset; `path` is only used to label errors.
pub fn read_dataset<D: TextDataset, R: Read>(reader: R, path: &Path) -> Result<D> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let schema_err = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = BufReader::new(reader).lines();
    let mut next_line = |n: usize| -> Result<Option<String>> {
        lines
            .next()
            .transpose()
            .map_err(|e| parse_err(n, format!("unreadable line: {e}")))
    };

    let header = next_line(1)?.ok_or_else(|| schema_err("empty file, missing header".into()))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(schema_err(format!("not a dataset file (header `{header}`)")));
    }
    let (mut kind, mut version, mut precision) = (None, None, None);
    for tok in tokens {
        match tok.split_once('=') {
            Some(("kind", v)) => kind = Some(v.to_string()),
            Some(("version", v)) => version = v.parse::<u32>().ok(),
            Some(("precision", v)) => precision = v.parse::<usize>().ok(),
            _ => return Err(schema_err(format!("unrecognized header token `{tok}`"))),
        }
    }
    match kind.as_deref() {
        Some(k) if k == D::KIND => {}
        other => {
            return Err(schema_err(format!(
                "expected kind `{}`, found `{}`",
                D::KIND,
                other.unwrap_or("<missing>")
            )))
        }
    }
    if version != Some(DATASET_VERSION) {
        return Err(schema_err(format!(
            "unsupported version {version:?}, this build reads version {DATASET_VERSION}"
        )));
    }
    if precision.is_none() {
        return Err(schema_err("header does not declare precision".into()));
    }

    let columns = next_line(2)?.ok_or_else(|| schema_err("missing column row".into()))?;
    if columns.split('\t').ne(D::COLUMNS.iter().copied()) {
        return Err(schema_err(format!(
            "column row `{columns}` does not match `{}`",
            D::COLUMNS.join("\t")
        )));
    }

    let mut records = Vec::new();
    let mut n = 2;
    while let Some(line) = next_line(n + 1)? {
        n += 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != D::COLUMNS.len() {
            return Err(parse_err(
                n,
                format!("expected {} fields, found {}", D::COLUMNS.len(), fields.len()),
            ));
        }
        records.push(D::decode(&fields).map_err(|m| parse_err(n, m))?);
    }
    Ok(D::from_records(records))
}

pub fn load_dataset<D: TextDataset>(path: impl AsRef<Path>) -> Result<D> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, path)
}
