use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Preprocessed, RawInteraction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `userId,movieId,rating,timestamp` with a header line.
    MovieLens,
    /// Headerless `user item` pairs (comma or whitespace separated), rating 1.
    Pairs,
}

impl InputFormat {
    /// Pair files are already binary: every line is a positive and the
    /// rating threshold does not apply.
    pub fn is_binary(self) -> bool {
        matches!(self, InputFormat::Pairs)
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::MovieLens => "movielens",
            InputFormat::Pairs => "pairs",
        })
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens" => Ok(InputFormat::MovieLens),
            "pairs" => Ok(InputFormat::Pairs),
            other => Err(Error::InvalidParameter(format!(
                "unknown input format {other:?} (movielens|pairs)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub format: InputFormat,
    /// Malformed lines tolerated before failing.
    pub error_budget: usize,
}

impl IngestOptions {
    pub fn new(format: InputFormat) -> Self {
        Self {
            format,
            error_budget: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestOutcome {
    pub records: Vec<RawInteraction>,
    /// `(1-based line number, reason)` for each tolerated malformed line.
    pub skipped: Vec<(usize, String)>,
}

const MOVIELENS_HEADER: &str = "userId,movieId,rating,timestamp";
const MAX_REPORTED: usize = 5;

fn parse_movielens(line: &str) -> std::result::Result<RawInteraction, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(format!(
            "expected 4 comma-separated fields, got {}",
            fields.len()
        ));
    }
    let user = fields[0]
        .parse()
        .map_err(|e| format!("user id {:?}: {e}", fields[0]))?;
    let item = fields[1]
        .parse()
        .map_err(|e| format!("item id {:?}: {e}", fields[1]))?;
    let rating: f64 = fields[2]
        .parse()
        .map_err(|e| format!("rating {:?}: {e}", fields[2]))?;
    if !rating.is_finite() {
        return Err(format!("rating {:?} is not finite", fields[2]));
    }
    fields[3]
        .parse::<i64>()
        .map_err(|e| format!("timestamp {:?}: {e}", fields[3]))?;
    Ok(RawInteraction { user, item, rating })
}

fn parse_pair(line: &str) -> std::result::Result<RawInteraction, String> {
    let fields: Vec<&str> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if fields.len() != 2 {
        return Err(format!("expected 2 fields, got {}", fields.len()));
    }
    let user = fields[0]
        .parse()
        .map_err(|e| format!("user id {:?}: {e}", fields[0]))?;
    let item = fields[1]
        .parse()
        .map_err(|e| format!("item id {:?}: {e}", fields[1]))?;
    Ok(RawInteraction {
        user,
        item,
        rating: 1.0,
    })
}

pub fn ingest_reader<R: BufRead>(r: R, opts: &IngestOptions) -> Result<IngestOutcome> {
    let mut out = IngestOutcome::default();
    let mut seen_header = false;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let n = idx + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let parsed = match opts.format {
            InputFormat::MovieLens if !seen_header => {
                seen_header = true;
                if text == MOVIELENS_HEADER {
                    continue;
                }
                Err(format!("expected header {MOVIELENS_HEADER:?}"))
            }
            InputFormat::MovieLens => parse_movielens(text),
            InputFormat::Pairs => parse_pair(text),
        };
        match parsed {
            Ok(rec) => out.records.push(rec),
            Err(msg) => {
                out.skipped.push((n, msg));
                if out.skipped.len() > opts.error_budget {
                    let details = out
                        .skipped
                        .iter()
                        .take(MAX_REPORTED)
                        .map(|(l, m)| format!("line {l}: {m}"))
                        .collect::<Vec<_>>()
                        .join("; ");
                    return Err(Error::Malformed {
                        count: out.skipped.len(),
                        budget: opts.error_budget,
                        details,
                    });
                }
            }
        }
    }
    for (l, m) in &out.skipped {
        log::warn!("skipped malformed line {l}: {m}");
    }
    Ok(out)
}

pub fn ingest(path: &Path, opts: &IngestOptions) -> Result<IngestOutcome> {
    ingest_reader(BufReader::new(File::open(path)?), opts)
}

/// Writes the nonzeros as `user item` pairs with raw ids, in row order.
pub fn export_pairs<W: Write>(mut w: W, data: &Preprocessed) -> Result<()> {
    for (u, i) in data.matrix.coordinates() {
        writeln!(w, "{} {}", data.user_ids[u], data.item_ids[i])?;
    }
    Ok(())
}
