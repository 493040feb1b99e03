//! Reading count samples from text files.

use std::path::Path;

use disckern::CountSample;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("line {line}: {message}")]
    Entry { line: usize, message: String },
    #[error("no counts found")]
    Empty,
}

impl IngestError {
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Entry { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn parse_entry(token: &str, line: usize) -> Result<u64, IngestError> {
    let fail = |message: String| Err(IngestError::Entry { line, message });
    if let Ok(v) = token.parse::<u64>() {
        return Ok(v);
    }
    if token.contains(',') {
        return fail(format!("expected a single column, found `{token}`"));
    }
    if let Ok(v) = token.parse::<i64>() {
        return fail(format!("negative count {v}"));
    }
    match token.parse::<f64>() {
        Ok(v) if v < 0.0 => fail(format!("negative count `{token}`")),
        Ok(v) if v.is_finite() => fail(format!("fractional count `{token}`")),
        _ => fail(format!("not a number: `{token}`")),
    }
}

/// Parse one non-negative integer per line, optionally under a `count`
/// header. Blank lines are skipped.
pub fn parse_counts(text: &str) -> Result<CountSample, IngestError> {
    let mut values = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let token = raw.trim();
        if token.is_empty() {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if token.trim_matches('"').eq_ignore_ascii_case("count") {
                continue;
            }
        }
        values.push(parse_entry(token, idx + 1)?);
    }
    CountSample::new(values).map_err(|_| IngestError::Empty)
}

pub fn ingest_counts(path: &Path) -> Result<CountSample, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_counts(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_lines() {
        assert_eq!(parse_counts("3\n5\n3\n").unwrap().values(), &[3, 5, 3]);
        assert_eq!(parse_counts("\n 7 \n\n2\r\n").unwrap().values(), &[7, 2]);
    }

    #[test]
    fn csv_header() {
        assert_eq!(parse_counts("count\n0\n2\n").unwrap().values(), &[0, 2]);
        assert_eq!(parse_counts("\n\"count\"\n4\n").unwrap().values(), &[4]);
    }

    #[test]
    fn bad_entries_name_their_line() {
        let err = parse_counts("3\n-1\n").unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().contains("negative"));
        let err = parse_counts("1\n\n2.5\n").unwrap_err();
        assert_eq!(err.line(), Some(3));
        assert!(err.to_string().contains("fractional"));
        assert_eq!(parse_counts("x\n").unwrap_err().line(), Some(1));
        assert_eq!(
            parse_counts("count\n1\ncount\n").unwrap_err().line(),
            Some(3)
        );
        assert_eq!(parse_counts("1,2\n").unwrap_err().line(), Some(1));
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_counts("").unwrap_err(), IngestError::Empty);
        assert_eq!(parse_counts("count\n\n").unwrap_err(), IngestError::Empty);
    }

    #[test]
    fn line_format_round_trip() {
        let s = CountSample::new(vec![0, 12, 3, 3, 400]).unwrap();
        assert_eq!(parse_counts(&s.to_lines()).unwrap(), s);
    }
}
