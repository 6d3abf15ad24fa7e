//! Plain-text instance and dataset formats.
//!
//! Instance: a header line `n m`, then `n` lines of `m` whitespace
//! separated `machine duration` pairs — the common public benchmark
//! layout, so existing job-shop files load directly. Dataset: an
//! integer count header followed by that many instances concatenated.
//! UTF-8, LF newlines.

use crate::error::Error;
use crate::instance::{Instance, Time};

/// Cursor over whitespace-separated tokens that remembers line/column
/// positions for error reporting.
struct Tokens<'a> {
    lines: Vec<&'a str>,
    line: usize,
    col: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().collect(),
            line: 0,
            col: 0,
        }
    }

    fn error(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line + 1,
            col: self.col + 1,
            reason: reason.into(),
        }
    }

    fn next(&mut self) -> Option<(&'a str, usize, usize)> {
        while self.line < self.lines.len() {
            let rest = &self.lines[self.line][self.col..];
            let trimmed = rest.trim_start();
            self.col += rest.len() - trimmed.len();
            if trimmed.is_empty() {
                self.line += 1;
                self.col = 0;
                continue;
            }
            let len = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
            let token = &trimmed[..len];
            let (line, col) = (self.line, self.col);
            self.col += len;
            return Some((token, line + 1, col + 1));
        }
        None
    }

    fn next_usize(&mut self, what: &str) -> Result<usize, Error> {
        match self.next() {
            None => Err(self.error(format!("unexpected end of input, expected {what}"))),
            Some((tok, line, col)) => tok.parse().map_err(|_| Error::Parse {
                line,
                col,
                reason: format!("expected {what}, found `{tok}`"),
            }),
        }
    }

    fn expect_end(&mut self) -> Result<(), Error> {
        match self.next() {
            None => Ok(()),
            Some((tok, line, col)) => Err(Error::Parse {
                line,
                col,
                reason: format!("trailing input `{tok}`"),
            }),
        }
    }
}

fn parse_instance(tokens: &mut Tokens<'_>) -> Result<Instance, Error> {
    let n = tokens.next_usize("job count")?;
    let m = tokens.next_usize("machine count")?;
    if n == 0 || m == 0 {
        return Err(tokens.error("job and machine counts must be positive"));
    }
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(m);
        for _ in 0..m {
            let machine = tokens.next_usize("machine id")?;
            let duration = tokens.next_usize("processing time")? as Time;
            row.push((machine, duration));
        }
        rows.push(row);
    }
    Instance::new(rows).map_err(|e| tokens.error(e.to_string()))
}

/// Parses a single instance from text.
pub fn read_instance(text: &str) -> Result<Instance, Error> {
    let mut tokens = Tokens::new(text);
    let inst = parse_instance(&mut tokens)?;
    tokens.expect_end()?;
    Ok(inst)
}

/// Renders a single instance.
pub fn write_instance(inst: &Instance) -> String {
    let mut out = format!("{} {}\n", inst.n_jobs(), inst.n_machines());
    for job in 0..inst.n_jobs() {
        let row: Vec<String> = inst
            .job_ops(job)
            .iter()
            .map(|o| format!("{} {}", o.machine, o.duration))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a dataset: count header, then instances.
pub fn read_dataset(text: &str) -> Result<Vec<Instance>, Error> {
    let mut tokens = Tokens::new(text);
    let count = tokens.next_usize("instance count")?;
    let mut instances = Vec::with_capacity(count);
    for _ in 0..count {
        instances.push(parse_instance(&mut tokens)?);
    }
    tokens.expect_end()?;
    Ok(instances)
}

/// Renders a dataset with its count header.
pub fn write_dataset(instances: &[Instance]) -> String {
    let mut out = format!("{}\n", instances.len());
    for inst in instances {
        out.push_str(&write_instance(inst));
    }
    out
}
