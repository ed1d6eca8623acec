//! Oracle that asks an operator on a terminal.

use std::io::{BufRead, Write};

use querybridge_core::oracle::{Oracle, OracleAnswer, OracleError, Query, Verdict};

pub struct TerminalOracle<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> TerminalOracle<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }

    fn line(&mut self, prompt: &str) -> Result<String, OracleError> {
        let unavailable = |e: std::io::Error| OracleError::OracleUnavailable(e.to_string());
        write!(self.output, "{prompt}").map_err(unavailable)?;
        self.output.flush().map_err(unavailable)?;
        let mut buf = String::new();
        if self.input.read_line(&mut buf).map_err(unavailable)? == 0 {
            return Err(OracleError::SessionClosed);
        }
        Ok(buf.trim().to_string())
    }
}

pub fn parse_verdict(s: &str) -> Option<Verdict> {
    match s.to_ascii_lowercase().as_str() {
        "y" | "yes" | "affirm" | "true" => Some(Verdict::Affirm),
        "n" | "no" | "refute" | "false" => Some(Verdict::Refute),
        "u" | "unknown" | "?" | "" => Some(Verdict::Unknown),
        _ => None,
    }
}

impl<R: BufRead, W: Write> Oracle for TerminalOracle<R, W> {
    fn answer(&mut self, q: &Query) -> Result<OracleAnswer, OracleError> {
        let header = format!("\n[query {}] {}\n  proposition: {}\n", q.sequence_no, q.question, q.proposition);
        write!(self.output, "{header}").map_err(|e| OracleError::OracleUnavailable(e.to_string()))?;
        let verdict = loop {
            let raw = self.line("  answer (y)es / (n)o / (u)nknown: ")?;
            if let Some(v) = parse_verdict(&raw) {
                break v;
            }
        };
        if verdict == Verdict::Unknown {
            return Ok(OracleAnswer::unknown());
        }
        let text = self.line("  details: ")?;
        let subs = self.line("  substitutions, comma separated: ")?;
        let subs = subs.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        Ok(OracleAnswer::new(verdict, &text, subs))
    }
}
