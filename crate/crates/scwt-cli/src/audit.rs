//! Pipeline audit log: which named tensors each stage consumed and produced.
//! Lets tests prove, for example, that test labels never feed a training
//! stage.

use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub stage: String,
    pub consumed: Vec<String>,
    pub produced: Vec<String>,
}

#[derive(Debug, Default)]
pub struct AuditLog {
    entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, stage: &str, consumed: &[&str], produced: &[&str]) {
        self.entries.push(AuditEntry {
            stage: stage.to_string(),
            consumed: consumed.iter().map(|s| s.to_string()).collect(),
            produced: produced.iter().map(|s| s.to_string()).collect(),
        });
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{} | consumed: {} | produced: {}",
                e.stage,
                e.consumed.join(", "),
                e.produced.join(", ")
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }

    pub fn parse(text: &str) -> Vec<AuditEntry> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .filter_map(|line| {
                let mut parts = line.split(" | ");
                let stage = parts.next()?.trim().to_string();
                let consumed = parts.next()?.strip_prefix("consumed: ")?;
                let produced = parts.next()?.strip_prefix("produced: ")?;
                let split = |s: &str| -> Vec<String> {
                    s.split(',')
                        .map(|x| x.trim().to_string())
                        .filter(|x| !x.is_empty())
                        .collect()
                };
                Some(AuditEntry {
                    stage,
                    consumed: split(consumed),
                    produced: split(produced),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let mut log = AuditLog::new();
        log.record("load-data", &["train/files"], &["train.data", "train.labels"]);
        log.record("evaluate-accuracy", &["test.labels", "exp1.recon"], &[]);
        let text = log.render();
        let parsed = AuditLog::parse(&text);
        assert_eq!(parsed, log.entries());
    }
}
