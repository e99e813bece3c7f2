//! Line-delimited JSON diagnostics.

use std::io::Write;

use serde_json::Value;

pub trait DiagnosticSink {
    fn emit(&mut self, record: Value);

    fn warn(&mut self, message: &str) {
        self.emit(serde_json::json!({ "event": "warning", "message": message }));
    }
}

/// Writes one JSON object per line to standard error.
#[derive(Debug, Default)]
pub struct StderrSink;

impl DiagnosticSink for StderrSink {
    fn emit(&mut self, record: Value) {
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{record}");
    }
}

#[derive(Debug, Default)]
pub struct NullSink;

impl DiagnosticSink for NullSink {
    fn emit(&mut self, _record: Value) {}
}

/// Keeps every record in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<Value>,
}

impl DiagnosticSink for MemorySink {
    fn emit(&mut self, record: Value) {
        self.records.push(record);
    }
}
