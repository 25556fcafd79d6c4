//! One-line JSON log records on stderr.

use serde_json::{json, Value};

#[derive(Debug, Clone, Copy)]
pub struct Log {
    pub quiet: bool,
}

impl Log {
    pub fn info(&self, msg: &str, fields: Value) {
        if !self.quiet {
            emit("info", msg, fields);
        }
    }

    pub fn warn(&self, msg: &str, fields: Value) {
        if !self.quiet {
            emit("warn", msg, fields);
        }
    }

    pub fn error(&self, kind: &str, msg: &str) {
        emit("error", msg, json!({ "kind": kind }));
    }
}

fn emit(level: &str, msg: &str, fields: Value) {
    let mut rec = json!({ "level": level, "msg": msg });
    if let (Some(obj), Value::Object(extra)) = (rec.as_object_mut(), fields) {
        obj.extend(extra);
    }
    eprintln!("{rec}");
}
