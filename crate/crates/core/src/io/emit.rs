//! Minimal deterministic JSON writer: fixed key order comes from call
//! order, floats are rendered with exactly six decimals.

/// Formats a float with six decimals, normalizing negative zero.
pub(crate) fn fmt_f64(value: f64) -> String {
    if !value.is_finite() {
        return "null".to_string();
    }
    let v = if value == 0.0 { 0.0 } else { value };
    format!("{v:.6}")
}

fn escape_into(out: &mut String, s: &str) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    FirstInContainer,
    Following,
    Value,
}

pub(crate) struct JsonWriter {
    buf: String,
    indent: usize,
    slot: Slot,
}

impl JsonWriter {
    pub fn new() -> Self {
        JsonWriter {
            buf: String::new(),
            indent: 0,
            slot: Slot::Value,
        }
    }

    fn pad(&mut self) {
        for _ in 0..self.indent {
            self.buf.push_str("  ");
        }
    }

    fn before_item(&mut self) {
        match self.slot {
            Slot::FirstInContainer => {
                self.buf.push('\n');
                self.pad();
            }
            Slot::Following => {
                self.buf.push_str(",\n");
                self.pad();
            }
            Slot::Value => {}
        }
    }

    pub fn open_object(&mut self) {
        self.before_item();
        self.buf.push('{');
        self.indent += 1;
        self.slot = Slot::FirstInContainer;
    }

    pub fn close_object(&mut self) {
        self.indent -= 1;
        if self.slot == Slot::Following {
            self.buf.push('\n');
            self.pad();
        }
        self.buf.push('}');
        self.slot = Slot::Following;
    }

    pub fn open_array(&mut self) {
        self.before_item();
        self.buf.push('[');
        self.indent += 1;
        self.slot = Slot::FirstInContainer;
    }

    pub fn close_array(&mut self) {
        self.indent -= 1;
        if self.slot == Slot::Following {
            self.buf.push('\n');
            self.pad();
        }
        self.buf.push(']');
        self.slot = Slot::Following;
    }

    pub fn key(&mut self, name: &str) {
        self.before_item();
        escape_into(&mut self.buf, name);
        self.buf.push_str(": ");
        self.slot = Slot::Value;
    }

    pub fn string(&mut self, value: &str) {
        self.before_item();
        escape_into(&mut self.buf, value);
        self.slot = Slot::Following;
    }

    pub fn number(&mut self, value: f64) {
        self.before_item();
        self.buf.push_str(&fmt_f64(value));
        self.slot = Slot::Following;
    }

    pub fn integer(&mut self, value: usize) {
        self.before_item();
        self.buf.push_str(&value.to_string());
        self.slot = Slot::Following;
    }

    pub fn boolean(&mut self, value: bool) {
        self.before_item();
        self.buf.push_str(if value { "true" } else { "false" });
        self.slot = Slot::Following;
    }

    pub fn null(&mut self) {
        self.before_item();
        self.buf.push_str("null");
        self.slot = Slot::Following;
    }

    pub fn string_array(&mut self, values: &[String]) {
        self.open_array();
        for v in values {
            self.string(v);
        }
        self.close_array();
    }

    pub fn finish(mut self) -> String {
        self.buf.push('\n');
        self.buf
    }
}
