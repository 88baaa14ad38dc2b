//! Deterministic machine-readable verification reports.
//!
//! Reports are `serde_json` values (object keys sorted) written with every
//! float in `{:.16e}` form, i.e. 17 significant digits, so identical runs
//! give byte-identical files.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{Map, Value};

/// Outcome record of one check or theorem run.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub check: String,
    pub inputs: Value,
    pub payload: Value,
    pub passed: bool,
    /// Set when an applicability gate was overridden.
    pub forced: bool,
}

impl VerificationReport {
    pub fn new(check: impl Into<String>) -> Self {
        VerificationReport {
            check: check.into(),
            inputs: Value::Object(Map::new()),
            payload: Value::Object(Map::new()),
            passed: true,
            forced: false,
        }
    }

    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("check".into(), Value::String(self.check.clone()));
        map.insert("inputs".into(), self.inputs.clone());
        map.insert("payload".into(), self.payload.clone());
        map.insert("passed".into(), Value::Bool(self.passed));
        map.insert("forced".into(), Value::Bool(self.forced));
        Value::Object(map)
    }

    pub fn to_json(&self) -> String {
        to_json(&self.to_value())
    }
}

/// Float as a JSON value; non-finite numbers become `null`.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().copied().map(num).collect())
}

/// Builder for a JSON object.
#[derive(Debug, Default, Clone)]
pub struct Obj(Map<String, Value>);

impl Obj {
    pub fn new() -> Self {
        Obj(Map::new())
    }

    pub fn set(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn num(self, key: &str, v: f64) -> Self {
        self.set(key, num(v))
    }

    pub fn nums(self, key: &str, v: &[f64]) -> Self {
        self.set(key, nums(v))
    }

    pub fn insert(&mut self, key: &str, value: impl Into<Value>) {
        self.0.insert(key.to_string(), value.into());
    }
}

impl From<Obj> for Value {
    fn from(o: Obj) -> Value {
        Value::Object(o.0)
    }
}

struct FixedFloats<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with sorted keys and fixed-width floats.
pub fn to_json(value: &Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloats(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("writing to a Vec cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}
