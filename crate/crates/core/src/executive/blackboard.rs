//! Shared key-value store for behavior-tree leaves. Reading a key that was
//! never written is an error, not a default.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geom::{Pose2, P2, P3};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Point(P2),
    Point3(P3),
    Pose(Pose2),
    List(Vec<String>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlackboardError {
    #[error("blackboard key `{0}` is unset")]
    Missing(String),
    #[error("blackboard key `{key}` holds a {found}, not a {wanted}")]
    WrongType { key: String, wanted: &'static str, found: &'static str },
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Bool(_) => "bool",
        Value::Int(_) => "int",
        Value::Float(_) => "float",
        Value::Text(_) => "text",
        Value::Point(_) => "point",
        Value::Point3(_) => "point3",
        Value::Pose(_) => "pose",
        Value::List(_) => "list",
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Blackboard {
    entries: BTreeMap<String, Value>,
}

macro_rules! typed_get {
    ($fn:ident, $variant:ident, $ty:ty, $name:literal) => {
        pub fn $fn(&self, key: &str) -> Result<$ty, BlackboardError> {
            match self.get(key)? {
                Value::$variant(v) => Ok(v.clone()),
                other => Err(BlackboardError::WrongType { key: key.to_string(), wanted: $name, found: kind(other) }),
            }
        }
    };
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, v: Value) {
        self.entries.insert(key.to_string(), v);
    }

    pub fn get(&self, key: &str) -> Result<&Value, BlackboardError> {
        self.entries.get(key).ok_or_else(|| BlackboardError::Missing(key.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    typed_get!(get_bool, Bool, bool, "bool");
    typed_get!(get_int, Int, i64, "int");
    typed_get!(get_f64, Float, f64, "float");
    typed_get!(get_text, Text, String, "text");
    typed_get!(get_point, Point, P2, "point");
    typed_get!(get_point3, Point3, P3, "point3");
    typed_get!(get_pose, Pose, Pose2, "pose");
    typed_get!(get_list, List, Vec<String>, "list");
}
