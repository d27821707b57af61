//! Ordered key/value reports rendered either as `key = value` text or JSON.

use serde_json::{json, Map, Value};

#[derive(Debug, Clone)]
pub enum Item {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    items: Vec<(String, Item)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn float(&mut self, key: &str, v: f64) -> &mut Self {
        self.items.push((key.to_string(), Item::Float(v)));
        self
    }

    pub fn int(&mut self, key: &str, v: impl TryInto<i64>) -> &mut Self {
        self.items.push((key.to_string(), Item::Int(v.try_into().unwrap_or(i64::MAX))));
        self
    }

    pub fn text(&mut self, key: &str, v: impl Into<String>) -> &mut Self {
        self.items.push((key.to_string(), Item::Text(v.into())));
        self
    }

    pub fn flag(&mut self, key: &str, v: bool) -> &mut Self {
        self.items.push((key.to_string(), Item::Bool(v)));
        self
    }

    pub fn extend(&mut self, other: Report) -> &mut Self {
        self.items.extend(other.items);
        self
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.items {
            let value = match v {
                Item::Int(i) => i.to_string(),
                Item::Float(x) => format_float(*x),
                Item::Text(s) => s.clone(),
                Item::Bool(b) => b.to_string(),
            };
            out.push_str(&format!("{k} = {value}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (k, v) in &self.items {
            let value = match v {
                Item::Int(i) => json!(i),
                Item::Float(x) if x.is_finite() => json!(x),
                Item::Float(x) if x.is_infinite() && *x > 0.0 => json!("inf"),
                Item::Float(_) => Value::Null,
                Item::Text(s) => json!(s),
                Item::Bool(b) => json!(b),
            };
            map.insert(k.clone(), value);
        }
        Value::Object(map)
    }
}

/// Shortest representation that round-trips; `inf` for `+∞`.
pub fn format_float(x: f64) -> String {
    if x.is_infinite() && x > 0.0 {
        "inf".to_string()
    } else {
        format!("{x:?}")
    }
}
