//! Serde helpers for `f64` fields that may legitimately be infinite, such as
//! the log-likelihood of an exact fit. Finite values stay JSON numbers;
//! non-finite ones become the strings `"inf"`, `"-inf"` and `"nan"`.

use serde::{de, Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Wire {
        Num(f64),
        Text(String),
    }
    match Wire::deserialize(d)? {
        Wire::Num(v) => Ok(v),
        Wire::Text(t) => match t.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            _ => Err(de::Error::custom(format!("bad float `{t}`"))),
        },
    }
}
