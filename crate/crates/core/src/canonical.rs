// SPDX-License-Identifier: Apache-2.0
//! Canonical JSON: object keys sorted, no insignificant whitespace, octet
//! strings as standard base64. Everything that is hashed or signed goes
//! through [`to_vec`].

use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn to_vec<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    // serde_json's Map is a BTreeMap unless `preserve_order` is enabled, so
    // routing through Value sorts every object's keys.
    let value = serde_json::to_value(value)?;
    serde_json::to_vec(&value)
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    let value = serde_json::to_value(value)?;
    serde_json::to_string(&value)
}

/// Parses `bytes` and rejects any input that is not already in canonical form.
pub fn from_canonical_slice<T>(bytes: &[u8]) -> Result<T, NotCanonical>
where
    T: Serialize + DeserializeOwned,
{
    let value: T = serde_json::from_slice(bytes).map_err(|_| NotCanonical)?;
    let reencoded = to_vec(&value).map_err(|_| NotCanonical)?;
    if reencoded != bytes {
        return Err(NotCanonical);
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("input is not in canonical encoding")]
pub struct NotCanonical;

/// `#[serde(with = "b64")]` for `Vec<u8>` fields.
pub mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "b64_array")]` for fixed-size octet arrays.
pub mod b64_array {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(bytes: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(d)?;
        let v = STANDARD.decode(s).map_err(serde::de::Error::custom)?;
        v.try_into()
            .map_err(|v: Vec<u8>| serde::de::Error::invalid_length(v.len(), &"fixed-size octet string"))
    }
}

/// `#[serde(with = "b64_opt")]` for `Option<Vec<u8>>` fields.
pub mod b64_opt {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match bytes {
            Some(b) => s.serialize_some(&STANDARD.encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| STANDARD.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Sample {
        zeta: u32,
        alpha: String,
        #[serde(with = "b64")]
        blob: Vec<u8>,
    }

    #[test]
    fn keys_are_sorted_and_compact() {
        let s = Sample { zeta: 1, alpha: "a b".into(), blob: vec![0xff, 0] };
        assert_eq!(to_string(&s).unwrap(), r#"{"alpha":"a b","blob":"/wA=","zeta":1}"#);
    }

    #[test]
    fn nested_maps_are_sorted() {
        let v = serde_json::json!({"b": {"y": 1, "x": 2}, "a": [ {"d": 0, "c": 1} ]});
        assert_eq!(to_string(&v).unwrap(), r#"{"a":[{"c":1,"d":0}],"b":{"x":2,"y":1}}"#);
    }

    #[test]
    fn non_canonical_input_is_rejected() {
        let ok = br#"{"alpha":"a","blob":"AA==","zeta":1}"#;
        assert!(from_canonical_slice::<Sample>(ok).is_ok());
        let spaced = br#"{"alpha": "a","blob":"AA==","zeta":1}"#;
        assert_eq!(from_canonical_slice::<Sample>(spaced), Err(NotCanonical));
        let unsorted = br#"{"blob":"AA==","alpha":"a","zeta":1}"#;
        assert_eq!(from_canonical_slice::<Sample>(unsorted), Err(NotCanonical));
    }
}
