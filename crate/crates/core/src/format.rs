//! Float formatting shared by every text output.

/// Scientific notation with 17 significant digits; parses back bit-exactly.
pub fn f64_17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn join_17(xs: &[f64]) -> String {
    xs.iter().map(|&x| f64_17(x)).collect::<Vec<_>>().join(",")
}

/// Serde adapter writing a float array with [`f64_17`].
pub mod floats17 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let text = format!("[{}]", super::join_17(xs));
        let raw = RawValue::from_string(text).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<f64>::deserialize(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = f64_17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(f64_17(1.0), "1.0000000000000000e0");
    }
}
