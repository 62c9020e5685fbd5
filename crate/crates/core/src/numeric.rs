//! Small numeric helpers shared across modules.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Compensated inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// `sum_{r=1}^{n} q^r` with `q = 1 - eta * lambda`, switching to the `n` limit when
/// `|eta * lambda|` is below `1e-14`.
pub fn geometric_tail(eta_lambda: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if eta_lambda.abs() < 1e-14 {
        return n as f64;
    }
    let q = 1.0 - eta_lambda;
    q * (1.0 - powu(q, n)) / eta_lambda
}

/// `x^n` for a non-negative integer exponent.
pub fn powu(x: f64, n: u64) -> f64 {
    if n <= i32::MAX as u64 {
        x.powi(n as i32)
    } else {
        x.powf(n as f64)
    }
}

/// Formats a float with 17 significant digits. Non-finite values are spelled out.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Serde helpers that write floats as 17-significant-digit JSON numbers (`null` when non-finite).
pub mod json17 {
    use serde::Serializer;

    pub fn serialize<S: Serializer>(x: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if !x.is_finite() {
            return ser.serialize_none();
        }
        let raw = serde_json::value::RawValue::from_string(super::fmt17(*x)).map_err(serde::ser::Error::custom)?;
        serde::Serialize::serialize(&raw, ser)
    }

    pub fn vec<S: Serializer>(xs: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = ser.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&Wrapped(*x))?;
        }
        seq.end()
    }

    struct Wrapped(f64);

    impl serde::Serialize for Wrapped {
        fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
            serialize(&self.0, ser)
        }
    }
}
