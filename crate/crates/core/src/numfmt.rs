//! Strict decimal parsing shared by the CSV readers.
//!
//! Accepted: optional sign, digits with an optional `.` fraction and an
//! optional exponent. Rejected: thousands separators, decimal commas,
//! `inf`/`nan` spellings, surrounding whitespace.

pub(crate) fn parse_decimal(field: &str) -> Result<f64, String> {
    let bytes = field.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return Err(format!("not a decimal number: {field:?}"));
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        i += 1;
        if matches!(bytes.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let exp_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return Err(format!("not a decimal number: {field:?}"));
        }
    }
    if i != bytes.len() {
        return Err(format!("not a decimal number: {field:?}"));
    }
    field.parse::<f64>().map_err(|e| format!("{field:?}: {e}"))
}

pub(crate) fn parse_optional_decimal(field: &str) -> Result<Option<f64>, String> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_decimal(field).map(Some)
    }
}

pub(crate) fn parse_integer(field: &str) -> Result<i64, String> {
    field
        .parse::<i64>()
        .map_err(|_| format!("not an integer: {field:?}"))
}
