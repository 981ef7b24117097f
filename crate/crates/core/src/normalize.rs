//! Value normalization shared by gold annotations, schema candidates and
//! decoded answers. Exact-match metrics are only meaningful if every side goes
//! through the same function.

use unicode_normalization::UnicodeNormalization;

/// NFC, lowercase, collapse whitespace runs to one space, trim.
pub fn normalize_value(raw: &str) -> String {
    let lowered: String = raw.nfc().collect::<String>().to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.nfc().collect::<String>().split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// True when `raw` normalizes to the empty string or to `none`.
pub fn is_none_value(raw: &str) -> bool {
    let v = normalize_value(raw);
    v.is_empty() || v == crate::corpus::NONE_VALUE
}
