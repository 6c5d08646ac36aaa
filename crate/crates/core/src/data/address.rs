//! Street address normalization used for owner-occupancy matching.

const SUFFIXES: [(&str, &str); 7] = [
    ("STREET", "ST"),
    ("AVENUE", "AVE"),
    ("DRIVE", "DR"),
    ("BOULEVARD", "BLVD"),
    ("ROAD", "RD"),
    ("LANE", "LN"),
    ("COURT", "CT"),
];

const UNIT_DESIGNATORS: [&str; 5] = ["APT", "UNIT", "STE", "SUITE", "#"];

/// Uppercase, drop punctuation, collapse whitespace, abbreviate street
/// suffixes and remove unit designators with their unit number.
///
/// ```
/// use taxfund_core::data::address::normalize_address;
/// assert_eq!(normalize_address("123 Main Street, Apt. 4"), "123 MAIN ST");
/// assert_eq!(normalize_address("  123  MAIN st. "), "123 MAIN ST");
/// ```
pub fn normalize_address(raw: &str) -> String {
    let mut cleaned = String::with_capacity(raw.len());
    for c in raw.chars() {
        if c == '#' {
            cleaned.push_str(" # ");
        } else if c.is_alphanumeric() || c.is_whitespace() {
            cleaned.extend(c.to_uppercase());
        }
    }

    let mut out: Vec<&str> = Vec::new();
    let mut tokens = cleaned.split_whitespace();
    while let Some(tok) = tokens.next() {
        if UNIT_DESIGNATORS.contains(&tok) {
            tokens.next();
            continue;
        }
        let tok = SUFFIXES.iter().find(|(long, _)| *long == tok).map_or(tok, |(_, short)| short);
        out.push(tok);
    }
    out.join(" ")
}

/// Equal after normalization; empty addresses never match.
pub fn same_address(a: &str, b: &str) -> bool {
    let a = normalize_address(a);
    !a.is_empty() && a == normalize_address(b)
}
