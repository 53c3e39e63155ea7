//! Raw value syntax: sentinels, dates, numbers, booleans.
//!
//! Canonical forms: dates re-emit as ISO `yyyy-mm-dd`, datetimes as
//! `yyyy-mm-ddThh:mm:ss`, integers without leading zeros or plus sign.

/// Values treated as absent wherever they appear.
pub fn is_sentinel(raw: &str) -> bool {
    let t = raw.trim();
    t.is_empty()
        || t.eq_ignore_ascii_case("n/a")
        || t == "-"
        || t.eq_ignore_ascii_case("unknown")
        || t.eq_ignore_ascii_case("null")
}

fn leap_year(y: u32) -> bool {
    (y.is_multiple_of(4) && !y.is_multiple_of(100)) || y.is_multiple_of(400)
}

fn days_in_month(y: u32, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if leap_year(y) {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

fn valid_date(y: u32, m: u32, d: u32) -> bool {
    (1..=12).contains(&m) && d >= 1 && d <= days_in_month(y, m)
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn num(s: &str) -> Option<u32> {
    if all_digits(s) {
        s.parse().ok()
    } else {
        None
    }
}

/// Accepted date patterns, in order; first full match wins:
/// `yyyy-mm-dd`, `dd/mm/yyyy`, `mm/dd/yyyy`, `yyyymmdd`.
/// Returns the ISO form.
pub fn parse_date(raw: &str) -> Option<String> {
    let t = raw.trim();
    let iso = |y: u32, m: u32, d: u32| {
        if valid_date(y, m, d) {
            Some(format!("{y:04}-{m:02}-{d:02}"))
        } else {
            None
        }
    };
    // yyyy-mm-dd
    if t.len() == 10 && t.as_bytes()[4] == b'-' && t.as_bytes()[7] == b'-' {
        if let (Some(y), Some(m), Some(d)) = (num(&t[..4]), num(&t[5..7]), num(&t[8..10])) {
            if let Some(s) = iso(y, m, d) {
                return Some(s);
            }
        }
    }
    // dd/mm/yyyy, then mm/dd/yyyy
    if t.len() == 10 && t.as_bytes()[2] == b'/' && t.as_bytes()[5] == b'/' {
        if let (Some(a), Some(b), Some(y)) = (num(&t[..2]), num(&t[3..5]), num(&t[6..10])) {
            if let Some(s) = iso(y, b, a) {
                return Some(s);
            }
            if let Some(s) = iso(y, a, b) {
                return Some(s);
            }
        }
    }
    // yyyymmdd
    if t.len() == 8 && all_digits(t) {
        if let (Some(y), Some(m), Some(d)) = (num(&t[..4]), num(&t[4..6]), num(&t[6..8])) {
            if let Some(s) = iso(y, m, d) {
                return Some(s);
            }
        }
    }
    None
}

fn parse_time(t: &str) -> Option<(u32, u32, u32)> {
    let t = t.strip_suffix('Z').unwrap_or(t);
    let parts: Vec<&str> = t.split(':').collect();
    let (h, m, s) = match parts.as_slice() {
        [h, m] => (num(h)?, num(m)?, 0),
        [h, m, s] => (num(h)?, num(m)?, num(s)?),
        _ => return None,
    };
    if h < 24 && m < 60 && s < 60 {
        Some((h, m, s))
    } else {
        None
    }
}

/// An accepted date pattern joined to a time by `T` or a space.
/// Returns the ISO form `yyyy-mm-ddThh:mm:ss`.
pub fn parse_datetime(raw: &str) -> Option<String> {
    let t = raw.trim();
    let split_at = t.find(['T', ' '])?;
    let (date_part, time_part) = (&t[..split_at], &t[split_at + 1..]);
    let date = parse_date(date_part)?;
    let (h, m, s) = parse_time(time_part)?;
    Some(format!("{date}T{h:02}:{m:02}:{s:02}"))
}

/// Optional sign plus ASCII digits. Returns the canonical form.
pub fn parse_integer(raw: &str) -> Option<String> {
    raw.trim().parse::<i64>().ok().map(|v| v.to_string())
}

/// Locale-neutral decimal (dot separator). Returns the trimmed form without a
/// leading plus sign.
pub fn parse_decimal(raw: &str) -> Option<String> {
    let t = raw.trim();
    let unsigned = t.strip_prefix(['+', '-']).unwrap_or(t);
    let (int_part, frac_part) = match unsigned.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (unsigned, None),
    };
    if !all_digits(int_part) {
        return None;
    }
    if let Some(f) = frac_part {
        if !all_digits(f) {
            return None;
        }
    }
    Some(t.strip_prefix('+').unwrap_or(t).to_string())
}

pub fn parse_boolean(raw: &str) -> Option<String> {
    let t = raw.trim();
    if t.eq_ignore_ascii_case("true") {
        Some("true".into())
    } else if t.eq_ignore_ascii_case("false") {
        Some("false".into())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinels() {
        for s in ["", "  ", "N/A", "n/a", "-", "UNKNOWN", "null", "Null"] {
            assert!(is_sentinel(s), "{s:?} should be a sentinel");
        }
        assert!(!is_sentinel("0"));
        assert!(!is_sentinel("none"));
    }

    #[test]
    fn date_pattern_order() {
        assert_eq!(parse_date("2021-03-12").as_deref(), Some("2021-03-12"));
        // dd/mm/yyyy wins over mm/dd/yyyy when both fit
        assert_eq!(parse_date("12/03/2021").as_deref(), Some("2021-03-12"));
        // only mm/dd/yyyy fits here
        assert_eq!(parse_date("03/13/2021").as_deref(), Some("2021-03-13"));
        assert_eq!(parse_date("20210312").as_deref(), Some("2021-03-12"));
        assert_eq!(parse_date("31/02/2021"), None);
        assert_eq!(parse_date("2021-13-01"), None);
        assert_eq!(parse_date("29/02/2020").as_deref(), Some("2020-02-29"));
        assert_eq!(parse_date("29/02/2021"), None);
        assert_eq!(parse_date("notadate"), None);
    }

    // Independent check of the calendar rule: compare against a day-counting
    // oracle that increments through the year.
    #[test]
    fn date_validity_against_day_walk_oracle() {
        for y in [1999u32, 2000, 2020, 2021, 2100] {
            let total: u32 = (1..=12).map(|m| days_in_month(y, m)).sum();
            let expected = if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 {
                366
            } else {
                365
            };
            assert_eq!(total, expected, "year {y}");
        }
    }

    #[test]
    fn datetime_forms() {
        assert_eq!(
            parse_datetime("2021-03-12T08:30").as_deref(),
            Some("2021-03-12T08:30:00")
        );
        assert_eq!(
            parse_datetime("12/03/2021 08:30:15").as_deref(),
            Some("2021-03-12T08:30:15")
        );
        assert_eq!(
            parse_datetime("2021-03-12T23:59:59Z").as_deref(),
            Some("2021-03-12T23:59:59")
        );
        assert_eq!(parse_datetime("2021-03-12"), None);
        assert_eq!(parse_datetime("2021-03-12T25:00"), None);
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_integer("42").as_deref(), Some("42"));
        assert_eq!(parse_integer(" -7 ").as_deref(), Some("-7"));
        assert_eq!(parse_integer("007").as_deref(), Some("7"));
        assert_eq!(parse_integer("abc"), None);
        assert_eq!(parse_integer("1.5"), None);
        assert_eq!(parse_decimal("1.5").as_deref(), Some("1.5"));
        assert_eq!(parse_decimal("-0.25").as_deref(), Some("-0.25"));
        assert_eq!(parse_decimal("+3").as_deref(), Some("3"));
        assert_eq!(parse_decimal("1,5"), None);
        assert_eq!(parse_boolean("TRUE").as_deref(), Some("true"));
        assert_eq!(parse_boolean("no"), None);
    }
}
