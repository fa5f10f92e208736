use sha2::{Digest, Sha256};

/// Hex SHA-256 of a text.
pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Rounds half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Two-decimal rendering used by every report.
pub fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

/// `100 * num / den` in hundredths of a percent, rounded half up exactly.
pub fn percent_hundredths(num: u64, den: u64) -> u64 {
    assert!(den > 0, "percentage of an empty total");
    (20_000 * num + den) / (2 * den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_half_up_percentages() {
        // 13/32 = 40.625%
        assert_eq!(percent_hundredths(13, 32), 4063);
        assert_eq!(percent_hundredths(32, 94), 3404);
        assert_eq!(percent_hundredths(0, 42), 0);
        assert_eq!(percent_hundredths(5, 42), 1190);
        assert_eq!(percent_hundredths(1, 3), 3333);
        assert_eq!(percent_hundredths(2, 3), 6667);
    }

    #[test]
    fn rendering() {
        assert_eq!(fmt2(92.0 / 32.0), "2.88");
        assert_eq!(fmt2(107.0 / 59.0), "1.81");
        assert_eq!(fmt2(127.0 / 76.0), "1.67");
        assert_eq!(fmt2(0.0), "0.00");
    }
}
