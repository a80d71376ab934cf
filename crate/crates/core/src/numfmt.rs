/// Formats `x` with 9 significant digits in scientific notation; parses back
/// with `str::parse::<f64>`.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(sig9(0.707_106_781_186_547_6), "7.07106781e-1");
        assert_eq!(sig9(-12.5), "-1.25000000e1");
        assert_eq!(sig9(0.0), "0.00000000e0");
        let x = 1.234_567_891_234f64;
        let back: f64 = sig9(x).parse().unwrap();
        assert!((back - x).abs() <= 5e-9 * x.abs());
    }
}
