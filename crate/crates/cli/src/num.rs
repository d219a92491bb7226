/// `%g`-style rendering with `digits` significant digits: fixed notation for
/// decimal exponents in `[-4, digits)`, scientific otherwise, trailing zeros
/// trimmed.
pub fn sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = digits.max(1);
    // the exponent after rounding decides the notation
    let sci = format!("{:.*e}", p - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn g6(v: f64) -> String {
    sig(v, 6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_c_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.1, "0.1"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.000123456789, "0.000123457"),
            (0.0000123456, "1.23456e-05"),
            (-2.5, "-2.5"),
            (0.99999999, "1"),
            (999999.5, "1e+06"),
            (3.14159265, "3.14159"),
            (1e-300, "1e-300"),
        ];
        for (v, want) in cases {
            assert_eq!(g6(v), want, "{v}");
        }
    }

    #[test]
    fn non_finite() {
        assert_eq!(g6(f64::NAN), "NaN");
        assert_eq!(g6(f64::INFINITY), "inf");
    }
}
