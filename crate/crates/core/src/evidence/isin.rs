//! ISIN check-digit validation.

/// True iff `candidate` is 12 characters: a two-letter country prefix, nine
/// alphanumerics and a check digit that passes the Luhn test over the
/// letter-expanded string (A=10 .. Z=35).
pub fn validate_isin(candidate: &str) -> bool {
    let bytes = candidate.as_bytes();
    if bytes.len() != 12 || !candidate.is_ascii() {
        return false;
    }
    if !bytes[..2].iter().all(u8::is_ascii_uppercase)
        || !bytes[2..11].iter().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
        || !bytes[11].is_ascii_digit()
    {
        return false;
    }
    luhn_valid(&expand_digits(&bytes[..12]))
}

/// Check digit that completes an 11-character ISIN body.
pub fn isin_check_digit(body: &str) -> Option<u8> {
    let bytes = body.as_bytes();
    if bytes.len() != 11 || !bytes.iter().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit()) {
        return None;
    }
    let mut digits = expand_digits(bytes);
    digits.push(0);
    let sum = luhn_sum(&digits);
    Some(((10 - sum % 10) % 10) as u8)
}

fn expand_digits(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len() * 2);
    for &b in bytes {
        if b.is_ascii_digit() {
            out.push(b - b'0');
        } else {
            let v = b - b'A' + 10;
            out.push(v / 10);
            out.push(v % 10);
        }
    }
    out
}

fn luhn_sum(digits: &[u8]) -> u32 {
    digits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| {
            let d = d as u32;
            if i % 2 == 1 {
                let x = d * 2;
                if x > 9 {
                    x - 9
                } else {
                    x
                }
            } else {
                d
            }
        })
        .sum()
}

fn luhn_valid(digits: &[u8]) -> bool {
    luhn_sum(digits).is_multiple_of(10)
}
