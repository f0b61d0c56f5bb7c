mod support;

use proptest::prelude::*;
use prospectus_core::evidence::{isin_check_digit, validate_isin};

fn body() -> impl Strategy<Value = String> {
    ("[A-Z]{2}", "[A-Z0-9]{9}").prop_map(|(c, b)| format!("{c}{b}"))
}

proptest! {
    #[test]
    fn exactly_one_check_digit_is_valid(body in body()) {
        let valid: Vec<u8> = (0..10u8).filter(|d| validate_isin(&format!("{body}{d}"))).collect();
        prop_assert_eq!(valid.len(), 1);
        prop_assert_eq!(Some(valid[0]), isin_check_digit(&body));
        for d in 0..10u8 {
            let candidate = format!("{body}{d}");
            prop_assert_eq!(validate_isin(&candidate), support::oracle_isin_valid(&candidate));
        }
    }

    #[test]
    fn arbitrary_strings_agree_with_oracle(s in "[A-Z0-9]{10,13}") {
        prop_assert_eq!(validate_isin(&s), support::oracle_isin_valid(&s));
    }
}

#[test]
fn known_identifiers() {
    assert!(validate_isin("US0378331005"));
    assert!(!validate_isin("US0378331006"));
    assert!(validate_isin("DE0005140008"));
    assert!(!validate_isin("XYZ"));
}
