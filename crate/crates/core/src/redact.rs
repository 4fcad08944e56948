//! Removal of ground-truth hints from the fix commit message.

use alloc::string::String;

pub const HASH_PLACEHOLDER: &str = "<hash>";

/// Shortest and longest hex token treated as a commit reference.
pub const MIN_HASH_TOKEN: usize = 7;
pub const MAX_HASH_TOKEN: usize = 40;

fn is_fixes_line(line: &str) -> bool {
    let t = line.trim_start();
    t.len() >= 6 && t[..6].eq_ignore_ascii_case("fixes:")
}

/// Drop `Fixes:` lines and replace standalone hex tokens of 7 to 40
/// characters with [`HASH_PLACEHOLDER`]. A token is standalone when it is not
/// adjacent to another ASCII letter or digit.
pub fn redact_leakage(message: &str) -> String {
    let mut out = String::with_capacity(message.len());
    for line in message.split_inclusive('\n') {
        if is_fixes_line(line) {
            continue;
        }
        replace_hex_tokens(line, &mut out);
    }
    out
}

fn replace_hex_tokens(line: &str, out: &mut String) {
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_alphanumeric() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let tok = &line[start..i];
            let len = tok.len();
            if (MIN_HASH_TOKEN..=MAX_HASH_TOKEN).contains(&len) && tok.bytes().all(|b| b.is_ascii_hexdigit()) {
                out.push_str(HASH_PLACEHOLDER);
            } else {
                out.push_str(tok);
            }
        } else {
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push_str(&line[start..i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixes_trailer_removed() {
        let msg = "scsi: fix crash\n\nbody\n\nFixes: 1c393b9 (\"scsi: rework\")\nSigned-off-by: x\n";
        assert_eq!(redact_leakage(msg), "scsi: fix crash\n\nbody\n\nSigned-off-by: x\n");
    }

    #[test]
    fn hash_in_title_replaced() {
        assert_eq!(redact_leakage("Revert deadbeef12 change"), "Revert <hash> change");
        assert_eq!(
            redact_leakage("see commit 0123456789abcdef0123456789abcdef01234567."),
            "see commit <hash>."
        );
    }

    #[test]
    fn clean_message_unchanged() {
        let msg = "fix off-by-one in parser\n\nThe loop ran one step too far (issue #42).\n";
        assert_eq!(redact_leakage(msg), msg);
    }

    #[test]
    fn short_and_embedded_tokens_kept() {
        assert_eq!(redact_leakage("abc123 and xdeadbeef1 and cafe"), "abc123 and xdeadbeef1 and cafe");
        let long = "a".repeat(41);
        assert_eq!(redact_leakage(&long), long);
    }
}
