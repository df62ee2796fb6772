//! Deterministic answer normalization shared by the synthesizer's truth
//! checks and the fallback judge: lowercase, collapse whitespace, strip
//! leading articles and terminal punctuation.

/// Canonical form of an answer string.
pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let mut collapsed = String::with_capacity(lowered.len());
    let mut last_space = true;
    for c in lowered.chars() {
        if c.is_whitespace() {
            if !last_space {
                collapsed.push(' ');
                last_space = true;
            }
        } else {
            collapsed.push(c);
            last_space = false;
        }
    }
    let mut s = collapsed.trim().to_string();
    loop {
        let before = s.len();
        for article in ["a ", "an ", "the "] {
            if let Some(rest) = s.strip_prefix(article) {
                s = rest.trim_start().to_string();
            }
        }
        while s.ends_with(['.', ',', '!', '?', ';', ':']) {
            s.pop();
            s = s.trim_end().to_string();
        }
        if s.len() == before {
            break;
        }
    }
    s
}

/// Whether `needle` occurs in `haystack` on word boundaries. Both inputs
/// are expected to be normalized already.
pub fn contains_on_word_boundary(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(off) = haystack[from..].find(needle) {
        let start = from + off;
        let end = start + needle.len();
        let left_ok = start == 0
            || !haystack[..start].chars().next_back().is_some_and(|c| c.is_alphanumeric());
        let right_ok =
            end == haystack.len() || !haystack[end..].chars().next().is_some_and(|c| c.is_alphanumeric());
        if left_ok && right_ok {
            return true;
        }
        from = start + 1;
    }
    false
}

/// Maximal digit runs, with separating commas inside digit groups removed
/// ("433,365" yields "433365").
pub fn extract_numbers(text: &str) -> Vec<String> {
    let mut numbers = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_ascii_digit() {
            current.push(c);
        } else if c == ',' && !current.is_empty() && chars.peek().is_some_and(|n| n.is_ascii_digit()) {
            // thousands separator
        } else if !current.is_empty() {
            numbers.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        numbers.push(current);
    }
    numbers
}

/// Deterministic string-level match between a prediction and the truth:
/// normalized equality, word-boundary containment of the truth, or (for
/// single-number answers) numeric equality after unit stripping.
pub fn normalized_match(prediction: &str, truth: &str) -> bool {
    let np = normalize(prediction);
    let nt = normalize(truth);
    if nt.is_empty() {
        return np.is_empty();
    }
    if np == nt || contains_on_word_boundary(&np, &nt) {
        return true;
    }
    let pn = extract_numbers(&np);
    let tn = extract_numbers(&nt);
    matches!((pn.as_slice(), tn.as_slice()), ([p], [t]) if p == t)
}

/// Answer-leak guard: the normalized truth must not appear verbatim inside
/// the normalized question.
pub fn leaks_answer(question: &str, truth: &str) -> bool {
    let nq = normalize(question);
    let nt = normalize(truth);
    !nt.is_empty() && nq.contains(&nt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize("  The   83rd Minute. "), "83rd minute");
        assert_eq!(normalize("An Answer!"), "answer");
        assert_eq!(normalize("a the x"), "x");
        assert_eq!(normalize("433365"), "433365");
    }

    #[test]
    fn normalization_idempotent() {
        for s in ["The 83rd minute.", "  A  b  C ?", "plain", "The The End.."] {
            let once = normalize(s);
            assert_eq!(normalize(&once), once);
        }
    }

    #[test]
    fn match_by_containment() {
        assert!(normalized_match("The answer is 83rd minute.", "83rd minute"));
        assert!(!normalized_match("84th minute", "83rd minute"));
        assert!(normalized_match("433365", "433365"));
        assert!(!normalized_match("1433365", "433365"));
    }

    #[test]
    fn match_numbers_after_unit_stripping() {
        assert!(normalized_match("$433,365 USD", "433365"));
        assert!(normalized_match("It raised 433,365 dollars in total", "433365"));
        assert!(!normalized_match("433,366 dollars", "433365"));
        assert!(!normalized_match("1962 or 1963", "1963 exactly"));
    }

    #[test]
    fn leak_guard() {
        assert!(leaks_answer("In what year (1962) did it happen?", "1962"));
        assert!(!leaks_answer("In what year did it happen?", "1962"));
        assert!(leaks_answer("Which event involved The 83rd Minute goal?", "83rd minute"));
    }

    #[test]
    fn number_extraction() {
        assert_eq!(extract_numbers("433,365 and 12"), vec!["433365", "12"]);
        assert_eq!(extract_numbers("no digits"), Vec::<String>::new());
        assert_eq!(extract_numbers("1,2"), vec!["12"]);
        assert_eq!(extract_numbers("x1962,"), vec!["1962"]);
    }
}
