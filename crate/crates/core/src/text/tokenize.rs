const ZWNJ: char = '\u{200C}';

/// Arabic-script combining marks (harakat, superscript alef) that belong to
/// the word they decorate.
fn is_arabic_mark(c: char) -> bool {
    matches!(c, '\u{0610}'..='\u{061A}' | '\u{064B}'..='\u{065F}' | '\u{0670}' | '\u{06D6}'..='\u{06ED}')
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_arabic_mark(c) || c == ZWNJ
}

fn is_latin(c: char) -> bool {
    matches!(c, '\u{0000}'..='\u{024F}' | '\u{1E00}'..='\u{1EFF}')
}

/// Splits on whitespace and punctuation. Arabic-script letters, diacritics
/// and zero-width non-joiners inside a word are kept; non-joiners at word
/// edges are dropped. Only Latin letters are lowercased.
pub fn tokenize(transcript: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        let trimmed = current.trim_matches(ZWNJ);
        if !trimmed.is_empty() {
            tokens.push(trimmed.to_string());
        }
        current.clear();
    };
    for c in transcript.chars() {
        if is_word_char(c) {
            if is_latin(c) {
                current.extend(c.to_lowercase());
            } else {
                current.push(c);
            }
        } else {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  !? ").is_empty());
    }

    #[test]
    fn strips_punctuation_and_lowercases_latin() {
        assert_eq!(tokenize("good movie!"), vec!["good", "movie"]);
        assert_eq!(tokenize("Great, ÉCOLE."), vec!["great", "école"]);
    }

    #[test]
    fn persian_words_and_zwnj() {
        // "I want this film": three words, the first joined with a ZWNJ
        let text = "می\u{200C}خواهم این فیلم";
        let tokens = tokenize(text);
        assert_eq!(tokens.len(), 3);
        assert_eq!(tokens[0], "می\u{200C}خواهم");
        // Arabic question mark and comma are punctuation
        assert_eq!(tokenize("خوب؟ بد،"), vec!["خوب", "بد"]);
    }

    #[test]
    fn edge_zwnj_is_dropped() {
        assert_eq!(tokenize("\u{200C}فیلم\u{200C} "), vec!["فیلم"]);
    }

    #[test]
    fn persian_letters_are_not_case_folded() {
        let word = "ایران";
        assert_eq!(tokenize(word), vec![word]);
    }

    #[test]
    fn diacritics_stay_attached() {
        let word = "کِتاب";
        assert_eq!(tokenize(word), vec![word]);
    }
}
