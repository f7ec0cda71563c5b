//! Label derivation rules over free-text metadata.

use std::sync::OnceLock;

use regex::Regex;

/// Lowercased alphanumeric tokens; every other character separates.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn find_sequence(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn best_match<'g>(text: &str, gazetteer: &'g [String]) -> Option<&'g str> {
    let tokens = tokenize(text);
    // Longest token sequence wins, then earliest position, then gazetteer order.
    let mut best: Option<(usize, usize, &str)> = None;
    for entry in gazetteer {
        let seq = tokenize(entry);
        if let Some(pos) = find_sequence(&tokens, &seq) {
            let better = match best {
                None => true,
                Some((len, p, _)) => seq.len() > len || (seq.len() == len && pos < p),
            };
            if better {
                best = Some((seq.len(), pos, entry.as_str()));
            }
        }
    }
    best.map(|(_, _, e)| e)
}

/// Location from the title, falling back to the metadata location field.
pub fn parse_location(
    title: &str,
    metadata_location: &str,
    gazetteer: &[String],
) -> Option<String> {
    best_match(title, gazetteer)
        .or_else(|| best_match(metadata_location, gazetteer))
        .map(str::to_string)
}

fn year_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").expect("static regex"))
}

fn ordinal(n: u32) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Century label ("Nth century") of the first four-digit year in 1000..=2099.
/// Years ending in 00 close their century: 1800 is the 18th.
pub fn derive_century(date_field: &str) -> Option<String> {
    year_regex()
        .find_iter(date_field)
        .filter(|m| m.as_str().len() == 4)
        .filter_map(|m| m.as_str().parse::<u32>().ok())
        .find(|y| (1000..=2099).contains(y))
        .map(|y| format!("{} century", ordinal(y.div_ceil(100))))
}

/// Lexicon labels present in `description`, deduplicated, in lexicon order.
pub fn extract_style_keywords(description: &str, style_lexicon: &[String]) -> Vec<String> {
    let tokens = tokenize(description);
    let mut out: Vec<String> = Vec::new();
    for entry in style_lexicon {
        if find_sequence(&tokens, &tokenize(entry)).is_some() && !out.contains(entry) {
            out.push(entry.clone());
        }
    }
    out
}
