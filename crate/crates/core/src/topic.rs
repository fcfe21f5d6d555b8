//! News topic labels.

/// The fifteen most frequent news topics, in decreasing order of prevalence.
pub const TOPICS: [&str; 15] = [
    "Business",
    "Politics",
    "Worldpost",
    "Entertainment",
    "Healthy Living",
    "Crime",
    "Sports",
    "Travel",
    "Green",
    "Tech",
    "Arts",
    "Media",
    "Style",
    "Weird News",
    "Religion",
];

/// Placeholder used where no topic applies (sd-mode examples, unlabeled posts).
pub const NO_TOPIC: &str = "NA";

pub fn is_sentinel(topic: &str) -> bool {
    topic == NO_TOPIC
}

/// Sort key placing the known topics first in their canonical order, then
/// anything else lexicographically.
pub fn canonical_key(topic: &str) -> (usize, &str) {
    match TOPICS.iter().position(|t| *t == topic) {
        Some(i) => (i, ""),
        None => (TOPICS.len(), topic),
    }
}

/// Deduplicates and orders topic labels canonically, dropping the sentinel.
pub fn canonical_order<'a, I: IntoIterator<Item = &'a str>>(topics: I) -> Vec<String> {
    let mut v: Vec<&str> = topics.into_iter().filter(|t| !is_sentinel(t)).collect();
    v.sort_by_key(|t| canonical_key(t));
    v.dedup();
    v.into_iter().map(String::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_puts_known_first() {
        let got = canonical_order(["zeta", "Crime", "NA", "Business", "Crime", "alpha"]);
        assert_eq!(got, ["Business", "Crime", "alpha", "zeta"]);
    }
}
