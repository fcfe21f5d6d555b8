//! Keyword-count topic assignment, a stand-in for a trained headline classifier.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::topic::{canonical_key, TOPICS};

/// Topic label → keywords (single words or short phrases).
pub type KeywordMap = BTreeMap<String, Vec<String>>;

/// Topic returned when no keyword matches; the most frequent topic.
pub const DEFAULT_FALLBACK_TOPIC: &str = "Business";

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn count_hits(title: &[String], keyword: &str) -> usize {
    let kw = tokens(keyword);
    if kw.is_empty() || kw.len() > title.len() {
        return 0;
    }
    title.windows(kw.len()).filter(|w| *w == kw.as_slice()).count()
}

/// Returns the topic whose keywords occur most often (case-insensitive,
/// whole-token) in `title`. Ties go to the earlier topic in canonical order;
/// no hits at all yields `fallback`.
pub fn assign_topic_baseline(title: &str, keyword_map: &KeywordMap, fallback: &str) -> Result<String> {
    if keyword_map.is_empty() {
        return Err(Error::Config("empty keyword map".into()));
    }
    let title = tokens(title);
    let mut topics: Vec<&String> = keyword_map.keys().collect();
    topics.sort_by_key(|t| canonical_key(t));

    let mut best: Option<(&String, usize)> = None;
    for topic in topics {
        let hits: usize = keyword_map[topic].iter().map(|k| count_hits(&title, k)).sum();
        if hits > 0 && best.is_none_or(|(_, b)| hits > b) {
            best = Some((topic, hits));
        }
    }
    Ok(best.map_or_else(|| fallback.to_string(), |(t, _)| t.clone()))
}

/// A small hand-written keyword list for the fifteen default topics, good
/// enough for fixtures and smoke tests.
pub fn default_keyword_map() -> KeywordMap {
    let words: [&[&str]; 15] = [
        &["stock", "stocks", "bank", "market", "economy", "company", "jobs", "hiring", "trade", "investment"],
        &["trump", "senate", "congress", "election", "president", "democrats", "republicans", "vote"],
        &["china", "italy", "russia", "europe", "india", "war", "refugees", "un"],
        &["oscar", "oscars", "movie", "film", "music", "album", "celebrity", "winners"],
        &["virus", "health", "hospital", "nursing", "vaccine", "covid", "coronavirus", "diet"],
        &["police", "cop", "cops", "shooting", "murder", "arrested", "suspect", "court"],
        &["nba", "nfl", "boxing", "football", "soccer", "olympics", "espn", "match"],
        &["travel", "airline", "flight", "tourism", "rainbow", "rainbows", "vacation"],
        &["climate", "environment", "emissions", "wildlife", "pollution", "denialism"],
        &["google", "apple", "app", "apps", "windows", "software", "internet", "ai"],
        &["art", "painting", "museum", "crafting", "sculpture", "poetry"],
        &["pbs", "anchor", "newspaper", "journalist", "tv", "broadcast"],
        &["fashion", "beauty", "gifts", "makeup", "style"],
        &["ufo", "bizarre", "panties", "weird", "pet", "alien"],
        &["ramadan", "church", "pope", "religion", "muslim", "christian", "faith"],
    ];
    TOPICS
        .iter()
        .zip(words)
        .map(|(t, ws)| (t.to_string(), ws.iter().map(|w| w.to_string()).collect()))
        .collect()
}
