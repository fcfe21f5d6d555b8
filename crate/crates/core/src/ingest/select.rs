use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ActivityTable, EventLog, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    LowActivity,
    FewSubreddits,
    BotName,
    BotList,
    PostOnly,
    TooManySubreddits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub min_messages: u64,
    pub min_subreddits: usize,
    pub max_subreddits_per_month: f64,
    /// Months covered by the slice; the monthly subreddit rule is evaluated
    /// as `distinct subreddits / months_in_slice`.
    pub months_in_slice: u32,
    pub bot_list: BTreeSet<UserId>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            min_messages: 25,
            min_subreddits: 5,
            max_subreddits_per_month: 50.0,
            months_in_slice: 12,
            bot_list: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserSet {
    pub selected: BTreeSet<UserId>,
    pub excluded: BTreeMap<UserId, ExclusionReason>,
    /// Set when the monthly subreddit rule had to be approximated from
    /// whole-slice activity counts.
    pub monthly_rule_approximated: bool,
}

impl UserSet {
    pub fn reason(&self, user: &str) -> Option<ExclusionReason> {
        self.excluded.get(user).copied()
    }
}

fn looks_like_bot(name: &str) -> bool {
    name.to_lowercase().contains("bot")
}

/// Applies the activity thresholds and bot filters to every author in `log`.
///
/// When several rules exclude a user only the first is recorded, in the
/// order: bot list, bot name, post-only, too many subreddits, low activity,
/// few subreddits.
pub fn select_users(log: &EventLog, activity: &ActivityTable, config: &SelectionConfig) -> UserSet {
    let messages = log.message_counts();
    let subreddits = activity.subreddit_counts();
    let months = config.months_in_slice.max(1) as f64;

    let mut out = UserSet { monthly_rule_approximated: true, ..Default::default() };
    for (&user, &(n_posts, n_comments)) in &messages {
        let n_subs = subreddits.get(user).copied().unwrap_or(0);
        let reason = if config.bot_list.contains(user) {
            Some(ExclusionReason::BotList)
        } else if looks_like_bot(user) {
            Some(ExclusionReason::BotName)
        } else if n_posts > 0 && n_comments == 0 {
            Some(ExclusionReason::PostOnly)
        } else if n_subs as f64 / months > config.max_subreddits_per_month {
            Some(ExclusionReason::TooManySubreddits)
        } else if n_posts + n_comments < config.min_messages {
            Some(ExclusionReason::LowActivity)
        } else if n_subs < config.min_subreddits {
            Some(ExclusionReason::FewSubreddits)
        } else {
            None
        };
        match reason {
            Some(r) => {
                out.excluded.insert(user.to_string(), r);
            }
            None => {
                out.selected.insert(user.to_string());
            }
        }
    }
    out
}
