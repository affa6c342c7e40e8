// Licensed under the Apache-2.0 license

use std::fmt;

const LEVEL_SEPARATOR: char = '/';
const MAX_TOPIC_BYTES: usize = 65_535;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopicError {
    #[error("topic is empty")]
    Empty,
    #[error("topic longer than {MAX_TOPIC_BYTES} bytes")]
    TooLong,
    #[error("topic contains a NUL character")]
    Nul,
    #[error("publish topic contains a wildcard")]
    Wildcard,
    #[error("`#` must be the last level of a filter")]
    MisplacedMultiLevel,
    #[error("wildcards must occupy a whole level")]
    PartialLevelWildcard,
}

fn validate_common(s: &str) -> Result<(), TopicError> {
    if s.is_empty() {
        return Err(TopicError::Empty);
    }
    if s.len() > MAX_TOPIC_BYTES {
        return Err(TopicError::TooLong);
    }
    if s.contains('\0') {
        return Err(TopicError::Nul);
    }
    Ok(())
}

/// Checks a topic name used in Publish: non-empty, no wildcards.
pub fn validate_topic_name(topic: &str) -> Result<(), TopicError> {
    validate_common(topic)?;
    if topic.contains(['+', '#']) {
        return Err(TopicError::Wildcard);
    }
    Ok(())
}

/// A validated subscription pattern. `+` matches exactly one level, `#`
/// matches the parent level and everything below it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TopicFilter(String);

impl TopicFilter {
    pub fn new(filter: impl Into<String>) -> Result<Self, TopicError> {
        let filter = filter.into();
        validate_common(&filter)?;
        let mut levels = filter.split(LEVEL_SEPARATOR).peekable();
        while let Some(level) = levels.next() {
            match level {
                "#" if levels.peek().is_some() => return Err(TopicError::MisplacedMultiLevel),
                "#" | "+" => {}
                l if l.contains(['+', '#']) => return Err(TopicError::PartialLevelWildcard),
                _ => {}
            }
        }
        Ok(Self(filter))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Level-wise match against a wildcard-free topic. Topics beginning with
    /// `$` are not matched by a leading wildcard.
    pub fn matches(&self, topic: &str) -> bool {
        if topic.starts_with('$') && self.0.starts_with(['+', '#']) {
            return false;
        }
        let mut topic_levels = topic.split(LEVEL_SEPARATOR);
        for level in self.0.split(LEVEL_SEPARATOR) {
            match level {
                "#" => return true,
                "+" => {
                    if topic_levels.next().is_none() {
                        return false;
                    }
                }
                literal => {
                    if topic_levels.next() != Some(literal) {
                        return false;
                    }
                }
            }
        }
        topic_levels.next().is_none()
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Validates both sides, then matches.
pub fn topic_matches(filter: &str, topic: &str) -> Result<bool, TopicError> {
    let filter = TopicFilter::new(filter)?;
    validate_topic_name(topic)?;
    Ok(filter.matches(topic))
}
