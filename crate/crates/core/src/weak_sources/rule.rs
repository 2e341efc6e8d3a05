use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::text_match::{default_true, slice_eq};
use super::{Pattern, SourceError};
use crate::corpus::Document;

/// A single-token trigger disambiguated by context cues within a window.
///
/// For every token matching `trigger`: if some token within `window` tokens
/// on either side is a positive cue and none is a negative cue, the trigger
/// gets `label_if_cue`, otherwise `label_otherwise` (`None` abstains).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub trigger: String,
    #[serde(default)]
    pub trigger_is_regex: bool,
    #[serde(default = "default_true")]
    pub case_sensitive: bool,
    pub window: usize,
    #[serde(default)]
    pub positive_cues: BTreeSet<String>,
    #[serde(default)]
    pub negative_cues: BTreeSet<String>,
    pub label_if_cue: String,
    pub label_otherwise: Option<String>,
}

/// How a rule recognises its trigger token.
pub enum TriggerMatcher {
    Exact(Vec<char>, bool),
    Regex(Pattern),
}

impl TriggerMatcher {
    pub fn is_match(&self, token: &[char]) -> bool {
        match self {
            TriggerMatcher::Exact(t, cs) => slice_eq(token, t, *cs),
            TriggerMatcher::Regex(p) => p.is_full_match(token),
        }
    }
}

impl Rule {
    pub(crate) fn check(&self) -> Result<(), String> {
        if self.trigger.is_empty() {
            return Err("empty trigger".into());
        }
        if self.label_otherwise.as_deref() == Some(self.label_if_cue.as_str()) {
            return Err("label_if_cue and label_otherwise must differ".into());
        }
        Ok(())
    }

    pub fn trigger_matcher(&self) -> Result<TriggerMatcher, SourceError> {
        if self.trigger_is_regex {
            let pat = if self.case_sensitive {
                self.trigger.clone()
            } else {
                format!("(?i:{})", self.trigger)
            };
            Ok(TriggerMatcher::Regex(Pattern::new(&pat)?))
        } else {
            Ok(TriggerMatcher::Exact(
                self.trigger.chars().collect(),
                self.case_sensitive,
            ))
        }
    }

    pub fn matches(&self, doc: &Document) -> Result<Vec<(usize, usize, String)>, SourceError> {
        let trigger = self.trigger_matcher()?;
        let tokens = doc.tokens();
        let chars = doc.chars();
        let lowered: Vec<String> = tokens
            .iter()
            .map(|&t| doc.token_surface(t).to_lowercase())
            .collect();
        let mut out = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            if !trigger.is_match(&chars[tok.start..tok.end]) {
                continue;
            }
            let lo = i.saturating_sub(self.window);
            let hi = (i + self.window + 1).min(tokens.len());
            let context = (lo..hi).filter(|&j| j != i).map(|j| lowered[j].as_str());
            let (mut pos, mut neg) = (false, false);
            for c in context {
                pos |= self.positive_cues.contains(c);
                neg |= self.negative_cues.contains(c);
            }
            let label = if pos && !neg {
                Some(&self.label_if_cue)
            } else {
                self.label_otherwise.as_ref()
            };
            if let Some(label) = label {
                out.push((tok.start, tok.end, label.clone()));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spring_rule() -> Rule {
        Rule {
            trigger: "spring".into(),
            trigger_is_regex: false,
            case_sensitive: true,
            window: 3,
            positive_cues: ["constant", "coil", "stiffness"].map(String::from).into(),
            negative_cues: BTreeSet::new(),
            label_if_cue: "Mechanical-Device".into(),
            label_otherwise: Some("Season".into()),
        }
    }

    fn labels(rule: &Rule, text: &str) -> Vec<(usize, usize, String)> {
        rule.matches(&Document::new("d", text)).unwrap()
    }

    #[test]
    fn spring_with_cue_is_mechanical() {
        assert_eq!(
            labels(&spring_rule(), "the spring constant was measured"),
            vec![(4, 10, "Mechanical-Device".to_string())]
        );
    }

    #[test]
    fn spring_without_cue_is_season() {
        assert_eq!(
            labels(&spring_rule(), "flowers bloom in spring"),
            vec![(17, 23, "Season".to_string())]
        );
    }

    #[test]
    fn trigger_absent() {
        assert!(labels(&spring_rule(), "no trigger here").is_empty());
    }

    #[test]
    fn window_bounds_and_negative_cues() {
        let mut r = spring_rule();
        // cue is four tokens away: outside a window of 3
        assert_eq!(labels(&r, "spring a b c coil")[0].2, "Season");
        assert_eq!(labels(&r, "spring a b coil")[0].2, "Mechanical-Device");
        r.negative_cues.insert("summer".into());
        assert_eq!(labels(&r, "summer spring coil")[0].2, "Season");
        r.label_otherwise = None;
        assert!(labels(&r, "summer spring coil").is_empty());
    }

    #[test]
    fn cues_compare_lowercase() {
        assert_eq!(labels(&spring_rule(), "spring Coil")[0].2, "Mechanical-Device");
    }

    #[test]
    fn regex_trigger_matches_whole_token() {
        let mut r = spring_rule();
        r.trigger = "spring(s)?".into();
        r.trigger_is_regex = true;
        let got = labels(&r, "springs and springtime");
        assert_eq!(got.len(), 1);
        assert_eq!((got[0].0, got[0].1), (0, 7));
        r.case_sensitive = false;
        assert_eq!(labels(&r, "Springs").len(), 1);
    }

    #[test]
    fn invalid_rules() {
        let mut r = spring_rule();
        r.label_otherwise = Some("Mechanical-Device".into());
        assert!(r.check().is_err());
        r.trigger.clear();
        assert!(r.check().is_err());
    }
}
