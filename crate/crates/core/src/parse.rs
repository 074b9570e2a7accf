//! Route extraction from free-form model replies and hallucination
//! classification.
//!
//! The answer span is the text between the last `<<start>>` and the first
//! `<<end>>` after it. Integers are maximal runs of ASCII digits inside that
//! span; anything else (`->`, `,`, whitespace, arrows, stray words) separates
//! them. Closed (`1 -> 2 -> 3 -> 1`) and open (`1 -> 2 -> 3`) answers are
//! both accepted.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::prompts::{END_MARKER, START_MARKER};
use crate::solver::Route;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    Valid,
    IncorrectNodeIds,
    IncompleteRoute,
    Unparseable,
}

impl Status {
    pub const ALL: [Status; 4] = [
        Status::Valid,
        Status::IncorrectNodeIds,
        Status::IncompleteRoute,
        Status::Unparseable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Valid => "valid",
            Status::IncorrectNodeIds => "incorrect_node_ids",
            Status::IncompleteRoute => "incomplete_route",
            Status::Unparseable => "unparseable",
        }
    }

    pub fn is_hallucination(self) -> bool {
        matches!(self, Status::IncorrectNodeIds | Status::IncompleteRoute)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub status: Status,
    pub route: Option<Route>,
    pub raw_tokens: Vec<u64>,
    pub detail: String,
}

impl ParseOutcome {
    pub fn unparseable(detail: impl Into<String>) -> Self {
        Self {
            status: Status::Unparseable,
            route: None,
            raw_tokens: Vec::new(),
            detail: detail.into(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.status == Status::Valid
    }
}

/// Integers of the answer span, or why no span could be found.
pub fn extract_sequence(text: &str) -> Result<Vec<u64>, String> {
    let start = text
        .rfind(START_MARKER)
        .ok_or_else(|| format!("no {START_MARKER} marker"))?;
    let span_start = start + START_MARKER.len();
    let span_len = text[span_start..]
        .find(END_MARKER)
        .ok_or_else(|| format!("no {END_MARKER} marker after the last {START_MARKER}"))?;
    let span = &text[span_start..span_start + span_len];
    let tokens: Vec<u64> = span
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        // Runs too long for u64 are certainly out of range.
        .map(|s| s.parse::<u64>().unwrap_or(u64::MAX))
        .collect();
    if tokens.is_empty() {
        return Err("marker span holds no integers".into());
    }
    Ok(tokens)
}

pub fn classify(tokens: &[u64], n: usize) -> ParseOutcome {
    let raw_tokens = tokens.to_vec();
    if tokens.is_empty() {
        return ParseOutcome::unparseable("no tokens");
    }
    let body = match tokens {
        [first, .., last] if first == last => &tokens[..tokens.len() - 1],
        _ => tokens,
    };
    let outcome = |status, route, detail: String| ParseOutcome {
        status,
        route,
        raw_tokens: raw_tokens.clone(),
        detail,
    };
    let out_of_range: Vec<u64> = body
        .iter()
        .copied()
        .filter(|&t| t == 0 || t > n as u64)
        .collect();
    if !out_of_range.is_empty() {
        return outcome(
            Status::IncorrectNodeIds,
            None,
            format!("ids outside 1..={n}: {out_of_range:?}"),
        );
    }
    let mut seen = HashSet::with_capacity(body.len());
    let duplicates: Vec<u64> = body.iter().copied().filter(|&t| !seen.insert(t)).collect();
    if !duplicates.is_empty() {
        return outcome(
            Status::IncorrectNodeIds,
            None,
            format!("repeated ids: {duplicates:?}"),
        );
    }
    if body.len() < n {
        let missing: Vec<u64> = (1..=n as u64).filter(|id| !seen.contains(id)).collect();
        return outcome(
            Status::IncompleteRoute,
            None,
            format!("missing ids: {missing:?}"),
        );
    }
    let order: Vec<u32> = body.iter().map(|&t| t as u32).collect();
    match Route::new(order) {
        Ok(route) => outcome(Status::Valid, Some(route), String::new()),
        // Unreachable for distinct in-range tokens covering 1..=n with n >= 3.
        Err(e) => outcome(Status::IncorrectNodeIds, None, e.to_string()),
    }
}

pub fn parse_response(text: &str, n: usize) -> ParseOutcome {
    match extract_sequence(text) {
        Ok(tokens) => classify(&tokens, n),
        Err(reason) => ParseOutcome::unparseable(reason),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_mixed_separators() {
        assert_eq!(
            extract_sequence("<<start>> 1 , 2 -> 3 -> 1 <<end>>").unwrap(),
            vec![1, 2, 3, 1]
        );
        assert_eq!(extract_sequence("<<start>>4,5 6->7<<end>>").unwrap(), vec![4, 5, 6, 7]);
    }

    #[test]
    fn missing_or_misordered_markers() {
        assert!(extract_sequence("no markers here").is_err());
        assert!(extract_sequence("<<end>> 1 2 3 <<start>>").is_err());
        assert!(extract_sequence("<<start>> 1 2 3").is_err());
        assert!(extract_sequence("<<start>> none <<end>>").is_err());
    }

    #[test]
    fn last_marker_pair_wins() {
        let text = "Format: <<start>> 1 , 2 -> ... -> 1 <<end>>\nAnswer: <<start>> 3 -> 1 -> 2 -> 3 <<end>>";
        assert_eq!(extract_sequence(text).unwrap(), vec![3, 1, 2, 3]);
    }

    #[test]
    fn closed_form_is_valid() {
        let o = classify(&[1, 2, 3, 4, 5, 1], 5);
        assert_eq!(o.status, Status::Valid);
        assert_eq!(o.route.unwrap().ids(), &[1, 2, 3, 4, 5]);
    }

    #[test]
    fn open_form_is_valid_and_canonical() {
        let o = classify(&[3, 2, 1, 5, 4], 5);
        assert_eq!(o.status, Status::Valid);
        assert_eq!(o.route.unwrap().ids(), &[1, 2, 3, 4, 5]);
    }

    #[test]
    fn out_of_range_is_incorrect_ids() {
        assert_eq!(classify(&[1, 2, 7, 4, 5], 5).status, Status::IncorrectNodeIds);
        assert_eq!(classify(&[0, 1, 2, 3, 4, 5], 5).status, Status::IncorrectNodeIds);
        // out-of-range wins even with missing ids
        assert_eq!(classify(&[1, 9], 5).status, Status::IncorrectNodeIds);
    }

    #[test]
    fn missing_ids_are_incomplete() {
        let o = classify(&[1, 2, 4, 5], 5);
        assert_eq!(o.status, Status::IncompleteRoute);
        assert!(o.detail.contains('3'));
        assert!(o.route.is_none());
    }

    #[test]
    fn duplicate_interior_is_incorrect_ids() {
        let o = parse_response("<<start>> 1 -> 2 -> 2 -> 3 <<end>>", 3);
        assert_eq!(o.status, Status::IncorrectNodeIds);
    }

    #[test]
    fn empty_text_is_unparseable() {
        assert_eq!(parse_response("", 5).status, Status::Unparseable);
    }

    #[test]
    fn huge_numbers_are_out_of_range() {
        let o = parse_response("<<start>> 1 2 99999999999999999999999 <<end>>", 3);
        assert_eq!(o.status, Status::IncorrectNodeIds);
    }
}
