//! Garbage cleaning and the accept/reject decision.
//!
//! Cleaning applies six steps in a fixed order: CR removal, tab
//! expansion, separator-line removal, repetition reduction, ASCII-art
//! line removal, empty-comment removal. The pass iterates to a fixed
//! point so `clean(clean(t)) == clean(t)` even when one removal exposes
//! new garbage (e.g. two runs merging across a deleted comment).
//!
//! The garbage ratio is characters removed divided by original
//! characters; samples above the rejection threshold are discarded, and
//! survivors must show either a code indicator or enough natural-language
//! words.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CleanError {
    #[error("invalid clean policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanPolicy {
    /// Whole lines that are a run of one separator char at least this long
    /// are removed.
    pub separator_min_run: usize,
    pub separator_chars: Vec<char>,
    /// Any character run at least this long is reduced...
    pub repeat_min_run: usize,
    /// ...to this many occurrences.
    pub repeat_reduce_to: usize,
    pub tab_width: usize,
    /// Reject when removed_chars / original_chars exceeds this (strict).
    pub garbage_reject_threshold: f64,
    /// Accept prose only at or above this many words containing a letter.
    pub min_nl_words: usize,
    /// Token-boundary matches of any of these accept a sample as code.
    pub code_indicators: Vec<String>,
}

impl Default for CleanPolicy {
    fn default() -> Self {
        Self {
            separator_min_run: 10,
            separator_chars: vec!['-', '=', '*', '_'],
            repeat_min_run: 10,
            repeat_reduce_to: 3,
            tab_width: 4,
            garbage_reject_threshold: 0.70,
            min_nl_words: 20,
            code_indicators: [
                "#include", "#define", "void", "int", "struct", "typedef", "if", "for", "while",
                "switch", "return",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl CleanPolicy {
    pub fn validate(&self) -> Result<(), CleanError> {
        if self.repeat_reduce_to >= self.repeat_min_run {
            return Err(CleanError::InvalidPolicy(format!(
                "repeat_reduce_to ({}) must be below repeat_min_run ({})",
                self.repeat_reduce_to, self.repeat_min_run
            )));
        }
        if !(0.0..=1.0).contains(&self.garbage_reject_threshold)
            || self.garbage_reject_threshold == 0.0
        {
            return Err(CleanError::InvalidPolicy(
                "garbage_reject_threshold must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Characters counted as drawing material for the ASCII-art rule: the
    /// separator set plus frame characters and the Unicode box-drawing
    /// block.
    fn is_box_char(&self, c: char) -> bool {
        self.separator_chars.contains(&c)
            || matches!(c, '+' | '|' | '/' | '\\')
            || ('\u{2500}'..='\u{257F}').contains(&c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Cleaning removed more than the threshold fraction of characters.
    GarbageRatio,
    /// No code indicator and not enough natural-language words.
    NoCodeNoProse,
    /// Nothing but whitespace survived cleaning.
    TooShort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub removed_chars: usize,
    pub garbage_ratio_before: f64,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<RejectReason>,
}

/// Separator-line rule: the trimmed line is one separator character
/// repeated at least `separator_min_run` times.
fn is_separator_line(line: &str, policy: &CleanPolicy) -> bool {
    let t = line.trim();
    let mut chars = t.chars();
    match chars.next() {
        Some(first) if policy.separator_chars.contains(&first) => {
            t.chars().count() >= policy.separator_min_run && chars.all(|c| c == first)
        }
        _ => false,
    }
}

/// ASCII-art rule: at least 4 non-whitespace characters and at least 80%
/// of them drawn from the box/separator set.
fn is_art_line(line: &str, policy: &CleanPolicy) -> bool {
    let non_ws: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
    if non_ws.len() < 4 {
        return false;
    }
    let boxy = non_ws.iter().filter(|&&c| policy.is_box_char(c)).count();
    (boxy as f64) / (non_ws.len() as f64) >= 0.8
}

fn remove_lines(text: &str, pred: impl Fn(&str) -> bool) -> String {
    text.split_inclusive('\n')
        .filter(|line| !pred(line.strip_suffix('\n').unwrap_or(line)))
        .collect()
}

fn reduce_runs(text: &str, min_run: usize, reduce_to: usize) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let mut run = 1;
        while chars.peek() == Some(&c) {
            chars.next();
            run += 1;
        }
        let emit = if run >= min_run { reduce_to } else { run };
        for _ in 0..emit {
            out.push(c);
        }
    }
    out
}

fn has_alnum(s: &str) -> bool {
    s.chars().any(|c| c.is_alphanumeric())
}

/// Removes `/* ... */` spans whose interior has no alphanumeric content.
fn remove_empty_block_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("/*") {
        match rest[open + 2..].find("*/") {
            Some(rel_close) => {
                let interior = &rest[open + 2..open + 2 + rel_close];
                let end = open + 2 + rel_close + 2;
                if has_alnum(interior) {
                    out.push_str(&rest[..end]);
                } else {
                    out.push_str(&rest[..open]);
                }
                rest = &rest[end..];
            }
            // unterminated comment: leave untouched
            None => break,
        }
    }
    out.push_str(rest);
    out
}

/// Removes maximal runs of `//` comment lines in which no line carries any
/// alphanumeric content. A run with real words anywhere is kept whole.
fn remove_empty_line_comment_runs(text: &str) -> String {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut keep = vec![true; lines.len()];
    let mut i = 0;
    while i < lines.len() {
        let body = lines[i].strip_suffix('\n').unwrap_or(lines[i]);
        if body.trim_start().starts_with("//") {
            let mut j = i;
            let mut any_alnum = false;
            while j < lines.len() {
                let b = lines[j].strip_suffix('\n').unwrap_or(lines[j]);
                if !b.trim_start().starts_with("//") {
                    break;
                }
                any_alnum |= has_alnum(b);
                j += 1;
            }
            if !any_alnum {
                for k in keep.iter_mut().take(j).skip(i) {
                    *k = false;
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }
    lines
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(l, _)| *l)
        .collect()
}

fn clean_pass(text: &str, policy: &CleanPolicy, removed: &mut usize) -> String {
    let mut shrink = |before_chars: usize, out: String| -> String {
        *removed += before_chars.saturating_sub(out.chars().count());
        out
    };
    let t = shrink(text.chars().count(), text.replace('\r', ""));
    // tab expansion grows the text; it neither adds to nor subtracts from
    // the removal count
    let t = t.replace('\t', &" ".repeat(policy.tab_width));
    let t = shrink(
        t.chars().count(),
        remove_lines(&t, |l| is_separator_line(l, policy)),
    );
    let t = shrink(
        t.chars().count(),
        reduce_runs(&t, policy.repeat_min_run, policy.repeat_reduce_to),
    );
    let t = shrink(t.chars().count(), remove_lines(&t, |l| is_art_line(l, policy)));
    let t = shrink(t.chars().count(), remove_empty_block_comments(&t));
    shrink(t.chars().count(), remove_empty_line_comment_runs(&t))
}

/// Runs the cleaning pass to a fixed point and reports characters removed.
pub fn clean(text: &str, policy: &CleanPolicy) -> (String, usize) {
    let mut removed = 0;
    let mut current = clean_pass(text, policy, &mut removed);
    loop {
        let next = clean_pass(&current, policy, &mut removed);
        if next == current {
            return (current, removed);
        }
        current = next;
    }
}

/// True when `indicator` occurs in `text` delimited by non-word characters
/// (so "int" never matches inside "print").
fn contains_token(text: &str, indicator: &str) -> bool {
    if indicator.is_empty() {
        return false;
    }
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    for (pos, _) in text.match_indices(indicator) {
        let before_ok = text[..pos].chars().next_back().is_none_or(|c| !is_word(c));
        let after_ok = text[pos + indicator.len()..]
            .chars()
            .next()
            .is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            return true;
        }
    }
    false
}

fn nl_word_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|w| w.chars().any(|c| c.is_alphabetic()))
        .count()
}

/// The accept/reject decision for a cleaned sample.
pub fn accept(
    cleaned: &str,
    removed_chars: usize,
    original_chars: usize,
    policy: &CleanPolicy,
) -> (bool, Option<RejectReason>) {
    if original_chars > 0 {
        let ratio = removed_chars as f64 / original_chars as f64;
        if ratio > policy.garbage_reject_threshold {
            return (false, Some(RejectReason::GarbageRatio));
        }
    }
    if !cleaned.contains(|c: char| !c.is_whitespace()) {
        return (false, Some(RejectReason::TooShort));
    }
    let has_code = policy
        .code_indicators
        .iter()
        .any(|ind| contains_token(cleaned, ind));
    if has_code || nl_word_count(cleaned) >= policy.min_nl_words {
        (true, None)
    } else {
        (false, Some(RejectReason::NoCodeNoProse))
    }
}

/// Cleans and judges one sample in a single call.
pub fn process(text: &str, policy: &CleanPolicy) -> (String, CleanReport) {
    let original_chars = text.chars().count();
    let (cleaned, removed_chars) = clean(text, policy);
    let (accepted, reject_reason) = accept(&cleaned, removed_chars, original_chars, policy);
    let garbage_ratio_before = if original_chars > 0 {
        removed_chars as f64 / original_chars as f64
    } else {
        0.0
    };
    (
        cleaned,
        CleanReport {
            removed_chars,
            garbage_ratio_before,
            accepted,
            reject_reason,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> CleanPolicy {
        CleanPolicy::default()
    }

    #[test]
    fn tabs_expand_to_spaces() {
        let (out, removed) = clean("a\t b", &p());
        assert_eq!(out, "a     b");
        assert_eq!(removed, 0);
    }

    #[test]
    fn long_runs_reduce_to_three() {
        let (out, removed) = clean("xxxxxxxxxxxx", &p());
        assert_eq!(out, "xxx");
        assert_eq!(removed, 9);
        // nine-long runs survive
        let (out, _) = clean("xxxxxxxxx", &p());
        assert_eq!(out, "xxxxxxxxx");
    }

    #[test]
    fn separator_lines_are_removed_whole() {
        let (out, removed) = clean("code\n----------\nmore", &p());
        assert_eq!(out, "code\nmore");
        assert_eq!(removed, 11);
    }

    #[test]
    fn short_runs_below_both_line_rules_survive() {
        // "-----" is under the separator run length but still falls to the
        // art rule (5 chars, 100% box); "---" is under the art rule's
        // 4-char floor and survives everything
        let (out, _) = clean("code\n-----\nmore", &p());
        assert_eq!(out, "code\nmore");
        let (out, _) = clean("code\n---\nmore", &p());
        assert_eq!(out, "code\n---\nmore");
    }

    #[test]
    fn mixed_separator_line_is_not_a_separator() {
        // not a single-character run; run reduction still applies inline
        let (out, _) = clean("===========x\n", &p());
        assert_eq!(out, "===x\n");
    }

    #[test]
    fn art_lines_are_removed_but_mostly_text_lines_stay() {
        // the frame line is pure box material; "| box |" is only 40% box
        let (out, _) = clean("top\n+----------------+\n| box |\nbottom\n", &p());
        assert_eq!(out, "top\n| box |\nbottom\n");
    }

    #[test]
    fn marker_lines_are_not_art() {
        let (out, _) = clean("// File: x/y.c\n", &p());
        assert_eq!(out, "// File: x/y.c\n");
    }

    #[test]
    fn empty_comments_are_removed_and_real_ones_kept() {
        let (out, _) = clean("a /* */ b", &p());
        assert_eq!(out, "a  b");
        let (out, _) = clean("a /* init x */ b", &p());
        assert_eq!(out, "a /* init x */ b");
        let (out, _) = clean("code\n//\n//\nmore\n", &p());
        assert_eq!(out, "code\nmore\n");
        let (out, _) = clean("code\n// note\n//\nmore\n", &p());
        assert_eq!(out, "code\n// note\n//\nmore\n");
    }

    #[test]
    fn unterminated_comment_is_left_alone() {
        let (out, _) = clean("a /* dangling", &p());
        assert_eq!(out, "a /* dangling");
    }

    #[test]
    fn removal_can_cascade_across_passes() {
        // deleting the empty comment merges two five-char runs into a
        // ten-char run, which the next pass reduces
        let (out, removed) = clean("aaaaa/* */aaaaa", &p());
        assert_eq!(out, "aaa");
        assert_eq!(removed, 5 + 7);
    }

    #[test]
    fn garbage_ratio_rejects_strictly_above_threshold() {
        let (ok, why) = accept("x", 71, 100, &p());
        assert!(!ok);
        assert_eq!(why, Some(RejectReason::GarbageRatio));
        // exactly at the threshold is not a rejection; "x" alone then
        // fails the code/prose test instead
        let (ok, why) = accept("x", 70, 100, &p());
        assert!(!ok);
        assert_eq!(why, Some(RejectReason::NoCodeNoProse));
    }

    #[test]
    fn code_indicator_accepts() {
        let (ok, why) = accept("#include <x.h>", 0, 14, &p());
        assert!(ok);
        assert_eq!(why, None);
    }

    #[test]
    fn indicator_must_be_token_delimited() {
        // "int" inside "print"/"sprint" does not count
        let (ok, why) = accept("sprint print printf", 0, 19, &p());
        assert!(!ok);
        assert_eq!(why, Some(RejectReason::NoCodeNoProse));
        let (ok, _) = accept("(int)x", 0, 6, &p());
        assert!(ok);
    }

    #[test]
    fn enough_prose_accepts() {
        // 23 words, none of them a code indicator
        let prose = "the quick brown fox jumps over the lazy dog again and again as we watch it run across the wide open field today";
        assert!(nl_word_count(prose) >= 20);
        let (ok, _) = accept(prose, 0, prose.len(), &p());
        assert!(ok);
        let (ok, why) = accept("just a few plain words here", 0, 27, &p());
        assert!(!ok);
        assert_eq!(why, Some(RejectReason::NoCodeNoProse));
    }

    #[test]
    fn whitespace_only_survivor_is_too_short() {
        let (cleaned, report) = process("   \n  ", &p());
        assert_eq!(cleaned, "   \n  ");
        assert!(!report.accepted);
        assert_eq!(report.reject_reason, Some(RejectReason::TooShort));
    }

    #[test]
    fn fully_garbage_sample_is_rejected_on_ratio() {
        let (cleaned, report) = process("----------\n==========\n", &p());
        assert_eq!(cleaned, "");
        assert!(!report.accepted);
        assert_eq!(report.reject_reason, Some(RejectReason::GarbageRatio));
        assert_eq!(report.garbage_ratio_before, 1.0);
    }

    #[test]
    fn process_reports_ratio_and_acceptance() {
        let (cleaned, report) = process("int main(void) { return 0; }\n", &p());
        assert_eq!(cleaned, "int main(void) { return 0; }\n");
        assert!(report.accepted);
        assert_eq!(report.removed_chars, 0);
        assert_eq!(report.garbage_ratio_before, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn garbage_like() -> impl Strategy<Value = String> {
            // mixes code, prose, tabs, CRs, separators, comment syntax
            "[a-z;{}/\\* \t\r\n=_-]{0,400}"
        }

        proptest! {
            #[test]
            fn clean_is_idempotent(text in garbage_like()) {
                let policy = CleanPolicy::default();
                let (once, _) = clean(&text, &policy);
                let (twice, removed_again) = clean(&once, &policy);
                prop_assert_eq!(&twice, &once);
                prop_assert_eq!(removed_again, 0);
            }

            #[test]
            fn clean_never_grows_with_unit_tab_width(text in garbage_like()) {
                let policy = CleanPolicy { tab_width: 1, ..CleanPolicy::default() };
                let (out, _) = clean(&text, &policy);
                prop_assert!(out.chars().count() <= text.chars().count());
            }

            #[test]
            fn adding_an_indicator_never_flips_accept_to_reject(
                text in "[a-z ]{0,120}",
                removed in 0usize..50,
            ) {
                let policy = CleanPolicy::default();
                let original = text.chars().count() + removed;
                let (ok_before, _) = accept(&text, removed, original, &policy);
                let with_code = format!("{text} #include <x.h>");
                let (ok_after, _) =
                    accept(&with_code, removed, original + 15, &policy);
                if ok_before {
                    prop_assert!(ok_after);
                }
            }
        }
    }
}
