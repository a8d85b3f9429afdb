//! Session event records and the log analyses run over them.
//!
//! Each session writes one JSON object per line ([`EventRecord`]). The
//! analyses reconstruct, per session, how often suggestions were on screen
//! when the counselor replied, how often a suggestion was clicked, how much
//! the counselor edited clicked text, and whether reply lengths differ with
//! and without suggestions on screen.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{Speaker, Strategy, SuggestionSet};
use crate::math::median;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TelemetryError {
    #[error("sent text is empty")]
    EmptySent,
    #[error("clicked text is empty")]
    EmptyClicked,
    #[error("both samples must be non-empty")]
    EmptySample,
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("session {session_id} at {ts_ms} ms: bad {event_type:?} payload: {message}")]
    Payload {
        session_id: String,
        ts_ms: i64,
        event_type: EventType,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Message,
    SuggestionsShown,
    PanelToggle,
    SuggestionClick,
    Typing,
    Join,
    Leave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub ts_ms: i64,
    pub session_id: String,
    pub event_type: EventType,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessagePayload {
    pub index: usize,
    pub role: Speaker,
    pub text: String,
}

/// A suggestion as displayed, with the id the client echoes on click.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShownSuggestion {
    pub id: String,
    pub strategy: Strategy,
    pub text: String,
    pub probability: f64,
}

/// A [`SuggestionSet`] whose items carry ids of the form
/// `"{for_utterance_index}-{position}"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShownSuggestionSet {
    pub for_utterance_index: usize,
    pub items: Vec<ShownSuggestion>,
}

impl ShownSuggestionSet {
    pub fn from_set(set: &SuggestionSet) -> Self {
        ShownSuggestionSet {
            for_utterance_index: set.for_utterance_index,
            items: set
                .items
                .iter()
                .enumerate()
                .map(|(pos, s)| ShownSuggestion {
                    id: format!("{}-{pos}", set.for_utterance_index),
                    strategy: s.strategy,
                    text: s.text.clone(),
                    probability: s.probability,
                })
                .collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&ShownSuggestion> {
        self.items.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickPayload {
    pub suggestion_id: String,
    pub strategy: Strategy,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelPayload {
    pub visible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypingPayload {
    pub role: Speaker,
    pub typing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresencePayload {
    pub role: Speaker,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl EventRecord {
    pub fn new<T: Serialize>(ts_ms: i64, session_id: impl Into<String>, event_type: EventType, payload: &T) -> Self {
        EventRecord {
            ts_ms,
            session_id: session_id.into(),
            event_type,
            payload: serde_json::to_value(payload).expect("payload types serialize"),
        }
    }

    pub fn message(ts_ms: i64, session_id: &str, index: usize, role: Speaker, text: &str) -> Self {
        let p = MessagePayload {
            index,
            role,
            text: text.to_string(),
        };
        Self::new(ts_ms, session_id, EventType::Message, &p)
    }

    pub fn suggestions_shown(ts_ms: i64, session_id: &str, set: &ShownSuggestionSet) -> Self {
        Self::new(ts_ms, session_id, EventType::SuggestionsShown, set)
    }

    pub fn click(ts_ms: i64, session_id: &str, suggestion: &ShownSuggestion) -> Self {
        let p = ClickPayload {
            suggestion_id: suggestion.id.clone(),
            strategy: suggestion.strategy,
            text: suggestion.text.clone(),
        };
        Self::new(ts_ms, session_id, EventType::SuggestionClick, &p)
    }

    pub fn panel_toggle(ts_ms: i64, session_id: &str, visible: bool) -> Self {
        Self::new(ts_ms, session_id, EventType::PanelToggle, &PanelPayload { visible })
    }

    /// Decodes the payload into its typed form.
    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, TelemetryError> {
        T::deserialize(&self.payload).map_err(|e| TelemetryError::Payload {
            session_id: self.session_id.clone(),
            ts_ms: self.ts_ms,
            event_type: self.event_type,
            message: e.to_string(),
        })
    }

    /// One JSON line, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event records serialize")
    }
}

/// Parses JSON Lines; blank lines are skipped, line numbers are 1-based.
pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, TelemetryError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| TelemetryError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Longest common subsequence length by dynamic programming over two rows.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character-level LCS length.
pub fn lcs_chars(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    lcs_len(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditAnalysis {
    pub lcs: usize,
    pub ratio_vs_suggestion: f64,
    pub ratio_vs_sent: f64,
    pub modified: bool,
}

/// How much of a clicked suggestion survived into the sent message.
/// Lengths are in characters.
pub fn edit_analysis(clicked: &str, sent: &str) -> Result<EditAnalysis, TelemetryError> {
    if sent.is_empty() {
        return Err(TelemetryError::EmptySent);
    }
    if clicked.is_empty() {
        return Err(TelemetryError::EmptyClicked);
    }
    let lcs = lcs_chars(clicked, sent);
    Ok(EditAnalysis {
        lcs,
        ratio_vs_suggestion: lcs as f64 / clicked.chars().count() as f64,
        ratio_vs_sent: lcs as f64 / sent.chars().count() as f64,
        modified: clicked != sent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// The statistic for the first sample.
    #[serde(rename = "U")]
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Pooled samples up to this size are tested by full enumeration.
pub const EXACT_MAX_TOTAL: usize = 20;

/// Midranks (1-based, ties averaged) of `values`.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Two-sided Mann–Whitney U test. The p-value is exact (enumerating every
/// assignment of the pooled midranks to the first sample) when
/// `a.len() + b.len() <= EXACT_MAX_TOTAL`, otherwise from the normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, TelemetryError> {
    if a.is_empty() || b.is_empty() {
        return Err(TelemetryError::EmptySample);
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let u = ranks[..n1].iter().sum::<f64>() - offset;
    let mean = (n1 * n2) as f64 / 2.0;

    if n <= EXACT_MAX_TOTAL {
        let observed = libm::fabs(u - mean) - 1e-9;
        let (mut extreme, mut total) = (0u64, 0u64);
        let mut idx: Vec<usize> = (0..n1).collect();
        loop {
            let stat = idx.iter().map(|&i| ranks[i]).sum::<f64>() - offset;
            total += 1;
            if libm::fabs(stat - mean) >= observed {
                extreme += 1;
            }
            // Next combination in lexicographic order.
            let Some(pos) = (0..n1).rev().find(|&k| idx[k] < n - n1 + k) else {
                break;
            };
            idx[pos] += 1;
            for k in pos + 1..n1 {
                idx[k] = idx[k - 1] + 1;
            }
        }
        return Ok(MannWhitney {
            u,
            p: extreme as f64 / total as f64,
            exact: true,
        });
    }

    let mut sorted = pooled;
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let nf = n as f64;
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((libm::fabs(u - mean) - 0.5).max(0.0)) / libm::sqrt(var);
        libm::erfc(z / core::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u, p, exact: false })
}

/// Measures for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatReport {
    pub session_id: String,
    /// No counselor message was sent; all rates are reported as 0.
    pub no_opportunity: bool,
    pub counselor_messages: usize,
    /// Counselor messages sent while a non-empty suggestion set for the
    /// preceding utterance was live.
    pub suggestion_turns: usize,
    /// Of those, messages preceded by a click on the live set.
    pub clicked_turns: usize,
    /// Of those, messages identical to the clicked suggestion.
    pub unmodified_turns: usize,
    pub assistance_rate: f64,
    pub panel_open_fraction: f64,
    pub click_through_rate: f64,
    pub unmodified_fraction: f64,
    /// Edited clicked-then-sent messages only.
    pub lcs_ratio_vs_suggestion: Vec<f64>,
    pub lcs_ratio_vs_sent: Vec<f64>,
    /// Counselor message lengths in characters, with and without
    /// suggestions live.
    pub counselor_lengths_with: Vec<usize>,
    pub counselor_lengths_without: Vec<usize>,
    pub mann_whitney: Option<MannWhitney>,
    pub duration_ms: i64,
    pub panel_open_ms: i64,
}

/// The four rates; `None` where the denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateSummary {
    pub assistance_rate: Option<f64>,
    pub panel_open_fraction: Option<f64>,
    pub click_through_rate: Option<f64>,
    pub unmodified_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub sessions: usize,
    /// Median over sessions of each per-session rate, counting only sessions
    /// where that rate has a non-empty denominator.
    pub median: RateSummary,
    /// Ratios of summed counts (time for the panel) across sessions.
    pub pooled: RateSummary,
    pub counselor_messages: usize,
    pub suggestion_turns: usize,
    pub clicked_turns: usize,
    pub unmodified_turns: usize,
    pub median_lcs_ratio_vs_suggestion: Option<f64>,
    pub median_lcs_ratio_vs_sent: Option<f64>,
    pub median_length_with: Option<f64>,
    pub median_length_without: Option<f64>,
    pub n_with: usize,
    pub n_without: usize,
    pub mann_whitney: Option<MannWhitney>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub sessions: Vec<ChatReport>,
    pub aggregate: AggregateReport,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn lengths_as_f64(v: &[usize]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Report for one session's events, in log order.
pub fn analyze_session(session_id: &str, events: &[&EventRecord]) -> Result<ChatReport, TelemetryError> {
    let mut live: Option<ShownSuggestionSet> = None;
    let mut pending_click: Option<String> = None;
    let mut visible = true;
    let mut open_ms = 0i64;
    let mut prev_ts: Option<i64> = None;

    let mut counselor_messages = 0;
    let mut suggestion_turns = 0;
    let mut clicked_turns = 0;
    let mut unmodified_turns = 0;
    let mut vs_suggestion = Vec::new();
    let mut vs_sent = Vec::new();
    let mut with = Vec::new();
    let mut without = Vec::new();

    for e in events {
        if let Some(prev) = prev_ts {
            if visible {
                open_ms += (e.ts_ms - prev).max(0);
            }
        }
        prev_ts = Some(e.ts_ms);

        match e.event_type {
            EventType::Message => {
                let m: MessagePayload = e.payload_as()?;
                if m.role == Speaker::Counselor {
                    counselor_messages += 1;
                    let len = m.text.chars().count();
                    let shown = live.as_ref().is_some_and(|s| {
                        !s.items.is_empty() && Some(s.for_utterance_index) == m.index.checked_sub(1)
                    });
                    if shown {
                        suggestion_turns += 1;
                        with.push(len);
                        if let Some(clicked) = pending_click.take() {
                            clicked_turns += 1;
                            if !m.text.is_empty() {
                                let ea = edit_analysis(&clicked, &m.text)?;
                                if ea.modified {
                                    vs_suggestion.push(ea.ratio_vs_suggestion);
                                    vs_sent.push(ea.ratio_vs_sent);
                                } else {
                                    unmodified_turns += 1;
                                }
                            }
                        }
                    } else {
                        without.push(len);
                    }
                }
                pending_click = None;
            }
            EventType::SuggestionsShown => {
                live = Some(e.payload_as()?);
                pending_click = None;
            }
            EventType::SuggestionClick => {
                let c: ClickPayload = e.payload_as()?;
                if let Some(item) = live.as_ref().and_then(|s| s.get(&c.suggestion_id)) {
                    pending_click = Some(item.text.clone());
                }
            }
            EventType::PanelToggle => {
                let p: PanelPayload = e.payload_as()?;
                visible = p.visible;
            }
            EventType::Typing | EventType::Join | EventType::Leave => {}
        }
    }

    let duration_ms = match (events.first(), events.last()) {
        (Some(a), Some(b)) => (b.ts_ms - a.ts_ms).max(0),
        _ => 0,
    };
    let panel_open_fraction = if duration_ms > 0 {
        (open_ms as f64 / duration_ms as f64).clamp(0.0, 1.0)
    } else if visible {
        1.0
    } else {
        0.0
    };
    let mann_whitney = mann_whitney_u(&lengths_as_f64(&with), &lengths_as_f64(&without)).ok();
    Ok(ChatReport {
        session_id: session_id.to_string(),
        no_opportunity: counselor_messages == 0,
        counselor_messages,
        suggestion_turns,
        clicked_turns,
        unmodified_turns,
        assistance_rate: ratio(suggestion_turns, counselor_messages),
        panel_open_fraction,
        click_through_rate: ratio(clicked_turns, suggestion_turns),
        unmodified_fraction: ratio(unmodified_turns, clicked_turns),
        lcs_ratio_vs_suggestion: vs_suggestion,
        lcs_ratio_vs_sent: vs_sent,
        counselor_lengths_with: with,
        counselor_lengths_without: without,
        mann_whitney,
        duration_ms,
        panel_open_ms: open_ms.min(duration_ms),
    })
}

/// Per-session reports (sorted by session id) and their aggregate.
pub fn analyze(events: &[EventRecord]) -> Result<AnalysisReport, TelemetryError> {
    let mut by_session: BTreeMap<&str, Vec<&EventRecord>> = BTreeMap::new();
    for e in events {
        by_session.entry(e.session_id.as_str()).or_default().push(e);
    }
    let sessions = by_session
        .iter()
        .map(|(id, evs)| analyze_session(id, evs))
        .collect::<Result<Vec<_>, _>>()?;
    let aggregate = aggregate(&sessions);
    Ok(AnalysisReport { sessions, aggregate })
}

pub fn aggregate(sessions: &[ChatReport]) -> AggregateReport {
    let med = |f: &dyn Fn(&ChatReport) -> Option<f64>| {
        let v: Vec<f64> = sessions.iter().filter_map(f).collect();
        median(&v)
    };
    let sum = |f: &dyn Fn(&ChatReport) -> usize| sessions.iter().map(f).sum::<usize>();
    let counselor_messages = sum(&|r| r.counselor_messages);
    let suggestion_turns = sum(&|r| r.suggestion_turns);
    let clicked_turns = sum(&|r| r.clicked_turns);
    let unmodified_turns = sum(&|r| r.unmodified_turns);
    let duration: i64 = sessions.iter().map(|r| r.duration_ms).sum();
    let open: i64 = sessions.iter().map(|r| r.panel_open_ms).sum();

    let opt_ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let all_vs_suggestion: Vec<f64> = sessions.iter().flat_map(|r| r.lcs_ratio_vs_suggestion.clone()).collect();
    let all_vs_sent: Vec<f64> = sessions.iter().flat_map(|r| r.lcs_ratio_vs_sent.clone()).collect();
    let all_with: Vec<f64> = sessions.iter().flat_map(|r| lengths_as_f64(&r.counselor_lengths_with)).collect();
    let all_without: Vec<f64> = sessions.iter().flat_map(|r| lengths_as_f64(&r.counselor_lengths_without)).collect();

    AggregateReport {
        sessions: sessions.len(),
        median: RateSummary {
            assistance_rate: med(&|r| (r.counselor_messages > 0).then_some(r.assistance_rate)),
            panel_open_fraction: med(&|r| Some(r.panel_open_fraction)),
            click_through_rate: med(&|r| (r.suggestion_turns > 0).then_some(r.click_through_rate)),
            unmodified_fraction: med(&|r| (r.clicked_turns > 0).then_some(r.unmodified_fraction)),
        },
        pooled: RateSummary {
            assistance_rate: opt_ratio(suggestion_turns, counselor_messages),
            panel_open_fraction: if duration > 0 {
                Some(open as f64 / duration as f64)
            } else {
                med(&|r| Some(r.panel_open_fraction))
            },
            click_through_rate: opt_ratio(clicked_turns, suggestion_turns),
            unmodified_fraction: opt_ratio(unmodified_turns, clicked_turns),
        },
        counselor_messages,
        suggestion_turns,
        clicked_turns,
        unmodified_turns,
        median_lcs_ratio_vs_suggestion: median(&all_vs_suggestion),
        median_lcs_ratio_vs_sent: median(&all_vs_sent),
        median_length_with: median(&all_with),
        median_length_without: median(&all_without),
        n_with: all_with.len(),
        n_without: all_without.len(),
        mann_whitney: mann_whitney_u(&all_with, &all_without).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Suggestion;
    use alloc::vec;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    /// Exponential oracle: longest string that is a subsequence of both.
    fn brute_lcs(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let is_subseq = |sub: &[char], s: &str| {
            let mut it = s.chars();
            sub.iter().all(|c| it.any(|x| x == *c))
        };
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let sub: Vec<char> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
            if sub.len() > best && is_subseq(&sub, b) {
                best = sub.len();
            }
        }
        best
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_chars("", "abc"), 0);
        assert_eq!(lcs_chars("abc", "abc"), 3);
        assert_eq!(lcs_chars("ABCBDAB", "BDCABA"), 4);
        assert_eq!(brute_lcs("ABCBDAB", "BDCABA"), 4);
    }

    #[test]
    fn edit_analysis_examples() {
        let same = edit_analysis("how are you", "how are you").unwrap();
        assert_eq!((same.ratio_vs_suggestion, same.ratio_vs_sent, same.modified), (1.0, 1.0, false));
        let grown = edit_analysis("hi", "hi there friend").unwrap();
        assert_eq!(grown.lcs, 2);
        assert_eq!(grown.ratio_vs_suggestion, 1.0);
        assert_eq!(grown.ratio_vs_sent, 2.0 / 15.0);
        assert!(grown.modified);
        assert_eq!(edit_analysis("hi", ""), Err(TelemetryError::EmptySent));
    }

    /// U by pair counting and a two-sided p by enumerating every distinct
    /// relabeling of the pooled sample (via all permutations).
    fn brute_mann_whitney(a: &[f64], b: &[f64]) -> (f64, f64) {
        let u_of = |x: &[f64], y: &[f64]| {
            let mut u = 0.0;
            for &p in x {
                for &q in y {
                    u += if p > q {
                        1.0
                    } else if p == q {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
            u
        };
        let u = u_of(a, b);
        let mean = (a.len() * b.len()) as f64 / 2.0;
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let (mut extreme, mut total) = (0u64, 0u64);
        loop {
            let x: Vec<f64> = perm[..a.len()].iter().map(|&i| pooled[i]).collect();
            let y: Vec<f64> = perm[a.len()..].iter().map(|&i| pooled[i]).collect();
            total += 1;
            if (u_of(&x, &y) - mean).abs() >= (u - mean).abs() - 1e-9 {
                extreme += 1;
            }
            // Next permutation (lexicographic).
            let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
                break;
            };
            let j = (i + 1..n).rev().find(|&j| perm[j] > perm[i]).unwrap();
            perm.swap(i, j);
            perm[i + 1..].reverse();
        }
        (u, extreme as f64 / total as f64)
    }

    #[test]
    fn mann_whitney_examples() {
        let sep = mann_whitney_u(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap();
        assert_eq!(sep.u, 0.0);
        assert!(sep.exact);
        let small = mann_whitney_u(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        let (u, p) = brute_mann_whitney(&[1.0, 3.0], &[2.0, 4.0]);
        assert_eq!(small.u, u);
        assert!((small.p - p).abs() < 1e-12);
        assert_eq!(mann_whitney_u(&[], &[1.0]), Err(TelemetryError::EmptySample));
    }

    #[test]
    fn mann_whitney_identical_large_samples() {
        let a: Vec<f64> = (0..30).map(|i| (i % 7) as f64).collect();
        let r = mann_whitney_u(&a, &a).unwrap();
        assert!(!r.exact);
        assert_eq!(r.u, 450.0);
        assert!((r.p - 1.0).abs() < 0.05);
        let ident = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ident.u, 4.5);
        assert_eq!(ident.p, 1.0);
    }

    #[test]
    fn mann_whitney_normal_matches_reference_value() {
        // No ties, n1 = n2 = 15, complete separation: U = 0, mean 112.5,
        // sd = sqrt(15*15*31/12).
        let a: Vec<f64> = (0..15).map(f64::from).collect();
        let b: Vec<f64> = (100..115).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        let sd = libm::sqrt(15.0 * 15.0 * 31.0 / 12.0);
        let z = (112.5 - 0.5) / sd;
        assert_eq!(r.u, 0.0);
        assert!((r.p - libm::erfc(z / core::f64::consts::SQRT_2)).abs() < 1e-15);
        assert!(r.p < 1e-5);
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            prop_assert_eq!(lcs_chars(&a, &b), brute_lcs(&a, &b));
        }

        #[test]
        fn lcs_properties(a in "[a-d]{0,12}", b in "[a-d]{0,12}", s in "[a-d]{0,5}") {
            prop_assert_eq!(lcs_chars(&a, &b), lcs_chars(&b, &a));
            prop_assert_eq!(lcs_chars(&a, &a), a.chars().count());
            let (a2, b2) = (format!("{a}{s}"), format!("{b}{s}"));
            prop_assert!(lcs_chars(&a2, &b2) >= lcs_chars(&a, &b));
        }

        #[test]
        fn subsequence_gives_full_suggestion_ratio(clicked in "[a-z ]{1,10}", extra in "[a-z ]{0,10}") {
            let mut sent = clicked.clone();
            sent.push_str(&extra);
            let ea = edit_analysis(&clicked, &sent).unwrap();
            prop_assert_eq!(ea.ratio_vs_suggestion, 1.0);
            prop_assert!(ea.ratio_vs_sent > 0.0 && ea.ratio_vs_sent <= 1.0);
        }

        #[test]
        fn exact_mode_matches_enumeration(a in proptest::collection::vec(0u8..5, 1..4), b in proptest::collection::vec(0u8..5, 1..5)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let r = mann_whitney_u(&a, &b).unwrap();
            let (u, p) = brute_mann_whitney(&a, &b);
            prop_assert_eq!(r.u, u);
            prop_assert!((r.p - p).abs() < 1e-12);
        }
    }

    fn shown(idx: usize, texts: &[&str]) -> ShownSuggestionSet {
        let items = texts
            .iter()
            .map(|t| Suggestion {
                strategy: Strategy::Support,
                text: (*t).into(),
                probability: 0.9,
            })
            .collect();
        ShownSuggestionSet::from_set(&SuggestionSet { for_utterance_index: idx, items })
    }

    /// Four counselor turns; suggestions live for three; clicks on two; one
    /// of those sent unmodified.
    fn fixture(session: &str) -> Vec<EventRecord> {
        let s = session;
        let set1 = shown(0, &["how are you feeling"]);
        let set3 = shown(2, &["that sounds hard"]);
        let set5 = shown(4, &["tell me more"]);
        vec![
            EventRecord::message(0, s, 0, Speaker::Seeker, "hi"),
            EventRecord::suggestions_shown(100, s, &set1),
            EventRecord::click(200, s, &set1.items[0]),
            EventRecord::message(1000, s, 1, Speaker::Counselor, "how are you feeling"),
            EventRecord::message(2000, s, 2, Speaker::Seeker, "bad"),
            EventRecord::suggestions_shown(2100, s, &set3),
            EventRecord::panel_toggle(3000, s, false),
            EventRecord::message(4000, s, 3, Speaker::Counselor, "oh no"),
            EventRecord::panel_toggle(5000, s, true),
            EventRecord::message(6000, s, 4, Speaker::Seeker, "yeah"),
            EventRecord::suggestions_shown(6100, s, &set5),
            EventRecord::click(6200, s, &set5.items[0]),
            EventRecord::message(7000, s, 5, Speaker::Counselor, "tell me more please"),
            EventRecord::message(8000, s, 6, Speaker::Counselor, "i am here"),
        ]
    }

    #[test]
    fn fixture_report() {
        let report = analyze(&fixture("s1")).unwrap();
        let r = &report.sessions[0];
        assert_eq!(r.counselor_messages, 4);
        assert_eq!(r.suggestion_turns, 3);
        assert_eq!(r.clicked_turns, 2);
        assert_eq!(r.unmodified_turns, 1);
        assert_eq!(r.assistance_rate, 0.75);
        assert_eq!(r.click_through_rate, 2.0 / 3.0);
        assert_eq!(r.unmodified_fraction, 0.5);
        assert_eq!(r.panel_open_fraction, 6000.0 / 8000.0);
        assert_eq!(r.lcs_ratio_vs_suggestion, [1.0]);
        assert_eq!(r.lcs_ratio_vs_sent, [12.0 / 19.0]);
        assert_eq!(r.counselor_lengths_with, [19, 5, 19]);
        assert_eq!(r.counselor_lengths_without, [9]);
        assert!(!r.no_opportunity);
    }

    #[test]
    fn no_counselor_messages_flags_no_opportunity() {
        let evs = vec![EventRecord::message(0, "s", 0, Speaker::Seeker, "hello?")];
        let r = &analyze(&evs).unwrap().sessions[0];
        assert!(r.no_opportunity);
        assert_eq!((r.assistance_rate, r.click_through_rate, r.unmodified_fraction), (0.0, 0.0, 0.0));
        assert_eq!(r.panel_open_fraction, 1.0);
    }

    #[test]
    fn identical_sessions_share_reports() {
        let mut evs = fixture("a");
        evs.extend(fixture("b"));
        let report = analyze(&evs).unwrap();
        let (a, b) = (&report.sessions[0], &report.sessions[1]);
        assert_eq!(a.assistance_rate, b.assistance_rate);
        assert_eq!(report.aggregate.median.assistance_rate, Some(a.assistance_rate));
        assert_eq!(report.aggregate.median.click_through_rate, Some(2.0 / 3.0));
        assert_eq!(report.aggregate.pooled.click_through_rate, Some(4.0 / 6.0));
        // Session order in the input does not matter.
        let mut swapped = fixture("b");
        swapped.extend(fixture("a"));
        assert_eq!(analyze(&swapped).unwrap(), report);
    }

    #[test]
    fn clicks_on_stale_sets_do_not_count() {
        let s = "s";
        let set = shown(0, &["x"]);
        let evs = vec![
            EventRecord::message(0, s, 0, Speaker::Seeker, "hi"),
            EventRecord::suggestions_shown(1, s, &set),
            EventRecord::message(2, s, 1, Speaker::Seeker, "hello?"),
            EventRecord::click(3, s, &set.items[0]),
            EventRecord::message(4, s, 2, Speaker::Counselor, "x"),
        ];
        let r = &analyze(&evs).unwrap().sessions[0];
        assert_eq!(r.suggestion_turns, 0);
        assert_eq!(r.clicked_turns, 0);
    }

    #[test]
    fn log_round_trip_and_parse_errors() {
        let evs = fixture("s");
        let text: String = evs.iter().map(|e| e.to_json_line() + "\n").collect();
        assert_eq!(parse_log(&text).unwrap(), evs);
        let err = parse_log("{\"ts_ms\": 1}\n").unwrap_err();
        assert!(matches!(err, TelemetryError::Parse { line: 1, .. }));
        let bad = EventRecord {
            ts_ms: 0,
            session_id: "s".into(),
            event_type: EventType::Message,
            payload: serde_json::json!({"index": "x"}),
        };
        assert!(matches!(analyze(&[bad]), Err(TelemetryError::Payload { .. })));
    }
}
