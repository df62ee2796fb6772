//! Rendering, parsing, and validation of the tag-based trajectory text.
//!
//! The scanner is deliberately scoped: once a block is open, only its own
//! closing tag (or an illegal same-kind reopen) ends it, so observation
//! text is free to contain `<title>`/`<url>`/`<snippet>` markup and even
//! tags of the *other* reserved kinds without breaking the grammar.

use super::{
    check_payload, parse_tool_call, payload_json, FormatReport, Observation, ParseError, Step,
    Termination, Thought, Trajectory, Violation, ViolationCode, Limits, THINK_CLOSE, THINK_OPEN,
    TOOL_CALL_CLOSE, TOOL_CALL_OPEN, TOOL_RESPONSE_CLOSE, TOOL_RESPONSE_OPEN,
};

/// Renders a trajectory to its canonical text: question preamble (when
/// non-empty), tag blocks separated by one blank line, final answer after
/// the last think block. Deterministic, byte-for-byte.
pub fn render_trajectory(t: &Trajectory) -> String {
    let mut out = String::new();
    let push_block = |out: &mut String, open: &str, content: &str, close: &str| {
        if !out.is_empty() {
            out.push_str("\n\n");
        }
        out.push_str(open);
        out.push('\n');
        out.push_str(content);
        out.push('\n');
        out.push_str(close);
    };
    if !t.question.is_empty() {
        out.push_str(&t.question);
    }
    for step in &t.steps {
        push_block(&mut out, THINK_OPEN, &step.thought.text, THINK_CLOSE);
        if let Some(action) = &step.action {
            push_block(&mut out, TOOL_CALL_OPEN, &payload_json(action), TOOL_CALL_CLOSE);
        }
        if let Some(obs) = &step.observation {
            push_block(&mut out, TOOL_RESPONSE_OPEN, &obs.text, TOOL_RESPONSE_CLOSE);
        }
    }
    if let Some(answer) = &t.final_answer {
        if !out.is_empty() {
            out.push_str("\n\n");
        }
        out.push_str(answer);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Think,
    ToolCall,
    ToolResponse,
}

impl Kind {
    fn open(self) -> &'static str {
        match self {
            Kind::Think => THINK_OPEN,
            Kind::ToolCall => TOOL_CALL_OPEN,
            Kind::ToolResponse => TOOL_RESPONSE_OPEN,
        }
    }

    fn close(self) -> &'static str {
        match self {
            Kind::Think => THINK_CLOSE,
            Kind::ToolCall => TOOL_CALL_CLOSE,
            Kind::ToolResponse => TOOL_RESPONSE_CLOSE,
        }
    }
}

#[derive(Debug)]
struct Block {
    kind: Kind,
    /// Byte offset of the opening tag.
    open_pos: usize,
    /// Byte offset of the first content byte.
    content_start: usize,
    /// Byte offset one past the last content byte.
    content_end: usize,
}

/// Next reserved tag at or after `from`: (position, kind, is_open).
fn find_next_tag(text: &str, from: usize) -> Option<(usize, Kind, bool)> {
    let bytes = text.as_bytes();
    let mut pos = from;
    while pos < bytes.len() {
        match bytes[pos..].iter().position(|&b| b == b'<') {
            None => return None,
            Some(off) => {
                let p = pos + off;
                let rest = &text[p..];
                for kind in [Kind::Think, Kind::ToolCall, Kind::ToolResponse] {
                    if rest.starts_with(kind.open()) {
                        return Some((p, kind, true));
                    }
                    if rest.starts_with(kind.close()) {
                        return Some((p, kind, false));
                    }
                }
                pos = p + 1;
            }
        }
    }
    None
}

struct Scan {
    blocks: Vec<Block>,
    violations: Vec<Violation>,
    /// Gap spans between blocks: (start, end, index of the following block
    /// or blocks.len() for the trailing gap).
    gaps: Vec<(usize, usize, usize)>,
}

fn scan(text: &str) -> Scan {
    let mut blocks: Vec<Block> = Vec::new();
    let mut violations: Vec<Violation> = Vec::new();
    let mut gaps: Vec<(usize, usize, usize)> = Vec::new();
    let mut pos = 0usize;
    let mut gap_start = 0usize;

    while let Some((tag_pos, kind, is_open)) = find_next_tag(text, pos) {
        if !is_open {
            violations.push((
                tag_pos,
                ViolationCode::UnbalancedTags,
                format!("closing {} without a matching opening tag", kind.close()),
            ));
            pos = tag_pos + kind.close().len();
            continue;
        }
        gaps.push((gap_start, tag_pos, blocks.len()));
        let content_start = tag_pos + kind.open().len();
        match text[content_start..].find(kind.close()) {
            None => {
                violations.push((
                    tag_pos,
                    ViolationCode::UnbalancedTags,
                    format!("{} is never closed", kind.open()),
                ));
                // Rest of the text is unusable; stop scanning.
                gap_start = text.len();
                break;
            }
            Some(close_off) => {
                let content_end = content_start + close_off;
                let content = &text[content_start..content_end];
                if let Some(nested) = content.find(kind.open()) {
                    violations.push((
                        content_start + nested,
                        ViolationCode::InterleavedTags,
                        format!("nested {} inside an open {} block", kind.open(), kind.open()),
                    ));
                }
                blocks.push(Block { kind, open_pos: tag_pos, content_start, content_end });
                pos = content_end + kind.close().len();
                gap_start = pos;
            }
        }
    }
    gaps.push((gap_start, text.len(), blocks.len()));
    Scan { blocks, violations, gaps }
}

/// Strips the single leading/trailing newline added by the canonical
/// renderer, preserving every other byte of the content.
fn block_inner(content: &str) -> &str {
    let c = content.strip_prefix('\n').unwrap_or(content);
    c.strip_suffix('\n').unwrap_or(c)
}

struct Analysis {
    violations: Vec<Violation>,
    question: String,
    steps: Vec<Step>,
    final_answer: Option<String>,
}

fn analyze(text: &str) -> Analysis {
    let Scan { blocks, mut violations, gaps } = scan(text);

    if blocks.is_empty() && violations.is_empty() {
        violations.push((0, ViolationCode::EmptyTrajectory, "no trajectory blocks found".into()));
    }

    // Gap policy: text before the first block is the question; text after
    // the last block is the answer iff that block is a think block;
    // anything else non-whitespace is stray.
    let mut question = String::new();
    let mut trailing: Option<&str> = None;
    for &(start, end, following) in &gaps {
        let gap = &text[start..end];
        if following == 0 && !blocks.is_empty() {
            question = gap.trim().to_string();
            continue;
        }
        if following == blocks.len() {
            if blocks.last().map(|b| b.kind) == Some(Kind::Think) {
                trailing = Some(gap);
            } else if !gap.trim().is_empty() {
                let at = start + (gap.len() - gap.trim_start().len());
                violations.push((
                    at,
                    ViolationCode::StrayText,
                    "text after the last block is only allowed after a final think block".into(),
                ));
            }
            continue;
        }
        if !gap.trim().is_empty() {
            let at = start + (gap.len() - gap.trim_start().len());
            violations.push((
                at,
                ViolationCode::StrayText,
                "non-whitespace text between blocks".into(),
            ));
        }
    }

    // Grammar pass: think (tool_call tool_response think)* with the final
    // block being a think.
    #[derive(PartialEq)]
    enum Expect {
        Think,
        CallOrEnd,
        Response,
    }
    let mut expect = Expect::Think;
    let mut steps: Vec<Step> = Vec::new();
    let mut pending_thought: Option<Thought> = None;
    let mut pending_action: Option<super::Action> = None;

    let take_thought = |block: &Block, violations: &mut Vec<Violation>| -> Thought {
        let inner = block_inner(&text[block.content_start..block.content_end]);
        if inner.trim().is_empty() {
            violations.push((
                block.open_pos,
                ViolationCode::EmptyThink,
                "think block has no content".into(),
            ));
        }
        Thought { text: inner.to_string() }
    };

    for block in &blocks {
        match (&expect, block.kind) {
            (Expect::Think, Kind::Think) => {
                pending_thought = Some(take_thought(block, &mut violations));
                expect = Expect::CallOrEnd;
            }
            (Expect::CallOrEnd, Kind::ToolCall) => {
                let payload = block_inner(&text[block.content_start..block.content_end]);
                let payload_violations = check_payload(payload);
                let ok = payload_violations.is_empty();
                violations.extend(
                    payload_violations
                        .into_iter()
                        .map(|(off, code, msg)| (block.content_start + off, code, msg)),
                );
                if ok {
                    pending_action = parse_tool_call(payload).ok();
                }
                expect = Expect::Response;
            }
            (Expect::Response, Kind::ToolResponse) => {
                let inner = block_inner(&text[block.content_start..block.content_end]);
                let index = steps.len();
                steps.push(Step {
                    thought: pending_thought.take().unwrap_or(Thought { text: String::new() }),
                    action: pending_action.take(),
                    observation: Some(Observation::new(inner, index)),
                });
                expect = Expect::Think;
            }
            (Expect::CallOrEnd, Kind::Think) => {
                violations.push((
                    block.open_pos,
                    ViolationCode::InterleavedTags,
                    "think block follows a think block; only the final step may omit the tool call"
                        .into(),
                ));
                if let Some(t) = pending_thought.take() {
                    steps.push(Step::thought_only(t));
                }
                pending_thought = Some(take_thought(block, &mut violations));
            }
            (Expect::Think, kind) => {
                violations.push((
                    block.open_pos,
                    ViolationCode::InterleavedTags,
                    format!("expected <think> to start a step, found {}", kind.open()),
                ));
            }
            (Expect::CallOrEnd, Kind::ToolResponse) => {
                violations.push((
                    block.open_pos,
                    ViolationCode::InterleavedTags,
                    "<tool_response> without a preceding <tool_call>".into(),
                ));
            }
            (Expect::Response, kind) => {
                violations.push((
                    block.open_pos,
                    ViolationCode::InterleavedTags,
                    format!("expected <tool_response> after <tool_call>, found {}", kind.open()),
                ));
                // Close the broken step and resync on the offending block.
                steps.push(Step {
                    thought: pending_thought.take().unwrap_or(Thought { text: String::new() }),
                    action: pending_action.take(),
                    observation: None,
                });
                if kind == Kind::Think {
                    pending_thought = Some(take_thought(block, &mut violations));
                    expect = Expect::CallOrEnd;
                } else {
                    expect = Expect::Think;
                }
            }
        }
    }

    let mut final_answer = None;
    match expect {
        Expect::CallOrEnd => {
            if let Some(t) = pending_thought.take() {
                steps.push(Step::thought_only(t));
            }
            final_answer = trailing.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        }
        Expect::Think if !blocks.is_empty() => {
            violations.push((
                text.len(),
                ViolationCode::InterleavedTags,
                "trajectory must end with a think block".into(),
            ));
        }
        Expect::Response => {
            violations.push((
                text.len(),
                ViolationCode::InterleavedTags,
                "expected <tool_response> after <tool_call>, found end of text".into(),
            ));
        }
        Expect::Think => {}
    }

    Analysis { violations, question, steps, final_answer }
}

/// Validates trajectory text against the tag grammar and the tool-call
/// schemas. Pure: identical input yields an identical report.
pub fn validate_format(text: &str) -> FormatReport {
    FormatReport::from_violations(analyze(text).violations)
}

/// Parses trajectory text, returning the first violation as an error.
/// Limits and termination are not carried by the text format and are set
/// to defaults ([`Limits::unbounded`], [`Termination::Answered`]).
pub fn parse_trajectory(text: &str) -> Result<Trajectory, ParseError> {
    let mut analysis = analyze(text);
    analysis.violations.sort_by_key(|v| v.0);
    if let Some((position, code, message)) = analysis.violations.into_iter().next() {
        return Err(ParseError { position, code, message });
    }
    Ok(Trajectory {
        question: analysis.question,
        steps: analysis.steps,
        final_answer: analysis.final_answer,
        limits: Limits::unbounded(),
        termination: Termination::Answered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Action;

    fn sample_trajectory() -> Trajectory {
        let obs = "--- search result for [a] ---\n<title>T</title>\n<url>https://x.test/p</url>\n<snippet>S</snippet>";
        Trajectory::new(
            "Who is entity A?",
            vec![
                Step::full(
                    Thought::new("Let me search.").unwrap(),
                    Action::search(["a"]).unwrap(),
                    Observation::new(obs, 0),
                ),
                Step::thought_only(Thought::new("I found it.").unwrap()),
            ],
            Some("entity A".into()),
            Limits::unbounded(),
            Termination::Answered,
        )
    }

    #[test]
    fn render_contains_search_header_verbatim() {
        let text = render_trajectory(&sample_trajectory());
        assert!(text.contains("--- search result for [a] ---"), "{text}");
        assert!(text.contains("<tool_response>\n--- search result for [a] ---"));
    }

    #[test]
    fn render_zero_action_trajectory() {
        let t = Trajectory::new(
            "",
            vec![Step::thought_only(Thought::new("Nothing to do.").unwrap())],
            Some("42".into()),
            Limits::unbounded(),
            Termination::Answered,
        );
        let text = render_trajectory(&t);
        assert_eq!(text, "<think>\nNothing to do.\n</think>\n\n42");
        assert!(!text.contains(TOOL_CALL_OPEN));
        assert!(!text.contains(TOOL_RESPONSE_OPEN));
    }

    #[test]
    fn round_trip_identity() {
        let t = sample_trajectory();
        let parsed = parse_trajectory(&render_trajectory(&t)).unwrap();
        assert!(parsed.structurally_eq(&t), "{parsed:#?}");
    }

    #[test]
    fn round_trip_preserves_internal_whitespace() {
        let t = Trajectory::new(
            "q",
            vec![Step::thought_only(Thought::new("  leading and trailing  \n\nsecond paragraph").unwrap())],
            None,
            Limits::unbounded(),
            Termination::Answered,
        );
        let parsed = parse_trajectory(&render_trajectory(&t)).unwrap();
        assert!(parsed.structurally_eq(&t));
    }

    #[test]
    fn parse_accepts_arbitrary_interblock_whitespace() {
        let loose = "q\n\n\n   <think>\nx\n</think>   \n\n\n\n<tool_call>\n{\"name\":\"search\",\"arguments\":{\"queries\":[\"a\"]}}\n</tool_call>\n\n\n<tool_response>\nr\n</tool_response>\n\n  <think>\ndone\n</think>\n\n\nans\n\n";
        let t = parse_trajectory(loose).unwrap();
        assert_eq!(t.question, "q");
        assert_eq!(t.steps.len(), 2);
        assert_eq!(t.final_answer.as_deref(), Some("ans"));
    }

    #[test]
    fn unclosed_tool_call_is_unbalanced() {
        let text = "<think>\nx\n</think>\n\n<tool_call>\n{}";
        let err = parse_trajectory(text).unwrap_err();
        assert_eq!(err.code, ViolationCode::UnbalancedTags);
        assert_eq!(err.position, text.find(TOOL_CALL_OPEN).unwrap());
    }

    #[test]
    fn empty_queries_payload_is_malformed_tool_call() {
        let text = "<think>\nx\n</think>\n\n<tool_call>\n{\"name\":\"search\",\"arguments\":{\"queries\":[]}}\n</tool_call>\n\n<tool_response>\nr\n</tool_response>\n\n<think>\ny\n</think>";
        let err = parse_trajectory(text).unwrap_err();
        assert_eq!(err.code, ViolationCode::SchemaViolation);
        let report = validate_format(text);
        assert!(!report.well_formed);
    }

    #[test]
    fn unknown_tool_reported() {
        let text = "<think>\nx\n</think>\n\n<tool_call>\n{\"name\":\"fetch\",\"arguments\":{\"url\":\"https://e/x\"}}\n</tool_call>\n\n<tool_response>\nr\n</tool_response>\n\n<think>\ny\n</think>";
        let report = validate_format(text);
        assert!(report.violations.iter().any(|v| v.1 == ViolationCode::UnknownTool), "{report:?}");
    }

    #[test]
    fn browse_missing_query_reported() {
        let text = "<think>\nx\n</think>\n\n<tool_call>\n{\"name\":\"browse\",\"arguments\":{\"url\":\"https://e/x\"}}\n</tool_call>\n\n<tool_response>\nr\n</tool_response>\n\n<think>\ny\n</think>";
        let report = validate_format(text);
        assert!(report.violations.iter().any(|v| v.1 == ViolationCode::MissingRequiredField));
    }

    #[test]
    fn validator_accepts_all_rendered_output() {
        let report = validate_format(&render_trajectory(&sample_trajectory()));
        assert!(report.well_formed, "{report:?}");
    }

    #[test]
    fn validator_and_render_are_deterministic() {
        let t = sample_trajectory();
        let a = render_trajectory(&t);
        let b = render_trajectory(&t);
        assert_eq!(a, b);
        assert_eq!(validate_format(&a), validate_format(&b));
    }

    #[test]
    fn empty_think_reported() {
        let text = "<think>\n\n</think>";
        let err = parse_trajectory(text).unwrap_err();
        assert_eq!(err.code, ViolationCode::EmptyThink);
    }

    #[test]
    fn empty_text_is_empty_trajectory() {
        assert_eq!(parse_trajectory("").unwrap_err().code, ViolationCode::EmptyTrajectory);
        assert_eq!(parse_trajectory("   \n ").unwrap_err().code, ViolationCode::EmptyTrajectory);
    }

    #[test]
    fn trajectory_must_end_with_think() {
        let text = "<think>\nx\n</think>\n\n<tool_call>\n{\"name\":\"search\",\"arguments\":{\"queries\":[\"a\"]}}\n</tool_call>\n\n<tool_response>\nr\n</tool_response>";
        let err = parse_trajectory(text).unwrap_err();
        assert_eq!(err.code, ViolationCode::InterleavedTags);
    }

    #[test]
    fn stray_text_between_blocks_rejected() {
        let text = "<think>\nx\n</think>\n\nchatter\n\n<tool_call>\n{\"name\":\"search\",\"arguments\":{\"queries\":[\"a\"]}}\n</tool_call>\n\n<tool_response>\nr\n</tool_response>\n\n<think>\ny\n</think>";
        let report = validate_format(text);
        assert!(report.violations.iter().any(|v| v.1 == ViolationCode::StrayText), "{report:?}");
    }

    #[test]
    fn observation_may_contain_other_tag_kinds() {
        let t = Trajectory::new(
            "q",
            vec![
                Step::full(
                    Thought::new("t").unwrap(),
                    Action::search(["a"]).unwrap(),
                    Observation::new("junk with </tool_call> and <think> markers inside", 0),
                ),
                Step::thought_only(Thought::new("done").unwrap()),
            ],
            Some("a".into()),
            Limits::unbounded(),
            Termination::Answered,
        );
        let rendered = render_trajectory(&t);
        let parsed = parse_trajectory(&rendered).unwrap();
        assert!(parsed.structurally_eq(&t));
        assert!(validate_format(&rendered).well_formed);
    }

    #[test]
    fn truncated_flag_survives_round_trip() {
        let t = Trajectory::new(
            "q",
            vec![
                Step::full(
                    Thought::new("t").unwrap(),
                    Action::search(["a"]).unwrap(),
                    Observation::new(format!("payload{}", super::super::TRUNCATION_NOTICE), 0),
                ),
                Step::thought_only(Thought::new("done").unwrap()),
            ],
            None,
            Limits::unbounded(),
            Termination::Answered,
        );
        assert!(t.steps[0].observation.as_ref().unwrap().truncated);
        let parsed = parse_trajectory(&render_trajectory(&t)).unwrap();
        assert!(parsed.steps[0].observation.as_ref().unwrap().truncated);
        assert!(parsed.structurally_eq(&t));
    }

    #[test]
    fn nested_think_is_interleaved() {
        let text = "<think>\na <think> b\n</think>";
        let err = parse_trajectory(text).unwrap_err();
        assert_eq!(err.code, ViolationCode::InterleavedTags);
    }

    #[test]
    fn stray_closing_tag_is_unbalanced() {
        let err = parse_trajectory("</tool_response>\n<think>\nx\n</think>").unwrap_err();
        assert_eq!(err.code, ViolationCode::UnbalancedTags);
        assert_eq!(err.position, 0);
    }
}
