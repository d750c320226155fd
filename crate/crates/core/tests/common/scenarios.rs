//! Pipeline scenarios driven by scripted cassettes. Each one panics on the
//! first failed expectation.

use surveygen::gateway::ResponseStatus;
use surveygen::parse::extract_bullets;
use surveygen::pipeline::{assemble_markdown, parse_markdown, Flag, Parity, PrepFailure, RunConfig};
use surveygen::prompts::PromptStep;

use super::*;

pub const RETRY_PREFIX: &str =
    "The response format is incorrect. Note that only one guess is required. The title should start with \"Title: \". ";

/// Deterministic output, eleven calls, round-tripping outline and ledger
/// arithmetic for the two-section fixture.
pub fn determinism_and_structure() {
    let record = happy_record();
    let first = run(&record, happy_steps(&record), happy_config());
    let second = run(&record, happy_steps(&record), happy_config());
    let a = first.result.expect("first run");
    let b = second.result.expect("second run");

    let md_a = assemble_markdown(&a.survey);
    let md_b = assemble_markdown(&b.survey);
    assert_eq!(md_a.as_bytes(), md_b.as_bytes());

    assert_eq!(first.backend.call_count(), 11);
    assert_eq!(a.calls, 11);
    assert_eq!(first.backend.remaining(), 0);
    assert!(a.flags.is_empty(), "unexpected flags {:?}", a.flags);

    let doc = parse_markdown(&md_a);
    assert_eq!(doc.title.as_deref(), Some(HAPPY_TITLE));
    assert_eq!(doc.body, a.survey.body);
    assert_eq!(
        doc.headings(),
        vec![
            "Foundations of Survey Generation",
            "Problem Definition",
            "Prompt Design",
            "Evaluation of Generated Surveys",
            "Automatic Metrics",
            "Human Judgement"
        ]
    );
    assert_eq!(a.survey.cited_indices.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
    assert_eq!(a.survey.body[1].content.lines().next().unwrap(), "Prior work on problem definition is summarised here [1], [2], [4].");

    // title 1200/30, sections 1500/40, abstract 900/300, two selections
    // 1300/20, two subsection lists 600/50, four contents 800/400
    let input = 1200 + 1500 + 900 + 2 * 1300 + 2 * 600 + 4 * 800;
    let output = 30 + 40 + 300 + 2 * 20 + 2 * 50 + 4 * 400;
    assert_eq!(first.ledger.input_tokens(), input);
    assert_eq!(first.ledger.output_tokens(), output);
    assert_eq!(first.ledger.len(), 11);
    let expected = (input as f64 * 0.5 + output as f64 * 2.0) / 1e6;
    assert!((first.ledger.total_cost() - expected).abs() < 1e-12);
    assert!((expected - 0.00952).abs() < 1e-12);
}

/// A reply without the marker is re-asked in the same session with the
/// correction prefix.
pub fn title_retry() {
    let record = happy_record();
    let prepared = record.references.clone();
    let mut steps = happy_steps(&record);
    steps.insert(
        0,
        ok(PromptStep::Title, title_prompt(&prepared), "Maybe something about writing surveys automatically?"),
    );
    steps[1] = ok(PromptStep::Title, title_retry_prompt(&prepared), format!("Title: {HAPPY_TITLE}"));
    let r = run(&record, steps, happy_config());
    let outcome = r.result.expect("run succeeds");

    let texts = user_texts(&r.backend);
    assert!(texts[1].starts_with(RETRY_PREFIX), "{}", texts[1]);
    assert_eq!(texts[1], format!("{RETRY_PREFIX}{}", texts[0]));
    let requests = r.backend.requests();
    // same conversation: first prompt, first reply, corrected prompt
    assert_eq!(requests[1].len(), 3);
    assert_eq!(requests[1][0].text, texts[0]);
    // the heading request follows up in that session
    assert_eq!(requests[2].len(), 5);

    assert_eq!(outcome.survey.title, HAPPY_TITLE);
    assert_eq!(outcome.flags, vec![Flag::TitleRetried { retries: 1 }]);
    assert_eq!(outcome.calls, 12);
}

/// When the retry also lacks the marker the first reply line is used.
pub fn title_degraded() {
    let record = happy_record();
    let prepared = record.references.clone();
    let mut steps = happy_steps(&record);
    steps[0] = ok(PromptStep::Title, title_prompt(&prepared), "**Automatic Survey Writing**\nIt fits the topics.");
    steps.insert(1, ok(PromptStep::Title, title_retry_prompt(&prepared), "Step-by-Step Survey Writing with Language Models"));
    let r = run(&record, steps, happy_config());
    let outcome = r.result.expect("run succeeds");
    assert_eq!(outcome.survey.title, HAPPY_TITLE);
    assert_eq!(
        outcome.flags,
        vec![Flag::TitleDegraded {
            title: HAPPY_TITLE.into()
        }]
    );

    let mut strict = happy_steps(&record);
    strict[0] = ok(PromptStep::Title, title_prompt(&prepared), "no marker");
    strict[1] = ok(PromptStep::Title, title_retry_prompt(&prepared), "still no marker");
    let config = RunConfig {
        degrade_title: false,
        ..happy_config()
    };
    let r = run(&record, strict, config);
    assert!(matches!(
        r.result,
        Err(surveygen::pipeline::PipelineError::TitleFailed { attempts: 2, .. })
    ));
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix} {i}")).collect()
}

/// Heading counts 2 then 30 under the 3..=25 rule: one regeneration, then
/// the first 25 are kept.
pub fn heading_regeneration_clamp() {
    let record = record(4);
    let prepared = record.references.clone();
    let thirty = numbered("Topic", 30);
    let mut steps = vec![
        ok(PromptStep::Title, title_prompt(&prepared), format!("Title: {HAPPY_TITLE}")),
        ok(PromptStep::Sections, sections_prompt(), bullets(&["Intro", "Outro"])),
        ok(PromptStep::Sections, sections_prompt(), bullets(&thirty)),
    ];
    let plan: Vec<SectionSpec> = thirty[..25]
        .iter()
        .map(|h| SectionSpec::new(h, &[1, 3], &["Overview"]))
        .collect();
    steps.extend(tail_steps(&record, &prepared, HAPPY_TITLE, &plan));
    let r = run(&record, steps, RunConfig::default());
    let outcome = r.result.expect("run succeeds");

    let texts = user_texts(&r.backend);
    assert_eq!(texts[1], sections_prompt());
    assert_eq!(texts[2], sections_prompt());
    let requests = r.backend.requests();
    assert_eq!(requests[2].len(), 5, "regeneration stays in the planning session");
    assert_eq!(extract_bullets(&requests[2][3].text).items, vec!["Intro", "Outro"]);

    assert_eq!(outcome.outline.sections.len(), 25);
    assert_eq!(outcome.outline.sections[24].heading, "Topic 25");
    assert_eq!(
        outcome.flags,
        vec![
            Flag::HeadingsRegenerated { requests: 2 },
            Flag::HeadingsClamped { parsed: 30, kept: 25 }
        ]
    );
    assert_eq!(r.backend.call_count(), 3 + 1 + 25 * 3);
}

/// Counts 30 then 2: the short list is padded up to three.
pub fn heading_regeneration_pad() {
    let record = record(4);
    let prepared = record.references.clone();
    let mut steps = vec![
        ok(PromptStep::Title, title_prompt(&prepared), format!("Title: {HAPPY_TITLE}")),
        ok(PromptStep::Sections, sections_prompt(), bullets(&numbered("Topic", 30))),
        ok(PromptStep::Sections, sections_prompt(), bullets(&["Background", "Methods"])),
    ];
    let plan = vec![
        SectionSpec::new("Background", &[1], &["Overview"]),
        SectionSpec::new("Methods", &[2], &["Overview"]),
        SectionSpec::new("Discussion", &[3], &["Overview"]),
    ];
    steps.extend(tail_steps(&record, &prepared, HAPPY_TITLE, &plan));
    let r = run(&record, steps, RunConfig::default());
    let outcome = r.result.expect("run succeeds");
    assert_eq!(
        outcome.flags,
        vec![
            Flag::HeadingsRegenerated { requests: 2 },
            Flag::HeadingsPadded {
                parsed: 2,
                added: vec!["Discussion".into()]
            }
        ]
    );
}

/// Context overflow restarts the record with the first 100, then the first
/// 80 references.
pub fn overflow_truncation() {
    let record = record(130);
    let all = record.references.clone();
    let first100: Vec<_> = all[..100].to_vec();
    let first80: Vec<_> = all[..80].to_vec();
    let plan = vec![
        SectionSpec::new("Foundations", &[2, 79], &["Scope"]),
        SectionSpec::new("Methods", &[5, 7], &["Pipelines"]),
    ];
    let headings = ["Foundations", "Methods"];
    let mut steps = vec![
        failed(title_prompt(&all), ResponseStatus::ContextOverflow),
        failed(title_prompt(&first100), ResponseStatus::ContextOverflow),
        ok(PromptStep::Title, title_prompt(&first80), format!("Title: {HAPPY_TITLE}")),
        ok(PromptStep::Sections, sections_prompt(), bullets(&headings)),
    ];
    steps.extend(tail_steps(&record, &first80, HAPPY_TITLE, &plan));
    let r = run(&record, steps, happy_config());
    let outcome = r.result.expect("run succeeds");

    let texts = user_texts(&r.backend);
    assert!(texts[0].contains("[130] "));
    assert!(texts[1].contains("[100] ") && !texts[1].contains("[101] "));
    assert!(texts[2].contains("[80] ") && !texts[2].contains("[81] "));
    // the selection prompts see the truncated list too
    assert!(texts[5].contains("[80] ") && !texts[5].contains("[81] "));
    // every restart opens a fresh planning session
    assert_eq!(r.backend.requests()[1].len(), 1);
    assert_eq!(r.backend.requests()[2].len(), 1);

    assert_eq!(
        outcome.flags,
        vec![
            Flag::RecordRestarted {
                step: PromptStep::Title,
                cause: PrepFailure::ContextOverflow
            },
            Flag::RecordRestarted {
                step: PromptStep::Title,
                cause: PrepFailure::ContextOverflow
            },
            Flag::ReferencesTruncated { kept: 80, of: 130 },
        ]
    );
    // the final references section keeps every master entry
    assert_eq!(outcome.survey.references.len(), 130);
    assert_eq!(outcome.calls, r.backend.call_count());
}

/// A third overflow has nowhere left to go.
pub fn overflow_exhausted() {
    let record = record(130);
    let all = record.references.clone();
    let steps = vec![
        failed(title_prompt(&all), ResponseStatus::ContextOverflow),
        failed(title_prompt(&all[..100]), ResponseStatus::ContextOverflow),
        failed(title_prompt(&all[..80]), ResponseStatus::ContextOverflow),
    ];
    let r = run(&record, steps, happy_config());
    match r.result {
        Err(surveygen::pipeline::PipelineError::Unrecoverable { record_id, .. }) => assert_eq!(record_id, "fixture"),
        other => panic!("expected unrecoverable, got {other:?}"),
    }
    assert_eq!(r.backend.call_count(), 3);
}

/// Refusals switch to odd, then even master indices. The second refusal
/// here comes from a selection call, after planning had succeeded.
pub fn refusal_parity() {
    let record = record(10);
    let all = record.references.clone();
    let odd = select(&record, &[1, 3, 5, 7, 9]);
    let even = select(&record, &[2, 4, 6, 8, 10]);
    let headings = ["Foundations", "Methods"];
    let mut steps = vec![
        failed(title_prompt(&all), ResponseStatus::Refused),
        ok(PromptStep::Title, title_prompt(&odd), format!("Title: {HAPPY_TITLE}")),
        ok(PromptStep::Sections, sections_prompt(), bullets(&headings)),
        ok(PromptStep::Abstract, abstract_prompt(HAPPY_TITLE, &headings), long_abstract()),
        failed(select_prompt(&odd, HAPPY_TITLE, &headings, "Foundations"), ResponseStatus::Refused),
        ok(PromptStep::Title, title_prompt(&even), format!("Title: {HAPPY_TITLE}")),
        ok(PromptStep::Sections, sections_prompt(), bullets(&headings)),
    ];
    let plan = vec![
        SectionSpec::new("Foundations", &[2, 4], &["Scope"]),
        SectionSpec::new("Methods", &[6, 10], &["Pipelines"]),
    ];
    steps.extend(tail_steps(&record, &even, HAPPY_TITLE, &plan));
    let r = run(&record, steps, happy_config());
    let outcome = r.result.expect("run succeeds");

    let texts = user_texts(&r.backend);
    assert!(texts[1].contains("[1] ") && texts[1].contains("[9] ") && !texts[1].contains("[2] "));
    assert!(texts[5].contains("[2] ") && texts[5].contains("[10] ") && !texts[5].contains("[1] "));
    assert!(texts[8].contains(&format_references(&even).unwrap()));

    assert_eq!(
        outcome.flags,
        vec![
            Flag::RecordRestarted {
                step: PromptStep::Title,
                cause: PrepFailure::Refused
            },
            Flag::RecordRestarted {
                step: PromptStep::SelectRefs,
                cause: PrepFailure::Refused
            },
            Flag::ReferencesParity {
                parity: Parity::Even,
                kept: 5
            },
        ]
    );
    assert_eq!(outcome.calls, 7 + 1 + 2 + 2 + 2);
    // the two failed attempts charged only their successful calls
    assert_eq!(r.ledger.len(), outcome.calls - 2);
}

/// A selection reply with no usable citation falls back to the first
/// twenty prepared references.
pub fn empty_selection_fallback() {
    let record = record(25);
    let prepared = record.references.clone();
    let first20: Vec<usize> = (1..=20).collect();
    let headings = ["Foundations", "Methods"];
    let mut steps = vec![
        ok(PromptStep::Title, title_prompt(&prepared), format!("Title: {HAPPY_TITLE}")),
        ok(PromptStep::Sections, sections_prompt(), bullets(&headings)),
        ok(PromptStep::Abstract, abstract_prompt(HAPPY_TITLE, &headings), long_abstract()),
        ok(
            PromptStep::SelectRefs,
            select_prompt(&prepared, HAPPY_TITLE, &headings, "Foundations"),
            "None of these papers fit this section; also [99] is not in the list.",
        ),
        ok(
            PromptStep::SelectRefs,
            select_prompt(&prepared, HAPPY_TITLE, &headings, "Methods"),
            citation_reply(&record, &[21, 25]),
        ),
    ];
    let fallback = select(&record, &first20);
    let chosen = select(&record, &[21, 25]);
    steps.push(ok(
        PromptStep::Subsections,
        subsections_prompt(HAPPY_TITLE, &headings, "Foundations", &fallback),
        bullets(&["Scope"]),
    ));
    steps.push(ok(
        PromptStep::Subsections,
        subsections_prompt(HAPPY_TITLE, &headings, "Methods", &chosen),
        bullets(&["Pipelines"]),
    ));
    let full = OutlineText::with_subsections(&[("Foundations", vec!["Scope"]), ("Methods", vec!["Pipelines"])]).text();
    steps.push(ok(
        PromptStep::Content,
        content_prompt(HAPPY_TITLE, &full, "Foundations", "Scope", &fallback),
        content_reply("Scope", &fallback),
    ));
    steps.push(ok(
        PromptStep::Content,
        content_prompt(HAPPY_TITLE, &full, "Methods", "Pipelines", &chosen),
        content_reply("Pipelines", &chosen),
    ));
    let r = run(&record, steps, happy_config());
    let outcome = r.result.expect("run succeeds");

    let texts = user_texts(&r.backend);
    assert!(texts[5].contains("[20] ") && !texts[5].contains("[21] "));
    assert!(texts[6].contains("[21] ") && texts[6].contains("[25] ") && !texts[6].contains("[20] "));
    assert_eq!(outcome.outline.sections[0].selected_refs, first20);
    assert_eq!(outcome.flags, vec![Flag::SelectionFallback { section: 1, kept: 20 }]);
}
