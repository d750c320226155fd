//! Fixtures shared by the integration tests: records, expected prompts and
//! cassette scripts that mirror what the pipeline should send.
#![allow(dead_code)]

pub mod http_mock;
pub mod scenarios;

use std::sync::Arc;

use surveygen::corpus::{ReferenceEntry, SurveyRecord};
use surveygen::gateway::{Cassette, CassetteStep, Gateway, ReplayBackend, ResponseStatus, UsageLedger};
use surveygen::pipeline::{Pipeline, PipelineError, RecordOutcome, RunConfig};
use surveygen::prompts::{format_references, render, retry_prefix_title, OutlineText, PromptContext, PromptStep};

pub const SUBJECTS: [&str; 2] = ["Natural Language Processing", "Text Generation"];

pub fn record(n_refs: usize) -> SurveyRecord {
    let refs: Vec<String> = (1..=n_refs)
        .map(|i| format!("Reference paper {i} on automatic writing"))
        .collect();
    SurveyRecord::new(&SUBJECTS, &refs)
}

pub fn select(record: &SurveyRecord, indices: &[usize]) -> Vec<ReferenceEntry> {
    record
        .references
        .iter()
        .filter(|r| indices.contains(&r.index))
        .cloned()
        .collect()
}

/// Token usage charged per step in scripted cassettes.
pub fn tokens(step: PromptStep) -> (u64, u64) {
    match step {
        PromptStep::Title => (1200, 30),
        PromptStep::Sections => (1500, 40),
        PromptStep::Abstract => (900, 300),
        PromptStep::SelectRefs => (1300, 20),
        PromptStep::Subsections => (600, 50),
        PromptStep::Content => (800, 400),
    }
}

pub fn ok(step: PromptStep, prompt: String, reply: impl Into<String>) -> CassetteStep {
    let (i, o) = tokens(step);
    CassetteStep::ok(prompt, reply, i, o)
}

pub fn failed(prompt: String, status: ResponseStatus) -> CassetteStep {
    CassetteStep::failed(prompt, status)
}

fn ctx() -> PromptContext {
    PromptContext::new(&SUBJECTS)
}

fn block(refs: &[ReferenceEntry]) -> String {
    format_references(refs).expect("non-empty references")
}

pub fn title_prompt(prepared: &[ReferenceEntry]) -> String {
    let mut c = ctx();
    c.reference_block = Some(block(prepared));
    render(PromptStep::Title, &c).unwrap()
}

pub fn title_retry_prompt(prepared: &[ReferenceEntry]) -> String {
    let mut c = ctx();
    c.reference_block = Some(block(prepared));
    retry_prefix_title(&c).unwrap()
}

pub fn sections_prompt() -> String {
    render(PromptStep::Sections, &ctx()).unwrap()
}

fn outline(sections: &[&str]) -> String {
    OutlineText::sections_only(sections).text()
}

pub fn abstract_prompt(title: &str, sections: &[&str]) -> String {
    let mut c = ctx();
    c.title = Some(title.into());
    c.outline_block = Some(outline(sections));
    render(PromptStep::Abstract, &c).unwrap()
}

pub fn select_prompt(prepared: &[ReferenceEntry], title: &str, sections: &[&str], heading: &str) -> String {
    let mut c = ctx();
    c.title = Some(title.into());
    c.outline_block = Some(outline(sections));
    c.section_heading = Some(heading.into());
    c.reference_block = Some(block(prepared));
    render(PromptStep::SelectRefs, &c).unwrap()
}

pub fn subsections_prompt(title: &str, sections: &[&str], heading: &str, subset: &[ReferenceEntry]) -> String {
    let mut c = ctx();
    c.title = Some(title.into());
    c.outline_block = Some(outline(sections));
    c.section_heading = Some(heading.into());
    c.reference_subset_block = Some(block(subset));
    render(PromptStep::Subsections, &c).unwrap()
}

pub fn content_prompt(
    title: &str,
    full_outline: &str,
    heading: &str,
    subsection: &str,
    subset: &[ReferenceEntry],
) -> String {
    let mut c = ctx();
    c.title = Some(title.into());
    c.outline_block = Some(full_outline.into());
    c.section_heading = Some(heading.into());
    c.subsection_heading = Some(subsection.into());
    c.reference_subset_block = Some(block(subset));
    render(PromptStep::Content, &c).unwrap()
}

pub fn bullets<S: AsRef<str>>(items: &[S]) -> String {
    let lines: Vec<String> = items.iter().map(|s| format!("- {}", s.as_ref())).collect();
    format!("Sure, here it is:\n{}", lines.join("\n"))
}

pub fn citation_reply(record: &SurveyRecord, indices: &[usize]) -> String {
    indices
        .iter()
        .map(|&k| format!("- [{k}] {}", record.references[k - 1].title))
        .collect::<Vec<_>>()
        .join("\n")
}

/// An abstract comfortably inside the accepted word range.
pub fn long_abstract() -> String {
    let sentence = "This survey reviews how large language models can draft structured literature reviews step by step.";
    vec![sentence; 15].join(" ")
}

#[derive(Debug, Clone)]
pub struct SectionSpec {
    pub heading: String,
    pub selected: Vec<usize>,
    pub subsections: Vec<String>,
}

impl SectionSpec {
    pub fn new(heading: &str, selected: &[usize], subsections: &[&str]) -> Self {
        Self {
            heading: heading.into(),
            selected: selected.to_vec(),
            subsections: subsections.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn content_reply(subsection: &str, subset: &[ReferenceEntry]) -> String {
    let cites: Vec<String> = subset.iter().map(|r| format!("[{}]", r.index)).collect();
    format!(
        "{subsection}\nPrior work on {} is summarised here {}.\n\nA second paragraph closes the subsection.",
        subsection.to_lowercase(),
        cites.join(", ")
    )
}

/// Steps 3 to 6 for an already planned outline, all succeeding.
pub fn tail_steps(record: &SurveyRecord, prepared: &[ReferenceEntry], title: &str, plan: &[SectionSpec]) -> Vec<CassetteStep> {
    let headings: Vec<&str> = plan.iter().map(|s| s.heading.as_str()).collect();
    let mut steps = vec![ok(PromptStep::Abstract, abstract_prompt(title, &headings), long_abstract())];
    for s in plan {
        steps.push(ok(
            PromptStep::SelectRefs,
            select_prompt(prepared, title, &headings, &s.heading),
            citation_reply(record, &s.selected),
        ));
    }
    for s in plan {
        let subset = select(record, &s.selected);
        steps.push(ok(
            PromptStep::Subsections,
            subsections_prompt(title, &headings, &s.heading, &subset),
            bullets(&s.subsections),
        ));
    }
    let pairs: Vec<(&str, Vec<&str>)> = plan
        .iter()
        .map(|s| (s.heading.as_str(), s.subsections.iter().map(String::as_str).collect()))
        .collect();
    let full = OutlineText::with_subsections(&pairs).text();
    for s in plan {
        let subset = select(record, &s.selected);
        for sub in &s.subsections {
            steps.push(ok(
                PromptStep::Content,
                content_prompt(title, &full, &s.heading, sub, &subset),
                content_reply(sub, &subset),
            ));
        }
    }
    steps
}

pub const HAPPY_TITLE: &str = "Step-by-Step Survey Writing with Language Models";

pub fn happy_plan() -> Vec<SectionSpec> {
    vec![
        SectionSpec::new("Foundations of Survey Generation", &[1, 2, 4], &["Problem Definition", "Prompt Design"]),
        SectionSpec::new("Evaluation of Generated Surveys", &[3, 5, 6], &["Automatic Metrics", "Human Judgement"]),
    ]
}

/// Two sections with two subsections each over six references.
pub fn happy_record() -> SurveyRecord {
    record(6)
}

pub fn happy_config() -> RunConfig {
    RunConfig {
        heading_hard_range: (2, 25),
        ..RunConfig::default()
    }
}

pub fn happy_steps(record: &SurveyRecord) -> Vec<CassetteStep> {
    let prepared = record.references.clone();
    let plan = happy_plan();
    let headings: Vec<&str> = plan.iter().map(|s| s.heading.as_str()).collect();
    let mut steps = vec![
        ok(PromptStep::Title, title_prompt(&prepared), format!("Title: {HAPPY_TITLE}")),
        ok(PromptStep::Sections, sections_prompt(), bullets(&headings)),
    ];
    steps.extend(tail_steps(record, &prepared, HAPPY_TITLE, &plan));
    steps
}

pub struct Run {
    pub result: Result<RecordOutcome, PipelineError>,
    pub backend: Arc<ReplayBackend>,
    pub ledger: UsageLedger,
}

pub fn run(record: &SurveyRecord, steps: Vec<CassetteStep>, config: RunConfig) -> Run {
    let backend = Arc::new(ReplayBackend::new(Cassette::new(steps)));
    let gateway = Gateway::new().with_backend("replay", backend.clone());
    let pipeline = Pipeline::new(&gateway, "replay", config).unwrap();
    let ledger = UsageLedger::new(Default::default());
    let result = pipeline.run(record, "fixture", &ledger);
    Run {
        result,
        backend,
        ledger,
    }
}

/// Last user message of every request the backend received.
pub fn user_texts(backend: &ReplayBackend) -> Vec<String> {
    backend
        .requests()
        .iter()
        .map(|r| r.last().expect("non-empty request").text.clone())
        .collect()
}
