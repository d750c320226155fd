//! Six-step survey generation.
//!
//! Phase one plans the survey in a single conversation: a title guess from
//! subjects and references, then first-level headings as a follow-up turn,
//! then an abstract from the title and outline. Phase two works per section
//! with fresh single-turn sessions: choose the section's references, write
//! its second-level headings, and finally write each subsection's content
//! against the full two-level outline and the section's reference subset.
//!
//! Every fallback that changes the nominal output is recorded as a [`Flag`].

pub mod batch;
pub mod survey;

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ReferenceEntry, SurveyRecord};
use crate::gateway::{ChatSession, Gateway, GatewayError, Pricing, SendError, UsageLedger};
use crate::parse::{
    cited_indices, extract_bullets, extract_citations, extract_title, validate_count,
    CitationSelection, CountCheck,
};
use crate::prompts::{format_references, OutlineText, PromptContext, PromptError, PromptSet, PromptStep};

pub use survey::{assemble_markdown, parse_markdown, BodyEntry, GeneratedSurvey, SurveyDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Accepted number of first-level headings, inclusive.
    pub heading_hard_range: (usize, usize),
    /// Accepted number of second-level headings per section, inclusive.
    pub subsection_hard_range: (usize, usize),
    /// Reference counts kept after successive context overflows.
    pub truncation_ladder: Vec<usize>,
    /// Extra title requests after a reply without the "Title:" marker.
    pub title_retry_limit: usize,
    /// Total section-heading requests before the count is clamped.
    pub regeneration_limit: usize,
    /// References used for a section when selection yields none.
    pub fallback_ref_count: usize,
    /// Accept the first reply line as title when every retry failed.
    pub degrade_title: bool,
    /// Abstract length outside this many words is flagged, not retried.
    pub abstract_word_range: (usize, usize),
    pub pricing: Pricing,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            heading_hard_range: (3, 25),
            subsection_hard_range: (1, 10),
            truncation_ladder: vec![100, 80],
            title_retry_limit: 1,
            regeneration_limit: 2,
            fallback_ref_count: 20,
            degrade_title: true,
            abstract_word_range: (200, 500),
            pricing: Pricing::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if self.heading_hard_range.0 > self.heading_hard_range.1 {
            return bad("heading_hard_range min exceeds max");
        }
        if self.subsection_hard_range.0 > self.subsection_hard_range.1 {
            return bad("subsection_hard_range min exceeds max");
        }
        if self.heading_hard_range.1 == 0 || self.subsection_hard_range.1 == 0 {
            return bad("heading ranges must allow at least one heading");
        }
        if self.truncation_ladder.windows(2).any(|w| w[0] <= w[1]) {
            return bad("truncation_ladder must be strictly decreasing");
        }
        if self.truncation_ladder.contains(&0) {
            return bad("truncation_ladder entries must be positive");
        }
        if self.fallback_ref_count == 0 {
            return bad("fallback_ref_count must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepFailure {
    ContextOverflow,
    Refused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Odd,
    Even,
}

/// A fallback that changed what the pipeline would nominally produce.
/// Section and subsection numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    RecordRestarted { step: PromptStep, cause: PrepFailure },
    ReferencesTruncated { kept: usize, of: usize },
    ReferencesParity { parity: Parity, kept: usize },
    TitleRetried { retries: usize },
    TitleDegraded { title: String },
    HeadingsRegenerated { requests: usize },
    HeadingsClamped { parsed: usize, kept: usize },
    HeadingsPadded { parsed: usize, added: Vec<String> },
    AbstractLength { words: usize },
    SelectionFallback { section: usize, kept: usize },
    SubsectionsRegenerated { section: usize },
    SubsectionsClamped { section: usize, parsed: usize, kept: usize },
    SubsectionSynthesized { section: usize },
    ContentSubsetHalved { section: usize, subsection: usize, kept: usize },
    ContentEmpty { section: usize, subsection: usize },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("record {record_id}: no reference preparation left to try ({reason})")]
    Unrecoverable { record_id: String, reason: String },
    #[error("record {record_id}: backend failed during {step}: {source}")]
    Backend {
        record_id: String,
        step: PromptStep,
        #[source]
        source: SendError,
    },
    #[error("record {record_id}: no usable title after {attempts} requests")]
    TitleFailed { record_id: String, attempts: usize },
    #[error("record {record_id}: {source}")]
    Prompt {
        record_id: String,
        #[source]
        source: PromptError,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionPlan {
    pub heading: String,
    pub selected_refs: Vec<usize>,
    pub subsections: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlinePlan {
    pub title: String,
    pub sections: Vec<SectionPlan>,
    pub abstract_text: String,
}

impl OutlinePlan {
    pub fn sections_only(&self) -> OutlineText {
        let headings: Vec<&str> = self.sections.iter().map(|s| s.heading.as_str()).collect();
        OutlineText::sections_only(&headings)
    }

    pub fn with_subsections(&self) -> OutlineText {
        let pairs: Vec<(&str, Vec<&str>)> = self
            .sections
            .iter()
            .map(|s| {
                (
                    s.heading.as_str(),
                    s.subsections.iter().map(String::as_str).collect(),
                )
            })
            .collect();
        OutlineText::with_subsections(&pairs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordOutcome {
    pub survey: GeneratedSurvey,
    pub outline: OutlinePlan,
    pub flags: Vec<Flag>,
    /// Requests issued, including failed and restarted ones.
    pub calls: usize,
}

/// Narrows the reference list after refusals and context overflows.
///
/// Overflows walk down `ladder` (keep the first N references); the first
/// refusal keeps odd master indices, the second even ones. Truncation is
/// applied before the parity filter.
pub fn prepare_references(
    entries: &[ReferenceEntry],
    failures: &[PrepFailure],
    ladder: &[usize],
    record_id: &str,
) -> Result<Vec<ReferenceEntry>, PipelineError> {
    let unrecoverable = |reason: String| PipelineError::Unrecoverable {
        record_id: record_id.to_string(),
        reason,
    };
    if entries.is_empty() {
        return Err(unrecoverable("record has no references".into()));
    }
    let overflows = failures
        .iter()
        .filter(|f| **f == PrepFailure::ContextOverflow)
        .count();
    let refusals = failures.len() - overflows;
    if overflows > ladder.len() {
        return Err(unrecoverable(format!(
            "context overflow persisted through {} truncations",
            ladder.len()
        )));
    }
    if refusals > 2 {
        return Err(unrecoverable(
            "refused with odd and even reference subsets".into(),
        ));
    }

    let mut kept = entries.to_vec();
    if overflows > 0 {
        kept.truncate(ladder[overflows - 1]);
    }
    match refusals {
        1 => kept.retain(|e| e.index % 2 == 1),
        2 => kept.retain(|e| e.index % 2 == 0),
        _ => {}
    }
    if kept.is_empty() {
        return Err(unrecoverable("reference filtering left nothing".into()));
    }
    Ok(kept)
}

enum StepFailure {
    /// Refusal or overflow that a narrower reference list may avoid.
    Restart(PromptStep, PrepFailure),
    Fatal(PipelineError),
}

impl From<PipelineError> for StepFailure {
    fn from(e: PipelineError) -> Self {
        StepFailure::Fatal(e)
    }
}

pub struct Pipeline<'g> {
    gateway: &'g Gateway,
    backend_id: String,
    prompts: PromptSet,
    config: RunConfig,
}

impl<'g> Pipeline<'g> {
    pub fn new(
        gateway: &'g Gateway,
        backend_id: impl Into<String>,
        config: RunConfig,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self {
            gateway,
            backend_id: backend_id.into(),
            prompts: PromptSet::default(),
            config,
        })
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn pricing(&self) -> Pricing {
        self.config.pricing
    }

    /// Runs all six steps for one record, restarting with a narrower
    /// reference list whenever the backend refuses or overflows in a step
    /// that sees the full list.
    pub fn run(
        &self,
        record: &SurveyRecord,
        record_id: &str,
        ledger: &UsageLedger,
    ) -> Result<RecordOutcome, PipelineError> {
        self.run_counted(record, record_id, ledger).0
    }

    /// Like [`Pipeline::run`], also returning the number of requests issued
    /// so failed records can be accounted for.
    pub fn run_counted(
        &self,
        record: &SurveyRecord,
        record_id: &str,
        ledger: &UsageLedger,
    ) -> (Result<RecordOutcome, PipelineError>, usize) {
        let mut failures = Vec::new();
        let mut restarts = Vec::new();
        let mut calls = 0;
        loop {
            let prepared = match prepare_references(
                &record.references,
                &failures,
                &self.config.truncation_ladder,
                record_id,
            ) {
                Ok(p) => p,
                Err(e) => return (Err(e), calls),
            };
            let mut run = RecordRun::new(self, record, record_id, prepared, ledger);
            run.note_preparation(&failures);
            let result = run.execute();
            calls += run.calls;
            match result {
                Ok((survey, outline)) => {
                    let mut flags = restarts;
                    flags.extend(run.flags);
                    let outcome = RecordOutcome {
                        survey,
                        outline,
                        flags,
                        calls,
                    };
                    return (Ok(outcome), calls);
                }
                Err(StepFailure::Restart(step, cause)) => {
                    log::warn!("record {record_id}: {cause:?} at {step}, narrowing references");
                    failures.push(cause);
                    restarts.push(Flag::RecordRestarted { step, cause });
                }
                Err(StepFailure::Fatal(e)) => return (Err(e), calls),
            }
        }
    }
}

/// State for one attempt at one record.
struct RecordRun<'p, 'g> {
    pipeline: &'p Pipeline<'g>,
    record: &'p SurveyRecord,
    record_id: String,
    prepared: Vec<ReferenceEntry>,
    ledger: &'p UsageLedger,
    flags: Vec<Flag>,
    calls: usize,
}

impl<'p, 'g> RecordRun<'p, 'g> {
    fn new(
        pipeline: &'p Pipeline<'g>,
        record: &'p SurveyRecord,
        record_id: &str,
        prepared: Vec<ReferenceEntry>,
        ledger: &'p UsageLedger,
    ) -> Self {
        Self {
            pipeline,
            record,
            record_id: record_id.to_string(),
            prepared,
            ledger,
            flags: Vec::new(),
            calls: 0,
        }
    }

    fn config(&self) -> &RunConfig {
        &self.pipeline.config
    }

    fn note_preparation(&mut self, failures: &[PrepFailure]) {
        let overflows = failures
            .iter()
            .filter(|f| **f == PrepFailure::ContextOverflow)
            .count();
        let refusals = failures.len() - overflows;
        if overflows > 0 {
            let limit = self.config().truncation_ladder[overflows - 1];
            self.flags.push(Flag::ReferencesTruncated {
                kept: limit.min(self.record.references.len()),
                of: self.record.references.len(),
            });
        }
        if refusals > 0 {
            let parity = if refusals == 1 { Parity::Odd } else { Parity::Even };
            self.flags.push(Flag::ReferencesParity {
                parity,
                kept: self.prepared.len(),
            });
        }
    }

    fn open(&self) -> Result<ChatSession, StepFailure> {
        Ok(self
            .pipeline
            .gateway
            .open_session(&self.pipeline.backend_id, None)
            .map_err(PipelineError::from)?)
    }

    fn render(&self, step: PromptStep, ctx: &PromptContext) -> Result<String, StepFailure> {
        self.pipeline
            .prompts
            .render(step, ctx)
            .map_err(|source| self.prompt_error(source))
    }

    fn prompt_error(&self, source: PromptError) -> StepFailure {
        StepFailure::Fatal(PipelineError::Prompt {
            record_id: self.record_id.clone(),
            source,
        })
    }

    /// One request; refusals and overflows come back as `Ok(None)` when the
    /// caller handles them locally.
    fn send(
        &mut self,
        session: &mut ChatSession,
        text: &str,
        step: PromptStep,
    ) -> Result<String, (PromptStep, SendError)> {
        self.calls += 1;
        session
            .send(text, self.ledger, step.name())
            .map(|r| r.text)
            .map_err(|e| (step, e))
    }

    fn escalate(&self, (step, error): (PromptStep, SendError)) -> StepFailure {
        match error {
            SendError::Refused(_) => StepFailure::Restart(step, PrepFailure::Refused),
            SendError::ContextOverflow(_) => StepFailure::Restart(step, PrepFailure::ContextOverflow),
            source => StepFailure::Fatal(PipelineError::Backend {
                record_id: self.record_id.clone(),
                step,
                source,
            }),
        }
    }

    fn base_context(&self) -> PromptContext {
        PromptContext::new(&self.record.subjects)
    }

    fn reference_block(&self, entries: &[ReferenceEntry]) -> Result<String, StepFailure> {
        format_references(entries).map_err(|source| self.prompt_error(source))
    }

    fn execute(&mut self) -> Result<(GeneratedSurvey, OutlinePlan), StepFailure> {
        let mut planning = self.open()?;
        let title = self.step1_title(&mut planning)?;
        let headings = self.step2_sections(&mut planning)?;
        drop(planning);

        let outline = OutlineText::sections_only(&headings);
        let abstract_text = self.step3_abstract(&title, &outline)?;

        let mut selections = Vec::with_capacity(headings.len());
        for (i, heading) in headings.iter().enumerate() {
            selections.push(self.step4_select(&title, &outline, i + 1, heading)?);
        }

        let mut sections = Vec::with_capacity(headings.len());
        for (i, (heading, selection)) in headings.iter().zip(&selections).enumerate() {
            let subset = self.subset(selection);
            let subsections = self.step5_subsections(&title, &outline, i + 1, heading, &subset)?;
            sections.push(SectionPlan {
                heading: heading.clone(),
                selected_refs: selection.indices.clone(),
                subsections,
            });
        }

        let plan = OutlinePlan {
            title,
            sections,
            abstract_text,
        };
        let full_outline = plan.with_subsections();

        let mut body = Vec::new();
        let mut cited = BTreeSet::new();
        for (i, section) in plan.sections.iter().enumerate() {
            body.push(BodyEntry::section(section.heading.clone()));
            let subset = self.subset(&CitationSelection {
                indices: section.selected_refs.clone(),
            });
            for (j, sub) in section.subsections.iter().enumerate() {
                let content = self.step6_content(
                    &plan.title,
                    &full_outline,
                    (i + 1, j + 1),
                    &section.heading,
                    sub,
                    &subset,
                )?;
                cited.extend(cited_indices(&content, self.record.references.len()));
                body.push(BodyEntry::subsection(sub.clone(), content));
            }
        }

        let survey = GeneratedSurvey {
            title: plan.title.clone(),
            abstract_text: plan.abstract_text.clone(),
            body,
            cited_indices: cited,
            references: self.record.references.clone(),
        };
        Ok((survey, plan))
    }

    /// Prepared references whose master index was selected, in master order.
    fn subset(&self, selection: &CitationSelection) -> Vec<ReferenceEntry> {
        let chosen: HashSet<usize> = selection.indices.iter().copied().collect();
        self.prepared
            .iter()
            .filter(|e| chosen.contains(&e.index))
            .cloned()
            .collect()
    }

    /// Step 1: guess a title. Format failures are retried in the same
    /// session with the correction prefix.
    fn step1_title(&mut self, session: &mut ChatSession) -> Result<String, StepFailure> {
        let mut ctx = self.base_context();
        ctx.reference_block = Some(self.reference_block(&self.prepared.clone())?);
        let first = self.render(PromptStep::Title, &ctx)?;
        let retry = self
            .pipeline
            .prompts
            .retry_prefix_title(&ctx)
            .map_err(|source| self.prompt_error(source))?;

        let mut last_reply = String::new();
        for attempt in 0..=self.config().title_retry_limit {
            let prompt = if attempt == 0 { &first } else { &retry };
            last_reply = self
                .send(session, prompt, PromptStep::Title)
                .map_err(|e| self.escalate(e))?;
            if let Ok(parsed) = extract_title(&last_reply) {
                if attempt > 0 {
                    self.flags.push(Flag::TitleRetried { retries: attempt });
                }
                return Ok(parsed.title);
            }
        }

        let attempts = self.config().title_retry_limit + 1;
        if self.config().degrade_title {
            if let Some(title) = first_meaningful_line(&last_reply) {
                self.flags.push(Flag::TitleDegraded {
                    title: title.clone(),
                });
                return Ok(title);
            }
        }
        Err(StepFailure::Fatal(PipelineError::TitleFailed {
            record_id: self.record_id.clone(),
            attempts,
        }))
    }

    /// Step 2: first-level headings, asked as a follow-up in the title
    /// session and re-asked while the count is out of range.
    fn step2_sections(&mut self, session: &mut ChatSession) -> Result<Vec<String>, StepFailure> {
        let prompt = self.render(PromptStep::Sections, &self.base_context())?;
        let (min, max) = self.config().heading_hard_range;
        let requests = self.config().regeneration_limit.max(1);

        let mut items = Vec::new();
        for attempt in 1..=requests {
            let reply = self
                .send(session, &prompt, PromptStep::Sections)
                .map_err(|e| self.escalate(e))?;
            let parsed = extract_bullets(&reply);
            let accepted = validate_count(&parsed, min, max) == CountCheck::Accept;
            items = parsed.items;
            if accepted {
                if attempt > 1 {
                    self.flags.push(Flag::HeadingsRegenerated { requests: attempt });
                }
                return Ok(items);
            }
        }
        if requests > 1 {
            self.flags.push(Flag::HeadingsRegenerated { requests });
        }

        let parsed = items.len();
        if parsed > max {
            items.truncate(max);
            self.flags.push(Flag::HeadingsClamped { parsed, kept: max });
        } else if parsed < min {
            let added = filler_headings(&items, min - parsed);
            items.extend(added.iter().cloned());
            self.flags.push(Flag::HeadingsPadded { parsed, added });
        }
        Ok(items)
    }

    /// Step 3: abstract from title and first-level outline.
    fn step3_abstract(&mut self, title: &str, outline: &OutlineText) -> Result<String, StepFailure> {
        let mut ctx = self.base_context();
        ctx.title = Some(title.to_string());
        ctx.outline_block = Some(outline.text());
        let prompt = self.render(PromptStep::Abstract, &ctx)?;
        let mut session = self.open()?;
        let reply = self
            .send(&mut session, &prompt, PromptStep::Abstract)
            .map_err(|e| self.escalate(e))?;

        let text = strip_abstract_label(&reply);
        let words = text.split_whitespace().count();
        let (lo, hi) = self.config().abstract_word_range;
        if words < lo || words > hi {
            self.flags.push(Flag::AbstractLength { words });
        }
        Ok(text)
    }

    /// Step 4: pick the references relevant to one section.
    fn step4_select(
        &mut self,
        title: &str,
        outline: &OutlineText,
        section: usize,
        heading: &str,
    ) -> Result<CitationSelection, StepFailure> {
        let mut ctx = self.base_context();
        ctx.title = Some(title.to_string());
        ctx.outline_block = Some(outline.text());
        ctx.section_heading = Some(heading.to_string());
        ctx.reference_block = Some(self.reference_block(&self.prepared.clone())?);
        let prompt = self.render(PromptStep::SelectRefs, &ctx)?;
        let mut session = self.open()?;
        let reply = self
            .send(&mut session, &prompt, PromptStep::SelectRefs)
            .map_err(|e| self.escalate(e))?;

        let available: HashSet<usize> = self.prepared.iter().map(|e| e.index).collect();
        let mut selection = extract_citations(&reply, self.record.references.len());
        selection.indices.retain(|k| available.contains(k));
        if selection.is_empty() {
            let kept: Vec<usize> = self
                .prepared
                .iter()
                .take(self.config().fallback_ref_count)
                .map(|e| e.index)
                .collect();
            self.flags.push(Flag::SelectionFallback {
                section,
                kept: kept.len(),
            });
            selection.indices = kept;
        }
        Ok(selection)
    }

    /// Step 5: second-level headings for one section, with one regeneration.
    fn step5_subsections(
        &mut self,
        title: &str,
        outline: &OutlineText,
        section: usize,
        heading: &str,
        subset: &[ReferenceEntry],
    ) -> Result<Vec<String>, StepFailure> {
        let mut ctx = self.base_context();
        ctx.title = Some(title.to_string());
        ctx.outline_block = Some(outline.text());
        ctx.section_heading = Some(heading.to_string());
        ctx.reference_subset_block = Some(self.reference_block(subset)?);
        let prompt = self.render(PromptStep::Subsections, &ctx)?;
        let (min, max) = self.config().subsection_hard_range;

        let mut items = Vec::new();
        for attempt in 0..2 {
            let mut session = self.open()?;
            items = match self.send(&mut session, &prompt, PromptStep::Subsections) {
                Ok(reply) => extract_bullets(&reply).items,
                Err((_, SendError::Refused(_) | SendError::ContextOverflow(_))) => Vec::new(),
                Err(e) => return Err(self.escalate(e)),
            };
            if (min..=max).contains(&items.len()) {
                return Ok(items);
            }
            if attempt == 0 {
                self.flags.push(Flag::SubsectionsRegenerated { section });
            }
        }

        let parsed = items.len();
        if parsed == 0 {
            self.flags.push(Flag::SubsectionSynthesized { section });
            return Ok(vec![heading.to_string()]);
        }
        if parsed > max {
            items.truncate(max);
            self.flags.push(Flag::SubsectionsClamped {
                section,
                parsed,
                kept: max,
            });
        }
        Ok(items)
    }

    /// Step 6: content of one subsection. A refusal or overflow is retried
    /// once with the first half of the subset, then the content is left
    /// empty.
    fn step6_content(
        &mut self,
        title: &str,
        outline: &OutlineText,
        (section, subsection): (usize, usize),
        section_heading: &str,
        subsection_heading: &str,
        subset: &[ReferenceEntry],
    ) -> Result<String, StepFailure> {
        let mut ctx = self.base_context();
        ctx.title = Some(title.to_string());
        ctx.outline_block = Some(outline.text());
        ctx.section_heading = Some(section_heading.to_string());
        ctx.subsection_heading = Some(subsection_heading.to_string());

        let mut refs = subset.to_vec();
        for attempt in 0..2 {
            ctx.reference_subset_block = Some(self.reference_block(&refs)?);
            let prompt = self.render(PromptStep::Content, &ctx)?;
            let mut session = self.open()?;
            match self.send(&mut session, &prompt, PromptStep::Content) {
                Ok(reply) => return Ok(strip_repeated_heading(&reply, subsection_heading)),
                Err((_, SendError::Refused(_) | SendError::ContextOverflow(_))) if attempt == 0 => {
                    refs.truncate(refs.len().div_ceil(2));
                    self.flags.push(Flag::ContentSubsetHalved {
                        section,
                        subsection,
                        kept: refs.len(),
                    });
                }
                Err((_, SendError::Refused(_) | SendError::ContextOverflow(_))) => break,
                Err(e) => return Err(self.escalate(e)),
            }
        }
        self.flags.push(Flag::ContentEmpty {
            section,
            subsection,
        });
        Ok(String::new())
    }
}

fn filler_headings(existing: &[String], needed: usize) -> Vec<String> {
    let taken: HashSet<String> = existing.iter().map(|h| h.to_lowercase()).collect();
    let mut out = Vec::new();
    let mut extra = 0;
    for candidate in ["Discussion", "Conclusion", "Future Directions"]
        .into_iter()
        .map(String::from)
        .chain(std::iter::from_fn(|| {
            extra += 1;
            Some(format!("Further Topics {extra}"))
        }))
    {
        if out.len() == needed {
            break;
        }
        if !taken.contains(&candidate.to_lowercase()) {
            out.push(candidate);
        }
    }
    out
}

const EDGE_DECORATION: &[char] = &[
    '*', '_', '#', '>', '"', '\'', '“', '”', '‘', '’', '`', ' ', '\t',
];

fn first_meaningful_line(reply: &str) -> Option<String> {
    reply
        .lines()
        .map(|l| l.trim_matches(EDGE_DECORATION).trim())
        .find(|l| !l.is_empty())
        .map(str::to_string)
}

fn abstract_label() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^[\s#*_]*abstract[\s*_]*[:：.]?[\s*_]*").unwrap())
}

/// Drops a leading "Abstract" label, on its own line or before the text.
fn strip_abstract_label(reply: &str) -> String {
    let trimmed = reply.trim();
    let stripped = match abstract_label().find(trimmed) {
        // "Abstracts of ..." is prose, not a label
        Some(m) if !trimmed[m.end()..].starts_with(|c: char| c.is_alphanumeric()) || m.as_str().contains([':', '：', '\n']) => {
            trimmed[m.end()..].trim()
        }
        _ => trimmed,
    };
    if stripped.is_empty() {
        trimmed.to_string()
    } else {
        stripped.to_string()
    }
}

fn heading_key(line: &str) -> String {
    static NUM: OnceLock<Regex> = OnceLock::new();
    let num = NUM.get_or_init(|| Regex::new(r"^\d+(?:\.\d+)*\.?\s*").unwrap());
    let t = line.trim().trim_matches(EDGE_DECORATION);
    let t = num.replace(t, "");
    t.trim()
        .trim_end_matches(':')
        .trim_matches(EDGE_DECORATION)
        .to_lowercase()
}

/// Removes a first line that only repeats the subsection heading.
fn strip_repeated_heading(reply: &str, heading: &str) -> String {
    let text = reply.trim();
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if heading_key(first) == heading_key(heading) => {
            lines.collect::<Vec<_>>().join("\n").trim().to_string()
        }
        _ => text.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(n: usize) -> Vec<ReferenceEntry> {
        (1..=n).map(|i| ReferenceEntry::new(i, format!("Paper {i}"))).collect()
    }

    fn indices(entries: &[ReferenceEntry]) -> Vec<usize> {
        entries.iter().map(|e| e.index).collect()
    }

    #[test]
    fn preparation_ladder_and_parity() {
        let ladder = [100, 80];
        assert_eq!(prepare_references(&refs(10), &[], &ladder, "r").unwrap(), refs(10));

        let p = prepare_references(&refs(130), &[PrepFailure::ContextOverflow], &ladder, "r").unwrap();
        assert_eq!(indices(&p), (1..=100).collect::<Vec<_>>());
        let p = prepare_references(
            &refs(130),
            &[PrepFailure::ContextOverflow, PrepFailure::ContextOverflow],
            &ladder,
            "r",
        )
        .unwrap();
        assert_eq!(p.len(), 80);

        let p = prepare_references(&refs(10), &[PrepFailure::Refused], &ladder, "r").unwrap();
        assert_eq!(indices(&p), vec![1, 3, 5, 7, 9]);
        let p = prepare_references(&refs(10), &[PrepFailure::Refused; 2], &ladder, "r").unwrap();
        assert_eq!(indices(&p), vec![2, 4, 6, 8, 10]);

        // truncate first, then filter
        let p = prepare_references(
            &refs(130),
            &[PrepFailure::Refused, PrepFailure::ContextOverflow],
            &ladder,
            "r",
        )
        .unwrap();
        assert_eq!(indices(&p), (1..=100).step_by(2).collect::<Vec<_>>());
    }

    #[test]
    fn preparation_exhaustion() {
        let ladder = [100, 80];
        let err = prepare_references(&refs(10), &[PrepFailure::ContextOverflow; 3], &ladder, "rec-9")
            .unwrap_err();
        assert!(matches!(err, PipelineError::Unrecoverable { ref record_id, .. } if record_id == "rec-9"));
        assert!(prepare_references(&refs(10), &[PrepFailure::Refused; 3], &ladder, "r").is_err());
        assert!(prepare_references(&refs(1), &[PrepFailure::Refused; 2], &ladder, "r").is_err());
        assert!(prepare_references(&[], &[], &ladder, "r").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig {
            truncation_ladder: vec![80, 100],
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RunConfig {
            heading_hard_range: (5, 3),
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn abstract_labels() {
        for reply in [
            "Abstract:\nThe para.",
            "Abstract\n\nThe para.",
            "**Abstract:** The para.",
            "ABSTRACT: The para.",
            "## Abstract\nThe para.",
            "The para.",
        ] {
            assert_eq!(strip_abstract_label(reply), "The para.", "{reply:?}");
        }
        assert_eq!(
            strip_abstract_label("Abstracts of papers are useful."),
            "Abstracts of papers are useful."
        );
        assert_eq!(strip_abstract_label("Abstract:"), "Abstract:");
    }

    #[test]
    fn repeated_heading_is_stripped() {
        for reply in [
            "Background\nBody text [3].",
            "### 1.1 Background\nBody text [3].",
            "**Background:**\n\nBody text [3].",
            "\"Background\"\nBody text [3].",
        ] {
            assert_eq!(strip_repeated_heading(reply, "Background"), "Body text [3].", "{reply:?}");
        }
        assert_eq!(
            strip_repeated_heading("Background matters.\nMore.", "Background"),
            "Background matters.\nMore."
        );
    }

    #[test]
    fn fillers_skip_existing() {
        assert_eq!(filler_headings(&["Discussion".into()], 1), vec!["Conclusion"]);
        assert_eq!(
            filler_headings(&[], 4),
            vec!["Discussion", "Conclusion", "Future Directions", "Further Topics 1"]
        );
    }

    #[test]
    fn degraded_title_line() {
        assert_eq!(
            first_meaningful_line("\n  **\"Deep Learning Survey\"**  \nmore").as_deref(),
            Some("Deep Learning Survey")
        );
    }
}
