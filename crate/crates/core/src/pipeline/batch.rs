//! Running the pipeline over many records and summarising the run.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Flag, Pipeline, RecordOutcome};
use crate::corpus::SurveyRecord;
use crate::gateway::UsageLedger;

pub struct BatchItem<'a> {
    pub id: String,
    pub record: &'a SurveyRecord,
}

pub struct RecordResult {
    pub id: String,
    pub outcome: Result<RecordOutcome, String>,
    /// Requests issued for this record, failed ones included.
    pub calls: usize,
    pub ledger: UsageLedger,
}

/// Runs every record, at most `parallel` at a time. Results come back in
/// input order whatever the completion order was. A failing record never
/// stops the others.
pub fn run_batch(pipeline: &Pipeline<'_>, items: &[BatchItem<'_>], parallel: usize) -> Vec<RecordResult> {
    let pricing = pipeline.pricing();
    let run_one = |item: &BatchItem<'_>| {
        let ledger = UsageLedger::new(pricing);
        let (outcome, calls) = pipeline.run_counted(item.record, &item.id, &ledger);
        let outcome = outcome.map_err(|e| e.to_string());
        if let Err(e) = &outcome {
            log::error!("skipping record {}: {e}", item.id);
        }
        RecordResult {
            id: item.id.clone(),
            outcome,
            calls,
            ledger,
        }
    };

    let workers = parallel.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(run_one).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RecordResult>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let result = run_one(item);
                slots.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every record produces a result"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordReport {
    pub id: String,
    pub status: RecordStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub flags: Vec<Flag>,
    pub calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// True when any call's usage was estimated rather than reported.
    pub usage_estimated: bool,
    pub cost_rmb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<RecordReport>,
    pub skipped: Vec<String>,
    pub total_calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_rmb: f64,
}

impl RunReport {
    pub fn from_results(results: &[RecordResult]) -> Self {
        let total = UsageLedger::new(
            results
                .first()
                .map(|r| r.ledger.pricing())
                .unwrap_or_default(),
        );
        let mut records = Vec::with_capacity(results.len());
        for r in results {
            total.absorb(&r.ledger);
            let (status, error, flags) = match &r.outcome {
                Ok(o) => (RecordStatus::Ok, None, o.flags.clone()),
                Err(e) => (RecordStatus::Skipped, Some(e.clone()), Vec::new()),
            };
            records.push(RecordReport {
                id: r.id.clone(),
                status,
                error,
                flags,
                calls: r.calls,
                input_tokens: r.ledger.input_tokens(),
                output_tokens: r.ledger.output_tokens(),
                usage_estimated: r.ledger.entries().iter().any(|e| e.estimated),
                cost_rmb: r.ledger.total_cost(),
            });
        }
        Self {
            skipped: records
                .iter()
                .filter(|r| r.status == RecordStatus::Skipped)
                .map(|r| r.id.clone())
                .collect(),
            total_calls: records.iter().map(|r| r.calls).sum(),
            input_tokens: total.input_tokens(),
            output_tokens: total.output_tokens(),
            cost_rmb: total.total_cost(),
            records,
        }
    }
}
