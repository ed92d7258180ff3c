//! Durable attempt store, cumulative round summaries, figure data and audit
//! sampling.

mod audit;
mod store;
mod summary;

pub use audit::{
    audit_summary, draw_and_record_sample, record_audit_verdict, sample_audit, AuditError, AuditEvent, AuditItem,
    AuditSummary, AuditVerdict,
};
pub use store::{
    canonical_lines, read_lines, read_meta, read_snapshot, JsonlLog, RoundInfo, Store, StoreError, StoreMeta,
    StoreSnapshot, ATTEMPTS_FILE, AUDIT_FILE, META_FILE, STATUS_FILE,
};
pub use summary::{
    check_store_invariants, emit_figure_data, format_percent, render_report, summarize, summarize_rounds, RoundSummary,
    SummaryError, FIGURE_HEADER,
};
