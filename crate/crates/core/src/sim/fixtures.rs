//! Shipped fixture sites and their per-step integrity constraints.

use super::SiteSpec;
use crate::validate::Constraint;
use std::sync::{Arc, OnceLock};

pub const SITE_NAMES: [&str; 3] = ["login_flow", "invoice_entry", "search_flow"];

const SITES: [(&str, &str); 3] = [
    ("login_flow", include_str!("../../fixtures/login_flow/site.yaml")),
    ("invoice_entry", include_str!("../../fixtures/invoice_entry/site.yaml")),
    ("search_flow", include_str!("../../fixtures/search_flow/site.yaml")),
];

const CONSTRAINTS: [(&str, &str); 10] = [
    ("login_basic", include_str!("../../fixtures/login_flow/constraints/login_basic.sexp")),
    ("login_remember", include_str!("../../fixtures/login_flow/constraints/login_remember.sexp")),
    ("update_display_name", include_str!("../../fixtures/login_flow/constraints/update_display_name.sexp")),
    ("create_invoice", include_str!("../../fixtures/invoice_entry/constraints/create_invoice.sexp")),
    ("invoice_net30", include_str!("../../fixtures/invoice_entry/constraints/invoice_net30.sexp")),
    ("save_draft", include_str!("../../fixtures/invoice_entry/constraints/save_draft.sexp")),
    ("search_invoices", include_str!("../../fixtures/search_flow/constraints/search_invoices.sexp")),
    ("open_invoice", include_str!("../../fixtures/search_flow/constraints/open_invoice.sexp")),
    ("mark_paid", include_str!("../../fixtures/search_flow/constraints/mark_paid.sexp")),
    ("open_archive", include_str!("../../fixtures/search_flow/constraints/open_archive.sexp")),
];

fn parsed() -> &'static Vec<(&'static str, Arc<SiteSpec>)> {
    static CELL: OnceLock<Vec<(&'static str, Arc<SiteSpec>)>> = OnceLock::new();
    CELL.get_or_init(|| {
        SITES
            .iter()
            .map(|(name, text)| {
                let spec = SiteSpec::from_yaml(text)
                    .unwrap_or_else(|e| panic!("shipped fixture {name} is invalid: {e}"));
                (*name, Arc::new(spec))
            })
            .collect()
    })
}

pub fn site(name: &str) -> Option<Arc<SiteSpec>> {
    parsed()
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| s.clone())
}

/// All fixture workflows as `(site, workflow_id)`, in shipping order.
pub fn workflows() -> Vec<(Arc<SiteSpec>, String)> {
    parsed()
        .iter()
        .flat_map(|(_, s)| s.workflows.iter().map(move |w| (s.clone(), w.id.clone())))
        .collect()
}

/// Site that defines `workflow_id`.
pub fn site_of(workflow_id: &str) -> Option<Arc<SiteSpec>> {
    parsed()
        .iter()
        .find(|(_, s)| s.workflow(workflow_id).is_some())
        .map(|(_, s)| s.clone())
}

/// Parses a constraint file: one expression per line, blank lines and `;`
/// comments ignored.
pub fn parse_constraint_file(text: &str) -> Result<Vec<Constraint>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with(';')
        })
        .map(|(i, l)| l.parse().map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// Constraints for each SOP step of a fixture workflow.
pub fn constraints(workflow_id: &str) -> Option<Vec<Constraint>> {
    CONSTRAINTS
        .iter()
        .find(|(id, _)| *id == workflow_id)
        .map(|(_, text)| parse_constraint_file(text).expect("shipped constraints parse"))
}
