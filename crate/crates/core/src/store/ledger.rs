use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::Timestamp;

/// Credits held by the system before any grant.
pub const INITIAL_ESCROW: i64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageKind {
    View,
    Download,
    Resolution,
    Purchase,
    /// Escrow to user; carries no template.
    Grant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub template_id: Option<String>,
    pub payer_id: String,
    /// Credited party: the author for purchases, the payer for grants.
    pub payee_id: Option<String>,
    pub kind: UsageKind,
    pub credits: u64,
    pub at: Timestamp,
}

/// Balances derived from the ledger, plus the escrow remainder.
pub(crate) fn balances(entries: &[LedgerEntry]) -> (BTreeMap<String, i64>, i64) {
    let mut b: BTreeMap<String, i64> = BTreeMap::new();
    let mut escrow = INITIAL_ESCROW;
    for e in entries {
        let c = e.credits as i64;
        match e.kind {
            UsageKind::Grant => {
                escrow -= c;
                *b.entry(e.payer_id.clone()).or_default() += c;
            }
            UsageKind::Purchase => {
                *b.entry(e.payer_id.clone()).or_default() -= c;
                if let Some(p) = &e.payee_id {
                    *b.entry(p.clone()).or_default() += c;
                }
            }
            UsageKind::View | UsageKind::Download | UsageKind::Resolution => {}
        }
    }
    (b, escrow)
}
