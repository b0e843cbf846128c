//! Proof-of-review consensus: reviewer selection, confirmation tallying
//! and the token distribution policy for settlements and withdrawals.
//!
//! A manuscript is confirmed once enough distinct staked reviewers sign a
//! Confirm verdict on its current version; the threshold comes from the
//! policy or an indexing contract override. Confirmation locks the node
//! and its contracts and immediately settles the pooled stakes toward the
//! cited manuscripts, each of which splits its inflow among its own
//! authors, reviewers and remark agents.
//!
//! Everything here is a pure function over snapshots; the engine owns the
//! atomic apply.

use crate::amount::{equal_distribution, weighted_distribution, TokenAmount, Weight};
use crate::contracts::{
    BeneficiaryClass, Contract, ContractKind, ContractRegistry, ContractState, ContractTerms,
    LedgerInstruction, PayoutLine,
};
use crate::crypto::{tie_break, Address};
use crate::errors::{Error, Result};
use crate::graph::{ManuscriptId, ManuscriptNode, NodeState, PublicationGraph, Verdict};
use crate::identity::IdentityPool;
use crate::ledger::EscrowId;
use crate::policy::PolicyConfig;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// History cap in the selection score: long records stop counting past this.
pub const HISTORY_CAP: u64 = 10;

/// Scored candidate, ranked by (score desc, tie_break asc, address asc).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewerScore {
    pub candidate: Address,
    pub keyword_overlap: u64,
    pub history: u64,
    pub score: u64,
    pub tie_break: u64,
}

impl ReviewerScore {
    fn rank_key(&self) -> (std::cmp::Reverse<u64>, u64, Address) {
        (std::cmp::Reverse(self.score), self.tie_break, self.candidate)
    }
}

/// Topic keywords of a manuscript: the union of its authors' profile
/// keywords (manuscripts carry no keyword list of their own).
fn manuscript_keywords(node: &ManuscriptNode, pool: &IdentityPool) -> BTreeSet<String> {
    let mut topic = BTreeSet::new();
    for (addr, _) in &node.authorship.authors {
        if let Ok(account) = pool.get(addr) {
            topic.extend(account.profile.keywords.iter().cloned());
        }
    }
    topic
}

/// Score every eligible candidate for a manuscript. Eligible means
/// opted in as reviewer, not an author, not already holding a live review
/// contract on this manuscript, and on the whitelist if an indexing
/// contract imposes one.
pub fn score_candidates(
    node: &ManuscriptNode,
    pool: &IdentityPool,
    registry: &ContractRegistry,
    seed: u64,
) -> Vec<ReviewerScore> {
    let topic = manuscript_keywords(node, pool);
    let already_contracted: BTreeSet<Address> = registry
        .for_manuscript(&node.key)
        .into_iter()
        .filter(|c| c.kind == ContractKind::Review && c.state != ContractState::Cancelled)
        .flat_map(|c| c.parties.iter().copied())
        .collect();
    let whitelist: Option<BTreeSet<Address>> = {
        let lists: Vec<&Vec<Address>> = registry
            .for_manuscript(&node.key)
            .into_iter()
            .filter(|c| !c.state.is_terminal())
            .filter_map(|c| match &c.terms {
                ContractTerms::Indexing {
                    reviewer_whitelist: Some(list),
                    ..
                } => Some(list),
                _ => None,
            })
            .collect();
        if lists.is_empty() {
            None
        } else {
            Some(lists.into_iter().flatten().copied().collect())
        }
    };
    let mut scores = Vec::new();
    for account in pool.iter() {
        if !account.profile.reviewer_opt_in {
            continue;
        }
        if node.authorship.is_author(&account.address) {
            continue;
        }
        if already_contracted.contains(&account.address) {
            continue;
        }
        if let Some(list) = &whitelist {
            if !list.contains(&account.address) {
                continue;
            }
        }
        let keyword_overlap = account.profile.keywords.intersection(&topic).count() as u64;
        let history = account.reviews_completed;
        scores.push(ReviewerScore {
            candidate: account.address,
            keyword_overlap,
            history,
            score: 2 * keyword_overlap + history.min(HISTORY_CAP),
            tie_break: tie_break(seed, &account.address),
        });
    }
    scores.sort_by_key(|s| s.rank_key());
    scores
}

/// Top `candidate_count` eligible reviewers; deterministic for a fixed
/// (pool, seed).
pub fn select_reviewers(
    node: &ManuscriptNode,
    pool: &IdentityPool,
    registry: &ContractRegistry,
    policy: &PolicyConfig,
    seed: u64,
) -> Result<Vec<Address>> {
    if node.state != NodeState::UnderReview {
        return Err(Error::NotUnderReview);
    }
    let scores = score_candidates(node, pool, registry, seed);
    if scores.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(scores
        .into_iter()
        .take(policy.candidate_count as usize)
        .map(|s| s.candidate)
        .collect())
}

/// Latest record per reviewer, in append order.
fn latest_records(node: &ManuscriptNode) -> BTreeMap<Address, &crate::graph::ReviewRecord> {
    let mut latest = BTreeMap::new();
    for record in &node.confirmations.records {
        latest.insert(record.reviewer, record);
    }
    latest
}

/// Count of distinct reviewers whose latest record confirms the current
/// version. Revisions reset the tally because stale versions no longer
/// match.
pub fn tally_confirmations(node: &ManuscriptNode) -> u32 {
    latest_records(node)
        .values()
        .filter(|r| r.verdict == Verdict::Confirm && r.version_signed == node.meta.version)
        .count() as u32
}

/// Distinct confirming reviewers of the node's current version, sorted by
/// address (the order the reviewer-class split is dealt in).
pub fn confirming_reviewers(node: &ManuscriptNode) -> Vec<Address> {
    latest_records(node)
        .values()
        .filter(|r| r.verdict == Verdict::Confirm && r.version_signed == node.meta.version)
        .map(|r| r.reviewer)
        .collect()
}

/// Confirmation threshold for a manuscript: the strictest override among
/// its live indexing contracts, or the policy default.
pub fn effective_k(
    node: &ManuscriptNode,
    registry: &ContractRegistry,
    policy: &PolicyConfig,
) -> u32 {
    registry
        .for_manuscript(&node.key)
        .into_iter()
        .filter(|c| !c.state.is_terminal())
        .filter_map(|c| c.k_override())
        .max()
        .unwrap_or(policy.required_confirmations)
}

/// Where a settled pool went, grain for grain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementReport {
    /// Stable key of the manuscript whose stakes were settled.
    pub manuscript: ManuscriptId,
    pub kind: SettlementKind,
    pub pool: TokenAmount,
    /// Inflow per cited manuscript (stable keys); empty for withdrawals.
    pub per_citation: Vec<(ManuscriptId, TokenAmount)>,
    pub per_beneficiary: Vec<PayoutLine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SettlementKind {
    Confirmation,
    Withdrawal,
}

impl SettlementKind {
    pub fn render(&self) -> &'static str {
        match self {
            SettlementKind::Confirmation => "confirmation",
            SettlementKind::Withdrawal => "withdrawal",
        }
    }
}

impl SettlementReport {
    pub fn total_out(&self) -> TokenAmount {
        self.per_beneficiary.iter().map(|l| l.amount).sum()
    }
}

/// `floor(amount * w / total)` with u128 cross multiplication.
fn floor_class_share(amount: TokenAmount, w: Weight, total: Weight) -> Result<TokenAmount> {
    let overflow = || Error::ArithmeticOverflow("class split");
    let numer = (*w.numer() as u128)
        .checked_mul(*total.denom() as u128)
        .ok_or_else(overflow)?;
    let denom = (*w.denom() as u128)
        .checked_mul(*total.numer() as u128)
        .ok_or_else(overflow)?;
    let part = (amount.grains() as u128)
        .checked_mul(numer)
        .ok_or_else(overflow)?
        / denom;
    u64::try_from(part).map(TokenAmount).map_err(|_| overflow())
}

fn merge_lines(lines: Vec<PayoutLine>) -> Vec<PayoutLine> {
    let mut merged: Vec<PayoutLine> = Vec::new();
    for line in lines {
        if line.amount.is_zero() {
            continue;
        }
        if let Some(existing) = merged
            .iter_mut()
            .find(|l| l.to == line.to && l.class == line.class)
        {
            existing.amount += line.amount;
        } else {
            merged.push(line);
        }
    }
    merged
}

/// Split one citation inflow among the cited manuscript's stakeholders.
///
/// Class weights come from the policy (authors / reviewers / remarks);
/// empty classes have their weight renormalized over the non-empty ones,
/// class amounts are floor-divided and the dust goes to the treasury.
/// Within a class the split is exact: authors by authorship shares
/// (after any funding/indexing clawback), reviewers equally, remark
/// agents by stake proportion. Under the redirect self-citation rule a
/// citation sharing an author with the citing manuscript sends the whole
/// author-class amount to the treasury instead (still labelled Author).
pub fn distribution_for_citation(
    cited: &ManuscriptNode,
    amount: TokenAmount,
    citing: &ManuscriptNode,
    registry: &ContractRegistry,
    policy: &PolicyConfig,
    treasury: Address,
) -> Result<Vec<PayoutLine>> {
    if cited.state != NodeState::Confirmed {
        return Err(Error::NotConfirmed);
    }
    let authors = &cited.authorship.authors;
    let reviewers = confirming_reviewers(cited);
    let remarks = &cited.remarks;
    let (alpha, beta, gamma) = policy.split;
    // classes need members and a positive weight to take part in the split
    let mut classes: Vec<(BeneficiaryClass, Weight)> = Vec::new();
    if !authors.is_empty() && *alpha.numer() > 0 {
        classes.push((BeneficiaryClass::Author, alpha));
    }
    if !reviewers.is_empty() && *beta.numer() > 0 {
        classes.push((BeneficiaryClass::Reviewer, beta));
    }
    if !remarks.is_empty() && *gamma.numer() > 0 {
        classes.push((BeneficiaryClass::Remark, gamma));
    }
    if classes.is_empty() {
        // genesis, or a degenerate policy zeroing every populated class:
        // the inflow lands in the treasury, nothing ever flows out
        return Ok(merge_lines(vec![PayoutLine {
            to: treasury,
            amount,
            class: BeneficiaryClass::Treasury,
        }]));
    }
    let total: Weight = classes.iter().map(|(_, w)| *w).sum();
    let mut lines = Vec::new();
    let mut distributed = TokenAmount::ZERO;
    for (class, weight) in &classes {
        let class_amount = floor_class_share(amount, *weight, total)?;
        distributed += class_amount;
        if class_amount.is_zero() {
            continue;
        }
        match class {
            BeneficiaryClass::Author => {
                let self_citation = citing.key != cited.key
                    && citing
                        .authorship
                        .authors
                        .iter()
                        .any(|(a, _)| cited.authorship.is_author(a));
                if policy.self_citation_rule
                    == crate::policy::SelfCitationRule::RedirectAuthorsToTreasury
                    && self_citation
                {
                    lines.push(PayoutLine {
                        to: treasury,
                        amount: class_amount,
                        class: BeneficiaryClass::Author,
                    });
                    continue;
                }
                let mut remaining = class_amount;
                // clawbacks bind in contract-id order for determinism
                let mut claimants: Vec<&Contract> = registry
                    .for_manuscript(&cited.key)
                    .into_iter()
                    .filter(|c| !matches!(c.state, ContractState::Cancelled))
                    .filter(|c| c.clawback().is_some())
                    .collect();
                claimants.sort_by_key(|c| c.id);
                for contract in claimants {
                    let (to, share) = contract.clawback().unwrap();
                    let cut = crate::amount::floor_share(remaining, share)?;
                    if !cut.is_zero() {
                        lines.push(PayoutLine {
                            to,
                            amount: cut,
                            class: BeneficiaryClass::Author,
                        });
                        remaining = remaining - cut;
                    }
                }
                let weights: Vec<Weight> = authors.iter().map(|(_, w)| *w).collect();
                let parts = weighted_distribution(remaining, &weights)?;
                for ((addr, _), part) in authors.iter().zip(parts) {
                    lines.push(PayoutLine {
                        to: *addr,
                        amount: part,
                        class: BeneficiaryClass::Author,
                    });
                }
            }
            BeneficiaryClass::Reviewer => {
                let parts = equal_distribution(class_amount, reviewers.len())?;
                for (addr, part) in reviewers.iter().zip(parts) {
                    lines.push(PayoutLine {
                        to: *addr,
                        amount: part,
                        class: BeneficiaryClass::Reviewer,
                    });
                }
            }
            BeneficiaryClass::Remark => {
                let weights: Vec<Weight> = remarks
                    .iter()
                    .map(|r| Weight::from_integer(r.stake.grains()))
                    .collect();
                let parts = weighted_distribution(class_amount, &weights)?;
                for (remark, part) in remarks.iter().zip(parts) {
                    lines.push(PayoutLine {
                        to: remark.agent,
                        amount: part,
                        class: BeneficiaryClass::Remark,
                    });
                }
            }
            BeneficiaryClass::Treasury => unreachable!(),
        }
    }
    let dust = amount - distributed;
    if !dust.is_zero() {
        lines.push(PayoutLine {
            to: treasury,
            amount: dust,
            class: BeneficiaryClass::Treasury,
        });
    }
    let merged = merge_lines(lines);
    debug_assert_eq!(merged.iter().map(|l| l.amount).sum::<TokenAmount>(), amount);
    Ok(merged)
}

/// One escrow backing a manuscript's pool, with the class its refund
/// belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowBacking {
    pub id: EscrowId,
    pub owner: Address,
    pub amount: TokenAmount,
    pub class: BeneficiaryClass,
}

/// Plan the settlement fired by a confirmation: the pooled stakes are
/// split equally across the distinct cited manuscripts (floor division,
/// remainder to the treasury) and each inflow is distributed via
/// [`distribution_for_citation`]. Returns the audit report and the single
/// pooled release instruction.
pub fn settle_on_confirmation(
    node: &ManuscriptNode,
    graph: &PublicationGraph,
    registry: &ContractRegistry,
    escrows: &[EscrowBacking],
    policy: &PolicyConfig,
    treasury: Address,
) -> Result<(SettlementReport, LedgerInstruction)> {
    if node.state != NodeState::Confirmed {
        return Err(Error::NotConfirmed);
    }
    let pool: TokenAmount = escrows.iter().map(|e| e.amount).sum();
    let citations: Vec<&ManuscriptNode> = node
        .citations
        .iter()
        .map(|c| graph.get(c))
        .collect::<Result<_>>()?;
    let n = citations.len() as u64;
    // the graph rejects empty citation sets at submission
    let share = TokenAmount(pool.grains() / n);
    let remainder = TokenAmount(pool.grains() % n);
    let mut per_citation = Vec::with_capacity(citations.len());
    let mut lines = Vec::new();
    for cited in &citations {
        per_citation.push((cited.key, share));
        lines.extend(distribution_for_citation(
            cited, share, node, registry, policy, treasury,
        )?);
    }
    if !remainder.is_zero() {
        lines.push(PayoutLine {
            to: treasury,
            amount: remainder,
            class: BeneficiaryClass::Treasury,
        });
    }
    let per_beneficiary = merge_lines(lines);
    let report = SettlementReport {
        manuscript: node.key,
        kind: SettlementKind::Confirmation,
        pool,
        per_citation,
        per_beneficiary: per_beneficiary.clone(),
    };
    let instruction = LedgerInstruction::Release {
        escrows: escrows.iter().map(|e| e.id).collect(),
        payout: per_beneficiary,
    };
    Ok((report, instruction))
}

/// Plan a withdrawal: every author-stake escrow refunds
/// `floor(refund_fraction * amount)` to its owner with the rest to the
/// treasury; reviewer and remark stakes are refunded in full.
pub fn withdrawal_settlement(
    node: &ManuscriptNode,
    escrows: &[EscrowBacking],
    policy: &PolicyConfig,
    treasury: Address,
) -> Result<(SettlementReport, Vec<LedgerInstruction>)> {
    if node.state != NodeState::UnderReview {
        return Err(Error::LockedManuscript);
    }
    let pool: TokenAmount = escrows.iter().map(|e| e.amount).sum();
    let mut lines = Vec::new();
    let mut instructions = Vec::new();
    for escrow in escrows {
        match escrow.class {
            BeneficiaryClass::Author => {
                let refund = crate::amount::floor_share(escrow.amount, policy.refund_fraction)?;
                let withheld = escrow.amount - refund;
                let mut payout = Vec::new();
                if !refund.is_zero() {
                    payout.push(PayoutLine {
                        to: escrow.owner,
                        amount: refund,
                        class: BeneficiaryClass::Author,
                    });
                }
                if !withheld.is_zero() {
                    payout.push(PayoutLine {
                        to: treasury,
                        amount: withheld,
                        class: BeneficiaryClass::Treasury,
                    });
                }
                lines.extend(payout.iter().copied());
                instructions.push(LedgerInstruction::Release {
                    escrows: vec![escrow.id],
                    payout,
                });
            }
            _ => {
                let payout = vec![PayoutLine {
                    to: escrow.owner,
                    amount: escrow.amount,
                    class: escrow.class,
                }];
                lines.extend(payout.iter().copied());
                instructions.push(LedgerInstruction::Release {
                    escrows: vec![escrow.id],
                    payout,
                });
            }
        }
    }
    let report = SettlementReport {
        manuscript: node.key,
        kind: SettlementKind::Withdrawal,
        pool,
        per_citation: Vec::new(),
        per_beneficiary: merge_lines(lines),
    };
    Ok((report, instructions))
}
