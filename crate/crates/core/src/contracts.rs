//! Smart-contract layer: the four parameterized templates, the signing
//! lifecycle, and trigger execution producing ledger instructions.
//!
//! Contracts never touch the ledger themselves. Lifecycle operations
//! mutate contract state; [`execute_trigger`] is a pure function from a
//! trigger event to the ledger instructions it implies. The engine owns
//! applying both.

use crate::amount::{weight_to_string, TokenAmount, Weight};
use crate::crypto::{Address, CanonicalWriter, Hash32};
use crate::errors::{Error, Result};
use crate::graph::ManuscriptId;
use crate::ledger::EscrowId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ContractId(pub Hash32);

impl fmt::Debug for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContractKind {
    Authorship,
    Review,
    Funding,
    /// Journal indexing, special issue, book publishing or conference
    /// indexing; may override the confirmation threshold and restrict the
    /// reviewer pool.
    Indexing,
}

impl ContractKind {
    pub fn render(&self) -> &'static str {
        match self {
            ContractKind::Authorship => "authorship",
            ContractKind::Review => "review",
            ContractKind::Funding => "funding",
            ContractKind::Indexing => "indexing",
        }
    }
}

/// Positive rational weights summing to exactly 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ShareTable {
    pub entries: Vec<(Address, Weight)>,
}

impl ShareTable {
    pub fn single(addr: Address) -> ShareTable {
        ShareTable {
            entries: vec![(addr, Weight::from_integer(1))],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidShares("empty share table".into()));
        }
        if self.entries.iter().any(|(_, w)| *w.numer() == 0) {
            return Err(Error::InvalidShares("zero share weight".into()));
        }
        let sum: Weight = self.entries.iter().map(|(_, w)| *w).sum();
        if sum != Weight::from_integer(1) {
            return Err(Error::SharesDontSumToOne);
        }
        let mut addrs: Vec<&Address> = self.entries.iter().map(|(a, _)| a).collect();
        addrs.sort();
        addrs.dedup();
        if addrs.len() != self.entries.len() {
            return Err(Error::InvalidShares("duplicate share holder".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<Weight> {
        self.entries.iter().map(|(_, w)| *w).collect()
    }

    pub fn holders(&self) -> Vec<Address> {
        self.entries.iter().map(|(a, _)| *a).collect()
    }
}

/// Kind-specific contract terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContractTerms {
    Authorship,
    Review,
    /// The funder covers `covered_fraction` of the author stake at
    /// submission and claws back `clawback_share` of the authors' future
    /// citation income.
    Funding {
        covered_fraction: Weight,
        clawback_share: Weight,
        /// Authorship contract this funding attaches to.
        authorship: ContractId,
    },
    Indexing {
        venue: String,
        k_override: Option<u32>,
        reviewer_whitelist: Option<Vec<Address>>,
        /// Venue's share of the authors' citation income; models deferred
        /// venue fees paid out of future citations.
        clawback_share: Weight,
        /// Optional pre-submission binding to an authorship contract.
        authorship: Option<ContractId>,
    },
}

impl ContractTerms {
    fn encode(&self, w: &mut CanonicalWriter) {
        match self {
            ContractTerms::Authorship => {
                w.field_str("terms", "authorship");
            }
            ContractTerms::Review => {
                w.field_str("terms", "review");
            }
            ContractTerms::Funding {
                covered_fraction,
                clawback_share,
                authorship,
            } => {
                w.field_str("terms", "funding")
                    .field_hash("terms.authorship", &authorship.0)
                    .field_str("terms.clawback", &weight_to_string(clawback_share))
                    .field_str("terms.covered", &weight_to_string(covered_fraction));
            }
            ContractTerms::Indexing {
                venue,
                k_override,
                reviewer_whitelist,
                clawback_share,
                authorship,
            } => {
                w.field_str("terms", "indexing")
                    .field_str("terms.clawback", &weight_to_string(clawback_share))
                    .field_u64(
                        "terms.k_override",
                        k_override.map(u64::from).unwrap_or(0),
                    )
                    .field_str("terms.venue", venue);
                if let Some(list) = reviewer_whitelist {
                    w.field_list("terms.whitelist", list, |w, name, a| {
                        w.field_bytes(name, &a.0);
                    });
                }
                if let Some(c) = authorship {
                    w.field_hash("terms.authorship", &c.0);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContractState {
    Proposed,
    Signed,
    Active,
    Locked,
    Settled,
    Cancelled,
}

impl ContractState {
    pub fn render(&self) -> &'static str {
        match self {
            ContractState::Proposed => "proposed",
            ContractState::Signed => "signed",
            ContractState::Active => "active",
            ContractState::Locked => "locked",
            ContractState::Settled => "settled",
            ContractState::Cancelled => "cancelled",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, ContractState::Settled | ContractState::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    pub id: ContractId,
    pub kind: ContractKind,
    pub parties: Vec<Address>,
    pub shares: ShareTable,
    pub stake_required: TokenAmount,
    /// Stable manuscript key once bound; None while pending.
    pub manuscript: Option<ManuscriptId>,
    pub terms: ContractTerms,
    pub state: ContractState,
    pub signatures: BTreeMap<Address, Vec<u8>>,
}

impl Contract {
    pub fn all_signed(&self) -> bool {
        self.parties.iter().all(|p| self.signatures.contains_key(p))
    }

    pub fn is_party(&self, addr: &Address) -> bool {
        self.parties.contains(addr)
    }

    /// Effective confirmation threshold override, if this is an indexing
    /// contract carrying one.
    pub fn k_override(&self) -> Option<u32> {
        match &self.terms {
            ContractTerms::Indexing { k_override, .. } => *k_override,
            _ => None,
        }
    }

    pub fn clawback(&self) -> Option<(Address, Weight)> {
        let share = match &self.terms {
            ContractTerms::Funding { clawback_share, .. } => *clawback_share,
            ContractTerms::Indexing { clawback_share, .. } => *clawback_share,
            _ => return None,
        };
        if *share.numer() == 0 {
            return None;
        }
        Some((self.parties[0], share))
    }
}

/// Payload a party signs to endorse a contract: the domain-tagged id.
pub fn contract_sign_payload(id: &ContractId) -> Vec<u8> {
    let mut w = CanonicalWriter::new("peerchain.contract-signature");
    w.field_hash("contract", &id.0);
    w.into_bytes()
}

/// Instruction to the ledger; pure data, executed only by the engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerInstruction {
    Transfer {
        from: Address,
        to: Address,
        amount: TokenAmount,
        trigger: ContractId,
    },
    Lock {
        owner: Address,
        amount: TokenAmount,
        contract: ContractId,
    },
    /// Drain the listed escrows (in order) against the payout lines.
    /// An empty escrow list marks an allocation sub-plan whose funding
    /// source is supplied by the enclosing settlement.
    Release {
        escrows: Vec<EscrowId>,
        payout: Vec<PayoutLine>,
    },
}

/// Settlement class a payout line belongs to. Classes label the split the
/// line came from, not the recipient's role: a clawback line to a funder
/// and a redirected self-citation line to the treasury both stay in the
/// Author class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BeneficiaryClass {
    Author,
    Reviewer,
    Remark,
    Treasury,
}

impl BeneficiaryClass {
    pub fn render(&self) -> &'static str {
        match self {
            BeneficiaryClass::Author => "author",
            BeneficiaryClass::Reviewer => "reviewer",
            BeneficiaryClass::Remark => "remark",
            BeneficiaryClass::Treasury => "treasury",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayoutLine {
    pub to: Address,
    pub amount: TokenAmount,
    pub class: BeneficiaryClass,
}

/// Events emitted by the consensus layer that contracts react to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerEvent {
    ManuscriptConfirmed(ManuscriptId),
    CitationReceived {
        cited: ManuscriptId,
        amount: TokenAmount,
        citing: ManuscriptId,
    },
    Withdrawn(ManuscriptId),
}

impl TriggerEvent {
    pub fn manuscript(&self) -> &ManuscriptId {
        match self {
            TriggerEvent::ManuscriptConfirmed(m) => m,
            TriggerEvent::CitationReceived { cited, .. } => cited,
            TriggerEvent::Withdrawn(m) => m,
        }
    }
}

/// Snapshot context for [`execute_trigger`].
pub struct TriggerContext<'a> {
    pub graph: &'a crate::graph::PublicationGraph,
    pub registry: &'a ContractRegistry,
    pub policy: &'a crate::policy::PolicyConfig,
    pub treasury: Address,
    /// Held escrows backing the event's manuscript, in creation order.
    pub escrows: &'a [crate::consensus::EscrowBacking],
}

/// Output of a trigger execution: ledger instructions plus the settlement
/// audit record when the event settles a pool.
#[derive(Debug, Clone)]
pub struct TriggerOutcome {
    pub instructions: Vec<LedgerInstruction>,
    pub report: Option<crate::consensus::SettlementReport>,
}

/// Pure trigger execution: same event and contracts, same instructions.
///
/// * `ManuscriptConfirmed` releases the manuscript's pooled escrow toward
///   the manuscripts it cites (the related contracts are locked by the
///   engine as part of the same atomic step).
/// * `CitationReceived` yields the allocation lines for one cited
///   manuscript's inflow; the funding source is supplied by the enclosing
///   confirmation, so the release carries no escrows of its own.
/// * `Withdrawn` refunds author stakes at the policy fraction and all
///   other stakes in full.
pub fn execute_trigger(
    event: &TriggerEvent,
    contracts: &[&Contract],
    ctx: &TriggerContext<'_>,
) -> Result<TriggerOutcome> {
    let manuscript = event.manuscript();
    for contract in contracts {
        if contract.manuscript.as_ref() != Some(manuscript) {
            return Err(Error::StateMismatch(format!(
                "contract {} is not bound to manuscript {}",
                contract.id, manuscript
            )));
        }
        if !matches!(
            contract.state,
            ContractState::Active | ContractState::Locked
        ) {
            return Err(Error::StateMismatch(format!(
                "contract {} is {} and cannot execute triggers",
                contract.id,
                contract.state.render()
            )));
        }
    }
    match event {
        TriggerEvent::ManuscriptConfirmed(m) => {
            let node = ctx.graph.get(m)?;
            let (report, instruction) = crate::consensus::settle_on_confirmation(
                node,
                ctx.graph,
                ctx.registry,
                ctx.escrows,
                ctx.policy,
                ctx.treasury,
            )?;
            Ok(TriggerOutcome {
                instructions: vec![instruction],
                report: Some(report),
            })
        }
        TriggerEvent::CitationReceived {
            cited,
            amount,
            citing,
        } => {
            let cited_node = ctx.graph.get(cited)?;
            let citing_node = ctx.graph.get(citing)?;
            let payout = crate::consensus::distribution_for_citation(
                cited_node,
                *amount,
                citing_node,
                ctx.registry,
                ctx.policy,
                ctx.treasury,
            )?;
            Ok(TriggerOutcome {
                instructions: vec![LedgerInstruction::Release {
                    escrows: Vec::new(),
                    payout,
                }],
                report: None,
            })
        }
        TriggerEvent::Withdrawn(m) => {
            let node = ctx.graph.get(m)?;
            let (report, instructions) = crate::consensus::withdrawal_settlement(
                node,
                ctx.escrows,
                ctx.policy,
                ctx.treasury,
            )?;
            Ok(TriggerOutcome {
                instructions,
                report: Some(report),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Registry and lifecycle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct ContractRegistry {
    contracts: BTreeMap<ContractId, Contract>,
    nonce: u64,
}

impl ContractRegistry {
    pub fn get(&self, id: &ContractId) -> Result<&Contract> {
        self.contracts
            .get(id)
            .ok_or_else(|| Error::UnknownContract(id.to_string()))
    }

    pub fn get_mut(&mut self, id: &ContractId) -> Result<&mut Contract> {
        self.contracts
            .get_mut(id)
            .ok_or_else(|| Error::UnknownContract(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Contract> {
        self.contracts.values()
    }

    /// All contracts bound to a manuscript, in id order.
    pub fn for_manuscript(&self, m: &ManuscriptId) -> Vec<&Contract> {
        self.contracts
            .values()
            .filter(|c| c.manuscript.as_ref() == Some(m))
            .collect()
    }

    /// Funding/indexing contracts pre-bound to an authorship contract.
    pub fn attached_to_authorship(&self, authorship: &ContractId) -> Vec<&Contract> {
        self.contracts
            .values()
            .filter(|c| match &c.terms {
                ContractTerms::Funding { authorship: a, .. } => a == authorship,
                ContractTerms::Indexing {
                    authorship: Some(a), ..
                } => a == authorship,
                _ => false,
            })
            .collect()
    }

    /// Create a Proposed contract with a deterministic id.
    pub fn propose(
        &mut self,
        kind: ContractKind,
        parties: Vec<Address>,
        shares: ShareTable,
        stake_required: TokenAmount,
        terms: ContractTerms,
    ) -> Result<ContractId> {
        shares.validate()?;
        match kind {
            ContractKind::Authorship => {
                let mut holders = shares.holders();
                holders.sort();
                let mut ps = parties.clone();
                ps.sort();
                if holders != ps {
                    return Err(Error::InvalidShares(
                        "authorship shares must cover exactly the parties".into(),
                    ));
                }
                if stake_required.is_zero() {
                    return Err(Error::ZeroStake);
                }
                if !matches!(terms, ContractTerms::Authorship) {
                    return Err(Error::StateMismatch("authorship terms expected".into()));
                }
            }
            ContractKind::Review => {
                if parties.len() != 1 || shares.entries.len() != 1 {
                    return Err(Error::InvalidShares(
                        "review contracts have a single party with share 1".into(),
                    ));
                }
                if stake_required.is_zero() {
                    return Err(Error::ZeroStake);
                }
                if !matches!(terms, ContractTerms::Review) {
                    return Err(Error::StateMismatch("review terms expected".into()));
                }
            }
            ContractKind::Funding => {
                if parties.len() != 1 {
                    return Err(Error::InvalidShares("funding has a single funder party".into()));
                }
                let ContractTerms::Funding {
                    covered_fraction,
                    clawback_share,
                    ..
                } = &terms
                else {
                    return Err(Error::StateMismatch("funding terms expected".into()));
                };
                let one = Weight::from_integer(1);
                if *covered_fraction > one || *clawback_share > one {
                    return Err(Error::InvalidShares(
                        "funding fractions must lie in [0, 1]".into(),
                    ));
                }
            }
            ContractKind::Indexing => {
                if parties.len() != 1 {
                    return Err(Error::InvalidShares("indexing has a single venue party".into()));
                }
                let ContractTerms::Indexing {
                    k_override,
                    clawback_share,
                    ..
                } = &terms
                else {
                    return Err(Error::StateMismatch("indexing terms expected".into()));
                };
                if k_override == &Some(0) {
                    return Err(Error::StateMismatch("k override must be at least 1".into()));
                }
                if *clawback_share > Weight::from_integer(1) {
                    return Err(Error::InvalidShares(
                        "indexing clawback must lie in [0, 1]".into(),
                    ));
                }
            }
        }
        let nonce = self.nonce;
        self.nonce += 1;
        let mut w = CanonicalWriter::new("peerchain.contract");
        w.field_str("kind", kind.render())
            .field_u64("nonce", nonce)
            .field_list("parties", &parties, |w, name, a| {
                w.field_bytes(name, &a.0);
            })
            .field_list("shares", &shares.entries, |w, name, (a, wt)| {
                w.field_bytes(&format!("{name}.addr"), &a.0)
                    .field_str(&format!("{name}.weight"), &weight_to_string(wt));
            })
            .field_u64("stake", stake_required.grains());
        terms.encode(&mut w);
        let id = ContractId(w.finish());
        self.contracts.insert(
            id,
            Contract {
                id,
                kind,
                parties,
                shares,
                stake_required,
                manuscript: None,
                terms,
                state: ContractState::Proposed,
                signatures: BTreeMap::new(),
            },
        );
        Ok(id)
    }

    /// Record a party's signature. When every party has signed the
    /// contract moves to Signed; activation is the engine's call once the
    /// required stakes are escrowed.
    pub fn sign(&mut self, id: &ContractId, party: Address, sig: Vec<u8>) -> Result<ContractState> {
        let payload = contract_sign_payload(id);
        let contract = self.get_mut(id)?;
        if !matches!(
            contract.state,
            ContractState::Proposed | ContractState::Signed
        ) {
            return Err(Error::AlreadyActive);
        }
        if !contract.is_party(&party) {
            return Err(Error::NotAParty(party.to_hex()));
        }
        // callers verify against the party's registered key; the registry
        // stores the bytes so node hashes can bind them
        let _ = payload;
        contract.signatures.insert(party, sig);
        if contract.all_signed() {
            contract.state = ContractState::Signed;
        }
        Ok(contract.state)
    }

    /// Engine confirmation that all required stakes are escrowed.
    pub fn activate(&mut self, id: &ContractId) -> Result<()> {
        let contract = self.get_mut(id)?;
        if contract.state != ContractState::Signed {
            return Err(Error::StateMismatch(format!(
                "cannot activate a {} contract",
                contract.state.render()
            )));
        }
        if !contract.all_signed() {
            return Err(Error::MissingSignature("activation before full signing".into()));
        }
        contract.state = ContractState::Active;
        Ok(())
    }

    /// Cancellation by quorum. Allowed from Proposed, Signed and Active;
    /// Locked and Settled contracts refuse. The quorum must include every
    /// party that has already signed.
    pub fn cancel(&mut self, id: &ContractId, quorum: &[Address]) -> Result<()> {
        let contract = self.get_mut(id)?;
        match contract.state {
            ContractState::Locked | ContractState::Settled => return Err(Error::AlreadyLocked),
            ContractState::Cancelled => {
                return Err(Error::StateMismatch("contract already cancelled".into()))
            }
            _ => {}
        }
        if quorum.is_empty() {
            return Err(Error::StateMismatch("empty cancellation quorum".into()));
        }
        for addr in quorum {
            if !contract.is_party(addr) {
                return Err(Error::NotAParty(addr.to_hex()));
            }
        }
        for signer in contract.signatures.keys() {
            if !quorum.contains(signer) {
                return Err(Error::StateMismatch(format!(
                    "cancellation quorum is missing signer {signer}"
                )));
            }
        }
        contract.state = ContractState::Cancelled;
        Ok(())
    }

    /// Lock a contract at manuscript confirmation.
    pub fn lock(&mut self, id: &ContractId) -> Result<()> {
        let contract = self.get_mut(id)?;
        if contract.state != ContractState::Active {
            return Err(Error::StateMismatch(format!(
                "cannot lock a {} contract",
                contract.state.render()
            )));
        }
        contract.state = ContractState::Locked;
        Ok(())
    }

    /// Mark a locked contract settled once its instructions executed.
    pub fn settle(&mut self, id: &ContractId) -> Result<()> {
        let contract = self.get_mut(id)?;
        if contract.state != ContractState::Locked {
            return Err(Error::StateMismatch(format!(
                "cannot settle a {} contract",
                contract.state.render()
            )));
        }
        contract.state = ContractState::Settled;
        Ok(())
    }

    pub fn bind_manuscript(&mut self, id: &ContractId, m: ManuscriptId) -> Result<()> {
        let contract = self.get_mut(id)?;
        if let Some(existing) = &contract.manuscript {
            if *existing != m {
                return Err(Error::StateMismatch(
                    "contract already bound to another manuscript".into(),
                ));
            }
        }
        contract.manuscript = Some(m);
        Ok(())
    }
}
