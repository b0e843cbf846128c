//! Single-writer protocol engine.
//!
//! Every mutation goes through one command path with rollback-on-error
//! semantics: a failed operation leaves the engine exactly as it was.
//! Reads work on snapshots (`Engine` is `Clone + Send`), so inspection can
//! run concurrently while the writer advances.
//!
//! The engine owns the composition rules the individual layers cannot see
//! on their own: gift grants on account creation, stake escrow at contract
//! signing and submission, the confirmation transition firing settlement
//! atomically, and withdrawal refunds.

use crate::amount::{floor_share, weighted_distribution, TokenAmount};
use crate::consensus::{self, EscrowBacking, SettlementReport};
use crate::contracts::{
    contract_sign_payload, execute_trigger, BeneficiaryClass, ContractId, ContractKind,
    ContractRegistry, ContractState, ContractTerms, LedgerInstruction, ShareTable, TriggerContext,
    TriggerEvent,
};
use crate::crypto::{sha256, Address, DetRng, Hash32, KeyPair};
use crate::errors::{Error, Result};
use crate::graph::{
    authorship_sign_payload, remark_sign_payload, review_sign_payload, ManuscriptId,
    ManuscriptNode, NodeState, PublicationGraph, RemarkEntry, RemarkKind, ReviewRecord,
    SubmitRequest, Verdict,
};
use crate::identity::{IdentityPool, Profile};
use crate::ledger::{escrow_lock_intent, transfer_intent, EscrowState, Ledger, Tick, TxTrigger};
use crate::policy::PolicyConfig;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Engine {
    policy: PolicyConfig,
    seed: u64,
    rng: DetRng,
    tick: Tick,
    treasury_keys: KeyPair,
    ledger: Ledger,
    pool: IdentityPool,
    graph: PublicationGraph,
    registry: ContractRegistry,
    /// Escrows backing each manuscript's pool, in creation order.
    manifests: BTreeMap<ManuscriptId, Vec<EscrowBacking>>,
    /// Frozen hash per confirmed manuscript.
    confirmed_ids: BTreeMap<ManuscriptId, ManuscriptId>,
    audit: Vec<SettlementReport>,
    genesis: ManuscriptId,
}

impl Engine {
    /// Boot a fresh ecosystem: treasury keys from the seed stream, the
    /// whole supply minted to the treasury, genesis manuscript confirmed.
    pub fn new(seed: u64, policy: PolicyConfig) -> Result<Engine> {
        policy.validate()?;
        let mut rng = DetRng::new(seed);
        let treasury_keys = KeyPair::generate(&mut rng);
        let treasury = treasury_keys.address();
        let ledger = Ledger::init(policy.total_supply, treasury, *treasury_keys.public_key())?;
        let mut graph = PublicationGraph::default();
        let genesis = graph.init_genesis(sha256(b"peerchain.genesis-manuscript"), 0)?;
        Ok(Engine {
            policy,
            seed,
            rng,
            tick: 0,
            treasury_keys,
            ledger,
            pool: IdentityPool::default(),
            graph,
            registry: ContractRegistry::default(),
            manifests: BTreeMap::new(),
            confirmed_ids: BTreeMap::new(),
            audit: Vec::new(),
            genesis,
        })
    }

    // ---- read surface -----------------------------------------------------

    pub fn policy(&self) -> &PolicyConfig {
        &self.policy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn treasury(&self) -> Address {
        self.treasury_keys.address()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn pool(&self) -> &IdentityPool {
        &self.pool
    }

    pub fn graph(&self) -> &PublicationGraph {
        &self.graph
    }

    pub fn registry(&self) -> &ContractRegistry {
        &self.registry
    }

    pub fn genesis(&self) -> ManuscriptId {
        self.genesis
    }

    pub fn audit(&self) -> &[SettlementReport] {
        &self.audit
    }

    /// Immutable snapshot for concurrent reads.
    pub fn snapshot(&self) -> Engine {
        self.clone()
    }

    pub fn balance_of(&self, addr: &Address) -> Result<(TokenAmount, TokenAmount)> {
        self.ledger.balance_of(addr)
    }

    fn keys_of(&self, addr: &Address) -> Result<KeyPair> {
        if *addr == self.treasury() {
            return Ok(self.treasury_keys.clone());
        }
        Ok(self.pool.get(addr)?.keypair.clone())
    }

    /// Run a mutation with rollback-on-error: a failed command leaves no
    /// trace, which also gives crash consistency at step granularity.
    fn atomically<T>(&mut self, f: impl FnOnce(&mut Engine) -> Result<T>) -> Result<T> {
        let backup = self.clone();
        match f(self) {
            Ok(value) => Ok(value),
            Err(e) => {
                *self = backup;
                Err(e)
            }
        }
    }

    // ---- commands ----------------------------------------------------------

    pub fn advance_tick(&mut self) -> Tick {
        self.tick += 1;
        self.tick
    }

    /// Create an account and execute its one-time gift grant from the
    /// treasury (a System-triggered transfer, never a mint).
    pub fn create_user(&mut self, profile: Profile) -> Result<Address> {
        self.atomically(|e| {
            let (addr, gift) = e.pool.create_account(profile, &mut e.rng, e.tick);
            let key = e.pool.get(&addr)?.keypair.clone();
            e.ledger.register_account(addr, *key.public_key())?;
            let treasury = e.treasury();
            let intent = transfer_intent(&treasury, &addr, gift, &TxTrigger::System);
            let sig = e.treasury_keys.sign(&intent);
            e.ledger
                .transfer(treasury, addr, gift, TxTrigger::System, sig, e.tick)?;
            Ok(addr)
        })
    }

    pub fn update_profile(&mut self, addr: &Address, new_profile: Profile) -> Result<()> {
        self.atomically(|e| {
            let keys = e.keys_of(addr)?;
            let normalized = new_profile.normalized();
            let sig = keys.sign(&normalized.sign_payload(addr));
            e.pool.update_profile(addr, normalized, &sig)
        })
    }

    /// Propose a contract; review contracts must name their manuscript.
    pub fn propose_contract(
        &mut self,
        kind: ContractKind,
        parties: Vec<Address>,
        shares: ShareTable,
        stake_required: TokenAmount,
        terms: ContractTerms,
        manuscript: Option<ManuscriptId>,
    ) -> Result<ContractId> {
        self.atomically(|e| {
            for party in &parties {
                if !e.pool.contains(party) {
                    return Err(Error::UnknownParty(party.to_hex()));
                }
            }
            if kind == ContractKind::Review && manuscript.is_none() {
                return Err(Error::StateMismatch(
                    "review contracts must name a manuscript".into(),
                ));
            }
            let manuscript_key = match &manuscript {
                Some(m) => Some(e.graph.get(m)?.key),
                None => None,
            };
            if let ContractTerms::Funding { authorship, .. } = &terms {
                let target = e.registry.get(authorship)?;
                if target.kind != ContractKind::Authorship {
                    return Err(Error::StateMismatch(
                        "funding must attach to an authorship contract".into(),
                    ));
                }
            }
            let id = e
                .registry
                .propose(kind, parties, shares, stake_required, terms)?;
            if let Some(key) = manuscript_key {
                e.registry.bind_manuscript(&id, key)?;
            }
            Ok(id)
        })
    }

    /// Sign a contract on behalf of a party. Fully-signed review contracts
    /// escrow the reviewer stake at this moment and become Active;
    /// fully-signed zero-stake contracts activate immediately; everything
    /// else waits for its stakes at submission.
    pub fn sign_contract(&mut self, id: &ContractId, party: &Address) -> Result<()> {
        self.atomically(|e| {
            let keys = e.keys_of(party)?;
            let sig = keys.sign(&contract_sign_payload(id));
            let state = e.registry.sign(id, *party, sig)?;
            if state != ContractState::Signed {
                return Ok(());
            }
            let contract = e.registry.get(id)?.clone();
            match contract.kind {
                ContractKind::Review => {
                    let reviewer = contract.parties[0];
                    let manuscript = contract.manuscript.ok_or_else(|| {
                        Error::StateMismatch("review contract without manuscript".into())
                    })?;
                    if e.graph.get(&manuscript)?.state != NodeState::UnderReview {
                        return Err(Error::NotUnderReview);
                    }
                    let stake = contract.stake_required;
                    let lock_sig = keys.sign(&escrow_lock_intent(&reviewer, stake, id));
                    let escrow = e.ledger.escrow_lock(reviewer, stake, *id, lock_sig, e.tick)?;
                    e.registry.activate(id)?;
                    e.manifests
                        .entry(manuscript)
                        .or_default()
                        .push(EscrowBacking {
                            id: escrow,
                            owner: reviewer,
                            amount: stake,
                            class: BeneficiaryClass::Reviewer,
                        });
                }
                _ if contract.stake_required.is_zero()
                    && !matches!(contract.kind, ContractKind::Authorship) =>
                {
                    e.registry.activate(id)?;
                }
                _ => {}
            }
            Ok(())
        })
    }

    /// Cancel a contract and refund its escrows in full. Contracts whose
    /// effects are already locked into a live manuscript refuse: a
    /// submitted authorship (withdrawal is the sanctioned exit), a review
    /// contract that has recorded a review, and any contract with a stake
    /// or remark embedded in the node.
    pub fn cancel_contract(&mut self, id: &ContractId, quorum: &[Address]) -> Result<()> {
        self.atomically(|e| {
            let contract = e.registry.get(id)?.clone();
            if let Some(key) = &contract.manuscript {
                let node = e.graph.get(key)?;
                if node.state == NodeState::UnderReview {
                    let embedded = match contract.kind {
                        ContractKind::Review => node
                            .confirmations
                            .records
                            .iter()
                            .any(|r| r.review_contract == *id),
                        ContractKind::Authorship => true,
                        _ => {
                            node.remarks.iter().any(|r| r.contract == *id)
                                || e.manifests
                                    .get(&node.key)
                                    .map(|entries| {
                                        entries.iter().any(|b| {
                                            e.ledger
                                                .escrow(&b.id)
                                                .map(|entry| entry.contract == *id)
                                                .unwrap_or(false)
                                        })
                                    })
                                    .unwrap_or(false)
                        }
                    };
                    if embedded {
                        return Err(Error::AlreadyLocked);
                    }
                }
            }
            e.registry.cancel(id, quorum)?;
            let held: Vec<_> = e
                .ledger
                .escrows()
                .filter(|entry| entry.contract == *id && entry.state == EscrowState::Held)
                .map(|entry| (entry.escrow_id, entry.owner, entry.amount))
                .collect();
            for (escrow_id, owner, amount) in held {
                e.ledger
                    .escrow_release(escrow_id, &[(owner, amount)], e.tick)?;
            }
            Ok(())
        })
    }

    /// Submit a manuscript under a fully-signed authorship contract.
    /// Funding contracts attached to the authorship cover their fraction
    /// of the stake; the authors escrow the rest split by their shares.
    pub fn submit_manuscript(
        &mut self,
        authorship: &ContractId,
        content_digest: Hash32,
        citation_refs: &BTreeSet<ManuscriptId>,
    ) -> Result<ManuscriptId> {
        self.atomically(|e| {
            let contract = e.registry.get(authorship)?.clone();
            if contract.kind != ContractKind::Authorship {
                return Err(Error::StateMismatch("not an authorship contract".into()));
            }
            if contract.manuscript.is_some() {
                return Err(Error::StateMismatch(
                    "authorship contract already bound to a manuscript".into(),
                ));
            }
            match contract.state {
                ContractState::Signed => {}
                ContractState::Proposed => {
                    let missing = contract
                        .parties
                        .iter()
                        .find(|p| !contract.signatures.contains_key(p))
                        .expect("proposed implies a missing signature");
                    return Err(Error::MissingSignature(missing.to_hex()));
                }
                _ => {
                    return Err(Error::StateMismatch(format!(
                        "authorship contract is {}",
                        contract.state.render()
                    )))
                }
            }
            let citations = e.graph.resolve_citations(citation_refs)?;
            let stake = contract.stake_required;

            // funding coverage binds in contract-id order
            let mut coverage: Vec<(ContractId, Address, TokenAmount)> = Vec::new();
            let mut remaining = stake;
            let mut attached: Vec<_> = e
                .registry
                .attached_to_authorship(authorship)
                .into_iter()
                .filter(|c| {
                    matches!(c.state, ContractState::Signed | ContractState::Active)
                        && c.all_signed()
                })
                .cloned()
                .collect();
            attached.sort_by_key(|c| c.id);
            for f in &attached {
                if let ContractTerms::Funding {
                    covered_fraction, ..
                } = &f.terms
                {
                    let cover = floor_share(stake, *covered_fraction)?.min(remaining);
                    if !cover.is_zero() {
                        coverage.push((f.id, f.parties[0], cover));
                        remaining = remaining - cover;
                    }
                }
            }
            let weights = contract.shares.weights();
            let parts = weighted_distribution(remaining, &weights)?;
            let author_locks: Vec<(Address, TokenAmount)> = contract
                .shares
                .holders()
                .into_iter()
                .zip(parts)
                .filter(|(_, p)| !p.is_zero())
                .collect();

            // every contributor must afford their aggregate obligation
            let mut owed: BTreeMap<Address, TokenAmount> = BTreeMap::new();
            for (_, owner, amount) in &coverage {
                *owed.entry(*owner).or_default() += *amount;
            }
            for (owner, amount) in &author_locks {
                *owed.entry(*owner).or_default() += *amount;
            }
            for (owner, amount) in &owed {
                let (spendable, _) = e.ledger.balance_of(owner)?;
                if spendable < *amount {
                    return Err(Error::InsufficientFunds {
                        have: spendable.grains(),
                        need: amount.grains(),
                    });
                }
            }

            let payload = authorship_sign_payload(
                &contract.shares.entries,
                stake,
                authorship,
                &content_digest,
                &citations,
                1,
            );
            let mut signatures = BTreeMap::new();
            for (addr, _) in &contract.shares.entries {
                signatures.insert(*addr, e.keys_of(addr)?.sign(&payload));
            }

            let mut backings = Vec::new();
            for (fid, funder, amount) in &coverage {
                let sig = e
                    .keys_of(funder)?
                    .sign(&escrow_lock_intent(funder, *amount, fid));
                let escrow = e.ledger.escrow_lock(*funder, *amount, *fid, sig, e.tick)?;
                backings.push(EscrowBacking {
                    id: escrow,
                    owner: *funder,
                    amount: *amount,
                    class: BeneficiaryClass::Author,
                });
            }
            for (owner, amount) in &author_locks {
                let sig = e
                    .keys_of(owner)?
                    .sign(&escrow_lock_intent(owner, *amount, authorship));
                let escrow = e
                    .ledger
                    .escrow_lock(*owner, *amount, *authorship, sig, e.tick)?;
                backings.push(EscrowBacking {
                    id: escrow,
                    owner: *owner,
                    amount: *amount,
                    class: BeneficiaryClass::Author,
                });
            }

            let key = e.graph.submit(
                SubmitRequest {
                    authors: contract.shares.entries.clone(),
                    author_stake: stake,
                    authorship_contract: *authorship,
                    content_digest,
                    citations,
                    signatures,
                },
                e.tick,
            )?;
            e.registry.bind_manuscript(authorship, key)?;
            e.registry.activate(authorship)?;
            for f in &attached {
                e.registry.bind_manuscript(&f.id, key)?;
                if e.registry.get(&f.id)?.state == ContractState::Signed {
                    e.registry.activate(&f.id)?;
                }
            }
            e.manifests.insert(key, backings);
            Ok(key)
        })
    }

    /// Record a review under the reviewer's active contract, then fire the
    /// confirmation check. Returns true when this review confirmed the
    /// manuscript.
    pub fn review(
        &mut self,
        manuscript: &ManuscriptId,
        reviewer: &Address,
        verdict: Verdict,
        report: &str,
    ) -> Result<bool> {
        self.atomically(|e| {
            let node = e.graph.get(manuscript)?;
            let key = node.key;
            if node.state != NodeState::UnderReview {
                return Err(Error::NotUnderReview);
            }
            if node.authorship.is_author(reviewer) {
                return Err(Error::ReviewerIsAuthor);
            }
            let contract = e
                .registry
                .for_manuscript(&key)
                .into_iter()
                .find(|c| {
                    c.kind == ContractKind::Review
                        && c.state == ContractState::Active
                        && c.parties[0] == *reviewer
                })
                .ok_or(Error::NoReviewContract)?
                .clone();
            let base = e.graph.get(&key)?.current_version_base();
            let payload = review_sign_payload(&base, report, verdict);
            let signature = e.keys_of(reviewer)?.sign(&payload);
            let record = ReviewRecord {
                reviewer: *reviewer,
                review_contract: contract.id,
                stake: contract.stake_required,
                report: report.to_string(),
                verdict,
                version_signed: e.graph.get(&key)?.meta.version,
                signature,
            };
            e.graph.record_review(&key, record)?;
            e.pool.note_review_completed(reviewer)?;
            e.try_confirm_inner(&key)
        })
    }

    /// Confirmation check: no-op below the threshold, otherwise the lock
    /// transition plus settlement as one atomic step.
    pub fn try_confirm(&mut self, manuscript: &ManuscriptId) -> Result<bool> {
        self.atomically(|e| {
            let key = e.graph.get(manuscript)?.key;
            e.try_confirm_inner(&key)
        })
    }

    fn try_confirm_inner(&mut self, key: &ManuscriptId) -> Result<bool> {
        let node = self.graph.get(key)?;
        if node.state != NodeState::UnderReview {
            return Ok(false);
        }
        let tally = consensus::tally_confirmations(node);
        let threshold = consensus::effective_k(node, &self.registry, &self.policy);
        if tally < threshold {
            return Ok(false);
        }
        let confirmed_id = self.graph.mark_confirmed(key)?;
        self.confirmed_ids.insert(*key, confirmed_id);

        // live contracts lock; never-activated leftovers are discarded
        let bound: Vec<_> = self
            .registry
            .for_manuscript(key)
            .into_iter()
            .map(|c| (c.id, c.state))
            .collect();
        let mut locked = Vec::new();
        for (cid, state) in &bound {
            match state {
                ContractState::Active => {
                    self.registry.lock(cid)?;
                    locked.push(*cid);
                }
                ContractState::Proposed | ContractState::Signed => {
                    let parties = self.registry.get(cid)?.parties.clone();
                    self.registry.cancel(cid, &parties)?;
                }
                _ => {}
            }
        }

        let escrows = self.pool_backings(key);
        let contracts: Vec<_> = locked
            .iter()
            .map(|cid| self.registry.get(cid))
            .collect::<Result<_>>()?;
        let outcome = execute_trigger(
            &TriggerEvent::ManuscriptConfirmed(*key),
            &contracts,
            &TriggerContext {
                graph: &self.graph,
                registry: &self.registry,
                policy: &self.policy,
                treasury: self.treasury(),
                escrows: &escrows,
            },
        )?;
        self.apply_instructions(&outcome.instructions)?;
        if let Some(report) = outcome.report {
            self.audit.push(report);
        }
        for cid in &locked {
            self.registry.settle(cid)?;
        }
        Ok(true)
    }

    /// Open the next version. The tally resets because confirmations bind
    /// to the version they signed. Revisions may rewrite the authorship
    /// (authors and contribution shares); the stake already escrowed stays
    /// as it is, only future settlement splits follow the new shares.
    pub fn revise_manuscript(
        &mut self,
        manuscript: &ManuscriptId,
        new_content_digest: Hash32,
        new_citations: Option<BTreeSet<ManuscriptId>>,
        updated_authorship: Option<Vec<(Address, crate::amount::Weight)>>,
    ) -> Result<()> {
        self.atomically(|e| {
            let node = e.graph.get(manuscript)?;
            let key = node.key;
            if node.state != NodeState::UnderReview {
                return Err(Error::LockedManuscript);
            }
            if let Some(authors) = &updated_authorship {
                for (addr, _) in authors {
                    if !e.pool.contains(addr) {
                        return Err(Error::UnknownParty(addr.to_hex()));
                    }
                }
            }
            let citations = match new_citations {
                Some(refs) => Some(e.graph.resolve_citations(&refs)?),
                None => None,
            };
            let node = e.graph.get(&key)?;
            let signing_authors = updated_authorship
                .clone()
                .unwrap_or_else(|| node.authorship.authors.clone());
            let payload = authorship_sign_payload(
                &signing_authors,
                node.authorship.author_stake,
                &node.authorship.authorship_contract.unwrap_or_default(),
                &new_content_digest,
                citations.as_ref().unwrap_or(&node.citations),
                node.meta.version + 1,
            );
            let mut signatures = BTreeMap::new();
            for (addr, _) in &signing_authors {
                signatures.insert(*addr, e.keys_of(addr)?.sign(&payload));
            }
            e.graph.revise(
                &key,
                new_content_digest,
                citations,
                updated_authorship,
                signatures,
                e.tick,
            )?;
            Ok(())
        })
    }

    /// Attach a remark stake under a signed funding or indexing contract.
    pub fn attach_remark(
        &mut self,
        manuscript: &ManuscriptId,
        agent: &Address,
        kind: RemarkKind,
        stake: TokenAmount,
        terms_digest: Hash32,
        backing: &ContractId,
    ) -> Result<()> {
        self.atomically(|e| {
            let node = e.graph.get(manuscript)?;
            let key = node.key;
            if node.state != NodeState::UnderReview {
                return Err(Error::LockedManuscript);
            }
            let contract = e.registry.get(backing)?.clone();
            if !matches!(
                contract.kind,
                ContractKind::Funding | ContractKind::Indexing
            ) {
                return Err(Error::StateMismatch(
                    "remarks attach under funding or indexing contracts".into(),
                ));
            }
            if !contract.is_party(agent) {
                return Err(Error::NotAParty(agent.to_hex()));
            }
            if !contract.all_signed() {
                return Err(Error::MissingSignature(agent.to_hex()));
            }
            if contract.state.is_terminal() || contract.state == ContractState::Locked {
                return Err(Error::AlreadyLocked);
            }
            let keys = e.keys_of(agent)?;
            let lock_sig = keys.sign(&escrow_lock_intent(agent, stake, backing));
            let escrow = e
                .ledger
                .escrow_lock(*agent, stake, *backing, lock_sig, e.tick)?;
            let signature = keys.sign(&remark_sign_payload(
                &key,
                agent,
                kind,
                backing,
                stake,
                &terms_digest,
            ));
            e.graph.attach_remark(
                &key,
                RemarkEntry {
                    agent: *agent,
                    kind,
                    contract: *backing,
                    stake,
                    terms_digest,
                    signature,
                },
            )?;
            e.registry.bind_manuscript(backing, key)?;
            if e.registry.get(backing)?.state == ContractState::Signed {
                e.registry.activate(backing)?;
            }
            e.manifests.entry(key).or_default().push(EscrowBacking {
                id: escrow,
                owner: *agent,
                amount: stake,
                class: BeneficiaryClass::Remark,
            });
            Ok(())
        })
    }

    /// Withdraw an under-review manuscript: authors are refunded the
    /// policy fraction of their stake, reviewer and remark stakes return
    /// in full, and the node leaves the citable set forever.
    pub fn withdraw_manuscript(&mut self, manuscript: &ManuscriptId) -> Result<SettlementReport> {
        self.atomically(|e| {
            let node = e.graph.get(manuscript)?;
            let key = node.key;
            if node.state != NodeState::UnderReview {
                return Err(Error::LockedManuscript);
            }
            // all current authors endorse the withdrawal
            let payload =
                crate::graph::withdrawal_sign_payload(&node.key, node.meta.version);
            for (addr, _) in &node.authorship.authors.clone() {
                e.keys_of(addr)?.sign(&payload);
            }
            let escrows = e.pool_backings(&key);
            let node = e.graph.get(&key)?;
            let (report, instructions) =
                consensus::withdrawal_settlement(node, &escrows, &e.policy, e.treasury())?;
            e.graph.mark_withdrawn(&key)?;
            e.apply_instructions(&instructions)?;
            let bound: Vec<_> = e
                .registry
                .for_manuscript(&key)
                .into_iter()
                .map(|c| (c.id, c.state))
                .collect();
            for (cid, state) in bound {
                match state {
                    ContractState::Active => {
                        e.registry.lock(&cid)?;
                        e.registry.settle(&cid)?;
                    }
                    ContractState::Proposed | ContractState::Signed => {
                        let parties = e.registry.get(&cid)?.parties.clone();
                        e.registry.cancel(&cid, &parties)?;
                    }
                    _ => {}
                }
            }
            e.audit.push(report.clone());
            Ok(report)
        })
    }

    pub fn select_reviewers(&self, manuscript: &ManuscriptId) -> Result<Vec<Address>> {
        let node = self.graph.get(manuscript)?;
        consensus::select_reviewers(node, &self.pool, &self.registry, &self.policy, self.seed)
    }

    // ---- internals ----------------------------------------------------------

    /// Still-held escrow backings for a manuscript, in creation order.
    fn pool_backings(&self, key: &ManuscriptId) -> Vec<EscrowBacking> {
        self.manifests
            .get(key)
            .map(|entries| {
                entries
                    .iter()
                    .filter(|b| {
                        self.ledger
                            .escrow(&b.id)
                            .map(|entry| entry.state == EscrowState::Held)
                            .unwrap_or(false)
                    })
                    .copied()
                    .collect()
            })
            .unwrap_or_default()
    }

    fn apply_instructions(&mut self, instructions: &[LedgerInstruction]) -> Result<()> {
        for instruction in instructions {
            match instruction {
                LedgerInstruction::Release { escrows, payout } => {
                    let lines: Vec<(Address, TokenAmount)> =
                        payout.iter().map(|l| (l.to, l.amount)).collect();
                    if escrows.len() == 1 {
                        self.ledger.escrow_release(escrows[0], &lines, self.tick)?;
                    } else {
                        self.ledger
                            .release_escrows_pooled(escrows, &lines, self.tick)?;
                    }
                }
                LedgerInstruction::Lock {
                    owner,
                    amount,
                    contract,
                } => {
                    let sig = self
                        .keys_of(owner)?
                        .sign(&escrow_lock_intent(owner, *amount, contract));
                    self.ledger
                        .escrow_lock(*owner, *amount, *contract, sig, self.tick)?;
                }
                LedgerInstruction::Transfer {
                    from,
                    to,
                    amount,
                    trigger,
                } => {
                    let trigger = TxTrigger::Contract(*trigger);
                    let sig = self
                        .keys_of(from)?
                        .sign(&transfer_intent(from, to, *amount, &trigger));
                    self.ledger
                        .transfer(*from, *to, *amount, trigger, sig, self.tick)?;
                }
            }
        }
        Ok(())
    }

    // ---- verification -------------------------------------------------------

    /// Conservation identity, checked off the live balance caches.
    pub fn conservation_holds(&self) -> bool {
        self.ledger.circulating_total() == self.ledger.total_supply()
    }

    /// Full integrity sweep: ledger replay, node hashes and signatures,
    /// graph acyclicity, frozen confirmed hashes, and the stake-behind-
    /// every-review rule.
    pub fn verify_all(&self) -> crate::ledger::VerifyReport {
        let mut report = self.ledger.verify();
        let pool = self.pool.clone();
        let treasury = self.treasury();
        let treasury_key = *self.treasury_keys.public_key();
        let resolver = move |addr: &Address| -> Option<[u8; 32]> {
            if *addr == treasury {
                return Some(treasury_key);
            }
            pool.get(addr).ok().map(|a| *a.keypair.public_key())
        };
        let graph_report = self.graph.verify_graph(&resolver);
        if !graph_report.ok {
            report.ok = false;
            report.violations.extend(graph_report.violations);
        }
        for (key, frozen) in &self.confirmed_ids {
            match self.graph.get(key) {
                Ok(node) => {
                    if node.id != *frozen || node.state != NodeState::Confirmed {
                        report.ok = false;
                        report.violations.push(crate::ledger::Violation {
                            kind: "confirmed-hash-moved",
                            detail: format!("node {key}: frozen {frozen} now {}", node.id),
                        });
                    }
                }
                Err(_) => {
                    report.ok = false;
                    report.violations.push(crate::ledger::Violation {
                        kind: "confirmed-node-missing",
                        detail: key.to_string(),
                    });
                }
            }
        }
        // stake-before-voice: every review record is backed by a held or
        // released escrow from that reviewer under its contract; records
        // on a withdrawn node keep their refunded stake as evidence
        for node in self.graph.iter() {
            for (i, record) in node.confirmations.records.iter().enumerate() {
                let withdrawn = node.state == NodeState::Withdrawn;
                let ok = self.ledger.escrows().any(|entry| {
                    entry.contract == record.review_contract
                        && entry.owner == record.reviewer
                        && (withdrawn
                            || matches!(entry.state, EscrowState::Held | EscrowState::Released))
                });
                if !ok {
                    report.ok = false;
                    report.violations.push(crate::ledger::Violation {
                        kind: "review-without-stake",
                        detail: format!("node {} record {i}", node.key),
                    });
                }
            }
        }
        report
    }

    /// Digest over every deterministic artifact; used for replay and
    /// crash-consistency checks.
    pub fn state_digest(&self) -> Hash32 {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&self.ledger.export_digest().0);
        bytes.extend_from_slice(crate::export::graph_nodelink(self).join("\n").as_bytes());
        bytes.extend_from_slice(crate::export::audit_log(self).join("\n").as_bytes());
        bytes.extend_from_slice(&self.tick.to_be_bytes());
        sha256(&bytes)
    }

    #[doc(hidden)]
    pub fn tamper_ledger(
        &mut self,
        index: usize,
        f: impl FnOnce(&mut crate::ledger::TokenTransaction),
    ) {
        self.ledger.tamper_transaction(index, f);
    }

    #[doc(hidden)]
    pub fn tamper_graph(&mut self, key: &ManuscriptId, f: impl FnOnce(&mut ManuscriptNode)) {
        self.graph.tamper_node(key, f);
    }
}
